"""Style-aware feature fusion for unsupervised domain adaptation, at desk scale."""

__version__ = "0.1.0"

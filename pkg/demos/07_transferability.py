"""Class centres, inter-domain distance and projected distance histograms."""
import numpy as np

from saff import analysis, pipeline
from saff.config import TrainConfig

cfg = TrainConfig()
source, target = pipeline.make_data(cfg)
result = pipeline.train(cfg, source, target)

cs = analysis.class_centers(result.params, source)
ct = analysis.class_centers(result.params, target.hidden())
print(f"inter-domain distance {analysis.inter_domain_distance(cs, ct):.4f}")
print("target rows per predicted class:", ct.counts.tolist())

feats, _ = analysis.features(result.params, target)
hist = analysis.jl_histogram(feats, projection_dim=8, bins=10, seed=0)
peak = int(np.argmax(hist.counts))
print(f"{hist.counts.sum()} pairwise distances, busiest bin [{hist.edges[peak]:.2f}, {hist.edges[peak + 1]:.2f})")

"""Reverse-mode autodiff on numpy arrays.

Builds a two-layer network by hand, checks its gradient against central
finite differences, then fits it to a toy problem with momentum SGD.
"""
import numpy as np

from saff import numerics as nx
from saff.losses import ce_loss
from saff.numerics import SGD, Tensor

rng = np.random.default_rng(0)
x = rng.standard_normal((64, 2))
y = (x[:, 0] * x[:, 1] > 0).astype(int)  # XOR-like quadrants

w1 = Tensor(rng.standard_normal((2, 16)) / np.sqrt(2), requires_grad=True)
b1 = Tensor(rng.standard_normal(16), requires_grad=True)
w2 = Tensor(rng.standard_normal((16, 2)) / 4, requires_grad=True)


def logits(a, c, b):
    return nx.matmul(nx.tanh(nx.matmul(Tensor(x), a) + c), b)


def loss_fn(a, c, b):
    return ce_loss(logits(a, c, b), y)


report = nx.grad_check(loss_fn, [w1.data, b1.data, w2.data], tolerance=1e-6)
print(f"finite-difference check: max relative error {report.max_rel_error:.2e} -> passed={report.passed}")

opt = SGD([w1, b1, w2], lr=0.1, momentum=0.9)
for step in range(1501):
    loss = loss_fn(w1, b1, w2)
    nx.backward(loss)
    opt.step()
    if step % 500 == 0:
        print(f"step {step:3d}  loss {float(loss.data):.4f}")

pred = logits(w1, b1, w2).data.argmax(axis=1)
print(f"training accuracy {np.mean(pred == y):.3f}")

"""The memory bank: per-sample statistics and exact class centres.

Centres are recomputed from the stored rows after every update, so they
always equal the plain mean of each class's rows.
"""
import numpy as np

from saff.membank import MemoryBank

bank = MemoryBank.empty(indices=[0, 1, 2, 3], labels=[0, 0, 1, 1], n_classes=2, width=2, cls_width=2)
bank.update([0, 1, 2, 3], mu_batch=[[1, 1], [3, 3], [0, 0], [2, 4]], sigma_batch=np.ones((4, 2)),
            cls_batch=np.zeros((4, 2)))
print("class means of mu:", bank.mu_k.tolist())

bank.update([0], [[5, 5]], [[1, 1]], [[0, 0]])
print("after moving sample 0 to [5, 5]:", bank.mu_k.tolist())

snapshot = bank.copy()
bank.update([0], bank.mu_ns[[0]], bank.sigma_ns[[0]], bank.cls_ns[[0]])
print("rewriting a row with its own values changes nothing:", bank.equals(snapshot))

"""Draw one Brownian path and its first three integrated versions on shared increments."""

import numpy as np

from nfbm import Grid, HurstOrder
from nfbm.kernels import kernel_matrix
from nfbm.simulation import RngStream

grid = Grid(1.0, 1024)
dW = RngStream(7).normal(grid.m) * np.sqrt(grid.dt)

for n in range(1, 5):
    ho = HurstOrder(n, n - 0.5)
    path = np.concatenate([[0.0], kernel_matrix(ho, grid).apply(dW)])
    rough = np.max(np.abs(np.diff(path)))
    print(f"order {n}: B(1) = {path[-1]: .5f}  max |first difference| = {rough:.2e}")

"""Add a unit drift to paths of order (2, 1.5) and estimate it back."""

import numpy as np

from nfbm import Grid, HurstOrder
from nfbm.equivalence import recover_drift
from nfbm.simulation import Method, RngStream, SamplePath, volterra_ensemble

ho, grid = HurstOrder(2, 1.5), Grid(1.0, 4096)
values, _ = volterra_ensemble(ho, grid, RngStream(3), 50)
est = np.array([recover_drift(SamplePath(grid, v + grid.points, ho, Method.VOLTERRA)) for v in values])
print(f"drift estimate over {est.size} paths: {est.mean():.4f} (sd {est.std(ddof=1):.4f}, true 1)")

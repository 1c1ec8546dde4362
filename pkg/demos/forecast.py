"""Observe a path of order (2, 1.25) up to t = 0.5 and forecast the rest."""

import numpy as np

from nfbm import Grid
from nfbm.prediction import predict
from nfbm.simulation import RngStream, simulate_volterra

ho = (2, 1.25)
grid = Grid(1.0, 256)
path = simulate_volterra(ho, grid, RngStream(11))
targets = np.array([0.6, 0.75, 1.0])
law = predict(ho, path, 0.5, targets)

truth = np.interp(targets, grid.points, path.values)
for t, m, s, x in zip(targets, law.mean, np.sqrt(np.diag(law.covariance)), truth):
    print(f"t = {t:.2f}  forecast {m: .4f} +/- {2 * s:.4f}  realised {x: .4f}")

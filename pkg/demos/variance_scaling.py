"""
How the variance of a spatial integral grows with the window
============================================================

For ``sigma = 1`` the solution is Gaussian and the variance of
``a_R = int_{-R}^{R} (u(t, x) - 1) dx`` is a double integral of the
pointwise covariance. It grows like ``R`` for white noise and like
``R^(2 - beta)`` for Riesz noise with exponent ``beta``.
"""

import numpy as np

from spdelab import grid_noise as gn
from spdelab import oracle, solver, stats

radii = [8, 16, 32, 64, 128]

# exact standard deviations for the four additive models
models = {
    "heat, white": (oracle.HEAT_WHITE, 0.5),
    "wave, white": (oracle.WAVE_WHITE, 1.0),
    "heat, riesz alpha=0.5": (oracle.heat_riesz(0.5), 0.5),
    "wave, riesz alpha=0.5": (oracle.wave_riesz(0.5), 1.0),
}
for name, (model, t) in models.items():
    sigma = [oracle.sigma_R_exact(model, t, R) for R in radii]
    fit = stats.loglog_fit(list(zip(radii, sigma)))
    print(f"{name:24s} slope {fit.slope:.4f}  (expected {1 - model.beta / 2:.3f})")

# the same slope from simulation: 1000 heat replicas, every radius observed
# on the same fields
small = [2, 4, 8, 16]
config = solver.SolverConfig(gn.fit_grid("heat", 1 / 8, 0.5, max(small), 0.5))
ensemble = solver.run_ensemble(config, 1000, small, 0.5, master_seed=1)
empirical = [np.std(ensemble[R].a, ddof=1) for R in small]
exact = [oracle.sigma_R_exact(oracle.HEAT_WHITE, 0.5, R) for R in small]
for R, e, x in zip(small, empirical, exact):
    print(f"R = {R:3d}: simulated {e:.4f}  exact {x:.4f}")
print("simulated slope", round(stats.loglog_fit(list(zip(small, empirical))).slope, 3))

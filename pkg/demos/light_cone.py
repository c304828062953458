"""
Finite propagation speed of the wave equation
=============================================

The wave kernel ``G(t, x) = 1/2 on |x| < t`` only sees noise inside the
backward light cone. On the characteristic lattice this holds exactly:
switching off all noise outside the cone leaves ``u(t, x0)`` unchanged
bit for bit.
"""

import numpy as np

from spdelab import grid_noise as gn
from spdelab import oracle, solver

t, x0 = 1.0, 0.5
config = solver.SolverConfig(gn.fit_grid("wave", 1 / 16, t, 4, x0), gn.riesz(0.5))
grid = config.grid
j = grid.nearest_index(x0)

full = solver.solve_wave_1d(config, replica_index=0, master_seed=3)
cone = solver.solve_wave_1d(config, replica_index=0, master_seed=3,
                            noise_mask=solver.cone_mask(grid, x0, t))
print("u(t, x0) with all noise     ", full.values[-1, j])
print("u(t, x0) with cone noise only", cone.values[-1, j])
print("largest change elsewhere    ", np.max(np.abs(full.values[-1] - cone.values[-1])))

# with white noise the covariance between F_R and u(t, x0) is the overlap of
# the cone with the window divided by sigma_R; once R > x0 + 2t the overlap
# is complete and the covariance only falls with sigma_R
for R in (1, 2, 3, 4, 8, 16, 32):
    c = oracle.cov_FRu_exact(oracle.WAVE_WHITE, t, R, x0)
    print(f"R = {R:2d}: cov(F_R, u) = {c:.5f}  (R > x0 + 2t: {R > x0 + 2 * t})")

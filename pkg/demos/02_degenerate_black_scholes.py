"""
Credit switched off
===================

With no default risk and all rates equal to r, the contract value is the
Black-Scholes call. Both solvers should reproduce it.
"""

import math

from scipy.stats import norm

from xva_bve import engine

cfg = engine.load_config(engine.shipped_config("degenerate"))

d1 = (math.log(1.0) + 0.02 + 0.5 * 0.2 ** 2) / 0.2
exact = 100 * norm.cdf(d1) - 100 * math.exp(-0.02) * norm.cdf(d1 - 0.2)
print(f"Black-Scholes        {exact:.4f}")

sol, _ = engine.price_mc(cfg, "new", n=50_000)
print(f"regression MC        {sol.v0:.4f} +/- {sol.stderr:.4f}")

for nx in (100, 200, 400):
    surf = engine.price_pde(cfg, "new", n_x=nx, n_t=nx)
    print(f"PDE {nx:>3} x {nx:<3}        {surf.v0:.4f}")

# the two drifts coincide in this limit, so the baseline gives the same number
print(f"PDE baseline drift   {engine.price_pde(cfg, 'bfp').v0:.4f}")

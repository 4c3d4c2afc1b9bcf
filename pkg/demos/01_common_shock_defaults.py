"""
Common-shock default times
==========================

Draw exponential pairs with a shared shock, then turn them into default
times through constant hazards.
"""

import math

import numpy as np

from xva_bve import BveParams, atom_probability, decompose, sample, survival
from xva_bve.cox import constant_hazards, default_times_batch, survival_G
from xva_bve.registry import parse_function
from xva_bve import IntensityModel

# the common shock puts mass on the diagonal z1 == z2
params = BveParams(1.0, 1.0, 1.0)
z = sample(params, seed=7, n=200_000)
print("joint survival at (1, 1):", survival(params, 1.0, 1.0), "vs e^-3 =", math.exp(-3))
print("empirical               :", np.mean((z.z1 > 1) & (z.z2 > 1)))
print("atom probability        :", atom_probability(params), "empirical", z.simultaneous.mean())

# split the joint survival into its continuous and singular parts
parts = decompose(params, 0.5, 1.5)
print("continuous + singular   :", parts)

# constant hazards: the first-to-default survival has a closed form
model = IntensityModel(parse_function("0.02", "state"), parse_function("0.03", "state"), 1.0)
hz = constant_hazards(0.02, 0.03, 10.0)
scen = default_times_batch(hz, sample(model.bve, seed=8, n=200_000))
print("P(tau > 10) MC          :", np.mean(scen.tau > 10))
print("P(tau > 10) formula     :", float(survival_G(model, hz, 10.0)))

# with unequal hazards a shock firing first still gives two different dates
print("simultaneous defaults   :", scen.simultaneous.mean())

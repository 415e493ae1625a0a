"""
Heavy-tailed severities with a power baseline
=============================================

With M(y) = y^theta the survival is S(y) = L_Z(y^theta), the frailty
Laplace transform evaluated at a power of y. The model below is a
four-phase Coxian frailty on losses scaled by 1e-4.
"""

import math
import os

import numpy as np

from phfrailty import BaselineHazard, Dataset, FitOptions, FrailtyModel, PhaseType, fit, read_csv
from phfrailty.frailty import laplace_tail, loglikelihood, tail_index
from phfrailty.simulation import nelson_aalen

T = np.array([
    [-19.6942, 16.2647, 0, 0],
    [0, -2.1502, 0.7218, 0],
    [0, 0, -0.5011, 0.5010],
    [0, 0, 0, -0.5011],
])
model = FrailtyModel(PhaseType([1, 0, 0, 0], T, "coxian"), BaselineHazard.power(1.3705))

ti = tail_index(model)
print(f"dominant eigenvalue {ti.eigenvalue:.4f}, Jordan block {ti.block_size}, k * theta = {ti.value:.4f}")

# how the survival function actually decays
for y in (1e2, 1e4, 1e6, 1e9):
    print(f"y = {y:8.0e}:  -log S / log y = {-math.log(model.survival(y)) / math.log(y):.4f}")
order, c = laplace_tail(model.frailty)
print(f"L_Z(u) ~ {c:.4f} u^-{order} as u -> inf, so S(y) ~ {c:.2f} y^-{order * 1.3705:.4f}")

# with the loss data at hand (columns time, status) fit the same structure
path = os.environ.get("PHFRAILTY_LOSS_CSV")
if path:
    raw = read_csv(path)
    data = Dataset(raw.y * 1e-4, raw.delta)
    res = fit(data, FitOptions(ph_dim=4, structure="coxian", baseline="power", seed=1))
    print("fitted loglik", res.loglik, " printed parameters", loglikelihood(model, data))
    na = nelson_aalen(data)
    grid = np.quantile(data.y, [0.25, 0.5, 0.75, 0.95])
    print("Nelson-Aalen", na(grid), "\nmodel      ", -np.log(res.model.survival(grid)))
else:
    print("\nset PHFRAILTY_LOSS_CSV to fit the loss data itself")

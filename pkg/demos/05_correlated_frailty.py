"""
Correlated bivariate frailty
============================

Each margin has its own frailty; (Z1, Z2) is bivariate phase type. The
chain runs through the first block (time Z1), enters the second block via
T12 and is absorbed from there (time Z2).
"""

import numpy as np

from phfrailty import BaselineHazard, BivariatePH, CorrelatedFrailtyModel, FrailtyModel
from phfrailty.frailty import frailty_survival
from phfrailty.multivariate import (
    corr_density,
    corr_estep,
    corr_survival,
    fit_correlated_baselines,
)

T11 = np.array([[-2.0, 1.0], [0.0, -1.0]])
t1 = -T11.sum(axis=1)
# rows of T12 send phase 1 mostly to phase 1 and phase 2 mostly to phase 2: dependence
T12 = t1[:, None] * np.array([[0.9, 0.1], [0.1, 0.9]])
T22 = np.array([[-3.0, 0.0], [0.0, -0.5]])
b = BivariatePH([0.5, 0.5], T11, T12, T22)
model = CorrelatedFrailtyModel(b, BaselineHazard.constant(1.0), BaselineHazard.gompertz(0.2, 0.5))

print("Laplace transform at 0:", b.laplace(0.0, 0.0))
print("S(1, 2) =", corr_survival(model, 1.0, 2.0))
print("f(1, 2) =", corr_density(model, 1.0, 2.0))
print("margin check:", corr_survival(model, 1.5, 0.0),
      frailty_survival(FrailtyModel(b.marginal1(), model.baseline1), 1.5))
s1 = frailty_survival(FrailtyModel(b.marginal1(), model.baseline1), 1.0)
s2 = frailty_survival(FrailtyModel(b.marginal2(), model.baseline2), 2.0)
print("product of margins", s1 * s2, "(differs: the frailties are dependent)")
print("E(Z1, Z2 | Y = (1, 2)) =", corr_estep(model, 1.0, 2.0))

# baselines by EM with the bivariate law held fixed
rng = np.random.default_rng(0)
states = rng.random(300) < 0.5
z1 = np.where(states, rng.exponential(0.5, 300), rng.exponential(1.0, 300))
z2 = rng.exponential(1.0, 300)
y1 = rng.exponential(1.0, 300) / z1
y2 = rng.exponential(1.0, 300) / z2
start = CorrelatedFrailtyModel(b, BaselineHazard.constant(3.0), BaselineHazard.gompertz(0.5, 0.1))
fitted, trace = fit_correlated_baselines(start, y1, y2, max_iter=50)
print("\nbaseline EM:", len(trace) - 1, "iterations, loglik", round(trace[0], 2), "->", round(trace[-1], 2))
print("fitted baselines", fitted.baseline1, fitted.baseline2)

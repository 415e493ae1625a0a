"""
Frailty model functionals
=========================

A phase-type frailty Z multiplies the hazard: given Z = z the survival is
exp(-z M(y)). Marginal quantities come out as resolvent expressions in T.
"""

import numpy as np

from phfrailty import BaselineHazard, FrailtyModel, erlang, make_structure
from phfrailty.frailty import (
    cond_frailty_mean_event,
    cond_frailty_mean_surv,
    frailty_density,
    frailty_hazard,
    frailty_survival,
    residual_model,
)

# Erlang(k, rate) frailty is a Gamma frailty with integer shape
k, rate = 3, 2.0
gomp = BaselineHazard.gompertz(0.05, 0.4)
m = FrailtyModel(erlang(k, rate), gomp)
y = np.linspace(0, 20, 9)
gap = np.abs(frailty_survival(m, y) - (1 + gomp.cumhaz(y) / rate) ** -k).max()
print("gamma closed form reproduced, max gap", gap)

# covariates scale the cumulative hazard by exp(x beta)
m = FrailtyModel(make_structure("general", 3, seed=2), gomp, [0.7])
for x in ([0.0], [1.0]):
    print(f"x={x[0]:.0f}: S(5)={frailty_survival(m, 5.0, x):.4f}  f(5)={frailty_density(m, 5.0, x):.4f}"
          f"  hazard(5)={frailty_hazard(m, 5.0, x):.4f}")

# the population hazard is damped as frail individuals leave
grid = np.array([0.01, 2, 5, 10, 20])
print("\n    y   E(Z|Y>y)   E(Z|Y=y)   hazard / (baseline E Z)")
for v, a, b, h in zip(grid, cond_frailty_mean_surv(m, grid, [0.0]), cond_frailty_mean_event(m, grid, [0.0]),
                      frailty_hazard(m, grid, [0.0]) / (gomp.hazard(grid) * m.frailty.mean)):
    print(f"{v:5.2f}   {a:8.4f}   {b:8.4f}   {h:8.4f}")

# remaining lifetime after surviving to t is again of the same form
t = 4.0
r = residual_model(m, t, [0.0])
print("\nresidual initial vector", r.frailty.pi)
print("S_t(3) =", frailty_survival(r, 3.0, [0.0]), " S(7)/S(4) =",
      frailty_survival(m, 7.0, [0.0]) / frailty_survival(m, 4.0, [0.0]))

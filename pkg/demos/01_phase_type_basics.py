"""
Phase-type distributions
========================

Build a few phase-type laws, evaluate them, and check a sample against the
closed-form distribution function.
"""

import numpy as np
from scipy import integrate, stats

from phfrailty import PhaseType, coxian, erlang, hyperexponential, make_structure

# the Erlang(2, 2) law: two exponential stages of rate 2
erl = erlang(2, 2.0)
print("pi =", erl.pi)
print("T =\n", erl.T)
print("exit vector t =", erl.t)

z = np.array([0.5, 1.0, 2.0])
print("density", erl.density(z))
print("closed form", 4 * z * np.exp(-2 * z))
print("survival at 1:", erl.survival(1.0), "vs", 3 * np.exp(-2))
print("Laplace at 2:", erl.laplace(2.0), " moments:", erl.moment(1), erl.moment(2))

# structured constructors
cox = coxian([3.0, 1.0, 0.5], [0.2, 0.4])
hyp = hyperexponential([1.0, 3.0], [0.5, 0.5])
print("\nCoxian T =\n", cox.T)
print("hyperexponential mean", hyp.mean)

# a random general member, seeded
ph = make_structure("general", 4, seed=11)
total = integrate.quad(ph.density, 0, np.inf, limit=200)[0]
print("\nrandom p=4 law integrates to", total)

# exact simulation of the absorption time
rng = np.random.default_rng(1)
draws = ph.sample(rng, 100_000)
ks = stats.kstest(draws, lambda v: 1 - ph.survival(v)).statistic
print(f"sample mean {draws.mean():.4f} vs mean {ph.mean:.4f}; KS distance {ks:.4f}")

# JSON form
print(PhaseType.from_dict(cox.to_dict()).to_dict())

"""Synthetic frailty data, censoring schemes and nonparametric estimators."""

import csv
from dataclasses import dataclass

import numpy as np

from ._errors import DomainError
from .data import Dataset
from .frailty import BaselineHazard, FrailtyModel, risk_factor

__all__ = [
    "CensoringScheme",
    "LognormalFrailty",
    "SharedSource",
    "StepFunction",
    "sample_lifetime",
    "simulate_dataset",
    "simulate_lognormal_two_group",
    "nelson_aalen",
    "kaplan_meier",
]


@dataclass(frozen=True)
class CensoringScheme:
    """Right-censoring mechanism independent of the lifetimes.

    ``kind`` is ``"none"``, ``"fixed"`` (params: time), ``"exponential"``
    (params: rate) or ``"uniform"`` (params: lo, hi).
    """

    kind: str = "none"
    params: tuple = ()

    def __post_init__(self):
        arity = {"none": 0, "fixed": 1, "exponential": 1, "uniform": 2}
        if self.kind not in arity or len(self.params) != arity[self.kind]:
            raise DomainError(f"bad censoring scheme {self.kind}{self.params}")
        if any(v < 0 for v in self.params) or (self.kind == "exponential" and self.params[0] <= 0):
            raise DomainError("censoring parameters must be positive")
        if self.kind == "uniform" and self.params[0] > self.params[1]:
            raise DomainError("uniform censoring needs lo <= hi")

    @classmethod
    def parse(cls, text):
        """From ``"none"``, ``"fixed:5"``, ``"exponential:0.1"`` or ``"uniform:0:10"``."""
        kind, *rest = text.split(":")
        return cls(kind, tuple(float(v) for v in rest))

    def draw(self, rng, n):
        if self.kind == "none":
            return np.full(n, np.inf)
        if self.kind == "fixed":
            return np.full(n, self.params[0])
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.params[0], n)
        return rng.uniform(self.params[0], self.params[1], n)


@dataclass(frozen=True)
class LognormalFrailty:
    """Frailty ``exp(N(mu, sigma^2))`` with a baseline and coefficients."""

    mu: float
    sigma: float
    baseline: BaselineHazard
    beta: tuple = ()


@dataclass(frozen=True)
class SharedSource:
    """One frailty per cluster of ``cluster_size`` members."""

    model: FrailtyModel
    cluster_size: int = 2


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function equal to ``initial`` before the first knot."""

    knots: np.ndarray
    values: np.ndarray
    initial: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right")
        out = np.concatenate([[self.initial], self.values])[idx]
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path_or_file, precision=17):
        def emit(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "cumhaz"])
            for k, v in zip(self.knots, self.values):
                w.writerow([f"{k:.{precision}g}", f"{v:.{precision}g}"])

        if hasattr(path_or_file, "write"):
            emit(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                emit(fh)


def sample_lifetime(z, baseline, x=None, beta=(), rng=None, e=None):
    """Lifetime with conditional survival ``exp(-z exp(x beta) M(y))``.

    Inverse transform ``M^{-1}(E / (z exp(x beta)))`` with ``E`` a unit
    exponential; pass ``e`` to fix ``E`` instead of drawing it from ``rng``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("frailty must be positive")
    if e is None:
        e = rng.exponential(size=z.shape)
    scale = risk_factor(np.asarray(beta, dtype=float), x) if np.size(beta) else 1.0
    y = baseline.inv_cumhaz(np.asarray(e) / (z * scale))
    return float(y) if np.ndim(y) == 0 else y


def _streams(rng):
    # independent per-purpose generators: frailty, lifetimes, censoring
    seed = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(
        rng.integers(2**63) if isinstance(rng, np.random.Generator) else rng
    )
    return [np.random.default_rng(s) for s in seed.spawn(3)]


def simulate_dataset(source, n, censoring=None, rng=None, x=None):
    """Simulate ``n`` right-censored observations.

    Parameters
    ----------
    source : FrailtyModel, LognormalFrailty or SharedSource
        For :class:`SharedSource`, ``n`` is the number of clusters.
    n : int
    censoring : CensoringScheme, optional
        Defaults to no censoring.
    rng : int, SeedSequence or numpy.random.Generator
        Split into separate streams for frailties, lifetimes and censoring.
    x : array_like, shape (rows, d), optional
        Covariates per row; required when the source has coefficients.
    """
    censoring = censoring or CensoringScheme()
    frng, yrng, crng = _streams(rng if rng is not None else 0)
    if isinstance(source, SharedSource):
        rows = n * source.cluster_size
        cluster = np.repeat(np.arange(n), source.cluster_size)
        z = source.model.frailty.sample(frng, n)[cluster]
        baseline, beta = source.model.baseline, source.model.beta
    else:
        rows, cluster = n, None
        if isinstance(source, LognormalFrailty):
            z = np.exp(frng.normal(source.mu, source.sigma, n))
        else:
            z = source.frailty.sample(frng, n)
        baseline, beta = source.baseline, np.asarray(source.beta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x is None:
        if beta.size:
            raise DomainError("covariates required for a model with coefficients")
        x = np.zeros((rows, 0))
    x = np.asarray(x, dtype=float).reshape(rows, -1)
    scale = np.exp(x @ beta) if beta.size else np.ones(rows)
    ystar = baseline.inv_cumhaz(yrng.exponential(size=rows) / (z * scale))
    c = censoring.draw(crng, rows)
    delta = (ystar <= c).astype(int)
    y = np.minimum(ystar, c)
    if censoring.kind == "fixed" and censoring.params[0] == 0:
        # censored at the origin; keep times positive for the Dataset contract
        y = np.full(rows, np.finfo(float).tiny)
    return Dataset(y, delta, x, cluster)


def simulate_lognormal_two_group(
    seed=0, n_per_group=500, b=0.01, c=1.0, mu=-0.35, sigma=0.8, beta=0.5, censoring=None
):
    """Two equal groups (covariate 0 and 1) with lognormal frailty and Gompertz baseline."""
    src = LognormalFrailty(mu, sigma, BaselineHazard.gompertz(b, c), (beta,))
    x = np.repeat([0.0, 1.0], n_per_group)[:, None]
    return simulate_dataset(src, 2 * n_per_group, censoring, np.random.SeedSequence(seed), x)


def nelson_aalen(data):
    """Nelson-Aalen cumulative hazard ``sum_{t_i <= t} d_i / n_i``.

    Events at a common time are aggregated; censored observations at that
    time are still at risk for it.
    """
    y, d = np.asarray(data.y), np.asarray(data.delta)
    times = np.unique(y[d == 1])
    if times.size == 0:
        return StepFunction(np.array([]), np.array([]))
    ys = np.sort(y)
    at_risk = ys.size - np.searchsorted(ys, times, side="left")
    events = np.bincount(np.searchsorted(times, y[d == 1]), minlength=times.size)
    return StepFunction(times, np.cumsum(events / at_risk))


def kaplan_meier(data):
    """Kaplan-Meier survival estimate with the same tie convention."""
    y, d = np.asarray(data.y), np.asarray(data.delta)
    times = np.unique(y[d == 1])
    if times.size == 0:
        return StepFunction(np.array([]), np.array([]), initial=1.0)
    ys = np.sort(y)
    at_risk = ys.size - np.searchsorted(ys, times, side="left")
    events = np.bincount(np.searchsorted(times, y[d == 1]), minlength=times.size)
    return StepFunction(times, np.cumprod(1.0 - events / at_risk), initial=1.0)

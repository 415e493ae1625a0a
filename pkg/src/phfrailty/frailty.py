"""Univariate phase-type frailty models.

Conditionally on the frailty ``Z = z`` an individual with covariates ``x``
has hazard ``z * exp(x beta) * mu(y)``. With ``Z ~ PH(pi, T)`` every
functional reduces to resolvent products ``pi (M I - T)^{-n} t`` evaluated at
the scaled cumulative hazard ``M = exp(x beta) M(y)``.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np

from ._errors import DataError, DimensionError, DomainError
from .matrix_core import dominant_eigen_structure, resolvent_powers, resolvent_scale
from .phase_type import MatrixExponential, PhaseType

__all__ = [
    "BaselineHazard",
    "ShiftedBaseline",
    "FrailtyModel",
    "TailIndex",
    "baseline_eval",
    "frailty_survival",
    "frailty_density",
    "frailty_hazard",
    "cond_frailty_mean_surv",
    "cond_frailty_mean_event",
    "residual_model",
    "tail_index",
    "laplace_tail",
    "loglikelihood",
]

FAMILIES = {"constant": ("rate",), "gompertz": ("b", "c"), "power": ("theta",)}


@dataclass(frozen=True)
class BaselineHazard:
    """Parametric baseline hazard ``mu`` with cumulative hazard ``M``.

    ``constant``: ``mu = rate``. ``gompertz``: ``mu = b exp(c y)``, so
    ``M = b (exp(c y) - 1) / c`` (``b y`` when ``c = 0``). ``power``:
    ``mu = theta y^(theta - 1)``, so ``M = y^theta``.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown baseline family {self.family!r}")
        params = tuple(float(v) for v in self.params)
        if len(params) != len(FAMILIES[self.family]):
            raise DimensionError(f"{self.family} takes parameters {FAMILIES[self.family]}")
        if not all(math.isfinite(v) for v in params):
            raise DomainError("baseline parameters must be finite")
        if params[0] <= 0:
            raise DomainError(f"{FAMILIES[self.family][0]} must be positive")
        object.__setattr__(self, "params", params)

    @classmethod
    def constant(cls, rate=1.0):
        return cls("constant", (rate,))

    @classmethod
    def gompertz(cls, b, c):
        return cls("gompertz", (b, c))

    @classmethod
    def power(cls, theta):
        return cls("power", (theta,))

    def hazard(self, y):
        y = np.asarray(y, dtype=float)
        if self.family == "constant":
            return np.full_like(y, self.params[0])
        if self.family == "gompertz":
            b, c = self.params
            with np.errstate(over="ignore"):
                return b * np.exp(c * y)
        theta = self.params[0]
        with np.errstate(divide="ignore"):
            return theta * np.power(y, theta - 1.0)

    def cumhaz(self, y):
        y = np.asarray(y, dtype=float)
        if self.family == "constant":
            return self.params[0] * y
        if self.family == "gompertz":
            b, c = self.params
            if c == 0:
                return b * y
            with np.errstate(over="ignore"):
                return b * np.expm1(c * y) / c
        return np.power(y, self.params[0])

    def inv_cumhaz(self, m):
        """Inverse of ``M``; ``inf`` where ``m`` exceeds ``M(inf)``."""
        m = np.asarray(m, dtype=float)
        if self.family == "constant":
            return m / self.params[0]
        if self.family == "gompertz":
            b, c = self.params
            if c == 0:
                return m / b
            arg = c * m / b
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(arg > -1, np.log1p(np.maximum(arg, -1.0)) / c, np.inf)
        return np.power(m, 1.0 / self.params[0])

    def log_hazard(self, y):
        y = np.asarray(y, dtype=float)
        if self.family == "constant":
            return np.full_like(y, math.log(self.params[0]))
        if self.family == "gompertz":
            b, c = self.params
            return math.log(b) + c * y
        theta = self.params[0]
        with np.errstate(divide="ignore"):
            return math.log(theta) + (theta - 1.0) * np.log(y)

    # Optimisation works on an unconstrained vector: logs of positive parameters.
    def to_unconstrained(self):
        v = list(self.params)
        v[0] = math.log(v[0])
        return np.array(v)

    def from_unconstrained(self, v):
        v = [float(a) for a in v]
        v[0] = math.exp(v[0])
        return BaselineHazard(self.family, tuple(v))

    def to_dict(self):
        return {"family": self.family, **dict(zip(FAMILIES[self.family], self.params))}

    @classmethod
    def from_dict(cls, d):
        family = d["family"]
        if family not in FAMILIES:
            raise DomainError(f"unknown baseline family {family!r}")
        return cls(family, tuple(d[k] for k in FAMILIES[family]))


class ShiftedBaseline:
    """Baseline of the residual lifetime after surviving to ``t``.

    ``mu_t(y) = mu(y + t)`` and ``M_t(y) = M(y + t) - M(t)``.
    """

    def __init__(self, base, t):
        self.base = base
        self.shift = float(t)
        self._m0 = float(base.cumhaz(self.shift))
        self.family = base.family

    def hazard(self, y):
        return self.base.hazard(np.asarray(y, dtype=float) + self.shift)

    def log_hazard(self, y):
        return self.base.log_hazard(np.asarray(y, dtype=float) + self.shift)

    def cumhaz(self, y):
        return self.base.cumhaz(np.asarray(y, dtype=float) + self.shift) - self._m0

    def inv_cumhaz(self, m):
        return self.base.inv_cumhaz(np.asarray(m, dtype=float) + self._m0) - self.shift


def baseline_eval(baseline, y):
    """Return ``(mu(y), M(y))``.

    For the power family with ``theta < 1`` the hazard at ``y = 0`` is
    reported as ``inf`` while the cumulative hazard is 0.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("baseline evaluated at negative time")
    h, m = baseline.hazard(y), baseline.cumhaz(y)
    if h.ndim == 0:
        return float(h), float(m)
    return h, m


@dataclass(frozen=True, eq=False)
class FrailtyModel:
    """Phase-type frailty, baseline hazard and regression coefficients."""

    frailty: PhaseType
    baseline: BaselineHazard
    beta: np.ndarray = ()

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)

    def survival(self, y, x=None):
        return frailty_survival(self, y, x)

    def density(self, y, x=None):
        return frailty_density(self, y, x)

    def hazard(self, y, x=None):
        return frailty_hazard(self, y, x)

    def to_dict(self):
        d = self.frailty.to_dict()
        d["baseline"] = self.baseline.to_dict()
        d["beta"] = self.beta.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(PhaseType.from_dict(d), BaselineHazard.from_dict(d["baseline"]), d.get("beta", ()))


def risk_factor(beta, x, n=None):
    """``exp(x beta)`` per row; ones when there are no covariates."""
    beta = np.asarray(beta, dtype=float)
    if x is None:
        if beta.size:
            raise DimensionError(f"model has {beta.size} coefficients but no covariates given")
        return 1.0 if n is None else np.ones(n)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != beta.size:
        raise DimensionError(f"covariate width {x.shape[-1]} does not match {beta.size} coefficients")
    return np.exp(x @ beta)


def scaled_cumhaz(model, y, x=None):
    """``exp(x beta) M(y)`` broadcast over ``y``."""
    y = np.asarray(y, dtype=float)
    return risk_factor(model.beta, x) * model.baseline.cumhaz(y)


def resolvent_terms(ph, m, n):
    """``pi (m I - T)^{-k} t`` for ``k = 1..n``; shape ``m.shape + (n,)``."""
    m = np.asarray(m, dtype=float)
    R = resolvent_powers(ph.T, m.ravel(), ph.t, n)
    return (R @ ph.pi).reshape(m.shape + (n,))


def log_resolvent_terms(ph, m, n):
    """Logarithms of :func:`resolvent_terms`, free of underflow for large ``m``."""
    m = np.asarray(m, dtype=float)
    R = resolvent_powers(ph.T, m.ravel(), ph.t, n, scaled=True) @ ph.pi
    k = np.arange(1, n + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(R) - k * np.log(resolvent_scale(ph.T, m.ravel()))[:, None]
    return out.reshape(m.shape + (n,))


def _ratios(ph, m, n):
    # pi R^(k+1) t / pi R^k t for k = 1..n-1
    m = np.asarray(m, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.exp(np.diff(log_resolvent_terms(ph, m, n), axis=-1))
    out[np.isinf(m)] = 0.0
    return out


def _check_times(y, strict):
    y = np.asarray(y, dtype=float)
    if (np.any(y <= 0) if strict else np.any(y < 0)) or not np.all(np.isfinite(y)):
        raise DomainError("times must be " + ("positive" if strict else "non-negative"))
    return y


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def frailty_survival(model, y, x=None):
    """Marginal survival ``pi (M I - T)^{-1} t`` with ``M = exp(x beta) M(y)``."""
    y = _check_times(y, strict=False)
    return _out(resolvent_terms(model.frailty, scaled_cumhaz(model, y, x), 1)[..., 0])


def frailty_density(model, y, x=None):
    """Marginal density ``exp(x beta) mu(y) pi (M I - T)^{-2} t``."""
    y = _check_times(y, strict=True)
    r = resolvent_terms(model.frailty, scaled_cumhaz(model, y, x), 2)[..., 1]
    with np.errstate(invalid="ignore", over="ignore"):
        f = risk_factor(model.beta, x) * model.baseline.hazard(y) * r
    return _out(np.where(r == 0, 0.0, f))


def frailty_hazard(model, y, x=None):
    """Marginal hazard, the density over the survival function."""
    y = _check_times(y, strict=True)
    ratio = _ratios(model.frailty, scaled_cumhaz(model, y, x), 2)[..., 0]
    return _out(risk_factor(model.beta, x) * model.baseline.hazard(y) * ratio)


def cond_frailty_mean_surv(model, y, x=None):
    """``E(Z | Y > y)``; equals ``E(Z)`` at ``y = 0`` and decreases."""
    y = _check_times(y, strict=False)
    return _out(_ratios(model.frailty, scaled_cumhaz(model, y, x), 2)[..., 0])


def cond_frailty_mean_event(model, y, x=None):
    """``E(Z | Y = y) = 2 pi R^3 t / pi R^2 t`` with ``R = (M I - T)^{-1}``."""
    y = _check_times(y, strict=True)
    return _out(2.0 * _ratios(model.frailty, scaled_cumhaz(model, y, x), 3)[..., 1])


def residual_model(model, t, x=None):
    """Model of the remaining lifetime ``Y - t`` given ``Y > t``.

    The initial vector is ``pi (M(t) I - T)^{-1} (-T)`` normalised, the
    sub-intensity is ``T - M(t) I`` and the baseline is shifted by ``t``.
    The initial vector sums to one but can have negative entries (e.g. for
    Erlang frailties), so the frailty is returned as a
    :class:`~phfrailty.phase_type.MatrixExponential`. Covariates, if given,
    are absorbed into the shift ``M(t)``; ``beta`` is kept.
    """
    t = float(t)
    if not t > 0:
        raise DomainError("residual time must be positive")
    ph = model.frailty
    m = float(scaled_cumhaz(model, t, x))
    p = ph.dim
    row = resolvent_powers(ph.T, [m], ph.pi, 1, left=True)[0, 0]
    pi_new = row @ (-ph.T)
    pi_new = pi_new / pi_new.sum()
    frailty = MatrixExponential(pi_new, ph.T - m * np.eye(p))
    return FrailtyModel(frailty, ShiftedBaseline(model.baseline, t), model.beta)


class TailIndex(NamedTuple):
    """Tail exponent derived from the dominant Jordan block of ``T``.

    ``value`` is ``k * theta`` for the power baseline and ``k`` otherwise;
    ``power_law`` tells whether ``value`` is an index of regular variation of
    the lifetime distribution (power baseline) or only the exponent of the
    frailty Laplace transform.
    """

    value: float
    block_size: int
    eigenvalue: float
    power_law: bool

    def __float__(self):
        return float(self.value)


def tail_index(model, tol=1e-8):
    """Tail exponent ``k * theta`` where ``k`` is the dominant Jordan block size.

    Raises :class:`~phfrailty.AmbiguityError` when ``k`` cannot be decided.
    See :func:`laplace_tail` for the exponent of the Laplace transform as
    ``u -> inf`` computed directly from the representation.
    """
    lam, k = dominant_eigen_structure(model.frailty.T, tol)
    if model.baseline.family == "power":
        return TailIndex(k * model.baseline.params[0], k, lam, True)
    return TailIndex(float(k), k, lam, False)


def laplace_tail(ph, rtol=1e-12):
    """Leading behaviour ``L_Z(u) ~ C u^{-n}`` as ``u -> inf``.

    From ``(u I - T)^{-1} = sum_j T^j / u^(j+1)``, the order ``n`` is the first
    ``j + 1`` with ``pi T^j t != 0`` and ``C = pi T^(n-1) t``. It equals the
    number of leading zero derivatives of the frailty density at 0, plus one.

    Returns
    -------
    order : int
    constant : float
    """
    v = np.asarray(ph.t, dtype=float)
    scale = np.abs(v).max() or 1.0
    tnorm = max(np.abs(ph.T).max(), 1.0)
    for j in range(ph.dim):
        c = float(ph.pi @ v)
        if abs(c) > rtol * scale * tnorm**j:
            return j + 1, c
        v = ph.T @ v
    raise DomainError("pi T^j t vanishes for all j < p")


def loglikelihood(model, data):
    """Observed-data log-likelihood under right censoring.

    Sum of ``log f_Y(y_n)`` over events and ``log S_Y(y_n)`` over censored
    observations; accumulated in data order.
    """
    if len(data) == 0:
        raise DataError("empty dataset")
    y, d = data.y, data.delta
    if np.any((y <= 0) & (d == 1)):
        raise DataError("event at non-positive time")
    x = data.x if data.x.shape[1] or model.beta.size else None
    lin = np.log(risk_factor(model.beta, x, len(data)))
    m = np.exp(lin) * model.baseline.cumhaz(y)
    lr = log_resolvent_terms(model.frailty, m, 2)
    with np.errstate(divide="ignore"):
        ev = lin + model.baseline.log_hazard(y) + lr[:, 1]
        ce = lr[:, 0]
    terms = np.where(d == 1, ev, ce)
    return float(math.fsum(terms))

"""Shared and correlated phase-type frailty models.

In the shared model one frailty acts on every member of a cluster, so the
joint functionals depend on the times only through the summed cumulative
hazard. The correlated model gives each margin its own frailty, with the
pair ``(Z1, Z2)`` following a bivariate phase-type law with density
``eta exp(T11 z1) T12 exp(T22 z2) (-T22) e``.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._errors import ConstructionError, DataError, DimensionError, DomainError
from .data import Dataset
from .estimation import FitOptions, FitResult, fit_grouped, maximize_baseline
from .frailty import BaselineHazard, FrailtyModel, log_resolvent_terms, risk_factor
from .matrix_core import mat_exp_batch, resolvent_powers, resolvent_scale
from .phase_type import PhaseType

__all__ = [
    "SharedFrailtyModel",
    "shared_survival",
    "shared_density",
    "shared_estep",
    "fit_shared",
    "BivariatePH",
    "CorrelatedFrailtyModel",
    "bivph_density",
    "corr_survival",
    "corr_density",
    "corr_estep",
    "corr_loglik",
    "corr_complete_loglik",
    "fit_correlated_baselines",
]


class SharedFrailtyModel(FrailtyModel):
    """Frailty model whose frailty is common to all members of a cluster."""

    @classmethod
    def from_dict(cls, d):
        m = FrailtyModel.from_dict(d)
        return cls(m.frailty, m.baseline, m.beta)


def _cluster_terms(model, ys, x, n):
    ys = np.asarray(ys, dtype=float).ravel()
    if ys.size == 0:
        raise DimensionError("at least one time is required")
    if np.any(ys < 0):
        raise DomainError("times must be non-negative")
    xs = None
    if x is not None:
        xs = np.asarray(x, dtype=float).reshape(ys.size, -1)
    scale = risk_factor(model.beta, xs, ys.size)
    s = math.fsum(scale * model.baseline.cumhaz(ys))
    return ys, scale, log_resolvent_terms(model.frailty, s, n)


def shared_survival(model, ys, x=None):
    """Joint survival ``pi (sum_j M(y_j) I - T)^{-1} t``."""
    _, _, lr = _cluster_terms(model, ys, x, 1)
    return float(np.exp(lr[0]))


def _kappa(ys, deltas):
    deltas = np.asarray(deltas).ravel()
    if deltas.size != np.size(ys):
        raise DimensionError("times and indicators differ in length")
    return deltas, int(deltas.sum())


def shared_density(model, ys, deltas, x=None):
    """Joint likelihood of a cluster with right censoring.

    ``kappa! prod_j (exp(x_j beta) mu(y_j))^delta_j pi (S I - T)^{-1-kappa} t``
    with ``S`` the summed scaled cumulative hazard and ``kappa`` the number
    of events. All events gives the joint density, no events the joint
    survival function.
    """
    deltas, kappa = _kappa(ys, deltas)
    ys, scale, lr = _cluster_terms(model, ys, x, kappa + 1)
    ev = deltas == 1
    with np.errstate(divide="ignore"):
        loghaz = np.sum(np.log(scale[ev]) + model.baseline.log_hazard(ys[ev]))
    if lr[kappa] == -np.inf:
        return 0.0
    return float(math.factorial(kappa) * np.exp(loghaz + lr[kappa]))


def shared_estep(model, ys, deltas, x=None):
    """``E(Z | cluster) = (kappa + 1) pi R^(kappa+2) t / pi R^(kappa+1) t``."""
    deltas, kappa = _kappa(ys, deltas)
    _, _, lr = _cluster_terms(model, ys, x, kappa + 2)
    return float((kappa + 1) * np.exp(lr[kappa + 1] - lr[kappa]))


def fit_shared(data, opts=None):
    """Nested EM for the shared frailty model; clusters come from ``data.cluster``.

    Uses the same outer and inner iterations as :func:`~phfrailty.fit`, with
    one posterior frailty per cluster. Singleton clusters reproduce the
    univariate fit exactly.
    """
    if data.cluster is None:
        raise DataError("shared frailty fitting needs a cluster column")
    res = fit_grouped(data, opts or FitOptions(), data.cluster)
    m = res.model
    res.model = SharedFrailtyModel(m.frailty, m.baseline, m.beta)
    return res


# --------------------------------------------------------------------------
# bivariate phase type


def _sub_intensity(T, name):
    T = np.array(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DimensionError(f"{name} must be square")
    off = T[~np.eye(T.shape[0], dtype=bool)]
    if np.any(np.diag(T) >= 0) or np.any(off < 0):
        raise ConstructionError(f"{name} needs a negative diagonal and non-negative off-diagonal")
    return T


@dataclass(frozen=True, eq=False)
class BivariatePH:
    """Bivariate phase-type law of ``(Z1, Z2)``.

    The chain runs on the first block (``T11``), moves to the second block
    through ``T12`` and is absorbed from there; ``Z1`` and ``Z2`` are the
    times spent in each block. Requires ``T11 e + T12 e = 0``.
    """

    eta: np.ndarray
    T11: np.ndarray
    T12: np.ndarray
    T22: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).ravel()
        T11 = _sub_intensity(self.T11, "T11")
        T22 = _sub_intensity(self.T22, "T22")
        T12 = np.array(self.T12, dtype=float)
        p1, p2 = T11.shape[0], T22.shape[0]
        if eta.size != p1 or T12.shape != (p1, p2):
            raise DimensionError("inconsistent block dimensions")
        if np.any(eta < 0) or abs(eta.sum() - 1) > 1e-9:
            raise ConstructionError("eta must be a probability vector")
        if np.any(T12 < 0):
            raise ConstructionError("T12 must be non-negative")
        if np.any(np.abs(T11.sum(axis=1) + T12.sum(axis=1)) > 1e-9 * np.maximum(1, -np.diag(T11))):
            raise ConstructionError("rows of [T11, T12] must sum to zero")
        if np.any(T22.sum(axis=1) > 1e-9):
            raise ConstructionError("T22 has positive row sums")
        for name, a in (("eta", eta), ("T11", T11), ("T12", T12), ("T22", T22)):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def exit2(self):
        return -self.T22.sum(axis=1)

    def marginal1(self):
        return PhaseType(self.eta, self.T11)

    def marginal2(self):
        """``PH(eta (-T11)^{-1} T12, T22)``."""
        row = resolvent_powers(self.T11, [0.0], self.eta, 1, left=True)[0, 0]
        alpha = row @ self.T12
        return PhaseType(alpha / alpha.sum(), self.T22)

    def laplace(self, u1, u2):
        """``E exp(-u1 Z1 - u2 Z2) = eta (u1 I - T11)^{-1} T12 (u2 I - T22)^{-1} (-T22) e``."""
        return float(_bilinear(self, u1, u2, 1, 1))

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("eta", "T11", "T12", "T22")}

    @classmethod
    def from_dict(cls, d):
        return cls(d["eta"], d["T11"], d["T12"], d["T22"])


def _bilinear(b, u1, u2, n1, n2, scaled=False):
    """``eta (u1 I - T11)^{-n1} T12 (u2 I - T22)^{-n2} (-T22) e`` over broadcast shifts.

    With ``scaled=True`` the value times ``c1^n1 c2^n2`` is returned together
    with the scales ``c1, c2`` (see ``resolvent_powers``).
    """
    u1, u2 = np.broadcast_arrays(np.asarray(u1, dtype=float), np.asarray(u2, dtype=float))
    left = resolvent_powers(b.T11, u1.ravel(), b.eta, n1, left=True, scaled=scaled)[:, n1 - 1]
    right = resolvent_powers(b.T22, u2.ravel(), b.exit2, n2, scaled=scaled)[:, n2 - 1]
    out = np.einsum("mi,ij,mj->m", left, b.T12, right).reshape(u1.shape)
    if scaled:
        return out, resolvent_scale(b.T11, u1), resolvent_scale(b.T22, u2)
    return out


def bivph_density(b, z1, z2):
    """Joint density ``eta exp(T11 z1) T12 exp(T22 z2) (-T22) e`` for ``z1, z2 > 0``."""
    z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=float), np.asarray(z2, dtype=float))
    if np.any(z1 <= 0) or np.any(z2 <= 0):
        raise DomainError("bivariate density needs positive arguments")
    left = np.einsum("i,nij->nj", b.eta, mat_exp_batch(b.T11, z1.ravel()))
    right = mat_exp_batch(b.T22, z2.ravel()) @ b.exit2
    out = np.einsum("ni,ij,nj->n", left, b.T12, right).reshape(z1.shape)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CorrelatedFrailtyModel:
    """Bivariate phase-type frailty with one baseline hazard per margin."""

    bivph: BivariatePH
    baseline1: BaselineHazard
    baseline2: BaselineHazard

    def to_dict(self):
        d = self.bivph.to_dict()
        d["baseline1"] = self.baseline1.to_dict()
        d["baseline2"] = self.baseline2.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            BivariatePH.from_dict(d),
            BaselineHazard.from_dict(d["baseline1"]),
            BaselineHazard.from_dict(d["baseline2"]),
        )


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def corr_survival(model, y1, y2):
    """``S(y1, y2) = eta (M1 I - T11)^{-1} T12 (M2 I - T22)^{-1} (-T22) e``."""
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    if np.any(y1 < 0) or np.any(y2 < 0):
        raise DomainError("times must be non-negative")
    m1, m2 = model.baseline1.cumhaz(y1), model.baseline2.cumhaz(y2)
    return _out(_bilinear(model.bivph, m1, m2, 1, 1))


def corr_density(model, y1, y2):
    """``f(y1, y2) = mu1 mu2 eta (M1 I - T11)^{-2} T12 (M2 I - T22)^{-2} (-T22) e``."""
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise DomainError("times must be positive")
    m1, m2 = model.baseline1.cumhaz(y1), model.baseline2.cumhaz(y2)
    r = _bilinear(model.bivph, m1, m2, 2, 2)
    with np.errstate(invalid="ignore", over="ignore"):
        f = model.baseline1.hazard(y1) * model.baseline2.hazard(y2) * r
    return _out(np.where(r == 0, 0.0, f))


def corr_estep(model, y1, y2):
    """Posterior means ``(E(Z1 | Y = y), E(Z2 | Y = y))`` for an uncensored pair."""
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise DomainError("times must be positive")
    b = model.bivph
    m1, m2 = model.baseline1.cumhaz(y1), model.baseline2.cumhaz(y2)
    den, c1, c2 = _bilinear(b, m1, m2, 2, 2, scaled=True)
    e1 = 2 * _bilinear(b, m1, m2, 3, 2, scaled=True)[0] / (den * c1)
    e2 = 2 * _bilinear(b, m1, m2, 2, 3, scaled=True)[0] / (den * c2)
    return _out(e1), _out(e2)


def corr_loglik(model, y1, y2):
    """Sum of ``log f(y1_n, y2_n)`` over uncensored pairs."""
    return float(math.fsum(np.log(np.atleast_1d(corr_density(model, y1, y2)))))


def corr_complete_loglik(model, y1, y2, z1, z2):
    """Complete-data log-likelihood given the frailty pairs ``(z1, z2)``."""
    b1, b2 = model.baseline1, model.baseline2
    terms = (
        b1.log_hazard(y1) + b2.log_hazard(y2)
        - z1 * b1.cumhaz(y1) - z2 * b2.cumhaz(y2)
        + np.log(bivph_density(model.bivph, z1, z2))
    )
    return float(math.fsum(np.atleast_1d(terms)))


def fit_correlated_baselines(model, y1, y2, max_iter=100, rel_tol=1e-10, budget=200):
    """EM for both baselines with the bivariate frailty law held fixed.

    Each iteration computes ``corr_estep`` and maximises the two margins'
    expected complete log-likelihoods separately. Pairs must be uncensored.

    Returns
    -------
    model : CorrelatedFrailtyModel
    trace : list of float
        ``corr_loglik`` before the first and after every iteration.
    """
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    d1 = Dataset(y1, np.ones(y1.size, dtype=int))
    d2 = Dataset(y2, np.ones(y2.size, dtype=int))
    trace = [corr_loglik(model, y1, y2)]
    for _ in range(max_iter):
        e1, e2 = corr_estep(model, y1, y2)
        b1, _, _ = maximize_baseline(d1, np.atleast_1d(e1), model.baseline1, (), budget)
        b2, _, _ = maximize_baseline(d2, np.atleast_1d(e2), model.baseline2, (), budget)
        model = CorrelatedFrailtyModel(model.bivph, b1, b2)
        trace.append(corr_loglik(model, y1, y2))
        if abs(trace[-1] - trace[-2]) <= rel_tol * abs(trace[-2]):
            break
    return model, trace

"""Maximum-likelihood fitting of phase-type frailty models by nested EM.

Each outer iteration

1. computes the posterior frailty means ``E(Z | data)`` in closed form,
2. maximises the expected complete log-likelihood over the baseline
   parameters and regression coefficients (Nelder-Mead on a log scale),
3. discretises the average posterior frailty density on Gauss-Legendre
   nodes and runs a few iterations of the weighted phase-type EM on it.

Observations are handled in groups so that the same engine fits shared
frailty models (one frailty per cluster); the univariate model is the case
where every observation is its own group.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from ._errors import (
    DataError,
    DimensionError,
    StateStarvationError,
    TruncationError,
    UnsupportedDataError,
)
from .data import Dataset
from .frailty import BaselineHazard, FrailtyModel, log_resolvent_terms, risk_factor
from .matrix_core import mat_exp_batch, van_loan_conv_batch
from .phase_type import PI_TRUNCATION, STRUCTURES, PhaseType, make_structure, ph_survival

__all__ = [
    "Dataset",
    "FitOptions",
    "WeightedSample",
    "FitResult",
    "estep_expectations",
    "mixture_nodes",
    "weighted_loglik",
    "weighted_ph_em_iteration",
    "baseline_objective",
    "maximize_baseline",
    "fit",
    "fit_grouped",
    "grouped_loglik",
]

log = logging.getLogger(__name__)

MAX_RESTARTS = 3
MAX_DOUBLINGS = 60


@dataclass
class FitOptions:
    """Tuning of :func:`fit`.

    ``max_outer_iter = 0`` returns the initial model unchanged. ``init``
    overrides the seeded initialisation with a given model. With
    ``update_frailty=False`` the frailty distribution stays at its initial
    value and only the baseline and coefficients are estimated.
    """

    ph_dim: int = 2
    structure: str = "general"
    baseline: str = "constant"
    max_outer_iter: int = 200
    inner_iter_per_outer: int = 5
    rel_tol: float = 1e-8
    quad_nodes: int = 200
    trunc_tail_mass: float = 1e-10
    seed: int = 0
    optimizer_budget: int = 200
    init: FrailtyModel = None
    update_frailty: bool = True

    def __post_init__(self):
        if self.ph_dim < 1 or self.inner_iter_per_outer < 1 or self.quad_nodes < 1:
            raise ValueError("ph_dim, inner_iter_per_outer and quad_nodes must be >= 1")
        if self.max_outer_iter < 0 or self.optimizer_budget < 1:
            raise ValueError("max_outer_iter must be >= 0 and optimizer_budget >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not 0 < self.trunc_tail_mass <= 1e-6:
            raise ValueError("trunc_tail_mass must lie in (0, 1e-6]")
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")


@dataclass(eq=False)
class WeightedSample:
    """Nodes ``z`` with normalised weights ``w`` approximating a density."""

    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if self.z.shape != w.shape or self.z.size == 0:
            raise DimensionError("nodes and weights must be non-empty and aligned")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be non-negative with positive total")
        self.w = w / w.sum()

    def mean(self):
        return float(self.w @ self.z)


@dataclass(eq=False)
class FitResult:
    model: FrailtyModel
    loglik_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    restarts: int = 0

    @property
    def loglik(self):
        return self.loglik_trace[-1]

    def to_dict(self):
        d = self.model.to_dict()
        d.update(
            loglik=self.loglik,
            trace=list(self.loglik_trace),
            iterations=self.iterations,
            converged=self.converged,
        )
        return d


# --------------------------------------------------------------------------
# group statistics


def _covariates(model, data):
    if data.n_covariates != model.beta.size:
        raise DimensionError(
            f"data has {data.n_covariates} covariates, model has {model.beta.size} coefficients"
        )
    return risk_factor(model.beta, data.x, len(data))


def _group_sums(data, groups, model):
    """Per-group ``(sum of scaled cumulative hazards, number of events)``."""
    m = _covariates(model, data) * model.baseline.cumhaz(data.y)
    G = int(groups.max()) + 1
    s = np.bincount(groups, weights=m, minlength=G)
    kappa = np.bincount(groups, weights=data.delta, minlength=G).astype(int)
    return s, kappa


def _group_terms(model, s, kappa):
    """``log pi R^(kappa+1) t`` and the ratio ``pi R^(kappa+2) t / pi R^(kappa+1) t`` per group."""
    lr = log_resolvent_terms(model.frailty, s, int(kappa.max()) + 2)
    idx = np.arange(s.size)
    return lr[idx, kappa], np.exp(lr[idx, kappa + 1] - lr[idx, kappa])


def grouped_loglik(model, data, groups):
    """Log-likelihood with one shared frailty per group."""
    s, kappa = _group_sums(data, groups, model)
    lin = np.log(_covariates(model, data))
    ev = np.where(data.delta == 1, lin + model.baseline.log_hazard(data.y), 0.0)
    l1, _ = _group_terms(model, s, kappa)
    return float(math.fsum(ev) + math.fsum(gammaln(kappa + 1) + l1))


def _group_estep(model, data, groups):
    s, kappa = _group_sums(data, groups, model)
    _, ratio = _group_terms(model, s, kappa)
    return (kappa + 1) * ratio


def estep_expectations(model, data):
    """Posterior frailty mean for every observation.

    ``E(Z | Y = y) = 2 pi R^3 t / pi R^2 t`` for events and
    ``E(Z | Y > y) = pi R^2 t / pi R^1 t`` for censored rows, with the
    resolvent ``R = (exp(x beta) M(y) I - T)^{-1}``.
    """
    return _group_estep(model, data, np.arange(len(data)))


# --------------------------------------------------------------------------
# discretised mixture density


def _upper_limit(ph, power, tail_mass):
    z = ph.mean
    for _ in range(MAX_DOUBLINGS):
        if z**power * ph_survival(ph, z) < tail_mass:
            return z
        z *= 2.0
    raise TruncationError(f"no z_max within {MAX_DOUBLINGS} doublings of the frailty mean")


def _mixture_weights(model, s, kappa, z):
    """Average of the per-group posterior frailty densities at nodes ``z``."""
    ph = model.frailty
    fz = np.einsum("i,nij,j->n", ph.pi, mat_exp_batch(ph.T, z), ph.t)
    l1, _ = _group_terms(model, s, kappa)
    lognorm = gammaln(kappa + 1) + l1
    with np.errstate(divide="ignore"):
        logk = kappa[None, :] * np.log(z)[:, None] - z[:, None] * s[None, :] - lognorm[None, :]
    return np.maximum(fz, 0.0) * np.exp(logk).mean(axis=1)


def mixture_nodes(model, data, opts=None, groups=None):
    """Discretise the M-step target density on Gauss-Legendre nodes.

    The target is the average over groups of ``z^kappa exp(-z s) f_Z(z)``
    normalised, where ``s`` is the group's summed scaled cumulative hazard
    and ``kappa`` its event count (one group per row by default). The upper
    limit ``z_max`` is found by doubling from ``E(Z)`` until
    ``z^(kappa_max + 1) S_Z(z)`` (at least ``z^2 S_Z(z)``) falls below
    ``opts.trunc_tail_mass``.

    Returns
    -------
    WeightedSample
    """
    opts = opts or FitOptions(ph_dim=model.frailty.dim)
    groups = np.arange(len(data)) if groups is None else np.asarray(groups)
    s, kappa = _group_sums(data, groups, model)
    zmax = _upper_limit(model.frailty, max(2, int(kappa.max()) + 1), opts.trunc_tail_mass)
    x, gw = np.polynomial.legendre.leggauss(opts.quad_nodes)
    z = 0.5 * zmax * (x + 1.0)
    w = 0.5 * zmax * gw * _mixture_weights(model, s, kappa, z)
    return WeightedSample(z, w)


# --------------------------------------------------------------------------
# weighted phase-type EM


def weighted_loglik(ph, sample):
    """``sum_i w_i log f(z_i)`` for the phase-type density ``f``."""
    f = np.einsum("i,nij,j->n", ph.pi, mat_exp_batch(ph.T, sample.z), ph.t)
    keep = sample.w > 0
    with np.errstate(divide="ignore"):
        return float(sample.w[keep] @ np.log(f[keep]))


def weighted_ph_em_iteration(ph, sample, return_loglik=False):
    """One EM update of ``(pi, T)`` for a weighted sample of exact points.

    Conditional expectations of the initial-state indicators, sojourn
    times, jump counts and exit counts come from ``exp(T z_i)`` and the
    convolution integral of :func:`~phfrailty.matrix_core.van_loan_conv`.
    Zeros of ``pi`` and ``T`` are preserved, so structures survive.

    With ``return_loglik=True`` the weighted log-likelihood of the *input*
    distribution, available as a by-product, is returned as well.

    Raises
    ------
    StateStarvationError
        If a phase receives zero expected sojourn time.
    """
    keep = sample.w > 0
    z, w = sample.z[keep], sample.w[keep]
    pi, T, t = ph.pi, ph.T, ph.t
    E, J = van_loan_conv_batch(T, t, pi, z)
    a = np.einsum("k,nkl->nl", pi, E)
    b = E @ t
    f = a @ t
    ok = f > 0
    wf = np.where(ok, w / np.where(ok, f, 1.0), 0.0)
    B = pi * (wf @ b)
    Z = np.einsum("n,nkk->k", wf, J)
    N = T * np.einsum("n,nlk->kl", wf, J)
    np.fill_diagonal(N, 0.0)
    Nexit = t * (wf @ a)
    for k in range(ph.dim):
        if not Z[k] > 0:
            raise StateStarvationError(k)
    pi_new = B / B.sum()
    pi_new[pi_new < PI_TRUNCATION] = 0.0
    pi_new /= pi_new.sum()
    T_new = N / Z[:, None]
    t_new = Nexit / Z
    np.fill_diagonal(T_new, -(T_new.sum(axis=1) + t_new))
    new = PhaseType(pi_new, T_new, ph.structure)
    if return_loglik:
        with np.errstate(divide="ignore"):
            return new, float(w @ np.log(f))
    return new


# --------------------------------------------------------------------------
# baseline and regression step


def baseline_objective(baseline, beta, data, ez):
    """``sum delta (x beta + log mu(y)) - E(Z|obs) exp(x beta) M(y)``."""
    lin = data.x @ beta if data.n_covariates else np.zeros(len(data))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        val = math.fsum(
            np.where(data.delta == 1, lin + baseline.log_hazard(data.y), 0.0)
        ) - math.fsum(ez * np.exp(lin) * baseline.cumhaz(data.y))
    return val if np.isfinite(val) else -np.inf


def check_separation(data):
    """Reject binary covariates with a level that has no events (beta unbounded)."""
    for j in range(data.n_covariates):
        col = data.x[:, j]
        levels = np.unique(col)
        if levels.size == 2:
            for v in levels:
                if data.delta[col == v].sum() == 0:
                    raise UnsupportedDataError(
                        f"covariate x{j + 1} = {v:g} has no events; its coefficient is unbounded"
                    )


def maximize_baseline(data, ez, baseline0, beta0, budget=200):
    """Joint maximisation over baseline parameters and coefficients.

    Nelder-Mead on ``(log of positive parameters, remaining parameters,
    beta)``, started at the incumbent. The incumbent is kept if the search
    does not improve on it.

    Returns
    -------
    baseline : BaselineHazard
    beta : ndarray
    stalled : bool
        True when no improvement over the incumbent was found.
    """
    check_separation(data)
    ez = np.asarray(ez, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    na = len(baseline0.params)
    v0 = np.concatenate([baseline0.to_unconstrained(), beta0])

    def unpack(v):
        return baseline0.from_unconstrained(v[:na]), v[na:]

    def negobj(v):
        try:
            bl, be = unpack(v)
        except (ValueError, OverflowError):
            return np.inf
        return -baseline_objective(bl, be, data, ez)

    f0 = negobj(v0)
    res = minimize(
        negobj, v0, method="Nelder-Mead",
        options={"maxfev": budget, "xatol": 1e-12, "fatol": 1e-14, "adaptive": v0.size > 2},
    )
    if np.isfinite(res.fun) and res.fun < f0:
        bl, be = unpack(res.x)
        return bl, np.asarray(be), False
    return baseline0, beta0, True


# --------------------------------------------------------------------------
# driver


def _default_baseline(family, data):
    rate = data.n_events / data.y.sum()
    if family == "constant":
        return BaselineHazard.constant(rate)
    if family == "gompertz":
        c = 1.0 / data.y.mean()
        return BaselineHazard.gompertz(data.n_events / (np.expm1(c * data.y).sum() / c), c)
    if family == "power":
        return BaselineHazard.power(1.0)
    raise ValueError(f"unknown baseline family {family!r}")


def initial_model(data, opts, seed):
    """Seeded starting point.

    The baseline and coefficients maximise the likelihood of the plain
    proportional hazards model (frailty fixed at 1); the frailty is a random
    member of the requested structure rescaled to mean 1 (for the
    scale-free power baseline, to the mean that matches the event rate).
    """
    d = data.n_covariates
    bl, beta, _ = maximize_baseline(
        data, np.ones(len(data)), _default_baseline(opts.baseline, data), np.zeros(d),
        budget=max(2000, opts.optimizer_budget),
    )
    ph = make_structure(opts.structure, opts.ph_dim, seed=seed)
    target = 1.0
    if bl.family == "power":
        target = data.n_events / float(np.sum(risk_factor(beta, data.x, len(data)) * bl.cumhaz(data.y)))
    return FrailtyModel(ph.scaled(target / ph.mean), bl, beta)


def _validate(data, opts):
    if not isinstance(data, Dataset):
        raise DataError("expected a Dataset")
    if data.n_events == 0:
        raise UnsupportedDataError("no events in the data: baseline scale is not identifiable")
    if opts.init is not None and opts.init.beta.size != data.n_covariates:
        raise DimensionError("initial model and data disagree on the number of covariates")


def _run(data, opts, groups, seed):
    model = opts.init if opts.init is not None else initial_model(data, opts, seed)
    trace = [grouped_loglik(model, data, groups)]
    converged = False
    small = 0
    it = 0
    for it in range(1, opts.max_outer_iter + 1):
        ez_rows = _group_estep(model, data, groups)[groups]
        bl, beta, _ = maximize_baseline(data, ez_rows, model.baseline, model.beta, opts.optimizer_budget)
        ph = model.frailty
        if opts.update_frailty:
            sample = mixture_nodes(model, data, opts, groups)
            for _ in range(opts.inner_iter_per_outer):
                ph = weighted_ph_em_iteration(ph, sample)
        model = FrailtyModel(ph, bl, beta)
        trace.append(grouped_loglik(model, data, groups))
        rel = abs(trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-300)
        small = small + 1 if rel < opts.rel_tol else 0
        if small >= 3:
            converged = True
            break
    return FitResult(model, trace, it, converged)


def fit_grouped(data, opts, groups):
    """Nested EM with one frailty per group label in ``groups``.

    On :class:`~phfrailty.StateStarvationError` the fit restarts from a new
    seed, at most three times.
    """
    groups = np.unique(np.asarray(groups), return_inverse=True)[1].ravel()
    _validate(data, opts)
    for attempt in range(MAX_RESTARTS + 1):
        try:
            res = _run(data, opts, groups, opts.seed + attempt)
            res.restarts = attempt
            return res
        except StateStarvationError as exc:
            if attempt == MAX_RESTARTS or opts.init is not None:
                raise
            log.warning("%s; restarting with seed %d", exc, opts.seed + attempt + 1)


def fit(data, opts=None):
    """Fit a univariate phase-type frailty model.

    Parameters
    ----------
    data : Dataset
    opts : FitOptions, optional

    Returns
    -------
    FitResult
        ``loglik_trace[0]`` is the log-likelihood of the initial model and
        each later entry follows one outer iteration.
    """
    opts = opts or FitOptions()
    return fit_grouped(data, opts, np.arange(len(data)))


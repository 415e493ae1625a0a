"""Continuous phase-type distributions PH(pi, T)."""

from dataclasses import dataclass, field
import math

import numpy as np

from ._errors import ConstructionError, DomainError
from .matrix_core import mat_exp_batch, resolvent_powers

__all__ = [
    "STRUCTURES",
    "PhaseType",
    "MatrixExponential",
    "structure_mask",
    "make_structure",
    "erlang",
    "coxian",
    "hyperexponential",
    "ph_density",
    "ph_survival",
    "ph_laplace",
    "ph_moment",
    "ph_sample",
]

STRUCTURES = ("general", "coxian", "erlang", "hyperexponential")

ROW_SUM_TOL = 1e-9
PI_TRUNCATION = 1e-12


def structure_mask(kind, p):
    """Boolean (p, p) pattern of off-diagonal entries allowed to be non-zero."""
    if kind not in STRUCTURES:
        raise ConstructionError(f"unknown structure {kind!r}; expected one of {STRUCTURES}")
    if kind == "general":
        return ~np.eye(p, dtype=bool)
    if kind == "hyperexponential":
        return np.zeros((p, p), dtype=bool)
    return np.eye(p, k=1, dtype=bool)


@dataclass(frozen=True, eq=False)
class PhaseType:
    """Phase-type distribution with initial vector ``pi`` and sub-intensity ``T``.

    The exit vector ``t = -T e`` is derived. Arrays are copied and made
    read-only, so instances can be shared freely.

    Parameters
    ----------
    pi : array_like, shape (p,)
    T : array_like, shape (p, p)
    structure : str, default "general"
        One of :data:`STRUCTURES`; its zero pattern must hold in ``T``.
    """

    pi: np.ndarray
    T: np.ndarray
    structure: str = "general"
    t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float).ravel()
        T = np.array(self.T, dtype=float)
        if T.ndim == 0:
            T = T.reshape(1, 1)
        p = pi.size
        if p == 0 or T.shape != (p, p):
            raise ConstructionError(f"pi has length {p} but T has shape {T.shape}")
        if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(T))):
            raise ConstructionError("non-finite parameters")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > ROW_SUM_TOL:
            raise ConstructionError(f"pi must be a probability vector, got {pi}")
        off = T[~np.eye(p, dtype=bool)]
        if np.any(np.diag(T) >= 0) or np.any(off < 0):
            raise ConstructionError("T needs a negative diagonal and non-negative off-diagonal")
        rows = T.sum(axis=1)
        if np.any(rows > ROW_SUM_TOL * np.maximum(1.0, -np.diag(T))):
            raise ConstructionError("T has positive row sums")
        mask = structure_mask(self.structure, p)
        if np.any(T[~mask & ~np.eye(p, dtype=bool)] != 0):
            raise ConstructionError(f"T violates the {self.structure} zero pattern")
        if self.structure in ("coxian", "erlang") and np.any(pi[1:] != 0):
            raise ConstructionError(f"{self.structure} requires pi = (1, 0, ..., 0)")
        t = np.maximum(-rows, 0.0)
        for a in (pi, T, t):
            a.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "t", t)

    @property
    def dim(self):
        return self.pi.size

    @property
    def mask(self):
        return structure_mask(self.structure, self.dim)

    @property
    def mean(self):
        return ph_moment(self, 1)

    def density(self, z):
        return ph_density(self, z)

    def survival(self, z):
        return ph_survival(self, z)

    def laplace(self, u):
        return ph_laplace(self, u)

    def moment(self, n):
        return ph_moment(self, n)

    def sample(self, rng, size=None):
        return ph_sample(self, rng, size)

    def scaled(self, c):
        """Distribution of ``c * Z``."""
        return PhaseType(self.pi, np.asarray(self.T) / c, self.structure)

    def to_dict(self):
        return {"pi": self.pi.tolist(), "T": self.T.tolist(), "structure": self.structure}

    @classmethod
    def from_dict(cls, d):
        return cls(d["pi"], d["T"], d.get("structure", "general"))


def _positive_grid(z, strict):
    z = np.asarray(z, dtype=float)
    bad = z <= 0 if strict else z < 0
    if np.any(bad) or not np.all(np.isfinite(z)):
        raise DomainError(f"argument must be {'positive' if strict else 'non-negative'} and finite")
    return z


def ph_density(ph, z):
    """Density ``pi exp(T z) t`` for ``z > 0`` (scalar or array)."""
    z = _positive_grid(z, strict=True)
    E = mat_exp_batch(ph.T, z.ravel())
    out = np.einsum("i,nij,j->n", ph.pi, E, ph.t)
    out = np.maximum(out, 0.0).reshape(z.shape)
    return out[()] if out.ndim == 0 else out


def ph_survival(ph, z):
    """Survival function ``pi exp(T z) e`` for ``z >= 0``."""
    z = _positive_grid(z, strict=False)
    E = mat_exp_batch(ph.T, z.ravel())
    out = np.clip(E.sum(axis=2) @ ph.pi, 0.0, 1.0).reshape(z.shape)
    return out[()] if out.ndim == 0 else out


def ph_laplace(ph, u):
    """Laplace transform ``pi (u I - T)^{-1} t`` for ``u >= 0``."""
    u = _positive_grid(u, strict=False)
    R = resolvent_powers(ph.T, u.ravel(), ph.t, 1)[:, 0, :]
    out = (R @ ph.pi).reshape(u.shape)
    return out[()] if out.ndim == 0 else out


def ph_moment(ph, n):
    """Raw moment ``n! pi (-T)^{-n} e``."""
    n = int(n)
    if n < 1:
        raise DomainError("moment order must be >= 1")
    R = resolvent_powers(ph.T, [0.0], np.ones(ph.dim), n)
    return float(math.factorial(n) * ph.pi @ R[0, n - 1])


def ph_sample(ph, rng, size=None):
    """Absorption times of the underlying Markov jump process.

    All paths are advanced in lockstep: each round draws a holding time in
    the current phase for every live path, then its next phase or absorption.

    Parameters
    ----------
    ph : PhaseType
    rng : numpy.random.Generator
    size : int, optional
        Number of draws; a scalar is returned when omitted.
    """
    n = 1 if size is None else int(size)
    p = ph.dim
    rates = -np.diag(ph.T)
    jump = np.column_stack([np.where(np.eye(p, dtype=bool), 0.0, ph.T), ph.t]) / rates[:, None]
    cum = np.cumsum(jump, axis=1)
    cum[:, -1] = 1.0
    state = rng.choice(p, size=n, p=ph.pi)
    out = np.zeros(n)
    alive = np.arange(n)
    while alive.size:
        s = state[alive]
        out[alive] += rng.exponential(size=alive.size) / rates[s]
        u = rng.random(alive.size)
        nxt = (u[:, None] >= cum[s]).sum(axis=1)
        state[alive] = nxt
        alive = alive[nxt < p]
    return float(out[0]) if size is None else out


def erlang(k, rate):
    """Erlang distribution with ``k`` phases of common ``rate``."""
    if int(k) < 1 or not rate > 0:
        raise ConstructionError("Erlang needs k >= 1 and rate > 0")
    k = int(k)
    T = -rate * np.eye(k) + rate * np.eye(k, k=1)
    pi = np.zeros(k)
    pi[0] = 1.0
    return PhaseType(pi, T, "erlang")


def coxian(rates, exit_probs):
    """Coxian distribution.

    Phase ``i`` is left at ``rates[i]``; with probability ``exit_probs[i]``
    the process is absorbed, otherwise it moves to phase ``i + 1``. The last
    phase always exits.
    """
    rates = np.asarray(rates, dtype=float)
    q = np.asarray(exit_probs, dtype=float)
    p = rates.size
    if q.size == p - 1:
        q = np.append(q, 1.0)
    if q.size != p or np.any(rates <= 0) or np.any((q < 0) | (q > 1)) or q[-1] != 1.0:
        raise ConstructionError("inadmissible Coxian parameters")
    T = -np.diag(rates) + np.diag(rates[:-1] * (1 - q[:-1]), k=1)
    pi = np.zeros(p)
    pi[0] = 1.0
    return PhaseType(pi, T, "coxian")


def hyperexponential(rates, pi):
    """Mixture of exponentials with the given rates and weights."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise ConstructionError("rates must be positive")
    return PhaseType(pi, -np.diag(rates), "hyperexponential")


def make_structure(kind, p, params=None, seed=None):
    """Build a phase-type distribution of a given structure.

    With ``params`` omitted a random admissible member is drawn: all rates
    are log-uniform on [0.1, 10] (seeded by ``seed``).

    Parameters
    ----------
    kind : {"general", "coxian", "erlang", "hyperexponential"}
    p : int
    params : dict, optional
        ``erlang``: ``rate``; ``coxian``: ``rates`` and ``exit_probs``;
        ``hyperexponential``: ``rates`` and ``pi``; ``general``: ``pi`` and ``T``.
    seed : int or numpy.random.Generator, optional
    """
    p = int(p)
    if p < 1:
        raise ConstructionError("dimension must be >= 1")
    if kind not in STRUCTURES:
        raise ConstructionError(f"unknown structure {kind!r}")
    if params is not None:
        if kind == "erlang":
            return erlang(p, params["rate"])
        if kind == "coxian":
            return coxian(params["rates"], params["exit_probs"])
        if kind == "hyperexponential":
            return hyperexponential(params["rates"], params["pi"])
        return PhaseType(params["pi"], params["T"], "general")

    rng = np.random.default_rng(seed)

    def draw(size):
        return np.exp(rng.uniform(np.log(0.1), np.log(10.0), size))

    if kind == "erlang":
        return erlang(p, float(draw(1)[0]))
    if kind == "hyperexponential":
        return hyperexponential(draw(p), np.full(p, 1.0 / p))
    if kind == "coxian":
        T = np.diag(draw(p - 1), k=1) if p > 1 else np.zeros((1, 1))
        exits = draw(p)
    else:
        T = np.where(np.eye(p, dtype=bool), 0.0, draw((p, p)))
        exits = draw(p)
    T = T - np.diag(T.sum(axis=1) + exits)
    pi = np.zeros(p)
    if kind == "coxian":
        pi[0] = 1.0
    else:
        pi[:] = 1.0 / p
    return PhaseType(pi, T, kind)


class MatrixExponential:
    """Representation ``(pi, T)`` whose initial vector may have negative entries.

    Conditioning a phase-type frailty on survival produces such a
    representation: the density ``pi exp(T z) t`` is still a proper density
    but ``pi`` need not be a probability vector. Only ``pi.sum() == 1`` and the
    sub-intensity sign pattern of ``T`` are checked.
    """

    def __init__(self, pi, T):
        pi = np.array(pi, dtype=float).ravel()
        T = np.array(T, dtype=float)
        if T.shape != (pi.size, pi.size):
            raise ConstructionError(f"pi has length {pi.size} but T has shape {T.shape}")
        if abs(pi.sum() - 1.0) > 1e-8:
            raise ConstructionError("initial vector must sum to 1")
        self.pi = pi
        self.T = T
        self.t = -T.sum(axis=1)
        self.structure = "general"

    @property
    def dim(self):
        return self.pi.size

    @property
    def mean(self):
        return ph_moment(self, 1)

    def density(self, z):
        return ph_density(self, z)

    def survival(self, z):
        return ph_survival(self, z)

    def laplace(self, u):
        return ph_laplace(self, u)

    def __repr__(self):
        return f"MatrixExponential(pi={self.pi!r}, T={self.T!r})"

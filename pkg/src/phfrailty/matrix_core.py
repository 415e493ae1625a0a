"""Dense linear-algebra kernel for phase-type computations.

Everything here is a pure function of its inputs. Matrix exponentials use
scaling and squaring with a degree-13 Pade approximant (``scipy.linalg.expm``),
resolvent powers are computed by repeated LU solves, and the convolution
integral needed by the phase-type EM comes from one exponential of a
block-triangular matrix.
"""

import numpy as np
import scipy.linalg

from ._errors import AmbiguityError, DimensionError, DomainError, NumericError

__all__ = [
    "mat_exp",
    "mat_exp_batch",
    "resolvent_vec",
    "resolvent_powers",
    "van_loan_conv",
    "van_loan_conv_batch",
    "dominant_eigen_structure",
]


def _as_square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.size == 0:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    return A


def mat_exp(A, s=1.0):
    """Return ``exp(A * s)``.

    Parameters
    ----------
    A : array_like, shape (p, p)
    s : float, default 1.0
        Non-negative scaling of ``A``.
    """
    A = _as_square(A)
    s = float(s)
    if not np.isfinite(s) or s < 0:
        raise DomainError(f"scaling must be finite and non-negative, got {s}")
    return scipy.linalg.expm(A * s)


def mat_exp_batch(A, s):
    """Exponentials ``exp(A * s_i)`` for a vector of scalings, shape (n, p, p)."""
    A = _as_square(A)
    s = np.asarray(s, dtype=float).ravel()
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise DomainError("scalings must be finite and non-negative")
    return scipy.linalg.expm(s[:, None, None] * A[None, :, :])


def resolvent_vec(T, s, n=1):
    """Return ``(s I - T)^{-n}`` computed by ``n`` LU solves.

    The LU factorization of ``s I - T`` is computed once and reused for
    every power; no explicit inverse is formed.
    """
    T = _as_square(T, "T")
    n = int(n)
    if n < 1:
        raise DomainError(f"power must be >= 1, got {n}")
    p = T.shape[0]
    A = float(s) * np.eye(p) - T
    with np.errstate(all="raise"):
        try:
            lu = scipy.linalg.lu_factor(A, check_finite=False)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise NumericError(f"sI - T is singular at s={s}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise NumericError(f"sI - T is singular at s={s}")
    X = np.eye(p)
    for _ in range(n):
        X = scipy.linalg.lu_solve(lu, X, check_finite=False)
    return X


def resolvent_powers(T, s, rhs, n, left=False, scaled=False):
    """Successive resolvent applications for a batch of shifts.

    Computes ``(s_j I - T)^{-k} rhs`` for ``k = 1..n`` and every shift
    ``s_j``. With ``left=True`` the row-vector products ``rhs (s_j I - T)^{-k}``
    are returned instead. An infinite shift gives zeros.

    Parameters
    ----------
    T : array_like, shape (p, p)
    s : array_like, shape (m,)
    rhs : array_like, shape (p,)
    n : int
    left : bool
    scaled : bool
        Return ``c_j^k (s_j I - T)^{-k} rhs`` with ``c_j = s_j + ||T||``
        instead. These stay of order one for huge shifts, where the plain
        values underflow; :func:`resolvent_scale` gives ``c_j``.

    Returns
    -------
    ndarray, shape (m, n, p)
    """
    T = _as_square(T, "T")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    p = T.shape[0]
    if rhs.shape != (p,):
        raise DimensionError(f"rhs must have length {p}, got shape {rhs.shape}")
    if np.any(np.isnan(s)):
        raise DomainError("shift is NaN")
    fin = np.isfinite(s)
    c = resolvent_scale(T, s[fin])
    A = (s[fin] / c)[:, None, None] * np.eye(p) - T / c[:, None, None]
    if left:
        A = np.swapaxes(A, 1, 2)
    out = np.empty((s.size, n, p))
    # c (sI - T)^{-1} -> I as s -> inf
    out[~fin] = rhs if scaled else 0.0
    x = np.broadcast_to(rhs, (c.size, p))[..., None]
    try:
        for k in range(n):
            x = np.linalg.solve(A, x)
            with np.errstate(over="ignore"):
                out[fin, k, :] = x[..., 0] if scaled else x[..., 0] / c[:, None] ** (k + 1)
    except np.linalg.LinAlgError as exc:
        raise NumericError("sI - T is singular for some shift") from exc
    return out


def resolvent_scale(T, s):
    """Scale factors ``|s| + ||T||_inf`` used by ``resolvent_powers(scaled=True)``."""
    T = np.asarray(T, dtype=float)
    return np.abs(np.asarray(s, dtype=float)) + max(np.abs(T).sum(axis=1).max(), np.finfo(float).tiny)


def _van_loan_block(T, t, pi):
    T = _as_square(T, "T")
    p = T.shape[0]
    t = np.asarray(t, dtype=float).ravel()
    pi = np.asarray(pi, dtype=float).ravel()
    if t.size != p or pi.size != p:
        raise DimensionError(f"t and pi must have length {p}")
    B = np.zeros((2 * p, 2 * p))
    B[:p, :p] = T
    B[:p, p:] = np.outer(t, pi)
    B[p:, p:] = T
    return B, p


def van_loan_conv(T, t, pi, z):
    """Return ``exp(T z)`` and ``J(z) = int_0^z exp(T(z-u)) t pi exp(T u) du``.

    Both come from the exponential of ``[[T, t pi], [0, T]] * z``: the
    diagonal block is ``exp(T z)`` and the upper-right block is ``J(z)``.
    """
    B, p = _van_loan_block(T, t, pi)
    z = float(z)
    if not np.isfinite(z) or z < 0:
        raise DomainError(f"z must be finite and non-negative, got {z}")
    E = scipy.linalg.expm(B * z)
    return E[:p, :p], E[:p, p:]


def van_loan_conv_batch(T, t, pi, z):
    """Vectorised :func:`van_loan_conv` over nodes ``z``; arrays of shape (n, p, p)."""
    B, p = _van_loan_block(T, t, pi)
    z = np.asarray(z, dtype=float).ravel()
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise DomainError("nodes must be finite and non-negative")
    E = scipy.linalg.expm(z[:, None, None] * B[None, :, :])
    return E[:, :p, :p], E[:, :p, p:]


def _numerical_rank(A, tol):
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def dominant_eigen_structure(T, tol=1e-8):
    """Largest real eigenvalue of ``T`` and the size of its largest Jordan block.

    Eigenvalues within ``sqrt(tol) * ||T||`` of the dominant one are treated
    as one numerical cluster, since a defective eigenvalue of multiplicity
    ``m`` is perturbed by roughly ``eps**(1/m)`` under floating point. The
    block size is the smallest power ``m`` at which the nullity of
    ``(T - lam I)^m`` stops growing, with singular values below
    ``tol * sigma_max`` counted as zero.

    Returns
    -------
    eigenvalue : float
    block_size : int

    Raises
    ------
    AmbiguityError
        If the cluster size and the detected null-space dimension disagree,
        so no block size can be asserted.
    """
    T = _as_square(T, "T")
    if tol <= 0:
        raise DomainError("tol must be positive")
    p = T.shape[0]
    ev = np.linalg.eigvals(T)
    scale = max(np.linalg.norm(T, 2), 1e-300)
    lead = ev[np.argmax(ev.real)]
    cluster = ev[np.abs(ev - lead) <= np.sqrt(tol) * scale]
    lam = float(np.mean(cluster.real))
    mult = cluster.size
    shifted = T - lam * np.eye(p)
    nullity = [0]
    P = np.eye(p)
    for _ in range(mult + 1):
        P = P @ shifted
        nullity.append(p - _numerical_rank(P, tol))
        if nullity[-1] == nullity[-2]:
            break
    k = len(nullity) - 2
    if k < 1 or nullity[k] != mult:
        raise AmbiguityError(
            f"eigenvalue cluster of size {mult} near {lam:.6g} has null-space "
            f"dimensions {nullity[1:]}; Jordan block size undetermined",
            candidates=range(1, mult + 1),
        )
    return lam, k

"""Dense real-matrix numerics used by every other module.

Spectra, Lyapunov and Riccati solves, H2/Hinf system norms, gramians and
balanced truncation, all at desk scale (n up to a few hundred) with dense
direct methods. Every function is pure; nothing here keeps state.

Sign conventions, fixed once and used everywhere:

* ``solve_lyapunov(a, q)`` returns the X with  a' X + X a + q = 0.
* ``solve_care(a, b, q, r)`` returns the stabilizing P of
  a' P + P a - P b r^-1 b' P + q = 0.
* ``lqr_gain`` returns K with u = +K x, so the closed loop is a + b K.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NumericsError, StabilityError, SynthesisError

__all__ = [
    "StateSpace",
    "GramianPair",
    "HurwitzResult",
    "as_matrix",
    "is_hurwitz",
    "solve_lyapunov",
    "solve_care",
    "lqr_gain",
    "h2_norm",
    "hinf_norm",
    "gramians",
    "hankel_singular_values",
    "balanced_truncation",
    "ic_response_l2",
    "ic_response_l2_sup",
]


def as_matrix(m, name="matrix"):
    """Coerce to a 2-D float array and reject non-finite entries."""
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


def _square(m, name):
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got {a.shape}")
    return a


def _symmetric(m, name, tol=1e-8):
    a = _square(m, name)
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class StateSpace:
    """Continuous-time state-space model (a, b, c, d).

    ``d`` defaults to the zero matrix. Matrices are validated for finite
    entries and dimension compatibility at construction.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray = None

    def __post_init__(self):
        a = _square(self.a, "a")
        b = as_matrix(self.b, "b")
        c = as_matrix(self.c, "c")
        if b.shape[0] != a.shape[0]:
            raise DimensionError(f"b has {b.shape[0]} rows, expected {a.shape[0]}")
        if c.shape[1] != a.shape[0]:
            raise DimensionError(f"c has {c.shape[1]} cols, expected {a.shape[0]}")
        d = self.d
        if d is None:
            d = np.zeros((c.shape[0], b.shape[1]))
        d = as_matrix(d, "d")
        if d.shape != (c.shape[0], b.shape[1]):
            raise DimensionError(f"d has shape {d.shape}, expected {(c.shape[0], b.shape[1])}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.b.shape[1]

    @property
    def p(self):
        return self.c.shape[0]

    def transfer(self, s):
        """Evaluate c (sI - a)^-1 b + d at a complex frequency point."""
        if self.n == 0:
            return self.d.astype(complex)
        return self.c @ np.linalg.solve(s * np.eye(self.n) - self.a, self.b) + self.d


@dataclass(frozen=True)
class GramianPair:
    """Controllability and observability gramians of a stable realization."""

    controllability: np.ndarray
    observability: np.ndarray

    def __post_init__(self):
        for name in ("controllability", "observability"):
            w = _square(getattr(self, name), name)
            scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
            if w.size and np.max(np.abs(w - w.T)) > 1e-10 * scale:
                raise ValueError(f"{name} gramian is not symmetric")
            w = 0.5 * (w + w.T)
            if w.size and np.min(np.linalg.eigvalsh(w)) < -1e-10 * scale:
                raise ValueError(f"{name} gramian has a significantly negative eigenvalue")
            object.__setattr__(self, name, w)


@dataclass(frozen=True)
class HurwitzResult:
    """Stability verdict plus the spectral abscissa for diagnostics."""

    stable: bool
    abscissa: float

    def __bool__(self):
        return self.stable


def is_hurwitz(a) -> HurwitzResult:
    """Test whether all eigenvalues of ``a`` have negative real part.

    Returns a truthy/falsy result carrying the spectral abscissa
    (the largest real part).
    """
    a = _square(a, "a")
    if a.shape[0] == 0:
        return HurwitzResult(True, -np.inf)
    abscissa = float(np.max(np.linalg.eigvals(a).real))
    return HurwitzResult(abscissa < 0.0, abscissa)


def solve_lyapunov(a, q, residual_tol=1e-8):
    """Solve a' X + X a + q = 0 for symmetric X.

    Parameters
    ----------
    a : array_like
        Square Hurwitz matrix.
    q : array_like
        Symmetric right-hand side.

    Returns
    -------
    X : ndarray
        Symmetric solution with Frobenius residual at most
        ``residual_tol * (1 + ||q||_F)``.
    """
    a = _square(a, "a")
    q = _symmetric(q, "q")
    if a.shape != q.shape:
        raise DimensionError(f"a and q shapes differ: {a.shape} vs {q.shape}")
    hw = is_hurwitz(a)
    if not hw:
        raise StabilityError(
            f"a is not Hurwitz (abscissa {hw.abscissa:.3g}); Lyapunov solution not unique")
    # scipy solves A X + X A^H = Q (Bartels-Stewart); transpose for our convention
    x = sla.solve_continuous_lyapunov(a.T, -q)
    x = 0.5 * (x + x.T)
    res = np.linalg.norm(a.T @ x + x @ a + q, "fro")
    if res > residual_tol * (1.0 + np.linalg.norm(q, "fro")):
        raise NumericsError(f"Lyapunov residual {res:.3g} exceeds tolerance")
    return x


def _pbh_stabilizable(a, b, tol=1e-8):
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real >= -tol:
            m = np.hstack([a - lam * np.eye(n), b.astype(complex)])
            if np.linalg.matrix_rank(m, tol=1e-9 * max(1.0, np.linalg.norm(m))) < n:
                return False
    return True


def solve_care(a, b, q, r, residual_tol=1e-8):
    """Stabilizing solution P of a' P + P a - P b r^-1 b' P + q = 0.

    Requires (a, b) stabilizable, q symmetric PSD and r symmetric PD.
    The returned P is symmetric PSD and a - b r^-1 b' P is Hurwitz.
    """
    a = _square(a, "a")
    b = as_matrix(b, "b")
    q = _symmetric(q, "q")
    r = _symmetric(r, "r")
    n, m = b.shape
    if a.shape[0] != n:
        raise DimensionError("a and b row counts differ")
    if q.shape[0] != n or r.shape[0] != m:
        raise DimensionError("weight dimensions incompatible with (a, b)")
    if np.min(np.linalg.eigvalsh(r)) <= 0:
        raise SynthesisError("r must be positive definite")
    if np.min(np.linalg.eigvalsh(q)) < -1e-10 * max(1.0, np.linalg.norm(q)):
        raise SynthesisError("q must be positive semidefinite")
    if not _pbh_stabilizable(a, b):
        raise SynthesisError("(a, b) is not stabilizable")
    try:
        p = sla.solve_continuous_are(a, b, q, r)
    except np.linalg.LinAlgError as exc:
        raise SynthesisError(f"Riccati solve failed: {exc}") from exc
    p = 0.5 * (p + p.T)
    cl = a - b @ np.linalg.solve(r, b.T @ p)
    if not is_hurwitz(cl):
        raise SynthesisError("Riccati solution is not stabilizing")
    res = np.linalg.norm(a.T @ p + p @ a - p @ b @ np.linalg.solve(r, b.T @ p) + q, "fro")
    if res > residual_tol * (1.0 + np.linalg.norm(p, "fro") ** 2 + np.linalg.norm(q, "fro")):
        raise NumericsError(f"CARE residual {res:.3g} exceeds tolerance")
    return p


def lqr_gain(a, b, q, r):
    """LQR feedback gain K = -r^-1 b' P with u = +K x; a + b K is Hurwitz."""
    p = solve_care(a, b, q, r)
    b = as_matrix(b, "b")
    r = _symmetric(r, "r")
    return -np.linalg.solve(r, b.T @ p)


def gramians(sys: StateSpace) -> GramianPair:
    """Controllability and observability gramians of a stable realization."""
    hw = is_hurwitz(sys.a)
    if not hw:
        raise StabilityError(f"gramians undefined: a not Hurwitz (abscissa {hw.abscissa:.3g})")
    wc = solve_lyapunov(sys.a.T, sys.b @ sys.b.T)
    wo = solve_lyapunov(sys.a, sys.c.T @ sys.c)
    return GramianPair(wc, wo)


def h2_norm(sys: StateSpace):
    """H2 norm sqrt(trace(c Wc c')) of a strictly proper stable system."""
    if sys.d.size and np.any(sys.d != 0.0):
        raise ValueError("H2 norm undefined for nonzero feedthrough d")
    hw = is_hurwitz(sys.a)
    if not hw:
        raise StabilityError(f"H2 norm undefined: a not Hurwitz (abscissa {hw.abscissa:.3g})")
    wc = solve_lyapunov(sys.a.T, sys.b @ sys.b.T)
    val = float(np.trace(sys.c @ wc @ sys.c.T))
    return float(np.sqrt(max(val, 0.0)))


def _factor_psd(w):
    # symmetric PSD factor W = F F' with F of numerical-rank many columns
    vals, vecs = np.linalg.eigh(0.5 * (w + w.T))
    vals = np.clip(vals, 0.0, None)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > max(vals[0], 0.0) * 1e-15 if vals.size else vals > 0
    return vecs[:, keep] * np.sqrt(vals[keep])


def hankel_singular_values(sys: StateSpace):
    """Hankel singular values in descending order (zero-padded to n)."""
    g = gramians(sys)
    lc = _factor_psd(g.controllability)
    lo = _factor_psd(g.observability)
    sv = np.linalg.svd(lo.T @ lc, compute_uv=False) if lc.size and lo.size else np.array([])
    out = np.zeros(sys.n)
    out[: sv.size] = sv
    return out


def _hamiltonian_has_imaginary_eig(sys, gamma):
    a, b, c, d = sys.a, sys.b, sys.c, sys.d
    m = b.shape[1]
    r = gamma ** 2 * np.eye(m) - d.T @ d
    rinv = np.linalg.inv(r)
    abar = a + b @ rinv @ d.T @ c
    h = np.block([
        [abar, b @ rinv @ b.T],
        [-c.T @ (np.eye(c.shape[0]) + d @ rinv @ d.T) @ c, -abar.T],
    ])
    eigs = np.linalg.eigvals(h)
    return bool(np.any(np.abs(eigs.real) <= 1e-8 * np.maximum(1.0, np.abs(eigs))))


def hinf_norm(sys: StateSpace, tol=1e-6):
    """Hinf norm by bisection on the bounded-real Hamiltonian test.

    ``gamma`` is an upper bound iff the associated Hamiltonian matrix has no
    imaginary-axis eigenvalues; the result is within ``tol`` of the true norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    hw = is_hurwitz(sys.a)
    if not hw:
        raise StabilityError(f"Hinf norm undefined: a not Hurwitz (abscissa {hw.abscissa:.3g})")
    sigma_d = float(np.linalg.svd(sys.d, compute_uv=False)[0]) if sys.d.size else 0.0
    if (sys.n == 0 or not sys.b.size or not sys.c.size
            or not np.any(sys.b) or not np.any(sys.c)):
        return sigma_d
    # lower bound from a coarse frequency sample, upper from twice the Hankel sum
    lo = sigma_d
    for w in np.concatenate(([0.0], np.logspace(-3, 3, 25))):
        lo = max(lo, float(np.linalg.svd(sys.transfer(1j * w), compute_uv=False)[0]))
    hi = sigma_d + 2.0 * float(np.sum(hankel_singular_values(sys))) + tol
    if hi <= lo:
        hi = lo * (1.0 + 1e-6) + tol
    while _hamiltonian_has_imaginary_eig(sys, hi):
        hi = 2.0 * hi + tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _hamiltonian_has_imaginary_eig(sys, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class BalancedTruncation(NamedTuple):
    reduced: StateSpace
    t1: np.ndarray
    t1dag: np.ndarray
    hankel_values: np.ndarray


def balanced_truncation(sys: StateSpace, r: int) -> BalancedTruncation:
    """Square-root balanced truncation to order ``r``.

    Returns the reduced realization (t1dag a t1, t1dag b, c t1, d), the right
    projector t1 (n x r) and left projector t1dag (r x n) with
    t1dag t1 = I_r, plus all Hankel singular values in descending order.
    """
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise DimensionError(f"reduced order must be a positive integer, got {r}")
    if r > sys.n:
        raise DimensionError(f"reduced order {r} exceeds state dimension {sys.n}")
    hw = is_hurwitz(sys.a)
    if not hw:
        raise StabilityError(f"balanced truncation requires Hurwitz a (abscissa {hw.abscissa:.3g})")
    g = gramians(sys)
    lc = _factor_psd(g.controllability)
    lo = _factor_psd(g.observability)
    u, sv, vt = np.linalg.svd(lo.T @ lc)
    if sv.size < r or sv[r - 1] <= sv[0] * 1e-13:
        raise NumericsError(
            f"Hankel value {r} is numerically zero; reduce the requested order")
    s_inv_sqrt = 1.0 / np.sqrt(sv[:r])
    t1 = lc @ vt[:r].T * s_inv_sqrt
    t1dag = (u[:, :r] * s_inv_sqrt).T @ lo.T
    reduced = StateSpace(t1dag @ sys.a @ t1, t1dag @ sys.b, sys.c @ t1, sys.d)
    hsv = np.zeros(sys.n)
    hsv[: sv.size] = sv
    return BalancedTruncation(reduced, t1, t1dag, hsv)


def ic_response_l2(a, c, x0):
    """L2 norm of t -> c exp(a t) x0 via the observability gramian."""
    a = _square(a, "a")
    c = as_matrix(c, "c")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != a.shape[0]:
        raise DimensionError(f"x0 has length {x0.size}, expected {a.shape[0]}")
    x = solve_lyapunov(a, c.T @ c)
    return float(np.sqrt(max(x0 @ x @ x0, 0.0)))


def ic_response_l2_sup(a, c):
    """sup over unit-norm x0 of ic_response_l2(a, c, x0) = sqrt(lambda_max(X))."""
    a = _square(a, "a")
    c = as_matrix(c, "c")
    x = solve_lyapunov(a, c.T @ c)
    return float(np.sqrt(max(np.max(np.linalg.eigvalsh(x)), 0.0)))

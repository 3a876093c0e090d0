"""Small dense linear algebra used by the closed-form formulas.

All routines take and return plain ``numpy`` arrays. Dimensions are small
(d <= ~10) throughout, so clarity wins over asymptotic cost.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

DEFAULT_RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-12


class NotHurwitzError(ValueError):
    """Raised when a stable (Hurwitz) matrix is required but not supplied."""


class PseudoInverse(NamedTuple):
    pinv: np.ndarray
    projector: np.ndarray
    rank: int


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _square(a, name: str = "A") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def check_rank_tol(tol: float) -> float:
    if not (0.0 < tol < 1.0):
        raise ValueError(f"rank tolerance must lie in (0, 1), got {tol}")
    return float(tol)


def is_symmetric(m: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    return bool(np.all(np.abs(m - m.T) <= tol * (1.0 + np.abs(m))))


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(t A)`` (scaling and squaring, Pade core)."""
    A = _square(A)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return scipy.linalg.expm(t * A)


def spectral_abscissa(A) -> float:
    """Largest real part over the eigenvalues of ``A``."""
    A = _square(A)
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise np.linalg.LinAlgError(f"eigenvalue solver failed: {exc}") from exc
    if not np.all(np.isfinite(eig)):
        raise np.linalg.LinAlgError("eigenvalue solver returned non-finite values")
    return float(np.max(eig.real))


def is_hurwitz(A) -> bool:
    return spectral_abscissa(A) < 0.0


def solve_lyapunov(A, C, transpose: bool = False) -> np.ndarray:
    """Solve ``A P + P A^T + C = 0`` for symmetric ``P``.

    With ``transpose=True`` the transposed form ``A^T P + P A + C = 0`` is
    solved instead. The solver vectorizes the equation with Kronecker
    products, which is fine for the small dimensions used here.
    """
    A = _square(A)
    C = _square(C, "C")
    if C.shape != A.shape:
        raise ValueError(f"dimension mismatch: A {A.shape}, C {C.shape}")
    if not is_symmetric(C, 1e-10):
        raise ValueError("C must be symmetric")
    if not is_hurwitz(A):
        raise NotHurwitzError(
            f"A is not Hurwitz (spectral abscissa {spectral_abscissa(A):.3g})"
        )
    M = A.T if transpose else A
    d = M.shape[0]
    eye = np.eye(d)
    # vec is column-major: vec(M P) = (I kron M) vec P, vec(P M^T) = (M kron I) vec P
    K = np.kron(eye, M) + np.kron(M, eye)
    vec_p = np.linalg.solve(K, -C.reshape(-1, order="F"))
    return symmetrize(vec_p.reshape(d, d, order="F"))


def lyapunov_residual(A, P, C, transpose: bool = False) -> float:
    A = as_matrix(A)
    M = A.T if transpose else A
    return float(np.linalg.norm(M @ P + P @ M.T + C))


def covariance_horizon(A, B, t: float, rtol: float = 1e-12, atol: float = 1e-15) -> np.ndarray:
    """Covariance ``P_t`` of ``dX = A X dt + B dW`` started at a point.

    Integrates ``dP/dt = A P + P A^T + B B^T`` from ``P_0 = 0`` with an
    adaptive explicit Runge-Kutta scheme. ``A`` need not be stable.
    """
    A = _square(A)
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: A {A.shape}, B {B.shape}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    d = A.shape[0]
    if t == 0:
        return np.zeros((d, d))
    BBt = B @ B.T

    def rhs(_, y):
        P = y.reshape(d, d)
        return (A @ P + P @ A.T + BBt).ravel()

    sol = solve_ivp(rhs, (0.0, float(t)), np.zeros(d * d), method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"covariance ODE failed: {sol.message}")
    return symmetrize(sol.y[:, -1].reshape(d, d))


def psd_factor(P, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Square factor ``L`` with ``L L^T = P`` for symmetric PSD ``P``.

    Eigenvalue based, so rank-deficient covariances are handled.
    """
    P = symmetrize(_square(P, "P"))
    w, V = np.linalg.eigh(P)
    top = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    w = np.where(w > rank_tol * top, w, 0.0)
    return V * np.sqrt(w)


def pseudo_inverse(Q, tol: float = DEFAULT_RANK_TOL) -> PseudoInverse:
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Eigenvalues with magnitude below ``tol * max|eigenvalue|`` are treated as
    zero. Returns the pseudoinverse, the range projector ``Q Q^+`` and the
    numerical rank.
    """
    Q = _square(Q, "Q")
    check_rank_tol(tol)
    if not is_symmetric(Q):
        raise ValueError("Q must be symmetric")
    Q = symmetrize(Q)
    w, V = np.linalg.eigh(Q)
    top = float(np.max(np.abs(w))) if w.size else 0.0
    keep = np.abs(w) > tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    Vk = V[:, keep]
    pinv = symmetrize((Vk / w[keep]) @ Vk.T)
    projector = symmetrize(Vk @ Vk.T)
    return PseudoInverse(pinv, projector, int(keep.sum()))


def controllability_gramian(A, B, tol: float = DEFAULT_RANK_TOL, standard: bool = False):
    """Kalman-type matrix ``D = sum_i (A^T)^i B B^T A^i`` and a nonsingularity flag.

    ``standard=True`` uses the textbook orientation ``sum_i A^i B B^T (A^T)^i``.
    """
    A = _square(A)
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: A {A.shape}, B {B.shape}")
    check_rank_tol(tol)
    d = A.shape[0]
    BBt = B @ B.T
    M = A.T if standard else A
    D = np.zeros((d, d))
    Ai = np.eye(d)
    for _ in range(d):
        D += Ai.T @ BBt @ Ai
        Ai = Ai @ M
    D = symmetrize(D)
    s = np.linalg.svd(D, compute_uv=False)
    nonsingular = bool(s[0] > 0 and s[-1] > tol * s[0])
    return D, nonsingular

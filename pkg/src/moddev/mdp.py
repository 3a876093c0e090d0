"""Rate functions, empirical tail curves, Gaussian oracles and drift bounds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.special import log_ndtr

from . import linalg
from .models import DiffusionScenario, PASS, FAIL

Array = np.ndarray

NEG_INF_MARKER = -math.inf


def speed(t, kappa: float):
    """``rho(t) = t^{-(2 kappa - 1)}``."""
    return np.asarray(t, dtype=float) ** (-(2.0 * kappa - 1.0))


# --------------------------------------------------------------------------
# rate functions


@dataclass(frozen=True)
class RateFunction:
    Q: Array
    pinv: Array
    projector: Array
    rank: int
    rank_tol: float = linalg.DEFAULT_RANK_TOL
    tau: float = 1e-8

    @classmethod
    def from_Q(cls, Q, rank_tol: float = linalg.DEFAULT_RANK_TOL, tau: float = 1e-8) -> "RateFunction":
        Q = linalg.as_matrix(Q, "Q")
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        if not linalg.is_symmetric(Q, 1e-10):
            raise ValueError("Q must be symmetric")
        Q = linalg.symmetrize(Q)
        if np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        pi = linalg.pseudo_inverse(Q, rank_tol)
        return cls(Q, pi.pinv, pi.projector, pi.rank, rank_tol, tau)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def in_range(self, Y) -> bool:
        Y = self._vec(Y)
        off = Y - self.projector @ Y
        return bool(np.linalg.norm(off) <= self.tau * max(1.0, np.linalg.norm(Y)))

    def _vec(self, Y) -> Array:
        Y = np.asarray(Y, dtype=float).reshape(-1)
        if Y.size != self.dim:
            raise ValueError(f"vector of length {Y.size} does not match Q of size {self.dim}")
        return Y


def _as_rate(rf) -> RateFunction:
    return rf if isinstance(rf, RateFunction) else RateFunction.from_Q(rf)


def rate_J(rf, Y) -> float:
    """``J(Y) = <Y, Q^+ Y> / 2`` on the range of ``Q`` and ``+inf`` off it."""
    rf = _as_rate(rf)
    Y = rf._vec(Y)
    if not rf.in_range(Y):
        return math.inf
    return float(0.5 * Y @ rf.pinv @ Y)


def rate_J_regularized(rf, Y, gamma: float) -> float:
    """``J_gamma(Y) = <Y, (Q + gamma I)^{-1} Y> / 2``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    rf = _as_rate(rf)
    Y = rf._vec(Y)
    Qg = rf.Q + gamma * np.eye(rf.dim)
    return float(0.5 * Y @ np.linalg.solve(Qg, Y))


def conjugate_gradient(Amat: Array, b: Array, tol: float = 1e-10, max_iter: int = None) -> Array:
    """Plain CG for a symmetric positive definite system; relative residual ``tol``."""
    n = b.size
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    target = tol * max(np.linalg.norm(b), 1e-300)
    for _ in range(max_iter or 10 * n + 10):
        if math.sqrt(rr) <= target:
            break
        Ap = Amat @ p
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def _contract_closed(rf: RateFunction, T: Array, y: Array) -> float:
    inner = RateFunction.from_Q(linalg.symmetrize(T @ rf.Q @ T.T), rf.rank_tol, rf.tau)
    return rate_J(inner, y)


def _contract_fiber(rf: RateFunction, T: Array, y: Array, tol: float = 1e-10) -> float:
    """Minimize ``J`` over ``{Y in range(Q): T Y = y}`` by CG on the fiber's null space."""
    w, V = np.linalg.eigh(rf.Q)
    keep = np.abs(w) > rf.rank_tol * max(np.abs(w).max(), 0.0)
    if not keep.any():
        return 0.0 if np.linalg.norm(y) <= rf.tau else math.inf
    R, lam = V[:, keep], w[keep]
    TR = T @ R
    c0, *_ = np.linalg.lstsq(TR, y, rcond=None)
    if np.linalg.norm(TR @ c0 - y) > rf.tau * max(1.0, np.linalg.norm(y)):
        return math.inf
    Z = null_space(TR)
    G = np.diag(1.0 / lam)
    if Z.shape[1]:
        # stationarity of (c0 + Z w)^T G (c0 + Z w) in w
        wopt = conjugate_gradient(Z.T @ G @ Z, -(Z.T @ G @ c0), tol=tol)
        c = c0 + Z @ wopt
    else:
        c = c0
    return float(0.5 * c @ G @ c)


def contract_rate(rf, T, y, method: str = "auto") -> float:
    """Rate of the image family ``T S``: ``inf {J(Y) : T Y = y}``.

    ``method`` is ``"closed"`` (pseudoinverse of ``T Q T^T``), ``"fiber"``
    (numerical minimization over the fiber) or ``"auto"``, which uses the
    closed form and falls back to the fiber minimization if it is not finite
    while the fiber is.
    """
    rf = _as_rate(rf)
    T = linalg.as_matrix(T, "T")
    if T.shape[1] != rf.dim:
        raise ValueError(f"T has {T.shape[1]} columns, Q has size {rf.dim}")
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != T.shape[0]:
        raise ValueError("y does not match the rows of T")
    if method == "closed":
        return _contract_closed(rf, T, y)
    if method == "fiber":
        return _contract_fiber(rf, T, y)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    value = _contract_closed(rf, T, y)
    if math.isinf(value):
        return _contract_fiber(rf, T, y)
    return value


def direction_optimized_level(Q, delta: float) -> float:
    """``-inf_{|y| >= delta} J(y) = -delta^2 / (2 lambda_max(Q))``."""
    lam = float(np.linalg.eigvalsh(linalg.symmetrize(linalg.as_matrix(Q, "Q"))).max())
    if delta == 0:
        return 0.0
    if lam <= 0:
        return -math.inf
    return -delta * delta / (2.0 * lam)


# --------------------------------------------------------------------------
# empirical curves


CURVE_COLUMNS = ("t", "k", "N", "p_hat", "rho_log_p", "se_log", "clamped", "reference")


@dataclass
class MdpCurve:
    """Monte-Carlo estimates of ``rho(t) log P(event_t)`` over checkpoints.

    ``se_log`` is the binomial delta-method standard error of ``rho(t) log p_hat``.
    """

    t: Array
    k: Array
    N: Array
    p_hat: Array
    rho_log_p: Array
    se_log: Array
    clamped: Array
    reference: float
    kappa: float
    label: str = ""
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.t)):
            yield (float(self.t[i]), int(self.k[i]), int(self.N[i]), float(self.p_hat[i]),
                   float(self.rho_log_p[i]), float(self.se_log[i]), bool(self.clamped[i]),
                   float(self.reference))

    def write_csv(self, fh, header_comment: Optional[str] = None) -> None:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def is_decreasing(self) -> bool:
        """Each successive value is lower, or the row is clamped (no exceedances)."""
        v = self.rho_log_p
        return all(self.clamped[i + 1] or v[i + 1] < v[i] for i in range(len(v) - 1))

    def as_dict(self) -> dict:
        return {"label": self.label, "kappa": self.kappa, "reference": self.reference,
                "rows": [dict(zip(CURVE_COLUMNS, r)) for r in self.rows()], **self.meta}


def tail_curve(times, exceed: Array, kappa: float, reference: float = NEG_INF_MARKER,
               label: str = "", valid: Optional[Array] = None) -> MdpCurve:
    """Build a curve from a boolean exceedance table of shape ``(paths, checkpoints)``.

    Paths flagged invalid (``valid`` false) are left out of both counts.
    """
    exceed = np.asarray(exceed, dtype=bool)
    if exceed.ndim != 2 or exceed.shape[0] == 0:
        raise ValueError("empty ensemble")
    times = np.asarray(times, dtype=float)
    if valid is None:
        valid = np.ones_like(exceed)
    k = np.sum(exceed & valid, axis=0)
    N = np.sum(valid, axis=0)
    if np.any(N == 0):
        raise ValueError("no valid paths at some checkpoint")
    clamped = k == 0
    p = np.where(clamped, 0.5 / N, k / N)
    rho = speed(times, kappa)
    se = rho * np.sqrt((1.0 - p) / (N * p))
    return MdpCurve(times, k, N, p, rho * np.log(p), se, clamped, float(reference), kappa, label)


def _norms(v: Array) -> Array:
    return np.sqrt(np.sum(v * v, axis=-1))


SELECTORS = ("norm_S", "corrector", "bracket", "lyapunov_integral")


def empirical_rate_curve(e, statistic: str, delta: float, Q=None) -> MdpCurve:
    """Tail curve of an ensemble.

    ``statistic`` selects the event at level ``delta``:

    * ``norm_S``: ``|S_t| > delta``; reference ``-delta^2 / (2 lambda_max(Q))``
      when ``Q`` is given.
    * ``corrector``: ``|U(x) - U(X_t)| > t^kappa delta``.
    * ``bracket``: ``|<M>_t - t Q| > t delta`` (Frobenius norm; needs ``Q``).
    * ``lyapunov_integral``: ``int_0^t V^ell ds > t delta``.

    The last three carry the divergence marker ``-inf`` as reference.
    """
    if e.n_paths == 0:
        raise ValueError("empty ensemble")
    t = e.times
    ref = NEG_INF_MARKER
    if statistic == "norm_S":
        stat = _norms(e.S)
        thr = np.full_like(t, delta)
        if Q is not None:
            ref = direction_optimized_level(Q, delta)
    elif statistic == "corrector":
        stat = _norms(e.corrector_term)
        thr = np.full_like(t, delta)
    elif statistic == "bracket":
        if Q is None:
            raise ValueError("the bracket statistic needs Q")
        if e.bracket is None:
            raise ValueError("ensemble was simulated without the quadratic variation")
        Qm = linalg.as_matrix(Q, "Q")
        dev = e.bracket - t[None, :, None, None] * Qm[None, None]
        stat = np.sqrt(np.sum(dev * dev, axis=(-1, -2)))
        thr = t * delta
    elif statistic == "lyapunov_integral":
        if e.V_integral is None:
            raise ValueError("ensemble has no Lyapunov functional attached")
        stat = e.V_integral
        thr = t * delta
    else:
        raise ValueError(f"unknown statistic {statistic!r}; choose from {SELECTORS}")
    valid = np.isfinite(stat)
    with np.errstate(invalid="ignore"):
        exceed = stat > thr[None, :]
    return tail_curve(t, exceed, e.kappa, ref, label=f"{e.label}:{statistic}:{delta:g}", valid=valid)


# --------------------------------------------------------------------------
# exact Gaussian oracle


def integrated_variance(A, B, C, t: float, stationary: bool = True, x0=None) -> tuple:
    """Mean and variance of ``int_0^t C X_s ds`` for ``dX = A X dt + B dW``.

    Stationary start uses ``v(t) = 2 int_0^t (t - r) C e^{rA} P C^T dr`` in
    closed form, ``int_0^t (t - r) e^{rA} dr = A^{-2}(e^{tA} - I) - t A^{-1}``.
    A point start integrates the moment ODE of the augmented state
    ``(X, int C X)``.
    """
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape != (1, A.shape[0]):
        raise ValueError("C must be a single row matching the state dimension")
    if not linalg.is_hurwitz(A):
        raise linalg.NotHurwitzError("A must be Hurwitz")
    d = A.shape[0]
    if t < 0:
        raise ValueError("t must be nonnegative")
    if stationary:
        P = linalg.solve_lyapunov(A, B @ B.T)
        Ainv = np.linalg.inv(A)
        kern = Ainv @ Ainv @ (linalg.mat_exp(A, t) - np.eye(d)) - t * Ainv
        # the (u, s) and (s, u) halves of the double integral
        v = (C @ (kern @ P + P @ kern.T) @ C.T).item()
        return 0.0, v
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d)
    Aa = np.zeros((d + 1, d + 1))
    Aa[:d, :d] = A
    Aa[d, :d] = C[0]
    Ba = np.vstack([B, np.zeros((1, B.shape[1]))])
    Pa = linalg.covariance_horizon(Aa, Ba, t)
    Ainv = np.linalg.inv(A)
    mean = (C @ Ainv @ (linalg.mat_exp(A, t) - np.eye(d)) @ x0).item()
    return mean, float(Pa[d, d])


def gaussian_exact_rate(A, B, C, kappa: float, delta: float, t: float,
                        stationary: bool = True, x0=None) -> float:
    """``rho(t) log P(|t^{-kappa} int_0^t C X ds| > delta)`` for a linear system."""
    if not 0.5 < kappa < 1:
        raise ValueError("kappa must lie in (1/2, 1)")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    m, v = integrated_variance(A, B, C, t, stationary, x0)
    if delta == 0:
        return 0.0
    if v <= 0:
        raise ValueError("integrated variance vanishes")
    a = delta * t ** kappa
    sd = math.sqrt(v)
    logp = np.logaddexp(log_ndtr(-(a - m) / sd), log_ndtr(-(a + m) / sd))
    return float(speed(t, kappa) * logp)


# --------------------------------------------------------------------------
# deterministic bounds from the drift condition and the martingale argument


def bound_A1(c: float, frak_c: float, bold_c: float, V0: float, eps: float, n: float,
             kappa: float, t: float) -> tuple:
    """Upper bounds for the tail and the integral events of the drift argument.

    Returns ``(bound_tail, bound_integral)``:
    ``-(c/C)[t eps - V0 / t^{2k-1}] + t^{2(1-k)} (c/C)(frak_c + c)`` and
    ``(c/C) V0 / t^{2k-1} + t^{2(1-k)} (c/C)(frak_c + c) - t^{2(1-k)} (c^2 / 2C) n``
    with ``C = bold_c``.
    """
    if min(c, bold_c) <= 0 or frak_c < 0 or V0 < 0 or eps <= 0 or n <= 0:
        raise ValueError("constants must be positive")
    if not 0.5 < kappa < 1:
        raise ValueError("kappa must lie in (1/2, 1)")
    r = c / bold_c
    grow = t ** (2 * (1 - kappa))
    shrink = t ** (2 * kappa - 1)
    tail = -r * (t * eps - V0 / shrink) + grow * r * (frak_c + c)
    integral = r * V0 / shrink + grow * r * (frak_c + c) - grow * (c * c / (2 * bold_c)) * n
    return float(tail), float(integral)


def bound_A2(eps: float, n: float, kappa: float, t: float) -> float:
    """``-t^{2(1-kappa)} eps^2 / (2n)`` for a martingale with bracket at most ``t n``."""
    if eps <= 0 or n <= 0:
        raise ValueError("eps and n must be positive")
    if not 0.5 < kappa < 1:
        raise ValueError("kappa must lie in (1/2, 1)")
    return float(-t ** (2 * (1 - kappa)) * eps * eps / (2 * n))


@dataclass
class DriftFit:
    ell: float
    c: float
    frak_c: float
    bold_c: float
    r: float
    verdict: str
    message: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def drift_diagnostics(s: DiffusionScenario, V: Callable, ell: Optional[float] = None,
                      r: Optional[float] = None, grid=None, step: float = 1e-4) -> DriftFit:
    """Fit the envelope ``L V <= -c V^ell + frak_c`` and ``grad V a grad V^T <= C (1 + V^r)``.

    ``c`` is the least-squares slope of ``L V`` against ``-V^ell`` and ``frak_c``
    the smallest constant that makes the envelope hold on the grid. When
    ``ell`` is omitted it is read off a log-log fit of ``-L V`` against ``V``
    over the outer half of the grid (rounded when within 0.05 of an integer).
    ``r`` defaults to ``ell``.
    """
    if grid is None:
        grid = np.linspace(-5.0, 5.0, 1001)
    x = np.asarray(grid, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != s.dim:
        raise ValueError("grid does not match the scenario dimension")
    v = np.asarray(V(x), dtype=float).reshape(-1)
    LV = s.generator(lambda z: np.asarray(V(z), dtype=float).reshape(-1, 1), x, step)[:, 0]
    if np.ptp(v) <= 1e-12 * max(1.0, np.abs(v).max()):
        return DriftFit(ell or math.nan, 0.0, math.nan, math.nan, r or math.nan, FAIL,
                        "V is constant on the grid; no decay possible")
    if ell is None:
        big = v >= np.quantile(v, 0.5)
        ok = big & (LV < 0) & (v > 0)
        if ok.sum() < 3:
            return DriftFit(math.nan, 0.0, math.nan, math.nan, math.nan, FAIL,
                            "L V is not negative where V is large")
        ell = float(np.polyfit(np.log(v[ok]), np.log(-LV[ok]), 1)[0])
        if abs(ell - round(ell)) < 0.05:
            ell = float(round(ell))
    r = ell if r is None else r
    if r > ell:
        raise ValueError("need r <= ell")
    feat = v ** ell
    slope, intercept = np.polyfit(feat, LV, 1)
    c = float(-slope)
    if not c > 0:
        return DriftFit(ell, c, math.nan, math.nan, r, FAIL, "fitted c is not positive")
    frak_c = float(np.max(LV + c * feat))
    gV = np.zeros_like(x)
    for i in range(s.dim):
        e = np.zeros(s.dim)
        e[i] = step
        gV[:, i] = (np.asarray(V(x + e)).reshape(-1) - np.asarray(V(x - e)).reshape(-1)) / (2 * step)
    a = s.diffusion_matrix(x)
    bracket = np.einsum("ni,nij,nj->n", gV, a, gV)
    bold_c = float(np.max(bracket / (1.0 + v ** r)))
    return DriftFit(ell, c, max(frak_c, 0.0), bold_c, r, PASS)

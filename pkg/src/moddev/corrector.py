"""Correctors (solutions of the Poisson equation ``L U = -H``) and the covariance ``Q``.

Three constructions are provided, matched to scenario structure:

* ``solve_poisson_1d``: one-dimensional diffusions, tabulated on a grid;
* ``solve_poisson_quadratic``: linear systems with quadratic ``H``;
* ``corrector_linear_gaussian``: linear systems with general ``H``, using the
  Gaussian transition kernel and a time integral of ``E_x H(X_t)``.

``Q`` can be obtained from a corrector (``compute_Q_stationary``), from the
time integral of the stationary autocovariance of ``H``
(``compute_Q_green_kubo``) or, for quadratic ``H``, in closed form.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline
from scipy.integrate import cumulative_simpson, simpson

from . import linalg
from .models import Density1D, DiffusionScenario, invariant_density_1d

Array = np.ndarray

QUADRATIC = "quadratic"
TABULATED = "tabulated1d"
GAUSSIAN = "gaussian_quadrature"
CLOSED_FORM = "closed_form"
AFFINE = "affine"


class Corrector:
    """Corrector ``U`` with vectorized ``value`` ``(n, d) -> (n, q)`` and
    ``grad`` ``(n, d) -> (n, q, d)``."""

    def __init__(self, kind: str, dim: int, obs_dim: int, value: Callable, grad: Callable,
                 data: Optional[dict] = None):
        self.kind = kind
        self.dim = dim
        self.obs_dim = obs_dim
        self._value = value
        self._grad = grad
        self.data = data or {}

    def value(self, x) -> Array:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self._value(x), dtype=float).reshape(x.shape[0], self.obs_dim)

    def grad(self, x) -> Array:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self._grad(x), dtype=float).reshape(x.shape[0], self.obs_dim, self.dim)

    def __add__(self, other: "Corrector") -> "Corrector":
        if (self.dim, self.obs_dim) != (other.dim, other.obs_dim):
            raise ValueError("corrector shapes differ")
        return Corrector(CLOSED_FORM, self.dim, self.obs_dim,
                         lambda x: self.value(x) + other.value(x),
                         lambda x: self.grad(x) + other.grad(x),
                         {"parts": (self.kind, other.kind)})

    def shifted(self, c) -> "Corrector":
        """Same corrector plus a constant (leaves ``grad`` and hence ``Q`` unchanged)."""
        c = np.broadcast_to(np.asarray(c, dtype=float), (self.obs_dim,))
        return Corrector(self.kind, self.dim, self.obs_dim,
                         lambda x: self.value(x) + c, self.grad, dict(self.data))

    def residual(self, s: DiffusionScenario, x) -> Array:
        """``L U + H`` at ``x``; zero for an exact corrector."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == TABULATED:
            g = self.data["grid"]
            d2 = np.gradient(self.data["dU"], g, axis=0)
            d2x = np.stack([np.interp(x[:, 0], g, d2[:, j]) for j in range(self.obs_dim)], axis=1)
            a = s.diffusion_matrix(x)[:, 0, 0]
            b = s.drift(x)[:, 0]
            return 0.5 * a[:, None] * d2x + b[:, None] * self.grad(x)[:, :, 0] + s.observable(x)
        return s.generator(self.value, x) + s.observable(x)

    def to_csv(self, path) -> None:
        """Write a tabulated corrector as CSV with columns ``x, U, dU`` (per component)."""
        if self.kind != TABULATED:
            raise ValueError("only tabulated correctors can be exported")
        g, U, dU = self.data["grid"], self.data["U"], self.data["dU"]
        q = self.obs_dim
        header = ["x"] + (["U", "dU"] if q == 1 else
                          [f"U_{j}" for j in range(q)] + [f"dU_{j}" for j in range(q)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(g.size):
                w.writerow([repr(float(g[i]))] + [repr(float(v)) for v in U[i]] +
                           [repr(float(v)) for v in dU[i]])


def closed_form_corrector(s: DiffusionScenario) -> Corrector:
    if s.known_corrector is None:
        raise ValueError(f"scenario {s.label!r} has no closed-form corrector")
    kc = s.known_corrector
    return Corrector(CLOSED_FORM, s.dim, s.obs_dim, kc.value, kc.grad,
                     {"description": kc.description})


# --------------------------------------------------------------------------
# one-dimensional Poisson equation


def tabulated_corrector(grid: Array, U: Array, dU: Array) -> Corrector:
    grid = np.asarray(grid, dtype=float)
    U = np.asarray(U, dtype=float).reshape(grid.size, -1)
    dU = np.asarray(dU, dtype=float).reshape(grid.size, -1)
    q = U.shape[1]
    spline = CubicHermiteSpline(grid, U, dU, axis=0, extrapolate=False)
    lo, hi = grid[0], grid[-1]

    def value(x):
        xs = np.atleast_2d(x)[:, 0]
        out = spline(np.clip(xs, lo, hi))
        # linear continuation outside the table
        out = out + np.where(xs[:, None] < lo, (xs - lo)[:, None] * dU[0], 0.0)
        out = out + np.where(xs[:, None] > hi, (xs - hi)[:, None] * dU[-1], 0.0)
        return out

    def grad(x):
        xs = np.atleast_2d(x)[:, 0]
        return np.stack([np.interp(xs, grid, dU[:, j]) for j in range(q)], axis=1)[:, :, None]

    return Corrector(TABULATED, 1, q, value, grad,
                     {"grid": grid, "U": U, "dU": dU, "interpolation": "cubic Hermite (U), linear (dU)"})


def solve_poisson_1d(s: DiffusionScenario, p: Density1D, observable: Callable = None,
                     mean_tol: float = 1e-6) -> Corrector:
    """Tabulated solution of ``L U = -H`` for a one-dimensional diffusion.

    Uses ``U'(x) = -2 / (a(x) p(x)) * int_{-inf}^x H(y) p(y) dy``; the running
    integral is taken from the left below the median of ``p`` and from the
    right above it, which keeps the ratio accurate deep in both tails. ``U`` is
    normalized to ``int U p = 0``.
    """
    if s.dim != 1:
        raise ValueError("solve_poisson_1d needs a one-dimensional scenario")
    H = observable or s.observable
    x = p.grid
    if np.any(p.p <= 0):
        raise ValueError("density vanishes inside the domain; shrink the domain")
    Hv = np.asarray(H(x[:, None]), dtype=float).reshape(x.size, -1)
    w = Hv * p.p[:, None]
    mean = simpson(w, x=x, axis=0)
    if np.any(np.abs(mean) > mean_tol):
        raise ValueError(f"observable is not centered under the invariant law (mean {mean})")
    left = cumulative_simpson(w, x=x, axis=0, initial=0.0)
    # -int_x^R H p, which equals the left integral because H p has zero mass
    right = -cumulative_simpson(w[::-1], x=-x[::-1], axis=0, initial=0.0)[::-1]
    cdf = cumulative_simpson(p.p, x=x, initial=0.0)
    split = int(np.searchsorted(cdf, 0.5))
    F = np.where(np.arange(x.size)[:, None] <= split, left, right)
    a = s.diffusion_matrix(x[:, None])[:, 0, 0]
    dU = -2.0 * F / (a * p.p)[:, None]
    U = cumulative_simpson(dU, x=x, axis=0, initial=0.0)
    U -= simpson(U * p.p[:, None], x=x, axis=0)
    return tabulated_corrector(x, U, dU)


# --------------------------------------------------------------------------
# quadratic observables on linear systems


def _psd_sqrt(G):
    w, V = np.linalg.eigh(linalg.symmetrize(G))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def solve_poisson_quadratic(A, B, Gamma, trace_tol: float = 1e-8) -> Corrector:
    """Corrector ``U(x) = <x, Y x> - c`` for ``H(x) = <x, Gamma x> - tr(Gamma^{1/2} P Gamma^{1/2})``.

    ``Y`` solves ``Y A + A^T Y + Gamma = 0`` and ``c = tr(B^T Y B)``; the
    identity ``tr(B^T Y B) = tr(Gamma^{1/2} P Gamma^{1/2})`` is checked.
    """
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    G = linalg.as_matrix(Gamma, "Gamma")
    if not linalg.is_symmetric(G, 1e-10) or np.linalg.eigvalsh(linalg.symmetrize(G)).min() < -1e-12:
        raise ValueError("Gamma must be symmetric positive semidefinite")
    Y = linalg.solve_lyapunov(A, G, transpose=True)
    P = linalg.solve_lyapunov(A, B @ B.T)
    c = float(np.trace(B.T @ Y @ B))
    Gh = _psd_sqrt(G)
    c2 = float(np.trace(Gh @ P @ Gh))
    if abs(c - c2) > trace_tol * max(1.0, abs(c)):
        raise ArithmeticError(f"trace identity violated: {c} vs {c2}")
    d = A.shape[0]
    return Corrector(QUADRATIC, d, 1,
                     lambda x: (np.einsum("ni,ij,nj->n", x, Y, x) - c)[:, None],
                     lambda x: (2.0 * x @ Y)[:, None, :],
                     {"Upsilon": Y, "upsilon": c, "P": P})


def affine_corrector(s: DiffusionScenario, n_probe: int = 16, rtol: float = 1e-10):
    """Corrector ``U(x) = -C A^{-1} x`` when ``H(x) = C x`` on a linear system, else ``None``.

    Linearity of ``H`` is probed at a few random points against its value and
    gradient at the origin, so this is a shortcut, not a proof.
    """
    if s.linear_part is None:
        return None
    A, _ = s.linear_part
    d = s.dim
    zero = np.zeros((1, d))
    C = np.asarray(s.observable(zero), dtype=float).reshape(1, -1)
    if np.any(C != 0):
        return None
    if s.obs_grad is not None:
        C = np.asarray(s.obs_grad(zero), dtype=float).reshape(s.obs_dim, d)
    else:
        C = np.stack([np.asarray(s.observable(e[None, :]), dtype=float).reshape(-1)
                      for e in np.eye(d)], axis=1)
    x = np.random.default_rng(0).uniform(-3.0, 3.0, size=(n_probe, d))
    Hx = np.asarray(s.observable(x), dtype=float).reshape(n_probe, s.obs_dim)
    if not np.allclose(Hx, x @ C.T, rtol=rtol, atol=rtol * max(1.0, float(np.abs(Hx).max()))):
        return None
    K = -C @ np.linalg.inv(A)
    return Corrector(AFFINE, d, s.obs_dim, lambda x: x @ K.T,
                     lambda x: np.broadcast_to(K, (x.shape[0],) + K.shape), {"K": K})


# --------------------------------------------------------------------------
# Gaussian-kernel corrector for linear systems


def hermite_rule(order: int, dim: int):
    """Tensor Gauss-Hermite nodes/weights for ``N(0, I_dim)``."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def default_order(dim: int, budget: float = 2.0e5, cap: int = 64) -> int:
    return int(max(3, min(cap, math.floor(budget ** (1.0 / dim)))))


def _time_rule(T: float, panels: int, nodes: int = 16, grading: int = 30):
    """Composite Gauss-Legendre on ``[0, T]``; the first panel is split geometrically
    toward zero, where autocovariances of discontinuous observables are not smooth."""
    z, w = _legendre(nodes)
    edges = np.linspace(0.0, T, panels + 1)
    first = edges[1] * 0.5 ** np.arange(1, grading + 1)
    edges = np.concatenate([[0.0], first[::-1], edges[1:]])
    h = np.diff(edges)
    t = (edges[:-1, None] + 0.5 * h[:, None] * (z[None, :] + 1)).ravel()
    wt = (0.5 * h[:, None] * w[None, :]).ravel()
    return t, wt


@dataclass
class LinearKernel:
    """Exact Gaussian transition of ``dX = A X dt + B dW``."""

    A: Array
    B: Array
    P: Array = field(init=False)
    rate: float = field(init=False)

    def __post_init__(self):
        self.A = linalg.as_matrix(self.A, "A")
        self.B = linalg.as_matrix(self.B, "B")
        absc = linalg.spectral_abscissa(self.A)
        if absc >= 0:
            raise linalg.NotHurwitzError(f"A is not Hurwitz (spectral abscissa {absc:.3g})")
        self.rate = -absc
        self.P = linalg.solve_lyapunov(self.A, self.B @ self.B.T)

    def moments(self, t: float):
        E = linalg.mat_exp(self.A, t)
        Pt = linalg.symmetrize(self.P - E @ self.P @ E.T)
        return E, Pt


def _expect_hermite(H, mean, L, nodes, weights, q):
    """E H(mean + L z) for each row of ``mean``; returns ``(n, q)``."""
    n, d = mean.shape
    y = mean[:, None, :] + (nodes @ L.T)[None, :, :]
    vals = np.asarray(H(y.reshape(-1, d)), dtype=float).reshape(n, nodes.shape[0], q)
    return np.einsum("nkq,k->nq", vals, weights)


def _expect_adaptive_1d(H, m, s, breakpoints, q, epsabs=1e-13):
    """E H(m + s z) in one dimension by adaptive quadrature split at breakpoints."""
    out = np.zeros(q)
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    if s <= 0:
        return np.asarray(H(np.array([[m]])), dtype=float).reshape(q)
    cuts = sorted((b - m) / s for b in breakpoints)
    edges = [-np.inf] + [c for c in cuts if abs(c) < 40] + [np.inf]
    for j in range(q):
        f = lambda z: float(np.asarray(H(np.array([[m + s * z]]))).reshape(q)[j]) * phi(z)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            total += integrate.quad(f, a, b, epsabs=epsabs, epsrel=1e-12, limit=200)[0]
        out[j] = total
    return out


_Z_MAX = 12.0  # standard normal mass beyond 12 is below 1e-32


@functools.lru_cache(maxsize=None)
def _legendre(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def _piecewise_rule(means, sd, breakpoints, nodes):
    """Gauss-Legendre nodes for ``E f(m + sd Z)`` on ``|Z| <= 12``, split where ``f`` jumps.

    Returns points ``x`` and weights ``w`` of shape ``(n, pieces * nodes)``; the
    weights include the normal density.
    """
    means = np.asarray(means, dtype=float).reshape(-1)
    u, wl = _legendre(nodes)
    if sd > 0 and breakpoints:
        cuts = np.clip((np.asarray(sorted(breakpoints))[None, :] - means[:, None]) / sd,
                       -_Z_MAX, _Z_MAX)
    else:
        cuts = np.zeros((means.size, 0))
    edges = np.hstack([np.full((means.size, 1), -_Z_MAX), cuts, np.full((means.size, 1), _Z_MAX)])
    lo, hi = edges[:, :-1, None], edges[:, 1:, None]
    z = lo + 0.5 * (hi - lo) * (u + 1.0)
    w = 0.5 * (hi - lo) * wl * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    z = z.reshape(means.size, -1)
    return means[:, None] + sd * z, w.reshape(means.size, -1)


def _expect_piecewise_1d(H, means, sd, breakpoints, q, nodes=64):
    """``E H(m + sd Z)`` for every mean; ``(n, q)``. Exact evaluation when ``sd = 0``."""
    means = np.asarray(means, dtype=float).reshape(-1)
    if sd <= 0:
        return np.asarray(H(means[:, None]), dtype=float).reshape(-1, q)
    x, w = _piecewise_rule(means, sd, breakpoints, nodes)
    vals = np.asarray(H(x.reshape(-1, 1)), dtype=float).reshape(x.shape + (q,))
    return np.einsum("nkq,nk->nq", vals, w)


def corrector_linear_gaussian(s: DiffusionScenario, tol: float = 1e-10, spatial: str = "auto",
                              order: int = None, panels_per_unit: float = 1.0,
                              fd_step: float = 1e-4) -> Corrector:
    """Corrector ``U(x) = int_0^inf E_x H(X_t) dt`` via the Gaussian transition kernel.

    ``spatial`` selects the Gaussian expectation rule: ``"hermite"`` (tensor
    Gauss-Hermite, any dimension), ``"piecewise"`` (one dimension,
    Gauss-Legendre split at ``s.obs_breakpoints``) or ``"adaptive"`` (one
    dimension, adaptive quadrature in space and time; slow, kept as a
    check). ``"auto"`` picks ``"piecewise"`` when ``H`` has breakpoints in
    one dimension and ``"hermite"`` otherwise. The horizon ``T`` is set from the spectral abscissa with a 1.5
    safety factor; evaluation raises if the tail estimate exceeds ``tol``.
    The gradient differentiates under the integral when ``s.obs_grad`` is
    given and otherwise uses central differences of ``U``.
    """
    if s.linear_part is None:
        raise ValueError("corrector_linear_gaussian needs a linear scenario")
    kern = LinearKernel(*s.linear_part)
    d, q = s.dim, s.obs_dim
    H = s.observable
    if spatial == "auto":
        spatial = "piecewise" if (d == 1 and s.obs_breakpoints) else "hermite"
    if spatial in ("adaptive", "piecewise") and d != 1:
        raise ValueError(f"{spatial} spatial quadrature is one-dimensional only")
    if spatial not in ("hermite", "adaptive", "piecewise"):
        raise ValueError(f"unknown spatial rule {spatial!r}")
    order = order or default_order(d)
    nodes, weights = hermite_rule(order, d)
    scale = 1.0 + math.sqrt(float(np.trace(kern.P)))

    def horizon(x):
        c0 = max(1.0, float(np.max(np.abs(x))) + scale) * max(1.0, float(np.max(np.abs(H(x)))))
        return 1.5 * math.log(c0 / tol) / kern.rate

    def inner(t, x):
        E, Pt = kern.moments(t)
        mean = x @ E.T
        if spatial == "hermite":
            return _expect_hermite(H, mean, linalg.psd_factor(Pt), nodes, weights, q)
        sd = math.sqrt(max(Pt[0, 0], 0.0))
        if spatial == "piecewise":
            return _expect_piecewise_1d(H, mean[:, 0], sd, s.obs_breakpoints, q)
        return np.stack([_expect_adaptive_1d(H, float(m), sd, s.obs_breakpoints, q)
                         for m in mean[:, 0]])

    def value(x):
        T = horizon(x)
        tail = np.max(np.abs(inner(T, x))) / kern.rate
        if tail > tol * max(1.0, float(np.max(np.abs(x)))):
            raise RuntimeError(f"time quadrature did not converge: tail estimate {tail:.2e}")
        if spatial == "adaptive":
            out = np.zeros((x.shape[0], q))
            for i in range(x.shape[0]):
                for j in range(q):
                    f = lambda t: inner(t, x[i:i + 1])[0, j]
                    out[i, j] = integrate.quad(f, 0.0, T, epsabs=tol, epsrel=1e-12, limit=400)[0]
            return out
        tn, wt = _time_rule(T, max(4, int(math.ceil(T * panels_per_unit))))
        return sum(w * inner(t, x) for t, w in zip(tn, wt))

    if s.obs_grad is not None and spatial == "hermite":
        def grad(x):
            T = horizon(x)
            tn, wt = _time_rule(T, max(4, int(math.ceil(T * panels_per_unit))))
            out = np.zeros((x.shape[0], q, d))
            for t, w in zip(tn, wt):
                E, Pt = kern.moments(t)
                L = linalg.psd_factor(Pt)
                y = (x @ E.T)[:, None, :] + (nodes @ L.T)[None, :, :]
                g = np.asarray(s.obs_grad(y.reshape(-1, d)), dtype=float)
                g = g.reshape(x.shape[0], nodes.shape[0], q, d)
                out += w * np.einsum("nkqd,k,de->nqe", g, weights, E)
            return out
    else:
        def grad(x):
            out = np.zeros((x.shape[0], q, d))
            for i in range(d):
                e = np.zeros(d)
                e[i] = fd_step
                out[:, :, i] = (value(x + e) - value(x - e)) / (2 * fd_step)
            return out

    return Corrector(GAUSSIAN, d, q, value, grad,
                     {"A": kern.A, "B": kern.B, "spatial": spatial, "order": order, "tol": tol})


# --------------------------------------------------------------------------
# the covariance Q


@dataclass(frozen=True)
class CovarianceQ:
    Q: Array
    method: str
    error: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if not linalg.is_symmetric(Q, 1e-10):
            raise ValueError("Q must be symmetric")
        Q = linalg.symmetrize(Q)
        if np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)

    @property
    def scalar(self) -> float:
        if self.Q.shape != (1, 1):
            raise ValueError("Q is not scalar")
        return float(self.Q[0, 0])


def compute_Q_stationary(s: DiffusionScenario, U: Corrector, law) -> CovarianceQ:
    """``Q = int grad U a grad U^T dmu``.

    ``law`` is either a tabulated ``Density1D`` (composite Simpson; the error
    estimate compares against the rule on every other grid point) or a
    covariance matrix ``P`` of a centered Gaussian invariant law (tensor
    Gauss-Hermite).
    """
    if isinstance(law, Density1D):
        x = law.grid[:, None]
        G = U.grad(x)
        a = s.diffusion_matrix(x)
        f = np.einsum("nqi,nij,nrj->nqr", G, a, G) * law.p[:, None, None]
        Qf = simpson(f, x=law.grid, axis=0)
        Qc = simpson(f[::2], x=law.grid[::2], axis=0)
        return CovarianceQ(linalg.symmetrize(Qf), "stationary", float(np.max(np.abs(Qf - Qc))))
    P = linalg.as_matrix(law, "P")
    d = P.shape[0]
    order = default_order(d, budget=1e6)
    nodes, weights = hermite_rule(order, d)
    x = nodes @ linalg.psd_factor(P).T
    G = U.grad(x)
    a = s.diffusion_matrix(x)
    Q = np.einsum("nqi,nij,nrj,n->qr", G, a, G, weights)
    return CovarianceQ(linalg.symmetrize(Q), "stationary", 0.0)


def stationary_q_1d(s: DiffusionScenario, domain=(-3.0, 3.0), npoints: int = 4001,
                    tol: float = 1e-6, max_doublings: int = 6):
    """Density, corrector and ``Q`` with grid doubling until ``Q`` moves less than ``tol``."""
    prev = None
    for _ in range(max_doublings + 1):
        p = invariant_density_1d(s, domain, npoints)
        U = solve_poisson_1d(s, p)
        Q = compute_Q_stationary(s, U, p)
        if prev is not None:
            change = float(np.max(np.abs(Q.Q - prev.Q)))
            if change < tol:
                return p, U, CovarianceQ(Q.Q, "stationary", change)
        prev = Q
        npoints = 2 * npoints - 1
    raise RuntimeError("grid refinement did not converge")


def q_closed_form_quadratic(A, B, Gamma, literal: bool = False) -> CovarianceQ:
    """Closed-form ``Q`` for ``H(x) = <x, Gamma x> - const`` on a linear system.

    Returns ``4 tr(B^T Y P Y B)``, the stationary mean of ``4 |B^T Y x|^2``.
    ``literal=True`` evaluates ``4 tr(Y B P B^T Y)`` instead; both agree when
    ``B`` commutes with ``Y`` (e.g. ``B`` a multiple of the identity).
    """
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    G = linalg.as_matrix(Gamma, "Gamma")
    Y = linalg.solve_lyapunov(A, G, transpose=True)
    P = linalg.solve_lyapunov(A, B @ B.T)
    if literal:
        val = 4.0 * np.trace(Y @ B @ P @ B.T @ Y)
    else:
        val = 4.0 * np.trace(B.T @ Y @ P @ Y @ B)
    return CovarianceQ(np.array([[val]]), "closed_form", 0.0)


def _green_kubo_linear(s, tol, order, panels_per_unit, spatial):
    kern = LinearKernel(*s.linear_part)
    d, q = s.dim, s.obs_dim
    H = s.observable
    if order is None:
        # Gauss-Hermite with n nodes is exact for polynomials of degree 2n - 1
        order = 6 if s.quadratic_form is not None else default_order(2 * d, budget=2e5)
    znodes, zw = hermite_rule(order, d)
    x = znodes @ linalg.psd_factor(kern.P).T
    Hx = np.asarray(H(x), dtype=float).reshape(-1, q)

    if spatial == "auto":
        spatial = "piecewise" if (d == 1 and s.obs_breakpoints) else "hermite"
    if spatial == "piecewise":
        if d != 1:
            raise ValueError("piecewise spatial quadrature is one-dimensional only")
        sdP = math.sqrt(kern.P[0, 0])
        bps = s.obs_breakpoints

        def rule(nodes):
            xo, wo = _piecewise_rule(np.zeros(1), sdP, bps, nodes)
            xo, wo = xo[0], wo[0]
            return xo, wo, np.asarray(H(xo[:, None]), dtype=float).reshape(-1, q)

        def cov(t, nodes=64):
            xo, wo, Ho = outer[nodes]
            E, Pt = kern.moments(t)
            g = _expect_piecewise_1d(H, E[0, 0] * xo, math.sqrt(max(Pt[0, 0], 0.0)), bps, q, nodes)
            return np.einsum("nq,nr,n->qr", g, Ho, wo)

        outer = {n: rule(n) for n in (32, 64)}
        coarse = {"nodes": 32}
    elif spatial == "hermite":
        def cov(t):
            E, Pt = kern.moments(t)
            g = _expect_hermite(H, x @ E.T, linalg.psd_factor(Pt), znodes, zw, q)
            return np.einsum("nq,nr,n->qr", g, Hx, zw)

        coarse = {}
    else:
        raise ValueError(f"unknown spatial rule {spatial!r}")

    c0 = max(1.0, float(np.max(np.abs(cov(0.0)))))
    T = 1.5 * math.log(c0 / tol) / kern.rate
    panels = max(4, int(math.ceil(T * panels_per_unit)))
    tn, wt = _time_rule(T, panels)
    C = np.array([cov(t) for t in tn])
    Q = np.einsum("k,kqr->qr", wt, C + np.swapaxes(C, 1, 2))
    tc, wc = _time_rule(T, panels, nodes=8)
    Cc = np.array([cov(t, **coarse) for t in tc])
    Qc = np.einsum("k,kqr->qr", wc, Cc + np.swapaxes(Cc, 1, 2))
    tail = 2 * float(np.max(np.abs(cov(T)))) / kern.rate
    err = tail + float(np.max(np.abs(Q - Qc)))
    return CovarianceQ(linalg.symmetrize(Q), "green_kubo", err), tail


def _green_kubo_mc(s, horizon, n_paths, h, seed, domain, n_batches):
    from .sim import sample_density, step_euler, step_tamed_euler, superlinear

    if s.dim != 1:
        raise ValueError("Monte-Carlo Green-Kubo needs stationary sampling; only d = 1 "
                         "nonlinear scenarios are supported")
    p = invariant_density_1d(s, domain)
    rng = np.random.Generator(np.random.Philox(seed))
    x = sample_density(p, n_paths, rng)[:, None]
    q = s.obs_dim
    H0 = s.observable(x)
    stepper = step_tamed_euler if superlinear(s) else step_euler
    n_steps = int(round(horizon / h))
    last = max(1, n_steps // 10)
    prod = np.einsum("nq,nr->nqr", H0, H0)
    acc = 0.5 * h * prod
    late = np.zeros((q, q))
    for k in range(1, n_steps + 1):
        x = stepper(s, x, h, rng.standard_normal((n_paths, s.noise_dim)))
        prod = np.einsum("nq,nr->nqr", s.observable(x), H0)
        acc += (0.5 if k == n_steps else 1.0) * h * prod
        if k > n_steps - last:
            late += prod.mean(axis=0) / last
    # symmetrized per-path time integrals, trapezoid rule
    per_path = acc + np.swapaxes(acc, 1, 2)
    means = np.array([b.mean(axis=0) for b in np.array_split(per_path, n_batches)])
    Q = per_path.mean(axis=0)
    se = float(np.max(means.std(axis=0, ddof=1) / math.sqrt(n_batches)))
    tail = float(np.max(np.abs(late)))
    Qs = linalg.symmetrize(Q)
    if np.linalg.eigvalsh(Qs).min() < 0:
        Qs = _clip_psd(Qs)
    return CovarianceQ(Qs, "green_kubo", se), tail, se


def _clip_psd(Q):
    w, V = np.linalg.eigh(linalg.symmetrize(Q))
    return (V * np.clip(w, 0, None)) @ V.T


def compute_Q_green_kubo(s: DiffusionScenario, tol: float = 1e-10, order: int = None,
                         panels_per_unit: float = 1.0, spatial: str = "auto",
                         horizon: float = 10.0, n_paths: int = 20000, h: float = 2e-3,
                         seed: int = 0, domain=(-3.0, 3.0), n_batches: int = 20) -> CovarianceQ:
    """``Q = int_0^inf E[(H(X_t) H(X_0)^T + H(X_0) H(X_t)^T)] dt`` under the stationary law.

    Linear scenarios use the exact Gaussian transition kernel inside a
    Gauss-Legendre time rule (truncated where the spectral-abscissa envelope
    falls below ``tol``). Nonlinear one-dimensional scenarios use Monte Carlo
    from exact stationary starts over ``horizon`` with an error bar from
    batch means. A horizon whose tail estimate exceeds ``tol`` is reported
    as a warning; the result is still returned with its error bar.
    """
    import warnings

    if s.linear_part is not None:
        Q, tail = _green_kubo_linear(s, tol, order, panels_per_unit, spatial)
        budget = tol * max(1.0, float(np.abs(Q.Q).max()))
    else:
        Q, tail, se = _green_kubo_mc(s, horizon, n_paths, h, seed, domain, n_batches)
        budget = tol + 3 * se
    if tail > budget:
        warnings.warn(f"Green-Kubo horizon too short: tail estimate {tail:.2e}", RuntimeWarning)
    return Q

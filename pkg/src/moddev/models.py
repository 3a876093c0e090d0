"""Diffusion scenarios, assumption checks and the built-in example registry.

Every callable attached to a scenario is vectorized over a leading batch
axis: ``drift(x)`` maps ``(n, d) -> (n, d)``, ``diffusion(x)`` maps
``(n, d) -> (n, d, m)`` and ``observable(x)`` maps ``(n, d) -> (n, q)``.
User-supplied callables must be reentrant; scenarios are frozen once built.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from . import linalg

Array = np.ndarray
VecFn = Callable[[Array], Array]


# --------------------------------------------------------------------------
# scenario type


@dataclass(frozen=True)
class KnownCorrector:
    """Closed-form corrector ``U`` with gradient ``grad`` (``(n, d) -> (n, q, d)``)."""

    value: VecFn
    grad: VecFn
    description: str = ""


@dataclass(frozen=True)
class DiffusionScenario:
    label: str
    dim: int
    drift: VecFn
    diffusion: VecFn
    observable: VecFn
    obs_dim: int
    kappa: float = 0.6
    initial_point: Array = None
    noise_dim: int = None
    linear_part: Optional[tuple] = None
    sigma_const: Optional[Array] = None
    known_corrector: Optional[KnownCorrector] = None
    obs_grad: Optional[VecFn] = None
    obs_breakpoints: tuple = ()
    quadratic_form: Optional[Array] = None
    required: tuple = ()
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.5 < self.kappa < 1.0):
            raise ValueError(f"kappa must lie strictly inside (0.5, 1), got {self.kappa}")
        if self.dim < 1 or self.obs_dim < 1:
            raise ValueError("dimensions must be positive")
        x0 = np.zeros(self.dim) if self.initial_point is None else np.asarray(
            self.initial_point, dtype=float).reshape(self.dim)
        object.__setattr__(self, "initial_point", x0)
        if self.sigma_const is not None:
            sc = linalg.as_matrix(self.sigma_const, "sigma")
            object.__setattr__(self, "sigma_const", sc)
        if self.noise_dim is None:
            m = self.sigma_const.shape[1] if self.sigma_const is not None else \
                self.diffusion(x0[None, :]).shape[-1]
            object.__setattr__(self, "noise_dim", int(m))
        if self.linear_part is not None:
            A = linalg.as_matrix(self.linear_part[0], "A")
            B = linalg.as_matrix(self.linear_part[1], "B")
            object.__setattr__(self, "linear_part", (A, B))
            self._check_linear_consistency(A, B)

    def _check_linear_consistency(self, A, B):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(16, self.dim)) * 2.0
        drift_err = np.abs(self.drift(pts) - pts @ A.T)
        sig = self.diffusion(pts)
        sig_err = np.abs(sig - B[None, :, :])
        if np.any(drift_err > 1e-12 * (1 + np.abs(pts @ A.T))) or np.any(sig_err > 1e-12):
            raise ValueError(f"scenario {self.label!r}: linear_part disagrees with drift/diffusion")

    @property
    def is_linear(self) -> bool:
        return self.linear_part is not None

    def diffusion_matrix(self, x: Array) -> Array:
        """``a(x) = sigma sigma^T`` with shape ``(n, d, d)``."""
        s = self.diffusion(np.atleast_2d(x))
        return np.einsum("nij,nkj->nik", s, s)

    def generator(self, f: Callable, x: Array, step: float = 1e-4) -> Array:
        """Apply the generator to ``f`` by central finite differences."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        f0 = np.asarray(f(x), dtype=float).reshape(n, -1)
        grad = np.zeros(f0.shape + (d,))
        hess = np.zeros(f0.shape + (d, d))
        eye = np.eye(d) * step
        for i in range(d):
            fp = np.asarray(f(x + eye[i]), dtype=float).reshape(n, -1)
            fm = np.asarray(f(x - eye[i]), dtype=float).reshape(n, -1)
            grad[..., i] = (fp - fm) / (2 * step)
            hess[..., i, i] = (fp - 2 * f0 + fm) / step**2
            for j in range(i + 1, d):
                fpp = f(x + eye[i] + eye[j])
                fpm = f(x + eye[i] - eye[j])
                fmp = f(x - eye[i] + eye[j])
                fmm = f(x - eye[i] - eye[j])
                mixed = (np.asarray(fpp) - fpm - fmp + fmm).reshape(n, -1) / (4 * step**2)
                hess[..., i, j] = hess[..., j, i] = mixed
        a = self.diffusion_matrix(x)
        b = self.drift(x)
        return 0.5 * np.einsum("nqij,nij->nq", hess, a) + np.einsum("nqi,ni->nq", grad, b)

    def replace(self, **changes) -> "DiffusionScenario":
        return dataclasses.replace(self, **changes)


def linear_scenario(label: str, A, B, observable: VecFn, obs_dim: int, **kw) -> DiffusionScenario:
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")

    def drift(x):
        return np.atleast_2d(x) @ A.T

    def diffusion(x):
        x = np.atleast_2d(x)
        return np.broadcast_to(B, (x.shape[0],) + B.shape)

    return DiffusionScenario(label=label, dim=A.shape[0], drift=drift, diffusion=diffusion,
                             observable=observable, obs_dim=obs_dim, linear_part=(A, B),
                             sigma_const=B, **kw)


# --------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class SamplingGrid:
    """Radial annulus ``C <= |z| <= r_max`` plus random point pairs."""

    c_radius: float = 1.0
    r_max: float = 10.0
    n_radial: int = 60
    n_directions: int = 32
    n_pairs: int = 2000
    pair_scale: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_radial < 2 or self.n_directions < 1 or self.n_pairs < 1:
            raise ValueError("empty sampling grid")
        if not (0 < self.c_radius < self.r_max):
            raise ValueError("need 0 < c_radius < r_max")

    def annulus(self, d: int) -> Array:
        radii = np.geomspace(self.c_radius, self.r_max, self.n_radial)
        if d == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            rng = np.random.default_rng(self.seed)
            dirs = rng.normal(size=(self.n_directions, d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            dirs = np.vstack([np.eye(d), -np.eye(d), dirs])
        return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)

    def pairs(self, d: int) -> tuple:
        rng = np.random.default_rng(self.seed + 1)
        a = rng.uniform(-self.pair_scale, self.pair_scale, size=(self.n_pairs, d))
        b = rng.uniform(-self.pair_scale, self.pair_scale, size=(self.n_pairs, d))
        return a, b

    def describe(self) -> str:
        return (f"annulus [{self.c_radius:g}, {self.r_max:g}] x {self.n_radial} radii, "
                f"{self.n_directions} directions, {self.n_pairs} pairs on "
                f"[-{self.pair_scale:g}, {self.pair_scale:g}]^d, seed {self.seed}")


PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class AssumptionReport:
    verdicts: dict
    constants: dict
    grid: str
    required: tuple = ()

    @property
    def all_required_pass(self) -> bool:
        return all(self.verdicts.get(k) == PASS for k in self.required)

    def as_dict(self) -> dict:
        return {"verdicts": dict(self.verdicts), "constants": dict(self.constants),
                "grid": self.grid, "required": list(self.required),
                "all_required_pass": self.all_required_pass}


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} returned NaN or inf on the sampling grid")
    return arr


def _check_drift_growth(s: DiffusionScenario, grid: SamplingGrid):
    z = grid.annulus(s.dim)
    inner = -np.einsum("ni,ni->n", z, _finite("drift", s.drift(z)))
    norm = np.linalg.norm(z, axis=1)
    good = inner > 0
    if not np.any(good):
        return FAIL, {}
    if not np.all(good):
        return (FAIL if good.mean() < 0.5 else INCONCLUSIVE), {}
    # envelope exponent from a log-log fit of -<z, b(z)> against |z|
    slope = np.polyfit(np.log(norm), np.log(inner), 1)[0]
    alpha = float(slope - 1.0)
    alpha_r = round(alpha) if abs(alpha - round(alpha)) < 0.05 else alpha
    r = float(np.min(inner / norm ** (1 + alpha_r)))
    consts = {"alpha": alpha_r, "r": r, "C": grid.c_radius}
    if alpha_r >= 1.0 - 1e-9 and r > 1e-8:
        return PASS, consts
    return INCONCLUSIVE, consts


def _check_ellipticity(s: DiffusionScenario, grid: SamplingGrid):
    z = np.vstack([grid.annulus(s.dim), np.zeros((1, s.dim)), grid.pairs(s.dim)[0]])
    a = _finite("diffusion", s.diffusion_matrix(z))
    eig = np.linalg.eigvalsh(a)
    lam, Lam = float(eig.min()), float(eig.max())
    consts = {"lambda": lam, "Lambda": Lam}
    if lam > 1e-12:
        return PASS, consts
    return FAIL, consts


def _check_dissipativity(s: DiffusionScenario, grid: SamplingGrid):
    x1, x2 = grid.pairs(s.dim)
    dx = x1 - x2
    db = _finite("drift", s.drift(x1)) - s.drift(x2)
    ds = s.diffusion(x1) - s.diffusion(x2)
    lhs = 2 * np.einsum("ni,ni->n", dx, db) + np.einsum("nij,nij->n", ds, ds)
    sq = np.einsum("ni,ni->n", dx, dx)
    ok = sq > 1e-12
    ratio = -lhs[ok] / sq[ok]
    nu = float(ratio.min())
    consts = {"nu": nu}
    if nu > 1e-3:
        return PASS, consts
    if np.all(ratio < 0):
        return FAIL, consts
    return INCONCLUSIVE, consts


def check_assumptions(s: DiffusionScenario, grid: SamplingGrid = None) -> AssumptionReport:
    """Sample-based diagnostics of the ergodicity and regularity assumptions.

    Verdicts support or falsify the analytic conditions on the sampled points
    only: ``A_b`` (drift growth), ``A_sigma_a`` (uniform ellipticity),
    ``A'_b_sigma`` (two-point dissipativity) and, for linear scenarios, ``A``
    (Hurwitz drift) and ``A_B`` (controllability).
    """
    grid = grid or SamplingGrid()
    verdicts, consts = {}, {}
    verdicts["A_b"], c = _check_drift_growth(s, grid)
    consts.update(c)
    verdicts["A_sigma_a"], c = _check_ellipticity(s, grid)
    consts.update(c)
    verdicts["A'_b_sigma"], c = _check_dissipativity(s, grid)
    consts.update(c)
    if s.linear_part is not None:
        A, B = s.linear_part
        absc = linalg.spectral_abscissa(A)
        verdicts["A"] = PASS if absc < 0 else FAIL
        consts["spectral_abscissa"] = absc
        _, nonsing = linalg.controllability_gramian(A, B)
        verdicts["A_B"] = PASS if nonsing else FAIL
        bbt = B @ B.T
        verdicts["BB*>0"] = PASS if np.linalg.eigvalsh(bbt).min() > 1e-12 else FAIL
    return AssumptionReport(verdicts, consts, grid.describe(), tuple(s.required))


# --------------------------------------------------------------------------
# invariant density in one dimension


@dataclass(frozen=True)
class Density1D:
    grid: Array
    p: Array
    inner: tuple

    def __call__(self, x):
        return np.interp(x, self.grid, self.p, left=0.0, right=0.0)

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def expect(self, values: Array) -> Array:
        """Simpson quadrature of ``values * p`` along the grid (axis 0)."""
        return simpson(np.asarray(values) * self.p.reshape((-1,) + (1,) * (np.ndim(values) - 1)),
                       x=self.grid, axis=0)


def _scalar_fns(s: DiffusionScenario):
    def b(x):
        return s.drift(np.asarray(x, dtype=float).reshape(-1, 1))[:, 0]

    def a(x):
        return s.diffusion_matrix(np.asarray(x, dtype=float).reshape(-1, 1))[:, 0, 0]

    return b, a


def _log_density(s, x):
    b, a = _scalar_fns(s)
    av = a(x)
    if np.any(av <= 0):
        raise ValueError("diffusion coefficient vanishes on the density domain")
    i0 = int(np.argmin(np.abs(x)))
    phi = cumulative_simpson(2 * b(x) / av, x=x, initial=0.0)
    return phi - phi[i0] - np.log(av)


def invariant_density_1d(s: DiffusionScenario, domain=(-1.0, 1.0), npoints: int = 20001,
                         tail_tol: float = 1e-16, pad: float = 1.25) -> Density1D:
    """Tabulated invariant density ``p ∝ a^{-1} exp(∫ 2b/a)`` of a 1-D diffusion.

    The requested ``domain`` is widened geometrically until the density at both
    ends drops below ``tail_tol`` (relative to its peak) and is then padded by
    ``pad``; the requested interval is kept as ``Density1D.inner``.
    """
    if s.dim != 1:
        raise ValueError("invariant_density_1d needs a one-dimensional scenario")
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ValueError("empty domain")
    L, R = min(lo, -1.0), max(hi, 1.0)
    for _ in range(60):
        x = np.linspace(L, R, 4001)
        logp = _log_density(s, x)
        if not np.all(np.isfinite(logp)):
            raise ValueError("candidate density is not finite on the domain")
        top = logp.max()
        left_ok = logp[0] - top < math.log(tail_tol)
        right_ok = logp[-1] - top < math.log(tail_tol)
        if left_ok and right_ok:
            break
        L = L * 1.5 if not left_ok else L
        R = R * 1.5 if not right_ok else R
    else:
        raise ValueError("density is not integrable: tails do not decay")
    mid = 0.5 * (L + R)
    L, R = mid + pad * (L - mid), mid + pad * (R - mid)
    x = np.linspace(L, R, npoints)
    logp = _log_density(s, x)
    w = np.exp(logp - logp.max())
    w /= simpson(w, x=x)
    return Density1D(x, w, (lo, hi))


# --------------------------------------------------------------------------
# built-in scenarios


def _col(x):
    return np.atleast_2d(x)[:, :1]


def _const_sigma(x, value=1.0):
    x = np.atleast_2d(x)
    return np.full((x.shape[0], 1, 1), value)


def _cubic() -> DiffusionScenario:
    return DiffusionScenario(
        label="cubic", dim=1,
        drift=lambda x: -np.atleast_2d(x) ** 3,
        diffusion=_const_sigma, sigma_const=np.eye(1),
        observable=lambda x: np.atleast_2d(x) ** 3, obs_dim=1,
        obs_grad=lambda x: (3 * np.atleast_2d(x) ** 2)[:, :, None],
        known_corrector=KnownCorrector(lambda x: _col(x).copy(),
                                       lambda x: np.ones((np.atleast_2d(x).shape[0], 1, 1)),
                                       "U(x) = x"),
        required=("A_b", "A_sigma_a"),
        notes={"b": "-x^3", "sigma": "1", "H": "x^3", "alpha": 3,
               "A_H": "violated (H grows like |x|^3); handled by the exact corrector U=x"},
    )


def _ou(label, observable, obs_dim, theta=1.0, **kw):
    return linear_scenario(label, [[-theta]], [[1.0]], observable, obs_dim, **kw)


def _ou_sign() -> DiffusionScenario:
    return _ou("ou-sign", lambda x: np.sign(_col(x)), 1, obs_breakpoints=(0.0,),
               required=("A'_b_sigma", "A_sigma_a"),
               notes={"b": "-x", "H": "sign(x)",
                      "split": "H' = sign(x) e^{-|x|}, H'' = sign(x)(1 - e^{-|x|})"})


def sign_split(x):
    """Smooth-decay and Lipschitz parts of ``sign``: returns ``(H', H'')``."""
    x = np.asarray(x, dtype=float)
    s = np.sign(x)
    return s * np.exp(-np.abs(x)), s * (1 - np.exp(-np.abs(x)))


def _langevin(d: int = 1) -> DiffusionScenario:
    Lam = np.eye(d)
    Gam = np.eye(d)
    sig = np.eye(d)
    A = np.block([[np.zeros((d, d)), np.eye(d)], [-Lam, -Gam]])
    B = np.block([[np.zeros((d, d)), np.zeros((d, d))], [np.zeros((d, d)), sig]])
    K = -np.linalg.inv(A)
    return linear_scenario(
        "langevin", A, B, lambda x: np.atleast_2d(x).copy(), 2 * d,
        obs_grad=lambda x: np.broadcast_to(np.eye(2 * d), (np.atleast_2d(x).shape[0], 2 * d, 2 * d)),
        known_corrector=KnownCorrector(lambda x: np.atleast_2d(x) @ K.T,
                                       lambda x: np.broadcast_to(K, (np.atleast_2d(x).shape[0],) + K.shape),
                                       "U(x) = -A^{-1} x"),
        initial_point=np.zeros(2 * d),
        required=("A", "A_B"),
        notes={"Lambda": "I", "Gamma": "I", "sigma": "I", "H": "x (full state)",
               "blocks": "A = [[0, I], [-Lambda, -Gamma]], B = [[0, 0], [0, sigma]]"},
    )


def _smooth_component(coeffs=(1.0, 3.0, 3.0), b: float = 1.0) -> DiffusionScenario:
    d = len(coeffs)
    A = np.zeros((d, d))
    A[: d - 1, 1:] = np.eye(d - 1)
    A[d - 1, :] = -np.asarray(coeffs, dtype=float)
    B = np.zeros((d, d))
    B[d - 1, d - 1] = b
    K = -np.linalg.inv(A)
    return linear_scenario(
        "smooth-component", A, B, lambda x: np.atleast_2d(x).copy(), d,
        obs_grad=lambda x: np.broadcast_to(np.eye(d), (np.atleast_2d(x).shape[0], d, d)),
        known_corrector=KnownCorrector(lambda x: np.atleast_2d(x) @ K.T,
                                       lambda x: np.broadcast_to(K, (np.atleast_2d(x).shape[0],) + K.shape),
                                       "U(x) = -A^{-1} x"),
        required=("A", "A_B"),
        notes={"coefficients": list(coeffs), "b": b,
               "contraction": "first component, T = e_1^T"},
    )


def _quadratic_sign() -> DiffusionScenario:
    def H(x):
        x = _col(x)
        s = np.sign(x)
        return np.hstack([0.5 * s, x * x * s - 0.5 * s])

    return _ou("quadratic-sign", H, 2, obs_breakpoints=(0.0,),
               required=("A_b", "A_sigma_a"),
               notes={"H": "(sign/2, x^2 sign - sign/2)",
                      "contraction": "T = [1, 1] recovers H = x^2 sign(x)"})


def _ou_linear() -> DiffusionScenario:
    return _ou("ou-linear", lambda x: _col(x).copy(), 1,
               obs_grad=lambda x: np.ones((np.atleast_2d(x).shape[0], 1, 1)),
               known_corrector=KnownCorrector(lambda x: _col(x).copy(),
                                              lambda x: np.ones((np.atleast_2d(x).shape[0], 1, 1)),
                                              "U(x) = x"),
               required=("A", "A_B", "A_b", "A_sigma_a"),
               notes={"b": "-x", "H": "x"})


def _ou_quadratic() -> DiffusionScenario:
    return _ou("ou-quadratic", lambda x: _col(x) ** 2 - 0.5, 1,
               obs_grad=lambda x: (2 * _col(x))[:, :, None],
               quadratic_form=np.eye(1),
               known_corrector=KnownCorrector(lambda x: 0.5 * _col(x) ** 2 - 0.25,
                                              lambda x: _col(x)[:, :, None].copy(),
                                              "U(x) = x^2/2 - 1/4"),
               required=("A", "BB*>0"),
               notes={"b": "-x", "H": "x^2 - 1/2", "Gamma": 1})


def estimator_scenario(theta: float = 1.0) -> DiffusionScenario:
    if theta <= 0:
        raise ValueError("theta must be positive")
    c = 1.0 / (2 * theta)
    return _ou("estimator", lambda x: _col(x) ** 2 - c, 1, theta=theta,
               obs_grad=lambda x: (2 * _col(x))[:, :, None],
               quadratic_form=np.eye(1),
               known_corrector=KnownCorrector(lambda x: (_col(x) ** 2 - c) / (2 * theta),
                                              lambda x: (_col(x) / theta)[:, :, None],
                                              "U(x) = (x^2 - 1/(2 theta)) / (2 theta)"),
               required=("A", "BB*>0"),
               notes={"b": "-theta x", "theta": theta, "H": "x^2 - 1/(2 theta)"})


_BUILTINS = {
    "cubic": _cubic,
    "ou-sign": _ou_sign,
    "langevin": _langevin,
    "smooth-component": _smooth_component,
    "quadratic-sign": _quadratic_sign,
    "ou-linear": _ou_linear,
    "ou-quadratic": _ou_quadratic,
    "estimator": estimator_scenario,
}


def available_scenarios() -> list:
    return sorted(_BUILTINS)


def builtin_scenario(name: str, **params) -> DiffusionScenario:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(available_scenarios())}") \
            from None
    return factory(**params)


# --------------------------------------------------------------------------
# scenario files
#
# [scenario]
# label = my-ou
# drift = linear            ; linear | cubic | odd-cubic
# drift_params = -1          ; row-major matrix entries (linear) or coefficients
# diffusion = constant
# diffusion_params = 1
# dim = 1
# observable = identity      ; identity | linear | quadratic | cube | sign
# observable_params =
# kappa = 0.6
# initial_point = 0


SCENARIO_KEYS = {"label", "dim", "drift", "drift_params", "diffusion", "diffusion_params",
                 "noise_dim", "observable", "observable_params", "kappa", "initial_point",
                 "builtin"}


def parse_floats(text: str) -> list:
    text = (text or "").strip()
    if not text:
        return []
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _matrix_from(values, rows, name):
    values = np.asarray(values, dtype=float)
    if values.size % rows:
        raise ValueError(f"{name}: {values.size} entries do not fill {rows} rows")
    return values.reshape(rows, -1)


def scenario_from_mapping(m: dict) -> DiffusionScenario:
    unknown = set(m) - SCENARIO_KEYS
    if unknown:
        raise ValueError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    kappa = float(m.get("kappa", 0.6))
    if "builtin" in m:
        return builtin_scenario(m["builtin"]).replace(kappa=kappa)
    d = int(m.get("dim", 1))
    label = m.get("label", "custom")
    dform = m.get("drift", "linear")
    dpar = parse_floats(m.get("drift_params", ""))
    sform = m.get("diffusion", "constant")
    spar = parse_floats(m.get("diffusion_params", "1"))
    if sform != "constant":
        raise ValueError(f"diffusion: unknown form {sform!r} (available: constant)")
    B = _matrix_from(spar, d, "diffusion_params")
    oform = m.get("observable", "identity")
    opar = parse_floats(m.get("observable_params", ""))
    x0 = parse_floats(m.get("initial_point", "")) or [0.0] * d

    obs_grad = None
    quad = None
    if oform == "identity":
        obs, q = (lambda x: np.atleast_2d(x).copy()), d
        obs_grad = lambda x: np.broadcast_to(np.eye(d), (np.atleast_2d(x).shape[0], d, d))
    elif oform == "linear":
        C = _matrix_from(opar, len(opar) // d, "observable_params")
        obs, q = (lambda x: np.atleast_2d(x) @ C.T), C.shape[0]
        obs_grad = lambda x: np.broadcast_to(C, (np.atleast_2d(x).shape[0],) + C.shape)
    elif oform == "quadratic":
        G = _matrix_from(opar[: d * d], d, "observable_params")
        shift = opar[d * d] if len(opar) > d * d else 0.0
        quad = G
        obs = lambda x: (np.einsum("ni,ij,nj->n", np.atleast_2d(x), G, np.atleast_2d(x)) - shift)[:, None]
        q = 1
        obs_grad = lambda x: (np.atleast_2d(x) @ (G + G.T))[:, None, :]
    elif oform == "cube":
        obs, q = (lambda x: np.atleast_2d(x) ** 3), d
    elif oform == "sign":
        obs, q = (lambda x: np.sign(np.atleast_2d(x))), d
    else:
        raise ValueError(f"observable: unknown form {oform!r} "
                         "(available: identity, linear, quadratic, cube, sign)")

    common = dict(kappa=kappa, initial_point=np.asarray(x0), obs_grad=obs_grad,
                  quadratic_form=quad)
    if dform == "linear":
        common["required"] = ("A", "A_B")
        A = _matrix_from(dpar, d, "drift_params")
        return linear_scenario(label, A, B, obs, q, **common)
    if dform in ("cubic", "odd-cubic"):
        coef = np.asarray(dpar or [1.0], dtype=float)
        if dform == "cubic":
            drift = lambda x: -coef[0] * np.atleast_2d(x) ** 3
        else:
            # b(x) = -(c0 x + c1 x^3)
            c0, c1 = (list(coef) + [0.0, 0.0])[:2]
            drift = lambda x: -(c0 * np.atleast_2d(x) + c1 * np.atleast_2d(x) ** 3)
        diff = lambda x: np.broadcast_to(B, (np.atleast_2d(x).shape[0],) + B.shape)
        common["required"] = ("A_b", "A_sigma_a")
        return DiffusionScenario(label=label, dim=d, drift=drift, diffusion=diff, sigma_const=B,
                                 observable=obs, obs_dim=q, **common)
    raise ValueError(f"drift: unknown form {dform!r} (available: linear, cubic, odd-cubic)")


def load_scenario_file(path) -> tuple:
    """Read a scenario file; returns ``(scenario, raw_scenario_mapping, run_mapping)``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        cp.read_file(fh)
    if "scenario" not in cp:
        raise ValueError(f"{path}: missing [scenario] section")
    extra = set(cp.sections()) - {"scenario", "run"}
    if extra:
        raise ValueError(f"{path}: unknown section(s) {', '.join(sorted(extra))}")
    smap = dict(cp["scenario"])
    rmap = dict(cp["run"]) if "run" in cp else {}
    return scenario_from_mapping(smap), smap, rmap

"""Path simulation and accumulation of the additive functional, corrector and martingale.

Paths are grouped in fixed-size blocks. Every block draws from its own
counter-based Philox stream keyed by ``(seed, block index)``, so results do not
depend on how many workers process the blocks or in which order.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .corrector import Corrector
from .models import Density1D, DiffusionScenario, SamplingGrid, check_assumptions

Array = np.ndarray

SCHEMES = ("auto", "euler", "tamed_euler", "exact_linear")


class SimulationAbort(RuntimeError):
    """Too many paths produced non-finite values."""


@dataclass(frozen=True)
class SimConfig:
    checkpoints: tuple
    h: float = 1e-2
    n_paths: int = 1000
    seed: int = 0
    scheme: str = "auto"
    stationary: bool = False
    burn_in: Optional[float] = None
    block_size: int = 4096
    record_bracket: bool = True
    abort_fraction: float = 1e-3
    x0: Optional[tuple] = None

    def __post_init__(self):
        cps = tuple(float(t) for t in np.atleast_1d(self.checkpoints))
        object.__setattr__(self, "checkpoints", cps)
        if not cps or any(t <= 0 for t in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be positive and strictly increasing")
        if not self.h > 0:
            raise ValueError("h must be positive")
        spacing = min(np.diff((0.0,) + cps))
        if self.h > spacing / 10 + 1e-15:
            raise ValueError(f"h = {self.h} exceeds a tenth of the checkpoint spacing {spacing}")
        for t in cps:
            k = round(t / self.h)
            if abs(k * self.h - t) > 1e-9 * max(1.0, t):
                raise ValueError(f"checkpoint {t} is not a multiple of h = {self.h}")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def steps(self) -> tuple:
        return tuple(int(round(t / self.h)) for t in self.checkpoints)

    def as_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# random streams


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Philox stream for one block of paths, keyed by the block index."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def sample_density(p: Density1D, n: int, rng: np.random.Generator) -> Array:
    """Inverse-CDF sampling from a tabulated density."""
    from scipy.integrate import cumulative_trapezoid

    cdf = cumulative_trapezoid(p.p, p.grid, initial=0.0)
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, p.grid)


# --------------------------------------------------------------------------
# one-step maps


def _diffusion_term(s: DiffusionScenario, x: Array, xi: Array) -> Array:
    if s.sigma_const is not None:
        return xi @ s.sigma_const.T
    return np.einsum("nij,nj->ni", s.diffusion(x), xi)


def step_euler(s: DiffusionScenario, x: Array, h: float, xi: Array) -> Array:
    """Euler-Maruyama step ``x + b(x) h + sigma(x) sqrt(h) xi``."""
    if h <= 0:
        raise ValueError("h must be positive")
    return x + s.drift(x) * h + _diffusion_term(s, x, xi) * math.sqrt(h)


def step_tamed_euler(s: DiffusionScenario, x: Array, h: float, xi: Array) -> Array:
    """Tamed Euler step; the drift is replaced by ``b(x) / (1 + h |b(x)|)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    b = s.drift(x)
    nb = np.sqrt(np.einsum("ni,ni->n", b, b))[:, None]
    return x + b * h / (1.0 + h * nb) + _diffusion_term(s, x, xi) * math.sqrt(h)


class ExactLinearStep:
    """Exact transition ``X_{t+h} ~ N(e^{hA} x, P_h)`` of a linear system."""

    def __init__(self, A, B, h: float):
        if h <= 0:
            raise ValueError("h must be positive")
        self.h = h
        self.E = linalg.mat_exp(A, h)
        self.P_h = linalg.covariance_horizon(A, B, h)
        # rank-revealing square factor, so degenerate noise directions are allowed
        self.L = linalg.psd_factor(self.P_h, rank_tol=1e-14)

    def __call__(self, x: Array, xi: Array) -> Array:
        return x @ self.E.T + xi @ self.L.T


def step_exact_linear(A, B, x: Array, h: float, xi: Array) -> Array:
    return ExactLinearStep(A, B, h)(np.atleast_2d(x), np.atleast_2d(xi))


def superlinear(s: DiffusionScenario) -> bool:
    """True when the fitted drift-growth exponent exceeds one."""
    if s.linear_part is not None:
        return False
    rep = check_assumptions(s, SamplingGrid(n_pairs=16, n_radial=24))
    return rep.constants.get("alpha", 1.0) > 1.0 + 1e-9


def resolve_scheme(s: DiffusionScenario, scheme: str) -> str:
    if scheme == "auto":
        if s.linear_part is not None:
            return "exact_linear"
        return "tamed_euler" if superlinear(s) else "euler"
    if scheme == "exact_linear" and s.linear_part is None:
        raise ValueError("exact_linear needs a linear scenario")
    return scheme


def relaxation_time(s: DiffusionScenario) -> float:
    """Inverse contraction rate of the drift on the unit sphere."""
    z = SamplingGrid(c_radius=0.999, r_max=1.001, n_radial=2).annulus(s.dim)
    rate = np.median(-np.einsum("ni,ni->n", z, s.drift(z)) / np.einsum("ni,ni->n", z, z))
    if not rate > 0:
        raise ValueError("drift is not contracting near the unit sphere; give burn_in explicitly")
    return float(1.0 / rate)


# --------------------------------------------------------------------------
# ensembles


@dataclass
class PathEnsemble:
    """Per-path values at each checkpoint.

    Arrays are indexed ``[path, checkpoint, ...]``. ``S`` is the normalized
    additive functional, ``corrector_term`` is ``(U(x) - U(X_t)) / t^kappa``,
    ``M`` the martingale ``U(X_t) - U(x) + int_0^t H ds`` and ``bracket`` its
    quadratic variation ``int_0^t grad U a grad U^T ds``.
    """

    times: Array
    kappa: float
    S: Array
    corrector_term: Array
    M: Array
    X: Array
    bracket: Optional[Array] = None
    V: Optional[Array] = None
    V_integral: Optional[Array] = None
    label: str = ""
    config: dict = field(default_factory=dict)
    n_aborted: int = 0

    @property
    def n_paths(self) -> int:
        return self.S.shape[0]

    def decomposition_error(self) -> float:
        """Largest path-wise violation of ``S = corrector_term + M / t^kappa``."""
        tk = self.times[None, :, None] ** self.kappa
        diff = self.S - (self.corrector_term + self.M / tk)
        scale = 1.0 + np.abs(self.S) + np.abs(self.M / tk)
        return float(np.nanmax(np.abs(diff) / scale)) if diff.size else 0.0

    def fields(self) -> dict:
        out = {"S": self.S, "corrector": self.corrector_term, "M": self.M, "X": self.X}
        if self.bracket is not None:
            n, k, q, _ = self.bracket.shape
            out["bracket"] = self.bracket.reshape(n, k, q * q)
        if self.V is not None:
            out["V"] = self.V[:, :, None]
            out["V_integral"] = self.V_integral[:, :, None]
        return out

    def config_hash(self) -> str:
        blob = json.dumps({"label": self.label, "kappa": self.kappa, "config": self.config},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_csv(self, fh, comment: bool = True) -> None:
        """Long format: ``path_id,t,field,component,value``."""
        if comment:
            fh.write(f"# label={self.label} config_hash={self.config_hash()} "
                     f"seed={self.config.get('seed')}\n")
        fh.write("path_id,t,field,component,value\n")
        for name, arr in self.fields().items():
            n, k, c = arr.shape
            for i in range(n):
                for j in range(k):
                    for m in range(c):
                        fh.write(f"{i},{float(self.times[j])!r},{name},{m},{float(arr[i, j, m])!r}\n")

    def to_binary(self) -> bytes:
        """Compact dump.

        Layout: magic ``b"MDPE"``, uint32 header length, UTF-8 JSON header (config
        hash, field names and shapes), then little-endian float64 values of each
        field in path-major order.
        """
        fields = self.fields()
        header = {"config_hash": self.config_hash(), "label": self.label, "kappa": self.kappa,
                  "times": [float(t) for t in self.times], "config": self.config,
                  "fields": [[k, list(v.shape)] for k, v in fields.items()]}
        hb = json.dumps(header, sort_keys=True, default=str).encode()
        buf = io.BytesIO()
        buf.write(b"MDPE")
        buf.write(struct.pack("<I", len(hb)))
        buf.write(hb)
        for v in fields.values():
            buf.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
        return buf.getvalue()

    @staticmethod
    def read_binary(data: bytes) -> tuple:
        if data[:4] != b"MDPE":
            raise ValueError("not an ensemble dump")
        (n,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + n].decode())
        pos = 8 + n
        out = {}
        for name, shape in header["fields"]:
            size = int(np.prod(shape))
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
        return header, out


def _simulate_block(s, U, cfg, scheme, exact, stationary_factor, lyap, block, n):
    rng = block_rng(cfg.seed, block)
    d, q, m = s.dim, s.obs_dim, s.noise_dim
    h = cfg.h
    kappa = s.kappa
    x0 = np.asarray(cfg.x0 if cfg.x0 is not None else s.initial_point, dtype=float).reshape(d)
    x = np.broadcast_to(x0, (n, d)).copy()

    if scheme == "exact_linear":
        def step(x, xi):
            return exact(x, xi)
    elif scheme == "tamed_euler":
        def step(x, xi):
            return step_tamed_euler(s, x, h, xi)
    else:
        def step(x, xi):
            return step_euler(s, x, h, xi)

    if cfg.stationary:
        if stationary_factor is not None:
            x = rng.standard_normal((n, d)) @ stationary_factor.T
        else:
            burn = cfg.burn_in if cfg.burn_in is not None else 10 * relaxation_time(s)
            for _ in range(int(round(burn / h))):
                x = step(x, rng.standard_normal((n, m)))
    start = x.copy()
    U0 = U.value(start)

    K = len(cfg.checkpoints)
    steps = cfg.steps
    S = np.zeros((n, K, q))
    corr = np.zeros((n, K, q))
    M = np.zeros((n, K, q))
    X = np.zeros((n, K, d))
    br = np.zeros((n, K, q, q)) if cfg.record_bracket else None
    Vv = np.zeros((n, K)) if lyap else None
    Vi = np.zeros((n, K)) if lyap else None

    intH = np.zeros((n, q))
    qv = np.zeros((n, q, q)) if cfg.record_bracket else None
    intV = np.zeros(n) if lyap else None
    alive = np.ones(n, dtype=bool)
    sig = s.sigma_const

    chunk = 64
    noise = None
    k_total = steps[-1]
    j = 0
    for k in range(k_total):
        if k % chunk == 0:
            noise = rng.standard_normal((min(chunk, k_total - k), n, m))
        Hx = s.observable(x)
        intH += Hx * h
        if qv is not None:
            G = U.grad(x)
            if sig is not None:
                GB = G @ sig
                qv += np.einsum("nqm,nrm->nqr", GB, GB) * h
            else:
                GS = np.einsum("nqi,nij->nqj", G, s.diffusion(x))
                qv += np.einsum("nqm,nrm->nqr", GS, GS) * h
        if lyap:
            intV += lyap[0](x) ** lyap[1] * h
        x = step(x, noise[k % chunk])
        if k % 50 == 49 or k + 1 == k_total:
            bad = ~np.all(np.isfinite(x), axis=1)
            if bad.any():
                alive &= ~bad
                x[bad] = 0.0
        if k + 1 == steps[j]:
            t = cfg.checkpoints[j]
            Ux = U.value(x)
            tk = t ** kappa
            S[:, j] = intH / tk
            corr[:, j] = (U0 - Ux) / tk
            M[:, j] = Ux - U0 + intH
            X[:, j] = x
            if br is not None:
                br[:, j] = qv
            if lyap:
                Vv[:, j] = lyap[0](x)
                Vi[:, j] = intV
            j += 1
    dead = ~alive
    for arr in (S, corr, M, X, br, Vv, Vi):
        if arr is not None:
            arr[dead] = np.nan
    return S, corr, M, X, br, Vv, Vi, int(dead.sum())


def simulate_batch(s: DiffusionScenario, U: Corrector, cfg: SimConfig,
                   lyapunov: Optional[tuple] = None, workers: int = 1) -> PathEnsemble:
    """Simulate ``cfg.n_paths`` independent paths and record every functional.

    ``lyapunov`` is an optional pair ``(V, ell)`` with ``V`` vectorized
    ``(n, d) -> (n,)``; ``V(X_t)`` and ``int_0^t V^ell ds`` are then recorded.
    Integrals use left-point Riemann sums on the step grid.
    """
    if U.dim != s.dim or U.obs_dim != s.obs_dim:
        raise ValueError("corrector does not match the scenario dimensions")
    scheme = resolve_scheme(s, cfg.scheme)
    exact = ExactLinearStep(*s.linear_part, cfg.h) if scheme == "exact_linear" else None
    factor = None
    if cfg.stationary and s.linear_part is not None:
        A, B = s.linear_part
        factor = linalg.psd_factor(linalg.solve_lyapunov(A, B @ B.T))
    sizes = [min(cfg.block_size, cfg.n_paths - i) for i in range(0, cfg.n_paths, cfg.block_size)]

    def run(b):
        return _simulate_block(s, U, cfg, scheme, exact, factor, lyapunov, b, sizes[b])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]

    def cat(i):
        if parts[0][i] is None:
            return None
        return np.concatenate([p[i] for p in parts], axis=0)

    n_aborted = sum(p[7] for p in parts)
    config = cfg.as_dict()
    config["scheme_resolved"] = scheme
    ens = PathEnsemble(np.asarray(cfg.checkpoints), s.kappa, cat(0), cat(1), cat(2), cat(3),
                       cat(4), cat(5), cat(6), s.label, config, n_aborted)
    if n_aborted > cfg.abort_fraction * cfg.n_paths:
        raise SimulationAbort(f"{n_aborted} of {cfg.n_paths} paths produced non-finite values")
    err = ens.decomposition_error()
    if err > 1e-9:
        raise ArithmeticError(f"decomposition identity violated by {err:.2e}")
    return ens


def pilot_step_size(s: DiffusionScenario, t_end: float, h0: float = 1e-2, n_paths: int = 256,
                    rel_tol: float = 0.01, max_halvings: int = 6, seed: int = 0) -> float:
    """Halve ``h`` until ``S`` at ``t_end`` moves by less than ``rel_tol`` (coupled noise).

    Coarse and fine paths share Brownian increments: every coarse increment
    is the normalized sum of two fine ones.
    """
    scheme = "tamed_euler" if superlinear(s) else "euler"
    stepper = step_tamed_euler if scheme == "tamed_euler" else step_euler
    h = h0
    for _ in range(max_halvings):
        rng = block_rng(seed, 0)
        n_coarse = int(round(t_end / h))
        xc = np.broadcast_to(s.initial_point, (n_paths, s.dim)).copy()
        xf = xc.copy()
        ic = np.zeros((n_paths, s.obs_dim))
        i_f = np.zeros_like(ic)
        for _k in range(n_coarse):
            xi = rng.standard_normal((2, n_paths, s.noise_dim))
            ic += s.observable(xc) * h
            xc = stepper(s, xc, h, (xi[0] + xi[1]) / math.sqrt(2))
            for half in xi:
                i_f += s.observable(xf) * (h / 2)
                xf = stepper(s, xf, h / 2, half)
        diff = np.sqrt(np.mean((ic - i_f) ** 2))
        size = np.sqrt(np.mean(i_f ** 2))
        if diff <= rel_tol * size:
            return h
        h /= 2
    return h

"""Drift estimation for the Ornstein-Uhlenbeck process ``dX = -theta X dt + sigma dW``.

The estimator is ``theta_hat = -int X dX / int X^2 ds``. Writing
``dX = -theta X dt + sigma dW`` gives
``theta - theta_hat = sigma int X dW / int X^2 ds``, so the normalized error
``t^{1-kappa}(theta - theta_hat)`` behaves like the martingale
``t^{-kappa} int 2 theta X dW`` whose bracket ``int 4 theta^2 X^2 ds`` grows
like ``2 theta t``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .mdp import speed, tail_curve
from .sim import ExactLinearStep, SimConfig, block_rng


def theta_hat(int_xdx, int_x2):
    """Ratio estimate; entries with a non-positive denominator become NaN."""
    num = np.asarray(int_xdx, dtype=float)
    den = np.asarray(int_x2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, -num / np.where(den > 0, den, 1.0), np.nan)
    return out if out.ndim else float(out)


def ito_xdx(x_t, x0, t, sigma: float = 1.0):
    """``int_0^t X dX = (X_t^2 - x^2 - sigma^2 t) / 2`` by Ito's formula."""
    return 0.5 * (np.asarray(x_t) ** 2 - x0 ** 2 - sigma ** 2 * t)


def euler_ou_path(dW, h: float, theta: float, x0: float = 0.0, sigma: float = 1.0):
    """Euler path of the OU equation driven by given Brownian increments."""
    dW = np.asarray(dW, dtype=float)
    x = np.empty(dW.shape[-1] + 1)
    x[0] = x0
    for k, w in enumerate(dW):
        x[k + 1] = x[k] - theta * x[k] * h + sigma * w
    return x


def path_integrals(x, h: float):
    """Left-point ``int X dX`` and ``int X^2 ds`` of a discrete path."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(x[:-1] * np.diff(x))), float(np.sum(x[:-1] ** 2) * h)


@dataclass
class EstimatorRun:
    """Per path and checkpoint: ``theta_hat``, ``t^{1-kappa}(theta - theta_hat)`` and raw integrals.

    ``int_xdx`` comes from Ito's formula; ``int_xdx_sum`` is the left-point
    sum kept as a discretization check. ``martingale`` holds
    ``t^{-kappa} int 2 theta X dW`` recovered from ``int X dX + theta int X^2 ds``.
    """

    theta: float
    kappa: float
    times: np.ndarray
    theta_hat: np.ndarray
    normalized_error: np.ndarray
    int_xdx: np.ndarray
    int_xdx_sum: np.ndarray
    int_x2: np.ndarray
    martingale: np.ndarray
    n_excluded: int = 0
    config: dict = field(default_factory=dict)

    def ito_discrepancy(self) -> np.ndarray:
        return np.abs(self.int_xdx - self.int_xdx_sum)

    def step_size_flag(self, h: float) -> bool:
        """True when the mean Ito discrepancy exceeds ``h t`` at some checkpoint."""
        return bool(np.any(np.nanmean(self.ito_discrepancy(), axis=0) > h * self.times))


def _estimator_block(theta, sigma, x0, cfg: SimConfig, step: ExactLinearStep, block, n):
    rng = block_rng(cfg.seed, block)
    steps = cfg.steps
    K = len(steps)
    x = np.full(n, float(x0))
    if cfg.stationary:
        x = rng.standard_normal(n) * sigma / math.sqrt(2 * theta)
    start = x.copy()
    s_x2 = np.zeros(n)
    s_xdx = np.zeros(n)
    out_x = np.zeros((n, K))
    out_x2 = np.zeros((n, K))
    out_xdx = np.zeros((n, K))
    E = float(step.E[0, 0])
    L = float(step.L[0, 0])
    h = cfg.h
    j = 0
    chunk = 64
    total = steps[-1]
    for k0 in range(0, total, chunk):
        xi = rng.standard_normal((min(chunk, total - k0), n))
        for i, z in enumerate(xi):
            x_new = E * x + L * z
            s_x2 += x * x * h
            s_xdx += x * (x_new - x)
            x = x_new
            if k0 + i + 1 == steps[j]:
                out_x[:, j] = x
                out_x2[:, j] = s_x2
                out_xdx[:, j] = s_xdx
                j += 1
    return start, out_x, out_x2, out_xdx


def simulate_estimator(theta: float, kappa: float, cfg: SimConfig, sigma: float = 1.0,
                       workers: int = 1) -> EstimatorRun:
    """Exact-transition OU paths and the estimator at each checkpoint.

    ``cfg.x0`` (default 0) is the fixed start; ``cfg.stationary`` draws it
    from ``N(0, sigma^2 / (2 theta))`` instead.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not 0.5 < kappa < 1:
        raise ValueError("kappa must lie in (1/2, 1)")
    x0 = float(np.asarray(cfg.x0 if cfg.x0 is not None else 0.0).reshape(-1)[0])
    step = ExactLinearStep([[-theta]], [[sigma]], cfg.h)
    sizes = [min(cfg.block_size, cfg.n_paths - i) for i in range(0, cfg.n_paths, cfg.block_size)]

    def run(b):
        return _estimator_block(theta, sigma, x0, cfg, step, b, sizes[b])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    start, xt, x2, xdx_sum = (np.concatenate([p[i] for p in parts]) for i in range(4))
    t = np.asarray(cfg.checkpoints)
    xdx = ito_xdx(xt, start[:, None], t[None, :], sigma)
    th = theta_hat(xdx, x2)
    bad = ~np.isfinite(th)
    err = t ** (1 - kappa) * (theta - th)
    mart = 2 * theta * t ** (-kappa) * (xdx + theta * x2) / sigma
    conf = cfg.as_dict()
    conf.update(theta=theta, kappa=kappa, sigma=sigma)
    return EstimatorRun(theta, kappa, t, th, err, xdx, xdx_sum, x2, mart,
                        int(np.any(bad, axis=1).sum()), conf)


# --------------------------------------------------------------------------
# oracles


def expected_x2_integral(theta: float, t: float, x0: float = 0.0, sigma: float = 1.0,
                         stationary: bool = False) -> float:
    """``E int_0^t X_s^2 ds`` for the OU process."""
    var_inf = sigma ** 2 / (2 * theta)
    if stationary:
        return var_inf * t
    decay = (1 - math.exp(-2 * theta * t)) / (2 * theta)
    return var_inf * t + (x0 ** 2 - var_inf) * decay


def estimator_oracle(theta: float, kappa: float, delta: float, t: float, x0: float = 0.0,
                     sigma: float = 1.0, stationary: bool = False) -> float:
    """Delta-method Gaussian value of ``rho(t) log P(t^{1-kappa} |theta - theta_hat| > delta)``.

    Linearizing the ratio around the mean of its denominator gives
    ``theta - theta_hat ~ sigma int X dW / E int X^2 ds`` whose variance is
    ``sigma^2 / E int X^2 ds`` by the Ito isometry.
    """
    if delta == 0:
        return 0.0
    var = sigma ** 2 / expected_x2_integral(theta, t, x0, sigma, stationary)
    z = delta * t ** (kappa - 1) / math.sqrt(var)
    return float(speed(t, kappa) * (math.log(2.0) + log_ndtr(-z)))


def estimator_reference(theta: float, delta: float) -> float:
    """``-delta^2 / (4 theta)``."""
    return -delta * delta / (4 * theta)


@dataclass
class EstimatorExperiment:
    run: EstimatorRun
    error_curves: dict
    martingale_curves: dict
    bracket_curves: dict
    oracle: dict

    def all_curves(self):
        for d, c in self.error_curves.items():
            yield f"error_delta={d:g}", c
        for d, c in self.martingale_curves.items():
            yield f"martingale_delta={d:g}", c
        for e, c in self.bracket_curves.items():
            yield f"bracket_eps={e:g}", c


def estimator_mdp_experiment(theta: float, kappa: float, cfg: SimConfig,
                             deltas: Sequence[float] = (1.0,), eps: Sequence[float] = (0.2,),
                             workers: int = 1) -> EstimatorExperiment:
    """Tail curves of the normalized estimator error, of its martingale and of the bracket.

    Error curves carry the reference ``-delta^2 / (4 theta)``; bracket curves
    ``|int 4 theta^2 X^2 ds - 2 theta t| > t eps`` carry the divergence marker.
    """
    run = simulate_estimator(theta, kappa, cfg, workers=workers)
    valid = np.isfinite(run.normalized_error)
    t = run.times
    x0 = float(np.asarray(cfg.x0 if cfg.x0 is not None else 0.0).reshape(-1)[0])
    errs, marts, brs, orc = {}, {}, {}, {}
    for d in deltas:
        ref = estimator_reference(theta, d)
        with np.errstate(invalid="ignore"):
            errs[d] = tail_curve(t, np.abs(run.normalized_error) > d, kappa, ref,
                                 label=f"estimator_error:{d:g}", valid=valid)
        marts[d] = tail_curve(t, np.abs(run.martingale) > d, kappa, ref,
                              label=f"estimator_martingale:{d:g}")
        orc[d] = np.array([estimator_oracle(theta, kappa, d, tt, x0, stationary=cfg.stationary)
                           for tt in t])
    surrogate = 4 * theta ** 2 * run.int_x2
    for e in eps:
        brs[e] = tail_curve(t, np.abs(surrogate - 2 * theta * t) > t * e, kappa,
                            label=f"estimator_bracket:{e:g}")
    return EstimatorExperiment(run, errs, marts, brs, orc)

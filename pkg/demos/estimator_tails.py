"""Moderate deviations of the drift estimator of an Ornstein-Uhlenbeck process.

theta_hat = -int X dX / int X^2. The normalized error t^(1-kappa) (theta - theta_hat)
is compared with its martingale approximation and with a Gaussian oracle from
the delta method; the limit level is -delta^2 / (4 theta).

    python3 demos/estimator_tails.py
"""

import numpy as np

from moddev.estimator import estimator_mdp_experiment
from moddev.sim import SimConfig


def main():
    cfg = SimConfig(checkpoints=(50.0, 100.0, 200.0), h=0.02, n_paths=20_000, seed=3)
    ex = estimator_mdp_experiment(1.0, 0.6, cfg)
    err, mart = ex.error_curves[1.0], ex.martingale_curves[1.0]
    print(f"reference level {err.reference}")
    print("   t    error    martingale   oracle")
    for i, t in enumerate(ex.run.times):
        print(f"{t:5.0f}  {err.rho_log_p[i]:7.4f}  {mart.rho_log_p[i]:9.4f}  {ex.oracle[1.0][i]:8.4f}")

    th = ex.run.theta_hat
    bias = np.nanmean(th, axis=0) - 1.0
    print("\nmean bias of theta_hat, with t * bias (about 2 from a zero start):")
    for t, b in zip(ex.run.times, bias):
        print(f"{t:5.0f}  {b:.4f}  {t * b:.2f}")


if __name__ == "__main__":
    main()

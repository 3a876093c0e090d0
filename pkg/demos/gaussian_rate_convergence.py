"""How slowly the Gaussian tail curve reaches its limit.

For the Ornstein-Uhlenbeck process with H(x) = x, the integral is exactly
Gaussian, so rho(t) log P(|t^-kappa int X| > 1) is available in closed form.
The limit is -1/2, but the log prefactor of the Gaussian tail decays only
like log(t) / t^(2 kappa - 1), which at kappa = 0.6 is painfully slow.

    python3 demos/gaussian_rate_convergence.py
"""

import numpy as np

from moddev import mdp
from moddev.corrector import closed_form_corrector
from moddev.models import builtin_scenario
from moddev.sim import SimConfig, simulate_batch


def main():
    A, B = np.array([[-1.0]]), np.array([[1.0]])
    print("   t        exact rate (stationary start)")
    for t in (25, 400, 1e4, 1e6, 1e10):
        print(f"{t:8.0e}  {mdp.gaussian_exact_rate(A, B, [[1.0]], 0.6, 1.0, t):.4f}")

    s = builtin_scenario("ou-linear").replace(kappa=0.6)
    times = (25.0, 50.0, 100.0, 200.0)
    ens = simulate_batch(s, closed_form_corrector(s),
                         SimConfig(checkpoints=times, h=0.1, n_paths=20_000, seed=2,
                                   record_bracket=False))
    curve = mdp.empirical_rate_curve(ens, "norm_S", 1.0, Q=[[1.0]])
    print("\n   t   Monte Carlo   +/- SE    exact (from 0)")
    for t, v, se in zip(times, curve.rho_log_p, curve.se_log):
        ex = mdp.gaussian_exact_rate(A, B, [[1.0]], 0.6, 1.0, t, stationary=False)
        print(f"{t:5.0f}   {v:9.4f}   {se:7.4f}   {ex:9.4f}")


if __name__ == "__main__":
    main()

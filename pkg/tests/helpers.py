import numpy as np

from moddev.models import linear_scenario


def random_hurwitz(rng, d, margin=0.2):
    """Random ``d x d`` matrix shifted so every eigenvalue has real part below ``-margin``."""
    A = rng.normal(size=(d, d))
    shift = max(0.0, np.linalg.eigvals(A).real.max()) + margin + rng.random()
    return A - shift * np.eye(d)


def quadratic_system(rng, d=2):
    """Random stable linear system with a centered quadratic observable."""
    from moddev.linalg import solve_lyapunov

    A = random_hurwitz(rng, d, margin=0.3)
    B = rng.normal(size=(d, d))
    G = rng.normal(size=(d, d))
    G = G @ G.T
    P = solve_lyapunov(A, B @ B.T)
    c = float(np.trace(G @ P))

    def H(x, G=G, c=c):
        x = np.atleast_2d(x)
        return (np.einsum("ni,ij,nj->n", x, G, x) - c)[:, None]

    s = linear_scenario("random-quadratic", A, B, H, 1, quadratic_form=G,
                        obs_grad=lambda x, G=G: (np.atleast_2d(x) @ (G + G.T))[:, None, :])
    return s, A, B, G

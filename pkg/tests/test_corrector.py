import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moddev import corrector as cr
from moddev import linalg
from moddev.models import (builtin_scenario, invariant_density_1d,
                           linear_scenario, sign_split)

from .helpers import quadratic_system, random_hurwitz

GRID = np.linspace(-3, 3, 61)[:, None]
OFF_ZERO = np.array([-2.5, -1.1, -0.4, 0.3, 0.9, 2.2])[:, None]


def _ou_with(H, q=1, **kw):
    return linear_scenario("ou", [[-1.0]], [[1.0]], H, q, **kw)


def _sign_oracle(x):
    """``U(x) = int_0^1 erf(x u / sqrt(1 - u^2)) du / u`` for OU with ``H = sign``."""
    mp.mp.dps = 30
    return float(mp.quad(lambda u: mp.erf(x * u / mp.sqrt(1 - u * u)) / u,
                         [0, 0.5, 0.9, 0.99, 0.999, 1]))


# ---------------------------------------------------------------- one-dimensional Poisson


def test_cubic_poisson_gradient_is_one():
    s = builtin_scenario("cubic")
    p = invariant_density_1d(s, (-3, 3))
    U = cr.solve_poisson_1d(s, p)
    g = U.grad(GRID)[:, 0, 0]
    assert np.max(np.abs(g - 1)) <= 1e-3


def test_ou_linear_poisson_is_identity():
    s = builtin_scenario("ou-linear")
    p = invariant_density_1d(s, (-3, 3))
    U = cr.solve_poisson_1d(s, p)
    np.testing.assert_allclose(U.value(GRID)[:, 0], GRID[:, 0], atol=1e-4)
    assert np.max(np.abs(U.residual(s, GRID))) <= 1e-3


def test_zero_observable_gives_zero_corrector():
    s = builtin_scenario("cubic").replace(observable=lambda x: np.zeros((np.atleast_2d(x).shape[0], 1)))
    p = invariant_density_1d(s, (-3, 3))
    U = cr.solve_poisson_1d(s, p)
    assert not U.value(GRID).any() and not U.grad(GRID).any()
    Q = cr.compute_Q_stationary(s, U, p)
    assert Q.scalar == 0.0


def test_uncentered_observable_rejected():
    s = builtin_scenario("cubic")
    p = invariant_density_1d(s, (-3, 3))
    with pytest.raises(ValueError, match="centered"):
        cr.solve_poisson_1d(s, p, observable=lambda x: np.atleast_2d(x) ** 2)


def test_poisson_needs_one_dimension():
    s = builtin_scenario("langevin")
    p = invariant_density_1d(builtin_scenario("cubic"), (-3, 3))
    with pytest.raises(ValueError):
        cr.solve_poisson_1d(s, p)


def test_tabulated_gradient_consistent_with_values():
    s = builtin_scenario("ou-sign")
    p = invariant_density_1d(s, (-3, 3))
    U = cr.solve_poisson_1d(s, p)
    g, u, du = U.data["grid"], U.data["U"][:, 0], U.data["dU"][:, 0]
    # interval slopes against endpoint averages; second order even at the kink of U' at 0
    slope = np.diff(u) / np.diff(g)
    assert np.max(np.abs(slope - 0.5 * (du[1:] + du[:-1]))) <= 1e-4


def test_tabulated_corrector_normalized():
    s = builtin_scenario("cubic")
    p = invariant_density_1d(s, (-3, 3))
    U = cr.solve_poisson_1d(s, p)
    assert abs(p.expect(U.data["U"])[0]) <= 1e-10


def test_tabulated_csv_export(tmp_path):
    s = builtin_scenario("quadratic-sign")
    p = invariant_density_1d(s, (-3, 3), npoints=201)
    U = cr.solve_poisson_1d(s, p)
    f = tmp_path / "u.csv"
    U.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "x,U_0,U_1,dU_0,dU_1"
    assert len(lines) == 202
    row = [float(v) for v in lines[5].split(",")]
    assert row[0] == U.data["grid"][4] and row[2] == U.data["U"][4, 1]
    with pytest.raises(ValueError):
        cr.closed_form_corrector(builtin_scenario("cubic")).to_csv(f)


# ---------------------------------------------------------------- quadratic correctors


def test_quadratic_scalar_example():
    U = cr.solve_poisson_quadratic([[-1.0]], [[1.0]], [[1.0]])
    assert abs(U.data["Upsilon"][0, 0] - 0.5) <= 1e-12
    assert abs(U.data["upsilon"] - 0.5) <= 1e-12


def test_quadratic_zero_gamma():
    U = cr.solve_poisson_quadratic(-np.eye(2), np.eye(2), np.zeros((2, 2)))
    assert not U.data["Upsilon"].any() and U.data["upsilon"] == 0.0


def test_quadratic_rejects_bad_input():
    with pytest.raises(linalg.NotHurwitzError):
        cr.solve_poisson_quadratic([[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        cr.solve_poisson_quadratic([[-1.0]], [[1.0]], [[-1.0]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_quadratic_random_residual_and_trace_identity(seed):
    rng = np.random.default_rng(seed)
    s, A, B, G = quadratic_system(rng)
    U = cr.solve_poisson_quadratic(A, B, G)
    Y = U.data["Upsilon"]
    assert linalg.is_symmetric(Y)
    assert np.linalg.norm(Y @ A + A.T @ Y + G) <= 1e-10 * max(1.0, np.linalg.norm(G))
    Gh = cr._psd_sqrt(G)
    assert abs(U.data["upsilon"] - np.trace(Gh @ U.data["P"] @ Gh)) <= 1e-8 * max(1, U.data["upsilon"])
    x = rng.normal(size=(5, 2))
    np.testing.assert_allclose(U.grad(x)[:, 0, :], 2 * x @ Y, atol=1e-12)
    scale = max(1.0, float(np.abs(s.observable(x)).max()))
    assert np.max(np.abs(U.residual(s, x))) <= 1e-3 * scale


# ---------------------------------------------------------------- Gaussian-kernel correctors


def test_gaussian_corrector_matches_poisson_for_ou_linear():
    s = builtin_scenario("ou-linear")
    U = cr.corrector_linear_gaussian(s)
    x = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(U.value(x)[:, 0], x[:, 0], atol=1e-4)
    np.testing.assert_allclose(U.grad(x)[:, 0, 0], 1.0, atol=1e-4)


def test_gaussian_corrector_sign_against_erf_oracle():
    s = builtin_scenario("ou-sign")
    U = cr.corrector_linear_gaussian(s)
    xs = [-1.3, -0.2, 1e-3, 0.7, 2.0]
    got = U.value(np.array(xs)[:, None])[:, 0]
    want = np.array([_sign_oracle(x) for x in xs])
    assert np.max(np.abs(got - want)) <= 1e-10


def test_gaussian_corrector_sign_matches_poisson():
    s = builtin_scenario("ou-sign")
    Ug = cr.corrector_linear_gaussian(s)
    p = invariant_density_1d(s, (-3, 3))
    Up = cr.solve_poisson_1d(s, p)
    x = np.linspace(-2.5, 2.5, 11)[:, None]
    assert np.max(np.abs(Ug.value(x) - Up.value(x))) <= 1e-3
    g = Ug.grad(OFF_ZERO)
    assert np.max(np.abs(g - Up.grad(OFF_ZERO))) <= 1e-3
    # bounded gradient: U' = 2 e^{x^2} int_x^inf sign p / p <= sqrt(2 pi)
    assert np.all(np.abs(Up.data["dU"]) <= math.sqrt(2 * math.pi))


def test_gaussian_corrector_adaptive_route_agrees():
    s = builtin_scenario("ou-sign")
    x = np.array([[-1.0], [0.5]])
    a = cr.corrector_linear_gaussian(s, spatial="adaptive").value(x)
    b = cr.corrector_linear_gaussian(s, spatial="piecewise").value(x)
    assert np.max(np.abs(a - b)) <= 1e-8


def test_gaussian_corrector_zero_observable():
    A = random_hurwitz(np.random.default_rng(3), 2)
    s = linear_scenario("zero", A, np.eye(2), lambda x: np.zeros((np.atleast_2d(x).shape[0], 1)), 1)
    U = cr.corrector_linear_gaussian(s, order=8)
    x = np.random.default_rng(4).normal(size=(4, 2))
    assert not U.value(x).any()


def test_gaussian_corrector_rejects_non_hurwitz():
    with pytest.raises(linalg.NotHurwitzError):
        cr.corrector_linear_gaussian(_ou_with(lambda x: np.atleast_2d(x)).replace(
            linear_part=(np.array([[0.0]]), np.array([[1.0]])),
            drift=lambda x: np.zeros_like(np.atleast_2d(x))))


def test_gaussian_corrector_quadratic_matches_closed_form():
    rng = np.random.default_rng(11)
    s, A, B, G = quadratic_system(rng)
    Uq = cr.solve_poisson_quadratic(A, B, G)
    Ug = cr.corrector_linear_gaussian(s, order=6)
    x = rng.normal(size=(6, 2))
    # the Gaussian-kernel corrector has zero stationary mean; <x, Y x> - tr(B^T Y B) has mean
    # tr(Y P) - tr(B^T Y B), a constant that cancels in M_t and Q
    offset = np.trace(Uq.data["Upsilon"] @ Uq.data["P"]) - Uq.data["upsilon"]
    np.testing.assert_allclose(Ug.value(x), Uq.value(x) - offset, atol=1e-8)
    np.testing.assert_allclose(Ug.grad(x), Uq.grad(x), atol=1e-8)


# ---------------------------------------------------------------- generator substitution


def _correctors():
    cubic = builtin_scenario("cubic")
    pc = invariant_density_1d(cubic, (-3, 3))
    ous = builtin_scenario("ou-sign")
    pos = invariant_density_1d(ous, (-3, 3))
    return [
        ("cubic closed form", cubic, cr.closed_form_corrector(cubic), GRID),
        ("cubic tabulated", cubic, cr.solve_poisson_1d(cubic, pc), GRID[3:-3]),
        ("ou-sign tabulated", ous, cr.solve_poisson_1d(ous, pos), OFF_ZERO),
        ("ou-sign gaussian", ous, cr.corrector_linear_gaussian(ous), OFF_ZERO),
        ("ou-quadratic closed form", builtin_scenario("ou-quadratic"),
         cr.closed_form_corrector(builtin_scenario("ou-quadratic")), GRID),
        ("langevin closed form", builtin_scenario("langevin"),
         cr.closed_form_corrector(builtin_scenario("langevin")),
         np.random.default_rng(0).normal(size=(8, 2))),
        ("smooth-component closed form", builtin_scenario("smooth-component"),
         cr.closed_form_corrector(builtin_scenario("smooth-component")),
         np.random.default_rng(1).normal(size=(8, 3))),
    ]


@pytest.mark.parametrize("label,s,U,x", _correctors(), ids=lambda v: v if isinstance(v, str) else "")
def test_generator_substitution(label, s, U, x):
    assert np.max(np.abs(U.residual(s, x))) <= 1e-3, label


def test_sign_split_linearity():
    s = builtin_scenario("ou-sign")
    p = invariant_density_1d(s, (-3, 3))
    U = cr.solve_poisson_1d(s, p)
    U1 = cr.solve_poisson_1d(s, p, observable=lambda x: sign_split(x)[0])
    U2 = cr.solve_poisson_1d(s, p, observable=lambda x: sign_split(x)[1])
    x = np.linspace(-2.5, 2.5, 21)[:, None]
    both = U1 + U2
    assert np.max(np.abs(both.value(x) - U.value(x))) <= 1e-3
    assert np.max(np.abs(both.grad(x) - U.grad(x))) <= 1e-3
    np.testing.assert_allclose(sign_split(x)[0] + sign_split(x)[1], np.sign(x))


# ---------------------------------------------------------------- Q


def test_cubic_Q_is_one():
    s = builtin_scenario("cubic")
    p = invariant_density_1d(s, (-3, 3))
    Q = cr.compute_Q_stationary(s, cr.closed_form_corrector(s), p)
    assert abs(Q.scalar - 1) <= 1e-8
    _, _, Qt = cr.stationary_q_1d(s)
    assert abs(Qt.scalar - 1) <= 1e-4


def test_ou_linear_Q_is_one_by_every_route():
    s = builtin_scenario("ou-linear")
    p = invariant_density_1d(s, (-3, 3))
    assert abs(cr.compute_Q_stationary(s, cr.closed_form_corrector(s), p).scalar - 1) <= 1e-8
    P = cr.LinearKernel(*s.linear_part).P
    assert abs(cr.compute_Q_stationary(s, cr.closed_form_corrector(s), P).scalar - 1) <= 1e-12
    assert abs(cr.compute_Q_green_kubo(s).scalar - 1) <= 1e-8


def test_ou_quadratic_Q_one_half():
    s = builtin_scenario("ou-quadratic")
    gk = cr.compute_Q_green_kubo(s)
    cf = cr.q_closed_form_quadratic([[-1.0]], [[1.0]], [[1.0]])
    assert abs(gk.scalar - 0.5) <= 1e-8 and abs(cf.scalar - 0.5) <= 1e-12


def test_q_closed_form_zero_gamma():
    assert cr.q_closed_form_quadratic(-np.eye(2), np.eye(2), np.zeros((2, 2))).scalar == 0.0


def test_q_literal_form_agrees_only_when_B_commutes():
    rng = np.random.default_rng(5)
    A = random_hurwitz(rng, 2, margin=0.3)
    G = np.array([[2.0, 0.4], [0.4, 1.0]])
    B = 0.7 * np.eye(2)
    assert abs(cr.q_closed_form_quadratic(A, B, G).scalar -
               cr.q_closed_form_quadratic(A, B, G, literal=True).scalar) <= 1e-10
    s, A, B, G = quadratic_system(rng)
    gk = cr.compute_Q_green_kubo(s).scalar
    right = cr.q_closed_form_quadratic(A, B, G).scalar
    literal = cr.q_closed_form_quadratic(A, B, G, literal=True).scalar
    assert abs(gk - right) <= 1e-4 * max(1, gk)
    assert abs(gk - literal) > 1e-2 * gk


def test_ou_sign_Q_two_log_two():
    # stationary autocovariance of sign(X) is (2/pi) arcsin(e^{-t}); its double integral is 2 ln 2
    s = builtin_scenario("ou-sign")
    gk = cr.compute_Q_green_kubo(s)
    assert abs(gk.scalar - 2 * math.log(2)) <= 1e-7
    _, _, st_ = cr.stationary_q_1d(s)
    assert abs(st_.scalar - 2 * math.log(2)) <= 1e-4


def test_hermite_green_kubo_is_inaccurate_for_jumps():
    # documents why discontinuous observables default to the piecewise rule
    s = builtin_scenario("ou-sign")
    bad = cr.compute_Q_green_kubo(s, spatial="hermite").scalar
    assert abs(bad - 2 * math.log(2)) > 1e-2


@pytest.mark.parametrize("name", ["ou-linear", "ou-sign", "quadratic-sign", "ou-quadratic"])
def test_stationary_and_green_kubo_agree(name):
    s = builtin_scenario(name)
    _, _, qs = cr.stationary_q_1d(s)
    gk = cr.compute_Q_green_kubo(s)
    assert np.max(np.abs(qs.Q - gk.Q)) <= max(qs.error + gk.error, 1e-5)


def test_langevin_stationary_and_green_kubo_agree():
    s = builtin_scenario("langevin")
    P = cr.LinearKernel(*s.linear_part).P
    qs = cr.compute_Q_stationary(s, cr.closed_form_corrector(s), P)
    gk = cr.compute_Q_green_kubo(s, order=4)  # exact for linear H
    np.testing.assert_allclose(qs.Q, gk.Q, atol=1e-6)
    # Q = A^{-1} B B^T A^{-T}
    Ai = np.linalg.inv(s.linear_part[0])
    B = s.linear_part[1]
    np.testing.assert_allclose(qs.Q, Ai @ B @ B.T @ Ai.T, atol=1e-12)


def test_cubic_green_kubo_monte_carlo():
    s = builtin_scenario("cubic")
    gk = cr.compute_Q_green_kubo(s, horizon=4.0, n_paths=4000, h=5e-3, seed=1)
    assert abs(gk.scalar - 1) <= 4 * gk.error + 0.02


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5))
def test_Q_invariant_under_constant_shift(c):
    s = builtin_scenario("cubic")
    p = invariant_density_1d(s, (-3, 3), npoints=801)
    U = cr.solve_poisson_1d(s, p)
    assert cr.compute_Q_stationary(s, U.shifted(c), p).Q == cr.compute_Q_stationary(s, U, p).Q


def test_covariance_q_validation():
    with pytest.raises(ValueError):
        cr.CovarianceQ(np.array([[1.0, 0.5], [0.0, 1.0]]), "x")
    with pytest.raises(ValueError):
        cr.CovarianceQ(np.array([[-1.0]]), "x")
    with pytest.raises(ValueError):
        cr.CovarianceQ(np.eye(2), "x").scalar


def test_five_random_systems_closed_form_vs_green_kubo():
    rng = np.random.default_rng(2024)
    for _ in range(5):
        s, A, B, G = quadratic_system(rng)
        gk = cr.compute_Q_green_kubo(s).scalar
        cf = cr.q_closed_form_quadratic(A, B, G).scalar
        assert abs(gk - cf) <= 1e-4 * max(1.0, cf)


def test_affine_corrector_solves_generator_equation():
    rng = np.random.default_rng(11)
    A = random_hurwitz(rng, 3)
    B = rng.normal(size=(3, 3))
    C = rng.normal(size=(2, 3))
    s = linear_scenario("affine", A, B, lambda x: np.atleast_2d(x) @ C.T, 2)
    U = cr.affine_corrector(s)
    x = rng.normal(size=(7, 3))
    # L U = grad U . A x for a linear U, and L U = -H
    np.testing.assert_allclose(np.einsum("nqi,ni->nq", U.grad(x), x @ A.T), -x @ C.T, atol=1e-10)
    gk = cr.compute_Q_green_kubo(s).Q
    st_q = cr.compute_Q_stationary(s, U, linalg.solve_lyapunov(A, B @ B.T)).Q
    np.testing.assert_allclose(st_q, gk, rtol=1e-6, atol=1e-8)


def test_affine_corrector_declines_nonlinear_observables():
    assert cr.affine_corrector(builtin_scenario("ou-sign")) is None
    assert cr.affine_corrector(builtin_scenario("ou-quadratic")) is None
    assert cr.affine_corrector(builtin_scenario("cubic")) is None
    assert cr.affine_corrector(_ou_with(lambda x: np.atleast_2d(x) + 1.0)) is None

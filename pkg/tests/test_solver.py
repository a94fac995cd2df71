"""Implicit one-step integrator tests against closed-form solutions."""

import math

import numpy as np
import pytest

from phsplit import (
    IrregularPencil,
    PHDae,
    SolverScheme,
    Waveform,
    build_model,
    default_scheme,
    default_spec,
    from_function,
    hamiltonian,
    reference_solution,
    solve_linear_dae,
    sup_norm,
)
from phsplit.models import circuit_current


def closed_form_simple(nu, tau, x0):
    """Analytic solution of the damped rotation: exp(-tau t) * rotation(nu t) x0."""

    def x_of_t(t):
        c, s = math.cos(nu * t), math.sin(nu * t)
        rotm = np.array([[c, s], [-s, c]])
        return math.exp(-tau * t) * (rotm @ x0)

    return x_of_t


def test_scalar_decay_both_schemes():
    e = np.eye(1)
    a = -np.eye(1)
    for kind, tol in (("implicit-euler", 2e-3), ("trapezoidal", 1e-6)):
        scheme = SolverScheme(kind, 1.0, 1001)
        f = Waveform(1.0, np.zeros((1001, 1)))
        x = solve_linear_dae(e, a, f, np.array([1.0]), scheme)
        assert x.values[-1, 0] == pytest.approx(math.exp(-1.0), abs=tol)


def test_simple_2x2_closed_form():
    nu, tau = 15.0, 0.01
    sys_ = build_model(default_spec("simple-2x2"))
    oracle = closed_form_simple(nu, tau, sys_.x0)
    scheme = SolverScheme("trapezoidal", 0.5, 4001)
    f = Waveform(0.5, np.zeros((4001, 2)))
    x = solve_linear_dae(sys_.E, (sys_.J - sys_.R) @ sys_.Q, f, sys_.x0, scheme)
    exact = np.vstack([oracle(t) for t in x.grid])
    assert np.abs(x.values - exact).max() < 1e-5


def test_pure_algebraic_row():
    # 0 = -x + c pointwise
    c = 3.5
    scheme = SolverScheme("implicit-euler", 1.0, 101)
    f = Waveform(1.0, np.full((101, 1), c))
    x = solve_linear_dae(np.zeros((1, 1)), -np.eye(1), f, np.array([c]), scheme)
    np.testing.assert_allclose(x.values[:, 0], c, rtol=1e-14)


def test_irregular_pencil_rejected():
    scheme = SolverScheme("trapezoidal", 1.0, 11)
    f = Waveform(1.0, np.zeros((11, 1)))
    with pytest.raises(IrregularPencil):
        solve_linear_dae(np.zeros((1, 1)), np.zeros((1, 1)), f, np.zeros(1), scheme)


def test_inconsistent_algebraic_ic_warns():
    scheme = SolverScheme("implicit-euler", 1.0, 101)
    f = Waveform(1.0, np.full((101, 1), 2.0))
    with pytest.warns(UserWarning, match="inconsistent"):
        x = solve_linear_dae(np.zeros((1, 1)), -np.eye(1), f, np.array([0.0]), scheme)
    np.testing.assert_allclose(x.values[1:, 0], 2.0, rtol=1e-14)


@pytest.mark.parametrize(
    "kind,expected_order", [("implicit-euler", 1.0), ("trapezoidal", 2.0)]
)
def test_convergence_order(kind, expected_order):
    nu, tau, T = 15.0, 0.01, 0.5
    sys_ = build_model(default_spec("simple-2x2"))
    oracle = closed_form_simple(nu, tau, sys_.x0)
    errs = []
    for n in (2001, 4001):
        scheme = SolverScheme(kind, T, n)
        f = Waveform(T, np.zeros((n, 2)))
        x = solve_linear_dae(sys_.E, (sys_.J - sys_.R) @ sys_.Q, f, sys_.x0, scheme)
        exact = np.vstack([oracle(t) for t in x.grid])
        errs.append(np.abs(x.values - exact).max())
    order = math.log2(errs[0] / errs[1])
    assert abs(order - expected_order) <= 0.1


def test_reference_refinement_restricts_to_experiment_grid():
    sys_ = build_model(default_spec("simple-2x2"))
    T, n = 0.5, 501
    u = Waveform(T, np.zeros((n, 1)))
    scheme = SolverScheme("trapezoidal", T, n)
    coarse = reference_solution(sys_, u, refine=1, scheme=scheme)
    fine = reference_solution(sys_, u, refine=4, scheme=scheme)
    assert fine.n_samples == n
    oracle = closed_form_simple(15.0, 0.01, sys_.x0)
    exact = np.vstack([oracle(t) for t in fine.grid])
    assert np.abs(fine.values - exact).max() < np.abs(coarse.values - exact).max()


def test_zero_input_zero_state():
    sys_ = build_model(default_spec("two-mass"))
    zeroed = PHDae(E=sys_.E, J=sys_.J, R=sys_.R, Q=sys_.Q, B=sys_.B,
                   x0=np.zeros(5), partition=sys_.partition)
    u = Waveform(1.0, np.zeros((101, 1)))
    x = reference_solution(zeroed, u, scheme=SolverScheme("trapezoidal", 1.0, 101))
    assert sup_norm(x) == 0.0


def test_circuit_zero_source_stays_zero():
    spec = default_spec("rlc-circuit", N=401)
    sys_ = build_model(spec)
    u = Waveform(spec.T, np.zeros((401, 1)))
    x = reference_solution(sys_, u, scheme=SolverScheme("trapezoidal", spec.T, 401))
    assert sup_norm(x) == 0.0


def test_circuit_algebraic_rows_satisfied_each_step():
    spec = default_spec("rlc-circuit", N=2001)
    sys_ = build_model(spec)
    u = from_function(lambda t: np.array([circuit_current(t)]), spec.T, spec.N)
    scheme = SolverScheme("implicit-euler", spec.T, spec.N)
    x = reference_solution(sys_, u, scheme=scheme)
    # rows with zero E-row enforce 0 = [(J-R)Qx + Bu]_row at every accepted step
    a = (sys_.J - sys_.R) @ sys_.Q
    resid = x.values @ a.T + u.values @ sys_.B.T
    alg_rows = [i for i in range(6) if np.abs(sys_.E[i]).max() == 0.0]
    assert np.abs(resid[1:, alg_rows]).max() < 1e-10


def test_hamiltonian_non_increasing_unforced():
    for kind in ("implicit-euler", "trapezoidal"):
        for name in ("simple-2x2", "two-mass"):
            spec = default_spec(name, N=801)
            sys_ = build_model(spec)
            u = Waveform(spec.T, np.zeros((801, 1)))
            x = reference_solution(sys_, u, scheme=SolverScheme(kind, spec.T, 801))
            ham = hamiltonian(sys_, x).values[:, 0]
            assert np.all(np.diff(ham) <= 1e-14 * max(ham[0], 1.0))


def test_default_scheme_caps_step():
    sys_ = build_model(default_spec("simple-2x2"))
    scheme = default_scheme(sys_, 0.5)
    a_norm = np.linalg.norm((sys_.J - sys_.R) @ sys_.Q, 2)
    assert scheme.h <= min(1.0 / (10 * a_norm), 0.5 / 200) * (1 + 1e-12)

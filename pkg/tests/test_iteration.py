"""Dynamic-iteration engine tests: rates, predictor, fixed points, monotonicity."""

import math

import numpy as np
import pytest

from phsplit import (
    InvalidConfig,
    IterationRecord,
    IterationReport,
    JacobiConfig,
    LMConfig,
    NonInvertibleE,
    PHDae,
    SolverScheme,
    Waveform,
    build_model,
    contraction_factor,
    default_spec,
    from_function,
    jacobi_error_predictor,
    jacobi_run,
    lm_run,
    monotonicity_check,
    optimal_lambda_ode_qi,
    reference_solution,
    split_J,
)

FLOAT32_MAX = 3.4028235e38


def zero_u(T, n, m=1):
    return Waveform(T, np.zeros((n, m)))


def report_from(errs):
    recs = [IterationRecord(k, math.nan, math.nan, e, math.nan, math.nan) for k, e in enumerate(errs)]
    return IterationReport(records=recs)


class TestContractionFactor:
    def test_simple_2x2_closed_form(self):
        # K = 2I - J_o with |K| = 2.5; K + J_o = 2I so |(K+J_o)^-1| = 0.5;
        # q*^2 = 1 - 1/(2.5*0.5) = 0.2; cross-checked against the ODE formula below
        sys_ = build_model(default_spec("simple-2x2", parameters={"nu": 1.5, "tau": 0.0}))
        est = contraction_factor(sys_, alpha=1.0, mu=2.0, lam=0.4)
        assert est.K_norm == pytest.approx(2.5, rel=1e-12)
        assert est.lambda_star == pytest.approx(0.4, rel=1e-12)
        assert est.q_star == pytest.approx(math.sqrt(0.2), rel=1e-12)
        assert est.rank_condition_holds
        # at lam = lambda_star the generic bound equals the optimal one
        assert est.q == pytest.approx(est.q_star, rel=1e-12)
        lam_s, q_s = optimal_lambda_ode_qi(2.0, split_J(sys_).J_o)
        assert lam_s == pytest.approx(est.lambda_star, rel=1e-12)
        assert q_s == pytest.approx(est.q_star, rel=1e-12)

    def test_scaled_decoupled_returns_one_third(self):
        sys_ = build_model(default_spec("scaled-2x2", parameters={"nu": 0.0, "q1": 1.5, "q2": 1.0}))
        est = contraction_factor(sys_, alpha=1.0, mu=2.0, lam=0.5)
        assert est.q_star == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_two_mass_rates(self):
        sys_ = build_model(default_spec("two-mass"))
        est = contraction_factor(sys_, alpha=0.5, mu=2.0, lam=1.5)
        assert 0.970 <= est.q <= 0.980
        assert 0.939 <= est.q_star <= 0.949

    def test_circuit_rates(self):
        sys_ = build_model(default_spec("rlc-circuit"))
        est = contraction_factor(sys_, alpha=0.2, mu=1.0, lam=1.2)
        assert 0.9993 <= est.q < 1.0
        assert 0.9975 <= est.q_star <= 0.9985

    def test_rank_condition_failure_gives_one(self):
        sys_ = build_model(default_spec("simple-2x2"))
        est = contraction_factor(sys_, alpha=1.0, mu=0.0, lam=1.0)
        assert not est.rank_condition_holds
        assert est.q == 1.0
        assert est.q_star == 1.0


class TestOptimalLambdaODE:
    def test_decoupled_zero(self):
        lam_s, q_s = optimal_lambda_ode_qi(2.0, np.zeros((3, 3)))
        assert lam_s == pytest.approx(0.5)
        assert q_s == 0.0

    def test_closed_form_pair(self):
        # mu=2, nu=1.5: sqrt(mu^2+nu^2) = 2.5 exactly
        lam_s, q_s = optimal_lambda_ode_qi(2.0, np.array([[0.0, 1.5], [-1.5, 0.0]]))
        assert lam_s == pytest.approx(0.4, rel=1e-14)
        assert q_s**2 == pytest.approx(0.2, rel=1e-12)

    def test_rate_tends_to_one_for_strong_coupling(self):
        j_o = np.array([[0.0, 1.0], [-1.0, 0.0]])
        q_prev = 0.0
        for scale in (1.0, 10.0, 100.0, 1000.0):
            _, q_s = optimal_lambda_ode_qi(1.0, scale * j_o)
            assert q_s > q_prev
            q_prev = q_s
        assert q_prev > 0.99


class TestErrorPredictor:
    def test_ratio_formula(self):
        pred = jacobi_error_predictor(15.0, 0.01, 0.5, 1.0, 5)
        assert pred.ratio_next == pytest.approx(7.5 / 7.0, rel=1e-14)

    def test_overflow_threshold_at_k40(self):
        # nu*T = 150: the predicted sweep error first exceeds float32 max at k = 40 +- 2
        crossings = [
            k for k in range(60)
            if jacobi_error_predictor(15.0, 0.01, 10.0, 1.0, k).log10_value > math.log10(FLOAT32_MAX)
        ]
        first = crossings[0]
        assert 38 <= first <= 42
        # log-space evaluation: the value itself is still finite in double precision
        assert math.isfinite(jacobi_error_predictor(15.0, 0.01, 10.0, 1.0, first).value)

    def test_ratio_vanishes_for_large_k(self):
        assert jacobi_error_predictor(15.0, 0.01, 0.5, 1.0, 100000).ratio_next < 1e-4

    def test_matches_direct_formula_in_range(self):
        for k in range(0, 25):
            pred = jacobi_error_predictor(15.0, 0.01, 0.5, 1.0, k)
            direct = math.sqrt(2) * 15.0**k * math.exp(-0.005) * 0.5 ** (k + 1) / math.factorial(k + 1)
            assert pred.value == pytest.approx(direct, rel=1e-12)

    def test_precondition(self):
        with pytest.raises(ValueError):
            jacobi_error_predictor(15.0, 10.0, 1.0, 1.0, 3)  # needs k >= ceil(tau*T - 1) = 9


class TestMonotonicityCheck:
    def test_decreasing(self):
        assert monotonicity_check(report_from([1.0, 0.5, 0.25, 0.125]), 1e-10)

    def test_bump_fails(self):
        assert not monotonicity_check(report_from([1.0, 0.5, 0.55, 0.2]), 1e-10)

    def test_slack_allows_noise(self):
        assert monotonicity_check(report_from([1.0, 1.0 + 1e-12]), 1e-8)

    def test_needs_two_records(self):
        with pytest.raises(ValueError):
            monotonicity_check(report_from([1.0]))


class TestLMEngine:
    def test_config_invariants(self):
        with pytest.raises(InvalidConfig):
            LMConfig(lam=0.0)
        with pytest.raises(InvalidConfig):
            LMConfig(lam=1.0, mu=2.0, omega=1.0)
        with pytest.raises(InvalidConfig):
            LMConfig(lam=1.0, alpha=1.5)
        assert LMConfig(lam=1.0, mu=2.0).effective_omega == pytest.approx(2.1)

    def test_decoupled_identity_scaling_converges_in_one_step(self):
        spec = default_spec("scaled-2x2", parameters={"nu": 0.0, "q1": 1.0, "q2": 1.0})
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        est = contraction_factor(sys_, 1.0, 2.0, 1.0)
        cfg = LMConfig(lam=est.lambda_star, mu=2.0, alpha=1.0, omega=2.1, max_iters=5)
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        errs = rep.err_z_sequence()
        assert errs[1] <= 1e-10 * errs[0]

    def test_exact_z_start_stays_flat(self):
        spec = default_spec("two-mass", N=401)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("implicit-euler", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        lam, mu, alpha = 1.5, 2.0, 0.5
        j_d = split_J(sys_).J_d
        q_inv = np.linalg.inv(sys_.Q)
        k_mat = (1 - alpha) * sys_.R + mu * sys_.E @ q_inv - split_J(sys_).J_o
        z_exact = ref.values @ sys_.Q.T @ (np.eye(5) - lam * k_mat).T
        cfg = LMConfig(lam=lam, mu=mu, alpha=alpha, omega=2.2, max_iters=8,
                       z0_policy=Waveform(spec.T, z_exact))
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        errs = rep.err_z_sequence()
        xsups = rep.err_sup_sequence()
        assert errs.max() <= 1e-12
        assert xsups.max() <= 1e-12

    def test_two_mass_monotone_with_ratio_below_bound(self):
        spec = default_spec("two-mass", N=801)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("implicit-euler", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = LMConfig(lam=1.5, mu=2.0, alpha=0.5, omega=2.2, max_iters=25)
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        assert rep.monotone_z
        errs = rep.err_z_sequence()
        est = contraction_factor(sys_, 0.5, 2.0, 1.5)
        ratios = errs[1:] / errs[:-1]
        live = errs[:-1] > 1e-12 * errs[0]
        assert np.all(ratios[live] <= est.q * (1 + 1e-8))

    def test_x_error_bounded_by_scaled_z_error(self):
        spec = default_spec("two-mass", N=801)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("implicit-euler", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = LMConfig(lam=0.7, mu=1.0, alpha=0.3, omega=1.4, max_iters=20)
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        q_inv_norm = np.linalg.norm(np.linalg.inv(sys_.Q), 2)
        for rec in rep.records:
            assert rec.err_x_l2w <= q_inv_norm * rec.err_z_l2w * (1 + 1e-8)

    def test_degenerate_rotation_never_converges(self):
        deg = PHDae(E=np.zeros((2, 2)), J=np.array([[0.0, 1.0], [-1.0, 0.0]]),
                    R=np.zeros((2, 2)), Q=np.eye(2), B=np.zeros((2, 1)),
                    x0=np.zeros(2), partition=(1, 1))
        u = zero_u(1.0, 201)
        scheme = SolverScheme("implicit-euler", 1.0, 201)
        ref = reference_solution(deg, u, refine=1, scheme=scheme)
        z0 = from_function(lambda t: np.array([np.sin(3 * t) + 0.5, np.cos(t)]), 1.0, 201)
        cfg = LMConfig(lam=0.8, mu=0.0, alpha=0.0, omega=0.3, max_iters=12, z0_policy=z0)
        _, rep = lm_run(deg, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        errs = rep.err_x_sequence()
        assert (errs.max() - errs.min()) <= 1e-8 * errs.max()

    def test_converged_run_has_small_pointwise_Ex_error(self):
        # once the z error is below tol, E x agrees with the reference
        # pointwise, final time included
        spec = default_spec("two-mass", N=801)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("implicit-euler", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = LMConfig(lam=1.5, mu=2.0, alpha=0.5, omega=2.2, max_iters=120, tol=1e-10)
        x, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        assert rep.converged_at is not None
        assert rep.records[-1].err_Ex_sup <= 1e-6
        assert np.abs(sys_.E @ (x.values[-1] - ref.values[-1])).max() <= 1e-6

    def test_geometric_bound_column(self):
        spec = default_spec("two-mass", N=401)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("implicit-euler", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = LMConfig(lam=1.5, mu=2.0, alpha=0.5, omega=2.2, max_iters=15)
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        errs = rep.err_z_sequence()
        bounds = np.array([r.q_bound for r in rep.records])
        assert np.all(errs <= bounds * (1 + 1e-6))

    def test_engine_cayley_matches_kernel_routine(self):
        # the engine's factored pointwise update is the same transform as
        # the public cayley_apply
        from phsplit.iteration import _CayleyStep
        from phsplit import cayley_apply

        rng = np.random.default_rng(41)
        g = rng.standard_normal((4, 4))
        w = rng.standard_normal((4, 4))
        k_mat = g @ g.T + (w - w.T)
        step = _CayleyStep(k_mat, 0.8)
        samples = rng.standard_normal((9, 4))
        out = step.apply(samples)
        for i in range(9):
            np.testing.assert_allclose(out[i], cayley_apply(k_mat, 0.8, samples[i]), atol=1e-12)

    def test_derivative_z_ref_mode_with_refined_reference(self):
        # refined reference + derivative-based z reconstruction: errors decay
        # to the discretization floor and stay sane
        spec = default_spec("two-mass", N=401)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=4, scheme=scheme)
        cfg = LMConfig(lam=1.5, mu=2.0, alpha=0.5, omega=2.2, max_iters=25)
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="derivative")
        errs = rep.err_z_sequence()
        assert errs[-1] < 1e-2 * errs[0]
        assert np.all(np.isfinite(errs))

    def test_unknown_z_ref_mode_rejected(self):
        spec = default_spec("scaled-2x2")
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        with pytest.raises(InvalidConfig):
            lm_run(sys_, u, LMConfig(lam=0.5), scheme, reference=ref, z_ref_mode="bogus")

    def test_proxy_mode_without_reference(self):
        spec = default_spec("two-mass", N=401)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        cfg = LMConfig(lam=1.5, mu=2.0, alpha=0.5, omega=2.2, max_iters=80, tol=1e-8)
        x, rep = lm_run(sys_, u, cfg, scheme)
        assert rep.proxy_errors
        assert rep.converged_at is not None
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        # tolerance is stated in the omega-weighted norm; late-time sup error lags it
        gap = Waveform(spec.T, x.values - ref.values)
        from phsplit import weighted_l2_norm

        assert weighted_l2_norm(gap, cfg.effective_omega) <= 1e-6
        assert np.abs(x.values - ref.values).max() <= 1e-3

    def test_mu_above_omega_rejected(self):
        sys_ = build_model(default_spec("two-mass"))
        with pytest.raises(InvalidConfig):
            LMConfig(lam=1.0, mu=3.0, omega=2.0)

    def test_report_csv_schema(self, tmp_path):
        spec = default_spec("scaled-2x2")
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = LMConfig(lam=0.5, mu=1.0, alpha=0.5, omega=1.2, max_iters=4)
        _, rep = lm_run(sys_, u, cfg, scheme, reference=ref, z_ref_mode="algebraic")
        path = tmp_path / "iteration.csv"
        rep.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,err_x_l2,err_x_l2w,err_z_l2w,err_Ex_sup,q_bound"
        assert len(lines) == len(rep.records) + 1


class TestJacobiEngine:
    def test_rejects_singular_e_block(self):
        sys_ = build_model(default_spec("rlc-circuit"))
        u = zero_u(0.1, 201)
        with pytest.raises(NonInvertibleE):
            jacobi_run(sys_, u, JacobiConfig(window_length=0.1), SolverScheme("trapezoidal", 0.1, 201))

    def test_window_must_divide_horizon(self):
        sys_ = build_model(default_spec("simple-2x2"))
        u = zero_u(0.5, 201)
        with pytest.raises(InvalidConfig):
            jacobi_run(sys_, u, JacobiConfig(window_length=0.3), SolverScheme("trapezoidal", 0.5, 201))

    def test_decoupled_converges_in_one_sweep(self):
        spec = default_spec("simple-2x2", parameters={"nu": 0.0})
        sys_ = build_model(spec)
        n = 501
        u = zero_u(0.5, n)
        scheme = SolverScheme("trapezoidal", 0.5, n)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = JacobiConfig(window_length=0.5, max_sweeps=10, tol=1e-12)
        x, rep = jacobi_run(sys_, u, cfg, scheme, reference=ref)
        # guess record + first sweep already exact, second sweep confirms
        assert rep.records[1].err_Ex_sup <= 1e-12
        assert np.abs(x.values - ref.values).max() <= 1e-12

    def test_exact_start_stays_at_solver_noise(self):
        spec = default_spec("simple-2x2", N=501)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = JacobiConfig(window_length=spec.T, max_sweeps=5, tol=0.0, initial_guess=ref)
        _, rep = jacobi_run(sys_, u, cfg, scheme, reference=ref)
        assert rep.err_sup_sequence().max() <= 1e-11

    def test_windowing_propagates_and_converges(self):
        spec = default_spec("simple-2x2", N=2001)
        sys_ = build_model(spec)
        u = zero_u(spec.T, spec.N)
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        ref = reference_solution(sys_, u, refine=1, scheme=scheme)
        cfg = JacobiConfig(window_length=spec.T / 5, max_sweeps=60, tol=1e-12)
        x, rep = jacobi_run(sys_, u, cfg, scheme, reference=ref)
        assert len(rep.window_starts) == 5
        assert rep.converged_at is not None
        assert np.abs(x.values - ref.values).max() <= 1e-9

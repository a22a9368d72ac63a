import numpy as np
import pytest
import yaml

from mftg import (
    DeviationGrid,
    bellman_identity_check,
    brute_force_one_step,
    inject_gain_scaling,
    load_scenario,
    lq_reduction_check,
    open_loop_jitter_test,
    run_verification,
    sample_convexity,
    solve,
    solve_general_moment,
    unilateral_deviation_test,
)
from conftest import make_scenario, random_deterministic, scenario_doc


SMALL_GRID = DeviationGrid(points=41, span=0.2, per_step=True, paths=800)


class TestUnilateralDeviation:
    def test_one_step_equilibrium_is_grid_optimal(self, one_step_unit):
        _, gains = solve(one_step_unit)
        report = unilateral_deviation_test(one_step_unit, gains, 0)
        assert report.margin <= 1e-12
        assert report.uniform_argmin_factor == pytest.approx(1.0)
        assert report.passed

    def test_corrupted_gain_is_detected(self, one_step_unit):
        _, gains = solve(one_step_unit)
        corrupted = inject_gain_scaling(gains, 0, None, 1.2)
        report = unilateral_deviation_test(one_step_unit, corrupted, 0)
        assert report.margin > report.tolerance
        assert not report.passed

    def test_zero_control_channel_margin_zero(self):
        sc = make_scenario(agents=2, horizon=3, p=2, b_bar=[0.0, 0.0])
        _, gains = solve(sc)
        report = unilateral_deviation_test(sc, gains, 0)
        assert report.margin == 0.0

    def test_stochastic_families_pass_with_common_noise(
            self, additive_two_agent, multiplicative_two_agent, general_two_agent):
        for sc in (additive_two_agent, multiplicative_two_agent, general_two_agent):
            _, gains = solve(sc)
            for agent in range(sc.agents):
                report = unilateral_deviation_test(sc, gains, agent, SMALL_GRID)
                assert report.passed, (sc.family, agent, report)

    def test_stochastic_corruption_detected(self, additive_two_agent):
        _, gains = solve(additive_two_agent)
        corrupted = inject_gain_scaling(gains, 1, None, 1.2)
        report = unilateral_deviation_test(additive_two_agent, corrupted, 1, SMALL_GRID)
        assert not report.passed

    def test_open_loop_jitter_smoke(self, det_two_agent):
        _, gains = solve(det_two_agent)
        for agent in range(2):
            margin = open_loop_jitter_test(det_two_agent, gains, agent)
            assert margin <= 1e-9 * abs(
                unilateral_deviation_test(det_two_agent, gains, agent).equilibrium_cost
            ) + 1e-12


class TestBruteForceOneStep:
    def test_derived_deterministic_game(self, one_step_unit):
        sol = brute_force_one_step(one_step_unit)
        np.testing.assert_allclose(sol.mean_gain, 1 / 3, atol=1e-8)
        np.testing.assert_allclose(sol.mean_value, 83 / 81, atol=1e-8)

    def test_additive_scalar_quadratic(self):
        sc = make_scenario(family="additive_variance_2p", agents=1, horizon=1,
                           p=1, noise={"kind": "gaussian", "sigma": 0.0})
        sol = brute_force_one_step(sc)
        assert sol.dev_gain[0] == pytest.approx(0.5, abs=1e-8)
        assert sol.dev_value[0] == pytest.approx(1.5, abs=1e-8)

    def test_general_family_unit_second_moment(self):
        sc = make_scenario(family="general_moment_2o2p", agents=1, horizon=1,
                           p=1, o=1, noise={"kind": "gaussian", "sigma": 1.0})
        sol = brute_force_one_step(sc)
        assert sol.dev_gain[0] == pytest.approx(0.5, abs=1e-8)
        assert sol.dev_value[0] == pytest.approx(1.5, abs=1e-8)

    def test_rejects_longer_horizons(self, det_two_agent):
        with pytest.raises(ValueError):
            brute_force_one_step(det_two_agent)

    @pytest.mark.parametrize("family", [
        "deterministic_2p", "additive_variance_2p",
        "multiplicative_variance_2p", "general_moment_2o2p",
    ])
    def test_oracle_agreement_on_random_instances(self, family):
        rng = np.random.default_rng(hash(family) % 2 ** 32)
        for _ in range(50):
            p = int(rng.integers(1, 4))
            coef = lambda: float(rng.uniform(0.2, 3.0) * rng.choice([-1.0, 1.0]))
            weight = lambda: [float(rng.uniform(0.5, 5.0)) for _ in range(2)]
            kwargs = dict(
                family=family, agents=2, horizon=1, p=p,
                a_bar=coef(), b_bar=[coef(), coef()],
                q_bar=weight(), r_bar=weight(),
                initial={"mean": 1.0},
            )
            if family != "deterministic_2p":
                kwargs["q_dev"] = weight()
                kwargs["r_dev"] = weight()
                kwargs["noise"] = {"kind": "gaussian",
                                   "sigma": float(rng.uniform(0.1, 1.5))}
            if family == "general_moment_2o2p":
                kwargs["o"] = int(rng.integers(1, 4))
                kwargs["a_dev"] = coef()
                kwargs["b_dev"] = [coef(), coef()]
            sc = make_scenario(**kwargs)
            _, gains = solve(sc)
            sol = brute_force_one_step(sc)
            np.testing.assert_allclose(sol.mean_gain, gains.mean_gain[:, 0], atol=1e-6)
            if gains.dev_gain is not None:
                np.testing.assert_allclose(sol.dev_gain, gains.dev_gain[:, 0], atol=1e-6)

    def test_weight_scaling_leaves_gains_unchanged(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            sc = random_deterministic(rng, max_agents=3, max_horizon=6)
            _, gains = solve(sc)
            lam = float(rng.uniform(0.1, 10.0))
            scaled = make_scenario(
                family="deterministic_2p", agents=sc.agents, horizon=sc.horizon,
                p=sc.p, a_bar=list(sc.a_bar), b_bar=[list(b) for b in sc.b_bar],
                q_bar=[[lam * v for v in row] if i == 0 else list(row)
                       for i, row in enumerate(sc.q_bar)],
                r_bar=[[lam * v for v in row] if i == 0 else list(row)
                       for i, row in enumerate(sc.r_bar)],
                initial={"mean": sc.x0.mean},
            )
            _, gains2 = solve(scaled)
            np.testing.assert_allclose(gains2.mean_gain[0], gains.mean_gain[0],
                                       rtol=1e-12)


class TestLqReduction:
    def test_scalar_riccati_agreement(self):
        sc = make_scenario(agents=1, horizon=5, p=1, a_bar=1.1, b_bar=[1.0])
        result = lq_reduction_check(sc)
        assert result.passed
        assert result.max_discrepancy <= 1e-12

    def test_long_horizon_random_instances(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            sc = make_scenario(
                agents=1, horizon=50, p=1,
                a_bar=[float(rng.uniform(0.8, 1.2)) for _ in range(50)],
                b_bar=[[float(rng.uniform(0.5, 2.0) * rng.choice([-1, 1]))
                        for _ in range(50)]],
                q_bar=[[float(rng.uniform(0.5, 5.0)) for _ in range(51)]],
                r_bar=[[float(rng.uniform(0.5, 5.0)) for _ in range(50)]],
            )
            result = lq_reduction_check(sc)
            assert result.passed, result

    def test_two_agent_gain_collapse(self):
        sc = make_scenario(agents=2, horizon=4, p=1, b_bar=[1.2, -0.7],
                           q_bar=[2.0, 3.0], r_bar=[1.0, 2.0])
        assert lq_reduction_check(sc).passed

    def test_refuses_higher_order(self, det_two_agent):
        with pytest.raises(ValueError):
            lq_reduction_check(det_two_agent)


class TestBellmanIdentity:
    def test_deterministic_below_tolerance(self, det_two_agent):
        table, gains = solve(det_two_agent)
        for k in range(det_two_agent.horizon):
            assert bellman_identity_check(det_two_agent, table, gains, k) <= 1e-10

    def test_additive_gamma_isolation_probe(self, additive_two_agent):
        sc = additive_two_agent
        table, gains = solve(sc)
        for k in range(sc.horizon):
            residual = bellman_identity_check(sc, table, gains, k,
                                              probes=[(0.0, 0.0)])
            assert residual <= 1e-12

    def test_all_families_below_tolerance(self, additive_two_agent,
                                          multiplicative_two_agent,
                                          general_two_agent):
        for sc in (additive_two_agent, multiplicative_two_agent, general_two_agent):
            table, gains = solve(sc)
            worst = max(bellman_identity_check(sc, table, gains, k)
                        for k in range(sc.horizon))
            assert worst <= 1e-10, sc.family

    def test_arbitrates_noise_factor_placement(self, general_two_agent):
        # Gaussian noise with o=2 separates the two candidate recursions:
        # only the one carrying the order-2o moment satisfies the identity.
        sc = general_two_agent
        residuals = {}
        for flag in (True, False):
            table, gains = solve_general_moment(sc, noise_factor_on_closed_loop=flag)
            residuals[flag] = max(bellman_identity_check(sc, table, gains, k)
                                  for k in range(sc.horizon))
        assert residuals[True] <= 1e-10
        assert residuals[False] > 1e-3


class TestAggregateReport:
    def test_report_passes_on_examples(self, det_two_agent, additive_two_agent):
        for sc in (det_two_agent, additive_two_agent):
            table, gains = solve(sc)
            report = run_verification(sc, table, gains, grid=SMALL_GRID)
            assert report.passed, report.failures()
            assert report.stationarity_max <= 1e-9
            assert report.convexity_min > 0.0

    def test_report_fails_with_injected_corruption(self, det_two_agent):
        table, gains = solve(det_two_agent)
        corrupted = inject_gain_scaling(gains, 0, None, 1.2)
        report = run_verification(det_two_agent, table, corrupted, grid=SMALL_GRID)
        assert not report.passed
        assert any("deviation margin" in msg for msg in report.failures())

    def test_convexity_sampler_positive_across_families(
            self, multiplicative_two_agent, general_two_agent):
        for sc in (multiplicative_two_agent, general_two_agent):
            table, gains = solve(sc)
            assert sample_convexity(sc, table, gains) > 0.0

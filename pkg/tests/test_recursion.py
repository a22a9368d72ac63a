import numpy as np
import pytest

from mftg import (
    CoefficientOverflowError,
    solve,
    solve_additive,
    solve_deterministic,
    solve_general_moment,
    solve_multiplicative,
    stationarity_residual,
)
from mftg.verify import inject_gain_scaling
from conftest import make_scenario, random_deterministic


class TestDeterministic:
    def test_one_step_unit_game(self, one_step_unit):
        table, gains = solve_deterministic(one_step_unit)
        np.testing.assert_allclose(gains.mean_gain[:, 0], 1 / 3, rtol=0, atol=1e-12)
        np.testing.assert_allclose(table.alpha_bar[:, 0], 83 / 81, rtol=0, atol=1e-12)

    def test_zero_control_channel(self):
        sc = make_scenario(agents=2, horizon=5, p=3, a_bar=1.1,
                           b_bar=[0.0, 0.0], q_bar=[2.0, 3.0], r_bar=[1.0, 1.0])
        table, gains = solve_deterministic(sc)
        assert np.all(gains.mean_gain == 0.0)
        expected = np.empty(6)
        expected[5] = 2.0
        for k in range(4, -1, -1):
            expected[k] = 2.0 + expected[k + 1] * 1.1 ** 6
        np.testing.assert_allclose(table.alpha_bar[0], expected, rtol=1e-14)

    def test_terminal_condition_bit_exact(self, det_two_agent):
        table, _ = solve_deterministic(det_two_agent)
        assert table.alpha_bar[0, 7] == 4.0
        assert table.alpha_bar[1, 7] == 5.0

    def test_two_agent_example_positive_and_decaying(self, det_two_agent):
        for p in (2, 3, 4):
            sc = make_scenario(agents=2, horizon=7, p=p, b_bar=[-2.0, 2.0],
                               q_bar=[4.0, 5.0], r_bar=[6.0, 7.0],
                               initial={"mean": 10.0})
            table, gains = solve_deterministic(sc)
            assert np.all(table.alpha_bar > 0.0)
            assert np.all(np.abs(gains.closed_loop_mean) < 1.0)

    def test_symmetric_agents_get_identical_schedules(self):
        # identical up to the roundoff of the pivoted coupling solve
        sc = make_scenario(agents=3, horizon=6, p=2, b_bar=[1.5, 1.5, 1.5],
                           q_bar=[2.0, 2.0, 2.0], r_bar=[3.0, 3.0, 3.0])
        table, gains = solve_deterministic(sc)
        for i in (1, 2):
            np.testing.assert_allclose(table.alpha_bar[i], table.alpha_bar[0], rtol=1e-13)
            np.testing.assert_allclose(gains.mean_gain[i], gains.mean_gain[0], rtol=1e-13)

    def test_overflow_guard(self):
        sc = make_scenario(agents=1, horizon=4, p=4, a_bar=1e30, b_bar=[0.0])
        with pytest.raises(CoefficientOverflowError):
            solve_deterministic(sc)

    def test_tables_are_read_only(self, det_two_agent):
        table, gains = solve_deterministic(det_two_agent)
        with pytest.raises(ValueError):
            table.alpha_bar[0, 0] = 1.0
        with pytest.raises(ValueError):
            gains.mean_gain[0, 0] = 1.0


class TestAdditive:
    def test_scalar_quadratic_one_step(self):
        sc = make_scenario(family="additive_variance_2p", agents=1, horizon=1,
                           p=1, noise={"kind": "gaussian", "sigma": 0.0})
        table, gains = solve_additive(sc)
        assert gains.c[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert table.alpha[0, 0] == pytest.approx(1.5, abs=1e-15)

    def test_gamma_accumulates_noise_through_alpha(self):
        sc = make_scenario(family="additive_variance_2p", agents=1, horizon=3,
                           p=2, noise={"kind": "gaussian", "sigma": [0.5, 1.0, 2.0]})
        table, _ = solve_additive(sc)
        # gamma_k = gamma_{k+1} + alpha_{k+1} * E[eps_{k+1}^2]
        gamma = np.zeros(4)
        for k in (2, 1, 0):
            gamma[k] = gamma[k + 1] + table.alpha[0, k + 1] * sc.noise.sigma[k] ** 2
        np.testing.assert_allclose(table.gamma_bar[0], gamma, rtol=1e-14)
        assert table.gamma_bar[0, 3] == 0.0
        assert np.all(table.gamma_bar >= 0.0)

    def test_zero_noise_reduces_to_deterministic_bitwise(self, additive_two_agent):
        sc = make_scenario(
            family="additive_variance_2p", agents=2, horizon=10, p=2,
            b_bar=[-2.0, 3.0], q_bar=[4.0, 5.0], r_bar=[6.0, 7.0],
            q_dev=[4.0, 5.0], r_dev=[6.0, 7.0],
            noise={"kind": "gaussian", "sigma": 0.0},
            initial={"mean": 20.25},
        )
        det = make_scenario(
            family="deterministic_2p", agents=2, horizon=10, p=2,
            b_bar=[-2.0, 3.0], q_bar=[4.0, 5.0], r_bar=[6.0, 7.0],
            initial={"mean": 20.25},
        )
        t_add, g_add = solve_additive(sc)
        t_det, g_det = solve_deterministic(det)
        np.testing.assert_array_equal(t_add.alpha_bar, t_det.alpha_bar)
        np.testing.assert_array_equal(g_add.mean_gain, g_det.mean_gain)
        assert np.all(t_add.gamma_bar == 0.0)

    def test_dev_tables_independent_of_p(self):
        outputs = []
        for p in (2, 3, 4):
            sc = make_scenario(
                family="additive_variance_2p", agents=2, horizon=10, p=p,
                b_bar=[-2.0, 3.0], q_bar=[4.0, 5.0], r_bar=[6.0, 7.0],
                q_dev=[4.0, 5.0], r_dev=[6.0, 7.0],
                noise={"kind": "gaussian", "sigma": 1.0},
                initial={"mean": 20.25},
            )
            table, gains = solve_additive(sc)
            outputs.append((table.alpha, table.gamma_bar, gains.dev_gain))
        for alpha, gamma, dev in outputs[1:]:
            np.testing.assert_array_equal(alpha, outputs[0][0])
            np.testing.assert_array_equal(gamma, outputs[0][1])
            np.testing.assert_array_equal(dev, outputs[0][2])


class TestMultiplicative:
    def test_scalar_one_step_with_unit_noise(self):
        sc = make_scenario(family="multiplicative_variance_2p", agents=1,
                           horizon=1, p=1, noise={"kind": "gaussian", "sigma": 1.0})
        table, gains = solve_multiplicative(sc)
        assert gains.c[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert table.alpha[0, 0] == pytest.approx(2.5, abs=1e-15)

    def test_zero_noise_alpha_matches_additive_bitwise(self):
        kwargs = dict(agents=2, horizon=8, p=2, b_bar=[1.5, -1.1],
                      q_bar=[4.0, 5.0], r_bar=[1.0, 1.0],
                      q_dev=[5.0, 4.0], r_dev=[1.0, 1.0],
                      noise={"kind": "gaussian", "sigma": 0.0},
                      initial={"mean": 20.5})
        t_mult, g_mult = solve_multiplicative(
            make_scenario(family="multiplicative_variance_2p", **kwargs))
        t_add, g_add = solve_additive(
            make_scenario(family="additive_variance_2p", **kwargs))
        np.testing.assert_array_equal(t_mult.alpha, t_add.alpha)
        np.testing.assert_array_equal(g_mult.dev_gain, g_add.dev_gain)

    def test_example_tables_positive(self, multiplicative_two_agent):
        for p in (2, 3, 4):
            sc = make_scenario(
                family="multiplicative_variance_2p", agents=2, horizon=10, p=p,
                b_bar=[1.5, -1.1], q_bar=[4.0, 5.0], r_bar=[1.0, 1.0],
                q_dev=[5.0, 4.0], r_dev=[1.0, 1.0],
                noise={"kind": "gaussian", "sigma": 1.0},
                initial={"mean": 20.5, "atom": 20.0},
            )
            table, _ = solve_multiplicative(sc)
            assert np.all(table.alpha_bar > 0.0)
            assert np.all(table.alpha > 0.0)


class TestGeneralMoment:
    def test_scalar_first_moment_order(self):
        sc = make_scenario(family="general_moment_2o2p", agents=1, horizon=1,
                           p=1, o=1, noise={"kind": "gaussian", "sigma": 1.0})
        table, gains = solve_general_moment(sc)
        assert gains.c[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert gains.dev_gain[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert table.alpha[0, 0] == pytest.approx(1.5, abs=1e-15)

    def test_all_zero_moments_drop_the_deviation_gain(self):
        sc = make_scenario(
            family="general_moment_2o2p", agents=2, horizon=3, p=2, o=2,
            noise={"kind": "explicit_moments",
                   "moments": {2: 0.0, 4: 0.0}},
        )
        table, gains = solve_general_moment(sc)
        assert np.all(gains.c == 0.0)
        assert np.all(gains.dev_gain == 0.0)
        # zero noise transfer: deviations die after one step, so each alpha
        # is the running deviation weight alone
        expected = np.array([1.0, 1.0, 1.0, 1.0])
        np.testing.assert_allclose(table.alpha[0], expected, rtol=0, atol=0)

    def test_mean_block_shared_with_deterministic(self, general_two_agent):
        det = make_scenario(agents=2, horizon=8, p=2, b_bar=[-2.0, 2.0],
                            q_bar=[4.0, 5.0], r_bar=[6.0, 7.0],
                            initial={"mean": 5.0})
        t_gen, g_gen = solve_general_moment(general_two_agent)
        t_det, g_det = solve_deterministic(det)
        np.testing.assert_array_equal(t_gen.alpha_bar, t_det.alpha_bar)
        np.testing.assert_array_equal(g_gen.mean_gain, g_det.mean_gain)

    def test_noise_factor_switch_changes_alpha(self, general_two_agent):
        on, _ = solve_general_moment(general_two_agent, noise_factor_on_closed_loop=True)
        off, _ = solve_general_moment(general_two_agent, noise_factor_on_closed_loop=False)
        assert not np.array_equal(on.alpha, off.alpha)


class TestSharedStructure:
    def test_mean_block_identical_across_families(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            base = random_deterministic(rng, max_agents=3, max_horizon=8)
            t_det, g_det = solve_deterministic(base)
            common = dict(
                agents=base.agents, horizon=base.horizon, p=base.p,
                a_bar=list(base.a_bar), b_bar=[list(b) for b in base.b_bar],
                q_bar=[list(q) for q in base.q_bar],
                r_bar=[list(r) for r in base.r_bar],
                initial={"mean": base.x0.mean},
                noise={"kind": "gaussian", "sigma": 1.0},
            )
            for family in ("additive_variance_2p", "multiplicative_variance_2p"):
                sc = make_scenario(family=family, **common)
                table, gains = solve(sc)
                np.testing.assert_array_equal(table.alpha_bar, t_det.alpha_bar)
                np.testing.assert_array_equal(gains.mean_gain, g_det.mean_gain)

    def test_p1_mean_gain_collapses_to_quadratic_form(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            sc = random_deterministic(rng, max_p=1)
            table, gains = solve_deterministic(sc)
            b = np.asarray(sc.b_bar)
            r = np.asarray(sc.r_bar)
            for k in range(sc.horizon):
                nxt = table.alpha_bar[:, k + 1]
                quad = nxt * b[:, k] / (r[:, k] + nxt * b[:, k] ** 2)
                np.testing.assert_allclose(gains.c_bar[:, k], quad, rtol=1e-12)

    def test_p1_deterministic_gain_equals_additive_dev_gain(self):
        sc = make_scenario(
            family="additive_variance_2p", agents=2, horizon=5, p=1,
            b_bar=[1.2, 1.2], q_bar=[2.0, 2.0], r_bar=[3.0, 3.0],
            q_dev=[2.0, 2.0], r_dev=[3.0, 3.0],
            noise={"kind": "gaussian", "sigma": 1.0},
        )
        table, gains = solve_additive(sc)
        np.testing.assert_allclose(gains.mean_gain, gains.dev_gain, rtol=1e-12)


class TestStationarity:
    def test_zero_at_solution(self, one_step_unit):
        table, gains = solve_deterministic(one_step_unit)
        assert stationarity_residual(one_step_unit, table, gains, 0, 0) <= 1e-12

    def test_all_families_below_tolerance(self, det_two_agent, additive_two_agent,
                                          multiplicative_two_agent, general_two_agent):
        for sc in (det_two_agent, additive_two_agent, multiplicative_two_agent,
                   general_two_agent):
            table, gains = solve(sc)
            worst = max(
                stationarity_residual(sc, table, gains, i, k)
                for i in range(sc.agents) for k in range(sc.horizon)
            )
            assert worst <= 1e-9

    def test_perturbed_gains_detected(self, one_step_unit):
        table, gains = solve_deterministic(one_step_unit)
        corrupted = inject_gain_scaling(gains, 0, None, 1.1)
        assert stationarity_residual(one_step_unit, table, corrupted, 0, 0) > 1e-3

    def test_zero_control_exactly_stationary(self):
        sc = make_scenario(agents=2, horizon=3, p=2, b_bar=[0.0, 0.0])
        table, gains = solve_deterministic(sc)
        assert stationarity_residual(sc, table, gains, 0, 0) == 0.0

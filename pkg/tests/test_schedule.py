import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percdiff.schedule import (NoiseSchedule, ScheduleError, corrected_epsilon,
                               ddim_step, forward_diffuse, make_schedule,
                               predict_eps, predict_x0, snapshot_x0)


@pytest.fixture(scope="module")
def sched1000():
    return make_schedule(1000)


class TestMakeSchedule:
    def test_hand_computed_cumulative_products(self):
        s = make_schedule(4, 0.1, 0.4)
        np.testing.assert_allclose(s.betas, [0.1, 0.2, 0.3, 0.4], atol=1e-15)
        np.testing.assert_allclose(s.alpha_bars, [1, 0.9, 0.72, 0.504, 0.3024],
                                   atol=1e-12)

    def test_single_step(self):
        s = make_schedule(1, 0.5, 0.5)
        np.testing.assert_allclose(s.alpha_bars, [1.0, 0.5])

    def test_default_range_monotone(self, sched1000):
        ab = sched1000.alpha_bars
        assert ab[0] == 1.0
        assert np.all(np.diff(ab) < 0)
        assert 0 < ab[-1] < 0.01

    def test_alpha_bar_recurrence(self, sched1000):
        ab, al = sched1000.alpha_bars, sched1000.alphas
        np.testing.assert_allclose(ab[1:], ab[:-1] * al, rtol=1e-12)

    def test_products_match_direct_loop(self):
        s = make_schedule(50, 1e-3, 0.1)
        acc = 1.0
        for t in range(1, 51):
            acc *= 1.0 - s.betas[t - 1]
            assert abs(s.alpha_bar(t) - acc) < 1e-12

    @pytest.mark.parametrize("T,lo,hi", [(0, 0.1, 0.2), (10, 0.0, 0.2),
                                         (10, 0.3, 0.2), (10, 0.5, 1.0)])
    def test_invalid_configuration_rejected(self, T, lo, hi):
        with pytest.raises((ValueError, ScheduleError)):
            make_schedule(T, lo, hi)

    def test_immutable(self, sched1000):
        with pytest.raises(ValueError):
            sched1000.alpha_bars[3] = 0.5


class TestForwardDiffuse:
    def test_zero_signal(self, sched1000):
        eps = np.random.default_rng(0).standard_normal((3, 4, 4))
        for t in (1, 500, 1000):
            expect = np.sqrt(1 - sched1000.alpha_bar(t)) * eps
            np.testing.assert_allclose(
                forward_diffuse(np.zeros((3, 4, 4)), t, eps, sched1000), expect)

    def test_scalar_case_abar_072(self):
        s = make_schedule(4, 0.1, 0.4)  # abar_2 = 0.72
        out = forward_diffuse(np.ones((1, 2, 2)), 2, np.zeros((1, 2, 2)), s)
        np.testing.assert_allclose(out, 0.84853, atol=1e-5)

    def test_out_of_range_t(self, sched1000):
        x = np.zeros((3, 2, 2))
        for t in (0, 1001, -1):
            with pytest.raises((ValueError, IndexError, ScheduleError)):
                forward_diffuse(x, t, x, sched1000)

    def test_shape_mismatch(self, sched1000):
        with pytest.raises(ValueError):
            forward_diffuse(np.zeros((3, 2, 2)), 5, np.zeros((3, 2, 3)), sched1000)


class TestPredictX0:
    def test_round_trip(self, sched1000):
        rng = np.random.default_rng(1)
        for t in (1, 13, 400, 1000):
            x0 = rng.uniform(-1, 1, (3, 8, 8))
            eps = rng.standard_normal((3, 8, 8))
            back = predict_x0(forward_diffuse(x0, t, eps, sched1000), eps, t, sched1000)
            np.testing.assert_allclose(back, x0, rtol=1e-10, atol=1e-10)

    def test_scalar_case_abar_025(self):
        s = _schedule_with_abar(0.25)
        out = predict_x0(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), 1, s)
        np.testing.assert_allclose(out, 2.0, rtol=1e-12)

    def test_zero_case(self, sched1000):
        z = np.zeros((3, 2, 2))
        np.testing.assert_array_equal(predict_x0(z, z, 77, sched1000), z)

    def test_predict_eps_inverse(self, sched1000):
        rng = np.random.default_rng(2)
        x_t = rng.standard_normal((3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        x0h = predict_x0(x_t, eps, 321, sched1000)
        np.testing.assert_allclose(predict_eps(x_t, x0h, 321, sched1000), eps,
                                   rtol=1e-9, atol=1e-9)


def _schedule_with_abar(abar: float) -> NoiseSchedule:
    """One-step schedule whose abar_1 equals the requested value."""
    return make_schedule(1, 1 - abar, 1 - abar)


class TestCorrectedEpsilon:
    def test_identity_augmentation(self, sched1000):
        rng = np.random.default_rng(3)
        x0 = rng.uniform(-1, 1, (3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        np.testing.assert_array_equal(
            corrected_epsilon(x0, x0, eps, 600, sched1000), eps)

    def test_scalar_case(self):
        s = _schedule_with_abar(0.25)
        x0 = np.zeros((1, 2, 2))
        eps = np.full((1, 2, 2), 0.3)
        out = corrected_epsilon(x0, x0 + 0.1, eps, 1, s)
        np.testing.assert_allclose(out, 0.3 + 0.057735, atol=1e-6)

    def test_consistency_identity_random(self, sched1000):
        rng = np.random.default_rng(4)
        for t in (2, 100, 999):
            x0 = rng.uniform(-1, 1, (3, 5, 5))
            aug = x0 + rng.uniform(-0.2, 0.2, x0.shape)
            eps = rng.standard_normal(x0.shape)
            lhs = forward_diffuse(aug, t, eps, sched1000)
            ab = sched1000.alpha_bar(t)
            rhs = (np.sqrt(ab) * x0 + np.sqrt(1 - ab)
                   * corrected_epsilon(x0, aug, eps, t, sched1000))
            np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)

    def test_singular_at_zero_noise(self):
        # hand-built chain with a zero-noise step (alpha_bar stays 1)
        s = NoiseSchedule(betas=np.array([0.0]), alphas=np.array([1.0]),
                          alpha_bars=np.array([1.0, 1.0]))
        with pytest.raises(ScheduleError):
            corrected_epsilon(np.zeros((1, 1, 1)), np.ones((1, 1, 1)),
                              np.zeros((1, 1, 1)), 1, s)


class TestDdimStep:
    def test_terminal_step_returns_x0_hat(self, sched1000):
        rng = np.random.default_rng(5)
        x_t = rng.standard_normal((3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        out = ddim_step(x_t, eps, "eps", 500, 0, sched1000)
        np.testing.assert_allclose(out, predict_x0(x_t, eps, 500, sched1000))

    def test_true_eps_chain_lands_on_marginal(self, sched1000):
        rng = np.random.default_rng(6)
        x0 = rng.uniform(-1, 1, (3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        x = forward_diffuse(x0, 1000, eps, sched1000)
        for t, tp in [(1000, 700), (700, 350), (350, 90), (90, 0)]:
            x = ddim_step(x, eps, "eps", t, tp, sched1000)
            expect = (x0 if tp == 0 else forward_diffuse(x0, tp, eps, sched1000))
            np.testing.assert_allclose(x, expect, rtol=1e-9, atol=1e-10)

    def test_scalar_oracle(self):
        # abar_t = 0.25, abar_prev = 0.81; x0_hat = 1, eps_hat = 0 -> 0.9
        s = make_schedule(2, 1 - 0.81, 1 - 0.25 / 0.81)
        assert abs(s.alpha_bar(1) - 0.81) < 1e-12
        assert abs(s.alpha_bar(2) - 0.25) < 1e-12
        # eps_hat = 0 and x_t = 0.5 imply x0_hat = 0.5 / sqrt(0.25) = 1
        out = ddim_step(np.full((1, 1, 1), 0.5), np.zeros((1, 1, 1)), "eps", 2, 1, s)
        np.testing.assert_allclose(out, 0.9, rtol=1e-10)

    def test_x0_and_eps_kinds_agree(self, sched1000):
        rng = np.random.default_rng(7)
        x_t = rng.standard_normal((3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        x0h = predict_x0(x_t, eps, 400, sched1000)
        a = ddim_step(x_t, eps, "eps", 400, 100, sched1000)
        b = ddim_step(x_t, x0h, "x0", 400, 100, sched1000)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-10)

    def test_ordering_error(self, sched1000):
        x = np.zeros((3, 2, 2))
        with pytest.raises(ScheduleError):
            ddim_step(x, x, "eps", 100, 100, sched1000)
        with pytest.raises(ScheduleError):
            ddim_step(x, x, "eps", 100, 200, sched1000)

    def test_unknown_kind(self, sched1000):
        x = np.zeros((3, 2, 2))
        with pytest.raises(ValueError):
            ddim_step(x, x, "velocity", 100, 50, sched1000)

    def test_determinism_bit_identical(self, sched1000):
        rng = np.random.default_rng(8)
        x_t = rng.standard_normal((3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        a = ddim_step(x_t, eps, "eps", 800, 300, sched1000)
        b = ddim_step(x_t.copy(), eps.copy(), "eps", 800, 300, sched1000)
        assert np.array_equal(a, b)

    def test_clip_bounds_x0_estimate(self, sched1000):
        rng = np.random.default_rng(9)
        x_t = 50 * rng.standard_normal((3, 4, 4))
        out = ddim_step(x_t, np.zeros_like(x_t), "eps", 900, 0, sched1000, clip=True)
        assert np.all(np.abs(out) <= 1.0)

    def test_clip_noop_when_estimate_in_range(self, sched1000):
        rng = np.random.default_rng(10)
        x0 = rng.uniform(-0.9, 0.9, (3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        x_t = forward_diffuse(x0, 500, eps, sched1000)
        a = ddim_step(x_t, eps, "eps", 500, 200, sched1000, clip=False)
        b = ddim_step(x_t, eps, "eps", 500, 200, sched1000, clip=True)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


class TestSnapshot:
    def test_eps_kind_matches_predict_x0(self, sched1000):
        rng = np.random.default_rng(11)
        x_t = rng.standard_normal((3, 4, 4))
        eps = rng.standard_normal((3, 4, 4))
        np.testing.assert_array_equal(snapshot_x0(x_t, eps, "eps", 123, sched1000),
                                      predict_x0(x_t, eps, 123, sched1000))

    def test_x0_kind_passthrough(self, sched1000):
        x = np.ones((3, 2, 2))
        np.testing.assert_array_equal(snapshot_x0(x, x * 0.5, "x0", 10, sched1000),
                                      x * 0.5)


@settings(max_examples=50, deadline=None)
@given(t=st.integers(min_value=1, max_value=1000), seed=st.integers(0, 2**31))
def test_round_trip_property(t, seed):
    s = make_schedule(1000)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1, 1, (3, 4, 4))
    eps = rng.standard_normal((3, 4, 4))
    back = predict_x0(forward_diffuse(x0, t, eps, s), eps, t, s)
    np.testing.assert_allclose(back, x0, rtol=1e-10, atol=1e-10)

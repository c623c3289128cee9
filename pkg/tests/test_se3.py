import numpy as np
import pytest

from softarm.se3 import (Pose, PoseDiff, RdParams, RsParams, pose_exp,
                         pose_log, reward_d, reward_s, stability_variance,
                         success)


def random_pose(rng, max_angle=np.pi - 0.1):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Pose.from_axis_angle(axis, angle, rng.uniform(-1.0, 1.0, 3))


class TestPoseLog:
    def test_identity(self):
        p = Pose.identity()
        diff = pose_log(p, p, alpha=0.2)
        assert np.all(diff.d_p == 0.0)
        assert np.all(diff.d_r == 0.0)
        assert diff.d == 0.0

    def test_pure_translation(self):
        a = Pose.identity()
        b = Pose(translation=np.array([1.0, 0.0, 0.0]))
        diff = pose_log(a, b, alpha=0.2)
        assert diff.d == pytest.approx(1.0, abs=1e-15)
        assert np.linalg.norm(diff.d_r) == 0.0

    def test_pure_rotation_half_pi(self):
        a = Pose.identity()
        b = Pose.from_axis_angle([0, 0, 1], np.pi / 2)
        diff = pose_log(a, b, alpha=0.2)
        assert diff.d == pytest.approx(0.2 * np.pi / 2, rel=1e-12)
        assert np.linalg.norm(diff.d_p) == pytest.approx(0.0, abs=1e-15)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            a = random_pose(rng)
            b = random_pose(rng)
            diff = pose_log(a, b)
            rel = pose_exp(diff.d_p, diff.d_r)
            b2 = a.compose(rel)
            assert np.linalg.norm(b2.translation - b.translation) < 1e-10
            # quaternion sign is irrelevant
            err = min(np.linalg.norm(b2.rotation - b.rotation),
                      np.linalg.norm(b2.rotation + b.rotation))
            assert err < 1e-10

    def test_symmetry_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            a = random_pose(rng)
            b = random_pose(rng)
            assert pose_log(a, b).d == pose_log(b, a).d

    def test_angle_pi_finite(self):
        a = Pose.identity()
        b = Pose.from_axis_angle([1, 0, 0], np.pi, [0.3, 0.0, 0.0])
        diff = pose_log(a, b)
        assert np.isfinite(diff.d)
        assert np.linalg.norm(diff.d_r) == pytest.approx(np.pi, rel=1e-12)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            pose_log(Pose.identity(), Pose.identity(), alpha=0.0)


class TestRewardD:
    def test_table(self):
        p = RdParams()
        assert reward_d(0.2, p) == pytest.approx(-0.2, abs=1e-15)
        assert reward_d(0.07, p) == pytest.approx(0.43, abs=1e-15)
        assert reward_d(0.0, p) == pytest.approx(2.0, abs=1e-15)

    def test_strict_boundaries(self):
        p = RdParams()
        assert reward_d(0.1, p) == pytest.approx(-0.1)    # not < d1
        assert reward_d(0.05, p) == pytest.approx(0.45)   # inside d1 only

    def test_lambda_scaling(self):
        p = RdParams(lam=2.0)
        assert p.d1 == pytest.approx(0.05)
        assert p.d2 == pytest.approx(0.025)

    def test_decreasing_within_regions(self):
        p = RdParams()
        for lo, hi in ((0.0, 0.05), (0.05, 0.1), (0.1, 1.0)):
            xs = np.linspace(lo + 1e-6, hi - 1e-6, 50)
            rs = [reward_d(float(x), p) for x in xs]
            assert all(a > b for a, b in zip(rs, rs[1:]))


class TestRewardS:
    def test_shrinking_rewarded(self):
        assert reward_s(0.2, 0.25, RsParams()) == 1.0

    def test_outside_radius(self):
        assert reward_s(0.5, 0.1, RsParams()) == 0.0
        assert reward_s(0.5, 0.9, RsParams()) == 0.0

    def test_no_change(self):
        assert reward_s(0.2, 0.2, RsParams()) == 0.0

    def test_growing_penalised(self):
        assert reward_s(0.25, 0.2, RsParams()) == -1.0

    def test_boundary_inclusive(self):
        assert reward_s(0.3, 0.4, RsParams()) == 1.0

    def test_range(self):
        rng = np.random.default_rng(3)
        p = RsParams(beta=1.0, big_d=0.3)
        for _ in range(200):
            r = reward_s(rng.uniform(0, 0.6), rng.uniform(0, 0.6), p)
            assert r in (-1.0, 0.0, 1.0)


class TestStabilityVariance:
    def test_constant(self):
        assert stability_variance([0.4] * 50, window=50) == 0.0

    def test_alternating(self):
        series = [0.1, 0.3] * 500
        assert stability_variance(series, window=1000) == pytest.approx(0.01)

    def test_small_series(self):
        assert stability_variance([1.0, 2.0, 3.0, 4.0], window=4) == pytest.approx(1.25)

    def test_too_short(self):
        with pytest.raises(ValueError):
            stability_variance([1.0, 2.0], window=4)

    def test_window_selects_tail(self):
        series = [9.0] * 10 + [2.0] * 4
        assert stability_variance(series, window=4) == 0.0


class TestSuccess:
    def test_inside(self):
        d = PoseDiff(np.array([0.01, 0, 0]), np.array([0.1, 0, 0]), 0.0)
        assert success(d)

    def test_position_boundary_exclusive(self):
        d = PoseDiff(np.array([0.03, 0, 0]), np.zeros(3), 0.0)
        assert not success(d)

    def test_rotation_exceeded(self):
        d = PoseDiff(np.zeros(3), np.array([0, 0, 0.31]), 0.0)
        assert not success(d)

    def test_monotone(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            dp = rng.uniform(-0.1, 0.1, 3)
            dr = rng.uniform(-0.5, 0.5, 3)
            if success(PoseDiff(dp, dr, 0.0)):
                assert success(PoseDiff(0.5 * dp, dr, 0.0))
                assert success(PoseDiff(dp, 0.5 * dr, 0.0))

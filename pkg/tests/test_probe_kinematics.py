"""Tests for 6-DOF pose errors, pose-driven quality, and guided moves."""

import math

import numpy as np
import pytest

from scanloop.probe_kinematics import (
    GuidanceNoise,
    LearnerPolicy,
    PoseOffset,
    ProbePose,
    SubjectAnatomy,
    apply_move,
    guidance_offset,
    image_quality,
    perturb_pose,
    pose_error,
)


def _pose(x=0.0, y=0.0, z=0.0, axis=None, angle=0.0) -> ProbePose:
    if axis is None or angle == 0.0:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    else:
        ax = np.asarray(axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        q = np.concatenate(([math.cos(angle / 2.0)], math.sin(angle / 2.0) * ax))
    return ProbePose(np.array([x, y, z]), q)


def _random_pose(rng: np.random.Generator) -> ProbePose:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return ProbePose(rng.standard_normal(3) * 50.0, q)


SUBJECT = SubjectAnatomy(
    target_pose=_pose(), translation_scale=10.0, rotation_scale=0.5, failure_cutoff=0.5
)


# ---------------------------------------------------------------------------
# validation


def test_probe_pose_requires_unit_orientation():
    with pytest.raises(ValueError):
        ProbePose(np.zeros(3), np.array([1.0, 1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        ProbePose(np.zeros(2), np.array([1.0, 0.0, 0.0, 0.0]))


def test_pose_offset_angle_range():
    PoseOffset(np.zeros(3), np.array([math.pi, 0.0, 0.0]))
    with pytest.raises(ValueError):
        PoseOffset(np.zeros(3), np.array([4.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        PoseOffset(np.zeros(4), np.zeros(3))


def test_subject_anatomy_validation():
    with pytest.raises(ValueError):
        SubjectAnatomy(_pose(), 0.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        SubjectAnatomy(_pose(), 1.0, -0.5, 0.5)
    with pytest.raises(ValueError):
        SubjectAnatomy(_pose(), 1.0, 0.5, 1.0)


def test_learner_policy_validation():
    LearnerPolicy(gain=1.0)
    with pytest.raises(ValueError):
        LearnerPolicy(gain=0.0)
    with pytest.raises(ValueError):
        LearnerPolicy(gain=1.5)
    with pytest.raises(ValueError):
        LearnerPolicy(gain=0.5, motor_noise_t=-1.0)


def test_guidance_noise_validation():
    GuidanceNoise()
    with pytest.raises(ValueError):
        GuidanceNoise(guidance_noise_r=-0.1)


# ---------------------------------------------------------------------------
# pose_error


def test_pose_error_identical_poses():
    assert pose_error(_pose(1, 2, 3, axis=[0, 0, 1], angle=0.3),
                      _pose(1, 2, 3, axis=[0, 0, 1], angle=0.3)) == (0.0, 0.0)


def test_pose_error_pure_translation():
    d_t, d_r = pose_error(_pose(0, 0, 0), _pose(10, 0, 0))
    assert d_t == pytest.approx(10.0)
    assert d_r == 0.0


def test_pose_error_quarter_turn():
    d_t, d_r = pose_error(_pose(), _pose(axis=[0, 0, 1], angle=math.pi / 2))
    assert d_t == 0.0
    assert d_r == pytest.approx(math.pi / 2, abs=1e-12)


def test_pose_error_handles_quaternion_double_cover():
    # q and -q encode the same rotation; distance must be 0, not 2*pi.
    q = np.array([0.5, 0.5, 0.5, 0.5])
    a = ProbePose(np.zeros(3), q)
    b = ProbePose(np.zeros(3), -q)
    assert pose_error(a, b)[1] == pytest.approx(0.0, abs=1e-12)


def test_rotation_distance_symmetric_and_triangle():
    rng = np.random.default_rng(42)
    for _ in range(10_000):
        a, b, c = _random_pose(rng), _random_pose(rng), _random_pose(rng)
        d_ab = pose_error(a, b)[1]
        d_ba = pose_error(b, a)[1]
        assert abs(d_ab - d_ba) < 1e-9
        d_ac = pose_error(a, c)[1]
        d_cb = pose_error(c, b)[1]
        assert d_ab <= d_ac + d_cb + 1e-9
        assert 0.0 <= d_ab <= math.pi + 1e-12


# ---------------------------------------------------------------------------
# image_quality


def test_quality_max_at_target():
    assert image_quality(_pose(), SUBJECT) == 1.0


def test_quality_one_translation_scale_out():
    q = image_quality(_pose(x=10.0), SUBJECT)
    assert q == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_quality_both_scales_out():
    pose = _pose(x=10.0, axis=[0, 1, 0], angle=0.5)
    q = image_quality(pose, SUBJECT)
    assert q == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_quality_bounds_and_uniqueness_of_max():
    rng = np.random.default_rng(7)
    for _ in range(500):
        pose = _random_pose(rng)
        q = image_quality(pose, SUBJECT)
        assert 0.0 <= q <= 1.0
        if q == 1.0:
            d_t, d_r = pose_error(pose, SUBJECT.target_pose)
            # quality 1 only in a negligible neighborhood of zero error
            assert d_t < 1e-7 and d_r < 1e-7


def test_quality_monotone_in_each_error():
    qs = [image_quality(_pose(x=d), SUBJECT) for d in (0.0, 1.0, 2.0, 5.0, 20.0)]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    qs = [
        image_quality(_pose(axis=[1, 0, 0], angle=t), SUBJECT)
        for t in (0.0, 0.1, 0.3, 1.0, 3.0)
    ]
    assert all(a > b for a, b in zip(qs, qs[1:]))


# ---------------------------------------------------------------------------
# guidance_offset


def test_zero_noise_guidance_is_exact():
    rng = np.random.default_rng(1)
    for _ in range(50):
        start = _random_pose(rng)
        off = guidance_offset(start, SUBJECT, GuidanceNoise(), rng)
        landed = apply_move(start, off, LearnerPolicy(gain=1.0), rng)
        d_t, d_r = pose_error(landed, SUBJECT.target_pose)
        assert d_t < 1e-9 and d_r < 1e-9


def test_zero_noise_guidance_at_target_is_zero_offset():
    rng = np.random.default_rng(2)
    off = guidance_offset(SUBJECT.target_pose, SUBJECT, GuidanceNoise(), rng)
    np.testing.assert_allclose(off.translation, 0.0, atol=1e-12)
    np.testing.assert_allclose(off.rotation, 0.0, atol=1e-12)


def test_guidance_translation_noise_is_zero_mean():
    rng = np.random.default_rng(3)
    start = _pose(x=30.0, y=-4.0, z=2.5)
    true_offset = SUBJECT.target_pose.position - start.position
    n = 100_000
    noise = GuidanceNoise(guidance_noise_t=1.0)
    sums = np.zeros(3)
    for _ in range(n):
        sums += guidance_offset(start, SUBJECT, noise, rng).translation
    bound = 3.0 / math.sqrt(n)
    np.testing.assert_allclose(sums / n, true_offset, atol=bound)


def test_guidance_offset_angle_always_canonical():
    rng = np.random.default_rng(4)
    noise = GuidanceNoise(guidance_noise_t=5.0, guidance_noise_r=2.0)
    for _ in range(300):
        start = _random_pose(rng)
        off = guidance_offset(start, SUBJECT, noise, rng)
        assert float(np.linalg.norm(off.rotation)) <= math.pi + 1e-12


# ---------------------------------------------------------------------------
# apply_move


def test_half_gain_pure_translation():
    rng = np.random.default_rng(5)
    start = _pose()
    off = PoseOffset(np.array([10.0, 0.0, 0.0]), np.zeros(3))
    moved = apply_move(start, off, LearnerPolicy(gain=0.5), rng)
    np.testing.assert_array_equal(moved.position, [5.0, 0.0, 0.0])
    np.testing.assert_allclose(moved.orientation, [1.0, 0.0, 0.0, 0.0], atol=1e-15)


def test_zero_offset_zero_noise_is_identity():
    rng = np.random.default_rng(6)
    start = _pose(1.0, 2.0, 3.0, axis=[1, 1, 0], angle=0.7)
    moved = apply_move(start, PoseOffset(np.zeros(3), np.zeros(3)), LearnerPolicy(1.0), rng)
    np.testing.assert_allclose(moved.position, start.position, atol=0)
    np.testing.assert_allclose(moved.orientation, start.orientation, atol=1e-15)


def test_one_step_convergence_from_100_random_poses():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        start = _random_pose(rng)
        off = guidance_offset(start, SUBJECT, GuidanceNoise(), rng)
        landed = apply_move(start, off, LearnerPolicy(gain=1.0), rng)
        assert image_quality(landed, SUBJECT) == 1.0


def test_contraction_shrinks_both_errors():
    rng = np.random.default_rng(8)
    for gain in (0.25, 0.5, 0.9, 1.0):
        pose = _pose(x=20.0, axis=[0, 0, 1], angle=1.2)
        for _ in range(4):
            d_t0, d_r0 = pose_error(pose, SUBJECT.target_pose)
            off = guidance_offset(pose, SUBJECT, GuidanceNoise(), rng)
            pose = apply_move(pose, off, LearnerPolicy(gain=gain), rng)
            d_t1, d_r1 = pose_error(pose, SUBJECT.target_pose)
            assert d_t1 == pytest.approx((1.0 - gain) * d_t0, rel=1e-9, abs=1e-12)
            assert d_r1 == pytest.approx((1.0 - gain) * d_r0, rel=1e-9, abs=1e-12)


def test_half_gain_translation_contraction_is_exact():
    rng = np.random.default_rng(9)
    target = _pose()
    subject = SubjectAnatomy(target, 10.0, 0.5, 0.5)
    pose = _pose(x=16.0)
    expected = 16.0
    for _ in range(6):
        off = guidance_offset(pose, subject, GuidanceNoise(), rng)
        pose = apply_move(pose, off, LearnerPolicy(gain=0.5), rng)
        expected *= 0.5
        assert pose_error(pose, target)[0] == expected


def test_orientation_stays_normalized_through_noisy_chains():
    rng = np.random.default_rng(10)
    noise = GuidanceNoise(guidance_noise_t=2.0, guidance_noise_r=0.5)
    policy = LearnerPolicy(gain=0.8, motor_noise_t=1.0, motor_noise_r=0.3)
    pose = _random_pose(rng)
    for _ in range(200):
        off = guidance_offset(pose, SUBJECT, noise, rng)
        pose = apply_move(pose, off, policy, rng)
        assert abs(float(np.linalg.norm(pose.orientation)) - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# perturb_pose and determinism


def test_perturb_pose_zero_scales_is_identity():
    rng = np.random.default_rng(11)
    base = _pose(3.0, 1.0, -2.0, axis=[0, 1, 0], angle=0.4)
    got = perturb_pose(base, 0.0, 0.0, rng)
    np.testing.assert_allclose(got.position, base.position, atol=0)
    d_r = pose_error(got, base)[1]
    assert d_r < 1e-12


def test_perturb_pose_centers_on_base():
    rng = np.random.default_rng(12)
    base = _pose(3.0, 1.0, -2.0)
    n = 50_000
    acc = np.zeros(3)
    for _ in range(n):
        acc += perturb_pose(base, 2.0, 0.1, rng).position
    np.testing.assert_allclose(acc / n, base.position, atol=3.0 * 2.0 / math.sqrt(n))


def test_kinematic_operations_deterministic_per_seed():
    def run(seed):
        rng = np.random.default_rng(seed)
        pose = perturb_pose(SUBJECT.target_pose, 5.0, 0.4, rng)
        off = guidance_offset(pose, SUBJECT, GuidanceNoise(0.5, 0.1), rng)
        pose = apply_move(pose, off, LearnerPolicy(0.7, 0.2, 0.05), rng)
        return pose.position.tolist() + pose.orientation.tolist()

    assert run(77) == run(77)
    assert run(77) != run(78)


def test_fixed_draw_counts_keep_streams_aligned():
    # Zero-noise and nonzero-noise calls must consume identical stream amounts.
    def consumed(noise, policy):
        rng = np.random.default_rng(99)
        start = _pose(x=12.0)
        off = guidance_offset(start, SUBJECT, noise, rng)
        apply_move(start, off, policy, rng)
        return rng.random()  # next draw reveals the stream position

    a = consumed(GuidanceNoise(), LearnerPolicy(1.0))
    b = consumed(GuidanceNoise(1.0, 0.2), LearnerPolicy(0.5, 0.3, 0.1))
    assert a == b

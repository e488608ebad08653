import numpy as np
import pytest

from cbctus import calibration as cal
from cbctus import pipeline
from cbctus.errors import DegenerateMotionError, InvalidInputError
from cbctus.geometry import RigidTransform, Rotation, rotation_distance


def make_session(seed=0, count=30, noise_rot=0.0, noise_trans=0.0):
    return pipeline.synthetic_session(count=count, seed=seed,
                                      noise_rot_deg=noise_rot,
                                      noise_trans_mm=noise_trans)


class TestBuildMotionPairs:
    def test_consecutive_count(self):
        pairs = cal.build_motion_pairs(make_session(count=30))
        assert len(pairs) == 29

    def test_all_pairs_count(self):
        pairs = cal.build_motion_pairs(make_session(count=30), all_pairs=True)
        assert len(pairs) == 30 * 29 // 2

    def test_too_few_samples(self):
        with pytest.raises(InvalidInputError):
            cal.build_motion_pairs(make_session(count=30)[:1])

    def test_pairs_satisfy_ax_equals_xb(self):
        # noise-free construction must make every pair consistent with X
        x = pipeline.DEFAULT_X_TRUTH
        for pair in cal.build_motion_pairs(make_session(seed=3)):
            lhs = pair.a @ x
            rhs = x @ pair.b
            assert np.abs(lhs.matrix - rhs.matrix).max() < 1e-9


class TestSolveTsaiLenz:
    def test_exact_recovery(self):
        pairs = cal.build_motion_pairs(make_session(seed=1))
        sol = cal.solve_tsai_lenz(pairs)
        dt, dr = cal.registration_error(sol.x, pipeline.DEFAULT_X_TRUTH)
        assert dt < 1e-9
        assert dr < 1e-9
        assert sol.pair_count == 29

    def test_noise_free_residuals_vanish(self):
        sol = cal.solve_tsai_lenz(cal.build_motion_pairs(make_session(seed=2)))
        assert sol.rotation_residual_deg.max < 1e-9
        assert sol.translation_residual_mm.max < 1e-9

    def test_recovery_with_random_truth(self):
        rng = np.random.default_rng(11)
        x = RigidTransform.random(rng, 500.0)
        marker = RigidTransform.random(rng, 100.0)
        samples = pipeline.synthetic_session(seed=7, x_truth=x, t_e_m=marker)
        sol = cal.solve_tsai_lenz(cal.build_motion_pairs(samples))
        dt, dr = cal.registration_error(sol.x, x)
        assert dt < 1e-9
        assert dr < 1e-9

    def test_pure_translation_degenerate(self):
        rng = np.random.default_rng(5)
        x = pipeline.DEFAULT_X_TRUTH
        marker = pipeline.DEFAULT_MARKER
        samples = []
        for _ in range(10):
            t_e_b = RigidTransform.from_translation(rng.uniform(-50, 50, 3))
            samples.append(cal.AbsolutePoseSample(
                t_e_b=t_e_b,
                t_m_o=cal.synthesize_marker_observation(t_e_b, x, marker)))
        with pytest.raises(DegenerateMotionError):
            cal.solve_tsai_lenz(cal.build_motion_pairs(samples))

    def test_single_axis_degenerate(self):
        rng = np.random.default_rng(6)
        x = pipeline.DEFAULT_X_TRUTH
        marker = pipeline.DEFAULT_MARKER
        samples = []
        for _ in range(10):
            rot = Rotation.about_z_deg(rng.uniform(-60, 60))
            t_e_b = RigidTransform(rot, rng.uniform(-50, 50, 3))
            samples.append(cal.AbsolutePoseSample(
                t_e_b=t_e_b,
                t_m_o=cal.synthesize_marker_observation(t_e_b, x, marker)))
        with pytest.raises(DegenerateMotionError):
            cal.solve_tsai_lenz(cal.build_motion_pairs(samples))

    def test_too_few_pairs(self):
        pairs = cal.build_motion_pairs(make_session(count=2))
        with pytest.raises(InvalidInputError):
            cal.solve_tsai_lenz(pairs)

    def test_small_rotations_filtered_not_fatal(self):
        # a couple of near-stationary samples amid informative ones
        x = pipeline.DEFAULT_X_TRUTH
        marker = pipeline.DEFAULT_MARKER
        base = make_session(seed=9, count=10)
        nearly = base[0].t_e_b @ RigidTransform(
            Rotation.about_x_deg(0.01), (0.1, 0.0, 0.0))
        extra = cal.AbsolutePoseSample(
            t_e_b=nearly,
            t_m_o=cal.synthesize_marker_observation(nearly, x, marker))
        sol = cal.solve_tsai_lenz(cal.build_motion_pairs(base + [extra]))
        dt, dr = cal.registration_error(sol.x, x)
        assert dt < 1e-9
        assert dr < 1e-9

    def test_noise_degrades_gracefully(self):
        samples = make_session(seed=4, noise_rot=0.1, noise_trans=0.5)
        sol = cal.solve_tsai_lenz(cal.build_motion_pairs(samples))
        dt, dr = cal.registration_error(sol.x, pipeline.DEFAULT_X_TRUTH)
        assert dt < 20.0
        assert dr < 2.0
        assert sol.rotation_residual_deg.mean > 0.0


class TestSamplePoses:
    def test_count_and_bounds(self):
        borders = pipeline.default_border_poses()
        poses = cal.sample_poses_in_range(borders, count=40, seed=1)
        assert len(poses) == 40
        ts = np.array([p.translation for p in poses])
        borders_t = np.array([b.translation for b in borders])
        assert np.all(ts >= borders_t.min(axis=0) - 1e-9)
        assert np.all(ts <= borders_t.max(axis=0) + 1e-9)

    def test_seed_reproducible(self):
        borders = pipeline.default_border_poses()
        a = cal.sample_poses_in_range(borders, count=5, seed=3)
        b = cal.sample_poses_in_range(borders, count=5, seed=3)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.matrix, pb.matrix)

    def test_border_count_validated(self):
        borders = pipeline.default_border_poses()
        with pytest.raises(InvalidInputError):
            cal.sample_poses_in_range(borders[:3])
        with pytest.raises(InvalidInputError):
            cal.sample_poses_in_range(borders + borders)


class TestPerturb:
    def test_zero_noise_is_identity(self):
        rng = np.random.default_rng(0)
        t = RigidTransform.random(rng)
        p = cal.perturb_transform(t, 0.0, 0.0, rng)
        assert np.abs(p.matrix - t.matrix).max() < 1e-12

    def test_noise_magnitude(self):
        rng = np.random.default_rng(1)
        t = RigidTransform.identity()
        drs = []
        dts = []
        for _ in range(500):
            p = cal.perturb_transform(t, 1.0, 1.0, rng)
            dt, dr = cal.registration_error(p, t)
            drs.append(dr)
            dts.append(dt)
        # |N(0, 1)| has mean sqrt(2/pi) ~ 0.80; translation is 3D Gaussian
        assert 0.6 < np.mean(drs) < 1.0
        assert 1.2 < np.mean(dts) < 2.0


class TestChain:
    def test_product_order(self):
        rng = np.random.default_rng(2)
        chain = cal.RegistrationChain(*(RigidTransform.random(rng)
                                        for _ in range(3)))
        expected = chain.t_u_b @ chain.t_b_o @ chain.t_o_c
        assert np.allclose(cal.chain_us_to_cbct(chain).matrix,
                           expected.matrix, atol=1e-12)

    def test_default_chain_products_to_identity(self):
        t = cal.chain_us_to_cbct(pipeline.default_ground_truth_chain())
        assert np.abs(t.matrix - np.eye(4)).max() < 1e-12

    def test_reposition_update_matches_fresh_chain(self):
        rng = np.random.default_rng(3)
        chain = cal.RegistrationChain(*(RigidTransform.random(rng)
                                        for _ in range(3)))
        motion = RigidTransform.random(rng, 30.0)
        moved = cal.RegistrationChain(chain.t_u_b, chain.t_b_o,
                                      chain.t_o_c @ motion)
        updated = cal.update_after_reposition(cal.chain_us_to_cbct(chain),
                                              motion)
        fresh = cal.chain_us_to_cbct(moved)
        assert np.abs(updated.matrix - fresh.matrix).max() < 1e-12


def test_monte_carlo_table_shape():
    table = pipeline.calibration_errors_vs_pair_count(
        [5, 10], trials=3, noise_rot_deg=0.1, noise_trans_mm=0.5, seed=1)
    assert set(table) == {5, 10}
    for dt, dr in table.values():
        assert dt >= 0.0 and dr >= 0.0

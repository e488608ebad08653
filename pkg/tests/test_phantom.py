import math

import numpy as np
import pytest

from cbctus import phantom
from cbctus.errors import InvalidInputError


class TestClassification:
    def test_known_points(self, scene):
        cases = [
            ((64.0, 30.0, 80.0), phantom.LUMEN),    # small tube axis
            ((64.0, 30.0, 84.0), phantom.WALL),     # 4 mm off axis, r_out 4.5
            ((64.0, 46.0, 80.0), phantom.LUMEN),
            ((64.0, 98.0, 78.0), phantom.LUMEN),    # big tube axis
            ((64.0, 98.0, 86.5), phantom.WALL),     # 8.5 mm off, wall ring
            ((64.0, 64.0, 55.0), phantom.LESION),
            ((64.0, 62.0, 100.0), phantom.RIB),
            ((64.0, 64.0, 20.0), phantom.WATER),
            ((200.0, 64.0, 64.0), phantom.BACKGROUND),
            ((-1.0, 64.0, 64.0), phantom.BACKGROUND),
        ]
        for p, expected in cases:
            assert phantom.is_inside(scene, p) == expected, p

    def test_outside_tube_span(self, scene):
        # tubes run x in [4, 124]; beyond the caps it is water again
        assert phantom.is_inside(scene, (2.0, 30.0, 80.0)) == phantom.WATER
        assert phantom.is_inside(scene, (126.0, 30.0, 80.0)) == phantom.WATER

    def test_flow_flags(self, scene):
        pts = np.array([
            [64.0, 30.0, 80.0],   # flowing lumen
            [64.0, 30.0, 84.0],   # wall
            [64.0, 64.0, 55.0],   # lesion
            [64.0, 64.0, 20.0],   # water
        ])
        _, flow = phantom.classify_points(scene, pts)
        assert flow.tolist() == [1, 0, 0, 0]

    def test_no_flow_tube(self):
        scene = phantom.PhantomScene(
            (phantom.Tube((4, 64, 64), (124, 64, 64), 3.0, 1.0,
                          has_flow=False),),
            phantom.LesionSphere((64, 64, 20), 5.0), (),
            (0, 0, 0), (128, 128, 128))
        _, flow = phantom.classify_points(scene, [[64.0, 64.0, 64.0]])
        assert flow[0] == 0
        assert phantom.is_inside(scene, (64.0, 64.0, 64.0)) == phantom.LUMEN

    def test_priority_rib_over_lesion_over_wall_over_lumen(self):
        # deliberately overlapping primitives at one point
        overlap = (64.0, 64.0, 64.0)
        tube = phantom.Tube((4, 64, 64), (124, 64, 64), 3.0, 1.0)
        lesion_on = phantom.LesionSphere(overlap, 5.0)
        lesion_off = phantom.LesionSphere((64, 64, 20), 5.0)
        rib = phantom.RibStrip((60, 60, 60), (68, 68, 68))

        scene = phantom.PhantomScene((tube,), lesion_on, (rib,),
                                     (0, 0, 0), (128, 128, 128))
        assert phantom.is_inside(scene, overlap) == phantom.RIB

        scene = phantom.PhantomScene((tube,), lesion_on, (),
                                     (0, 0, 0), (128, 128, 128))
        assert phantom.is_inside(scene, overlap) == phantom.LESION

        # wall of one tube beats lumen of another
        thin = phantom.Tube((64, 4, 64), (64, 124, 64), 1.0, 2.0)
        scene = phantom.PhantomScene((tube, thin), lesion_off, (),
                                     (0, 0, 0), (128, 128, 128))
        assert phantom.is_inside(scene, (64.0, 64.0, 65.5)) == phantom.WALL


class TestVolume:
    def test_index_round_trip(self, coarse_volume):
        idx = np.array([[3, 10, 60], [0, 0, 0], [63, 63, 63]])
        back = coarse_volume.world_to_index(coarse_volume.index_to_world(idx))
        assert np.array_equal(back, idx)

    def test_world_to_index_floor(self, default_volume):
        # spacing 0.5, origin 0: point 1.2 falls in voxel 2
        idx = default_volume.world_to_index([[1.2, 0.1, 63.9]])
        assert idx.tolist() == [[2, 0, 127]]

    def test_contains_index(self, coarse_volume):
        inb = coarse_volume.contains_index(
            np.array([[0, 0, 0], [63, 63, 63], [-1, 0, 0], [64, 0, 0]]))
        assert inb.tolist() == [True, True, False, False]

    def test_invalid_construction(self):
        with pytest.raises(InvalidInputError):
            phantom.CbctVolume((0, 4, 4), 1.0, (0, 0, 0), np.zeros(1))
        with pytest.raises(InvalidInputError):
            phantom.CbctVolume((4, 4, 4), -1.0, (0, 0, 0), np.zeros(1))


class TestVoxelize:
    def test_grid_must_cover_tank(self, scene):
        with pytest.raises(InvalidInputError):
            phantom.voxelize(scene, dims=(64, 64, 64), spacing=1.0)

    def test_intensity_lut(self, coarse_volume, scene):
        for lab, value in scene.intensities.items():
            sel = coarse_volume.labels == lab
            if sel.any():
                assert np.all(coarse_volume.voxels[sel] == np.float32(value))

    def test_material_volumes_match_analytic(self, default_volume):
        vox_mm3 = float(np.prod(default_volume.spacing))
        counts = np.bincount(default_volume.labels.ravel(), minlength=6)
        lumen_analytic = sum(math.pi * r * r * 120.0
                             for r in (3.5, 4.0, 8.0))
        wall_analytic = sum(math.pi * ((r + 1.0) ** 2 - r * r) * 120.0
                            for r in (3.5, 4.0, 8.0))
        lesion_analytic = 4.0 / 3.0 * math.pi * 5.0 ** 3
        rib_analytic = 2 * 88.0 * 8.0 * 6.0
        assert abs(counts[phantom.LUMEN] * vox_mm3 / lumen_analytic - 1) < 0.02
        assert abs(counts[phantom.WALL] * vox_mm3 / wall_analytic - 1) < 0.05
        assert abs(counts[phantom.LESION] * vox_mm3 / lesion_analytic - 1) < 0.02
        assert counts[phantom.RIB] * vox_mm3 == rib_analytic

    def test_background_outside_tank_only(self, coarse_volume):
        # default tank fills the whole grid: no background voxels
        assert (coarse_volume.labels == phantom.BACKGROUND).sum() == 0

    def test_matches_pointwise_classification(self, scene, coarse_volume):
        rng = np.random.default_rng(3)
        idx = rng.integers(0, 64, size=(200, 3))
        centers = coarse_volume.index_to_world(idx)
        labels, _ = phantom.classify_points(scene, centers)
        assert np.array_equal(
            labels, coarse_volume.labels[idx[:, 0], idx[:, 1], idx[:, 2]])


class TestCenterlines:
    def test_count_and_endpoints(self, scene):
        lines = phantom.ground_truth_centerlines(scene, 1.0)
        assert len(lines) == 3
        for line, tube in zip(lines, scene.tubes):
            assert len(line) == 121
            assert np.allclose(line[0], tube.start)
            assert np.allclose(line[-1], tube.end)

    def test_points_on_axis(self, scene):
        for line, tube in zip(phantom.ground_truth_centerlines(scene, 2.5),
                              scene.tubes):
            rel = line - tube.start
            cross = np.cross(rel, tube.direction)
            assert np.abs(cross).max() < 1e-9

    def test_invalid_step(self, scene):
        with pytest.raises(InvalidInputError):
            phantom.ground_truth_centerlines(scene, 0.0)


class TestPrimitiveValidation:
    def test_tube_rejects_bad_radii(self):
        with pytest.raises(InvalidInputError):
            phantom.Tube((0, 0, 0), (1, 0, 0), -1.0, 1.0)
        with pytest.raises(InvalidInputError):
            phantom.Tube((0, 0, 0), (0, 0, 0), 1.0, 1.0)

    def test_rib_rejects_inverted_corners(self):
        with pytest.raises(InvalidInputError):
            phantom.RibStrip((1, 1, 1), (0, 2, 2))

    def test_lesion_rejects_bad_radius(self):
        with pytest.raises(InvalidInputError):
            phantom.LesionSphere((0, 0, 0), 0.0)

import numpy as np
import pytest

from cbctus import segmentation, ussim
from cbctus.errors import InvalidInputError, OversegmentationError


def rect_mask(h, w, v0, v1, u0, u1):
    m = np.zeros((h, w), dtype=bool)
    m[v0:v1, u0:u1] = True
    return m


class TestExtractComponents:
    def test_strict_area_threshold(self):
        # pixel spacing 0.1 mm -> 0.01 mm^2 per pixel, exact areas
        dop = (rect_mask(200, 200, 10, 40, 10, 40)       # 900 px = 9 mm^2
               | rect_mask(200, 200, 60, 85, 10, 50)     # 1000 px = 10 mm^2
               | rect_mask(200, 200, 110, 154, 10, 35))  # 1100 px = 11 mm^2
        comps = segmentation.extract_components(dop, 0.1, min_area_mm2=10.0)
        assert len(comps) == 1
        assert comps[0].area_mm2 == pytest.approx(11.0)

    def test_sorted_by_area_descending(self):
        dop = (rect_mask(100, 100, 5, 15, 5, 15)
               | rect_mask(100, 100, 40, 60, 40, 60))
        comps = segmentation.extract_components(dop, 1.0, min_area_mm2=0.0)
        assert [c.pixels.shape[0] for c in comps] == [400, 100]

    def test_four_connectivity_splits_diagonal(self):
        dop = np.zeros((10, 10), dtype=bool)
        dop[2:4, 2:4] = True
        dop[4:6, 4:6] = True   # touches only diagonally
        comps = segmentation.extract_components(dop, 1.0, min_area_mm2=0.0)
        assert len(comps) == 2

    def test_centroid(self):
        dop = rect_mask(50, 50, 10, 13, 20, 25)
        comp = segmentation.extract_components(dop, 1.0, min_area_mm2=0.0)[0]
        assert comp.centroid == (22.0, 11.0)

    def test_empty_mask(self):
        comps = segmentation.extract_components(np.zeros((10, 10), bool), 0.15)
        assert comps == []


class TestSegmentFromPrompt:
    def test_recovers_uniform_disk(self):
        bmode = np.full((100, 100), 200.0)
        vv, uu = np.mgrid[0:100, 0:100]
        disk = (uu - 50) ** 2 + (vv - 40) ** 2 <= 15 ** 2
        bmode[disk] = 20.0
        mask = segmentation.segment_from_prompt(bmode, (50, 40))
        assert np.array_equal(mask.mask, disk)
        assert mask.centroid[0] == pytest.approx(50.0)
        assert mask.centroid[1] == pytest.approx(40.0)

    def test_oversegmentation_raises(self):
        bmode = np.full((50, 50), 100.0)
        bmode[0, 0] = 0.0   # give the image some dynamic range
        with pytest.raises(OversegmentationError):
            segmentation.segment_from_prompt(bmode, (25, 25), max_area_px=10)

    def test_prompt_outside_image(self):
        with pytest.raises(InvalidInputError):
            segmentation.segment_from_prompt(np.zeros((10, 10)), (10, 0))

    def test_explicit_tolerance(self):
        bmode = np.full((20, 20), 50.0)
        bmode[5:10, 5:10] = 60.0
        mask = segmentation.segment_from_prompt(bmode, (7, 7), tolerance=5.0)
        assert mask.mask.sum() == 25

    def test_region_respects_four_connectivity(self):
        bmode = np.full((20, 20), 200.0)
        bmode[5, 5] = 10.0
        bmode[6, 6] = 10.0   # diagonal neighbor must not join
        mask = segmentation.segment_from_prompt(bmode, (5, 5), tolerance=20.0)
        assert mask.mask.sum() == 1


class TestSegmentFrame:
    def test_three_vessels_on_default_frame(self, sweep_frames, probe):
        _, frames = sweep_frames
        seg = segmentation.segment_frame(frames[len(frames) // 2], probe)
        assert len(seg.components) == 3
        assert len(seg.masks) == 3
        assert seg.warnings == []

    def test_mask_centroids_near_tube_axes(self, scene, probe):
        pose = ussim.default_sweep_pivot()
        frame = ussim.render_frame(scene, pose, probe)
        seg = segmentation.segment_frame(frame, probe)
        expected = []   # (u, v) of each tube axis in this upright frame
        for tube in scene.tubes:
            y, z = tube.start[1], tube.start[2]
            expected.append(((y - 64.0) / 0.15 + (probe.width - 1) / 2.0,
                             (126.0 - z) / 0.15))
        got = sorted(m.centroid for m in seg.masks)
        for (gu, gv), (eu, ev) in zip(got, sorted(expected)):
            assert abs(gu - eu) < 2.0
            assert abs(gv - ev) < 2.0

    def test_area_filter_drops_all(self, sweep_frames, probe):
        _, frames = sweep_frames
        seg = segmentation.segment_frame(frames[0], probe,
                                         min_area_mm2=1e6)
        assert seg.components == [] and seg.masks == []

import numpy as np
import pytest

from cbctus import fusion, phantom, segmentation, ussim
from cbctus.errors import InvalidInputError
from cbctus.geometry import RigidTransform
from cbctus.planner import SliceFrame


def single_pixel_mask(probe, u, v):
    m = np.zeros((probe.height, probe.width), dtype=bool)
    m[v, u] = True
    return segmentation.VesselMask(mask=m, prompt=(u, v),
                                   centroid=(float(u), float(v)))


@pytest.fixture
def small_base():
    return phantom.CbctVolume((32, 32, 32), 1.0, (0.0, 0.0, 0.0),
                              voxels=np.zeros((32, 32, 32), dtype=np.float32))


class TestMapMaskToVolume:
    def test_single_pixel_lands_in_expected_voxel(self, probe, small_base):
        fused = fusion.FusedVolume.empty(small_base)
        # identity pose: pixel (u, v) -> ((u-439.5)*0.15, v*0.15, 0)
        u, v = 500, 100
        fusion.map_mask_to_volume(single_pixel_mask(probe, u, v),
                                  RigidTransform.identity(), probe, fused)
        expected = np.floor([(u - 439.5) * 0.15, v * 0.15, 0.0]).astype(int)
        assert fused.vessel.sum() == 1
        assert fused.vessel[tuple(expected)]
        assert fused.provenance[tuple(expected)] == 1
        assert fused.outside_count == 0

    def test_outside_pixels_counted(self, probe, small_base):
        fused = fusion.FusedVolume.empty(small_base)
        pose = RigidTransform.from_translation((1000.0, 0.0, 0.0))
        fusion.map_mask_to_volume(single_pixel_mask(probe, 10, 10),
                                  pose, probe, fused)
        assert fused.vessel.sum() == 0
        assert fused.outside_count == 1

    def test_provenance_accumulates(self, probe, small_base):
        fused = fusion.FusedVolume.empty(small_base)
        mask = single_pixel_mask(probe, 440, 40)
        for _ in range(3):
            fusion.map_mask_to_volume(mask, RigidTransform.identity(),
                                      probe, fused)
        assert fused.provenance.max() == 3
        assert fused.vessel.sum() == 1


class TestFuseSweep:
    def test_requires_frames(self, probe, small_base):
        with pytest.raises(InvalidInputError):
            fusion.fuse_sweep([], [], [], small_base, probe)

    def test_order_independent(self, sweep_frames, sweep_segmentations,
                               default_volume, probe):
        poses, frames = sweep_frames
        masks = [s.masks for s in sweep_segmentations]
        sub = [0, 10, 20, 30]
        a = fusion.fuse_sweep([frames[i] for i in sub],
                              [masks[i] for i in sub],
                              [poses[i] for i in sub], default_volume, probe)
        rev = sub[::-1]
        b = fusion.fuse_sweep([frames[i] for i in rev],
                              [masks[i] for i in rev],
                              [poses[i] for i in rev], default_volume, probe)
        assert np.array_equal(a.vessel, b.vessel)
        assert np.array_equal(a.doppler, b.doppler)
        assert np.array_equal(a.provenance, b.provenance)

    def test_vessel_voxels_near_tubes(self, sweep_frames, sweep_segmentations,
                                      default_volume, probe, scene):
        poses, frames = sweep_frames
        fused = fusion.fuse_sweep(frames, [s.masks for s in sweep_segmentations],
                                  poses, default_volume, probe)
        centers = default_volume.index_to_world(np.argwhere(fused.vessel))
        # every vessel voxel center must lie within one voxel diagonal of a
        # flowing lumen (the mask is the lumen cross-section)
        slack = float(np.linalg.norm(default_volume.spacing))
        dmin = np.full(len(centers), np.inf)
        for tube in scene.tubes:
            rel = centers - tube.start
            t = np.clip(rel @ tube.direction, 0.0, tube.length)
            d = np.linalg.norm(rel - t[:, None] * tube.direction, axis=1)
            dmin = np.minimum(dmin, d)
        assert dmin.max() <= max(r.inner_radius for r in scene.tubes) + slack


class TestPolylineDistance:
    def test_point_on_segment(self):
        d = fusion.point_to_polyline_distances(
            [[5.0, 0.0, 0.0]], [[0, 0, 0], [10, 0, 0]])
        assert d[0] == pytest.approx(0.0)

    def test_perpendicular(self):
        d = fusion.point_to_polyline_distances(
            [[5.0, 3.0, 4.0]], [[0, 0, 0], [10, 0, 0]])
        assert d[0] == pytest.approx(5.0)

    def test_clamps_to_endpoints(self):
        d = fusion.point_to_polyline_distances(
            [[-3.0, 4.0, 0.0]], [[0, 0, 0], [10, 0, 0]])
        assert d[0] == pytest.approx(5.0)

    def test_multi_segment_picks_nearest(self):
        poly = [[0, 0, 0], [10, 0, 0], [10, 10, 0]]
        d = fusion.point_to_polyline_distances([[12.0, 9.0, 0.0]], poly)
        assert d[0] == pytest.approx(2.0)

    def test_single_point_polyline(self):
        d = fusion.point_to_polyline_distances([[3.0, 4.0, 0.0]],
                                               [[0.0, 0.0, 0.0]])
        assert d[0] == pytest.approx(5.0)


class TestTracks:
    def _mask_at(self, probe, u, v):
        return single_pixel_mask(probe, u, v)

    def test_two_parallel_tracks(self, probe):
        ident = RigidTransform.identity()
        frames = []
        for _ in range(4):
            frames.append([self._mask_at(probe, 100, 50),
                           self._mask_at(probe, 700, 50)])
        tracks = fusion.extract_us_centerline_tracks(
            frames, [ident] * 4, probe)
        assert len(tracks) == 2
        for tr in tracks:
            assert len(tr.points) == 4
            assert tr.frame_indices == [0, 1, 2, 3]

    def test_gate_starts_new_track(self, probe):
        ident = RigidTransform.identity()
        masks = [[self._mask_at(probe, 100, 50)],
                 [self._mask_at(probe, 100, 50)],
                 [self._mask_at(probe, 700, 50)]]   # 90 mm jump
        tracks = fusion.extract_us_centerline_tracks(
            masks, [ident] * 3, probe, gate_mm=5.0)
        assert len(tracks) == 2
        assert len(tracks[0].points) == 2
        assert len(tracks[1].points) == 1

    def test_points_in_cbct_frame(self, probe):
        pose = RigidTransform.from_translation((10.0, 20.0, 30.0))
        tracks = fusion.extract_us_centerline_tracks(
            [[self._mask_at(probe, 440, 0)]], [pose], probe)
        expected = pose.apply(
            ussim.pixels_to_us_points(probe, np.array([440.0]),
                                      np.array([0.0]))[0])
        assert np.allclose(tracks[0].points[0], expected)


class TestMappingError:
    def test_known_distances(self):
        track = fusion.UsCenterlineTrack(
            track_id=0, points=np.array([[0.0, 3.0, 0.0], [5.0, 3.0, 0.0]]))
        line = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        far = np.array([[0.0, 100.0, 0.0], [10.0, 100.0, 0.0]])
        rep = fusion.mapping_error([track], [far, line])
        assert rep.track_assignment == [1]
        assert rep.global_mean == pytest.approx(3.0)
        assert rep.global_std == pytest.approx(0.0)

    def test_empty_tracks_rejected(self):
        with pytest.raises(InvalidInputError):
            fusion.mapping_error([], [np.zeros((2, 3))])


class TestFusedSlice:
    def test_overlay_values(self, small_base):
        fused = fusion.FusedVolume.empty(small_base)
        fused.base.voxels[:] = 10.0
        fused.vessel[16, 16, 16] = True
        frame = SliceFrame(origin=np.array([16.5, 0.0, 32.0]),
                           axis_u=np.array([0.0, 1.0, 0.0]),
                           axis_v=np.array([0.0, 0.0, -1.0]),
                           index=16, spacing=1.0)
        image = fusion.fused_slice(fused, frame)
        assert (image == 255.0).any()

    def test_plane_outside_volume(self, small_base):
        fused = fusion.FusedVolume.empty(small_base)
        frame = SliceFrame(origin=np.array([500.0, 0.0, 0.0]),
                           axis_u=np.array([0.0, 1.0, 0.0]),
                           axis_v=np.array([0.0, 0.0, 1.0]),
                           index=0, spacing=1.0)
        with pytest.raises(InvalidInputError):
            fusion.fused_slice(fused, frame)

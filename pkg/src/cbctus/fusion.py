"""Mapping US content into the CBCT volume and scoring the alignment.

Segmented vessel pixels are splatted into their nearest voxel (no
footprint spreading); mask centroids tracked across a sweep form per-vessel
centerline samples whose distance to the analytic tube axes is the mapping
error metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .geometry import RigidTransform
from .phantom import CbctVolume
from .ussim import ProbeModel, pixels_to_us_points

# Centroids closer than this between consecutive frames belong to the same
# physical vessel (default tube spacing is far larger).
TRACK_GATE_MM = 5.0


@dataclass
class FusedVolume:
    """CBCT volume enhanced with US-derived channels."""

    base: CbctVolume
    vessel: np.ndarray        # bool, voxels touched by segmented vessel pixels
    doppler: np.ndarray       # bool, voxels touched by raw Doppler pixels
    provenance: np.ndarray    # uint32, US pixels mapped into each voxel
    outside_count: int = 0

    @classmethod
    def empty(cls, base: CbctVolume):
        return cls(base=base,
                   vessel=np.zeros(base.dims, dtype=bool),
                   doppler=np.zeros(base.dims, dtype=bool),
                   provenance=np.zeros(base.dims, dtype=np.uint32))


@dataclass
class UsCenterlineTrack:
    """Ordered centerline samples of one physical vessel, in {c}."""

    track_id: int
    points: np.ndarray        # (n, 3)
    frame_indices: list = field(default_factory=list)


@dataclass
class MappingErrorReport:
    per_track_distances: list      # one (n,) array per track, mm
    per_track_mean: np.ndarray
    per_track_std: np.ndarray
    track_assignment: list         # ground-truth centerline index per track
    global_mean: float
    global_std: float


def _mask_points_c(mask_pixels_vu, t_u_c: RigidTransform, probe: ProbeModel):
    vs = mask_pixels_vu[0].astype(float)
    us = mask_pixels_vu[1].astype(float)
    return t_u_c.apply(pixels_to_us_points(probe, us, vs))


def map_mask_to_volume(mask, t_u_c: RigidTransform, probe: ProbeModel,
                       fused: FusedVolume) -> FusedVolume:
    """Splat one vessel mask into the fused volume (mutates and returns).

    Pixels mapping outside the grid are counted, not errors.
    """
    pts = _mask_points_c(np.nonzero(mask.mask), t_u_c, probe)
    idx = fused.base.world_to_index(pts)
    inb = fused.base.contains_index(idx)
    ii, jj, kk = idx[inb].T
    fused.vessel[ii, jj, kk] = True
    np.add.at(fused.provenance, (ii, jj, kk), 1)
    fused.outside_count += int((~inb).sum())
    return fused


def fuse_sweep(frames, masks_per_frame, t_u_c_per_frame, base: CbctVolume,
               probe: ProbeModel) -> FusedVolume:
    """Fold all frames' masks (and raw Doppler) into one fused volume.

    Splatting is commutative, so the result is independent of frame order.
    """
    frames = list(frames)
    if not frames:
        raise InvalidInputError("fuse_sweep requires at least one frame")
    fused = FusedVolume.empty(base)
    for frame, masks, t_u_c in zip(frames, masks_per_frame, t_u_c_per_frame):
        for mask in masks:
            map_mask_to_volume(mask, t_u_c, probe, fused)
        pts = _mask_points_c(np.nonzero(frame.doppler), t_u_c, probe)
        if len(pts):
            idx = base.world_to_index(pts)
            inb = base.contains_index(idx)
            ii, jj, kk = idx[inb].T
            fused.doppler[ii, jj, kk] = True
    return fused


def extract_us_centerline_tracks(masks_per_frame, t_u_c_per_frame,
                                 probe: ProbeModel,
                                 gate_mm=TRACK_GATE_MM):
    """Associate per-frame mask centroids into per-vessel tracks.

    Greedy nearest-neighbor gating against each track's last point;
    ties go to the smaller distance, then the older track.
    """
    tracks = []
    for frame_idx, (masks, t_u_c) in enumerate(
            zip(masks_per_frame, t_u_c_per_frame)):
        centroids = []
        for mask in masks:
            u, v = mask.centroid
            p = t_u_c.apply(pixels_to_us_points(probe, np.array([u]),
                                                np.array([v]))[0])
            centroids.append(p)
        # distance of every candidate to every open track's last point
        assignments = []
        for ci, p in enumerate(centroids):
            for ti, track in enumerate(tracks):
                d = float(np.linalg.norm(p - track.points[-1]))
                if d <= gate_mm:
                    assignments.append((d, ti, ci))
        assignments.sort()
        used_tracks = set()
        used_cands = set()
        for d, ti, ci in assignments:
            if ti in used_tracks or ci in used_cands:
                continue
            track = tracks[ti]
            track.points = np.vstack([track.points, centroids[ci]])
            track.frame_indices.append(frame_idx)
            used_tracks.add(ti)
            used_cands.add(ci)
        for ci, p in enumerate(centroids):
            if ci not in used_cands:
                tracks.append(UsCenterlineTrack(
                    track_id=len(tracks),
                    points=np.asarray(p, dtype=float).reshape(1, 3),
                    frame_indices=[frame_idx]))
    return tracks


def point_to_polyline_distances(points, polyline):
    """Minimum distance from each point to a polyline (exact per segment)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polyline, dtype=float)
    if poly.shape[0] == 1:
        return np.linalg.norm(pts - poly[0], axis=1)
    a = poly[:-1]
    d = poly[1:] - a
    len2 = np.einsum("ij,ij->i", d, d)
    len2[len2 == 0] = 1.0
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("psk,sk->ps", rel, d) / len2, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(pts[:, None, :] - closest, axis=2)
    return dist.min(axis=1)


def mapping_error(tracks, centerlines) -> MappingErrorReport:
    """Distance of every track point to its nearest ground-truth centerline.

    Each track is assigned whole to the centerline minimizing its mean
    distance (one-directional, US track to ground truth).
    """
    tracks = list(tracks)
    if not tracks or any(len(t.points) == 0 for t in tracks):
        raise InvalidInputError("mapping_error requires nonempty tracks")
    per_track = []
    assignment = []
    for track in tracks:
        candidates = [point_to_polyline_distances(track.points, line)
                      for line in centerlines]
        means = [float(c.mean()) for c in candidates]
        best = int(np.argmin(means))
        assignment.append(best)
        per_track.append(candidates[best])
    all_d = np.concatenate(per_track)
    return MappingErrorReport(
        per_track_distances=per_track,
        per_track_mean=np.array([d.mean() for d in per_track]),
        per_track_std=np.array([d.std() for d in per_track]),
        track_assignment=assignment,
        global_mean=float(all_d.mean()),
        global_std=float(all_d.std()),
    )


def fused_slice(fused: FusedVolume, slice_frame, with_overlay=True,
                vessel_value=255.0, doppler_value=180.0):
    """Composite 2D image resampled on a slice plane.

    Base intensities are bilinearly resampled; vessel/doppler channels are
    overlaid nearest-neighbor as distinct gray levels.  Raises when the
    plane grid does not intersect the volume.
    """
    base = fused.base
    grid = slice_frame.plane_grid(base)
    coords = (grid - base.origin) / base.spacing - 0.5
    coords = np.moveaxis(coords, -1, 0)
    inside = np.all((coords > -0.5) &
                    (coords < np.array(base.dims).reshape(3, 1, 1) - 0.5),
                    axis=0)
    if not inside.any():
        raise InvalidInputError("slice plane lies outside the volume")
    image = ndimage.map_coordinates(base.voxels.astype(np.float64), coords,
                                    order=1, mode="constant", cval=0.0)
    if with_overlay:
        nearest = np.round(coords).astype(int)
        clipped = np.clip(nearest, 0,
                          np.array(base.dims).reshape(3, 1, 1) - 1)
        ii, jj, kk = clipped
        dop = fused.doppler[ii, jj, kk] & inside
        ves = fused.vessel[ii, jj, kk] & inside
        image[dop] = doppler_value
        image[ves] = vessel_value
    return image

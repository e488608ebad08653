"""Two-stage needle trajectory planning.

Out-of-plane: pick the slice through the lesion centroid and flag rib
occlusion of the vertical approach.  In-plane: maximize the summed distance
from the needle line y = kx + b to the vessel centers, constrained to pass
through the lesion and to a slope window set by the needle-holder angle and
the probe rotation limit.  The in-plane problem is one-dimensional after
eliminating b, and is solved by dense bracketing plus golden-section
refinement; a grid oracle can audit any solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import phantom as ph
from .errors import InfeasiblePoseError, InvalidInputError
from .geometry import RigidTransform, Rotation
from .ussim import ProbeModel

MAX_PROBE_ROTATION_DEG = 15.0
GRID_SAMPLES = 1000
REFINE_TOL = 1e-9

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SliceFrame:
    """Planar frame inside the volume: origin plus orthonormal in-plane
    axes in {c}.  The v axis points downward (away from the scanning
    surface) so line slopes match image-space conventions."""

    origin: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    index: int
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "axis_u", np.asarray(self.axis_u, dtype=float))
        object.__setattr__(self, "axis_v", np.asarray(self.axis_v, dtype=float))

    @property
    def normal(self):
        return np.cross(self.axis_u, self.axis_v)

    def to_plane(self, points):
        """World -> in-plane (x, y) mm coordinates."""
        rel = np.atleast_2d(np.asarray(points, dtype=float)) - self.origin
        return np.stack([rel @ self.axis_u, rel @ self.axis_v], axis=-1)

    def to_world(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return (self.origin + xy[..., :1] * self.axis_u
                + xy[..., 1:2] * self.axis_v)

    def plane_grid(self, volume: ph.CbctVolume):
        """(rows, cols, 3) world grid covering the volume's footprint on
        the plane at this frame's pixel spacing."""
        corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1)
                            for k in (0, 1)], dtype=float)
        corners = volume.origin + corners * (np.array(volume.dims)
                                             * volume.spacing)
        uv = self.to_plane(corners)
        lo = uv.min(axis=0)
        hi = uv.max(axis=0)
        us = np.arange(lo[0], hi[0] + self.spacing / 2, self.spacing)
        vs = np.arange(lo[1], hi[1] + self.spacing / 2, self.spacing)
        gu, gv = np.meshgrid(us, vs)
        return (self.origin + gu[..., None] * self.axis_u
                + gv[..., None] * self.axis_v)


@dataclass(frozen=True)
class SliceSelection:
    frame: SliceFrame
    occluded: bool
    lesion_center: np.ndarray


@dataclass(frozen=True)
class InPlaneScene:
    """2D planning scene: vessel centers and lesion in slice coordinates."""

    vessels: np.ndarray       # (n, 2) mm
    lesion: np.ndarray        # (2,) mm
    k_min: float
    k_max: float
    nominal_k: float

    def __post_init__(self):
        object.__setattr__(self, "vessels",
                           np.asarray(self.vessels, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "lesion",
                           np.asarray(self.lesion, dtype=float))
        if self.k_min > self.k_max:
            raise InvalidInputError("k_min must not exceed k_max")


@dataclass
class TrajectoryPlan:
    k: float
    b: float
    objective: float
    clearances: np.ndarray
    unconstrained: bool = False
    probe_pose: RigidTransform | None = None
    in_plane_rotation_deg: float = 0.0


@dataclass
class SafetyReport:
    lesion_deviation_mm: float
    clearances_mm: np.ndarray
    clearance_margins_mm: np.ndarray   # clearance minus vessel outer radius
    min_margin_mm: float
    rib_contact: bool


def select_axial_slice(volume: ph.CbctVolume, slice_axis=0) -> SliceSelection:
    """Slice through the lesion-label centroid, with rib-occlusion flag.

    The occlusion check walks the vertical in-slice ray from the top
    surface down to the lesion center; slice_axis must therefore be a
    horizontal axis (0 or 1).
    """
    if volume.labels is None:
        raise InvalidInputError("volume carries no label grid")
    if slice_axis not in (0, 1):
        raise InvalidInputError("slice_axis must be 0 or 1 (plane must "
                                "contain the vertical direction)")
    lesion_idx = np.argwhere(volume.labels == ph.LESION)
    if lesion_idx.size == 0:
        raise InvalidInputError("no lesion label in volume")
    centroid_idx = lesion_idx.mean(axis=0)
    lesion_center = volume.index_to_world(centroid_idx)[0]

    index = int(np.round(centroid_idx[slice_axis]))
    index = min(max(index, 0), volume.dims[slice_axis] - 1)
    lateral_axis = 1 - slice_axis
    axis_u = np.zeros(3)
    axis_u[lateral_axis] = 1.0
    axis_v = np.array([0.0, 0.0, -1.0])
    origin = np.array([0.0, 0.0, 0.0])
    origin[slice_axis] = volume.origin[slice_axis] + (index + 0.5) * volume.spacing[slice_axis]
    origin[lateral_axis] = volume.origin[lateral_axis]
    origin[2] = volume.max_corner[2]
    frame = SliceFrame(origin=origin, axis_u=axis_u, axis_v=axis_v,
                       index=index, spacing=float(volume.spacing[lateral_axis]))

    # vertical ray from the top surface to the lesion center
    i_fixed = index
    j_fixed = int(np.round(centroid_idx[lateral_axis]))
    k_lesion = int(np.round(centroid_idx[2]))
    occluded = False
    col_idx = [0, 0, 0]
    col_idx[slice_axis] = i_fixed
    col_idx[lateral_axis] = j_fixed
    for k in range(volume.dims[2] - 1, k_lesion, -1):
        col_idx[2] = k
        if volume.labels[tuple(col_idx)] == ph.RIB:
            occluded = True
            break
    return SliceSelection(frame=frame, occluded=occluded,
                          lesion_center=lesion_center)


def slope_bounds(nominal_needle_angle_deg=39.0,
                 max_rotation_deg=MAX_PROBE_ROTATION_DEG):
    """(k_min, k_max, nominal_k): tangents of the needle-line angle window
    measured from the in-plane x-axis."""
    nominal = 90.0 - nominal_needle_angle_deg
    return (math.tan(math.radians(nominal - max_rotation_deg)),
            math.tan(math.radians(nominal + max_rotation_deg)),
            math.tan(math.radians(nominal)))


def build_in_plane_scene(fused, selection: SliceSelection,
                         nominal_needle_angle_deg=39.0,
                         max_rotation_deg=MAX_PROBE_ROTATION_DEG) -> InPlaneScene:
    """Vessel-channel component centroids in the selected slice plus the
    slope window derived from the holder angle and rotation limit."""
    frame = selection.frame
    volume = fused.base
    slice_axis = int(np.argmax(np.abs(frame.normal)))
    lesion_uv = frame.to_plane(selection.lesion_center)[0]
    half = volume.spacing[slice_axis] / 2.0
    plane_coord = frame.origin[slice_axis]
    if abs(selection.lesion_center[slice_axis] - plane_coord) > half + 1e-9:
        raise InvalidInputError("lesion center does not lie in the slice")

    slab = np.take(fused.vessel, frame.index, axis=slice_axis)
    labeled, count = ndimage.label(slab, structure=_CROSS)
    centers = []
    for lab in range(1, count + 1):
        jj, kk = np.nonzero(labeled == lab)
        idx = np.zeros((len(jj), 3))
        idx[:, slice_axis] = frame.index
        idx[:, 1 - slice_axis] = jj
        idx[:, 2] = kk
        world = volume.index_to_world(idx)
        centers.append(frame.to_plane(world).mean(axis=0))
    vessels = (np.array(centers) if centers else np.zeros((0, 2)))
    k_min, k_max, k_nom = slope_bounds(nominal_needle_angle_deg,
                                       max_rotation_deg)
    return InPlaneScene(vessels=vessels, lesion=lesion_uv,
                        k_min=k_min, k_max=k_max, nominal_k=k_nom)


def _objective(k, dx, dy):
    """Summed line-to-vessel distance with b eliminated by the lesion
    constraint: f(k) = sum |k dx_i - dy_i| / sqrt(1 + k^2)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    num = np.abs(k[:, None] * dx[None, :] - dy[None, :]).sum(axis=1)
    return num / np.sqrt(1.0 + k * k)


def _golden_max(f, a, b, tol):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - (b - a) * inv_phi
    d = a + (b - a) * inv_phi
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * inv_phi
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * inv_phi
            fd = f(d)
    return (a + b) / 2.0


def solve_trajectory(scene: InPlaneScene,
                     grid_samples=GRID_SAMPLES) -> TrajectoryPlan:
    """Bounded one-variable maximization of the summed-distance objective.

    Every local maximum found on the bracketing grid is refined; exact ties
    are broken toward the slope nearest the nominal needle angle, then the
    smaller k.
    """
    x_l, y_l = scene.lesion
    if scene.vessels.shape[0] == 0:
        k = min(max(scene.nominal_k, scene.k_min), scene.k_max)
        return TrajectoryPlan(k=k, b=y_l - k * x_l, objective=0.0,
                              clearances=np.zeros(0), unconstrained=True)

    dx = scene.vessels[:, 0] - x_l
    dy = scene.vessels[:, 1] - y_l
    if scene.k_max == scene.k_min:
        candidates = [scene.k_min]
    else:
        ks = np.linspace(scene.k_min, scene.k_max, grid_samples)
        fs = _objective(ks, dx, dy)
        local = [i for i in range(len(ks))
                 if (i == 0 or fs[i] >= fs[i - 1])
                 and (i == len(ks) - 1 or fs[i] >= fs[i + 1])]

        def f_scalar(k):
            return float(_objective(k, dx, dy)[0])

        candidates = []
        for i in local:
            a = ks[max(i - 1, 0)]
            b = ks[min(i + 1, len(ks) - 1)]
            candidates.append(_golden_max(f_scalar, a, b, REFINE_TOL))
        candidates.extend([scene.k_min, scene.k_max])

    cand = np.array(candidates)
    vals = _objective(cand, dx, dy)
    best = vals.max()
    eligible = cand[vals >= best - 1e-12]
    nominal_angle = math.atan(scene.nominal_k)
    order = sorted(eligible,
                   key=lambda k: (abs(math.atan(k) - nominal_angle), k))
    k = float(order[0])
    b = y_l - k * x_l
    clearances = np.abs(k * scene.vessels[:, 0] - scene.vessels[:, 1] + b) \
        / math.sqrt(1.0 + k * k)
    return TrajectoryPlan(k=k, b=b,
                          objective=float(_objective(k, dx, dy)[0]),
                          clearances=clearances)


def grid_oracle_objective(scene: InPlaneScene, samples=1_000_000):
    """Dense-grid maximum of the objective; audit reference for the solver."""
    if scene.vessels.shape[0] == 0:
        return 0.0
    dx = scene.vessels[:, 0] - scene.lesion[0]
    dy = scene.vessels[:, 1] - scene.lesion[1]
    ks = np.linspace(scene.k_min, scene.k_max, samples)
    return float(_objective(ks, dx, dy).max())


def compute_probe_pose(plan: TrajectoryPlan, slice_frame: SliceFrame,
                       probe: ProbeModel, lesion_xy=None,
                       max_rotation_deg=MAX_PROBE_ROTATION_DEG) -> TrajectoryPlan:
    """Probe pose in {c} aligning the image plane with the slice, centering
    the lesion horizontally and laying the holder's fixed needle line on the
    planned one.  Fills the plan's pose fields and returns the plan.
    """
    if lesion_xy is None:
        # lesion lies on the planned line; recover its x from b: any point
        # works, pick the one below the entry.  Callers should pass it.
        raise InvalidInputError("lesion_xy (slice coordinates) is required")
    l_xy = np.asarray(lesion_xy, dtype=float)

    rho = math.atan(plan.k) - math.radians(probe.nominal_slope_angle_deg)
    if abs(math.degrees(rho)) > max_rotation_deg + 1e-9:
        raise InfeasiblePoseError(
            f"required in-plane rotation {math.degrees(rho):.3f} deg exceeds "
            f"the +/-{max_rotation_deg} deg limit")

    c, s = math.cos(rho), math.sin(rho)
    p_n, d_n = probe.needle_line_image()
    pn_rot = np.array([c * p_n[0] - s * p_n[1], s * p_n[0] + c * p_n[1]])
    # unknown in-plane translation t = (tx, ty):
    #   image-x of lesion is zero:  c tx + s ty = c Lx + s Ly
    #   needle entry on the line:   -k tx + ty = b + k pn_rot.x - pn_rot.y
    mat = np.array([[c, s], [-plan.k, 1.0]])
    rhs = np.array([c * l_xy[0] + s * l_xy[1],
                    plan.b + plan.k * pn_rot[0] - pn_rot[1]])
    t = np.linalg.solve(mat, rhs)

    ax_u, ax_v = slice_frame.axis_u, slice_frame.axis_v
    ex = c * ax_u + s * ax_v
    ey = -s * ax_u + c * ax_v
    ez = np.cross(ex, ey)
    pose = RigidTransform(Rotation(np.column_stack([ex, ey, ez])),
                          slice_frame.to_world(t)[0])
    plan.probe_pose = pose
    plan.in_plane_rotation_deg = math.degrees(rho)
    return plan


def extract_needle_line(pose: RigidTransform, slice_frame: SliceFrame,
                        probe: ProbeModel):
    """(k, b) of the holder's needle line mapped through a probe pose,
    expressed in slice coordinates."""
    p_n, d_n = probe.needle_line_image()
    p0 = pose.apply(np.array([p_n[0], p_n[1], 0.0]))
    p1 = pose.apply(np.array([p_n[0] + d_n[0], p_n[1] + d_n[1], 0.0]))
    q0, q1 = slice_frame.to_plane(np.vstack([p0, p1]))
    k = (q1[1] - q0[1]) / (q1[0] - q0[0])
    return float(k), float(q0[1] - k * q0[0])


def _segment_intersects_box(p0, p1, bmin, bmax):
    d = p1 - p0
    tmin, tmax = 0.0, 1.0
    for ax in range(3):
        if abs(d[ax]) < 1e-12:
            if p0[ax] < bmin[ax] or p0[ax] > bmax[ax]:
                return False
        else:
            t1 = (bmin[ax] - p0[ax]) / d[ax]
            t2 = (bmax[ax] - p0[ax]) / d[ax]
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
            if tmin > tmax:
                return False
    return True


def evaluate_plan(plan: TrajectoryPlan, scene: InPlaneScene, vessel_radii,
                  slice_frame: SliceFrame | None = None,
                  ribs=(), entry_depth_mm=0.0) -> SafetyReport:
    """Safety numbers for a (possibly externally supplied) needle line.

    Clearance margins are line-to-vessel-center distance minus the vessel
    outer radius; rib contact tests the 3D needle segment from the entry
    depth down to the lesion against the rib boxes.
    """
    vessel_radii = np.asarray(vessel_radii, dtype=float)
    x_l, y_l = scene.lesion
    deviation = abs(plan.k * x_l + plan.b - y_l) / math.sqrt(1 + plan.k ** 2)
    clearances = (np.abs(plan.k * scene.vessels[:, 0]
                         - scene.vessels[:, 1] + plan.b)
                  / math.sqrt(1.0 + plan.k ** 2)) if len(scene.vessels) \
        else np.zeros(0)
    margins = clearances - vessel_radii

    rib_contact = False
    if slice_frame is not None and len(ribs):
        y0 = entry_depth_mm
        x0 = x_l + (y0 - y_l) / plan.k if plan.k != 0 else x_l
        p0 = slice_frame.to_world(np.array([x0, y0]))[0]
        p1 = slice_frame.to_world(np.array([x_l, y_l]))[0]
        for rib in ribs:
            if _segment_intersects_box(p0, p1, rib.min_corner, rib.max_corner):
                rib_contact = True
                break
    return SafetyReport(
        lesion_deviation_mm=float(deviation),
        clearances_mm=clearances,
        clearance_margins_mm=margins,
        min_margin_mm=float(margins.min()) if len(margins) else float("inf"),
        rib_contact=rib_contact,
    )

"""Analytic validation phantom and its voxelized CT-like volume.

The default scene is a water tank holding three parallel flow tubes (inner
diameters 7, 8 and 16 mm, 1 mm walls), a 10 mm glass-ball lesion below the
tubes and two rib strips near the top surface that shadow the lesion from
directly above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError

# Material labels (shared with the kernels).
BACKGROUND = _kernels.numpy_backend.BACKGROUND
WATER = _kernels.numpy_backend.WATER
LUMEN = _kernels.numpy_backend.LUMEN
WALL = _kernels.numpy_backend.WALL
LESION = _kernels.numpy_backend.LESION
RIB = _kernels.numpy_backend.RIB

MATERIAL_NAMES = {
    BACKGROUND: "background",
    WATER: "water",
    LUMEN: "lumen",
    WALL: "wall",
    LESION: "lesion",
    RIB: "rib",
}

# CT-like intensity ordering; only the ordering matters downstream.
DEFAULT_INTENSITIES = {
    BACKGROUND: 0.0,
    WATER: 0.0,
    LUMEN: 10.0,
    WALL: 120.0,
    LESION: 300.0,
    RIB: 700.0,
}

_CLASSIFY_CHUNK = 1 << 20


@dataclass(frozen=True)
class Tube:
    """Straight tube segment with lumen and wall."""

    start: np.ndarray
    end: np.ndarray
    inner_radius: float
    wall_thickness: float
    has_flow: bool = True

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        if self.inner_radius <= 0 or self.wall_thickness <= 0:
            raise InvalidInputError("tube radii must be positive")
        if np.allclose(self.start, self.end):
            raise InvalidInputError("tube start and end coincide")

    @property
    def outer_radius(self):
        return self.inner_radius + self.wall_thickness

    @property
    def length(self):
        return float(np.linalg.norm(self.end - self.start))

    @property
    def direction(self):
        return (self.end - self.start) / self.length


@dataclass(frozen=True)
class LesionSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise InvalidInputError("lesion radius must be positive")


@dataclass(frozen=True)
class RibStrip:
    """Axis-aligned box mimicking a rib."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", np.asarray(self.min_corner, dtype=float))
        object.__setattr__(self, "max_corner", np.asarray(self.max_corner, dtype=float))
        if not np.all(self.min_corner < self.max_corner):
            raise InvalidInputError("rib box corners must satisfy min < max")


@dataclass(frozen=True)
class PhantomScene:
    tubes: tuple
    lesion: LesionSphere
    ribs: tuple
    tank_min: np.ndarray
    tank_max: np.ndarray
    intensities: dict = field(default_factory=lambda: dict(DEFAULT_INTENSITIES))

    def __post_init__(self):
        object.__setattr__(self, "tubes", tuple(self.tubes))
        object.__setattr__(self, "ribs", tuple(self.ribs))
        object.__setattr__(self, "tank_min", np.asarray(self.tank_min, dtype=float))
        object.__setattr__(self, "tank_max", np.asarray(self.tank_max, dtype=float))

    def packed(self):
        """Primitive arrays consumed by the classification kernel."""
        n = len(self.tubes)
        starts = np.zeros((n, 3))
        dirs = np.zeros((n, 3))
        lengths = np.zeros(n)
        r_in = np.zeros(n)
        r_out = np.zeros(n)
        flow = np.zeros(n, dtype=np.uint8)
        for i, tube in enumerate(self.tubes):
            starts[i] = tube.start
            dirs[i] = tube.direction
            lengths[i] = tube.length
            r_in[i] = tube.inner_radius
            r_out[i] = tube.outer_radius
            flow[i] = 1 if tube.has_flow else 0
        sphere = np.array([*self.lesion.center, self.lesion.radius])
        boxes = np.zeros((len(self.ribs), 6))
        for i, rib in enumerate(self.ribs):
            boxes[i, :3] = rib.min_corner
            boxes[i, 3:] = rib.max_corner
        tank = np.concatenate([self.tank_min, self.tank_max])
        return starts, dirs, lengths, r_in, r_out, flow, sphere, boxes, tank


@dataclass
class CbctVolume:
    """Voxelized intensity grid in the CBCT frame {c}.

    `origin` is the minimum corner of the grid; the center of voxel
    (i, j, k) sits at origin + (i + 0.5, j + 0.5, k + 0.5) * spacing.
    """

    dims: tuple
    spacing: np.ndarray
    origin: np.ndarray
    voxels: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = np.asarray(self.spacing, dtype=float)
        if self.spacing.ndim == 0:
            self.spacing = np.full(3, float(self.spacing))
        self.origin = np.asarray(self.origin, dtype=float)
        if any(d < 1 for d in self.dims):
            raise InvalidInputError("volume dims must be >= 1")
        if np.any(self.spacing <= 0):
            raise InvalidInputError("voxel spacing must be positive")

    @property
    def max_corner(self):
        return self.origin + np.array(self.dims) * self.spacing

    def voxel_centers_axis(self, axis):
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def world_to_index(self, points):
        """Nearest-voxel indices for (N, 3) world points (may be out of range)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((pts - self.origin) / self.spacing).astype(np.int64)

    def index_to_world(self, idx):
        idx = np.atleast_2d(np.asarray(idx, dtype=float))
        return self.origin + (idx + 0.5) * self.spacing

    def contains_index(self, idx):
        idx = np.atleast_2d(idx)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)


def build_default_phantom() -> PhantomScene:
    """Deterministic default scene; all coordinates in the CBCT frame, mm."""
    tank_min = np.zeros(3)
    tank_max = np.array([128.0, 128.0, 128.0])
    tubes = (
        Tube((4.0, 30.0, 80.0), (124.0, 30.0, 80.0), inner_radius=3.5,
             wall_thickness=1.0, has_flow=True),
        Tube((4.0, 46.0, 80.0), (124.0, 46.0, 80.0), inner_radius=4.0,
             wall_thickness=1.0, has_flow=True),
        Tube((4.0, 98.0, 78.0), (124.0, 98.0, 78.0), inner_radius=8.0,
             wall_thickness=1.0, has_flow=True),
    )
    lesion = LesionSphere((64.0, 64.0, 55.0), radius=5.0)
    ribs = (
        RibStrip((20.0, 58.0, 98.0), (108.0, 66.0, 104.0)),
        RibStrip((20.0, 74.0, 98.0), (108.0, 82.0, 104.0)),
    )
    return PhantomScene(tubes, lesion, ribs, tank_min, tank_max)


def classify_points(scene: PhantomScene, points):
    """(labels, flow) arrays for (N, 3) points, via the selected kernel."""
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    packed = scene.packed()
    if pts.shape[0] <= _CLASSIFY_CHUNK:
        return _kernels.classify(pts, *packed)
    labels = np.empty(pts.shape[0], dtype=np.uint8)
    flow = np.empty(pts.shape[0], dtype=np.uint8)
    for lo in range(0, pts.shape[0], _CLASSIFY_CHUNK):
        hi = min(lo + _CLASSIFY_CHUNK, pts.shape[0])
        labels[lo:hi], flow[lo:hi] = _kernels.classify(pts[lo:hi], *packed)
    return labels, flow


def is_inside(scene: PhantomScene, p) -> int:
    """Material label of a single point (same priority rule as voxelize)."""
    labels, _ = classify_points(scene, np.asarray(p, dtype=float).reshape(1, 3))
    return int(labels[0])


def voxelize(scene: PhantomScene, dims=(256, 256, 256), spacing=0.5,
             origin=(0.0, 0.0, 0.0)) -> CbctVolume:
    """Voxelize by center-point containment (no partial-volume averaging)."""
    vol = CbctVolume(dims, spacing, origin,
                     voxels=np.zeros(1, dtype=np.float32))
    if (np.any(vol.origin > scene.tank_min + 1e-9)
            or np.any(vol.max_corner < scene.tank_max - 1e-9)):
        raise InvalidInputError("voxel grid does not cover the tank bounds")

    nx, ny, nz = vol.dims
    cx = vol.voxel_centers_axis(0)
    cy = vol.voxel_centers_axis(1)
    cz = vol.voxel_centers_axis(2)
    labels = np.empty((nx, ny, nz), dtype=np.uint8)
    # Slab-wise to bound temporary memory.
    yz = np.empty((ny * nz, 3))
    gy, gz = np.meshgrid(cy, cz, indexing="ij")
    yz[:, 1] = gy.ravel()
    yz[:, 2] = gz.ravel()
    for i in range(nx):
        yz[:, 0] = cx[i]
        slab_labels, _ = classify_points(scene, yz)
        labels[i] = slab_labels.reshape(ny, nz)

    lut = np.zeros(max(MATERIAL_NAMES) + 1, dtype=np.float32)
    for lab, value in scene.intensities.items():
        lut[lab] = value
    vol.voxels = lut[labels]
    vol.labels = labels
    return vol


def ground_truth_centerlines(scene: PhantomScene, step: float):
    """Uniformly sampled axis polylines, one (N, 3) array per tube."""
    if step <= 0:
        raise InvalidInputError("centerline step must be positive")
    lines = []
    for tube in scene.tubes:
        n = int(np.floor(tube.length / step + 1e-12)) + 1
        ts = np.arange(n) * step
        lines.append(tube.start + np.outer(ts, tube.direction))
    return lines

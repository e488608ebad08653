"""Geometric B-mode / Doppler frame simulator.

A frame is rendered by classifying the 3D point behind every pixel of the
image plane.  No wave physics: the only acoustic effect is a binary shadow
column below rib surfaces.  Doppler is an exact boolean flow mask so the
downstream area filter and fusion can be tested against geometry oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import phantom
from .errors import InvalidInputError
from .geometry import RigidTransform, Rotation

# Grayscale rendering table (arbitrary but fixed: lumen dark, wall/rib
# bright, lesion mid; water and out-of-tank share one background level).
DEFAULT_US_INTENSITIES = {
    phantom.BACKGROUND: 30.0,
    phantom.WATER: 30.0,
    phantom.LUMEN: 20.0,
    phantom.WALL: 200.0,
    phantom.LESION: 120.0,
    phantom.RIB: 230.0,
}


@dataclass(frozen=True)
class ProbeModel:
    """Rectangular image geometry plus the fixed needle-holder line.

    Pixel (u, v) maps to the US frame {u} point
    ((u - (width-1)/2) * spacing, v * spacing, 0): the frame origin sits at
    the top-center of the image, x grows to the right, y grows with depth.
    The needle holder fixes the needle to a line in image coordinates at
    `needle_angle_deg` measured from the scanning surface (so the line makes
    90 - needle_angle_deg degrees with the image x-axis when the probe is
    upright).
    """

    width: int = 880
    height: int = 660
    spacing: float = 0.15
    needle_angle_deg: float = 39.0
    needle_entry_mm: tuple = (-40.0, 0.0)

    def __post_init__(self):
        if self.spacing <= 0:
            raise InvalidInputError("pixel spacing must be positive")

    @property
    def nominal_slope_angle_deg(self):
        """Angle of the needle line from the image x-axis, degrees."""
        return 90.0 - self.needle_angle_deg

    def needle_line_image(self):
        """(entry point mm, unit direction) of the holder line in the image."""
        a = math.radians(self.nominal_slope_angle_deg)
        return (np.array(self.needle_entry_mm, dtype=float),
                np.array([math.cos(a), math.sin(a)]))

    def pixel_points_mm(self):
        """(height, width, 2) array of pixel centers in image mm coordinates."""
        x = (np.arange(self.width) - (self.width - 1) / 2.0) * self.spacing
        y = np.arange(self.height) * self.spacing
        gx, gy = np.meshgrid(x, y)
        return np.stack([gx, gy], axis=-1)


@dataclass
class UsFrame:
    """Simulated frame: intensities, flow mask and capture pose."""

    bmode: np.ndarray
    doppler: np.ndarray
    t_u_b: RigidTransform
    index: int = 0


@dataclass(frozen=True)
class FanSweepSpec:
    """Fan motion: rotate about an axis fixed in the probe frame."""

    pivot: RigidTransform
    axis: tuple = (1.0, 0.0, 0.0)
    range_deg: float = 30.0
    step_deg: float = 1.0

    def __post_init__(self):
        if self.step_deg <= 0:
            raise InvalidInputError("fan step must be positive")
        if self.range_deg < 0:
            raise InvalidInputError("fan range must be nonnegative")


def pixel_to_us_point(probe: ProbeModel, u, v):
    """US-frame {u} 3D point (mm) behind pixel (u, v); z = 0 on the plane."""
    if not (0 <= u < probe.width and 0 <= v < probe.height):
        raise InvalidInputError(
            f"pixel ({u}, {v}) outside {probe.width}x{probe.height} image")
    return np.array([(u - (probe.width - 1) / 2.0) * probe.spacing,
                     v * probe.spacing, 0.0])


def us_point_to_pixel(probe: ProbeModel, p):
    """Inverse of pixel_to_us_point (continuous pixel coordinates)."""
    p = np.asarray(p, dtype=float)
    return (p[..., 0] / probe.spacing + (probe.width - 1) / 2.0,
            p[..., 1] / probe.spacing)


def pixels_to_us_points(probe: ProbeModel, us, vs):
    """Vectorized planar mapping for (possibly fractional) pixel arrays."""
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    return np.stack([(us - (probe.width - 1) / 2.0) * probe.spacing,
                     vs * probe.spacing, np.zeros_like(us)], axis=-1)


def render_frame(scene, probe_pose_u_in_c: RigidTransform, probe: ProbeModel,
                 noise_sigma: float = 0.0, rng=None,
                 intensities=None) -> UsFrame:
    """Render one frame from a probe pose given in the CBCT frame {c}.

    The returned frame's capture pose field holds the pose that was used,
    i.e. callers working purely in {c} get t_u_b == the {c} pose.  Doppler
    is exact flowing-lumen membership; the shadow model blanks bmode pixels
    strictly below the first rib surface in each column.
    """
    if intensities is None:
        intensities = DEFAULT_US_INTENSITIES
    h, w = probe.height, probe.width
    pix = probe.pixel_points_mm()
    pts_u = np.concatenate([pix.reshape(-1, 2),
                            np.zeros((h * w, 1))], axis=1)
    pts_c = probe_pose_u_in_c.apply(pts_u)
    labels, flow = phantom.classify_points(scene, pts_c)
    labels = labels.reshape(h, w)
    doppler = flow.reshape(h, w).astype(bool)

    lut = np.zeros(max(intensities) + 1, dtype=np.float64)
    for lab, value in intensities.items():
        lut[lab] = value
    bmode = lut[labels]

    rib = labels == phantom.RIB
    has_rib = rib.any(axis=0)
    first = np.where(has_rib, rib.argmax(axis=0), h)
    shadow = np.arange(h)[:, None] > first[None, :]
    bmode[shadow] = intensities[phantom.BACKGROUND]

    if noise_sigma > 0.0:
        if rng is None:
            raise InvalidInputError("speckle noise requires a seeded rng")
        bmode = np.clip(bmode + rng.normal(0.0, noise_sigma, size=bmode.shape),
                        0.0, 255.0)

    return UsFrame(bmode=bmode.astype(np.float32), doppler=doppler,
                   t_u_b=probe_pose_u_in_c)


def generate_fan_sweep(spec: FanSweepSpec):
    """Deterministic pose sequence pivot . Rot(axis, theta)."""
    steps = int(math.floor(spec.range_deg / spec.step_deg + 1e-9))
    angles = -spec.range_deg / 2.0 + np.arange(steps + 1) * spec.step_deg
    poses = []
    for theta in angles:
        rot = RigidTransform(Rotation.from_axis_angle_deg(spec.axis, theta))
        poses.append(spec.pivot @ rot)
    return poses


def default_sweep_pivot() -> RigidTransform:
    """Probe pose over the default phantom: image x-axis along +y of {c},
    depth along -z, plane normal along +x, origin at (64, 64, 126)."""
    r = np.column_stack([
        np.array([0.0, 1.0, 0.0]),   # image x
        np.array([0.0, 0.0, -1.0]),  # image y (depth, downward)
        np.array([-1.0, 0.0, 0.0]),  # plane normal (right-handed)
    ])
    return RigidTransform(Rotation(r), np.array([64.0, 64.0, 126.0]))


def default_fan_sweep_spec(range_deg=30.0, step_deg=1.0) -> FanSweepSpec:
    return FanSweepSpec(pivot=default_sweep_pivot(), axis=(1.0, 0.0, 0.0),
                        range_deg=range_deg, step_deg=step_deg)

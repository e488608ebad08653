"""Doppler-prompted vessel segmentation.

Flow components larger than the area threshold (default 10 mm^2, strict
inequality) provide centroid prompts; each prompt seeds a deterministic
median-referenced region grower on the B-mode image.  The grower sits
behind a plain function interface so a learned segmenter could be swapped
in without touching the rest of the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, OversegmentationError
from .ussim import ProbeModel, UsFrame

# 4-connectivity; diagonal noise must not bridge components.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

DEFAULT_MIN_AREA_MM2 = 10.0
# Region tolerance: fraction of the image dynamic range.
DEFAULT_TOLERANCE_FRACTION = 0.10
# Region may not exceed this multiple of the prompting component's area.
DEFAULT_MAX_AREA_FACTOR = 4.0


@dataclass(frozen=True)
class DopplerComponent:
    """One 4-connected flow component."""

    pixels: np.ndarray        # (n, 2) array of (v, u) pixel indices
    area_mm2: float
    centroid: tuple           # (u, v), pixels


@dataclass(frozen=True)
class VesselMask:
    """Segmented vessel cross-section grown from one prompt."""

    mask: np.ndarray          # boolean (height, width)
    prompt: tuple             # (u, v), pixels
    centroid: tuple           # (u, v), pixels


@dataclass
class FrameSegmentation:
    masks: list = field(default_factory=list)
    components: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def extract_components(doppler, pixel_spacing,
                       min_area_mm2=DEFAULT_MIN_AREA_MM2):
    """Flow components with area strictly greater than min_area_mm2.

    Sorted by area descending, ties by (u, v) centroid lexicographic.
    """
    doppler = np.asarray(doppler, dtype=bool)
    labeled, count = ndimage.label(doppler, structure=_CROSS)
    px_area = pixel_spacing * pixel_spacing
    counts = np.bincount(labeled.ravel(), minlength=count + 1)
    components = []
    for lab in range(1, count + 1):
        area = counts[lab] * px_area
        if area <= min_area_mm2:
            continue
        vs, us = np.nonzero(labeled == lab)
        centroid = (float(us.mean()), float(vs.mean()))
        components.append(DopplerComponent(
            pixels=np.column_stack([vs, us]), area_mm2=area, centroid=centroid))
    components.sort(key=lambda c: (-c.area_mm2, c.centroid))
    return components


def segment_from_prompt(bmode, prompt, tolerance=None, max_area_px=None):
    """Region grown from the prompt over pixels whose intensity stays within
    `tolerance` of the 3x3 prompt-neighborhood median.

    Raises OversegmentationError when the grown region exceeds max_area_px,
    which signals a prompt on a boundary or featureless pixel.
    """
    bmode = np.asarray(bmode, dtype=float)
    h, w = bmode.shape
    u = int(round(prompt[0]))
    v = int(round(prompt[1]))
    if not (0 <= u < w and 0 <= v < h):
        raise InvalidInputError(f"prompt ({prompt[0]}, {prompt[1]}) outside image")

    if tolerance is None:
        dyn = float(bmode.max() - bmode.min())
        tolerance = DEFAULT_TOLERANCE_FRACTION * dyn
    ref = float(np.median(bmode[max(v - 1, 0):v + 2, max(u - 1, 0):u + 2]))

    candidate = np.abs(bmode - ref) <= tolerance
    labeled, _ = ndimage.label(candidate, structure=_CROSS)
    region = labeled == labeled[v, u]
    if not region[v, u]:
        # prompt pixel itself outside tolerance of its neighborhood median
        region = np.zeros_like(candidate)
        region[v, u] = True
    size = int(region.sum())
    if max_area_px is not None and size > max_area_px:
        raise OversegmentationError(
            f"region of {size} px from prompt ({u}, {v}) exceeds bound "
            f"{max_area_px:.0f} px")
    vs, us = np.nonzero(region)
    return VesselMask(mask=region, prompt=(u, v),
                      centroid=(float(us.mean()), float(vs.mean())))


def segment_frame(frame: UsFrame, probe: ProbeModel,
                  min_area_mm2=DEFAULT_MIN_AREA_MM2,
                  max_area_factor=DEFAULT_MAX_AREA_FACTOR) -> FrameSegmentation:
    """Full per-frame pipeline: area-filtered components -> prompts -> masks.

    A component whose region grower overshoots is skipped and recorded as a
    warning rather than failing the frame.
    """
    result = FrameSegmentation()
    result.components = extract_components(frame.doppler, probe.spacing,
                                           min_area_mm2)
    for comp in result.components:
        max_px = max_area_factor * comp.pixels.shape[0]
        try:
            mask = segment_from_prompt(frame.bmode, comp.centroid,
                                       max_area_px=max_px)
        except OversegmentationError as exc:
            result.warnings.append(str(exc))
            continue
        result.masks.append(mask)
    return result

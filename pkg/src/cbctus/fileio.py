"""File formats: transforms, volumes, scenes, sessions and images.

All text outputs are deterministic (fixed field order, 15 significant
digits, no timestamps) so identical runs are byte-identical.
"""

from __future__ import annotations

import os

import numpy as np

from . import phantom as ph
from .calibration import AbsolutePoseSample
from .errors import ConfigError
from .geometry import RigidTransform, transform_from_text, transform_to_text


def _fmt(v):
    return f"{float(v):.15g}"


# -- transforms --------------------------------------------------------------

def save_transform(path, t: RigidTransform):
    with open(path, "w") as fh:
        fh.write(transform_to_text(t))


def load_transform(path) -> RigidTransform:
    with open(path) as fh:
        return transform_from_text(fh.read())


# -- volumes -----------------------------------------------------------------

def save_volume(path_base, volume: ph.CbctVolume):
    """Raw little-endian voxel array plus a sidecar text header.

    Writes <base>.raw (float32), optionally <base>.labels.raw (uint8) and
    <base>.meta.
    """
    volume.voxels.astype("<f4").tofile(path_base + ".raw")
    lines = [
        f"dims: {volume.dims[0]} {volume.dims[1]} {volume.dims[2]}",
        "spacing: " + " ".join(_fmt(s) for s in volume.spacing),
        "origin: " + " ".join(_fmt(o) for o in volume.origin),
        "dtype: float32",
        "byte_order: little",
    ]
    if volume.labels is not None:
        volume.labels.astype(np.uint8).tofile(path_base + ".labels.raw")
        lines.append("labels: uint8")
        for lab in sorted(ph.MATERIAL_NAMES):
            lines.append(f"label.{lab}: {ph.MATERIAL_NAMES[lab]}")
    with open(path_base + ".meta", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_volume(path_base) -> ph.CbctVolume:
    meta = {}
    with open(path_base + ".meta") as fh:
        for line in fh:
            line = line.strip()
            if line and ":" in line:
                key, value = line.split(":", 1)
                meta[key.strip()] = value.strip()
    dims = tuple(int(x) for x in meta["dims"].split())
    spacing = np.array([float(x) for x in meta["spacing"].split()])
    origin = np.array([float(x) for x in meta["origin"].split()])
    voxels = np.fromfile(path_base + ".raw", dtype="<f4").reshape(dims)
    labels = None
    if meta.get("labels") == "uint8":
        labels = np.fromfile(path_base + ".labels.raw",
                             dtype=np.uint8).reshape(dims)
    return ph.CbctVolume(dims, spacing, origin, voxels=voxels, labels=labels)


# -- channel grids -----------------------------------------------------------

def save_channel(path, grid):
    grid = np.asarray(grid)
    if grid.dtype == bool:
        grid.astype(np.uint8).tofile(path)
    else:
        grid.astype("<u4").tofile(path)


# -- scenes ------------------------------------------------------------------

def save_scene(path, scene: ph.PhantomScene):
    lines = ["# cbctus phantom scene",
             "tank: " + " ".join(_fmt(v) for v in
                                 np.concatenate([scene.tank_min,
                                                 scene.tank_max]))]
    for tube in scene.tubes:
        vals = [*tube.start, *tube.end, tube.inner_radius,
                tube.wall_thickness]
        lines.append("tube: " + " ".join(_fmt(v) for v in vals)
                     + f" {int(tube.has_flow)}")
    lines.append("lesion: " + " ".join(_fmt(v) for v in
                                       [*scene.lesion.center,
                                        scene.lesion.radius]))
    for rib in scene.ribs:
        lines.append("rib: " + " ".join(_fmt(v) for v in
                                        [*rib.min_corner, *rib.max_corner]))
    for lab in sorted(scene.intensities):
        lines.append(f"intensity.{ph.MATERIAL_NAMES[lab]}: "
                     + _fmt(scene.intensities[lab]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scene(path) -> ph.PhantomScene:
    tubes, ribs = [], []
    lesion = None
    tank = None
    intensities = dict(ph.DEFAULT_INTENSITIES)
    name_to_label = {v: k for k, v in ph.MATERIAL_NAMES.items()}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, value = line.split(":", 1)
            vals = value.split()
            if key == "tank":
                tank = np.array([float(v) for v in vals])
            elif key == "tube":
                tubes.append(ph.Tube(
                    start=[float(v) for v in vals[0:3]],
                    end=[float(v) for v in vals[3:6]],
                    inner_radius=float(vals[6]),
                    wall_thickness=float(vals[7]),
                    has_flow=bool(int(vals[8]))))
            elif key == "lesion":
                lesion = ph.LesionSphere([float(v) for v in vals[:3]],
                                         float(vals[3]))
            elif key == "rib":
                ribs.append(ph.RibStrip([float(v) for v in vals[:3]],
                                        [float(v) for v in vals[3:6]]))
            elif key.startswith("intensity."):
                intensities[name_to_label[key.split(".", 1)[1]]] = float(vals[0])
            else:
                raise ConfigError(f"unknown scene record '{key}'")
    if tank is None or lesion is None:
        raise ConfigError("scene file missing tank or lesion record")
    return ph.PhantomScene(tuple(tubes), lesion, tuple(ribs),
                           tank[:3], tank[3:], intensities)


# -- calibration sessions ----------------------------------------------------

def save_session(path, samples, metadata=None):
    lines = ["# cbctus calibration session"]
    for key, value in (metadata or {}).items():
        lines.append(f"{key}: {value}")
    lines.append(f"samples: {len(samples)}")
    for i, sample in enumerate(samples):
        lines.append(f"--- sample {i} t_e_b")
        lines.append(transform_to_text(sample.t_e_b).rstrip("\n"))
        lines.append(f"--- sample {i} t_m_o")
        lines.append(transform_to_text(sample.t_m_o).rstrip("\n"))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_session(path):
    samples = []
    metadata = {}
    current = {}
    block = None
    rows = []

    def flush():
        nonlocal block, rows
        if block is not None:
            current[block] = transform_from_text("\n".join(rows))
            if len(current) == 2:
                samples.append(AbsolutePoseSample(t_e_b=current["t_e_b"],
                                                  t_m_o=current["t_m_o"]))
                current.clear()
        block, rows = None, []

    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("--- sample"):
                flush()
                block = line.split()[-1]
            elif line.startswith("#") or not line.strip():
                continue
            elif block is None:
                key, value = line.split(":", 1)
                metadata[key.strip()] = value.strip()
            else:
                rows.append(line)
    flush()
    return samples, metadata


# -- images ------------------------------------------------------------------

def save_pgm(path, image, lo=None, hi=None):
    """8-bit grayscale PGM (binary P5); lo/hi fix the intensity window."""
    img = np.asarray(image, dtype=float)
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    if hi <= lo:
        hi = lo + 1.0
    scaled = np.clip((img - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{scaled.shape[1]} {scaled.shape[0]}\n255\n".encode())
        fh.write(scaled.tobytes())


def write_report(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path

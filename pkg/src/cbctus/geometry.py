"""Rigid-body transform algebra.

All frames used by the toolkit (robot base, end-effector, marker, tracking
camera, CBCT, US image) are related by elements of SE(3) represented here as
an orthonormal 3x3 rotation plus a translation in millimetres.  Angles are
degrees at the API boundary and radians internally.
"""

from __future__ import annotations

import math

import numpy as np

# Orthonormality defect above which a rotation is re-projected onto SO(3).
ORTHO_TOL = 1e-9

_CANONICAL_AXIS = np.array([0.0, 0.0, 1.0])


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _project_to_so3(m):
    """Nearest rotation matrix in the Frobenius sense (via SVD)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


class Rotation:
    """Immutable proper rotation, stored as a 3x3 orthonormal matrix."""

    __slots__ = ("_m",)

    def __init__(self, matrix, _skip_check=False):
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        if not _skip_check:
            defect = np.abs(m @ m.T - np.eye(3)).max()
            if defect > ORTHO_TOL or np.linalg.det(m) < 0:
                m = _project_to_so3(m)
        m.flags.writeable = False
        self._m = m

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls):
        return cls(np.eye(3), _skip_check=True)

    @classmethod
    def from_axis_angle_deg(cls, axis, angle_deg):
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        axis = axis / n
        th = math.radians(angle_deg)
        k = _skew(axis)
        m = np.eye(3) + math.sin(th) * k + (1.0 - math.cos(th)) * (k @ k)
        return cls(m, _skip_check=True)

    @classmethod
    def about_x_deg(cls, angle_deg):
        return cls.from_axis_angle_deg((1.0, 0.0, 0.0), angle_deg)

    @classmethod
    def about_y_deg(cls, angle_deg):
        return cls.from_axis_angle_deg((0.0, 1.0, 0.0), angle_deg)

    @classmethod
    def about_z_deg(cls, angle_deg):
        return cls.from_axis_angle_deg((0.0, 0.0, 1.0), angle_deg)

    @classmethod
    def from_quat(cls, q):
        """Unit quaternion (w, x, y, z) -> rotation."""
        q = np.asarray(q, dtype=float)
        n = np.linalg.norm(q)
        if n == 0.0:
            raise ValueError("zero quaternion")
        w, x, y, z = q / n
        m = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        return cls(m, _skip_check=True)

    @classmethod
    def from_euler_xyz_deg(cls, rx, ry, rz):
        """Intrinsic x-y-z Euler rotation, degrees."""
        return cls.about_x_deg(rx) @ cls.about_y_deg(ry) @ cls.about_z_deg(rz)

    @classmethod
    def random(cls, rng):
        """Uniform random rotation from a seeded numpy Generator."""
        q = rng.normal(size=4)
        return cls.from_quat(q)

    # -- accessors ----------------------------------------------------------

    @property
    def matrix(self):
        return self._m

    def quat(self):
        """Unit quaternion (w, x, y, z) with nonnegative w."""
        m = self._m
        tr = np.trace(m)
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2.0
            q = np.array([0.25 * s,
                          (m[2, 1] - m[1, 2]) / s,
                          (m[0, 2] - m[2, 0]) / s,
                          (m[1, 0] - m[0, 1]) / s])
        else:
            i = int(np.argmax(np.diag(m)))
            j, k = (i + 1) % 3, (i + 2) % 3
            s = math.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0)) * 2.0
            q = np.empty(4)
            q[0] = (m[k, j] - m[j, k]) / s
            q[1 + i] = 0.25 * s
            q[1 + j] = (m[j, i] + m[i, j]) / s
            q[1 + k] = (m[k, i] + m[i, k]) / s
        if q[0] < 0:
            q = -q
        return q / np.linalg.norm(q)

    def axis_angle_deg(self):
        """(unit axis, angle in degrees).  Angle 0 returns the canonical
        axis (0, 0, 1)."""
        q = self.quat()
        w = min(max(q[0], -1.0), 1.0)
        angle = 2.0 * math.acos(w)
        s = math.sqrt(max(1.0 - w * w, 0.0))
        if s < 1e-12:
            return _CANONICAL_AXIS.copy(), 0.0
        axis = q[1:] / s
        return axis / np.linalg.norm(axis), math.degrees(angle)

    def euler_xyz_deg(self):
        """Intrinsic x-y-z Euler angles in degrees (gimbal-safe branch)."""
        m = self._m
        sy = min(max(m[0, 2], -1.0), 1.0)
        ry = math.asin(sy)
        if abs(sy) < 1.0 - 1e-12:
            rx = math.atan2(-m[1, 2], m[2, 2])
            rz = math.atan2(-m[0, 1], m[0, 0])
        else:
            rx = math.atan2(m[1, 0], m[1, 1])
            rz = 0.0
        return math.degrees(rx), math.degrees(ry), math.degrees(rz)

    # -- algebra ------------------------------------------------------------

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            m = self._m @ other._m
            if np.abs(m @ m.T - np.eye(3)).max() > ORTHO_TOL:
                m = _project_to_so3(m)
            return Rotation(m, _skip_check=True)
        return NotImplemented

    def inv(self):
        return Rotation(self._m.T.copy(), _skip_check=True)

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self._m.T

    def __repr__(self):
        axis, ang = self.axis_angle_deg()
        return f"Rotation(axis={np.round(axis, 6)}, angle={ang:.6f} deg)"


class RigidTransform:
    """Immutable SE(3) element: rotation followed by translation (mm)."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None):
        object.__setattr__(self, "rotation",
                           rotation if rotation is not None else Rotation.identity())
        t = np.zeros(3) if translation is None else np.array(translation, dtype=float)
        if t.shape != (3,):
            raise ValueError("translation must be length 3")
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    @classmethod
    def identity(cls):
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("homogeneous matrix must be 4x4")
        return cls(Rotation(m[:3, :3]), m[:3, 3].copy())

    @classmethod
    def from_translation(cls, t):
        return cls(Rotation.identity(), t)

    @classmethod
    def random(cls, rng, max_translation=100.0):
        t = rng.uniform(-max_translation, max_translation, size=3)
        return cls(Rotation.random(rng), t)

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other):
        if isinstance(other, RigidTransform):
            return RigidTransform(
                self.rotation @ other.rotation,
                self.rotation.apply(other.translation) + self.translation,
            )
        return NotImplemented

    def inv(self):
        rinv = self.rotation.inv()
        return RigidTransform(rinv, -rinv.apply(self.translation))

    def apply(self, points):
        return self.rotation.apply(points) + self.translation

    def __repr__(self):
        return f"RigidTransform(t={np.round(self.translation, 6)}, {self.rotation!r})"


# -- free-function surface ---------------------------------------------------

def vec3(x, y, z):
    return np.array([float(x), float(y), float(z)])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Matrix product a.b: apply b first, then a."""
    return a @ b


def invert(t: RigidTransform) -> RigidTransform:
    return t.inv()


def apply_point(t: RigidTransform, p) -> np.ndarray:
    return t.apply(np.asarray(p, dtype=float))


def rotation_distance(a: Rotation, b: Rotation) -> float:
    """Geodesic angle between two rotations, degrees in [0, 180].

    atan2 form: accurate for near-identity relative rotations where the
    acos form loses half the significant digits.
    """
    rel = a.matrix.T @ b.matrix
    c = (np.trace(rel) - 1.0) / 2.0
    v = np.array([rel[2, 1] - rel[1, 2],
                  rel[0, 2] - rel[2, 0],
                  rel[1, 0] - rel[0, 1]])
    s = float(np.linalg.norm(v)) / 2.0
    return math.degrees(math.atan2(s, c))


def axis_angle(r: Rotation):
    return r.axis_angle_deg()


def transform_error(estimated: RigidTransform, truth: RigidTransform):
    """(translation error mm, rotation error deg) between two transforms."""
    dt = float(np.linalg.norm(estimated.translation - truth.translation))
    dr = rotation_distance(estimated.rotation, truth.rotation)
    return dt, dr


# -- serialization -----------------------------------------------------------

def transform_to_text(t: RigidTransform) -> str:
    """4x4 row-major matrix, 15 significant digits, one row per line."""
    rows = []
    for row in t.matrix:
        rows.append(" ".join(f"{v:.15g}" for v in row))
    return "\n".join(rows) + "\n"


def transform_from_text(text: str) -> RigidTransform:
    values = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.extend(float(tok) for tok in line.split())
    if len(values) != 16:
        raise ValueError(f"expected 16 matrix entries, got {len(values)}")
    return RigidTransform.from_matrix(np.array(values).reshape(4, 4))

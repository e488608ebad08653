"""Hand-eye calibration between the robot base and the tracking camera.

The unknown X relates paired relative motions via AX = XB: A is the
relative end-effector motion from forward kinematics, B the relative
marker motion reported by the camera.  Rotation is solved first with the
Tsai-Lenz modified-Rodrigues linear least squares, then translation from
(R_A - I) t_x = R_x t_B - t_A.  The US calibration and the camera-CBCT
registration are treated as known inputs and only chained here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMotionError, InvalidInputError
from .geometry import (RigidTransform, Rotation, _skew, rotation_distance,
                       transform_error)

# Pairs rotating less than this contribute no usable axis information.
MIN_PAIR_ROTATION_DEG = 1.0
# At least two pair axes must be separated by more than this.
MIN_AXIS_SEPARATION_DEG = 5.0


@dataclass(frozen=True)
class AbsolutePoseSample:
    """One recorded pose pair: end-effector in the robot base (forward
    kinematics) and the marker pose reported by the tracking camera."""

    t_e_b: RigidTransform
    t_m_o: RigidTransform


@dataclass(frozen=True)
class MotionPair:
    """Relative motions (A, B) induced by one robot move."""

    a: RigidTransform
    b: RigidTransform


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    max: float

    @classmethod
    def from_values(cls, values):
        v = np.asarray(values, dtype=float)
        return cls(mean=float(v.mean()), std=float(v.std()),
                   max=float(v.max()))


@dataclass(frozen=True)
class CalibrationSolution:
    """Estimated X (robot base -> camera) with per-pair residuals."""

    x: RigidTransform
    rotation_residual_deg: SummaryStats
    translation_residual_mm: SummaryStats
    pair_count: int


@dataclass(frozen=True)
class RegistrationChain:
    """Known inputs of the US -> CBCT chain (product order as written)."""

    t_u_b: RigidTransform
    t_b_o: RigidTransform
    t_o_c: RigidTransform


def build_motion_pairs(samples, all_pairs=False):
    """Relative motion pairs from recorded absolute samples.

    Consecutive pairing (n-1 pairs from n samples) matches sequential
    recording; all_pairs switches to every C(n, 2) combination.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise InvalidInputError("at least 2 pose samples are required")
    if all_pairs:
        index_pairs = [(i, j) for i in range(len(samples))
                       for j in range(i + 1, len(samples))]
    else:
        index_pairs = [(i, i + 1) for i in range(len(samples) - 1)]
    pairs = []
    for i, j in index_pairs:
        a = samples[j].t_e_b.inv() @ samples[i].t_e_b
        b = samples[j].t_m_o @ samples[i].t_m_o.inv()
        pairs.append(MotionPair(a=a, b=b))
    return pairs


def solve_tsai_lenz(pairs,
                    min_pair_rotation_deg=MIN_PAIR_ROTATION_DEG,
                    min_axis_separation_deg=MIN_AXIS_SEPARATION_DEG) -> CalibrationSolution:
    """Solve AX = XB over all pairs.

    Raises DegenerateMotionError when fewer than two pairs carry usable
    rotation or when all rotation axes are parallel within the separation
    threshold (the rotation step is rank-deficient in both cases).
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InvalidInputError("at least 2 motion pairs are required")

    usable = []
    axes = []
    for pair in pairs:
        axis_a, ang_a = pair.a.rotation.axis_angle_deg()
        if ang_a <= min_pair_rotation_deg:
            continue
        usable.append(pair)
        axes.append(axis_a)
    if len(usable) < 2:
        raise DegenerateMotionError(
            f"fewer than 2 pairs rotate by more than {min_pair_rotation_deg} deg "
            "(pure-translation motions cannot constrain the rotation)")

    max_sep = 0.0
    for i in range(len(axes)):
        for j in range(i + 1, len(axes)):
            c = abs(float(np.dot(axes[i], axes[j])))
            max_sep = max(max_sep, math.degrees(math.acos(min(c, 1.0))))
    if max_sep <= min_axis_separation_deg:
        raise DegenerateMotionError(
            "all rotation axes are parallel within "
            f"{min_axis_separation_deg} deg (axis separation {max_sep:.3f} deg); "
            "two non-parallel rotation axes are required")

    # Rotation: modified Rodrigues vectors P = 2 sin(theta/2) * axis.
    rows = []
    rhs = []
    for pair in usable:
        pa = _modified_rodrigues(pair.a.rotation)
        pb = _modified_rodrigues(pair.b.rotation)
        rows.append(_skew(pa + pb))
        rhs.append(pb - pa)
    m = np.vstack(rows)
    d = np.concatenate(rhs)
    p_prime, *_ = np.linalg.lstsq(m, d, rcond=None)
    p_x = 2.0 * p_prime / math.sqrt(1.0 + float(p_prime @ p_prime))
    n2 = float(p_x @ p_x)
    r_x = ((1.0 - n2 / 2.0) * np.eye(3)
           + 0.5 * (np.outer(p_x, p_x)
                    + math.sqrt(max(4.0 - n2, 0.0)) * _skew(p_x)))
    rot_x = Rotation(r_x)

    # Translation: (R_A - I) t_x = R_x t_B - t_A over all pairs.
    blocks = []
    rhs_t = []
    for pair in usable:
        blocks.append(pair.a.rotation.matrix - np.eye(3))
        rhs_t.append(rot_x.apply(pair.b.translation) - pair.a.translation)
    t_x, *_ = np.linalg.lstsq(np.vstack(blocks), np.concatenate(rhs_t),
                              rcond=None)
    x = RigidTransform(rot_x, t_x)

    rot_res = []
    trans_res = []
    for pair in pairs:
        lhs = pair.a @ x
        rhs_tf = x @ pair.b
        rot_res.append(rotation_distance(lhs.rotation, rhs_tf.rotation))
        trans_res.append(float(np.linalg.norm(lhs.translation - rhs_tf.translation)))
    return CalibrationSolution(
        x=x,
        rotation_residual_deg=SummaryStats.from_values(rot_res),
        translation_residual_mm=SummaryStats.from_values(trans_res),
        pair_count=len(pairs),
    )


def _modified_rodrigues(rot: Rotation):
    axis, ang_deg = rot.axis_angle_deg()
    return 2.0 * math.sin(math.radians(ang_deg) / 2.0) * axis


def sample_poses_in_range(border_poses, count=30, seed=0):
    """Seeded random poses inside the range spanned by 4-6 border poses.

    Translations are uniform in the axis-aligned bounding box of the border
    translations; rotations are sampled per intrinsic x-y-z Euler axis
    within the border angle bounds.
    """
    border_poses = list(border_poses)
    if not 4 <= len(border_poses) <= 6:
        raise InvalidInputError(
            f"expected 4-6 border poses, got {len(border_poses)}")
    if count < 2:
        raise InvalidInputError("at least 2 poses must be sampled")

    translations = np.array([p.translation for p in border_poses])
    t_lo = translations.min(axis=0)
    t_hi = translations.max(axis=0)
    eulers = np.array([p.rotation.euler_xyz_deg() for p in border_poses])
    e_lo = eulers.min(axis=0)
    e_hi = eulers.max(axis=0)

    rng = np.random.default_rng(seed)
    poses = []
    for _ in range(count):
        t = rng.uniform(t_lo, t_hi)
        e = rng.uniform(e_lo, e_hi)
        poses.append(RigidTransform(Rotation.from_euler_xyz_deg(*e), t))
    return poses


def synthesize_marker_observation(t_e_b: RigidTransform, x: RigidTransform,
                                  t_e_m: RigidTransform) -> RigidTransform:
    """Noise-free camera observation consistent with ground truth X.

    With C the fixed end-effector-to-marker transform, the camera reports
    t_m_o = X^-1 . t_e_b^-1 . C so that every motion pair satisfies
    AX = XB exactly.
    """
    return x.inv() @ t_e_b.inv() @ t_e_m


def perturb_transform(t: RigidTransform, sigma_rot_deg, sigma_trans_mm, rng):
    """Left-multiply isotropic noise: uniform random axis with Gaussian
    angle, Gaussian translation per component."""
    angle = rng.normal(0.0, sigma_rot_deg) if sigma_rot_deg > 0 else 0.0
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-12:
        axis = rng.normal(size=3)
    rot = (Rotation.from_axis_angle_deg(axis, angle)
           if angle != 0.0 else Rotation.identity())
    trans = (rng.normal(0.0, sigma_trans_mm, size=3)
             if sigma_trans_mm > 0 else np.zeros(3))
    return RigidTransform(rot, trans) @ t


def chain_us_to_cbct(chain: RegistrationChain) -> RigidTransform:
    """US -> CBCT registration: the product t_u_b . t_b_o . t_o_c."""
    return chain.t_u_b @ chain.t_b_o @ chain.t_o_c


def update_after_reposition(t_u_c_old: RigidTransform,
                            t_c_old_c_new: RigidTransform) -> RigidTransform:
    """Registration update from the tracked CBCT device motion."""
    return t_u_c_old @ t_c_old_c_new


def registration_error(estimated: RigidTransform, truth: RigidTransform):
    """(translation error mm, rotation error deg)."""
    return transform_error(estimated, truth)

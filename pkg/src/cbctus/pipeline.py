"""End-to-end wiring shared by the CLI and the test suite.

Ground-truth chain components stand in for the externally calibrated
inputs (US calibration, camera-CBCT registration); sweep poses are chosen
directly in the CBCT frame and back-propagated through the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import calibration as cal
from . import fusion, phantom, planner, segmentation, ussim
from .geometry import RigidTransform, Rotation


def default_ground_truth_chain() -> cal.RegistrationChain:
    """Fixed, arbitrary but deterministic chain components."""
    t_u_b = RigidTransform(Rotation.from_euler_xyz_deg(5.0, -3.0, 12.0),
                           (420.0, -35.0, 310.0))
    t_b_o = RigidTransform(Rotation.from_euler_xyz_deg(-8.0, 4.0, 175.0),
                           (-150.0, 900.0, 420.0))
    t_o_c = (t_u_b @ t_b_o).inv()  # makes the chained product the identity
    return cal.RegistrationChain(t_u_b=t_u_b, t_b_o=t_b_o, t_o_c=t_o_c)


def default_border_poses():
    """Workspace-border poses for the synthetic calibration sessions."""
    corners = [(400.0, -120.0, 280.0), (520.0, -120.0, 380.0),
               (400.0, 120.0, 380.0), (520.0, 120.0, 280.0)]
    eulers = [(-20.0, -18.0, 75.0), (18.0, -12.0, 100.0),
              (-14.0, 20.0, 88.0), (22.0, 16.0, 112.0)]
    return [RigidTransform(Rotation.from_euler_xyz_deg(*e), t)
            for t, e in zip(corners, eulers)]


DEFAULT_X_TRUTH = RigidTransform(
    Rotation.from_euler_xyz_deg(2.0, -170.0, 31.0), (-220.0, 840.0, 515.0))
DEFAULT_MARKER = RigidTransform(
    Rotation.from_euler_xyz_deg(90.0, 0.0, -12.0), (0.0, 45.0, 80.0))


def synthetic_session(count=30, seed=0, noise_rot_deg=0.0, noise_trans_mm=0.0,
                      x_truth=DEFAULT_X_TRUTH, t_e_m=DEFAULT_MARKER,
                      border_poses=None):
    """Recorded pose samples consistent with a ground-truth X, with optional
    tracking noise on the camera observations."""
    if border_poses is None:
        border_poses = default_border_poses()
    poses = cal.sample_poses_in_range(border_poses, count=count, seed=seed)
    rng = np.random.default_rng(seed + 1)
    samples = []
    for t_e_b in poses:
        t_m_o = cal.synthesize_marker_observation(t_e_b, x_truth, t_e_m)
        if noise_rot_deg > 0 or noise_trans_mm > 0:
            t_m_o = cal.perturb_transform(t_m_o, noise_rot_deg,
                                          noise_trans_mm, rng)
        samples.append(cal.AbsolutePoseSample(t_e_b=t_e_b, t_m_o=t_m_o))
    return samples


def calibration_errors_vs_pair_count(pair_counts, trials, noise_rot_deg,
                                     noise_trans_mm, seed=0):
    """Monte-Carlo table: median translation/rotation recovery error per
    pair count.  Trial t at count m reuses the first m+1 samples of one
    30-pose session so counts are nested."""
    max_count = max(pair_counts)
    errors = {m: ([], []) for m in pair_counts}
    for trial in range(trials):
        samples = synthetic_session(count=max_count + 1,
                                    seed=seed * 100003 + trial,
                                    noise_rot_deg=noise_rot_deg,
                                    noise_trans_mm=noise_trans_mm)
        for m in pair_counts:
            pairs = cal.build_motion_pairs(samples[:m + 1])
            sol = cal.solve_tsai_lenz(pairs)
            dt, dr = cal.registration_error(sol.x, DEFAULT_X_TRUTH)
            errors[m][0].append(dt)
            errors[m][1].append(dr)
    return {m: (float(np.median(v[0])), float(np.median(v[1])))
            for m, v in errors.items()}


@dataclass
class SweepResult:
    poses: list            # true probe poses in {c}
    frames: list
    segmentations: list
    t_u_c: list            # poses as seen through the (possibly offset) chain
    tracks: list
    report: fusion.MappingErrorReport


def perpendicular_offset(magnitude_mm, rng=None) -> RigidTransform:
    """Pure translation of the given magnitude perpendicular to the default
    tube axes (random in-plane direction when an rng is supplied)."""
    angle = rng.uniform(0.0, 2.0 * math.pi) if rng is not None else 0.0
    return RigidTransform.from_translation(
        (0.0, magnitude_mm * math.sin(angle), magnitude_mm * math.cos(angle)))


def run_sweep(scene, probe, range_deg=30.0, step_deg=1.0, offset=None,
              min_area_mm2=segmentation.DEFAULT_MIN_AREA_MM2,
              centerline_step_mm=1.0) -> SweepResult:
    """Render, segment, track and score a fan sweep over a scene."""
    spec = ussim.default_fan_sweep_spec(range_deg=range_deg,
                                        step_deg=step_deg)
    poses = ussim.generate_fan_sweep(spec)
    frames = [ussim.render_frame(scene, pose, probe) for pose in poses]
    segmentations = [segmentation.segment_frame(f, probe,
                                                min_area_mm2=min_area_mm2)
                     for f in frames]
    if offset is None:
        t_u_c = list(poses)
    else:
        t_u_c = [offset @ pose for pose in poses]
    tracks = fusion.extract_us_centerline_tracks(
        [s.masks for s in segmentations], t_u_c, probe)
    centerlines = phantom.ground_truth_centerlines(scene, centerline_step_mm)
    report = fusion.mapping_error(tracks, centerlines)
    return SweepResult(poses=poses, frames=frames,
                       segmentations=segmentations, t_u_c=t_u_c,
                       tracks=tracks, report=report)


def fuse_sweep_result(result: SweepResult, base, probe) -> fusion.FusedVolume:
    return fusion.fuse_sweep(result.frames,
                             [s.masks for s in result.segmentations],
                             result.t_u_c, base, probe)


@dataclass
class PlanResult:
    selection: planner.SliceSelection
    scene_2d: planner.InPlaneScene
    plan: planner.TrajectoryPlan
    safety: planner.SafetyReport
    fused: fusion.FusedVolume


def plan_on_phantom(scene, volume, probe, sweep_result: SweepResult,
                    max_rotation_deg=15.0) -> PlanResult:
    """Slice selection, in-plane optimization, probe pose and safety check."""
    fused = fuse_sweep_result(sweep_result, volume, probe)
    selection = planner.select_axial_slice(volume)
    scene_2d = planner.build_in_plane_scene(
        fused, selection, nominal_needle_angle_deg=probe.needle_angle_deg,
        max_rotation_deg=max_rotation_deg)
    plan = planner.solve_trajectory(scene_2d)
    planner.compute_probe_pose(plan, selection.frame, probe,
                               lesion_xy=scene_2d.lesion,
                               max_rotation_deg=max_rotation_deg)
    # pair every detected vessel center with its nearest tube's outer radius
    radii = np.zeros(len(scene_2d.vessels))
    if len(scene_2d.vessels):
        centers_world = selection.frame.to_world(scene_2d.vessels)
        for i, c in enumerate(centers_world):
            dists = []
            for tube in scene.tubes:
                rel = c - tube.start
                t = float(np.clip(rel @ tube.direction, 0.0, tube.length))
                dists.append(float(np.linalg.norm(rel - t * tube.direction)))
            radii[i] = scene.tubes[int(np.argmin(dists))].outer_radius
    safety = planner.evaluate_plan(plan, scene_2d, radii,
                                   slice_frame=selection.frame,
                                   ribs=scene.ribs)
    return PlanResult(selection=selection, scene_2d=scene_2d, plan=plan,
                      safety=safety, fused=fused)

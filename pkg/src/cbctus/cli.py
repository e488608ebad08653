"""Operator-facing command-line surface.

Subcommands: phantom, calibrate, sweep-fuse, plan, reposition-eval.
Every command is deterministic under a fixed config and seed; reports carry
no timestamps.  Exit codes: 0 success, 1 config error, 2 numerical or
degeneracy error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import calibration as cal
from . import config as cfgmod
from . import fileio, fusion, phantom, pipeline, planner, ussim
from .errors import CbctUsError, ConfigError
from .geometry import RigidTransform, transform_to_text


def _fmt(v):
    return f"{float(v):.6f}"


def _probe(cfg) -> ussim.ProbeModel:
    return ussim.ProbeModel(width=cfg.probe.width, height=cfg.probe.height,
                            spacing=cfg.probe.spacing_mm,
                            needle_angle_deg=cfg.probe.needle_angle_deg)


def cmd_phantom(cfg, out_dir):
    scene = phantom.build_default_phantom()
    volume = phantom.voxelize(scene, dims=tuple(cfg.grid.dims),
                              spacing=cfg.grid.spacing,
                              origin=tuple(cfg.grid.origin))
    fileio.save_scene(os.path.join(out_dir, "scene.txt"), scene)
    fileio.save_volume(os.path.join(out_dir, "volume"), volume)
    counts = np.bincount(volume.labels.ravel(),
                         minlength=max(phantom.MATERIAL_NAMES) + 1)
    lines = ["# cbctus phantom report",
             f"dims: {volume.dims[0]} {volume.dims[1]} {volume.dims[2]}",
             f"spacing_mm: {_fmt(volume.spacing[0])}"]
    for lab in sorted(phantom.MATERIAL_NAMES):
        lines.append(f"voxels.{phantom.MATERIAL_NAMES[lab]}: {counts[lab]}")
    fileio.write_report(os.path.join(out_dir, "phantom_report.txt"), lines)
    print(f"phantom written to {out_dir}")
    return 0


def cmd_calibrate(cfg, out_dir):
    ccfg = cfg.calibration
    samples = pipeline.synthetic_session(
        count=ccfg.poses, seed=cfg.seed,
        noise_rot_deg=ccfg.noise_rot_deg, noise_trans_mm=ccfg.noise_trans_mm)
    fileio.save_session(
        os.path.join(out_dir, "session.txt"), samples,
        metadata={"seed": cfg.seed, "noise_rot_deg": ccfg.noise_rot_deg,
                  "noise_trans_mm": ccfg.noise_trans_mm})
    pairs = cal.build_motion_pairs(samples, all_pairs=ccfg.all_pairs)
    sol = cal.solve_tsai_lenz(pairs)
    dt, dr = cal.registration_error(sol.x, pipeline.DEFAULT_X_TRUTH)
    lines = ["# cbctus calibration report",
             f"poses: {ccfg.poses}",
             f"motion_pairs: {sol.pair_count}",
             "estimated_x:",
             transform_to_text(sol.x).rstrip("\n"),
             f"residual_rotation_deg_mean: {sol.rotation_residual_deg.mean:.9f}",
             f"residual_rotation_deg_max: {sol.rotation_residual_deg.max:.9f}",
             f"residual_translation_mm_mean: {sol.translation_residual_mm.mean:.9f}",
             f"residual_translation_mm_max: {sol.translation_residual_mm.max:.9f}",
             f"error_vs_truth_translation_mm: {dt:.12g}",
             f"error_vs_truth_rotation_deg: {dr:.12g}"]
    if ccfg.trials > 1:
        lines.append("monte_carlo:")
        lines.append("pair_count median_translation_mm median_rotation_deg")
        table = pipeline.calibration_errors_vs_pair_count(
            ccfg.pair_counts, ccfg.trials, ccfg.noise_rot_deg,
            ccfg.noise_trans_mm, seed=cfg.seed)
        for m in ccfg.pair_counts:
            mt, mr = table[m]
            lines.append(f"{m} {mt:.6f} {mr:.6f}")
    fileio.write_report(os.path.join(out_dir, "calibration_report.txt"), lines)
    print(f"calibration report written to {out_dir}")
    return 0


def cmd_sweep_fuse(cfg, out_dir):
    scene = phantom.build_default_phantom()
    probe = _probe(cfg)
    offset = None
    if cfg.fusion.offset_mm != 0.0:
        offset = pipeline.perpendicular_offset(
            cfg.fusion.offset_mm, np.random.default_rng(cfg.seed))
    result = pipeline.run_sweep(
        scene, probe, range_deg=cfg.sweep.range_deg,
        step_deg=cfg.sweep.step_deg, offset=offset,
        min_area_mm2=cfg.planner.min_doppler_area_mm2,
        centerline_step_mm=cfg.fusion.centerline_step_mm)
    volume = phantom.voxelize(scene, dims=tuple(cfg.grid.dims),
                              spacing=cfg.grid.spacing,
                              origin=tuple(cfg.grid.origin))
    fused = pipeline.fuse_sweep_result(result, volume, probe)
    fileio.save_volume(os.path.join(out_dir, "volume"), volume)
    fileio.save_channel(os.path.join(out_dir, "vessel_channel.raw"),
                        fused.vessel)
    fileio.save_channel(os.path.join(out_dir, "doppler_channel.raw"),
                        fused.doppler)
    fileio.save_channel(os.path.join(out_dir, "provenance.raw"),
                        fused.provenance)
    rep = result.report
    lines = ["# cbctus sweep-fuse mapping report",
             f"frames: {len(result.frames)}",
             f"injected_offset_mm: {_fmt(cfg.fusion.offset_mm)}",
             f"tracks: {len(result.tracks)}",
             f"labeled_voxels: {int(fused.vessel.sum())}",
             f"pixels_outside_volume: {fused.outside_count}",
             "track points assigned_centerline mean_mm std_mm"]
    for i, track in enumerate(result.tracks):
        lines.append(f"{i} {len(track.points)} {rep.track_assignment[i]} "
                     f"{rep.per_track_mean[i]:.6f} {rep.per_track_std[i]:.6f}")
    lines.append(f"global_mean_mm: {rep.global_mean:.6f}")
    lines.append(f"global_std_mm: {rep.global_std:.6f}")
    fileio.write_report(os.path.join(out_dir, "mapping_report.txt"), lines)
    print(f"sweep-fuse outputs written to {out_dir}")
    return 0


def cmd_plan(cfg, out_dir):
    scene = phantom.build_default_phantom()
    probe = _probe(cfg)
    result = pipeline.run_sweep(
        scene, probe, range_deg=cfg.sweep.range_deg,
        step_deg=cfg.sweep.step_deg,
        min_area_mm2=cfg.planner.min_doppler_area_mm2,
        centerline_step_mm=cfg.fusion.centerline_step_mm)
    volume = phantom.voxelize(scene, dims=tuple(cfg.grid.dims),
                              spacing=cfg.grid.spacing,
                              origin=tuple(cfg.grid.origin))
    planres = pipeline.plan_on_phantom(
        scene, volume, probe, result,
        max_rotation_deg=cfg.planner.max_rotation_deg)
    plan, safety = planres.plan, planres.safety
    lines = ["# cbctus trajectory plan",
             f"slice_index: {planres.selection.frame.index}",
             f"slice_occluded_by_ribs: {int(planres.selection.occluded)}",
             f"vessels_in_slice: {len(planres.scene_2d.vessels)}",
             f"k: {plan.k:.9f}",
             f"b: {plan.b:.9f}",
             f"objective_mm: {plan.objective:.9f}",
             f"in_plane_rotation_deg: {plan.in_plane_rotation_deg:.9f}",
             f"unconstrained: {int(plan.unconstrained)}",
             "probe_pose:",
             transform_to_text(plan.probe_pose).rstrip("\n"),
             f"lesion_deviation_mm: {safety.lesion_deviation_mm:.9f}",
             "clearances_mm: " + " ".join(_fmt(c) for c in safety.clearances_mm),
             "clearance_margins_mm: "
             + " ".join(_fmt(c) for c in safety.clearance_margins_mm),
             f"min_margin_mm: {_fmt(safety.min_margin_mm)}",
             f"rib_contact: {int(safety.rib_contact)}"]
    fileio.write_report(os.path.join(out_dir, "plan.txt"), lines)
    image = fusion.fused_slice(planres.fused, planres.selection.frame)
    fileio.save_pgm(os.path.join(out_dir, "plan_slice.pgm"), image,
                    lo=0.0, hi=max(700.0, float(image.max())))
    print(f"plan written to {out_dir}")
    return 0


def cmd_reposition_eval(cfg, out_dir):
    rcfg = cfg.reposition
    chain = pipeline.default_ground_truth_chain()
    t_u_c_old = cal.chain_us_to_cbct(chain)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    errors = []
    for i in range(rcfg.positions):
        motion = RigidTransform.from_translation((
            rng.uniform(-rcfg.range_major_mm, rcfg.range_major_mm),
            rng.uniform(-rcfg.range_minor_mm, rcfg.range_minor_mm),
            0.0))
        measured = motion
        if rcfg.noise_rot_deg > 0 or rcfg.noise_trans_mm > 0:
            measured = cal.perturb_transform(motion, rcfg.noise_rot_deg,
                                             rcfg.noise_trans_mm, rng)
        updated = cal.update_after_reposition(t_u_c_old, measured)
        truth = t_u_c_old @ motion
        dt, dr = cal.registration_error(updated, truth)
        errors.append((dt, dr))
        rows.append(f"{i} {motion.translation[0]:.4f} "
                    f"{motion.translation[1]:.4f} {dt:.9f} {dr:.9f}")
    err = np.array(errors)
    lines = ["# cbctus repositioning report",
             f"positions: {rcfg.positions}",
             f"noise_rot_deg: {_fmt(rcfg.noise_rot_deg)}",
             f"noise_trans_mm: {_fmt(rcfg.noise_trans_mm)}",
             "position dx_mm dy_mm translation_error_mm rotation_error_deg",
             *rows,
             f"translation_error_mean_mm: {err[:, 0].mean():.9f}",
             f"translation_error_std_mm: {err[:, 0].std():.9f}",
             f"rotation_error_mean_deg: {err[:, 1].mean():.9f}",
             f"rotation_error_std_deg: {err[:, 1].std():.9f}"]
    fileio.write_report(os.path.join(out_dir, "reposition_report.txt"), lines)
    print(f"repositioning report written to {out_dir}")
    return 0


_COMMANDS = {
    "phantom": cmd_phantom,
    "calibrate": cmd_calibrate,
    "sweep-fuse": cmd_sweep_fuse,
    "plan": cmd_plan,
    "reposition-eval": cmd_reposition_eval,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cbctus",
        description="Synthetic robotic CBCT-US co-registration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="dotted config override, e.g. sweep.step_deg=2")
        p.set_defaults(func=func)
    return parser


def _parse_overrides(pairs):
    import json as _json
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not KEY=VALUE")
        key, value = pair.split("=", 1)
        try:
            overrides[key] = _json.loads(value)
        except ValueError:
            overrides[key] = value
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, _parse_overrides(args.set))
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = fileio.ensure_dir(args.out)
        return args.func(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CbctUsError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

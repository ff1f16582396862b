"""Command line entry point.

Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O errors.
Errors are printed to stderr prefixed with the stage that failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .detection import (
    IcpOptions,
    PipelineConfig,
    detect_electrodes,
    read_electrodes_csv,
    write_electrodes_csv,
    write_electrodes_json,
)
from .errors import EegLocError, IoError, MissingFile, ValidationError
from .evaluation import compare_methods, detection_stats, position_errors, read_report, write_json
from .hough import HoughParams
from .morphology import extract_head_mask, mask_centroid
from .pancake import render_pancake
from .phantom import PhantomSpec, generate_phantom, read_points_csv, write_phantom, write_points_csv
from .registration import fiducial_register, load_template
from .volume_io import read_nifti

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# flag dest -> (section, field) in PipelineConfig
_CONFIG_FLAGS = {
    "outer_margin_mm": (None, "outer_margin_mm"),
    "inner_margin_mm": (None, "inner_margin_mm"),
    "gate_dist_mm": (None, "gate_dist_mm"),
    "refine_radius_mm": (None, "refine_radius_mm"),
    "workers": (None, "workers"),
    "r_min_mm": ("hough", "r_min_mm"),
    "r_max_mm": ("hough", "r_max_mm"),
    "r_step_mm": ("hough", "r_step_mm"),
    "grad_threshold_frac": ("hough", "grad_threshold_frac"),
    "nms_min_dist_mm": ("hough", "nms_min_dist_mm"),
    "max_candidates": ("hough", "max_candidates"),
    "min_score_frac": ("hough", "min_score_frac"),
    "icp_max_iter": ("icp", "max_iter"),
    "icp_tol": ("icp", "tol"),
    "icp_reject_mm": ("icp", "reject_mm"),
}


def _read_json(path, stage):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}", stage=stage)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name} is not valid JSON: {exc}", stage=stage) from exc


def resolve_config(args) -> PipelineConfig:
    """Built-in defaults, overridden by ``--config``, overridden by flags."""
    cfg = PipelineConfig.from_json(_read_json(args.config, "config")) if args.config else PipelineConfig()
    top, hough, icp = {}, {}, {}
    for dest, (section, name) in _CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        {None: top, "hough": hough, "icp": icp}[section][name] = value
    if getattr(args, "no_scale", False):
        icp["with_scale"] = False
    try:
        if hough:
            top["hough"] = replace(cfg.hough, **hough)
        if icp:
            top["icp"] = replace(cfg.icp, **icp)
        return replace(cfg, **top)
    except ValueError as exc:
        raise ValidationError(f"invalid option: {exc}", stage="config") from exc


def _triple(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return np.array(vals)


def cmd_detect(args):
    cfg = resolve_config(args)
    t1 = read_nifti(args.t1)
    ute = read_nifti(args.ute)
    template = load_template(args.template)
    result = detect_electrodes(t1, ute, template, cfg)
    write_electrodes_csv(result, args.out)
    if args.json:
        write_electrodes_json(result, args.json)
    n_local = sum(e.source == "local_max" for e in result.electrodes)
    print(f"detected {len(result.electrodes)} electrodes ({n_local} from local maxima) -> {args.out}")


def cmd_phantom(args):
    spec_obj = _read_json(args.spec, "phantom") if args.spec else {}
    if args.seed is not None:
        spec_obj = {**spec_obj, "rng_seed": args.seed}
    try:
        spec = PhantomSpec.from_json(spec_obj)
    except TypeError as exc:
        raise ValidationError(f"invalid phantom spec: {exc}", stage="phantom") from exc
    ph = generate_phantom(spec, load_template(args.template))
    out = write_phantom(ph, args.out_dir)
    print(f"phantom with {len(ph.truth)} electrodes written to {out}")


def cmd_baseline(args):
    template = load_template(args.template)
    fids = read_points_csv(args.fiducials)
    transform = fiducial_register(template, fids)
    pts = transform.apply(template.unit_pos)
    write_points_csv(dict(zip(template.labels, pts)), args.out)
    print(f"fiducial baseline for {template.n_channels} channels -> {args.out}")


def cmd_eval(args):
    detected = read_electrodes_csv(args.detected)
    truth = read_points_csv(args.truth)
    report = detection_stats(position_errors(detected, truth), args.threshold_mm)
    write_json(report.to_json(), args.report)
    print(f"accuracy {report.accuracy_pct:.1f}%  FN={report.fn_count} FP={report.fp_count}  "
          f"mean PE {report.mean_pe_mm:.2f} mm -> {args.report}")


def cmd_compare(args):
    a, b = read_report(args.a), read_report(args.b)
    names = args.names.split(",") if args.names else ["a", "b"]
    if len(names) != 2:
        raise ValidationError("--names needs two comma-separated names", stage="compare")
    record = compare_methods(a.per_label_pe_mm, b.per_label_pe_mm, *names)
    write_json(record, args.report)
    t = record["t_test"]
    print(f"{record['verdict']}: mean delta {record['mean_delta_mm']:.2f} mm, "
          f"t={t['t']:.3f} df={t['df']} p={t['p_two_sided']:.3g} -> {args.report}")


def _sphere_center(points):
    """Least-squares sphere centre through the points."""
    p = np.asarray(points, dtype=np.float64)
    A = np.hstack([2 * p, np.ones((len(p), 1))])
    b = (p ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol[:3]


def cmd_pancake(args):
    points = read_electrodes_csv(args.electrodes)
    if args.center is not None:
        center = args.center
    elif args.t1:
        center = mask_centroid(extract_head_mask(read_nifti(args.t1)))
    else:
        center = _sphere_center(list(points.values()))
    coords_path = args.coords or str(Path(args.out).with_suffix(".csv"))
    render_pancake(points, center, args.vertex_axis, image_path=args.out, coords_path=coords_path)
    print(f"pancake view of {len(points)} electrodes -> {args.out}, {coords_path}")


def build_parser():
    p = _Parser(prog="eegloc", description="EEG electrode detection from T1 + UTE MR volumes")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="run the full detection pipeline")
    d.add_argument("--t1", required=True)
    d.add_argument("--ute", required=True)
    d.add_argument("--template", help="template CSV (default: bundled 65-channel layout)")
    d.add_argument("--out", required=True, help="electrode CSV")
    d.add_argument("--json", help="JSON twin with transform and config")
    d.add_argument("--config", help="PipelineConfig JSON")
    for dest, (_, name) in _CONFIG_FLAGS.items():
        kind = int if name in ("workers", "max_candidates", "max_iter") else float
        d.add_argument("--" + dest.replace("_", "-"), dest=dest, type=kind, default=None)
    d.add_argument("--no-scale", action="store_true", help="rigid ICP instead of similarity")
    d.set_defaults(func=cmd_detect)

    ph = sub.add_parser("phantom", help="generate a synthetic T1/UTE pair with ground truth")
    ph.add_argument("--spec", help="PhantomSpec JSON (default: built-in spec)")
    ph.add_argument("--out-dir", required=True)
    ph.add_argument("--seed", type=int)
    ph.add_argument("--template")
    ph.set_defaults(func=cmd_phantom)

    b = sub.add_parser("baseline", help="fiducial-based template placement")
    b.add_argument("--fiducials", required=True, help="CSV label,x_mm,y_mm,z_mm with nasion,inion,lpa,rpa,vertex")
    b.add_argument("--template")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    e = sub.add_parser("eval", help="position errors and detection accuracy against ground truth")
    e.add_argument("--detected", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--threshold-mm", type=float, default=10.0)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="paired comparison of two eval reports")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--names", help="display names, e.g. ute,fiducial")
    c.add_argument("--report", required=True)
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("pancake", help="2D azimuthal projection of electrode positions")
    k.add_argument("--electrodes", required=True)
    k.add_argument("--out", required=True, help="PGM image path")
    k.add_argument("--coords", help="coordinate CSV (default: next to the image)")
    k.add_argument("--t1", help="T1 volume; head-mask centroid becomes the centre")
    k.add_argument("--center", type=_triple)
    k.add_argument("--vertex-axis", type=_triple, default=np.array([0.0, 0.0, 1.0]))
    k.set_defaults(func=cmd_pancake)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        args.func(args)
    except IoError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_IO
    except EegLocError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error [io] {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``pointtrack {track,simulate,eval,ablate}``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
configuration error. Output files are written atomically, so a failed run
never leaves a partial file behind.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from typing import List, Optional

from . import experiments as ex
from .association import Tracker, tracks_to_frame
from .io import (INPUT_FORMATS, ConfigError, MotFormatError, config_text, detection_records,
                 load_config, offsets_for_frame, parse_tracking_file, preset_config, read_boxes,
                 read_offsets, sequence_records, to_sequence, write_records)
from .metrics import AmotaConfig, TpCriterion, align_to

log = logging.getLogger("pointtrack")


class UsageError(Exception):
    pass


def _config(args):
    if args.config is None:
        return preset_config(getattr(args, "preset", None) or "mot")
    return load_config(args.config, getattr(args, "seed", None))


def cmd_track(args) -> int:
    cfg = _config(args)
    tcfg = cfg.tracker
    dets = parse_tracking_file(args.detections, args.format).detections
    public = read_boxes(args.public) if args.public else None
    offsets = read_offsets(args.offsets) if args.offsets else None
    if public is not None:
        tcfg = replace(tcfg, mode="public")
    if offsets is not None and tcfg.motion.kind != "external_offset":
        tcfg = replace(tcfg, motion=replace(tcfg.motion, kind="external_offset"))
    last = max([*dets, *(public or {}), 1])
    tracker = Tracker(tcfg)
    frames, records_in = [], 0
    elapsed = 0.0
    for f in range(1, last + 1):
        fd = dets.get(f, [])
        records_in += len(fd)
        pub = list(public.get(f, [])) if public is not None else None
        ext = offsets_for_frame(offsets, f, len(fd)) if offsets is not None else None
        t0 = time.perf_counter()
        out = tracker.step(fd, frame=f, public=pub, external_offsets=ext)
        elapsed += time.perf_counter() - t0
        frames.append(tracks_to_frame(f, out))
    seq = to_sequence({}, [])
    seq = seq.with_frames(frames)
    write_records(args.out, sequence_records(seq))
    rate = records_in / elapsed if elapsed > 0 else math.inf
    print(f"frames={last} detections={records_in} tracks={len(seq.ids)} "
          f"association_seconds={elapsed:.4f} detections_per_second={rate:.0f}")
    if offsets is not None:
        print(f"missing_offsets={tracker.state.missing_offsets}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.stride is not None:
        if args.stride < 1:
            raise UsageError("--stride must be >= 1")
        cfg = replace(cfg, stride=args.stride)
    gt, dets = ex.simulate(cfg)
    write_records(args.out_gt, sequence_records(gt))
    write_records(args.out_det, detection_records(dets))
    print(f"frames={len(gt)} objects={len(gt.ids)} gt_boxes={gt.num_boxes()} "
          f"detections={sum(len(v) for v in dets.values())}")
    return 0


def cmd_eval(args) -> int:
    try:
        crit = TpCriterion.parse(args.criterion)
        amota_cfg = AmotaConfig.parse(args.amota) if args.amota is not None else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    gt_p = parse_tracking_file(args.gt, args.format)
    pr_p = parse_tracking_file(args.pred, args.pred_format or args.format)
    frames = sorted(set(gt_p.tracks) | set(pr_p.tracks))
    gt = to_sequence(gt_p.tracks, frames)
    pred = align_to(gt, to_sequence(pr_p.tracks, frames))
    if gt.num_boxes() == 0:
        raise UsageError(f"{args.gt} holds no ground-truth boxes")
    row = ex.evaluate(gt, pred, crit, amota_cfg)
    cols = list(ex.METRIC_COLUMNS) + list(ex.EXTRA_COLUMNS)
    width = max(len(c) for c in cols)
    for c in cols:
        v = row[c]
        text = f"{v:.4f}" if isinstance(v, float) else str(v)
        print(f"{c:<{width}}  {text}")
    if args.out:
        ex.write_csv(args.out, [row], cols)
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    try:
        grid = ex.parse_grid(args.grid or [])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        cells = list(ex.grid_cells(cfg, grid))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    rows = ex.ablate(cfg, grid, args.jobs)
    assert len(rows) == len(cells)
    cols = list(grid) + list(ex.METRIC_COLUMNS) + list(ex.EXTRA_COLUMNS)
    ex.write_csv(args.out, rows, cols)
    print(f"cells={len(rows)} -> {args.out}")
    return 0


def cmd_config(args) -> int:
    cfg = _config(args)
    sys.stdout.write(config_text(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pointtrack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, seed=True):
        sp.add_argument("--config", help="INI run configuration (defaults to the preset)")
        sp.add_argument("--preset", choices=("mot", "kitti", "nuscenes_like", "custom"),
                        help="preset used when no --config is given")
        if seed:
            sp.add_argument("--seed", type=int,
                            help="overrides $POINTTRACK_SEED and the config file")

    t = sub.add_parser("track", help="associate detections into tracks")
    with_config(t, seed=False)
    t.add_argument("--detections", required=True, help="detection file")
    t.add_argument("--format", choices=INPUT_FORMATS, default="mot",
                   help="detection file layout (default: MOTChallenge)")
    t.add_argument("--public", help="public detections; new tracks must start near one")
    t.add_argument("--offsets", help="external offsets file (frame,det_index,off_x,off_y)")
    t.add_argument("--out", required=True, help="result file")
    t.set_defaults(func=cmd_track)

    s = sub.add_parser("simulate", help="generate ground truth and noisy detections")
    with_config(s)
    s.add_argument("--out-gt", required=True)
    s.add_argument("--out-det", required=True)
    s.add_argument("--stride", type=int, help="keep every n-th frame")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="score tracker output against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--format", choices=INPUT_FORMATS, default="mot", help="ground-truth layout")
    e.add_argument("--pred-format", choices=INPUT_FORMATS,
                   help="prediction layout (defaults to --format)")
    e.add_argument("--criterion", default="iou:0.5", help="iou:T or dist3d:T (meters)")
    e.add_argument("--amota", nargs="?", const="n=40,alpha=0.2", default=None,
                   help="also compute AMOTA, e.g. n=40,alpha=0.2")
    e.add_argument("--out", help="CSV file for the metrics row")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run a grid of simulate-track-eval cells")
    with_config(a)
    a.add_argument("--grid", action="append", metavar="AXIS=V1,V2",
                   help=f"repeatable; axes: {', '.join(ex.AXES)}")
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    c = sub.add_parser("config", help="print the effective configuration")
    with_config(c)
    c.set_defaults(func=cmd_config)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"pointtrack: error: {exc}", file=sys.stderr)
        return 2
    except (MotFormatError, OSError, ValueError, ArithmeticError) as exc:
        print(f"pointtrack: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

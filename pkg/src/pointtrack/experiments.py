"""Simulate, track and evaluate in one call; grid ablations over those runs."""
from __future__ import annotations

import csv
import io as _io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .association import track_sequence
from .geometry import Detection, SequenceData
from .io import RunConfig, atomic_write_text, format_number
from .metrics import AmotaConfig, TpCriterion, amota, clear_mot, idf1
from .motion import MotionModel
from .simulator import generate_world, simulate_detections, subsample

METRIC_COLUMNS = ("MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDSW", "FRAG", "AMOTA")
EXTRA_COLUMNS = ("MOTP", "FP_rate", "FN_rate", "IDSW_rate", "GT")

_TRACKER_AXES = {"theta": float, "tau": float, "rebirth_k": int, "matcher": str}
_NOISE_AXES = {"lambda_jt": float, "lambda_fp": float, "lambda_fn": float,
               "offset_noise_std": float}
AXES = ("motion", *_TRACKER_AXES, *_NOISE_AXES, "stride", "seed")


def simulate(cfg: RunConfig) -> Tuple[SequenceData, Dict[int, List[Detection]]]:
    """Ground truth (after frame subsampling) and its simulated detections."""
    gt = generate_world(cfg.world)
    if cfg.stride > 1:
        gt = subsample(gt, cfg.stride)
    return gt, simulate_detections(gt, cfg.noise)


def evaluate(gt: SequenceData, pred: SequenceData, crit: TpCriterion = TpCriterion(),
             amota_cfg: Optional[AmotaConfig] = None) -> Dict[str, float]:
    rep = clear_mot(gt, pred, crit)
    row = {
        "MOTA": rep.mota, "IDF1": idf1(gt, pred, crit), "MT": rep.mt, "ML": rep.ml,
        "FP": rep.fp, "FN": rep.fn, "IDSW": rep.idsw, "FRAG": rep.frag,
        "AMOTA": amota(gt, pred, crit, amota_cfg).amota if amota_cfg is not None else float("nan"),
        "MOTP": rep.motp, "FP_rate": rep.fp_rate, "FN_rate": rep.fn_rate,
        "IDSW_rate": rep.idsw_rate, "GT": rep.gt_total,
    }
    return row


def run(cfg: RunConfig) -> Dict[str, float]:
    gt, dets = simulate(cfg)
    pred = track_sequence(dets, cfg.tracker, frames=gt.frame_indices,
                          image_size=gt.image_size, framerate=gt.framerate)
    return evaluate(gt, pred, cfg.criterion, cfg.amota)


def apply_axis(cfg: RunConfig, axis: str, value: str) -> RunConfig:
    if axis == "motion":
        return replace(cfg, tracker=replace(cfg.tracker,
                                            motion=replace(cfg.tracker.motion, kind=value)))
    if axis in _TRACKER_AXES:
        return replace(cfg, tracker=replace(cfg.tracker, **{axis: _TRACKER_AXES[axis](value)}))
    if axis in _NOISE_AXES:
        return replace(cfg, noise=replace(cfg.noise, **{axis: _NOISE_AXES[axis](value)}))
    if axis == "stride":
        return replace(cfg, stride=int(value))
    if axis == "seed":
        return cfg.with_seed(int(value))
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of {AXES}")


def parse_grid(specs: Sequence[str]) -> Dict[str, List[str]]:
    """``["theta=0.3,0.4", "motion=zero,kalman"]`` -> ordered axis -> values."""
    grid: Dict[str, List[str]] = {}
    for spec in specs:
        axis, sep, values = spec.partition("=")
        axis = axis.strip()
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not sep or not vals:
            raise ValueError(f"bad grid spec {spec!r}; expected axis=v1,v2,...")
        if axis not in AXES:
            raise ValueError(f"unknown ablation axis {axis!r}; expected one of {AXES}")
        if axis in grid:
            raise ValueError(f"axis {axis!r} given twice")
        grid[axis] = vals
    return grid


def grid_cells(cfg: RunConfig, grid: Mapping[str, Sequence[str]]):
    """Every combination of axis values, in lexicographic order of the given lists."""
    axes = list(grid)
    for combo in itertools.product(*(grid[a] for a in axes)):
        c = cfg
        for a, v in zip(axes, combo):
            c = apply_axis(c, a, v)
        yield dict(zip(axes, combo)), c


def _run_cell(args):
    labels, cfg = args
    row = dict(labels)
    row.update(run(cfg))
    return row


def ablate(cfg: RunConfig, grid: Mapping[str, Sequence[str]], jobs: int = 1) -> List[dict]:
    """One result row per grid cell; row order and values do not depend on ``jobs``."""
    cells = list(grid_cells(cfg, grid))
    # validate every cell before spending time on any of them
    for _, c in cells:
        MotionModel(c.tracker.motion.kind)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


def _cell(v) -> str:
    if isinstance(v, float):
        return format_number(v) if v == v else "nan"
    return str(v)


def rows_to_csv(rows: Sequence[Mapping], columns: Optional[Sequence[str]] = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else list(METRIC_COLUMNS)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Sequence[Mapping], columns: Optional[Sequence[str]] = None) -> None:
    atomic_write_text(path, rows_to_csv(rows, columns))

"""CLEAR-MOT, IDF1 and recall-averaged AMOTA.

Per-frame matching follows the usual CLEAR-MOT convention: correspondences
from the previous frame are kept while they still satisfy the true-positive
criterion, the remaining objects are matched by a gated minimum-cost
assignment, and a ground-truth object whose matched prediction id differs
from its last matched id counts as an identity switch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._backend import kernels
from .association import hungarian_match
from .geometry import Frame, SequenceData


@dataclass(frozen=True)
class TpCriterion:
    """``iou`` (match when IoU > threshold) or ``dist3d`` (ground-plane distance < threshold)."""

    kind: str = "iou"
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind == "iou":
            if not (0.0 < self.threshold < 1.0):
                raise ValueError("IoU threshold must be in (0, 1)")
        elif self.kind == "dist3d":
            if not (self.threshold > 0):
                raise ValueError("distance threshold must be > 0")
        else:
            raise ValueError(f"unknown criterion kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "TpCriterion":
        """``iou:0.5`` or ``dist3d:2.0``."""
        try:
            kind, _, value = text.partition(":")
            kind = kind.strip().lower()
            if kind in ("iou_2d", "iou2d"):
                kind = "iou"
            if kind in ("center_dist_3d", "dist"):
                kind = "dist3d"
            thr = float(value) if value else (0.5 if kind == "iou" else 2.0)
        except ValueError as exc:
            raise ValueError(f"bad criterion {text!r}") from exc
        return cls(kind, thr)

    def __str__(self):
        return f"{self.kind}:{self.threshold:g}"


class _Prep(NamedTuple):
    ids: np.ndarray
    corners: np.ndarray
    pos: np.ndarray
    cls: np.ndarray
    conf: np.ndarray


def _prep_frame(frame: Frame, need_pos: bool) -> _Prep:
    objs = frame.objects
    n = len(objs)
    ids = np.fromiter((o.id for o in objs), dtype=np.int64, count=n)
    corners = np.array([o.box.corners for o in objs], dtype=np.float64).reshape(n, 4)
    cls = np.fromiter((o.class_id for o in objs), dtype=np.int64, count=n)
    conf = np.fromiter((o.confidence for o in objs), dtype=np.float64, count=n)
    if need_pos:
        if any(o.pos3d is None for o in objs):
            raise ValueError(f"dist3d criterion needs pos3d on every box (frame {frame.index})")
        pos = np.array([o.pos3d[:2] for o in objs], dtype=np.float64).reshape(n, 2)
    else:
        pos = np.zeros((n, 2))
    return _Prep(ids, corners, pos, cls, conf)


def _pair_tables(g: _Prep, p: _Prep, crit: TpCriterion):
    """(allowed, cost, measure, iou) matrices of shape (n_gt, n_pred)."""
    ious = kernels.iou_matrix(g.corners, p.corners)
    if crit.kind == "iou":
        measure = ious
        allowed = ious > crit.threshold
        cost = 1.0 - ious
    else:
        diff = g.pos[:, None, :] - p.pos[None, :, :]
        measure = np.hypot(diff[..., 0], diff[..., 1])
        allowed = measure < crit.threshold
        cost = measure
    allowed &= g.cls[:, None] == p.cls[None, :]
    return allowed, cost, measure, ious


class FrameCounts(NamedTuple):
    frame: int
    gt: int
    pred: int
    tp: int
    fp: int
    fn: int
    idsw: int


@dataclass(frozen=True)
class MotReport:
    gt_total: int
    pred_total: int
    tp: int
    fp: int
    fn: int
    idsw: int
    frag: int
    n_trajectories: int
    mt_count: int
    ml_count: int
    measure_sum: float
    iou_sum: float
    criterion: str = "iou:0.5"
    per_frame: Tuple[FrameCounts, ...] = field(default=(), repr=False)

    @property
    def mota(self) -> float:
        if self.gt_total == 0:
            return math.nan
        return 1.0 - (self.fp + self.fn + self.idsw) / self.gt_total

    @property
    def motp(self) -> float:
        """Mean criterion measure over true positives (IoU or ground-plane distance)."""
        return self.measure_sum / self.tp if self.tp else math.nan

    @property
    def motp_iou(self) -> float:
        return self.iou_sum / self.tp if self.tp else math.nan

    def _rate(self, v):
        return v / self.gt_total if self.gt_total else math.nan

    @property
    def fp_rate(self) -> float:
        return self._rate(self.fp)

    @property
    def fn_rate(self) -> float:
        return self._rate(self.fn)

    @property
    def idsw_rate(self) -> float:
        return self._rate(self.idsw)

    @property
    def recall(self) -> float:
        return self._rate(self.tp)

    @property
    def mt(self) -> float:
        return self.mt_count / self.n_trajectories if self.n_trajectories else math.nan

    @property
    def ml(self) -> float:
        return self.ml_count / self.n_trajectories if self.n_trajectories else math.nan


def combine_reports(reports: Sequence[MotReport]) -> MotReport:
    """Sum per-sequence ledgers; ratios are recomputed from the totals."""
    keys = ("gt_total", "pred_total", "tp", "fp", "fn", "idsw", "frag", "n_trajectories",
            "mt_count", "ml_count", "measure_sum", "iou_sum")
    tot = {k: sum(getattr(r, k) for r in reports) for k in keys}
    crit = reports[0].criterion if reports else "iou:0.5"
    frames = tuple(fc for r in reports for fc in r.per_frame)
    return MotReport(**tot, criterion=crit, per_frame=frames)


def _check_frames(gt: SequenceData, pred: SequenceData):
    if gt.frame_indices != pred.frame_indices:
        raise ValueError("ground truth and predictions cover different frame sets")


def align_to(gt: SequenceData, pred: SequenceData) -> SequenceData:
    """Give ``pred`` exactly the frame set of ``gt`` (missing frames become empty)."""
    have = {f.index: f for f in pred.frames}
    extra = set(have) - set(gt.frame_indices)
    if extra:
        raise ValueError(f"predictions contain frames absent from ground truth: {sorted(extra)[:5]}")
    frames = tuple(have.get(i, Frame(i, ())) for i in gt.frame_indices)
    return pred.with_frames(frames)


class _FrameTables(NamedTuple):
    index: int
    gids: np.ndarray
    pids: np.ndarray
    pconf: np.ndarray
    allowed: np.ndarray
    cost: np.ndarray
    measure: np.ndarray
    ious: np.ndarray


def _tables(gt: SequenceData, pred: SequenceData, crit: TpCriterion) -> List[_FrameTables]:
    need_pos = crit.kind == "dist3d"
    out = []
    for gf, pf in zip(gt.frames, pred.frames):
        g, p = _prep_frame(gf, need_pos), _prep_frame(pf, need_pos)
        out.append(_FrameTables(gf.index, g.ids, p.ids, p.conf, *_pair_tables(g, p, crit)))
    return out


def _clear_core(frames: Sequence[_FrameTables], crit: TpCriterion,
                min_conf: Optional[float] = None, keep_frames: bool = True) -> MotReport:
    """CLEAR-MOT ledger; with ``min_conf`` only predictions at or above it are kept."""
    prev_map: Dict[int, int] = {}
    last_match: Dict[int, int] = {}
    present: Dict[int, int] = {}
    matched: Dict[int, int] = {}
    covered_prev: Dict[int, bool] = {}
    frag = 0
    tp_tot = fp_tot = fn_tot = sw_tot = 0
    gt_tot = pr_tot = 0
    msum = isum = 0.0
    per_frame = []
    for ft in frames:
        fidx = ft.index
        pids, allowed, cost, measure, ious = ft.pids, ft.allowed, ft.cost, ft.measure, ft.ious
        if min_conf is not None:
            keep = ft.pconf >= min_conf
            if not keep.all():
                pids = pids[keep]
                allowed, cost = allowed[:, keep], cost[:, keep]
                measure, ious = measure[:, keep], ious[:, keep]
        g_ids = ft.gids
        ng, npred = len(g_ids), len(pids)
        gt_tot += ng
        pr_tot += npred
        gpos = {int(x): i for i, x in enumerate(g_ids)}
        ppos = {int(x): j for j, x in enumerate(pids)}
        pairs = []
        used_g, used_p = set(), set()
        for gid, pid in prev_map.items():
            i, j = gpos.get(gid), ppos.get(pid)
            if i is not None and j is not None and allowed[i, j] and j not in used_p:
                pairs.append((i, j))
                used_g.add(i)
                used_p.add(j)
        rest_g = [i for i in range(ng) if i not in used_g]
        rest_p = [j for j in range(npred) if j not in used_p]
        switches = 0
        if rest_g and rest_p:
            sub_allowed = allowed[np.ix_(rest_g, rest_p)]
            sub_cost = cost[np.ix_(rest_g, rest_p)]
            gate = np.where(sub_allowed, np.inf, -np.inf)
            for a, b in hungarian_match(sub_cost, gate):
                i, j = rest_g[a], rest_p[b]
                pairs.append((i, j))
                gid, pid = int(g_ids[i]), int(pids[j])
                if gid in last_match and last_match[gid] != pid:
                    switches += 1
        new_map = {}
        for i, j in pairs:
            gid, pid = int(g_ids[i]), int(pids[j])
            new_map[gid] = pid
            last_match[gid] = pid
            msum += float(measure[i, j])
            isum += float(ious[i, j])
        prev_map = new_map
        tp = len(pairs)
        for i in range(ng):
            gid = int(g_ids[i])
            cov = gid in new_map
            present[gid] = present.get(gid, 0) + 1
            if cov:
                matched[gid] = matched.get(gid, 0) + 1
            elif covered_prev.get(gid, False):
                frag += 1
            covered_prev[gid] = cov
        tp_tot += tp
        fp_tot += npred - tp
        fn_tot += ng - tp
        sw_tot += switches
        if keep_frames:
            per_frame.append(FrameCounts(fidx, ng, npred, tp, npred - tp, ng - tp, switches))
    mt = sum(1 for gid, n in present.items() if matched.get(gid, 0) / n > 0.8)
    ml = sum(1 for gid, n in present.items() if matched.get(gid, 0) / n < 0.2)
    return MotReport(gt_tot, pr_tot, tp_tot, fp_tot, fn_tot, sw_tot, frag, len(present), mt, ml,
                     msum, isum, str(crit), tuple(per_frame))


def clear_mot(gt: SequenceData, pred: SequenceData, crit: TpCriterion = TpCriterion()) -> MotReport:
    _check_frames(gt, pred)
    return _clear_core(_tables(gt, pred, crit), crit)


def idf1(gt: SequenceData, pred: SequenceData, crit: TpCriterion = TpCriterion()) -> float:
    """Identity F1 under the best one-to-one mapping of trajectories."""
    _check_frames(gt, pred)
    n_gt, n_pred = gt.num_boxes(), pred.num_boxes()
    if n_gt + n_pred == 0:
        return 1.0
    gids = sorted(gt.ids)
    pids = sorted(pred.ids)
    if not gids or not pids:
        return 0.0
    gi = {x: i for i, x in enumerate(gids)}
    pj = {x: j for j, x in enumerate(pids)}
    counts = np.zeros((len(gids), len(pids)))
    need_pos = crit.kind == "dist3d"
    for gf, pf in zip(gt.frames, pred.frames):
        if not gf.objects or not pf.objects:
            continue
        g = _prep_frame(gf, need_pos)
        p = _prep_frame(pf, need_pos)
        allowed = _pair_tables(g, p, crit)[0]
        ii, jj = np.nonzero(allowed)
        for i, j in zip(ii, jj):
            counts[gi[int(g.ids[i])], pj[int(p.ids[j])]] += 1
    rows, cols = linear_sum_assignment(counts, maximize=True)
    idtp = float(counts[rows, cols].sum())
    return 2.0 * idtp / (n_gt + n_pred)


@dataclass(frozen=True)
class AmotaConfig:
    n: int = 40
    alpha: float = 0.2
    # scan every distinct confidence instead of bisecting (slow, assumption free)
    exhaustive: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not (self.alpha > 0):
            raise ValueError("alpha must be > 0")

    @classmethod
    def parse(cls, text: str) -> "AmotaConfig":
        """``n=40,alpha=0.2[,exhaustive=1]``."""
        kw = {}
        for part in filter(None, (s.strip() for s in text.split(","))):
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"bad AMOTA option {part!r}")
            key = key.strip()
            if key == "n":
                kw["n"] = int(value)
            elif key == "alpha":
                kw["alpha"] = float(value)
            elif key == "exhaustive":
                kw["exhaustive"] = value.strip().lower() in ("1", "true", "yes", "on")
            else:
                raise ValueError(f"unknown AMOTA option {key!r}")
        return cls(**kw)

    @property
    def recall_grid(self) -> List[float]:
        return [k / (self.n - 1) for k in range(1, self.n)]

    def __str__(self):
        return f"n={self.n},alpha={self.alpha!r}" + (",exhaustive=1" if self.exhaustive else "")


class AmotaResult(NamedTuple):
    amota: float
    per_r: List[float]
    amotp: float
    thresholds: List[Optional[float]]


def mota_r(idsw: int, fp: int, fn: int, recall: float, P: int, alpha: float) -> float:
    """Recall-normalized MOTA at an operating point with achieved ``recall``."""
    if recall <= 0:
        return 0.0
    return max(0.0, 1.0 - alpha * (idsw + fp + fn - (1.0 - recall) * P) / (recall * P))


def _distance_measure(rep: MotReport, crit: TpCriterion) -> float:
    if rep.tp == 0:
        return math.nan
    if crit.kind == "dist3d":
        return rep.motp
    return 1.0 - rep.motp


def amota(gt: SequenceData, pred: SequenceData, crit: TpCriterion = TpCriterion(),
          cfg: AmotaConfig = AmotaConfig()) -> AmotaResult:
    """Average of recall-normalized MOTA over the recall grid.

    For each recall level r, the operating point is the highest confidence
    threshold whose output reaches recall >= r. Unreachable levels score 0.
    AMOTP averages the TP distance (ground-plane distance, or 1 - IoU for
    the 2D criterion) over the reached levels.

    By default the threshold is found by bisection over the distinct
    confidences, which is exact whenever recall does not increase with the
    threshold. ``cfg.exhaustive`` scans every candidate instead.
    """
    _check_frames(gt, pred)
    P = gt.num_boxes()
    if P == 0:
        raise ValueError("AMOTA needs a non-empty ground truth")
    tables = _tables(gt, pred, crit)
    confs = [t.pconf for t in tables if len(t.pconf)]
    cands = np.unique(np.concatenate(confs))[::-1] if confs else np.array([])
    memo: Dict[int, MotReport] = {}

    def report(k: int) -> MotReport:
        if k not in memo:
            memo[k] = _clear_core(tables, crit, float(cands[k]), keep_frames=False)
        return memo[k]

    def first_reaching(need: float, lo: int) -> Optional[int]:
        if cfg.exhaustive:
            for k in range(len(cands)):
                if report(k).tp >= need:
                    return k
            return None
        hi = len(cands) - 1
        if hi < lo or report(hi).tp < need:
            return None
        while lo < hi:
            mid = (lo + hi) // 2
            if report(mid).tp >= need:
                hi = mid
            else:
                lo = mid + 1
        return lo

    per_r, thr, dists = [], [], []
    lo = 0
    for r in cfg.recall_grid:
        k = first_reaching(r * P - 1e-9, lo)
        if k is None:
            per_r.append(0.0)
            thr.append(None)
            continue
        lo = k
        rep = report(k)
        per_r.append(mota_r(rep.idsw, rep.fp, rep.fn, rep.tp / P, P, cfg.alpha))
        thr.append(float(cands[k]))
        dists.append(_distance_measure(rep, crit))
    score = float(np.mean(per_r))
    amotp = float(np.mean(dists)) if dists else math.nan
    return AmotaResult(score, per_r, amotp, thr)


def amota_by_class(gt: SequenceData, pred: SequenceData, crit: TpCriterion = TpCriterion(),
                   cfg: AmotaConfig = AmotaConfig()) -> float:
    """Mean AMOTA over the classes present in the ground truth."""
    classes = sorted({o.class_id for f in gt.frames for o in f.objects})
    scores = []
    for c in classes:
        def only(seq):
            return seq.with_frames(
                Frame(f.index, tuple(o for o in f.objects if o.class_id == c)) for f in seq.frames)
        scores.append(amota(only(gt), only(pred), crit, cfg).amota)
    return float(np.mean(scores)) if scores else math.nan

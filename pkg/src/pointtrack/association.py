"""Greedy point association, the Hungarian alternative, and track lifecycle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._backend import kernels
from .geometry import BBox, Detection, Frame, LabeledBox, SequenceData, Track
from .heatmap import DEFAULT_DOWNSAMPLE, DenseMap, render_prior
from .motion import MotionModel, cost_arrays, kalman_init, kalman_predict, kalman_update

MATCHERS = ("greedy", "hungarian")
MODES = ("private", "public")
THRESHOLD_STAGES = ("pre", "post")


@dataclass(frozen=True)
class TrackerConfig:
    theta: float = 0.4
    tau: float = 0.5
    rebirth_k: int = 0
    matcher: str = "greedy"
    motion: MotionModel = field(default_factory=MotionModel)
    mode: str = "private"
    # "pre": drop detections below theta before association;
    # "post": associate everything, only report tracks at or above theta
    threshold_stage: str = "pre"

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0) or not (0.0 <= self.tau <= 1.0):
            raise ValueError("theta and tau must be in [0, 1]")
        if self.rebirth_k < 0:
            raise ValueError("rebirth_k must be >= 0")
        if self.matcher not in MATCHERS:
            raise ValueError(f"matcher must be one of {MATCHERS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.threshold_stage not in THRESHOLD_STAGES:
            raise ValueError(f"threshold_stage must be one of {THRESHOLD_STAGES}")


@dataclass(frozen=True)
class TrackerState:
    tracks: Tuple[Track, ...] = ()
    next_id: int = 1
    frame_index: int = 0
    missing_offsets: int = 0


class Matching(NamedTuple):
    matches: List[Tuple[int, int]]
    unmatched_dets: List[int]
    unmatched_tracks: List[int]


def _complete(pairs: List[Tuple[int, int]], n: int, m: int) -> Matching:
    di = {i for i, _ in pairs}
    tj = {j for _, j in pairs}
    return Matching(pairs, [i for i in range(n) if i not in di], [j for j in range(m) if j not in tj])


def greedy_assign(cost, gate) -> Matching:
    """Greedy matching on precomputed matrices (rows already in priority order)."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    assign = kernels.greedy_assign(cost, np.asarray(gate, dtype=np.float64))
    pairs = [(i, int(j)) for i, j in enumerate(assign) if j >= 0]
    return _complete(pairs, n, m)


def greedy_match(dets: Sequence[Detection], tracks: Sequence[Track], model: MotionModel,
                 external_offsets=None) -> Matching:
    """Associate detections (sorted by descending confidence) to tracks.

    Each detection in turn takes the closest unmatched track and keeps it if
    the distance is below the gating radius of the pair.
    """
    for a, b in zip(dets, dets[1:]):
        if b.confidence > a.confidence:
            raise ValueError("detections must be sorted by descending confidence")
    cost, gate = cost_arrays(dets, tracks, model, external_offsets)
    return greedy_assign(cost, gate)


def hungarian_match(cost, gate) -> List[Tuple[int, int]]:
    """Minimum-cost one-to-one assignment restricted to pairs with cost < gate.

    Among all matchings of maximum size over the allowed pairs, the one with
    the smallest total cost is returned, as (row, col) pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    gate = np.asarray(gate, dtype=np.float64)
    if cost.size == 0:
        return []
    if not np.isfinite(cost).all():
        raise ValueError("hungarian_match needs finite costs")
    allowed = cost < gate
    if not allowed.any():
        return []
    # forbidden pairs cost more than any total of allowed ones, so the solver
    # maximizes the number of allowed pairs first
    spread = float(np.abs(cost[allowed]).sum())
    big = 2.0 * spread + 1.0
    work = np.where(allowed, cost, big)
    rows, cols = linear_sum_assignment(work)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if allowed[i, j]]


def _hungarian_matching(cost, gate) -> Matching:
    n, m = np.shape(cost)
    return _complete(hungarian_match(cost, gate), n, m)


def _prepare(dets, cfg, external_offsets):
    if cfg.threshold_stage == "pre":
        idx = [i for i, d in enumerate(dets) if d.confidence >= cfg.theta]
    else:
        idx = list(range(len(dets)))
    idx.sort(key=lambda i: -dets[i].confidence)
    sdets = [dets[i] for i in idx]
    ext = None
    if external_offsets is not None:
        ext = [external_offsets[i] for i in idx]
    return sdets, ext


def _nearest_public(det: Detection, public: Sequence[BBox]) -> bool:
    if not public:
        return False
    cx, cy = det.center
    best_k, best_d = 0, math.inf
    for k, b in enumerate(public):
        d = math.hypot(cx - b.cx, cy - b.cy)
        if d < best_d:
            best_k, best_d = k, d
    return best_d < min(det.geometric_mean, public[best_k].geometric_mean)


def _step(state: TrackerState, dets: Sequence[Detection], cfg: TrackerConfig,
          frame: Optional[int], public: Optional[Sequence[BBox]],
          external_offsets) -> Tuple[TrackerState, List[Track]]:
    if frame is None:
        frame = state.frame_index + 1
    if frame <= state.frame_index:
        raise ValueError(f"frame index must increase ({state.frame_index} -> {frame})")
    model = cfg.motion
    missing = state.missing_offsets
    if model.kind == "external_offset":
        if external_offsets is None:
            external_offsets = [None] * len(dets)
        missing += sum(1 for e in external_offsets if e is None)
    sdets, ext = _prepare(dets, cfg, external_offsets)

    kalman = model.kind == "kalman"
    prior = list(state.tracks)
    if kalman:
        steps = float(frame - state.frame_index)
        cand = []
        for t in prior:
            if t.active or not model.freeze_inactive:
                t = replace(t, motion_state=kalman_predict(t.motion_state, model.process_scale, steps))
            cand.append(t)
    else:
        cand = prior

    cost, gate = cost_arrays(sdets, cand, model, ext)
    if cfg.matcher == "greedy":
        matching = greedy_assign(cost, gate)
    else:
        matching = _hungarian_matching(cost, gate)

    next_id = state.next_id
    by_det: Dict[int, Track] = {}
    for i, j in matching.matches:
        d, t = sdets[i], cand[j]
        box = d.bbox
        ms = kalman_update(t.motion_state, box, model.measurement_scale) if kalman else None
        by_det[i] = Track(t.id, box, d.confidence, 0, ms, frame, d.class_id, d.pos3d)
    for i in matching.unmatched_dets:
        d = sdets[i]
        if public is not None and not _nearest_public(d, public):
            continue
        box = d.bbox
        ms = kalman_init(box, model.measurement_scale, model.velocity_scale) if kalman else None
        by_det[i] = Track(next_id, box, d.confidence, 0, ms, frame, d.class_id, d.pos3d)
        next_id += 1

    active = [by_det[i] for i in sorted(by_det)]
    inactive = []
    for j in matching.unmatched_tracks:
        age = prior[j].inactive_age + 1
        if age > cfg.rebirth_k:
            continue
        src = prior[j] if (model.freeze_inactive or not kalman) else cand[j]
        inactive.append(replace(src, inactive_age=age))

    new_state = TrackerState(tuple(active + inactive), next_id, frame, missing)
    if cfg.threshold_stage == "post":
        output = [t for t in active if t.confidence >= cfg.theta]
    else:
        output = active
    return new_state, output


def step(state: TrackerState, dets: Sequence[Detection], cfg: TrackerConfig,
         frame: Optional[int] = None, external_offsets=None) -> Tuple[TrackerState, List[Track]]:
    """Advance the tracker by one frame of private detections.

    Returns the new state and the tracks reported for this frame (active
    tracks only). ``frame`` defaults to the previous frame index + 1.
    """
    return _step(state, dets, cfg, frame, None, external_offsets)


def step_public(state: TrackerState, dets: Sequence[Detection], public_dets: Sequence[BBox],
                cfg: TrackerConfig, frame: Optional[int] = None,
                external_offsets=None) -> Tuple[TrackerState, List[Track]]:
    """Like :func:`step`, but a new track is only started when the detection
    lies within the gating radius of its nearest public detection."""
    return _step(state, dets, cfg, frame, list(public_dets), external_offsets)


class Tracker:
    """Stateful convenience wrapper around :func:`step` / :func:`step_public`."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.state = TrackerState()

    def step(self, dets, frame=None, public=None, external_offsets=None) -> List[Track]:
        if public is not None or self.cfg.mode == "public":
            self.state, out = step_public(self.state, dets, public or [], self.cfg, frame,
                                          external_offsets)
        else:
            self.state, out = step(self.state, dets, self.cfg, frame, external_offsets)
        return out

    def prior_heatmap(self, grid, downsample: int = DEFAULT_DOWNSAMPLE) -> DenseMap:
        return render_prior(self.state.tracks, self.cfg.tau, grid, downsample)


def tracks_to_frame(index: int, tracks: Sequence[Track]) -> Frame:
    return Frame(index, tuple(LabeledBox(t.id, t.box, t.confidence, t.class_id, t.pos3d)
                              for t in tracks))


def track_sequence(dets_by_frame: Mapping[int, Sequence[Detection]], cfg: TrackerConfig,
                   frames: Optional[Sequence[int]] = None,
                   public: Optional[Mapping[int, Sequence[BBox]]] = None,
                   external_offsets: Optional[Mapping[int, Sequence]] = None,
                   image_size=(1920, 1080), framerate: float = 30.0) -> SequenceData:
    """Run the tracker over every frame and collect the reported tracks."""
    if frames is None:
        frames = sorted(dets_by_frame)
    tracker = Tracker(cfg)
    out = []
    for f in frames:
        dets = dets_by_frame.get(f, [])
        pub = None
        if public is not None or cfg.mode == "public":
            pub = list((public or {}).get(f, []))
        ext = external_offsets.get(f) if external_offsets is not None else None
        res = tracker.step(dets, frame=f, public=pub, external_offsets=ext)
        out.append(tracks_to_frame(f, res))
    return SequenceData(tuple(out), image_size=image_size, framerate=framerate,
                        meta={"missing_offsets": tracker.state.missing_offsets})

"""Synthetic ground-truth worlds and a detector-error model.

All randomness is derived from a 64-bit seed. Per-frame streams use
``frame_seed(seed, frame) = splitmix64(seed ^ splitmix64(frame))`` so any
frame can be regenerated independently of the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BBox, Detection, Frame, LabeledBox, SequenceData

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def frame_seed(seed: int, frame: int) -> int:
    return splitmix64((seed & _MASK64) ^ splitmix64(frame & _MASK64))


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(frame_seed(seed, stream))


@dataclass(frozen=True)
class NoiseConfig:
    """Detector-error model.

    ``lambda_jt`` scales center jitter by the box size, ``lambda_fp`` is the
    per-object probability of a nearby false positive and ``lambda_fn`` the
    per-object probability of a missed detection.
    """

    lambda_jt: float = 0.05
    lambda_fp: float = 0.1
    lambda_fn: float = 0.4
    offset_noise_std: float = 0.0
    conf_tp_range: Tuple[float, float] = (0.5, 1.0)
    conf_fp_range: Tuple[float, float] = (0.4, 0.7)
    seed: int = 0
    # one Gaussian sample shared by both axes instead of one per axis
    shared_jitter: bool = False
    fp_spread: float = 3.0

    def __post_init__(self):
        for name in ("lambda_fp", "lambda_fn"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.lambda_jt < 0 or self.offset_noise_std < 0:
            raise ValueError("noise scales must be >= 0")
        for name in ("conf_tp_range", "conf_fp_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} must be an ordered range in [0, 1]")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, (1.0, 1.0), (1.0, 1.0), seed)


@dataclass(frozen=True)
class WorldConfig:
    image_size: Tuple[int, int] = (960, 544)
    n_objects: int = 20
    framerate: float = 30.0
    frames: int = 200
    speed_range: Tuple[float, float] = (1.0, 4.0)
    size_range: Tuple[float, float] = (30.0, 80.0)
    birth_rate: float = 0.0
    death_rate: float = 0.0
    occlusion: Tuple[float, int] = (0.0, 0)
    frame_sample_window: int = 3
    seed: int = 0
    # per-frame probability that an object redraws its heading
    turn_rate: float = 0.0
    # std of the per-frame random velocity change (px / frame^2); speed stays in speed_range
    accel_std: float = 0.0
    # ground-plane scale for 3D positions; 0 disables pos3d
    meters_per_pixel: float = 0.0

    def __post_init__(self):
        W, H = self.image_size
        if W <= 0 or H <= 0 or self.frames <= 0 or self.framerate <= 0:
            raise ValueError("image size, frame count and framerate must be positive")
        lo, hi = self.speed_range
        if not (0 <= lo <= hi):
            raise ValueError("speed_range must be an ordered non-negative range")
        lo, hi = self.size_range
        if not (0 < lo <= hi) or hi >= min(W, H):
            raise ValueError("size_range must be positive, ordered and fit the image")
        for name in ("birth_rate", "death_rate", "turn_rate"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        p, d = self.occlusion
        if not (0.0 <= p <= 1.0) or d < 0:
            raise ValueError("occlusion must be (probability, max frames >= 0)")
        if self.frame_sample_window < 1:
            raise ValueError("frame_sample_window must be >= 1")
        if self.n_objects < 0:
            raise ValueError("n_objects must be >= 0")
        if self.accel_std < 0:
            raise ValueError("accel_std must be >= 0")


@dataclass
class _Obj:
    id: int
    x: float
    y: float
    w: float
    h: float
    vx: float
    vy: float
    occluded: int = 0
    alive: bool = True


def _spawn(rng, oid, cfg):
    W, H = cfg.image_size
    w = rng.uniform(*cfg.size_range)
    h = rng.uniform(*cfg.size_range)
    x = rng.uniform(w / 2, W - w / 2)
    y = rng.uniform(h / 2, H - h / 2)
    speed = rng.uniform(*cfg.speed_range)
    ang = rng.uniform(0, 2 * math.pi)
    return _Obj(oid, x, y, w, h, speed * math.cos(ang), speed * math.sin(ang))


def _reflect(pos, vel, lo, hi):
    # mirror about the wall; repeat for moves longer than the free span
    span = hi - lo
    if span <= 0:
        return lo, vel
    while pos < lo or pos > hi:
        if pos < lo:
            pos = 2 * lo - pos
        else:
            pos = 2 * hi - pos
        vel = -vel
    return pos, vel


def _accelerate(rng, vx, vy, std, speed_range):
    ax, ay = rng.standard_normal(2) * std
    vx, vy = vx + ax, vy + ay
    lo, hi = speed_range
    speed = math.hypot(vx, vy)
    if speed > hi:
        vx, vy = vx * hi / speed, vy * hi / speed
    elif speed < lo:
        if speed == 0:
            return lo, 0.0
        vx, vy = vx * lo / speed, vy * lo / speed
    return vx, vy


def generate_world(cfg: WorldConfig) -> SequenceData:
    """Piecewise-constant-velocity objects bouncing inside the image.

    Objects reflect off the image borders so every box stays in frame.
    Occluded objects keep moving but are absent from the frames they are
    hidden in. Frames are numbered from 1.
    """
    if cfg.n_objects == 0 and cfg.birth_rate == 0:
        raise ValueError("empty world: n_objects = 0 and birth_rate = 0")
    rng = _rng(cfg.seed, 0)
    W, H = cfg.image_size
    objs = [_spawn(rng, i + 1, cfg) for i in range(cfg.n_objects)]
    next_id = cfg.n_objects + 1
    occ_p, occ_max = cfg.occlusion
    mpp = cfg.meters_per_pixel
    frames = []
    for t in range(cfg.frames):
        if t > 0:
            for o in objs:
                if not o.alive:
                    continue
                if cfg.turn_rate and rng.random() < cfg.turn_rate:
                    speed = math.hypot(o.vx, o.vy)
                    ang = rng.uniform(0, 2 * math.pi)
                    o.vx, o.vy = speed * math.cos(ang), speed * math.sin(ang)
                if cfg.accel_std:
                    o.vx, o.vy = _accelerate(rng, o.vx, o.vy, cfg.accel_std, cfg.speed_range)
                o.x, o.vx = _reflect(o.x + o.vx, o.vx, o.w / 2, W - o.w / 2)
                o.y, o.vy = _reflect(o.y + o.vy, o.vy, o.h / 2, H - o.h / 2)
                if cfg.death_rate and rng.random() < cfg.death_rate:
                    o.alive = False
                    continue
                if o.occluded > 0:
                    o.occluded -= 1
                elif occ_p and occ_max > 0 and rng.random() < occ_p:
                    o.occluded = int(rng.integers(1, occ_max + 1))
            if cfg.birth_rate and rng.random() < cfg.birth_rate:
                objs.append(_spawn(rng, next_id, cfg))
                next_id += 1
        boxes = []
        for o in objs:
            if o.alive and o.occluded == 0:
                pos3d = (o.x * mpp, o.y * mpp, 0.0) if mpp > 0 else None
                boxes.append(LabeledBox(o.id, BBox(o.x, o.y, o.w, o.h), 1.0, 0, pos3d))
        frames.append(Frame(t + 1, tuple(boxes)))
    return SequenceData(tuple(frames), image_size=cfg.image_size, framerate=cfg.framerate,
                        meta={"meters_per_pixel": mpp})


def subsample(seq: SequenceData, stride: int) -> SequenceData:
    """Keep every ``stride``-th frame (starting with the first).

    Kept frames are renumbered 1..n; the framerate is divided by ``stride``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if stride > len(seq.frames):
        raise ValueError(f"stride {stride} exceeds sequence length {len(seq.frames)}")
    kept = seq.frames[::stride]
    frames = tuple(Frame(i + 1, f.objects) for i, f in enumerate(kept))
    return seq.with_frames(frames, framerate=seq.framerate / stride)


def _jitter(rng, noise: NoiseConfig, scale: float):
    if noise.shared_jitter:
        r = rng.standard_normal()
        return r * scale, r * scale
    rx, ry = rng.standard_normal(2)
    return rx * scale, ry * scale


def corrupt_labeled(gt_frame: Frame, prev_gt_frame: Optional[Frame], noise: NoiseConfig,
                    image_size: Optional[Tuple[int, int]] = None,
                    meters_per_pixel: float = 0.0) -> List[Tuple[Detection, Optional[int]]]:
    """Simulated detections for one frame, each paired with its source GT id.

    False positives carry ``None`` as source id. The random stream depends
    only on ``noise.seed`` and the frame index.
    """
    rng = _rng(noise.seed, gt_frame.index + 1)
    prev = {o.id: o for o in prev_gt_frame.objects} if prev_gt_frame is not None else {}
    out = []
    lo_tp, hi_tp = noise.conf_tp_range
    lo_fp, hi_fp = noise.conf_fp_range
    std = noise.offset_noise_std
    for o in gt_frame.objects:
        b = o.box
        # fixed draw order per object keeps streams aligned across settings
        drop = rng.random() < noise.lambda_fn
        jx, jy = _jitter(rng, noise, noise.lambda_jt)
        conf = rng.uniform(lo_tp, hi_tp)
        onx, ony = rng.standard_normal(2) * std
        add_fp = rng.random() < noise.lambda_fp
        fx, fy = _jitter(rng, noise, noise.fp_spread * noise.lambda_jt)
        fconf = rng.uniform(lo_fp, hi_fp)
        fnx, fny = rng.standard_normal(2) * std
        if not drop:
            cx, cy = b.cx + jx * b.w, b.cy + jy * b.h
            p = prev.get(o.id)
            if p is not None:
                off = (cx - p.box.cx + onx, cy - p.box.cy + ony)
            else:
                off = (onx, ony)
            pos3d = _pos3d(cx, cy, meters_per_pixel)
            out.append((Detection(BBox(cx, cy, b.w, b.h), float(conf), off, o.class_id, pos3d), o.id))
        if add_fp:
            cx, cy = b.cx + fx * b.w, b.cy + fy * b.h
            pos3d = _pos3d(cx, cy, meters_per_pixel)
            out.append((Detection(BBox(cx, cy, b.w, b.h), float(fconf), (fnx, fny),
                                  o.class_id, pos3d), None))
    return out


def _pos3d(cx, cy, mpp):
    if mpp > 0:
        return (cx * mpp, cy * mpp, 0.0)
    return None


def corrupt(gt_frame: Frame, prev_gt_frame: Optional[Frame], noise: NoiseConfig,
            meters_per_pixel: float = 0.0) -> List[Detection]:
    """Simulated detections for one ground-truth frame."""
    return [d for d, _ in corrupt_labeled(gt_frame, prev_gt_frame, noise,
                                          meters_per_pixel=meters_per_pixel)]


def simulate_detections(seq: SequenceData, noise: NoiseConfig) -> Dict[int, List[Detection]]:
    """Corrupt every frame of ``seq``; offsets point to the previous kept frame."""
    mpp = float(seq.meta.get("meters_per_pixel", 0.0) or 0.0)
    out = {}
    prev = None
    for f in seq.frames:
        out[f.index] = corrupt(f, prev, noise, mpp)
        prev = f
    return out


def sample_previous_index(t: int, n_frames: int, window: int, rng: np.random.Generator) -> int:
    """Uniform draw of a frame k with |k - t| < window, clipped to [0, n_frames)."""
    lo = max(0, t - window + 1)
    hi = min(n_frames - 1, t + window - 1)
    return int(rng.integers(lo, hi + 1))


def hallucinate_pair(frame: Frame, scale_range: float, translate_range: float, seed: int,
                     image_size: Tuple[int, int] = (1920, 1080)) -> Tuple[Frame, Frame]:
    """Fake a previous frame from a single annotated frame.

    All boxes are scaled about the image center by one factor in
    [1 - scale_range, 1 + scale_range] and shifted by one translation drawn
    from [-translate_range, translate_range] times the image size.
    Returns (previous, current).
    """
    if scale_range < 0 or translate_range < 0:
        raise ValueError("ranges must be >= 0")
    rng = _rng(seed, frame.index + 1)
    s = 1.0 + rng.uniform(-scale_range, scale_range) if scale_range > 0 else 1.0
    W, H = image_size
    tx = rng.uniform(-translate_range, translate_range) * W if translate_range > 0 else 0.0
    ty = rng.uniform(-translate_range, translate_range) * H if translate_range > 0 else 0.0
    return transform_frame(frame, s, (tx, ty), image_size), frame


def transform_frame(frame: Frame, scale: float, translation: Tuple[float, float],
                    image_size: Tuple[int, int]) -> Frame:
    """Scale every box about the image center, then translate."""
    W, H = image_size
    ox, oy = W / 2.0, H / 2.0
    tx, ty = translation
    objs = []
    for o in frame.objects:
        b = o.box
        nb = BBox(ox + scale * (b.cx - ox) + tx, oy + scale * (b.cy - oy) + ty,
                  scale * b.w, scale * b.h)
        objs.append(LabeledBox(o.id, nb, o.confidence, o.class_id, o.pos3d))
    return Frame(frame.index, tuple(objs))


def count_crossings(seq: SequenceData) -> int:
    """Number of events where two objects' boxes start overlapping.

    Pairs already overlapping in the first frame do not count.
    """
    from .geometry import iou

    overlapping = set()
    events = 0
    for f in seq.frames:
        objs = f.objects
        now = set()
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                if iou(objs[i].box, objs[j].box) > 0:
                    key = (min(objs[i].id, objs[j].id), max(objs[i].id, objs[j].id))
                    now.add(key)
                    if f is not seq.frames[0] and key not in overlapping:
                        events += 1
        overlapping = now
    return events

"""MOTChallenge text records, external offset files and run configuration.

Record line (no header, '.' radix, '\\n' terminated)::

    frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z[,off_x,off_y]

``id`` is -1 for raw detections; ``x,y,z`` are -1 when there is no 3D
position. The two trailing offset columns are an extension carrying the
detection's current-minus-previous center displacement.

Offset file line: ``frame,det_index,off_x,off_y`` where ``det_index`` is the
0-based position of the detection among that frame's lines in the
detection file.
"""
from __future__ import annotations

import configparser
import logging
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .association import TrackerConfig
from .geometry import BBox, Detection, Frame, LabeledBox, SequenceData
from .metrics import AmotaConfig, TpCriterion
from .motion import MotionModel
from .simulator import NoiseConfig, WorldConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SEED_ENV = "POINTTRACK_SEED"


class MotFormatError(ValueError):
    """Malformed record file; ``lines`` holds the offending 1-based line numbers."""

    def __init__(self, path, problems: List[Tuple[int, str]]):
        self.path = str(path)
        self.lines = [n for n, _ in problems]
        shown = "; ".join(f"line {n}: {msg}" for n, msg in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(f"{self.path}: {shown}{more}")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MotChallengeRecord:
    frame: int
    id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    conf: float
    x: float = -1.0
    y: float = -1.0
    z: float = -1.0
    off_x: Optional[float] = None
    off_y: Optional[float] = None

    @property
    def box(self) -> BBox:
        return BBox.from_ltwh(self.bb_left, self.bb_top, self.bb_width, self.bb_height)

    @property
    def pos3d(self):
        if self.x == -1 and self.y == -1 and self.z == -1:
            return None
        return (self.x, self.y, self.z)

    @property
    def has_offset(self) -> bool:
        return self.off_x is not None


def format_number(v: float) -> str:
    """Shortest text that parses back to the same float; integral values print without '.0'."""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def render_record(r: MotChallengeRecord) -> str:
    cols = [str(r.frame), str(r.id)] + [format_number(v) for v in (
        r.bb_left, r.bb_top, r.bb_width, r.bb_height, r.conf, r.x, r.y, r.z)]
    if r.off_x is not None:
        cols += [format_number(r.off_x), format_number(r.off_y)]
    return ",".join(cols)


def _as_int(text: str, name: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"{name} must be an integer, got {text!r}")
    return int(v)


def parse_record(line: str) -> MotChallengeRecord:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) not in (10, 12):
        raise ValueError(f"expected 10 or 12 fields, got {len(parts)}")
    try:
        frame = _as_int(parts[0], "frame")
        oid = _as_int(parts[1], "id")
        vals = [float(p) for p in parts[2:]]
    except ValueError as exc:
        raise ValueError(f"non-numeric field ({exc})") from None
    if frame < 1:
        raise ValueError(f"frame must be >= 1, got {frame}")
    off = (vals[8], vals[9]) if len(vals) == 10 else (None, None)
    return MotChallengeRecord(frame, oid, *vals[:8], off_x=off[0], off_y=off[1])


def read_records(path) -> List[MotChallengeRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    records, problems = [], []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(parse_record(line))
        except ValueError as exc:
            problems.append((n, str(exc)))
    if problems:
        raise MotFormatError(path, problems)
    if not records:
        log.warning("%s contains no records", path)
    return records


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records(path, records: Iterable[MotChallengeRecord]) -> None:
    atomic_write_text(path, "".join(render_record(r) + "\n" for r in records))


@dataclass
class ParsedMot:
    """Records grouped by frame: id = -1 rows as detections, the rest as labeled boxes."""

    detections: Dict[int, List[Detection]] = field(default_factory=dict)
    tracks: Dict[int, List[LabeledBox]] = field(default_factory=dict)
    records: List[MotChallengeRecord] = field(default_factory=list)

    @property
    def frames(self) -> List[int]:
        return sorted(set(self.detections) | set(self.tracks))


def parse_mot_file(path) -> ParsedMot:
    records = read_records(path)
    out = ParsedMot(records=records)
    problems = []
    for n, r in enumerate(records, 1):
        try:
            if r.id == -1:
                off = (r.off_x, r.off_y) if r.has_offset else (0.0, 0.0)
                det = Detection(r.box, r.conf, off, 0, r.pos3d)
                out.detections.setdefault(r.frame, []).append(det)
            else:
                lb = LabeledBox(r.id, r.box, r.conf, 0, r.pos3d)
                out.tracks.setdefault(r.frame, []).append(lb)
        except ValueError as exc:
            problems.append((n, str(exc)))
    if problems:
        raise MotFormatError(path, problems)
    out.detections = dict(sorted(out.detections.items()))
    out.tracks = dict(sorted(out.tracks.items()))
    return out


# KITTI tracking label / result columns (space separated, 0-based frames):
#   frame track_id type truncated occluded alpha left top right bottom
#   dim_h dim_w dim_l loc_x loc_y loc_z rotation_y [score]
# Mapping: frame + 1 -> frame; track_id -> id (-1 rows are detections);
# corner box -> ltwh; score -> conf (1 when absent); loc -> pos3d.
# DontCare rows and types outside ``classes`` are skipped; every kept row gets
# class 0 so KITTI files score against MOTChallenge files.
KITTI_FIELDS = 17


def parse_kitti_file(path, classes: Optional[Sequence[str]] = None) -> ParsedMot:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    keep = None if classes is None else {c.lower() for c in classes}
    out = ParsedMot()
    problems = []
    for n, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (KITTI_FIELDS, KITTI_FIELDS + 1):
            problems.append((n, f"expected {KITTI_FIELDS} or {KITTI_FIELDS + 1} fields, "
                                f"got {len(parts)}"))
            continue
        kind = parts[2]
        if kind == "DontCare" or (keep is not None and kind.lower() not in keep):
            continue
        try:
            frame = _as_int(parts[0], "frame") + 1
            oid = _as_int(parts[1], "track_id")
            x1, y1, x2, y2 = (float(v) for v in parts[6:10])
            pos = tuple(float(v) for v in parts[13:16])
            conf = float(parts[17]) if len(parts) > KITTI_FIELDS else 1.0
            rec = MotChallengeRecord(frame, oid, x1, y1, x2 - x1, y2 - y1, conf, *pos)
            if oid == -1:
                out.detections.setdefault(frame, []).append(
                    Detection(rec.box, conf, (0.0, 0.0), 0, pos))
            else:
                out.tracks.setdefault(frame, []).append(LabeledBox(oid, rec.box, conf, 0, pos))
            out.records.append(rec)
        except ValueError as exc:
            problems.append((n, str(exc)))
    if problems:
        raise MotFormatError(path, problems)
    if not out.records:
        log.warning("%s contains no records", path)
    out.detections = dict(sorted(out.detections.items()))
    out.tracks = dict(sorted(out.tracks.items()))
    return out


INPUT_FORMATS = ("mot", "kitti")


def parse_tracking_file(path, fmt: str = "mot") -> ParsedMot:
    if fmt == "mot":
        return parse_mot_file(path)
    if fmt == "kitti":
        return parse_kitti_file(path)
    raise ValueError(f"unknown input format {fmt!r}; expected one of {INPUT_FORMATS}")


def read_boxes(path) -> Dict[int, List[BBox]]:
    """Per-frame boxes of every record, ignoring ids and confidences (public detections)."""
    out: Dict[int, List[BBox]] = {}
    problems = []
    for n, r in enumerate(read_records(path), 1):
        try:
            out.setdefault(r.frame, []).append(r.box)
        except ValueError as exc:
            problems.append((n, str(exc)))
    if problems:
        raise MotFormatError(path, problems)
    return out


def to_sequence(tracks: Dict[int, List[LabeledBox]], frames: Optional[Sequence[int]] = None,
                image_size=(1920, 1080), framerate: float = 30.0) -> SequenceData:
    if frames is None:
        frames = sorted(tracks)
    return SequenceData(tuple(Frame(f, tuple(tracks.get(f, ()))) for f in frames),
                        image_size=image_size, framerate=framerate)


def sequence_records(seq: SequenceData) -> List[MotChallengeRecord]:
    out = []
    for f in seq.frames:
        for o in f.objects:
            l, t, w, h = o.box.ltwh
            x, y, z = o.pos3d if o.pos3d is not None else (-1.0, -1.0, -1.0)
            out.append(MotChallengeRecord(f.index, o.id, l, t, w, h, o.confidence, x, y, z))
    return out


def detection_records(dets_by_frame: Dict[int, Sequence[Detection]],
                      with_offsets: bool = True) -> List[MotChallengeRecord]:
    out = []
    for f in sorted(dets_by_frame):
        for d in dets_by_frame[f]:
            l, t, w, h = d.bbox.ltwh
            x, y, z = d.pos3d if d.pos3d is not None else (-1.0, -1.0, -1.0)
            ox, oy = d.offset if with_offsets else (None, None)
            out.append(MotChallengeRecord(f, -1, l, t, w, h, d.confidence, x, y, z, ox, oy))
    return out


def read_offsets(path) -> Dict[int, Dict[int, Tuple[float, float]]]:
    """External offsets as {frame: {det_index: (off_x, off_y)}}."""
    path = Path(path)
    out: Dict[int, Dict[int, Tuple[float, float]]] = {}
    problems = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) != 4:
                raise ValueError(f"expected 4 fields, got {len(parts)}")
            frame, idx = _as_int(parts[0], "frame"), _as_int(parts[1], "det_index")
            if frame < 1 or idx < 0:
                raise ValueError("frame must be >= 1 and det_index >= 0")
            out.setdefault(frame, {})[idx] = (float(parts[2]), float(parts[3]))
        except ValueError as exc:
            problems.append((n, str(exc)))
    if problems:
        raise MotFormatError(path, problems)
    return out


def write_offsets(path, offsets: Dict[int, Dict[int, Tuple[float, float]]]) -> None:
    lines = []
    for f in sorted(offsets):
        for i in sorted(offsets[f]):
            ox, oy = offsets[f][i]
            lines.append(f"{f},{i},{format_number(ox)},{format_number(oy)}\n")
    atomic_write_text(path, "".join(lines))


def offsets_for_frame(offsets: Dict[int, Dict[int, Tuple[float, float]]], frame: int,
                      n_dets: int) -> List[Optional[Tuple[float, float]]]:
    table = offsets.get(frame, {})
    return [table.get(i) for i in range(n_dets)]


# ---------------------------------------------------------------- configuration

PRESETS = {
    "mot": dict(theta=0.4, tau=0.5, lambda_fp=0.1, lambda_fn=0.4),
    "kitti": dict(theta=0.4, tau=0.4, lambda_fp=0.1, lambda_fn=0.2,
                  image_size=(1280, 384), framerate=10.0),
    "nuscenes_like": dict(theta=0.1, tau=0.1, lambda_fp=0.1, lambda_fn=0.4,
                          framerate=2.0, meters_per_pixel=0.05, criterion="dist3d:2.0"),
    "custom": {},
}

_TRACKER_KEYS = {"theta": float, "tau": float, "rebirth_k": int, "matcher": str, "motion": str,
                 "mode": str, "threshold_stage": str, "process_scale": float,
                 "measurement_scale": float, "velocity_scale": float, "freeze_inactive": "bool"}
_NOISE_KEYS = {"lambda_jt": float, "lambda_fp": float, "lambda_fn": float,
               "offset_noise_std": float, "conf_tp_range": "range", "conf_fp_range": "range",
               "seed": int, "shared_jitter": "bool", "fp_spread": float}
_WORLD_KEYS = {"image_size": "size", "n_objects": int, "framerate": float, "frames": int,
               "speed_range": "range", "size_range": "range", "birth_rate": float,
               "death_rate": float, "occlusion_prob": float, "occlusion_max": int,
               "frame_sample_window": int, "seed": int, "turn_rate": float, "accel_std": float,
               "meters_per_pixel": float, "stride": int}
_EVAL_KEYS = {"criterion": str, "amota": str, "downsample": int}
_OUTPUT_KEYS = {"gt": str, "detections": str, "results": str}
_META_KEYS = {"schema_version": int, "preset": str}
SCHEMA = {"meta": _META_KEYS, "tracker": _TRACKER_KEYS, "noise": _NOISE_KEYS,
          "world": _WORLD_KEYS, "eval": _EVAL_KEYS, "output": _OUTPUT_KEYS}


@dataclass(frozen=True)
class RunConfig:
    preset: str = "mot"
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    stride: int = 1
    criterion: TpCriterion = field(default_factory=TpCriterion)
    amota: Optional[AmotaConfig] = None
    outputs: Dict[str, str] = field(default_factory=dict)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, noise=replace(self.noise, seed=seed),
                       world=replace(self.world, seed=seed))


def _convert(kind, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "range":
            lo, hi = (float(x) for x in raw.split(","))
            return (lo, hi)
        if kind == "size":
            w, h = (int(x) for x in raw.replace("x", ",").split(","))
            return (w, h)
        return kind(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def preset_config(preset: str = "mot") -> RunConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    p = PRESETS[preset]
    base = RunConfig(preset=preset)
    tracker = replace(base.tracker, **{k: p[k] for k in ("theta", "tau") if k in p})
    noise = replace(base.noise, **{k: p[k] for k in ("lambda_fp", "lambda_fn") if k in p})
    # false positives are drawn just above the output threshold
    noise = replace(noise, conf_fp_range=(tracker.theta, max(tracker.theta, 0.7)))
    wkeys = {k: p[k] for k in ("image_size", "framerate", "meters_per_pixel") if k in p}
    world = replace(base.world, **wkeys)
    crit = TpCriterion.parse(p["criterion"]) if "criterion" in p else base.criterion
    return replace(base, tracker=tracker, noise=noise, world=world, criterion=crit)


def parse_config_text(text: str, source: str = "<config>",
                      seed_override: Optional[int] = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                   inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")
            values[(sec, key)] = _convert(SCHEMA[sec][key], raw, f"{source} [{sec}] {key}")
    version = values.get(("meta", "schema_version"))
    if version is None:
        raise ConfigError(f"{source}: [meta] schema_version is required")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema_version {version}")
    cfg = preset_config(values.get(("meta", "preset"), "mot"))

    def section(name):
        return {k: v for (s, k), v in values.items() if s == name}

    try:
        t = section("tracker")
        mkeys = {k: t.pop(k) for k in ("process_scale", "measurement_scale", "velocity_scale",
                                         "freeze_inactive") if k in t}
        motion = MotionModel(t.pop("motion", cfg.tracker.motion.kind), **mkeys)
        tracker = replace(cfg.tracker, motion=motion, **t)
        noise = replace(cfg.noise, **section("noise"))
        w = section("world")
        stride = w.pop("stride", 1)
        occ = (w.pop("occlusion_prob", cfg.world.occlusion[0]),
               w.pop("occlusion_max", cfg.world.occlusion[1]))
        world = replace(cfg.world, occlusion=occ, **w)
        e = section("eval")
        crit = TpCriterion.parse(e["criterion"]) if "criterion" in e else cfg.criterion
        amota_cfg = None
        if e.get("amota", "off").strip().lower() not in ("off", "none", "false", ""):
            amota_cfg = AmotaConfig.parse(e["amota"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = replace(cfg, tracker=tracker, noise=noise, world=world, stride=stride,
                  criterion=crit, amota=amota_cfg, outputs=section("output"))
    seed = seed_override
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg


def load_config(path, seed_override: Optional[int] = None) -> RunConfig:
    """Read a run configuration. Seed precedence: argument > $POINTTRACK_SEED > file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path), seed_override)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(format_number(x) for x in v)
    if isinstance(v, float):
        return format_number(v)
    return str(v)


def config_text(cfg: RunConfig) -> str:
    """Serialize ``cfg`` in the same format :func:`parse_config_text` reads."""
    t, n, w = cfg.tracker, cfg.noise, cfg.world
    m = t.motion
    sections = {
        "meta": {"schema_version": SCHEMA_VERSION, "preset": cfg.preset},
        "tracker": {"theta": t.theta, "tau": t.tau, "rebirth_k": t.rebirth_k,
                    "matcher": t.matcher, "motion": m.kind, "mode": t.mode,
                    "threshold_stage": t.threshold_stage, "process_scale": m.process_scale,
                    "measurement_scale": m.measurement_scale,
                    "velocity_scale": m.velocity_scale, "freeze_inactive": m.freeze_inactive},
        "noise": {f.name: getattr(n, f.name) for f in fields(n)},
        "world": {"image_size": w.image_size, "n_objects": w.n_objects,
                  "framerate": w.framerate, "frames": w.frames, "speed_range": w.speed_range,
                  "size_range": w.size_range, "birth_rate": w.birth_rate,
                  "death_rate": w.death_rate, "occlusion_prob": w.occlusion[0],
                  "occlusion_max": w.occlusion[1], "frame_sample_window": w.frame_sample_window,
                  "seed": w.seed, "turn_rate": w.turn_rate, "accel_std": w.accel_std,
                  "meters_per_pixel": w.meters_per_pixel, "stride": cfg.stride},
        "eval": {"criterion": str(cfg.criterion),
                 "amota": "off" if cfg.amota is None else str(cfg.amota)},
    }
    if cfg.outputs:
        sections["output"] = dict(cfg.outputs)
    out = []
    for name, kv in sections.items():
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in kv.items())
        out.append("")
    return "\n".join(out)

"""Motion models that turn (detection, track) pairs into association costs.

Four kinds are supported:

``zero``
    distance between the detection center and the last track center.
``kalman``
    distance between the detection center and the Kalman-predicted center.
``detection_offset``
    the detection is moved back by its own predicted offset before measuring.
``external_offset``
    same, but the offset comes from an external source (e.g. optical flow).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ._backend import kernels
from .geometry import BBox, Detection, Track

KINDS = ("zero", "kalman", "detection_offset", "external_offset")
_ALIASES = {"offset": "detection_offset", "none": "zero", "flow": "external_offset"}


@dataclass(frozen=True)
class MotionModel:
    kind: str = "detection_offset"
    process_scale: float = 1.0 / 20
    measurement_scale: float = 1.0 / 20
    velocity_scale: float = 10.0
    freeze_inactive: bool = True

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown motion model {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.process_scale < 0 or self.measurement_scale < 0:
            raise ValueError("noise scales must be >= 0")

    @property
    def uses_offsets(self) -> bool:
        return self.kind in ("detection_offset", "external_offset")


@dataclass(frozen=True)
class KalmanState:
    """Constant-velocity state (x, y, w, h, vx, vy, vw, vh) and its covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def center(self) -> Tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))

    @property
    def velocity(self) -> Tuple[float, float]:
        return (float(self.mean[4]), float(self.mean[5]))


_H = np.hstack([np.eye(4), np.zeros((4, 4))])
_EYE8 = np.eye(8)


def _transition(steps: float) -> np.ndarray:
    F = np.eye(8)
    F[:4, 4:] = np.eye(4) * steps
    return F


_F1 = _transition(1.0)


def _size_scale(w: float, h: float) -> float:
    return math.sqrt(max(abs(w), 1e-6) * max(abs(h), 1e-6))


def kalman_init(box: BBox, measurement_scale: float = 1.0 / 20,
                velocity_scale: float = 10.0) -> KalmanState:
    """Start a track at ``box`` with zero velocity and a wide velocity prior."""
    gm = box.geometric_mean
    mean = np.array([box.cx, box.cy, box.w, box.h, 0.0, 0.0, 0.0, 0.0])
    var = np.r_[np.full(4, (measurement_scale * gm) ** 2), np.full(4, (velocity_scale * gm) ** 2)]
    return KalmanState(mean, np.diag(var))


def kalman_predict(state: KalmanState, process_scale: float = 1.0 / 20,
                   steps: float = 1.0) -> KalmanState:
    """Advance the state ``steps`` frames under constant velocity.

    Process noise has standard deviation ``process_scale`` times the box
    geometric mean per frame on every component.
    """
    F = _F1 if steps == 1.0 else _transition(steps)
    mean = F @ state.mean
    q = (process_scale * _size_scale(state.mean[2], state.mean[3])) ** 2 * steps
    cov = F @ state.covariance @ F.T
    cov[np.diag_indices(8)] += q
    return KalmanState(mean, cov)


def _check_psd(cov: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov + tol * max(1.0, float(np.abs(cov).max())) * _EYE8)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Kalman covariance is not positive semidefinite") from exc
    return cov


def kalman_update(state: KalmanState, obs: BBox, measurement_scale: float = 1.0 / 20) -> KalmanState:
    """Linear measurement update with an observed (x, y, w, h)."""
    z = np.array([obs.cx, obs.cy, obs.w, obs.h])
    P = state.covariance
    r = (measurement_scale * obs.geometric_mean) ** 2
    S = P[:4, :4] + r * np.eye(4)
    PHt = P[:, :4]
    try:
        K = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError:
        K = PHt @ np.linalg.pinv(S)
    if not np.isfinite(K).all():
        K = PHt @ np.linalg.pinv(S)
    mean = state.mean + K @ (z - state.mean[:4])
    IKH = _EYE8 - K @ _H
    cov = IKH @ P @ IKH.T + r * (K @ K.T)
    return KalmanState(mean, _check_psd(cov))


def detection_point(det: Detection, model: MotionModel,
                    external_offset: Optional[Tuple[float, float]] = None) -> Tuple[float, float]:
    """Where the detection is compared against tracks."""
    cx, cy = det.center
    if model.kind == "detection_offset":
        ox, oy = det.offset
        return (cx - ox, cy - oy)
    if model.kind == "external_offset":
        ox, oy = external_offset if external_offset is not None else (0.0, 0.0)
        return (cx - ox, cy - oy)
    return (cx, cy)


def track_point(trk: Track, model: MotionModel) -> Tuple[float, float]:
    """Where the track is compared against detections.

    For the Kalman model the track's ``motion_state`` must already be
    propagated to the frame being associated.
    """
    if model.kind == "kalman":
        if not isinstance(trk.motion_state, KalmanState):
            raise ValueError(f"track {trk.id} has no Kalman state")
        return trk.motion_state.center
    return trk.center


def association_cost(det: Detection, trk: Track, model: MotionModel,
                     external_offset: Optional[Tuple[float, float]] = None) -> float:
    dx, dy = detection_point(det, model, external_offset)
    tx, ty = track_point(trk, model)
    return math.hypot(dx - tx, dy - ty)


def cost_arrays(dets: Sequence[Detection], tracks: Sequence[Track], model: MotionModel,
                external_offsets: Optional[Sequence[Optional[Tuple[float, float]]]] = None):
    """Vectorised cost and gating matrices, both of shape (len(dets), len(tracks))."""
    n, m = len(dets), len(tracks)
    if n == 0 or m == 0:
        return np.zeros((n, m)), np.zeros((n, m))
    if external_offsets is None:
        external_offsets = [None] * n
    kind = model.kind
    dx, dy, dg = [], [], []
    for d, e in zip(dets, external_offsets):
        b = d.box
        if type(b) is BBox:
            x, y, g = b.cx, b.cy, math.sqrt(b.w * b.h)
        else:
            (x, y), g = d.center, d.geometric_mean
        if kind == "detection_offset":
            x -= d.offset[0]
            y -= d.offset[1]
        elif kind == "external_offset" and e is not None:
            x -= e[0]
            y -= e[1]
        dx.append(x)
        dy.append(y)
        dg.append(g)
    tx, ty, tg = [], [], []
    for t in tracks:
        x, y = track_point(t, model) if kind == "kalman" else (t.box.cx, t.box.cy)
        tx.append(x)
        ty.append(y)
        tg.append(math.sqrt(t.box.w * t.box.h))
    return kernels.point_costs(dx, dy, dg, tx, ty, tg)

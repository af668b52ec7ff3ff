"""Training-objective kernels with analytic gradients.

Losses are returned in the non-negative (minimized) sign convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .heatmap import DenseMap

CLAMP_EPS = 1e-6


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 2.0
    beta: float = 4.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("focal exponents must be >= 0")


@dataclass(frozen=True)
class RegressionTarget:
    """Sparse supervision: one k-vector target per grid location (x, y)."""

    locations: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.int64).reshape(-1, 2)
        tgt = np.asarray(self.targets, dtype=np.float64)
        if tgt.ndim == 1:
            tgt = tgt.reshape(len(loc), -1) if len(loc) else tgt.reshape(0, 0)
        if len(loc) != len(tgt):
            raise ValueError("locations and targets must have equal length")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "targets", tgt)

    @property
    def count(self) -> int:
        return len(self.locations)


@dataclass(frozen=True)
class LossWeights:
    # implementer-chosen defaults; no values are published for these
    focal: float = 1.0
    size: float = 0.1
    offset: float = 1.0


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, DenseMap) else np.asarray(m, dtype=np.float64)


def focal_loss(pred, target, params: FocalParams = FocalParams(),
               n_objects: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """Penalty-reduced pixel-wise focal loss and its gradient w.r.t. ``pred``.

    Cells with target exactly 1 are positives; every other cell is a
    negative down-weighted by (1 - Y)^beta. Predictions are clamped to
    [1e-6, 1 - 1e-6]; the gradient is zero where the clamp is active.
    ``n_objects`` defaults to the number of positive cells and is floored at 1.
    """
    p = _values(pred)
    y = _values(target)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    if np.isnan(p).any() or np.isnan(y).any():
        raise ValueError("NaN in focal loss inputs")
    a, b = params.alpha, params.beta
    pos = y == 1.0
    if n_objects is None:
        n_objects = int(pos.sum())
    norm = float(max(n_objects, 1))

    pc = np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    inside = (p >= CLAMP_EPS) & (p <= 1.0 - CLAMP_EPS)
    log_p = np.log(pc)
    log_1p = np.log1p(-pc)
    one_m = 1.0 - pc
    neg_w = np.power(1.0 - y, b)

    pos_term = np.power(one_m, a) * log_p
    neg_term = neg_w * np.power(pc, a) * log_1p
    loss = -float(np.where(pos, pos_term, neg_term).sum()) / norm

    # d/dp of (1-p)^a log p  and  p^a log(1-p)
    if a == 0:
        d_pos = 1.0 / pc
        d_neg = -1.0 / one_m
    else:
        d_pos = -a * np.power(one_m, a - 1) * log_p + np.power(one_m, a) / pc
        d_neg = a * np.power(pc, a - 1) * log_1p - np.power(pc, a) / one_m
    grad = -np.where(pos, d_pos, neg_w * d_neg) / norm
    grad = np.where(inside, grad, 0.0)
    return loss, grad


def masked_l1_loss(pred, tgt: RegressionTarget) -> Tuple[float, np.ndarray]:
    """Mean over targets of the channel-summed L1 error at each supervised cell.

    Returns the loss and a dense gradient (zero away from supervised cells).
    """
    p = _values(pred)
    if p.ndim == 2:
        p = p[:, :, None]
    h, w, k = p.shape
    grad = np.zeros_like(p)
    n = tgt.count
    if n == 0:
        return 0.0, grad
    if tgt.targets.shape[1] != k:
        raise ValueError(f"target length {tgt.targets.shape[1]} != channels {k}")
    xs, ys = tgt.locations[:, 0], tgt.locations[:, 1]
    if (xs < 0).any() or (xs >= w).any() or (ys < 0).any() or (ys >= h).any():
        raise ValueError("regression location outside the grid")
    resid = p[ys, xs, :] - tgt.targets
    loss = float(np.abs(resid).sum()) / n
    np.add.at(grad, (ys, xs), np.sign(resid) / n)
    return loss, grad


def size_loss(pred, tgt: RegressionTarget):
    """L1 on the 2-channel size map."""
    return masked_l1_loss(pred, tgt)


def offset_loss(pred, tgt: RegressionTarget):
    """L1 on the 2-channel tracking-offset map; see :func:`offset_targets`."""
    return masked_l1_loss(pred, tgt)


def amodal_size_loss(pred, tgt: RegressionTarget):
    """L1 on the 4-channel (top, left, bottom, right) border-distance map."""
    return masked_l1_loss(pred, tgt)


def center3d_offset_loss(pred, tgt: RegressionTarget):
    """L1 on the 2-channel 2D-center to projected-3D-center offset map."""
    return masked_l1_loss(pred, tgt)


def offset_targets(cur_centers: Sequence[Tuple[float, float]],
                   prev_centers: Sequence[Tuple[float, float]],
                   downsample: int = 4) -> RegressionTarget:
    """Tracking-offset supervision from matched image-space centers.

    Supervised at the current center's grid cell with target
    prev - cur (in grid units). Note the sign: this is the negation of
    ``Detection.offset``, which stores cur - prev.
    """
    cur = np.asarray(cur_centers, dtype=np.float64).reshape(-1, 2) / downsample
    prev = np.asarray(prev_centers, dtype=np.float64).reshape(-1, 2) / downsample
    loc = np.floor(cur).astype(np.int64)
    return RegressionTarget(loc, (prev - cur).reshape(-1, 2))


def total_loss(parts: Sequence[float], weights: LossWeights = LossWeights()) -> float:
    """Weighted sum of (focal, size, offset) loss values."""
    f, s, o = parts
    return weights.focal * f + weights.size * s + weights.offset * o

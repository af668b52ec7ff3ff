"""Gaussian point rendering on the down-sampled grid and peak extraction."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from ._backend import kernels
from .geometry import Track

log = logging.getLogger(__name__)

DEFAULT_DOWNSAMPLE = 4
SIGMA_MIN = 0.5
DEFAULT_MIN_OVERLAP = 0.7


@dataclass(frozen=True)
class DenseMap:
    """A (height, width, channels) field over the output grid."""

    values: np.ndarray
    downsample: int = DEFAULT_DOWNSAMPLE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] < 1:
            raise ValueError(f"expected (h, w, c) values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1, downsample: int = DEFAULT_DOWNSAMPLE):
        return cls(np.zeros((height, width, channels)), downsample)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def channel(self, c: int = 0) -> np.ndarray:
        return self.values[:, :, c]

    def to_text(self, channel: int = 0, fmt: str = "{:.6f}") -> str:
        """Row-major, space-separated dump of one channel."""
        rows = (" ".join(fmt.format(v) for v in row) for row in self.channel(channel))
        return "\n".join(rows) + "\n"


def grid_shape(image_size: Tuple[int, int], downsample: int = DEFAULT_DOWNSAMPLE) -> Tuple[int, int]:
    """(width, height) of the output grid for an image of (W, H) pixels."""
    W, H = image_size
    return (math.ceil(W / downsample), math.ceil(H / downsample))


@dataclass(frozen=True, slots=True)
class GaussianSpec:
    """A point to render, in grid cells."""

    cx: float
    cy: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError("center must be finite")


def _translate_limit(w, h, o):
    # (w-r)(h-r) / (2wh - (w-r)(h-r)) >= o
    b = w + h
    c = w * h * (1 - o) / (1 + o)
    return (b - math.sqrt(b * b - 4 * c)) / 2


def _shrink_limit(w, h, o):
    # (w-2r)(h-2r) / wh >= o
    b = w + h
    c = w * h * (1 - o)
    return (2 * b - math.sqrt(4 * b * b - 16 * c)) / 8


def _grow_limit(w, h, o):
    # wh / ((w+2r)(h+2r)) >= o
    b = w + h
    return (-2 * o * b + math.sqrt(4 * o * o * b * b + 16 * o * (1 - o) * w * h)) / (8 * o)


def gaussian_radius(size: Tuple[float, float], min_overlap: float = DEFAULT_MIN_OVERLAP) -> int:
    """Largest integer corner perturbation keeping IoU >= min_overlap.

    Three perturbations of magnitude r are considered, as in CornerNet:
    translating the box by (r, r), moving both corners inward by r, and
    moving both corners outward by r. The radius is the largest integer r
    for which all three keep the overlap.
    """
    w, h = size
    if not (0 < min_overlap < 1):
        raise ValueError("min_overlap must be in (0, 1)")
    if w <= 0 or h <= 0:
        return 0
    r = min(_translate_limit(w, h, min_overlap), _shrink_limit(w, h, min_overlap),
            _grow_limit(w, h, min_overlap))
    return max(0, int(math.floor(r + 1e-9)))


def gaussian_sigma(size: Tuple[float, float], min_overlap: float = DEFAULT_MIN_OVERLAP,
                   sigma_min: float = SIGMA_MIN) -> float:
    """Kernel width for an object of ``size`` grid cells: radius / 3, floored at sigma_min."""
    return max(gaussian_radius(size, min_overlap) / 3.0, sigma_min)


def _in_grid(x: float, y: float, width: int, height: int) -> bool:
    return -0.5 <= x < width - 0.5 and -0.5 <= y < height - 0.5


def render_counted(points: Iterable[GaussianSpec], grid: Tuple[int, int],
                   downsample: int = DEFAULT_DOWNSAMPLE) -> Tuple[DenseMap, int]:
    """Like :func:`render` but also returns how many points fell outside the grid."""
    width, height = grid
    if width <= 0 or height <= 0:
        raise ValueError("grid must be positive")
    kept, skipped = [], 0
    for p in points:
        if _in_grid(p.cx, p.cy, width, height):
            kept.append(p)
        else:
            skipped += 1
    if skipped:
        log.debug("render skipped %d out-of-grid points", skipped)
    if not kept:
        return DenseMap.zeros(width, height, 1, downsample), skipped
    centers = np.array([(p.cx, p.cy) for p in kept], dtype=np.float64)
    sigmas = np.array([p.sigma for p in kept], dtype=np.float64)
    values = kernels.render_max(centers, sigmas, width, height)
    return DenseMap(values, downsample), skipped


def render(points: Iterable[GaussianSpec], grid: Tuple[int, int],
           downsample: int = DEFAULT_DOWNSAMPLE) -> DenseMap:
    """Render the max over Gaussian peaks on a (width, height) grid.

    Centers are real-valued; the map is evaluated at integer cells, so a
    value of exactly 1 appears only where a center sits on a cell.
    """
    return render_counted(points, grid, downsample)[0]


def specs_from_tracks(tracks: Iterable[Track], downsample: int = DEFAULT_DOWNSAMPLE,
                      min_overlap: float = DEFAULT_MIN_OVERLAP) -> List[GaussianSpec]:
    out = []
    for t in tracks:
        w, h = t.box.w / downsample, t.box.h / downsample
        out.append(GaussianSpec(t.box.cx / downsample, t.box.cy / downsample,
                                gaussian_sigma((w, h), min_overlap)))
    return out


def render_prior(tracks: Sequence[Track], tau: float, grid: Tuple[int, int],
                 downsample: int = DEFAULT_DOWNSAMPLE) -> DenseMap:
    """Class-agnostic prior heatmap of active tracks with confidence > tau."""
    if not (0.0 <= tau <= 1.0):
        raise ValueError("tau must be in [0, 1]")
    chosen = [t for t in tracks if t.active and t.confidence > tau]
    return render(specs_from_tracks(chosen, downsample), grid, downsample)


@dataclass(frozen=True, slots=True)
class Peak:
    x: int
    y: int
    confidence: float


def _collapse_plateaus(mask: np.ndarray, hm: np.ndarray) -> List[Tuple[int, int]]:
    """One representative cell per 8-connected group of equal-valued candidates.

    The representative is the smallest (row, col) of its group.
    """
    rows, cols = np.nonzero(mask)
    cells = sorted(zip(rows.tolist(), cols.tolist()))
    cand = set(cells)
    seen = set()
    reps = []
    for cell in cells:
        if cell in seen:
            continue
        reps.append(cell)
        v = hm[cell]
        stack = [cell]
        seen.add(cell)
        while stack:
            r, c = stack.pop()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    nb = (r + dr, c + dc)
                    if nb in cand and nb not in seen and hm[nb] == v:
                        seen.add(nb)
                        stack.append(nb)
    return reps


def extract_peaks(hm, theta: float, max_n: int = 100, channel: int = 0) -> List[Peak]:
    """Cells above theta that are >= their 3x3 neighbourhood, strongest first.

    Plateaus of equal value yield one peak at their smallest (row, col).
    Equal peak values are ordered by (row, col).
    """
    if not (0.0 <= theta <= 1.0):
        raise ValueError("theta must be in [0, 1]")
    a = hm.channel(channel) if isinstance(hm, DenseMap) else np.asarray(hm, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("extract_peaks needs a single-channel map")
    a = np.ascontiguousarray(a, dtype=np.float64)
    mask = kernels.peak_mask(a, theta)
    reps = _collapse_plateaus(mask, a)
    reps.sort(key=lambda rc: (-a[rc], rc[0], rc[1]))
    return [Peak(c, r, float(a[r, c])) for r, c in reps[:max_n]]

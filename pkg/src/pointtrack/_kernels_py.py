"""Pure numpy implementations of the hot loops.

Signatures mirror ``_kernels.pyx`` exactly; ``_backend`` picks one at import.
"""
import numpy as np


def greedy_assign(cost, gate):
    """Greedy matching in row order.

    Row i takes the lowest-cost column not yet taken (lowest index on ties)
    and keeps it only if ``cost[i, j] < gate[i, j]``. Returns the matched
    column per row, -1 when unmatched.
    """
    cost = np.asarray(cost, dtype=np.float64)
    gate = np.asarray(gate, dtype=np.float64)
    n, m = cost.shape
    out = np.full(n, -1, dtype=np.int64)
    if m == 0:
        return out
    work = cost.copy()
    taken = 0
    for i in range(n):
        if taken == m:
            break
        row = work[i]
        j = int(np.argmin(row))
        if row[j] == np.inf:
            continue
        if cost[i, j] < gate[i, j]:
            out[i] = j
            work[:, j] = np.inf
            taken += 1
    return out


def render_max(centers, sigmas, width, height):
    """max_i exp(-|p_i - q|^2 / (2 sigma_i^2)) on the integer grid, shape (height, width)."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    sigmas = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    out = np.zeros((height, width), dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for (cx, cy), s in zip(centers, sigmas):
        gx = np.exp(-((xs - cx) ** 2) / (2.0 * s * s))
        gy = np.exp(-((ys - cy) ** 2) / (2.0 * s * s))
        np.maximum(out, gy[:, None] * gx[None, :], out=out)
    return out


def peak_mask(hm, thresh):
    """Cells strictly above ``thresh`` that are >= all existing 8-neighbours."""
    hm = np.asarray(hm, dtype=np.float64)
    h, w = hm.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = hm
    mask = hm > thresh
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            mask &= hm >= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return mask


def iou_matrix(a, b):
    """Pairwise IoU of corner boxes a (N, 4) and b (M, 4)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(inter > 0, inter / union, 0.0)
    return np.minimum(out, 1.0)


def point_costs(dx, dy, dg, tx, ty, tg):
    """Pairwise point distances and min-size gates, both (N, M)."""
    dx, dy, dg, tx, ty, tg = (np.asarray(v, dtype=np.float64).reshape(-1)
                              for v in (dx, dy, dg, tx, ty, tg))
    cost = np.hypot(dx[:, None] - tx[None, :], dy[:, None] - ty[None, :])
    gate = np.minimum(dg[:, None], tg[None, :])
    return cost, gate

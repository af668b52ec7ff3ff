"""Both kernel backends agree with each other and with direct definitions."""
import math

import numpy as np
import pytest

from pointtrack.geometry import BBox, iou

from conftest import BACKENDS


def _greedy_reference(cost, gate):
    n, m = cost.shape
    free = set(range(m))
    out = []
    for i in range(n):
        if not free:
            out.append(-1)
            continue
        j = min(sorted(free), key=lambda c: cost[i, c])
        if cost[i, j] < gate[i, j]:
            out.append(j)
            free.discard(j)
        else:
            out.append(-1)
    return out


def test_greedy_assign_matches_reference(kern):
    rng = np.random.default_rng(1)
    for _ in range(300):
        n, m = rng.integers(0, 8, 2)
        cost = rng.uniform(0, 10, (n, m))
        gate = rng.uniform(0, 10, (n, m))
        assert kern.greedy_assign(cost, gate).tolist() == _greedy_reference(cost, gate)


def test_greedy_assign_ties_take_lowest_column(kern):
    cost = np.array([[1.0, 1.0, 1.0]])
    assert kern.greedy_assign(cost, np.full((1, 3), 2.0)).tolist() == [0]


def test_render_max_matches_definition(kern):
    rng = np.random.default_rng(2)
    for _ in range(20):
        k = rng.integers(1, 5)
        c = rng.uniform(-2, 20, (k, 2))
        s = rng.uniform(0.5, 4, k)
        out = kern.render_max(c, s, 17, 13)
        ys, xs = np.mgrid[0:13, 0:17]
        ref = np.max([np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * si ** 2))
                      for (cx, cy), si in zip(c, s)], axis=0)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-300)


def test_peak_mask_matches_definition(kern):
    rng = np.random.default_rng(3)
    for _ in range(50):
        hm = rng.integers(0, 4, (6, 7)).astype(float) / 4
        mask = kern.peak_mask(hm, 0.2)
        for y in range(6):
            for x in range(7):
                nb = [hm[yy, xx] for yy in range(max(0, y - 1), min(6, y + 2))
                      for xx in range(max(0, x - 1), min(7, x + 2))]
                assert bool(mask[y, x]) == (hm[y, x] > 0.2 and hm[y, x] >= max(nb))


def test_iou_matrix_matches_scalar_iou(kern):
    rng = np.random.default_rng(4)
    a = [BBox(*rng.uniform(0, 50, 2), *rng.uniform(1, 20, 2)) for _ in range(9)]
    b = [BBox(*rng.uniform(0, 50, 2), *rng.uniform(1, 20, 2)) for _ in range(7)]
    m = kern.iou_matrix(np.array([x.corners for x in a]), np.array([x.corners for x in b]))
    ref = np.array([[iou(x, y) for y in b] for x in a])
    np.testing.assert_allclose(m, ref, rtol=1e-12, atol=1e-15)
    assert kern.iou_matrix(np.zeros((0, 4)), np.zeros((3, 4))).shape == (0, 3)


def test_point_costs_match_math_hypot(kern):
    rng = np.random.default_rng(5)
    dx, dy, dg = rng.normal(size=(3, 6))
    tx, ty, tg = rng.normal(size=(3, 4))
    cost, gate = kern.point_costs(dx, dy, dg, tx, ty, tg)
    for i in range(6):
        for j in range(4):
            assert cost[i, j] == math.hypot(dx[i] - tx[j], dy[i] - ty[j])
            assert gate[i, j] == min(dg[i], tg[j])


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_backends_identical_on_random_inputs():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = np.random.default_rng(6)
    for _ in range(50):
        cost = rng.uniform(0, 5, (12, 9))
        gate = rng.uniform(0, 5, (12, 9))
        assert (py.greedy_assign(cost, gate) == cy.greedy_assign(cost, gate)).all()
        c = rng.uniform(0, 30, (4, 2))
        s = rng.uniform(0.5, 3, 4)
        np.testing.assert_array_equal(py.peak_mask(py.render_max(c, s, 32, 24), 0.1),
                                      cy.peak_mask(cy.render_max(c, s, 32, 24), 0.1))

import math

import numpy as np
import pytest

from pointtrack.geometry import BBox, Frame, LabeledBox, SequenceData, sequence_from_lists
from pointtrack.metrics import (AmotaConfig, TpCriterion, align_to, amota, amota_by_class,
                                clear_mot, combine_reports, idf1, mota_r)

from oracles import amota_bruteforce, clear_counts


def _seq(frames, conf=None):
    """frames: list of lists of (id, (cx, cy, w, h)[, conf])."""
    out = []
    for objs in frames:
        out.append([LabeledBox(o[0], BBox(*o[1]), o[2] if len(o) > 2 else 1.0) for o in objs])
    return sequence_from_lists(out)


def _random_case(rng):
    n_obj = int(rng.integers(1, 5))
    n_frames = int(rng.integers(1, 6))
    base = rng.uniform(0, 30, (n_obj, 2))
    gt, pred = [], []
    pid_map = {i: int(i) for i in range(n_obj)}
    for _ in range(n_frames):
        base = base + rng.normal(0, 3, base.shape)
        g = [(i + 1, (float(x), float(y), 10.0, 10.0)) for i, (x, y) in enumerate(base)
             if rng.random() > 0.15]
        if rng.random() < 0.3:
            a, b = rng.integers(0, n_obj, 2)
            pid_map[a], pid_map[b] = pid_map[b], pid_map[a]
        p = []
        for i, (x, y) in enumerate(base):
            if rng.random() < 0.8:
                j = rng.normal(0, 2.5, 2)
                p.append((100 + pid_map[i], (float(x + j[0]), float(y + j[1]), 10.0, 10.0)))
        if rng.random() < 0.3:
            p.append((200 + int(rng.integers(0, 3)), (*map(float, rng.uniform(0, 30, 2)), 10.0, 10.0)))
        p = list({pid: box for pid, box in p}.items())
        gt.append(g)
        pred.append(p)
    return gt, pred


def test_clear_mot_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    switches = 0
    for _ in range(1000):
        gt, pred = _random_case(rng)
        rep = clear_mot(_seq(gt), _seq(pred))
        tp, fp, fn, sw = clear_counts(gt, pred)
        assert (rep.tp, rep.fp, rep.fn, rep.idsw) == (tp, fp, fn, sw)
        switches += sw
    assert switches > 50


def test_scripted_mota_point_seven():
    def box(i):
        return (50.0 * i, 0.0, 20.0, 20.0)

    gt = [[(i, box(i)) for i in range(1, 5)] for _ in range(5)]
    pred = [[(i, box(i)) for i in range(1, 5)] for _ in range(5)]
    for f, i in ((0, 2), (2, 3), (4, 4)):  # three misses
        pred[f] = [p for p in pred[f] if p[0] != i]
    pred[1].append((90, (500.0, 500.0, 20.0, 20.0)))  # two false positives
    pred[3].append((91, (900.0, 500.0, 20.0, 20.0)))
    for f in (3, 4):  # object 1 changes id once
        pred[f] = [(77 if p[0] == 1 else p[0], p[1]) for p in pred[f]]
    rep = clear_mot(_seq(gt), _seq(pred))
    assert (rep.gt_total, rep.fp, rep.fn, rep.idsw) == (20, 2, 3, 1)
    assert rep.mota == 0.7


def test_carry_over_prevents_switch_to_closer_box():
    gt = [[(1, (0, 0, 10, 10))], [(1, (0, 0, 10, 10))]]
    pred = [[(5, (2, 0, 10, 10))], [(5, (2, 0, 10, 10)), (6, (0, 0, 10, 10))]]
    rep = clear_mot(_seq(gt), _seq(pred))
    assert (rep.tp, rep.fp, rep.idsw) == (2, 1, 0)


def test_switch_counted_after_gap():
    gt = [[(1, (0, 0, 10, 10))]] * 3
    pred = [[(5, (0, 0, 10, 10))], [], [(6, (0, 0, 10, 10))]]
    rep = clear_mot(_seq(gt), _seq(pred))
    assert (rep.idsw, rep.frag, rep.fn) == (1, 1, 1)


def test_mt_ml_and_motp():
    gt = [[(1, (0, 0, 10, 10)), (2, (50, 0, 10, 10))] for _ in range(10)]
    pred = [[(1, (0, 0, 10, 10))] + ([(2, (50, 0, 10, 10))] if f < 1 else []) for f in range(10)]
    rep = clear_mot(_seq(gt), _seq(pred))
    assert rep.mt == 0.5 and rep.ml == 0.5
    assert rep.motp == 1.0
    assert rep.fn_rate == pytest.approx(9 / 20)


def test_frames_must_align():
    a = _seq([[(1, (0, 0, 10, 10))]])
    b = SequenceData((Frame(2, ()),))
    with pytest.raises(ValueError):
        clear_mot(a, b)
    with pytest.raises(ValueError):
        align_to(a, b)
    assert align_to(_seq([[], []]), a).frame_indices == (1, 2)


def test_combine_reports_sums_ledgers():
    gt = _seq([[(1, (0, 0, 10, 10))]] * 2)
    rep = clear_mot(gt, _seq([[(1, (0, 0, 10, 10))], []]))
    tot = combine_reports([rep, rep])
    assert (tot.gt_total, tot.fn, tot.tp) == (4, 2, 2)
    assert tot.mota == rep.mota


def test_dist3d_criterion():
    def lb(i, x, pos):
        return LabeledBox(i, BBox(x, 0, 10, 10), 1.0, 0, pos)

    gt = sequence_from_lists([[lb(1, 0, (0.0, 0.0, 0.0))]])
    near = sequence_from_lists([[lb(3, 500, (1.9, 0.0, 9.0))]])
    far = sequence_from_lists([[lb(3, 0, (2.1, 0.0, 0.0))]])
    crit = TpCriterion.parse("dist3d:2.0")
    assert clear_mot(gt, near, crit).tp == 1
    assert clear_mot(gt, far, crit).tp == 0
    with pytest.raises(ValueError):
        clear_mot(gt, _seq([[(1, (0, 0, 10, 10))]]), crit)


def test_class_mismatch_is_never_a_match():
    gt = sequence_from_lists([[LabeledBox(1, BBox(0, 0, 10, 10), class_id=0)]])
    pr = sequence_from_lists([[LabeledBox(1, BBox(0, 0, 10, 10), class_id=1)]])
    assert clear_mot(gt, pr).tp == 0


def test_criterion_parsing():
    assert TpCriterion.parse("iou:0.3") == TpCriterion("iou", 0.3)
    assert str(TpCriterion.parse("dist3d:2")) == "dist3d:2"
    for bad in ("iou:1.5", "dist3d:-1", "area:3", "iou:x"):
        with pytest.raises(ValueError):
            TpCriterion.parse(bad)


def test_idf1_values():
    gt = _seq([[(1, (0, 0, 10, 10))]] * 4)
    assert idf1(gt, gt) == 1.0
    split = _seq([[(5, (0, 0, 10, 10))]] * 2 + [[(6, (0, 0, 10, 10))]] * 2)
    assert idf1(gt, split) == pytest.approx(0.5)
    assert idf1(gt, _seq([[]] * 4)) == 0.0
    assert idf1(_seq([[]]), _seq([[]])) == 1.0


@pytest.mark.parametrize("n,alpha", [(2, 1.0), (3, 1.0), (40, 0.2), (40, 1.0), (11, 0.5)])
def test_amota_perfect_tracker(n, alpha):
    gt = _seq([[(1, (0, 0, 10, 10)), (2, (40, 0, 10, 10))]] * 6)
    res = amota(gt, gt, cfg=AmotaConfig(n, alpha))
    assert res.amota == 1.0
    assert all(v == 1.0 for v in res.per_r)
    assert res.amotp == 0.0


def test_amota_zero_predictions():
    gt = _seq([[(1, (0, 0, 10, 10))]] * 3)
    res = amota(gt, _seq([[]] * 3))
    assert res.amota == 0.0 and math.isnan(res.amotp)
    with pytest.raises(ValueError):
        amota(_seq([[]]), _seq([[]]))


def test_amota_single_object_bruteforce():
    gt = [[(1, (0.0, 0.0, 10.0, 10.0))] for _ in range(10)]
    pred = [[(1, (0.0, 0.0, 10.0, 10.0), 0.9)] for _ in range(10)]
    pred[2].append((2, (300.0, 0.0, 10.0, 10.0), 0.9))
    pred[7].append((3, (600.0, 0.0, 10.0, 10.0), 0.9))
    want, per_r = amota_bruteforce(gt, pred, n=3, alpha=1.0)
    res = amota(_seq(gt), _seq(pred), cfg=AmotaConfig(3, 1.0))
    assert abs(res.amota - want) < 1e-12
    assert res.per_r == pytest.approx(per_r, abs=1e-12)
    assert want == pytest.approx(0.8)


def _with_conf(rng, frames):
    return [[(i, b, float(rng.choice([0.2, 0.4, 0.6, 0.8, 1.0]))) for i, b in f] for f in frames]


def test_amota_exhaustive_matches_bruteforce_on_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(150):
        gt, pred = _random_case(rng)
        if not sum(len(f) for f in gt):
            continue
        pc = _with_conf(rng, pred)
        for n, alpha in ((5, 1.0), (6, 0.2)):
            want, _ = amota_bruteforce(gt, pc, n, alpha)
            got = amota(_seq(gt), _seq(pc), cfg=AmotaConfig(n, alpha, exhaustive=True))
            assert abs(got.amota - want) < 1e-12


def test_amota_bisection_matches_when_recall_is_monotone():
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(150):
        gt, pred = _random_case(rng)
        if not sum(len(f) for f in gt):
            continue
        pc = _with_conf(rng, pred)
        confs = sorted({c for f in pc for *_, c in f}, reverse=True)
        tps = [clear_counts(gt, [[(i, b) for i, b, cc in f if cc >= c] for f in pc])[0]
               for c in confs]
        if any(a > b for a, b in zip(tps, tps[1:])):
            continue
        checked += 1
        want, _ = amota_bruteforce(gt, pc, 7, 0.2)
        assert abs(amota(_seq(gt), _seq(pc), cfg=AmotaConfig(7, 0.2)).amota - want) < 1e-12
    assert checked > 100


def test_amota_invariant_to_monotone_confidence_transform():
    rng = np.random.default_rng(3)
    gt, pred = _random_case(rng)
    while not sum(len(f) for f in gt) or not sum(len(f) for f in pred):
        gt, pred = _random_case(rng)
    pc = _with_conf(rng, pred)
    squashed = [[(i, b, c ** 3 / 2) for i, b, c in f] for f in pc]
    a = amota(_seq(gt), _seq(pc), cfg=AmotaConfig(10, 0.2))
    b = amota(_seq(gt), _seq(squashed), cfg=AmotaConfig(10, 0.2))
    assert a.amota == b.amota and a.per_r == b.per_r


def test_mota_r_formula():
    assert mota_r(0, 0, 5, 0.5, 10, 1.0) == 1.0
    assert mota_r(1, 1, 5, 0.5, 10, 1.0) == pytest.approx(1 - 2 / 5)
    assert mota_r(100, 0, 0, 0.5, 10, 1.0) == 0.0
    assert mota_r(0, 0, 0, 0.0, 10, 1.0) == 0.0


def test_amota_config_parse():
    cfg = AmotaConfig.parse("n=11, alpha=1,exhaustive=1")
    assert (cfg.n, cfg.alpha, cfg.exhaustive) == (11, 1.0, True)
    assert cfg.recall_grid[0] == 0.1 and cfg.recall_grid[-1] == 1.0
    assert AmotaConfig.parse(str(cfg)) == cfg
    for bad in ("n=1", "alpha=0", "beta=2", "n"):
        with pytest.raises(ValueError):
            AmotaConfig.parse(bad)


def test_amota_by_class_averages():
    def lb(i, c):
        return LabeledBox(i, BBox(50.0 * i, 0, 10, 10), 1.0, c)

    gt = sequence_from_lists([[lb(1, 0), lb(2, 1)]] * 3)
    pred = sequence_from_lists([[lb(1, 0)]] * 3)
    assert amota_by_class(gt, pred) == pytest.approx(0.5)

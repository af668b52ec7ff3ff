import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointtrack.association import (Tracker, TrackerConfig, TrackerState, greedy_assign,
                                    greedy_match, hungarian_match, step, step_public,
                                    track_sequence)
from pointtrack.geometry import BBox, Detection, Track
from pointtrack.motion import MotionModel, cost_arrays

from oracles import greedy_replay, min_cost_matching


def _gated_instance(rng):
    n, m = rng.integers(0, 8, 2)
    cost = rng.uniform(0, 10, (n, m))
    gate = np.where(rng.random((n, m)) < 0.7, rng.uniform(0, 12, (n, m)), 0.0)
    return cost, gate


def test_hungarian_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(500):
        cost, gate = _gated_instance(rng)
        pairs = hungarian_match(cost, gate)
        assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
        assert all(cost[i, j] < gate[i, j] for i, j in pairs)
        size, total = min_cost_matching(cost, gate)
        assert len(pairs) == size
        assert sum(cost[i, j] for i, j in pairs) == pytest.approx(total, rel=1e-12, abs=1e-12)


def test_hungarian_edge_cases():
    assert hungarian_match(np.zeros((0, 3)), np.zeros((0, 3))) == []
    assert hungarian_match(np.ones((2, 2)), np.zeros((2, 2))) == []
    with pytest.raises(ValueError):
        hungarian_match(np.array([[np.inf]]), np.array([[1.0]]))


def test_hungarian_vs_greedy_property():
    rng = np.random.default_rng(1)
    for _ in range(300):
        cost, gate = _gated_instance(rng)
        h = hungarian_match(cost, gate)
        g = greedy_assign(cost, gate).matches
        assert len(h) >= len(g)
        if len(h) == len(g):
            assert sum(cost[p] for p in h) <= sum(cost[p] for p in g) + 1e-12


def _random_scene(rng):
    n_t, n_d = rng.integers(0, 8, 2)
    tracks = [Track(int(i) + 1, BBox(*rng.uniform(0, 200, 2), *rng.uniform(10, 60, 2)), 0.9)
              for i in range(n_t)]
    dets = []
    for _ in range(n_d):
        if tracks and rng.random() < 0.7:
            t = tracks[rng.integers(len(tracks))]
            c = np.array(t.center) + rng.normal(0, 15, 2)
        else:
            c = rng.uniform(0, 200, 2)
        dets.append(Detection(BBox(*c, *rng.uniform(10, 60, 2)), float(rng.uniform(0.4, 1.0)),
                              tuple(rng.normal(0, 5, 2))))
    return tracks, dets


def test_greedy_step_matches_algorithm_replay():
    rng = np.random.default_rng(2)
    cfg = TrackerConfig(theta=0.0)
    for _ in range(500):
        tracks, dets = _random_scene(rng)
        next_id = max([t.id for t in tracks], default=0) + 1
        state = TrackerState(tuple(tracks), next_id, 1)
        new, out = step(state, dets, cfg, frame=2)
        # the oracle uses the backward offset convention: d = -(cur - prev)
        ids, nid = greedy_replay(
            [(*d.center, d.bbox.w, d.bbox.h, d.confidence, -d.offset[0], -d.offset[1]) for d in dets],
            [(*t.center, t.box.w, t.box.h, t.id) for t in tracks])
        by_conf = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
        assert [t.id for t in out] == [ids[i] for i in by_conf]
        assert new.next_id == nid


def test_greedy_match_requires_sorted_input():
    d = [Detection(BBox(0, 0, 5, 5), 0.5), Detection(BBox(0, 0, 5, 5), 0.9)]
    with pytest.raises(ValueError):
        greedy_match(d, [], MotionModel())


def test_greedy_prefers_confident_detection():
    trk = [Track(7, BBox(0, 0, 20, 20), 1.0)]
    dets = [Detection(BBox(5, 0, 20, 20), 0.9), Detection(BBox(1, 0, 20, 20), 0.6)]
    _, out = step(TrackerState(tuple(trk), 8, 1), dets, TrackerConfig())
    assert [(t.id, t.confidence) for t in out] == [(7, 0.9), (8, 0.6)]


def test_gate_is_strict():
    trk = [Track(1, BBox(0, 0, 10, 10), 1.0)]
    _, out = step(TrackerState(tuple(trk), 2, 1), [Detection(BBox(10, 0, 10, 10), 1.0)],
                  TrackerConfig(motion=MotionModel("zero")))
    assert out[0].id == 2


def test_theta_filters_before_association():
    trk = [Track(1, BBox(0, 0, 10, 10), 1.0)]
    st = TrackerState(tuple(trk), 2, 1)
    _, out = step(st, [Detection(BBox(0, 0, 10, 10), 0.3)], TrackerConfig(theta=0.4))
    assert out == []
    post = TrackerConfig(theta=0.4, threshold_stage="post", rebirth_k=0)
    new, out = step(st, [Detection(BBox(0, 0, 10, 10), 0.3)], post)
    assert out == [] and new.tracks[0].id == 1


def test_frame_index_must_increase():
    st, _ = step(TrackerState(), [], TrackerConfig(), frame=5)
    with pytest.raises(ValueError):
        step(st, [], TrackerConfig(), frame=5)


def test_config_validation():
    for kw in ({"theta": 1.5}, {"rebirth_k": -1}, {"matcher": "auction"}, {"mode": "x"},
               {"threshold_stage": "mid"}):
        with pytest.raises(ValueError):
            TrackerConfig(**kw)


def _scripted(gap, k, motion="detection_offset", matcher="greedy"):
    """One static object visible for 3 frames, hidden for ``gap`` frames, then visible again."""
    cfg = TrackerConfig(rebirth_k=k, motion=MotionModel(motion), matcher=matcher)
    tr = Tracker(cfg)
    ids = []
    frames = [True] * 3 + [False] * gap + [True] * 3
    for f, visible in enumerate(frames, 1):
        dets = [Detection(BBox(100, 100, 40, 40), 0.9)] if visible else []
        out = tr.step(dets, frame=f)
        if visible:
            ids.append(out[0].id)
        else:
            assert out == []
    return ids


@pytest.mark.parametrize("k", [0, 2, 32])
@pytest.mark.parametrize("motion", ["detection_offset", "kalman", "zero"])
def test_rebirth_window(k, motion):
    if k > 0:
        assert set(_scripted(k, k, motion)) == {1}
    assert _scripted(k + 1, k, motion) == [1, 1, 1, 2, 2, 2]


def test_inactive_tracks_hidden_and_excluded_from_prior():
    tr = Tracker(TrackerConfig(rebirth_k=3, tau=0.5))
    tr.step([Detection(BBox(100, 100, 40, 40), 0.9)])
    out = tr.step([])
    assert out == []
    assert len(tr.state.tracks) == 1 and tr.state.tracks[0].inactive_age == 1
    assert tr.prior_heatmap((60, 60)).channel().max() == 0.0


def test_prior_heatmap_renders_active_track():
    tr = Tracker(TrackerConfig(tau=0.5))
    tr.step([Detection(BBox(100, 100, 40, 40), 0.9), Detection(BBox(200, 100, 40, 40), 0.45)])
    hm = tr.prior_heatmap((60, 60)).channel()
    assert hm[25, 25] == 1.0 and hm[25, 50] < 1e-9


def test_public_mode_gates_new_tracks():
    cfg = TrackerConfig()
    dets = [Detection(BBox(100, 100, 40, 40), 0.9), Detection(BBox(400, 100, 40, 40), 0.9)]
    st, out = step_public(TrackerState(), dets, [BBox(110, 100, 40, 40)], cfg)
    assert [t.box.cx for t in out] == [100]
    # an existing track continues without public support
    st, out = step_public(st, [Detection(BBox(102, 100, 40, 40), 0.9)], [], cfg)
    assert [t.id for t in out] == [1]
    st, out = step_public(TrackerState(), dets, [], cfg)
    assert out == []


def test_public_gate_uses_nearest_box_only():
    # the nearest public box is small, so the larger but farther one does not help
    det = [Detection(BBox(100, 100, 40, 40), 0.9)]
    pub = [BBox(104, 100, 2, 2), BBox(120, 100, 200, 200)]
    assert step_public(TrackerState(), det, pub, TrackerConfig())[1] == []


def test_hungarian_matcher_in_tracker():
    cfg = TrackerConfig(matcher="hungarian", motion=MotionModel("zero"))
    trk = (Track(1, BBox(0, 0, 20, 20), 1.0), Track(2, BBox(18, 0, 20, 20), 1.0))
    dets = [Detection(BBox(8, 0, 20, 20), 0.9), Detection(BBox(-10, 0, 20, 20), 0.8)]
    _, out = step(TrackerState(trk, 3, 1), dets, cfg)
    assert sorted((t.id, t.box.cx) for t in out) == [(1, -10), (2, 8)]
    _, out = step(TrackerState(trk, 3, 1), dets, TrackerConfig(motion=MotionModel("zero")))
    assert sorted((t.id, t.box.cx) for t in out) == [(1, 8), (3, -10)]


def test_external_offsets_and_missing_counter():
    cfg = TrackerConfig(motion=MotionModel("external_offset"))
    tr = Tracker(cfg)
    tr.step([Detection(BBox(100, 100, 20, 20), 0.9)], external_offsets=[(0.0, 0.0)])
    out = tr.step([Detection(BBox(150, 100, 20, 20), 0.9)], external_offsets=[(50.0, 0.0)])
    assert out[0].id == 1
    out = tr.step([Detection(BBox(200, 100, 20, 20), 0.9)], external_offsets=[None])
    assert out[0].id == 2
    assert tr.state.missing_offsets == 1


def test_track_sequence_keeps_identity_of_moving_objects():
    dets = {f: [Detection(BBox(10 + 30 * f, 50, 20, 20), 0.9, (30.0, 0.0)),
                Detection(BBox(600 - 30 * f, 50, 20, 20), 0.8, (-30.0, 0.0))]
            for f in range(1, 15)}
    seq = track_sequence(dets, TrackerConfig())
    assert seq.ids == {1, 2}
    zero = track_sequence(dets, TrackerConfig(motion=MotionModel("zero")))
    assert len(zero.ids) > 2


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_step_invariants(seed):
    rng = np.random.default_rng(seed)
    tracks, dets = _random_scene(rng)
    state = TrackerState(tuple(tracks), 100, 1)
    new, out = step(state, dets, TrackerConfig(theta=0.0, rebirth_k=1))
    ids = [t.id for t in new.tracks]
    assert len(ids) == len(set(ids))
    assert len(out) == len(dets)
    assert all(t.active for t in out)

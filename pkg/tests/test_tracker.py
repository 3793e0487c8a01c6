import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbp_attack import autograd as ag
from tbp_attack.attacks import AttackConfig
from tbp_attack.experiments import attack_episode
from tbp_attack.gradchecks import tracker_suite
from tbp_attack.metrics import evaluate
from tbp_attack.synthetic import ObjectSpec, SceneSpec, gen_synthetic_sequence, preset
from tbp_attack.tracker import (FrameOutput, FrameRecord, StateTrace, Tracker, TrackerConfig, TrackerState,
                                TrackerWeights, TrackQuery, _updater, decode, extract_features, match,
                                memory_diagnostics, run_tracker, update_tracks)


@pytest.fixture(scope="module")
def weights():
    return TrackerWeights(TrackerConfig())


# ---------------------------------------------------------------------------
# synthetic scenes
def test_static_object_ground_truth():
    spec = SceneSpec(length=10, objects=[ObjectSpec(20, 12, 10, 8)])
    seq, gt = gen_synthetic_sequence(spec)
    assert len(seq) == 10 and len(gt) == 1
    assert {b for _, b in gt[0].boxes} == {(20.0, 12.0, 10.0, 8.0)}


def test_generation_is_deterministic():
    a, ga = gen_synthetic_sequence(preset("dense", 4))
    b, gb = gen_synthetic_sequence(preset("dense", 4))
    assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames)) and ga == gb


def test_crossing_boxes_overlap_midway():
    from tbp_attack.boxes import iou

    seq, gt = gen_synthetic_sequence(preset("crossing", 0))
    a, b = gt
    shared = sorted(set(a.frames) & set(b.frames))
    assert max(iou(a.box_at(f), b.box_at(f)) for f in shared) > 0


def test_zero_objects_and_bad_length():
    seq, gt = gen_synthetic_sequence(SceneSpec(length=3))
    assert len(seq) == 3 and gt == []
    with pytest.raises(ValueError):
        gen_synthetic_sequence(SceneSpec(length=0))


def test_preset_sizes():
    assert len(gen_synthetic_sequence(preset("sparse", 0))[1]) == 3
    assert len(gen_synthetic_sequence(preset("crossing", 0))[1]) == 2
    seq, gt = gen_synthetic_sequence(preset("dense", 0))
    assert len(gt) == 12 and (seq.height, seq.width) == (64, 96)


# ---------------------------------------------------------------------------
# encoder and decoder
def test_zero_frame_gives_zero_features(weights):
    assert not extract_features(np.zeros((32, 48, 3)), weights).data.any()


def test_feature_locality(weights, rng):
    f = rng.uniform(0, 1, (32, 48, 3))
    g = f.copy()
    g[9, 22, 1] += 0.1 if g[9, 22, 1] < 0.9 else -0.1
    d = np.abs(extract_features(f, weights).data - extract_features(g, weights).data).max(axis=-1)
    changed = np.argwhere(d > 0)
    assert changed.tolist() == [[9 // 4, 22 // 4]]


def test_feature_gradient(weights, rng):
    f = rng.uniform(0.1, 0.9, (16, 16, 3))
    rep = ag.check_gradient(lambda x: ag.sum_(extract_features(x, weights) * 0.3), f, h=1e-3, tol=1e-4)
    assert rep.passed


def test_frame_range_checked(weights):
    with pytest.raises(ValueError):
        extract_features(np.full((16, 16, 3), 1.2), weights)


def test_decoder_is_permutation_equivariant(weights, rng):
    cfg = TrackerConfig()
    q = rng.standard_normal((5, cfg.D))
    ref = rng.uniform(2, 14, (5, 2))
    feats = ag.Tensor(rng.standard_normal((4, 4, cfg.C)))
    out, _ = decode(q, ref, feats, weights, cfg)
    perm = np.array([3, 0, 4, 1, 2])
    out_p, _ = decode(q[perm], ref[perm], feats, weights, cfg)
    np.testing.assert_allclose(out_p.data, out.data[perm], atol=1e-12)


def test_single_query_zero_features_ignores_frame(weights, rng):
    cfg = TrackerConfig()
    q = rng.standard_normal((1, cfg.D))
    zero = ag.Tensor(np.zeros((4, 4, cfg.C)))
    a, _ = decode(q, np.array([[3.0, 5.0]]), zero, weights, cfg)
    b, _ = decode(q, np.array([[9.0, 1.0]]), zero, weights, cfg)
    np.testing.assert_array_equal(a.data, b.data)


# ---------------------------------------------------------------------------
# matching
def _fake_output(conf, boxes, n_track, D=4, image=(64, 64)):
    n = len(conf)
    conf = np.asarray(conf, dtype=np.float64)
    logit = np.log(conf / (1 - conf)) if np.all(conf < 1) else np.full(n, 50.0)
    h = np.arange(n * D, dtype=float).reshape(n, D) + 1.0
    return FrameOutput(ag.Tensor(np.asarray(boxes, float)), ag.Tensor(logit[:, None]), ag.Tensor(conf),
                       ag.Tensor(h), ag.Tensor(h), n_track, list(range(1, n_track + 1)), h[:n_track].copy(),
                       np.ones(n_track, bool), np.zeros((n, 2)), image, np.zeros((n, 3)))


def test_match_examples():
    box = [0.5, 0.5, 0.2, 0.2]
    out = _fake_output([1.0], [box], 0)
    pairs, cost = match(out, [box])
    assert pairs == [(0, 0)] and cost.data[0, 0] == pytest.approx(0.0, abs=1e-12)
    pairs, cost = match(out, np.zeros((0, 4)))
    assert pairs == [] and cost.shape == (1, 0)


# ---------------------------------------------------------------------------
# updater and budget
def _state(n, conf=0.6):
    tq = [TrackQuery(np.ones(4) * (i + 1), np.array([0.1 + 0.2 * i, 0.2, 0.1, 0.1]), i + 1, age=3, conf=conf)
          for i in range(n)]
    return TrackerState(tq, None, n + 1, 5)


def test_budget_starvation_by_hand():
    cfg = TrackerConfig(B=2, D=4, tau_keep=0.5)
    boxes = [[0.1, 0.2, 0.1, 0.1], [0.3, 0.2, 0.1, 0.1], [0.5, 0.7, 0.1, 0.1], [0.7, 0.7, 0.1, 0.1],
             [0.9, 0.7, 0.1, 0.1]]
    out = _fake_output([0.6, 0.6, 0.9, 0.9, 0.9], boxes, 2)
    new, rec = update_tracks(_state(2), out, cfg)
    assert sorted(rec.terminated) == [1, 2]
    assert len(new.track_queries) == 2
    assert [q.identity for q in new.track_queries] == [3, 4]


def test_all_matched_no_promotions_keeps_identities():
    cfg = TrackerConfig(D=4)
    out = _fake_output([0.95, 0.9, 0.2], [[0.1, 0.2, 0.1, 0.1], [0.3, 0.2, 0.1, 0.1], [0.6, 0.6, 0.1, 0.1]], 2)
    new, rec = update_tracks(_state(2), out, cfg)
    assert new.identities == [1, 2] and rec.terminated == []


def test_gamma_one_drops_momentum_path():
    seq, _ = gen_synthetic_sequence(preset("sparse", 0, length=4))
    for gamma in (0.5, 1.0):
        tr = Tracker(TrackerConfig(gamma=gamma))
        _, state = tr.run(seq.frames[:3])
        out = tr.forward(state, seq.frames[3])
        M = out.n_track
        upd = _updater(out.q_out, tr.weights, tr.cfg).data[:M]
        np.testing.assert_allclose(out.h_cand.data[:M], (1 - gamma) * out.h_prev + gamma * upd, atol=1e-12)


def test_config_invariants():
    for bad in ({"tau_drop": 0.8, "tau_keep": 0.7}, {"gamma": 0.0}, {"B": 0}):
        with pytest.raises(ValueError):
            TrackerConfig(**bad)


# ---------------------------------------------------------------------------
# whole runs
def test_static_object_one_identity():
    seq, gt = gen_synthetic_sequence(SceneSpec(length=10, objects=[ObjectSpec(40, 20, 12, 10)]))
    pred, trace = run_tracker(seq)
    assert len(pred) == 1 and evaluate(gt, pred).IDSW == 0
    for rec in trace.records[3:]:
        assert np.all(rec.matched_cosines() >= TrackerConfig().tau_sim)


def test_empty_scene_emits_nothing():
    seq, _ = gen_synthetic_sequence(SceneSpec(length=5))
    pred, trace = run_tracker(seq)
    assert pred == [] and all(not r.emitted for r in trace.records)


@pytest.mark.parametrize("name", ["sparse", "crossing", "dense"])
def test_budget_and_identity_uniqueness(name):
    seq, _ = gen_synthetic_sequence(preset(name, 1))
    cfg = TrackerConfig(B=6)
    tr = Tracker(cfg)
    state = tr.init_state()
    seen_next = state.next_id
    for k, f in enumerate(seq.frames):
        state.frame_index = k
        state, _, rec = tr.step(state, f)
        assert len(state.track_queries) <= cfg.B
        ids = [i for i, _ in rec.emitted]
        assert len(ids) == len(set(ids))
        assert state.next_id >= seen_next
        seen_next = state.next_id


def test_run_is_deterministic(crossing_seq):
    seq, _ = crossing_seq
    _, a = run_tracker(seq)
    _, b = run_tracker(seq)
    assert a.dumps() == b.dumps()


def test_trace_json_round_trip(crossing_seq):
    seq, _ = crossing_seq
    _, trace = run_tracker(seq.frames[:6])
    back = StateTrace.from_json(trace.to_json())
    assert back.dumps() == trace.dumps()


def test_tracker_pixel_gradient():
    for name, rep in tracker_suite():
        assert rep.passed, (name, rep.max_rel_error)


# ---------------------------------------------------------------------------
# memory diagnostics
def _trace_with_bank(vectors):
    bank = {1: [(k, np.asarray(v, float)) for k, v in enumerate(vectors)]}
    rec = FrameRecord(0, [], np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, bool), np.zeros(0, bool), np.zeros(0),
                      [], [], {}, bank)
    return StateTrace([rec])


def test_orthogonal_bank_self_similarity_is_identity():
    d = memory_diagnostics(_trace_with_bank(np.eye(3) * 2.0), 0)
    np.testing.assert_allclose(d["self_similarity"], np.eye(3), atol=1e-15)
    np.testing.assert_allclose(d["l2_norms"], 2.0)


def test_duplicate_entry_shows_up():
    S = memory_diagnostics(_trace_with_bank([[1, 0, 0], [0, 1, 0], [1, 0, 0]]), 0)["self_similarity"]
    assert S[0, 2] == pytest.approx(1.0) and S[0, 1] == pytest.approx(0.0)


def test_empty_bank_is_not_an_error():
    d = memory_diagnostics(_trace_with_bank([]), 0)
    assert d["self_similarity"].shape == (0, 0)


def _within_identity_similarity(trace, t):
    rec = trace[t]
    labels = np.array([i for i in sorted(rec.memory) for _ in rec.memory[i]])
    S = memory_diagnostics(trace, t)["self_similarity"]
    same = (labels[:, None] == labels[None]) & ~np.eye(len(labels), dtype=bool)
    return S[same].mean()


def test_tmc_attack_erodes_memory_coherence():
    ep = attack_episode("crossing", 8, AttackConfig(loss_kind="tmc"))
    for t in (8, 9, 10):
        assert _within_identity_similarity(ep.adv_trace, t) < _within_identity_similarity(ep.clean_trace, t)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_clean_presets_stay_within_budget(seed):
    seq, _ = gen_synthetic_sequence(preset("sparse", seed, length=8))
    cfg = TrackerConfig(B=2)
    _, trace = run_tracker(seq, cfg)
    assert all(len(r.hidden) <= 2 for r in trace.records)

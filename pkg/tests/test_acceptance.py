"""The twelve acceptance criteria, one test each, at their stated tolerances.

A one-line PASS/FAIL summary per criterion is printed at the end of the run.
Golden values were pinned on the first verified run (seed 0, default configs).
"""

import json
import math
import time

import numpy as np
import pytest

from oracles import micro_scene, oracle_scores
from tbp_attack import autograd as ag
from tbp_attack.attacks import AttackConfig, run_attack
from tbp_attack.cli import main as cli_main
from tbp_attack.experiments import attack_episode, defend_frames, legit_terminations, matched_cosine
from tbp_attack.gradchecks import run_suite
from tbp_attack.losses import LossWeights, loss_cost_mimicry
from tbp_attack.metrics import DEFAULT_ALPHAS, evaluate
from tbp_attack.sensors import (EaiParams, ParamBounds, aai_offsets, apply_defense, gaussian_kernel,
                                simulate_eai)
from tbp_attack.synthetic import gen_synthetic_sequence, preset
from tbp_attack.tracker import Tracker, TrackerConfig, trace_to_trajectories
from tbp_attack.tracks import Trajectory

ATTACK_FRAME = 8

# HOTA(clean) - HOTA(attacked), TMC digital at frame 8, seed 0
GOLDEN_HOTA_MARGIN = {"sparse": 0.2142, "crossing": 0.3267, "dense": 0.0070}
# HOTA of the TQF-attacked sparse sequence after each defense (attacked: 0.9258)
GOLDEN_TQF_ATTACKED_HOTA = 0.9258
GOLDEN_DEFENDED_HOTA = {"cj": 0.5135, "ss": 0.9215, "gn": 0.0961}
GOLDEN_TOL = 0.02


def _primitive_cases(rng):
    """Isolated primitives at interior points (away from clamp and max kinks)."""
    a = rng.uniform(0.5, 1.5, (3, 4))
    b = rng.uniform(0.5, 1.5, (3, 4))
    # central differences of 1/x-type functions carry ~h^2/x^2 truncation error
    far = a + 1.0
    wm = rng.standard_normal((3, 3))
    # positive vectors are nearly parallel, where the cosine gradient is tiny
    an, bn = 3 * rng.standard_normal((3, 4)), 3 * rng.standard_normal((3, 4))
    img = rng.uniform(0.0, 1.0, (6, 7, 2))
    coords = np.array([[1.3, 2.6], [3.7, 4.2], [2.45, 5.1]])
    return [
        ("add", lambda x: ag.sum_(ag.add(x, b) * b), a),
        ("mul", lambda x: ag.sum_(ag.mul(x, b)), a),
        ("div", lambda x: ag.sum_(ag.div(b, x)), far),
        ("matmul", lambda x: ag.sum_(ag.matmul(x, b.T) * wm), a),
        ("exp", lambda x: ag.sum_(ag.exp(x) * b), a),
        ("log", lambda x: ag.sum_(ag.log(x) * b), far),
        ("sqrt", lambda x: ag.sum_(ag.sqrt(x) * b), far),
        ("sigmoid", lambda x: ag.sum_(ag.sigmoid(x) * b), a),
        ("softmax", lambda x: ag.sum_(ag.softmax(x, axis=-1) * b), a),
        ("mean", lambda x: ag.mean(ag.square(x)), a),
        ("max", lambda x: ag.sum_(ag.max_(x * b, axis=-1)[0]), a),
        ("l2norm", lambda x: ag.sum_(ag.l2norm(x, axis=-1)), a),
        ("cosine", lambda x: ag.sum_(ag.cosine(x, bn, axis=-1)), an),
        ("clamp", lambda x: ag.sum_(ag.clamp(x, 0.0, 2.0) * b), a),
        ("bilinear_sample", lambda x: ag.sum_(ag.bilinear_sample(x, coords)), img),
        ("affine_translate", lambda x: ag.sum_(ag.affine_translate(img, x) * img), np.array([0.3, -1.4])),
    ]


def test_c1_gradient_fidelity(criterion):
    with criterion("C1", "gradient fidelity (tracker, losses, AAI, EAI, primitives)") as d:
        t0 = time.perf_counter()
        worst = {}
        for target in ("tracker", "losses", "aai", "eai"):
            for name, rep in run_suite(target, tol=1e-3):
                worst[name] = rep.max_rel_error
                assert rep.passed, f"{name}: max rel err {rep.max_rel_error:.3e}"
        rng = np.random.default_rng(0)
        for name, f, p in _primitive_cases(rng):
            rep = ag.check_gradient(f, p, h=1e-3, tol=1e-6)
            assert rep.passed, f"primitive {name}: max rel err {rep.max_rel_error:.3e}"
        elapsed = time.perf_counter() - t0
        d["info"] = f"worst {max(worst.values()):.1e}, {elapsed:.1f}s"
        assert elapsed < 60.0


def test_c2_lse_sandwich(criterion):
    with criterion("C2", "LSE-min sandwich over 1000 cost matrices") as d:
        rng = np.random.default_rng(2)
        for _ in range(1000):
            K, G = rng.integers(1, 9), rng.integers(1, 5)
            C = rng.uniform(0.0, 10.0, (K, G)) * rng.choice([0.01, 1.0, 10.0])
            for j in range(G):
                v = loss_cost_mimicry(C[:, j: j + 1]).item()
                lo, hi = C[:, j].min() - math.log(K), C[:, j].min()
                assert lo - 1e-12 <= v <= hi + 1e-12, (v, lo, hi)
        d["info"] = "1000 matrices"


def _hand_examples():
    box = (10.0, 10.0, 8.0, 8.0)
    gt = [Trajectory(1, [(f, box) for f in range(1, 11)])]
    r1 = evaluate(gt, [Trajectory(7, [(f, box) for f in range(1, 6)])])
    assert abs(r1.DetA - 0.5) < 1e-12 and abs(r1.AssA - 1.0) < 1e-12
    assert abs(r1.HOTA - math.sqrt(0.5)) < 1e-12 and r1.IDSW == 0
    r2 = evaluate(gt, [Trajectory(1, [(f, box) for f in range(1, 6)]),
                       Trajectory(2, [(f, box) for f in range(6, 11)])])
    assert r2.IDSW == 1 and abs(r2.IDF1 - 0.5) < 1e-12
    r3 = evaluate(gt, gt)
    assert r3.HOTA == 1.0 and r3.IDF1 == 1.0 and r3.IDSW == 0


def test_c3_metrics_oracle(criterion):
    with criterion("C3", "metrics match the exhaustive oracle on micro-scenes") as d:
        _hand_examples()
        rng = np.random.default_rng(3)
        alphas = list(DEFAULT_ALPHAS)
        n = 400
        for _ in range(n):
            gt, pred = micro_scene(rng)
            rep, ora = evaluate(gt, pred), oracle_scores(gt, pred, alphas)
            for key in ("HOTA_alpha", "DetA_alpha", "AssA_alpha"):
                np.testing.assert_allclose(getattr(rep, key), ora[key], rtol=0, atol=1e-12)
            assert abs(rep.IDF1 - ora["IDF1"]) <= 1e-12
            assert rep.IDSW == ora["IDSW"]
        d["info"] = f"{n} scenes + 3 hand examples"


def test_c4_budget_starvation(criterion):
    with criterion("C4", "budget starvation on dense (B = objects - 2)") as d:
        seq, gt = gen_synthetic_sequence(preset("dense", 0))
        n_obj = len(gt)
        cfg = TrackerConfig(B=n_obj - 2)
        # flood only: see the decisions ledger on why cost/siphon terms are off here
        attack = AttackConfig(loss_kind="tqf", weights=LossWeights(flood=1.0, cost=0.0, siphon=0.0))
        ep = attack_episode(seq, ATTACK_FRAME, attack, cfg, gt=gt)
        clean = legit_terminations(ep.clean_trace, ATTACK_FRAME)
        adv = legit_terminations(ep.adv_trace, ATTACK_FRAME)
        d["info"] = f"B={cfg.B}, terminations clean {len(clean)} vs attacked {len(adv)}"
        assert clean == []
        assert len(adv) >= 2
        again = attack_episode(seq, ATTACK_FRAME, attack, cfg, gt=gt)
        assert legit_terminations(again.adv_trace, ATTACK_FRAME) == adv


def test_c5_memory_corruption(criterion):
    with criterion("C5", "TMC digital memory corruption on crossing") as d:
        seq, gt = gen_synthetic_sequence(preset("crossing", 0))
        attack = AttackConfig(loss_kind="tmc", vector="digital", eps=8 / 255, alpha=1 / 255, T_iters=50)
        ep = attack_episode(seq, ATTACK_FRAME, attack, gt=gt)
        c0 = matched_cosine(ep.clean_trace, ATTACK_FRAME)
        c1 = matched_cosine(ep.adv_trace, ATTACK_FRAME)
        drop = (c0 - c1) / abs(c0)
        d["info"] = f"cosine {c0:.3f} -> {c1:.3f} (drop {drop:.0%}), IDSW {ep.clean.IDSW} -> {ep.attacked.IDSW}"
        assert drop >= 0.5
        assert ep.attacked.IDSW > ep.clean.IDSW


@pytest.mark.parametrize("name", ["sparse", "crossing", "dense"])
def test_c6_directional_damage(criterion, name):
    with criterion("C6", "attacked HOTA below clean by the golden margin") as d:
        ep = attack_episode(name, ATTACK_FRAME, AttackConfig(loss_kind="tmc"))
        margin = ep.clean.HOTA - ep.attacked.HOTA
        d["info"] = f"{name} margin {margin:.4f} (golden {GOLDEN_HOTA_MARGIN[name]:.4f})"
        assert margin > 0
        assert abs(margin - GOLDEN_HOTA_MARGIN[name]) <= GOLDEN_TOL


def test_c7_aai_psf_shape(criterion):
    with criterion("C7", "AAI PSF is U-shaped and symmetric") as d:
        amp = 1.5
        off = aai_offsets(amp, 0.0, 0.37, 1000, d_max=10.0)[:, 0]
        hist, _ = np.histogram(off, bins=10, range=(-amp, amp))
        mass = hist / hist.sum()
        outer = (mass[0] + mass[-1]) / 2
        central = (mass[4] + mass[5]) / 2
        d["info"] = f"outer/central = {outer / central:.2f}"
        assert outer >= 2 * central
        assert abs(mass[0] - mass[-1]) <= 0.05 * max(mass[0], mass[-1])
        assert abs(mass[:5].sum() - mass[5:].sum()) <= 0.05


@pytest.mark.parametrize("vector", ["aai", "eai"])
def test_c8_physical_constraints(criterion, sparse_seq, vector):
    with criterion("C8", "physical bounds hold at every PGD iterate (T = 150)") as d:
        seq, gt = sparse_seq
        H, W = seq.height, seq.width
        bounds = ParamBounds.default(H, W)
        cfg = AttackConfig(loss_kind="tmc", vector=vector, T_iters=150)
        res = run_attack(Tracker(), seq.frames, ATTACK_FRAME, cfg, bounds=bounds, gt=gt)
        # the optimizer raises ConstraintViolation on the first bad iterate
        assert res.constraint_checks == 150
        assert len(res.loss_trace) == 151
        lo = bounds.aai_lo() if vector == "aai" else bounds.eai_lo(cfg.n_stripes)
        hi = bounds.aai_hi() if vector == "aai" else bounds.eai_hi(cfg.n_stripes)
        for p in res.params + res.last_params:
            assert np.all(p >= lo) and np.all(p <= hi)
            if vector == "aai":
                off = aai_offsets(p[0], p[1], p[2], cfg.n_samples, bounds.d_max)
                assert np.linalg.norm(off, axis=1).max() <= 0.03 * W + 1e-12
        d["info"] = f"{vector}: {res.constraint_checks} iterates ok"


def test_c9_eai_identity_and_artifact(criterion, rng):
    with criterion("C9", "EAI blend identity and stripe artifact") as d:
        frame = rng.uniform(0, 1, (16, 16, 3))
        p = EaiParams([2.0, 9.0], [5.0, 6.0])
        assert np.array_equal(simulate_eai(frame, p, 50.0, 0.0).data, frame)
        gray = np.full((16, 16, 3), 0.5)
        out = simulate_eai(gray, EaiParams([4.0], [5.0]), 50.0, 1.0).data
        inside, outside = out[5:9], np.concatenate([out[:4], out[10:]])
        assert np.all(inside[..., 1] < 0.5 - 0.4)
        np.testing.assert_allclose(inside[..., [0, 2]], 0.5, atol=1e-12)
        assert np.max(np.abs(outside - 0.5)) <= 1e-6
        d["info"] = f"inside G {inside[..., 1].max():.3g}, outside max diff {np.max(np.abs(outside - 0.5)):.1e}"


def test_c10_pgd_closed_form(criterion, sparse_seq):
    with criterion("C10", "bypass loss reaches +eps in ceil(eps/alpha) iterations") as d:
        seq, _ = sparse_seq
        eps, alpha = 8 / 255, 1 / 255
        n = math.ceil(eps / alpha - 1e-9)
        tracker = Tracker()
        short = run_attack(tracker, seq.frames, 3, AttackConfig(loss_kind="bypass", eps=eps, alpha=alpha,
                                                                   T_iters=n - 1))
        exact = run_attack(tracker, seq.frames, 3, AttackConfig(loss_kind="bypass", eps=eps, alpha=alpha,
                                                                   T_iters=n))
        assert not np.all(short.last_params[0] == eps)
        assert np.all(exact.last_params[0] == eps)
        d["info"] = f"{n} iterations"


def test_c11_defense_sanity(criterion, sparse_seq):
    with criterion("C11", "defense sanity and recovery-gap goldens") as d:
        assert gaussian_kernel(3, 0.5).sum() == 1.0
        seq, gt = sparse_seq
        f = seq.frames[4]
        assert np.array_equal(apply_defense("gn", f, 5), apply_defense("gn", f, 5))
        ep = attack_episode(seq, ATTACK_FRAME, AttackConfig(loss_kind="tqf"), gt=gt)
        assert abs(ep.attacked.HOTA - GOLDEN_TQF_ATTACKED_HOTA) <= GOLDEN_TOL
        tracker = Tracker()
        deltas = {}
        for kind, golden in GOLDEN_DEFENDED_HOTA.items():
            trace, _ = tracker.run(defend_frames(ep.result.frames, kind, seed=0))
            hota = evaluate(gt, trace_to_trajectories(trace)).HOTA
            deltas[kind] = hota - ep.attacked.HOTA
            assert deltas[kind] != 0.0
            assert abs(hota - golden) <= GOLDEN_TOL
        d["info"] = ", ".join(f"{k} {v:+.3f}" for k, v in deltas.items())


def _pipeline(root):
    seq_dir, adv_dir = root / "seq", root / "adv"
    assert cli_main(["gen", "--preset", "sparse", "--seed", "3", "--length", "14", "--out", str(seq_dir)]) == 0
    assert cli_main(["attack", "--seq", str(seq_dir), "--loss", "tmc", "--frame", "6", "--out", str(adv_dir)]) == 0
    assert cli_main(["track", "--seq", str(adv_dir), "--out", str(root / "pred.txt")]) == 0
    assert cli_main(["eval", "--gt", str(seq_dir / "gt.txt"), "--pred", str(root / "pred.txt"),
                     "--out", str(root / "eval.json")]) == 0
    return (adv_dir / "attack.json").read_bytes(), (root / "eval.json").read_bytes()


def test_c12_determinism(criterion, tmp_path, capsys):
    with criterion("C12", "byte-identical JSON across repeated runs") as d:
        a = _pipeline(tmp_path / "run1")
        b = _pipeline(tmp_path / "run2")
        assert a == b
        json.loads(a[0])
        d["info"] = f"{len(a[0]) + len(a[1])} bytes compared"

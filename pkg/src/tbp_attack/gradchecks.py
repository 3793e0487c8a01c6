"""Finite-difference suites for the differentiable pieces of the workbench.

Each suite returns ``[(name, GradCheckReport), ...]``. Probes sit away from
clamp boundaries and from the discrete decisions of the tracker, where
central differences are not meaningful.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from . import losses as L
from .sensors import simulate_aai, simulate_eai
from .synthetic import gen_synthetic_sequence, preset
from .tracker import Tracker, TrackerConfig

__all__ = ["SUITES", "run_suite", "tracker_suite", "loss_suite", "aai_suite", "eai_suite"]

H_STEP = 1e-3


def tracker_suite(tol: float = 1e-3, n_probes: int = 12, seed: int = 0):
    """End-to-end pixel gradient of a scalar mix of confidences, boxes and states."""
    seq, _ = gen_synthetic_sequence(preset("crossing", seed, length=6))
    tracker = Tracker(TrackerConfig(seed=seed))
    _, state = tracker.run(seq.frames[:3])
    frame = seq.frames[3]
    rng = np.random.default_rng(seed)
    w_h = rng.standard_normal((1, tracker.cfg.D))
    state.frame_index = 3
    decisions = tracker.forward(state, frame).decisions

    def f(x):
        out = tracker.forward(state, x, decisions)
        return ag.sum_(out.conf) + ag.sum_(out.boxes) + 0.1 * ag.sum_(out.h_cand * w_h)

    # probe pixels around the tracked objects, away from 0 and 1
    ys, xs = np.nonzero(np.abs(frame - 0.5).max(axis=-1) < 0.49)
    near = [(y, x) for y, x in zip(ys, xs)
            if any(abs(y - tq.ref_box[1] * frame.shape[0]) < 8 and abs(x - tq.ref_box[0] * frame.shape[1]) < 8
                   for tq in state.track_queries)]
    pick = rng.choice(len(near), size=min(n_probes, len(near)), replace=False)
    idx = [(near[i][0], near[i][1], int(rng.integers(3))) for i in pick]
    return [("tracker pixels", ag.check_gradient(f, frame, h=H_STEP, tol=tol, indices=idx))]


def loss_suite(tol: float = 1e-3, seed: int = 0):
    rng = np.random.default_rng(seed)
    K, G, D = 4, 3, 8
    logits = rng.normal(0.0, 1.5, (K, 1))
    costs = rng.uniform(0.5, 3.0, (K, G))
    a, b = rng.standard_normal((K, D)), rng.standard_normal((3, D))
    c = rng.standard_normal((3, D))
    cases = [
        ("loss_flood", lambda x: L.loss_flood(x).value, logits),
        ("loss_cost_mimicry", lambda x: L.loss_cost_mimicry(x).value, costs),
        ("loss_siphon", lambda x: L.loss_siphon(x, b).value, a),
        ("loss_decorr", lambda x: L.loss_decorr(x, c).value, b),
        ("loss_erase", lambda x: L.loss_erase(x).value, b),
    ]
    return [(n, ag.check_gradient(f, p, h=H_STEP, tol=tol)) for n, f, p in cases]


def _textured(seed: int, H: int = 24, W: int = 32) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:H, 0:W]
    base = 0.5 + 0.3 * np.sin(xx / 3.0)[..., None] * np.cos(yy / 4.0)[..., None] * np.array([1.0, -0.7, 0.5])
    return np.clip(base + 0.05 * rng.standard_normal((H, W, 3)), 0.05, 0.95)


def aai_suite(tol: float = 1e-3, seed: int = 0):
    frame = _textured(seed)
    d_max = 0.03 * frame.shape[1]
    theta = np.array([0.4, 0.3, 0.7])  # offsets stay below D_max: no saturation kink
    w = np.random.default_rng(seed + 1).standard_normal(frame.shape)

    def f(p):
        return ag.sum_(simulate_aai(frame, p, 10, d_max) * w)

    return [("aai theta", ag.check_gradient(f, theta, h=H_STEP, tol=tol))]


def eai_suite(tol: float = 1e-3, seed: int = 0):
    frame = _textured(seed)
    # stripe edges sit 0.3-0.5 rows from pixel rows, where the sigmoid is smooth at this step
    theta = np.array([4.2, 13.6, 2.7, 3.4])
    w = np.random.default_rng(seed + 1).standard_normal(frame.shape)

    def f(p):
        return ag.sum_(simulate_eai(frame, p, 50.0, 1.0) * w)

    return [("eai theta", ag.check_gradient(f, theta, h=H_STEP, tol=tol))]


SUITES = {"tracker": tracker_suite, "losses": loss_suite, "aai": aai_suite, "eai": eai_suite}


def run_suite(target: str, tol: float = 1e-3):
    try:
        return SUITES[target](tol=tol)
    except KeyError:
        raise ValueError(f"unknown gradcheck target {target!r}; choose from {sorted(SUITES)}") from None

"""Signed-gradient PGD attacks: digital pixels, AAI parameters, EAI parameters.

Each attack perturbs the frames ``t .. t + window - 1`` one after another. The
tracker is run cleanly up to ``t`` once; each attacked frame is then optimized
against the state left by the (already attacked) previous frame, so one PGD
iteration costs a single tracker step.

The FADE losses are minimization objectives; the loops ascend
``J = -L_FADE``. ``loss_trace`` records ``J`` and ``raw_loss_trace`` records
``L_FADE``. The ``bypass`` loss skips the tracker and ascends ``J = sum(theta)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .boxes import xywh_to_cxcywh
from .losses import AnchorMode, LossTerm, LossWeights, loss_tmc, loss_tqf
from .sensors import ParamBounds, aai_offsets, simulate_aai, simulate_eai
from .tracker import FrameOutput, Tracker, match, matching_cost
from .tracks import Trajectory, trajectories_to_frames

__all__ = [
    "AttackConfig",
    "AttackResult",
    "NumericalFailure",
    "ConstraintViolation",
    "pgd_digital",
    "pgd_aai",
    "pgd_eai",
    "run_attack",
    "frame_objective",
    "anchors_for_frame",
]

log = logging.getLogger(__name__)

LOSS_KINDS = ("tqf", "tmc", "bypass")
VECTORS = ("digital", "aai", "eai")


class NumericalFailure(FloatingPointError):
    """The attack objective became non-finite."""

    def __init__(self, iteration: int, frame: int):
        self.iteration = iteration
        self.frame = frame
        super().__init__(f"non-finite attack loss at iteration {iteration} (frame {frame})")


class ConstraintViolation(AssertionError):
    pass


@dataclass
class AttackConfig:
    loss_kind: str = "tmc"
    vector: str = "digital"
    eps: float = 8 / 255
    alpha: float | None = None  # digital: 1/255; physical: 8/255 of each parameter range
    T_iters: int | None = None  # digital: 50; physical: 150
    window: int = 1
    anchor_mode: str = "gt"
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    n_samples: int = 10
    n_stripes: int = 20
    eai_init: str = "uniform"
    blend: float = 1.0
    steepness: float = 50.0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.loss_kind = self.loss_kind.lower()
        self.vector = self.vector.lower()
        self.anchor_mode = AnchorMode(self.anchor_mode).value
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"AttackConfig.loss_kind must be one of {LOSS_KINDS}")
        if self.vector not in VECTORS:
            raise ValueError(f"AttackConfig.vector must be one of {VECTORS}")
        if self.vector == "digital" and not self.eps > 0:
            raise ValueError("AttackConfig.eps must be positive for digital attacks")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("AttackConfig.alpha must be nonnegative")
        if self.T_iters is not None and self.T_iters < 0:
            raise ValueError("AttackConfig.T_iters must be >= 0")
        if self.window < 1:
            raise ValueError("AttackConfig.window must be >= 1")
        if self.eai_init not in ("uniform", "random"):
            raise ValueError("AttackConfig.eai_init must be 'uniform' or 'random'")

    @property
    def step(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return 1 / 255 if self.vector == "digital" else 8 / 255

    @property
    def iters(self) -> int:
        if self.T_iters is not None:
            return self.T_iters
        return 50 if self.vector == "digital" else 150

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_effective"] = self.step
        d["T_effective"] = self.iters
        return d


@dataclass
class AttackResult:
    """Outcome of one attack episode.

    ``frames`` is the full sequence with the best-so-far adversarial frames
    substituted; ``last_frames`` uses the last iterates instead. Traces hold
    one list of ``T + 1`` values per attacked frame.
    """

    frames: list[np.ndarray]
    last_frames: list[np.ndarray]
    attacked: list[int]
    params: list[np.ndarray]
    last_params: list[np.ndarray]
    loss_traces: list[list[float]]
    raw_loss_traces: list[list[float]]
    warnings: list[str]
    config: dict
    constraint_checks: int = 0

    @property
    def loss_trace(self) -> list[float]:
        return self.loss_traces[0] if self.loss_traces else []

    def best_objective(self) -> list[float]:
        return [max(tr) for tr in self.loss_traces]

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "attacked_frames": list(self.attacked),
            "params_best": [p.tolist() for p in self.params],
            "params_last": [p.tolist() for p in self.last_params],
            "loss_traces": self.loss_traces,
            "raw_loss_traces": self.raw_loss_traces,
            "best_objective": self.best_objective(),
            "warnings": sorted(set(self.warnings)),
            "constraint_checks": self.constraint_checks,
        }


# ---------------------------------------------------------------------------
def anchors_for_frame(t: int, gt: list[Trajectory] | None, clean_emitted, mode: str,
                      size: tuple[int, int]) -> np.ndarray:
    """Normalized cxcywh anchor boxes for 0-based frame ``t``."""
    H, W = size
    if AnchorMode(mode) is AnchorMode.GROUND_TRUTH:
        if gt is None:
            raise ValueError("ground-truth anchors requested but no ground truth given")
        boxes = [b for _, b in trajectories_to_frames(gt).get(t + 1, [])]
    else:
        boxes = [b for _, b in clean_emitted[t]] if clean_emitted is not None else []
    return xywh_to_cxcywh(np.array(boxes, dtype=np.float64).reshape(-1, 4), W, H)


def frame_objective(out: FrameOutput, kind: str, weights: LossWeights, anchors: np.ndarray,
                    tracker_cfg) -> LossTerm:
    """The FADE loss ``L`` for one decoded frame (minimization form)."""
    M = out.n_track
    if kind == "tmc":
        legit = np.flatnonzero(out.legit)
        h_now = out.h_cand[legit] if len(legit) else ag.Tensor(np.zeros((0, tracker_cfg.D)))
        h_prev = out.h_prev[legit]
        return loss_tmc(h_now, h_prev, weights)
    if kind == "tqf":
        pairs, _ = match(out, anchors, tracker_cfg)
        taken = {q for q, _ in pairs}
        adv = np.array([j for j in range(M, out.n_queries) if j not in taken], dtype=np.int64)
        legit = np.flatnonzero(out.legit)
        if len(adv) == 0:
            return LossTerm(ag.Tensor(0.0), ["tqf: no adversarial queries this frame"])
        costs = matching_cost(out, anchors, rows=adv, cfg=tracker_cfg) if len(anchors) else \
            ag.Tensor(np.zeros((len(adv), 0)))
        return loss_tqf(out.logits[adv], costs, out.h_cand[adv], out.h_prev[legit], weights)
    raise ValueError(f"unknown loss kind {kind!r}")


def _pgd(objective, x0: np.ndarray, step: np.ndarray, lo: np.ndarray, hi: np.ndarray, iters: int,
         frame_index: int, check=None):
    """Signed-gradient ascent with projection; returns best, last and the traces."""
    x = np.clip(np.array(x0, dtype=np.float64), lo, hi)
    best_x, best_j = x.copy(), -np.inf
    trace, raw, warns = [], [], []
    checks = 0
    for i in range(iters + 1):
        p = ag.Tensor(x, requires_grad=True)
        j, l, w = objective(p)
        if not np.isfinite(j.item()):
            raise NumericalFailure(i, frame_index)
        trace.append(j.item())
        raw.append(l)
        warns += w
        if j.item() > best_j:
            best_j, best_x = j.item(), x.copy()
        if i == iters:
            break
        if j.requires_grad:
            (g,) = ag.grad(j, [p])
        else:
            g = np.zeros_like(x)
        x = np.clip(x + step * np.sign(g), lo, hi)
        if np.any(x < lo) or np.any(x > hi):
            raise ConstraintViolation(f"iterate left the constraint set at iteration {i + 1}")
        if check is not None:
            check(x, i + 1)
        checks += 1
    return best_x, x, trace, raw, warns, checks


class _Episode:
    """Shared driver: clean warm-up, then sequential per-frame optimization."""

    def __init__(self, tracker: Tracker, frames, t: int, cfg: AttackConfig, gt=None):
        self.frames = [np.asarray(f, dtype=np.float64) for f in frames]
        if not 0 <= t < len(self.frames):
            raise IndexError(f"attack frame {t} outside sequence of length {len(self.frames)}")
        self.tracker, self.t, self.cfg, self.gt = tracker, t, cfg, gt
        self.window = list(range(t, min(t + cfg.window, len(self.frames))))
        self.size = self.frames[0].shape[:2]
        self.clean_emitted = None
        if cfg.loss_kind == "tqf" and AnchorMode(cfg.anchor_mode) is AnchorMode.TRACKER_PREDICTIONS:
            trace, _ = tracker.run(self.frames[: self.window[-1] + 1])
            self.clean_emitted = [r.emitted for r in trace.records]
        _, self.state = tracker.run(self.frames[:t]) if t else (None, tracker.init_state())

    def run(self, make_frame, x0_fn, step, lo, hi, check=None) -> AttackResult:
        cfg, tracker = self.cfg, self.tracker
        best_frames = list(self.frames)
        last_frames = list(self.frames)
        params, last_params, traces, raws, warns = [], [], [], [], []
        checks = 0
        state = self.state
        for k in self.window:
            anchors = anchors_for_frame(k, self.gt, self.clean_emitted, cfg.anchor_mode, self.size) \
                if cfg.loss_kind == "tqf" else None
            base = self.frames[k]
            st = state

            def objective(p, base=base, st=st, anchors=anchors):
                if cfg.loss_kind == "bypass":
                    j = ag.sum_(p)
                    return j, j.item(), []
                st.frame_index = k
                out = tracker.forward(st, make_frame(base, p))
                term = frame_objective(out, cfg.loss_kind, cfg.weights, anchors, tracker.cfg)
                return -term.value, term.item(), term.warnings

            bx, lx, tr, rw, w, c = _pgd(objective, x0_fn(base), step, lo, hi, cfg.iters, k, check)
            checks += c
            params.append(bx)
            last_params.append(lx)
            traces.append(tr)
            raws.append(rw)
            warns += w
            best_frames[k] = make_frame(base, ag.Tensor(bx)).data
            last_frames[k] = make_frame(base, ag.Tensor(lx)).data
            state.frame_index = k
            state, _, _ = tracker.step(state, best_frames[k])
        return AttackResult(best_frames, last_frames, self.window, params, last_params, traces, raws,
                            warns, cfg.to_dict(), checks)


def pgd_digital(tracker: Tracker, frames, t: int, cfg: AttackConfig, gt=None) -> AttackResult:
    """L-infinity pixel attack: ``delta <- clip(delta + alpha sign(grad), -eps, eps)``."""
    ep = _Episode(tracker, frames, t, cfg, gt)
    shape = ep.frames[0].shape
    n = int(np.prod(shape))

    def make_frame(base, p):
        return ag.clamp(ag.reshape(p, shape) + base, 0.0, 1.0)

    lo, hi = np.full(n, -cfg.eps), np.full(n, cfg.eps)

    def check(x, i):
        if np.max(np.abs(x)) > cfg.eps:
            raise ConstraintViolation(f"|delta|_inf > eps at iteration {i}")

    return ep.run(make_frame, lambda base: np.zeros(n), np.full(n, cfg.step), lo, hi, check)


def pgd_aai(tracker: Tracker, frames, t: int, cfg: AttackConfig, bounds: ParamBounds | None = None,
            gt=None) -> AttackResult:
    """Acoustic blur attack over ``(x, y, phi)``, initialized at the bound minima."""
    ep = _Episode(tracker, frames, t, cfg, gt)
    H, W = ep.size
    bounds = bounds or ParamBounds.default(H, W)
    d_max = bounds.d_max or 0.03 * W
    lo, hi = bounds.aai_lo(), bounds.aai_hi()

    def make_frame(base, p):
        return simulate_aai(base, p, cfg.n_samples, d_max)

    def check(x, i):
        if np.any(x < lo) or np.any(x > hi):
            raise ConstraintViolation(f"AAI parameters out of bounds at iteration {i}")
        off = aai_offsets(x[0], x[1], x[2], cfg.n_samples, d_max)
        if np.max(np.linalg.norm(off, axis=1)) > d_max * (1 + 1e-12):
            raise ConstraintViolation(f"AAI displacement exceeds D_max at iteration {i}")

    return ep.run(make_frame, lambda base: lo.copy(), cfg.step * (hi - lo), lo, hi, check)


def pgd_eai(tracker: Tracker, frames, t: int, cfg: AttackConfig, bounds: ParamBounds | None = None,
            gt=None) -> AttackResult:
    """Electromagnetic stripe attack over stripe rows and widths."""
    ep = _Episode(tracker, frames, t, cfg, gt)
    H, W = ep.size
    bounds = bounds or ParamBounds.default(H, W)
    n = cfg.n_stripes
    lo, hi = bounds.eai_lo(n), bounds.eai_hi(n)
    rng = np.random.default_rng(cfg.seed)

    def init(base):
        if cfg.eai_init == "random":
            return rng.uniform(lo, hi)
        return np.concatenate([np.linspace(bounds.r[0], bounds.r[1], n, endpoint=False), np.full(n, bounds.w[0])])

    def make_frame(base, p):
        return simulate_eai(base, p, cfg.steepness, cfg.blend)

    def check(x, i):
        if np.any(x < lo) or np.any(x > hi):
            raise ConstraintViolation(f"EAI parameters out of bounds at iteration {i}")

    return ep.run(make_frame, init, cfg.step * (hi - lo), lo, hi, check)


def run_attack(tracker: Tracker, frames, t: int, cfg: AttackConfig, bounds: ParamBounds | None = None,
               gt=None) -> AttackResult:
    if cfg.vector == "digital":
        return pgd_digital(tracker, frames, t, cfg, gt)
    if cfg.vector == "aai":
        return pgd_aai(tracker, frames, t, cfg, bounds, gt)
    return pgd_eai(tracker, frames, t, cfg, bounds, gt)

"""Reusable experiment pieces: clean vs attacked episodes, defenses and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, AttackResult, run_attack
from .metrics import EvalReport, evaluate
from .sensors import ParamBounds, apply_defense
from .synthetic import Sequence, gen_synthetic_sequence, preset
from .tracker import StateTrace, Tracker, TrackerConfig, trace_to_trajectories

__all__ = [
    "Episode",
    "attack_episode",
    "defend_frames",
    "legit_terminations",
    "matched_cosine",
    "frame_seed",
]


def frame_seed(seed: int, k: int) -> int:
    """Independent per-frame seed derived from a run seed."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def defend_frames(frames, kind: str, seed: int = 0, **kw) -> list[np.ndarray]:
    return [apply_defense(kind, f, frame_seed(seed, k), **kw) for k, f in enumerate(frames)]


def legit_terminations(trace: StateTrace, t: int, horizon: int = 5) -> list[int]:
    """Identities alive entering frame ``t`` that terminate in frames ``t .. t + horizon``."""
    alive = set(trace[t].ids)
    gone = {i for rec in trace.records[t: t + horizon + 1] for i in rec.terminated}
    return sorted(alive & gone)


def matched_cosine(trace: StateTrace, t: int) -> float:
    """Mean frame-to-frame cosine of matched legitimate states at frame ``t`` (nan if none)."""
    c = trace[t].matched_cosines()
    return float(c.mean()) if len(c) else float("nan")


@dataclass
class Episode:
    clean_trace: StateTrace
    adv_trace: StateTrace
    clean: EvalReport
    attacked: EvalReport
    result: AttackResult

    def summary(self) -> dict:
        t = self.result.attacked[0]
        return {
            "clean": self.clean.to_dict(),
            "attacked": self.attacked.to_dict(),
            "attack": self.result.to_json(),
            "matched_cosine_clean": matched_cosine(self.clean_trace, t),
            "matched_cosine_attacked": matched_cosine(self.adv_trace, t),
            "legit_terminations_clean": legit_terminations(self.clean_trace, t),
            "legit_terminations_attacked": legit_terminations(self.adv_trace, t),
        }


def attack_episode(seq: Sequence | str, t: int, attack: AttackConfig, tracker_cfg: TrackerConfig | None = None,
                   gt=None, seed: int = 0, bounds: ParamBounds | None = None) -> Episode:
    """Track clean, attack frames ``t ..``, track the adversarial sequence, evaluate both."""
    if isinstance(seq, str):
        seq, gt = gen_synthetic_sequence(preset(seq, seed))
    if gt is None:
        raise ValueError("attack_episode needs ground truth")
    tracker = Tracker(tracker_cfg)
    clean_trace, _ = tracker.run(seq.frames)
    result = run_attack(tracker, seq.frames, t, attack, bounds=bounds, gt=gt)
    adv_trace, _ = tracker.run(result.frames)
    return Episode(clean_trace, adv_trace, evaluate(gt, trace_to_trajectories(clean_trace)),
                   evaluate(gt, trace_to_trajectories(adv_trace)), result)

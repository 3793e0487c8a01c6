"""The FADE loss components and their two composites.

Every component is written in its minimization form: flooding drives the
adversarial confidences to 1, cost mimicry drives the smooth-min matching
cost down, siphoning and decorrelation drive cosines to -1 and 0, and
erasure drives the state norms to 0. The attack loops ascend the negation.

Components with an empty input set return 0 and a warning instead of failing,
so a PGD loop over a frame without attack surface is a no-op.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field


from . import autograd as ag

__all__ = [
    "LossWeights",
    "AnchorMode",
    "LossTerm",
    "loss_flood",
    "loss_cost_mimicry",
    "loss_siphon",
    "loss_tqf",
    "loss_decorr",
    "loss_erase",
    "loss_tmc",
]


@dataclass
class LossWeights:
    flood: float = 1.0
    cost: float = 1.0
    siphon: float = 1.0
    decorr: float = 1.0
    erase: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v >= 0:
                raise ValueError(f"LossWeights.{k} must be nonnegative, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


class AnchorMode(str, enum.Enum):
    GROUND_TRUTH = "gt"
    TRACKER_PREDICTIONS = "pred"


@dataclass
class LossTerm:
    """A scalar loss tensor plus any warnings raised while computing it."""

    value: ag.Tensor
    warnings: list[str] = field(default_factory=list)

    def item(self) -> float:
        return self.value.item()

    def __float__(self) -> float:
        return self.item()


def _zero(msg: str) -> LossTerm:
    return LossTerm(ag.Tensor(0.0), [msg])


def _rows(x) -> ag.Tensor:
    x = ag.as_tensor(x)
    return ag.reshape(x, (1, -1)) if x.ndim == 1 else x


def loss_flood(adv_logits) -> LossTerm:
    """Confidence flooding: mean of ``(1 - max_c sigmoid(z))^2`` over adversarial queries."""
    z = ag.as_tensor(adv_logits)
    if z.size == 0:
        return _zero("flood: empty adversarial query set")
    z = z if z.ndim == 2 else ag.reshape(z, (-1, 1))
    conf, _ = ag.max_(ag.sigmoid(z), axis=-1)
    return LossTerm(ag.mean(ag.square(1.0 - conf)))


def loss_cost_mimicry(costs) -> LossTerm:
    """Smooth minimum of matching costs: mean over anchors of ``-log sum_i exp(-C_ij)``.

    Args:
        costs: ``(K, G)`` matching costs of ``K`` adversarial queries against ``G`` anchors.

    Raises:
        ValueError: when there are no adversarial queries.
    """
    C = ag.as_tensor(costs)
    if C.ndim != 2:
        raise ag.ShapeError("loss_cost_mimicry", C.shape)
    if C.shape[0] == 0:
        raise ValueError("loss_cost_mimicry: empty adversarial query set")
    if C.shape[1] == 0:
        return _zero("cost mimicry: no anchors")
    shift = C.data.min(axis=0, keepdims=True)  # constant; keeps exp() in range
    lse = ag.log(ag.sum_(ag.exp(shift - C), axis=0)) - shift[0]
    return LossTerm(ag.mean(-lse))


def loss_siphon(adv_states, anchor_states) -> LossTerm:
    """Identity siphoning: ``-mean_{i,j} cos(h_i^t, h_j^{t-1})``."""
    a, b = ag.as_tensor(adv_states), ag.as_tensor(anchor_states)
    if a.size == 0 or b.size == 0:
        return _zero("siphon: empty adversarial or anchor state set")
    a, b = _rows(a), _rows(b)
    K, D = a.shape
    J = b.shape[0]
    cos = ag.cosine(ag.reshape(a, (K, 1, D)), ag.reshape(b, (1, J, D)), axis=-1)
    return LossTerm(-ag.mean(cos))


def loss_decorr(h_now, h_prev) -> LossTerm:
    """Temporal decorrelation: mean cosine between identity-paired states."""
    a, b = ag.as_tensor(h_now), ag.as_tensor(h_prev)
    if a.size == 0 or b.size == 0:
        return _zero("decorr: no surviving track pairs")
    a, b = _rows(a), _rows(b)
    if a.shape != b.shape:
        raise ag.ShapeError("loss_decorr", a.shape, b.shape)
    return LossTerm(ag.mean(ag.cosine(a, b, axis=-1)))


def loss_erase(h_matched) -> LossTerm:
    """Track erasure: mean squared L2 norm of the matched states."""
    h = ag.as_tensor(h_matched)
    if h.size == 0:
        return _zero("erase: no matched states")
    h = _rows(h)
    return LossTerm(ag.mean(ag.sum_(ag.square(h), axis=-1)))


def _combine(parts: list[tuple[float, LossTerm]]) -> LossTerm:
    total = ag.Tensor(0.0)
    warnings: list[str] = []
    for w, term in parts:
        total = total + w * term.value
        warnings += term.warnings
    return LossTerm(total, warnings)


def loss_tqf(adv_logits, costs, adv_states, anchor_states, weights: LossWeights | None = None) -> LossTerm:
    """Temporal query flooding composite. Zero-weight components are not evaluated."""
    w = weights or LossWeights()
    parts = []
    if w.flood:
        parts.append((w.flood, loss_flood(adv_logits)))
    if w.cost:
        parts.append((w.cost, loss_cost_mimicry(costs)))
    if w.siphon:
        parts.append((w.siphon, loss_siphon(adv_states, anchor_states)))
    return _combine(parts)


def loss_tmc(h_now, h_prev, weights: LossWeights | None = None) -> LossTerm:
    """Temporal memory corruption composite. Zero-weight components are not evaluated."""
    w = weights or LossWeights()
    parts = []
    if w.decorr:
        parts.append((w.decorr, loss_decorr(h_now, h_prev)))
    if w.erase:
        parts.append((w.erase, loss_erase(h_now)))
    return _combine(parts)

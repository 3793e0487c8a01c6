"""A small differentiable tracking-by-propagation (TBP) tracker.

Each frame the tracker decodes the union of propagated track queries and a
fixed number of detection queries against a feature map, scores and boxes
every query, and hands the outputs to a query updater that produces the next
frame's track queries under a hard budget ``B``.

All weights are fixed random draws from ``TrackerConfig.seed``. Continuous
outputs (boxes, confidences, hidden states) are :class:`~tbp_attack.autograd.Tensor`
values differentiable with respect to the input pixels; every discrete
decision (proposal placement, keep/drop, budget selection, assignment) is
taken on detached values.
"""

from __future__ import annotations

import copy
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .assignment import hungarian_solve
from .boxes import cxcywh_to_xywh, iou_matrix, pairwise_giou, pairwise_l1
from .tracks import Trajectory, frames_to_trajectories

__all__ = [
    "TrackerConfig",
    "TrackerWeights",
    "TrackQuery",
    "MemoryBank",
    "TrackerState",
    "FrameOutput",
    "FrameRecord",
    "StateTrace",
    "Tracker",
    "extract_features",
    "decode",
    "match",
    "matching_cost",
    "update_tracks",
    "run_tracker",
    "memory_diagnostics",
]

log = logging.getLogger(__name__)


@dataclass
class TrackerConfig:
    """Tracker hyperparameters.

    The first block mirrors the usual TBP symbols; the second block holds the
    gains of the toy architecture (feature pooling, decoder, heads).
    """

    B: int = 16
    N_det: int = 16
    D: int = 32
    L: int = 2
    C: int = 16
    tau_keep: float = 0.7
    tau_drop: float = 0.3
    miss_tolerance: int = 5
    gamma: float = 0.5
    memory_enabled: bool = True
    K_mem: int = 8
    lambda_cls: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    tau_sim: float = 0.9
    seed: int = 0

    pool: int = 4
    n_classes: int = 1
    hidden: int = 64
    cross_gain: float = 5.0
    code_freq: float = 3.0  # > 0: sinusoidal code of the sample direction
    code_eta: float = 1e-2
    upd_linear: float = 3.0
    suppress_gain: float = 0.0  # weight of the linear skip path in the updater
    attn_scale: float = 1.0
    value_gain: float = 4.0
    mlp_gain: float = 1.0
    upd_gain: float = 1.0
    cls_gain: float = 3.0
    cls_bias: float = -7.0
    obj_gain: float = 10.0
    obj_sat: float = 0.02
    agree_gain: float = 12.0
    agree_offset: float = 0.9
    proposal_min: float = 0.15
    proposal_radius: float = 2.0
    anchor_margin: float = 4.0
    det_window: int = 8
    color_sigma: float = 0.15
    prior_mass: float = 0.5
    prior_size: float = 8.0
    dedup_iou: float = 0.5
    track_nms_iou: float = 0.7

    def __post_init__(self):
        if not 0 < self.tau_drop <= self.tau_keep < 1:
            raise ValueError("TrackerConfig: need 0 < tau_drop <= tau_keep < 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("TrackerConfig: gamma must lie in (0, 1]")
        if self.B < 1:
            raise ValueError("TrackerConfig: budget B must be >= 1")
        for name in ("N_det", "D", "L", "C", "K_mem", "pool", "n_classes", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"TrackerConfig: {name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class TrackerWeights:
    """Fixed random parameters drawn from the config seed."""

    def __init__(self, cfg: TrackerConfig):
        rng = np.random.default_rng(cfg.seed)
        D, C, Hd = cfg.D, cfg.C, cfg.hidden

        def nrm(*shape, fan_in):
            return rng.standard_normal(shape) / np.sqrt(fan_in)

        self.proj = nrm(3, C, fan_in=3)
        self.cross = [nrm(C, D, fan_in=C) for _ in range(cfg.L)]
        self.wq = [nrm(D, D, fan_in=D) for _ in range(cfg.L)]
        self.wk = [nrm(D, D, fan_in=D) for _ in range(cfg.L)]
        self.wv = [nrm(D, D, fan_in=D) for _ in range(cfg.L)]
        self.m1 = [nrm(D, Hd, fan_in=D) for _ in range(cfg.L)]
        self.b1 = [0.1 * rng.standard_normal(Hd) for _ in range(cfg.L)]
        self.m2 = [nrm(Hd, D, fan_in=Hd) for _ in range(cfg.L)]
        self.u1 = nrm(D, Hd, fan_in=D)
        self.c1 = 0.1 * rng.standard_normal(Hd)
        self.u2 = nrm(Hd, D, fan_in=Hd)
        self.w_cls = nrm(cfg.n_classes, D, fan_in=1)
        self.det_embed = rng.standard_normal((cfg.N_det, D))
        self.u_lin = nrm(D, D, fan_in=D)
        if cfg.suppress_gain:
            # duplicate suppression: attending to a confident query removes class evidence
            w = self.w_cls[0] / np.linalg.norm(self.w_cls[0])
            self.wv = [v - cfg.suppress_gain * np.outer(w, w) for v in self.wv]


# ---------------------------------------------------------------------------
# state
@dataclass
class TrackQuery:
    h: np.ndarray
    ref_box: np.ndarray  # normalized (cx, cy, w, h)
    identity: int | None = None
    age: int = 0
    miss_count: int = 0
    h_prev: np.ndarray | None = None
    conf: float = 0.0
    color: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.ref_box = np.clip(np.asarray(self.ref_box, dtype=np.float64), 0.0, 1.0)


class MemoryBank:
    """Per-identity ring buffer of the last ``K_mem`` embeddings."""

    def __init__(self, depth: int):
        if depth < 1:
            raise ValueError("MemoryBank depth must be >= 1")
        self.depth = depth
        self.entries: dict[int, deque] = {}

    def append(self, identity: int, frame: int, h: np.ndarray) -> None:
        buf = self.entries.setdefault(identity, deque(maxlen=self.depth))
        if buf and buf[-1][0] >= frame:
            raise ValueError("MemoryBank entries must be appended in frame order")
        buf.append((frame, np.array(h, dtype=np.float64)))

    def mean(self, identity: int) -> np.ndarray | None:
        buf = self.entries.get(identity)
        if not buf:
            return None
        return np.mean([h for _, h in buf], axis=0)

    def discard(self, identity: int) -> None:
        self.entries.pop(identity, None)

    def snapshot(self) -> dict[int, list[tuple[int, np.ndarray]]]:
        return {i: [(f, h.copy()) for f, h in buf] for i, buf in self.entries.items()}

    def __len__(self) -> int:
        return sum(len(b) for b in self.entries.values())


@dataclass
class TrackerState:
    track_queries: list[TrackQuery] = field(default_factory=list)
    memory: MemoryBank | None = None
    next_id: int = 1
    frame_index: int = 0

    def copy(self) -> "TrackerState":
        return copy.deepcopy(self)

    @property
    def identities(self) -> list[int]:
        return [q.identity for q in self.track_queries]


@dataclass
class FrameOutput:
    """Decoder outputs for one frame.

    Queries ``0..n_track-1`` are the incoming track queries (in state order),
    the rest are detection queries. Tensor fields carry the autograd graph.
    """

    boxes: ag.Tensor  # (Nq, 4) normalized cxcywh
    logits: ag.Tensor  # (Nq, n_classes)
    conf: ag.Tensor  # (Nq,)
    q_out: ag.Tensor  # (Nq, D)
    h_cand: ag.Tensor  # (Nq, D) candidate next states
    n_track: int
    track_ids: list[int]
    h_prev: np.ndarray  # (n_track, D) incoming states
    legit: np.ndarray  # (n_track,) tracks matched on the previous frame
    ref: np.ndarray  # (Nq, 2) reference centres, pixels (y, x)
    image_size: tuple[int, int]
    colors: np.ndarray  # (Nq, 3) detached colour signatures
    decisions: dict = field(default_factory=dict)  # replayable discrete choices
    matched: np.ndarray | None = None  # filled by update_tracks

    @property
    def n_queries(self) -> int:
        return self.conf.shape[0]

    @property
    def det_slice(self) -> slice:
        return slice(self.n_track, self.n_queries)

    def partition(self) -> tuple[list[int], list[int]]:
        """(matched, unmatched) query indices; a disjoint cover of all queries."""
        if self.matched is None:
            raise ValueError("partition is only defined after update_tracks")
        idx = np.arange(self.n_queries)
        return [int(i) for i in idx[self.matched]], [int(i) for i in idx[~self.matched]]

    def boxes_xywh(self) -> np.ndarray:
        H, W = self.image_size
        return cxcywh_to_xywh(self.boxes.data, W, H)


@dataclass
class FrameRecord:
    """Detached per-frame snapshot used by the losses and diagnostics."""

    frame: int
    ids: list[int]
    h_prev: np.ndarray
    h_new: np.ndarray
    legit: np.ndarray
    matched: np.ndarray
    conf: np.ndarray
    emitted: list[tuple[int, tuple[float, float, float, float]]]
    terminated: list[int]
    hidden: dict[int, np.ndarray]
    memory: dict[int, list[tuple[int, np.ndarray]]]

    def matched_cosines(self) -> np.ndarray:
        """cos(h^t, h^{t-1}) for tracks that were matched on the previous frame."""
        sel = self.legit.astype(bool)
        if not sel.any():
            return np.zeros(0)
        a, b = self.h_new[sel], self.h_prev[sel]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        return (a * b).sum(axis=1) / np.maximum(na * nb, 1e-12)


@dataclass
class StateTrace:
    records: list[FrameRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, t: int) -> FrameRecord:
        return self.records[t]

    def to_json(self) -> dict:
        out = []
        for r in self.records:
            out.append({
                "frame": r.frame,
                "ids": list(r.ids),
                "h_prev": r.h_prev.tolist(),
                "h_new": r.h_new.tolist(),
                "legit": r.legit.astype(bool).tolist(),
                "matched": r.matched.astype(bool).tolist(),
                "conf": r.conf.tolist(),
                "emitted": [[i, list(b)] for i, b in r.emitted],
                "terminated": list(r.terminated),
                "hidden": {str(k): v.tolist() for k, v in r.hidden.items()},
                "memory": {str(k): [[f, h.tolist()] for f, h in v] for k, v in r.memory.items()},
            })
        dim = int(self.records[0].h_prev.shape[1]) if self.records else 0
        return {"dim": dim, "records": out}

    @classmethod
    def from_json(cls, doc: dict) -> "StateTrace":
        if not isinstance(doc, dict) or "records" not in doc:
            raise ValueError("state trace document must contain 'records'")
        recs = []
        dim = int(doc.get("dim", 0))
        for r in doc["records"]:
            n = len(r["ids"])
            shape = (n, dim) if dim else (n, -1)
            recs.append(FrameRecord(
                frame=int(r["frame"]),
                ids=[int(i) for i in r["ids"]],
                h_prev=np.array(r["h_prev"], dtype=np.float64).reshape(shape),
                h_new=np.array(r["h_new"], dtype=np.float64).reshape(shape),
                legit=np.array(r["legit"], dtype=bool),
                matched=np.array(r["matched"], dtype=bool),
                conf=np.array(r["conf"], dtype=np.float64),
                emitted=[(int(i), tuple(float(v) for v in b)) for i, b in r["emitted"]],
                terminated=[int(i) for i in r["terminated"]],
                hidden={int(k): np.array(v) for k, v in r["hidden"].items()},
                memory={int(k): [(int(f), np.array(h)) for f, h in v] for k, v in r["memory"].items()},
            ))
        return cls(recs)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


# ---------------------------------------------------------------------------
# building blocks
def _layer_norm(x: ag.Tensor, eps: float = 1e-5) -> ag.Tensor:
    xc = x - ag.mean(x, axis=-1, keepdims=True)
    var = ag.mean(ag.square(xc), axis=-1, keepdims=True)
    return xc / ag.sqrt(var + eps)


def _silu(x: ag.Tensor) -> ag.Tensor:
    return x * ag.sigmoid(x)


def _smooth_norm(x: ag.Tensor, eta: float = 1e-3) -> ag.Tensor:
    """``sqrt(|x|^2 + eta^2) - eta``: a norm without the kink at the origin."""
    return ag.sqrt(ag.sum_(ag.square(x), axis=-1) + eta * eta) - eta


def _check_frame(frame: ag.Tensor) -> None:
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ag.ShapeError("extract_features", frame.shape)
    if frame.shape[0] < 16 or frame.shape[1] < 16:
        raise ValueError(f"extract_features: frame must be at least 16x16, got {frame.shape[:2]}")
    lo, hi = float(frame.data.min()), float(frame.data.max())
    if lo < 0.0 or hi > 1.0 or not np.isfinite(lo + hi):
        raise ValueError(f"extract_features: pixel values must lie in [0, 1], got [{lo:g}, {hi:g}]")


def extract_features(frame, weights: TrackerWeights, pool: int = 4) -> ag.Tensor:
    """4x4 average pooling followed by a fixed linear projection (no bias).

    Rows and columns beyond the last full pooling window are ignored.
    """
    frame = ag.as_tensor(frame)
    _check_frame(frame)
    H, W, _ = frame.shape
    Hp, Wp = H // pool, W // pool
    x = frame if (Hp * pool, Wp * pool) == (H, W) else frame[: Hp * pool, : Wp * pool]
    pooled = ag.mean(ag.reshape(x, (Hp, pool, Wp, pool, 3)), axis=(1, 3))
    return ag.reshape(ag.reshape(pooled, (Hp * Wp, 3)) @ weights.proj, (Hp, Wp, weights.proj.shape[1]))


def decode(queries: ag.Tensor, ref: np.ndarray, features: ag.Tensor, weights: TrackerWeights,
           cfg: TrackerConfig) -> tuple[ag.Tensor, ag.Tensor]:
    """Run the ``L`` decoder layers.

    Args:
        queries: ``(Nq, D)`` input embeddings.
        ref: ``(Nq, 2)`` reference centres in pixels, ``(y, x)``.
        features: ``(Hf, Wf, C)`` feature map (background-subtracted).

    Returns:
        ``(q_out, sample)``: decoded embeddings and the feature sampled at
        each reference point.
    """
    queries = ag.as_tensor(queries)
    if queries.ndim != 2 or queries.shape[1] != cfg.D or len(ref) != queries.shape[0]:
        raise ag.ShapeError("decode", queries.shape, np.shape(ref))
    cell = np.asarray(ref, dtype=np.float64) / cfg.pool - 0.5
    sample = ag.bilinear_sample(features, cell)
    if cfg.code_freq > 0:
        # scale-free colour direction; coverage changes only rescale the sample
        unit = sample / ag.sqrt(ag.sum_(ag.square(sample), axis=-1, keepdims=True) + cfg.code_eta ** 2)
    q = queries
    scale = cfg.attn_scale / np.sqrt(cfg.D)
    for layer in range(cfg.L):
        if cfg.code_freq > 0:
            drive = ag.sin_(cfg.code_freq * (unit @ weights.cross[layer]))
        else:
            drive = sample @ weights.cross[layer]
        q = _layer_norm(q + cfg.cross_gain * drive)
        scores = (q @ weights.wq[layer]) @ ag.transpose(q @ weights.wk[layer]) * scale
        mix = ag.softmax(scores, axis=-1) @ (q @ weights.wv[layer])
        q = _layer_norm(q + cfg.value_gain * mix)
        hid = _silu(q @ weights.m1[layer] + weights.b1[layer])
        q = _layer_norm(q + cfg.mlp_gain * (hid @ weights.m2[layer]))
    return q, sample


def _updater(q_out: ag.Tensor, weights: TrackerWeights, cfg: TrackerConfig) -> ag.Tensor:
    hid = _silu(cfg.upd_gain * (q_out @ weights.u1) + weights.c1)
    m = hid @ weights.u2
    if cfg.upd_linear:
        m = m + cfg.upd_linear * (q_out @ weights.u_lin)
    return m


# ---------------------------------------------------------------------------
# box head
def _moment_boxes(diff: ag.Tensor, centers: np.ndarray, halves: np.ndarray, colors: np.ndarray,
                  cfg: TrackerConfig, origins=None) -> tuple[ag.Tensor, np.ndarray, list]:
    """Boxes from local contrast moments around each centre.

    ``diff`` is the frame minus the background colour. Each pixel's mass is its
    contrast times a Gaussian affinity between its colour offset and the
    line through the query's colour signature, so overlapping objects of different colours do
    not merge. A coarse detached pass re-centres the window on the local
    centroid; the differentiable pass takes first and second moments inside
    it, with a small prior mass at the window centre so empty windows give a
    default box. Width follows from the variance of a uniform bar:
    ``w = sqrt(12 var + 1)``.

    Returns:
        ``(boxes, signatures, origins)``: normalized cxcywh boxes, the detached
        mass-weighted colour offset inside each window, and the integer window
        centres (pass them back in as ``origins`` to replay the re-centring).
    """
    H, W, _ = diff.shape
    kmax = int(halves.max()) if len(halves) else 1
    pad = 2 * kmax + 2
    zr = ag.Tensor(np.zeros((pad, W, 3)))
    padded = ag.concat([zr, diff, zr], axis=0)
    zc = ag.Tensor(np.zeros((H + 2 * pad, pad, 3)))
    padded = ag.concat([zc, padded, zc], axis=1)
    dpad = padded.data
    m0 = cfg.prior_mass
    v0 = (cfg.prior_size ** 2 - 1.0) / 12.0
    inv2s = 0.5 / cfg.color_sigma ** 2
    out, sigs, used = [], [], []
    for n, ((cy, cx), k, col) in enumerate(zip(centers, halves, colors)):
        k = int(k)
        win = lambda a, y, x: a[pad + y - k: pad + y + k + 1, pad + x - k: pad + x + k + 1]
        cc = float(col @ col) + 1e-4
        offs = np.arange(-k, k + 1)
        if origins is not None:
            y0, x0 = origins[n]
        else:
            y0, x0 = int(np.floor(cy)), int(np.floor(cx))
            # detached re-centring pass; pixel i has centre i + 0.5
            patch = win(dpad, y0, x0)
            mass_np = np.sqrt((patch ** 2).sum(-1) + 1e-6) - 1e-3
            frac = patch @ col / cc
            mass_np = mass_np * np.exp(-((patch - frac[..., None] * col) ** 2).sum(-1) * inv2s)
            tot = mass_np.sum()
            if tot > m0:
                y0 += int(np.round((mass_np.sum(axis=1) @ offs) / (tot + m0)))
                x0 += int(np.round((mass_np.sum(axis=0) @ offs) / (tot + m0)))
        used.append((y0, x0))
        p = win(padded, y0, x0)
        # partial-coverage pixels carry a scaled copy of the colour
        frac = p @ (col / cc)
        resid = p - ag.reshape(frac, frac.shape + (1,)) * col
        aff = ag.exp(ag.sum_(ag.square(resid), axis=-1) * (-inv2s))
        mass = _smooth_norm(p) * aff
        sig_w = mass.data
        sigs.append((sig_w[..., None] * p.data).sum((0, 1)) / max(sig_w.sum(), 1e-12) if sig_w.sum() > m0
                    else np.asarray(col, dtype=np.float64))
        offs = offs.astype(np.float64)
        total = ag.sum_(mass) + m0
        row = ag.sum_(mass, axis=1)
        colm = ag.sum_(mass, axis=0)
        my = ag.sum_(row * offs) / total
        mx = ag.sum_(colm * offs) / total
        vy = (ag.sum_(row * (offs ** 2)) + m0 * v0) / total - ag.square(my)
        vx = (ag.sum_(colm * (offs ** 2)) + m0 * v0) / total - ag.square(mx)
        hgt = ag.sqrt(12.0 * ag.clamp(vy, 0.0, None) + 1.0)
        wid = ag.sqrt(12.0 * ag.clamp(vx, 0.0, None) + 1.0)
        ccy = (my + (y0 + 0.5)) / H
        ccx = (mx + (x0 + 0.5)) / W
        out.append(ag.stack([ccx, ccy, wid / W, hgt / H]))
    if not out:
        return ag.Tensor(np.zeros((0, 4))), np.zeros((0, 3)), used
    return ag.clamp(ag.stack(out), 1e-6, 1.0), np.array(sigs), used


# ---------------------------------------------------------------------------
# matching
def matching_cost(outputs: FrameOutput, targets, rows=None, cfg: TrackerConfig | None = None) -> ag.Tensor:
    """Differentiable cost ``C(q_i, g_j)`` between query rows and target boxes.

    Targets are normalized ``(cx, cy, w, h)`` boxes.
    """
    cfg = cfg or TrackerConfig()
    tgt = ag.Tensor(np.asarray(targets, dtype=np.float64).reshape(-1, 4))
    rows = np.arange(outputs.n_queries) if rows is None else np.asarray(rows, dtype=np.int64)
    boxes = outputs.boxes[rows]
    conf = outputs.conf[rows]
    cls = ag.reshape(1.0 - conf, (len(rows), 1))
    return (cfg.lambda_cls * cls + cfg.lambda_l1 * pairwise_l1(boxes, tgt)
            + cfg.lambda_giou * (1.0 - pairwise_giou(boxes, tgt)))


def match(outputs: FrameOutput, targets, cfg: TrackerConfig | None = None) -> tuple[list[tuple[int, int]], ag.Tensor]:
    """Hungarian assignment of queries to targets under the matching cost.

    Returns the ``(query, target)`` pairs and the (differentiable) cost matrix.
    The assignment itself is a detached decision.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 4)
    if len(targets) == 0:
        return [], ag.Tensor(np.zeros((outputs.n_queries, 0)))
    cost = matching_cost(outputs, targets, cfg=cfg)
    if not np.all(np.isfinite(cost.data)):
        raise ValueError("match: non-finite cost entry")
    return hungarian_solve(cost.data), cost


# ---------------------------------------------------------------------------
class Tracker:
    """Bundles a config with its weights and the per-frame forward pass."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.weights = TrackerWeights(self.cfg)
        self._anchor_seed = int(np.random.default_rng(self.cfg.seed + 1).integers(1 << 30))

    def init_state(self) -> TrackerState:
        mem = MemoryBank(self.cfg.K_mem) if self.cfg.memory_enabled else None
        return TrackerState([], mem, 1, 0)

    # -- proposals -------------------------------------------------------
    def _anchors(self, Hp: int, Wp: int) -> np.ndarray:
        """Fixed pseudo-random order over all pooled cell centres (pixels)."""
        ys, xs = np.meshgrid(np.arange(Hp), np.arange(Wp), indexing="ij")
        cells = np.stack([ys.ravel(), xs.ravel()], axis=1)
        order = np.random.default_rng(self._anchor_seed + Hp * 1000 + Wp).permutation(len(cells))
        return (cells[order] + 0.5) * self.cfg.pool

    def _proposals(self, residual: np.ndarray, state: TrackerState, H: int, W: int) -> np.ndarray:
        cfg = self.cfg
        Hp, Wp, _ = residual.shape
        obj = np.linalg.norm(residual, axis=-1)
        # cells covered by boxes of tracks matched on the previous frame
        blocked = []
        for tq in state.track_queries:
            if tq.miss_count == 0:
                x, y, w, h = cxcywh_to_xywh(tq.ref_box, W, H)[0]
                blocked.append((y, x, y + h, x + w))

        def inside(py, px, margin):
            return any(y1 - margin <= py <= y2 + margin and x1 - margin <= px <= x2 + margin
                       for y1, x1, y2, x2 in blocked)

        picked: list[np.ndarray] = []
        order = np.argsort(-obj.ravel(), kind="stable")
        rad = cfg.proposal_radius * cfg.pool
        for flat in order:
            if len(picked) >= cfg.N_det or obj.ravel()[flat] < cfg.proposal_min:
                break
            cy, cx = divmod(int(flat), Wp)
            c = np.array([(cy + 0.5) * cfg.pool, (cx + 0.5) * cfg.pool])
            if inside(c[0], c[1], 0.0):
                continue
            if any(np.max(np.abs(c - p)) < rad for p in picked):
                continue
            picked.append(c)
        n_obj = len(picked)
        for c in self._anchors(Hp, Wp):
            if len(picked) >= cfg.N_det:
                break
            if inside(c[0], c[1], cfg.anchor_margin):
                continue
            if any(np.max(np.abs(c - p)) < rad for p in picked[:n_obj]):
                continue
            if any(np.max(np.abs(c - p)) < cfg.pool for p in picked[n_obj:]):
                continue
            picked.append(c)
        while len(picked) < cfg.N_det:  # tiny frames: reuse the grid
            picked.append(self._anchors(Hp, Wp)[len(picked) % (Hp * Wp)])
        return np.array(picked)

    # -- forward ---------------------------------------------------------
    def forward(self, state: TrackerState, frame, decisions: dict | None = None) -> FrameOutput:
        """Decode one frame given the incoming state (the state is not modified).

        Args:
            decisions: the ``decisions`` of an earlier output for the same
                state. Replaying them freezes proposal placement, detection
                colour probes and box windows, which makes the output a smooth
                function of the pixels (used by gradient checks).
        """
        cfg, wts = self.cfg, self.weights
        frame = ag.as_tensor(frame)
        feats = extract_features(frame, wts, cfg.pool)
        H, W, _ = frame.shape
        bg_feat = np.median(feats.data.reshape(-1, cfg.C), axis=0)
        residual = feats - bg_feat
        bg_color = np.median(frame.data.reshape(-1, 3), axis=0)

        tracks = state.track_queries
        M = len(tracks)
        det_ref = self._proposals(residual.data, state, H, W) if decisions is None else decisions["det_ref"]
        trk_ref = np.array([[tq.ref_box[1] * H, tq.ref_box[0] * W] for tq in tracks]).reshape(-1, 2)
        ref = np.concatenate([trk_ref, det_ref], axis=0)
        h_in = np.array([tq.h for tq in tracks]).reshape(M, cfg.D)
        q0 = ag.Tensor(np.concatenate([h_in, wts.det_embed], axis=0))

        q_out, sample = decode(q0, ref, residual, wts, cfg)
        objectness = _smooth_norm(sample)
        obj_term = cfg.obj_gain * (1.0 - ag.exp(-objectness / cfg.obj_sat))
        cls = (_layer_norm(q_out) @ ag.transpose(ag.Tensor(wts.w_cls))) * (cfg.cls_gain / np.sqrt(cfg.D))
        bonus = np.zeros(M + cfg.N_det)
        for i, tq in enumerate(tracks):
            anchor = None
            if state.memory is not None:
                anchor = state.memory.mean(tq.identity)
            if anchor is None:
                anchor = tq.h_prev if tq.h_prev is not None else tq.h
            agree = float(tq.h @ anchor / max(np.linalg.norm(tq.h) * np.linalg.norm(anchor), 1e-12))
            bonus[i] = cfg.agree_gain * (agree - cfg.agree_offset)
        logits = cls + ag.reshape(obj_term + (bonus + cfg.cls_bias), (-1, 1))
        conf, _ = ag.max_(ag.sigmoid(logits), axis=-1)

        halves = np.full(M + cfg.N_det, cfg.det_window)
        for i, tq in enumerate(tracks):
            size = max(tq.ref_box[2] * W, tq.ref_box[3] * H)
            halves[i] = int(np.clip(np.ceil(0.6 * size + 3), 5, 16))
        diff = frame - bg_color
        colors = np.zeros((M + cfg.N_det, 3))
        for i, tq in enumerate(tracks):
            colors[i] = tq.color
        strength = np.linalg.norm(diff.data, axis=-1)
        p = cfg.pool
        for j, (py, px) in enumerate(det_ref if decisions is None else []):
            # strongest pixel near the reference: edge pixels carry diluted colour
            y1, x1 = max(int(py) - p, 0), max(int(px) - p, 0)
            blk = strength[y1: int(py) + p, x1: int(px) + p]
            if blk.size:
                dy, dx = np.unravel_index(int(np.argmax(blk)), blk.shape)
                colors[M + j] = diff.data[y1 + dy, x1 + dx]
        if decisions is not None:
            colors[M:] = decisions["det_colors"]
        boxes, sigs, origins = _moment_boxes(diff, ref, halves, colors, cfg,
                                             None if decisions is None else decisions["origins"])

        m = _updater(q_out, wts, cfg)
        if M:
            g = cfg.gamma
            h_trk = (1.0 - g) * ag.Tensor(h_in) + g * m[:M]
            h_cand = ag.concat([h_trk, m[M:]], axis=0)
        else:
            h_cand = m
        legit = np.array([tq.miss_count == 0 for tq in tracks], dtype=bool)
        return FrameOutput(boxes, logits, conf, q_out, h_cand, M, [tq.identity for tq in tracks],
                           h_in, legit, ref, (H, W), sigs,
                           decisions={"det_ref": det_ref, "det_colors": colors[M:].copy(), "origins": origins})

    # -- update ----------------------------------------------------------
    def update(self, state: TrackerState, out: FrameOutput, assignment=None) -> tuple[TrackerState, FrameRecord]:
        return update_tracks(state, out, self.cfg, assignment)

    def step(self, state: TrackerState, frame) -> tuple[TrackerState, FrameOutput, FrameRecord]:
        out = self.forward(state, frame)
        new_state, rec = self.update(state, out)
        return new_state, out, rec

    def run(self, frames, state: TrackerState | None = None, start: int = 0):
        """Track ``frames``; returns per-frame emitted boxes, the trace and the final state."""
        state = state or self.init_state()
        trace = StateTrace()
        for k, frame in enumerate(frames):
            state.frame_index = start + k
            state, _, rec = self.step(state, frame)
            trace.records.append(rec)
        return trace, state


def update_tracks(state: TrackerState, out: FrameOutput, cfg: TrackerConfig,
                  assignment=None) -> tuple[TrackerState, FrameRecord]:
    """Query updater: momentum state update, keep/drop, promotion and the budget.

    ``assignment`` optionally overrides which track queries count as matched
    (an iterable of query indices); by default a track query is matched when
    its confidence reaches ``tau_keep``.
    """
    t = state.frame_index
    conf = out.conf.data
    boxes = out.boxes.data
    h_cand = out.h_cand.data
    M = out.n_track
    H, W = out.image_size
    if assignment is None:
        matched_trk = conf[:M] >= cfg.tau_keep
    else:
        matched_trk = np.zeros(M, dtype=bool)
        matched_trk[[i for i in assignment if i < M]] = True
    new_state = TrackerState([], copy.deepcopy(state.memory), state.next_id, t + 1)

    # (a)/(b) existing tracks
    kept: list[tuple[TrackQuery, bool, int]] = []  # (query, matched, query index)
    terminated: list[int] = []
    for i, tq in enumerate(state.track_queries):
        nq = TrackQuery(tq.h.copy(), tq.ref_box.copy(), tq.identity, tq.age + 1, tq.miss_count,
                        None if tq.h_prev is None else tq.h_prev.copy(), float(conf[i]), tq.color.copy())
        if matched_trk[i]:
            nq.h_prev = tq.h.copy()
            nq.h = h_cand[i].copy()
            nq.miss_count = 0
            nq.ref_box = boxes[i].copy()
            nq.color = out.colors[i].copy()
        else:
            nq.miss_count += 1
            if nq.miss_count > cfg.miss_tolerance or conf[i] < cfg.tau_drop:
                terminated.append(tq.identity)
                continue
        kept.append((nq, bool(matched_trk[i]), i))

    # duplicate matched tracks: keep the older one
    kept.sort(key=lambda e: (-e[0].age, e[0].identity))
    xywh = cxcywh_to_xywh(boxes, W, H)
    final: list[tuple[TrackQuery, bool, int]] = []
    for e in kept:
        if e[1] and any(f[1] and iou_matrix(xywh[e[2]], xywh[f[2]])[0, 0] > cfg.track_nms_iou for f in final):
            terminated.append(e[0].identity)
            continue
        final.append(e)
    kept = sorted(final, key=lambda e: e[2])

    # (c) promotions
    det_idx = [j for j in range(M, out.n_queries) if conf[j] >= cfg.tau_keep]
    det_idx.sort(key=lambda j: (-conf[j], j))
    matched_boxes = [xywh[e[2]] for e in kept if e[1]]
    promos: list[int] = []
    for j in det_idx:
        if any(iou_matrix(xywh[j], b)[0, 0] >= cfg.dedup_iou for b in matched_boxes):
            continue
        if any(iou_matrix(xywh[j], xywh[p])[0, 0] >= cfg.dedup_iou for p in promos):
            continue
        promos.append(j)

    # (d) budget: top-B by confidence, ties -> older track, then lower id
    cands = [(float(conf[e[2]]), e[0].age, e[0].identity, "track", e) for e in kept]
    cands += [(float(conf[j]), -1, np.inf, "det", j) for j in promos]
    cands.sort(key=lambda c: (-c[0], -c[1], c[2], c[4] if c[3] == "det" else -1))
    chosen, evicted = cands[: cfg.B], cands[cfg.B:]
    for c in evicted:
        if c[3] == "track":
            terminated.append(c[4][0].identity)
    chosen_tracks = sorted([c[4] for c in chosen if c[3] == "track"], key=lambda e: e[2])
    chosen_dets = [c[4] for c in chosen if c[3] == "det"]  # already in confidence order

    emitted = []
    matched_q = np.zeros(out.n_queries, dtype=bool)
    for nq, was_matched, i in chosen_tracks:
        new_state.track_queries.append(nq)
        if was_matched:
            matched_q[i] = True
            emitted.append((nq.identity, tuple(float(v) for v in xywh[i])))
            if new_state.memory is not None:
                new_state.memory.append(nq.identity, t, nq.h)
    for j in chosen_dets:
        ident = new_state.next_id
        new_state.next_id += 1
        nq = TrackQuery(h_cand[j].copy(), boxes[j].copy(), ident, 0, 0, None, float(conf[j]), out.colors[j].copy())
        new_state.track_queries.append(nq)
        matched_q[j] = True
        emitted.append((ident, tuple(float(v) for v in xywh[j])))
        if new_state.memory is not None:
            new_state.memory.append(ident, t, nq.h)
    if new_state.memory is not None:
        for ident in terminated:
            new_state.memory.discard(ident)
    assert len(new_state.track_queries) <= cfg.B
    out.matched = matched_q

    rec = FrameRecord(
        frame=t,
        ids=list(out.track_ids),
        h_prev=out.h_prev.copy(),
        h_new=h_cand[:M].copy(),
        legit=out.legit.copy(),
        matched=matched_trk.copy(),
        conf=conf.copy(),
        emitted=emitted,
        terminated=terminated,
        hidden={q.identity: q.h.copy() for q in new_state.track_queries},
        memory=new_state.memory.snapshot() if new_state.memory is not None else {},
    )
    return new_state, rec


def run_tracker(frames, cfg: TrackerConfig | None = None) -> tuple[list[Trajectory], StateTrace]:
    """Track a whole sequence; returns predicted trajectories (1-based frames) and the trace."""
    frames = list(frames.frames if hasattr(frames, "frames") else frames)
    if not frames:
        raise ValueError("run_tracker: empty sequence")
    tracker = Tracker(cfg)
    trace, _ = tracker.run(frames)
    return trace_to_trajectories(trace), trace


def trace_to_trajectories(trace: StateTrace) -> list[Trajectory]:
    per_frame = {rec.frame + 1: rec.emitted for rec in trace.records}
    return frames_to_trajectories(per_frame)


def memory_diagnostics(trace: StateTrace, t: int) -> dict[str, np.ndarray]:
    """Self-similarity, norms, spreads and cross-similarity of the memory bank at frame ``t``.

    Bank entries are stacked identity by identity (ascending) in frame order.
    """
    if not 0 <= t < len(trace):
        raise IndexError(f"memory_diagnostics: frame {t} outside trace of length {len(trace)}")
    rec = trace[t]
    bank = [h for ident in sorted(rec.memory) for _, h in rec.memory[ident]]
    current = [rec.hidden[i] for i in sorted(rec.hidden)]
    if not bank:
        n = len(current)
        return {"self_similarity": np.zeros((0, 0)), "l2_norms": np.zeros(0), "std_devs": np.zeros(0),
                "cross_similarity": np.zeros((n, 0))}
    Mb = np.array(bank)
    norms = np.linalg.norm(Mb, axis=1)
    unit = Mb / np.maximum(norms, 1e-12)[:, None]
    cross = np.zeros((len(current), len(bank)))
    if current:
        Q = np.array(current)
        Q = Q / np.maximum(np.linalg.norm(Q, axis=1), 1e-12)[:, None]
        cross = Q @ unit.T
    return {
        "self_similarity": unit @ unit.T,
        "l2_norms": norms,
        "std_devs": Mb.std(axis=1),
        "cross_similarity": cross,
    }

"""HOTA-family and identity metrics for multi-object tracking.

Association is scored over true-positive detections only: a ground-truth
detection that is never matched lowers DetA but not AssA. Under this
convention a track that is followed perfectly for half its life and then lost
scores DetA = 0.5, AssA = 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .assignment import hungarian_solve
from .boxes import iou, iou_matrix
from .tracks import Trajectory, trajectories_to_frames

__all__ = ["iou", "hungarian_solve", "EvalReport", "evaluate", "report_table", "DEFAULT_ALPHAS"]

DEFAULT_ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class EvalReport:
    HOTA: float
    DetA: float
    AssA: float
    IDF1: float
    IDR: float
    IDP: float
    IDSW: int
    IDSW_per_track: float
    n_gt_tracks: int
    alphas: list[float] = field(default_factory=list)
    HOTA_alpha: list[float] = field(default_factory=list)
    DetA_alpha: list[float] = field(default_factory=list)
    AssA_alpha: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        names = {f.name for f in fields(cls)}
        missing = sorted(n for n in ("HOTA", "DetA", "AssA", "IDF1", "IDR", "IDP", "IDSW") if n not in doc)
        if missing:
            raise ValueError(f"EvalReport: missing field(s) {missing}")
        return cls(**{"IDSW_per_track": 0.0, "n_gt_tracks": 0, **{k: v for k, v in doc.items() if k in names}})


def _frame_match(ious: np.ndarray, alpha: float) -> list[tuple[int, int]]:
    """Maximum-cardinality matching among pairs with IoU >= alpha, then max total IoU."""
    if ious.size == 0:
        return []
    ok = ious >= alpha
    if not ok.any():
        return []
    big = float(min(ious.shape) + 1)
    cost = np.where(ok, 1.0 - ious, big)
    return [(r, c) for r, c in hungarian_solve(cost) if ok[r, c]]


def _frame_tables(gt: list[Trajectory], pred: list[Trajectory]):
    gf = trajectories_to_frames(gt)
    pf = trajectories_to_frames(pred)
    out = []
    for f in sorted(set(gf) | set(pf)):
        g = gf.get(f, [])
        p = pf.get(f, [])
        gids = [i for i, _ in g]
        pids = [i for i, _ in p]
        ious = iou_matrix(np.array([b for _, b in g]).reshape(-1, 4), np.array([b for _, b in p]).reshape(-1, 4))
        out.append((f, gids, pids, ious))
    return out


def _hota_alpha(tables, alpha: float, n_gt: int, n_pred: int) -> tuple[float, float]:
    matches = []
    for _, gids, pids, ious in tables:
        matches += [(gids[r], pids[c]) for r, c in _frame_match(ious, alpha)]
    tp = len(matches)
    if tp == 0:
        return 0.0, 0.0
    det = tp / (n_gt + n_pred - tp)
    pair, per_g, per_p = {}, {}, {}
    for g, p in matches:
        pair[(g, p)] = pair.get((g, p), 0) + 1
        per_g[g] = per_g.get(g, 0) + 1
        per_p[p] = per_p.get(p, 0) + 1
    ass = 0.0
    for g, p in matches:
        tpa = pair[(g, p)]
        ass += tpa / (per_g[g] + per_p[p] - tpa)
    return det, ass / tp


def _identity_scores(tables, gt, pred, thr: float = 0.5) -> tuple[float, float, float]:
    gi = {t.identity: k for k, t in enumerate(gt)}
    pi = {t.identity: k for k, t in enumerate(pred)}
    hits = np.zeros((len(gt), len(pred)))
    for _, gids, pids, ious in tables:
        for r, c in zip(*np.nonzero(ious >= thr)):
            hits[gi[gids[r]], pi[pids[c]]] += 1
    idtp = 0.0
    if hits.size:
        idtp = float(sum(hits[r, c] for r, c in hungarian_solve(-hits)))
    n_gt = sum(len(t) for t in gt)
    n_pred = sum(len(t) for t in pred)
    idr = idtp / n_gt if n_gt else 0.0
    idp = idtp / n_pred if n_pred else 0.0
    idf1 = 2 * idtp / (n_gt + n_pred) if n_gt + n_pred else 0.0
    return idf1, idr, idp


def _id_switches(tables, thr: float = 0.5) -> int:
    last: dict[int, int] = {}
    sw = 0
    for _, gids, pids, ious in tables:
        for r, c in _frame_match(ious, thr):
            g, p = gids[r], pids[c]
            if g in last and last[g] != p:
                sw += 1
            last[g] = p
    return sw


def evaluate(gt: list[Trajectory], pred: list[Trajectory], alphas=DEFAULT_ALPHAS) -> EvalReport:
    """Score predicted trajectories against ground truth.

    Args:
        gt: ground-truth trajectories (pixel ``x, y, w, h`` boxes).
        pred: predicted trajectories on the same frame numbering.
        alphas: IoU thresholds averaged by HOTA.

    Returns:
        An :class:`EvalReport`. With no ground truth and no predictions all
        scores are 1 (vacuously perfect); with ground truth but no
        predictions, all scores are 0.
    """
    alphas = [float(a) for a in alphas]
    n_gt = sum(len(t) for t in gt)
    n_pred = sum(len(t) for t in pred)
    n_tracks = sum(1 for t in gt if len(t))
    if n_gt == 0 and n_pred == 0:
        ones = [1.0] * len(alphas)
        return EvalReport(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0, 0.0, 0, alphas, ones, ones, ones)
    tables = _frame_tables(gt, pred)
    det_a, ass_a, hota_a = [], [], []
    for a in alphas:
        d, s = _hota_alpha(tables, a, n_gt, n_pred)
        det_a.append(d)
        ass_a.append(s)
        hota_a.append(float(np.sqrt(d * s)))
    idf1, idr, idp = _identity_scores(tables, gt, pred)
    sw = _id_switches(tables)
    return EvalReport(
        HOTA=float(np.mean(hota_a)),
        DetA=float(np.mean(det_a)),
        AssA=float(np.mean(ass_a)),
        IDF1=idf1,
        IDR=idr,
        IDP=idp,
        IDSW=sw,
        IDSW_per_track=sw / n_tracks if n_tracks else 0.0,
        n_gt_tracks=n_tracks,
        alphas=alphas,
        HOTA_alpha=hota_a,
        DetA_alpha=det_a,
        AssA_alpha=ass_a,
    )


_COLUMNS = ("HOTA", "DetA", "AssA", "IDF1", "IDR", "IDP")


def report_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Aligned text table; scores in percent, rows after the first show deltas to it."""
    head = ["label"] + [f"{c}" for c in _COLUMNS] + ["IDSW", "IDSW/trk"]
    lines = []
    base = rows[0][1] if rows else None
    for k, (label, r) in enumerate(rows):
        cells = [label]
        for c in _COLUMNS:
            v = 100 * getattr(r, c)
            cell = f"{v:.2f}"
            if k and base is not None:
                cell += f" ({v - 100 * getattr(base, c):+.2f})"
            cells.append(cell)
        sw = f"{r.IDSW}"
        if k and base is not None:
            sw += f" ({r.IDSW - base.IDSW:+d})"
        cells += [sw, f"{r.IDSW_per_track:.3f}"]
        lines.append(cells)
    widths = [max(len(x) for x in col) for col in zip(head, *lines)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [fmt(head), "  ".join("-" * w for w in widths)]
    out += [fmt(c) for c in lines]
    return "\n".join(out) + "\n"

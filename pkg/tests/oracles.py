"""Brute-force reference implementations used as test oracles.

Nothing here imports the package's assignment solver or metric internals:
matchings are found by enumerating every partial injection.
"""

from __future__ import annotations

import itertools

import numpy as np


def box_iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def partial_injections(n_rows: int, n_cols: int):
    """Every set of (row, col) pairs with distinct rows and distinct columns."""
    for k in range(min(n_rows, n_cols) + 1):
        for rows in itertools.combinations(range(n_rows), k):
            for cols in itertools.permutations(range(n_cols), k):
                yield list(zip(rows, cols))


def best_frame_matching(ious: np.ndarray, alpha: float):
    """Most pairs with IoU >= alpha; among those, the largest total IoU."""
    best, key = [], (-1, -np.inf)
    for m in partial_injections(*ious.shape):
        if any(ious[r, c] < alpha for r, c in m):
            continue
        k = (len(m), sum(ious[r, c] for r, c in m))
        if k > key:
            best, key = m, k
    return best


def _frames(trajs):
    out = {}
    for tr in trajs:
        for f, b in tr.boxes:
            out.setdefault(f, []).append((tr.identity, b))
    return out


def _tables(gt, pred):
    gf, pf = _frames(gt), _frames(pred)
    rows = []
    for f in sorted(set(gf) | set(pf)):
        g, p = gf.get(f, []), pf.get(f, [])
        ious = np.array([[box_iou(a, b) for _, b in p] for _, a in g]).reshape(len(g), len(p))
        rows.append(([i for i, _ in g], [i for i, _ in p], ious))
    return rows


def oracle_scores(gt, pred, alphas) -> dict:
    n_gt = sum(len(t) for t in gt)
    n_pred = sum(len(t) for t in pred)
    if n_gt == 0 and n_pred == 0:
        return {"HOTA_alpha": [1.0] * len(alphas), "DetA_alpha": [1.0] * len(alphas),
                "AssA_alpha": [1.0] * len(alphas), "IDF1": 1.0, "IDSW": 0}
    tables = _tables(gt, pred)
    det_a, ass_a, hota_a = [], [], []
    for a in alphas:
        matches = [(g[r], p[c]) for g, p, m in tables for r, c in best_frame_matching(m, a)]
        tp = len(matches)
        if tp == 0:
            det_a.append(0.0)
            ass_a.append(0.0)
            hota_a.append(0.0)
            continue
        det = tp / (n_gt + n_pred - tp)
        ass = 0.0
        for g, p in matches:
            tpa = sum(1 for x in matches if x == (g, p))
            fna = sum(1 for x in matches if x[0] == g) - tpa
            fpa = sum(1 for x in matches if x[1] == p) - tpa
            ass += tpa / (tpa + fna + fpa)
        ass /= tp
        det_a.append(det)
        ass_a.append(ass)
        hota_a.append(float(np.sqrt(det * ass)))
    # identity F1: best global one-to-one identity assignment
    gids = [t.identity for t in gt]
    pids = [t.identity for t in pred]
    hits = {}
    for g, p, m in tables:
        for r in range(len(g)):
            for c in range(len(p)):
                if m[r, c] >= 0.5:
                    hits[(g[r], p[c])] = hits.get((g[r], p[c]), 0) + 1
    idtp = max(sum(hits.get((gids[r], pids[c]), 0) for r, c in inj)
               for inj in partial_injections(len(gids), len(pids)))
    idf1 = 2 * idtp / (n_gt + n_pred)
    # identity switches on the per-frame matching at IoU 0.5
    last, sw = {}, 0
    for g, p, m in tables:
        for r, c in best_frame_matching(m, 0.5):
            if g[r] in last and last[g[r]] != p[c]:
                sw += 1
            last[g[r]] = p[c]
    return {"HOTA_alpha": hota_a, "DetA_alpha": det_a, "AssA_alpha": ass_a, "IDF1": idf1, "IDSW": sw}


def micro_scene(rng: np.random.Generator):
    """Random scene with at most 3 ground-truth tracks and at most 5 frames.

    Predictions are jittered copies of ground truth with random drops,
    identity swaps and spurious boxes, so every IoU regime is exercised.
    """
    from tbp_attack.tracks import Trajectory

    n_frames = int(rng.integers(1, 6))
    n_tracks = int(rng.integers(0, 4))
    gt, per_pred = [], {}
    for k in range(n_tracks):
        start = int(rng.integers(1, n_frames + 1))
        stop = int(rng.integers(start, n_frames + 1))
        x, y = rng.uniform(0, 30, 2)
        w, h = rng.uniform(4, 10, 2)
        vx, vy = rng.uniform(-3, 3, 2)
        boxes = []
        for f in range(start, stop + 1):
            b = (x + vx * f, y + vy * f, w, h)
            boxes.append((f, b))
            if rng.random() < 0.85:
                jit = rng.normal(0, rng.choice([0.3, 1.0, 2.5]), 4)
                pb = (b[0] + jit[0], b[1] + jit[1], max(1.0, b[2] + jit[2]), max(1.0, b[3] + jit[3]))
                pid = k + 1 if rng.random() < 0.8 else int(rng.integers(1, 5))
                per_pred.setdefault(pid, {})
                if f not in per_pred[pid]:
                    per_pred[pid][f] = pb
        gt.append(Trajectory(k + 1, boxes))
    for _ in range(int(rng.integers(0, 3))):
        f = int(rng.integers(1, n_frames + 1))
        pid = int(rng.integers(5, 7))
        per_pred.setdefault(pid, {}).setdefault(f, tuple(rng.uniform([0, 0, 3, 3], [30, 30, 9, 9])))
    pred = [Trajectory(pid, sorted(fr.items())) for pid, fr in sorted(per_pred.items()) if fr]
    return gt, pred

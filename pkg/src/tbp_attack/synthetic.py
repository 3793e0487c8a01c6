"""Deterministic synthetic video scenes with exact ground-truth boxes.

Objects are axis-aligned rectangles (or Gaussian blobs) rendered with exact
area coverage, so sub-pixel motion produces sub-pixel accurate pixels and the
ground-truth boxes are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tracks import Trajectory

__all__ = ["ObjectSpec", "SceneSpec", "Sequence", "gen_synthetic_sequence", "preset", "PRESETS"]


@dataclass
class ObjectSpec:
    x: float  # top-left at frame 0, pixels
    y: float
    w: float
    h: float
    vx: float = 0.0  # pixels per frame
    vy: float = 0.0
    color: tuple[float, float, float] = (0.9, 0.2, 0.2)
    shape: str = "rect"  # "rect" | "blob"


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 96
    length: int = 20
    background: tuple[float, float, float] = (0.15, 0.15, 0.15)
    objects: list[ObjectSpec] = field(default_factory=list)
    seed: int = 0
    fps: float = 30.0
    name: str = "scene"


@dataclass
class Sequence:
    frames: list[np.ndarray]
    fps: float = 30.0
    name: str = "seq"

    def __post_init__(self):
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError(f"sequence frames have mixed shapes: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]


def _coverage(lo: float, hi: float, n: int) -> np.ndarray:
    """Fraction of each unit pixel ``[i, i+1)`` covered by ``[lo, hi)``."""
    edges = np.arange(n + 1, dtype=np.float64)
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, 1.0)


def _render_object(frame: np.ndarray, ob: ObjectSpec, x: float, y: float) -> None:
    H, W, _ = frame.shape
    color = np.asarray(ob.color, dtype=np.float64)
    if ob.shape == "rect":
        alpha = np.outer(_coverage(y, y + ob.h, H), _coverage(x, x + ob.w, W))
    elif ob.shape == "blob":
        yy = np.arange(H) + 0.5
        xx = np.arange(W) + 0.5
        cy, cx = y + ob.h / 2, x + ob.w / 2
        sy, sx = ob.h / 4, ob.w / 4
        alpha = np.outer(np.exp(-0.5 * ((yy - cy) / sy) ** 2), np.exp(-0.5 * ((xx - cx) / sx) ** 2))
    else:
        raise ValueError(f"unknown object shape {ob.shape!r}")
    frame *= 1.0 - alpha[..., None]
    frame += alpha[..., None] * color


def _clip_box(x, y, w, h, W, H):
    x1, y1 = max(x, 0.0), max(y, 0.0)
    x2, y2 = min(x + w, float(W)), min(y + h, float(H))
    if x2 <= x1 or y2 <= y1:
        return None
    return (x1, y1, x2 - x1, y2 - y1)


def gen_synthetic_sequence(spec: SceneSpec) -> tuple[Sequence, list[Trajectory]]:
    """Render ``spec`` and return the sequence plus ground-truth trajectories.

    Ground-truth frames are 1-based; identities are ``1..n`` in object order.
    Objects partly outside the canvas are clipped; fully outside, they are
    absent from the ground truth for that frame.
    """
    if spec.length < 1:
        raise ValueError("scene length must be >= 1")
    H, W = spec.height, spec.width
    bg = np.asarray(spec.background, dtype=np.float64)
    frames = []
    tracks = {i + 1: Trajectory(i + 1, []) for i in range(len(spec.objects))}
    for t in range(spec.length):
        frame = np.empty((H, W, 3))
        frame[:] = bg
        for i, ob in enumerate(spec.objects):
            x, y = ob.x + ob.vx * t, ob.y + ob.vy * t
            _render_object(frame, ob, x, y)
            box = _clip_box(x, y, ob.w, ob.h, W, H)
            if box is not None:
                tracks[i + 1].boxes.append((t + 1, box))
        frames.append(np.clip(frame, 0.0, 1.0))
    gt = [tr for tr in tracks.values() if tr.boxes]
    return Sequence(frames, fps=spec.fps, name=spec.name), gt


def _palette(rng: np.random.Generator, n: int) -> list[tuple[float, float, float]]:
    """Well-separated saturated colours (evenly spaced hues, jittered)."""
    out = []
    offset = rng.uniform(0, 1)
    for k in range(n):
        hue = (offset + k / max(n, 1)) % 1.0
        sat = rng.uniform(0.6, 0.9)
        val = rng.uniform(0.75, 0.95)
        i = int(hue * 6) % 6
        f = hue * 6 - int(hue * 6)
        p, q, tt = val * (1 - sat), val * (1 - f * sat), val * (1 - (1 - f) * sat)
        rgb = [(val, tt, p), (q, val, p), (p, val, tt), (p, q, val), (tt, p, val), (val, p, q)][i]
        out.append(tuple(float(c) for c in rgb))
    return out


def _sparse(seed: int, length: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    colors = _palette(rng, 3)
    objs = []
    for k, lane in enumerate((8.0, 28.0, 46.0)):
        w, h = rng.uniform(10, 13), rng.uniform(9, 12)
        x = rng.uniform(8, 70)
        vx = rng.uniform(0.3, 0.8) * rng.choice([-1, 1])
        objs.append(ObjectSpec(x, lane + rng.uniform(-2, 2), w, h, vx, rng.uniform(-0.1, 0.1), colors[k]))
    return SceneSpec(64, 96, length, objects=objs, seed=seed, name="sparse")


def _crossing(seed: int, length: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    colors = _palette(rng, 2)
    speed = 68.0 / max(length - 1, 1)
    y0 = rng.uniform(22, 26)
    a = ObjectSpec(8.0, y0, 12.0, 12.0, speed, 0.0, colors[0])
    b = ObjectSpec(76.0, y0 + 6.0, 12.0, 12.0, -speed, 0.0, colors[1])
    return SceneSpec(64, 96, length, objects=[a, b], seed=seed, name="crossing")


def _dense(seed: int, length: int) -> SceneSpec:
    """Twelve small objects that stay >= 16 px apart (centre to centre) and
    inside the canvas for the whole sequence."""
    rng = np.random.default_rng(seed)
    colors = _palette(rng, 12)
    objs: list[ObjectSpec] = []
    paths: list[np.ndarray] = []
    ts = np.arange(length)[:, None]
    attempts = 0
    while len(objs) < 12:
        attempts += 1
        if attempts > 20000:
            raise RuntimeError("dense preset: could not place objects")
        w, h = rng.uniform(7, 9), rng.uniform(7, 9)
        x, y = rng.uniform(3, 96 - 3 - w), rng.uniform(3, 64 - 3 - h)
        vx, vy = rng.uniform(-0.2, 0.2, 2)
        path = np.array([x + w / 2, y + h / 2]) + ts * np.array([vx, vy])
        xs, ys = path[:, 0] - w / 2, path[:, 1] - h / 2
        if xs.min() < 1 or xs.max() + w > 95 or ys.min() < 1 or ys.max() + h > 63:
            continue
        if any(np.min(np.linalg.norm(path - p, axis=1)) < 16.0 for p in paths):
            continue
        paths.append(path)
        objs.append(ObjectSpec(x, y, w, h, vx, vy, colors[len(objs)]))
    return SceneSpec(64, 96, length, objects=objs, seed=seed, name="dense")


PRESETS = {"sparse": _sparse, "crossing": _crossing, "dense": _dense}


def preset(name: str, seed: int = 0, length: int = 20) -> SceneSpec:
    """Canned scenes: ``sparse`` (3 objects), ``crossing`` (2 objects swap sides),
    ``dense`` (12 objects on a 64x96 canvas)."""
    try:
        return PRESETS[name](seed, length)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

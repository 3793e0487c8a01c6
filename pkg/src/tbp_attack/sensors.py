"""Differentiable sensor-spoofing simulators and input-transform defenses.

AAI (acoustic injection) shakes the stabilized lens during the exposure; the
frame is simulated as the average of sinusoidally translated copies. EAI
(electromagnetic injection) corrupts raw readout: the frame is re-mosaiced to
RGGB, green sites are dropped, the result is demosaiced and blended back in
through a soft horizontal stripe mask.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag

__all__ = [
    "AaiParams",
    "EaiParams",
    "ParamBounds",
    "aai_offsets",
    "simulate_aai",
    "simulate_eai",
    "soft_stripe_mask",
    "bayer_masks",
    "demosaic_green_drop",
    "apply_defense",
    "gaussian_kernel",
    "clip_params",
    "DEFENSES",
]

D_MAX_FRACTION = 0.03  # OIS saturation as a fraction of the frame width
W_MIN, W_MAX = 5.0, 50.0  # stripe widths in rows


@dataclass
class AaiParams:
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0
    n_samples: int = 10

    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi], dtype=np.float64)


@dataclass
class EaiParams:
    rows: list[float] = field(default_factory=list)
    widths: list[float] = field(default_factory=list)
    blend: float = 1.0
    steepness: float = 50.0

    def __post_init__(self):
        if len(self.rows) != len(self.widths):
            raise ValueError("EaiParams: rows and widths must have equal length")

    @classmethod
    def uniform(cls, n: int, height: int, width: float = W_MIN, **kw) -> "EaiParams":
        """``n`` stripes evenly spaced over ``[0, height)``."""
        return cls(list(np.linspace(0.0, height, n, endpoint=False)), [float(width)] * n, **kw)

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.rows, float), np.asarray(self.widths, float)])


@dataclass
class ParamBounds:
    """Closed intervals for every physical parameter."""

    x: tuple[float, float]
    y: tuple[float, float]
    phi: tuple[float, float] = (0.0, 2 * np.pi)
    r: tuple[float, float] = (0.0, 64.0)
    w: tuple[float, float] = (W_MIN, W_MAX)
    d_max: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "phi", "r", "w"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"ParamBounds.{name}: lo {lo} > hi {hi}")
            setattr(self, name, (float(lo), float(hi)))

    @classmethod
    def default(cls, height: int, width: int) -> "ParamBounds":
        d = D_MAX_FRACTION * width
        return cls(x=(0.0, d), y=(0.0, d), phi=(0.0, 2 * np.pi), r=(0.0, float(height)),
                   w=(W_MIN, W_MAX), d_max=d)

    def aai_lo(self) -> np.ndarray:
        return np.array([self.x[0], self.y[0], self.phi[0]])

    def aai_hi(self) -> np.ndarray:
        return np.array([self.x[1], self.y[1], self.phi[1]])

    def eai_lo(self, n: int) -> np.ndarray:
        return np.array([self.r[0]] * n + [self.w[0]] * n)

    def eai_hi(self, n: int) -> np.ndarray:
        return np.array([self.r[1]] * n + [self.w[1]] * n)

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json(cls, doc: dict) -> "ParamBounds":
        known = {"x", "y", "phi", "r", "w", "d_max"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown bounds key(s): {sorted(extra)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**kw)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def clip_params(p, bounds: ParamBounds):
    """Componentwise clamp of AAI/EAI parameters into ``bounds`` (idempotent)."""
    if isinstance(p, AaiParams):
        return AaiParams(float(np.clip(p.x, *bounds.x)), float(np.clip(p.y, *bounds.y)),
                         float(np.clip(p.phi, *bounds.phi)), p.n_samples)
    if isinstance(p, EaiParams):
        return EaiParams([float(v) for v in np.clip(p.rows, *bounds.r)],
                         [float(v) for v in np.clip(p.widths, *bounds.w)], p.blend, p.steepness)
    raise TypeError(f"clip_params: unsupported parameter type {type(p).__name__}")


# ---------------------------------------------------------------------------
# AAI
def aai_offsets(x: float, y: float, phi: float, n_samples: int, d_max: float | None = None) -> np.ndarray:
    """``(n, 2)`` lens offsets ``(dx, dy)`` for ``k = 1..n``, norm-clamped to ``d_max``."""
    if n_samples < 2:
        raise ValueError("AAI needs at least 2 blur samples")
    k = np.arange(1, n_samples + 1)
    s = np.sin(2 * np.pi * k / n_samples + phi)[:, None]
    off = s * np.array([x, y], dtype=np.float64)
    if d_max is not None:
        n = np.linalg.norm(off, axis=1, keepdims=True)
        off = off * (d_max / np.maximum(n, d_max))
    return off


def simulate_aai(frame, params, n_samples: int | None = None, d_max: float | None = None) -> ag.Tensor:
    """Average of ``n_samples`` translated copies of ``frame``.

    Args:
        frame: ``(H, W, 3)`` image in ``[0, 1]`` (array or tensor).
        params: :class:`AaiParams`, or a ``(3,)`` tensor ``(x, y, phi)`` when
            gradients with respect to the parameters are needed.
        n_samples: blur sample count; taken from ``params`` when omitted.
        d_max: displacement clamp in pixels; defaults to 3% of the width.
    """
    frame = ag.as_tensor(frame)
    if isinstance(params, AaiParams):
        n = params.n_samples if n_samples is None else n_samples
        theta = ag.Tensor(params.vector())
    else:
        theta = ag.as_tensor(params)
        n = 10 if n_samples is None else n_samples
    if theta.shape != (3,):
        raise ag.ShapeError("simulate_aai", theta.shape)
    if n < 2:
        raise ValueError("simulate_aai: blur sample count must be >= 2")
    H, W, _ = frame.shape
    d_max = D_MAX_FRACTION * W if d_max is None else d_max
    amp = theta[0:2]  # (x, y)
    acc = None
    for k in range(1, n + 1):
        s = ag.sin_(theta[2] + 2 * np.pi * k / n)
        off = amp * s
        norm = ag.l2norm(off)
        off = off * (d_max / ag.maximum(norm, d_max))
        shifted = ag.affine_translate(frame, ag.stack([off[1], off[0]]))
        acc = shifted if acc is None else acc + shifted
    return ag.clamp(acc * (1.0 / n), 0.0, 1.0)


# ---------------------------------------------------------------------------
# EAI
def soft_stripe_mask(rows, widths, s: float, height: int) -> ag.Tensor:
    """``M(y) = max_k sigmoid(s (y - r_k)) sigmoid(s (r_k + w_k - y))`` for ``y = 0..H-1``."""
    if s <= 0:
        raise ValueError("soft_stripe_mask: steepness must be positive")
    r, w = ag.as_tensor(rows), ag.as_tensor(widths)
    if r.shape != w.shape or r.ndim != 1:
        raise ag.ShapeError("soft_stripe_mask", r.shape, w.shape)
    if r.shape[0] == 0:
        return ag.Tensor(np.zeros(height))
    y = np.arange(height, dtype=np.float64)[None, :]
    rr = ag.reshape(r, (-1, 1))
    ww = ag.reshape(w, (-1, 1))
    per = ag.sigmoid(s * (y - rr)) * ag.sigmoid(s * (rr + ww - y))
    m, _ = ag.max_(per, axis=0)
    return m


def bayer_masks(height: int, width: int) -> np.ndarray:
    """``(H, W, 3)`` RGGB site masks."""
    m = np.zeros((height, width, 3))
    m[0::2, 0::2, 0] = 1.0
    m[0::2, 1::2, 1] = 1.0
    m[1::2, 0::2, 1] = 1.0
    m[1::2, 1::2, 2] = 1.0
    return m


_K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 4.0
_K_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64) / 4.0


def _reflect_pad1(x: ag.Tensor) -> ag.Tensor:
    """Reflect-pad a 2D tensor by one pixel (keeps Bayer site parity)."""
    x = ag.concat([x[1:2], x, x[-2:-1]], axis=0)
    return ag.concat([x[:, 1:2], x, x[:, -2:-1]], axis=1)


def _conv3(x: ag.Tensor, k: np.ndarray) -> ag.Tensor:
    H, W = x.shape
    p = _reflect_pad1(x)
    out = None
    for dy in range(3):
        for dx in range(3):
            if k[dy, dx] == 0:
                continue
            term = p[dy:dy + H, dx:dx + W] * k[dy, dx]
            out = term if out is None else out + term
    return out


def demosaic_green_drop(frame) -> ag.Tensor:
    """Stages 1-3: RGGB mosaic, zeroed green sites, bilinear demosaic."""
    frame = ag.as_tensor(frame)
    H, W, _ = frame.shape
    if H % 2 or W % 2:
        raise ValueError(f"simulate_eai: Bayer tiling needs even dimensions, got {H}x{W}")
    masks = bayer_masks(H, W)
    masks[..., 1] = 0.0  # drop the luminance carrier
    planes = []
    for c, k in ((0, _K_RB), (1, _K_G), (2, _K_RB)):
        planes.append(_conv3(frame[..., c] * masks[..., c], k))
    return ag.stack(planes, axis=-1)


def simulate_eai(frame, params, steepness: float | None = None, blend: float | None = None) -> ag.Tensor:
    """Green-drop glitch blended in through a soft stripe mask.

    Args:
        frame: ``(H, W, 3)`` image in ``[0, 1]`` with even ``H`` and ``W``.
        params: :class:`EaiParams`, or a ``(2N,)`` tensor of stripe rows followed by widths.
    """
    frame = ag.as_tensor(frame)
    if isinstance(params, EaiParams):
        theta = ag.Tensor(params.vector())
        s = params.steepness if steepness is None else steepness
        lam = params.blend if blend is None else blend
    else:
        theta = ag.as_tensor(params)
        s = 50.0 if steepness is None else steepness
        lam = 1.0 if blend is None else blend
    if theta.ndim != 1 or theta.shape[0] % 2:
        raise ag.ShapeError("simulate_eai", theta.shape)
    H, W, _ = frame.shape
    art = demosaic_green_drop(frame)
    n = theta.shape[0] // 2
    mask = soft_stripe_mask(theta[:n], theta[n:], s, H)
    m = ag.reshape(mask, (H, 1, 1))
    out = frame * (1.0 - m) + art * m * lam + frame * m * (1.0 - lam)
    return ag.clamp(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# defenses (not differentiated; applied to finished frames)
def gaussian_kernel(size: int = 3, sigma: float = 0.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def _rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    mx = img.max(-1)
    mn = img.min(-1)
    d = mx - mn
    h = np.zeros_like(mx)
    nz = d > 0
    rc = np.where(nz, (mx - r) / np.where(nz, d, 1), 0)
    gc = np.where(nz, (mx - g) / np.where(nz, d, 1), 0)
    bc = np.where(nz, (mx - b) / np.where(nz, d, 1), 0)
    h = np.where(r == mx, bc - gc, np.where(g == mx, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(nz, (h / 6.0) % 1.0, 0.0)
    s = np.where(mx > 0, d / np.where(mx > 0, mx, 1), 0.0)
    return np.stack([h, s, mx], -1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    choices = [np.stack(c, -1) for c in ((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))]
    out = np.zeros_like(hsv)
    for k in range(6):
        out = np.where((i == k)[..., None], choices[k], out)
    return out


def _gray(img: np.ndarray) -> np.ndarray:
    return img @ np.array([0.299, 0.587, 0.114])


def color_jitter(frame: np.ndarray, brightness: float = 1.0, contrast: float = 1.0,
                 saturation: float = 1.0, hue: float = 0.0) -> np.ndarray:
    """Brightness, contrast, saturation, then hue (fraction of the colour wheel)."""
    img = np.clip(frame * brightness, 0, 1)
    m = _gray(img).mean()
    img = np.clip((img - m) * contrast + m, 0, 1)
    g = _gray(img)[..., None]
    img = np.clip(g + (img - g) * saturation, 0, 1)
    if hue != 0.0:
        hsv = _rgb_to_hsv(img)
        hsv[..., 0] = (hsv[..., 0] + hue) % 1.0
        img = _hsv_to_rgb(hsv)
    return np.clip(img, 0, 1)


def spatial_smoothing(frame: np.ndarray, size: int = 3, sigma: float = 0.5) -> np.ndarray:
    k = gaussian_kernel(size, sigma)
    r = size // 2
    p = np.pad(frame, ((r, r), (r, r), (0, 0)), mode="reflect")
    H, W = frame.shape[:2]
    out = np.zeros_like(frame)
    for dy in range(size):
        for dx in range(size):
            out += k[dy, dx] * p[dy:dy + H, dx:dx + W]
    return out


def gaussian_noise(frame: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return np.clip(frame + rng.normal(0.0, sigma, frame.shape), 0.0, 1.0)


DEFENSES = ("cj", "ss", "gn")


def apply_defense(kind: str, frame: np.ndarray, seed: int = 0, *, strength: float = 0.2,
                  sigma_gn: float = 0.1, jitter: dict | None = None) -> np.ndarray:
    """Apply a pre-processing defense to one frame.

    Args:
        kind: ``"cj"`` (colour jitter), ``"ss"`` (3x3 Gaussian smoothing, sigma 0.5)
            or ``"gn"`` (additive Gaussian noise).
        seed: seeds the jitter factors or the noise.
        strength: colour-jitter range; factors come from ``[1-strength, 1+strength]``
            and the hue shift from ``[-strength, strength]``.
        jitter: explicit colour-jitter factors, overriding the seeded draw.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.min() < 0 or frame.max() > 1:
        raise ValueError("apply_defense: frame values must lie in [0, 1]")
    kind = kind.lower()
    rng = np.random.default_rng(seed)
    if kind in ("cj", "colorjitter", "color_jitter"):
        if jitter is None:
            b, c, s = rng.uniform(1 - strength, 1 + strength, 3)
            jitter = {"brightness": b, "contrast": c, "saturation": s,
                      "hue": rng.uniform(-strength, strength)}
        return color_jitter(frame, **jitter)
    if kind in ("ss", "spatialsmoothing", "spatial_smoothing"):
        return spatial_smoothing(frame)
    if kind in ("gn", "gaussiannoise", "gaussian_noise"):
        return gaussian_noise(frame, sigma_gn, rng)
    raise ValueError(f"unknown defense kind {kind!r}; choose from {list(DEFENSES)}")

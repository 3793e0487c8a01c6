"""File formats: MOTChallenge text, PNG / PPM images, sequence folders, configs, JSON.

Every write goes to a temporary file in the target directory and is renamed
into place, so readers never observe a partial file.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .attacks import AttackConfig
from .losses import LossWeights
from .sensors import ParamBounds
from .synthetic import Sequence
from .tracker import TrackerConfig
from .tracks import Trajectory, frames_to_trajectories, trajectories_to_frames

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "DataError",
    "atomic_write_text",
    "atomic_write_bytes",
    "parse_mot",
    "parse_mot_text",
    "write_mot",
    "load_image",
    "save_image",
    "save_sequence",
    "load_sequence",
    "RunConfig",
    "load_config",
    "write_json",
    "read_json",
]


class DataError(ValueError):
    """Malformed input data (file contents, not usage)."""


# ---------------------------------------------------------------------------
# atomic writes
def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from None


# ---------------------------------------------------------------------------
# MOTChallenge rows: frame,id,x,y,w,h,conf,class,visibility
def parse_mot(path) -> list[Trajectory]:
    """Read a MOTChallenge file; see :func:`parse_mot_text`."""
    return parse_mot_text(Path(path).read_text())


def parse_mot_text(text: str) -> list[Trajectory]:
    """Parse MOTChallenge rows into trajectories sorted by identity.

    Rows need at least the six leading fields and may come in any frame order.
    Blank lines are skipped.

    Raises:
        DataError: naming the 1-based line number of a malformed row.
    """
    per_frame: dict[int, list] = {}
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if not 6 <= len(parts) <= 10:
            raise DataError(f"line {lineno}: expected 6 to 10 comma-separated fields, got {len(parts)}")
        try:
            frame = _parse_int(parts[0])
            ident = _parse_int(parts[1])
            box = tuple(float(v) for v in parts[2:6])
        except ValueError as e:
            raise DataError(f"line {lineno}: {e}") from None
        if frame < 1:
            raise DataError(f"line {lineno}: frame numbers are 1-based, got {frame}")
        if not all(np.isfinite(box)) or box[2] < 0 or box[3] < 0:
            raise DataError(f"line {lineno}: invalid box {box}")
        if (frame, ident) in seen:
            raise DataError(f"line {lineno}: duplicate row for frame {frame}, id {ident}")
        seen.add((frame, ident))
        per_frame.setdefault(frame, []).append((ident, box))
    return frames_to_trajectories(per_frame)


def _parse_int(s: str) -> int:
    v = float(s)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def write_mot(trajectories, path=None) -> str:
    """Serialize trajectories (rows sorted by frame, then id); floats use ``repr``
    so that parsing the output reproduces the input exactly."""
    rows = []
    for frame, items in sorted(trajectories_to_frames(trajectories).items()):
        for ident, (x, y, w, h) in sorted(items, key=lambda e: e[0]):
            rows.append(f"{frame},{ident},{float(x)!r},{float(y)!r},{float(w)!r},{float(h)!r},1,-1,-1")
    text = "".join(r + "\n" for r in rows)
    if path is not None:
        atomic_write_text(path, text)
    return text


# ---------------------------------------------------------------------------
# images
def _to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an HxWx3 image, got shape {img.shape}")
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def save_image(path, img: np.ndarray) -> None:
    """Write ``.png`` (8-bit RGB) or ``.ppm`` (ASCII P3) by extension."""
    path = Path(path)
    q = _to_uint8(img)
    ext = path.suffix.lower()
    if ext == ".png":
        buf = io.BytesIO()
        Image.fromarray(q, mode="RGB").save(buf, format="PNG")
        atomic_write_bytes(path, buf.getvalue())
    elif ext == ".ppm":
        H, W, _ = q.shape
        rows = [" ".join(str(v) for v in row.ravel()) for row in q]
        atomic_write_text(path, f"P3\n{W} {H}\n255\n" + "\n".join(rows) + "\n")
    else:
        raise DataError(f"unsupported image extension {ext!r} (use .png or .ppm)")


def load_image(path) -> np.ndarray:
    """Read an image as float64 in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return _load_ppm(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, SyntaxError) as e:
        raise DataError(f"{path}: cannot decode image ({e})") from None
    return arr / 255.0


def _load_ppm(path: Path) -> np.ndarray:
    tokens = []
    for line in path.read_text(errors="replace").splitlines():
        tokens += line.split("#", 1)[0].split()
    if not tokens or tokens[0] != "P3":
        raise DataError(f"{path}: not an ASCII PPM (missing P3 magic)")
    try:
        W, H, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        vals = np.array([int(t) for t in tokens[4:]], dtype=np.float64)
    except (IndexError, ValueError):
        raise DataError(f"{path}: corrupt PPM header or pixel data") from None
    if W <= 0 or H <= 0 or not 0 < maxval < 65536:
        raise DataError(f"{path}: invalid PPM header ({W}x{H}, maxval {maxval})")
    if vals.size != W * H * 3:
        raise DataError(f"{path}: expected {W * H * 3} samples, found {vals.size}")
    if vals.max(initial=0) > maxval:
        raise DataError(f"{path}: sample exceeds maxval {maxval}")
    return vals.reshape(H, W, 3) / maxval


# ---------------------------------------------------------------------------
# sequence folders: frames/000001.png ..., frames.npz (optional, lossless), gt.txt (optional), meta.json
def save_sequence(directory, seq: Sequence, gt: list[Trajectory] | None = None, meta: dict | None = None,
                  lossless: bool = False) -> None:
    """Write a sequence folder. With ``lossless`` the float frames are also
    stored in ``frames.npz``, which :func:`load_sequence` prefers over the PNGs
    (adversarial perturbations do not survive 8-bit quantization intact)."""
    d = Path(directory)
    (d / "frames").mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(seq.frames, start=1):
        save_image(d / "frames" / f"{k:06d}.png", frame)
    if lossless:
        buf = io.BytesIO()
        np.savez_compressed(buf, frames=np.stack(seq.frames))
        atomic_write_bytes(d / "frames.npz", buf.getvalue())
    if gt is not None:
        write_mot(gt, d / "gt.txt")
    doc = {"name": seq.name, "fps": seq.fps, "length": len(seq), "height": seq.height, "width": seq.width}
    doc.update(meta or {})
    write_json(d / "meta.json", doc)


def load_sequence(directory) -> tuple[Sequence, list[Trajectory] | None]:
    d = Path(directory)
    if not (d / "frames").is_dir():
        raise DataError(f"{d}: not a sequence directory (no frames/ folder)")
    meta = read_json(d / "meta.json") if (d / "meta.json").exists() else {}
    if (d / "frames.npz").exists():
        try:
            with np.load(d / "frames.npz") as z:
                frames = list(np.asarray(z["frames"], dtype=np.float64))
        except (OSError, KeyError, ValueError) as e:
            raise DataError(f"{d / 'frames.npz'}: unreadable ({e})") from None
    else:
        paths = sorted(p for p in (d / "frames").iterdir() if p.suffix.lower() in (".png", ".ppm"))
        if not paths:
            raise DataError(f"{d}: no frames found")
        frames = [load_image(p) for p in paths]
    try:
        seq = Sequence(frames, fps=float(meta.get("fps", 30.0)), name=str(meta.get("name", d.name)))
    except ValueError as e:
        raise DataError(str(e)) from None
    gt = parse_mot(d / "gt.txt") if (d / "gt.txt").exists() else None
    return seq, gt


# ---------------------------------------------------------------------------
# configuration
SECTIONS = ("tracker", "attack", "weights", "bounds")


@dataclass
class RunConfig:
    """Fully resolved run configuration. ``bounds`` holds overrides only;
    :meth:`resolve_bounds` fills the size-dependent defaults."""

    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    bounds: dict = field(default_factory=dict)

    @property
    def weights(self) -> LossWeights:
        return self.attack.weights

    def resolve_bounds(self, height: int, width: int) -> ParamBounds:
        doc = ParamBounds.default(height, width).to_json()
        doc.update(self.bounds)
        return ParamBounds.from_json(doc)

    def echo(self, height: int | None = None, width: int | None = None) -> dict:
        attack = self.attack.to_dict()
        weights = attack.pop("weights")
        out = {"tracker": self.tracker.to_dict(), "attack": attack, "weights": weights}
        out["bounds"] = self.resolve_bounds(height, width).to_json() if height else dict(self.bounds)
        return out


def _strict(cls, doc: dict, section: str, skip=()) -> dict:
    names = {f.name for f in fields(cls)} - set(skip)
    unknown = sorted(set(doc) - names)
    if unknown:
        raise DataError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    return dict(doc)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load a TOML (``.toml``) or JSON config with sections ``[tracker]``,
    ``[attack]``, ``[weights]`` and ``[bounds]``. Every key is optional; unknown
    sections or keys raise :class:`DataError` naming them.
    """
    doc: dict = {}
    if path is not None:
        p = Path(path)
        text = p.read_text()
        try:
            if p.suffix.lower() == ".json":
                doc = json.loads(text) if text.strip() else {}
            else:
                doc = tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise DataError(f"{p}: cannot parse config ({e})") from None
    for sect, vals in (overrides or {}).items():
        doc.setdefault(sect, {}).update(vals)
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise DataError(f"unknown config section(s): {', '.join(unknown)}")
    for sect in SECTIONS:
        if not isinstance(doc.get(sect, {}), dict):
            raise DataError(f"config section [{sect}] must be a table")
    try:
        tracker = TrackerConfig(**_strict(TrackerConfig, doc.get("tracker", {}), "tracker"))
        weights = LossWeights(**_strict(LossWeights, doc.get("weights", {}), "weights"))
        attack_kw = _strict(AttackConfig, doc.get("attack", {}), "attack", skip=("weights",))
        attack = AttackConfig(weights=weights, **attack_kw)
        bounds = dict(doc.get("bounds", {}))
        ParamBounds.from_json({**ParamBounds.default(64, 96).to_json(), **bounds})
    except (TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"invalid config: {e}") from None
    return RunConfig(tracker, attack, bounds)

"""Trajectory containers shared by the tracker, the metrics and the MOT codec."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["Trajectory", "frames_to_trajectories", "trajectories_to_frames"]

Box = tuple[float, float, float, float]


@dataclass
class Trajectory:
    """One identity over time: ``boxes`` is a list of ``(frame, (x, y, w, h))``.

    Frames are 1-based and strictly increasing; boxes are top-left + size in pixels.
    """

    identity: int
    boxes: list[tuple[int, Box]] = field(default_factory=list)

    def __post_init__(self):
        frames = [f for f, _ in self.boxes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"trajectory {self.identity}: frames must be strictly increasing")

    @property
    def frames(self) -> list[int]:
        return [f for f, _ in self.boxes]

    def box_at(self, frame: int) -> Box | None:
        for f, b in self.boxes:
            if f == frame:
                return b
        return None

    def __len__(self) -> int:
        return len(self.boxes)


def frames_to_trajectories(per_frame: dict[int, list[tuple[int, Box]]]) -> list[Trajectory]:
    """``{frame: [(id, box), ...]}`` to trajectories sorted by identity."""
    by_id: dict[int, list[tuple[int, Box]]] = {}
    for frame in sorted(per_frame):
        for ident, box in per_frame[frame]:
            by_id.setdefault(int(ident), []).append((int(frame), tuple(float(v) for v in box)))
    return [Trajectory(i, by_id[i]) for i in sorted(by_id)]


def trajectories_to_frames(trajs: list[Trajectory]) -> dict[int, list[tuple[int, Box]]]:
    out: dict[int, list[tuple[int, Box]]] = {}
    for tr in trajs:
        for f, b in tr.boxes:
            out.setdefault(f, []).append((tr.identity, b))
    return out

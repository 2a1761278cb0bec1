"""Deterministic 2D hand-eye toy task: sprites on a grayscale canvas.

The workspace is the unit square. An effector sprite (disc for TEACHER,
equal-area square for EXECUTOR) moves under bounded position increments;
a fixed cross marks the target. Rendering is a pure, noise-free function
of (state, spec): anti-aliased coverage, max-blended, then quantized to
256 gray levels so frames survive 8-bit persistence bit-exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

WORKSPACE_LO = 0.0
WORKSPACE_HI = 1.0


class SpriteKind(enum.Enum):
    TEACHER = "teacher"    # filled disc (demonstrator)
    EXECUTOR = "executor"  # filled square of equal area


@dataclass(frozen=True)
class TaskSpec:
    """Geometry of one task instance."""

    dof: int = 2
    target: tuple = (0.7, 0.7)
    image_size: int = 32
    sprite: SpriteKind = SpriteKind.TEACHER
    sprite_radius: float = 3.0       # pixels
    target_intensity: float = 0.7
    cross_arm: float = 2.5           # pixels, half-length of each bar
    a_max: float = 0.05              # workspace units per step

    def __post_init__(self):
        if self.dof not in (1, 2):
            raise ValueError(f"dof must be 1 or 2, got {self.dof}")
        if self.image_size < 16:
            raise ValueError(f"image_size must be >= 16, got {self.image_size}")
        if not all(WORKSPACE_LO <= c <= WORKSPACE_HI for c in self.target):
            raise ValueError(f"target {self.target} outside workspace")
        if self.sprite_radius <= 0 or self.a_max <= 0:
            raise ValueError("sprite_radius and a_max must be positive")
        if 2 * self.pixel_margin >= self.image_size - 1:
            raise ValueError(
                f"sprite radius {self.sprite_radius} too large for a "
                f"{self.image_size}px image: sprite would leave the frame")

    @property
    def pixel_margin(self) -> float:
        # sprite body + 1px anti-aliasing skirt stays inside the frame
        return self.sprite_radius + 2.0

    def with_sprite(self, sprite: SpriteKind) -> "TaskSpec":
        return replace(self, sprite=sprite)

    def to_dict(self) -> dict:
        return {
            "dof": self.dof,
            "target": list(self.target),
            "image_size": self.image_size,
            "sprite": self.sprite.value,
            "sprite_radius": self.sprite_radius,
            "target_intensity": self.target_intensity,
            "cross_arm": self.cross_arm,
            "a_max": self.a_max,
        }

    @staticmethod
    def from_dict(d: dict) -> "TaskSpec":
        return TaskSpec(
            dof=int(d["dof"]),
            target=tuple(float(c) for c in d["target"]),
            image_size=int(d["image_size"]),
            sprite=SpriteKind(d["sprite"]),
            sprite_radius=float(d["sprite_radius"]),
            target_intensity=float(d["target_intensity"]),
            cross_arm=float(d["cross_arm"]),
            a_max=float(d["a_max"]),
        )


@dataclass
class WorldState:
    position: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    step_count: int = 0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        if pos.shape != (2,):
            raise ValueError(f"position must be 2-D, got shape {pos.shape}")
        object.__setattr__(self, "position", np.clip(pos, WORKSPACE_LO, WORKSPACE_HI))


def to_pixels(position, spec: TaskSpec) -> tuple:
    """Workspace (x, y) -> fractional pixel (col, row)."""
    m = spec.pixel_margin
    span = spec.image_size - 1 - 2 * m
    return m + float(position[0]) * span, m + float(position[1]) * span


def _disc_coverage(cols, rows, cx, cy, radius):
    d = np.hypot(cols - cx, rows - cy)
    return np.clip(radius - d + 0.5, 0.0, 1.0)


def _rect_coverage(cols, rows, cx, cy, half_w, half_h):
    u = np.clip(half_w - np.abs(cols - cx) + 0.5, 0.0, 1.0)
    v = np.clip(half_h - np.abs(rows - cy) + 0.5, 0.0, 1.0)
    return u * v


@lru_cache(maxsize=32)
def _grids(size: int):
    idx = np.arange(size, dtype=np.float64)
    return np.meshgrid(idx, idx)  # cols, rows


@lru_cache(maxsize=32)
def _target_layer(spec: TaskSpec) -> np.ndarray:
    cols, rows = _grids(spec.image_size)
    tx, ty = to_pixels(spec.target, spec)
    bar_h = _rect_coverage(cols, rows, tx, ty, spec.cross_arm, 0.5)
    bar_v = _rect_coverage(cols, rows, tx, ty, 0.5, spec.cross_arm)
    layer = np.maximum(bar_h, bar_v) * spec.target_intensity
    layer.setflags(write=False)
    return layer


def render(state: WorldState, spec: TaskSpec) -> np.ndarray:
    """Render the observation frame; float32 (H, W) with values k/255."""
    cols, rows = _grids(spec.image_size)
    cx, cy = to_pixels(state.position, spec)
    if spec.sprite is SpriteKind.TEACHER:
        sprite = _disc_coverage(cols, rows, cx, cy, spec.sprite_radius)
    else:
        half = spec.sprite_radius * math.sqrt(math.pi) / 2.0  # equal area to the disc
        sprite = _rect_coverage(cols, rows, cx, cy, half, half)
    img = np.maximum(_target_layer(spec), sprite)
    return (np.round(img * 255.0) / 255.0).astype(np.float32)


def step(state: WorldState, action, spec: TaskSpec) -> WorldState:
    """Apply a bounded position increment; position is clamped to bounds."""
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (spec.dof,):
        raise ValueError(f"action must have dim {spec.dof}, got shape {a.shape}")
    norm = float(np.linalg.norm(a))
    if norm > spec.a_max:
        a = a * (spec.a_max / norm)
    delta = np.array([a[0], 0.0]) if spec.dof == 1 else a
    new_pos = np.clip(state.position + delta, WORKSPACE_LO, WORKSPACE_HI)
    return WorldState(position=new_pos, step_count=state.step_count + 1)


def random_start(spec: TaskSpec, rng: np.random.Generator,
                 margin: float = 0.08, min_target_dist: float = 0.15) -> np.ndarray:
    """Uniform interior start, re-drawn until it clears the target region."""
    target = np.asarray(spec.target, dtype=np.float64)
    for _ in range(1000):
        if spec.dof == 1:
            pos = np.array([rng.uniform(margin, 1.0 - margin), target[1]])
        else:
            pos = rng.uniform(margin, 1.0 - margin, size=2)
        if np.linalg.norm(pos - target) >= min_target_dist:
            return pos
    raise RuntimeError("could not sample a start away from the target")

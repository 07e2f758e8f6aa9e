from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from django.db import models

SHAPES = ('circle', 'square', 'triangle')

SHAPE_COLORS = {
    'circle': (0.85, 0.45, 0.35),
    'square': (0.35, 0.80, 0.45),
    'triangle': (0.40, 0.50, 0.90),
}


class AnomalyKind(models.TextChoices):
    NONE = 'none', 'None'
    CLASS = 'class', 'Unseen object class'
    SPEED = 'speed', 'Abnormal speed'


@dataclass
class ActorSpec:
    """A normal actor, instantiated in every clip.

    `size` is the radius (circle), half side (square) or half height
    (triangle) in pixels. Missing `heading` (degrees) or `start` are drawn
    per clip from the clip's seed.
    """

    shape: str
    size: float
    speed: float
    heading: Optional[float] = None
    start: Optional[tuple[float, float]] = None


@dataclass
class AnomalyInjection:
    """An anomaly on test clip `clip` for frames [start, end).

    kind=class adds an actor of `shape`; kind=speed multiplies the speed of
    normal actor `actor` by `multiplier`.
    """

    clip: int
    kind: str
    start: int
    end: int
    shape: Optional[str] = None
    size: float = 12.0
    speed: float = 2.0
    heading: Optional[float] = None
    position: Optional[tuple[float, float]] = None
    actor: Optional[int] = None
    multiplier: float = 3.0


@dataclass
class SceneSpec:
    name: str
    palette: list[str]
    actors: list[ActorSpec]
    anomalies: list[AnomalyInjection] = field(default_factory=list)
    canvas: int = 224
    seed: int = 0
    noise: float = 0.01
    wrap: bool = True
    frames_per_clip: int = 60
    train_clips: int = 4
    test_clips: int = 4
    normal_speed: tuple[float, float] = (1.0, 3.0)

    def channel(self, shape: str) -> int:
        """Target channel of a shape; 0 is background."""
        return self.palette.index(shape) + 1

    def anomalies_for(self, clip_index: int) -> list[AnomalyInjection]:
        return [a for a in self.anomalies if a.clip == clip_index]

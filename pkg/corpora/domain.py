from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.db import models


class Split(models.TextChoices):
    TRAIN = 'train', 'Train'
    TEST = 'test', 'Test'


@dataclass(frozen=True, eq=False)
class Frame:
    """One video frame.

    `pixels` is an H x W x C float32 array with values in [0, 1] and
    C in {1, 3}. After ingestion every frame is side x side x 3.
    """

    clip_id: str
    index: int
    pixels: np.ndarray
    split: str = Split.TRAIN

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f'Frame index must be nonnegative, got {self.index}')
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise ValueError(
                f'Frame {self.clip_id}/{self.index}: pixels must be H x W x C with C in (1, 3), '
                f'got shape {self.pixels.shape}'
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def with_pixels(self, pixels: np.ndarray) -> 'Frame':
        return Frame(clip_id=self.clip_id, index=self.index, pixels=pixels, split=self.split)


@dataclass(frozen=True, eq=False)
class Clip:
    """An ordered run of frames. Test clips carry one 0/1 label per frame."""

    clip_id: str
    frames: tuple[Frame, ...]
    split: str = Split.TRAIN
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        for expected, frame in enumerate(self.frames):
            if frame.index != expected:
                raise ValueError(
                    f'Clip {self.clip_id}: frame indices must be consecutive from 0, '
                    f'found {frame.index} at position {expected}'
                )
        if self.labels is not None and len(self.labels) != len(self.frames):
            raise ValueError(
                f'Clip {self.clip_id}: {len(self.frames)} frames but {len(self.labels)} labels'
            )

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Train clips (unlabeled, normal by assumption) and labeled test clips.

    `class_palette` lists the foreground classes; target channel i + 1 belongs
    to class_palette[i] and channel 0 is background.
    """

    name: str
    train_clips: tuple[Clip, ...]
    test_clips: tuple[Clip, ...]
    class_palette: tuple[str, ...]

    def __post_init__(self):
        if not self.class_palette:
            raise ValueError(f'Corpus {self.name}: palette needs at least one foreground class')
        for clip in self.train_clips:
            if clip.labels is not None:
                raise ValueError(f'Corpus {self.name}: train clip {clip.clip_id} must not carry labels')

    @property
    def palette_size(self) -> int:
        """Number of target channels: foreground classes plus background."""
        return len(self.class_palette) + 1

    def clips(self, split: str) -> tuple[Clip, ...]:
        return self.train_clips if split == Split.TRAIN else self.test_clips

    def frame_count(self, split: str) -> int:
        return sum(len(clip) for clip in self.clips(split))


@dataclass
class IngestConfig:
    side: int = 224
    workers: int = 4
    palette: Optional[list[str]] = None
    splits: list[str] = field(default_factory=lambda: [Split.TRAIN, Split.TEST])

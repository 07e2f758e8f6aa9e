from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from django.db import models


class Branch(models.TextChoices):
    APPEARANCE = 'appearance', 'Appearance'
    MOTION = 'motion', 'Motion'


@dataclass(frozen=True, eq=False)
class SegOracleResult:
    """Class map over palette indices (0 = background) and the matching foreground mask."""

    class_map: np.ndarray
    instance_mask: np.ndarray
    missed: bool = False

    def __post_init__(self):
        if self.class_map.shape != self.instance_mask.shape:
            raise ValueError(
                f'class_map {self.class_map.shape} and instance_mask {self.instance_mask.shape} differ in shape'
            )
        if not np.array_equal(self.instance_mask != 0, self.class_map != 0):
            raise ValueError('instance_mask must be 1 exactly where class_map is nonzero')

    @classmethod
    def from_class_map(cls, class_map: np.ndarray, missed: bool = False) -> 'SegOracleResult':
        class_map = np.asarray(class_map, dtype=np.int32)
        return cls(class_map=class_map, instance_mask=(class_map != 0).astype(np.uint8), missed=missed)

    @classmethod
    def empty(cls, height: int, width: int, missed: bool = False) -> 'SegOracleResult':
        return cls.from_class_map(np.zeros((height, width), dtype=np.int32), missed=missed)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Displacement from the previous frame, aligned to the current one (pixels per frame)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError(f'Flow components differ in shape: {self.u.shape} vs {self.v.shape}')
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError('Flow field contains non-finite values')

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def zeros(cls, height: int, width: int) -> 'FlowField':
        return cls(u=np.zeros((height, width), np.float32), v=np.zeros((height, width), np.float32))


@dataclass(frozen=True, eq=False)
class TargetPair:
    """Per-frame targets: one-hot segmentation map and masked flow magnitude."""

    seg_target: np.ndarray
    flow_target: np.ndarray

    def __post_init__(self):
        if self.seg_target.shape[:2] != self.flow_target.shape:
            raise ValueError('seg_target and flow_target must share H x W')
        if (self.flow_target < 0).any():
            raise ValueError('flow_target must be nonnegative')


@dataclass
class TargetOptions:
    oracle: str = 'analytic'
    oracle_miss_rate: float = 0.0
    flow_estimator: str = 'farneback'
    masking: bool = True
    flow_cap: float | None = None
    flow_cap_percentile: float = 99.5
    flow_cap_headroom: float = 1.0

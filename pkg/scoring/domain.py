from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.db import models


class ScoreStage(models.TextChoices):
    RAW = 'raw', 'Raw'
    REFINED = 'refined', 'Refined'
    SMOOTHED = 'smoothed', 'Smoothed'
    FUSED = 'fused', 'Fused'


@dataclass(frozen=True, eq=False)
class AnomalyMap:
    """Per-pixel disagreement between a translator output and its target."""

    values: np.ndarray
    branch: str
    refined: bool = False

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f'Anomaly map must be H x W, got {self.values.shape}')
        if (self.values < 0).any():
            raise ValueError(f'{self.branch} anomaly map has negative values')


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    """One score per frame of a clip.

    Raw and refined scores are nonnegative; smoothing and fusion may leave
    that range.
    """

    clip_id: str
    scores: np.ndarray
    stage: str = ScoreStage.RAW

    def __post_init__(self):
        if self.scores.ndim != 1:
            raise ValueError(f'Scores of {self.clip_id} must be one-dimensional')
        if not np.isfinite(self.scores).all():
            raise ValueError(f'Scores of {self.clip_id} contain non-finite values')
        if self.stage in (ScoreStage.RAW, ScoreStage.REFINED) and (self.scores < 0).any():
            raise ValueError(f'{self.stage} scores of {self.clip_id} must be nonnegative')

    def __len__(self):
        return len(self.scores)

    def with_scores(self, scores: np.ndarray, stage: str) -> 'ScoreSeries':
        return ScoreSeries(clip_id=self.clip_id, scores=np.asarray(scores, dtype=np.float64), stage=stage)


@dataclass(frozen=True)
class BranchStats:
    mean: float
    std: float


@dataclass
class BranchCalibration:
    """Training-split score statistics of each branch."""

    stats: dict[str, BranchStats] = field(default_factory=dict)

    def for_branch(self, branch: str) -> BranchStats:
        try:
            return self.stats[str(branch)]
        except KeyError:
            raise ValueError(f'No calibration for branch {branch}')

    def to_dict(self) -> dict:
        return {branch: {'mean': s.mean, 'std': s.std} for branch, s in self.stats.items()}

    @classmethod
    def from_dict(cls, data: dict) -> 'BranchCalibration':
        return cls({branch: BranchStats(float(s['mean']), float(s['std'])) for branch, s in data.items()})


@dataclass
class FusionResult:
    fused: ScoreSeries
    appearance_flags: Optional[np.ndarray] = None
    motion_flags: Optional[np.ndarray] = None


@dataclass
class Thresholds:
    appearance: Optional[float] = None
    motion: Optional[float] = None


@dataclass
class ScoringConfig:
    refine: bool = True
    kernel_size: int = 3
    iterations: int = 1
    window: int = 41
    polyorder: int = 1
    thresholds: Thresholds = field(default_factory=Thresholds)
    batch_size: int = 8

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from django.db import models


class Backbone(models.TextChoices):
    RESNET34 = 'resnet34', 'ResNet-34 U-Net'
    TINY = 'tiny', 'Two-level test U-Net'


@dataclass
class TrainConfig:
    """Per-branch training hyperparameters.

    The learning rate starts at `lr0` and is halved every `lr_halve_every`
    epochs. `epochs` and `batch_size` defaults are operational choices.
    """

    epochs: int = 60
    batch_size: int = 8
    lr0: float = 0.005
    lr_halve_every: int = 10
    grid_k: int = 9
    seed: int = 0
    pretrained: bool = True
    backbone: str = Backbone.RESNET34


@dataclass
class TrainResult:
    branch: str
    epochs: int
    history: list[tuple[int, int, float]] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    checkpoint: str = ''
    model: Any = None

    def epoch_means(self) -> list[float]:
        means = []
        for epoch in range(1, self.epochs + 1):
            losses = [loss for e, _, loss in self.history if e == epoch]
            if losses:
                means.append(sum(losses) / len(losses))
        return means

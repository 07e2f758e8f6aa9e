"""Patch-level max losses: the worst patch of a frame drives the update."""
import math
from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class PatchGrid:
    """k equal non-overlapping patches on a sqrt(k) x sqrt(k) layout.

    Remainder pixels of a side that does not divide evenly go to the last
    row or column of patches.
    """

    k: int = 9

    def __post_init__(self):
        if self.k < 1 or math.isqrt(self.k) ** 2 != self.k:
            raise ValueError(f'Patch count must be a positive perfect square, got {self.k}')

    @property
    def side(self) -> int:
        return math.isqrt(self.k)

    def _edges(self, length: int) -> list[int]:
        if length < self.side:
            raise ValueError(f'A {self.side}x{self.side} patch grid cannot partition a side of {length} pixels')
        step = length // self.side
        return [i * step for i in range(self.side)] + [length]

    def bounds(self, height: int, width: int) -> list[tuple[int, int, int, int]]:
        """(y0, y1, x0, x1) of every patch in row-major order."""
        rows, cols = self._edges(height), self._edges(width)
        return [
            (rows[r], rows[r + 1], cols[c], cols[c + 1])
            for r in range(self.side)
            for c in range(self.side)
        ]


def _check(output: torch.Tensor, target: torch.Tensor):
    if output.shape != target.shape:
        raise ValueError(f'Output {tuple(output.shape)} and target {tuple(target.shape)} differ in shape')
    if output.dim() != 4:
        raise ValueError(f'Expected N x C x H x W tensors, got {tuple(output.shape)}')


def patch_losses(errors: torch.Tensor, grid: PatchGrid) -> torch.Tensor:
    """N x k matrix of per-patch mean errors over channels and pixels."""
    return torch.stack(
        [errors[:, :, y0:y1, x0:x1].mean(dim=(1, 2, 3)) for y0, y1, x0, x1 in grid.bounds(*errors.shape[-2:])],
        dim=1,
    )


def _max_over_patches(errors: torch.Tensor, grid: PatchGrid) -> torch.Tensor:
    # per-frame max, then batch mean
    return patch_losses(errors, grid).max(dim=1).values.mean()


def patch_loss_appearance(output: torch.Tensor, target: torch.Tensor, grid: PatchGrid) -> torch.Tensor:
    _check(output, target)
    return _max_over_patches((output - target) ** 2, grid)


def patch_loss_motion(output: torch.Tensor, target: torch.Tensor, grid: PatchGrid) -> torch.Tensor:
    _check(output, target)
    return _max_over_patches((output - target).abs(), grid)

import logging
import random

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from corpora.domain import Corpus, Frame
from targets.cache import TargetCache
from targets.domain import Branch
from targets.services import load_target

from .checkpoints import save_checkpoint, write_history
from .domain import TrainConfig, TrainResult
from .losses import PatchGrid, patch_loss_appearance, patch_loss_motion
from .network import build_model

logger = logging.getLogger(__name__)

BRANCH_LOSSES = {
    Branch.APPEARANCE: patch_loss_appearance,
    Branch.MOTION: patch_loss_motion,
}


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """lr0 halved every `lr_halve_every` epochs (epoch counted from 0)."""
    return config.lr0 * 0.5 ** (epoch // config.lr_halve_every)


def out_channels_for(branch: str, corpus: Corpus) -> int:
    return corpus.palette_size if branch == Branch.APPEARANCE else 1


def seed_everything(seed: int) -> torch.Generator:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    return torch.Generator().manual_seed(seed)


def frame_tensor(frame: Frame) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(frame.pixels.transpose(2, 0, 1))).float()


def target_tensor(target: np.ndarray) -> torch.Tensor:
    if target.ndim == 2:
        target = target[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(target.transpose(2, 0, 1))).float()


class TargetDataset(Dataset):
    """(frame, cached target) pairs of one branch."""

    def __init__(self, frames, cache: TargetCache, branch: str, flow_cap: float | None = None):
        self.frames = list(frames)
        self.cache = cache
        self.branch = branch
        self.flow_cap = flow_cap

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        frame = self.frames[i]
        target = load_target(self.cache, self.branch, frame.clip_id, frame.index, flow_cap=self.flow_cap)
        return frame_tensor(frame), target_tensor(target)


def train(corpus: Corpus, root, branch: str, config: TrainConfig, run_dir, flow_cap: float | None = None,
          device: str = 'cpu', model=None) -> TrainResult:
    """Fit one branch translator on the training clips and checkpoint every epoch.

    Targets of every training frame must be cached under `root`; the motion
    branch also needs the flow cap its targets were built with. `model`
    defaults to a fresh network built from `config`; a supplied one must have
    the architecture of `config.backbone`. The fitted model and the loss
    history come back in the result. A zero-epoch run leaves the model
    untouched.
    """
    branch = Branch(branch)
    cache = TargetCache(root)
    missing = cache.missing(branch, corpus.train_clips)
    if missing:
        raise ValueError(f'{len(missing)} training frames have no {branch} target, e.g. {missing[0]}')
    if branch == Branch.MOTION and flow_cap is None:
        raise ValueError('Motion training needs the flow cap of its targets')

    generator = seed_everything(config.seed)
    grid = PatchGrid(config.grid_k)
    out_channels = out_channels_for(branch, corpus)
    if model is None:
        model = build_model(out_channels, config)
    model = model.to(device)
    frames = [frame for clip in corpus.train_clips for frame in clip.frames]
    check_input(model, frames[0].pixels)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr0)
    scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=config.lr_halve_every, gamma=0.5)
    criterion = BRANCH_LOSSES[branch]
    extra = {'palette': list(corpus.class_palette), 'flow_cap': flow_cap, 'corpus': corpus.name}

    loader = DataLoader(
        TargetDataset(frames, cache, branch, flow_cap),
        batch_size=config.batch_size,
        shuffle=True,
        generator=generator,
        num_workers=0,
    )
    result = TrainResult(branch=str(branch), epochs=config.epochs, model=model)
    logger.info(
        f'Training {branch} translator ({config.backbone}, {out_channels} outputs) on {len(frames)} frames '
        f'for {config.epochs} epochs'
    )

    if config.epochs == 0:
        result.checkpoint = str(save_checkpoint(run_dir, branch, 0, model, config, out_channels, extra=extra))
        write_history(run_dir, branch, [])
        return result

    for epoch in range(config.epochs):
        lr = optimizer.param_groups[0]['lr']
        result.learning_rates.append(lr)
        model.train()
        losses = []
        for step, (inputs, targets) in enumerate(loader):
            inputs, targets = inputs.to(device), targets.to(device)
            optimizer.zero_grad()
            loss = criterion(model(inputs), targets, grid)
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            result.history.append((epoch + 1, step, loss.item()))
        scheduler.step()

        logger.info(f'{branch} epoch {epoch + 1}/{config.epochs}: lr {lr:.6f}, mean loss {np.mean(losses):.6f}')
        path = save_checkpoint(run_dir, branch, epoch + 1, model, config, out_channels, optimizer, extra)
        write_history(run_dir, branch, result.history)
        result.checkpoint = str(path)
    return result


def check_input(model, pixels: np.ndarray):
    multiple = getattr(model, 'size_multiple', 1)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f'Translator input must be H x W x 3, got {pixels.shape}')
    if pixels.shape[0] % multiple or pixels.shape[1] % multiple:
        raise ValueError(f'Translator input sides must be multiples of {multiple}, got {pixels.shape[:2]}')


@torch.no_grad()
def translate_batch(model, frames, device: str = 'cpu') -> np.ndarray:
    """N x H x W x C outputs of `model` in inference mode."""
    for frame in frames:
        check_input(model, frame.pixels)
    model.eval()
    inputs = torch.stack([frame_tensor(frame) for frame in frames]).to(device)
    return model(inputs).cpu().numpy().transpose(0, 2, 3, 1)


def translate(model, frame: Frame, device: str = 'cpu') -> np.ndarray:
    """H x W x C output map of one frame, values in [0, 1]."""
    return translate_batch(model, [frame], device)[0]

import logging
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import pandas as pd
import torch

from .domain import TrainConfig
from .network import build_model

logger = logging.getLogger(__name__)

LATEST_NAME = 'latest'
HISTORY_NAME = 'loss_history.csv'


def branch_dir(run_dir, branch: str) -> Path:
    return Path(run_dir) / str(branch)


def checkpoint_path(run_dir, branch: str, epoch: int) -> Path:
    return branch_dir(run_dir, branch) / f'epoch_{epoch}.ckpt'


def save_checkpoint(run_dir, branch: str, epoch: int, model, config: TrainConfig, out_channels: int,
                    optimizer=None, extra=None) -> Path:
    """Write `epoch_<n>.ckpt` atomically and point `latest` at it."""
    path = checkpoint_path(run_dir, branch, epoch)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'branch': str(branch),
        'epoch': epoch,
        'out_channels': out_channels,
        'config': {k: (str(v) if isinstance(v, str) else v) for k, v in asdict(config).items()},
        'state_dict': model.state_dict(),
        'optimizer': optimizer.state_dict() if optimizer is not None else None,
        'extra': dict(extra or {}),
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix='.tmp')
    os.close(fd)
    torch.save(payload, tmp)
    os.replace(tmp, path)
    (path.parent / LATEST_NAME).write_text(path.name + '\n')
    logger.debug(f'Saved {branch} checkpoint {path}')
    return path


def latest_checkpoint(run_dir, branch: str) -> Path | None:
    pointer = branch_dir(run_dir, branch) / LATEST_NAME
    if not pointer.exists():
        return None
    path = pointer.parent / pointer.read_text().strip()
    return path if path.exists() else None


def load_model(run_dir, branch: str, device='cpu'):
    """Rebuild the latest model of `branch`; returns (model in eval mode, checkpoint payload)."""
    path = latest_checkpoint(run_dir, branch)
    if path is None:
        raise FileNotFoundError(f'No {branch} checkpoint under {branch_dir(run_dir, branch)}')
    payload = torch.load(path, map_location=device, weights_only=True)
    config = TrainConfig(**{**payload['config'], 'pretrained': False})
    model = build_model(payload['out_channels'], config)
    model.load_state_dict(payload['state_dict'])
    model.to(device).eval()
    return model, payload


def write_history(run_dir, branch: str, history) -> Path:
    path = branch_dir(run_dir, branch) / HISTORY_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(history), columns=['epoch', 'step', 'loss']).to_csv(path, index=False)
    return path


def read_history(run_dir, branch: str) -> pd.DataFrame:
    return pd.read_csv(branch_dir(run_dir, branch) / HISTORY_NAME)

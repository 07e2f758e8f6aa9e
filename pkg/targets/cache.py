"""On-disk target cache.

Layout: `<root>/targets/<branch>/<clip_id>/<index:06d>.bin` plus a
`meta.yaml` per branch describing how the maps were produced. Each map file
is a little-endian header (magic, H, W, channels as uint32) followed by the
float32 data in row-major H x W x C order.
"""
import os
import tempfile
from pathlib import Path

import numpy as np
import yaml

MAGIC = b'TLDM'
HEADER_DTYPE = np.dtype('<u4')
DATA_DTYPE = np.dtype('<f4')


def write_map(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3:
        raise ValueError(f'Cannot cache a map of shape {array.shape}')
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = MAGIC + np.array(array.shape, dtype=HEADER_DTYPE).tobytes() + array.astype(DATA_DTYPE).tobytes()

    # one writer per file: write next to the target, then rename
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_map(path: Path) -> np.ndarray:
    """Read a cached map; single-channel maps come back as H x W."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f'{path} is not a target map file')
    height, width, channels = np.frombuffer(raw, dtype=HEADER_DTYPE, count=3, offset=4)
    data = np.frombuffer(raw, dtype=DATA_DTYPE, offset=16)
    if data.size != height * width * channels:
        raise ValueError(f'{path}: truncated map, expected {height}x{width}x{channels} values')
    data = data.reshape(int(height), int(width), int(channels)).astype(np.float32)
    return data[:, :, 0] if channels == 1 else data


class TargetCache:
    def __init__(self, corpus_root):
        self.root = Path(corpus_root) / 'targets'

    def branch_dir(self, branch: str) -> Path:
        return self.root / str(branch)

    def path(self, branch: str, clip_id: str, index: int) -> Path:
        return self.branch_dir(branch) / clip_id / f'{index:06d}.bin'

    def write(self, branch: str, clip_id: str, index: int, array: np.ndarray) -> None:
        write_map(self.path(branch, clip_id, index), array)

    def read(self, branch: str, clip_id: str, index: int) -> np.ndarray:
        return read_map(self.path(branch, clip_id, index))

    def missing(self, branch: str, clips) -> list[str]:
        return [
            f'{clip.clip_id}/{frame.index:06d}'
            for clip in clips
            for frame in clip.frames
            if not self.path(branch, clip.clip_id, frame.index).exists()
        ]

    def write_meta(self, branch: str, meta: dict) -> None:
        path = self.branch_dir(branch) / 'meta.yaml'
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(meta, sort_keys=True))

    def read_meta(self, branch: str) -> dict | None:
        path = self.branch_dir(branch) / 'meta.yaml'
        if not path.exists():
            return None
        return yaml.safe_load(path.read_text())

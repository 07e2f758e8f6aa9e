"""Exact segmentation and flow read back from the generator's `oracle/` subtree."""
import logging
import zlib
from pathlib import Path

import cv2
import numpy as np

from corpora.domain import Frame
from corpora.utils import read_palette
from targets.domain import FlowField, SegOracleResult
from targets.flow import FlowEstimator
from targets.oracles import SegmentationOracle

logger = logging.getLogger(__name__)

ORACLE_DIR = 'oracle'


def oracle_paths(root: Path, split: str, clip_id: str, index: int) -> tuple[Path, Path]:
    base = Path(root) / ORACLE_DIR / str(split) / clip_id
    return base / f'{index:06d}.class.npy', base / f'{index:06d}.flow.npy'


def _load(path: Path, frame: Frame) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(
            f'Frame {frame.split}/{frame.clip_id}/{frame.index} was not produced by the synthetic generator ({path})'
        )
    return np.load(path)


class AnalyticSegmentationOracle(SegmentationOracle):
    """Renderer ground truth with an optional miss rate emulating detector failures.

    Whether a frame is missed depends only on (seed, split, clip, index).
    """

    def __init__(self, palette, root=None, miss_rate=0.0, seed=0, **options):
        super().__init__(palette)
        if root is None:
            raise ValueError('The analytic oracle needs the corpus root')
        if not 0.0 <= miss_rate <= 1.0:
            raise ValueError(f'miss_rate must lie in [0, 1], got {miss_rate}')
        self.root = Path(root)
        self.miss_rate = miss_rate
        self.seed = seed
        palette_path = self.root / 'palette.txt'
        if palette_path.exists() and tuple(read_palette(palette_path)) != self.palette:
            raise ValueError(f'Palette {list(self.palette)} differs from the generated palette in {palette_path}')

    def _missed(self, frame: Frame) -> bool:
        if self.miss_rate <= 0.0:
            return False
        key = zlib.crc32(f'{str(frame.split)}/{frame.clip_id}'.encode())
        return np.random.default_rng([self.seed, key, frame.index]).random() < self.miss_rate

    def predict(self, frame: Frame) -> SegOracleResult:
        class_path, _ = oracle_paths(self.root, frame.split, frame.clip_id, frame.index)
        class_map = _load(class_path, frame)
        if self._missed(frame):
            logger.debug(f'Emulated miss on {frame.split}/{frame.clip_id}/{frame.index}')
            return SegOracleResult.empty(frame.height, frame.width, missed=True)
        if class_map.shape != (frame.height, frame.width):
            class_map = cv2.resize(class_map, (frame.width, frame.height), interpolation=cv2.INTER_NEAREST)
        return SegOracleResult.from_class_map(class_map)


class AnalyticFlowEstimator(FlowEstimator):
    """Trajectory-derivative flow of generated frames."""

    def __init__(self, root=None, **options):
        super().__init__(**options)
        if root is None:
            raise ValueError('The analytic flow estimator needs the corpus root')
        self.root = Path(root)

    def estimate(self, prev: Frame, curr: Frame) -> FlowField:
        _, flow_path = oracle_paths(self.root, curr.split, curr.clip_id, curr.index)
        flow = _load(flow_path, curr).astype(np.float32)
        height, width = flow.shape[:2]
        if (height, width) != (curr.height, curr.width):
            flow = cv2.resize(flow, (curr.width, curr.height), interpolation=cv2.INTER_LINEAR)
            flow[..., 0] *= curr.width / width
            flow[..., 1] *= curr.height / height
        return FlowField(u=np.ascontiguousarray(flow[..., 0]), v=np.ascontiguousarray(flow[..., 1]))

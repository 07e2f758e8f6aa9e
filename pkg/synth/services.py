import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from corpora.domain import Split
from corpora.manifest import build_manifest
from corpora.utils import write_labels

from .domain import AnomalyKind, SceneSpec
from .oracles import ORACLE_DIR, oracle_paths
from .renderer import background, build_tracks, clip_rng, quantize, render_frame
from .serializers import dump_scene

logger = logging.getLogger(__name__)

GENERATED_DIRS = (Split.TRAIN.value, Split.TEST.value, ORACLE_DIR, 'targets')


def clip_id(split: str, clip_index: int) -> str:
    return f'{split}_{clip_index:03d}'


def _generate_clip(spec: SceneSpec, root: Path, split: str, clip_index: int, backdrop: np.ndarray) -> int:
    rng = clip_rng(spec, split, clip_index)
    tracks, kinds = build_tracks(spec, split, clip_index, rng)
    name = clip_id(split, clip_index)
    frame_dir = root / split / name
    frame_dir.mkdir(parents=True)

    for t in range(spec.frames_per_clip):
        pixels, class_map, flow = render_frame(spec, tracks, t, backdrop)
        Image.fromarray(quantize(pixels, spec.noise, rng)).save(frame_dir / f'{t:06d}.png')
        class_path, flow_path = oracle_paths(root, split, name, t)
        class_path.parent.mkdir(parents=True, exist_ok=True)
        np.save(class_path, class_map)
        np.save(flow_path, flow)

    if split == Split.TEST:
        labels = [int(kind != AnomalyKind.NONE) for kind in kinds]
        write_labels(root / split / f'{name}.labels', labels)
        (root / ORACLE_DIR / split / f'{name}.kinds').write_text(''.join(str(kind) + '\n' for kind in kinds))
        return sum(labels)
    return 0


def generate(spec: SceneSpec, root, workers: int = 4) -> dict:
    """Write a corpus in the standard layout plus exact oracle maps under `oracle/`.

    Previously generated subtrees of `root` are replaced; the output is
    byte-identical for a fixed spec.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name in GENERATED_DIRS:
        if (root / name).exists():
            shutil.rmtree(root / name)

    backdrop = background(spec)
    jobs = [(Split.TRAIN, i) for i in range(spec.train_clips)] + [(Split.TEST, i) for i in range(spec.test_clips)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        anomalous = list(pool.map(lambda job: _generate_clip(spec, root, job[0], job[1], backdrop), jobs))

    (root / 'palette.txt').write_text(''.join(f'{name}\n' for name in spec.palette))
    (root / 'scene.yaml').write_text(dump_scene(spec))
    build_manifest(root, spec.name, spec.palette).save(root)

    summary = {
        'train_clips': spec.train_clips,
        'test_clips': spec.test_clips,
        'frames': len(jobs) * spec.frames_per_clip,
        'anomalous_frames': sum(anomalous),
    }
    logger.info(
        f"Generated scene {spec.name} at {root}: {summary['train_clips']} train / {summary['test_clips']} test clips, "
        f"{summary['anomalous_frames']} anomalous frames"
    )
    return summary

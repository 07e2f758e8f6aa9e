import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .domain import Clip, Corpus, Frame, IngestConfig, Split
from .manifest import MANIFEST_NAME, CorpusManifest
from .utils import frame_paths, load_pixels, read_labels, read_palette, resize_frame

logger = logging.getLogger(__name__)

PALETTE_NAME = 'palette.txt'


def _ingest_clip(clip_dir: Path, split: str, side: int) -> Clip:
    paths = frame_paths(clip_dir)
    frames = []
    for index, path in enumerate(paths):
        frame = Frame(clip_id=clip_dir.name, index=index, pixels=load_pixels(path), split=split)
        frames.append(resize_frame(frame, side))

    labels = None
    labels_path = clip_dir.parent / f'{clip_dir.name}.labels'
    if split == Split.TEST and labels_path.exists():
        labels = read_labels(labels_path)
        if len(labels) != len(frames):
            raise ValueError(
                f'Test clip {clip_dir.name}: {len(frames)} frames but {len(labels)} labels in {labels_path.name}'
            )
    return Clip(clip_id=clip_dir.name, frames=tuple(frames), split=split, labels=labels)


def _resolve_palette(root: Path, config: IngestConfig) -> list[str]:
    if config.palette:
        return list(config.palette)
    if (root / PALETTE_NAME).exists():
        return read_palette(root / PALETTE_NAME)
    if (root / MANIFEST_NAME).exists():
        return CorpusManifest.load(root).palette
    raise ValueError(
        f'No class palette for corpus {root}: set targets palette in the run config or add {PALETTE_NAME}'
    )


def ingest_corpus(root_path, config: IngestConfig | None = None) -> Corpus:
    """Load `<root>/train/<clip>/` and `<root>/test/<clip>/` frame trees into a Corpus.

    Every frame is resized to config.side x config.side with values in [0, 1];
    test labels are read from `<root>/test/<clip>.labels` when present.
    """
    config = config or IngestConfig()
    root = Path(root_path)
    if not root.is_dir():
        raise FileNotFoundError(f'Corpus root {root} does not exist')

    palette = _resolve_palette(root, config)
    name = CorpusManifest.load(root).name if (root / MANIFEST_NAME).exists() else root.name

    clips = {Split.TRAIN: (), Split.TEST: ()}
    for split in map(Split, config.splits):
        split_dir = root / split
        if not split_dir.is_dir():
            raise FileNotFoundError(f'Corpus {name}: missing split directory {split_dir}')
        clip_dirs = sorted(p for p in split_dir.iterdir() if p.is_dir())
        if split == Split.TRAIN and not clip_dirs:
            raise ValueError(f'Corpus {name}: no training clips in {split_dir}')

        with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
            loaded = list(pool.map(lambda d: _ingest_clip(d, split, config.side), clip_dirs))
        for clip in loaded:
            if not len(clip):
                raise ValueError(f'Corpus {name}: clip {clip.clip_id} has no frames')
        clips[split] = tuple(loaded)
        logger.info(
            f'Ingested {len(loaded)} {split} clips ({sum(len(c) for c in loaded)} frames) from {root}'
        )

    return Corpus(
        name=name,
        train_clips=clips[Split.TRAIN],
        test_clips=clips[Split.TEST],
        class_palette=tuple(palette),
    )


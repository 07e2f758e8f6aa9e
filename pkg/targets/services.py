import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from corpora.domain import Clip, Corpus, Split
from corpora.manifest import build_manifest

from .cache import TargetCache
from .domain import Branch, TargetOptions
from .flow import dense_flow, flow_magnitude, get_flow_estimator
from .oracles import get_segmentation_oracle, segment
from .utils import compute_flow_cap, make_seg_target, mask_flow, scale_flow_target

logger = logging.getLogger(__name__)

# meta keys that must agree with the run config for a cache to be reused
CACHE_OPTION_KEYS = ('oracle', 'oracle_miss_rate', 'masking', 'flow_estimator')


class StaleTargets(FileNotFoundError):
    """Targets are missing or were built for other inputs; gen_targets must run."""


def _check_clip_ids(corpus: Corpus, splits) -> list[Clip]:
    clips, seen = [], set()
    for split in splits:
        for clip in corpus.clips(split):
            if clip.clip_id in seen:
                raise ValueError(f'Clip id {clip.clip_id} appears in more than one split')
            seen.add(clip.clip_id)
            clips.append(clip)
    return clips


def generate_targets(
    corpus: Corpus,
    root,
    branches,
    options: TargetOptions,
    splits=(Split.TRAIN, Split.TEST),
    seed: int = 0,
    workers: int = 4,
) -> dict:
    """Compute and cache appearance and/or motion targets for every frame of `splits`.

    Returns the meta written per branch. The motion meta carries the flow cap:
    `options.flow_cap` when set, otherwise derived from the training split.
    """
    root = Path(root)
    branches = [Branch(b) for b in branches]
    cache = TargetCache(root)
    clips = _check_clip_ids(corpus, splits)

    needs_oracle = Branch.APPEARANCE in branches or options.masking
    oracle = None
    if needs_oracle:
        oracle = get_segmentation_oracle(
            options.oracle, corpus.class_palette, root=root, miss_rate=options.oracle_miss_rate, seed=seed
        )
    estimator = get_flow_estimator(options.flow_estimator, root=root) if Branch.MOTION in branches else None

    def process(clip: Clip):
        misses = 0
        foreground = []
        prev = None
        for frame in clip.frames:
            result = segment(frame, oracle) if oracle is not None else None
            if result is not None and result.missed:
                misses += 1
            if Branch.APPEARANCE in branches:
                cache.write(Branch.APPEARANCE, clip.clip_id, frame.index, make_seg_target(result, corpus.palette_size))
            if Branch.MOTION in branches:
                magnitude = flow_magnitude(dense_flow(prev, frame, estimator))
                target = mask_flow(magnitude, result.instance_mask) if options.masking else magnitude
                cache.write(Branch.MOTION, clip.clip_id, frame.index, target)
                if clip.split == Split.TRAIN:
                    foreground.append(target[target > 0])
            prev = frame
        logger.debug(f'Targets written for {clip.split}/{clip.clip_id} ({len(clip)} frames, {misses} oracle misses)')
        return misses, foreground

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(process, clips))

    total_misses = sum(misses for misses, _ in outcomes)
    frame_count = sum(len(clip) for clip in clips)
    logger.info(
        f"Generated {', '.join(branches)} targets for {frame_count} frames of {corpus.name} "
        f'({total_misses} oracle misses)'
    )

    manifest = build_manifest(root, corpus.name, list(corpus.class_palette))
    manifest.save(root)
    meta_common = {
        'corpus': corpus.name,
        'manifest_digest': manifest.digest(),
        'palette': list(corpus.class_palette),
        'splits': [str(s) for s in splits],
        'frames': frame_count,
        'oracle': options.oracle,
        'oracle_miss_rate': float(options.oracle_miss_rate),
        'masking': bool(options.masking),
        'flow_estimator': options.flow_estimator,
    }

    metas = {}
    for branch in branches:
        meta = dict(meta_common, branch=str(branch))
        if branch == Branch.MOTION:
            if options.flow_cap is not None:
                cap = float(options.flow_cap)
            elif Split.TRAIN in splits:
                cap = compute_flow_cap(
                    [values for _, chunks in outcomes for values in chunks],
                    percentile=options.flow_cap_percentile,
                    headroom=options.flow_cap_headroom,
                )
            else:
                raise ValueError('A flow cap is required when no training split is processed')
            meta['flow_cap'] = cap
            logger.info(f'Motion targets of {corpus.name} scaled with flow cap {cap:.4f}')
        cache.write_meta(branch, meta)
        metas[str(branch)] = meta
    return metas


def verify_targets(root, corpus: Corpus, branch: str, options: TargetOptions, splits) -> dict:
    """Check the cache of `branch` matches the corpus and options; return its meta.

    Raises StaleTargets when gen_targets has to run, and ValueError listing
    frames without a target.
    """
    root = Path(root)
    cache = TargetCache(root)
    meta = cache.read_meta(branch)
    if meta is None:
        raise StaleTargets(f'No {branch} targets under {cache.root}')

    digest = build_manifest(root, corpus.name, list(corpus.class_palette)).digest()
    if meta.get('manifest_digest') != digest:
        raise StaleTargets(f'{branch} targets under {cache.root} were built for different corpus content')
    for key in CACHE_OPTION_KEYS:
        if meta.get(key) != getattr(options, key):
            raise StaleTargets(
                f'{branch} targets were built with {key}={meta.get(key)!r}, config has {getattr(options, key)!r}'
            )

    missing = cache.missing(branch, [clip for split in splits for clip in corpus.clips(split)])
    if missing:
        shown = ', '.join(missing[:10]) + (' ...' if len(missing) > 10 else '')
        raise ValueError(f'{len(missing)} frames have no {branch} target: {shown}')
    return meta


def load_target(cache: TargetCache, branch: str, clip_id: str, index: int, flow_cap: float | None = None) -> np.ndarray:
    """Cached target in the translator's output range: H x W x K (appearance) or H x W (motion)."""
    target = cache.read(branch, clip_id, index)
    if branch == Branch.MOTION:
        return scale_flow_target(target, flow_cap)
    return target

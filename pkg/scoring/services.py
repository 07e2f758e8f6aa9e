import logging
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from corpora.domain import Clip
from targets.cache import TargetCache
from targets.domain import Branch
from targets.services import load_target
from translator.checkpoints import load_model
from translator.services import translate_batch

from .domain import BranchCalibration, ScoreSeries, ScoreStage, ScoringConfig
from .utils import anomaly_map, calibrate, frame_score, fuse, refine, smooth_scores

logger = logging.getLogger(__name__)

SCORES_NAME = 'scores.csv'
CALIBRATION_NAME = 'calibration.yaml'
STAGES = (ScoreStage.RAW, ScoreStage.REFINED, ScoreStage.SMOOTHED)
COLUMNS = [
    'clip_id', 'frame_index',
    'app_raw', 'app_refined', 'app_smooth',
    'mot_raw', 'mot_refined', 'mot_smooth',
    'fused_raw', 'fused_refined', 'fused',
    # flags test the un-normalized smoothed branch score; empty without a threshold
    'app_flag', 'mot_flag', 'label',
]


def iter_maps(model, clip: Clip, cache: TargetCache, branch: str, flow_cap, config: ScoringConfig, device='cpu'):
    """Yield (frame, raw map, refined map) for every frame of `clip`."""
    frames = list(clip.frames)
    for start in range(0, len(frames), config.batch_size):
        batch = frames[start:start + config.batch_size]
        outputs = translate_batch(model, batch, device)
        for frame, output in zip(batch, outputs):
            target = load_target(cache, branch, clip.clip_id, frame.index, flow_cap=flow_cap)
            raw = anomaly_map(output, target, branch)
            refined = refine(raw, config.kernel_size, config.iterations) if config.refine else raw
            yield frame, raw, refined


def clip_scores(model, clip: Clip, cache: TargetCache, branch: str, flow_cap, config: ScoringConfig,
                device='cpu') -> dict:
    """Raw, refined and smoothed score series of one clip and branch."""
    raw, refined = [], []
    for _, raw_map, refined_map in iter_maps(model, clip, cache, branch, flow_cap, config, device):
        raw.append(frame_score(raw_map))
        refined.append(frame_score(refined_map))
    raw_series = ScoreSeries(clip.clip_id, np.asarray(raw), ScoreStage.RAW)
    refined_series = ScoreSeries(clip.clip_id, np.asarray(refined), ScoreStage.REFINED)
    return {
        ScoreStage.RAW: raw_series,
        ScoreStage.REFINED: refined_series,
        ScoreStage.SMOOTHED: smooth_scores(refined_series, config.window, config.polyorder),
    }


def load_branch_models(run_dir, device='cpu') -> dict:
    """Latest model of each branch plus the flow cap the motion model was trained with."""
    models = {}
    for branch in Branch:
        model, payload = load_model(run_dir, branch, device)
        models[branch] = (model, payload['extra'].get('flow_cap'))
    return models


def write_calibration(run_dir, calibrations: dict) -> Path:
    path = Path(run_dir) / CALIBRATION_NAME
    path.write_text(yaml.safe_dump({str(stage): c.to_dict() for stage, c in calibrations.items()}, sort_keys=False))
    return path


def read_calibration(run_dir) -> dict:
    data = yaml.safe_load((Path(run_dir) / CALIBRATION_NAME).read_text())
    return {stage: BranchCalibration.from_dict(stats) for stage, stats in data.items()}


def _flag_column(flags, length):
    if flags is None:
        return [None] * length
    return [int(f) for f in flags]


def score_run(run_dir, train_clips, train_root, test_clips, test_root, config: ScoringConfig,
              device='cpu') -> pd.DataFrame:
    """Score every test frame with both branches and write `scores.csv` and `calibration.yaml`.

    Calibration statistics come from the training clips, stage by stage.
    The per-branch OR flags compare the smoothed branch score, before
    z-normalization, with that branch's threshold, so they agree with the
    `app_smooth` and `mot_smooth` columns.
    """
    if not test_clips:
        raise ValueError('Corpus has no test clips to score')
    models = load_branch_models(run_dir, device)
    train_cache, test_cache = TargetCache(train_root), TargetCache(test_root)

    def score_all(clips, cache):
        scores = {}
        for branch, (model, flow_cap) in models.items():
            scores[branch] = [clip_scores(model, clip, cache, branch, flow_cap, config, device) for clip in clips]
        return scores

    train_scores = score_all(train_clips, train_cache)
    calibrations = {
        stage: calibrate({branch: [clip[stage] for clip in per_clip] for branch, per_clip in train_scores.items()})
        for stage in STAGES
    }
    for stage, calibration in calibrations.items():
        logger.info(f'Calibration ({stage}): {calibration.to_dict()}')

    test_scores = score_all(test_clips, test_cache)
    frames = []
    for i, clip in enumerate(test_clips):
        app = test_scores[Branch.APPEARANCE][i]
        mot = test_scores[Branch.MOTION][i]
        fused = {stage: fuse(app[stage], mot[stage], calibrations[stage], config.thresholds) for stage in STAGES}
        smoothed = fused[ScoreStage.SMOOTHED]
        frames.append(pd.DataFrame({
            'clip_id': clip.clip_id,
            'frame_index': np.arange(len(clip)),
            'app_raw': app[ScoreStage.RAW].scores,
            'app_refined': app[ScoreStage.REFINED].scores,
            'app_smooth': app[ScoreStage.SMOOTHED].scores,
            'mot_raw': mot[ScoreStage.RAW].scores,
            'mot_refined': mot[ScoreStage.REFINED].scores,
            'mot_smooth': mot[ScoreStage.SMOOTHED].scores,
            'fused_raw': fused[ScoreStage.RAW].fused.scores,
            'fused_refined': fused[ScoreStage.REFINED].fused.scores,
            'fused': smoothed.fused.scores,
            'app_flag': _flag_column(smoothed.appearance_flags, len(clip)),
            'mot_flag': _flag_column(smoothed.motion_flags, len(clip)),
            'label': list(clip.labels) if clip.labels is not None else [None] * len(clip),
        }, columns=COLUMNS))

    table = pd.concat(frames, ignore_index=True)
    run_dir = Path(run_dir)
    table.to_csv(run_dir / SCORES_NAME, index=False)
    write_calibration(run_dir, calibrations)
    logger.info(f'Scored {len(table)} frames of {len(test_clips)} test clips into {run_dir / SCORES_NAME}')
    return table


def read_scores(run_dir) -> pd.DataFrame:
    return pd.read_csv(Path(run_dir) / SCORES_NAME, dtype={'clip_id': str})

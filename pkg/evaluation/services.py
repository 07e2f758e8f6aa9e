import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from corpora.domain import Corpus
from scoring.services import read_scores
from synth.domain import AnomalyKind
from synth.oracles import ORACLE_DIR

from .metrics import roc_auc

logger = logging.getLogger(__name__)

REPORT_NAME = 'report.txt'

SCORE_COLUMNS = {
    'app': {'raw': 'app_raw', 'refined': 'app_refined', 'smoothed': 'app_smooth'},
    'mot': {'raw': 'mot_raw', 'refined': 'mot_refined', 'smoothed': 'mot_smooth'},
    'fused': {'raw': 'fused_raw', 'refined': 'fused_refined', 'smoothed': 'fused'},
}

# published frame-level AUC (%) on the public benchmarks, for side-by-side reading only
PUBLISHED_AUC = {'shanghaitech': 86.18, 'ucsd_ped2': 97.76, 'ucsd_ped1': 88.61}
PUBLISHED_AUC_UNSMOOTHED = {'shanghaitech': 85.52, 'ucsd_ped2': 96.19, 'ucsd_ped1': 86.81}


@dataclass
class EvalReport:
    entries: dict = field(default_factory=dict)
    frames: int = 0
    anomalous_frames: int = 0
    per_clip_normalize: bool = False
    macro: bool = False

    def auc(self, branch: str, stage: str, kind: str | None = None) -> float:
        return self.entries[auc_key(branch, stage, kind)]

    def to_text(self) -> str:
        lines = [
            f'frames={self.frames}',
            f'anomalous_frames={self.anomalous_frames}',
            f'per_clip_normalize={str(self.per_clip_normalize).lower()}',
            f'macro={str(self.macro).lower()}',
        ]
        lines += [f'{key}={value:.6f}' for key, value in self.entries.items()]
        lines += [f'published.{name}={value:.2f}' for name, value in PUBLISHED_AUC.items()]
        lines += [f'published_unsmoothed.{name}={value:.2f}' for name, value in PUBLISHED_AUC_UNSMOOTHED.items()]
        return '\n'.join(lines) + '\n'

    def table(self) -> str:
        rows = [f"{'branch':<8}{'raw':>10}{'refined':>10}{'smoothed':>10}"]
        for prefix in ('auc', 'macro_auc'):
            if not any(key.startswith(prefix + '.') for key in self.entries):
                continue
            rows.append(f'[{prefix}]')
            for branch in SCORE_COLUMNS:
                values = [self.entries.get(f'{prefix}.{branch}.{stage}') for stage in ('raw', 'refined', 'smoothed')]
                rows.append(f'{branch:<8}' + ''.join(f'{v:>10.4f}' if v is not None else f"{'n/a':>10}" for v in values))
        for kind in (AnomalyKind.CLASS, AnomalyKind.SPEED):
            values = [self.entries.get(auc_key(branch, 'smoothed', kind.value)) for branch in SCORE_COLUMNS]
            if any(v is not None for v in values):
                rows.append(f'[{kind.value} anomalies, smoothed] ' + '  '.join(
                    f'{branch}={v:.4f}' for branch, v in zip(SCORE_COLUMNS, values) if v is not None
                ))
        rows.append('published (%): ' + ', '.join(f'{k}={v}' for k, v in PUBLISHED_AUC.items()))
        rows.append('published without smoothing (%): ' + ', '.join(f'{k}={v}' for k, v in PUBLISHED_AUC_UNSMOOTHED.items()))
        return '\n'.join(rows)


def auc_key(branch: str, stage: str, kind: str | None = None) -> str:
    return f'auc.{branch}.{stage}' + (f'.{kind}' if kind else '')


def normalize_per_clip(table: pd.DataFrame, columns) -> pd.DataFrame:
    """Min-max scale each score column within each clip; constant clips become 0."""
    table = table.copy()
    grouped = table.groupby('clip_id', sort=False)
    for column in columns:
        low = grouped[column].transform('min')
        span = grouped[column].transform('max') - low
        table[column] = np.where(span > 0, (table[column] - low) / span.where(span > 0, 1.0), 0.0)
    return table


def read_kinds(corpus_root, table: pd.DataFrame) -> pd.Series | None:
    """Per-frame anomaly kind of generated corpora, aligned with `table`; None otherwise."""
    if corpus_root is None:
        return None
    base = Path(corpus_root) / ORACLE_DIR / 'test'
    kinds = {}
    for clip_id in table['clip_id'].unique():
        path = base / f'{clip_id}.kinds'
        if not path.exists():
            return None
        kinds[clip_id] = path.read_text().split()
    return pd.Series(
        [kinds[clip][int(index)] for clip, index in zip(table['clip_id'], table['frame_index'])],
        index=table.index,
    )


def macro_auc(table: pd.DataFrame, column: str) -> float | None:
    """Mean of per-clip AUCs over clips holding both normal and anomalous frames."""
    values = [
        roc_auc(clip[column], clip['label'])
        for _, clip in table.groupby('clip_id', sort=False)
        if clip['label'].nunique() == 2
    ]
    return float(np.mean(values)) if values else None


def missing_frames(table: pd.DataFrame, clips) -> list[str]:
    """`clip/index` of every labeled test frame without a row in `table`."""
    scored = set(zip(table['clip_id'].astype(str), table['frame_index'].astype(int)))
    return [
        f'{clip.clip_id}/{frame.index:06d}'
        for clip in clips
        if clip.labels is not None
        for frame in clip.frames
        if (clip.clip_id, frame.index) not in scored
    ]


def evaluate_run(run_dir, corpus: Corpus | None = None, corpus_root=None, per_clip_normalize: bool = False,
                 macro: bool = False) -> EvalReport:
    """AUC of every branch and stage over the test frames in `scores.csv`; writes `report.txt`.

    With `corpus`, every labeled test frame must have a score row.
    """
    table = read_scores(run_dir)
    if corpus is not None:
        missing = missing_frames(table, corpus.test_clips)
        if missing:
            raise ValueError(f"{len(missing)} labeled test frames have no score: {', '.join(missing)}")
    if table['label'].isna().any():
        unlabeled = sorted(table.loc[table['label'].isna(), 'clip_id'].unique())
        raise ValueError(f"Test clips without labels cannot be evaluated: {', '.join(unlabeled)}")
    table['label'] = table['label'].astype(int)
    columns = [c for stages in SCORE_COLUMNS.values() for c in stages.values()]
    if per_clip_normalize:
        table = normalize_per_clip(table, columns)

    report = EvalReport(
        frames=len(table),
        anomalous_frames=int(table['label'].sum()),
        per_clip_normalize=per_clip_normalize,
        macro=macro,
    )
    for branch, stages in SCORE_COLUMNS.items():
        for stage, column in stages.items():
            report.entries[auc_key(branch, stage)] = roc_auc(table[column], table['label'])

    if macro:
        for branch, stages in SCORE_COLUMNS.items():
            for stage, column in stages.items():
                value = macro_auc(table, column)
                if value is None:
                    raise ValueError('No test clip holds both normal and anomalous frames; macro AUC is undefined')
                report.entries[f'macro_auc.{branch}.{stage}'] = value

    kinds = read_kinds(corpus_root, table)
    if kinds is not None:
        for kind in (AnomalyKind.CLASS, AnomalyKind.SPEED):
            subset = table[kinds.isin([AnomalyKind.NONE.value, kind.value])]
            if subset['label'].nunique() < 2:
                continue
            for branch, stages in SCORE_COLUMNS.items():
                report.entries[auc_key(branch, 'smoothed', kind.value)] = roc_auc(subset[stages['smoothed']], subset['label'])

    path = Path(run_dir) / REPORT_NAME
    path.write_text(report.to_text())
    logger.info(
        f"Fused smoothed AUC {report.auc('fused', 'smoothed'):.4f} over {report.frames} frames; report at {path}"
    )
    return report

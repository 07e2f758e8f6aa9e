import logging

import numpy as np
from django.conf import settings

from corpora.domain import Split
from corpora.services import ingest_corpus
from pipeline.commands import PipelineCommand, require
from pipeline.plots import plot_clip, save_map
from scoring.services import CALIBRATION_NAME, SCORES_NAME, iter_maps, load_branch_models, read_calibration, read_scores
from targets.cache import TargetCache
from targets.domain import Branch

logger = logging.getLogger(__name__)

PLOTS_DIR = 'plots'


class Command(PipelineCommand):
    help = 'Draw per-clip score curves with anomaly intervals shaded, optionally with anomaly maps.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--maps', type=int, default=0, metavar='N',
                            help='Also save refined anomaly maps of the N highest-scoring frames per clip')
        parser.add_argument('--clip', dest='clips', action='append', default=[], help='Limit to these clips')

    def run(self, config, **options):
        require(config.run_path / SCORES_NAME, 'score', 'scores')
        require(config.run_path / CALIBRATION_NAME, 'score', 'calibration')
        if options['maps'] < 0:
            raise ValueError('--maps must be nonnegative')
        table = read_scores(config.run_path)
        if options['clips']:
            unknown = sorted(set(options['clips']) - set(table['clip_id']))
            if unknown:
                raise ValueError(f"Unknown clips: {', '.join(unknown)}")
            table = table[table['clip_id'].isin(options['clips'])]

        calibration = read_calibration(config.run_path)['smoothed']
        app_stats = calibration.for_branch(Branch.APPEARANCE)
        mot_stats = calibration.for_branch(Branch.MOTION)
        out_dir = config.run_path / PLOTS_DIR
        out_dir.mkdir(parents=True, exist_ok=True)

        written = 0
        for clip_id, clip in table.groupby('clip_id', sort=False):
            labels = None if clip['label'].isna().any() else clip['label'].astype(int).to_numpy()
            plot_clip(
                clip['frame_index'].to_numpy(),
                (clip['app_smooth'].to_numpy() - app_stats.mean) / app_stats.std,
                (clip['mot_smooth'].to_numpy() - mot_stats.mean) / mot_stats.std,
                labels,
                out_dir / f'{clip_id}.png',
                title=clip_id,
            )
            written += 1

        if options['maps']:
            written += self.save_maps(config, table, options['maps'], out_dir)
        self.stdout.write(self.style.SUCCESS(f'Wrote {written} images to {out_dir}'))

    def save_maps(self, config, table, count, out_dir) -> int:
        root = config.test_corpus_path
        corpus = ingest_corpus(root, config.ingest_config([Split.TEST]))
        clips = {clip.clip_id: clip for clip in corpus.test_clips}
        models = load_branch_models(config.run_path, settings.TRANSLAD_DEVICE)
        cache = TargetCache(root)
        written = 0
        for clip_id, rows in table.groupby('clip_id', sort=False):
            top = set(rows.nlargest(count, 'fused')['frame_index'].astype(int))
            for branch, (model, flow_cap) in models.items():
                prefix = 'app' if branch == Branch.APPEARANCE else 'mot'
                for frame, _, refined in iter_maps(model, clips[clip_id], cache, branch, flow_cap, config.scoring):
                    if frame.index in top:
                        save_map(refined.values, out_dir / f'{clip_id}_{frame.index:06d}_{prefix}.png',
                                 vmax=float(np.max(refined.values)) or 1.0)
                        written += 1
        logger.info(f'Saved {written} anomaly maps')
        return written

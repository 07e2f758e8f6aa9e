import math
from dataclasses import replace

from django.conf import settings

from corpora.domain import Split
from corpora.services import ingest_corpus
from pipeline.commands import PipelineCommand, StageMissing
from scoring.services import SCORES_NAME, score_run
from targets.domain import Branch
from targets.services import verify_targets
from translator.checkpoints import latest_checkpoint, load_model


class Command(PipelineCommand):
    help = 'Score every test frame with both branches and write scores.csv.'

    def run(self, config, **options):
        for branch in Branch:
            if latest_checkpoint(config.run_path, branch) is None:
                raise StageMissing('train', f'no {branch} checkpoint in {config.run_path}')

        train_root, test_root = config.corpus_path, config.test_corpus_path
        if config.test_corpus:
            corpus = ingest_corpus(train_root, config.ingest_config([Split.TRAIN]))
            ingest = replace(config.ingest_config([Split.TEST]), palette=list(corpus.class_palette))
            test_corpus = ingest_corpus(test_root, ingest)
        else:
            corpus = test_corpus = ingest_corpus(train_root, config.ingest_config())

        for branch in Branch:
            verify_targets(train_root, corpus, branch, config.targets, [Split.TRAIN])
            meta = verify_targets(test_root, test_corpus, branch, config.targets, [Split.TEST])
            if branch == Branch.MOTION:
                trained_cap = load_model(config.run_path, branch)[1]['extra'].get('flow_cap')
                if trained_cap is None or not math.isclose(trained_cap, meta['flow_cap']):
                    raise StageMissing(
                        'train', f"motion model used flow cap {trained_cap}, targets use {meta['flow_cap']}"
                    )

        table = score_run(
            config.run_path, corpus.train_clips, train_root, test_corpus.test_clips, test_root,
            config.scoring, device=settings.TRANSLAD_DEVICE,
        )
        self.stdout.write(self.style.SUCCESS(
            f"Scored {len(table)} frames of {table['clip_id'].nunique()} clips into {config.run_path / SCORES_NAME}"
        ))

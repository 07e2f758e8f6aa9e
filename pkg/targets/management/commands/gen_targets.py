from dataclasses import replace

from corpora.domain import Split
from corpora.services import ingest_corpus
from pipeline.commands import PipelineCommand, StageMissing
from pipeline.config import save_config
from targets.domain import Branch
from targets.services import generate_targets


class Command(PipelineCommand):
    help = 'Compute and cache segmentation and flow targets for every frame of the corpus.'
    branch_option = True

    def run(self, config, **options):
        root = config.corpus_path
        if not (root / Split.TRAIN).is_dir():
            raise StageMissing('synth', f'no corpus at {root}')
        branches = self.branches(options)
        corpus = ingest_corpus(root, config.ingest_config())
        metas = generate_targets(
            corpus, root, branches, config.targets, seed=config.seed, workers=config.ingest.workers
        )
        for branch, meta in metas.items():
            cap = f", flow cap {meta['flow_cap']:.4f}" if 'flow_cap' in meta else ''
            self.stdout.write(self.style.SUCCESS(f"{branch} targets for {meta['frames']} frames{cap}"))

        if Branch.MOTION in branches and config.targets.flow_cap is None:
            # later stages and re-runs reuse the cap the targets were scaled with
            config.targets.flow_cap = metas[Branch.MOTION.value]['flow_cap']
            save_config(config)

        if config.test_corpus:
            test_root = config.test_corpus_path
            if not (test_root / Split.TEST).is_dir():
                raise StageMissing('synth', f'no test corpus at {test_root}')
            ingest = replace(config.ingest_config([Split.TEST]), palette=list(corpus.class_palette))
            test_corpus = ingest_corpus(test_root, ingest)
            test_options = config.targets
            if Branch.MOTION in branches:
                test_options = replace(test_options, flow_cap=metas[Branch.MOTION.value]['flow_cap'])
            generate_targets(
                test_corpus, test_root, branches, test_options, splits=(Split.TEST,), seed=config.seed,
                workers=config.ingest.workers,
            )
            self.stdout.write(self.style.SUCCESS(f'Test targets written for {test_root}'))

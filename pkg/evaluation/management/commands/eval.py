from corpora.domain import Split
from corpora.services import ingest_corpus
from evaluation.services import REPORT_NAME, evaluate_run
from pipeline.commands import PipelineCommand, require
from scoring.services import SCORES_NAME


class Command(PipelineCommand):
    help = 'Compute frame-level AUC for every branch and post-processing stage.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--per-clip-normalize', action='store_true', help='Min-max scores within each clip first')
        parser.add_argument('--macro', action='store_true', help='Also report the mean of per-clip AUCs')

    def run(self, config, **options):
        require(config.run_path / SCORES_NAME, 'score', 'scores')
        root = config.test_corpus_path
        require(root / Split.TEST, 'synth', 'test corpus')
        corpus = ingest_corpus(root, config.ingest_config([Split.TEST]))
        report = evaluate_run(
            config.run_path,
            corpus=corpus,
            corpus_root=root,
            per_clip_normalize=options['per_clip_normalize'] or config.evaluation.per_clip_normalize,
            macro=options['macro'] or config.evaluation.macro,
        )
        self.stdout.write(report.table())
        self.stdout.write(self.style.SUCCESS(f'Report written to {config.run_path / REPORT_NAME}'))

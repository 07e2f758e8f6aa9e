from django.conf import settings

from corpora.domain import Split
from corpora.services import ingest_corpus
from pipeline.commands import PipelineCommand, StageMissing
from targets.services import verify_targets
from translator.services import train


class Command(PipelineCommand):
    help = 'Train the appearance and/or motion translator on the training clips.'
    branch_option = True

    def run(self, config, **options):
        root = config.corpus_path
        if not (root / Split.TRAIN).is_dir():
            raise StageMissing('synth', f'no corpus at {root}')
        corpus = ingest_corpus(root, config.ingest_config([Split.TRAIN]))
        for branch in self.branches(options):
            meta = verify_targets(root, corpus, branch, config.targets, [Split.TRAIN])
            result = train(
                corpus, root, branch, config.train_config(branch), config.run_path,
                flow_cap=meta.get('flow_cap'), device=settings.TRANSLAD_DEVICE,
            )
            means = result.epoch_means()
            final = f', final epoch loss {means[-1]:.6f}' if means else ''
            self.stdout.write(self.style.SUCCESS(f'{branch}: {result.epochs} epochs{final}; {result.checkpoint}'))

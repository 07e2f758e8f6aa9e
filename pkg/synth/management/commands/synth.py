from django.core.management.base import CommandError
from rest_framework import serializers

from pipeline.commands import PipelineCommand
from synth.serializers import load_scene
from synth.services import generate


class Command(PipelineCommand):
    help = "Render a synthetic corpus with exact ground truth from the run's scene file."

    def run(self, config, **options):
        try:
            spec = load_scene(config.scene_path)
        except serializers.ValidationError as exc:
            raise CommandError(f'Invalid scene {config.scene_path}: {exc.detail}')
        summary = generate(spec, config.corpus_path, workers=config.ingest.workers)
        self.stdout.write(self.style.SUCCESS(
            f"Scene {spec.name}: {summary['frames']} frames ({summary['anomalous_frames']} anomalous) "
            f'written to {config.corpus_path}'
        ))

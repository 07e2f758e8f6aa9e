import logging

from django.core.management.base import BaseCommand, CommandError

from targets.domain import Branch
from targets.services import StaleTargets

from .config import ConfigError, resolve_config, save_config

logger = logging.getLogger(__name__)

BRANCH_ALIASES = {
    'app': [Branch.APPEARANCE],
    'mot': [Branch.MOTION],
    'both': [Branch.APPEARANCE, Branch.MOTION],
}


class StageMissing(CommandError):
    """A previous pipeline stage has not produced its outputs."""

    def __init__(self, command: str, detail: str = ''):
        message = f'run `{command}` first' + (f' ({detail})' if detail else '')
        super().__init__(message, returncode=1)


def require(path, command: str, what: str):
    if not path.exists():
        raise StageMissing(command, f'no {what} at {path}')


class PipelineCommand(BaseCommand):
    """Resolves the run config, snapshots it into the run directory, then calls `run`.

    Domain errors become CommandError (exit 1); config errors exit 2.
    """

    branch_option = False
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', dest='config_path', help='YAML run config')
        parser.add_argument(
            '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
            help='Override one config field, e.g. --set appearance.epochs=5',
        )
        parser.add_argument('--run-dir', dest='run_dir', help='Run directory (defaults to TRANSLAD_RUN_DIR)')
        if self.branch_option:
            parser.add_argument('--branch', choices=sorted(BRANCH_ALIASES), default='both')

    def handle(self, *args, **options):
        try:
            config = resolve_config(options['config_path'], options['overrides'], options['run_dir'])
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2)
        save_config(config)
        try:
            return self.run(config, **options)
        except StaleTargets as exc:
            raise StageMissing('gen_targets', str(exc))
        except (ValueError, FileNotFoundError) as exc:
            raise CommandError(str(exc))

    def run(self, config, **options):
        raise NotImplementedError

    def branches(self, options):
        return BRANCH_ALIASES[options.get('branch') or 'both']

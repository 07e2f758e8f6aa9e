import io
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag
from unittest import skipUnless

from evaluation.management.commands.eval import Command as EvalCommand
from scoring.services import COLUMNS
from synth.tests import small_scene

from .config import CONFIG_NAME, ConfigError, parse_override, resolve_config
from .plots import label_intervals


def run(command, run_dir, *args):
    call_command(command, '--run-dir', str(run_dir), *args, stdout=io.StringIO())


class ConfigTests(SimpleTestCase):
    """Tests for run configuration resolution."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name) / 'run'

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults(self):
        config = resolve_config(run_dir=self.run_dir)
        self.assertEqual(config.scoring.kernel_size, 3)
        self.assertEqual(config.scoring.window, 41)
        self.assertEqual(config.scoring.polyorder, 1)
        self.assertEqual(config.appearance.lr0, 0.005)
        self.assertEqual(config.appearance.grid_k, 9)
        self.assertEqual(config.corpus_path, self.run_dir / 'corpus')
        self.assertIsNone(config.targets.flow_cap)

    def test_override_parsing(self):
        self.assertEqual(parse_override('motion.epochs=5'), {'motion': {'epochs': 5}})
        self.assertEqual(parse_override('targets.masking=false'), {'targets': {'masking': False}})
        self.assertEqual(parse_override('ingest.palette=[person, car]'), {'ingest': {'palette': ['person', 'car']}})
        for text in ('motion.epochs', '=3', 'a..b=1'):
            with self.assertRaises(ConfigError):
                parse_override(text)

    def test_layering(self):
        """Test config file values are overridden by --set values."""
        path = Path(self.tmp.name) / 'custom.yaml'
        path.write_text(yaml.safe_dump({'seed': 4, 'motion': {'epochs': 3, 'batch_size': 2}}))
        config = resolve_config(path, ['motion.epochs=7'], run_dir=self.run_dir)
        self.assertEqual(config.seed, 4)
        self.assertEqual(config.motion.epochs, 7)
        self.assertEqual(config.motion.batch_size, 2)
        self.assertEqual(config.appearance.epochs, 60)

    def test_stored_snapshot_is_reused(self):
        self.run_dir.mkdir(parents=True)
        (self.run_dir / CONFIG_NAME).write_text(yaml.safe_dump({'scoring': {'window': 21}}))
        self.assertEqual(resolve_config(run_dir=self.run_dir).scoring.window, 21)

    def test_unknown_key(self):
        with self.assertRaisesMessage(ConfigError, 'scoring.kernel'):
            resolve_config(overrides=['scoring.kernel=3'], run_dir=self.run_dir)

    def test_invalid_values_name_fields(self):
        with self.assertRaisesMessage(ConfigError, 'kernel_size'):
            resolve_config(overrides=['scoring.kernel_size=4'], run_dir=self.run_dir)
        with self.assertRaisesMessage(ConfigError, 'polyorder'):
            resolve_config(overrides=['scoring.polyorder=41'], run_dir=self.run_dir)
        with self.assertRaisesMessage(ConfigError, 'grid_k'):
            resolve_config(overrides=['motion.grid_k=8'], run_dir=self.run_dir)
        with self.assertRaisesMessage(ConfigError, 'oracle'):
            resolve_config(overrides=['targets.oracle=psychic'], run_dir=self.run_dir)


class CommandSurfaceTests(SimpleTestCase):
    """Tests for stage ordering and exit codes."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name) / 'run'

    def tearDown(self):
        self.tmp.cleanup()

    def test_eval_before_score(self):
        with self.assertRaisesMessage(CommandError, 'run `score` first'):
            run('eval', self.run_dir)

    def test_score_before_train(self):
        with self.assertRaisesMessage(CommandError, 'run `train` first'):
            run('score', self.run_dir)

    def test_gen_targets_before_synth(self):
        with self.assertRaisesMessage(CommandError, 'run `synth` first'):
            run('gen_targets', self.run_dir)

    def test_plot_before_score(self):
        with self.assertRaisesMessage(CommandError, 'run `score` first'):
            run('plot', self.run_dir)

    def test_config_snapshot_written_first(self):
        with self.assertRaises(CommandError):
            run('eval', self.run_dir, '--set', 'seed=5')
        self.assertEqual(yaml.safe_load((self.run_dir / CONFIG_NAME).read_text())['seed'], 5)

    def test_exit_codes(self):
        """Test unknown flags and bad config exit 2, stage failures exit 1."""
        argv = ['manage.py', 'eval', '--run-dir', str(self.run_dir)]
        cases = ((argv + ['--bogus'], 2), (argv + ['--set', 'scoring.window=4'], 2), (argv, 1))
        for args, code in cases:
            with self.assertRaises(SystemExit) as ctx:
                command = EvalCommand(stdout=io.StringIO(), stderr=io.StringIO())
                command.run_from_argv(args)
            self.assertEqual(ctx.exception.code, code, args)


class PlotTests(SimpleTestCase):
    def test_label_intervals(self):
        self.assertEqual(label_intervals([0, 1, 1, 0, 0, 1]), [(1, 3), (5, 6)])
        self.assertEqual(label_intervals([0, 0]), [])


class SmokeRunTests(SimpleTestCase):
    """Runs every command on a small scene with the test-scale network."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name) / 'run'
        scene = Path(self.tmp.name) / 'scene.yaml'
        scene.write_text(yaml.safe_dump(small_scene()))
        self.options = []
        for override in (
            f'scene={scene}', 'ingest.side=64', 'targets.flow_estimator=analytic',
            'appearance.backbone=tiny', 'motion.backbone=tiny', 'appearance.epochs=2', 'motion.epochs=2',
            'appearance.batch_size=4', 'motion.batch_size=4', 'scoring.window=5',
            'scoring.thresholds.motion=0.01',
        ):
            self.options += ['--set', override]

    def tearDown(self):
        self.tmp.cleanup()

    def test_full_sequence(self):
        run('synth', self.run_dir, *self.options)
        with self.assertRaisesMessage(CommandError, 'run `gen_targets` first'):
            run('train', self.run_dir, '--branch', 'app')
        run('gen_targets', self.run_dir, '--branch', 'both')
        stored_cap = yaml.safe_load((self.run_dir / CONFIG_NAME).read_text())['targets']['flow_cap']
        meta = yaml.safe_load((self.run_dir / 'corpus' / 'targets' / 'motion' / 'meta.yaml').read_text())
        self.assertAlmostEqual(stored_cap, meta['flow_cap'])
        run('train', self.run_dir, '--branch', 'both')
        self.assertTrue((self.run_dir / 'appearance' / 'epoch_2.ckpt').exists())
        self.assertTrue((self.run_dir / 'motion' / 'loss_history.csv').exists())

        run('score', self.run_dir)
        scores_path = self.run_dir / 'scores.csv'
        scores = pd.read_csv(scores_path)
        self.assertEqual(list(scores.columns), COLUMNS)
        self.assertEqual(len(scores), 24)
        self.assertTrue(scores['app_flag'].isna().all())
        self.assertTrue(scores['mot_flag'].isin([0, 1]).all())
        np.testing.assert_array_equal(scores['mot_flag'], (scores['mot_smooth'] > 0.01).astype(int))
        first = scores_path.read_bytes()
        run('score', self.run_dir)
        self.assertEqual(scores_path.read_bytes(), first)

        run('eval', self.run_dir, '--macro')
        report = (self.run_dir / 'report.txt').read_text()
        self.assertIn('auc.fused.smoothed=', report)
        self.assertIn('auc.app.smoothed.class=', report)

        run('plot', self.run_dir, '--maps', '1')
        self.assertTrue((self.run_dir / 'plots' / 'test_000.png').exists())
        self.assertTrue((self.run_dir / 'plots' / 'test_001.png').exists())
        self.assertEqual(len(list((self.run_dir / 'plots').glob('*_app.png'))), 2)


@tag('acceptance')
@skipUnless(os.environ.get('TRANSLAD_ACCEPTANCE') == '1', 'set TRANSLAD_ACCEPTANCE=1 for the full synthetic run')
class AcceptanceRunTests(SimpleTestCase):
    """Full-size run on the shipped reference scene."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def pipeline(self, name, *overrides):
        run_dir = Path(self.tmp.name) / name
        options = ['--set', 'appearance.epochs=15', '--set', 'motion.epochs=15']
        for override in overrides:
            options += ['--set', override]
        for command in ('synth', 'gen_targets', 'train', 'score'):
            run(command, run_dir, *options)
        run('eval', run_dir)
        return {
            key: float(value)
            for key, value in (line.split('=') for line in (run_dir / 'report.txt').read_text().splitlines())
            if key.startswith('auc.')
        }

    def test_reference_scene(self):
        report = self.pipeline('reference')
        self.assertGreaterEqual(report['auc.fused.smoothed'], 0.90)
        self.assertGreaterEqual(report['auc.app.smoothed.class'], 0.85)
        self.assertGreaterEqual(report['auc.mot.smoothed.speed'], 0.85)
        self.assertGreaterEqual(
            report['auc.fused.smoothed'],
            max(report['auc.app.smoothed'], report['auc.mot.smoothed']) - 0.02,
        )

    def test_smoothing_helps_under_oracle_misses(self):
        report = self.pipeline('misses', 'targets.oracle_miss_rate=0.1')
        self.assertGreater(report['auc.fused.smoothed'], report['auc.fused.refined'])

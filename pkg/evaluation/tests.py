import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from corpora.domain import Clip, Corpus, Frame, Split
from scoring.services import COLUMNS, SCORES_NAME

from .metrics import mann_whitney_auc, roc_auc, roc_curve
from .services import REPORT_NAME, evaluate_run, normalize_per_clip


class RocAucTests(SimpleTestCase):
    """Tests for roc_auc."""

    def test_matches_mann_whitney(self):
        """Test trapezoidal AUC equals the pairwise estimate on 500 random instances with ties."""
        rng = np.random.default_rng(0)
        for _ in range(500):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            scores = np.round(rng.random(n) + 0.3 * labels, int(rng.integers(1, 3)))
            self.assertAlmostEqual(roc_auc(scores, labels), mann_whitney_auc(scores, labels), places=12)

    def test_perfect_separation(self):
        self.assertEqual(roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]), 1.0)

    def test_all_ties(self):
        self.assertEqual(roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0]), 0.5)

    def test_worked_example(self):
        self.assertAlmostEqual(roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]), 0.75)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.random(80)
        labels = (rng.random(80) < 0.3).astype(int)
        labels[:2] = [0, 1]
        self.assertAlmostEqual(roc_auc(np.exp(3 * scores) + 7, labels), roc_auc(scores, labels), places=12)

    def test_negated_scores_complement(self):
        """Test AUC(s) + AUC(-s) = 1."""
        rng = np.random.default_rng(2)
        scores = np.round(rng.random(60), 1)
        labels = np.tile([0, 1, 1], 20)
        self.assertAlmostEqual(roc_auc(scores, labels) + roc_auc(-scores, labels), 1.0, places=12)

    def test_single_class_is_undefined(self):
        with self.assertRaisesMessage(ValueError, 'AUC undefined'):
            roc_auc([0.1, 0.2], [1, 1])

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            roc_auc([0.1, 0.2, 0.3], [0, 1])

    def test_curve_ends_at_corners(self):
        curve = roc_curve([0.3, 0.1, 0.7, 0.7], [0, 0, 1, 0])
        self.assertEqual((curve.fpr[0], curve.tpr[0]), (0.0, 0.0))
        self.assertEqual((curve.fpr[-1], curve.tpr[-1]), (1.0, 1.0))


def write_scores(run_dir: Path, clips: dict):
    """clips: clip_id -> (labels, per-frame base score); every column gets a variant of the score."""
    rows = []
    for clip_id, (labels, scores) in clips.items():
        for index, (label, score) in enumerate(zip(labels, scores)):
            rows.append({
                'clip_id': clip_id, 'frame_index': index,
                'app_raw': score, 'app_refined': score, 'app_smooth': score,
                'mot_raw': 1 - score, 'mot_refined': 1 - score, 'mot_smooth': 1 - score,
                'fused_raw': score, 'fused_refined': score, 'fused': 2 * score,
                'app_flag': None, 'mot_flag': None, 'label': label,
            })
    pd.DataFrame(rows, columns=COLUMNS).to_csv(run_dir / SCORES_NAME, index=False)


class EvaluateRunTests(SimpleTestCase):
    """Tests for evaluate_run."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name)
        write_scores(self.run_dir, {
            'test_000': ([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]),
            'test_001': ([0, 1, 0, 0], [0.3, 0.35, 0.1, 0.2]),
        })

    def tearDown(self):
        self.tmp.cleanup()

    def test_reports_nine_aucs(self):
        """Test every branch and stage gets one AUC and report.txt holds them."""
        report = evaluate_run(self.run_dir)
        aucs = [key for key in report.entries if key.startswith('auc.')]
        self.assertEqual(len(aucs), 9)
        self.assertEqual(report.frames, 8)
        self.assertEqual(report.anomalous_frames, 3)
        self.assertAlmostEqual(report.auc('app', 'raw') + report.auc('mot', 'raw'), 1.0)
        text = (self.run_dir / REPORT_NAME).read_text()
        self.assertIn('auc.fused.smoothed=', text)
        self.assertIn('published.ucsd_ped2=97.76', text)
        self.assertIn('published_unsmoothed.shanghaitech=85.52', text)

    def test_macro_averages_clips(self):
        report = evaluate_run(self.run_dir, macro=True)
        self.assertEqual(report.entries['macro_auc.app.raw'], 1.0)

    def test_per_clip_normalization(self):
        table = pd.DataFrame({'clip_id': ['a', 'a', 'b', 'b'], 'x': [2.0, 4.0, 5.0, 5.0]})
        normalized = normalize_per_clip(table, ['x'])
        np.testing.assert_array_equal(normalized['x'], [0.0, 1.0, 0.0, 0.0])
        report = evaluate_run(self.run_dir, per_clip_normalize=True)
        self.assertTrue(report.per_clip_normalize)
        self.assertIn('per_clip_normalize=true', (self.run_dir / REPORT_NAME).read_text())

    def test_per_kind_aucs(self):
        """Test generated corpora add AUCs restricted to one anomaly kind."""
        corpus = self.run_dir / 'corpus'
        kinds_dir = corpus / 'oracle' / 'test'
        kinds_dir.mkdir(parents=True)
        (kinds_dir / 'test_000.kinds').write_text('none\nnone\nclass\nclass\n')
        (kinds_dir / 'test_001.kinds').write_text('none\nspeed\nnone\nnone\n')
        report = evaluate_run(self.run_dir, corpus_root=corpus)
        self.assertEqual(report.auc('app', 'smoothed', 'class'), 1.0)
        self.assertIn('auc.mot.smoothed.speed', report.entries)

    def test_unlabeled_clip_rejected(self):
        write_scores(self.run_dir, {'test_000': ([None, None], [0.1, 0.2])})
        with self.assertRaises(ValueError):
            evaluate_run(self.run_dir)

    def test_missing_frames_listed(self):
        """Test a labeled test frame without a score row fails naming every such frame."""
        table = pd.read_csv(self.run_dir / SCORES_NAME)
        dropped = table[~((table['clip_id'] == 'test_000') & (table['frame_index'] == 2))]
        dropped = dropped[~((dropped['clip_id'] == 'test_001') & (dropped['frame_index'] == 0))]
        dropped.to_csv(self.run_dir / SCORES_NAME, index=False)

        with self.assertRaises(ValueError) as caught:
            evaluate_run(self.run_dir, corpus=build_test_corpus({'test_000': [0, 0, 1, 1], 'test_001': [0, 1, 0, 0]}))
        message = str(caught.exception)
        self.assertIn('2 labeled test frames', message)
        self.assertIn('test_000/000002', message)
        self.assertIn('test_001/000000', message)
        self.assertFalse((self.run_dir / REPORT_NAME).exists())

    def test_complete_scores_pass_corpus_check(self):
        corpus = build_test_corpus({'test_000': [0, 0, 1, 1], 'test_001': [0, 1, 0, 0]})
        self.assertEqual(evaluate_run(self.run_dir, corpus=corpus).frames, 8)


def build_test_corpus(clips: dict) -> Corpus:
    pixels = np.zeros((8, 8, 3), dtype=np.float32)
    train = Clip('train_000', (Frame('train_000', 0, pixels),))
    test = tuple(
        Clip(
            clip_id,
            tuple(Frame(clip_id, i, pixels, split=Split.TEST) for i in range(len(labels))),
            split=Split.TEST,
            labels=np.asarray(labels),
        )
        for clip_id, labels in clips.items()
    )
    return Corpus(name='scene', train_clips=(train,), test_clips=test, class_palette=('circle',))

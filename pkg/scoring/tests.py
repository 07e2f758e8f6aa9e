import tempfile

import numpy as np
from django.test import SimpleTestCase

from targets.domain import Branch

from .domain import AnomalyMap, BranchCalibration, BranchStats, ScoreSeries, ScoreStage, ScoringConfig, Thresholds
from .services import score_run
from .utils import anomaly_map, calibrate, frame_score, fuse, refine, smooth_scores


def brute_force_opening(values: np.ndarray, k: int) -> np.ndarray:
    """Min filter then max filter over k x k windows, edges replicated."""
    r = k // 2

    def sweep(image, reduce):
        padded = np.pad(image, r, mode='edge')
        out = np.empty_like(image)
        for y in range(image.shape[0]):
            for x in range(image.shape[1]):
                out[y, x] = reduce(padded[y:y + k, x:x + k])
        return out

    return sweep(sweep(values, np.min), np.max)


def amap(values, branch=Branch.APPEARANCE):
    return AnomalyMap(values=np.asarray(values, dtype=np.float32), branch=branch)


class AnomalyMapTests(SimpleTestCase):
    """Tests for anomaly_map."""

    def test_identical_maps(self):
        output = np.random.default_rng(0).random((8, 8, 3), dtype=np.float32)
        self.assertFalse(anomaly_map(output, output.copy(), Branch.APPEARANCE).values.any())

    def test_single_pixel_difference(self):
        """Test a single-channel pixel off by 0.5 gives 0.25."""
        output = np.zeros((4, 4), np.float32)
        target = output.copy()
        target[2, 1] = 0.5
        values = anomaly_map(output, target, Branch.MOTION).values
        self.assertEqual(float(values[2, 1]), 0.25)
        self.assertEqual(float(values.sum()), 0.25)

    def test_matches_elementwise_computation(self):
        rng = np.random.default_rng(1)
        output = rng.random((9, 7, 4), dtype=np.float32)
        target = rng.random((9, 7, 4), dtype=np.float32)
        expected = np.zeros((9, 7), np.float32)
        for y in range(9):
            for x in range(7):
                expected[y, x] = np.mean((output[y, x] - target[y, x]) ** 2)
        np.testing.assert_allclose(anomaly_map(output, target, Branch.APPEARANCE).values, expected, rtol=1e-6)

    def test_motion_output_channel_is_squeezed(self):
        output = np.full((5, 5, 1), 0.5, np.float32)
        np.testing.assert_allclose(anomaly_map(output, np.zeros((5, 5), np.float32), Branch.MOTION).values, 0.25)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            anomaly_map(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)), Branch.APPEARANCE)


class RefineTests(SimpleTestCase):
    """Tests for refine."""

    def test_matches_brute_force_opening(self):
        """Test 100 random 16x16 maps against a brute-force min-then-max filter."""
        rng = np.random.default_rng(2)
        for _ in range(100):
            values = rng.random((16, 16), dtype=np.float32)
            np.testing.assert_array_equal(refine(amap(values)).values, brute_force_opening(values, 3))

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            once = refine(amap(rng.random((16, 16), dtype=np.float32)))
            np.testing.assert_array_equal(refine(once).values, once.values)

    def test_anti_extensive_away_from_border(self):
        rng = np.random.default_rng(4)
        values = rng.random((16, 16), dtype=np.float32)
        refined = refine(amap(values)).values
        self.assertTrue((refined[1:-1, 1:-1] <= values[1:-1, 1:-1]).all())

    def test_isolated_pixel_removed(self):
        values = np.zeros((16, 16), np.float32)
        values[7, 9] = 1.0
        self.assertFalse(refine(amap(values)).values.any())

    def test_constant_map_unchanged(self):
        values = np.full((16, 16), 0.3, np.float32)
        np.testing.assert_array_equal(refine(amap(values)).values, values)

    def test_solid_block_preserved(self):
        """Test a solid 5x5 activation survives the opening."""
        values = np.zeros((16, 16), np.float32)
        values[4:9, 6:11] = 0.8
        refined = refine(amap(values)).values
        np.testing.assert_array_equal(refined, values)
        np.testing.assert_array_equal(refined, brute_force_opening(values, 3))

    def test_even_kernel_rejected(self):
        with self.assertRaises(ValueError):
            refine(amap(np.zeros((4, 4))), kernel_size=4)

    def test_marks_map_refined(self):
        self.assertTrue(refine(amap(np.zeros((4, 4)))).refined)


class FrameScoreTests(SimpleTestCase):
    """Tests for frame_score."""

    def test_zero_and_uniform(self):
        self.assertEqual(frame_score(amap(np.zeros((6, 6)))), 0.0)
        self.assertAlmostEqual(frame_score(amap(np.full((6, 6), 0.125))), 0.125)

    def test_mean_of_values(self):
        values = np.random.default_rng(5).random((13, 11), dtype=np.float32)
        expected = sum(float(v) for v in values.ravel()) / values.size
        self.assertAlmostEqual(frame_score(amap(values)), expected, places=6)

    def test_monotone(self):
        rng = np.random.default_rng(6)
        low = rng.random((8, 8), dtype=np.float32)
        high = low + rng.random((8, 8), dtype=np.float32)
        self.assertGreaterEqual(frame_score(amap(high)), frame_score(amap(low)))


class SmoothScoresTests(SimpleTestCase):
    """Tests for smooth_scores."""

    def series(self, values, stage=ScoreStage.REFINED):
        return ScoreSeries('clip', np.asarray(values, dtype=np.float64), stage)

    def test_constant_is_fixed_point(self):
        smoothed = smooth_scores(self.series(np.full(200, 0.7)), 41, 1)
        np.testing.assert_allclose(smoothed.scores, 0.7, atol=1e-9)
        self.assertEqual(smoothed.stage, ScoreStage.SMOOTHED)

    def test_linear_ramp_is_fixed_point(self):
        """Test a linear series, edges included, passes through unchanged."""
        ramp = 0.01 * np.arange(200) + 0.5
        np.testing.assert_allclose(smooth_scores(self.series(ramp), 41, 1).scores, ramp, atol=1e-9)

    def test_impulse_response(self):
        """Test an interior impulse spreads as 1/41 over the window."""
        impulse = np.zeros(200)
        impulse[100] = 1.0
        smoothed = smooth_scores(self.series(impulse), 41, 1).scores
        expected = np.zeros(200)
        expected[80:121] = 1.0 / 41
        np.testing.assert_allclose(smoothed, expected, atol=1e-9)
        self.assertLessEqual(smoothed[100], 2.0 / 41)

    def test_linearity(self):
        """Test smoothing a signed combination equals combining the smoothed series, short clips included."""
        rng = np.random.default_rng(7)
        for length in (120, 30, 7):
            x, y = rng.random(length), rng.random(length)
            combined = smooth_scores(self.series(2.0 * x - 3.0 * y, ScoreStage.SMOOTHED)).scores
            separate = 2.0 * smooth_scores(self.series(x)).scores - 3.0 * smooth_scores(self.series(y)).scores
            np.testing.assert_allclose(combined, separate, atol=1e-9)

    def test_negative_raw_scores_rejected(self):
        with self.assertRaises(ValueError):
            self.series([0.2, -0.1], ScoreStage.RAW)

    def test_short_clip_uses_largest_odd_window(self):
        ramp = np.arange(10, dtype=np.float64)
        np.testing.assert_allclose(smooth_scores(self.series(ramp), 41, 1).scores, ramp, atol=1e-9)
        noisy = np.random.default_rng(8).random(10)
        self.assertFalse(np.allclose(smooth_scores(self.series(noisy), 41, 1).scores, noisy))

    def test_too_short_to_fit(self):
        single = smooth_scores(self.series([0.4]), 41, 1)
        np.testing.assert_array_equal(single.scores, [0.4])

    def test_invalid_parameters(self):
        with self.assertRaises(ValueError):
            smooth_scores(self.series(np.zeros(50)), 5, 5)
        with self.assertRaises(ValueError):
            smooth_scores(self.series(np.zeros(50)), 40, 1)


class FuseTests(SimpleTestCase):
    """Tests for fuse and calibrate."""

    def setUp(self):
        self.calib = BranchCalibration({
            'appearance': BranchStats(mean=1.0, std=0.5),
            'motion': BranchStats(mean=10.0, std=2.0),
        })

    def test_follows_spiking_branch(self):
        """Test a flat branch at its mean leaves the fused series to the other."""
        app = ScoreSeries('c', np.array([1.0, 1.0, 1.0, 1.0]))
        mot = ScoreSeries('c', np.array([10.0, 14.0, 20.0, 12.0]))
        fused = fuse(app, mot, self.calib).fused
        np.testing.assert_allclose(fused.scores, [0.0, 2.0, 5.0, 1.0])
        self.assertEqual(fused.stage, ScoreStage.FUSED)

    def test_identical_normalized_series(self):
        z = np.array([-1.0, 0.5, 3.0])
        app = ScoreSeries('c', 1.0 + 0.5 * z, ScoreStage.SMOOTHED)
        mot = ScoreSeries('c', 10.0 + 2.0 * z, ScoreStage.SMOOTHED)
        np.testing.assert_allclose(fuse(app, mot, self.calib).fused.scores, z)

    def test_threshold_flags(self):
        """Test flags are set exactly where a raw score passes its threshold."""
        app = ScoreSeries('c', np.array([0.5, 2.0, 1.2]))
        mot = ScoreSeries('c', np.array([9.0, 9.0, 15.0]))
        result = fuse(app, mot, self.calib, Thresholds(appearance=1.2, motion=11.0))
        np.testing.assert_array_equal(result.appearance_flags, [False, True, False])
        np.testing.assert_array_equal(result.motion_flags, [False, False, True])
        self.assertIsNone(fuse(app, mot, self.calib, Thresholds()).motion_flags)

    def test_zero_variance_names_branch(self):
        calib = BranchCalibration({'appearance': BranchStats(1.0, 0.5), 'motion': BranchStats(3.0, 0.0)})
        series = ScoreSeries('c', np.ones(3))
        with self.assertRaisesMessage(ValueError, 'motion'):
            fuse(series, series, calib)

    def test_affine_invariance(self):
        """Test rescaling a branch with its calibration leaves the fused series unchanged."""
        rng = np.random.default_rng(9)
        app = ScoreSeries('c', rng.random(30))
        mot = ScoreSeries('c', rng.random(30) * 20)
        base = fuse(app, mot, self.calib).fused.scores
        scale, shift = 3.5, 2.0
        scaled_calib = BranchCalibration({
            'appearance': BranchStats(mean=scale * 1.0 + shift, std=scale * 0.5),
            'motion': self.calib.stats['motion'],
        })
        scaled = fuse(ScoreSeries('c', scale * app.scores + shift), mot, scaled_calib).fused.scores
        np.testing.assert_allclose(scaled, base, atol=1e-12)

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            fuse(ScoreSeries('c', np.ones(3)), ScoreSeries('c', np.ones(4)), self.calib)

    def test_calibrate_uses_population_std(self):
        calib = calibrate({
            'appearance': [ScoreSeries('a', np.array([1.0, 3.0])), ScoreSeries('b', np.array([5.0, 7.0]))],
            'motion': [ScoreSeries('a', np.array([2.0, 2.0, 2.0, 6.0]))],
        })
        self.assertEqual(calib.for_branch('appearance'), BranchStats(mean=4.0, std=float(np.sqrt(5.0))))
        self.assertAlmostEqual(calib.for_branch('motion').std, float(np.std([2, 2, 2, 6])))


class ScoreRunTests(SimpleTestCase):
    def test_empty_test_split(self):
        """Test a corpus without test clips is refused before any model is loaded."""
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesMessage(ValueError, 'Corpus has no test clips to score'):
                score_run(tmp, [], tmp, [], tmp, ScoringConfig())

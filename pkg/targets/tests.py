import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from corpora.domain import Frame, IngestConfig, Split
from corpora.services import ingest_corpus
from synth.services import generate
from synth.tests import build_scene

from .cache import TargetCache, read_map, write_map
from .domain import Branch, FlowField, SegOracleResult, TargetOptions
from .flow import FarnebackEstimator, dense_flow, flow_magnitude, get_flow_estimator
from .oracles import OracleMiss, SegmentationOracle, get_segmentation_oracle, segment
from .services import StaleTargets, generate_targets, load_target, verify_targets
from .utils import compute_flow_cap, decode_seg_target, make_seg_target, mask_flow, scale_flow_target


def textured_disc_frame(cx: float, cy: float, radius: float = 20, size: int = 224, index: int = 0) -> Frame:
    """A disc carrying a texture that moves with it, over a flat background."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    pixels = np.full((size, size), 0.2, dtype=np.float32)
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
    texture = 0.55 + 0.25 * np.sin((xs - cx) / 2.5) * np.cos((ys - cy) / 3.0)
    pixels[inside] = texture[inside]
    return Frame('disc', index, np.repeat(pixels[:, :, None], 3, axis=2))


class FlakyOracle(SegmentationOracle):
    def predict(self, frame):
        if frame.index % 2:
            raise OracleMiss('nothing detected')
        class_map = np.zeros((frame.height, frame.width), dtype=np.int32)
        class_map[:4, :4] = 1
        return SegOracleResult.from_class_map(class_map)


class SegmentTests(SimpleTestCase):
    """Tests for segment and the oracle registry."""

    def test_oracle_failure_is_a_recorded_miss(self):
        """Test a failing oracle yields an empty, missed result."""
        oracle = FlakyOracle(palette=['circle'])
        pixels = np.zeros((8, 8, 3), dtype=np.float32)
        hit = segment(Frame('c', 0, pixels), oracle)
        miss = segment(Frame('c', 1, pixels), oracle)
        self.assertFalse(hit.missed)
        self.assertEqual(int(hit.instance_mask.sum()), 16)
        self.assertTrue(miss.missed)
        self.assertFalse(miss.class_map.any())
        self.assertFalse(miss.instance_mask.any())

    def test_result_mask_must_match_class_map(self):
        class_map = np.zeros((4, 4), dtype=np.int32)
        class_map[0, 0] = 2
        with self.assertRaises(ValueError):
            SegOracleResult(class_map=class_map, instance_mask=np.zeros((4, 4), dtype=np.uint8))

    def test_unknown_oracle_name(self):
        with self.assertRaises(ValueError):
            get_segmentation_oracle('nope', ['circle'])


class SegTargetTests(SimpleTestCase):
    """Tests for make_seg_target."""

    def test_background_only(self):
        """Test an all-zero class map puts every pixel on channel 0."""
        target = make_seg_target(SegOracleResult.empty(5, 6), 4)
        self.assertEqual(target.shape, (5, 6, 4))
        np.testing.assert_array_equal(target[..., 0], 1.0)
        np.testing.assert_array_equal(target[..., 1:], 0.0)

    def test_single_pixel_one_hot(self):
        """Test a class-2 pixel is one-hot on channel 2."""
        class_map = np.zeros((3, 3), dtype=np.int32)
        class_map[1, 2] = 2
        target = make_seg_target(SegOracleResult.from_class_map(class_map), 3)
        np.testing.assert_array_equal(target[1, 2], [0.0, 0.0, 1.0])
        self.assertEqual(float(target.sum()), 9.0)

    def test_argmax_round_trip(self):
        """Test per-pixel argmax recovers random class maps exactly."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            class_map = rng.integers(0, 5, size=(17, 23))
            target = make_seg_target(SegOracleResult.from_class_map(class_map), 5)
            np.testing.assert_array_equal(decode_seg_target(target), class_map)
            self.assertLessEqual(float(target.sum(axis=-1).max()), 1.0 + 1e-6)

    def test_out_of_range_class(self):
        class_map = np.full((2, 2), 3, dtype=np.int32)
        with self.assertRaises(ValueError):
            make_seg_target(SegOracleResult.from_class_map(class_map), 3)


class FlowTests(SimpleTestCase):
    """Tests for dense_flow and flow_magnitude."""

    def test_pythagorean_magnitude(self):
        flow = FlowField(u=np.array([[3.0]], np.float32), v=np.array([[4.0]], np.float32))
        self.assertEqual(float(flow_magnitude(flow)[0, 0]), 5.0)

    def test_zero_field(self):
        np.testing.assert_array_equal(flow_magnitude(FlowField.zeros(6, 7)), 0.0)

    def test_direction_is_discarded(self):
        """Test negated and rotated fields share one magnitude map."""
        rng = np.random.default_rng(4)
        u = rng.normal(size=(32, 32)).astype(np.float32)
        v = rng.normal(size=(32, 32)).astype(np.float32)
        base = flow_magnitude(FlowField(u, v))
        np.testing.assert_array_equal(flow_magnitude(FlowField(-u, -v)), base)
        np.testing.assert_array_equal(flow_magnitude(FlowField(-v, u)), base)
        np.testing.assert_array_equal(flow_magnitude(FlowField(v, u)), base)

    def test_direction_is_discarded_on_many_fields(self):
        """Test sign flips and u/v swaps are bit-exact over random float32 and float64 fields."""
        rng = np.random.default_rng(12)
        for dtype in (np.float32, np.float64):
            for _ in range(20):
                u = (rng.normal(size=(48, 48)) * 10.0).astype(dtype)
                v = (rng.normal(size=(48, 48)) * 10.0).astype(dtype)
                base = flow_magnitude(FlowField(u, v))
                self.assertEqual(base.dtype, np.float32)
                for other in (FlowField(-u, -v), FlowField(-u, v), FlowField(v, u), FlowField(-v, u)):
                    np.testing.assert_array_equal(flow_magnitude(other), base)

    def test_non_finite_flow_rejected(self):
        with self.assertRaises(ValueError):
            FlowField(u=np.array([[np.nan]]), v=np.array([[0.0]]))

    def test_first_frame_gets_zero_flow(self):
        """Test a frame without predecessor gets a zero field."""
        frame = textured_disc_frame(100, 100)
        flow = dense_flow(None, frame, FarnebackEstimator())
        self.assertEqual(flow.shape, (224, 224))
        self.assertFalse(flow.u.any() or flow.v.any())

    def test_identical_frames_have_no_motion(self):
        prev = textured_disc_frame(100, 100, index=0)
        curr = Frame('disc', 1, prev.pixels.copy())
        flow = dense_flow(prev, curr, get_flow_estimator('farneback'))
        self.assertLess(float(np.abs(flow.u).max()), 1e-3)
        self.assertLess(float(np.abs(flow.v).max()), 1e-3)

    def test_translated_disc(self):
        """Test a disc moved by (3, 0) has mean u of about 3 over the disc."""
        prev = textured_disc_frame(100, 112, index=0)
        curr = textured_disc_frame(103, 112, index=1)
        flow = dense_flow(prev, curr, FarnebackEstimator())
        ys, xs = np.mgrid[0:224, 0:224]
        interior = (xs - 103) ** 2 + (ys - 112) ** 2 <= 14 ** 2
        self.assertAlmostEqual(float(flow.u[interior].mean()), 3.0, delta=0.5)
        self.assertLess(abs(float(flow.v[interior].mean())), 0.5)

    def test_shape_mismatch(self):
        prev = Frame('c', 0, np.zeros((16, 16, 3), np.float32))
        curr = Frame('c', 1, np.zeros((16, 24, 3), np.float32))
        with self.assertRaises(ValueError):
            dense_flow(prev, curr, FarnebackEstimator())

    def test_frames_must_be_consecutive(self):
        prev = Frame('c', 0, np.zeros((16, 16, 3), np.float32))
        curr = Frame('c', 2, np.zeros((16, 16, 3), np.float32))
        with self.assertRaises(ValueError):
            dense_flow(prev, curr, FarnebackEstimator())


class MaskFlowTests(SimpleTestCase):
    """Tests for mask_flow."""

    def setUp(self):
        self.magnitude = np.random.default_rng(5).random((12, 12)).astype(np.float32) * 7

    def test_all_ones_mask(self):
        np.testing.assert_array_equal(mask_flow(self.magnitude, np.ones((12, 12))), self.magnitude)

    def test_all_zeros_mask(self):
        np.testing.assert_array_equal(mask_flow(self.magnitude, np.zeros((12, 12))), 0.0)

    def test_checkerboard_mask(self):
        """Test output is exactly zero off-mask and unchanged on-mask."""
        mask = (np.indices((12, 12)).sum(axis=0) % 2).astype(np.uint8)
        masked = mask_flow(self.magnitude, mask)
        np.testing.assert_array_equal(masked[mask == 0], 0.0)
        np.testing.assert_array_equal(masked[mask == 1], self.magnitude[mask == 1])

    def test_random_masks_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            mask = rng.integers(0, 2, size=(12, 12))
            masked = mask_flow(self.magnitude, mask)
            np.testing.assert_array_equal(masked, self.magnitude * mask)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            mask_flow(self.magnitude, np.ones((12, 11)))


class ScaleFlowTargetTests(SimpleTestCase):
    """Tests for scale_flow_target and the flow cap."""

    def test_saturation_and_linearity(self):
        values = scale_flow_target(np.array([0.0, 2.5, 5.0, 9.0]), 5.0)
        np.testing.assert_allclose(values, [0.0, 0.5, 1.0, 1.0])

    def test_monotone_and_bounded(self):
        values = np.sort(np.random.default_rng(7).random(200) * 10)
        scaled = scale_flow_target(values, 3.0)
        self.assertTrue((np.diff(scaled) >= 0).all())
        self.assertGreaterEqual(float(scaled.min()), 0.0)
        self.assertLessEqual(float(scaled.max()), 1.0)

    def test_non_positive_cap(self):
        with self.assertRaises(ValueError):
            scale_flow_target(np.zeros(3), 0.0)

    def test_flow_cap_uses_foreground_only(self):
        chunks = [np.zeros(1000), np.full(10, 2.0)]
        self.assertAlmostEqual(compute_flow_cap(chunks, 99.5, headroom=4.0), 8.0)
        self.assertEqual(compute_flow_cap([np.zeros(5)]), 1.0)

    def test_flow_cap_defaults_to_percentile(self):
        """Test the default cap is the 99.5th percentile of foreground magnitudes, with no headroom."""
        values = np.random.default_rng(3).random(5000) * 6 + 0.1
        self.assertAlmostEqual(compute_flow_cap([values]), float(np.percentile(values, 99.5)))
        self.assertAlmostEqual(compute_flow_cap([np.full(40, 2.5)]), 2.5)


class TargetCacheTests(SimpleTestCase):
    """Tests for the binary target cache."""

    def test_header_and_layout(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'a' / '000003.bin'
            data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
            write_map(path, data)
            raw = path.read_bytes()
            self.assertEqual(raw[:4], b'TLDM')
            self.assertEqual(np.frombuffer(raw, '<u4', count=3, offset=4).tolist(), [2, 3, 4])
            self.assertEqual(len(raw), 16 + 24 * 4)
            np.testing.assert_array_equal(read_map(path), data)

    def test_single_channel_maps_read_back_2d(self):
        with tempfile.TemporaryDirectory() as tmp:
            cache = TargetCache(tmp)
            cache.write('motion', 'clip', 0, np.ones((5, 5), np.float32))
            self.assertEqual(cache.read('motion', 'clip', 0).shape, (5, 5))
            self.assertTrue(cache.path('motion', 'clip', 0).name.endswith('000000.bin'))

    def test_rejects_foreign_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'x.bin'
            path.write_bytes(b'nope' + bytes(12))
            with self.assertRaises(ValueError):
                read_map(path)


class GenerateTargetsTests(SimpleTestCase):
    """Tests for generate_targets and verify_targets on a generated scene."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name) / 'corpus'
        generate(build_scene(), self.root, workers=1)
        self.corpus = ingest_corpus(self.root, IngestConfig(side=64, workers=1))
        self.options = TargetOptions(oracle='analytic', flow_estimator='analytic')
        self.metas = generate_targets(self.corpus, self.root, list(Branch), self.options, workers=2)

    def tearDown(self):
        self.tmp.cleanup()

    def test_flow_cap_from_training_foreground(self):
        """Test the cap is the fastest training foreground speed."""
        self.assertAlmostEqual(self.metas['motion']['flow_cap'], 3.0, places=5)
        self.assertNotIn('flow_cap', self.metas['appearance'])

    def test_targets_follow_oracle(self):
        cache = TargetCache(self.root)
        for clip in self.corpus.test_clips:
            for frame in clip.frames:
                class_map = np.load(self.root / 'oracle' / 'test' / clip.clip_id / f'{frame.index:06d}.class.npy')
                seg = load_target(cache, Branch.APPEARANCE, clip.clip_id, frame.index)
                np.testing.assert_array_equal(decode_seg_target(seg), class_map)
                motion = load_target(cache, Branch.MOTION, clip.clip_id, frame.index, flow_cap=3.0)
                np.testing.assert_array_equal(motion[class_map == 0], 0.0)
                self.assertLessEqual(float(motion.max()), 1.0)

    def test_verify_returns_meta(self):
        meta = verify_targets(self.root, self.corpus, Branch.MOTION, self.options, [Split.TRAIN, Split.TEST])
        self.assertEqual(meta['masking'], True)
        self.assertEqual(meta['corpus'], 'tiny')

    def test_option_change_makes_cache_stale(self):
        """Test a cache built with masking is rejected for an unmasked config."""
        options = TargetOptions(oracle='analytic', flow_estimator='analytic', masking=False)
        with self.assertRaisesMessage(StaleTargets, 'masking'):
            verify_targets(self.root, self.corpus, Branch.MOTION, options, [Split.TRAIN])

    def test_missing_cache_is_stale(self):
        with self.assertRaises(StaleTargets):
            verify_targets(Path(self.tmp.name) / 'elsewhere', self.corpus, Branch.APPEARANCE, self.options, [Split.TRAIN])

    def test_deleted_frame_is_reported(self):
        TargetCache(self.root).path(Branch.APPEARANCE, 'test_001', 4).unlink()
        with self.assertRaisesMessage(ValueError, 'test_001/000004'):
            verify_targets(self.root, self.corpus, Branch.APPEARANCE, self.options, [Split.TRAIN, Split.TEST])

    def test_regeneration_is_byte_identical(self):
        cache_dir = self.root / 'targets'
        before = {p: p.read_bytes() for p in cache_dir.rglob('*') if p.is_file()}
        generate_targets(self.corpus, self.root, list(Branch), self.options, workers=1)
        after = {p: p.read_bytes() for p in cache_dir.rglob('*') if p.is_file()}
        self.assertEqual(before, after)

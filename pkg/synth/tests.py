import tempfile
from pathlib import Path

import cv2
import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from rest_framework import serializers

from corpora.domain import Frame, IngestConfig, Split
from corpora.services import ingest_corpus
from corpora.utils import read_labels
from targets.flow import FarnebackEstimator, dense_flow, flow_magnitude
from targets.oracles import segment

from .oracles import AnalyticFlowEstimator, AnalyticSegmentationOracle
from .renderer import background, build_tracks, clip_rng, quantize, render_frame
from .serializers import SceneSpecSerializer, load_scene
from .services import generate


def small_scene(**overrides) -> dict:
    data = {
        'name': 'tiny',
        'canvas': 64,
        'seed': 3,
        'noise': 0.0,
        'frames_per_clip': 12,
        'train_clips': 1,
        'test_clips': 2,
        'palette': ['circle', 'square'],
        'actors': [{'shape': 'circle', 'size': 6, 'speed': 3.0, 'heading': 0.0, 'start': [20.0, 32.0]}],
        'anomalies': [
            {'clip': 0, 'kind': 'class', 'start': 3, 'end': 7, 'shape': 'square', 'size': 5},
            {'clip': 1, 'kind': 'speed', 'start': 6, 'end': 10, 'actor': 0, 'multiplier': 3.0},
        ],
    }
    data.update(overrides)
    return data


def build_scene(**overrides):
    serializer = SceneSpecSerializer(data=small_scene(**overrides))
    serializer.is_valid(raise_exception=True)
    return serializer.save()


class SceneSpecSerializerTests(SimpleTestCase):
    """Tests for scene validation."""

    def test_reference_scene_is_valid(self):
        spec = load_scene(settings.TRANSLAD_REFERENCE_SCENE)
        self.assertEqual(spec.palette, ['circle', 'square'])
        self.assertEqual({a.shape for a in spec.actors}, {'circle'})

    def test_class_anomaly_must_be_unseen(self):
        """Test a class anomaly reusing a normal shape is rejected."""
        anomalies = [{'clip': 0, 'kind': 'class', 'start': 1, 'end': 3, 'shape': 'circle'}]
        serializer = SceneSpecSerializer(data=small_scene(anomalies=anomalies))
        self.assertFalse(serializer.is_valid())
        self.assertIn('anomalies', serializer.errors)

    def test_speed_anomaly_must_leave_normal_band(self):
        anomalies = [{'clip': 0, 'kind': 'speed', 'start': 1, 'end': 3, 'actor': 0, 'multiplier': 0.5}]
        serializer = SceneSpecSerializer(data=small_scene(anomalies=anomalies, normal_speed=[1.0, 3.0]))
        self.assertFalse(serializer.is_valid())

    def test_overlapping_windows_rejected(self):
        anomalies = [
            {'clip': 0, 'kind': 'class', 'start': 1, 'end': 5, 'shape': 'square'},
            {'clip': 0, 'kind': 'speed', 'start': 4, 'end': 8, 'actor': 0},
        ]
        self.assertFalse(SceneSpecSerializer(data=small_scene(anomalies=anomalies)).is_valid())

    def test_actor_leaving_canvas_without_wrap(self):
        """Test a trajectory leaving the canvas fails validation when wrap is off."""
        actors = [{'shape': 'circle', 'size': 6, 'speed': 3.0, 'heading': 0.0, 'start': [40.0, 32.0]}]
        with self.assertRaises(serializers.ValidationError) as ctx:
            build_scene(wrap=False, actors=actors, anomalies=[])
        self.assertIn('leaves the canvas', str(ctx.exception.detail['wrap']))

    def test_trajectory_inside_canvas_without_wrap(self):
        actors = [{'shape': 'circle', 'size': 4, 'speed': 1.0, 'heading': 0.0, 'start': [10.0, 32.0]}]
        spec = build_scene(wrap=False, actors=actors, anomalies=[])
        self.assertFalse(spec.wrap)


class GenerateTests(SimpleTestCase):
    """Tests for generate and the analytic oracles."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name) / 'corpus'
        self.spec = build_scene()
        generate(self.spec, self.root, workers=2)

    def tearDown(self):
        self.tmp.cleanup()

    def ingest(self):
        return ingest_corpus(self.root, IngestConfig(side=64, workers=1))

    def test_layout_and_labels(self):
        """Test labels mark exactly the injected windows."""
        self.assertEqual(len(list((self.root / 'train' / 'train_000').glob('*.png'))), 12)
        np.testing.assert_array_equal(read_labels(self.root / 'test' / 'test_000.labels'), [0] * 3 + [1] * 4 + [0] * 5)
        np.testing.assert_array_equal(read_labels(self.root / 'test' / 'test_001.labels'), [0] * 6 + [1] * 4 + [0] * 2)
        kinds = (self.root / 'oracle' / 'test' / 'test_001.kinds').read_text().split()
        self.assertEqual(kinds[6:10], ['speed'] * 4)
        self.assertEqual(kinds[0], 'none')

    def test_corpus_ingests(self):
        corpus = self.ingest()
        self.assertEqual(corpus.name, 'tiny')
        self.assertEqual(corpus.class_palette, ('circle', 'square'))
        self.assertEqual(len(corpus.test_clips), 2)

    def test_regeneration_is_byte_identical(self):
        """Test a second generation from the same spec writes identical bytes."""
        other = Path(self.tmp.name) / 'again'
        generate(self.spec, other, workers=1)
        first = sorted(p.relative_to(self.root) for p in self.root.rglob('*') if p.is_file())
        second = sorted(p.relative_to(other) for p in other.rglob('*') if p.is_file())
        self.assertEqual(first, second)
        for relative in first:
            self.assertEqual((self.root / relative).read_bytes(), (other / relative).read_bytes(), str(relative))

    def test_analytic_flow_matches_speed(self):
        """Test the analytic flow magnitude equals the actor speed on its pixels."""
        clip = self.ingest().train_clips[0]
        oracle = AnalyticSegmentationOracle(['circle', 'square'], root=self.root)
        estimator = AnalyticFlowEstimator(root=self.root)
        for prev, curr in zip(clip.frames, clip.frames[1:]):
            magnitude = flow_magnitude(dense_flow(prev, curr, estimator))
            mask = segment(curr, oracle).instance_mask.astype(bool)
            self.assertTrue(mask.any())
            np.testing.assert_allclose(magnitude[mask], 3.0, rtol=1e-6)
            np.testing.assert_array_equal(magnitude[~mask], 0.0)

    def test_class_anomaly_visible_only_in_window(self):
        oracle = AnalyticSegmentationOracle(['circle', 'square'], root=self.root)
        clip = self.ingest().test_clips[0]
        present = [bool((segment(frame, oracle).class_map == 2).any()) for frame in clip.frames]
        self.assertEqual(present, [False] * 3 + [True] * 4 + [False] * 5)

    def test_miss_rate_extremes(self):
        """Test miss rate 0 never misses and miss rate 1 always misses."""
        frames = self.ingest().train_clips[0].frames
        never = AnalyticSegmentationOracle(['circle', 'square'], root=self.root, miss_rate=0.0)
        always = AnalyticSegmentationOracle(['circle', 'square'], root=self.root, miss_rate=1.0)
        self.assertFalse(any(segment(f, never).missed for f in frames))
        self.assertTrue(all(segment(f, always).missed for f in frames))

    def test_miss_draws_are_reproducible(self):
        frames = self.ingest().train_clips[0].frames
        draws = [
            [segment(f, AnalyticSegmentationOracle(['circle', 'square'], root=self.root, miss_rate=0.5, seed=9)).missed
             for f in frames]
            for _ in range(2)
        ]
        self.assertEqual(draws[0], draws[1])

    def test_palette_must_match_generated(self):
        with self.assertRaises(ValueError):
            AnalyticSegmentationOracle(['square', 'circle'], root=self.root)

    def test_foreign_frame_rejected(self):
        oracle = AnalyticSegmentationOracle(['circle', 'square'], root=self.root)
        frame = Frame('elsewhere', 0, np.zeros((64, 64, 3), np.float32), split=Split.TRAIN)
        with self.assertRaises(FileNotFoundError):
            segment(frame, oracle)


class FarnebackAgreementTests(SimpleTestCase):
    """Tests for dense flow on rendered actors against their exact flow."""

    def rendered_pair(self, speed: float):
        spec = build_scene(
            canvas=128, frames_per_clip=3, normal_speed=[1.0, 6.0], anomalies=[],
            actors=[{'shape': 'circle', 'size': 16, 'speed': speed, 'heading': 0.0, 'start': [48.0, 64.0]}],
        )
        tracks, _ = build_tracks(spec, Split.TRAIN, 0, clip_rng(spec, Split.TRAIN, 0))
        backdrop = background(spec)
        frames, flows = [], []
        for t in (1, 2):
            pixels, _, flow = render_frame(spec, tracks, t, backdrop)
            quantized = quantize(pixels, 0.0, clip_rng(spec, Split.TRAIN, 0)).astype(np.float32) / 255.0
            frames.append(Frame('actor', t, quantized))
            flows.append(flow)
        return frames, flows[1]

    def test_mean_magnitude_within_a_fifth_of_speed(self):
        """Test Farneback speed over the actor stays within 20% of the rendered speed."""
        for speed in (1.0, 2.0, 3.0, 4.0, 6.0):
            (prev, curr), exact = self.rendered_pair(speed)
            mask = np.hypot(exact[..., 0], exact[..., 1]) > 0
            # outline pixels mix actor and backdrop motion
            interior = cv2.erode(mask.astype(np.uint8), np.ones((5, 5), np.uint8)).astype(bool)
            self.assertTrue(interior.any())
            magnitude = flow_magnitude(dense_flow(prev, curr, FarnebackEstimator()))
            self.assertAlmostEqual(float(magnitude[interior].mean()), speed, delta=0.2 * speed, msg=f'speed {speed}')

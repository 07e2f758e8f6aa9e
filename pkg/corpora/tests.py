import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from PIL import Image

from .domain import Clip, Frame, IngestConfig, Split
from .manifest import CorpusManifest, ManifestEntry, build_manifest
from .services import ingest_corpus
from .utils import resize_frame, write_labels


def write_clip(split_dir: Path, clip_id: str, count: int, shape=(240, 360), mode='RGB', value=128):
    clip_dir = split_dir / clip_id
    clip_dir.mkdir(parents=True)
    for index in range(count):
        channels = () if mode == 'L' else (3,)
        data = np.full(shape + channels, value, dtype=np.uint8)
        Image.fromarray(data).save(clip_dir / f'{index:06d}.png')
    return clip_dir


class ResizeFrameTests(SimpleTestCase):
    """Tests for resize_frame."""

    def test_resize_to_side(self):
        """Test a 240x360 frame becomes 224x224."""
        frame = Frame('c', 0, np.random.default_rng(0).random((240, 360, 3), dtype=np.float32))
        resized = resize_frame(frame, 224)
        self.assertEqual(resized.pixels.shape, (224, 224, 3))
        self.assertGreaterEqual(resized.pixels.min(), 0.0)
        self.assertLessEqual(resized.pixels.max(), 1.0)

    def test_identity_is_bit_exact(self):
        """Test resizing to the current size returns identical pixels."""
        pixels = np.random.default_rng(1).random((224, 224, 3), dtype=np.float32)
        resized = resize_frame(Frame('c', 0, pixels), 224)
        np.testing.assert_array_equal(resized.pixels, pixels)

    def test_constant_frame_stays_constant(self):
        """Test resampling preserves a constant image."""
        for side in (8, 100, 224, 500):
            frame = Frame('c', 0, np.full((37, 53, 3), 0.37, dtype=np.float32))
            resized = resize_frame(frame, side)
            np.testing.assert_allclose(resized.pixels, 0.37, atol=1e-6)

    def test_single_channel_keeps_channel_axis(self):
        frame = Frame('c', 0, np.full((30, 40, 1), 0.5, dtype=np.float32))
        self.assertEqual(resize_frame(frame, 16).pixels.shape, (16, 16, 1))

    def test_non_positive_side_fails(self):
        """Test non-positive sides are rejected."""
        frame = Frame('c', 0, np.zeros((10, 10, 3), dtype=np.float32))
        for side in (0, -4):
            with self.assertRaises(ValueError):
                resize_frame(frame, side)


class ClipTests(SimpleTestCase):
    """Tests for Clip invariants."""

    def test_indices_must_be_consecutive(self):
        pixels = np.zeros((8, 8, 3), dtype=np.float32)
        with self.assertRaises(ValueError):
            Clip('c', (Frame('c', 0, pixels), Frame('c', 2, pixels)))

    def test_label_count_must_match(self):
        pixels = np.zeros((8, 8, 3), dtype=np.float32)
        with self.assertRaises(ValueError):
            Clip('c', (Frame('c', 0, pixels),), split=Split.TEST, labels=np.array([0, 1]))


class IngestCorpusTests(SimpleTestCase):
    """Tests for ingest_corpus."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        (self.root / 'palette.txt').write_text('circle\nsquare\n')

    def tearDown(self):
        self.tmp.cleanup()

    def test_well_formed_corpus(self):
        """Test a two-clip corpus is ingested and resized to 224x224."""
        write_clip(self.root / 'train', 'a', 3)
        write_clip(self.root / 'train', 'b', 2)
        write_clip(self.root / 'test', 't', 4)
        write_labels(self.root / 'test' / 't.labels', [0, 1, 1, 0])

        corpus = ingest_corpus(self.root, IngestConfig(workers=2))

        self.assertEqual(len(corpus.train_clips), 2)
        self.assertEqual(corpus.class_palette, ('circle', 'square'))
        self.assertEqual(corpus.palette_size, 3)
        for clip in corpus.train_clips + corpus.test_clips:
            for frame in clip.frames:
                self.assertEqual(frame.pixels.shape, (224, 224, 3))
                self.assertGreaterEqual(frame.pixels.min(), 0.0)
                self.assertLessEqual(frame.pixels.max(), 1.0)
        np.testing.assert_array_equal(corpus.test_clips[0].labels, [0, 1, 1, 0])
        self.assertIsNone(corpus.train_clips[0].labels)

    def test_grayscale_replicated_to_three_channels(self):
        """Test UCSD-style grayscale frames become three identical channels."""
        write_clip(self.root / 'train', 'g', 1, shape=(158, 238), mode='L', value=200)
        (self.root / 'test').mkdir()
        corpus = ingest_corpus(self.root, IngestConfig(workers=1))
        pixels = corpus.train_clips[0].frames[0].pixels
        self.assertEqual(pixels.shape, (224, 224, 3))
        np.testing.assert_allclose(pixels, 200 / 255, atol=1e-6)

    def test_empty_train_directory_fails(self):
        """Test a corpus without training clips is rejected."""
        (self.root / 'train').mkdir()
        (self.root / 'test').mkdir()
        with self.assertRaisesMessage(ValueError, 'no training clips'):
            ingest_corpus(self.root)

    def test_missing_split_directory_fails(self):
        write_clip(self.root / 'train', 'a', 1)
        with self.assertRaises(FileNotFoundError):
            ingest_corpus(self.root)

    def test_label_mismatch_names_clip(self):
        """Test 10 frames with 9 labels fails naming the clip."""
        write_clip(self.root / 'train', 'a', 1)
        write_clip(self.root / 'test', 'clip_07', 10, shape=(32, 32))
        write_labels(self.root / 'test' / 'clip_07.labels', [0] * 9)
        with self.assertRaisesMessage(ValueError, 'clip_07'):
            ingest_corpus(self.root)


class ManifestTests(SimpleTestCase):
    """Tests for the corpus manifest."""

    def test_text_round_trip(self):
        """Test serialize then deserialize yields an equal manifest."""
        manifest = CorpusManifest(
            name='scene',
            palette=['circle', 'square'],
            entries=[
                ManifestEntry('train', 'train_000', 40, 'ab' * 32),
                ManifestEntry('test', 'test_000', 12, 'cd' * 32),
            ],
        )
        self.assertEqual(CorpusManifest.from_text(manifest.to_text()), manifest)

    def test_checksum_tracks_content(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            write_clip(root / 'train', 'a', 2, shape=(16, 16))
            first = build_manifest(root, 'scene', ['circle'])
            self.assertEqual(first, build_manifest(root, 'scene', ['circle']))
            write_clip(root / 'train', 'b', 1, shape=(16, 16))
            self.assertNotEqual(first.digest(), build_manifest(root, 'scene', ['circle']).digest())

    def test_rejects_foreign_text(self):
        with self.assertRaises(ValueError):
            CorpusManifest.from_text('hello\n')

    def test_names_with_spaces_read_back(self):
        """Test clip and corpus names holding spaces survive a save and load."""
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            write_clip(root / 'train', 'clip 07', 2, shape=(16, 16))
            manifest = build_manifest(root, 'lobby cam', ['circle'])
            manifest.save(root)
            loaded = CorpusManifest.load(root)
            self.assertEqual(loaded, manifest)
            self.assertEqual(loaded.entries[0].clip_id, 'clip 07')
            self.assertEqual(loaded.name, 'lobby cam')

    def test_tab_in_field_rejected(self):
        manifest = CorpusManifest(name='scene', palette=['circle'], entries=[ManifestEntry('train', 'a\tb', 1, 'ab')])
        with self.assertRaisesMessage(ValueError, 'tab or line break'):
            manifest.to_text()

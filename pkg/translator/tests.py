import tempfile
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from django.test import SimpleTestCase

from corpora.domain import Clip, Corpus, Frame, IngestConfig
from corpora.services import ingest_corpus
from synth.services import generate
from synth.tests import build_scene
from targets.cache import TargetCache
from targets.domain import Branch, TargetOptions
from targets.services import generate_targets

from .checkpoints import latest_checkpoint, load_model, read_history
from .domain import Backbone, TrainConfig
from .losses import PatchGrid, patch_loss_appearance, patch_loss_motion
from .network import ResNetUNet, TinyUNet, build_model
from .services import learning_rate, seed_everything, train, translate


def brute_force_patch_max(output: np.ndarray, target: np.ndarray, k: int, power: int) -> float:
    """Per-frame max over patches of the mean |difference|**power, averaged over the batch."""
    side = int(np.sqrt(k))
    n, _, h, w = output.shape
    rows = [i * (h // side) for i in range(side)] + [h]
    cols = [i * (w // side) for i in range(side)] + [w]
    per_frame = []
    for b in range(n):
        worst = 0.0
        for r in range(side):
            for c in range(side):
                diff = output[b, :, rows[r]:rows[r + 1], cols[c]:cols[c + 1]] - target[b, :, rows[r]:rows[r + 1], cols[c]:cols[c + 1]]
                worst = max(worst, float(np.mean(np.abs(diff) ** power)))
        per_frame.append(worst)
    return float(np.mean(per_frame))


class PatchGridTests(SimpleTestCase):
    """Tests for PatchGrid."""

    def test_patches_partition_frame(self):
        """Test every pixel belongs to exactly one patch."""
        for height, width in ((224, 224), (17, 20), (3, 3)):
            coverage = np.zeros((height, width), dtype=int)
            for y0, y1, x0, x1 in PatchGrid(9).bounds(height, width):
                coverage[y0:y1, x0:x1] += 1
            np.testing.assert_array_equal(coverage, 1)

    def test_remainder_goes_to_last_patches(self):
        bounds = PatchGrid(9).bounds(224, 224)
        self.assertEqual(bounds[0], (0, 74, 0, 74))
        self.assertEqual(bounds[-1], (148, 224, 148, 224))

    def test_non_square_count_rejected(self):
        """Test zero, negative and non-square patch counts are rejected."""
        for k in (0, -4, 2, 8):
            with self.assertRaises(ValueError):
                PatchGrid(k)

    def test_frame_smaller_than_grid(self):
        with self.assertRaises(ValueError):
            PatchGrid(9).bounds(2, 10)


class PatchLossTests(SimpleTestCase):
    """Tests for the patch-max losses."""

    def setUp(self):
        self.grid = PatchGrid(9)

    def test_matches_brute_force(self):
        """Test both losses equal a per-patch brute force on random tensors."""
        rng = np.random.default_rng(0)
        for _ in range(10):
            shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(3, 30)), int(rng.integers(3, 30)))
            output, target = rng.random(shape), rng.random(shape)
            app = patch_loss_appearance(torch.from_numpy(output), torch.from_numpy(target), self.grid)
            mot = patch_loss_motion(torch.from_numpy(output), torch.from_numpy(target), self.grid)
            self.assertAlmostEqual(app.item(), brute_force_patch_max(output, target, 9, 2), delta=1e-6)
            self.assertAlmostEqual(mot.item(), brute_force_patch_max(output, target, 9, 1), delta=1e-6)

    def test_identical_maps_give_zero(self):
        x = torch.rand(2, 3, 24, 24)
        self.assertEqual(patch_loss_appearance(x, x.clone(), self.grid).item(), 0.0)
        self.assertEqual(patch_loss_motion(x, x.clone(), self.grid).item(), 0.0)

    def test_error_in_one_patch(self):
        """Test the loss is that patch's MSE rather than the frame mean."""
        output = torch.zeros(1, 1, 9, 9)
        target = torch.zeros(1, 1, 9, 9)
        target[0, 0, 3:6, 3:6] = torch.arange(9, dtype=torch.float32).view(3, 3) / 10
        expected = float((target[0, 0, 3:6, 3:6] ** 2).mean())
        self.assertAlmostEqual(patch_loss_appearance(output, target, self.grid).item(), expected, places=6)
        self.assertGreater(patch_loss_appearance(output, target, self.grid).item(), F.mse_loss(output, target).item())

    def test_single_pixel_motion_error(self):
        """Test one pixel off by d gives d over the patch pixel count."""
        output = torch.zeros(1, 1, 224, 224)
        target = output.clone()
        target[0, 0, 100, 100] = 0.6
        self.assertAlmostEqual(patch_loss_motion(output, target, self.grid).item(), 0.6 / (74 * 74), places=7)

    def test_uniform_error(self):
        output = torch.zeros(2, 1, 30, 31)
        self.assertAlmostEqual(patch_loss_motion(output, output + 0.25, self.grid).item(), 0.25, places=6)

    def test_single_patch_is_frame_loss(self):
        """Test k=1 reduces to whole-frame MSE and MAE."""
        rng = torch.Generator().manual_seed(1)
        output, target = torch.rand(3, 2, 16, 16, generator=rng), torch.rand(3, 2, 16, 16, generator=rng)
        grid = PatchGrid(1)
        self.assertAlmostEqual(patch_loss_appearance(output, target, grid).item(), F.mse_loss(output, target).item(), places=6)
        self.assertAlmostEqual(patch_loss_motion(output, target, grid).item(), F.l1_loss(output, target).item(), places=6)

    def test_max_dominates_mean(self):
        rng = torch.Generator().manual_seed(2)
        output, target = torch.rand(1, 1, 20, 20, generator=rng), torch.rand(1, 1, 20, 20, generator=rng)
        loss = patch_loss_appearance(output, target, self.grid).item()
        self.assertGreaterEqual(loss, F.mse_loss(output, target).item() - 1e-7)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            patch_loss_motion(torch.zeros(1, 1, 9, 9), torch.zeros(1, 1, 9, 8), self.grid)

    def test_gradient_matches_finite_differences(self):
        """Test autograd against central differences on the test-scale network."""
        torch.manual_seed(3)
        model = TinyUNet(out_channels=2).double()
        inputs = torch.rand(1, 3, 12, 12, dtype=torch.float64)
        target = torch.rand(1, 2, 12, 12, dtype=torch.float64)
        grid = PatchGrid(9)

        for criterion in (patch_loss_appearance, patch_loss_motion):
            model.zero_grad()
            criterion(model(inputs), target, grid).backward()
            for param, index in ((model.head.weight, (0, 1, 1, 1)), (model.enc1[0].weight, (2, 0, 1, 0))):
                analytic = param.grad[index].item()
                eps = 1e-6
                with torch.no_grad():
                    original = param[index].item()
                    param[index] = original + eps
                    plus = criterion(model(inputs), target, grid).item()
                    param[index] = original - eps
                    minus = criterion(model(inputs), target, grid).item()
                    param[index] = original
                numeric = (plus - minus) / (2 * eps)
                self.assertLess(abs(analytic - numeric), 1e-2 * max(abs(numeric), 1e-8))


class LearningRateTests(SimpleTestCase):
    def test_halved_every_ten_epochs(self):
        """Test 0.005 at epoch 0, 0.0025 at 10 and 0.00125 at 20."""
        config = TrainConfig()
        self.assertEqual(learning_rate(config, 0), 0.005)
        self.assertEqual(learning_rate(config, 9), 0.005)
        self.assertEqual(learning_rate(config, 10), 0.0025)
        self.assertEqual(learning_rate(config, 20), 0.00125)


class NetworkTests(SimpleTestCase):
    """Tests for the translator networks and translate."""

    def test_resnet_unet_shape_and_range(self):
        model = ResNetUNet(out_channels=3, pretrained=False).eval()
        with torch.no_grad():
            output = model(torch.rand(1, 3, 64, 64))
        self.assertEqual(tuple(output.shape), (1, 3, 64, 64))
        self.assertGreaterEqual(float(output.min()), 0.0)
        self.assertLessEqual(float(output.max()), 1.0)

    def test_translate_is_deterministic(self):
        """Test the same frame twice gives identical H x W x C outputs."""
        model = build_model(3, TrainConfig(backbone=Backbone.RESNET34, pretrained=False))
        frame = Frame('c', 0, np.random.default_rng(4).random((64, 64, 3), dtype=np.float32))
        first, second = translate(model, frame), translate(model, frame)
        self.assertEqual(first.shape, (64, 64, 3))
        np.testing.assert_array_equal(first, second)

    def test_translate_rejects_bad_shape(self):
        model = build_model(1, TrainConfig(backbone=Backbone.RESNET34, pretrained=False))
        with self.assertRaises(ValueError):
            translate(model, Frame('c', 0, np.zeros((60, 64, 3), np.float32)))

    def test_unknown_backbone(self):
        with self.assertRaises(ValueError):
            build_model(1, TrainConfig(backbone='vgg'))


class TrainTests(SimpleTestCase):
    """Tests for train on a small generated scene."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name) / 'corpus'
        generate(build_scene(), cls.root, workers=1)
        cls.corpus = ingest_corpus(cls.root, IngestConfig(side=64, workers=1))
        options = TargetOptions(oracle='analytic', flow_estimator='analytic')
        cls.metas = generate_targets(cls.corpus, cls.root, list(Branch), options, workers=1)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def config(self, **overrides):
        return TrainConfig(**{'epochs': 5, 'batch_size': 4, 'backbone': Backbone.TINY, 'seed': 11, **overrides})

    def test_loss_decreases(self):
        """Test the epoch-5 mean loss is below the epoch-1 mean loss."""
        run_dir = Path(self.tmp.name) / 'run_progress'
        result = train(self.corpus, self.root, Branch.APPEARANCE, self.config(), run_dir)
        means = result.epoch_means()
        self.assertEqual(len(means), 5)
        self.assertLess(means[-1], means[0])
        self.assertEqual(result.learning_rates, [learning_rate(self.config(), e) for e in range(5)])
        self.assertEqual(latest_checkpoint(run_dir, Branch.APPEARANCE).name, 'epoch_5.ckpt')
        history = read_history(run_dir, Branch.APPEARANCE)
        self.assertEqual(list(history.columns), ['epoch', 'step', 'loss'])
        self.assertEqual(len(history), 5 * 3)

    def test_zero_epochs_keeps_initial_weights(self):
        run_dir = Path(self.tmp.name) / 'run_zero'
        result = train(self.corpus, self.root, Branch.APPEARANCE, self.config(epochs=0), run_dir)
        self.assertEqual(result.history, [])
        model, payload = load_model(run_dir, Branch.APPEARANCE)
        self.assertEqual(payload['epoch'], 0)
        seed_everything(11)
        initial = build_model(3, self.config())
        for name, tensor in initial.state_dict().items():
            torch.testing.assert_close(model.state_dict()[name], tensor, rtol=0, atol=0)

    def test_zero_epochs_returns_given_model_unchanged(self):
        """Test a supplied model comes back as is, with an empty loss history."""
        torch.manual_seed(5)
        model = build_model(3, self.config())
        before = {name: tensor.clone() for name, tensor in model.state_dict().items()}
        result = train(
            self.corpus, self.root, Branch.APPEARANCE, self.config(epochs=0), Path(self.tmp.name) / 'run_given_zero',
            model=model,
        )
        self.assertIs(result.model, model)
        self.assertEqual(result.history, [])
        for name, tensor in result.model.state_dict().items():
            torch.testing.assert_close(tensor, before[name], rtol=0, atol=0)

    def test_given_model_is_trained_in_place(self):
        torch.manual_seed(6)
        model = build_model(3, self.config())
        before = {name: tensor.clone() for name, tensor in model.state_dict().items()}
        result = train(
            self.corpus, self.root, Branch.APPEARANCE, self.config(epochs=1), Path(self.tmp.name) / 'run_given_one',
            model=model,
        )
        self.assertIs(result.model, model)
        self.assertEqual(len(result.history), 3)
        changed = [not torch.equal(tensor, before[name]) for name, tensor in result.model.state_dict().items()]
        self.assertTrue(any(changed))

    def test_motion_needs_flow_cap(self):
        with self.assertRaises(ValueError):
            train(self.corpus, self.root, Branch.MOTION, self.config(epochs=1), Path(self.tmp.name) / 'run_cap')

    def test_same_seed_same_weights(self):
        """Test two seeded motion runs end with identical weights."""
        cap = self.metas['motion']['flow_cap']
        states = []
        for name in ('run_a', 'run_b'):
            run_dir = Path(self.tmp.name) / name
            train(self.corpus, self.root, Branch.MOTION, self.config(epochs=1), run_dir, flow_cap=cap)
            states.append(load_model(run_dir, Branch.MOTION)[0].state_dict())
        for key in states[0]:
            torch.testing.assert_close(states[0][key], states[1][key], rtol=0, atol=0)

    def test_missing_target_fails_before_training(self):
        target = self.root / 'targets' / 'appearance' / 'train_000' / '000003.bin'
        saved = target.read_bytes()
        target.unlink()
        try:
            with self.assertRaisesMessage(ValueError, 'train_000/000003'):
                train(self.corpus, self.root, Branch.APPEARANCE, self.config(), Path(self.tmp.name) / 'run_missing')
        finally:
            target.write_bytes(saved)


class BackgroundOnlyTrainingTests(SimpleTestCase):
    """An appearance translator fitted on scenes without foreground."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name) / 'corpus'
        rng = np.random.default_rng(2)
        ys, xs = np.mgrid[0:32, 0:32].astype(np.float32)
        frames = []
        for index in range(16):
            gray = 0.3 + 0.05 * np.sin(xs / 5.0 + index * 0.1) * np.cos(ys / 7.0)
            gray = np.clip(gray + rng.normal(0.0, 0.01, gray.shape), 0.0, 1.0).astype(np.float32)
            frames.append(Frame('empty', index, np.repeat(gray[:, :, None], 3, axis=2)))
        clip = Clip('empty', tuple(frames))
        self.corpus = Corpus('empty', (clip,), (), ('circle', 'square'))
        cache = TargetCache(self.root)
        background = np.zeros((32, 32, 3), dtype=np.float32)
        background[..., 0] = 1.0
        for frame in frames:
            cache.write(Branch.APPEARANCE, clip.clip_id, frame.index, background)

    def tearDown(self):
        self.tmp.cleanup()

    def test_translation_is_background(self):
        """Test at least 99% of translated pixels pick the background channel."""
        config = TrainConfig(epochs=15, batch_size=4, backbone=Backbone.TINY, seed=4)
        result = train(self.corpus, self.root, Branch.APPEARANCE, config, Path(self.tmp.name) / 'run')
        for frame in self.corpus.train_clips[0].frames[::5]:
            output = translate(result.model, frame)
            self.assertEqual(output.shape, (32, 32, 3))
            self.assertGreaterEqual(float((output.argmax(axis=-1) == 0).mean()), 0.99)

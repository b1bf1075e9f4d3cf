"""Tests for losses, Dice, Adam, the LR schedule, checkpoints, training and evaluation."""

import math

import numpy as np
import pytest
from scipy.special import expit

from engine import Tensor
from models.config_models import TrainConfig, TrainSection
from models.data_models import RegionMask
from network.decoder import AXUNet
from pipeline.dataset import SliceDataset
from pipeline.preprocessing import preprocess_volume
from pipeline.synthetic import synth_volume
from tests.conftest import micro_config
from tools.gradcheck import gradient_check
from training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from training.evaluator import evaluate, evaluate_predictions, predict_dataset
from training.losses import bce_dice_loss, bce_loss, dice_loss
from training.metrics import dice_score, region_dice
from training.optimizer import Adam, AdamState, adam_step, cosine_lr
from training.trainer import train
from utils.errors import ConfigError, DataError, NumericError, ShapeError
from utils.rng import make_rng


def t64(values, requires_grad=False) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad, dtype=np.float64)


def naive_bce(x, y):
    p = expit(x)
    return -(y * np.log(p) + (1 - y) * np.log(1 - p))


def dice_loss_oracle(x, y, eps):
    p = expit(x)
    inter = sum(pi * yi for pi, yi in zip(p.ravel(), y.ravel()))
    return 1.0 - (2.0 * inter + eps) / (p.sum() + y.sum() + eps)


def mask(wt, tc=None, et=None) -> RegionMask:
    wt = np.asarray(wt, dtype=bool)
    tc = np.zeros_like(wt) if tc is None else np.asarray(tc, dtype=bool)
    et = np.zeros_like(wt) if et is None else np.asarray(et, dtype=bool)
    return RegionMask(wt=wt, tc=tc, et=et)


@pytest.fixture(scope="module")
def tiny_slices() -> SliceDataset:
    pairs = []
    for index in range(2):
        v = synth_volume(f"SYN_{index:05d}", (32, 32, 20), make_rng(11, "synth", index))
        pairs.extend(preprocess_volume(v, size=(32, 32))[:3])
    return SliceDataset.from_pairs(pairs)


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(epochs=1, batch_size=2, lr0=1e-3, seed=5, augment=True)
    values.update(overrides)
    return TrainConfig(**values)


class TestBCE:
    def test_zero_logit_is_ln2(self):
        loss = bce_loss(t64([0.0, 0.0, 0.0, 0.0]), np.array([0, 1, 0, 1]))
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-15)

    def test_large_logits_are_stable(self):
        x = t64([40.0, -40.0, 40.0, -40.0], requires_grad=True)
        loss = bce_loss(x, np.array([1, 0, 0, 1]), axis=None)
        assert loss.item() == pytest.approx(20.0, rel=1e-12)
        loss.backward()
        assert np.isfinite(x.grad).all()

    def test_matches_naive_formula(self, rng):
        x = rng.uniform(-5, 5, size=50)
        y = (rng.random(50) > 0.5).astype(np.float64)
        assert bce_loss(t64(x), y).item() == pytest.approx(naive_bce(x, y).mean(), abs=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(t64(np.zeros(3)), np.zeros(4))


class TestDiceLoss:
    def test_matches_loop_oracle(self, rng):
        x = rng.standard_normal((2, 4, 4))
        y = (rng.random((2, 4, 4)) > 0.6).astype(np.float64)
        assert dice_loss(t64(x), y, eps=1e-6).item() == pytest.approx(dice_loss_oracle(x, y, 1e-6), abs=1e-12)

    def test_bce_dice_is_mean_of_region_losses(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        y = (rng.random((2, 3, 4, 4)) > 0.5).astype(np.float64)
        expected = np.mean(
            [naive_bce(x[:, c], y[:, c]).mean() + dice_loss_oracle(x[:, c], y[:, c], 1e-6) for c in range(3)]
        )
        assert bce_dice_loss(t64(x), y).item() == pytest.approx(expected, abs=1e-10)

    def test_bce_dice_gradients(self, rng):
        x = t64(rng.standard_normal((2, 3, 3, 3)), requires_grad=True)
        y = (rng.random((2, 3, 3, 3)) > 0.5).astype(np.float64)
        errors = gradient_check(lambda: bce_dice_loss(x, y), {"x": x}, h=1e-6)
        assert errors["x"] < 1e-6

    def test_perfect_logits_give_near_zero_loss(self, rng):
        y = (rng.random((2, 3, 4, 4)) > 0.5).astype(np.float64)
        y[:, :, 0, 0] = 1.0
        logits = np.where(y > 0, 40.0, -40.0)
        assert bce_dice_loss(t64(logits), y).item() == pytest.approx(0.0, abs=1e-6)

    def test_requires_three_regions(self):
        with pytest.raises(ShapeError):
            bce_dice_loss(t64(np.zeros((1, 2, 4, 4))), np.zeros((1, 2, 4, 4)))


class TestDiceScore:
    def test_examples(self):
        assert dice_score([1, 1, 0, 0], [1, 1, 0, 0]) == 1.0
        assert dice_score([1, 0, 0, 0], [0, 1, 0, 0]) == 0.0
        assert dice_score([1, 1, 0, 0], [1, 0, 0, 0]) == pytest.approx(2 / 3)

    def test_both_empty_scores_one(self):
        assert dice_score(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0

    def test_rejects_non_binary(self):
        with pytest.raises(DataError):
            dice_score([0.5, 1.0], [1, 0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dice_score(np.zeros(3), np.zeros(4))

    def test_region_dice_pools_slices(self):
        gt = [mask([[1, 0]]), mask([[0, 0]])]
        pred = [mask([[1, 0]]), mask([[0, 1]])]
        scores = region_dice(pred, gt)
        assert scores["WT"] == pytest.approx(2 / 3)
        assert scores["TC"] == scores["ET"] == 1.0


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = t64([1.0, -2.0, 3.0], requires_grad=True)
        state = AdamState.for_parameters({"p": p})
        adam_step({"p": p}, {"p": np.array([0.5, -4.0, 1e-3])}, state, lr=0.1)
        np.testing.assert_allclose(p.data, [0.9, -1.9, 2.9], atol=1e-5)
        assert state.step == 1

    def test_zero_gradient_leaves_parameters(self):
        p = t64([1.0, 2.0], requires_grad=True)
        state = AdamState.for_parameters({"p": p})
        for _ in range(3):
            adam_step({"p": p}, {"p": None}, state, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_deterministic(self, rng):
        grads = [rng.standard_normal(4) for _ in range(5)]

        def run():
            p = t64(np.ones(4), requires_grad=True)
            state = AdamState.for_parameters({"p": p})
            for g in grads:
                adam_step({"p": p}, {"p": g}, state, lr=0.01)
            return p.data

        np.testing.assert_array_equal(run(), run())

    def test_gradient_shape_mismatch(self):
        p = t64(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            adam_step({"p": p}, {"p": np.ones(4)}, AdamState.for_parameters({"p": p}), lr=0.1)

    def test_optimizer_uses_parameter_grads(self):
        p = t64([1.0], requires_grad=True)
        optimizer = Adam([("p", p)])
        (p * p).sum().backward()
        optimizer.step(0.5)
        assert p.data[0] == pytest.approx(0.5, abs=1e-6)
        optimizer.zero_grad()
        assert p.grad is None


class TestCosineSchedule:
    def test_endpoints_and_midpoint(self):
        cfg = TrainSection(lr0=1e-4, epochs=40)
        assert cosine_lr(0, cfg) == pytest.approx(1e-4, abs=1e-12)
        assert cosine_lr(20, cfg) == pytest.approx(5e-5, abs=1e-12)
        assert cosine_lr(40, cfg) == pytest.approx(0.0, abs=1e-12)

    def test_outside_schedule(self):
        with pytest.raises(ConfigError):
            cosine_lr(41, TrainSection(epochs=40))


class TestEvaluation:
    def test_perfect_prediction(self):
        targets = [mask([[1, 1], [0, 0]], [[1, 0], [0, 0]], [[1, 0], [0, 0]]), mask([[0, 1], [1, 0]])]
        report = evaluate_predictions(targets, targets, ["A", "B"])
        assert report.aggregate.mean == 1.0
        assert [c.case_id for c in report.cases] == ["A", "B"]

    def test_background_prediction(self):
        targets = [mask([[1, 1]], [[1, 0]], [[1, 0]])]
        report = evaluate_predictions([mask([[0, 0]])], targets, ["A"])
        assert report.aggregate.wt == report.aggregate.tc == report.aggregate.et == 0.0

    def test_case_level_aggregation(self):
        targets = [mask([[1, 0]]), mask([[1, 0]]), mask([[1, 1]])]
        predictions = [mask([[1, 0]]), mask([[0, 0]]), mask([[1, 1]])]
        report = evaluate_predictions(predictions, targets, ["A", "A", "B"])
        assert report.cases[0].slices == 2
        assert report.cases[0].dice.wt == pytest.approx(2 / 3)
        assert report.aggregate.wt == pytest.approx((2 / 3 + 1.0) / 2)

    def test_report_table(self):
        report = evaluate_predictions([mask([[1]])], [mask([[1]])], ["A"], split="test")
        lines = report.to_table().splitlines()
        assert "100.00" in lines[4]
        assert "92.59" in lines[5]

    def test_empty_dataset(self, micro_model):
        with pytest.raises(DataError):
            evaluate(micro_model, None)

    def test_model_report_in_range(self, micro_model, tiny_slices):
        report = evaluate(micro_model, tiny_slices, batch_size=4)
        assert report.slices == len(tiny_slices)
        assert 0.0 <= report.aggregate.mean <= 1.0


class TestCheckpoint:
    def test_round_trip_reproduces_predictions(self, tmp_path, micro_model, tiny_slices):
        ckpt = Checkpoint(
            architecture=micro_config(),
            train=tiny_train_config(seed=0),
            epoch=3,
            best_val_dice=0.25,
            state=micro_model.state_dict(),
        )
        save_checkpoint(ckpt, tmp_path)
        loaded = load_checkpoint(tmp_path)
        assert loaded.epoch == 3 and loaded.architecture == micro_config()
        rebuilt = loaded.build_model()
        before = [m.stack() for m in predict_dataset(micro_model, tiny_slices)]
        after = [m.stack() for m in predict_dataset(rebuilt, tiny_slices)]
        assert all(np.array_equal(a, b) for a, b in zip(before, after))

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(ConfigError, match="checkpoint not found"):
            load_checkpoint(tmp_path / "nothing")

    def test_missing_parameter_file(self, tmp_path, micro_model):
        ckpt = Checkpoint(
            architecture=micro_config(), train=tiny_train_config(), epoch=0, best_val_dice=0.0,
            state=micro_model.state_dict(),
        )
        save_checkpoint(ckpt, tmp_path)
        (tmp_path / "params" / "head.bias.axtn").unlink()
        with pytest.raises(DataError):
            load_checkpoint(tmp_path)


class TestTraining:
    def run(self, dataset, cfg):
        model = AXUNet(micro_config(), make_rng(cfg.seed, "init"))
        return train(model, dataset, None, cfg)

    def test_runs_are_bitwise_reproducible(self, tiny_slices):
        a = self.run(tiny_slices, tiny_train_config(epochs=2))
        b = self.run(tiny_slices, tiny_train_config(epochs=2))
        assert a.history == b.history
        assert all(np.array_equal(a.state[name], b.state[name]) for name in a.state)

    def test_best_checkpoint_written(self, tmp_path, tiny_slices):
        cfg = tiny_train_config(epochs=2, checkpoint_dir=str(tmp_path / "ckpt"))
        best = self.run(tiny_slices, cfg)
        assert len(best.history) == 2
        assert best.best_val_dice == max(r.val_dice for r in best.history)
        assert load_checkpoint(tmp_path / "ckpt").epoch == best.epoch

    def test_non_finite_input_raises(self, tiny_slices):
        images = tiny_slices.images.copy()
        images[0, 0, 0, 0] = np.nan
        broken = SliceDataset(images, tiny_slices.masks, tiny_slices.case_ids)
        with pytest.raises(NumericError, match="epoch 0"):
            self.run(broken, tiny_train_config(augment=False))

    def test_empty_training_set(self, micro_model):
        with pytest.raises(DataError):
            train(micro_model, None, None, tiny_train_config())


def overfit_sets():
    """16 training slices from three synthetic cases, validation slices from a fourth."""
    pairs = []
    for index in range(3):
        v = synth_volume(f"SYN_{index:05d}", (64, 64, 32), make_rng(2, "synth", index))
        pairs.extend(preprocess_volume(v, size=(64, 64)))
    held_out = synth_volume("SYN_00003", (64, 64, 32), make_rng(2, "synth", 3))
    return SliceDataset.from_pairs(pairs[:16]), SliceDataset.from_pairs(preprocess_volume(held_out, size=(64, 64)))


def moving_average(values, window=3):
    return np.convolve(values, np.ones(window) / window, mode="valid")


@pytest.mark.slow
class TestOverfit:
    cfg = TrainConfig(epochs=200, batch_size=4, lr0=3e-3, seed=0, augment=False)

    @pytest.fixture(scope="class")
    def datasets(self):
        return overfit_sets()

    def fit(self, datasets, attention):
        train_set, val_set = datasets
        model = AXUNet(micro_config(input_size=64, attention_enabled=attention), make_rng(self.cfg.seed, "init"))
        return train(model, train_set, val_set, self.cfg)

    def test_attention_model_overfits(self, datasets):
        best = self.fit(datasets, attention=True)
        report = evaluate(best.build_model(), datasets[0])
        assert report.aggregate.mean > 0.95
        assert best.best_val_dice > 0.90

        early = moving_average([r.train_loss for r in best.history[:5]])
        assert all(later <= earlier for earlier, later in zip(early, early[1:]))

    def test_ablation_trains_under_same_harness(self, datasets):
        best = self.fit(datasets, attention=False)
        assert len(best.history) == self.cfg.epochs
        assert all(np.isfinite(r.train_loss) for r in best.history)
        assert best.history[-1].train_loss < best.history[0].train_loss

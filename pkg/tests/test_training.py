import json

import numpy as np
import pytest

from bfseg.data import Sample, SynthConfig, generate_dataset
from bfseg.errors import ConfigError, DatasetError
from bfseg.model import BFSegModel, ModelConfig
from bfseg.training import (
    AdamW,
    PlateauSchedule,
    TrainConfig,
    evaluate,
    lr_step,
    replay_lr,
    train,
)

TINY_MODEL = ModelConfig(base_channels=4, width=8)


def tiny_sets(n_train=6, n_val=3, size=32):
    cfg = SynthConfig(size=size, size_range=(4, 12))
    return generate_dataset(cfg, n_train, "tr"), generate_dataset(SynthConfig(size=size, size_range=(4, 12), seed=1), n_val, "va")


class TestSchedule:
    def test_three_stale_epochs(self):
        assert lr_step(0.001, 3) == (pytest.approx(0.0007, rel=1e-15), 0)

    def test_two_stale_epochs(self):
        assert lr_step(0.001, 2) == (0.001, 2)

    def test_seven_stale_epochs(self):
        sched = PlateauSchedule(0.001)
        sched.step(0.5)  # first epoch always improves on -inf
        lrs = []
        for _ in range(7):
            sched.step(0.4)
            lrs.append(sched.lr)
        assert lrs[2] == pytest.approx(0.0007, rel=1e-15)
        assert lrs[5] == pytest.approx(0.00049, rel=1e-15)
        assert lrs[-1] == lrs[5]

    def test_improvement_is_strict(self):
        assert replay_lr([0.5, 0.5, 0.5, 0.5]) == [0.001, 0.001, 0.001, 0.001 * 0.7]
        assert replay_lr([0.5, 0.5, 0.6, 0.6, 0.6]) == [0.001] * 5

    def test_non_increasing(self):
        metrics = np.random.default_rng(0).random(40).tolist()
        lrs = replay_lr(metrics)
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_decay_factor=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(patience_epochs=0)


class TestAdamW:
    def test_single_step_by_hand(self):
        p = {"w": np.array([2.0])}
        opt = AdamW(p, lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.5)
        opt.step({"w": np.array([0.3])})
        # bias-corrected moments equal g and g^2 after one step
        decayed = 2.0 - 0.1 * 0.5 * 2.0
        expected = decayed - 0.1 * 0.3 / (0.3 + 1e-8)
        assert p["w"][0] == pytest.approx(expected, rel=1e-12)

    def test_decay_is_decoupled(self):
        g = {"w": np.array([0.3, -1.2])}
        with_decay = {"w": np.array([2.0, -1.0])}
        without = {"w": np.array([2.0, -1.0])}
        AdamW(with_decay, lr=0.1, weight_decay=0.5).step(g)
        AdamW(without, lr=0.1, weight_decay=0.0).step(g)
        # the only difference is lr * wd * p, independent of the gradient
        np.testing.assert_allclose(without["w"] - with_decay["w"], 0.1 * 0.5 * np.array([2.0, -1.0]), rtol=1e-12)

    def test_zero_gradient_only_decays(self):
        p = {"w": np.array([1.0])}
        AdamW(p, lr=0.01, weight_decay=0.1).step({"w": np.array([0.0])})
        assert p["w"][0] == pytest.approx(1.0 - 0.01 * 0.1)


class TestTrain:
    def test_zero_epochs(self):
        tr, va = tiny_sets()
        result = train(TINY_MODEL, TrainConfig(epochs=0), tr, va)
        assert result.history.records == [] and result.best_epoch is None
        fresh = BFSegModel(TINY_MODEL)
        assert all(np.array_equal(fresh.params[k], result.model.params[k]) for k in fresh.params)

    def test_deterministic(self):
        tr, va = tiny_sets()
        cfg = TrainConfig(epochs=2, batch_size=4, seed=3)
        a = train(TINY_MODEL, cfg, tr, va)
        b = train(TINY_MODEL, cfg, tr, va)
        assert a.history.to_jsonl() == b.history.to_jsonl()
        assert all(np.array_equal(a.last_params[k], b.last_params[k]) for k in a.last_params)

    def test_history_replays(self):
        tr, va = tiny_sets()
        result = train(TINY_MODEL, TrainConfig(epochs=4, batch_size=4), tr, va)
        recs = [json.loads(line) for line in result.history.to_jsonl().splitlines()]
        assert [r["epoch"] for r in recs] == [1, 2, 3, 4]
        assert [r["next_lr"] for r in recs] == replay_lr([r["val"]["iou"] for r in recs])
        assert recs[0]["lr"] == 0.001
        assert all(nxt["lr"] == cur["next_lr"] for cur, nxt in zip(recs, recs[1:]))
        assert set(recs[0]["loss"]) == {"final_ce", "lenient_per_scale", "distill_per_scale", "total"}

    def test_empty_sets(self):
        tr, _ = tiny_sets()
        with pytest.raises(DatasetError):
            train(TINY_MODEL, TrainConfig(epochs=1), tr, [])

    def test_non_square_with_rotation(self):
        s = Sample(np.zeros((32, 64, 3)), np.zeros((32, 64), np.uint8), "a")
        with pytest.raises(ConfigError):
            train(TINY_MODEL, TrainConfig(epochs=1), [s], [s])

    @pytest.mark.slow
    def test_overfit(self):
        ds = generate_dataset(SynthConfig(size=64, seed=3, count_range=(1, 3), size_range=(16, 32)), 4)
        cfg = TrainConfig(
            epochs=100, batch_size=1, augment=False, initial_lr=5e-3, weight_decay=0.0, patience_epochs=10
        )
        result = train(ModelConfig(base_channels=8, width=32), cfg, ds, ds)
        assert evaluate(result.model, ds).iou > 0.95


class TestEvaluate:
    def test_zero_weights_predict_everything(self):
        model = BFSegModel(TINY_MODEL)
        for v in model.params.values():
            v[...] = 0
        _, va = tiny_sets()
        report = evaluate(model, va)
        frac = np.mean([s.label.mean() for s in va])
        assert report.recall == 1.0
        assert report.precision == pytest.approx(frac, rel=1e-12)

    def test_empty(self):
        with pytest.raises(DatasetError, match="no samples"):
            evaluate(BFSegModel(TINY_MODEL), [])

import csv

import numpy as np
import pytest

from hybridqnn.exceptions import ConfigurationError, ShapeError
from hybridqnn.models import ModelSpec, build_model
from hybridqnn.training import (
    CHECKPOINT_MAGIC,
    METRIC_COLUMNS,
    TrainConfig,
    confusion_matrix,
    cross_entropy_loss,
    fit,
    load_checkpoint,
    make_streams,
    save_checkpoint,
    sgd_step,
    write_metrics_csv,
)

from oracles import central_difference


def tiny_data(rng, n=12, size=6):
    X = rng.uniform(0.05, 0.95, (n, 1, size, size))
    return X, np.arange(n) % 4


class TestLoss:
    def test_uniform_logits(self):
        loss, _ = cross_entropy_loss(np.zeros((5, 4)), [0, 1, 2, 3, 0])
        assert abs(loss - np.log(4)) <= 1e-12

    def test_confident_correct(self):
        loss, _ = cross_entropy_loss(np.array([[50.0, 0, 0, 0]]), [0])
        assert loss < 1e-20

    def test_gradient(self):
        rng = np.random.default_rng(0)
        logits, labels = rng.normal(size=(3, 4)), np.array([1, 0, 3])
        _, grad = cross_entropy_loss(logits, labels)
        fd = central_difference(lambda z: cross_entropy_loss(z, labels)[0], logits)
        np.testing.assert_allclose(grad, fd, atol=1e-9)

    def test_large_logits_are_stable(self):
        loss, grad = cross_entropy_loss(np.array([[1000.0, -1000, 0, 0]]), [1])
        assert loss == pytest.approx(2000.0)
        assert np.all(np.isfinite(grad))

    def test_label_range(self):
        with pytest.raises(ConfigurationError):
            cross_entropy_loss(np.zeros((1, 4)), [4])


def test_sgd_step_arithmetic():
    np.testing.assert_allclose(sgd_step([1.0, 2.0], [0.5, -1.0], 0.1), [0.95, 2.1])
    with pytest.raises(ShapeError):
        sgd_step([1.0], [1.0, 2.0], 0.1)


def test_confusion_matrix():
    cm = confusion_matrix([0, 1, 1, 3], [0, 1, 2, 3], 4)
    assert cm.trace() == 3 and cm[1, 2] == 1 and cm.sum() == 4


def test_streams_are_independent_and_reproducible():
    a, b = make_streams(3), make_streams(3)
    assert a["init"].random() == b["init"].random()
    assert make_streams(3)["init"].random() != make_streams(3)["shuffle"].random()


@pytest.mark.parametrize("bad", [dict(learning_rate=-1), dict(batch_size=0), dict(epochs=-1)])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        TrainConfig(**bad)


class TestFit:
    def test_zero_learning_rate_keeps_params(self):
        model = build_model(ModelSpec("qccnn1", input_size=6))
        rng = np.random.default_rng(0)
        config = TrainConfig(learning_rate=0.0, batch_size=4, epochs=1, seed=5)
        state = fit(model, tiny_data(rng), config)
        initial = model.init_params(make_streams(5)["init"])
        np.testing.assert_array_equal(state.params, initial)

    def test_same_seed_same_run(self):
        rng = np.random.default_rng(1)
        data = tiny_data(rng)
        model = build_model(ModelSpec("cnn", input_size=6))
        config = TrainConfig(learning_rate=0.1, batch_size=4, epochs=3, seed=2)
        a, b = fit(model, data, config, data), fit(model, data, config, data)
        np.testing.assert_array_equal(a.params, b.params)
        strip = [{k: v for k, v in r.items() if k != "wall_seconds"} for r in a.history]
        assert strip == [{k: v for k, v in r.items() if k != "wall_seconds"} for r in b.history]

    def test_loss_decreases(self):
        rng = np.random.default_rng(2)
        data = tiny_data(rng, 16)
        model = build_model(ModelSpec("cnn", input_size=6))
        state = fit(model, data, TrainConfig(learning_rate=0.2, batch_size=4, epochs=15, seed=0))
        assert state.history[-1]["train_loss"] < state.history[0]["train_loss"]

    def test_shot_mode_is_reproducible(self):
        rng = np.random.default_rng(3)
        data = tiny_data(rng, 4)
        model = build_model(ModelSpec("qccnn1", shots=200, input_size=6))
        config = TrainConfig(batch_size=2, epochs=1, seed=4)
        np.testing.assert_array_equal(fit(model, data, config).params, fit(model, data, config).params)

    def test_empty_training_set(self):
        model = build_model(ModelSpec("cnn", input_size=6))
        with pytest.raises(ConfigurationError):
            fit(model, (np.zeros((0, 1, 6, 6)), np.zeros(0, dtype=int)), TrainConfig(epochs=1))


class TestPersistence:
    def test_metrics_csv(self, tmp_path):
        rows = [{"epoch": 1, "train_loss": 1.2, "train_acc": 0.5, "test_acc": 0.25, "wall_seconds": 0.1}]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows)
        with path.open() as fh:
            reader = csv.DictReader(fh)
            assert tuple(reader.fieldnames) == METRIC_COLUMNS
            assert float(next(reader)["test_acc"]) == 0.25

    @pytest.mark.parametrize("kind", ["cnn", "qccnn2", "qcresnet1"])
    def test_checkpoint_round_trip(self, tmp_path, kind):
        model = build_model(ModelSpec(kind, ansatz_family="circuit_block", ansatz_layers=2))
        params = model.init_params(np.random.default_rng(0)) * np.pi
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, params, {"epochs": 3})
        loaded, values, header = load_checkpoint(path)
        np.testing.assert_array_equal(values, params)
        assert loaded.spec == model.spec
        assert header["epochs"] == "3"
        assert path.read_text().splitlines()[0] == CHECKPOINT_MAGIC

    def test_truncated_checkpoint(self, tmp_path):
        model = build_model(ModelSpec("cnn"))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, model.init_params(np.random.default_rng(0)))
        path.write_text("\n".join(path.read_text().splitlines()[:-5]) + "\n")
        with pytest.raises(ConfigurationError):
            load_checkpoint(path)

    @pytest.mark.parametrize("text", ["", "not a checkpoint\n", f"{CHECKPOINT_MAGIC}\nkind=cnn\n---\n1.0\n"])
    def test_garbage(self, tmp_path, text):
        path = tmp_path / "bad.ckpt"
        path.write_text(text)
        with pytest.raises(ConfigurationError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "absent.ckpt")

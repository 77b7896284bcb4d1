"""Training-loop behavior: early stopping, determinism, artifacts."""

from pathlib import Path

import numpy as np
import pytest

import tswarp.train as train_mod
from tswarp.checkpoint import load_checkpoint
from tswarp.model import ModelConfig
from tswarp.synthetic import GeneratorSpec, generate_dataset
from tswarp.train import DivergenceError, TrainConfig, evaluate_model, train


def _tiny_spec():
    # short horizon keeps grids small; density contrast is irrelevant here
    return GeneratorSpec(horizon=6.0, dense_gap_range=(0.3, 0.5),
                         sparse_gap_range=(1.5, 2.5))


def _splits(seed=0, n_train=16, n_val=8):
    rng = np.random.default_rng(seed)
    spec = _tiny_spec()
    return (generate_dataset(spec, rng, n_train),
            generate_dataset(spec, rng, n_val))


def _model_config(**kw):
    base = dict(num_variates=2, num_classes=2, dim=8, heads=1, attn_layers=1,
                scales=(1.0, 0.5))
    base.update(kw)
    return ModelConfig(**base)


def _train_config(tmp_path, **kw):
    base = dict(lr=1e-3, max_epochs=6, patience=2, batch_size=8, seed=0,
                out_dir=str(tmp_path))
    base.update(kw)
    return TrainConfig(**base)


class TestConfigValidation:
    def test_patience_must_be_below_max_epochs(self, tmp_path):
        with pytest.raises(ValueError):
            _train_config(tmp_path, patience=6, max_epochs=6).validate()
        with pytest.raises(ValueError):
            _train_config(tmp_path, patience=0).validate()
        with pytest.raises(ValueError):
            _train_config(tmp_path, lr=-1.0).validate()
        with pytest.raises(ValueError):
            _train_config(tmp_path, selection_metric="f1").validate()

    def test_metric_resolution(self, tmp_path):
        cfg = _train_config(tmp_path)
        assert cfg.resolved_metric("sequence") == "auroc"
        assert cfg.resolved_metric("per_step") == "accuracy"
        cfg.selection_metric = "auprc"
        assert cfg.resolved_metric("per_step") == "auprc"


class TestEarlyStopping:
    def test_constant_metric_stops_after_patience_plus_one(self, tmp_path):
        tr, va = _splits()
        # lr = 0 freezes the parameters, so the validation metric is constant
        cfg = _train_config(tmp_path, lr=0.0, max_epochs=20, patience=3)
        result = train(_model_config(), cfg, tr, va, quiet=True)
        assert len(result.history) == 4
        assert result.best_epoch == 1

    def test_always_improving_runs_all_epochs(self, tmp_path, monkeypatch):
        tr, va = _splits()
        values = iter(np.linspace(0.5, 0.9, 50))

        def scripted(model, instances, stats, batch_size=64):
            v = float(next(values))
            return {"auroc": v, "auprc": v, "accuracy": v, "loss": 1.0 - v}

        monkeypatch.setattr(train_mod, "evaluate_model", scripted)
        cfg = _train_config(tmp_path, max_epochs=5, patience=2)
        result = train(_model_config(), cfg, tr, va, quiet=True)
        assert len(result.history) == 5
        assert result.best_epoch == 5

    def test_best_epoch_parameters_are_restored(self, tmp_path, monkeypatch):
        tr, va = _splits()
        script = iter([0.6, 0.9, 0.5, 0.4, 0.3])
        snapshots = []

        def scripted(model, instances, stats, batch_size=64):
            snapshots.append({p.name: p.data.copy() for p in model.parameters()})
            v = float(next(script))
            return {"auroc": v, "auprc": v, "accuracy": v, "loss": 1.0 - v}

        monkeypatch.setattr(train_mod, "evaluate_model", scripted)
        cfg = _train_config(tmp_path, max_epochs=6, patience=3)
        result = train(_model_config(), cfg, tr, va, quiet=True)
        assert result.best_epoch == 2 and len(result.history) == 5
        best = snapshots[1]  # evaluation after epoch 2
        for p in result.model.parameters():
            np.testing.assert_array_equal(p.data, best[p.name])


class TestDeterminism:
    def test_same_seed_reproduces_history_and_weights(self, tmp_path):
        tr, va = _splits()
        r1 = train(_model_config(), _train_config(tmp_path / "a", seed=11),
                   tr, va, quiet=True)
        r2 = train(_model_config(), _train_config(tmp_path / "b", seed=11),
                   tr, va, quiet=True)
        assert r1.history == r2.history
        assert (Path(tmp_path / "a/history.csv").read_text()
                == Path(tmp_path / "b/history.csv").read_text())
        for p1, p2 in zip(r1.model.parameters(), r2.model.parameters()):
            np.testing.assert_array_equal(p1.data, p2.data)

    def test_different_seed_differs(self, tmp_path):
        tr, va = _splits()
        r1 = train(_model_config(), _train_config(tmp_path / "a", seed=1),
                   tr, va, quiet=True)
        r2 = train(_model_config(), _train_config(tmp_path / "b", seed=2),
                   tr, va, quiet=True)
        assert r1.history != r2.history


class TestDivergence:
    def test_nonfinite_loss_names_epoch_and_batch(self, tmp_path):
        # gigantic observation gaps overflow the relative-time features
        from tswarp.dataio import GridInstance
        rng = np.random.default_rng(0)

        def inst(i):
            times = np.array([0.0, 1.0, 2.0, 1e300])
            mask = np.ones((2, 4))
            values = rng.normal(size=(2, 4))
            types = np.array([[1] * 4, [2] * 4])
            return GridInstance(f"d{i}", values, types, mask, times,
                                np.array([i % 2]))

        tr = [inst(i) for i in range(8)]
        va = [inst(i + 8) for i in range(4)]
        cfg = _train_config(tmp_path, max_epochs=4, patience=2)
        with np.errstate(all="ignore"):
            with pytest.raises(DivergenceError, match=r"epoch \d+, batch \d+"):
                train(_model_config(), cfg, tr, va, quiet=True)


class TestArtifacts:
    def test_outputs_written(self, tmp_path):
        tr, va = _splits()
        result = train(_model_config(), _train_config(tmp_path), tr, va, quiet=True)
        for name in ("best.npz", "norm_stats.csv", "history.csv",
                     "history.png", "summary.txt"):
            assert (tmp_path / name).exists(), name
        line = (tmp_path / "summary.txt").read_text().strip()
        assert line.startswith("run_summary ")
        fields = dict(kv.split("=", 1) for kv in line.split()[1:])
        assert fields["seed"] == "0"
        assert "best_val_auroc" in fields
        assert result.checkpoint_path == tmp_path / "best.npz"

    def test_reference_length_fixed_from_training_median(self, tmp_path):
        tr, va = _splits()
        mc = _model_config()
        assert mc.reference_length == 0
        train(mc, _train_config(tmp_path, max_epochs=2, patience=1), tr, va,
              quiet=True)
        lengths = sorted(inst.length for inst in tr)
        assert mc.reference_length == int(np.floor(np.median(lengths) + 0.5))

    def test_checkpoint_reload_reproduces_validation_metrics(self, tmp_path):
        tr, va = _splits()
        result = train(_model_config(), _train_config(tmp_path), tr, va, quiet=True)
        before = evaluate_model(result.model, va, result.norm_stats)
        loaded, norm, _, extra = load_checkpoint(result.checkpoint_path)
        after = evaluate_model(loaded, va, norm)
        assert before == after
        assert extra["best_epoch"] == result.best_epoch

    def test_empty_split_rejected(self, tmp_path):
        tr, va = _splits()
        with pytest.raises(ValueError):
            train(_model_config(), _train_config(tmp_path), [], va)
        with pytest.raises(ValueError):
            train(_model_config(), _train_config(tmp_path), tr, [])

import math

import numpy as np
import pytest

import oracles
from anyclass.data import LabelDataset, SplitSpec, SyntheticConfig, split_dataset, synthesize
from anyclass.errors import InvalidConfigError, InvalidInputError, TrainingDivergedError
from anyclass.losses import FAMILIES, LossConfig, compute_loss
from anyclass.metrics import full_report
from anyclass.seeding import derive_seed
from anyclass.trainer import (MLP, AblationTable, MLPConfig, TrainConfig, ablate_lambda, evaluate,
                              forward, init_model, predict_proba, train)


@pytest.fixture(scope="module")
def splits():
    ds = synthesize(SyntheticConfig(n_instances=600, n_classes=4, n_features=6, seed=3))
    return split_dataset(ds, SplitSpec(seed=1))


def quick(**kw):
    base = dict(epochs=4, batch_size=32)
    base.update(kw)
    base.setdefault("lr_decay", ((2, 0.1),) if base["epochs"] > 2 else ())
    return TrainConfig(**base)


class TestInit:
    def test_parameter_count(self):
        assert init_model(MLPConfig(8, 4, (16,))).n_parameters == 212

    def test_same_seed(self):
        a, b = init_model(MLPConfig(5, 3, (7, 4), init_seed=11)), init_model(MLPConfig(5, 3, (7, 4), init_seed=11))
        assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))

    def test_different_seed(self):
        a, b = init_model(MLPConfig(5, 3, init_seed=1)), init_model(MLPConfig(5, 3, init_seed=2))
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_linear(self):
        m = init_model(MLPConfig(6, 2))
        assert len(m.weights) == 1 and m.weights[0].shape == (6, 2)
        assert not m.biases[0].any()

    def test_glorot_bounds(self):
        m = init_model(MLPConfig(30, 10, (20,)))
        for w in m.weights:
            assert np.abs(w).max() <= math.sqrt(6 / sum(w.shape))

    @pytest.mark.parametrize("kw", [{"input_dim": 0, "output_dim": 2}, {"input_dim": 2, "output_dim": 0},
                                    {"input_dim": 2, "output_dim": 2, "hidden_dims": (0,)},
                                    {"input_dim": 2, "output_dim": 2, "activation": "gelu"}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfigError):
            MLPConfig(**kw)


class TestForward:
    def test_zero_model(self):
        m = MLP([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
        assert not forward(m, np.ones((5, 3))).any()

    def test_linear_row_sum(self):
        w = np.arange(6.0).reshape(3, 2)
        m = MLP([w], [np.zeros(2)])
        assert forward(m, np.ones((1, 3))).tolist() == [w.sum(axis=0).tolist()]

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            forward(init_model(MLPConfig(3, 2)), np.ones((2, 4)))

    def test_finite(self):
        m = init_model(MLPConfig(4, 3, (8,), activation="tanh"))
        x = np.random.default_rng(0).normal(scale=100, size=(50, 4))
        assert np.isfinite(forward(m, x)).all()

    def test_checkpoint_round_trip(self, tmp_path):
        m = init_model(MLPConfig(4, 3, (5, 2), activation="tanh", init_seed=4))
        m.save(tmp_path / "m.json", class_names=["a", "b", "c"])
        back = MLP.load(tmp_path / "m.json")
        assert back.activation == "tanh"
        assert all(np.array_equal(x, y) for x, y in zip(m.parameters(), back.parameters()))

    def test_bad_checkpoint(self):
        with pytest.raises(InvalidInputError):
            MLP.from_dict({"format_version": 99, "kind": "mlp", "layers": []})


def _network_loss(model, x, y, family):
    z = model.forward(x)
    return math.fsum(oracles.instance_loss(z[i], y[i], family, 0.7, 0.2, 2.0) for i in range(len(x))) / len(x)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
@pytest.mark.parametrize("family", FAMILIES)
def test_end_to_end_gradient(family, activation):
    rng = np.random.default_rng(12)
    model = init_model(MLPConfig(4, 3, (5,), activation=activation, init_seed=5))
    model.biases[0][:] = rng.normal(scale=0.3, size=5)
    x = rng.normal(size=(6, 4))
    y = np.array([[1, 0, 0], [0, 0, 0], [1, 1, 0], [0, 1, 1], [0, 0, 0], [1, 1, 1]])
    if activation == "relu":
        pre = x @ model.weights[0] + model.biases[0]
        assert np.abs(pre).min() > 1e-3  # no kink inside the difference stencil
    cfg = LossConfig(family=family, alpha=0.7, lam=0.2, gamma=2.0)
    logits, acts = model.forward(x, cache=True)
    res = compute_loss(logits, y, cfg)
    analytic = model.backward(res.grad_logits / len(x), acts)
    h = 1e-6
    for p, g in zip(model.parameters(), analytic):
        numeric = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            up = _network_loss(model, x, y, family)
            p[idx] = keep - h
            down = _network_loss(model, x, y, family)
            p[idx] = keep
            numeric[idx] = (up - down) / (2 * h)
        rel, absolute = oracles.grad_error(g, numeric)
        assert rel < 1e-5 and absolute < 1e-8


class TestTrain:
    def test_zero_lr(self, splits):
        tr, va, _ = splits
        m = init_model(MLPConfig(6, 4, (8,)))
        before = [p.copy() for p in m.parameters()]
        train(m, tr, va, quick(learning_rate=0.0, weight_decay=0.0))
        assert all(np.array_equal(a, b) for a, b in zip(before, m.parameters()))

    def test_overfit_single_instance(self):
        ds = LabelDataset(["a"], [[1, 0, 1]], ["x", "y", "z"], features=[[0.5, -1.0, 2.0]])
        m = init_model(MLPConfig(3, 3, (8,), init_seed=0))
        # class "y" never occurs, so class balancing is undefined here
        cfg = TrainConfig(epochs=200, batch_size=1, loss=LossConfig("any_bce"), cb_beta=None)
        log = train(m, ds, ds, cfg)
        losses = [r.train_loss for r in log.epochs]
        assert losses[-1] < 0.01
        assert all(b <= a for a, b in zip(losses[5:], losses[6:]))

    def test_deterministic(self, splits):
        tr, va, _ = splits
        logs = []
        for threads in (1, 1, 3):
            m = init_model(MLPConfig(6, 4, (8,), init_seed=2))
            logs.append(train(m, tr, va, quick(threads=threads)).to_json())
        assert logs[0] == logs[1] == logs[2]

    def test_plain_sgd_trajectory(self, splits):
        tr, va, _ = splits
        cfg = TrainConfig(epochs=3, batch_size=len(tr), learning_rate=0.3, momentum=0.0, weight_decay=0.0,
                          lr_decay=(), loss=LossConfig("any_focal"), cb_beta=None, seed=8)
        m = init_model(MLPConfig(6, 4, (5,), init_seed=3))
        ref = m.copy()
        train(m, tr, va, cfg)
        rng = np.random.default_rng(derive_seed(8, "shuffle"))
        for _ in range(3):
            idx = rng.permutation(len(tr))
            z, acts = ref.forward(tr.features[idx], cache=True)
            res = compute_loss(z, tr.labels[idx], cfg.loss)
            for p, g in zip(ref.parameters(), ref.backward(res.grad_logits / len(idx), acts)):
                p -= 0.3 * g
        assert all(np.array_equal(a, b) for a, b in zip(ref.parameters(), m.parameters()))

    def test_best_epoch_is_earliest_max(self, splits):
        tr, va, _ = splits
        log = train(init_model(MLPConfig(6, 4, (8,))), tr, va, quick(epochs=6))
        scores = [r.validation.mean_ap for r in log.epochs]
        assert log.best_epoch == scores.index(max(scores))
        assert log.complete and len(log.epochs) == 6

    def test_lr_schedule(self):
        cfg = TrainConfig()
        assert [cfg.learning_rate_at(e) for e in (0, 9, 10, 15)] == pytest.approx([0.05, 0.05, 0.005, 0.0005])

    def test_divergence_reported(self, splits):
        tr, va, _ = splits
        m = init_model(MLPConfig(6, 4, (8,)))
        m.weights[0][:] = np.inf
        with pytest.raises(TrainingDivergedError) as info:
            train(m, tr, va, quick())
        assert info.value.epoch == 0 and info.value.batch == 0

    def test_missing_features(self, splits):
        tr, va, _ = splits
        bare = LabelDataset(tr.instance_ids, tr.labels, tr.class_names)
        with pytest.raises(InvalidInputError):
            train(init_model(MLPConfig(6, 4)), bare, va, quick())

    @pytest.mark.parametrize("kw", [{"lr_decay": ((3, 0.1), (2, 0.1))}, {"lr_decay": ((4, 0.1),)},
                                    {"momentum": 1.0}, {"validation_metric": "f1"}])
    def test_bad_config(self, kw):
        with pytest.raises(InvalidConfigError):
            quick(**kw)

    def test_log_csv(self, splits):
        tr, va, _ = splits
        log = train(init_model(MLPConfig(6, 4)), tr, va, quick(epochs=2))
        lines = log.to_csv().strip().split("\n")
        assert lines[0].startswith("epoch,") and len(lines) == 3


class TestEvaluate:
    def test_huge_negative_bias(self, splits):
        _, _, te = splits
        m = MLP([np.zeros((6, 4))], [np.full(4, -1e3)])
        rep = evaluate(m, te)
        neg = ~te.labels.any(axis=1)
        expected = 2 * neg.sum() / (neg.sum() + len(te))
        assert rep.f1_neg == pytest.approx(expected, rel=1e-15)
        assert rep.macro_f1 == 0.0

    def test_repeatable_and_matches_oracle(self, splits):
        tr, va, te = splits
        m = init_model(MLPConfig(6, 4, (8,)))
        train(m, tr, va, quick())
        a, b = evaluate(m, te), evaluate(m, te)
        assert a.to_json() == b.to_json()
        ref = oracles.report(predict_proba(m, te.features).tolist(), te.labels.tolist(), 0.5)
        assert a.macro_f2 == ref["macro_f2"] and a.f1_neg == ref["f1_neg"]
        assert abs(a.mean_ap - ref["mean_ap"]) <= 1e-12

    def test_class_mismatch(self, splits):
        with pytest.raises(InvalidInputError):
            evaluate(init_model(MLPConfig(6, 3)), splits[2])


class TestAblation:
    def test_alpha_zero_matches_baseline(self, splits):
        tr, va, te = splits
        cfg = quick(epochs=2, loss=LossConfig("any_bce", alpha=0.0))
        table = ablate_lambda(tr, va, te, MLPConfig(6, 4, (8,)), cfg, lambda_grid=[0.0], seeds=1)
        base, anyrow = table.rows
        assert (base.f1, base.f2, base.map, base.f1_neg) == (anyrow.f1, anyrow.f2, anyrow.map, anyrow.f1_neg)

    def test_replicated_lambda(self, splits):
        tr, va, te = splits
        table = ablate_lambda(tr, va, te, MLPConfig(6, 4), quick(epochs=2), lambda_grid=[0.3, 0.3], seeds=[4])
        a, b = table.rows[1:]
        assert a == b

    def test_default_grid_shape(self, splits, monkeypatch):
        import anyclass.trainer as T
        tr, va, te = splits
        fake = full_report([[0.9], [0.1]], [[1], [0]])
        monkeypatch.setattr(T, "run_experiment", lambda *a, **k: T.RunResult(0, None, fake))
        table = ablate_lambda(tr, va, te, MLPConfig(6, 4), quick(), seeds=2)
        med = table.medians()
        assert [r.lam for r in med] == [None, 0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]
        assert len([r for r in med if r.variant == "any"]) == 8
        back = AblationTable.from_csv(table.to_csv())
        assert back.rows == table.rows

    def test_bad_grid(self, splits):
        tr, va, te = splits
        with pytest.raises(InvalidConfigError):
            ablate_lambda(tr, va, te, MLPConfig(6, 4), quick(), lambda_grid=[1.5], seeds=1)

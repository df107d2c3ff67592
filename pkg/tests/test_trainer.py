"""Tests for training: schedule, macro F1, checkpointing, divergence."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zcnas.arch import ArchSpec, CnnLayer, instantiate
from zcnas.data import WindowedDataset, build_datasets, generate_synthetic
from zcnas.train import (
    RunRecord,
    TrainConfig,
    evaluate_f1,
    lr_at_epoch,
    macro_f1,
    predict,
    train,
)


# ---------------------------------------------------------------------------
# learning-rate schedule
# ---------------------------------------------------------------------------

def test_lr_schedule_frozen_values():
    assert lr_at_epoch(1e-4, 1, 0.8, 10) == 1e-4
    assert lr_at_epoch(1e-4, 10, 0.8, 10) == 1e-4
    assert lr_at_epoch(1e-4, 11, 0.8, 10) == pytest.approx(8e-5)
    assert lr_at_epoch(1e-4, 25, 0.8, 10) == pytest.approx(6.4e-5)
    assert lr_at_epoch(1e-4, 31, 0.8, 10) == pytest.approx(5.12e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(1, 20))
def test_lr_schedule_is_piecewise_constant_and_decaying(epoch, every):
    lr = lr_at_epoch(1.0, epoch, 0.8, every)
    assert lr == pytest.approx(0.8 ** ((epoch - 1) // every))
    assert lr_at_epoch(1.0, epoch + 1, 0.8, every) <= lr


def test_train_config_validation():
    TrainConfig().validate()
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=1.5).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=0.0).validate()


# ---------------------------------------------------------------------------
# macro F1
# ---------------------------------------------------------------------------

def macro_f1_ref(preds, labels):
    """Independent confusion-matrix implementation."""
    scores = []
    for c in sorted(set(labels.tolist())):
        tp = sum(1 for p, l in zip(preds, labels) if p == c and l == c)
        fp = sum(1 for p, l in zip(preds, labels) if p == c and l != c)
        fn = sum(1 for p, l in zip(preds, labels) if p != c and l == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        scores.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return sum(scores) / len(scores)


def test_macro_f1_confusion_example():
    preds = np.array([0, 0, 1, 1, 2])
    labels = np.array([0, 1, 1, 2, 2])
    # per class: F1 = 2/3, 1/2, 2/3
    assert macro_f1(preds, labels) == pytest.approx(11.0 / 18.0, rel=1e-12)


def test_macro_f1_extremes():
    y = np.array([0, 1, 2, 0, 1, 2])
    assert macro_f1(y, y) == 1.0
    assert macro_f1((y + 1) % 3, y) == 0.0


def test_macro_f1_averages_over_label_classes_only():
    # predictions stray into class 9, which never occurs in the labels;
    # the mean still runs over the two label classes
    preds = np.array([0, 9, 1, 9])
    labels = np.array([0, 0, 1, 1])
    # class 0: P=1, R=1/2, F1=2/3; class 1 likewise
    assert macro_f1(preds, labels) == pytest.approx(2.0 / 3.0, rel=1e-12)


def test_macro_f1_rejects_bad_shapes():
    with pytest.raises(ValueError):
        macro_f1(np.array([0, 1]), np.array([0]))
    with pytest.raises(ValueError):
        macro_f1(np.array([], dtype=int), np.array([], dtype=int))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(2, 5), st.integers(0, 10_000))
def test_macro_f1_matches_reference(n, k, seed):
    rng = np.random.default_rng(seed)
    preds = rng.integers(0, k, size=n)
    labels = rng.integers(0, k, size=n)
    assert macro_f1(preds, labels) == pytest.approx(macro_f1_ref(preds, labels),
                                                    rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_macro_f1_is_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    preds = rng.integers(0, 4, size=n)
    labels = rng.integers(0, 4, size=n)
    perm = rng.permutation(n)
    assert macro_f1(preds, labels) == pytest.approx(
        macro_f1(preds[perm], labels[perm]), rel=1e-12)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def _model(num_classes=2, seed=0, dropout=0.3):
    spec = ArchSpec(kind="cnn", cnn_layers=(CnnLayer(8, 5, dropout),),
                    num_classes=num_classes)
    return instantiate(spec, num_classes, seed)


def test_predict_is_batch_size_invariant():
    model = _model()
    x = np.random.default_rng(0).standard_normal((10, 3, 100))
    np.testing.assert_array_equal(predict(model, x, batch_size=3),
                                  predict(model, x, batch_size=256))


def test_predict_restores_deterministic_flag():
    model = _model()
    model.deterministic = False
    predict(model, np.zeros((2, 3, 100)))
    assert model.deterministic is False
    model.deterministic = True
    predict(model, np.zeros((2, 3, 100)))
    assert model.deterministic is True


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def _synthetic_splits(k=2, users=6, duration=60.0, data_seed=42, split_seed=7,
                      jitter=0.0):
    recs = generate_synthetic(k, users, duration, rng_seed=data_seed,
                              jitter=jitter)
    datasets, _ = build_datasets(recs, split_seed)
    return datasets


def test_training_learns_separable_classes():
    datasets = _synthetic_splits()
    model = _model(num_classes=2, seed=11)
    record = train(model, datasets,
                   TrainConfig(epochs=10, lr=0.01, batch_size=32, seed=5))
    assert record.train_loss_history[0] > record.train_loss_history[1] \
        > record.train_loss_history[2]
    assert record.best_val_f1 > 0.95
    assert record.test_f1_at_best_val > 0.95
    assert record.epochs_completed == 10
    assert not record.diverged
    assert record.wall_time_s > 0


def test_returned_model_holds_best_checkpoint():
    datasets = _synthetic_splits()
    model = _model(num_classes=2, seed=3)
    record = train(model, datasets,
                   TrainConfig(epochs=4, lr=0.01, batch_size=32, seed=1))
    assert evaluate_f1(model, datasets["val"]) == record.best_val_f1
    assert max(record.val_f1_history) == record.best_val_f1
    assert len(record.val_f1_history) == record.epochs_completed + 1


def test_training_is_deterministic():
    datasets = _synthetic_splits()
    a = train(_model(seed=9), datasets,
              TrainConfig(epochs=3, lr=0.005, batch_size=32, seed=2))
    b = train(_model(seed=9), datasets,
              TrainConfig(epochs=3, lr=0.005, batch_size=32, seed=2))
    assert a.train_loss_history == b.train_loss_history
    assert a.val_f1_history == b.val_f1_history
    assert a.test_f1_at_best_val == b.test_f1_at_best_val


def test_zero_epochs_reports_untrained_scores():
    datasets = _synthetic_splits()
    model = _model(seed=1)
    before = model.params.state()
    record = train(model, datasets, TrainConfig(epochs=0, seed=0))
    assert record.epochs_completed == 0
    assert record.val_f1_history == [record.best_val_f1]
    assert record.train_loss_history == []
    for p in model.params:
        np.testing.assert_array_equal(p.data, before[p.name])


def test_untrained_val_f1_competes_as_checkpoint():
    datasets = _synthetic_splits()
    model = _model(seed=1)
    record = train(model, datasets,
                   TrainConfig(epochs=2, lr=0.003, batch_size=32, seed=0))
    assert record.best_val_f1 >= record.val_f1_history[0]


def test_divergence_is_flagged_and_initial_state_kept():
    datasets = _synthetic_splits()
    bad_windows = datasets["train"].windows.copy()
    bad_windows[0, 0, 0] = np.inf
    broken = dict(datasets)
    broken["train"] = WindowedDataset(bad_windows, datasets["train"].labels,
                                      datasets["train"].user_ids, "train")
    model = _model(seed=2)
    before = model.params.state()
    with np.errstate(invalid="ignore", over="ignore"):
        record = train(model, broken,
                       TrainConfig(epochs=5, lr=0.01, batch_size=len(broken["train"]),
                                   seed=0))
    assert record.diverged
    assert record.epochs_completed == 0
    assert record.train_loss_history == []
    for p in model.params:  # best-so-far = the untrained checkpoint
        np.testing.assert_array_equal(p.data, before[p.name])
    assert np.isfinite(record.test_f1_at_best_val)


def test_train_requires_all_splits():
    datasets = _synthetic_splits()
    partial = {"train": datasets["train"], "val": datasets["val"]}
    with pytest.raises(ValueError, match="test"):
        train(_model(), partial, TrainConfig(epochs=1))


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

def test_run_record_roundtrip_with_degenerate_scores():
    record = RunRecord(
        spec_hash="abc", seed=7, best_val_f1=0.5, test_f1_at_best_val=0.4,
        epochs_completed=3, wall_time_s=1.5, diverged=True,
        val_f1_history=[0.1, 0.5], train_loss_history=[2.0, 1.0],
        proxy_scores={"snip": 12.5, "jacob_cov": float("-inf")},
    )
    encoded = json.dumps(record.to_dict(), allow_nan=False)  # strict JSON
    back = RunRecord.from_dict(json.loads(encoded))
    assert back == record
    assert back.proxy_scores["jacob_cov"] == float("-inf")


def test_run_record_from_sparse_dict_uses_defaults():
    back = RunRecord.from_dict({
        "spec_hash": "x", "seed": 0, "best_val_f1": 0.2,
        "test_f1_at_best_val": 0.1, "epochs_completed": 0, "wall_time_s": 0.0,
    })
    assert back.diverged is False
    assert back.val_f1_history == [] and back.proxy_scores == {}

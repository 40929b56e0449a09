import math

import numpy as np
import pytest

from loranlab.activations import identity, sigmoid, sinter
from loranlab.adapters import init_adapter, init_loran, trainable_parameters
from loranlab.engine import Tensor
from loranlab.rng import SplitMix64
from loranlab.tasks import BlobsTask, TeacherTask, build_toy_classifier
from loranlab.training import (
    Optimizer,
    RunReport,
    TrainConfig,
    adamw_state,
    adamw_step,
    train,
    variance_report,
)


def scalar_adamw_oracle(w0, grad_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Line-by-line scalar AdamW simulation, independent of the package."""
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        w -= lr * mhat / (math.sqrt(vhat) + eps)
    return w


# --- adamw -------------------------------------------------------------------


def test_zero_gradients_leave_parameters_unchanged():
    p = Tensor(SplitMix64(1).normal_matrix(3, 3), requires_grad=True)
    before = p.data.copy()
    cfg = TrainConfig(lr=0.1)
    state = adamw_state([p])
    adamw_step([p], [np.zeros_like(p.data)], state, cfg)
    assert np.array_equal(p.data, before)


def test_first_step_is_signlike():
    # With fresh state, mhat = g and vhat = g^2, so the update is
    # -lr * g / (|g| + eps) ~ -lr * sign(g).
    g = np.array([[0.3, -2.0, 1e-3]])
    p = Tensor(np.zeros((1, 3)), requires_grad=True)
    cfg = TrainConfig(lr=0.05)
    adamw_step([p], [g], adamw_state([p]), cfg)
    expected = -cfg.lr * g / (np.abs(g) + cfg.eps)
    assert np.max(np.abs(p.data - expected)) < 1e-12
    assert np.max(np.abs(p.data + cfg.lr * np.sign(g))) < 1e-6


def test_hundred_steps_on_quadratic_reaches_near_zero():
    # f(w) = w^2 / 2, grad = w, from w = 1 at lr = 0.05.
    p = Tensor(np.array([1.0]), requires_grad=True)
    cfg = TrainConfig(lr=0.05)
    state = adamw_state([p])
    trajectory = []
    for _ in range(100):
        adamw_step([p], [p.data.copy()], state, cfg)
        trajectory.append(float(p.data[0]))
    assert abs(trajectory[-1]) < 0.05
    oracle = scalar_adamw_oracle(1.0, lambda w: w, lr=0.05, steps=100)
    assert abs(trajectory[-1] - oracle) < 1e-12


def test_weight_decay_is_decoupled():
    p = Tensor(np.array([2.0]), requires_grad=True)
    cfg = TrainConfig(lr=0.1, weight_decay=0.5)
    adamw_step([p], [np.zeros(1)], adamw_state([p]), cfg)
    # Zero gradient: only the decay term moves the weight.
    assert abs(p.data[0] - (2.0 - 0.1 * 0.5 * 2.0)) < 1e-15


def test_optimizer_requires_populated_grads():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = Optimizer([p], TrainConfig())
    with pytest.raises(RuntimeError):
        opt.step()


def test_sgd_step():
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    p.grad = np.array([0.5, 0.5])
    opt = Optimizer([p], TrainConfig(optimizer="sgd", lr=0.1))
    opt.step()
    assert np.allclose(p.data, [0.95, -1.05], atol=1e-15)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgdm")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    TrainConfig(lr=0.0)  # frozen-run diagnostic is allowed


# --- train loop ---------------------------------------------------------------


def blobs_setup(seed=0):
    task = BlobsTask(classes=4, n_per_class=20, dim=16, spread=6.0, seed=20)
    model = build_toy_classifier(16, 32, 4, seed=101)
    adapter = init_loran(32, 16, 8, alpha=16.0, seed=seed, activation=identity())
    return model, adapter, task


def test_zero_learning_rate_changes_nothing():
    model, adapter, task = blobs_setup()
    before = [p.data.copy() for p in trainable_parameters(adapter)]
    report = train(model, adapter, task, TrainConfig(lr=0.0, epochs=3, seed=5))
    for p, b in zip(trainable_parameters(adapter), before):
        assert np.array_equal(p.data, b)
    losses = [l for l in report.epoch_losses if l is not None]
    assert len(set(losses)) == 1  # constant loss at every epoch


def test_same_seed_reproduces_the_run_exactly():
    def run():
        model, adapter, task = blobs_setup(seed=3)
        report = train(model, adapter, task, TrainConfig(lr=1e-3, epochs=5, seed=9))
        return report, [p.data.copy() for p in trainable_parameters(adapter)]

    r1, p1 = run()
    r2, p2 = run()
    assert r1.epoch_losses == r2.epoch_losses
    assert r1.final_metric == r2.final_metric
    assert all(np.array_equal(a, b) for a, b in zip(p1, p2))
    d1, d2 = r1.to_dict(), r2.to_dict()
    d1.pop("wall_seconds"), d2.pop("wall_seconds")
    assert d1 == d2


def test_report_round_trips_through_json():
    model, adapter, task = blobs_setup()
    report = train(model, adapter, task, TrainConfig(lr=1e-3, epochs=3, seed=1))
    again = RunReport.from_json(report.to_json())
    assert again.to_dict() == report.to_dict()
    assert len(report.epoch_losses) == 3


def test_blobs_training_reaches_high_accuracy():
    # Rank-8 adapter on the feature layer: >= 95% train accuracy in 50 epochs.
    model, adapter, task = blobs_setup(seed=0)
    report = train(model, adapter, task, TrainConfig(lr=2e-3, epochs=50, seed=0))
    assert report.metric_name == "train_accuracy"
    assert report.final_metric >= 0.95
    assert not report.diverged


def test_frozen_base_is_untouched_by_training():
    model, adapter, task = blobs_setup(seed=4)
    before = model.frozen_hash()
    report = train(model, adapter, task, TrainConfig(lr=5e-3, epochs=10, seed=2))
    assert model.frozen_hash() == before
    assert report.frozen_hash == before


def test_divergence_is_flagged_not_raised():
    task = TeacherTask(d=8, k=8, target_rank=4, seed=1)
    adapter = init_adapter(8, 8, 4, alpha=8.0, seed=2)
    cfg = TrainConfig(optimizer="sgd", lr=1e8, epochs=60, seed=0)
    report = train(None, adapter, task, cfg)
    assert report.diverged
    assert report.diverged_epoch is not None
    assert report.final_metric is None
    assert len(report.epoch_losses) == 60
    assert report.epoch_losses[-1] is None
    # Report still serialises cleanly.
    RunReport.from_json(report.to_json())


def test_lora_and_identity_loran_have_bitwise_identical_traces():
    task = TeacherTask(d=12, k=12, target_rank=6, seed=5)
    cfg = TrainConfig(lr=0.01, epochs=40, seed=7)

    plain = init_adapter(12, 12, 4, alpha=8.0, seed=6)
    report_plain = train(None, plain, task, cfg)

    wrapped = init_loran(12, 12, 4, alpha=8.0, seed=6, activation=identity())
    report_wrapped = train(None, wrapped, task, cfg)

    assert report_plain.epoch_losses == report_wrapped.epoch_losses
    assert report_plain.final_metric == report_wrapped.final_metric
    assert np.array_equal(plain.b.data, wrapped.inner.b.data)
    assert np.array_equal(plain.a.data, wrapped.inner.a.data)


def test_loss_comparison_is_reported_side_by_side():
    # Identity vs sinter mean losses are both recorded; no ordering enforced.
    task = TeacherTask(d=12, k=12, target_rank=6, seed=5)
    cfg = TrainConfig(lr=0.01, epochs=30, seed=7)
    reports = {}
    for name, spec in (("identity", identity()), ("sinter", sinter())):
        adapter = init_loran(12, 12, 4, alpha=8.0, seed=6, activation=spec)
        reports[name] = train(None, adapter, task, cfg)
    for report in reports.values():
        assert all(l is not None for l in report.epoch_losses)
    assert reports["identity"].metric_name == reports["sinter"].metric_name


def test_eval_trace_cadence():
    model, adapter, task = blobs_setup(seed=1)
    report = train(model, adapter, task, TrainConfig(lr=1e-3, epochs=6, seed=3, eval_every=2))
    assert [e for e, _ in report.eval_trace] == [1, 3, 5]


def test_sigmoid_blobs_run_documents_the_failure_mode():
    task = BlobsTask(classes=4, n_per_class=20, dim=16, spread=6.0, seed=20)
    model = build_toy_classifier(16, 32, 4, seed=101)
    adapter = init_loran(32, 16, 8, alpha=16.0, seed=0, activation=sigmoid(),
                         scale_inside=False)
    report = train(model, adapter, task, TrainConfig(lr=2e-4, epochs=25, seed=0))
    assert not report.diverged
    assert report.final_metric < 0.6  # nowhere near the healthy baseline


# --- variance ------------------------------------------------------------------


def fake_report(metric, seed=0, diverged=False):
    return RunReport(
        config={}, seed=seed, epoch_losses=[1.0], final_metric=metric,
        metric_name="m", diverged=diverged, diverged_epoch=None,
        wall_seconds=0.0, frozen_hash="x",
    )


def test_variance_hand_checked():
    groups = {"a": [fake_report(m) for m in (1.0, 2.0, 3.0)]}
    out = variance_report(groups)
    assert out["a"]["variance"] == 1.0
    assert out["a"]["mean"] == 2.0


def test_variance_of_identical_reports_is_zero():
    groups = {"a": [fake_report(0.7) for _ in range(5)]}
    assert variance_report(groups)["a"]["variance"] == 0.0


def test_variance_matches_two_pass_oracle():
    rng = SplitMix64(44)
    for trial in range(20):
        metrics = [rng.normal() for _ in range(2 + rng.next_below(10))]
        out = variance_report({"g": [fake_report(m) for m in metrics]})
        mean = sum(metrics) / len(metrics)
        oracle = sum((m - mean) ** 2 for m in metrics) / (len(metrics) - 1)
        assert abs(out["g"]["variance"] - oracle) < 1e-12


def test_variance_refuses_single_run():
    with pytest.raises(ValueError, match="at least 2"):
        variance_report({"a": [fake_report(1.0)]})
    # A diverged run does not count toward the minimum.
    with pytest.raises(ValueError):
        variance_report({"a": [fake_report(1.0), fake_report(None, diverged=True)]})


def test_variance_counts_diverged_runs():
    groups = {"a": [fake_report(1.0), fake_report(2.0), fake_report(None, diverged=True)]}
    out = variance_report(groups)
    assert out["a"]["n"] == 2
    assert out["a"]["n_diverged"] == 1

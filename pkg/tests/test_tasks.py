import logging
from types import SimpleNamespace

import numpy as np
import pytest

from bfreg.checkpoint import save_checkpoint
from bfreg.data import ExpressionDataset, SeriesDataset, make_split, make_stratified_split
from bfreg.errors import ConfigError, DatasetError, ShapeError, TrainingError
from bfreg.knowledge import remove_node_edges
from bfreg.model import BFRegModel, HeadSpec, ModelConfig
from bfreg.numerics import make_generator
from bfreg.synth import SynthSpec, gen_expression_static, gen_knowledge, gen_timeseries
from bfreg.tasks import (
    ImputationTask, TrainConfig, Windows, draw_hidden, imputation_loss, macro_auc, mask_expression,
    masked_mse, mean_series_pcc, minibatches, pcc, persistence_mse, pretrain_finetune, select_alpha,
    train_classification, train_forecast_recurrent, train_forecast_simultaneous, train_imputation,
)
from bfreg.tasks.base import FitResult
from bfreg.tasks.finetune import FINETUNE_HARNESSES

GENES = ("g1", "g2", "g3")


def gene_model(kb, output_size, kind="mlp", variant="basic", alpha=0.0, seed=0):
    config = ModelConfig(variant=variant, d=2, alpha=alpha, levels=("gene",),
                         head=HeadSpec(output_size, hidden=(8,), kind=kind))
    return BFRegModel(config, kb, make_generator(seed))


def expression(n=12, seed=0, labels=None, mask=None):
    values = make_generator(seed).uniform(0.1, 1.0, size=(n, 3))
    return ExpressionDataset(values, GENES, labels, mask)


def constant_series(n_series=6, steps=4):
    values = np.tile(np.array([0.5, -0.2, 0.3]), (n_series, steps, 1))
    return SeriesDataset(values, GENES, np.arange(steps, dtype=float))


# --- metrics ---

def test_mask_expression():
    np.testing.assert_array_equal(mask_expression([1, 2, 3], [1]), [1, 0, 3])
    np.testing.assert_array_equal(mask_expression([1, 2, 3], []), [1, 2, 3])
    np.testing.assert_array_equal(mask_expression([1, 2, 3], [0, 1, 2]), [0, 0, 0])
    with pytest.raises(ShapeError):
        mask_expression([1, 2, 3], [5])


def test_imputation_loss_ignores_zero_targets():
    assert imputation_loss([5, 2, 4], [0, 2, 3]) == pytest.approx(0.5)
    assert imputation_loss([9, 9, 1], [0, 0, 1]) == 0.0
    with pytest.raises(DatasetError):
        imputation_loss([1, 1], [0, 0])


def test_macro_auc_hand_case():
    labels = np.array([0, 0, 1, 1])
    scores = np.array([[0.9, 0.1], [0.8, 0.6], [0.1, 0.4], [0.2, 0.9]])
    # class 0 separates perfectly; class 1 has one inverted pair of four
    assert macro_auc(scores, labels) == pytest.approx(0.875)


def test_macro_auc_ties_and_separation():
    labels = np.array([0, 1, 0, 1])
    assert macro_auc(np.full((4, 2), 0.5), labels) == pytest.approx(0.5)
    assert macro_auc(np.eye(2)[labels], labels) == 1.0


def test_macro_auc_absent_class():
    with pytest.raises(DatasetError, match="absent"):
        macro_auc(np.ones((3, 3)), [0, 1, 1])


def test_pcc():
    assert pcc([1, 2, 4], [1, 2, 3]) == pytest.approx(0.982, abs=1e-3)
    assert pcc([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(DatasetError):
        pcc([1, 1, 1], [1, 2, 3])
    assert mean_series_pcc([[1, 1], [1, 2]], [[1, 2], [1, 2]]) == pytest.approx(1.0)
    assert mean_series_pcc([[1, 1]], [[1, 2]]) is None


def test_masked_mse():
    assert masked_mse([1.0, 5.0], [0.0, 0.0], [1.0, 0.0]) == 1.0
    with pytest.raises(DatasetError):
        masked_mse([1.0], [0.0], [0.0])


def test_minibatches_never_leave_a_single_sample():
    batches = minibatches(np.arange(7), 3)
    assert [len(b) for b in batches] == [3, 4]


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(mask_probability=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(loss_support="all")


# --- imputation ---

def test_zero_epochs_leave_model_unchanged(kb):
    model = gene_model(kb, 3)
    before = model.snapshot()
    result = train_imputation(model, expression(), TrainConfig(epochs=0), make_generator(1))
    assert result.losses == []
    for name, value in before.items():
        np.testing.assert_array_equal(model.snapshot()[name], value)


def test_imputation_runs_and_reports(kb):
    dataset = expression()
    split = make_split(dataset.n_samples, make_generator(2))
    result = train_imputation(gene_model(kb, 3), dataset, TrainConfig(lr=1e-2, epochs=5, batch_size=4),
                              make_generator(3), split=split)
    assert len(result.losses) == 5
    assert len(result.fit.val_losses) == 5
    assert 0 <= result.fit.best_epoch < 5
    assert set(result.metrics) == {"train_mse", "test_mse"}
    assert result.hidden.shape == dataset.values.shape


def test_hidden_entries_are_measured_entries(kb):
    mask = np.ones((12, 3))
    mask[:, 2] = 0.0
    result = train_imputation(gene_model(kb, 3), expression(mask=mask), TrainConfig(epochs=1, batch_size=6),
                              make_generator(4))
    assert not result.hidden[:, 2].any()


def test_unmeasured_sample_is_skipped(kb, caplog):
    mask = np.ones((12, 3))
    mask[5] = 0.0
    with caplog.at_level(logging.WARNING):
        train_imputation(gene_model(kb, 3), expression(mask=mask), TrainConfig(epochs=1, batch_size=6),
                         make_generator(5))
    assert "sample 5 has no measured entries" in caplog.text


def test_hidden_loss_support_falls_back_to_measured(kb):
    hidden = np.zeros((12, 3))
    hidden[:6, 1] = 1.0
    task = ImputationTask(gene_model(kb, 3), expression(), TrainConfig(loss_support="hidden"),
                          make_generator(0), hidden=hidden)
    np.testing.assert_array_equal(task.loss_support(np.arange(6)), hidden[:6])
    np.testing.assert_array_equal(task.loss_support(np.arange(6, 12)), np.ones((6, 3)))
    assert not task.inputs[:6, 1].any()

    measured = ImputationTask(gene_model(kb, 3), expression(), TrainConfig(), make_generator(0), hidden=hidden)
    np.testing.assert_array_equal(measured.loss_support(np.arange(6)), np.ones((6, 3)))


def test_imputation_is_reproducible(kb):
    def run():
        model = gene_model(kb, 3, seed=7)
        train_imputation(model, expression(), TrainConfig(lr=1e-2, epochs=3, batch_size=4), make_generator(8))
        return model.trunk_hash()

    assert run() == run()


@pytest.mark.slow
def test_imputation_learns_identity(kb):
    empty = kb.select_levels(["gene"])
    for gene in GENES:
        empty = remove_node_edges(empty, "gene", gene)
    model = BFRegModel(ModelConfig(d=4, levels=("gene",), head=HeadSpec(3, hidden=(32,))), empty,
                       make_generator(0))
    config = TrainConfig(lr=1e-2, epochs=500, batch_size=10, mask_probability=0.0)
    result = train_imputation(model, expression(n=20), config, make_generator(1))
    assert result.losses[-1] < 1e-2


@pytest.mark.slow
def test_knowledge_improves_imputation():
    head = HeadSpec(30, hidden=(64,))
    configs = {
        "enhanced": ModelConfig(variant="enhanced", d=4, alpha=1e-2, levels=("gene",), head=head),
        "basic": ModelConfig(variant="basic", d=4, levels=("gene",), head=head),
        "perceptron": ModelConfig.perceptron(head),
    }
    errors = {name: [] for name in configs}
    for seed in range(5):
        spec = SynthSpec(genes=30, edge_density=0.1, beta=0.25, seed=seed)
        kb = gen_knowledge(spec)
        dataset = gen_expression_static(kb, spec, samples=2000)
        split = make_split(dataset.n_samples, make_generator(seed))
        hidden = draw_hidden(dataset.mask, 0.6, make_generator(seed + 100))
        config = TrainConfig(lr=1e-2, epochs=15, batch_size=64, loss_support="hidden")
        for name, model_config in configs.items():
            model = BFRegModel(model_config, kb, make_generator(seed))
            result = train_imputation(model, dataset, config, make_generator(seed + 1), split=split, hidden=hidden)
            errors[name].append(result.metrics["test_mse"])
    mean = {name: np.mean(values) for name, values in errors.items()}
    assert mean["enhanced"] <= mean["basic"] <= mean["perceptron"]


# --- classification ---

def separable(n=16):
    labels = np.array([0, 1] * (n // 2))
    values = make_generator(0).uniform(0.0, 0.2, size=(n, 3))
    values[:, 0] += labels
    return ExpressionDataset(values, GENES, labels)


def test_single_class_is_rejected(kb):
    dataset = ExpressionDataset(np.ones((4, 3)), GENES, np.zeros(4))
    with pytest.raises(DatasetError):
        train_classification(gene_model(kb, 1), dataset, TrainConfig(epochs=1), make_generator(0))


def test_head_must_match_classes(kb):
    with pytest.raises(ConfigError):
        train_classification(gene_model(kb, 3), separable(), TrainConfig(epochs=1), make_generator(0))


def test_classification_reports_auc(kb):
    dataset = separable(20)
    split = make_stratified_split(dataset.labels, make_generator(1))
    result = train_classification(gene_model(kb, 2), dataset, TrainConfig(lr=1e-2, epochs=3, batch_size=4),
                                  make_generator(2), split=split)
    assert 0.0 <= result.metrics["train_auc"] <= 1.0
    assert "test_auc" in result.metrics


@pytest.mark.slow
def test_classification_separates_separable_classes(kb):
    result = train_classification(gene_model(kb, 2), separable(), TrainConfig(lr=1e-2, epochs=200, batch_size=8),
                                  make_generator(0))
    assert result.metrics["train_auc"] >= 0.99


# --- forecasting ---

def test_windows():
    windows = Windows.of([0, 2], n_steps=4, horizon=2)
    assert len(windows) == 4
    np.testing.assert_array_equal(windows.series, [0, 0, 2, 2])
    np.testing.assert_array_equal(windows.starts, [0, 1, 0, 1])


def test_horizon_must_fit(kb):
    series = constant_series(steps=3)
    for horizon in (0, 3):
        with pytest.raises(DatasetError):
            train_forecast_simultaneous(gene_model(kb, 3 * max(horizon, 1)), series, horizon,
                                        TrainConfig(epochs=1), make_generator(0))


def test_simultaneous_head_size(kb):
    with pytest.raises(ConfigError):
        train_forecast_simultaneous(gene_model(kb, 3), constant_series(), 2, TrainConfig(epochs=1),
                                    make_generator(0))


def test_recurrent_needs_recurrent_head(kb):
    with pytest.raises(ConfigError):
        train_forecast_recurrent(gene_model(kb, 3), constant_series(), 1, TrainConfig(epochs=1),
                                 make_generator(0))


def test_persistence_is_exact_on_constant_series():
    assert persistence_mse(constant_series(), [0, 1], 2) == 0.0


def test_forecasters_train_and_report(kb):
    series = constant_series()
    split = make_split(series.n_series, make_generator(0))
    config = TrainConfig(lr=1e-2, epochs=2, batch_size=4)
    simultaneous = train_forecast_simultaneous(gene_model(kb, 6), series, 2, config, make_generator(1), split=split)
    recurrent = train_forecast_recurrent(gene_model(kb, 3, kind="recurrent"), series, 2, config,
                                         make_generator(1), split=split)
    for result in (simultaneous, recurrent):
        assert len(result.losses) == 2
        assert {"train_mse", "test_mse", "test_persistence_mse"} <= set(result.metrics)
        # constant targets have no variance
        assert result.metrics["test_pcc"] is None


@pytest.mark.slow
def test_simultaneous_forecast_fits_constant_series(kb):
    result = train_forecast_simultaneous(gene_model(kb, 3), constant_series(), 1,
                                         TrainConfig(lr=1e-2, epochs=300, batch_size=6), make_generator(0))
    assert result.losses[-1] < 1e-3


@pytest.mark.slow
@pytest.mark.parametrize("trainer,kind", [
    (train_forecast_simultaneous, "mlp"),
    (train_forecast_recurrent, "recurrent"),
])
def test_forecast_beats_last_value_baseline(kb, trainer, kind):
    config = TrainConfig(lr=1e-2, epochs=300, batch_size=16)
    model_mse, persistence = [], []
    for seed in range(3):
        series = gen_timeseries(kb, SynthSpec(rho=0.5, beta=0.3, noise=0.0), 30, 6, make_generator(seed))
        split = make_split(series.n_series, make_generator(seed + 10))
        result = trainer(gene_model(kb, 3, kind=kind, seed=seed), series, 1, config,
                         make_generator(seed + 20), split=split)
        model_mse.append(result.metrics["test_mse"])
        persistence.append(result.metrics["test_persistence_mse"])
    assert np.mean(model_mse) < np.mean(persistence)


# --- fine-tuning and alpha selection ---

def test_finetune_keeps_trunk(kb, tmp_path):
    model = gene_model(kb, 3)
    train_imputation(model, expression(), TrainConfig(lr=1e-2, epochs=2, batch_size=4), make_generator(0))
    path = save_checkpoint(model, tmp_path / "pretrained.npz")
    fresh = gene_model(kb, 3, seed=5)
    result = pretrain_finetune(fresh, HeadSpec(2, hidden=(4,)), "classify", separable(),
                               TrainConfig(lr=1e-2, epochs=2, batch_size=4),
                               generator=make_generator(1), checkpoint=path)
    assert result.trunk_unchanged
    assert result.trunk_hash_before == model.trunk_hash()
    assert fresh.params.trainable_names() == fresh.params.names()


def test_finetune_unknown_task(kb):
    with pytest.raises(ConfigError):
        pretrain_finetune(gene_model(kb, 3), HeadSpec(2), "trajectory", generator=make_generator(0))


def test_finetune_rejects_a_changed_trunk(kb, monkeypatch):
    def tampering_harness(model, *args, generator, trunk_mode, **kwargs):
        name = model.trunk_names()[0]
        model.params.set(name, model.params[name] + 1.0)
        return SimpleNamespace(fit=FitResult(), metrics={})

    monkeypatch.setitem(FINETUNE_HARNESSES, "impute", tampering_harness)
    with pytest.raises(TrainingError, match="trunk parameters changed"):
        pretrain_finetune(gene_model(kb, 3), HeadSpec(3, hidden=(4,)), "impute", generator=make_generator(0))


def test_select_alpha_picks_smallest_validation_loss(kb):
    dataset = expression()
    split = make_split(dataset.n_samples, make_generator(0))
    config = TrainConfig(lr=1e-2, epochs=2, batch_size=4)
    selection = select_alpha(
        lambda alpha: gene_model(kb, 3, variant="enhanced", alpha=alpha),
        lambda model: train_imputation(model, dataset, config, make_generator(1), split=split),
        grid=(0.0, 1e-3))
    assert set(selection.val_losses) == {0.0, 1e-3}
    assert selection.val_losses[selection.alpha] == min(selection.val_losses.values())


def test_select_alpha_needs_validation(kb):
    with pytest.raises(ConfigError):
        select_alpha(lambda alpha: gene_model(kb, 3, variant="enhanced", alpha=alpha),
                     lambda model: train_imputation(model, expression(), TrainConfig(epochs=1, batch_size=6),
                                                    make_generator(0)),
                     grid=(0.0,))


@pytest.mark.slow
def test_finetuning_trains_the_head(kb):
    model = gene_model(kb, 3)
    result = pretrain_finetune(model, HeadSpec(3, hidden=(8,)), "impute", expression(n=20),
                               TrainConfig(lr=1e-2, epochs=100, batch_size=10, mask_probability=0.0),
                               generator=make_generator(3))
    assert result.trunk_unchanged
    assert result.fit.losses[-1] < result.fit.losses[0]

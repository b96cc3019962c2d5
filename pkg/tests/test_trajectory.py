import json
import math

import numpy as np
import pytest

from bfreg.errors import ConfigError, DatasetError, IntegrationError, KnowledgeError
from bfreg.knowledge import remove_node_edges
from bfreg.numerics import make_generator, matmul
from bfreg.trajectory import (
    CNFConfig, PieceSpec, StructuredField, TrajectoryBatch, gene_structure, integrate_ode,
    interval_distances, jacobian_trace, load_trajectory, log_density_change, simulate, time_features,
    train_cnf, wasserstein_distance, wasserstein_loss, zero_field_baseline,
)

GENES = ("g1", "g2", "g3")


def unlinked(kb):
    for gene in GENES:
        kb = remove_node_edges(kb, "gene", gene)
    return kb


def linear_field(kb, w):
    """f(x) = w * (A + I) x with identity activation."""
    field = StructuredField(kb, ("intra",), hidden=1, activation="identity")
    field.set_constant(0, W=w, U=1.0)
    return field


def zero_field(kb, pieces=("intra",)):
    field = StructuredField(kb, pieces, generator=make_generator(0))
    field.params.restore(field.zero_params())
    return field


# --- integration ---

def test_linear_decay_matches_exponential():
    x = integrate_ode(np.array([[1.0]]), 0.0, 1.0, lambda x, t: -x, steps=100)
    assert x.numpy()[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-6)


def test_constant_and_zero_fields_are_exact():
    x0 = np.array([[0.5, -1.0]])
    np.testing.assert_allclose(integrate_ode(x0, 0.0, 1.0, lambda x, t: x * 0.0).numpy(), x0)
    shifted = integrate_ode(x0, 0.0, 1.0, lambda x, t: x * 0.0 + np.array([[2.0, -3.0]]), steps=7)
    np.testing.assert_allclose(shifted.numpy(), [[2.5, -4.0]])


def test_backward_integration_undoes_forward():
    forward = integrate_ode(np.array([[1.0, 2.0]]), 0.0, 1.0, lambda x, t: -x).numpy()
    back = integrate_ode(forward, 1.0, 0.0, lambda x, t: -x).numpy()
    np.testing.assert_allclose(back, [[1.0, 2.0]], atol=1e-6)


def test_integration_errors():
    assert integrate_ode(np.ones((1, 2)), 1.0, 1.0, lambda x, t: x).shape == (1, 2)
    with pytest.raises(ConfigError):
        integrate_ode(np.ones((1, 2)), 0.0, 1.0, lambda x, t: x, steps=0)
    with pytest.raises(IntegrationError):
        integrate_ode(np.array([[1.0]]), 0.0, 1.0, lambda x, t: x * 1e200 * 1e200)


def test_jacobian_trace_of_linear_fields():
    x = make_generator(0).normal(size=(4, 3))
    np.testing.assert_allclose(jacobian_trace(lambda s, t: s * 2.0, x, 0.0), np.full(4, 6.0))
    upper = np.triu(np.ones((3, 3)), 1)
    np.testing.assert_allclose(jacobian_trace(lambda s, t: matmul(s, upper), x, 0.0), np.zeros(4))


def test_log_density_change():
    x0 = make_generator(1).normal(size=(2, 3))
    x, delta = log_density_change(x0, 0.0, 1.0, lambda s, t: -s)
    # trace is -3 everywhere and the density change integrates its negative
    np.testing.assert_allclose(delta, [3.0, 3.0], atol=1e-9)
    np.testing.assert_allclose(x, x0 * math.exp(-1.0), atol=1e-6)

    _, still = log_density_change(x0, 0.0, 1.0, lambda s, t: s * 0.0)
    np.testing.assert_allclose(still, [0.0, 0.0])
    upper = np.triu(np.ones((3, 3)), 1)
    _, sheared = log_density_change(x0, 0.0, 1.0, lambda s, t: matmul(s, upper), steps=10)
    np.testing.assert_allclose(sheared, [0.0, 0.0], atol=1e-12)


# --- transport ---

def test_wasserstein_hand_cases():
    assert wasserstein_distance([0.0], [2.0]) == pytest.approx(2.0)
    assert wasserstein_distance([0.0, 2.0], [1.0, 3.0]) == pytest.approx(1.0)
    P = make_generator(0).normal(size=(6, 2))
    assert wasserstein_distance(P, P[::-1]) == pytest.approx(0.0)


def test_wasserstein_errors():
    with pytest.raises(DatasetError, match="empty"):
        wasserstein_distance(np.zeros((0, 2)), np.zeros((1, 2)))
    with pytest.raises(DatasetError, match="dimensions differ"):
        wasserstein_distance(np.zeros((2, 2)), np.zeros((2, 3)))


def test_unequal_sample_counts_are_subsampled():
    distance = wasserstein_distance(np.zeros((5, 1)), np.ones((3, 1)), make_generator(0))
    assert distance == pytest.approx(1.0)


def test_wasserstein_loss_matches_distance():
    P = make_generator(2).normal(size=(5, 2))
    Q = make_generator(3).normal(size=(5, 2))
    assert wasserstein_loss(P, Q).item() == pytest.approx(wasserstein_distance(P, Q), abs=1e-5)


# --- fields ---

def test_piece_spec_parsing():
    assert PieceSpec.parse("intra") == PieceSpec("intra")
    assert PieceSpec.parse("mapped:protein") == PieceSpec("mapped", "protein")
    assert str(PieceSpec("mapped", "pathway")) == "mapped:pathway"
    with pytest.raises(ConfigError):
        PieceSpec.parse("mapped")
    with pytest.raises(ConfigError):
        PieceSpec.parse("dense")


def test_time_features():
    feats = time_features(0.0, (1.0,))
    np.testing.assert_allclose(feats, [[0.0, 0.0, 1.0]])


def test_gene_structure(kb):
    np.testing.assert_array_equal(gene_structure(kb, "protein"), [[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    # every gene reaches pathway P1
    np.testing.assert_array_equal(gene_structure(kb, "pathway"), np.ones((3, 3)))
    with pytest.raises(KnowledgeError):
        gene_structure(kb, "gene")


def test_piece_boundaries(kb):
    field = StructuredField(kb, ("intra", "mapped:protein"))
    assert field.describe() == ["intra", "mapped:protein"]
    assert field.piece_index(0.0, (0.0, 1.0)) == 0
    assert field.piece_index(0.5, (0.0, 1.0)) == 1
    assert field.piece_index(1.0, (0.0, 1.0)) == 1
    with pytest.raises(IntegrationError):
        field.piece_index(1.5, (0.0, 1.0))


def test_zero_field_is_zero(kb):
    field = zero_field(kb, ("intra", "mapped:pathway"))
    x = make_generator(0).normal(size=(4, 3))
    for t in (0.1, 0.9):
        np.testing.assert_array_equal(field.bind((0.0, 1.0))(x, t).numpy(), np.zeros((4, 3)))


def test_constant_linear_field_by_hand(kb):
    field = linear_field(kb, 2.0)
    rates = field.bind((0.0, 1.0))(np.array([[1.0, 2.0, 3.0]]), 0.3).numpy()
    # (A + I) x = [x1, x1 + x2, x2 + x3]
    np.testing.assert_allclose(rates, [[2.0, 6.0, 10.0]])
    with pytest.raises(ConfigError, match="no weight"):
        field.set_constant(0, V=1.0)


def test_field_rejects_wrong_gene_count(kb):
    with pytest.raises(ConfigError):
        zero_field(kb).bind((0.0, 1.0))(np.ones((1, 4)), 0.0)


# --- flows ---

def snapshot_batch(shift=0.0, n=16, seed=0):
    generator = make_generator(seed)
    first = generator.normal(size=(n, 3))
    second = generator.normal(size=(n, 3)) + np.array([shift, 0.0, 0.0])
    return TrajectoryBatch([0.0, 1.0], [first, second], GENES)


def test_batch_validation():
    with pytest.raises(DatasetError, match="increasing"):
        TrajectoryBatch([1.0, 0.0], [np.ones((2, 3))] * 2, GENES)
    with pytest.raises(DatasetError, match="sample sets"):
        TrajectoryBatch([0.0, 1.0], [np.ones((2, 3))], GENES)
    with pytest.raises(DatasetError, match="shape"):
        TrajectoryBatch([0.0], [np.ones((2, 2))], GENES)
    with pytest.raises(DatasetError, match="lacks"):
        snapshot_batch().align(["g1", "g9"])


def test_load_trajectory(tmp_path):
    (tmp_path / "t0.csv").write_text("g1,g2,g3\n1,2,3\n4,5,6\n")
    (tmp_path / "t1.csv").write_text("g1,g2,g3\n0,0,0\n")
    (tmp_path / "traj.json").write_text(json.dumps({"timestamps": [0, 2], "files": ["t0.csv", "t1.csv"]}))
    batch, paths = load_trajectory(tmp_path / "traj.json")
    assert batch.genes == GENES
    assert [s.shape for s in batch.samples] == [(2, 3), (1, 3)]
    assert len(paths) == 3


def test_single_timestamp_is_rejected(kb):
    batch = snapshot_batch().head(1)
    with pytest.raises(DatasetError, match="at least 2"):
        train_cnf(batch, zero_field(kb), CNFConfig(epochs=1))


def test_training_records_losses_and_best_epoch(kb):
    batch = snapshot_batch()
    config = CNFConfig(lr=1e-2, epochs=3, steps=4)
    field = config.build_field(kb, make_generator(0))
    result = train_cnf(batch, field, config, make_generator(1))
    assert len(result.losses) == 3
    assert all(len(parts) == 1 for parts in result.interval_losses)
    assert result.losses[result.best_epoch] == min(result.losses)
    assert result.baseline == pytest.approx(zero_field_baseline(batch))


def test_zero_field_distances_equal_the_baseline(kb):
    batch = snapshot_batch(shift=1.0)
    distances = interval_distances(zero_field(kb), batch, steps=2)
    assert sum(distances) == pytest.approx(zero_field_baseline(batch))


def test_simulation(kb):
    x0 = make_generator(0).normal(size=(5, 3))
    report = simulate(zero_field(kb), x0, 0.0, [1.0, 2.0], truth=[x0, x0 + 1.0])
    for prediction in report.predictions:
        np.testing.assert_allclose(prediction, x0)
    assert report.distances[0] == pytest.approx(0.0)
    assert report.rows()[1]["timestamp"] == 2.0
    assert report.mean_distance == pytest.approx(np.mean(report.distances))

    contraction = simulate(linear_field(unlinked(kb), -1.0), x0, 0.0, [0.5, 1.0])
    np.testing.assert_allclose(contraction.predictions[1], x0 * math.exp(-1.0), atol=1e-6)

    assert simulate(zero_field(kb), x0, 0.0, []).mean_distance is None
    with pytest.raises(DatasetError, match="increase"):
        simulate(zero_field(kb), x0, 1.0, [0.5])
    with pytest.raises(DatasetError):
        simulate(zero_field(kb), x0, 0.0, [1.0], truth=[])


@pytest.mark.slow
def test_flow_learns_a_shift(kb):
    batch = snapshot_batch(shift=2.0, n=64, seed=3)
    config = CNFConfig(lr=5e-2, epochs=150, steps=8)
    field = config.build_field(unlinked(kb), make_generator(0))
    result = train_cnf(batch, field, config, make_generator(1))
    after = sum(interval_distances(field, batch, steps=8))
    assert after <= 0.5 * result.baseline

import numpy as np
import pytest

from bfreg.data import ExpressionDataset
from bfreg.discovery import (
    DiscoveryConfig, edge_frequency, mean_intensity, rank_candidates, rank_edges, recall_at_k,
    run_discovery,
)
from bfreg.errors import ConfigError, DiscoveryError
from bfreg.knowledge import remove_node_edges
from bfreg.model import BFRegModel, HeadSpec, ModelConfig
from bfreg.numerics import make_generator
from bfreg.synth import SynthSpec, gen_expression_static, gen_knowledge
from bfreg.tasks import TrainConfig

NAMES = ("n1", "n2", "n3")


def test_candidates_skip_existing_edges_and_self_pairs():
    adjacency = np.zeros((3, 3))
    adjacency[1, 0] = 1.0  # n1 -> n2
    ranking = rank_candidates(np.zeros((3, 3)), adjacency, NAMES, "gene")
    assert len(ranking) == 5
    # equal intensities fall back to name order
    assert [c.edge for c in ranking] == [("n1", "n3"), ("n2", "n1"), ("n2", "n3"), ("n3", "n1"), ("n3", "n2")]
    assert [c.rank for c in ranking] == list(range(5))


def test_candidates_sorted_by_intensity():
    omega = np.zeros((3, 3))
    omega[1, 0] = 0.9  # n1 -> n2
    omega[0, 1] = 0.4  # n2 -> n1
    ranking = rank_candidates(omega, np.zeros((3, 3)), NAMES, "gene")
    assert [c.edge for c in ranking[:2]] == [("n1", "n2"), ("n2", "n1")]
    assert ranking[0].intensity == pytest.approx(0.9)


def test_candidates_restricted_to_a_node():
    ranking = rank_candidates(np.zeros((3, 3)), np.zeros((3, 3)), NAMES, "gene", restrict_to="n3")
    assert all("n3" in c.edge for c in ranking)
    assert len(ranking) == 4
    with pytest.raises(DiscoveryError, match="unknown node"):
        rank_candidates(np.zeros((3, 3)), np.zeros((3, 3)), NAMES, "gene", restrict_to="n9")


def test_edge_frequency():
    a, b = ("x", "y"), ("y", "z")
    frequency = edge_frequency([[a, b], [a], [a], [b], []])
    assert frequency[a] == pytest.approx(0.6)
    assert frequency[b] == pytest.approx(0.4)
    assert ("z", "x") not in frequency
    assert edge_frequency([[a], [a, a]])[a] == 1.0
    with pytest.raises(DiscoveryError):
        edge_frequency([])


def test_recall_at_k():
    a, b, c, d = ("a", "x"), ("b", "x"), ("c", "x"), ("d", "x")
    assert recall_at_k([a, b], [a, ("q", "r")]) == 0.5
    assert recall_at_k([a, b], [b, a]) == 1.0
    assert recall_at_k([a, b, c, d], [a, b, c]) == 0.75
    with pytest.raises(DiscoveryError):
        recall_at_k([], [a])


def test_ranking_needs_the_enhanced_variant(kb):
    model = BFRegModel(ModelConfig(d=2, levels=("gene",), head=HeadSpec(3, hidden=(2,))), kb)
    with pytest.raises(DiscoveryError, match="enhanced"):
        mean_intensity(model, np.ones((2, 3)), "gene")


def test_rank_edges_on_a_model(kb):
    config = ModelConfig(variant="enhanced", d=2, alpha=1e-3, levels=("gene",), head=HeadSpec(3, hidden=(2,)))
    model = BFRegModel(config, kb, make_generator(0))
    omega = mean_intensity(model, np.ones((2, 3)), "gene")
    assert omega.shape == (3, 3)
    assert np.all((omega > 0) & (omega < 1))
    ranking = rank_edges(model, "gene", np.ones((2, 3)))
    # 6 ordered pairs minus the two chain edges
    assert len(ranking) == 4
    intensities = [c.intensity for c in ranking]
    assert intensities == sorted(intensities, reverse=True)


def test_discovery_config_validation():
    with pytest.raises(ConfigError):
        DiscoveryConfig(runs=0)
    with pytest.raises(ConfigError):
        DiscoveryConfig(k=0)
    with pytest.raises(ConfigError):
        DiscoveryConfig(task="classify")
    with pytest.raises(ConfigError, match="enhanced"):
        DiscoveryConfig(model=ModelConfig(variant="basic"))


def small_config(**kwargs):
    model = ModelConfig(variant="enhanced", d=2, alpha=1e-3, levels=("gene",), head=HeadSpec(3, hidden=(4,)))
    defaults = dict(runs=2, k=2, model=model, train=TrainConfig(lr=1e-2, epochs=1, batch_size=6))
    defaults.update(kwargs)
    return DiscoveryConfig(**defaults)


def expression(n=12):
    return ExpressionDataset(make_generator(0).uniform(0.1, 1.0, size=(n, 3)), ("g1", "g2", "g3"))


def test_discovery_report(kb):
    report = run_discovery(kb, expression(), "g2", small_config(), make_generator(1))
    assert report.removed == [("g1", "g2"), ("g2", "g3")]
    assert report.successful_runs == 2
    # pairs touching g2 once its edges are gone
    assert report.candidate_count == 4
    assert report.random_expectation == pytest.approx(0.5)
    assert 0.0 <= report.recall <= 1.0
    assert len(report.run_recalls) == 2
    summary = report.to_dict()
    assert summary["node"] == "g2"
    assert len(summary["top_k"]) <= 2


def test_single_run_frequencies_are_binary(kb):
    report = run_discovery(kb, expression(), "g2", small_config(runs=1), make_generator(1))
    assert set(report.frequency.values()) == {1.0}
    assert len(report.frequency) == 2


def test_worker_threads_do_not_change_results(kb):
    serial = run_discovery(kb, expression(), "g2", small_config(runs=3), make_generator(4))
    threaded = run_discovery(kb, expression(), "g2", small_config(runs=3, workers=3), make_generator(4))
    assert serial.to_dict() == threaded.to_dict()


def test_node_without_edges(kb):
    ablated = remove_node_edges(kb, "gene", "g2")
    with pytest.raises(DiscoveryError, match="no edges"):
        run_discovery(ablated, expression(), "g1", small_config())


@pytest.mark.slow
def test_discovery_beats_random_ranking():
    spec = SynthSpec(genes=20, edge_density=0.05, hub_edges=6, beta=0.4, seed=0)
    kb = gen_knowledge(spec)
    dataset = gen_expression_static(kb, spec, samples=256)
    config = DiscoveryConfig(
        runs=10, k=20, restrict_to_node=False,
        model=ModelConfig(variant="enhanced", d=4, alpha=0.05, levels=("gene",), head=HeadSpec(20, hidden=(32,))),
        train=TrainConfig(lr=1e-2, epochs=40, batch_size=32, loss_support="hidden"))
    report = run_discovery(kb, dataset, "g0", config, make_generator(0))
    assert len(report.removed) == 6
    assert report.recall >= 2 * report.random_expectation

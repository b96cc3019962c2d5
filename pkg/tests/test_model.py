import numpy as np
import pytest

from bfreg.errors import ConfigError, KnowledgeError, ShapeError
from bfreg.model import BFRegModel, HeadSpec, ModelConfig, predict_vector_head
from bfreg.numerics import BN_EPSILON, evaluate_with_gradients, make_generator, reduce_sum, square
from bfreg.semconv import ParamNames


def gene_only(variant="basic", **kwargs):
    return ModelConfig(variant=variant, d=3, levels=("gene",), head=HeadSpec(3, hidden=(5,)), **kwargs)


def test_parameter_layout_depends_only_on_config_and_knowledge(kb):
    config = ModelConfig(variant="enhanced", d=2, alpha=0.01, head=HeadSpec(3, hidden=(4,)))
    a = BFRegModel(config, kb, make_generator(0))
    b = BFRegModel(config, kb, make_generator(1))
    assert a.inventory() == b.inventory()
    assert not np.allclose(a.params[ParamNames.EMBED_W1], b.params[ParamNames.EMBED_W1])


def test_full_hierarchy_shapes(kb):
    model = BFRegModel(ModelConfig(d=2, head=HeadSpec(4, hidden=(6,))), kb, make_generator(0))
    x = make_generator(1).normal(size=(5, 3))
    trace = model.forward(x, mode="train")
    assert trace.embedding.shape == (5, 3, 2)
    assert trace.final.shape == (5, 2, 2)  # two pathways
    assert trace.levels["gene"].output.shape == (5, 2, 2)  # two proteins
    assert len(trace.levels["protein"].hyper) == 1
    assert model.predict(x).shape == (5, 4)


def test_zero_messages_collapse_to_normalised_embedding(kb):
    model = BFRegModel(gene_only(), kb, make_generator(0))
    model.params.set(ParamNames.attention("gene", 0, "value"), np.zeros((3, 3)))
    trace = model.forward(np.array([[0.2, -1.0, 0.4]]), mode="eval")
    expected = trace.embedding.numpy() / np.sqrt(1.0 + BN_EPSILON)
    np.testing.assert_allclose(trace.final.numpy(), expected)


def test_enhanced_alpha_zero_is_local(kb):
    model = BFRegModel(gene_only("enhanced", alpha=0.0), kb, make_generator(2))
    first = model.forward(np.array([[0.5, 0.1, 0.2]])).levels["gene"].hops[0].numpy()
    second = model.forward(np.array([[0.5, 0.1, -3.0]])).levels["gene"].hops[0].numpy()
    # g3 regulates nobody, so g1 and g2 never see it
    np.testing.assert_allclose(first[0, :2], second[0, :2])
    assert not np.allclose(first[0, 2], second[0, 2])


def test_enhanced_records_intensities(kb):
    model = BFRegModel(gene_only("enhanced", alpha=1e-3, hops=2), kb, make_generator(0))
    trace = model.forward(np.ones((2, 3)))
    omegas = trace.levels["gene"].intensities
    assert len(omegas) == 2
    assert omegas[0].shape == (2, 3, 3)


@pytest.mark.parametrize("alpha", [0.0, 0.1])
def test_pair_logits_learn_absent_edges_only_through_alpha(kb, alpha):
    model = BFRegModel(gene_only("enhanced", alpha=alpha), kb, make_generator(3))
    x = np.array([[0.5, -0.4, 1.2], [-0.3, 0.8, 0.6]])

    def loss(leaves):
        hop = model.forward_graph(leaves, x, mode="eval").levels["gene"].hops[0]
        return reduce_sum(square(hop))

    _, grads = evaluate_with_gradients(loss, model.params)
    pair = grads[ParamNames.scorer("gene", "pair")]
    assert pair.shape == (3, 3)
    assert abs(pair[1, 0]) > 0  # known edge g1 -> g2
    np.testing.assert_allclose(np.diag(pair), 0.0)
    # g3 -> g1 is absent from the knowledge
    assert (abs(pair[0, 2]) > 0) == (alpha > 0)


def test_per_level_alpha(kb):
    config = ModelConfig(variant="enhanced", d=2, alpha={"gene": 1e-3, "protein": 0.0},
                         head=HeadSpec(1, hidden=(2,)))
    BFRegModel(config, kb, make_generator(0))
    missing = ModelConfig(variant="enhanced", d=2, alpha={"gene": 1e-3}, head=HeadSpec(1, hidden=(2,)))
    with pytest.raises(ConfigError, match="protein"):
        BFRegModel(missing, kb, make_generator(0))


def test_wrong_gene_count(kb):
    model = BFRegModel(gene_only(), kb)
    with pytest.raises(ShapeError):
        model.predict(np.ones((1, 4)))


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(variant="transformer")
    with pytest.raises(ConfigError):
        ModelConfig(alpha=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(update_mode="mean")
    with pytest.raises(ConfigError):
        HeadSpec(0)
    with pytest.raises(ConfigError):
        HeadSpec(2, kind="attention")


def test_config_round_trips_through_dict():
    config = ModelConfig(variant="enhanced", alpha={"gene": 1e-3}, levels=["gene"], head=HeadSpec(2, hidden=[8]))
    again = ModelConfig.from_dict(config.to_dict())
    assert again == config


def test_unknown_level(kb):
    with pytest.raises(KnowledgeError, match="unknown level"):
        BFRegModel(ModelConfig(levels=("gene", "metabolite")), kb)


def test_perceptron_baseline_has_no_propagation(kb):
    model = BFRegModel(ModelConfig.perceptron(HeadSpec(2, hidden=(4,)), d=2), kb)
    names = model.params.names()
    assert not any(".hop" in n for n in names)
    assert model.predict(np.ones((3, 3))).shape == (3, 2)


def test_without_inter_level_the_levels_are_merged(kb):
    config = ModelConfig(d=2, levels=("gene", "protein"), inter_level=False, head=HeadSpec(1, hidden=(2,)))
    model = BFRegModel(config, kb, make_generator(0))
    assert model.kb.levels == ("merged",)
    trace = model.forward(np.ones((2, 3)), mode="train")
    assert trace.final.shape == (2, 5, 2)


def test_freeze_trunk_keeps_hash(kb):
    model = BFRegModel(gene_only(), kb, make_generator(0))
    digest = model.trunk_hash()
    model.freeze_trunk()
    assert all(ParamNames.is_head(n) for n in model.params.trainable_names())
    for name in model.head_names():
        model.params.set(name, model.params[name] + 1.0)
    assert model.trunk_hash() == digest


def test_replace_head(kb):
    model = BFRegModel(gene_only(), kb, make_generator(0))
    model.replace_head(HeadSpec(7, hidden=(2,)))
    assert model.predict(np.ones((1, 3))).shape == (1, 7)


def test_snapshot_carries_running_statistics(kb):
    model = BFRegModel(gene_only(), kb, make_generator(0))
    snap = model.snapshot()
    model.forward(make_generator(3).normal(size=(4, 3)), mode="train")
    assert not np.allclose(model.bn_states["gene"].running_mean, snap["__bn__.gene.mean"])
    model.restore(snap)
    np.testing.assert_array_equal(model.bn_states["gene"].running_mean, snap["__bn__.gene.mean"])


def test_vector_head_shape_contract():
    H = np.ones((2, 3, 1))
    layers = [(np.zeros((3, 6)), np.arange(6.0).reshape(1, 6))]
    out = predict_vector_head(H, layers, n=3, horizon=2).numpy()
    assert out.shape == (2, 2, 3)
    np.testing.assert_allclose(out[0], [[0, 1, 2], [3, 4, 5]])
    with pytest.raises(ShapeError):
        predict_vector_head(H, layers, n=4)

import numpy as np
import pytest

from bfreg.errors import ConfigError, KnowledgeError
from bfreg.layers import (
    EdgeScorer, EnhancedLayer, GATLayer, HypergraphLayer, MaskedDenseLayer, RecurrentCell,
    edge_intensity, embed_genes, enhanced_adjacency, enhanced_propagate, flatten_embeddings,
    gat_propagate, get_intra_layer_class, hypergraph_operator, hypergraph_propagate, masked_dense,
    mlp, neighbourhood_mask, reweighting,
)
from bfreg.numerics import (
    ParamStore, evaluate_with_gradients, finite_difference_check, make_generator, reduce_sum, square,
)
from bfreg.semconv import ParamNames


def test_embedding_is_shared_across_genes():
    gen = make_generator(0)
    w1, b1, w2, b2 = gen.normal(size=(1, 3)), gen.normal(size=(1, 3)), gen.normal(size=(3, 3)), gen.normal(size=(1, 3))
    H = embed_genes(np.array([0.7, 0.7]), w1, b1, w2, b2).numpy()
    assert H.shape == (2, 3)
    np.testing.assert_array_equal(H[0], H[1])


def test_embedding_by_hand():
    w1 = np.array([[1.0, 0.0]])
    w2 = np.array([[2.0, 0.0], [0.0, 1.0]])
    b2 = np.array([[0.5, 0.0]])
    H = embed_genes(np.array([1.0]), w1, np.zeros((1, 2)), w2, b2).numpy()
    np.testing.assert_allclose(H, [[2 * np.tanh(1.0) + 0.5, 0.0]])


def test_embedding_batches():
    z = np.zeros((1, 2))
    H = embed_genes(np.ones((4, 5)), np.ones((1, 2)), z, np.eye(2), z)
    assert H.shape == (4, 5, 2)


def test_neighbourhood_includes_self():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(neighbourhood_mask(A), [[1, 1], [0, 1]])


def test_gat_zero_values_returns_input():
    gen = make_generator(1)
    H = gen.normal(size=(3, 2))
    A = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    out = gat_propagate(H, A, gen.normal(size=(2, 2)), gen.normal(size=(2, 2)), np.zeros((2, 2)),
                        gen.normal(size=(4, 1)))
    np.testing.assert_allclose(out.numpy(), H)


def test_gat_equal_rows_double():
    h = np.array([0.3, -0.2])
    H = np.tile(h, (3, 1))
    A = np.ones((3, 3)) - np.eye(3)
    out = gat_propagate(H, A, np.eye(2), np.eye(2), np.eye(2), np.ones((4, 1)))
    np.testing.assert_allclose(out.numpy(), 2 * H)


def test_gat_two_nodes_by_hand():
    # node 2 regulates node 1; d = 1
    H = np.array([[1.0], [2.0]])
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    out = gat_propagate(H, A, np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]),
                        np.array([[1.0], [1.0]])).numpy()
    # node 1: logits leaky(1+1)=2 (self), leaky(1+2)=3 (neighbour)
    w_self, w_nb = np.exp(2) / (np.exp(2) + np.exp(3)), np.exp(3) / (np.exp(2) + np.exp(3))
    expected_1 = w_self * 1.0 + w_nb * 2.0 + 1.0
    expected_2 = 2.0 + 2.0
    np.testing.assert_allclose(out, [[expected_1], [expected_2]])


def test_gat_unknown_update_mode():
    with pytest.raises(ConfigError):
        gat_propagate(np.ones((2, 1)), np.zeros((2, 2)), np.eye(1), np.eye(1), np.eye(1),
                      np.ones((2, 1)), update_mode="mean")


def test_gat_layer_gradients():
    gen = make_generator(2)
    layer = GATLayer("gene", 0, 2, update_mode="concat")
    params = ParamStore()
    layer.declare(params, gen)
    H = gen.normal(size=(4, 3, 2))
    A = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)

    def loss(leaves, inputs):
        return reduce_sum(square(layer(leaves, inputs, A)))

    assert finite_difference_check(loss, params, H, tolerance=1e-4).passed


def test_hypergraph_by_hand():
    R = np.array([[1, 0], [1, 1], [0, 1]], dtype=float)
    out = hypergraph_propagate(np.array([[1.0], [2.0], [3.0]]), R, np.array([[1.0]]))
    np.testing.assert_allclose(out.numpy(), [[1.5], [2.0], [2.5]])


def test_hypergraph_preserves_constants_and_passes_unlinked_nodes():
    R = np.array([[1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    H = np.array([[4.0, 1.0], [4.0, 1.0], [4.0, 1.0], [7.0, -3.0]])
    out = hypergraph_propagate(H, R, np.eye(2)).numpy()
    np.testing.assert_allclose(out, H)


def test_hypergraph_empty_hyperedge():
    with pytest.raises(KnowledgeError):
        hypergraph_operator(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_hypergraph_operator_rows_sum_to_one():
    R = np.array([[1, 0, 1], [1, 1, 0], [0, 1, 1]], dtype=float)
    np.testing.assert_allclose(hypergraph_operator(R).sum(axis=1), np.ones(3))


def test_masked_dense_ignores_masked_weights():
    M = np.eye(2)
    W = np.array([[2.0, 9.0], [9.0, 3.0]])
    out = masked_dense(np.array([[1.0], [1.0]]), M, W, np.zeros((2, 1)))
    np.testing.assert_allclose(out.numpy(), [[2.0], [3.0]])


def test_masked_dense_unmasked_and_fully_masked():
    H = np.array([[2.0], [3.0]])
    np.testing.assert_allclose(masked_dense(H, np.ones((1, 2)), np.ones((1, 2)), np.zeros((1, 1))).numpy(), [[5.0]])
    np.testing.assert_allclose(masked_dense(H, np.zeros((1, 2)), np.ones((1, 2)), np.zeros((1, 1))).numpy(), [[0.0]])


def test_masked_weights_get_no_gradient():
    gen = make_generator(3)
    M = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    layer = MaskedDenseLayer("gene", "protein", M)
    params = ParamStore()
    layer.declare(params, gen)
    _, grads = evaluate_with_gradients(lambda leaves: reduce_sum(layer(leaves, gen.normal(size=(3, 2)))), params)
    weight = ParamNames.transition("gene", "protein", "weight")
    assert np.all(grads[weight][M == 0] == 0.0)


def test_edge_intensity_zero_weights_is_half():
    H = make_generator(4).normal(size=(3, 2))
    omega = edge_intensity(H, np.zeros((4, 2)), np.zeros((1, 2)), np.zeros((2, 1)), np.zeros((1, 1)))
    np.testing.assert_allclose(omega.numpy(), np.full((3, 3), 0.5))


def test_edge_intensity_is_strictly_inside_unit_interval():
    gen = make_generator(5)
    omega = edge_intensity(gen.normal(size=(2, 4, 3)), gen.normal(size=(6, 3)), gen.normal(size=(1, 3)),
                           gen.normal(size=(3, 1)), gen.normal(size=(1, 1))).numpy()
    assert omega.shape == (2, 4, 4)
    assert np.all((omega > 0) & (omega < 1))


def test_edge_intensity_by_hand():
    # d = 1, hidden width 1: omega_ij = sigmoid(tanh(h_i + h_j))
    H = np.array([[0.0], [np.log(3.0)]])
    omega = edge_intensity(H, np.ones((2, 1)), np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1))).numpy()
    t = np.tanh(np.log(3.0))
    expected = 1 / (1 + np.exp(-np.array([[0.0, t], [t, np.tanh(2 * np.log(3.0))]])))
    np.testing.assert_allclose(omega, expected)


def test_pair_logits_separate_pairs_with_equal_embeddings():
    H = np.ones((3, 2))
    pair = np.zeros((3, 3))
    pair[1, 0] = 2.0
    omega = edge_intensity(H, np.zeros((4, 2)), np.zeros((1, 2)), np.zeros((2, 1)), np.zeros((1, 1)),
                           pair_logits=pair).numpy()
    assert omega[1, 0] == pytest.approx(1 / (1 + np.exp(-2.0)))
    assert omega[0, 1] == pytest.approx(0.5)


def test_scorer_pair_logits_start_at_zero():
    params = ParamStore()
    EdgeScorer("gene", 2, nodes=3).declare(params, make_generator(0))
    np.testing.assert_array_equal(params[ParamNames.scorer("gene", "pair")], np.zeros((3, 3)))
    assert ParamNames.scorer("gene", "pair") not in EdgeScorer("gene", 2).param_shapes()


def test_reweighting():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(reweighting(A, 0.1), [[0.0, 1.0], [0.1, 0.0]])
    with pytest.raises(ConfigError):
        reweighting(A, 1.0)
    with pytest.raises(ConfigError):
        reweighting(A, -0.1)


def test_enhanced_adjacency_by_hand():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    A_prime = enhanced_adjacency(A, np.full((2, 2), 0.5), 0.1).numpy()
    np.testing.assert_allclose(A_prime, [[0.0, 0.5], [0.05, 0.0]])


def test_enhanced_adjacency_alpha_zero_keeps_sparsity():
    A = np.array([[0, 1, 0], [0, 0, 0], [1, 1, 0]], dtype=float)
    omega = make_generator(6).uniform(0.1, 0.9, size=(3, 3))
    A_prime = enhanced_adjacency(A, omega, 0.0).numpy()
    assert np.all(A_prime[A == 0] == 0.0)


def test_enhanced_propagate_by_hand():
    out = enhanced_propagate(np.array([[1.0], [2.0]]), np.array([[0.0, 0.5], [0.1, 0.0]]), np.array([[2.0]]))
    np.testing.assert_allclose(out.numpy(), [[4.0], [4.2]])


def test_enhanced_propagate_self_only():
    H = make_generator(7).normal(size=(3, 2))
    np.testing.assert_allclose(enhanced_propagate(H, np.zeros((3, 3)), np.eye(2)).numpy(), H)


def test_enhanced_layer_returns_intensities():
    gen = make_generator(8)
    scorer = EdgeScorer("gene", 2)
    layer = EnhancedLayer("gene", 0, 2, 0.0, scorer)
    params = ParamStore()
    scorer.declare(params, gen)
    layer.declare(params, gen)
    A = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
    out, omega = layer(params.constants(), gen.normal(size=(5, 3, 2)), A)
    assert out.shape == (5, 3, 2)
    assert omega.shape == (5, 3, 3)


def test_enhanced_layer_rejects_alpha_out_of_range():
    with pytest.raises(ConfigError):
        EnhancedLayer("gene", 0, 2, 1.5, EdgeScorer("gene", 2))


def test_hypergraph_layer_shape():
    gen = make_generator(9)
    R = np.array([[1, 0], [1, 1], [0, 1]], dtype=float)
    layer = HypergraphLayer("protein", 0, 2, R)
    params = ParamStore()
    layer.declare(params, gen)
    assert layer(params.constants(), gen.normal(size=(4, 3, 2))).shape == (4, 3, 2)


def test_flatten_and_mlp_zero_weights_give_bias():
    H = make_generator(10).normal(size=(2, 3, 2))
    z = flatten_embeddings(H)
    assert z.shape == (2, 6)
    out = mlp(z, [(np.zeros((6, 4)), np.zeros((1, 4))), (np.zeros((4, 2)), np.array([[1.0, -1.0]]))])
    np.testing.assert_allclose(out.numpy(), [[1.0, -1.0], [1.0, -1.0]])


def test_zero_weight_cell_keeps_zero_state():
    cell = RecurrentCell(4, 3, 2)
    params = ParamStore()
    for name, (shape, _) in cell.param_shapes().items():
        params.add(name, np.zeros(shape))
    params.set(ParamNames.head_cell("readout_bias"), np.array([[0.5, -0.5]]))
    leaves = params.constants()
    state = cell.initial_state(2)
    for _ in range(3):
        out, state = cell(leaves, make_generator(11).normal(size=(2, 4)), state)
        np.testing.assert_array_equal(state.hidden.numpy(), np.zeros((2, 3)))
        np.testing.assert_array_equal(state.memory.numpy(), np.zeros((2, 3)))
        np.testing.assert_allclose(out.numpy(), [[0.5, -0.5], [0.5, -0.5]])


def test_variant_registry():
    assert get_intra_layer_class("basic") is GATLayer
    assert get_intra_layer_class("Enhanced") is EnhancedLayer
    with pytest.raises(ConfigError):
        get_intra_layer_class("transformer")

"""
Layers for BFReg
================

The architectural operators: gene embedding, attention propagation,
hypergraph propagation, masked inter-level dense, and the enhanced learnable
adjacency, plus the task heads.
"""

from .base import BaseLayer
from .embedding import GeneEmbedding, embed_genes
from .enhanced import (
    EdgeScorer, EnhancedLayer, edge_intensity, enhanced_adjacency, enhanced_propagate, reweighting,
)
from .gat import UPDATE_MODES, GATLayer, gat_propagate, neighbourhood_mask
from .heads import CellState, MLPHead, RecurrentCell, flatten_embeddings, mlp
from .hypergraph import HypergraphLayer, hypergraph_operator, hypergraph_propagate
from .masked import MaskedDenseLayer, masked_dense

from ..errors import ConfigError

__all__ = [
    'BaseLayer',
    'GeneEmbedding', 'embed_genes',
    'GATLayer', 'gat_propagate', 'neighbourhood_mask', 'UPDATE_MODES',
    'HypergraphLayer', 'hypergraph_operator', 'hypergraph_propagate',
    'MaskedDenseLayer', 'masked_dense',
    'EdgeScorer', 'EnhancedLayer', 'edge_intensity', 'enhanced_adjacency',
    'enhanced_propagate', 'reweighting',
    'MLPHead', 'RecurrentCell', 'CellState', 'flatten_embeddings', 'mlp',
    'VARIANTS', 'get_intra_layer_class',
]

# Variant registry: intra-level propagation operator per model variant
VARIANTS = {
    'basic': GATLayer,
    'enhanced': EnhancedLayer,
}


def get_intra_layer_class(variant: str):
    """Get the intra-level propagation layer for a model variant"""
    layer_class = VARIANTS.get(variant.lower())
    if layer_class is None:
        raise ConfigError(f"unknown model variant '{variant}'; expected one of {sorted(VARIANTS)}")
    return layer_class

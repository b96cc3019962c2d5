"""
Synthetic Knowledge and Expression
==================================

Desk-scale data with planted structure: a random gene regulatory graph, a
many-to-one gene -> protein mapping whose image (plus noise) is the protein
interaction graph, random protein pathways, and expression drawn from a
linear-Gaussian structural model or from relaxation dynamics on the graph.

Orientation follows the knowledge base: ``A[i][j] = 1`` when gene j
regulates gene i, so static samples solve ``x = beta A x + eps`` and the
dynamics step is ``x' = (1 - rho) x + rho tanh(beta A x) + eta``.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .data import ExpressionDataset, SeriesDataset
from .errors import ConfigError, DatasetError
from .knowledge import KnowledgeBase, build_knowledge
from .numerics import make_generator
from .semconv import Levels


@dataclass
class SynthSpec:
    """
    ``hub_edges`` > 0 rewires gene ``g0`` to regulate exactly that many
    other genes, giving discovery a node with a known edge set.
    """
    genes: int = 20
    edge_density: float = 0.1
    proteins: Optional[int] = None
    ppi_noise: float = 0.05
    pathways: int = 3
    pathway_size: Tuple[int, int] = (2, 4)
    beta: float = 0.3
    noise: float = 0.05
    rho: float = 0.5
    mask_probability: float = 0.0
    hub_edges: int = 0
    seed: int = 0

    def __post_init__(self):
        self.pathway_size = tuple(self.pathway_size)
        if self.genes < 1:
            raise ConfigError(f"need at least one gene, got {self.genes}")
        if not 0.0 <= self.edge_density <= 1.0:
            raise ConfigError(f"edge density must lie in [0, 1], got {self.edge_density}")
        if not 0.0 <= self.ppi_noise <= 1.0:
            raise ConfigError(f"PPI noise must lie in [0, 1], got {self.ppi_noise}")
        if not 1 <= self.protein_count <= self.genes:
            raise ConfigError(f"protein count must lie in [1, {self.genes}], got {self.protein_count}")
        low, high = self.pathway_size
        if self.pathways < 1 or not 1 <= low <= high:
            raise ConfigError(f"invalid pathway layout: {self.pathways} pathways of size {self.pathway_size}")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"relaxation rho must lie in (0, 1], got {self.rho}")
        if self.noise < 0:
            raise ConfigError(f"noise scale must be >= 0, got {self.noise}")
        if not 0.0 <= self.mask_probability < 1.0:
            raise ConfigError(f"mask probability must lie in [0, 1), got {self.mask_probability}")
        if not 0 <= self.hub_edges < self.genes:
            raise ConfigError(f"hub edges must lie in [0, {self.genes - 1}], got {self.hub_edges}")

    @property
    def protein_count(self) -> int:
        return self.proteins if self.proteins is not None else max(1, self.genes // 2)

    def to_dict(self) -> Dict:
        return asdict(self)


def _names(prefix: str, count: int):
    return [f"{prefix}{i}" for i in range(count)]


def random_digraph(n: int, density: float, generator: np.random.Generator) -> np.ndarray:
    """Each off-diagonal entry present independently with ``density``."""
    A = (generator.random((n, n)) < density).astype(np.float64)
    np.fill_diagonal(A, 0.0)
    return A


def plant_hub(A: np.ndarray, degree: int, generator: np.random.Generator, hub: int = 0) -> np.ndarray:
    """Give ``hub`` exactly ``degree`` outgoing edges and no others."""
    A = A.copy()
    A[hub, :] = 0.0
    A[:, hub] = 0.0
    others = np.array([i for i in range(A.shape[0]) if i != hub])
    A[generator.choice(others, degree, replace=False), hub] = 1.0
    return A


def gen_knowledge(spec: SynthSpec, generator: Optional[np.random.Generator] = None) -> KnowledgeBase:
    gen = generator if generator is not None else make_generator(spec.seed)
    n, m = spec.genes, spec.protein_count
    A = random_digraph(n, spec.edge_density, gen)
    if spec.hub_edges:
        A = plant_hub(A, spec.hub_edges, gen)

    # every protein receives at least one gene
    owner = np.concatenate([gen.permutation(m), gen.integers(0, m, size=n - m)])
    owner = owner[gen.permutation(n)]
    M = np.zeros((m, n))
    M[owner, np.arange(n)] = 1.0

    P = ((M @ A @ M.T) > 0).astype(np.float64)
    P = np.maximum(P, random_digraph(m, spec.ppi_noise, gen))
    np.fill_diagonal(P, 0.0)

    low, high = spec.pathway_size
    R = np.zeros((m, spec.pathways))
    for e in range(spec.pathways):
        size = int(gen.integers(low, high + 1))
        R[gen.choice(m, min(size, m), replace=False), e] = 1.0

    levels = (Levels.GENE, Levels.PROTEIN, Levels.PATHWAY)
    nodes = {Levels.GENE: _names("g", n), Levels.PROTEIN: _names("p", m),
             Levels.PATHWAY: _names("P", spec.pathways)}
    kb = build_knowledge(levels, nodes, {Levels.GENE: A, Levels.PROTEIN: P},
                         {Levels.GENE: M}, incidence=R, member_level=Levels.PROTEIN)
    logging.debug(f"BFReg: synthetic knowledge {kb.summary()}")
    return kb


def spectral_radius(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(matrix)))) if matrix.size else 0.0


def draw_mask(shape, probability: float, generator: np.random.Generator) -> np.ndarray:
    """Observation mask with each entry unobserved independently with ``probability``."""
    return (generator.random(shape) >= probability).astype(np.float64)


def gen_expression_static(kb: KnowledgeBase, spec: SynthSpec, samples: int,
                          generator: Optional[np.random.Generator] = None,
                          noise: Optional[np.ndarray] = None) -> ExpressionDataset:
    """
    Samples of ``x = (I - beta A)^-1 eps`` with standard normal ``eps``
    (or the rows of ``noise`` when given).
    """
    gen = generator if generator is not None else make_generator(spec.seed)
    gene = kb.levels[0]
    A = np.asarray(kb.adjacency[gene])
    n = A.shape[0]
    radius = spectral_radius(spec.beta * A)
    if radius >= 1.0:
        raise DatasetError(f"spectral radius of beta*A is {radius:.4g}; the static model needs < 1")
    eps = gen.standard_normal((samples, n)) if noise is None else np.atleast_2d(np.asarray(noise, dtype=np.float64))
    values = np.linalg.solve(np.eye(n) - spec.beta * A, eps.T).T
    mask = draw_mask(values.shape, spec.mask_probability, gen) if spec.mask_probability else None
    return ExpressionDataset(values, kb.nodes[gene], mask=mask)


def pathway_activity(kb: KnowledgeBase, values: np.ndarray) -> np.ndarray:
    """Mean expression of each pathway's member genes; (samples, pathways)."""
    R = kb.incidence_for(kb.levels[0])
    sizes = R.sum(axis=0)
    if np.any(sizes == 0):
        raise DatasetError("a pathway has no member genes")
    return np.asarray(values, dtype=np.float64) @ R / sizes


def gen_labels(kb: KnowledgeBase, dataset: ExpressionDataset, classes: int) -> np.ndarray:
    """Class = index of the most active of the first ``classes`` pathways; ties to the lowest."""
    if kb.incidence is None:
        raise DatasetError("labels need pathways in the knowledge base")
    available = kb.incidence.shape[1]
    if not 2 <= classes <= available:
        raise ConfigError(f"classes must lie in [2, {available}], got {classes}")
    activity = pathway_activity(kb, dataset.align(kb.nodes[kb.levels[0]]).values)[:, :classes]
    return np.argmax(activity, axis=1).astype(np.int64)


def relax_step(A: np.ndarray, x: np.ndarray, beta: float, rho: float,
               eta: Optional[np.ndarray] = None) -> np.ndarray:
    """One step of the relaxation dynamics for (samples, n) states."""
    out = (1.0 - rho) * x + rho * np.tanh(beta * x @ A.T)
    return out if eta is None else out + eta


def gen_timeseries(kb: KnowledgeBase, spec: SynthSpec, series: int, steps: int,
                   generator: Optional[np.random.Generator] = None,
                   x0: Optional[np.ndarray] = None) -> SeriesDataset:
    """``series`` trajectories of ``steps`` timestamps, starting from standard normal states."""
    if steps < 1:
        raise ConfigError(f"need at least one time step, got {steps}")
    gen = generator if generator is not None else make_generator(spec.seed)
    gene = kb.levels[0]
    A = np.asarray(kb.adjacency[gene])
    n = A.shape[0]
    x = gen.standard_normal((series, n)) if x0 is None else np.broadcast_to(
        np.asarray(x0, dtype=np.float64), (series, n)).copy()
    frames = [x]
    for _ in range(steps - 1):
        eta = spec.noise * gen.standard_normal(x.shape) if spec.noise else None
        x = relax_step(A, x, spec.beta, spec.rho, eta)
        frames.append(x)
    values = np.stack(frames, axis=1)
    mask = draw_mask(values.shape, spec.mask_probability, gen) if spec.mask_probability else None
    return SeriesDataset(values, kb.nodes[gene], np.arange(steps, dtype=np.float64), mask)


def gen_populations(kb: KnowledgeBase, spec: SynthSpec, cells: int, steps: int,
                    generator: Optional[np.random.Generator] = None):
    """Population snapshots (timestamps, list of cells x genes) from the same dynamics."""
    data = gen_timeseries(kb, spec, cells, steps, generator)
    return data.timestamps, [data.values[:, k] for k in range(steps)]

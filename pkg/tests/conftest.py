import numpy as np
import pytest

from bfreg.knowledge import build_knowledge


def chain_knowledge():
    """Three genes in a chain g1 -> g2 -> g3, two proteins, two pathways."""
    genes = ["g1", "g2", "g3"]
    A_gene = np.zeros((3, 3))
    A_gene[1, 0] = 1.0  # g1 -> g2
    A_gene[2, 1] = 1.0  # g2 -> g3
    A_protein = np.array([[0.0, 0.0], [1.0, 0.0]])  # p1 -> p2
    gene_to_protein = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    incidence = np.array([[1.0, 0.0], [1.0, 1.0]])  # p1 in P1; p2 in P1, P2
    return build_knowledge(
        ["gene", "protein", "pathway"],
        {"gene": genes, "protein": ["p1", "p2"], "pathway": ["P1", "P2"]},
        {"gene": A_gene, "protein": A_protein},
        {"gene": gene_to_protein},
        incidence=incidence,
    )


@pytest.fixture
def kb():
    return chain_knowledge()


@pytest.fixture
def knowledge_dir(tmp_path):
    """The chain knowledge written by hand, the way users write it."""
    root = tmp_path / "knowledge"
    root.mkdir()
    (root / "gene.edges.tsv").write_text("# source\ttarget\ng1\tg2\ng2\tg3\n")
    (root / "protein.edges.tsv").write_text("p1\tp2\n")
    (root / "gene_to_protein.tsv").write_text("g1\tp1\ng2\tp1\ng3\tp2\n")
    (root / "membership.tsv").write_text("p1\tP1\np2\tP1\np2\tP2\n")
    (root / "genes.txt").write_text("g1\ng2\ng3\n")
    (root / "knowledge.json").write_text(
        '{"levels": ["gene", "protein", "pathway"],'
        ' "nodes": {"gene": "genes.txt"},'
        ' "edges": {"gene": "gene.edges.tsv", "protein": "protein.edges.tsv"},'
        ' "mappings": {"gene": "gene_to_protein.tsv"},'
        ' "membership": "membership.tsv"}'
    )
    return root

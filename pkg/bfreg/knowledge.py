"""
Layered Biological Knowledge
============================

The knowledge base fixes the network architecture: an ordered list of levels
(typically gene, protein, pathway), a directed binary adjacency per level,
binary mappings between adjacent levels, and an incidence matrix grouping
the nodes of one level into hyperedges (pathways) that form the next level.

Orientation: ``A[i][j] = 1`` means node j regulates node i, so row i lists
the in-neighbours of i. An edge-file line ``source<TAB>target`` sets
``A[target][source]``.

Files
-----
A JSON manifest binds levels to files, relative to the manifest::

    {
      "levels": ["gene", "protein", "pathway"],
      "nodes": {"gene": "gene.nodes.txt"},
      "edges": {"gene": "gene.edges.tsv", "protein": "protein.edges.tsv"},
      "mappings": {"gene": "gene_to_protein.tsv"},
      "membership": "membership.tsv"
    }

``mappings`` is keyed by the lower level. ``membership`` lists
``member<TAB>hyperedge`` lines; the hyperedges are the last level and the
members the level before it. Without an explicit mapping into the last level
the mapping is the transposed incidence.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import KnowledgeError
from .utils import sha256_json

PathLike = Union[str, Path]

MANIFEST_KEYS = ("levels", "nodes", "edges", "mappings", "membership")
MERGED_LEVEL = "merged"


@dataclass(frozen=True)
class EdgeList:
    """Ordered (source, target) pairs, optionally tagged with their level."""
    pairs: Tuple[Tuple[str, str], ...]
    level: Optional[str] = None

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    """
    Immutable layered graph structure.

    ``mappings[lower]`` has shape (count of the next level, count of ``lower``).
    ``incidence`` has shape (count of ``member_level``, count of the last level)
    when hyperedges are present.
    """

    levels: Tuple[str, ...]
    nodes: Dict[str, Tuple[str, ...]]
    adjacency: Dict[str, np.ndarray]
    mappings: Dict[str, np.ndarray] = field(default_factory=dict)
    incidence: Optional[np.ndarray] = None
    member_level: Optional[str] = None

    def __post_init__(self):
        if not self.levels:
            raise KnowledgeError("a knowledge base needs at least one level")
        if len(set(self.levels)) != len(self.levels):
            raise KnowledgeError(f"duplicate level names in {list(self.levels)}")
        for level in self.levels:
            names = self.nodes.get(level)
            if not names:
                raise KnowledgeError(f"level '{level}' has no nodes")
            if len(set(names)) != len(names):
                raise KnowledgeError(f"duplicate node names in level '{level}'")
            A = self.adjacency.get(level)
            n = len(names)
            if A is None or A.shape != (n, n):
                raise KnowledgeError(f"adjacency of level '{level}' must be {n}x{n}")
            if not np.all((A == 0) | (A == 1)):
                raise KnowledgeError(f"adjacency of level '{level}' must be binary")
            if np.any(np.diag(A) != 0):
                raise KnowledgeError(f"adjacency of level '{level}' has self loops")
        for lower, upper in zip(self.levels, self.levels[1:]):
            M = self.mappings.get(lower)
            shape = (len(self.nodes[upper]), len(self.nodes[lower]))
            if M is None or M.shape != shape:
                raise KnowledgeError(f"mapping {lower}->{upper} must have shape {shape}")
            if not np.all((M == 0) | (M == 1)):
                raise KnowledgeError(f"mapping {lower}->{upper} must be binary")
        if self.incidence is not None:
            if self.member_level not in self.levels[:-1]:
                raise KnowledgeError("incidence needs a member level below the hyperedge level")
            shape = (len(self.nodes[self.member_level]), len(self.nodes[self.levels[-1]]))
            if self.incidence.shape != shape:
                raise KnowledgeError(f"incidence must have shape {shape}")
            if not np.all((self.incidence == 0) | (self.incidence == 1)):
                raise KnowledgeError("incidence must be binary")
            empty = np.flatnonzero(self.incidence.sum(axis=0) == 0)
            if empty.size:
                name = self.nodes[self.levels[-1]][empty[0]]
                raise KnowledgeError(f"hyperedge '{name}' has no members")

    # --- lookups ---

    @property
    def hyperedge_level(self) -> Optional[str]:
        return self.levels[-1] if self.incidence is not None else None

    def count(self, level: str) -> int:
        return len(self.nodes[self._check_level(level)])

    def _check_level(self, level: str) -> str:
        if level not in self.levels:
            raise KnowledgeError(f"unknown level '{level}'; levels are {list(self.levels)}")
        return level

    def index(self, level: str, name: str) -> int:
        try:
            return self.nodes[self._check_level(level)].index(name)
        except ValueError:
            raise KnowledgeError(f"unresolved node {name} in level '{level}'") from None

    def next_level(self, level: str) -> Optional[str]:
        position = self.levels.index(self._check_level(level))
        return self.levels[position + 1] if position + 1 < len(self.levels) else None

    def edges(self, level: str) -> EdgeList:
        A = self.adjacency[self._check_level(level)]
        names = self.nodes[level]
        targets, sources = np.nonzero(A)
        pairs = sorted((names[s], names[t]) for t, s in zip(targets, sources))
        return EdgeList(tuple(pairs), level)

    def edge_count(self, level: str) -> int:
        return int(self.adjacency[self._check_level(level)].sum())

    def node_edges(self, level: str, node: str) -> EdgeList:
        """Every existing edge with ``node`` as source or target."""
        return EdgeList(tuple(p for p in self.edges(level) if node in p), level)

    # --- compositions ---

    def mapping_between(self, lower: str, upper: str) -> np.ndarray:
        """
        Binarised product of the mappings from ``lower`` up to ``upper``.
        Shape (count of ``upper``, count of ``lower``).
        """
        lo = self.levels.index(self._check_level(lower))
        hi = self.levels.index(self._check_level(upper))
        if hi <= lo:
            raise KnowledgeError(f"'{upper}' is not above '{lower}'")
        M = self.mappings[self.levels[lo]]
        for level in self.levels[lo + 1:hi]:
            M = self.mappings[level] @ M
        return (M > 0).astype(np.float64)

    def incidence_for(self, level: str) -> np.ndarray:
        """
        Pathway incidence re-expressed over ``level``: a node belongs to a
        hyperedge when any of its images in the member level does.
        """
        if self.incidence is None:
            raise KnowledgeError("knowledge base has no hyperedges")
        if level == self.member_level:
            return self.incidence.copy()
        lo = self.levels.index(self._check_level(level))
        if lo > self.levels.index(self.member_level):
            raise KnowledgeError(f"level '{level}' lies above the hyperedge members")
        up = self.mapping_between(level, self.member_level)
        return ((up.T @ self.incidence) > 0).astype(np.float64)

    def select_levels(self, levels: Sequence[str]) -> "KnowledgeBase":
        """
        Sub-hierarchy keeping ``levels`` (an ordered subsequence starting at the
        first level). Skipped levels are bridged by composed mappings.
        """
        levels = tuple(levels)
        if not levels or levels[0] != self.levels[0]:
            raise KnowledgeError(f"levels must start with '{self.levels[0]}', got {list(levels)}")
        positions = [self.levels.index(self._check_level(level)) for level in levels]
        if positions != sorted(set(positions)):
            raise KnowledgeError(f"levels {list(levels)} are not an ordered subsequence of {list(self.levels)}")
        if levels == self.levels:
            return self
        mappings = {lo: self.mapping_between(lo, hi) for lo, hi in zip(levels, levels[1:])}
        incidence = member = None
        if self.incidence is not None and levels[-1] == self.levels[-1] and len(levels) > 1:
            member = levels[-2]
            incidence = self.incidence_for(member)
            if not np.all(incidence.sum(axis=0) > 0):
                incidence = member = None
        return KnowledgeBase(
            levels=levels,
            nodes={level: self.nodes[level] for level in levels},
            adjacency={level: self.adjacency[level] for level in levels},
            mappings={k: _frozen(v) for k, v in mappings.items()},
            incidence=None if incidence is None else _frozen(incidence),
            member_level=member,
        )

    def merged(self, levels: Optional[Sequence[str]] = None) -> "KnowledgeBase":
        """
        One block graph over the chosen levels: intra-level edges on the
        diagonal blocks and every mapping turned into edges from lower-level
        nodes to the upper-level nodes they map to. Node names are prefixed
        with their level.
        """
        kb = self.select_levels(levels or self.levels)
        offsets, names = {}, []
        for level in kb.levels:
            offsets[level] = len(names)
            names.extend(f"{level}:{n}" for n in kb.nodes[level])
        A = np.zeros((len(names), len(names)))
        for level in kb.levels:
            o, n = offsets[level], kb.count(level)
            A[o:o + n, o:o + n] = kb.adjacency[level]
        for lower, upper in zip(kb.levels, kb.levels[1:]):
            lo, hi = offsets[lower], offsets[upper]
            M = kb.mappings[lower]
            A[hi:hi + M.shape[0], lo:lo + M.shape[1]] = M
        return KnowledgeBase(
            levels=(MERGED_LEVEL,),
            nodes={MERGED_LEVEL: tuple(names)},
            adjacency={MERGED_LEVEL: _frozen(A)},
        )

    def fingerprint(self) -> str:
        """Content hash of names and matrices."""
        doc = {
            "levels": list(self.levels),
            "nodes": {k: list(v) for k, v in self.nodes.items()},
            "adjacency": {k: np.flatnonzero(v).tolist() for k, v in self.adjacency.items()},
            "mappings": {k: np.flatnonzero(v).tolist() for k, v in self.mappings.items()},
            "incidence": None if self.incidence is None else np.flatnonzero(self.incidence).tolist(),
            "member_level": self.member_level,
        }
        return sha256_json(doc)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()

    def __hash__(self):
        return hash(self.fingerprint())

    def summary(self) -> Dict[str, Dict[str, int]]:
        out = {}
        for level in self.levels:
            out[level] = {"nodes": self.count(level), "edges": self.edge_count(level)}
            if level in self.mappings:
                out[level]["mapped_pairs"] = int(self.mappings[level].sum())
        if self.incidence is not None:
            out[self.levels[-1]]["memberships"] = int(self.incidence.sum())
        return out


def build_knowledge(levels: Sequence[str], nodes: Dict[str, Sequence[str]],
                    adjacency: Dict[str, np.ndarray], mappings: Dict[str, np.ndarray],
                    incidence: Optional[np.ndarray] = None,
                    member_level: Optional[str] = None) -> KnowledgeBase:
    """Assemble a KnowledgeBase from in-memory arrays; levels without an
    adjacency get an empty graph."""
    levels = tuple(levels)
    adj = {}
    for level in levels:
        n = len(nodes[level])
        adj[level] = _frozen(adjacency[level] if level in adjacency else np.zeros((n, n)))
    maps = {k: _frozen(v) for k, v in mappings.items()}
    if incidence is not None:
        member_level = member_level or levels[-2]
        if levels[-2] not in maps and member_level == levels[-2]:
            maps[levels[-2]] = _frozen(np.asarray(incidence).T)
    return KnowledgeBase(
        levels=levels,
        nodes={level: tuple(nodes[level]) for level in levels},
        adjacency=adj,
        mappings=maps,
        incidence=None if incidence is None else _frozen(incidence),
        member_level=member_level if incidence is not None else None,
    )


# --- File loading ---

def _read_lines(path: Path) -> List[Tuple[int, str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KnowledgeError(f"knowledge file not found: {path}") from None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append((lineno, line))
    return rows


def _read_pairs(path: Path) -> List[Tuple[str, str, int]]:
    pairs = []
    for lineno, line in _read_lines(path):
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 2 or not all(fields):
            raise KnowledgeError(f"{path}:{lineno}: expected 'source<TAB>target', got {line!r}")
        pairs.append((fields[0], fields[1], lineno))
    return pairs


def _read_names(path: Path) -> List[str]:
    return [line.split("\t")[0].strip() for _, line in _read_lines(path)]


def _fill_binary(shape, rows, row_index, col_index, path) -> np.ndarray:
    """Set matrix[row][col] = 1 for each pair; duplicates warn and are dropped."""
    M = np.zeros(shape)
    seen = set()
    for row_name, col_name, lineno, label in rows:
        for name, index in ((row_name, row_index), (col_name, col_index)):
            if name not in index:
                raise KnowledgeError(f"{path}:{lineno}: unresolved node {name}")
        key = (row_name, col_name)
        if key in seen:
            logging.warning(f"BFReg: {path}:{lineno}: duplicate {label} ignored")
            continue
        seen.add(key)
        M[row_index[row_name], col_index[col_name]] = 1.0
    return M


def load_knowledge(manifest: PathLike) -> KnowledgeBase:
    """
    Load and validate a knowledge base from a manifest file.

    Node order per level is the order of first appearance: the level's node
    file if given, otherwise the mapping and membership files that touch the
    level, otherwise its edge file.

    Raises:
        KnowledgeError: missing/malformed file, unknown manifest key, edge or
            mapping naming an unresolved node, empty hyperedge.
    """
    path = Path(manifest)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise KnowledgeError(f"knowledge manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise KnowledgeError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise KnowledgeError(f"{path}: manifest must be a JSON object")
    unknown = sorted(set(doc) - set(MANIFEST_KEYS))
    if unknown:
        raise KnowledgeError(f"{path}: unknown manifest key(s): {', '.join(unknown)}")

    levels = doc.get("levels")
    if not isinstance(levels, list) or not levels or not all(isinstance(x, str) for x in levels):
        raise KnowledgeError(f"{path}: 'levels' must be a non-empty list of names")
    base = path.parent
    node_files = doc.get("nodes", {})
    edge_files = doc.get("edges", {})
    mapping_files = doc.get("mappings", {})
    for key, table in (("nodes", node_files), ("edges", edge_files), ("mappings", mapping_files)):
        if not isinstance(table, dict):
            raise KnowledgeError(f"{path}: '{key}' must map level names to files")
        stray = sorted(set(table) - set(levels))
        if stray:
            raise KnowledgeError(f"{path}: '{key}' names unknown level(s): {', '.join(stray)}")
    if levels[-1] in mapping_files:
        raise KnowledgeError(f"{path}: the last level '{levels[-1]}' cannot map upward")

    mapping_rows = {lower: (base / f, _read_pairs(base / f)) for lower, f in mapping_files.items()}
    membership = None
    if doc.get("membership"):
        if len(levels) < 2:
            raise KnowledgeError(f"{path}: membership needs at least two levels")
        membership = (base / doc["membership"], _read_pairs(base / doc["membership"]))
    member_level = levels[-2] if membership else None

    # Node universes.
    order: Dict[str, Dict[str, int]] = {level: {} for level in levels}

    def add(level, name):
        order[level].setdefault(name, len(order[level]))

    for position, level in enumerate(levels):
        if level in node_files:
            for name in _read_names(base / node_files[level]):
                add(level, name)
            continue
        if position > 0 and levels[position - 1] in mapping_rows:
            for _, upper, _ in mapping_rows[levels[position - 1]][1]:
                add(level, upper)
        if level in mapping_rows:
            for lower, _, _ in mapping_rows[level][1]:
                add(level, lower)
        if membership and level == member_level:
            for member, _, _ in membership[1]:
                add(level, member)
        if membership and level == levels[-1]:
            for _, hyperedge, _ in membership[1]:
                add(level, hyperedge)
        if not order[level] and level in edge_files:
            for source, target, _ in _read_pairs(base / edge_files[level]):
                add(level, source)
                add(level, target)

    adjacency = {}
    for level in levels:
        n = len(order[level])
        if level not in edge_files:
            adjacency[level] = np.zeros((n, n))
            continue
        edge_path = base / edge_files[level]
        rows = []
        for source, target, lineno in _read_pairs(edge_path):
            if source == target:
                if source not in order[level]:
                    raise KnowledgeError(f"{edge_path}:{lineno}: unresolved node {source}")
                logging.warning(f"BFReg: {edge_path}:{lineno}: self loop on {source} ignored")
                continue
            rows.append((target, source, lineno, f"edge {source}->{target}"))
        adjacency[level] = _fill_binary((n, n), rows, order[level], order[level], edge_path)

    mappings = {}
    for lower, upper in zip(levels, levels[1:]):
        if lower in mapping_rows:
            map_path, pairs = mapping_rows[lower]
            rows = [(u, lo, ln, f"mapping {lo}->{u}") for lo, u, ln in pairs]
            mappings[lower] = _fill_binary((len(order[upper]), len(order[lower])), rows,
                                           order[upper], order[lower], map_path)
        elif not (membership and lower == member_level):
            raise KnowledgeError(f"{path}: no mapping file for {lower}->{upper}")

    incidence = None
    if membership:
        member_path, pairs = membership
        rows = [(m, h, ln, f"membership {m} in {h}") for m, h, ln in pairs]
        incidence = _fill_binary((len(order[member_level]), len(order[levels[-1]])), rows,
                                 order[member_level], order[levels[-1]], member_path)
        if member_level not in mappings:
            mappings[member_level] = incidence.T.copy()

    for level in levels:
        if not order[level]:
            raise KnowledgeError(f"{path}: level '{level}' has no nodes")

    kb = build_knowledge(levels, {lv: list(order[lv]) for lv in levels}, adjacency,
                         mappings, incidence, member_level)
    logging.debug(f"BFReg: loaded knowledge {path} ({kb.summary()})")
    return kb


def save_knowledge(kb: KnowledgeBase, directory: PathLike) -> Path:
    """
    Write ``kb`` as a manifest plus TSV files into ``directory`` and return
    the manifest path. Loading the result reproduces ``kb`` exactly.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"levels": list(kb.levels), "nodes": {}, "edges": {}, "mappings": {}}
    for level in kb.levels:
        node_file = f"{level}.nodes.txt"
        (out / node_file).write_text("".join(f"{n}\n" for n in kb.nodes[level]), encoding="utf-8")
        manifest["nodes"][level] = node_file
        edge_file = f"{level}.edges.tsv"
        lines = ["# source\ttarget\n"] + [f"{s}\t{t}\n" for s, t in kb.edges(level)]
        (out / edge_file).write_text("".join(lines), encoding="utf-8")
        manifest["edges"][level] = edge_file
    for lower, upper in zip(kb.levels, kb.levels[1:]):
        M = kb.mappings[lower]
        map_file = f"{lower}_to_{upper}.tsv"
        rows, cols = np.nonzero(M)
        pairs = sorted(zip(rows, cols), key=lambda rc: (rc[1], rc[0]))
        lines = [f"# {lower}\t{upper}\n"] + [f"{kb.nodes[lower][c]}\t{kb.nodes[upper][r]}\n" for r, c in pairs]
        (out / map_file).write_text("".join(lines), encoding="utf-8")
        manifest["mappings"][lower] = map_file
    if kb.incidence is not None:
        rows, cols = np.nonzero(kb.incidence)
        members, hyperedges = kb.nodes[kb.member_level], kb.nodes[kb.levels[-1]]
        lines = [f"# {kb.member_level}\t{kb.levels[-1]}\n"] + [
            f"{members[r]}\t{hyperedges[c]}\n" for r, c in zip(rows, cols)]
        (out / "membership.tsv").write_text("".join(lines), encoding="utf-8")
        manifest["membership"] = "membership.tsv"
    manifest_path = out / "knowledge.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def knowledge_files(manifest: PathLike) -> List[Path]:
    """The manifest and every file it references, for provenance hashing."""
    path = Path(manifest)
    doc = json.loads(path.read_text(encoding="utf-8"))
    files = [path]
    for key in ("nodes", "edges", "mappings"):
        files.extend(path.parent / f for f in doc.get(key, {}).values())
    if doc.get("membership"):
        files.append(path.parent / doc["membership"])
    return files


# --- Operations returning new knowledge bases ---

def restrict_to_genes(kb: KnowledgeBase, measured: Iterable[str]) -> KnowledgeBase:
    """
    Keep the first-level nodes that were measured (in knowledge order) and,
    level by level, only the upper nodes still reachable through the
    mappings. Adjacency, mappings and incidence are sliced to match.
    """
    measured = set(measured)
    if not measured:
        raise KnowledgeError("measured gene list is empty")
    first = kb.levels[0]
    keep = {first: [i for i, n in enumerate(kb.nodes[first]) if n in measured]}
    if not keep[first]:
        raise KnowledgeError("no measured gene is present in the knowledge base")
    for lower, upper in zip(kb.levels, kb.levels[1:]):
        M = kb.mappings[lower][:, keep[lower]]
        reachable = M.sum(axis=1) > 0
        if upper == kb.hyperedge_level and lower == kb.member_level:
            reachable &= kb.incidence[keep[lower]].sum(axis=0) > 0
        keep[upper] = list(np.flatnonzero(reachable))
        if not keep[upper]:
            raise KnowledgeError(f"no '{upper}' node is reachable from the measured genes")
    if all(len(keep[lv]) == kb.count(lv) for lv in kb.levels):
        return kb
    nodes = {lv: [kb.nodes[lv][i] for i in keep[lv]] for lv in kb.levels}
    adjacency = {lv: kb.adjacency[lv][np.ix_(keep[lv], keep[lv])] for lv in kb.levels}
    mappings = {lo: kb.mappings[lo][np.ix_(keep[hi], keep[lo])]
                for lo, hi in zip(kb.levels, kb.levels[1:])}
    incidence = None
    if kb.incidence is not None:
        incidence = kb.incidence[np.ix_(keep[kb.member_level], keep[kb.levels[-1]])]
    return build_knowledge(kb.levels, nodes, adjacency, mappings, incidence, kb.member_level)


def remove_node_edges(kb: KnowledgeBase, level: str, node: str) -> KnowledgeBase:
    """Isolate ``node``: zero its row and column in the level's adjacency."""
    i = kb.index(level, node)
    A = np.array(kb.adjacency[level])
    if not A[i].any() and not A[:, i].any():
        return kb
    A[i, :] = 0.0
    A[:, i] = 0.0
    adjacency = dict(kb.adjacency)
    adjacency[level] = _frozen(A)
    return replace(kb, adjacency=adjacency)

"""PMI skill network and Louvain community detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import JobPosting, SkillVocabulary
from .errors import DomainError


@dataclass
class PmiMatrix:
    skills: list[str]
    pmi: sp.csr_matrix  # symmetric, zero diagonal; only co-present pairs stored
    joint: sp.csr_matrix
    marginal: np.ndarray

    def value(self, a: str, b: str) -> float | None:
        """PMI of two skills, or None when they are never co-present."""
        i, j = self.skills.index(a), self.skills.index(b)
        if self.joint[i, j] == 0:
            return None
        return float(self.pmi[i, j])


@dataclass
class PmiGraph:
    skills: list[str]
    adjacency: sp.csr_matrix  # symmetric, positive weights, no self-loops

    @property
    def n_nodes(self) -> int:
        return len(self.skills)

    def edges(self):
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[i]), int(upper.col[i]), float(upper.data[i])) for i in order]

    @classmethod
    def from_edges(cls, n_nodes: int, edges, skills=None) -> "PmiGraph":
        rows, cols, data = [], [], []
        for e in edges:
            i, j, w = (*e, 1.0) if len(e) == 2 else e
            if i == j:
                continue
            rows += [i, j]
            cols += [j, i]
            data += [float(w), float(w)]
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes))
        skills = list(skills) if skills is not None else [str(i) for i in range(n_nodes)]
        return cls(skills, adj)


@dataclass
class Partition:
    labels: np.ndarray  # node -> community, dense 0..C-1
    modularity: float
    history: list[float] = field(default_factory=list)

    @property
    def n_communities(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def as_dict(self, skills) -> dict[str, int]:
        return {s: int(c) for s, c in zip(skills, self.labels)}


def _incidence(postings, vocabulary: SkillVocabulary, indicator: str):
    rows, cols, vals = [], [], []
    for v, p in enumerate(postings):
        w = 1.0 / len(p.skills) if indicator == "uniform" else 1.0
        for s in p.skills:
            rows.append(v)
            cols.append(vocabulary.id(s))
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(postings), len(vocabulary)))


def pmi_matrix(postings: list[JobPosting], vocabulary: SkillVocabulary | None = None,
               indicator: str = "uniform") -> PmiMatrix:
    """PMI log(p_ij / (p_i p_j)) from same-post co-presence.

    With ``indicator="uniform"`` a post spreads unit mass evenly over its
    listed skills, p(i|v) = 1/|v|; ``"binary"`` uses p(i|v) = 1.
    Every post has p(v) = 1/#posts.
    """
    if indicator not in ("uniform", "binary"):
        raise ValueError(f"unknown indicator {indicator!r}")
    if not postings:
        raise DomainError("empty corpus")
    vocabulary = vocabulary or SkillVocabulary.from_postings(postings)
    M = _incidence(postings, vocabulary, indicator)
    n = len(postings)
    joint = (M.T @ M).tocsr() / n
    joint = (joint - sp.diags(joint.diagonal())).tocsr()
    joint.eliminate_zeros()
    marginal = np.asarray(M.sum(axis=0)).ravel() / n
    coo = joint.tocoo()
    vals = np.log(coo.data / (marginal[coo.row] * marginal[coo.col]))
    pmi = sp.csr_matrix((vals, (coo.row, coo.col)), shape=joint.shape)
    # log(1) == 0 entries must stay stored: they are co-present pairs
    return PmiMatrix(list(vocabulary.skills), pmi, joint.tocsr(), marginal)


def build_pmi_graph(pmi: PmiMatrix) -> PmiGraph:
    """Keep only positive-PMI pairs, weighted by their PMI."""
    coo = pmi.pmi.tocoo()
    keep = (coo.data > 0) & (coo.row != coo.col)
    adj = sp.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=pmi.pmi.shape)
    return PmiGraph(list(pmi.skills), adj)


def modularity(graph: PmiGraph | sp.spmatrix, labels) -> float:
    """Weighted Newman modularity Q = (1/2m) sum_ij [A_ij - k_i k_j / 2m] d(c_i, c_j)."""
    A = graph.adjacency if isinstance(graph, PmiGraph) else sp.csr_matrix(graph)
    labels = np.asarray(labels)
    if len(labels) != A.shape[0]:
        raise ValueError("partition must cover every node")
    two_m = A.sum()
    if two_m <= 0:
        raise DomainError("graph has no edge weight")
    k = np.asarray(A.sum(axis=1)).ravel()
    coo = A.tocoo()
    inside = coo.data[labels[coo.row] == labels[coo.col]].sum()
    _, inv = np.unique(labels, return_inverse=True)
    tot = np.bincount(inv, weights=k)
    return float(inside / two_m - np.sum(tot ** 2) / two_m ** 2)


def _local_moves(A: sp.csr_matrix, order, two_m: float, tol: float = 1e-12):
    """One Louvain phase on A (which may carry self-loops). Returns community per node."""
    n = A.shape[0]
    k = np.asarray(A.sum(axis=1)).ravel()
    comm = np.arange(n)
    tot = k.copy()
    indptr, indices, data = A.indptr, A.indices, A.data
    improved = True
    moved_any = False
    while improved:
        improved = False
        for i in order:
            ci = comm[i]
            links: dict[int, float] = {}
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + data[p]
            tot[ci] -= k[i]
            best, best_gain = ci, links.get(ci, 0.0) - tot[ci] * k[i] / two_m
            for c, w in links.items():
                gain = w - tot[c] * k[i] / two_m
                if gain > best_gain + tol:
                    best, best_gain = c, gain
            tot[best] += k[i]
            if best != ci:
                comm[i] = best
                improved = True
                moved_any = True
    _, comm = np.unique(comm, return_inverse=True)
    return comm, moved_any


def louvain_partition(graph: PmiGraph, seed: int = 0, max_levels: int = 100) -> Partition:
    """Two-phase Louvain: greedy local moves, then aggregation, repeated until stable.

    Nodes are visited in a seed-determined permutation of their ids, so the
    result is deterministic for a given seed. ``history`` holds the
    modularity of the original graph after each level.
    """
    A = graph.adjacency.tocsr().astype(float)
    n = A.shape[0]
    if n == 0:
        raise DomainError("empty graph")
    two_m = A.sum()
    if two_m <= 0:
        return Partition(np.arange(n), 0.0, [])
    rng = np.random.default_rng(seed)
    labels = np.arange(n)
    history = [modularity(A, labels)]
    level_graph = A
    for _ in range(max_levels):
        order = rng.permutation(level_graph.shape[0])
        comm, moved = _local_moves(level_graph, order, two_m)
        if not moved:
            break
        labels = comm[labels]
        history.append(modularity(A, labels))
        S = sp.csr_matrix((np.ones(len(comm)), (np.arange(len(comm)), comm)))
        level_graph = (S.T @ level_graph @ S).tocsr()
    return Partition(_first_seen(labels), history[-1], history)


def _first_seen(labels) -> np.ndarray:
    relabel: dict[int, int] = {}
    out = np.empty(len(labels), dtype=int)
    for i, c in enumerate(labels):
        out[i] = relabel.setdefault(int(c), len(relabel))
    return out

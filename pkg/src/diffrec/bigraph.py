"""Immutable rating-weighted bipartite graph with similarity attachment points."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from diffrec.corpus import RatingDataset, RatingScale
from diffrec.simkit import SimilarityMatrix


class GraphError(ValueError):
    """Raised for invalid graph construction or attachment."""


@dataclass(frozen=True)
class BipartiteGraph:
    """Dual-orientation sparse user-item graph with rating edge weights.

    `weights` is users x items CSR; `weights_t` the items x users CSC view
    re-packed as CSR so both orientations iterate in sorted id order.
    Attached similarity matrices stand in for node self-connections: they
    carry node-to-node similarity into walk-based recommenders without
    altering the walk topology.
    """

    n_users: int
    n_items: int
    weights: sp.csr_matrix
    weights_t: sp.csr_matrix
    adjacency: sp.csr_matrix
    adjacency_t: sp.csr_matrix
    user_degree: np.ndarray
    item_degree: np.ndarray
    user_weight_sum: np.ndarray
    item_weight_sum: np.ndarray
    scale: RatingScale
    item_sim: SimilarityMatrix | None = None
    user_sim: SimilarityMatrix | None = None

    @property
    def n_links(self) -> int:
        return int(self.weights.nnz)

    def user_items(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Items rated by user u with edge weights, sorted by item id."""
        row = self.weights
        lo, hi = row.indptr[u], row.indptr[u + 1]
        return row.indices[lo:hi], row.data[lo:hi]

    def item_users(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Users who rated item i with edge weights, sorted by user id."""
        row = self.weights_t
        lo, hi = row.indptr[i], row.indptr[i + 1]
        return row.indices[lo:hi], row.data[lo:hi]

    def dump_csv(self, path) -> None:
        """Edge list dump (user,item,weight) for oracle cross-checks."""
        coo = self.weights.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "item", "weight"])
            for n in order:
                writer.writerow([int(coo.row[n]), int(coo.col[n]), float(coo.data[n])])


def build_graph(train: RatingDataset) -> BipartiteGraph:
    """Build the weighted graph from a training dataset.

    Edge weights are the ratings; a rating of exactly 0 (possible on
    scales starting at 0) is clamped to one scale step so the edge still
    conducts resource in weight-normalized walks.
    """
    if train.n_links == 0:
        raise GraphError("cannot build a graph from an empty dataset")
    weights = train.ratings.copy()
    weights[weights == 0.0] = train.scale.step
    shape = (train.n_users, train.n_items)
    w = sp.csr_matrix((weights, (train.users, train.items)), shape=shape)
    w.sort_indices()
    wt = w.T.tocsr()
    wt.sort_indices()
    a = w.copy()
    a.data = np.ones_like(a.data)
    at = wt.copy()
    at.data = np.ones_like(at.data)
    return BipartiteGraph(
        n_users=train.n_users,
        n_items=train.n_items,
        weights=w,
        weights_t=wt,
        adjacency=a,
        adjacency_t=at,
        user_degree=np.diff(w.indptr).astype(np.int64),
        item_degree=np.diff(wt.indptr).astype(np.int64),
        user_weight_sum=np.asarray(w.sum(axis=1)).ravel(),
        item_weight_sum=np.asarray(wt.sum(axis=1)).ravel(),
        scale=train.scale,
    )


def attach_similarity(
    g: BipartiteGraph,
    item_sim: SimilarityMatrix,
    user_sim: SimilarityMatrix | None = None,
) -> BipartiteGraph:
    """Return a graph carrying read-only node similarity matrices.

    Self-similarity is forced to 1 on the attached copy.
    """
    item_sim = _check_attachment(item_sim, "items", g.n_items)
    if user_sim is not None:
        user_sim = _check_attachment(user_sim, "users", g.n_users)
    return replace(g, item_sim=item_sim, user_sim=user_sim)


def _check_attachment(sim: SimilarityMatrix, axis: str, n: int) -> SimilarityMatrix:
    if sim.axis != axis:
        raise GraphError(f"expected {axis}-axis similarity, got {sim.axis}")
    if sim.values.shape != (n, n):
        raise GraphError(
            f"similarity dimension {sim.values.shape} does not match {axis} count {n}"
        )
    if not sim.normalized:
        raise GraphError("attached similarity must be normalized to [0, 1]")
    values = sim.values.copy()
    np.fill_diagonal(values, 1.0)
    defined = sim.defined.copy()
    np.fill_diagonal(defined, True)
    return SimilarityMatrix(axis=sim.axis, values=values, defined=defined, normalized=True)

"""Importance-based neighbor sampling.

A neighbor's tightness to the central node is its rating level on the shared
edge divided by the neighbor's own degree, so strong ratings to selective
neighbors score highest; on binarized data without level variation this
degenerates to inverse-degree weighting.  Scores are the tightness values
normalized to sum to one over the center's neighbors.

Sampling is stateless given the immutable graph.  Proportional mode derives
its RNG from (seed, side, center), so concurrent callers and repeated calls
are reproducible without shared state.
"""

from __future__ import annotations

import numpy as np

from .config import ImportanceConfig
from .graph_store import InteractionGraph


def _adjacency(graph: InteractionGraph, side: str, center: int):
    if side == "user":
        ptr, idx, rat, n = graph.user_ptr, graph.user_items, graph.user_ratings, graph.n_users
        other_ptr = graph.item_ptr
    elif side == "item":
        ptr, idx, rat, n = graph.item_ptr, graph.item_users, graph.item_ratings, graph.n_items
        other_ptr = graph.user_ptr
    else:
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")
    if not 0 <= center < n:
        raise IndexError(f"{side} index {center} out of range [0, {n})")
    lo, hi = ptr[center], ptr[center + 1]
    return idx[lo:hi], rat[lo:hi], other_ptr


def importance_scores(
    graph: InteractionGraph, side: str, center: int
) -> list[tuple[int, float]]:
    """Normalized tightness of each neighbor to the center; sums to 1."""
    nbrs, ratings, other_ptr = _adjacency(graph, side, center)
    if nbrs.size == 0:
        return []
    degrees = (other_ptr[nbrs + 1] - other_ptr[nbrs]).astype(np.float64)
    w = ratings.astype(np.float64) / degrees
    scores = w / w.sum()
    return list(zip(nbrs.tolist(), scores.tolist()))


def sample_neighbors(
    graph: InteractionGraph, side: str, center: int, config: ImportanceConfig
) -> list[int]:
    """Select at most `config.size` high-importance neighbors of the center.

    top-k mode picks the highest-scoring neighbors (ties broken by ascending
    index) and ignores the seed entirely; proportional mode draws without
    replacement with probability proportional to score.  Nodes with degree at
    or under the budget keep their full neighbor list unchanged.
    """
    config.validate()
    scored = importance_scores(graph, side, center)
    if len(scored) <= config.size:
        return [n for n, _ in scored]
    if config.mode == "top-k":
        ranked = sorted(scored, key=lambda ns: (-ns[1], ns[0]))
        return [n for n, _ in ranked[: config.size]]
    nbrs = np.array([n for n, _ in scored], dtype=np.int64)
    p = np.array([s for _, s in scored], dtype=np.float64)
    p = p / p.sum()
    side_code = 0 if side == "user" else 1
    rng = np.random.default_rng([config.seed, side_code, center])
    picked = rng.choice(nbrs.size, size=config.size, replace=False, p=p)
    return nbrs[picked].tolist()

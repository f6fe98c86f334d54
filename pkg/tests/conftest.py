import numpy as np
import pytest

from gnnrec.graph_store import InteractionGraph


@pytest.fixture
def tiny_graph() -> InteractionGraph:
    """2 users x 2 items, 3 edges: u0-{i0:5, i1:3}, u1-{i0:4}."""
    edges = np.array([[0, 0, 5], [0, 1, 3], [1, 0, 4]])
    return InteractionGraph(2, 2, 5, edges, ("1", "2"), ("10", "11"))


def random_bipartite(n_users, n_items, n_edges, seed, n_levels=5) -> InteractionGraph:
    """Random duplicate-free bipartite graph where user 0 owns edge (0, 0)."""
    rng = np.random.default_rng(seed)
    pairs = {(0, 0)}
    while len(pairs) < min(n_edges, n_users * n_items):
        pairs.add((int(rng.integers(n_users)), int(rng.integers(n_items))))
    edges = np.array(
        [(u, i, int(rng.integers(1, n_levels + 1))) for u, i in sorted(pairs)]
    )
    return InteractionGraph(
        n_users, n_items, n_levels, edges,
        tuple(f"u{j}" for j in range(n_users)),
        tuple(f"i{j}" for j in range(n_items)),
    )


def movielens_lines(records) -> str:
    return "".join(f"{u}::{i}::{r}::{t}\n" for u, i, r, t in records)


@pytest.fixture
def movielens_fixture(tmp_path):
    """The 3-line ratings fixture: 3 records, 2 users, 2 items."""
    path = tmp_path / "ratings.dat"
    path.write_text(movielens_lines([(1, 10, 5, 0), (1, 11, 3, 0), (2, 10, 4, 0)]))
    return path


def synthetic_ratings(path, n_users=60, n_items=45, n_blocks=3, seed=7,
                      p_in=0.55, p_out=0.04):
    """Block-structured implicit data: users mostly rate items of their block.

    Written in MovieLens format so it flows through the normal ingest path.
    """
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(1, n_users + 1):
        block = u % n_blocks
        for i in range(1, n_items + 1):
            p = p_in if i % n_blocks == block else p_out
            if rng.random() < p:
                rating = int(rng.integers(4, 6)) if i % n_blocks == block else int(rng.integers(1, 4))
                lines.append(f"{u}::{i}::{rating}::{u * 1000 + i}\n")
    path.write_text("".join(lines))
    return path

"""Ratings ingestion and the immutable bipartite interaction graph.

Ratings files are parsed into a :class:`RatingsTable`, optionally filtered,
then binarized by presence into an :class:`InteractionGraph`: every observed
(user, item) pair becomes one edge, with the original integer rating level
kept as an edge attribute.  Adjacency is stored CSR-style in both directions
with read-only numpy arrays, so a finished graph is safe to share across
sampler, trainer, and evaluation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SplitSpec
from .errors import DataError, ParseError, SnapshotError

Record = tuple[str, str, int, int | None]  # user key, item key, rating level, timestamp


@dataclass
class RatingsTable:
    """Raw parsed ratings; may contain duplicate (user, item) pairs."""

    records: list[Record]
    n_levels: int
    n_malformed: int = 0

    def n_records(self) -> int:
        return len(self.records)

    def distinct_users(self) -> int:
        return len({r[0] for r in self.records})

    def distinct_items(self) -> int:
        return len({r[1] for r in self.records})


class InteractionGraph:
    """Immutable bipartite user-item graph with rating levels on edges.

    Adjacency lists are sorted by neighbor index and stored as CSR arrays in
    both directions; the two directions are exact transposes of each other.
    """

    def __init__(
        self,
        n_users: int,
        n_items: int,
        n_levels: int,
        edges: np.ndarray,
        user_keys: tuple[str, ...],
        item_keys: tuple[str, ...],
    ):
        if n_users <= 0 or n_items <= 0:
            raise DataError("graph must have at least one user and one item")
        if len(user_keys) != n_users or len(item_keys) != n_items:
            raise DataError("key lists must match user/item counts")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
        if edges.size:
            if edges[:, 0].min() < 0 or edges[:, 0].max() >= n_users:
                raise DataError("edge user index out of range")
            if edges[:, 1].min() < 0 or edges[:, 1].max() >= n_items:
                raise DataError("edge item index out of range")
            if edges[:, 2].min() < 1 or edges[:, 2].max() > n_levels:
                raise DataError(f"edge rating level outside 1..{n_levels}")
        self.n_users = n_users
        self.n_items = n_items
        self.n_levels = n_levels
        self.user_keys = tuple(user_keys)
        self.item_keys = tuple(item_keys)
        self.user_index = {k: i for i, k in enumerate(self.user_keys)}
        self.item_index = {k: i for i, k in enumerate(self.item_keys)}
        self.user_ptr, self.user_items, self.user_ratings = _build_csr(
            n_users, edges[:, 0], edges[:, 1], edges[:, 2]
        )
        self.item_ptr, self.item_users, self.item_ratings = _build_csr(
            n_items, edges[:, 1], edges[:, 0], edges[:, 2]
        )
        if edges.shape[0] > 1:
            rows = np.repeat(np.arange(n_users), np.diff(self.user_ptr))
            dup = (rows[1:] == rows[:-1]) & (self.user_items[1:] == self.user_items[:-1])
            if np.any(dup):
                raise DataError("duplicate (user, item) edge")
        for arr in (
            self.user_ptr, self.user_items, self.user_ratings,
            self.item_ptr, self.item_users, self.item_ratings,
        ):
            arr.flags.writeable = False

    @property
    def n_edges(self) -> int:
        return int(self.user_items.shape[0])

    def user_degree(self, u: int) -> int:
        return int(self.user_ptr[u + 1] - self.user_ptr[u])

    def item_degree(self, i: int) -> int:
        return int(self.item_ptr[i + 1] - self.item_ptr[i])

    def edge_array(self) -> np.ndarray:
        """All edges as an (E, 3) array of (user, item, rating), user-major."""
        out = np.empty((self.n_edges, 3), dtype=np.int64)
        out[:, 0] = np.repeat(np.arange(self.n_users), np.diff(self.user_ptr))
        out[:, 1] = self.user_items
        out[:, 2] = self.user_ratings
        return out

    def user_item_set(self, u: int) -> set[int]:
        return set(self.user_items[self.user_ptr[u] : self.user_ptr[u + 1]].tolist())


def _build_csr(n_rows: int, rows, cols, vals):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.int64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, cols, vals


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_RATING_LEVELS = 5  # both supported datasets rate on a 1..5 scale


def _parse_lines(path, split_line, strict: bool) -> RatingsTable:
    records: list[Record] = []
    n_malformed = 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read ratings file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = split_line(line)
            if rec is None:
                if strict:
                    raise ParseError(f"{path}: malformed line {lineno}: {line!r}")
                n_malformed += 1
                continue
            records.append(rec)
    return RatingsTable(records, n_levels=_RATING_LEVELS, n_malformed=n_malformed)


def _movielens_line(line: str) -> Record | None:
    parts = line.split("::")
    if len(parts) != 4:
        return None
    try:
        user, item, rating, ts = parts[0], parts[1], int(parts[2]), int(parts[3])
        int(user), int(item)
    except ValueError:
        return None
    if not 1 <= rating <= _RATING_LEVELS:
        return None
    return (user, item, rating, ts)


def _amazon_line(line: str) -> Record | None:
    parts = line.split(",")
    if len(parts) not in (3, 4):
        return None
    user, item = parts[0].strip(), parts[1].strip()
    if not user or not item:
        return None
    try:
        rating = int(float(parts[2]))  # fractional ratings truncate to a level
        ts = int(float(parts[3])) if len(parts) == 4 else None
    except ValueError:
        return None
    if not 1 <= rating <= _RATING_LEVELS:
        return None
    return (user, item, rating, ts)


def parse_movielens(path, strict: bool = False) -> RatingsTable:
    """Parse `UserID::MovieID::Rating::Timestamp` lines."""
    return _parse_lines(path, _movielens_line, strict)


def parse_amazon(path, strict: bool = False) -> RatingsTable:
    """Parse comma-separated `user,item,rating,timestamp` lines."""
    return _parse_lines(path, _amazon_line, strict)


# ---------------------------------------------------------------------------
# table transforms
# ---------------------------------------------------------------------------


def deduplicate(table: RatingsTable) -> RatingsTable:
    """Keep one record per (user, item): the one with the latest timestamp.

    Timestamp ties (and missing timestamps) resolve to the later record in
    file order, so the result is deterministic.
    """
    best: dict[tuple[str, str], tuple[int, Record]] = {}
    for rec in table.records:
        ts = rec[3] if rec[3] is not None else -1
        key = (rec[0], rec[1])
        if key not in best or ts >= best[key][0]:
            best[key] = (ts, rec)
    order: dict[tuple[str, str], int] = {}
    for rec in table.records:
        order.setdefault((rec[0], rec[1]), len(order))
    kept = sorted(best.items(), key=lambda kv: order[kv[0]])
    return RatingsTable([rec for _, (_, rec) in kept], table.n_levels, table.n_malformed)


def filter_min_interactions(table: RatingsTable, k: int) -> RatingsTable:
    """Drop users with fewer than k records.  Single pass over users only."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return RatingsTable(list(table.records), table.n_levels, table.n_malformed)
    counts = Counter(rec[0] for rec in table.records)
    kept = [rec for rec in table.records if counts[rec[0]] >= k]
    return RatingsTable(kept, table.n_levels, table.n_malformed)


def to_implicit(table: RatingsTable) -> InteractionGraph:
    """Binarize by presence: every observed (user, item) pair becomes an edge.

    Dense indices are assigned in first-seen file order; the rating level is
    retained on the edge.  Duplicates collapse via :func:`deduplicate`.
    """
    if not table.records:
        raise DataError("cannot build a graph from an empty ratings table")
    deduped = deduplicate(table)
    user_keys: list[str] = []
    item_keys: list[str] = []
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    for rec in table.records:  # first-seen order over the raw records
        if rec[0] not in user_index:
            user_index[rec[0]] = len(user_keys)
            user_keys.append(rec[0])
        if rec[1] not in item_index:
            item_index[rec[1]] = len(item_keys)
            item_keys.append(rec[1])
    edges = np.array(
        [(user_index[u], item_index[i], r) for u, i, r, _ in deduped.records],
        dtype=np.int64,
    )
    return InteractionGraph(
        len(user_keys), len(item_keys), table.n_levels, edges,
        tuple(user_keys), tuple(item_keys),
    )


# ---------------------------------------------------------------------------
# graph queries
# ---------------------------------------------------------------------------


def density(graph: InteractionGraph) -> float:
    """Edge count over the user x item interaction-matrix size."""
    if graph.n_users <= 0 or graph.n_items <= 0:
        raise DataError("density undefined for a degenerate graph")
    return graph.n_edges / (graph.n_users * graph.n_items)


def adjacency_density(graph: InteractionGraph) -> float:
    """Edge count over the square adjacency matrix of all nodes combined."""
    n = graph.n_users + graph.n_items
    return graph.n_edges / (n * n)


def neighbors(graph: InteractionGraph, side: str, index: int) -> list[tuple[int, int]]:
    """Sorted (neighbor index, rating level) pairs of one node."""
    if side == "user":
        ptr, idx, rat, n = graph.user_ptr, graph.user_items, graph.user_ratings, graph.n_users
    elif side == "item":
        ptr, idx, rat, n = graph.item_ptr, graph.item_users, graph.item_ratings, graph.n_items
    else:
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")
    if not 0 <= index < n:
        raise IndexError(f"{side} index {index} out of range [0, {n})")
    lo, hi = ptr[index], ptr[index + 1]
    return list(zip(idx[lo:hi].tolist(), rat[lo:hi].tolist()))


# ---------------------------------------------------------------------------
# splitting and subsampling
# ---------------------------------------------------------------------------


def split_train_test(
    graph: InteractionGraph, spec: SplitSpec
) -> tuple[InteractionGraph, list[tuple[int, int, int]]]:
    """Hold out ceil(test_fraction * degree) edges per user, seeded.

    Users with fewer than two edges keep all edges in train; every user keeps
    at least one training edge.  Train and test partition the original edges.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    train_rows: list[np.ndarray] = []
    test_edges: list[tuple[int, int, int]] = []
    for u in range(graph.n_users):
        lo, hi = graph.user_ptr[u], graph.user_ptr[u + 1]
        deg = int(hi - lo)
        items = graph.user_items[lo:hi]
        ratings = graph.user_ratings[lo:hi]
        if deg < 2:
            n_hold = 0
        else:
            n_hold = min(math.ceil(spec.test_fraction * deg), deg - 1)
        if n_hold:
            held = np.sort(rng.permutation(deg)[:n_hold])
        else:
            held = np.empty(0, dtype=np.int64)
        mask = np.ones(deg, dtype=bool)
        mask[held] = False
        for j in held:
            test_edges.append((u, int(items[j]), int(ratings[j])))
        kept = np.empty((int(mask.sum()), 3), dtype=np.int64)
        kept[:, 0] = u
        kept[:, 1] = items[mask]
        kept[:, 2] = ratings[mask]
        train_rows.append(kept)
    train_edges = np.concatenate(train_rows) if train_rows else np.empty((0, 3), dtype=np.int64)
    train = InteractionGraph(
        graph.n_users, graph.n_items, graph.n_levels, train_edges,
        graph.user_keys, graph.item_keys,
    )
    return train, test_edges


def remove_edges(
    graph: InteractionGraph, edges: list[tuple[int, int, int]]
) -> InteractionGraph:
    """Copy of the graph without the given (user, item, rating) edges."""
    if not edges:
        return graph
    drop = np.array([u * graph.n_items + i for u, i, _ in edges], dtype=np.int64)
    all_edges = graph.edge_array()
    keys = all_edges[:, 0] * graph.n_items + all_edges[:, 1]
    kept = all_edges[~np.isin(keys, drop)]
    return InteractionGraph(
        graph.n_users, graph.n_items, graph.n_levels, kept,
        graph.user_keys, graph.item_keys,
    )


def write_test_manifest(edges: list[tuple[int, int, int]], path) -> None:
    lines = ["user_idx,item_idx,rating"]
    lines += [f"{u},{i},{r}" for u, i, r in edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_test_manifest(path) -> list[tuple[int, int, int]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "user_idx,item_idx,rating":
        raise SnapshotError(f"{path}: not a split manifest")
    out = []
    for line in lines[1:]:
        u, i, r = line.split(",")
        out.append((int(u), int(i), int(r)))
    return out


def subsample_users(table: RatingsTable, fraction: float, seed: int) -> RatingsTable:
    """Keep a seeded random fraction of distinct users (all their records)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    users: list[str] = []
    seen: set[str] = set()
    for rec in table.records:
        if rec[0] not in seen:
            seen.add(rec[0])
            users.append(rec[0])
    m = max(1, math.ceil(fraction * len(users)))
    rng = np.random.default_rng(seed)
    chosen = set(np.array(users, dtype=object)[rng.permutation(len(users))[:m]].tolist())
    kept = [rec for rec in table.records if rec[0] in chosen]
    return RatingsTable(kept, table.n_levels, table.n_malformed)


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

_GRAPH_MAGIC = "GNNREC-GRAPH v1"


def save_graph(graph: InteractionGraph, path) -> None:
    """Write the versioned adjacency snapshot plus a `.ids` key sidecar."""
    path = Path(path)
    lines = [_GRAPH_MAGIC]
    lines.append(
        f"users {graph.n_users} items {graph.n_items} "
        f"edges {graph.n_edges} levels {graph.n_levels}"
    )
    for u in range(graph.n_users):
        lo, hi = graph.user_ptr[u], graph.user_ptr[u + 1]
        pairs = ",".join(
            f"{int(i)}:{int(r)}"
            for i, r in zip(graph.user_items[lo:hi], graph.user_ratings[lo:hi])
        )
        lines.append(f"{u}\t{pairs}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    ids = Path(str(path) + ".ids")
    ids.write_text(
        "users\t" + "\t".join(graph.user_keys) + "\n"
        "items\t" + "\t".join(graph.item_keys) + "\n",
        encoding="utf-8",
        newline="\n",
    )


def load_graph(path) -> InteractionGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read graph snapshot {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0] != _GRAPH_MAGIC:
        raise SnapshotError(f"{path}: not a graph snapshot")
    header = lines[1].split()
    try:
        counts = {header[i]: int(header[i + 1]) for i in range(0, len(header), 2)}
        n_users, n_items = counts["users"], counts["items"]
        n_edges, n_levels = counts["edges"], counts["levels"]
    except (IndexError, KeyError, ValueError) as exc:
        raise SnapshotError(f"{path}: bad counts line") from exc
    edges = []
    for line in lines[2 : 2 + n_users]:
        user_part, _, pairs = line.partition("\t")
        u = int(user_part)
        if pairs:
            for pair in pairs.split(","):
                i, _, r = pair.partition(":")
                edges.append((u, int(i), int(r)))
    if len(edges) != n_edges:
        raise SnapshotError(f"{path}: expected {n_edges} edges, found {len(edges)}")
    ids = Path(str(path) + ".ids")
    if ids.exists():
        id_lines = ids.read_text(encoding="utf-8").splitlines()
        user_keys = tuple(id_lines[0].split("\t")[1:])
        item_keys = tuple(id_lines[1].split("\t")[1:])
        if len(user_keys) != n_users or len(item_keys) != n_items:
            raise SnapshotError(f"{ids}: key counts do not match the graph")
    else:
        user_keys = tuple(str(u) for u in range(n_users))
        item_keys = tuple(str(i) for i in range(n_items))
    edge_arr = np.array(edges, dtype=np.int64) if edges else np.empty((0, 3), dtype=np.int64)
    return InteractionGraph(n_users, n_items, n_levels, edge_arr, user_keys, item_keys)

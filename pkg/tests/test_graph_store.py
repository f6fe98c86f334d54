"""Parsing, binarization, adjacency invariants, splitting, snapshots."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gnnrec.graph_store as gs
from gnnrec.config import SplitSpec
from gnnrec.errors import DataError, ParseError, SnapshotError
from conftest import movielens_lines, random_bipartite


# ---------------------------------------------------------------------------
# parsers
# ---------------------------------------------------------------------------


def test_parse_movielens_fixture(movielens_fixture):
    table = gs.parse_movielens(movielens_fixture)
    assert table.n_records() == 3
    assert table.distinct_users() == 2
    assert table.distinct_items() == 2
    assert table.n_malformed == 0


def test_parse_movielens_empty(tmp_path):
    path = tmp_path / "empty.dat"
    path.write_text("")
    assert gs.parse_movielens(path).n_records() == 0


def test_parse_movielens_malformed_counted(tmp_path):
    path = tmp_path / "bad.dat"
    path.write_text("1::10::5::0\nnot-a-line\n2::7::9::0\n3::4::2::11\n")
    table = gs.parse_movielens(path)  # rating 9 is out of the 1..5 range
    assert table.n_records() == 2
    assert table.n_malformed == 2


def test_parse_movielens_strict_reports_line(tmp_path):
    path = tmp_path / "bad.dat"
    path.write_text("1::10::5::0\ngarbage\n")
    with pytest.raises(ParseError, match="line 2"):
        gs.parse_movielens(path, strict=True)


def test_parse_unreadable_file(tmp_path):
    with pytest.raises(OSError):
        gs.parse_movielens(tmp_path / "missing.dat")


def test_parse_amazon_fixture(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text("A1,B9,5.0,111\nA2,B9,3.7,222\n")
    table = gs.parse_amazon(path)
    assert table.n_records() == 2
    assert table.records[1][2] == 3  # 3.7 truncates to level 3
    assert table.distinct_users() == 2 and table.distinct_items() == 1


def test_parse_amazon_empty(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text("")
    assert gs.parse_amazon(path).n_records() == 0


# ---------------------------------------------------------------------------
# table transforms
# ---------------------------------------------------------------------------


def test_deduplicate_keeps_latest_timestamp():
    table = gs.RatingsTable(
        [("u", "i", 2, 100), ("u", "i", 5, 50), ("u", "j", 1, 10), ("u", "i", 4, 100)],
        n_levels=5,
    )
    deduped = gs.deduplicate(table)
    assert deduped.n_records() == 2
    # ts=100 beats ts=50; the tie at ts=100 resolves to the later record
    assert deduped.records[0] == ("u", "i", 4, 100)


def test_filter_min_interactions_zero_is_noop(movielens_fixture):
    table = gs.parse_movielens(movielens_fixture)
    assert gs.filter_min_interactions(table, 0).records == table.records


def test_filter_min_interactions_threshold():
    records = [("u1", f"i{j}", 3, j) for j in range(5)] + [("u2", "i0", 4, 0), ("u2", "i1", 4, 1)]
    table = gs.RatingsTable(records, n_levels=5)
    kept = gs.filter_min_interactions(table, 5)
    assert {r[0] for r in kept.records} == {"u1"}
    assert kept.n_records() == 5


def test_filter_min_interactions_removes_all():
    table = gs.RatingsTable([("u", "i", 1, 0)], n_levels=5)
    assert gs.filter_min_interactions(table, 99).n_records() == 0


def test_to_implicit_single_record():
    graph = gs.to_implicit(gs.RatingsTable([("u", "i", 4, 0)], n_levels=5))
    assert (graph.n_users, graph.n_items, graph.n_edges) == (1, 1, 1)
    assert gs.neighbors(graph, "user", 0) == [(0, 4)]


def test_to_implicit_empty_rejected():
    with pytest.raises(DataError):
        gs.to_implicit(gs.RatingsTable([], n_levels=5))


def test_to_implicit_fixture_graph(movielens_fixture):
    graph = gs.to_implicit(gs.parse_movielens(movielens_fixture))
    assert (graph.n_users, graph.n_items, graph.n_edges) == (2, 2, 3)
    # first-seen order: user "1" -> 0, item "10" -> 0
    assert graph.user_keys == ("1", "2") and graph.item_keys == ("10", "11")
    assert gs.neighbors(graph, "user", 0) == [(0, 5), (1, 3)]
    assert gs.neighbors(graph, "item", 0) == [(0, 5), (1, 4)]


def test_to_implicit_preserves_deduped_count():
    table = gs.RatingsTable(
        [("a", "x", 1, 0), ("a", "x", 3, 9), ("b", "x", 2, 0)], n_levels=5
    )
    graph = gs.to_implicit(table)
    assert graph.n_edges == 2
    assert gs.neighbors(graph, "user", 0) == [(0, 3)]


# ---------------------------------------------------------------------------
# graph queries
# ---------------------------------------------------------------------------


def test_density_complete_graph():
    edges = [(u, i, 1) for u in range(2) for i in range(2)]
    graph = gs.InteractionGraph(2, 2, 5, np.array(edges), ("a", "b"), ("x", "y"))
    assert gs.density(graph) == 1.0


def test_density_direct_division():
    edges = np.array([[0, 0, 1], [0, 1, 1], [1, 2, 1]])
    graph = gs.InteractionGraph(2, 3, 5, edges, ("a", "b"), ("x", "y", "z"))
    assert gs.density(graph) == 0.5
    assert gs.adjacency_density(graph) == 3 / 25


def test_neighbors_isolated_and_bounds(tiny_graph):
    edges = np.array([[0, 0, 1]])
    graph = gs.InteractionGraph(2, 1, 5, edges, ("a", "b"), ("x",))
    assert gs.neighbors(graph, "user", 1) == []
    with pytest.raises(IndexError):
        gs.neighbors(tiny_graph, "user", 2)
    with pytest.raises(IndexError):
        gs.neighbors(tiny_graph, "item", -1)


def test_duplicate_edges_rejected():
    edges = np.array([[0, 0, 1], [0, 0, 2]])
    with pytest.raises(DataError):
        gs.InteractionGraph(1, 1, 5, edges, ("a",), ("x",))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_transpose_consistency(seed):
    graph = random_bipartite(n_users=6, n_items=5, n_edges=14, seed=seed)
    forward = {
        (u, i, r) for u in range(6) for i, r in gs.neighbors(graph, "user", u)
    }
    backward = {
        (u, i, r) for i in range(5) for u, r in gs.neighbors(graph, "item", i)
    }
    assert forward == backward
    assert len(forward) == graph.n_edges
    for u in range(6):
        nbrs = [i for i, _ in gs.neighbors(graph, "user", u)]
        assert nbrs == sorted(set(nbrs))


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def test_split_holds_out_ceil_fraction():
    edges = np.array([[0, i, 1] for i in range(10)])
    graph = gs.InteractionGraph(1, 10, 5, edges, ("u",), tuple(f"i{j}" for j in range(10)))
    train, test = gs.split_train_test(graph, SplitSpec(test_fraction=0.2, seed=1))
    assert len(test) == 2
    assert train.n_edges == 8


def test_split_degree_one_user_stays_in_train():
    edges = np.array([[0, 0, 1], [1, 0, 2], [1, 1, 3], [1, 2, 4], [1, 3, 5]])
    graph = gs.InteractionGraph(2, 4, 5, edges, ("a", "b"), ("w", "x", "y", "z"))
    train, test = gs.split_train_test(graph, SplitSpec(test_fraction=0.25, seed=3))
    assert all(u != 0 for u, _, _ in test)
    assert train.user_degree(0) == 1


def test_split_every_user_keeps_a_training_edge():
    # an aggressive fraction still leaves one edge per user in train
    graph = random_bipartite(5, 6, 18, seed=11)
    train, _ = gs.split_train_test(graph, SplitSpec(test_fraction=0.95, seed=5))
    for u in range(5):
        if graph.user_degree(u) > 0:
            assert train.user_degree(u) >= 1


def test_split_deterministic_and_partitions():
    graph = random_bipartite(7, 8, 30, seed=2)
    spec = SplitSpec(test_fraction=0.3, seed=99)
    train1, test1 = gs.split_train_test(graph, spec)
    train2, test2 = gs.split_train_test(graph, spec)
    assert test1 == test2
    assert np.array_equal(train1.edge_array(), train2.edge_array())
    combined = {tuple(e) for e in train1.edge_array()} | set(test1)
    assert combined == {tuple(e) for e in graph.edge_array()}
    assert train1.n_edges + len(test1) == graph.n_edges


def test_remove_edges_roundtrip():
    graph = random_bipartite(4, 4, 9, seed=8)
    train, test = gs.split_train_test(graph, SplitSpec(test_fraction=0.4, seed=0))
    rebuilt = gs.remove_edges(graph, test)
    assert np.array_equal(rebuilt.edge_array(), train.edge_array())


def test_subsample_users_deterministic():
    records = [(f"u{j}", "i", 3, j) for j in range(10)]
    table = gs.RatingsTable(records, n_levels=5)
    a = gs.subsample_users(table, 0.3, seed=4)
    b = gs.subsample_users(table, 0.3, seed=4)
    assert a.records == b.records
    assert a.distinct_users() == 3


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def test_graph_snapshot_roundtrip(tmp_path):
    graph = random_bipartite(5, 4, 12, seed=21)
    path = tmp_path / "graph.txt"
    gs.save_graph(graph, path)
    loaded = gs.load_graph(path)
    assert loaded.n_users == graph.n_users and loaded.n_items == graph.n_items
    assert loaded.n_levels == graph.n_levels
    assert np.array_equal(loaded.edge_array(), graph.edge_array())
    assert loaded.user_keys == graph.user_keys and loaded.item_keys == graph.item_keys
    # format: versioned header, counts, one tab-separated adjacency line per user
    lines = path.read_text().splitlines()
    assert lines[0] == "GNNREC-GRAPH v1"
    assert lines[1].split() == [
        "users", "5", "items", "4", "edges", str(graph.n_edges), "levels", "5",
    ]
    assert len(lines) == 2 + graph.n_users


def test_graph_snapshot_bad_magic(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("nope\n")
    with pytest.raises(SnapshotError):
        gs.load_graph(path)


def test_test_manifest_roundtrip(tmp_path):
    edges = [(0, 1, 5), (2, 3, 1)]
    path = tmp_path / "test_edges.csv"
    gs.write_test_manifest(edges, path)
    assert gs.read_test_manifest(path) == edges


def test_movielens_determinism(tmp_path):
    text = movielens_lines([(3, 7, 4, 5), (3, 8, 2, 6), (9, 7, 1, 2)])
    p1, p2 = tmp_path / "a.dat", tmp_path / "b.dat"
    p1.write_text(text)
    p2.write_text(text)
    g1 = gs.to_implicit(gs.parse_movielens(p1))
    g2 = gs.to_implicit(gs.parse_movielens(p2))
    assert np.array_equal(g1.edge_array(), g2.edge_array())
    assert g1.user_keys == g2.user_keys

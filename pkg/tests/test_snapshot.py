"""Model snapshot container: roundtrip, rebuild, compatibility errors."""

import numpy as np
import pytest

from gnnrec.bpr import BprModel
from gnnrec.config import ImportanceConfig, ModelConfig, RunConfig
from gnnrec.errors import SnapshotError
from gnnrec.model import Recommender
from gnnrec.snapshot import load_model_snapshot, rebuild_model, save_model_snapshot
from conftest import random_bipartite


def gnn_setup(seed=0):
    graph = random_bipartite(4, 5, 12, seed=seed)
    cfg = RunConfig()
    cfg.model = ModelConfig(d=3, layers=1, aggregator="pooling", head="mlp")
    cfg.sampler = ImportanceConfig(size=2, seed=5)
    model = Recommender(graph, cfg.model, cfg.sampler, init_seed=9)
    return graph, cfg, model


def test_gnn_snapshot_roundtrip(tmp_path):
    graph, cfg, model = gnn_setup()
    path = tmp_path / "model-gnn.snapshot"
    save_model_snapshot(model, graph, cfg, path)
    snap = load_model_snapshot(path)
    assert snap.config["kind"] == "gnn"
    assert snap.config["aggregator"] == "pooling"
    assert snap.user_keys == graph.user_keys
    assert snap.item_keys == graph.item_keys
    rebuilt = rebuild_model(snap, graph)
    for p, q in zip(model.parameters(), rebuilt.parameters()):
        assert p.name == q.name
        assert np.array_equal(p.value, q.value)
    # scoring through the rebuilt model matches the original exactly
    items = np.arange(5)
    assert np.array_equal(model.scorer().scores(1, items), rebuilt.scorer().scores(1, items))


def test_bpr_snapshot_roundtrip(tmp_path):
    graph = random_bipartite(3, 4, 8, seed=1)
    cfg = RunConfig()
    cfg.model = ModelConfig(kind="bpr", d=2)
    model = BprModel(3, 4, 2, seed=3)
    path = tmp_path / "model-bpr.snapshot"
    save_model_snapshot(model, graph, cfg, path)
    rebuilt = rebuild_model(load_model_snapshot(path), graph)
    assert isinstance(rebuilt, BprModel)
    assert np.array_equal(rebuilt.user_factors.value, model.user_factors.value)
    assert np.array_equal(rebuilt.item_factors.value, model.item_factors.value)


def test_snapshot_graph_mismatch(tmp_path):
    graph, cfg, model = gnn_setup()
    path = tmp_path / "s.snapshot"
    save_model_snapshot(model, graph, cfg, path)
    other = random_bipartite(6, 5, 12, seed=2)
    with pytest.raises(SnapshotError):
        rebuild_model(load_model_snapshot(path), other)


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "s.snapshot"
    path.write_bytes(b"garbage\n")
    with pytest.raises(SnapshotError):
        load_model_snapshot(path)


def test_snapshot_byte_deterministic(tmp_path):
    graph, cfg, model = gnn_setup()
    p1, p2 = tmp_path / "a.snapshot", tmp_path / "b.snapshot"
    save_model_snapshot(model, graph, cfg, p1)
    save_model_snapshot(model, graph, cfg, p2)
    assert p1.read_bytes() == p2.read_bytes()

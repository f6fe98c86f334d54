"""Model snapshot files: a config block, the id maps, and all named tensors.

One self-contained file restores either model kind against a compatible
graph: text header sections first, then the binary tensor block.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np

from .bpr import BprModel
from .config import ImportanceConfig, ModelConfig, RunConfig
from .errors import SnapshotError
from .graph_store import InteractionGraph
from .model import Recommender
from .numeric import load_tensors, save_tensors

_MAGIC = b"GNNREC-SNAPSHOT v1\n"


@dataclass
class SnapshotData:
    config: dict[str, str]
    user_keys: tuple[str, ...]
    item_keys: tuple[str, ...]
    tensors: dict[str, np.ndarray]


def save_model_snapshot(model, graph: InteractionGraph, cfg: RunConfig, path) -> None:
    config_lines = [
        f"kind = {model.kind}",
        f"d = {cfg.model.d}",
        f"layers = {cfg.model.layers}",
        f"aggregator = {cfg.model.aggregator}",
        f"head = {cfg.model.head}",
        f"levels = {graph.n_levels}",
        f"sampler.size = {cfg.sampler.size}",
        f"sampler.mode = {cfg.sampler.mode}",
        f"sampler.seed = {cfg.sampler.seed}",
        "version = gnnrec-0.1.0",
    ]
    blob = BytesIO()
    save_tensors(blob, model.tensors())
    payload = blob.getvalue()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(f"config {len(config_lines)}\n".encode())
        for line in config_lines:
            fh.write(line.encode() + b"\n")
        fh.write(("users\t" + "\t".join(graph.user_keys) + "\n").encode())
        fh.write(("items\t" + "\t".join(graph.item_keys) + "\n").encode())
        fh.write(f"tensors {len(payload)}\n".encode())
        fh.write(payload)


def load_model_snapshot(path) -> SnapshotData:
    path = Path(path)
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise OSError(f"cannot read snapshot {path}: {exc}") from exc
    with fh:
        if fh.readline() != _MAGIC:
            raise SnapshotError(f"{path}: not a model snapshot")
        head = fh.readline().decode().split()
        if len(head) != 2 or head[0] != "config":
            raise SnapshotError(f"{path}: missing config block")
        config: dict[str, str] = {}
        for _ in range(int(head[1])):
            key, _, value = fh.readline().decode().rstrip("\n").partition(" = ")
            config[key] = value
        user_line = fh.readline().decode().rstrip("\n").split("\t")
        item_line = fh.readline().decode().rstrip("\n").split("\t")
        if user_line[0] != "users" or item_line[0] != "items":
            raise SnapshotError(f"{path}: missing id maps")
        tens_head = fh.readline().decode().split()
        if len(tens_head) != 2 or tens_head[0] != "tensors":
            raise SnapshotError(f"{path}: missing tensor block")
        payload = fh.read(int(tens_head[1]))
        tensors = load_tensors(BytesIO(payload))
    return SnapshotData(config, tuple(user_line[1:]), tuple(item_line[1:]), tensors)


def rebuild_model(snap: SnapshotData, graph: InteractionGraph):
    """Reconstruct a trained model from a snapshot against its graph."""
    if len(snap.user_keys) != graph.n_users or len(snap.item_keys) != graph.n_items:
        raise SnapshotError(
            f"snapshot holds {len(snap.user_keys)} users / {len(snap.item_keys)} items "
            f"but the graph has {graph.n_users} / {graph.n_items}"
        )
    kind = snap.config.get("kind")
    d = int(snap.config["d"])
    if kind == "bpr":
        model = BprModel(graph.n_users, graph.n_items, d, seed=0)
    elif kind == "gnn":
        model_cfg = ModelConfig(
            kind="gnn",
            d=d,
            layers=int(snap.config["layers"]),
            aggregator=snap.config["aggregator"],
            head=snap.config["head"],
        )
        sampler_cfg = ImportanceConfig(
            size=int(snap.config["sampler.size"]),
            mode=snap.config["sampler.mode"],
            seed=int(snap.config["sampler.seed"]),
        )
        model = Recommender(graph, model_cfg, sampler_cfg, init_seed=0)
    else:
        raise SnapshotError(f"unknown model kind {kind!r} in snapshot")
    model.load_tensors(snap.tensors)
    return model

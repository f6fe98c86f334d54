"""Bayesian Personalized Ranking matrix factorization baseline.

Learns user and item factor matrices by pushing each observed item's score
above a sampled unobserved item's score through -log sigmoid(gap).  Trained
with the same factor dimension, optimizer, epoch budget, and seeds as the
GNN model so comparisons isolate the architecture, and evaluated through the
identical scoring interface.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import numeric as nm
from .config import RunConfig, TrainingConfig, init_seed
from .errors import DataError, DivergedError
from .graph_store import InteractionGraph
from .numeric import Node, Parameter, backward
from .trainer import (
    LossRecord,
    batch_negatives,
    make_optimizer,
    write_loss_csv,
)

_CLAMP = 1e-12
_SPARSE_TABLES = {"bpr.user", "bpr.item"}


class BprModel:
    kind = "bpr"

    def __init__(self, n_users: int, n_items: int, d: int, seed: int):
        rng = np.random.default_rng(seed)
        self.user_factors = Parameter(nm.xavier_uniform((n_users, d), rng), "bpr.user")
        self.item_factors = Parameter(nm.xavier_uniform((n_items, d), rng), "bpr.item")

    @property
    def d(self) -> int:
        return self.user_factors.value.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.user_factors, self.item_factors]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def tensors(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.parameters()}

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        from .errors import SnapshotError

        for p in self.parameters():
            if p.name not in tensors:
                raise SnapshotError(f"snapshot is missing tensor {p.name!r}")
            if tensors[p.name].shape != p.value.shape:
                raise SnapshotError(f"tensor {p.name!r} shape mismatch")
            p.value[...] = tensors[p.name]

    def scorer(self) -> "BprScorer":
        return BprScorer(self)


def bpr_score(model: BprModel, u: int, i: int) -> float:
    """Raw dot-product score; unbounded, meaningful only for ranking."""
    n_users = model.user_factors.value.shape[0]
    n_items = model.item_factors.value.shape[0]
    if not 0 <= u < n_users:
        raise IndexError(f"user index {u} out of range [0, {n_users})")
    if not 0 <= i < n_items:
        raise IndexError(f"item index {i} out of range [0, {n_items})")
    return float(model.user_factors.value[u] @ model.item_factors.value[i])


def bpr_loss(model: BprModel, u: int, i_pos: int, i_neg: int, reg_lambda: float) -> Node:
    """-log sigmoid(score_pos - score_neg) plus L2 on the three touched rows."""
    pu = nm.row(model.user_factors, u)
    qp = nm.row(model.item_factors, i_pos)
    qn = nm.row(model.item_factors, i_neg)
    gap = nm.add(nm.dot(pu, qp), nm.scale(nm.dot(pu, qn), -1.0))
    out = nm.scale(nm.log(nm.clip(nm.sigmoid(gap), _CLAMP, 1.0 - _CLAMP)), -1.0)
    if reg_lambda > 0.0:
        for rows in (pu, qp, qn):
            out = nm.add(out, nm.scale(nm.l2sq(rows), reg_lambda / 2.0))
    return out


def _batch_loss(model: BprModel, u, i_pos, i_neg, reg_lambda: float) -> Node:
    pu = nm.gather_rows(model.user_factors, u)
    qp = nm.gather_rows(model.item_factors, i_pos)
    qn = nm.gather_rows(model.item_factors, i_neg)
    gap = nm.add(nm.rows_dot(pu, qp), nm.scale(nm.rows_dot(pu, qn), -1.0))
    out = nm.scale(nm.total(nm.log(nm.clip(nm.sigmoid(gap), _CLAMP, 1.0 - _CLAMP))), -1.0)
    if reg_lambda > 0.0:
        for rows in (pu, qp, qn):
            out = nm.add(out, nm.scale(nm.l2sq(rows), reg_lambda / 2.0))
    return out


def train_bpr_epoch(
    graph: InteractionGraph,
    model: BprModel,
    config: TrainingConfig,
    rng: np.random.Generator,
    optimizer=None,
    epoch: int = 1,
) -> LossRecord:
    config.validate()
    if graph.n_edges == 0:
        raise DataError("cannot train on a graph with no edges")
    if optimizer is None:
        optimizer = make_optimizer(config, _SPARSE_TABLES)
    started = time.perf_counter()
    edges = graph.edge_array()
    flat_keys = edges[:, 0] * graph.n_items + edges[:, 1]
    order = rng.permutation(edges.shape[0])
    total_loss = 0.0
    n_pairs = 0
    k = config.negatives_per_positive
    for start in range(0, edges.shape[0], config.batch_size):
        batch = edges[order[start : start + config.batch_size]]
        u = np.repeat(batch[:, 0], k)
        i_pos = np.repeat(batch[:, 1], k)
        i_neg = batch_negatives(graph, batch[:, 0], k, rng, flat_keys)
        model.zero_grads()
        batch_loss = _batch_loss(model, u, i_pos, i_neg, config.reg_lambda)
        value = float(batch_loss.value)
        if not np.isfinite(value):
            raise DivergedError(f"non-finite BPR loss at epoch {epoch}, batch {start // config.batch_size}")
        backward(batch_loss)
        optimizer.step(model.parameters())
        total_loss += value
        n_pairs += batch.shape[0]
    return LossRecord(epoch, total_loss / n_pairs, time.perf_counter() - started)


def train_bpr(graph: InteractionGraph, cfg: RunConfig, out_dir: str | Path | None = None):
    """Train the baseline under the shared config; mirrors trainer.fit."""
    cfg.validate()
    model = BprModel(graph.n_users, graph.n_items, cfg.model.d, init_seed(cfg))
    optimizer = make_optimizer(cfg.training, _SPARSE_TABLES)
    rng = np.random.default_rng(cfg.training.seed)
    records: list[LossRecord] = []
    for epoch in range(1, cfg.training.epochs + 1):
        records.append(train_bpr_epoch(graph, model, cfg.training, rng, optimizer, epoch))
    if out_dir is not None:
        from .snapshot import save_model_snapshot

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model_snapshot(model, graph, cfg, out / f"model-{model.kind}.snapshot")
        write_loss_csv(records, out / f"loss-{model.kind}.csv")
    return model, records


class BprScorer:
    def __init__(self, model: BprModel):
        self.u = model.user_factors.value
        self.i = model.item_factors.value
        self.name = model.kind

    def scores(self, u: int, item_indices) -> np.ndarray:
        item_indices = np.asarray(item_indices, dtype=np.intp)
        return self.i[item_indices] @ self.u[u]

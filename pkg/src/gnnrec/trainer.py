"""Training: negative sampling, the regularized cross-entropy objective,
SGD/Adam stepping with row-sparse embedding updates, and epoch orchestration.

The per-batch objective is binary cross-entropy over observed edges (label 1)
and sampled unobserved items (label 0), plus an L2 penalty over the weight
tensors and the embedding rows the batch touches.  Embedding tables are
stepped only on rows whose gradient is nonzero.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numeric as nm
from .config import RunConfig, TrainingConfig, init_seed
from .errors import DataError, DivergedError, SamplingError
from .graph_store import InteractionGraph
from .model import Recommender
from .numeric import Node, Parameter, backward

_CLAMP = 1e-12


@dataclass
class LossRecord:
    epoch: int
    mean_train_loss: float
    wall_time: float


def sample_negatives(graph: InteractionGraph, u: int, n: int, rng: np.random.Generator) -> list[int]:
    """n distinct items the user has no edge to, sampled uniformly.

    If fewer than n such items exist they are all returned, in ascending
    order.  Draws are independent across calls (duplicates may repeat across
    a batch) but never within one call.
    """
    if not 0 <= u < graph.n_users:
        raise IndexError(f"user index {u} out of range [0, {graph.n_users})")
    positives = graph.user_item_set(u)
    available = graph.n_items - len(positives)
    if available <= 0:
        raise SamplingError(f"user {u} has interacted with every item")
    if available <= n:
        return [i for i in range(graph.n_items) if i not in positives]
    if available <= 2 * n:
        pool = np.setdiff1d(np.arange(graph.n_items), np.fromiter(positives, dtype=np.int64))
        return pool[rng.permutation(available)[:n]].tolist()
    out: list[int] = []
    seen: set[int] = set()
    while len(out) < n:
        j = int(rng.integers(graph.n_items))
        if j in positives or j in seen:
            continue
        seen.add(j)
        out.append(j)
    return out


def batch_negatives(
    graph: InteractionGraph,
    users: np.ndarray,
    k: int,
    rng: np.random.Generator,
    flat_keys: np.ndarray | None = None,
) -> np.ndarray:
    """One vectorized draw of k negatives per user in the batch.

    Same distribution as per-user :func:`sample_negatives` (uniform over the
    user's non-positives, no duplicates within a user's k draws), but with
    whole-batch rejection rounds instead of per-row Python loops.
    """
    if flat_keys is None:
        edges = graph.edge_array()
        flat_keys = edges[:, 0] * graph.n_items + edges[:, 1]  # sorted user-major
    rows = np.repeat(np.asarray(users, dtype=np.int64), k)
    out = np.full(rows.shape[0], -1, dtype=np.int64)
    pending = np.arange(rows.shape[0])
    for _ in range(32):
        if pending.size == 0:
            break
        draw = rng.integers(0, graph.n_items, size=pending.size)
        keys = rows[pending] * graph.n_items + draw
        pos = np.searchsorted(flat_keys, keys)
        hit = (pos < flat_keys.size) & (flat_keys[np.minimum(pos, flat_keys.size - 1)] == keys)
        out[pending[~hit]] = draw[~hit]
        pending = pending[hit]
    for j in pending:  # users with few non-positives: exact per-user path
        out[j] = sample_negatives(graph, int(rows[j]), 1, rng)[0]
    if k > 1:  # enforce within-call uniqueness per positive
        grouped = out.reshape(-1, k)
        for gi in range(grouped.shape[0]):
            if np.unique(grouped[gi]).size < k:
                fresh = sample_negatives(graph, int(rows[gi * k]), k, rng)
                grouped[gi] = np.resize(fresh, k)  # short only when < k non-positives exist
        out = grouped.reshape(-1)
    return out


def loss(pos_scores, neg_scores, params, reg_lambda: float) -> Node:
    """-sum log s_pos - sum log (1 - s_neg) + (lambda/2) sum ||p||^2.

    Scores are clamped into [1e-12, 1 - 1e-12] before the logs.  `params` is
    the collection of tensors (or gathered rows) the penalty covers.
    """
    terms: list[Node] = []
    pos_scores = nm.as_node(pos_scores) if not isinstance(pos_scores, Node) else pos_scores
    neg_scores = nm.as_node(neg_scores) if not isinstance(neg_scores, Node) else neg_scores
    if pos_scores.value.size:
        clamped = nm.clip(pos_scores, _CLAMP, 1.0 - _CLAMP)
        terms.append(nm.scale(nm.total(nm.log(clamped)), -1.0))
    if neg_scores.value.size:
        clamped = nm.clip(neg_scores, _CLAMP, 1.0 - _CLAMP)
        terms.append(nm.scale(nm.total(nm.log(nm.one_minus(clamped))), -1.0))
    if reg_lambda > 0.0:
        for p in params:
            terms.append(nm.scale(nm.l2sq(p), reg_lambda / 2.0))
    if not terms:
        return Node(np.asarray(0.0))
    out = terms[0]
    for t in terms[1:]:
        out = nm.add(out, t)
    return out


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


def _touched_rows(p: Parameter) -> np.ndarray:
    return np.flatnonzero(np.any(p.grad != 0.0, axis=1))


class Sgd:
    def __init__(self, lr: float, sparse: set[str] = frozenset()):
        self.lr = lr
        self.sparse = set(sparse)

    def step(self, params: list[Parameter]) -> None:
        for p in params:
            if p.name in self.sparse and p.value.ndim == 2:
                rows = _touched_rows(p)
                p.value[rows] -= self.lr * p.grad[rows]
            else:
                p.value -= self.lr * p.grad


class Adam:
    def __init__(
        self,
        lr: float,
        sparse: set[str] = frozenset(),
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.sparse = set(sparse)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}
        self._t: dict[int, int] = {}

    def step(self, params: list[Parameter]) -> None:
        for p in params:
            key = id(p)
            if key not in self._m:
                self._m[key] = np.zeros_like(p.value)
                self._v[key] = np.zeros_like(p.value)
                self._t[key] = 0
            self._t[key] += 1
            t = self._t[key]
            m, v = self._m[key], self._v[key]
            if p.name in self.sparse and p.value.ndim == 2:
                rows = _touched_rows(p)
                g = p.grad[rows]
                m[rows] = self.beta1 * m[rows] + (1 - self.beta1) * g
                v[rows] = self.beta2 * v[rows] + (1 - self.beta2) * g * g
                m_hat = m[rows] / (1 - self.beta1**t)
                v_hat = v[rows] / (1 - self.beta2**t)
                p.value[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            else:
                g = p.grad
                m[...] = self.beta1 * m + (1 - self.beta1) * g
                v[...] = self.beta2 * v + (1 - self.beta2) * g * g
                m_hat = m / (1 - self.beta1**t)
                v_hat = v / (1 - self.beta2**t)
                p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: TrainingConfig, sparse: set[str]):
    if cfg.optimizer == "sgd":
        return Sgd(cfg.learning_rate, sparse)
    return Adam(cfg.learning_rate, sparse)


# ---------------------------------------------------------------------------
# epoch loop
# ---------------------------------------------------------------------------

_SPARSE_TABLES = {"embed.user", "embed.item"}


def train_epoch(
    graph: InteractionGraph,
    model: Recommender,
    config: TrainingConfig,
    rng: np.random.Generator,
    optimizer=None,
    epoch: int = 1,
) -> LossRecord:
    """One seeded pass over all positive edges in shuffled order."""
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
        u = batch[:, 0]
        i_pos = batch[:, 1]
        neg_u = np.repeat(u, k)
        neg_i = batch_negatives(graph, u, k, rng, flat_keys)
        model.zero_grads()
        reps = model.representations()
        pos_scores = model.pair_scores(reps, u, i_pos)
        neg_scores = model.pair_scores(reps, neg_u, neg_i)
        reg_nodes = _regularized_nodes(model, u, np.concatenate([i_pos, neg_i]))
        batch_loss = loss(pos_scores, neg_scores, reg_nodes, config.reg_lambda)
        value = float(batch_loss.value)
        if not np.isfinite(value):
            raise DivergedError(f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}")
        backward(batch_loss)
        optimizer.step(model.parameters())
        total_loss += value
        n_pairs += batch.shape[0]
    return LossRecord(
        epoch=epoch,
        mean_train_loss=total_loss / n_pairs,
        wall_time=time.perf_counter() - started,
    )


def _regularized_nodes(model: Recommender, u: np.ndarray, items: np.ndarray) -> list[Node]:
    """Penalty scope: weight tensors, rating embeddings, and touched rows."""
    nodes: list[Node] = [
        nm.gather_rows(model.table.user, np.unique(u)),
        nm.gather_rows(model.table.item, np.unique(items)),
        model.table.rating,
    ]
    nodes.extend(model.params.parameters())
    return nodes


def fit(graph: InteractionGraph, cfg: RunConfig, out_dir: str | Path | None = None):
    """Train a fresh model for the configured number of epochs.

    Returns (model, loss records) and, when out_dir is given, writes the
    model snapshot and the per-epoch loss CSV there.
    """
    cfg.validate()
    model = Recommender(graph, cfg.model, cfg.sampler, init_seed(cfg))
    optimizer = make_optimizer(cfg.training, _SPARSE_TABLES)
    rng = np.random.default_rng(cfg.training.seed)
    records: list[LossRecord] = []
    for epoch in range(1, cfg.training.epochs + 1):
        records.append(train_epoch(graph, model, cfg.training, rng, optimizer, epoch))
    if out_dir is not None:
        from .snapshot import save_model_snapshot

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model_snapshot(model, graph, cfg, out / f"model-{model.kind}.snapshot")
        write_loss_csv(records, out / f"loss-{model.kind}.csv")
    return model, records


def write_loss_csv(records: list[LossRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "wall_time_s"])
        for rec in records:
            writer.writerow([rec.epoch, f"{rec.mean_train_loss:.10g}", f"{rec.wall_time:.3f}"])


def read_loss_csv(path: str | Path) -> list[LossRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                LossRecord(int(row["epoch"]), float(row["mean_loss"]), float(row["wall_time_s"]))
            )
    return records

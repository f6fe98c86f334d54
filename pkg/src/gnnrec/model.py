"""The GNN recommender: embeddings, rating-fused messages, aggregation,
propagation layers, and score prediction.

A user's representation is refined layer by layer: each sampled neighbor
item contributes an interaction vector (its current representation fused
with the rating-level embedding through a two-layer network), the
contributions are combined by a mean, attention, or max-pooling aggregator,
and the result is summed with the node's own transformed representation
under a LeakyReLU.  Items are updated symmetrically from their users.

Two equivalent code paths exist: the per-node vector ops below (the readable
contract surface, also used as the test oracle) and a row-batched
propagation that runs each layer as a few large numpy calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .config import ImportanceConfig, ModelConfig
from .errors import DimensionError
from .graph_store import InteractionGraph
from .numeric import Node, Parameter
from .sampler import sample_neighbors

LEAKY_SLOPE = 0.01


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Lookup tables for user, item, and rating-level vectors."""

    user: Parameter
    item: Parameter
    rating: Parameter

    @property
    def d(self) -> int:
        return self.user.value.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.user, self.item, self.rating]


@dataclass
class ModelParams:
    """All trainable weights beyond the embedding tables."""

    fusion_w1: Parameter
    fusion_b1: Parameter
    fusion_w2: Parameter
    fusion_b2: Parameter
    attn_w1: Parameter
    attn_b1: Parameter
    attn_w2: Parameter
    attn_b2: Parameter
    layer_w: list[Parameter]
    layer_b: list[Parameter]
    pool_w: list[Parameter]
    pool_b: list[Parameter]
    pred_w1: Parameter
    pred_b1: Parameter
    pred_w2: Parameter
    pred_b2: Parameter

    def parameters(self) -> list[Parameter]:
        out = [
            self.fusion_w1, self.fusion_b1, self.fusion_w2, self.fusion_b2,
            self.attn_w1, self.attn_b1, self.attn_w2, self.attn_b2,
        ]
        for w, b in zip(self.layer_w, self.layer_b):
            out += [w, b]
        for w, b in zip(self.pool_w, self.pool_b):
            out += [w, b]
        out += [self.pred_w1, self.pred_b1, self.pred_w2, self.pred_b2]
        return out


def init_embeddings(
    n_users: int, n_items: int, n_levels: int, d: int, rng: np.random.Generator
) -> EmbeddingTable:
    return EmbeddingTable(
        user=Parameter(nm.xavier_uniform((n_users, d), rng), "embed.user"),
        item=Parameter(nm.xavier_uniform((n_items, d), rng), "embed.item"),
        rating=Parameter(nm.xavier_uniform((n_levels, d), rng), "embed.rating"),
    )


def init_params(d: int, layers: int, rng: np.random.Generator) -> ModelParams:
    """Allocate weights in a fixed order so initialization is reproducible."""
    zeros = lambda *shape: np.zeros(shape)
    return ModelParams(
        fusion_w1=Parameter(nm.xavier_uniform((d, 2 * d), rng), "fusion.w1"),
        fusion_b1=Parameter(zeros(d), "fusion.b1"),
        fusion_w2=Parameter(nm.xavier_uniform((d, d), rng), "fusion.w2"),
        fusion_b2=Parameter(zeros(d), "fusion.b2"),
        attn_w1=Parameter(nm.xavier_uniform((d, 2 * d), rng), "attn.w1"),
        attn_b1=Parameter(zeros(d), "attn.b1"),
        attn_w2=Parameter(nm.xavier_uniform((d,), rng), "attn.w2"),
        attn_b2=Parameter(zeros(), "attn.b2"),
        layer_w=[
            Parameter(nm.xavier_uniform((d, d), rng), f"layer{l}.w") for l in range(layers)
        ],
        layer_b=[Parameter(zeros(d), f"layer{l}.b") for l in range(layers)],
        pool_w=[
            Parameter(nm.xavier_uniform((d, d), rng), f"pool{l}.w") for l in range(layers)
        ],
        pool_b=[Parameter(zeros(d), f"pool{l}.b") for l in range(layers)],
        pred_w1=Parameter(nm.xavier_uniform((d, 2 * d), rng), "pred.w1"),
        pred_b1=Parameter(zeros(d), "pred.b1"),
        pred_w2=Parameter(nm.xavier_uniform((d,), rng), "pred.w2"),
        pred_b2=Parameter(zeros(), "pred.b2"),
    )


# ---------------------------------------------------------------------------
# per-node ops (contract surface and reference path)
# ---------------------------------------------------------------------------


def embed_lookup(table: EmbeddingTable, kind: str, index: int) -> Node:
    """One embedding row; its gradient lands on that row only."""
    try:
        param = {"user": table.user, "item": table.item, "rating": table.rating}[kind]
    except KeyError:
        raise ValueError(f"kind must be user|item|rating, got {kind!r}") from None
    return nm.row(param, index)


def fuse_interaction(e_i, e_r, params: ModelParams) -> Node:
    """Two-layer fusion of an item vector with a rating-level vector."""
    e_i, e_r = nm.as_node(e_i), nm.as_node(e_r)
    if e_i.value.shape != e_r.value.shape:
        raise DimensionError("fuse_interaction: item and rating vectors differ in length")
    h = nm.relu(nm.affine(params.fusion_w1, nm.concat(e_i, e_r), params.fusion_b1))
    return nm.affine(params.fusion_w2, h, params.fusion_b2)


def attention_score(x_as, e_center, params: ModelParams) -> Node:
    """Unnormalized attention of one interaction vector to the center node."""
    x_as, e_center = nm.as_node(x_as), nm.as_node(e_center)
    if x_as.value.shape != e_center.value.shape:
        raise DimensionError("attention_score: vectors differ in length")
    h = nm.relu(nm.affine(params.attn_w1, nm.concat(x_as, e_center), params.attn_b1))
    return nm.add(nm.dot(params.attn_w2, h), params.attn_b2)


def attention_weights(scores: list[Node]) -> Node:
    """Softmax-normalize per-neighbor attention scores."""
    return nm.softmax(nm.stack(scores))


def aggregate_mean(xs, params: ModelParams, layer: int = 0) -> Node:
    """Equal-weight aggregation: ReLU(W mean(xs) + b)."""
    if xs:
        pooled = nm.weighted_sum(xs, np.full(len(xs), 1.0 / len(xs)))
    else:
        d = params.layer_w[layer].value.shape[1]
        pooled = nm.as_node(np.zeros(d))
    return nm.relu(nm.affine(params.layer_w[layer], pooled, params.layer_b[layer]))


def aggregate_attention(xs, betas, params: ModelParams, layer: int = 0) -> Node:
    """Attention-weighted aggregation: ReLU(W sum_i beta_i x_i + b)."""
    betas_len = betas.value.shape[0] if isinstance(betas, Node) else len(betas)
    if len(xs) != betas_len:
        raise DimensionError(f"aggregate_attention: {len(xs)} vectors, {betas_len} weights")
    pooled = nm.weighted_sum(xs, betas)
    return nm.relu(nm.affine(params.layer_w[layer], pooled, params.layer_b[layer]))


def aggregate_pooling(neighbor_feats, self_vec, params: ModelParams, layer: int = 0) -> Node:
    """Per-neighbor FC + ReLU, elementwise max, then fuse with the node itself."""
    self_vec = nm.as_node(self_vec)
    if neighbor_feats:
        transformed = [
            nm.relu(nm.affine(params.pool_w[layer], x, params.pool_b[layer]))
            for x in neighbor_feats
        ]
        combined = nm.add(self_vec, nm.max_elements(transformed))
    else:
        combined = self_vec
    return nm.relu(nm.affine(params.layer_w[layer], combined, params.layer_b[layer]))


def aggregate_user_neighbors(u, relation_neighbors, params: ModelParams, layer: int = 0) -> Node:
    """Fold same-side neighbors into a node via exp-normalized relation weights.

    relation_neighbors is a list of (relation_weight, vector) pairs; the
    weights are data, not trainable.  Only used when same-side edges are
    supplied; the bipartite datasets have none.
    """
    u = nm.as_node(u)
    if relation_neighbors:
        r = np.array([float(w) for w, _ in relation_neighbors])
        g = np.exp(r - r.max())
        g = g / g.sum()
        un = nm.weighted_sum([v for _, v in relation_neighbors], g)
        combined = nm.add(u, un)
    else:
        combined = u
    return nm.relu(nm.affine(params.layer_w[layer], combined, params.layer_b[layer]))


def predict(u_final, i_final, params: ModelParams, head: str = "dot") -> Node:
    """Interaction probability for one user/item representation pair."""
    u_final, i_final = nm.as_node(u_final), nm.as_node(i_final)
    if u_final.value.shape != i_final.value.shape:
        raise DimensionError("predict: representations differ in length")
    if head == "dot":
        return nm.sigmoid(nm.dot(u_final, i_final))
    if head == "mlp":
        h = nm.relu(nm.affine(params.pred_w1, nm.concat(u_final, i_final), params.pred_b1))
        return nm.sigmoid(nm.add(nm.dot(params.pred_w2, h), params.pred_b2))
    raise ValueError(f"head must be dot|mlp, got {head!r}")


# ---------------------------------------------------------------------------
# batched propagation
# ---------------------------------------------------------------------------


@dataclass
class _SidePlan:
    seg_ids: np.ndarray  # center index per sampled edge, sorted ascending
    nbr_idx: np.ndarray  # neighbor index on the opposite side
    level_idx: np.ndarray  # rating level - 1
    inv_count: np.ndarray  # 1/sampled-degree of the row's center
    nonempty: np.ndarray  # per center: 1.0 if it has sampled neighbors


@dataclass
class PropagationPlan:
    """Frozen sampled neighborhoods, shared by every layer and epoch."""

    user_side: _SidePlan
    item_side: _SidePlan


def _build_side(graph: InteractionGraph, side: str, cfg: ImportanceConfig) -> _SidePlan:
    if side == "user":
        n, ptr, adj, rat = graph.n_users, graph.user_ptr, graph.user_items, graph.user_ratings
    else:
        n, ptr, adj, rat = graph.n_items, graph.item_ptr, graph.item_users, graph.item_ratings
    seg, nbr, lvl, inv = [], [], [], []
    nonempty = np.zeros(n)
    for c in range(n):
        chosen = sorted(sample_neighbors(graph, side, c, cfg))
        if not chosen:
            continue
        nonempty[c] = 1.0
        lo, hi = ptr[c], ptr[c + 1]
        slice_adj = adj[lo:hi]
        slice_rat = rat[lo:hi]
        pos = np.searchsorted(slice_adj, chosen)
        for j, nb in zip(pos, chosen):
            seg.append(c)
            nbr.append(nb)
            lvl.append(int(slice_rat[j]) - 1)
            inv.append(1.0 / len(chosen))
    return _SidePlan(
        seg_ids=np.array(seg, dtype=np.intp),
        nbr_idx=np.array(nbr, dtype=np.intp),
        level_idx=np.array(lvl, dtype=np.intp),
        inv_count=np.array(inv, dtype=np.float64),
        nonempty=nonempty,
    )


def build_plan(graph: InteractionGraph, cfg: ImportanceConfig) -> PropagationPlan:
    return PropagationPlan(
        user_side=_build_side(graph, "user", cfg),
        item_side=_build_side(graph, "item", cfg),
    )


def _side_pass(
    plan: _SidePlan,
    centers_prev: Node,
    nbrs_prev: Node,
    n_centers: int,
    table: EmbeddingTable,
    params: ModelParams,
    layer: int,
    aggregator: str,
) -> Node:
    x_nbr = nm.gather_rows(nbrs_prev, plan.nbr_idx)
    e_r = nm.gather_rows(table.rating, plan.level_idx)
    h = nm.relu(nm.affine(params.fusion_w1, nm.concat(x_nbr, e_r), params.fusion_b1))
    fused = nm.affine(params.fusion_w2, h, params.fusion_b2)
    lw, lb = params.layer_w[layer], params.layer_b[layer]
    if aggregator == "pooling":
        p = nm.relu(nm.affine(params.pool_w[layer], fused, params.pool_b[layer]))
        pooled = nm.segment_max_rows(p, plan.seg_ids, n_centers)
        return nm.relu(nm.affine(lw, nm.add(centers_prev, pooled), lb))
    if aggregator == "attention":
        e_c = nm.gather_rows(centers_prev, plan.seg_ids)
        ah = nm.relu(nm.affine(params.attn_w1, nm.concat(fused, e_c), params.attn_b1))
        scores = nm.add_scalar(nm.matvec(ah, params.attn_w2), params.attn_b2)
        betas = nm.segment_softmax(scores, plan.seg_ids, n_centers)
        summed = nm.segment_weighted_rows(fused, betas, plan.seg_ids, n_centers)
    elif aggregator == "mean":
        summed = nm.segment_weighted_rows(fused, plan.inv_count, plan.seg_ids, n_centers)
    else:
        raise ValueError(f"unknown aggregator {aggregator!r}")
    # isolated centers receive no neighbor message at all
    msg = nm.mask_rows(nm.relu(nm.affine(lw, summed, lb)), plan.nonempty)
    self_msg = nm.affine(lw, centers_prev, lb)
    return nm.leaky_relu(nm.add(self_msg, msg), LEAKY_SLOPE)


def propagate(
    graph: InteractionGraph,
    table: EmbeddingTable,
    params: ModelParams,
    layers: int,
    sampler_cfg: ImportanceConfig,
    aggregator: str = "attention",
    plan: PropagationPlan | None = None,
) -> tuple[Node, Node]:
    """Final user and item representations after the configured layers.

    With layers=0 the base embedding tables are returned untouched, which
    reduces scoring to plain matrix factorization.
    """
    users: Node = table.user
    items: Node = table.item
    if layers == 0:
        return users, items
    if plan is None:
        plan = build_plan(graph, sampler_cfg)
    for layer in range(layers):
        users_next = _side_pass(
            plan.user_side, users, items, graph.n_users, table, params, layer, aggregator
        )
        items_next = _side_pass(
            plan.item_side, items, users, graph.n_items, table, params, layer, aggregator
        )
        users, items = users_next, items_next
    return users, items


# ---------------------------------------------------------------------------
# model wrapper
# ---------------------------------------------------------------------------


class Recommender:
    """Graph + parameters + frozen sampling plan, with batched scoring."""

    kind = "gnn"

    def __init__(
        self,
        graph: InteractionGraph,
        model_cfg: ModelConfig,
        sampler_cfg: ImportanceConfig,
        init_seed: int,
    ):
        model_cfg.validate()
        sampler_cfg.validate()
        self.graph = graph
        self.cfg = model_cfg
        self.sampler_cfg = sampler_cfg
        rng = np.random.default_rng(init_seed)
        self.table = init_embeddings(
            graph.n_users, graph.n_items, graph.n_levels, model_cfg.d, rng
        )
        self.params = init_params(model_cfg.d, model_cfg.layers, rng)
        self.plan = build_plan(graph, sampler_cfg) if model_cfg.layers > 0 else None

    def parameters(self) -> list[Parameter]:
        return self.table.parameters() + self.params.parameters()

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def representations(self) -> tuple[Node, Node]:
        return propagate(
            self.graph, self.table, self.params, self.cfg.layers,
            self.sampler_cfg, self.cfg.aggregator, self.plan,
        )

    def pair_scores(self, reps: tuple[Node, Node], u_idx, i_idx) -> Node:
        """Scores in (0,1) for aligned arrays of user and item indices."""
        users, items = reps
        ru = nm.gather_rows(users, np.asarray(u_idx, dtype=np.intp))
        ri = nm.gather_rows(items, np.asarray(i_idx, dtype=np.intp))
        if self.cfg.head == "dot":
            return nm.sigmoid(nm.rows_dot(ru, ri))
        h = nm.relu(nm.affine(self.params.pred_w1, nm.concat(ru, ri), self.params.pred_b1))
        return nm.sigmoid(nm.add_scalar(nm.matvec(h, self.params.pred_w2), self.params.pred_b2))

    def scorer(self) -> "FrozenScorer":
        return FrozenScorer(self)

    def tensors(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.parameters()}

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        from .errors import SnapshotError

        for p in self.parameters():
            if p.name not in tensors:
                raise SnapshotError(f"snapshot is missing tensor {p.name!r}")
            arr = tensors[p.name]
            if arr.shape != p.value.shape:
                raise SnapshotError(
                    f"tensor {p.name!r} has shape {arr.shape}, expected {p.value.shape}"
                )
            p.value[...] = arr


class FrozenScorer:
    """Read-only view of a model's final representations for evaluation."""

    def __init__(self, model: Recommender):
        users, items = model.representations()
        self.model = model
        self.users = Node(users.value.copy())
        self.items = Node(items.value.copy())
        self.name = model.kind

    def scores(self, u: int, item_indices) -> np.ndarray:
        item_indices = np.asarray(item_indices, dtype=np.intp)
        u_idx = np.full(item_indices.shape[0], u, dtype=np.intp)
        return self.model.pair_scores((self.users, self.items), u_idx, item_indices).value

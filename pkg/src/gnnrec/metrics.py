"""Ranking metrics and the sampled-negative evaluation protocol.

Each held-out positive is ranked against N sampled items the user never
interacted with (train or test).  AUC is aggregated over all scored pairs;
NDCG@k is averaged per user and then over users.  Ties in AUC count half a
pair, matching the probabilistic definition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .config import EvalConfig
from .errors import DataError, MetricError, SnapshotError
from .graph_store import InteractionGraph

REPORT_COLUMNS = ["model", "dataset", "auc", "ndcg@1", "ndcg@2", "ndcg@10", "n_users", "protocol"]


@dataclass
class MetricsReport:
    model: str
    dataset: str
    auc: float
    ndcg: dict[int, float]
    n_users_evaluated: int
    protocol: str


def auc(scores, labels) -> float:
    """Probability a positive outranks a negative; tied pairs count 0.5.

    Computed from the rank-sum identity, which equals the O(n^2) pairwise
    count exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined without both positive and negative labels")
    ranks = rankdata(scores)
    u_stat = float(ranks[labels == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def ndcg_at_k(ranked_relevance, k: int) -> float:
    """Discounted gain of the top-k ranking over the ideal ranking's gain."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rel = np.asarray(ranked_relevance, dtype=np.float64)
    n_rel = int((rel > 0).sum())
    if n_rel == 0:
        raise MetricError("NDCG is undefined without a relevant item")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    top = rel[:k]
    dcg = float((top * discounts[: top.size]).sum())
    ideal = float(discounts[: min(k, n_rel)].sum())
    return dcg / ideal


def dcg_at_k(ranked_relevance, k: int) -> float:
    """Unnormalized discounted cumulative gain of the top-k ranking."""
    rel = np.asarray(ranked_relevance, dtype=np.float64)[:k]
    return float((rel / np.log2(np.arange(2, rel.size + 2))).sum())


def _sample_unseen(
    n_items: int, excluded: set[int], n: int, rng: np.random.Generator
) -> list[int]:
    available = n_items - len(excluded)
    if available <= 0:
        return []
    if available <= n:
        return [i for i in range(n_items) if i not in excluded]
    if available <= 2 * n:
        pool = np.setdiff1d(np.arange(n_items), np.fromiter(excluded, dtype=np.int64))
        return pool[rng.permutation(available)[:n]].tolist()
    out: list[int] = []
    seen: set[int] = set()
    while len(out) < n:
        j = int(rng.integers(n_items))
        if j in excluded or j in seen:
            continue
        seen.add(j)
        out.append(j)
    return out


def evaluate(
    scorer,
    train_graph: InteractionGraph,
    test_edges: list[tuple[int, int, int]],
    cfg: EvalConfig,
    dataset: str = "",
) -> MetricsReport:
    """Rank every held-out positive against sampled unseen negatives.

    The scorer must expose `name` and `scores(user_index, item_indices)`.
    Users without test positives are skipped and counted in the protocol
    string.  Candidate ties rank deterministically by ascending item index.
    """
    cfg.validate()
    if not test_edges:
        raise DataError("cannot evaluate with an empty test set")
    by_user: dict[int, list[int]] = {}
    for u, i, _ in test_edges:
        by_user.setdefault(int(u), []).append(int(i))
    all_scores: list[np.ndarray] = []
    all_labels: list[np.ndarray] = []
    per_user_ndcg: dict[int, list[float]] = {k: [] for k in cfg.ks}
    for u in sorted(by_user):
        rng = np.random.default_rng([cfg.seed, u])
        test_items = sorted(by_user[u])
        excluded = train_graph.user_item_set(u) | set(test_items)
        user_ndcg: dict[int, list[float]] = {k: [] for k in cfg.ks}
        for pos in test_items:
            negatives = _sample_unseen(train_graph.n_items, excluded, cfg.negatives, rng)
            candidates = np.array([pos] + negatives, dtype=np.intp)
            scores = np.asarray(scorer.scores(u, candidates), dtype=np.float64)
            labels = np.zeros(candidates.size, dtype=np.int64)
            labels[0] = 1
            all_scores.append(scores)
            all_labels.append(labels)
            # rank of the positive, ties broken by ascending item index
            pos_rank = int(
                np.sum(scores > scores[0])
                + np.sum((scores == scores[0]) & (candidates < pos))
            )
            rel = np.zeros(candidates.size, dtype=np.int64)
            rel[pos_rank] = 1
            for k in cfg.ks:
                user_ndcg[k].append(ndcg_at_k(rel, k))
        for k in cfg.ks:
            per_user_ndcg[k].append(float(np.mean(user_ndcg[k])))
    pooled_scores = np.concatenate(all_scores)
    pooled_labels = np.concatenate(all_labels)
    n_eval = len(by_user)
    n_skipped = train_graph.n_users - n_eval
    protocol = (
        f"each test positive vs {cfg.negatives} sampled unseen negatives; "
        f"seed={cfg.seed}; users_skipped={n_skipped}"
    )
    return MetricsReport(
        model=getattr(scorer, "name", "model"),
        dataset=dataset,
        auc=auc(pooled_scores, pooled_labels),
        ndcg={k: float(np.mean(per_user_ndcg[k])) for k in cfg.ks},
        n_users_evaluated=n_eval,
        protocol=protocol,
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


def write_report(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        writer.writerow(_report_row(report))


def _report_row(report: MetricsReport) -> list[str]:
    return [
        report.model,
        report.dataset,
        f"{report.auc:.6f}",
        f"{report.ndcg.get(1, float('nan')):.6f}",
        f"{report.ndcg.get(2, float('nan')):.6f}",
        f"{report.ndcg.get(10, float('nan')):.6f}",
        str(report.n_users_evaluated),
        report.protocol,
    ]


def read_report_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != REPORT_COLUMNS:
            raise SnapshotError(f"{path}: unexpected report columns {header}")
        return [dict(zip(REPORT_COLUMNS, row)) for row in reader]


def merge_reports(paths) -> list[dict[str, str]]:
    """Concatenate report rows from several files; schemas must match."""
    rows: list[dict[str, str]] = []
    for path in paths:
        rows.extend(read_report_rows(path))
    return rows


def format_comparison(rows: list[dict[str, str]]) -> str:
    """Fixed-width matrix with models as rows and metrics as columns."""
    cols = ["model", "dataset", "auc", "ndcg@1", "ndcg@2", "ndcg@10", "n_users"]
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) if rows else len(c) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in cols))
    return "\n".join(lines)


def write_merged_reports(rows: list[dict[str, str]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow([r[c] for c in REPORT_COLUMNS])

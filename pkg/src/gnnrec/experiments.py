"""Desk-scale experiment drivers: the seeded user-subsample comparison of the
GNN model against the BPR baseline under one shared protocol.

Both models get the same factor dimension, optimizer, epoch budget, split,
and sampled-negative evaluation; per-model learning rates differ because the
two objectives have very different gradient scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .bpr import train_bpr
from .config import EvalConfig, ImportanceConfig, ModelConfig, RunConfig, SplitSpec, TrainingConfig
from .graph_store import RatingsTable, split_train_test, subsample_users, to_implicit
from .metrics import MetricsReport, evaluate
from .trainer import LossRecord, fit, write_loss_csv


@dataclass
class ComparisonSettings:
    """Hyperparameters for the subsample comparison; the shared fields are
    identical across models by construction."""

    d: int = 32
    layers: int = 1
    aggregator: str = "attention"
    sample_size: int = 10
    epochs: int = 10
    batch_size: int = 4096
    gnn_learning_rate: float = 0.01
    bpr_learning_rate: float = 0.05
    gnn_lambda: float = 1e-6
    bpr_lambda: float = 1e-5
    test_fraction: float = 0.2
    eval_negatives: int = 99
    user_fraction: float = 0.2
    seeds: tuple[int, ...] = (0, 1, 2)


@dataclass
class SeedOutcome:
    seed: int
    gnn_report: MetricsReport
    bpr_report: MetricsReport
    gnn_losses: list[LossRecord]
    bpr_losses: list[LossRecord]


@dataclass
class ComparisonResult:
    outcomes: list[SeedOutcome] = field(default_factory=list)

    def median_auc(self, model: str) -> float:
        values = sorted(
            (o.gnn_report if model == "gnn" else o.bpr_report).auc for o in self.outcomes
        )
        mid = len(values) // 2
        if len(values) % 2:
            return values[mid]
        return 0.5 * (values[mid - 1] + values[mid])

    def margin(self) -> float:
        return self.median_auc("gnn") - self.median_auc("bpr")


def _run_config(settings: ComparisonSettings, seed: int, kind: str) -> RunConfig:
    cfg = RunConfig(seed=seed)
    cfg.split = SplitSpec(test_fraction=settings.test_fraction, seed=0)
    cfg.sampler = ImportanceConfig(size=settings.sample_size, mode="top-k", seed=0)
    cfg.model = ModelConfig(
        kind=kind, d=settings.d, layers=settings.layers,
        aggregator=settings.aggregator, head="dot",
    )
    lr = settings.gnn_learning_rate if kind == "gnn" else settings.bpr_learning_rate
    lam = settings.gnn_lambda if kind == "gnn" else settings.bpr_lambda
    cfg.training = TrainingConfig(
        learning_rate=lr, reg_lambda=lam, epochs=settings.epochs,
        batch_size=settings.batch_size, negatives_per_positive=1,
        optimizer="adam", seed=0,
    )
    cfg.eval = EvalConfig(negatives=settings.eval_negatives, ks=(1, 2, 10), seed=0)
    from .config import resolve_seeds

    resolve_seeds(cfg)
    cfg.validate()
    return cfg


def compare_on_subsample(
    table: RatingsTable,
    settings: ComparisonSettings | None = None,
    out_dir: str | Path | None = None,
    dataset: str = "subsample",
) -> ComparisonResult:
    """Train and evaluate both models on seeded user subsamples.

    One subsample is drawn per seed; both models see the identical graph,
    split, and evaluation candidates for that seed.  When out_dir is given,
    per-seed loss curves and reports are written beneath it.
    """
    settings = settings or ComparisonSettings()
    result = ComparisonResult()
    for seed in settings.seeds:
        sub = subsample_users(table, settings.user_fraction, seed)
        graph = to_implicit(sub)
        reports = {}
        losses = {}
        for kind, trainer_fn in (("gnn", fit), ("bpr", train_bpr)):
            cfg = _run_config(settings, seed, kind)
            train_graph, test_edges = split_train_test(graph, cfg.split)
            model, records = trainer_fn(train_graph, cfg)
            reports[kind] = evaluate(
                model.scorer(), train_graph, test_edges, cfg.eval, dataset
            )
            losses[kind] = records
            if out_dir is not None:
                seed_dir = Path(out_dir) / f"seed{seed}"
                seed_dir.mkdir(parents=True, exist_ok=True)
                write_loss_csv(records, seed_dir / f"loss-{kind}.csv")
        result.outcomes.append(
            SeedOutcome(seed, reports["gnn"], reports["bpr"], losses["gnn"], losses["bpr"])
        )
    return result


def summarize(result: ComparisonResult) -> str:
    lines = ["seed  gnn_auc   bpr_auc"]
    for o in result.outcomes:
        lines.append(f"{o.seed:<5} {o.gnn_report.auc:.4f}    {o.bpr_report.auc:.4f}")
    lines.append(
        f"median gnn {result.median_auc('gnn'):.4f}  "
        f"bpr {result.median_auc('bpr'):.4f}  margin {result.margin():+.4f}"
    )
    return "\n".join(lines)

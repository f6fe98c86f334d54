"""Command-line entry point: ingest, train, evaluate, recommend, compare.

Every command resolves one config (file plus ``--section.key value``
overrides), echoes it fully into the output directory before doing any work,
and reads/writes only the artifact files defined by the library modules, so
a rerun from the echoed config reproduces a run exactly.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bpr as bpr_mod
from . import graph_store as gs
from . import metrics, snapshot, trainer
from .config import RunConfig, load_config, resolve_seeds, write_echo
from .errors import ConfigError, DataError, RecError, SnapshotError

ENV_CONFIG = "GNNREC_CONFIG"


def _paths(cfg: RunConfig) -> dict[str, Path]:
    out = Path(cfg.output_dir)
    return {
        "out": out,
        "graph": out / "graph.txt",
        "manifest": out / "test_edges.csv",
        "stats": out / "stats.txt",
        "snapshot": out / f"model-{cfg.model.kind}.snapshot",
        "loss": out / f"loss-{cfg.model.kind}.csv",
        "report": out / f"report-{cfg.model.kind}.csv",
    }


def _parse_dataset(cfg: RunConfig) -> gs.RatingsTable:
    if not cfg.dataset.path:
        raise ConfigError("dataset.path is not set")
    parser = gs.parse_movielens if cfg.dataset.format == "movielens" else gs.parse_amazon
    return parser(cfg.dataset.path, strict=cfg.dataset.strict == "true")


def cmd_ingest(cfg: RunConfig) -> None:
    paths = _paths(cfg)
    write_echo(cfg, paths["out"])
    table = _parse_dataset(cfg)
    if cfg.dataset.min_interactions > 0:
        table = gs.filter_min_interactions(table, cfg.dataset.min_interactions)
    graph = gs.to_implicit(table)
    train_graph, test_edges = gs.split_train_test(graph, cfg.split)
    gs.save_graph(graph, paths["graph"])
    gs.write_test_manifest(test_edges, paths["manifest"])
    stats = {
        "users": graph.n_users,
        "items": graph.n_items,
        "edges": graph.n_edges,
        "levels": graph.n_levels,
        # fill ratio of the square all-node adjacency matrix
        "density": f"{gs.adjacency_density(graph):.6g}",
        # edges over the user x item interaction matrix
        "interaction_density": f"{gs.density(graph):.6g}",
        "train_edges": train_graph.n_edges,
        "test_edges": len(test_edges),
        "malformed_lines": table.n_malformed,
    }
    paths["stats"].write_text(
        "".join(f"{k} = {v}\n" for k, v in stats.items()), encoding="utf-8"
    )
    for key, value in stats.items():
        print(f"{key} = {value}")


def _load_train_graph(cfg: RunConfig) -> tuple[gs.InteractionGraph, gs.InteractionGraph, list]:
    paths = _paths(cfg)
    if not paths["graph"].exists():
        raise DataError(f"no ingested graph at {paths['graph']}; run `gnnrec ingest` first")
    full = gs.load_graph(paths["graph"])
    test_edges = gs.read_test_manifest(paths["manifest"])
    return full, gs.remove_edges(full, test_edges), test_edges


def cmd_train(cfg: RunConfig) -> None:
    paths = _paths(cfg)
    write_echo(cfg, paths["out"])
    _, train_graph, _ = _load_train_graph(cfg)
    if cfg.model.kind == "bpr":
        _, records = bpr_mod.train_bpr(train_graph, cfg, paths["out"])
    else:
        _, records = trainer.fit(train_graph, cfg, paths["out"])
    print(f"wrote {paths['snapshot']}")
    if records:
        print(f"epoch 1 mean loss {records[0].mean_train_loss:.6f}; "
              f"epoch {records[-1].epoch} mean loss {records[-1].mean_train_loss:.6f}")


def _load_model(cfg: RunConfig, snapshot_path, graph: gs.InteractionGraph):
    path = Path(snapshot_path) if snapshot_path else _paths(cfg)["snapshot"]
    if not path.exists():
        raise DataError(f"no model snapshot at {path}; run `gnnrec train` first")
    snap = snapshot.load_model_snapshot(path)
    if int(snap.config["d"]) != cfg.model.d:
        raise SnapshotError(
            f"snapshot d={snap.config['d']} does not match config model.d={cfg.model.d}"
        )
    return snapshot.rebuild_model(snap, graph)


def cmd_evaluate(cfg: RunConfig, snapshot_path=None) -> None:
    paths = _paths(cfg)
    write_echo(cfg, paths["out"])
    _, train_graph, test_edges = _load_train_graph(cfg)
    model = _load_model(cfg, snapshot_path, train_graph)
    dataset = Path(cfg.dataset.path).stem if cfg.dataset.path else cfg.dataset.format
    report = metrics.evaluate(model.scorer(), train_graph, test_edges, cfg.eval, dataset)
    report_path = paths["out"] / f"report-{model.kind}.csv"
    metrics.write_report(report, report_path)
    print(metrics.format_comparison(metrics.read_report_rows(report_path)))
    print(f"wrote {report_path}")


def cmd_recommend(cfg: RunConfig, user_key: str, k: int, snapshot_path=None) -> None:
    paths = _paths(cfg)
    write_echo(cfg, paths["out"])
    full, train_graph, _ = _load_train_graph(cfg)
    model = _load_model(cfg, snapshot_path, train_graph)
    if user_key not in full.user_index:
        raise DataError(f"unknown user key {user_key!r}")
    u = full.user_index[user_key]
    scorer = model.scorer()
    scores = np.asarray(scorer.scores(u, np.arange(full.n_items)), dtype=np.float64)
    seen = np.fromiter(full.user_item_set(u), dtype=np.int64) if full.user_degree(u) else []
    mask = np.ones(full.n_items, dtype=bool)
    mask[seen] = False
    candidates = np.flatnonzero(mask)
    order = np.lexsort((candidates, -scores[candidates]))
    for idx in candidates[order[:k]]:
        print(f"{full.item_keys[idx]}\t{scores[idx]:.6f}")


def cmd_compare(report_paths, out_path=None) -> None:
    rows = metrics.merge_reports(report_paths)
    print(metrics.format_comparison(rows))
    if out_path:
        metrics.write_merged_reports(rows, out_path)
        print(f"wrote {out_path}")


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _parse_overrides(extras: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        key_part = token[2:].split("=", 1)[0]
        if not token.startswith("--") or ("." not in key_part and key_part not in ("seed", "output_dir")):
            raise ConfigError(f"unrecognized argument {token!r}")
        if "=" in token:
            key, value = token[2:].split("=", 1)
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"override {token!r} is missing a value")
            key, value = token[2:], extras[i + 1]
            i += 1
        overrides[key] = value
        i += 1
    return overrides


def _resolve_config(args, extras) -> RunConfig:
    overrides = _parse_overrides(extras)
    if args.config:
        return load_config(args.config, overrides)
    cfg = RunConfig()
    explicit = []
    for key, value in overrides.items():
        from .config import apply_setting

        apply_setting(cfg, key, value)
        explicit.append(key)
    cfg._explicit_keys = explicit  # type: ignore[attr-defined]
    resolve_seeds(cfg)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gnnrec",
        description="Graph neural network recommender: ingest ratings, train, evaluate, recommend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "parse, filter, binarize, and split a ratings file"),
        ("train", "train the configured model on the ingested graph"),
        ("evaluate", "score the held-out edges and write a metrics report"),
        ("recommend", "print top-k unseen items for one user"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=os.environ.get(ENV_CONFIG),
                       help=f"config file (default: ${ENV_CONFIG})")
        if name in ("evaluate", "recommend"):
            p.add_argument("--snapshot", help="model snapshot path (default: from output_dir)")
        if name == "recommend":
            p.add_argument("--user", required=True, help="external user key")
            p.add_argument("--k", type=int, default=10)
    p_cmp = sub.add_parser("compare", help="merge metric reports into one table")
    p_cmp.add_argument("reports", nargs="+")
    p_cmp.add_argument("--out", help="write the merged CSV here")

    try:
        args, extras = parser.parse_known_args(argv)
        if args.command == "compare":
            if extras:
                raise ConfigError(f"unrecognized argument {extras[0]!r}")
            cmd_compare(args.reports, args.out)
            return 0
        cfg = _resolve_config(args, extras)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.snapshot)
        elif args.command == "recommend":
            if args.k < 0:
                raise ConfigError("--k must be >= 0")
            cmd_recommend(cfg, args.user, args.k, args.snapshot)
        return 0
    except (RecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: dataclasses, the `section.key = value` file format,
CLI-style overrides, and derived per-component seed streams.

All randomness flows from the single top-level `seed`: each component
(split, sampler, negatives, init, eval) gets its own 64-bit sub-seed derived
deterministically from it, unless the config sets that component's seed
explicitly.  The echoed config always records the resolved values, so a rerun
from the echo reproduces every stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

AGGREGATORS = ("mean", "attention", "pooling")
HEADS = ("dot", "mlp")
MODEL_KINDS = ("gnn", "bpr")
SAMPLER_MODES = ("top-k", "proportional")
OPTIMIZERS = ("sgd", "adam")
DATASET_FORMATS = ("movielens", "amazon")

# stable stream indices for sub-seed derivation
_STREAMS = {"split": 0, "sampler": 1, "negatives": 2, "init": 3, "eval": 4}


def sub_seed(master: int, stream: str) -> int:
    """Derive the named component's 64-bit seed from the master seed."""
    key = _STREAMS[stream]
    return int(np.random.SeedSequence(master, spawn_key=(key,)).generate_state(1, np.uint64)[0])


@dataclass
class SplitSpec:
    """Per-user random holdout of a fraction of each user's edges."""

    test_fraction: float = 0.2
    seed: int = 0
    strategy: str = "per-user-random"

    def validate(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"split.test_fraction must be in (0,1), got {self.test_fraction}")
        if self.strategy != "per-user-random":
            raise ConfigError(f"unknown split strategy {self.strategy!r}")


@dataclass
class ImportanceConfig:
    """Neighbor sampling budget and mode."""

    size: int = 10
    mode: str = "top-k"
    seed: int = 0

    def validate(self) -> None:
        if self.size < 1:
            raise ConfigError(f"sampler.size must be >= 1, got {self.size}")
        if self.mode not in SAMPLER_MODES:
            raise ConfigError(f"sampler.mode must be one of {SAMPLER_MODES}")


@dataclass
class ModelConfig:
    kind: str = "gnn"
    d: int = 64
    layers: int = 2
    aggregator: str = "attention"
    head: str = "dot"

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
        if self.d < 1:
            raise ConfigError("model.d must be >= 1")
        if self.layers < 0:
            raise ConfigError("model.layers must be >= 0")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"model.aggregator must be one of {AGGREGATORS}")
        if self.head not in HEADS:
            raise ConfigError(f"model.head must be one of {HEADS}")


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    reg_lambda: float = 1e-4
    epochs: int = 30
    batch_size: int = 1024
    negatives_per_positive: int = 1
    optimizer: str = "adam"
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError("training.learning_rate must be >= 0")
        if self.reg_lambda < 0:
            raise ConfigError("training.lambda must be >= 0")
        if self.epochs < 0:
            raise ConfigError("training.epochs must be >= 0")
        if self.batch_size < 1 or self.negatives_per_positive < 1:
            raise ConfigError("training batch_size and negatives_per_positive must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"training.optimizer must be one of {OPTIMIZERS}")


@dataclass
class EvalConfig:
    negatives: int = 99
    ks: tuple[int, ...] = (1, 2, 10)
    seed: int = 0

    def validate(self) -> None:
        if self.negatives < 1:
            raise ConfigError("eval.negatives must be >= 1")
        if any(k < 1 for k in self.ks):
            raise ConfigError("eval.ks entries must be >= 1")


@dataclass
class DatasetConfig:
    format: str = "movielens"
    path: str = ""
    min_interactions: int = 0
    strict: str = "false"  # "true": fail ingest on the first malformed line

    def validate(self) -> None:
        if self.format not in DATASET_FORMATS:
            raise ConfigError(f"dataset.format must be one of {DATASET_FORMATS}")
        if self.min_interactions < 0:
            raise ConfigError("dataset.min_interactions must be >= 0")
        if self.strict not in ("true", "false"):
            raise ConfigError("dataset.strict must be true or false")


@dataclass
class RunConfig:
    seed: int = 42
    output_dir: str = "runs/default"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    sampler: ImportanceConfig = field(default_factory=ImportanceConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        for section in (self.dataset, self.split, self.sampler, self.model, self.training, self.eval):
            section.validate()


_SECTIONS = ("dataset", "split", "sampler", "model", "training", "eval")

# config-file key -> attribute name, where they differ
_KEY_ALIASES = {"training.lambda": "training.reg_lambda"}
_ATTR_ALIASES = {v: k for k, v in _KEY_ALIASES.items()}


def _parse_value(current, raw: str, key: str):
    if isinstance(current, bool):
        raise ConfigError(f"unsupported config field type for {key}")
    try:
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {key}") from exc
    return raw


def apply_setting(cfg: RunConfig, key: str, raw: str) -> None:
    """Set one dotted key (e.g. ``training.epochs``) from its string form."""
    attr_key = _KEY_ALIASES.get(key, key)
    if "." in attr_key:
        section_name, attr = attr_key.split(".", 1)
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown config section {section_name!r}")
        section = getattr(cfg, section_name)
        if not hasattr(section, attr):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(section, attr, _parse_value(getattr(section, attr), raw, key))
    elif attr_key in ("seed", "output_dir"):
        setattr(cfg, attr_key, _parse_value(getattr(cfg, attr_key), raw, key))
    else:
        raise ConfigError(f"unknown config key {key!r}")


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse `key = value` lines; '#' starts a comment; blank lines ignored."""
    cfg = base if base is not None else RunConfig()
    explicit: list[str] = getattr(cfg, "_explicit_keys", [])
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        apply_setting(cfg, key, raw)
        explicit.append(key)
    cfg._explicit_keys = explicit  # type: ignore[attr-defined]
    return cfg


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = parse_config_text(Path(path).read_text(encoding="utf-8"))
    for key, raw in (overrides or {}).items():
        apply_setting(cfg, key, raw)
        cfg._explicit_keys.append(key)  # type: ignore[attr-defined]
    resolve_seeds(cfg)
    cfg.validate()
    return cfg


def resolve_seeds(cfg: RunConfig) -> None:
    """Fill per-component seeds from the master seed unless set explicitly."""
    explicit = set(getattr(cfg, "_explicit_keys", []))
    if "split.seed" not in explicit:
        cfg.split.seed = sub_seed(cfg.seed, "split")
    if "sampler.seed" not in explicit:
        cfg.sampler.seed = sub_seed(cfg.seed, "sampler")
    if "training.seed" not in explicit:
        cfg.training.seed = sub_seed(cfg.seed, "negatives")
    if "eval.seed" not in explicit:
        cfg.eval.seed = sub_seed(cfg.seed, "eval")


def init_seed(cfg: RunConfig) -> int:
    """Seed for parameter initialization, derived from the master seed."""
    return sub_seed(cfg.seed, "init")


def echo_config(cfg: RunConfig) -> str:
    """Render the fully-resolved config as a reloadable config file."""
    lines = [f"seed = {cfg.seed}", f"output_dir = {cfg.output_dir}"]
    for section_name in _SECTIONS:
        section = getattr(cfg, section_name)
        for f in fields(section):
            value = getattr(section, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            key = _ATTR_ALIASES.get(f"{section_name}.{f.name}", f"{section_name}.{f.name}")
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_echo(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.echo"
    path.write_text(echo_config(cfg), encoding="utf-8")
    return path

"""gnnrec: a from-scratch graph-neural-network recommender with an
importance-sampling neighbor selector, attention/mean/pooling aggregation,
ranking evaluation, and a BPR matrix-factorization baseline."""

__version__ = "0.1.0"

from .config import (
    EvalConfig,
    ImportanceConfig,
    ModelConfig,
    RunConfig,
    SplitSpec,
    TrainingConfig,
)
from .graph_store import (
    InteractionGraph,
    RatingsTable,
    density,
    filter_min_interactions,
    neighbors,
    parse_amazon,
    parse_movielens,
    split_train_test,
    to_implicit,
)
from .model import Recommender
from .bpr import BprModel
from .metrics import MetricsReport, auc, evaluate, ndcg_at_k
from .trainer import LossRecord, fit

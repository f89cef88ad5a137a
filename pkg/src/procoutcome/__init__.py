"""Outcome prediction for running business-process cases from event-log prefixes."""

from .errors import ProcOutcomeError
from .estimator import OutcomeClassifier
from .eventlog import EventLog, FeatureSchema, ingest_csv
from .experiments import SyntheticLogSpec, ablate, earliness, generate_synthetic_log
from .features import LabelRule, LogEncoder
from .metrics import MetricsReport, auc_pr, auc_roc
from .models import ModelConfig, Network, build, predict
from .pipeline import prepare
from .prefixes import PrefixDataset, PrefixWindower, window_log
from .training import random_search, shuffle_split, train

__version__ = "0.1.0"

__all__ = [
    "EventLog", "FeatureSchema", "LabelRule", "LogEncoder", "MetricsReport", "ModelConfig", "Network",
    "OutcomeClassifier", "PrefixDataset", "PrefixWindower", "ProcOutcomeError", "SyntheticLogSpec",
    "ablate", "auc_pr", "auc_roc", "build", "earliness", "generate_synthetic_log", "ingest_csv",
    "predict", "prepare", "random_search", "shuffle_split", "train", "window_log",
]

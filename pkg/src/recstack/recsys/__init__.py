"""In-session recommender training flow.

Covers the model itself (first-order transition counts with additive
smoothing), temporal dataset splitting, offline evaluation with a
popularity baseline, exhaustive hyperparameter search, behavioral
checklists, and content-addressed artifact packaging.
"""

from .artifacts import (
    ArtifactInfo,
    deserialize_model,
    list_versions,
    load_artifact,
    package,
    resolve_version,
    serialize_model,
)
from .checklist import all_pass, behavioral_checklist
from .dataset import build_dataset, split_ts_at_fraction
from .evaluate import EvalReport, evaluate, hyper_search
from .markov import MarkovNextItem

__all__ = [
    "ArtifactInfo",
    "EvalReport",
    "MarkovNextItem",
    "all_pass",
    "behavioral_checklist",
    "build_dataset",
    "deserialize_model",
    "evaluate",
    "hyper_search",
    "list_versions",
    "load_artifact",
    "package",
    "resolve_version",
    "serialize_model",
    "split_ts_at_fraction",
]

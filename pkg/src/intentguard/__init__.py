"""intentguard: behavioral integrity checking for intent-based networking.

The package detects tampered network intents by learning time-aware
fingerprints of benign intent traffic: a gradient-boosted classifier is
trained on lag / sliding-window / relational-delta features and deployed as
an online checkpoint that flags suspicious submissions before they reach
the orchestration pipeline.
"""

from .intent_model import (
    ClassLabel,
    IntentEvent,
    PerfRequirement,
    parse_intent_json,
    parse_requirement,
    serialize_intent_json,
)
from .dataset import (
    GeneratorConfig,
    LabeledDataset,
    clean,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
    sort_chronologically,
    split_stratified,
)
from .features import StreamState, WindowConfig, featurize_batch, featurize_streaming, manifest
from .attacks import BaselineStats, InjectionConfig, audit, compute_baseline, inject
from .resample import SmoteConfig, smote
from .gbt import BINARY_DEFAULTS, MULTICLASS_DEFAULTS, GbtModel, Hyperparams, fit
from .tuning import default_search_space, rscv, stratified_kfold
from .metrics import binary_metrics, confusion, multiclass_metrics
from .gateway import GatewayConfig, IntentGateway, Verdict, create_app

__version__ = "0.1.0"

__all__ = [
    "BINARY_DEFAULTS",
    "BaselineStats",
    "ClassLabel",
    "GatewayConfig",
    "GbtModel",
    "GeneratorConfig",
    "Hyperparams",
    "InjectionConfig",
    "IntentEvent",
    "IntentGateway",
    "LabeledDataset",
    "MULTICLASS_DEFAULTS",
    "PerfRequirement",
    "SmoteConfig",
    "StreamState",
    "Verdict",
    "WindowConfig",
    "audit",
    "binary_metrics",
    "clean",
    "compute_baseline",
    "confusion",
    "create_app",
    "default_search_space",
    "featurize_batch",
    "featurize_streaming",
    "fit",
    "generate_synthetic",
    "inject",
    "load_jsonl",
    "manifest",
    "multiclass_metrics",
    "parse_intent_json",
    "parse_requirement",
    "rscv",
    "save_jsonl",
    "serialize_intent_json",
    "smote",
    "sort_chronologically",
    "split_stratified",
    "stratified_kfold",
]

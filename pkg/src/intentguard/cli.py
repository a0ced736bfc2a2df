"""Pipeline CLI: generate -> inject -> featurize -> split -> tune -> train
-> evaluate -> replay -> serve.

Stages communicate through files in the output directory, so any stage can
be rerun in isolation or fed externally supplied data in the documented
formats. One master seed derives every stage seed as
sha256("<seed>:<stage>"), and the full configuration hash is embedded in
each artifact; a downstream stage refuses to chain onto artifacts produced
under a different configuration.

Exit codes: 0 success, 2 usage, 3 missing upstream artifact, 4 invalid
configuration, 5 stage failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import gbt
from .attacks import (
    BaselineStats,
    InjectionConfig,
    audit,
    compute_baseline,
    inject,
    save_tamper_records,
)
from .dataset import (
    GeneratorConfig,
    LabeledDataset,
    ServiceProfile,
    generate_synthetic,
    load_jsonl,
    read_artifact_meta,
    save_jsonl,
    stratified_split_indices,
)
from .errors import (
    ConfigInvalid,
    IntentGuardError,
    InvalidConfig,
    InvalidSpace,
    MissingArtifact,
)
from .features import (
    WindowConfig,
    featurize_batch,
    manifest,
    read_features_csv,
    write_features_csv,
)
from .gateway import GatewayConfig, IntentGateway, create_app, load_gateway
from .intent_model import CLASS_NAMES, CategoryEncoder, ClassLabel
from .metrics import EvalReport, evaluate_predictions, render_report, time_predictions
from .resample import SmoteConfig, smote
from .tuning import default_search_space, rscv, save_trials_jsonl

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_CONFIG_INVALID = 4
EXIT_STAGE_FAILED = 5

CONFIG_SCHEMA_VERSION = "1"

DEFAULT_CONFIG = {
    "schema_version": CONFIG_SCHEMA_VERSION,
    "seed": 42,
    "generator": {"n_events": 10_000, "profiles": None},
    "injection": {
        "per_class": {"DoS": 10, "Exfil": 10, "QoS": 10},
        "dos_duration_multiplier": 2.0,
        "exfil_volume_multiplier": 2.2,
        "qos_multiplier": 1.5,
    },
    "window": {"k": 50},
    "split": {"test_fraction": 0.2},
    "smote": {"k_neighbors": 5},
    "tuning": {
        "enabled": False,
        "n_iter": 25,
        "n_folds": 5,
        "objective": "binary",
        "space": None,
    },
    "train": {"task": "both", "binary": {}, "multiclass": {}},
    "gateway": {"benign_threshold": 0.5},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[str], seed_override: Optional[int] = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigInvalid(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigInvalid("config must be a JSON object")
        version = str(user.get("schema_version", CONFIG_SCHEMA_VERSION))
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported config schema_version {version}")
        cfg = _deep_merge(cfg, user)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    if cfg["generator"]["n_events"] <= 0:
        raise ConfigInvalid("generator.n_events must be positive")
    if not 0.0 < cfg["split"]["test_fraction"] < 1.0:
        raise ConfigInvalid("split.test_fraction must be in (0,1)")
    if cfg["window"]["k"] < 1:
        raise ConfigInvalid("window.k must be >= 1")
    if cfg["smote"]["k_neighbors"] < 1:
        raise ConfigInvalid("smote.k_neighbors must be >= 1")
    if cfg["train"]["task"] not in ("binary", "multiclass", "both"):
        raise ConfigInvalid("train.task must be binary, multiclass or both")
    if cfg["tuning"]["objective"] not in ("binary", "multiclass"):
        raise ConfigInvalid("tuning.objective must be binary or multiclass")
    for name in cfg["injection"]["per_class"]:
        try:
            ClassLabel.from_name(name)
        except ValueError:
            raise ConfigInvalid(f"unknown attack class {name!r}") from None


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def stage_seed(cfg: dict, stage: str) -> int:
    digest = hashlib.sha256(f"{cfg['seed']}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def artifact_meta(cfg: dict, stage: str) -> dict:
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "stage": stage,
        "stage_seed": stage_seed(cfg, stage),
    }


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(f"required artifact missing: {path}")
    return path


def _check_chain(path: str, cfg: dict) -> None:
    meta = read_artifact_meta(path)
    if meta is not None and meta.get("config_hash") != config_hash(cfg):
        raise ConfigInvalid(
            f"{path} was produced under config {meta.get('config_hash')}, "
            f"current config is {config_hash(cfg)}"
        )


def _check_json_chain(path: str, cfg: dict) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    meta = obj.get("_artifact")
    if meta is not None and meta.get("config_hash") != config_hash(cfg):
        raise ConfigInvalid(
            f"{path} was produced under config {meta.get('config_hash')}, "
            f"current config is {config_hash(cfg)}"
        )


def _write_json(path: str, payload: dict, meta: dict) -> None:
    doc = {"_artifact": meta}
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _profiles_from_config(cfg: dict):
    raw = cfg["generator"].get("profiles")
    if not raw:
        return None
    profiles = []
    for p in raw:
        profiles.append(ServiceProfile(
            name=p["name"],
            event_type=p["event_type"],
            duration_mean_ms=float(p["duration_mean_ms"]),
            duration_std_ms=float(p["duration_std_ms"]),
            volume_mean_mb=float(p["volume_mean_mb"]),
            volume_std_mb=float(p["volume_std_mb"]),
            latency_req_range_ms=tuple(p["latency_req_range_ms"]),
            bandwidth_req_range_mbps=tuple(p["bandwidth_req_range_mbps"]),
            arrival_rate_per_hour=float(p["arrival_rate_per_hour"]),
            resources_range=tuple(p.get("resources_range", (0.01, 0.2))),
            functions=tuple(p.get("functions", ServiceProfile.functions)),
        ))
    return tuple(profiles)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_generate(cfg: dict, out: str) -> None:
    kwargs = {"seed": stage_seed(cfg, "generate"),
              "n_events": cfg["generator"]["n_events"]}
    profiles = _profiles_from_config(cfg)
    if profiles is not None:
        kwargs["profiles"] = profiles
    ds = generate_synthetic(GeneratorConfig(**kwargs))
    save_jsonl(ds, os.path.join(out, "benign.jsonl"),
               meta=artifact_meta(cfg, "generate"))
    logger.info("generate: wrote %d benign events", len(ds))


def stage_inject(cfg: dict, out: str) -> None:
    src = _require(os.path.join(out, "benign.jsonl"))
    _check_chain(src, cfg)
    ds = load_jsonl(src)
    stats = compute_baseline(ds)
    inj = cfg["injection"]
    icfg = InjectionConfig(
        seed=stage_seed(cfg, "inject"),
        per_class={ClassLabel.from_name(k): int(v)
                   for k, v in inj["per_class"].items()},
        dos_duration_multiplier=float(inj["dos_duration_multiplier"]),
        exfil_volume_multiplier=float(inj["exfil_volume_multiplier"]),
        qos_multiplier=float(inj["qos_multiplier"]),
    )
    tampered, records = inject(ds, stats, icfg)
    report = audit(ds, tampered, records, stats, icfg)
    if not report.ok:
        raise IntentGuardError(
            f"injection audit failed: {report.violations[:3]}")
    meta = artifact_meta(cfg, "inject")
    save_jsonl(tampered, os.path.join(out, "tampered.jsonl"), meta=meta)
    save_tamper_records(records, os.path.join(out, "tamper_records.jsonl"),
                        meta=meta)
    _write_json(os.path.join(out, "baseline.json"),
                {"baseline": stats.to_dict()}, meta)
    logger.info("inject: tampered %d of %d rows (audit clean)",
                len(records), len(tampered))


def stage_featurize(cfg: dict, out: str) -> None:
    src = _require(os.path.join(out, "tampered.jsonl"))
    _check_chain(src, cfg)
    ds = load_jsonl(src)
    wcfg = WindowConfig(K=int(cfg["window"]["k"]))
    featured = featurize_batch(ds, wcfg)
    write_features_csv(featured, os.path.join(out, "features.csv"))
    encoder = CategoryEncoder.fit(e.event_type for e in ds.events)
    names, digest = manifest(wcfg)
    _write_json(
        os.path.join(out, "features.meta.json"),
        {
            "manifest": names,
            "manifest_hash": digest,
            "window_k": wcfg.K,
            "encoder": encoder.mapping,
            "n_rows": len(featured),
        },
        artifact_meta(cfg, "featurize"),
    )
    logger.info("featurize: %d rows x %d features", len(featured), len(names))


def stage_split(cfg: dict, out: str) -> None:
    feats = _require(os.path.join(out, "features.csv"))
    _require(os.path.join(out, "features.meta.json"))
    _check_json_chain(os.path.join(out, "features.meta.json"), cfg)
    src = _require(os.path.join(out, "tampered.jsonl"))
    ds = load_jsonl(src)
    X, y, names = read_features_csv(feats)
    if y is None:
        raise ConfigInvalid("features.csv lacks the label column")
    train_idx, test_idx = stratified_split_indices(
        y, cfg["split"]["test_fraction"], stage_seed(cfg, "split"))

    full = LabeledDataset(
        events=ds.events, labels=ds.labels, feature_matrix=X, manifest=names)
    meta = artifact_meta(cfg, "split")
    write_features_csv(full.subset(train_idx.tolist()),
                       os.path.join(out, "train.csv"))
    write_features_csv(full.subset(test_idx.tolist()),
                       os.path.join(out, "test.csv"))
    save_jsonl(full.subset(test_idx.tolist()),
               os.path.join(out, "test_events.jsonl"), meta=meta)
    _write_json(
        os.path.join(out, "split.meta.json"),
        {"train_indices": train_idx.tolist(), "test_indices": test_idx.tolist()},
        meta,
    )
    logger.info("split: %d train / %d test rows", len(train_idx), len(test_idx))


def _objective_for(task: str) -> str:
    return gbt.OBJECTIVE_BINARY if task == "binary" else gbt.OBJECTIVE_SOFTMAX


def stage_tune(cfg: dict, out: str, n_iter: Optional[int] = None,
               n_folds: Optional[int] = None) -> None:
    feats = _require(os.path.join(out, "train.csv"))
    X, y, _ = read_features_csv(feats)
    if y is None:
        raise ConfigInvalid("train.csv lacks the label column")
    tcfg = cfg["tuning"]
    space = tcfg["space"] or default_search_space()
    result = rscv(
        X, y, space,
        n_iter=int(n_iter if n_iter is not None else tcfg["n_iter"]),
        n_folds=int(n_folds if n_folds is not None else tcfg["n_folds"]),
        objective=_objective_for(tcfg["objective"]),
        seed=stage_seed(cfg, "tune"),
        smote_cfg=SmoteConfig(k_neighbors=int(cfg["smote"]["k_neighbors"])),
    )
    meta = artifact_meta(cfg, "tune")
    save_trials_jsonl(result.trials, os.path.join(out, "trials.jsonl"), meta=meta)
    _write_json(
        os.path.join(out, "best_params.json"),
        {
            "objective": tcfg["objective"],
            "best_index": result.best_index,
            "best_params": result.best_params.to_dict(),
            "best_mean_loss": result.trials[result.best_index].mean_loss,
        },
        meta,
    )
    logger.info("tune: best trial %d, mean loss %.6f",
                result.best_index, result.trials[result.best_index].mean_loss)


def _hyperparams_for(cfg: dict, out: str, task: str) -> gbt.Hyperparams:
    hp = gbt.BINARY_DEFAULTS if task == "binary" else gbt.MULTICLASS_DEFAULTS
    params = hp.to_dict()
    best_path = os.path.join(out, "best_params.json")
    if cfg["tuning"]["enabled"] and os.path.exists(best_path) \
            and cfg["tuning"]["objective"] == task:
        with open(best_path, "r", encoding="utf-8") as fh:
            params.update(json.load(fh)["best_params"])
    params.update(cfg["train"]["binary" if task == "binary" else "multiclass"])
    params["seed"] = stage_seed(cfg, f"train-{task}")
    return gbt.Hyperparams.from_dict(params)


def _featurizer_metadata(out: str) -> dict:
    path = _require(os.path.join(out, "features.meta.json"))
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return {
        "window_k": obj["window_k"],
        "encoder": obj["encoder"],
        "manifest": obj["manifest"],
    }


def _tasks(cfg: dict, task_override: Optional[str]) -> list:
    task = task_override or cfg["train"]["task"]
    return ["binary", "multiclass"] if task == "both" else [task]


def stage_train(cfg: dict, out: str, task_override: Optional[str] = None) -> None:
    feats = _require(os.path.join(out, "train.csv"))
    X, y4, _ = read_features_csv(feats)
    if y4 is None:
        raise ConfigInvalid("train.csv lacks the label column")
    _, digest = manifest()
    feat_meta = _featurizer_metadata(out)

    for task in _tasks(cfg, task_override):
        hp = _hyperparams_for(cfg, out, task)
        if task == "binary":
            y = (y4 > 0).astype(np.int64)
            class_names = ["Benign", "Attack"]
        else:
            y = y4
            class_names = list(CLASS_NAMES)
        Xs, ys = smote(X, y, SmoteConfig(
            k_neighbors=int(cfg["smote"]["k_neighbors"]),
            seed=stage_seed(cfg, f"smote-{task}"),
        ))
        model = gbt.fit(Xs, ys, hp, _objective_for(task),
                        class_names=class_names, manifest_hash=digest)
        model.metadata = {
            "artifact": artifact_meta(cfg, f"train-{task}"),
            "featurizer": feat_meta,
            "task": task,
        }
        path = os.path.join(out, f"model_{task}.json")
        gbt.save(model, path)
        logger.info("train[%s]: %d trees -> %s", task, len(model.trees), path)


def stage_evaluate(cfg: dict, out: str, task_override: Optional[str] = None,
                   with_timing: bool = False) -> None:
    feats = _require(os.path.join(out, "test.csv"))
    X, y4, _ = read_features_csv(feats)
    if y4 is None:
        raise ConfigInvalid("test.csv lacks the label column")

    for task in _tasks(cfg, task_override):
        model_path = _require(os.path.join(out, f"model_{task}.json"))
        model = gbt.load(model_path)
        y = (y4 > 0).astype(np.int64) if task == "binary" else y4
        proba = model.predict_proba(X)
        report = evaluate_predictions(y, proba, list(model.class_names))
        if with_timing:
            mean_ms, p95_ms = time_predictions(model, X)
            report.latency_mean_ms = mean_ms
            report.latency_p95_ms = p95_ms
        base = os.path.join(out, f"eval_{task}")
        _write_json(base + ".json", {"report": report.to_dict()},
                    artifact_meta(cfg, f"evaluate-{task}"))
        render_report(report, "text-table", base + ".txt")
        render_report(report, "csv", base + ".csv")
        render_report(report, "svg-heatmap", base + ".svg")
        logger.info("evaluate[%s]: accuracy %.4f, recall %.4f, f1 %.4f",
                    task, report.accuracy, report.recall, report.f1)


def stage_replay(cfg: dict, out: str, capture: Optional[str] = None) -> None:
    model_path = _require(os.path.join(out, "model_binary.json"))
    capture_path = _require(capture or os.path.join(out, "test_events.jsonl"))
    gw = IntentGateway(
        gbt.load(model_path),
        GatewayConfig(model_path=model_path,
                      benign_threshold=float(cfg["gateway"]["benign_threshold"])),
    )
    verdicts, report = gw.batch_replay(capture_path)
    meta = artifact_meta(cfg, "replay")
    with open(os.path.join(out, "verdicts.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_artifact": meta}, sort_keys=True) + "\n")
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), sort_keys=True) + "\n")
    payload = {"report": report.to_dict() if report is not None else None,
               "n_verdicts": len(verdicts),
               "n_flagged": sum(1 for v in verdicts if v.decision == "flag")}
    _write_json(os.path.join(out, "replay_report.json"), payload, meta)
    logger.info("replay: %d verdicts, %d flagged",
                len(verdicts), payload["n_flagged"])


def stage_serve(cfg: dict, out: str, host: Optional[str] = None,
                port: Optional[int] = None) -> None:
    import uvicorn

    model_path = _require(os.path.join(out, "model_binary.json"))
    attribution_path = os.path.join(out, "model_multiclass.json")
    gw_cfg = GatewayConfig(
        model_path=model_path,
        attribution_model_path=(attribution_path
                                if os.path.exists(attribution_path) else None),
        benign_threshold=float(cfg["gateway"]["benign_threshold"]),
        verdict_log_path=os.path.join(out, "verdict_log.jsonl"),
    )
    gateway = load_gateway(gw_cfg)
    app = create_app(gateway)
    uvicorn.run(app, host=host or gw_cfg.listen_host,
                port=port or gw_cfg.listen_port, log_level="warning")


PIPELINE_STAGES = ("generate", "inject", "featurize", "split", "train", "evaluate")


def run_pipeline(cfg: dict, out: str) -> None:
    stage_generate(cfg, out)
    stage_inject(cfg, out)
    stage_featurize(cfg, out)
    stage_split(cfg, out)
    if cfg["tuning"]["enabled"]:
        stage_tune(cfg, out)
    stage_train(cfg, out)
    stage_evaluate(cfg, out)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentguard",
        description="intent-tampering detection pipeline and gateway",
    )
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", default="out", help="artifact directory")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "inject", "featurize", "split", "pipeline"):
        sub.add_parser(name)
    p_tune = sub.add_parser("tune")
    p_tune.add_argument("--n-iter", type=int)
    p_tune.add_argument("--n-folds", type=int)
    p_train = sub.add_parser("train")
    p_train.add_argument("--task", choices=("binary", "multiclass", "both"))
    p_eval = sub.add_parser("evaluate")
    p_eval.add_argument("--task", choices=("binary", "multiclass", "both"))
    p_eval.add_argument("--time-predictions", action="store_true")
    p_replay = sub.add_parser("replay")
    p_replay.add_argument("--file", help="JSONL capture (default: test split)")
    p_serve = sub.add_parser("serve")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "generate":
            stage_generate(cfg, args.out)
        elif args.command == "inject":
            stage_inject(cfg, args.out)
        elif args.command == "featurize":
            stage_featurize(cfg, args.out)
        elif args.command == "split":
            stage_split(cfg, args.out)
        elif args.command == "tune":
            stage_tune(cfg, args.out, n_iter=args.n_iter, n_folds=args.n_folds)
        elif args.command == "train":
            stage_train(cfg, args.out, task_override=args.task)
        elif args.command == "evaluate":
            stage_evaluate(cfg, args.out, task_override=args.task,
                           with_timing=args.time_predictions)
        elif args.command == "replay":
            stage_replay(cfg, args.out, capture=args.file)
        elif args.command == "serve":
            stage_serve(cfg, args.out, host=args.host, port=args.port)
        elif args.command == "pipeline":
            run_pipeline(cfg, args.out)
    except MissingArtifact as exc:
        logger.error("%s", exc)
        return EXIT_MISSING_ARTIFACT
    except (ConfigInvalid, InvalidConfig, InvalidSpace) as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG_INVALID
    except IntentGuardError as exc:
        logger.error("stage failed: %s", exc)
        return EXIT_STAGE_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

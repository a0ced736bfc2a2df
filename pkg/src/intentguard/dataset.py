"""Dataset handling: cleaning, sorting, splitting, JSONL IO and a synthetic
intent-event generator.

The generator stands in for proprietary operator telemetry: it draws events
per service profile (truncated normal durations/volumes, Poisson arrivals,
uniform requirement ranges) and is byte-for-byte reproducible from its seed.
Real data in the documented JSONL mapping loads through the same path.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateClass,
    IntentGuardError,
    InvalidConfig,
    MalformedLine,
    MissingRequiredField,
)
from .intent_model import (
    WIRE_KEYS,
    ClassLabel,
    IntentEvent,
    PerfRequirement,
    event_to_wire,
    parse_intent_json,
)

logger = logging.getLogger(__name__)

ARTIFACT_META_KEY = "_artifact"


@dataclass
class LabeledDataset:
    """Chronologically ordered events with class labels and, once the
    featurizer has run, an aligned feature matrix."""

    events: List[IntentEvent]
    labels: List[ClassLabel]
    feature_matrix: Optional[np.ndarray] = None
    manifest: List[str] = field(default_factory=list)
    schema_version: str = ""

    def __post_init__(self):
        if len(self.events) != len(self.labels):
            raise ValueError(
                f"{len(self.events)} events but {len(self.labels)} labels"
            )
        if self.feature_matrix is not None:
            if self.feature_matrix.shape[0] != len(self.events):
                raise ValueError("feature matrix row count != event count")
            if self.manifest and self.feature_matrix.shape[1] != len(self.manifest):
                raise ValueError("feature matrix column count != manifest length")

    def __len__(self) -> int:
        return len(self.events)

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        idx = list(indices)
        return LabeledDataset(
            events=[self.events[i] for i in idx],
            labels=[self.labels[i] for i in idx],
            feature_matrix=(
                self.feature_matrix[idx] if self.feature_matrix is not None else None
            ),
            manifest=list(self.manifest),
            schema_version=self.schema_version,
        )

    def class_counts(self) -> dict:
        counts = {label: 0 for label in ClassLabel}
        for lab in self.labels:
            counts[lab] += 1
        return counts

    def label_array(self) -> np.ndarray:
        return np.array([int(lab) for lab in self.labels], dtype=np.int64)


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------

@dataclass
class CleaningReport:
    rows_in: int = 0
    rows_kept: int = 0
    duplicates_removed: int = 0
    dropped_missing_required: int = 0
    dropped_invalid: int = 0
    zero_variance_columns: List[str] = field(default_factory=list)
    high_cardinality_columns: List[str] = field(default_factory=list)
    unknown_keys: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# Canonical keys scanned for constant values; the rest of the schema
# (timestamps, lists, nested requirements) is structural, not a feature.
_NUMERIC_SCAN_KEYS = (
    "event_duration",
    "event_load_volume",
    "network_resources_consumed_per_device",
)
_CATEGORICAL_SCAN_KEYS = ("event_name", "event_type")
_SCAN_EXEMPT = set(WIRE_KEYS) | {"label"}


def high_cardinality_threshold(n_rows: int) -> int:
    """Distinct-count above which a categorical column is identifier-like."""
    return math.ceil(0.5 * n_rows)


def clean(records: Sequence) -> Tuple[List[IntentEvent], CleaningReport]:
    """Drop exact duplicates and unusable records; flag degenerate columns.

    Accepts raw wire dicts or already-parsed IntentEvents (events are
    round-tripped through the wire form, which makes cleaning idempotent).
    Records that fail to parse are dropped and counted, never raised:
    cleaning is total and an empty result is legal.
    """
    report = CleaningReport(rows_in=len(records))
    seen = set()
    kept_events: List[IntentEvent] = []
    kept_dicts: List[dict] = []
    unknown: set = set()

    for rec in records:
        obj = event_to_wire(rec) if isinstance(rec, IntentEvent) else rec
        fingerprint = json.dumps(obj, sort_keys=True, separators=(",", ":"))
        if fingerprint in seen:
            report.duplicates_removed += 1
            continue
        seen.add(fingerprint)
        warn: list = []
        try:
            event = parse_intent_json(obj, on_unknown=warn)
        except MissingRequiredField:
            report.dropped_missing_required += 1
            continue
        except IntentGuardError:
            report.dropped_invalid += 1
            continue
        unknown.update(warn)
        kept_events.append(event)
        kept_dicts.append(obj)

    report.rows_kept = len(kept_events)
    report.unknown_keys = sorted(unknown)
    _flag_columns(kept_dicts, report)
    return kept_events, report


def _flag_columns(rows: List[dict], report: CleaningReport) -> None:
    if not rows:
        return
    n = len(rows)
    threshold = high_cardinality_threshold(n)

    extra_keys = sorted({k for row in rows for k in row} - _SCAN_EXEMPT)
    for key in (*_NUMERIC_SCAN_KEYS, *_CATEGORICAL_SCAN_KEYS, *extra_keys):
        values = [row.get(key) for row in rows if key in row]
        if not values:
            continue
        distinct = {json.dumps(v, sort_keys=True) for v in values}
        numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool)
                      for v in values)
        if len(distinct) == 1:
            report.zero_variance_columns.append(key)
        elif not numeric and len(distinct) > threshold:
            report.high_cardinality_columns.append(key)


# ---------------------------------------------------------------------------
# ordering and splitting
# ---------------------------------------------------------------------------

def sort_chronologically(events: Sequence[IntentEvent]) -> List[IntentEvent]:
    """Stable sort by arrival time; ties keep input order."""
    return sorted(events, key=lambda e: e.event_arrival_time)


def sort_dataset(ds: LabeledDataset) -> LabeledDataset:
    """sort_chronologically applied to events and labels together."""
    order = sorted(range(len(ds)), key=lambda i: ds.events[i].event_arrival_time)
    return ds.subset(order)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split_indices(
    labels: Sequence[int], test_fraction: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic per-class split indices (train, test), both ascending.

    Test gets round(class_count * test_fraction) rows of each class, with
    the totals nudged onto round(N * test_fraction) by adjusting the largest
    classes first.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidConfig(f"test_fraction must be in (0,1), got {test_fraction}")
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    n = len(y)
    if n == 0:
        raise DegenerateClass("cannot split an empty dataset")

    classes = sorted(set(y.tolist()))
    counts = {c: int((y == c).sum()) for c in classes}
    want = {c: min(_round_half_up(counts[c] * test_fraction), counts[c])
            for c in classes}
    target_total = _round_half_up(n * test_fraction)

    diff = target_total - sum(want.values())
    by_size = sorted(classes, key=lambda c: (-counts[c], c))
    while diff > 0:
        for c in by_size:
            if want[c] < counts[c]:
                want[c] += 1
                diff -= 1
                break
        else:  # pragma: no cover - fractions in (0,1) always leave room
            break
    while diff < 0:
        for c in sorted(classes, key=lambda c: (-want[c], c)):
            if want[c] > 0:
                want[c] -= 1
                diff += 1
                break

    rng = np.random.default_rng(seed)
    test_parts = []
    for c in classes:
        idx_c = np.flatnonzero(y == c)
        perm = rng.permutation(idx_c)
        test_parts.append(perm[: want[c]])
    test_idx = np.sort(np.concatenate(test_parts)) if test_parts else np.array([], int)
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    train_idx = np.flatnonzero(mask)
    return train_idx, test_idx


def split_stratified(
    ds: LabeledDataset, test_fraction: float, seed: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Per-class stratified train/test split, deterministic given seed.

    The test side keeps the original imbalanced class distribution; no
    resampling is ever applied to it. Both subsets remain in chronological
    order because indices are re-sorted ascending.
    """
    train_idx, test_idx = stratified_split_indices(
        ds.label_array(), test_fraction, seed
    )
    return ds.subset(train_idx.tolist()), ds.subset(test_idx.tolist())


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ServiceProfile:
    """Distribution parameters for one service type.

    The quanta model the reporting granularity of operator telemetry:
    durations and volumes are metered in billing units (seconds to minutes,
    tenths of a megabyte to gigabytes depending on the service class), so
    benign values sit on a coarse grid while their underlying demand varies
    within a fraction of one unit.
    """

    name: str
    event_type: str
    duration_mean_ms: float
    duration_std_ms: float
    volume_mean_mb: float
    volume_std_mb: float
    latency_req_range_ms: Tuple[float, float]
    bandwidth_req_range_mbps: Tuple[float, float]
    arrival_rate_per_hour: float
    resources_range: Tuple[float, float] = (0.01, 0.2)
    duration_quantum_ms: int = 1000
    volume_quantum_mb: float = 0.001
    functions: Tuple[str, ...] = (
        "Wireless Access",
        "Transmetropolitan Transmission",
        "Core Network Processing",
    )


# Profile ranges (requirements, resource share) are deliberately disjoint
# across service types: each type occupies its own region of feature space,
# the way distinct commercial service classes do in operator telemetry.
# Durations are metered in whole billing minutes and volumes in whole
# megabytes (the reporting granularity of the record source), with the
# underlying demand jittering by a fraction of one unit.
_MINUTE = 60_000

DEFAULT_PROFILES: Tuple[ServiceProfile, ...] = (
    ServiceProfile("IoT Telemetry", "Machine Service",
                   2 * _MINUTE, 15_000, 2.0, 0.25, (150, 190), (1, 3), 60.0,
                   resources_range=(0.01, 0.03),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("VoIP Calls", "Communication Service",
                   5 * _MINUTE, 15_000, 24.0, 0.25, (10, 18), (4, 8), 35.0,
                   resources_range=(0.04, 0.06),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("Web Browsing", "Network Service",
                   10 * _MINUTE, 15_000, 75.0, 0.25, (110, 140), (15, 30), 40.0,
                   resources_range=(0.07, 0.09),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("Cloud Gaming", "Gaming Service",
                   21 * _MINUTE, 15_000, 260.0, 0.25, (4, 8), (40, 60), 18.0,
                   resources_range=(0.10, 0.12),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("File Transfer", "Transfer Service",
                   39 * _MINUTE, 15_000, 900.0, 0.25, (60, 85), (90, 140), 15.0,
                   resources_range=(0.13, 0.15),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("Video Streaming", "Streaming Service",
                   87 * _MINUTE, 15_000, 3100.0, 0.25, (25, 40), (180, 260), 20.0,
                   resources_range=(0.16, 0.18),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("Cloud Computing Services", "Online Service",
                   200 * _MINUTE, 15_000, 10_500.0, 0.25, (45, 55), (900, 1100), 12.0,
                   resources_range=(0.19, 0.21),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
    ServiceProfile("Data Backup", "Storage Service",
                   450 * _MINUTE, 15_000, 36_000.0, 0.25, (300, 360), (400, 550), 6.0,
                   resources_range=(0.22, 0.24),
                   duration_quantum_ms=_MINUTE, volume_quantum_mb=1.0),
)

# 2024-01-01T00:00:00Z
DEFAULT_START_MS = 1_704_067_200_000


@dataclass
class GeneratorConfig:
    seed: int = 0
    n_events: int = 10_000
    profiles: Tuple[ServiceProfile, ...] = DEFAULT_PROFILES
    start_time_ms: int = DEFAULT_START_MS

    def validate(self) -> None:
        if self.n_events <= 0:
            raise InvalidConfig("n_events must be positive")
        if not self.profiles:
            raise InvalidConfig("at least one service profile is required")
        for p in self.profiles:
            if p.duration_std_ms < 0 or p.volume_std_mb < 0:
                raise InvalidConfig(f"negative std in profile {p.name!r}")
            if p.arrival_rate_per_hour <= 0:
                raise InvalidConfig(f"non-positive arrival rate in {p.name!r}")
            if p.duration_mean_ms < 0 or p.volume_mean_mb < 0:
                raise InvalidConfig(f"negative mean in profile {p.name!r}")
            if p.duration_quantum_ms <= 0 or p.volume_quantum_mb <= 0:
                raise InvalidConfig(f"non-positive quantum in profile {p.name!r}")


def _allocate(n_events: int, rates: Sequence[float]) -> List[int]:
    # largest-remainder apportionment of events to profiles
    total = float(sum(rates))
    raw = [n_events * r / total for r in rates]
    base = [int(math.floor(x)) for x in raw]
    leftover = n_events - sum(base)
    order = sorted(range(len(rates)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def _truncated_normal(rng: np.random.Generator, mean: float, std: float,
                      size: int) -> np.ndarray:
    if std == 0.0:
        return np.full(size, float(mean))
    out = rng.normal(mean, std, size=size)
    for _ in range(100):
        bad = out < 0.0
        if not bad.any():
            break
        out[bad] = rng.normal(mean, std, size=int(bad.sum()))
    np.clip(out, 0.0, None, out=out)
    return out


def generate_synthetic(cfg: GeneratorConfig) -> LabeledDataset:
    """Generate an all-benign dataset, deterministically from cfg.seed.

    Arrivals follow an independent Poisson process per profile (merged and
    globally sorted); durations and volumes are truncated-at-zero normals
    quantized to the profile's reporting units. Arrival timestamps are
    second-aligned, matching the seconds precision of the wire format.
    """
    cfg.validate()
    rows = []  # (arrival_ms, profile_idx, seq, event fields...)
    counts = _allocate(cfg.n_events, [p.arrival_rate_per_hour for p in cfg.profiles])

    for pi, (profile, n_i) in enumerate(zip(cfg.profiles, counts)):
        if n_i == 0:
            continue
        rng = np.random.default_rng([cfg.seed, pi])
        scale_ms = 3_600_000.0 / profile.arrival_rate_per_hour
        gaps = rng.exponential(scale_ms, size=n_i)
        arrivals = cfg.start_time_ms + np.cumsum(gaps)
        arrivals = (arrivals // 1000).astype(np.int64) * 1000

        q_d = int(profile.duration_quantum_ms)
        durations = _truncated_normal(
            rng, profile.duration_mean_ms, profile.duration_std_ms, n_i)
        durations = np.round(durations / q_d).astype(np.int64) * q_d
        q_v = float(profile.volume_quantum_mb)
        volumes = np.round(
            np.round(_truncated_normal(rng, profile.volume_mean_mb,
                                       profile.volume_std_mb, n_i) / q_v) * q_v,
            6,
        )
        latencies = np.round(
            rng.uniform(*profile.latency_req_range_ms, size=n_i), 1)
        bandwidths = np.round(
            rng.uniform(*profile.bandwidth_req_range_mbps, size=n_i)).astype(np.int64)
        resources = np.round(rng.uniform(*profile.resources_range, size=n_i), 4)
        n_funcs = rng.integers(1, len(profile.functions) + 1, size=n_i)

        for j in range(n_i):
            picked = rng.choice(len(profile.functions), size=int(n_funcs[j]),
                                replace=False)
            funcs = tuple(profile.functions[k] for k in sorted(picked.tolist()))
            rows.append((
                int(arrivals[j]), pi, j, profile, int(durations[j]),
                float(volumes[j]), float(latencies[j]), float(bandwidths[j]),
                float(resources[j]), funcs,
            ))

    rows.sort(key=lambda r: (r[0], r[1], r[2]))

    events = []
    for arrival, _pi, _j, profile, dur, vol, lat, bw, res, funcs in rows:
        events.append(IntentEvent(
            event_name=profile.name,
            event_type=profile.event_type,
            event_arrival_time=arrival,
            event_end_time=arrival + dur,
            event_duration=dur,
            event_load_volume=vol,
            network_resources_consumed=res,
            network_functions_required=funcs,
            perf_bandwidth_req=PerfRequirement(">", bw, "Mbps"),
            perf_latency_req=PerfRequirement("<", lat, "ms"),
        ))
    labels = [ClassLabel.BENIGN] * len(events)
    logger.info("generated %d benign events across %d profiles",
                len(events), len(cfg.profiles))
    return LabeledDataset(events=events, labels=labels)


# ---------------------------------------------------------------------------
# JSONL IO
# ---------------------------------------------------------------------------

def save_jsonl(ds: LabeledDataset, path, meta: Optional[dict] = None) -> None:
    """One event per line in wire format plus a ``label`` key; an optional
    artifact-metadata header line comes first."""
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({ARTIFACT_META_KEY: meta}, sort_keys=True) + "\n")
        for event, label in zip(ds.events, ds.labels):
            obj = event_to_wire(event)
            obj["label"] = label.display
            fh.write(json.dumps(obj, separators=(", ", ": ")) + "\n")


def load_jsonl(path) -> LabeledDataset:
    """Inverse of save_jsonl. Fails fast: any malformed line raises
    MalformedLine and no partial dataset is returned. A missing ``label``
    key defaults to Benign."""
    events: List[IntentEvent] = []
    labels: List[ClassLabel] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, str(exc)) from None
            if line_no == 1 and isinstance(obj, dict) and ARTIFACT_META_KEY in obj:
                continue
            try:
                event = parse_intent_json(obj)
                label_name = obj.get("label", "Benign")
                label = ClassLabel.from_name(str(label_name))
            except (IntentGuardError, ValueError) as exc:
                raise MalformedLine(line_no, str(exc)) from None
            events.append(event)
            labels.append(label)
    return LabeledDataset(events=events, labels=labels)


def read_artifact_meta(path) -> Optional[dict]:
    """Metadata header of a JSONL artifact, or None when absent."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        return None
    try:
        obj = json.loads(first)
    except json.JSONDecodeError:
        return None
    if isinstance(obj, dict) and ARTIFACT_META_KEY in obj:
        return obj[ARTIFACT_META_KEY]
    return None

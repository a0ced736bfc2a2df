"""Time-aware feature engineering in batch and streaming form.

Each event row combines:

* original fields (encoded service type, duration, volume, resource share,
  requirement values, hour of day, day of week),
* lag features reading the immediately preceding event,
* sliding-window aggregates over the trailing K events (global order),
* relational deltas against the trailing per-service-type mean,
* cold-start indicators (has_lag, window_fill).

All features are strictly causal: an event never enters its own window or
delta baseline. The batch and streaming paths are separate implementations
that must agree bitwise; both compute window sums by re-summing the (at most
K-element) buffers left to right, so the cheap brute-force oracle and the
incremental path share the exact same floating-point arithmetic.

Cold-start sentinels are 0.0 paired with the has_lag / window_fill
indicators so a downstream tree model can learn the empty-history regime
instead of being poisoned by imputed values.
"""

from __future__ import annotations

import csv
import hashlib
from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import List, Optional, Tuple

import numpy as np

from .dataset import LabeledDataset
from .errors import NonFiniteFeature, NotSorted, OutOfOrderEvent
from .intent_model import CategoryEncoder, ClassLabel, IntentEvent

SCHEMA_VERSION = "1"

FEATURE_NAMES: Tuple[str, ...] = (
    # original
    "event_type_code",
    "event_duration",
    "event_load_volume",
    "network_resources_consumed",
    "perf_latency_req_ms",
    "perf_bandwidth_req_mbps",
    "hour_of_day",
    "day_of_week",
    # lag
    "last_event_duration",
    "last_event_volume",
    "time_since_last_event",
    # sliding window
    "avg_duration_in_window",
    "avg_volume_in_window",
    "sum_volume_in_window",
    # relational delta
    "change_from_avg_duration",
    "change_from_avg_volume",
    # history indicators
    "has_lag",
    "window_fill",
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class WindowConfig:
    """K is the window length in events; deltas are always scoped per
    service type."""

    K: int = 50
    delta_scope: str = "per_service_type"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("window length K must be >= 1")


def manifest(cfg: Optional[WindowConfig] = None) -> Tuple[List[str], str]:
    """Ordered feature names plus a schema hash.

    The hash covers the names and schema version only; K is model metadata,
    not part of the column schema.
    """
    names = list(FEATURE_NAMES)
    digest = hashlib.sha256(
        ("\n".join([SCHEMA_VERSION, *names])).encode("utf-8")
    ).hexdigest()
    return names, digest


def _time_of_day(arrival_ms: int) -> Tuple[float, float]:
    dt = datetime.fromtimestamp(arrival_ms / 1000.0, tz=timezone.utc)
    return float(dt.hour), float(dt.weekday())


def _event_scalars(event: IntentEvent) -> Tuple[float, float, float, float, float]:
    lat = float(event.perf_latency_req.value) if event.perf_latency_req else 0.0
    bw = float(event.perf_bandwidth_req.value) if event.perf_bandwidth_req else 0.0
    return (
        float(event.event_duration),
        float(event.event_load_volume),
        float(event.network_resources_consumed),
        lat,
        bw,
    )


def featurize_batch(ds: LabeledDataset, cfg: WindowConfig) -> LabeledDataset:
    """Compute the full feature matrix for a chronologically sorted dataset.

    Raises NotSorted if arrival times ever decrease.
    """
    events = ds.events
    n = len(events)
    k = cfg.K
    names, digest = manifest(cfg)
    matrix = np.zeros((n, N_FEATURES), dtype=np.float64)

    for i in range(1, n):
        if events[i].event_arrival_time < events[i - 1].event_arrival_time:
            raise NotSorted(f"event {i} arrives before event {i - 1}")

    encoder = CategoryEncoder.fit(e.event_type for e in events)
    durations = [float(e.event_duration) for e in events]
    volumes = [float(e.event_load_volume) for e in events]
    arrivals = [e.event_arrival_time for e in events]
    type_durations: dict = defaultdict(list)
    type_volumes: dict = defaultdict(list)

    for i, event in enumerate(events):
        dur, vol, res, lat, bw = _event_scalars(event)
        hour, dow = _time_of_day(event.event_arrival_time)
        code = float(encoder.apply(event.event_type))

        if i > 0:
            has_lag = 1.0
            last_dur = durations[i - 1]
            last_vol = volumes[i - 1]
            since = float(arrivals[i] - arrivals[i - 1])
        else:
            has_lag = last_dur = last_vol = since = 0.0

        lo = max(0, i - k)
        win_d = durations[lo:i]
        win_v = volumes[lo:i]
        fill = len(win_d)
        if fill:
            sum_v = sum(win_v)
            avg_d = sum(win_d) / fill
            avg_v = sum_v / fill
        else:
            sum_v = avg_d = avg_v = 0.0

        t_d = type_durations[event.event_type]
        t_v = type_volumes[event.event_type]
        delta_d = dur - (sum(t_d[-k:]) / len(t_d[-k:])) if t_d else 0.0
        delta_v = vol - (sum(t_v[-k:]) / len(t_v[-k:])) if t_v else 0.0

        matrix[i] = (
            code, dur, vol, res, lat, bw, hour, dow,
            last_dur, last_vol, since,
            avg_d, avg_v, sum_v,
            delta_d, delta_v,
            has_lag, fill / k,
        )
        t_d.append(dur)
        t_v.append(vol)

    if n and not np.isfinite(matrix).all():
        raise NonFiniteFeature("non-finite value in feature matrix")
    return LabeledDataset(
        events=list(events),
        labels=list(ds.labels),
        feature_matrix=matrix,
        manifest=names,
        schema_version=digest,
    )


@dataclass
class StreamState:
    """Incremental featurizer state for one event stream.

    Single-writer: fold events through featurize_streaming sequentially.
    The state after a prefix of events is a pure function of that prefix.
    With a frozen encoder (loaded from a model artifact) unseen service
    types map to code -1; an unfrozen encoder assigns first-occurrence
    codes exactly like the batch path.
    """

    cfg: WindowConfig
    encoder: CategoryEncoder = field(default_factory=lambda: CategoryEncoder({}))
    encoder_frozen: bool = False
    count: int = 0
    last_arrival: int = 0
    last_duration: float = 0.0
    last_volume: float = 0.0
    window_durations: deque = field(default_factory=deque)
    window_volumes: deque = field(default_factory=deque)
    type_durations: dict = field(default_factory=dict)
    type_volumes: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, cfg: WindowConfig) -> "StreamState":
        return cls(
            cfg=cfg,
            window_durations=deque(maxlen=cfg.K),
            window_volumes=deque(maxlen=cfg.K),
        )

    @classmethod
    def with_encoder(cls, cfg: WindowConfig, mapping: dict) -> "StreamState":
        state = cls.fresh(cfg)
        state.encoder = CategoryEncoder(dict(mapping))
        state.encoder_frozen = True
        return state

    def _code_for(self, event_type: str) -> float:
        code = self.encoder.apply(event_type)
        if code == -1 and not self.encoder_frozen:
            code = len(self.encoder.mapping)
            self.encoder.mapping[event_type] = code
        return float(code)


def featurize_streaming(
    state: StreamState, event: IntentEvent
) -> Tuple[np.ndarray, StreamState]:
    """One event in, one feature row out; the event's own values enter the
    buffers only afterwards, for subsequent events.

    Raises OutOfOrderEvent if the arrival time moves backwards.
    """
    if state.count > 0 and event.event_arrival_time < state.last_arrival:
        raise OutOfOrderEvent(
            f"arrival {event.event_arrival_time} precedes last seen "
            f"{state.last_arrival}"
        )
    k = state.cfg.K
    dur, vol, res, lat, bw = _event_scalars(event)
    hour, dow = _time_of_day(event.event_arrival_time)
    code = state._code_for(event.event_type)

    if state.count > 0:
        has_lag = 1.0
        last_dur = state.last_duration
        last_vol = state.last_volume
        since = float(event.event_arrival_time - state.last_arrival)
    else:
        has_lag = last_dur = last_vol = since = 0.0

    fill = len(state.window_durations)
    if fill:
        sum_v = sum(state.window_volumes)
        avg_d = sum(state.window_durations) / fill
        avg_v = sum_v / fill
    else:
        sum_v = avg_d = avg_v = 0.0

    t_d = state.type_durations.get(event.event_type)
    t_v = state.type_volumes.get(event.event_type)
    delta_d = dur - (sum(t_d) / len(t_d)) if t_d else 0.0
    delta_v = vol - (sum(t_v) / len(t_v)) if t_v else 0.0

    row = np.array(
        (
            code, dur, vol, res, lat, bw, hour, dow,
            last_dur, last_vol, since,
            avg_d, avg_v, sum_v,
            delta_d, delta_v,
            has_lag, fill / k,
        ),
        dtype=np.float64,
    )

    # fold the event into the buffers after emission
    state.count += 1
    state.last_arrival = event.event_arrival_time
    state.last_duration = dur
    state.last_volume = vol
    state.window_durations.append(dur)
    state.window_volumes.append(vol)
    if t_d is None:
        t_d = deque(maxlen=k)
        t_v = deque(maxlen=k)
        state.type_durations[event.event_type] = t_d
        state.type_volumes[event.event_type] = t_v
    t_d.append(dur)
    t_v.append(vol)
    return row, state


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_features_csv(ds: LabeledDataset, path, include_label: bool = True) -> None:
    """Feature matrix as CSV with the manifest as header row.

    Floats are written with repr so the file re-parses to identical values.
    """
    if ds.feature_matrix is None:
        raise ValueError("dataset has no feature matrix; run featurize first")
    header = list(ds.manifest)
    if include_label:
        header.append("label")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.feature_matrix[i]]
            if include_label:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def read_features_csv(path) -> Tuple[np.ndarray, Optional[np.ndarray], List[str]]:
    """Inverse of write_features_csv: (X, labels-or-None, manifest)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_label = bool(header) and header[-1] == "label"
        names = header[:-1] if has_label else header
        xs, ys = [], []
        for row in reader:
            if not row:
                continue
            if has_label:
                xs.append([float(v) for v in row[:-1]])
                ys.append(int(row[-1]))
            else:
                xs.append([float(v) for v in row])
    x = np.array(xs, dtype=np.float64) if xs else np.zeros((0, len(names)))
    y = np.array(ys, dtype=np.int64) if has_label else None
    return x, y, names


def labels_from_ints(values) -> List[ClassLabel]:
    return [ClassLabel(int(v)) for v in values]

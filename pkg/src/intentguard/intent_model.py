"""Intent event data model and wire-format parsing.

An intent event is one structured record describing a network service demand:
who (service name/type), when (arrival/end timestamps), how much (duration,
load volume, resource share) and the performance requirements attached to the
request. Events arrive as JSON objects; this module parses and validates
them, normalizes requirement strings like "<49.4ms" into (comparator, value,
unit) triples, and provides a deterministic categorical encoder for the
service-type column.

Timestamps are stored as integer milliseconds since the Unix epoch (UTC);
durations are integer milliseconds, load volumes are megabytes.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import IntEnum
from typing import Iterable, Optional, Sequence

from .errors import (
    EmptyInput,
    InvalidTimestamp,
    MalformedJson,
    MissingRequiredField,
    NegativeQuantity,
    UnparseableRequirement,
)

logger = logging.getLogger(__name__)

#: JSON keys of the wire format, in canonical order.
WIRE_KEYS = (
    "event_name",
    "event_type",
    "event_arrival_time",
    "event_end_time",
    "event_duration",
    "event_load_volume",
    "network_resources_consumed_per_device",
    "network_functions_required",
    "performance_requirements",
)

REQUIRED_KEYS = (
    "event_name",
    "event_type",
    "event_arrival_time",
    "event_end_time",
    "event_duration",
    "event_load_volume",
    "network_resources_consumed_per_device",
    "network_functions_required",
)


class ClassLabel(IntEnum):
    """Traffic classes: benign plus the three tampering scenarios."""

    BENIGN = 0
    DOS = 1
    EXFIL = 2
    QOS = 3

    @property
    def display(self) -> str:
        return _LABEL_NAMES[self.value]

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return _NAME_TO_LABEL[name.lower()]
        except KeyError:
            raise ValueError(f"unknown class label {name!r}") from None


_LABEL_NAMES = ("Benign", "DoS", "Exfil", "QoS")
_NAME_TO_LABEL = {n.lower(): ClassLabel(i) for i, n in enumerate(_LABEL_NAMES)}

CLASS_NAMES = list(_LABEL_NAMES)

_COMPARATORS = ("<", "<=", ">", ">=", "=")
_COMPARATOR_ALIASES = {"≤": "<=", "≥": ">=", "==": "="}
_UNIT_CANONICAL = {"ms": "ms", "mbps": "Mbps"}

_REQ_RE = re.compile(
    r"^\s*(<=|>=|==|≤|≥|<|>|=)?\s*"
    r"(\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s*"
    r"([A-Za-z]+)\s*$"
)


@dataclass(frozen=True)
class PerfRequirement:
    """A parsed performance requirement, e.g. (">", 980.0, "Mbps")."""

    comparator: str
    value: float
    unit: str

    def to_string(self) -> str:
        prefix = "" if self.comparator == "=" else self.comparator
        v = self.value
        num = str(int(v)) if float(v).is_integer() else repr(float(v))
        return f"{prefix}{num}{self.unit}"


def parse_requirement(s: str) -> PerfRequirement:
    """Parse a requirement string of the form ``[<|<=|>|>=|=]? number (ms|Mbps)``.

    The comparator defaults to "=" when absent; the unit is matched
    case-insensitively and normalized to "ms" or "Mbps". Anything outside
    this grammar raises UnparseableRequirement.
    """
    if not isinstance(s, str):
        raise UnparseableRequirement(str(s))
    m = _REQ_RE.match(s)
    if m is None:
        raise UnparseableRequirement(s)
    comp_raw, num, unit_raw = m.groups()
    comp = _COMPARATOR_ALIASES.get(comp_raw, comp_raw) if comp_raw else "="
    unit = _UNIT_CANONICAL.get(unit_raw.lower())
    if unit is None:
        raise UnparseableRequirement(s)
    return PerfRequirement(comparator=comp, value=float(num), unit=unit)


@dataclass(frozen=True)
class IntentEvent:
    """One intent event record.

    Immutable after construction; fields follow the wire format with
    timestamps converted to epoch milliseconds and requirement strings
    parsed into PerfRequirement values.
    """

    event_name: str
    event_type: str
    event_arrival_time: int  # ms since epoch, UTC
    event_end_time: int  # ms since epoch, UTC
    event_duration: int  # ms
    event_load_volume: float  # MB
    network_resources_consumed: float  # fraction of capacity per device
    network_functions_required: tuple = ()
    perf_bandwidth_req: Optional[PerfRequirement] = None
    perf_latency_req: Optional[PerfRequirement] = None

    def __post_init__(self):
        if self.event_end_time < self.event_arrival_time:
            raise InvalidTimestamp(
                f"event_end_time {self.event_end_time} precedes arrival "
                f"{self.event_arrival_time}"
            )
        if self.event_duration < 0:
            raise NegativeQuantity("event_duration must be >= 0")
        if self.event_load_volume < 0:
            raise NegativeQuantity("event_load_volume must be >= 0")
        if self.network_resources_consumed < 0:
            raise NegativeQuantity("network_resources_consumed must be >= 0")
        object.__setattr__(
            self,
            "network_functions_required",
            tuple(self.network_functions_required),
        )

    def replace(self, **changes) -> "IntentEvent":
        from dataclasses import replace as _replace

        return _replace(self, **changes)


def parse_timestamp(value) -> int:
    """ISO-8601 text (or epoch milliseconds) to integer epoch milliseconds.

    Naive timestamps are interpreted as UTC; a trailing "Z" is accepted.
    """
    if isinstance(value, bool):
        raise InvalidTimestamp(f"not a timestamp: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(text)
        except ValueError:
            raise InvalidTimestamp(f"not ISO-8601: {value!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(round(dt.timestamp() * 1000))
    raise InvalidTimestamp(f"not a timestamp: {value!r}")


def format_timestamp(ms: int) -> str:
    """Epoch milliseconds to canonical ISO-8601 UTC text.

    Seconds precision, with a fractional part only when the value is not
    second-aligned, so formatting stays lossless.
    """
    seconds, frac = divmod(int(ms), 1000)
    dt = datetime.fromtimestamp(seconds, tz=timezone.utc)
    text = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if frac:
        text += f".{frac:03d}"
    return text


def _as_number(value, field: str) -> float:
    if isinstance(value, bool):
        raise MalformedJson(f"{field} must be numeric, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip().rstrip("%")
        try:
            return float(text)
        except ValueError:
            raise MalformedJson(f"{field} must be numeric, got {value!r}") from None
    raise MalformedJson(f"{field} must be numeric, got {value!r}")


def parse_intent_json(data, on_unknown: Optional[list] = None) -> IntentEvent:
    """Parse one wire-format JSON object into an IntentEvent.

    Unknown keys are ignored; their names are appended to ``on_unknown``
    when a list is supplied (they are warnings, not errors, because real
    telemetry schemas drift).

    Raises MalformedJson, MissingRequiredField, InvalidTimestamp or
    NegativeQuantity.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8", errors="replace")
    if isinstance(data, str):
        try:
            obj = json.loads(data)
        except json.JSONDecodeError as exc:
            raise MalformedJson(f"invalid JSON: {exc}") from None
    else:
        obj = data
    if not isinstance(obj, dict):
        raise MalformedJson("intent must be a single JSON object")

    for key in REQUIRED_KEYS:
        if key not in obj:
            raise MissingRequiredField(key)

    unknown = [k for k in obj if k not in WIRE_KEYS and k != "label"]
    if unknown:
        if on_unknown is not None:
            on_unknown.extend(unknown)
        logger.debug("ignoring unknown intent keys: %s", unknown)

    arrival = parse_timestamp(obj["event_arrival_time"])
    end = parse_timestamp(obj["event_end_time"])

    duration_raw = _as_number(obj["event_duration"], "event_duration")
    if duration_raw < 0:
        raise NegativeQuantity("event_duration must be >= 0")
    if not float(duration_raw).is_integer():
        raise MalformedJson("event_duration must be an integer (milliseconds)")
    volume = _as_number(obj["event_load_volume"], "event_load_volume")
    if volume < 0:
        raise NegativeQuantity("event_load_volume must be >= 0")
    resources = _as_number(
        obj["network_resources_consumed_per_device"],
        "network_resources_consumed_per_device",
    )

    functions = obj["network_functions_required"]
    if not isinstance(functions, (list, tuple)):
        raise MalformedJson("network_functions_required must be a list")

    bandwidth = latency = None
    perf = obj.get("performance_requirements")
    if perf is not None:
        if not isinstance(perf, dict):
            raise MalformedJson("performance_requirements must be an object")
        if "bandwidth" in perf and perf["bandwidth"] is not None:
            bandwidth = parse_requirement(perf["bandwidth"])
        if "latency" in perf and perf["latency"] is not None:
            latency = parse_requirement(perf["latency"])

    return IntentEvent(
        event_name=str(obj["event_name"]),
        event_type=str(obj["event_type"]),
        event_arrival_time=arrival,
        event_end_time=end,
        event_duration=int(duration_raw),
        event_load_volume=volume,
        network_resources_consumed=resources,
        network_functions_required=tuple(str(f) for f in functions),
        perf_bandwidth_req=bandwidth,
        perf_latency_req=latency,
    )


def _canonical_number(v: float):
    # integral floats render as JSON ints, matching the wire examples
    return int(v) if float(v).is_integer() else float(v)


def event_to_wire(event: IntentEvent) -> dict:
    """IntentEvent to a wire-format dict (exact wire key names)."""
    out = {
        "event_name": event.event_name,
        "event_type": event.event_type,
        "event_arrival_time": format_timestamp(event.event_arrival_time),
        "event_end_time": format_timestamp(event.event_end_time),
        "event_duration": int(event.event_duration),
        "event_load_volume": _canonical_number(event.event_load_volume),
        "network_resources_consumed_per_device": float(
            event.network_resources_consumed
        ),
        "network_functions_required": list(event.network_functions_required),
    }
    perf = {}
    if event.perf_bandwidth_req is not None:
        perf["bandwidth"] = event.perf_bandwidth_req.to_string()
    if event.perf_latency_req is not None:
        perf["latency"] = event.perf_latency_req.to_string()
    if perf:
        out["performance_requirements"] = perf
    return out


def serialize_intent_json(event: IntentEvent) -> str:
    """Canonical single-line JSON for an event; parse_intent_json inverts it."""
    return json.dumps(event_to_wire(event), separators=(", ", ": "))


@dataclass
class CategoryEncoder:
    """Deterministic integer codes for a categorical column.

    Codes are assigned by first occurrence in the fitted sequence; values
    unseen at apply time map to the reserved code -1.
    """

    mapping: dict

    @classmethod
    def fit(cls, values: Iterable[str]) -> "CategoryEncoder":
        mapping: dict = {}
        for v in values:
            if v not in mapping:
                mapping[v] = len(mapping)
        return cls(mapping=mapping)

    def apply(self, value: str) -> int:
        return self.mapping.get(value, -1)

    def apply_many(self, values: Iterable[str]) -> list:
        return [self.apply(v) for v in values]


def encode_categoricals(events: Sequence[IntentEvent]) -> tuple:
    """Fit a first-occurrence encoder on event_type and encode the column.

    Input should already be chronologically sorted so codes are stable.
    Returns (CategoryEncoder, list of int codes). Raises EmptyInput.
    """
    if not events:
        raise EmptyInput("no events to encode")
    encoder = CategoryEncoder.fit(e.event_type for e in events)
    return encoder, encoder.apply_many(e.event_type for e in events)

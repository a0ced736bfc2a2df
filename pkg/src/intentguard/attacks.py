"""Statistical baseline of benign behavior and tamper injection.

Three tampering scenarios are planted into a benign dataset, with values
derived from the per-service-type statistics of the benign traffic itself:

* DoS: prolonged occupancy; duration raised to mean + 2.0 std, volume kept.
* Exfil: covert bulk transfer; volume raised to mean + 2.2 std, duration kept.
* QoS degradation: both duration and volume mildly raised to mean + 1.5 std.

A tampered record must actually differ from the original, so victims whose
baseline std is zero on every tampered field are rejected and another row is
drawn. The end timestamp is recomputed after duration tampering: a capable
adversary forges an internally consistent record, and leaving the
inconsistency in place would make detection trivially easy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dataset import LabeledDataset
from .errors import BaselineMissing, InsufficientSamples, InvalidConfig, TooManyAttacks
from .intent_model import ClassLabel

MAX_ATTACK_FRACTION = 0.05


@dataclass(frozen=True)
class TypeStats:
    duration_mean: float
    duration_std: float
    volume_mean: float
    volume_std: float
    count: int


@dataclass
class BaselineStats:
    """Per-service-type mean/std of duration and volume over benign rows."""

    per_type: Dict[str, TypeStats]
    global_duration_mean: float
    global_duration_std: float
    global_volume_mean: float
    global_volume_std: float
    n_rows: int

    def for_type(self, event_type: str) -> TypeStats:
        try:
            return self.per_type[event_type]
        except KeyError:
            raise BaselineMissing(event_type) from None

    def to_dict(self) -> dict:
        return {
            "per_type": {
                t: {
                    "duration_mean": s.duration_mean,
                    "duration_std": s.duration_std,
                    "volume_mean": s.volume_mean,
                    "volume_std": s.volume_std,
                    "count": s.count,
                }
                for t, s in sorted(self.per_type.items())
            },
            "global": {
                "duration_mean": self.global_duration_mean,
                "duration_std": self.global_duration_std,
                "volume_mean": self.global_volume_mean,
                "volume_std": self.global_volume_std,
                "count": self.n_rows,
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BaselineStats":
        per_type = {
            t: TypeStats(
                duration_mean=s["duration_mean"],
                duration_std=s["duration_std"],
                volume_mean=s["volume_mean"],
                volume_std=s["volume_std"],
                count=s["count"],
            )
            for t, s in obj["per_type"].items()
        }
        g = obj["global"]
        return cls(
            per_type=per_type,
            global_duration_mean=g["duration_mean"],
            global_duration_std=g["duration_std"],
            global_volume_mean=g["volume_mean"],
            global_volume_std=g["volume_std"],
            n_rows=g["count"],
        )


def compute_baseline(ds: LabeledDataset) -> BaselineStats:
    """Sample mean and population std of duration and volume per type,
    computed over Benign-labeled rows only.

    Raises InsufficientSamples for any type with fewer than 2 benign rows.
    """
    by_type: Dict[str, list] = {}
    all_d, all_v = [], []
    for event, label in zip(ds.events, ds.labels):
        if label is not ClassLabel.BENIGN:
            continue
        by_type.setdefault(event.event_type, []).append(
            (float(event.event_duration), float(event.event_load_volume))
        )
        all_d.append(float(event.event_duration))
        all_v.append(float(event.event_load_volume))

    per_type = {}
    for event_type, pairs in by_type.items():
        if len(pairs) < 2:
            raise InsufficientSamples(event_type, len(pairs))
        d = np.array([p[0] for p in pairs])
        v = np.array([p[1] for p in pairs])
        per_type[event_type] = TypeStats(
            duration_mean=float(d.mean()),
            duration_std=float(d.std()),
            volume_mean=float(v.mean()),
            volume_std=float(v.std()),
            count=len(pairs),
        )
    if not per_type:
        raise InsufficientSamples("<any>", 0)
    ad = np.array(all_d)
    av = np.array(all_v)
    return BaselineStats(
        per_type=per_type,
        global_duration_mean=float(ad.mean()),
        global_duration_std=float(ad.std()),
        global_volume_mean=float(av.mean()),
        global_volume_std=float(av.std()),
        n_rows=len(all_d),
    )


@dataclass
class InjectionConfig:
    seed: int = 0
    per_class: Dict[ClassLabel, int] = field(
        default_factory=lambda: {
            ClassLabel.DOS: 10,
            ClassLabel.EXFIL: 10,
            ClassLabel.QOS: 10,
        }
    )
    dos_duration_multiplier: float = 2.0
    exfil_volume_multiplier: float = 2.2
    qos_multiplier: float = 1.5

    @property
    def total(self) -> int:
        return sum(self.per_class.values())

    def validate(self, dataset_size: int) -> None:
        if any(k is ClassLabel.BENIGN for k in self.per_class):
            raise InvalidConfig("cannot inject Benign rows")
        if any(v < 0 for v in self.per_class.values()):
            raise InvalidConfig("per-class attack counts must be >= 0")
        for m in (self.dos_duration_multiplier, self.exfil_volume_multiplier,
                  self.qos_multiplier):
            if m <= 0:
                raise InvalidConfig("multipliers must be positive")
        if self.total > MAX_ATTACK_FRACTION * dataset_size:
            raise TooManyAttacks(
                f"{self.total} attacks exceeds {MAX_ATTACK_FRACTION:.0%} of "
                f"{dataset_size} rows"
            )


@dataclass
class TamperRecord:
    index: int
    attack: ClassLabel
    event_type: str
    original_duration: int
    original_volume: float
    original_end_time: int
    tampered_duration: int
    tampered_volume: float
    tampered_end_time: int

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["attack"] = self.attack.display
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TamperRecord":
        obj = dict(obj)
        obj["attack"] = ClassLabel.from_name(obj["attack"])
        return cls(**obj)


def tampered_values(
    stats: BaselineStats, cfg: InjectionConfig, attack: ClassLabel,
    event_type: str, duration: int, volume: float,
) -> Tuple[int, float]:
    """The (duration, volume) an adversary of the given class writes.

    Durations are integer milliseconds, so the raised duration is rounded
    to the nearest ms; volumes stay exact floats.
    """
    ts = stats.for_type(event_type)
    new_duration, new_volume = duration, volume
    if attack is ClassLabel.DOS:
        new_duration = int(round(ts.duration_mean
                                 + cfg.dos_duration_multiplier * ts.duration_std))
    elif attack is ClassLabel.EXFIL:
        new_volume = ts.volume_mean + cfg.exfil_volume_multiplier * ts.volume_std
    elif attack is ClassLabel.QOS:
        new_duration = int(round(ts.duration_mean
                                 + cfg.qos_multiplier * ts.duration_std))
        new_volume = ts.volume_mean + cfg.qos_multiplier * ts.volume_std
    else:  # pragma: no cover - validated earlier
        raise InvalidConfig(f"not an attack class: {attack}")
    return new_duration, new_volume


def inject(
    ds: LabeledDataset, stats: BaselineStats, cfg: InjectionConfig
) -> Tuple[LabeledDataset, List[TamperRecord]]:
    """Tamper cfg.total benign rows in place (on a copy), returning the new
    dataset and the forensic ground-truth records.

    Victims are drawn uniformly at random (seeded) across the timeline. A
    draw whose tampered values would equal the original (zero-std baseline)
    is rejected and the next candidate is drawn, keeping every tampered
    record genuinely different from its original.
    """
    cfg.validate(len(ds))
    events = list(ds.events)
    labels = list(ds.labels)

    benign_idx = [i for i, lab in enumerate(labels) if lab is ClassLabel.BENIGN]
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(benign_idx))
    pool = iter(order.tolist())

    records: List[TamperRecord] = []
    for attack in (ClassLabel.DOS, ClassLabel.EXFIL, ClassLabel.QOS):
        needed = cfg.per_class.get(attack, 0)
        placed = 0
        while placed < needed:
            try:
                idx = benign_idx[next(pool)]
            except StopIteration:
                raise InvalidConfig(
                    f"ran out of eligible benign rows while injecting {attack.display}"
                ) from None
            event = events[idx]
            new_dur, new_vol = tampered_values(
                stats, cfg, attack, event.event_type,
                event.event_duration, event.event_load_volume,
            )
            if new_dur == event.event_duration and new_vol == event.event_load_volume:
                continue  # I' == I would not be a tampering; redraw
            new_end = (event.event_arrival_time + new_dur
                       if new_dur != event.event_duration else event.event_end_time)
            records.append(TamperRecord(
                index=idx,
                attack=attack,
                event_type=event.event_type,
                original_duration=event.event_duration,
                original_volume=event.event_load_volume,
                original_end_time=event.event_end_time,
                tampered_duration=new_dur,
                tampered_volume=new_vol,
                tampered_end_time=new_end,
            ))
            events[idx] = event.replace(
                event_duration=new_dur,
                event_load_volume=new_vol,
                event_end_time=new_end,
            )
            labels[idx] = attack
            placed += 1

    records.sort(key=lambda r: r.index)
    return (
        LabeledDataset(events=events, labels=labels),
        records,
    )


@dataclass
class TamperReport:
    checked_rows: int = 0
    checked_victims: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps(
            {
                "checked_rows": self.checked_rows,
                "checked_victims": self.checked_victims,
                "violations": self.violations,
                "ok": self.ok,
            },
            sort_keys=True,
        )


def audit(
    original: LabeledDataset,
    tampered: LabeledDataset,
    records: List[TamperRecord],
    stats: BaselineStats,
    cfg: InjectionConfig,
) -> TamperReport:
    """Verify an injection: victims carry exactly the formula values, every
    other row is untouched, and label counts match the configuration.

    Violations are report content, never exceptions.
    """
    report = TamperReport(checked_rows=len(tampered), checked_victims=len(records))
    if len(original) != len(tampered):
        report.violations.append("row count changed during injection")
        return report

    by_index = {r.index: r for r in records}
    if len(by_index) != len(records):
        report.violations.append("duplicate victim indices in records")

    for i, (before, after) in enumerate(zip(original.events, tampered.events)):
        rec = by_index.get(i)
        if rec is None:
            if before != after or tampered.labels[i] is not original.labels[i]:
                report.violations.append(f"non-victim row {i} modified")
            continue
        expect_dur, expect_vol = tampered_values(
            stats, cfg, rec.attack, before.event_type,
            before.event_duration, before.event_load_volume,
        )
        if after.event_duration != expect_dur:
            report.violations.append(
                f"victim {i}: duration {after.event_duration} != expected {expect_dur}"
            )
        if after.event_load_volume != expect_vol:
            report.violations.append(
                f"victim {i}: volume {after.event_load_volume} != expected {expect_vol}"
            )
        expect_end = (before.event_arrival_time + expect_dur
                      if expect_dur != before.event_duration
                      else before.event_end_time)
        if after.event_end_time != expect_end:
            report.violations.append(f"victim {i}: end time not recomputed")
        if after.event_arrival_time != before.event_arrival_time:
            report.violations.append(f"victim {i}: arrival time modified")
        if tampered.labels[i] is not rec.attack:
            report.violations.append(f"victim {i}: label != {rec.attack.display}")
        if (after.event_duration == before.event_duration
                and after.event_load_volume == before.event_load_volume):
            report.violations.append(f"victim {i}: tampered record equals original")

    counts = tampered.class_counts()
    for attack, want in cfg.per_class.items():
        if counts[attack] != want:
            report.violations.append(
                f"{attack.display} count {counts[attack]} != configured {want}"
            )
    want_benign = len(original) - cfg.total
    if counts[ClassLabel.BENIGN] != want_benign:
        report.violations.append(
            f"Benign count {counts[ClassLabel.BENIGN]} != {want_benign}"
        )
    return report


def save_tamper_records(records: List[TamperRecord], path,
                        meta: Optional[dict] = None) -> None:
    from .dataset import ARTIFACT_META_KEY

    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({ARTIFACT_META_KEY: meta}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def load_tamper_records(path) -> List[TamperRecord]:
    from .dataset import ARTIFACT_META_KEY

    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            obj = json.loads(text)
            if line_no == 1 and ARTIFACT_META_KEY in obj:
                continue
            out.append(TamperRecord.from_dict(obj))
    return out

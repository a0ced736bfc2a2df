"""Online scoring checkpoint: parse, featurize, score, allow or flag.

The gateway keeps one streaming feature state (global window plus
per-service-type buffers, exactly mirroring the batch featurizer) and
scores each intent with a loaded model within the request/response
exchange. Verdicts are advisory: a flagged intent is labeled and logged,
disposition stays with the caller.

Requests mutate shared feature state, so scoring is serialized under a
lock; the model itself is immutable after load and read concurrently.
Sequential check_intent calls reproduce offline featurize_batch +
predict_proba on the same event sequence exactly.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import gbt
from .errors import (
    IntentGuardError,
    MalformedLine,
    ManifestMismatch,
    ModelUnavailable,
    OutOfOrderEvent,
)
from .features import StreamState, WindowConfig, featurize_streaming, manifest
from .intent_model import ClassLabel, IntentEvent, parse_intent_json
from .metrics import EvalReport, evaluate_predictions


@dataclass
class GatewayConfig:
    model_path: str = ""
    attribution_model_path: Optional[str] = None
    benign_threshold: float = 0.5
    listen_host: str = "127.0.0.1"
    listen_port: int = 8099
    max_request_bytes: int = 65536
    verdict_log_path: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.benign_threshold < 1.0:
            raise ValueError("benign_threshold must be in (0, 1)")


@dataclass
class Verdict:
    event_id: str
    decision: str  # "allow" | "flag"
    predicted_class: str
    scores: dict  # class name -> probability
    threshold_used: float
    latency_ms: float
    attribution: Optional[dict] = None

    def to_dict(self) -> dict:
        out = {
            "event_id": self.event_id,
            "decision": self.decision,
            "predicted_class": self.predicted_class,
            "scores": self.scores,
            "threshold_used": self.threshold_used,
            "latency_ms": self.latency_ms,
        }
        if self.attribution is not None:
            out["attribution"] = self.attribution
        return out


def _stream_state_for(model: gbt.GbtModel) -> StreamState:
    feat_meta = model.metadata.get("featurizer", {})
    cfg = WindowConfig(K=int(feat_meta.get("window_k", WindowConfig().K)))
    encoder_map = feat_meta.get("encoder")
    if encoder_map:
        return StreamState.with_encoder(cfg, encoder_map)
    return StreamState.fresh(cfg)


class IntentGateway:
    """Stateful scoring engine behind the HTTP endpoints."""

    def __init__(self, model: gbt.GbtModel, config: GatewayConfig,
                 attribution: Optional[gbt.GbtModel] = None):
        expected_hash = manifest()[1]
        if model.manifest_hash and model.manifest_hash != expected_hash:
            raise ManifestMismatch(
                "model feature schema does not match this featurizer"
            )
        self.model = model
        self.attribution = attribution
        self.config = config
        self.state = _stream_state_for(model)
        self._lock = threading.Lock()
        self._started = time.time()
        self.events_scored = 0
        self.flags_raised = 0
        self._log_fh = (open(config.verdict_log_path, "a", encoding="utf-8")
                        if config.verdict_log_path else None)

    # -- scoring -------------------------------------------------------------

    def check_intent(self, payload) -> Verdict:
        """Score one intent submission (raw JSON text/bytes or a dict).

        Parse errors leave the feature state untouched; an arrival time
        earlier than the last scored event raises OutOfOrderEvent.
        """
        if self.model is None:  # pragma: no cover - constructor requires it
            raise ModelUnavailable("no model loaded")
        t0 = time.perf_counter()
        event = parse_intent_json(payload)
        with self._lock:
            verdict = self._score_locked(event, self.state, t0)
            self.events_scored += 1
            if verdict.decision == "flag":
                self.flags_raised += 1
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(verdict.to_dict(), sort_keys=True) + "\n")
            self._log_fh.flush()
        return verdict

    def _score_locked(self, event: IntentEvent, state: StreamState,
                      t0: float, seq: Optional[int] = None) -> Verdict:
        row, _ = featurize_streaming(state, event)
        proba = self.model.predict_proba(row)
        benign_ix = 0
        p_benign = float(proba[benign_ix])
        flagged = p_benign < self.config.benign_threshold
        predicted = self.model.class_names[int(np.argmax(proba))]
        attribution = None
        if flagged and self.attribution is not None:
            att_proba = self.attribution.predict_proba(row)
            att_class = self.attribution.class_names[int(np.argmax(att_proba))]
            attribution = {
                "predicted_class": att_class,
                "scores": {n: float(p) for n, p
                           in zip(self.attribution.class_names, att_proba)},
            }
            predicted = att_class
        n = self.events_scored if seq is None else seq
        return Verdict(
            event_id=f"evt-{n:08d}",
            decision="flag" if flagged else "allow",
            predicted_class=predicted,
            scores={name: float(p)
                    for name, p in zip(self.model.class_names, proba)},
            threshold_used=self.config.benign_threshold,
            latency_ms=(time.perf_counter() - t0) * 1000.0,
            attribution=attribution,
        )

    # -- replay ---------------------------------------------------------------

    def batch_replay(self, path) -> Tuple[List[Verdict], Optional[EvalReport]]:
        """Re-score a JSONL capture through the live scoring code path on a
        fresh feature state; the live stream is not disturbed.

        When any line carries a label an EvalReport over the replay is
        returned alongside the verdicts.
        """
        events, labels, has_labels = _read_capture(path)
        state = _stream_state_for(self.model)
        verdicts: List[Verdict] = []
        probas = []
        for seq, event in enumerate(events):
            t0 = time.perf_counter()
            verdict = self._score_locked(event, state, t0, seq=seq)
            verdicts.append(verdict)
            probas.append([verdict.scores[n] for n in self.model.class_names])
        report = None
        if has_labels and events:
            y = np.array([int(lab) for lab in labels], dtype=np.int64)
            if self.model.n_classes == 2:
                y = (y > 0).astype(np.int64)
            report = evaluate_predictions(
                y, np.asarray(probas), list(self.model.class_names))
        return verdicts, report

    # -- introspection ----------------------------------------------------------

    def health(self) -> dict:
        return {
            "status": "ok",
            "objective": self.model.objective,
            "class_names": self.model.class_names,
            "manifest_hash": self.model.manifest_hash,
            "model_format_version": gbt.FORMAT_VERSION,
            "benign_threshold": self.config.benign_threshold,
            "uptime_s": time.time() - self._started,
            "events_scored": self.events_scored,
            "flags_raised": self.flags_raised,
            "attribution_loaded": self.attribution is not None,
        }

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None


def _read_capture(path) -> Tuple[List[IntentEvent], List[ClassLabel], bool]:
    events: List[IntentEvent] = []
    labels: List[ClassLabel] = []
    has_labels = False
    from .dataset import ARTIFACT_META_KEY

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
            except IntentGuardError as exc:
                raise MalformedLine(line_no, str(exc)) from None
            label_name = obj.get("label")
            if label_name is not None:
                has_labels = True
                labels.append(ClassLabel.from_name(str(label_name)))
            else:
                labels.append(ClassLabel.BENIGN)
            events.append(event)
    return events, labels, has_labels


def load_gateway(config: GatewayConfig) -> IntentGateway:
    model = gbt.load(config.model_path)
    attribution = None
    if config.attribution_model_path:
        attribution = gbt.load(config.attribution_model_path)
    return IntentGateway(model, config, attribution)


# ---------------------------------------------------------------------------
# HTTP surface
# ---------------------------------------------------------------------------

def create_app(gateway: IntentGateway):
    """FastAPI app exposing the checkpoint.

    POST /v1/intents/check  body = intent JSON -> Verdict JSON
    GET  /v1/health
    POST /v1/replay         multipart JSONL -> verdicts + optional report
    """
    import tempfile

    from fastapi import FastAPI, Request, UploadFile, File
    from fastapi.responses import JSONResponse

    from .errors import (
        InvalidTimestamp,
        MalformedJson,
        MissingRequiredField,
        NegativeQuantity,
        UnparseableRequirement,
    )

    app = FastAPI(title="intentguard gateway")
    parse_errors = (MalformedJson, MissingRequiredField, InvalidTimestamp,
                    NegativeQuantity, UnparseableRequirement)

    @app.post("/v1/intents/check")
    async def check(request: Request):
        body = await request.body()
        if len(body) > gateway.config.max_request_bytes:
            return JSONResponse(
                {"error": "request too large"}, status_code=413)
        try:
            verdict = gateway.check_intent(body)
        except parse_errors as exc:
            return JSONResponse(
                {"error": "MalformedIntent", "detail": str(exc)},
                status_code=400)
        except OutOfOrderEvent as exc:
            return JSONResponse(
                {"error": "OutOfOrderEvent", "detail": str(exc)},
                status_code=409)
        except ModelUnavailable as exc:  # pragma: no cover - defensive
            return JSONResponse(
                {"error": "ModelUnavailable", "detail": str(exc)},
                status_code=500)
        return JSONResponse(verdict.to_dict())

    @app.get("/v1/health")
    async def health():
        return JSONResponse(gateway.health())

    @app.post("/v1/replay")
    async def replay(file: UploadFile = File(...)):
        data = await file.read()
        with tempfile.NamedTemporaryFile(suffix=".jsonl", delete=False) as tmp:
            tmp.write(data)
            tmp_path = tmp.name
        try:
            verdicts, report = gateway.batch_replay(tmp_path)
        except MalformedLine as exc:
            return JSONResponse(
                {"error": "MalformedLine", "detail": str(exc)},
                status_code=400)
        finally:
            import os

            os.unlink(tmp_path)
        return JSONResponse({
            "verdicts": [v.to_dict() for v in verdicts],
            "report": report.to_dict() if report is not None else None,
        })

    return app

"""HTTP service for prediction, clinician intervention, patient browsing
and model metadata.

The model is immutable and shared across requests; each /predict response
carries a session token whose cached embeddings let /intervene re-run only
the remark channel, fusion and classifier. Sessions expire after a TTL and
expired tokens are rejected rather than recomputed. Every intervention
appends one JSON line to the audit log.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from . import kernels
from .data import ClinicalSchema, N_RADIOMIC, PatientRecord
from .errors import (IngestionError, MiracleError, RemoteError, SchemaError,
                     UnsupportedOperationError)
from .model import MiracleModel, PredictionResult
from .remarks import (CompletionConfig, KnowledgeBank, Remark, generate_remark,
                      load_default_assets, summarize)

DEFAULT_SESSION_TTL_S = 1800.0


@dataclass
class Session:
    token: str
    patient_id: str
    result: PredictionResult
    created_at: float
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class ServiceState:
    """Everything one running service instance holds."""
    model: MiracleModel | None = None
    completion: CompletionConfig | None = None
    bank: KnowledgeBank | None = None
    prompt: str = ""
    records: dict[str, PatientRecord] = field(default_factory=dict)
    record_order: list[str] = field(default_factory=list)
    audit_path: str | None = None
    session_ttl_s: float = DEFAULT_SESSION_TTL_S
    stub_fallback: bool = True
    checkpoint_path: str | None = None
    sessions: dict[str, Session] = field(default_factory=dict)
    _sessions_lock: threading.Lock = field(default_factory=threading.Lock)
    _audit_lock: threading.Lock = field(default_factory=threading.Lock)

    def add_records(self, records: list[PatientRecord]):
        for rec in records:
            if rec.patient_id not in self.records:
                self.record_order.append(rec.patient_id)
            self.records[rec.patient_id] = rec

    # -- sessions --------------------------------------------------------

    def open_session(self, patient_id: str, result: PredictionResult) -> Session:
        session = Session(token=uuid.uuid4().hex, patient_id=patient_id,
                          result=result, created_at=time.monotonic())
        with self._sessions_lock:
            self._evict_expired()
            self.sessions[session.token] = session
        return session

    def get_session(self, token: str) -> Session | None:
        with self._sessions_lock:
            self._evict_expired()
            return self.sessions.get(token)

    def _evict_expired(self):
        now = time.monotonic()
        dead = [t for t, s in self.sessions.items()
                if now - s.created_at > self.session_ttl_s]
        for t in dead:
            del self.sessions[t]

    # -- audit log -------------------------------------------------------

    def audit(self, entry: dict):
        if self.audit_path is None:
            return
        line = json.dumps(entry, sort_keys=True)
        with self._audit_lock:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def _remark_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _parse_payload_record(body: dict, schema: ClinicalSchema) -> PatientRecord:
    clinical = body.get("clinical")
    if not isinstance(clinical, dict):
        raise SchemaError("payload must include a 'clinical' object")
    known = {f.name for f in schema.fields}
    missing = sorted(known - set(clinical))
    extra = sorted(set(clinical) - known)
    if missing or extra:
        raise SchemaError(
            f"clinical schema violation; missing={missing} unexpected={extra}")
    radiomic = body.get("radiomic")
    if radiomic is None:
        radiomic = np.zeros(N_RADIOMIC)
    radiomic = np.asarray(radiomic, dtype=np.float64)
    if radiomic.shape != (N_RADIOMIC,):
        raise SchemaError(f"radiomic vector must have {N_RADIOMIC} entries")
    return PatientRecord(
        patient_id=str(body.get("patient_id", "adhoc")),
        clinical=clinical, radiomic=radiomic,
        label=int(body.get("label", 0)))


def _predict_response(session: Session) -> dict:
    r = session.result
    return {
        "session_token": session.token,
        "patient_id": session.patient_id,
        "probability": r.probability,
        "mc_std": r.mc_std,
        "remark_text": r.remark.text,
        "remark_origin": r.remark.origin,
        "channel_summary": r.to_dict()["channel_summary"],
    }


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="miracle-risk service")
    app.state.miracle = state

    @app.exception_handler(MiracleError)
    async def _miracle_error(request: Request, exc: MiracleError):
        codes = {SchemaError: 422, IngestionError: 422, RemoteError: 502,
                 UnsupportedOperationError: 409}
        status = codes.get(type(exc), 400)
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    def _require_model() -> MiracleModel:
        if state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return state.model

    @app.get("/healthz")
    def healthz():
        if state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return {"status": "ok", "kernel_backend": kernels.BACKEND}

    @app.get("/model/info")
    def model_info():
        model = _require_model()
        return {
            "config": model.config.to_dict(),
            "embed_dim": 768,
            "embedder": type(model.remark_channel.embedder).__name__,
            "projection_checksum": model.remark_channel.checksum(),
            "param_checksum": model.param_checksum(),
            "checkpoint": state.checkpoint_path,
            "n_demo_patients": len(state.records),
        }

    @app.get("/patients")
    def list_patients(page: int = 0, page_size: int = 50):
        if page < 0 or page_size < 1:
            raise HTTPException(status_code=422, detail="bad pagination")
        start = page * page_size
        ids = state.record_order[start:start + page_size]
        return {
            "page": page,
            "total": len(state.record_order),
            "patients": [{"patient_id": pid, "label": state.records[pid].label}
                         for pid in ids],
        }

    @app.get("/patients/{patient_id}")
    def get_patient(patient_id: str):
        rec = state.records.get(patient_id)
        if rec is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown patient {patient_id!r}")
        return {
            "patient_id": rec.patient_id,
            "clinical": rec.clinical,
            "radiomic": rec.radiomic.tolist(),
            "label": rec.label,
        }

    @app.post("/predict")
    async def predict(request: Request):
        model = _require_model()
        body = await request.json()
        if not isinstance(body, dict):
            raise HTTPException(status_code=422, detail="body must be an object")
        if "clinical" in body:
            record = _parse_payload_record(body, model.codec.schema)
        else:
            pid = body.get("patient_id")
            rec = state.records.get(pid) if pid else None
            if rec is None:
                raise HTTPException(status_code=404,
                                    detail=f"unknown patient {pid!r}")
            record = rec

        remark = None
        if model.config.ablation == "full":
            summary = summarize(record.clinical, model.codec.schema)
            completion = state.completion or CompletionConfig(stub_mode=True)
            try:
                remark = generate_remark(summary, state.bank, state.prompt,
                                         completion, c_fields=record.clinical)
            except RemoteError:
                if not state.stub_fallback:
                    raise
                fallback = CompletionConfig(stub_mode=True)
                remark = generate_remark(summary, state.bank, state.prompt,
                                         fallback, c_fields=record.clinical)
        result = model.predict(record, remark)
        session = state.open_session(record.patient_id, result)
        return _predict_response(session)

    @app.post("/intervene")
    async def intervene(request: Request):
        model = _require_model()
        body = await request.json()
        token = body.get("session_token", "")
        edited = body.get("edited_remark", "")
        session = state.get_session(token)
        if session is None:
            raise HTTPException(status_code=410,
                                detail="session expired or unknown")
        if not isinstance(edited, str) or not edited.strip():
            raise HTTPException(status_code=400,
                                detail="edited remark must be nonempty")
        with session.lock:
            old = session.result
            new = model.intervene(old, edited)
            session.result = new
            state.audit({
                "timestamp": time.time(),
                "session_token": token,
                "patient_id": session.patient_id,
                "old_remark_sha256": _remark_hash(old.remark.text),
                "new_remark_sha256": _remark_hash(new.remark.text),
                "old_probability": old.probability,
                "new_probability": new.probability,
            })
            return {
                "session_token": token,
                "probability": new.probability,
                "mc_std": new.mc_std,
                "delta_vs_previous": new.probability - old.probability,
                "remark_text": new.remark.text,
            }

    return app


def build_state(checkpoint_path=None, demo_data_dir=None, stub_llm=False,
                audit_path=None, session_ttl_s=DEFAULT_SESSION_TTL_S) -> ServiceState:
    """Assemble a ServiceState from a saved checkpoint and optional demo data."""
    bank, prompt = load_default_assets()
    completion = (CompletionConfig(stub_mode=True) if stub_llm
                  else CompletionConfig.from_env())
    state = ServiceState(completion=completion, bank=bank, prompt=prompt,
                         audit_path=audit_path, session_ttl_s=session_ttl_s,
                         checkpoint_path=str(checkpoint_path) if checkpoint_path else None)
    if checkpoint_path is not None:
        from .checkpoint import load_checkpoint
        state.model = load_checkpoint(checkpoint_path).build_model()
    if demo_data_dir is not None:
        from .data import load_dataset
        split, _ = load_dataset(demo_data_dir)
        state.add_records(split.all_records())
    return state

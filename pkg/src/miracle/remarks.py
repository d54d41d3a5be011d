"""Clinical summary templating, remark generation (LLM client + offline
stub) and deterministic remark embedding into 768-dim vectors."""
from __future__ import annotations

import hashlib
import json
import os
import re
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ClinicalSchema, DEFAULT_SCHEMA
from .errors import ConfigError, GenerationError, RemoteError, SchemaError

EMBED_DIM = 768
MAX_TOKENS = 4096
_HASH_SEED = b"miracle-remark-hash-v1"
_PROJECTION_SEED = 20240901

ENV_ENDPOINT = "MIRACLE_LLM_ENDPOINT"
ENV_API_KEY = "MIRACLE_LLM_API_KEY"
ENV_MODEL = "MIRACLE_LLM_MODEL"
ENV_STUB = "MIRACLE_LLM_STUB"


@dataclass(frozen=True)
class ClinicalSummary:
    text: str


@dataclass(frozen=True)
class KnowledgeBank:
    text: str
    source_path: str

    @classmethod
    def load(cls, path) -> "KnowledgeBank":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.strip():
            raise ConfigError(f"knowledge bank {path} is empty")
        return cls(text=text, source_path=str(path))


@dataclass
class Remark:
    text: str
    origin: str  # llm_generated | clinician_edited | stub
    model_name: str = ""

    def __post_init__(self):
        if not self.text:
            raise GenerationError("remark text must be nonempty")
        if self.origin not in ("llm_generated", "clinician_edited", "stub"):
            raise GenerationError(f"unknown remark origin {self.origin!r}")


_FIELD_SENTENCES = {
    "age": "The patient is {v} years old.",
    "bmi": "Body mass index is {v}.",
    "smoking_pack_years": "Smoking history amounts to {v} pack-years.",
    "fev1_pct": "FEV1 is {v} percent of predicted.",
    "dlco_pct": "DLCO is {v} percent of predicted.",
    "six_min_walk_m": "Six-minute walk distance is {v} meters.",
    "creatinine": "Serum creatinine is {v} mg/dL.",
    "hemoglobin": "Hemoglobin is {v} g/dL.",
    "albumin": "Serum albumin is {v} g/dL.",
    "wbc_count": "White blood cell count is {v}.",
    "tumor_size_mm": "The tumor measures {v} mm.",
    "suv_max": "Maximum SUV on PET is {v}.",
    "sex": "The patient's sex is {v}.",
    "smoking_status": "Smoking status is {v}.",
    "asa_class": "ASA physical status class is {v}.",
    "tumor_stage": "Clinical tumor stage is {v}.",
    "procedure_type": "The planned procedure is {v}.",
}


def summarize(c_fields: dict, schema: ClinicalSchema = DEFAULT_SCHEMA) -> ClinicalSummary:
    """Render the clinical fields into a fixed-order, one-sentence-per-field
    summary. Field order follows the schema, not the input dict."""
    parts = []
    for f in schema.fields:
        if f.name not in c_fields:
            raise SchemaError(f"summary requires clinical field {f.name!r}")
        template = _FIELD_SENTENCES.get(f.name, f.name + " is {v}.")
        parts.append(template.format(v=c_fields[f.name]))
    return ClinicalSummary(text=" ".join(parts))


def stub_remark(summary: ClinicalSummary, c_fields: dict) -> Remark:
    """Deterministic rule-based remark used offline; names the concrete risk
    and protective factors present in the summary."""
    risks = []
    protective = []

    def num(name, default=0.0):
        try:
            return float(c_fields.get(name, default))
        except (TypeError, ValueError):
            return default

    if num("fev1_pct", 100) < 60:
        risks.append(f"reduced pulmonary reserve with fev1_pct {c_fields['fev1_pct']}")
    if num("dlco_pct", 100) < 60:
        risks.append(f"impaired diffusion capacity with dlco_pct {c_fields['dlco_pct']}")
    if num("smoking_pack_years") > 30:
        risks.append(f"heavy smoking history of {c_fields['smoking_pack_years']} pack-years")
    if num("age") > 75:
        risks.append(f"advanced age {c_fields['age']}")
    if num("tumor_size_mm") > 50:
        risks.append(f"large tumor of {c_fields['tumor_size_mm']} mm")
    if str(c_fields.get("procedure_type")) == "pneumonectomy":
        risks.append("planned pneumonectomy")
    if str(c_fields.get("asa_class")) in ("3", "4"):
        risks.append(f"asa_class {c_fields['asa_class']}")
    if num("albumin", 4.0) < 3.2:
        risks.append(f"low albumin {c_fields['albumin']}")
    if num("fev1_pct") >= 90:
        protective.append(f"preserved fev1_pct {c_fields['fev1_pct']}")
    if num("six_min_walk_m") >= 480:
        protective.append(f"good functional capacity with six_min_walk_m {c_fields['six_min_walk_m']}")
    if str(c_fields.get("smoking_status")) == "never":
        protective.append("never-smoker status")

    if risks:
        text = "Elevated postoperative risk due to " + "; ".join(risks) + "."
    else:
        text = "No dominant postoperative risk factor identified."
    if protective:
        text += " Protective factors: " + "; ".join(protective) + "."
    return Remark(text=text, origin="stub", model_name="stub")


@dataclass
class CompletionConfig:
    endpoint_url: str = ""
    api_key: str = ""
    model_name: str = "stub"
    stub_mode: bool = True
    max_new_tokens: int = 2000
    temperature: float = 0.9
    timeout_s: float = 60.0
    retries: int = 3

    @classmethod
    def from_env(cls) -> "CompletionConfig":
        stub = os.environ.get(ENV_STUB, "").strip() in {"1", "true", "yes"} \
            or not os.environ.get(ENV_ENDPOINT)
        return cls(
            endpoint_url=os.environ.get(ENV_ENDPOINT, ""),
            api_key=os.environ.get(ENV_API_KEY, ""),
            model_name=os.environ.get(ENV_MODEL, "stub" if stub else "default"),
            stub_mode=stub,
        )


def build_payload(summary: ClinicalSummary, bank: KnowledgeBank, prompt_template: str,
                  config: CompletionConfig) -> dict:
    """Chat-completion request carrying summary, bank and prompt once each,
    in that order."""
    content = "\n\n".join([summary.text, bank.text, prompt_template])
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": content}],
        "max_tokens": config.max_new_tokens,
        "temperature": config.temperature,
    }


def generate_remark(summary: ClinicalSummary, bank: KnowledgeBank, prompt_template: str,
                    config: CompletionConfig, c_fields: dict | None = None) -> Remark:
    """Produce a remark from {summary, bank, prompt} via the configured
    completion endpoint, or deterministically via the stub."""
    if config.stub_mode:
        if c_fields is None:
            raise ConfigError("stub mode needs the raw clinical fields")
        return stub_remark(summary, c_fields)
    import requests

    payload = build_payload(summary, bank, prompt_template, config)
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    last_err = None
    for attempt in range(config.retries):
        try:
            resp = requests.post(config.endpoint_url, json=payload, headers=headers,
                                 timeout=config.timeout_s)
            resp.raise_for_status()
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            if not text:
                raise GenerationError("completion endpoint returned empty text")
            return Remark(text=text, origin="llm_generated", model_name=config.model_name)
        except GenerationError:
            raise
        except Exception as exc:  # network / HTTP / malformed body
            last_err = exc
            if attempt < config.retries - 1:
                time.sleep(0.5 * 2**attempt)
    raise RemoteError(f"completion endpoint failed after {config.retries} attempts: {last_err}")


# ---------------------------------------------------------------------------
# Embedding

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _hash_bin(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), key=_HASH_SEED, digest_size=8).digest()
    return int.from_bytes(digest, "little") % EMBED_DIM


class HashingEmbedder:
    """Deterministic feature-hashing bag of lowercased word tokens into 768
    bins, L2-normalized. Self-contained stand-in for a clinical text encoder."""

    name = "hashing-768"
    output_dim = EMBED_DIM
    max_tokens = MAX_TOKENS

    def embed(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower())
        if len(tokens) > self.max_tokens:
            warnings.warn(f"remark exceeds {self.max_tokens} tokens; truncating")
            tokens = tokens[: self.max_tokens]
        vec = np.zeros(EMBED_DIM)
        for tok in tokens:
            vec[_hash_bin(tok)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec


class ExternalEmbedder:
    """Client for an external embedding service; must return 768-dim vectors."""

    max_tokens = MAX_TOKENS
    output_dim = EMBED_DIM

    def __init__(self, endpoint_url: str, api_key: str = "", model_name: str = "external",
                 timeout_s: float = 60.0):
        self.endpoint_url = endpoint_url
        self.api_key = api_key
        self.name = model_name
        self.timeout_s = timeout_s

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(self.endpoint_url, json={"model": self.name, "input": text},
                             headers=headers, timeout=self.timeout_s)
        resp.raise_for_status()
        vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        if vec.shape != (EMBED_DIM,):
            raise ConfigError(
                f"external embedder returned dimension {vec.shape}, need ({EMBED_DIM},)")
        return vec


def frozen_projection() -> np.ndarray:
    """Fixed near-orthogonal 768x768 projection, identical across runs and
    never touched by training."""
    rng = np.random.default_rng(_PROJECTION_SEED)
    q, r = np.linalg.qr(rng.standard_normal((EMBED_DIM, EMBED_DIM)))
    return q * np.sign(np.diag(r))


def projection_checksum(projection: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(projection).tobytes()).hexdigest()


@dataclass
class RemarkChannel:
    """Embedder plus the frozen projection: text -> 768-dim vector."""
    embedder: object = field(default_factory=HashingEmbedder)
    projection: np.ndarray = field(default_factory=frozen_projection)

    def embed_remark(self, remark: Remark) -> np.ndarray:
        raw = self.embedder.embed(remark.text)
        if raw.shape != (EMBED_DIM,):
            raise ConfigError(f"embedder produced dimension {raw.shape}")
        if not np.any(raw):
            warnings.warn("remark embedded to the zero vector (degenerate text)")
        return self.projection @ raw

    def checksum(self) -> str:
        return projection_checksum(self.projection)


def default_asset_path(name: str) -> str:
    return os.path.join(os.path.dirname(__file__), "assets", name)


def load_default_assets() -> tuple[KnowledgeBank, str]:
    bank = KnowledgeBank.load(default_asset_path("knowledge_bank.txt"))
    with open(default_asset_path("prompt.txt"), encoding="utf-8") as fh:
        prompt = fh.read()
    return bank, prompt

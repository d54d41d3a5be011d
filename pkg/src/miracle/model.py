"""End-to-end risk model: variational encoders for the clinical and
radiomic channels, the frozen remark channel, weighted fusion and the
variational classifier, trained with focal loss plus a KL penalty."""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .data import DatasetSplit, FeatureCodec, PatientRecord, encode, encode_batch
from .errors import (ConfigError, MiracleError, ShapeError, TrainingError,
                     UnsupportedOperationError)
from .losses import FocalParams, focal_batch
from .metrics import EvalReport, evaluate
from .remarks import EMBED_DIM, Remark, RemarkChannel, stub_remark, summarize
from .vnet import MlpSpec, VariationalMlp

ABLATION_MODES = ("clinical_only", "clinical_radiomic", "full")


@dataclass(frozen=True)
class FusionWeights:
    w_c: float = 0.5
    w_r: float = 0.25
    w_m: float = 0.25

    def __post_init__(self):
        if min(self.w_c, self.w_r, self.w_m) < 0.0:
            raise ConfigError("fusion weights must be nonnegative")

    def for_mode(self, mode: str) -> tuple[float, float, float]:
        """Effective weights: disabled channels get 0, the rest renormalize
        to sum to 1."""
        if mode == "clinical_only":
            raw = (self.w_c, 0.0, 0.0)
        elif mode == "clinical_radiomic":
            raw = (self.w_c, self.w_r, 0.0)
        elif mode == "full":
            raw = (self.w_c, self.w_r, self.w_m)
        else:
            raise ConfigError(f"unknown ablation mode {mode!r}")
        total = sum(raw)
        if total <= 0.0:
            raise ConfigError("at least one enabled fusion weight must be positive")
        return tuple(w / total for w in raw)


def fuse(e_c, e_r, e_m, weights: tuple[float, float, float]) -> np.ndarray:
    """Elementwise weighted sum of the three channel embeddings."""
    vecs = [np.asarray(v, dtype=np.float64) for v in (e_c, e_r, e_m)]
    dim = vecs[0].shape
    if any(v.shape != dim for v in vecs):
        raise ShapeError("channel embeddings must share one shape")
    w_c, w_r, w_m = weights
    return w_c * vecs[0] + w_r * vecs[1] + w_m * vecs[2]


@dataclass
class MiracleConfig:
    clinical_dims: tuple[int, ...] = (64, 128, 256, 768)
    radiomic_dims: tuple[int, ...] = (256, 768)
    classifier_dims: tuple[int, ...] = (256, 1024, 1)
    fusion: FusionWeights = field(default_factory=FusionWeights)
    focal: FocalParams = field(default_factory=FocalParams)
    kl_weight: float = 1e-6
    mc_samples: int = 10
    dropout: float = 0.3
    ablation: str = "full"
    unit_normalize: bool = False
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.ablation not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode {self.ablation!r}")
        if self.clinical_dims[-1] != EMBED_DIM or (
                self.radiomic_dims and self.radiomic_dims[-1] != EMBED_DIM):
            raise ConfigError(f"encoder output dimension must be {EMBED_DIM}")
        if self.classifier_dims[-1] != 1:
            raise ConfigError("classifier must end in a single logit unit")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("clinical_dims", "radiomic_dims", "classifier_dims"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MiracleConfig":
        d = dict(d)
        for k in ("clinical_dims", "radiomic_dims", "classifier_dims"):
            if k in d:
                d[k] = tuple(d[k])
        if "fusion" in d and isinstance(d["fusion"], dict):
            d["fusion"] = FusionWeights(**d["fusion"])
        if "focal" in d and isinstance(d["focal"], dict):
            d["focal"] = FocalParams(**d["focal"])
        return cls(**d)


@dataclass
class PredictionResult:
    probability: float
    mc_std: float
    remark: Remark
    e_c: np.ndarray                 # mean channel embeddings across MC samples
    e_r: np.ndarray
    e_m: np.ndarray
    per_sample_probs: np.ndarray    # (S,)
    samples_e_c: np.ndarray         # (S, 768), cached for intervention
    samples_e_r: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "mc_std": self.mc_std,
            "remark": {"text": self.remark.text, "origin": self.remark.origin,
                       "model_name": self.remark.model_name},
            "per_sample_probs": self.per_sample_probs.tolist(),
            "channel_summary": {
                "e_c_norm": float(np.linalg.norm(self.e_c)),
                "e_r_norm": float(np.linalg.norm(self.e_r)),
                "e_m_norm": float(np.linalg.norm(self.e_m)),
            },
        }


def seed_for_patient(patient_id: str) -> int:
    digest = hashlib.blake2b(patient_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest[:4], "little")


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(norms > 0.0, x / np.where(norms > 0.0, norms, 1.0), x)


class Adam:
    """Per-parameter adaptive first-order optimizer."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class MiracleModel:
    """Built network stack plus codec and remark channel."""

    def __init__(self, config: MiracleConfig, codec: FeatureCodec,
                 remark_channel: RemarkChannel | None = None):
        self.config = config
        self.codec = codec
        self.remark_channel = remark_channel or RemarkChannel()
        rng = np.random.default_rng([config.seed, 1000])
        drop = config.dropout
        self.clinical_enc = VariationalMlp(
            len(codec.schema.fields),
            MlpSpec(config.clinical_dims, dropout_rate=drop,
                    mc_samples=config.mc_samples, kl_weight=config.kl_weight),
            rng)
        if config.ablation == "clinical_only":
            self.radiomic_enc = None
        else:
            self.radiomic_enc = VariationalMlp(
                113,
                MlpSpec(config.radiomic_dims, dropout_rate=drop,
                        mc_samples=config.mc_samples, kl_weight=config.kl_weight),
                rng)
        self.classifier = VariationalMlp(
            EMBED_DIM,
            MlpSpec(config.classifier_dims, dropout_rate=drop,
                    mc_samples=config.mc_samples, kl_weight=config.kl_weight),
            rng)

    # -- parameter bookkeeping -------------------------------------------

    def networks(self) -> dict[str, VariationalMlp]:
        nets = {"clinical": self.clinical_enc}
        if self.radiomic_enc is not None:
            nets["radiomic"] = self.radiomic_enc
        nets["classifier"] = self.classifier
        return nets

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for net_name, net in self.networks().items():
            for i, layer in enumerate(net.layers):
                for key, arr in layer.param_arrays().items():
                    items.append((f"{net_name}/{i}/{key}", arr))
        return items

    def param_checksum(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.param_items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def set_params(self, named: dict[str, np.ndarray]):
        for name, arr in self.param_items():
            arr[...] = named[name]

    def total_kl(self, cached: bool = False) -> float:
        return sum(net.kl(cached) for net in self.networks().values())

    # -- inference -------------------------------------------------------

    def _channel_weights(self) -> tuple[float, float, float]:
        return self.config.fusion.for_mode(self.config.ablation)

    def embed_remark(self, remark: Remark) -> np.ndarray:
        return self.remark_channel.embed_remark(remark)

    def predict(self, record: PatientRecord, remark: Remark | None,
                rng_seed: int | None = None) -> PredictionResult:
        """Run the full inference pipeline with S Monte Carlo samples.

        The sampling seed derives from the patient_id unless given, so
        repeated calls for the same patient are identical. Encoder and
        classifier draws live on separate seed streams so an intervention
        can replay the classifier stage exactly."""
        seed = seed_for_patient(record.patient_id) if rng_seed is None else rng_seed
        c_vec, r_vec = encode(record, self.codec)
        weights = self._channel_weights()
        if self.config.ablation == "full":
            if remark is None:
                raise MiracleError("full mode requires a remark")
            e_m = self.embed_remark(remark)
        else:
            remark = remark or Remark(text="(remark channel disabled)", origin="stub")
            e_m = np.zeros(EMBED_DIM)
        probs, e_cs, e_rs = self._sample_probs(
            c_vec[None, :], r_vec[None, :], e_m[None, :], weights, seed)
        return PredictionResult(
            probability=float(np.mean(probs)),
            mc_std=float(np.std(probs)),
            remark=remark,
            e_c=e_cs.mean(axis=0)[0],
            e_r=e_rs.mean(axis=0)[0],
            e_m=e_m,
            per_sample_probs=probs[:, 0],
            samples_e_c=e_cs[:, 0, :],
            samples_e_r=e_rs[:, 0, :],
            seed=seed,
        )

    def _sample_probs(self, c_mat, r_mat, e_m_mat, weights, seed):
        """S stochastic passes over a batch; returns per-sample sigmoid
        probabilities (S, B) and the per-sample channel embeddings."""
        s_count = self.config.mc_samples
        n = c_mat.shape[0]
        rng_enc = np.random.default_rng([seed, 0])
        rng_cls = np.random.default_rng([seed, 1])
        probs = np.empty((s_count, n))
        e_cs = np.empty((s_count, n, EMBED_DIM))
        e_rs = np.empty((s_count, n, EMBED_DIM))
        e_m_use = _unit_rows(e_m_mat) if self.config.unit_normalize else e_m_mat
        for net in self.networks().values():
            net.refresh_cache()
        for s in range(s_count):
            e_c, _ = self.clinical_enc.forward(c_mat, rng_enc, cached=True)
            if self.radiomic_enc is not None:
                e_r, _ = self.radiomic_enc.forward(r_mat, rng_enc, cached=True)
            else:
                e_r = np.zeros((n, EMBED_DIM))
            e_cs[s], e_rs[s] = e_c, e_r
            if self.config.unit_normalize:
                e_c, e_r = _unit_rows(e_c), _unit_rows(e_r)
            fused = fuse(e_c, e_r, e_m_use, weights)
            logit, _ = self.classifier.forward(fused, rng_cls, cached=True)
            probs[s] = kernels.sigmoid(logit[:, 0])
        return probs, e_cs, e_rs

    def _classifier_pass(self, e_cs, e_rs, e_m, weights, seed):
        """Replay the fusion + classifier stage for cached embeddings."""
        rng_cls = np.random.default_rng([seed, 1])
        s_count = e_cs.shape[0]
        probs = np.empty(s_count)
        e_m_use = _unit_rows(e_m) if self.config.unit_normalize else e_m
        self.classifier.refresh_cache()
        for s in range(s_count):
            e_c, e_r = e_cs[s], e_rs[s]
            if self.config.unit_normalize:
                e_c, e_r = _unit_rows(e_c), _unit_rows(e_r)
            fused = fuse(e_c, e_r, e_m_use, weights)
            logit, _ = self.classifier.forward(fused[None, :], rng_cls, cached=True)
            probs[s] = kernels.sigmoid(logit[:, 0])[0]
        return probs

    def intervene(self, prior: PredictionResult, edited_text: str) -> PredictionResult:
        """Recompute only the remark channel from the edited text; clinical
        and radiomic embeddings and all parameters stay untouched."""
        if self.config.ablation != "full":
            raise UnsupportedOperationError(
                "clinician intervention requires the remark channel")
        if not edited_text or not edited_text.strip():
            raise MiracleError("edited remark must be nonempty")
        remark = Remark(text=edited_text, origin="clinician_edited",
                        model_name=prior.remark.model_name)
        e_m = self.embed_remark(remark)
        weights = self._channel_weights()
        probs = self._classifier_pass(prior.samples_e_c, prior.samples_e_r,
                                      e_m, weights, prior.seed)
        return PredictionResult(
            probability=float(np.mean(probs)),
            mc_std=float(np.std(probs)),
            remark=remark,
            e_c=prior.e_c,
            e_r=prior.e_r,
            e_m=e_m,
            per_sample_probs=probs,
            samples_e_c=prior.samples_e_c,
            samples_e_r=prior.samples_e_r,
            seed=prior.seed,
        )

    # -- training --------------------------------------------------------

    def score_batch(self, c_mat, r_mat, e_m_mat, seed: int) -> np.ndarray:
        """Mean predicted probability per row, S MC samples, inference mode."""
        weights = self._channel_weights()
        probs, _, _ = self._sample_probs(c_mat, r_mat, e_m_mat, weights, seed)
        return probs.mean(axis=0)


def stub_remarks_for(records: list[PatientRecord], schema) -> dict[str, Remark]:
    return {
        rec.patient_id: stub_remark(summarize(rec.clinical, schema), rec.clinical)
        for rec in records
    }


def _precompute_e_m(model: MiracleModel, records, remarks: dict[str, Remark]):
    if model.config.ablation != "full":
        return np.zeros((len(records), EMBED_DIM))
    missing = [r.patient_id for r in records if r.patient_id not in remarks]
    if missing:
        raise MiracleError(f"missing remarks for patients: {missing[:5]}")
    return np.stack([model.embed_remark(remarks[r.patient_id]) for r in records])


@dataclass
class TrainHistory:
    rows: list[dict] = field(default_factory=list)

    def best(self) -> dict:
        return max(self.rows, key=lambda r: (r["val_auc"], -r["epoch"]))


def train(split: DatasetSplit, remarks: dict[str, Remark] | None,
          config: MiracleConfig, codec: FeatureCodec | None = None,
          remark_channel: RemarkChannel | None = None,
          log=None) -> tuple[MiracleModel, TrainHistory]:
    """Minibatch Adam on the focal + KL objective with validation-AUC model
    selection and early stopping."""
    from .data import fit_codec

    if not split.train or not split.val:
        raise TrainingError("train and val splits must be nonempty")
    codec = codec or fit_codec(split.train)
    model = MiracleModel(config, codec, remark_channel)
    if remarks is None:
        remarks = stub_remarks_for(split.all_records(), codec.schema)

    c_tr, r_tr = encode_batch(split.train, codec)
    y_tr = np.array([rec.label for rec in split.train])
    em_tr = _precompute_e_m(model, split.train, remarks)
    c_va, r_va = encode_batch(split.val, codec)
    y_va = np.array([rec.label for rec in split.val])
    em_va = _precompute_e_m(model, split.val, remarks)

    weights = model._channel_weights()
    nets = list(model.networks().values())
    params = [arr for _, arr in model.param_items()]
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 42])
    n = len(split.train)
    s_count = config.mc_samples
    history = TrainHistory()
    best_auc = -np.inf
    best_params = None
    best_epoch = -1

    for epoch in range(config.max_epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            bsz = idx.size
            c_b, r_b, em_b, y_b = c_tr[idx], r_tr[idx], em_tr[idx], y_tr[idx]
            if config.unit_normalize:
                em_b = _unit_rows(em_b)
            for net in nets:
                net.refresh_cache()
            accum = [net.zero_grads() for net in nets]
            batch_focal = 0.0
            for _ in range(s_count):
                e_c, tr_c = model.clinical_enc.forward(c_b, rng, training=True, cached=True)
                if model.radiomic_enc is not None:
                    e_r, tr_r = model.radiomic_enc.forward(r_b, rng, training=True, cached=True)
                else:
                    e_r, tr_r = np.zeros((bsz, EMBED_DIM)), None
                if config.unit_normalize:
                    u_c, u_r = _unit_rows(e_c), _unit_rows(e_r)
                else:
                    u_c, u_r = e_c, e_r
                fused = fuse(u_c, u_r, em_b, weights)
                logits, tr_f = model.classifier.forward(fused, rng, training=True, cached=True)
                losses, dlogit = focal_batch(logits[:, 0], y_b, config.focal)
                batch_focal += float(losses.mean()) / s_count
                upstream = (dlogit / (bsz * s_count))[:, None]
                g_f, d_fused = model.classifier.backward(tr_f, upstream, cached=True)
                accum[-1] += g_f
                d_uc = weights[0] * d_fused
                if config.unit_normalize:
                    d_uc = _unit_norm_backward(e_c, d_uc)
                g_c, _ = model.clinical_enc.backward(tr_c, d_uc, cached=True)
                accum[0] += g_c
                if model.radiomic_enc is not None:
                    d_ur = weights[1] * d_fused
                    if config.unit_normalize:
                        d_ur = _unit_norm_backward(e_r, d_ur)
                    g_r, _ = model.radiomic_enc.backward(tr_r, d_ur, cached=True)
                    accum[1] += g_r
            grads = []
            for net, acc in zip(nets, accum):
                klg = net.kl_grads(cached=True).scale(config.kl_weight)
                acc += klg
                for layer_grads in acc.layers:
                    grads.extend(layer_grads[k] for k in ("mu_w", "rho_w", "mu_b", "rho_b"))
            batch_obj = batch_focal + config.kl_weight * model.total_kl(cached=True)
            if not np.isfinite(batch_obj):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            opt.step(grads)
            epoch_loss += batch_obj
            n_batches += 1

        val_seed = int(np.random.default_rng([config.seed, 777, epoch]).integers(2**31))
        val_probs = model.score_batch(c_va, r_va, em_va, val_seed)
        val_auc = evaluate(val_probs, y_va).auc
        row = {"epoch": epoch, "train_loss": epoch_loss / n_batches,
               "val_auc": val_auc, "val_seed": val_seed}
        history.rows.append(row)
        if log:
            log(row)
        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_params = {name: arr.copy() for name, arr in model.param_items()}
        elif epoch - best_epoch >= config.patience:
            break

    model.set_params(best_params)
    return model, history


def _unit_norm_backward(x: np.ndarray, d_u: np.ndarray) -> np.ndarray:
    """Backprop through row-wise x / ||x||."""
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    u = x / safe
    proj = np.sum(d_u * u, axis=-1, keepdims=True)
    grad = (d_u - u * proj) / safe
    return np.where(norms > 0.0, grad, d_u)


def evaluate_model(model: MiracleModel, records: list[PatientRecord],
                   remarks: dict[str, Remark] | None = None) -> EvalReport:
    """Score each patient via the seeded per-patient predict path."""
    if remarks is None:
        remarks = stub_remarks_for(records, model.codec.schema)
    scores = []
    labels = []
    for rec in records:
        remark = remarks.get(rec.patient_id) if model.config.ablation == "full" else None
        result = model.predict(rec, remark)
        scores.append(result.probability)
        labels.append(rec.label)
    return evaluate(np.array(scores), np.array(labels))


def ablate(split: DatasetSplit, config: MiracleConfig, modes: list[str],
           remarks: dict[str, Remark] | None = None, log=None
           ) -> dict[str, EvalReport]:
    """Train one model per ablation mode under identical seeds and report
    test-split metrics for each."""
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode {mode!r}")
    reports = {}
    for mode in modes:
        cfg = MiracleConfig.from_dict({**config.to_dict(), "ablation": mode})
        model, _ = train(split, remarks, cfg, log=log)
        reports[mode] = evaluate_model(model, split.test, remarks)
    return reports

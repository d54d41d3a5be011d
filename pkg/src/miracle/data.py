"""Patient schema, preprocessing codec, CSV ingestion and the synthetic
dataset generator that stands in for the private surgical cohort.

The generator plants a sparse logistic signal over both clinical fields and
latent radiomic factors, then rejection-matches each split to its configured
complication prevalence, so separability is guaranteed by construction.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IngestionError, SchemaError

N_CLINICAL = 17
N_RADIOMIC = 113

DEFAULT_SIZES = (2694, 200, 200)
DEFAULT_PREVALENCES = (0.226, 0.475, 0.535)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str  # "continuous" | "categorical"


@dataclass(frozen=True)
class ClinicalSchema:
    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        if len(self.fields) != N_CLINICAL:
            raise SchemaError(f"schema must define {N_CLINICAL} clinical fields")
        if any(f.kind not in ("continuous", "categorical") for f in self.fields):
            raise SchemaError("field kind must be continuous or categorical")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def to_dict(self) -> dict:
        return {"fields": [{"name": f.name, "kind": f.kind} for f in self.fields]}

    @classmethod
    def from_dict(cls, d: dict) -> "ClinicalSchema":
        return cls(tuple(FieldSpec(f["name"], f["kind"]) for f in d["fields"]))


# Stand-in schema: 12 continuous + 5 categorical preoperative variables.
DEFAULT_SCHEMA = ClinicalSchema(tuple(
    [FieldSpec(n, "continuous") for n in (
        "age", "bmi", "smoking_pack_years", "fev1_pct", "dlco_pct",
        "six_min_walk_m", "creatinine", "hemoglobin", "albumin",
        "wbc_count", "tumor_size_mm", "suv_max")]
    + [FieldSpec(n, "categorical") for n in (
        "sex", "smoking_status", "asa_class", "tumor_stage", "procedure_type")]
))


@dataclass
class PatientRecord:
    patient_id: str
    clinical: dict[str, object]     # name -> float or category string
    radiomic: np.ndarray            # (113,)
    label: int

    def __post_init__(self):
        if len(self.clinical) != N_CLINICAL:
            raise SchemaError(
                f"patient {self.patient_id}: expected {N_CLINICAL} clinical fields, "
                f"got {len(self.clinical)}")
        self.radiomic = np.asarray(self.radiomic, dtype=np.float64)
        if self.radiomic.shape != (N_RADIOMIC,):
            raise SchemaError(
                f"patient {self.patient_id}: expected {N_RADIOMIC} radiomic values")
        if self.label not in (0, 1):
            raise SchemaError(f"patient {self.patient_id}: label must be 0 or 1")


@dataclass
class DatasetSplit:
    train: list[PatientRecord]
    val: list[PatientRecord]
    test: list[PatientRecord]

    def all_records(self) -> list[PatientRecord]:
        return self.train + self.val + self.test


@dataclass
class FeatureCodec:
    """Per-feature statistics fitted on the training split only."""
    schema: ClinicalSchema
    cont_range: dict[str, tuple[float, float]]          # name -> (min, max)
    cat_table: dict[str, list[str]]                     # name -> sorted categories
    rad_mean: np.ndarray                                # (113,)
    rad_std: np.ndarray                                 # (113,), 0 marks constant

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "cont_range": {k: list(v) for k, v in self.cont_range.items()},
            "cat_table": self.cat_table,
            "rad_mean": self.rad_mean.tolist(),
            "rad_std": self.rad_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureCodec":
        return cls(
            schema=ClinicalSchema.from_dict(d["schema"]),
            cont_range={k: (v[0], v[1]) for k, v in d["cont_range"].items()},
            cat_table={k: list(v) for k, v in d["cat_table"].items()},
            rad_mean=np.asarray(d["rad_mean"], dtype=np.float64),
            rad_std=np.asarray(d["rad_std"], dtype=np.float64),
        )


def fit_codec(train: list[PatientRecord], schema: ClinicalSchema = DEFAULT_SCHEMA) -> FeatureCodec:
    """Min-max ranges, sorted-unique category tables and radiomic
    standardization statistics, all from the training split."""
    if not train:
        raise SchemaError("cannot fit a codec on an empty training split")
    cont_range: dict[str, tuple[float, float]] = {}
    cat_table: dict[str, list[str]] = {}
    for f in schema.fields:
        try:
            values = [rec.clinical[f.name] for rec in train]
        except KeyError as exc:
            raise SchemaError(f"missing clinical field {f.name!r}") from exc
        if f.kind == "continuous":
            arr = np.asarray(values, dtype=np.float64)
            cont_range[f.name] = (float(arr.min()), float(arr.max()))
        else:
            cat_table[f.name] = sorted({str(v) for v in values})
    rad = np.stack([rec.radiomic for rec in train])
    rad_mean = rad.mean(axis=0)
    rad_std = rad.std(axis=0)  # population convention
    return FeatureCodec(schema=schema, cont_range=cont_range, cat_table=cat_table,
                        rad_mean=rad_mean, rad_std=rad_std)


def encode(record: PatientRecord, codec: FeatureCodec) -> tuple[np.ndarray, np.ndarray]:
    """Encode one patient into the (17,) clinical and (113,) radiomic vectors.

    Continuous fields min-max scale and clip to [0,1] (0 when min == max);
    categoricals map to their table index, with a reserved code for unseen
    levels; radiomics standardize, constant features encoding to 0.
    """
    c = np.empty(N_CLINICAL)
    for i, f in enumerate(codec.schema.fields):
        if f.name not in record.clinical:
            raise SchemaError(f"patient {record.patient_id}: missing field {f.name!r}")
        v = record.clinical[f.name]
        if f.kind == "continuous":
            lo, hi = codec.cont_range[f.name]
            c[i] = 0.0 if hi == lo else min(max((float(v) - lo) / (hi - lo), 0.0), 1.0)
        else:
            table = codec.cat_table[f.name]
            try:
                c[i] = table.index(str(v))
            except ValueError:
                warnings.warn(
                    f"unseen category {v!r} for field {f.name!r}; using reserved code")
                c[i] = len(table)
    std = np.where(codec.rad_std > 0.0, codec.rad_std, 1.0)
    r = (record.radiomic - codec.rad_mean) / std
    r[codec.rad_std == 0.0] = 0.0
    return c, r


def encode_batch(records: list[PatientRecord], codec: FeatureCodec):
    pairs = [encode(rec, codec) for rec in records]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


# ---------------------------------------------------------------------------
# CSV ingestion

def _read_rows(path) -> tuple[list[str], dict[str, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if not header or header[0] != "patient_id":
            raise SchemaError(f"{path}: first column must be patient_id")
        rows: dict[str, list[str]] = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{line}: expected {len(header)} columns, got {len(row)}")
            pid = row[0]
            if pid in rows:
                raise IngestionError(f"{path}: duplicated patient_id {pid!r}")
            rows[pid] = row[1:]
        return header[1:], rows


def load_csv(clinical_path, radiomic_path, labels_path,
             schema: ClinicalSchema = DEFAULT_SCHEMA) -> list[PatientRecord]:
    """Join the three CSV files on patient_id into PatientRecords."""
    c_cols, c_rows = _read_rows(clinical_path)
    r_cols, r_rows = _read_rows(radiomic_path)
    l_cols, l_rows = _read_rows(labels_path)
    if c_cols != schema.names:
        raise SchemaError(f"{clinical_path}: columns do not match the schema manifest")
    if len(r_cols) != N_RADIOMIC:
        raise SchemaError(f"{radiomic_path}: expected {N_RADIOMIC} radiomic columns")
    if "label" not in l_cols:
        raise SchemaError(f"{labels_path}: missing label column")
    ids = set(c_rows)
    for path, rows in ((radiomic_path, r_rows), (labels_path, l_rows)):
        missing = sorted(ids.symmetric_difference(rows))
        if missing:
            raise IngestionError(f"{path}: unjoinable patient_ids: {missing}")
    label_idx = l_cols.index("label")
    kinds = {f.name: f.kind for f in schema.fields}
    records = []
    for pid in c_rows:
        clinical = {
            name: (float(v) if kinds[name] == "continuous" else v)
            for name, v in zip(c_cols, c_rows[pid])
        }
        records.append(PatientRecord(
            patient_id=pid,
            clinical=clinical,
            radiomic=np.array([float(v) for v in r_rows[pid]]),
            label=int(l_rows[pid][label_idx]),
        ))
    return records


def load_dataset(data_dir) -> tuple[DatasetSplit, ClinicalSchema]:
    """Read a directory written by save_dataset / the synth command."""
    import os
    with open(os.path.join(data_dir, "schema.json"), encoding="utf-8") as fh:
        schema = ClinicalSchema.from_dict(json.load(fh))
    records = load_csv(
        os.path.join(data_dir, "clinical.csv"),
        os.path.join(data_dir, "radiomics.csv"),
        os.path.join(data_dir, "labels.csv"),
        schema,
    )
    _, l_rows = _read_rows(os.path.join(data_dir, "labels.csv"))
    by_split: dict[str, list[PatientRecord]] = {"train": [], "val": [], "test": []}
    for rec in records:
        split = l_rows[rec.patient_id][1]
        if split not in by_split:
            raise IngestionError(f"unknown split tag {split!r} for {rec.patient_id}")
        by_split[split].append(rec)
    return DatasetSplit(**by_split), schema


def save_dataset(split: DatasetSplit, out_dir, schema: ClinicalSchema = DEFAULT_SCHEMA):
    import os
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "schema.json"), "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")
    records = [(rec, name) for name in ("train", "val", "test")
               for rec in getattr(split, name)]
    with open(os.path.join(out_dir, "clinical.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id"] + schema.names)
        for rec, _ in records:
            w.writerow([rec.patient_id] + [
                repr(float(rec.clinical[f.name])) if f.kind == "continuous" else rec.clinical[f.name]
                for f in schema.fields])
    with open(os.path.join(out_dir, "radiomics.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id"] + [f"radiomic_{i:03d}" for i in range(N_RADIOMIC)])
        for rec, _ in records:
            w.writerow([rec.patient_id] + [repr(float(v)) for v in rec.radiomic])
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "label", "split"])
        for rec, name in records:
            w.writerow([rec.patient_id, rec.label, name])


# ---------------------------------------------------------------------------
# Synthetic cohort generator

N_FACTORS = 8
RADIOMIC_NOISE_SD = 0.6

# (location, scale, clip_lo, clip_hi) used both for sampling and for the
# z-scores entering the planted risk model.
_CONT_GEN = {
    "age": (66.0, 10.0, 30.0, 92.0),
    "bmi": (27.0, 5.0, 15.0, 48.0),
    "smoking_pack_years": (24.0, 18.0, 0.0, 120.0),
    "fev1_pct": (82.0, 18.0, 25.0, 130.0),
    "dlco_pct": (75.0, 18.0, 20.0, 130.0),
    "six_min_walk_m": (420.0, 80.0, 100.0, 700.0),
    "creatinine": (0.95, 0.25, 0.4, 3.0),
    "hemoglobin": (13.2, 1.6, 7.0, 18.0),
    "albumin": (4.0, 0.45, 2.0, 5.5),
    "wbc_count": (7.5, 2.0, 2.0, 20.0),
    "tumor_size_mm": (32.0, 16.0, 3.0, 120.0),
    "suv_max": (8.0, 4.5, 0.5, 40.0),
}

_CAT_GEN = {
    "sex": (["female", "male"], [0.57, 0.43]),
    "smoking_status": (["never", "former", "current"], [0.20, 0.55, 0.25]),
    "asa_class": (["1", "2", "3", "4"], [0.05, 0.35, 0.50, 0.10]),
    "tumor_stage": (["IA", "IB", "IIA", "IIB", "IIIA", "IIIB"],
                    [0.35, 0.20, 0.15, 0.12, 0.12, 0.06]),
    "procedure_type": (["wedge", "segmentectomy", "lobectomy", "pneumonectomy"],
                       [0.15, 0.12, 0.63, 0.10]),
}

# Planted sparse risk model over z-scored continuous fields, categorical
# ordinals and latent radiomic factors.
SIGNAL_SCALE = 2.2
_CONT_COEF = {
    "age": 0.55, "smoking_pack_years": 0.50, "fev1_pct": -1.10, "dlco_pct": -0.90,
    "albumin": -0.50, "tumor_size_mm": 0.70, "six_min_walk_m": -0.40,
}
_CAT_COEF = {
    "smoking_status": {"never": -0.30, "former": 0.10, "current": 0.50},
    "asa_class": {"1": -0.75, "2": -0.25, "3": 0.25, "4": 0.75},
    "tumor_stage": {"IA": -0.50, "IB": -0.25, "IIA": 0.0, "IIB": 0.25,
                    "IIIA": 0.50, "IIIB": 0.75},
    "procedure_type": {"wedge": -0.48, "segmentectomy": -0.24,
                       "lobectomy": 0.12, "pneumonectomy": 0.72},
}
_FACTOR_COEF = np.array([1.10, -0.90, 0.70, 0.0, 0.0, 0.0, 0.0, 0.0])
_BASE_LOGIT = -1.35  # marginal positive rate near 0.30 before rejection


def _draw_patient(rng: np.random.Generator, loadings: np.ndarray):
    clinical: dict[str, object] = {}
    logit = _BASE_LOGIT
    for name, (loc, scale, lo, hi) in _CONT_GEN.items():
        v = float(np.clip(rng.normal(loc, scale), lo, hi))
        clinical[name] = round(v, 3)
        logit += SIGNAL_SCALE * _CONT_COEF.get(name, 0.0) * (v - loc) / scale
    for name, (cats, probs) in _CAT_GEN.items():
        v = cats[rng.choice(len(cats), p=probs)]
        clinical[name] = v
        logit += SIGNAL_SCALE * _CAT_COEF.get(name, {}).get(v, 0.0)
    factors = rng.standard_normal(N_FACTORS)
    radiomic = factors @ loadings + RADIOMIC_NOISE_SD * rng.standard_normal(N_RADIOMIC)
    logit += SIGNAL_SCALE * float(_FACTOR_COEF @ factors)
    label = int(rng.random() < 1.0 / (1.0 + np.exp(-logit)))
    return clinical, radiomic, label


def generate_synthetic(n_train: int = DEFAULT_SIZES[0], n_val: int = DEFAULT_SIZES[1],
                       n_test: int = DEFAULT_SIZES[2], seed: int = 0,
                       prevalences: tuple[float, float, float] = DEFAULT_PREVALENCES
                       ) -> DatasetSplit:
    """Deterministic synthetic cohort with rejection-matched split prevalences."""
    sizes = (int(n_train), int(n_val), int(n_test))
    if any(n < 1 for n in sizes):
        raise ConfigError("split sizes must be >= 1")
    for p in prevalences:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"prevalence {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    loadings = rng.standard_normal((N_FACTORS, N_RADIOMIC)) / np.sqrt(N_FACTORS)
    splits = []
    counter = 0
    for n, prev in zip(sizes, prevalences):
        want_pos = int(round(n * prev))
        want_neg = n - want_pos
        got_pos = got_neg = 0
        records = []
        attempts = 0
        while got_pos < want_pos or got_neg < want_neg:
            attempts += 1
            if attempts > 500 * n + 10_000:
                raise ConfigError(
                    f"cannot reach prevalence {prev} for a split of {n} patients")
            clinical, radiomic, label = _draw_patient(rng, loadings)
            if label == 1:
                if got_pos >= want_pos:
                    continue
                got_pos += 1
            else:
                if got_neg >= want_neg:
                    continue
                got_neg += 1
            counter += 1
            records.append(PatientRecord(
                patient_id=f"P{counter:05d}", clinical=clinical,
                radiomic=radiomic, label=label))
        splits.append(records)
    return DatasetSplit(train=splits[0], val=splits[1], test=splits[2])

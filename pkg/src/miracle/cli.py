"""Operator command line: data generation, training, evaluation, ablation,
batch prediction and serving.

Every command writes a JSON run manifest next to its primary output with the
resolved configuration, seed and wall-clock, enough to reproduce the run.
Exit codes: 0 ok, 2 usage/input error, 3 training failure, 4
evaluation/compatibility failure.
"""
from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (DEFAULT_PREVALENCES, DEFAULT_SIZES, PatientRecord,
                   generate_synthetic, load_dataset, save_dataset)
from .errors import (CheckpointError, ConfigError, EvaluationError,
                     IngestionError, MiracleError, SchemaError, TrainingError)
from .model import (ABLATION_MODES, MiracleConfig, evaluate_model,
                    stub_remarks_for, train)
from .remarks import Remark, stub_remark, summarize

EXIT_USAGE = 2
EXIT_TRAIN = 3
EXIT_EVAL = 4


def _write_manifest(out_path: str, command: str, config: dict, seed,
                    outputs: list[str], t_start: float):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": seed,
        "outputs": sorted(outputs),
        "wall_clock_s": round(time.time() - t_start, 3),
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_config(config_path: str | None, overrides: dict) -> MiracleConfig:
    """Config file (JSON mirroring MiracleConfig) with flag overrides on top."""
    base = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    base.update({k: v for k, v in overrides.items() if v is not None})
    return MiracleConfig.from_dict(base)


def _parse_triple(text: str, cast, flag: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{flag} needs three comma-separated values")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad {flag}: {exc}") from exc


@click.group()
@click.version_option(__version__)
def main():
    """Multimodal postoperative-risk pipeline."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--sizes", default=",".join(map(str, DEFAULT_SIZES)), show_default=True)
@click.option("--prevalences", default=",".join(map(str, DEFAULT_PREVALENCES)),
              show_default=True)
def synth(out_dir, seed, sizes, prevalences):
    """Generate the synthetic cohort and write it as CSV + schema."""
    t0 = time.time()
    try:
        n_train, n_val, n_test = _parse_triple(sizes, int, "--sizes")
        prev = _parse_triple(prevalences, float, "--prevalences")
        split = generate_synthetic(n_train, n_val, n_test, seed=seed,
                                   prevalences=prev)
    except MiracleError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    save_dataset(split, out_dir)
    outputs = [os.path.join(out_dir, f) for f in
               ("clinical.csv", "radiomics.csv", "labels.csv", "schema.json")]
    _write_manifest(os.path.join(out_dir, "manifest.json"), "synth",
                    {"sizes": [n_train, n_val, n_test], "prevalences": list(prev)},
                    seed, outputs, t0)
    click.echo(f"wrote {len(split.all_records())} patients to {out_dir}")


@main.command(name="train")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "ckpt_path", required=True, type=click.Path())
@click.option("--ablation", type=click.Choice(ABLATION_MODES), default=None)
@click.option("--stub-llm", is_flag=True, default=False,
              help="Use deterministic stub remarks instead of a live endpoint.")
@click.option("--seed", default=None, type=int)
@click.option("--max-epochs", default=None, type=int)
def train_cmd(data_dir, config_path, ckpt_path, ablation, stub_llm, seed,
              max_epochs):
    """Train a model and write checkpoint + history CSV + manifest."""
    t0 = time.time()
    try:
        split, schema = load_dataset(data_dir)
        config = _load_config(config_path, {
            "ablation": ablation, "seed": seed, "max_epochs": max_epochs})
    except (OSError, MiracleError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    remarks = None
    if config.ablation == "full":
        # Stub remarks are the supported offline path; a live endpoint is
        # selected through the environment-configured completion client.
        remarks = stub_remarks_for(split.all_records(), schema)
        if not stub_llm and os.environ.get("MIRACLE_LLM_ENDPOINT"):
            click.echo("note: live remark generation not used for bulk "
                       "training; remarks come from the stub path", err=True)
    try:
        model, history = train(split, remarks, config, log=click.echo)
    except TrainingError as exc:
        click.echo(f"training failed: {exc}", err=True)
        sys.exit(EXIT_TRAIN)

    save_checkpoint(ckpt_path, Checkpoint.from_model(model, history))
    hist_path = ckpt_path + ".history.csv"
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_auc\n")
        for row in history.rows:
            fh.write(f"{row['epoch']},{row['train_loss']!r},{row['val_auc']!r}\n")
    _write_manifest(ckpt_path + ".manifest.json", "train", config.to_dict(),
                    config.seed, [ckpt_path, hist_path], t0)
    best = history.best()
    click.echo(f"best epoch {best['epoch']} val_auc {best['val_auc']:.4f}")


@main.command(name="eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--split", "which", default="test", show_default=True,
              type=click.Choice(["train", "val", "test"]))
@click.option("--out", "report_path", required=True, type=click.Path())
def eval_cmd(ckpt_path, data_dir, which, report_path):
    """Evaluate a checkpoint on one split; writes report JSON + roc.csv."""
    t0 = time.time()
    try:
        split, _ = load_dataset(data_dir)
    except (OSError, MiracleError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        model = load_checkpoint(ckpt_path).build_model()
        records = getattr(split, which)
        report = evaluate_model(model, records)
    except (OSError, CheckpointError, SchemaError, EvaluationError) as exc:
        click.echo(f"evaluation failed: {exc}", err=True)
        sys.exit(EXIT_EVAL)
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    roc_path = os.path.join(os.path.dirname(os.path.abspath(report_path)), "roc.csv")
    with open(roc_path, "w", encoding="utf-8") as fh:
        fh.write(report.roc.to_csv())
    _write_manifest(report_path + ".manifest.json", "eval",
                    {"ckpt": ckpt_path, "split": which},
                    model.config.seed, [report_path, roc_path], t0)
    click.echo(json.dumps(report.to_dict()["tpr_at_fpr"]))
    click.echo(f"auc {report.auc:.4f} on {which} ({len(records)} patients)")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--patient", "patient_path", required=True, type=click.Path())
@click.option("--remark", "remark_path", type=click.Path(), default=None,
              help="Text file overriding remark generation (offline intervention).")
def predict(ckpt_path, patient_path, remark_path):
    """Score one patient JSON file and print the prediction as JSON."""
    try:
        with open(patient_path, encoding="utf-8") as fh:
            payload = json.load(fh)
        record = PatientRecord(
            patient_id=str(payload["patient_id"]),
            clinical=payload["clinical"],
            radiomic=np.asarray(payload.get("radiomic", np.zeros(113)),
                                dtype=np.float64),
            label=int(payload.get("label", 0)))
    except (OSError, json.JSONDecodeError, KeyError, ValueError,
            SchemaError) as exc:
        click.echo(f"error: bad patient file: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        model = load_checkpoint(ckpt_path).build_model()
    except (OSError, CheckpointError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_EVAL)
    remark = None
    if model.config.ablation == "full":
        summary = summarize(record.clinical, model.codec.schema)
        if remark_path:
            with open(remark_path, encoding="utf-8") as fh:
                remark = Remark(text=fh.read().strip(), origin="clinician_edited")
        else:
            remark = stub_remark(summary, record.clinical)
    result = model.predict(record, remark)
    click.echo(json.dumps(result.to_dict(), indent=2))


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--stub-llm", is_flag=True, default=False)
@click.option("--demo-data", "demo_dir", type=click.Path(), default=None)
@click.option("--audit-log", "audit_path", type=click.Path(), default=None)
def serve(ckpt_path, port, host, stub_llm, demo_dir, audit_path):
    """Launch the HTTP inference service."""
    import uvicorn

    from .service import build_state, create_app
    try:
        state = build_state(checkpoint_path=ckpt_path, demo_data_dir=demo_dir,
                            stub_llm=stub_llm, audit_path=audit_path)
    except (OSError, MiracleError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    uvicorn.run(create_app(state), host=host, port=port)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--modes", default="clinical_only,clinical_radiomic,full",
              show_default=True)
@click.option("--out", "report_path", required=True, type=click.Path())
@click.option("--seed", default=None, type=int)
@click.option("--max-epochs", default=None, type=int)
def ablate(data_dir, config_path, modes, report_path, seed, max_epochs):
    """Train one model per ablation mode and write a combined report."""
    from .model import ablate as run_ablation
    t0 = time.time()
    try:
        split, schema = load_dataset(data_dir)
        config = _load_config(config_path,
                              {"seed": seed, "max_epochs": max_epochs})
        mode_list = [m.strip() for m in modes.split(",") if m.strip()]
    except (OSError, MiracleError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    remarks = stub_remarks_for(split.all_records(), schema)
    try:
        reports = run_ablation(split, config, mode_list, remarks, log=click.echo)
    except TrainingError as exc:
        click.echo(f"training failed: {exc}", err=True)
        sys.exit(EXIT_TRAIN)
    combined = {mode: rep.to_dict() for mode, rep in reports.items()}
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(combined, fh, indent=2)
    _write_manifest(report_path + ".manifest.json", "ablate",
                    {"modes": mode_list, **config.to_dict()},
                    config.seed, [report_path], t0)
    for mode, rep in reports.items():
        click.echo(f"{mode}: test auc {rep.auc:.4f}")


if __name__ == "__main__":
    main()

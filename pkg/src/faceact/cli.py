"""Operator CLI: ingest -> split -> teach -> encode -> predict -> evaluate -> report.

Exit codes: 0 success, 1 validation/configuration failure, 2 service
failure, 3 internal error. Every command is idempotent given identical
inputs and seed, and no command that fails validation writes partial
output files.
"""

from __future__ import annotations

import json
import os
import sys
import traceback

import click
import numpy as np

from . import __version__
from .codec import encode_target
from .dataset import SPLIT_NAMES, SplitRecord, load_manifest, read_records
from .dataset import split_records, subsample, write_records
from .errors import ConfigError, FaceactError, ServiceError, ValidationError
from .frames import ActionValueSet
from .metrics import (
    cross_comparison,
    error_summary,
    mmd as mmd_metric,
    paired_ttest,
    per_coefficient_report,
    per_sample_mse,
    r_precision_batched,
)
from .predictor import (
    INFERENCE_PROMPT,
    predict,
    read_predictions,
    stub_neutral,
    stub_noisy_oracle,
    write_predictions,
)
from .reports import (
    ComparisonRow,
    render_comparison_table,
    render_error_summary_table,
    render_per_coefficient_table,
    render_ttest_table,
    write_report_json,
    write_report_text,
)
from .retrieval import (
    ContrastiveRetrievalEvaluator,
    load_checkpoint,
    read_embeddings,
)
from .service import HttpCompletionClient, HttpPredictorClient, RetryPolicy
from .teacher import (
    TeacherCache,
    TeacherResult,
    cache_key,
    generate_description,
    rule_based_description,
)
from .util import write_jsonl


def _meta(ctx_obj: dict, **extra) -> dict:
    doc = {"tool": "faceact", "version": __version__, "seed": ctx_obj.get("seed", 0)}
    doc.update(extra)
    return doc


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with default option values per command.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Upper bound on concurrent service requests.")
@click.pass_context
def cli(ctx, config_path, seed, jobs):
    """Facial action coefficient pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["jobs"] = jobs
    if config_path:
        with open(config_path) as fh:
            defaults = json.load(fh)
        if not isinstance(defaults, dict):
            raise ConfigError(f"{config_path}: config must be a JSON object")
        ctx.default_map = defaults


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fps", type=float, default=2.0, show_default=True,
              help="Subsampling rate applied after calibration.")
@click.pass_context
def ingest(ctx, manifest, out_path, fps):
    """Load sessions, calibrate against their neutral, subsample, store."""
    sessions = load_manifest(manifest)
    records = []
    for session in sessions:
        for image_ref, frame in subsample(session, fps):
            records.append(
                SplitRecord(
                    image_ref=image_ref,
                    frame=frame,
                    subject_id=session.subject_id,
                    sequence_id=session.sequence_id,
                    emotion=session.emotion,
                )
            )
    write_records(out_path, records, _meta(ctx.obj, command="ingest", fps=fps))
    click.echo(f"ingested {len(records)} pairs from {len(sessions)} sessions -> {out_path}")


@cli.command()
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--assignment", "assignment_path", required=True, type=click.Path(exists=True),
              help='JSON mapping subject_id -> "train" | "val" | "test".')
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
def split(ctx, store, assignment_path, out_dir):
    """Form the subject-disjoint train/val/test split."""
    with open(assignment_path) as fh:
        assignment = json.load(fh)
    records = read_records(store)
    result = split_records(records, assignment)
    os.makedirs(out_dir, exist_ok=True)
    for name in SPLIT_NAMES:
        part = result.part(name)
        write_records(
            os.path.join(out_dir, f"{name}.jsonl"),
            part,
            _meta(ctx.obj, command="split", part=name, assignment=assignment),
        )
        click.echo(f"{name}: {len(part)} pairs, subjects {sorted(result.subjects(name))}")


@cli.command()
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--cache", "cache_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["rule", "service"]), default="rule",
              show_default=True)
@click.option("--endpoint", default=None, help="Completion endpoint (service mode).")
@click.option("--model", default=None, help="Model identifier (service mode).")
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--max-tokens", type=int, default=1024, show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@click.pass_context
def teach(ctx, split_path, cache_path, mode, endpoint, model, temperature, max_tokens, retries):
    """Generate semantic supervision for every frame, resuming from the cache."""
    records = read_records(split_path)
    cache = TeacherCache(cache_path)
    client = None
    if mode == "service":
        if not endpoint or not model:
            raise ConfigError("service mode requires --endpoint and --model")
        client = HttpCompletionClient(
            endpoint,
            model,
            temperature=temperature,
            max_tokens=max_tokens,
            policy=RetryPolicy(retries=retries),
            max_in_flight=ctx.obj.get("jobs", 1),
        )
    hits = misses = 0
    for record in records:
        values = ActionValueSet.from_frame(record.frame)
        key = cache_key(values)
        if cache.get(key) is not None:
            hits += 1
            continue
        misses += 1
        if mode == "rule":
            cache.put(key, TeacherResult(rule_based_description(values), "rule_based"))
        else:
            generate_description(values, client, cache=cache, retries=retries)
    click.echo(f"teach: {hits} cached, {misses} generated -> {cache_path}")


@cli.command()
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--cache", "cache_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def encode(ctx, split_path, cache_path, out_path):
    """Assemble training targets from cached descriptions and coefficients."""
    records = read_records(split_path)
    cache = TeacherCache(cache_path)
    docs = []
    fallbacks = 0
    for record in records:
        values = ActionValueSet.from_frame(record.frame)
        hit = cache.get(cache_key(values))
        if hit is None:
            description = rule_based_description(values)
            fallbacks += 1
        else:
            description = hit.description
        target = encode_target(description, values)
        docs.append({"image_ref": record.image_ref, "target": target.raw_text})
    write_jsonl(out_path, docs, _meta(ctx.obj, command="encode", fallbacks=fallbacks))
    click.echo(f"encoded {len(docs)} targets ({fallbacks} rule fallbacks) -> {out_path}")


@cli.command("predict")
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stub", type=click.Choice(["neutral", "noisy"]), default=None,
              help="Offline predictor stub instead of a remote endpoint.")
@click.option("--sigma", type=float, default=0.05, show_default=True,
              help="Noise level for the noisy stub.")
@click.option("--endpoint", default=None, help="Remote predictor endpoint.")
@click.option("--mode", type=click.Choice(["strict", "lenient"]), default="lenient",
              show_default=True)
@click.pass_context
def predict_cmd(ctx, split_path, out_path, stub, sigma, endpoint, mode):
    """Run a predictor over every image reference in a split."""
    records = read_records(split_path)
    seed = ctx.obj.get("seed", 0)
    if stub == "neutral":
        client = stub_neutral()
    elif stub == "noisy":
        gt = {r.image_ref: ActionValueSet.from_frame(r.frame) for r in records}
        client = stub_noisy_oracle(gt, sigma, seed)
    elif endpoint:
        client = HttpPredictorClient(endpoint, max_in_flight=ctx.obj.get("jobs", 1))
    else:
        raise ConfigError("choose --stub or --endpoint")
    results = [predict(r.image_ref, client, INFERENCE_PROMPT, mode=mode) for r in records]
    write_predictions(
        out_path,
        results,
        _meta(ctx.obj, command="predict", stub=stub, sigma=sigma, mode=mode),
    )
    parsed = sum(1 for r in results if r.values is not None)
    click.echo(f"predicted {len(results)} images ({parsed} parsed) -> {out_path}")


@cli.command("train-eval")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--val", "val_path", required=True, type=click.Path(exists=True))
@click.option("--train-embeddings", required=True, type=click.Path(exists=True))
@click.option("--val-embeddings", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--hidden-dim", type=int, default=256, show_default=True)
@click.option("--output-dim", type=int, default=256, show_default=True)
@click.option("--epochs", type=int, default=1000, show_default=True)
@click.option("--patience", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--weight-decay", type=float, default=1e-4, show_default=True)
@click.option("--temperature", type=float, default=0.07, show_default=True)
@click.option("--train-seed", type=int, default=42, show_default=True,
              help="Seed for the evaluator training run.")
def train_eval(train_path, val_path, train_embeddings, val_embeddings, out_path,
               hidden_dim, output_dim, epochs, patience, batch_size, lr,
               weight_decay, temperature, train_seed):
    """Train the retrieval evaluator on matched (embedding, motion) pairs."""

    def _aligned(split_file, emb_file):
        records = read_records(split_file)
        embeddings = read_embeddings(emb_file)
        missing = [r.image_ref for r in records if r.image_ref not in embeddings]
        if missing:
            raise ConfigError(f"{emb_file}: no embedding for {missing[0]}")
        X = np.array([embeddings[r.image_ref] for r in records])
        y = np.array([r.frame.values for r in records])
        return X, y

    X_train, y_train = _aligned(train_path, train_embeddings)
    X_val, y_val = _aligned(val_path, val_embeddings)
    evaluator = ContrastiveRetrievalEvaluator(
        hidden_dim=hidden_dim,
        output_dim=output_dim,
        temperature=temperature,
        learning_rate=lr,
        weight_decay=weight_decay,
        max_epochs=epochs,
        patience=patience,
        batch_size=batch_size,
        seed=train_seed,
    )
    evaluator.fit(X_train, y_train, X_val=X_val, y_val=y_val)
    evaluator.save(out_path)
    click.echo(
        f"trained {len(evaluator.history_)} epochs; best epoch {evaluator.best_epoch_} "
        f"val R-P@1 {evaluator.best_val_rp1_:.4f} -> {out_path}"
    )


@cli.command()
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--checkpoint", default=None, type=click.Path(exists=True),
              help="Evaluator checkpoint enabling retrieval metrics.")
@click.option("--image-embeddings", default=None, type=click.Path(exists=True),
              help="Description embedding file for the image side.")
@click.option("--threshold", type=float, default=0.1, show_default=True,
              help="Cross-comparison detection threshold.")
@click.option("--rp-k", default="1,2,3", show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--method-name", default=None, help="Row label in the report tables.")
@click.pass_context
def evaluate(ctx, pred_path, gt_path, out_dir, checkpoint, image_embeddings,
             threshold, rp_k, batch_size, method_name):
    """Score predictions against ground truth and write the report pair."""
    seed = ctx.obj.get("seed", 0)
    method = method_name or os.path.splitext(os.path.basename(pred_path))[0]
    try:
        ks = tuple(int(k) for k in rp_k.split(","))
    except ValueError:
        raise ConfigError(f"--rp-k must be comma-separated integers, got {rp_k!r}") from None
    gt_records = read_records(gt_path)
    predictions = {r.image_ref: r for r in read_predictions(pred_path)}

    refs, pred_rows, gt_rows = [], [], []
    missing = unparsed = repaired = repair_count = 0
    for record in gt_records:
        pred = predictions.get(record.image_ref)
        if pred is None:
            missing += 1
            continue
        if pred.values is None:
            unparsed += 1
            continue
        if pred.repairs:
            repaired += 1
            repair_count += len(pred.repairs)
        refs.append(record.image_ref)
        pred_rows.append(pred.values.values_array())
        gt_rows.append(record.frame.values)
    if not refs:
        raise ValidationError("no evaluable (prediction, ground truth) pairs")
    pred_mat = np.array(pred_rows)
    gt_mat = np.array(gt_rows)

    sample_mse = per_sample_mse(pred_mat, gt_mat)
    summary = error_summary(sample_mse)
    cross = cross_comparison(pred_mat, gt_mat, threshold=threshold)
    coefficient_rows = per_coefficient_report(pred_mat, gt_mat)

    retrieval_doc = None
    retrieval_text = "unavailable (no evaluator checkpoint / image embeddings)\n"
    rp = {}
    mmd_value = None
    if bool(checkpoint) != bool(image_embeddings):
        raise ConfigError("retrieval metrics need both --checkpoint and --image-embeddings")
    if checkpoint and image_embeddings:
        evaluator = load_checkpoint(checkpoint)
        embeddings = read_embeddings(image_embeddings)
        missing_emb = [ref for ref in refs if ref not in embeddings]
        if missing_emb:
            raise ConfigError(f"{image_embeddings}: no embedding for {missing_emb[0]}")
        img = evaluator.embed_image(np.array([embeddings[ref] for ref in refs]))
        mot = evaluator.embed_motion(pred_mat)
        rp = r_precision_batched(img, mot, ks=ks, batch_size=batch_size, seed=seed)
        mmd_value = mmd_metric(img, mot)
        retrieval_doc = {
            "r_precision": {str(k): v for k, v in rp.items()},
            "mmd": mmd_value,
            "checkpoint": checkpoint,
        }
        retrieval_text = (
            "  ".join(f"top-{k}: {100.0 * v:.2f}%" for k, v in sorted(rp.items()))
            + f"  MMD: {mmd_value:.4f}\n"
        )

    config = {
        "command": "evaluate",
        "predictions": pred_path,
        "gt": gt_path,
        "checkpoint": checkpoint,
        "image_embeddings": image_embeddings,
        "threshold": threshold,
        "rp_k": list(ks),
        "batch_size": batch_size,
        "seed": seed,
        "method": method,
        "version": __version__,
    }
    counts = {
        "evaluated": len(refs),
        "missing_predictions": missing,
        "unparsed_predictions": unparsed,
        "repaired_samples": repaired,
        "repair_count": repair_count,
    }
    doc = {
        "config": config,
        "counts": counts,
        "metrics": {
            "mse": float(np.mean(sample_mse)),
            "error_summary": summary.__dict__,
            "cross_comparison": {
                "pearson": cross.pearson,
                "spearman": cross.spearman,
                "accuracy": cross.accuracy,
                "msd": cross.msd,
                "deviation": cross.deviation,
                "threshold": cross.threshold,
            },
            "retrieval": retrieval_doc,
        },
        "per_sample_mse": [[ref, float(v)] for ref, v in zip(refs, sample_mse)],
        "per_coefficient": [
            {
                "name": r.name,
                "mse": r.mse,
                "pearson": r.pearson,
                "spearman": r.spearman,
                "deviation": r.deviation,
            }
            for r in coefficient_rows
        ],
    }
    os.makedirs(out_dir, exist_ok=True)
    write_report_json(os.path.join(out_dir, "report.json"), doc)

    row = ComparisonRow(
        method=method,
        mse=float(np.mean(sample_mse)),
        rp1=rp.get(1),
        rp2=rp.get(2),
        rp3=rp.get(3),
        mmd=mmd_value,
        pearson=cross.pearson,
        spearman=cross.spearman,
        accuracy=cross.accuracy,
        msd=cross.msd,
        deviation=cross.deviation,
    )
    sections = [
        ("Comparison", render_comparison_table([row])),
        ("Error summary", render_error_summary_table([(method, summary)])),
        ("Retrieval", retrieval_text),
        ("Counts", json.dumps(counts, sort_keys=True) + "\n"),
        ("Per-coefficient", render_per_coefficient_table(coefficient_rows)),
    ]
    write_report_text(os.path.join(out_dir, "report.txt"), "faceact evaluation", config, sections)
    click.echo(
        f"evaluated {len(refs)} samples (MSE {float(np.mean(sample_mse)):.6f}) -> {out_dir}"
    )


@cli.command("report")
@click.option("--inputs", "input_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="report.json files to combine.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def report_cmd(ctx, input_paths, out_path):
    """Combine evaluation reports into one comparison; pairs get a t-test."""
    docs = []
    for path in input_paths:
        with open(path) as fh:
            docs.append(json.load(fh))
    rows = []
    for doc in docs:
        metrics = doc["metrics"]
        cross = metrics["cross_comparison"]
        retrieval = metrics.get("retrieval") or {}
        rp = {int(k): v for k, v in (retrieval.get("r_precision") or {}).items()}
        rows.append(
            ComparisonRow(
                method=doc["config"]["method"],
                mse=metrics["mse"],
                rp1=rp.get(1),
                rp2=rp.get(2),
                rp3=rp.get(3),
                mmd=retrieval.get("mmd"),
                pearson=cross["pearson"],
                spearman=cross["spearman"],
                accuracy=cross["accuracy"],
                msd=cross["msd"],
                deviation=cross["deviation"],
            )
        )
    sections = [("Comparison", render_comparison_table(rows))]
    if len(docs) == 2:
        a = dict((ref, v) for ref, v in docs[0]["per_sample_mse"])
        b = dict((ref, v) for ref, v in docs[1]["per_sample_mse"])
        common = [ref for ref, _ in docs[0]["per_sample_mse"] if ref in b]
        if len(common) >= 2:
            result = paired_ttest([a[r] for r in common], [b[r] for r in common])
            label = f"{rows[0].method} vs {rows[1].method}"
            sections.append(("Paired t-test", render_ttest_table([(label, result)])))
    config = {
        "command": "report",
        "inputs": list(input_paths),
        "seed": ctx.obj.get("seed", 0),
        "version": __version__,
    }
    write_report_text(out_path, "faceact comparison report", config, sections)
    click.echo(f"report over {len(docs)} evaluations -> {out_path}")


def main(argv=None) -> int:
    """Console entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        return 1
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except ServiceError as exc:
        click.echo(f"service error: {exc}", err=True)
        return 2
    except FaceactError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: dataset generation, BPE training, model
training/evaluation, the sigma ablation sweep, and the confidence probe.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from .bpe import BpeVocab, bpe_train
from .config import ExperimentConfig
from .core import NumericError
from .errors import DataError, UsageError
from .model import NumGPT
from .tasks import (
    gen_gnc,
    gen_mme,
    gen_mwpas,
    gen_mwpas_gen_subset,
    load_objects,
    load_templates,
    read_jsonl,
    write_jsonl,
)
from .train import confidence_probe, eval_classification, eval_generation, encode_samples, lm_text, run_experiment


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UsageError as e:
            click.echo(f"usage error: {e}", err=True)
            sys.exit(1)
        except DataError as e:
            click.echo(f"data error: {e}", err=True)
            sys.exit(2)
        except NumericError as e:
            click.echo(f"numeric abort: {e}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
def main():
    """Numeral-aware GPT experiments."""


@main.command("gen-data")
@click.option("--task", type=click.Choice(["mme", "gnc", "mwpas", "mwpas-gen"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--objects", "objects_file", type=click.Path(exists=True), default=None,
              help="Override the built-in MME object list.")
@click.option("--templates", "templates_file", type=click.Path(exists=True), default=None,
              help="Override the built-in template list.")
@click.option("--per-object", type=int, default=1000, show_default=True,
              help="MME samples per object (half correct, half incorrect).")
@click.option("--per-template", type=int, default=2000, show_default=True,
              help="GNC/MWPAS samples per template (half positive, half negative).")
@click.option("--train-size", type=int, default=5512, show_default=True,
              help="mwpas-gen train split size.")
@click.option("--test-size", type=int, default=1338, show_default=True,
              help="mwpas-gen test split size.")
@click.option("--force", is_flag=True, help="Overwrite a non-empty output directory.")
@_exit_codes
def cmd_gen_data(task, seed, out_dir, objects_file, templates_file, per_object, per_template,
                 train_size, test_size, force):
    """Generate a synthetic dataset (train.jsonl / test.jsonl + manifest)."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)

    params: dict = {"task": task, "seed": seed}
    if task == "mme":
        objects = load_objects(objects_file)
        templates = load_templates("MME", templates_file)
        train, test = gen_mme(objects, templates, per_object=per_object, seed=seed)
        params["per_object"] = per_object
    elif task == "gnc":
        templates = load_templates("GNC", templates_file)
        train, test = gen_gnc(templates, per_template=per_template, seed=seed)
        params["per_template"] = per_template
    elif task == "mwpas":
        templates = load_templates("MWPAS", templates_file)
        train, test = gen_mwpas(templates, per_template=per_template, seed=seed)
        params["per_template"] = per_template
    else:
        templates = load_templates("MWPAS_GEN", templates_file)
        train, test = gen_mwpas_gen_subset(templates, train_size=train_size,
                                           test_size=test_size, seed=seed)
        params.update(train_size=train_size, test_size=test_size)

    write_jsonl(train, out / "train.jsonl")
    write_jsonl(test, out / "test.jsonl")
    blob = json.dumps(params, sort_keys=True).encode()
    manifest = {
        "command": "gen-data",
        "params": params,
        "config_hash": hashlib.sha256(blob).hexdigest()[:12],
        "counts": {"train": len(train), "test": len(test)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(train)} train / {len(test)} test samples to {out}")


@main.command("bpe-train")
@click.option("--corpus", "corpus_files", type=click.Path(exists=True), multiple=True, required=True,
              help="Dataset .jsonl files or plain text files (repeatable).")
@click.option("--vocab-size", type=int, required=True)
@click.option("--out", "out_file", type=click.Path(), required=True)
@_exit_codes
def cmd_bpe_train(corpus_files, vocab_size, out_file):
    """Train a BPE vocabulary and write the vocab file."""
    texts: list[str] = []
    for path in corpus_files:
        if str(path).endswith(".jsonl"):
            texts.extend(lm_text(s) for s in read_jsonl(path))
        else:
            texts.append(Path(path).read_text(encoding="utf-8"))
    vocab = bpe_train(texts, vocab_size)
    Path(out_file).parent.mkdir(parents=True, exist_ok=True)
    vocab.save(out_file)
    click.echo(f"trained {len(vocab)} tokens ({len(vocab.merges)} merges) -> {out_file}")


@main.command("train")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--force", is_flag=True, help="Retrain even if this config already ran.")
@_exit_codes
def cmd_train(config_file, force):
    """Train per config; writes checkpoint.bin, loss.csv, metrics.json, manifest.json."""
    cfg = ExperimentConfig.load(config_file)
    scores = run_experiment(cfg, force=force, quiet=True)
    click.echo(json.dumps(scores, sort_keys=True))


@main.command("eval")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "ckpt_file", type=click.Path(exists=True), required=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
@_exit_codes
def cmd_eval(config_file, ckpt_file, out_file):
    """Evaluate a checkpoint on the config's test split; writes a metric report."""
    cfg = ExperimentConfig.load(config_file)
    model = NumGPT.load(ckpt_file)
    if model.cfg != cfg.model:
        raise DataError(
            "checkpoint/config mismatch: the checkpoint was built with a different model config"
        )
    vocab = BpeVocab.load(cfg.data.vocab_path)
    test_samples = read_jsonl(cfg.data.test_path)
    if cfg.train.objective == "classification":
        seqs, labels = encode_samples(test_samples, vocab, cfg.model.mode,
                                      "classification", cfg.model.max_seq_len)
        scores = eval_classification(model, seqs, labels, cfg.train.batch_size)
    else:
        scores = eval_generation(model, test_samples, vocab)
    out = json.dumps(scores, indent=2, sort_keys=True)
    if out_file:
        Path(out_file).write_text(out + "\n")
    click.echo(out)


@main.command("probe")
@click.option("--checkpoint", "ckpt_file", type=click.Path(exists=True), required=True)
@click.option("--vocab", "vocab_file", type=click.Path(exists=True), required=True)
@click.option("--template", required=True, help="Text with one [NUM] slot.")
@click.option("--min", "vmin", type=float, required=True)
@click.option("--max", "vmax", type=float, required=True)
@click.option("--steps", type=int, required=True)
@click.option("--objective", type=click.Choice(["classification", "lm"]), default="classification",
              show_default=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
@_exit_codes
def cmd_probe(ckpt_file, vocab_file, template, vmin, vmax, steps, objective, out_file):
    """Slide a value through the template and emit (value, confidence) CSV."""
    model = NumGPT.load(ckpt_file)
    vocab = BpeVocab.load(vocab_file)
    values = np.linspace(vmin, vmax, steps).tolist()
    rows = confidence_probe(model, vocab, template, values, objective=objective)
    lines = ["value,confidence"] + [f"{v},{c}" for v, c in rows]
    text = "\n".join(lines) + "\n"
    if out_file:
        Path(out_file).write_text(text)
        click.echo(f"wrote {len(rows)} rows to {out_file}")
    else:
        click.echo(text, nl=False)


@main.command("sweep-sigma")
@click.option("--values", default="0.1,0.5,1,10,100", show_default=True,
              help="Comma-separated kernel widths.")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--seeds", default="0,1", show_default=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
@_exit_codes
def cmd_sweep_sigma(values, config_file, seeds, out_file):
    """Train one model per sigma value (averaged over seeds); emit accuracy CSV."""
    base = ExperimentConfig.load(config_file)
    sigmas = [float(v) for v in values.split(",") if v]
    for s in sigmas:
        if s <= 0:
            raise UsageError(f"sigma must be positive, got {s}")
    seed_list = [int(s) for s in seeds.split(",") if s]
    rows = []
    for sigma in sigmas:
        accs = []
        for seed in seed_list:
            cfg = sweep_config(base, sigma, seed)
            scores = run_experiment(cfg, quiet=True)
            accs.append(scores["accuracy"])
        rows.append((sigma, float(np.mean(accs))))
        click.echo(f"sigma={sigma}: accuracy={rows[-1][1]:.4f}")
    if out_file:
        with open(out_file, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["sigma", "accuracy"])
            w.writerows(rows)
        click.echo(f"wrote {out_file}")


def sweep_config(base: ExperimentConfig, sigma: float, seed: int) -> ExperimentConfig:
    """One sweep point: same experiment with a different kernel width and seed."""
    from dataclasses import replace

    from .embedding import NumeralEmbedConfig

    model = replace(base.model, numeral=NumeralEmbedConfig(d=base.model.numeral.d, sigma=sigma))
    train = replace(base.train, seed=seed)
    out_dir = str(Path(base.out_dir) / f"sigma{sigma:g}_seed{seed}")
    return ExperimentConfig(model=model, train=train, data=base.data, out_dir=out_dir)


if __name__ == "__main__":
    main()

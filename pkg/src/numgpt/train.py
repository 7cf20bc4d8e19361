"""Training loops, evaluation, probing, and experiment orchestration.

``run_experiment`` is the single entry point the CLI and the acceptance
suite share: it encodes the datasets, trains (language modeling or
classification), evaluates, and writes checkpoint + loss curve + metrics
+ manifest under the experiment's output directory. A finished directory
whose manifest records the same config hash is reused instead of retrained.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import core, metrics
from .bpe import BOS_ID, CLS_ID, EOS_ID, BpeVocab
from .config import ExperimentConfig, TrainConfig
from .encoding import EncodedSequence, decode, encode
from .errors import DataError, UsageError
from .model import NumGPT, pack_sequences
from .numbers import parse_numerals, render
from .optim import AdamW
from .tasks import TaskSample, read_jsonl


def lm_text(sample: TaskSample) -> str:
    """Full training text for language modeling (generation contexts get
    their expected answer appended)."""
    if sample.task == "MWPAS_GEN":
        return f"{sample.text} {render(sample.meta['expected'])}"
    return sample.text


def encode_samples(
    samples: list[TaskSample],
    vocab: BpeVocab,
    mode: str,
    objective: str,
    max_seq_len: int,
) -> tuple[list[EncodedSequence], np.ndarray]:
    """Encode task samples for the given model mode and objective.

    Classification sequences end with <CLS>; language-modeling sequences
    are wrapped in <BOS> ... <EOS>.
    """
    aware = mode == "numgpt"
    seqs, labels = [], []
    for s in samples:
        if objective == "classification":
            seq = encode(s.text, vocab, numeral_aware=aware)
            seq.token_ids.append(CLS_ID)
            seq.is_numeral.append(False)
        else:
            seq = encode(lm_text(s), vocab, numeral_aware=aware)
            seq.token_ids.insert(0, BOS_ID)
            seq.is_numeral.insert(0, False)
            seq.numerals = {p + 1: nv for p, nv in seq.numerals.items()}
            seq.token_ids.append(EOS_ID)
            seq.is_numeral.append(False)
        if len(seq) > max_seq_len:
            raise DataError(
                f"encoded sample has {len(seq)} tokens, exceeding max_seq_len {max_seq_len}: "
                f"{s.text[:60]!r}"
            )
        seqs.append(seq)
        labels.append(s.label)
    return seqs, np.asarray(labels, dtype=np.int64)


@dataclass
class TrainResult:
    epoch_losses: list[float]
    runtime_s: float


def train(
    model: NumGPT,
    seqs: list[EncodedSequence],
    labels: np.ndarray,
    cfg: TrainConfig,
    loss_csv: str | Path | None = None,
) -> TrainResult:
    """Epoch-shuffled minibatch training; deterministic for a given seed."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    opt = AdamW(
        model.params,
        lr=cfg.learning_rate,
        betas=cfg.betas,
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    n = len(seqs)
    lengths = np.array([len(s) for s in seqs])
    start = time.perf_counter()
    epoch_losses = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        # sort by length inside small windows: less padding, still shuffled
        window = cfg.batch_size * 4
        order = np.concatenate(
            [
                chunk[np.argsort(lengths[chunk], kind="stable")]
                for chunk in np.array_split(order, max(1, n // window))
            ]
        )
        total, seen = 0.0, 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = pack_sequences([seqs[i] for i in idx])
            opt.zero_grad()
            with core.Tape() as tape:
                if cfg.objective == "classification":
                    logits = model.classification_forward(batch)
                    loss = model.classification_loss(logits, labels[idx])
                else:
                    loss = model.numeral_aware_loss(model.forward(batch), batch)
            tape.backward(loss)
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        epoch_losses.append(total / seen)
    result = TrainResult(epoch_losses, time.perf_counter() - start)
    if loss_csv is not None:
        with open(loss_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "loss"])
            for i, v in enumerate(result.epoch_losses):
                w.writerow([i, f"{v:.6f}"])
    return result


def eval_classification(
    model: NumGPT, seqs: list[EncodedSequence], labels: np.ndarray, batch_size: int = 64
) -> dict:
    if len(seqs) == 0:
        raise UsageError("empty evaluation set")
    preds = []
    for lo in range(0, len(seqs), batch_size):
        batch = pack_sequences(seqs[lo : lo + batch_size])
        logits = model.classification_forward(batch)
        preds.extend(np.argmax(logits.data, axis=-1).tolist())
    preds = np.asarray(preds)
    return {
        "accuracy": metrics.accuracy(labels, preds),
        "micro_f1": metrics.f1_micro(labels, preds),
        "macro_f1": metrics.f1_macro(labels, preds, n_classes=model.cfg.n_classes),
    }


def generate_continuation(
    model: NumGPT, prompt: EncodedSequence, max_new: int = 8, vocab_limit: int | None = None
) -> EncodedSequence:
    """Greedy generation of up to max_new items appended after the prompt."""
    seq = EncodedSequence(
        list(prompt.token_ids), list(prompt.is_numeral), dict(prompt.numerals)
    )
    from .bpe import NUM_ID

    for _ in range(max_new):
        if len(seq) >= model.cfg.max_seq_len:
            break
        item = model.generate_next(seq, vocab_limit=vocab_limit)
        if isinstance(item, int):
            if item == EOS_ID:
                break
            seq.token_ids.append(item)
            seq.is_numeral.append(False)
        elif isinstance(item, str):  # overflow / underflow markers
            break
        else:
            seq.numerals[len(seq)] = item
            seq.token_ids.append(NUM_ID)
            seq.is_numeral.append(True)
            break  # a full numeral was emitted; the answer is complete
    return seq


def first_generated_value(
    model: NumGPT, vocab: BpeVocab, prompt: EncodedSequence, max_new: int = 8
) -> float | None:
    """Value of the first whitespace-delimited generated item, or None."""
    n0 = len(prompt)
    seq = generate_continuation(model, prompt, max_new=max_new, vocab_limit=len(vocab))
    cont = EncodedSequence(
        seq.token_ids[n0:],
        seq.is_numeral[n0:],
        {p - n0: nv for p, nv in seq.numerals.items() if p >= n0},
    )
    text = decode(cont, vocab).strip()
    if not text:
        return None
    first = text.split()[0]
    parsed = parse_numerals(first)
    if parsed and parsed[0][0][0] == 0:
        return parsed[0][1].value
    return None


def eval_generation(
    model: NumGPT, test_samples: list[TaskSample], vocab: BpeVocab, max_new: int = 8
) -> dict:
    aware = model.cfg.mode == "numgpt"
    y_true, y_pred = [], []
    for s in test_samples:
        if s.meta.get("expected", 0) <= 0:
            raise UsageError("generation eval requires positive expected answers")
        seq = encode(s.text, vocab, numeral_aware=aware)
        seq.token_ids.insert(0, BOS_ID)
        seq.is_numeral.insert(0, False)
        seq.numerals = {p + 1: nv for p, nv in seq.numerals.items()}
        y_true.append(float(s.meta["expected"]))
        y_pred.append(first_generated_value(model, vocab, seq, max_new=max_new))
    return metrics.generation_metrics(y_true, y_pred)


def confidence_probe(
    model: NumGPT,
    vocab: BpeVocab,
    template: str,
    values: list[float],
    objective: str = "classification",
    batch_size: int = 64,
) -> list[tuple[float, float]]:
    """Instantiate the template per value and report model confidence.

    Classification: probability of the "correct" class. Language modeling:
    mean log-likelihood of the instantiated text.
    """
    if template.count("[NUM]") != 1:
        raise UsageError("probe template must contain exactly one [NUM] slot")
    aware = model.cfg.mode == "numgpt"
    seqs = []
    for v in values:
        text = template.replace("[NUM]", render(float(v)))
        if objective == "classification":
            seq = encode(text, vocab, numeral_aware=aware)
            seq.token_ids.append(CLS_ID)
            seq.is_numeral.append(False)
        else:
            seq = encode(text, vocab, numeral_aware=aware)
            seq.token_ids.insert(0, BOS_ID)
            seq.is_numeral.insert(0, False)
            seq.numerals = {p + 1: nv for p, nv in seq.numerals.items()}
        seqs.append(seq)
    out = []
    for lo in range(0, len(seqs), batch_size):
        chunk = seqs[lo : lo + batch_size]
        batch = pack_sequences(chunk)
        if objective == "classification":
            logits = model.classification_forward(batch)
            probs = core.softmax(logits, axis=-1).data[:, 1]
            conf = probs.tolist()
        else:
            outs = model.forward(batch)
            conf = []
            for i in range(len(chunk)):
                single = pack_sequences([chunk[i]])
                nll = model.numeral_aware_loss(model.forward(single), single).item()
                conf.append(-nll)
        for i, c in enumerate(conf):
            out.append((float(values[lo + i]), float(c)))
    return out


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, force: bool = False, quiet: bool = False) -> dict:
    """Train + evaluate one configuration; reuse a finished run if present."""
    out_dir = Path(cfg.out_dir)
    manifest_path = out_dir / "manifest.json"
    metrics_path = out_dir / "metrics.json"
    if not force and manifest_path.exists() and metrics_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("config_hash") == cfg.config_hash():
            return json.loads(metrics_path.read_text())
    out_dir.mkdir(parents=True, exist_ok=True)

    vocab = BpeVocab.load(cfg.data.vocab_path)
    if len(vocab) > cfg.model.vocab_size:
        raise UsageError(
            f"model vocab_size {cfg.model.vocab_size} is smaller than the BPE vocab {len(vocab)}"
        )
    train_samples = read_jsonl(cfg.data.train_path)
    test_samples = read_jsonl(cfg.data.test_path)

    model = NumGPT(cfg.model, seed=cfg.train.seed)
    seqs, labels = encode_samples(
        train_samples, vocab, cfg.model.mode, cfg.train.objective, cfg.model.max_seq_len
    )
    result = train(model, seqs, labels, cfg.train, loss_csv=out_dir / "loss.csv")
    model.save(out_dir / "checkpoint.bin")

    if cfg.train.objective == "classification":
        test_seqs, test_labels = encode_samples(
            test_samples, vocab, cfg.model.mode, "classification", cfg.model.max_seq_len
        )
        scores = eval_classification(model, test_seqs, test_labels, cfg.train.batch_size)
    else:
        if cfg.data.task == "mwpas-gen":
            scores = eval_generation(model, test_samples, vocab)
        else:
            test_seqs, _ = encode_samples(
                test_samples, vocab, cfg.model.mode, "lm", cfg.model.max_seq_len
            )
            batch = pack_sequences(test_seqs)
            scores = {"lm_loss": model.numeral_aware_loss(model.forward(batch), batch).item()}
    scores["final_train_loss"] = result.epoch_losses[-1]
    scores["runtime_s"] = result.runtime_s

    metrics_path.write_text(json.dumps(scores, indent=2, sort_keys=True) + "\n")
    manifest_path.write_text(
        json.dumps(
            {
                "config_hash": cfg.config_hash(),
                "config": cfg.to_dict(),
                "seed": cfg.train.seed,
                "counts": {"train": len(train_samples), "test": len(test_samples)},
                "runtime_s": result.runtime_s,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    cfg.save(out_dir / "config.json")
    if not quiet:
        print(f"[{cfg.data.task}/{cfg.model.mode}/seed{cfg.train.seed}] {scores}")
    return scores

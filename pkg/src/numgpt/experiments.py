"""Desk-scale experiment recipes.

Fixed dataset/vocab/model/training settings for the reduced-scale runs
that reproduce the headline comparisons (task accuracy gaps, generation
quality, and the kernel-width sweep). Everything is derived from seeds
and config hashes, so finished runs under the runs root are reused.
"""

from __future__ import annotations

import os
from pathlib import Path

from .bpe import BpeVocab, bpe_train
from .config import DataConfig, ExperimentConfig, TrainConfig
from .embedding import NumeralEmbedConfig
from .model import ModelConfig
from .tasks import gen_gnc, gen_mme, gen_mwpas, gen_mwpas_gen_subset, write_jsonl
from .train import lm_text, run_experiment

SEEDS = (0, 1, 2)
GEN_SEEDS = (0, 1)
SWEEP_SEEDS = (0, 1)
SWEEP_SIGMAS = (0.1, 0.5, 1.0, 100.0)

DATA_SEED = 0
VOCAB_SIZE = 2048

# classification tasks: 8000 train / 2000 test, 20 epochs
CLS_TASKS = {
    "mwpas": dict(per_template=500),
    "mme": dict(per_object=500),
    "gnc": dict(per_template=500),
}
# reduced scale for the kernel-width sweep
SWEEP_DATA = dict(per_object=200)
GEN_SIZES = dict(train_size=1000, test_size=300)


def runs_root() -> Path:
    return Path(os.environ.get("NUMGPT_RUNS", "runs"))


def desk_model(mode: str, sigma: float = 0.5) -> ModelConfig:
    return ModelConfig(
        n_layers=4,
        n_heads=4,
        d_h=128,
        vocab_size=VOCAB_SIZE,
        max_seq_len=128,
        numeral=NumeralEmbedConfig(d=32, sigma=sigma),
        mode=mode,
        n_classes=2,
    )


def desk_train(objective: str, seed: int, epochs: int) -> TrainConfig:
    return TrainConfig(
        objective=objective,
        epochs=epochs,
        batch_size=64,
        learning_rate=1e-3,
        betas=(0.9, 0.999),
        eps=1e-8,
        weight_decay=0.01,
        seed=seed,
    )


def _generate(task: str, out: Path, **overrides) -> None:
    if task == "mwpas":
        train, test = gen_mwpas(seed=DATA_SEED, **overrides)
    elif task == "mme":
        train, test = gen_mme(seed=DATA_SEED, **overrides)
    elif task == "gnc":
        train, test = gen_gnc(seed=DATA_SEED, **overrides)
    elif task == "mwpas-gen":
        train, test = gen_mwpas_gen_subset(seed=DATA_SEED, **overrides)
    else:
        raise ValueError(task)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(train, out / "train.jsonl")
    write_jsonl(test, out / "test.jsonl")


def ensure_dataset(task: str, root: Path | None = None, name: str | None = None, **overrides) -> DataConfig:
    """Generate the dataset and train its vocab once; reuse afterwards."""
    root = root or runs_root()
    data_dir = root / "data" / (name or task)
    train_path = data_dir / "train.jsonl"
    test_path = data_dir / "test.jsonl"
    vocab_path = data_dir / "vocab.txt"
    if not (train_path.exists() and test_path.exists()):
        params = overrides or (CLS_TASKS.get(task) or (GEN_SIZES if task == "mwpas-gen" else {}))
        _generate(task, data_dir, **params)
    if not vocab_path.exists():
        from .tasks import read_jsonl

        texts = [lm_text(s) for s in read_jsonl(train_path)]
        bpe_train(texts, VOCAB_SIZE).save(vocab_path)
    return DataConfig(
        task=task,
        train_path=str(train_path),
        test_path=str(test_path),
        vocab_path=str(vocab_path),
    )


def classification_config(
    task: str, mode: str, seed: int, root: Path | None = None,
    sigma: float = 0.5, epochs: int = 20, data: DataConfig | None = None,
) -> ExperimentConfig:
    root = root or runs_root()
    data = data or ensure_dataset(task, root)
    out = root / task / f"{mode}_sigma{sigma:g}_seed{seed}"
    return ExperimentConfig(
        model=desk_model(mode, sigma=sigma),
        train=desk_train("classification", seed, epochs),
        data=data,
        out_dir=str(out),
    )


def generation_config(mode: str, seed: int, root: Path | None = None, epochs: int = 30) -> ExperimentConfig:
    root = root or runs_root()
    data = ensure_dataset("mwpas-gen", root)
    out = root / "mwpas-gen" / f"{mode}_seed{seed}"
    return ExperimentConfig(
        model=desk_model(mode),
        train=desk_train("lm", seed, epochs),
        data=data,
        out_dir=str(out),
    )


def sweep_config(sigma: float, seed: int, root: Path | None = None, epochs: int = 12) -> ExperimentConfig:
    root = root or runs_root()
    data = ensure_dataset("mme", root, name="mme_sweep", **SWEEP_DATA)
    out = root / "sigma_sweep" / f"sigma{sigma:g}_seed{seed}"
    return ExperimentConfig(
        model=desk_model("numgpt", sigma=sigma),
        train=desk_train("classification", seed, epochs),
        data=data,
        out_dir=str(out),
    )


def all_acceptance_configs(root: Path | None = None) -> list[ExperimentConfig]:
    """Every training run the acceptance suite needs, heaviest first."""
    root = root or runs_root()
    configs = []
    for task in CLS_TASKS:
        for mode in ("numgpt", "baseline_gpt"):
            for seed in SEEDS:
                configs.append(classification_config(task, mode, seed, root))
    for mode in ("numgpt", "baseline_gpt"):
        for seed in GEN_SEEDS:
            configs.append(generation_config(mode, seed, root))
    for sigma in SWEEP_SIGMAS:
        for seed in SWEEP_SEEDS:
            configs.append(sweep_config(sigma, seed, root))
    return configs


def run_all(root: Path | None = None, workers: int = 2) -> None:
    """Train every acceptance experiment, a few processes at a time."""
    import concurrent.futures as cf

    root = root or runs_root()
    configs = all_acceptance_configs(root)
    if workers <= 1:
        for cfg in configs:
            run_experiment(cfg)
        return
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_experiment, cfg) for cfg in configs]
        for f in futures:
            f.result()

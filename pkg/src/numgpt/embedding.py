"""Numeral embeddings: learnable exponent rows + deterministic mantissa kernel.

A numeral embeds as the concatenation of an exponent-table row (d/4 dims)
and a kernel vector (3d/4 dims) whose i-th component is
exp(-(f - q_i)^2 / sigma^2) for fixed prototypes q_i spread uniformly over
[-10, 10]. The kernel part has no learnable state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .numbers import NumeralValue

EXP_MIN = -8
EXP_MAX = 12
# integer exponents -8..12 plus overflow/underflow markers
EXP_VOCAB_SIZE = EXP_MAX - EXP_MIN + 1 + 2
POS_INF_ID = EXP_VOCAB_SIZE - 2
NEG_INF_ID = EXP_VOCAB_SIZE - 1


@dataclass(frozen=True)
class NumeralEmbedConfig:
    d: int = 64
    sigma: float = 0.5

    def __post_init__(self):
        if self.d % 4 != 0:
            raise UsageError(f"numeral embedding dim must be divisible by 4, got {self.d}")
        if self.sigma <= 0:
            raise UsageError(f"sigma must be positive, got {self.sigma}")
        if self.d_f < 2:
            raise UsageError(f"mantissa embedding needs >=2 prototypes, got {self.d_f}")

    @property
    def d_e(self) -> int:
        return self.d // 4

    @property
    def d_f(self) -> int:
        return 3 * self.d // 4


def exponent_id(e: int) -> int:
    """Map an integer exponent to its vocabulary id; out-of-range clamps to ±INF."""
    if e > EXP_MAX:
        return POS_INF_ID
    if e < EXP_MIN:
        return NEG_INF_ID
    return int(e) - EXP_MIN


def prototype_grid(cfg: NumeralEmbedConfig) -> np.ndarray:
    """Fixed prototypes: d_f points uniformly spaced over [-10, 10]."""
    return np.linspace(-10.0, 10.0, cfg.d_f)


def mantissa_embed(f: float, cfg: NumeralEmbedConfig) -> np.ndarray:
    if abs(f) > 10.0:
        raise UsageError(f"mantissa {f} outside [-10, 10]")
    q = prototype_grid(cfg)
    return np.exp(-((f - q) ** 2) / cfg.sigma**2)


def mantissa_embed_batch(f: np.ndarray, cfg: NumeralEmbedConfig, dtype=np.float32) -> np.ndarray:
    """Kernel vectors for an array of mantissas; output shape f.shape + (d_f,)."""
    q = prototype_grid(cfg).astype(dtype)
    diff = np.asarray(f, dtype=dtype)[..., None] - q
    return np.exp(-(diff * diff) / np.asarray(cfg.sigma**2, dtype=dtype))


def init_exponent_table(cfg: NumeralEmbedConfig, rng: np.random.Generator, std: float = 0.02):
    return rng.normal(0.0, std, size=(EXP_VOCAB_SIZE, cfg.d_e))


def numeral_embed(nv: NumeralValue, cfg: NumeralEmbedConfig, table: np.ndarray) -> np.ndarray:
    """Full numeral embedding: [exponent row, mantissa kernel vector]."""
    row = table[exponent_id(nv.exponent)]
    # the mantissa from decompose is always in (-10, 10), even for values
    # whose exponent clamped to ±INF
    return np.concatenate([row, mantissa_embed(nv.mantissa, cfg)])

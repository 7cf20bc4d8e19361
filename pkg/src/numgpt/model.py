"""The numeral-aware GPT network.

Input positions are either textual tokens or numeral slots. In "numgpt"
mode each position fuses a token-side vector and a numeral-side vector
through a linear layer before the transformer stack; in "baseline_gpt"
mode the input is plain token + position embedding and numeral values are
ignored. Four output heads (selector / token / exponent / mantissa) drive
the numeral-aware language-modeling loss and greedy generation; a separate
linear head on the final <CLS> state handles classification fine-tuning.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import core
from .bpe import CLS_ID, PAD_ID
from .core import Tensor
from .embedding import (
    EXP_MIN,
    EXP_VOCAB_SIZE,
    NEG_INF_ID,
    POS_INF_ID,
    NumeralEmbedConfig,
    exponent_id,
    mantissa_embed_batch,
)
from .encoding import EncodedSequence
from .errors import DataError, UsageError
from .numbers import NumeralValue, decompose

MODES = ("numgpt", "baseline_gpt")

# markers emitted when the exponent head predicts overflow/underflow
OVERFLOW = "+INF"
UNDERFLOW = "-INF"

_HALF_LOG_PI = 0.5 * math.log(math.pi)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    n_heads: int = 4
    d_h: int = 128
    vocab_size: int = 2048
    max_seq_len: int = 128
    numeral: NumeralEmbedConfig = field(default_factory=lambda: NumeralEmbedConfig(d=32))
    mode: str = "numgpt"
    n_classes: int = 2

    def __post_init__(self):
        if self.d_h % self.n_heads != 0:
            raise UsageError(f"d_h {self.d_h} not divisible by n_heads {self.n_heads}")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_h": self.d_h,
            "vocab_size": self.vocab_size,
            "max_seq_len": self.max_seq_len,
            "numeral": {"d": self.numeral.d, "sigma": self.numeral.sigma},
            "mode": self.mode,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        num = d.pop("numeral")
        return cls(numeral=NumeralEmbedConfig(d=num["d"], sigma=num["sigma"]), **d)


@dataclass
class Batch:
    """Padded arrays for a list of encoded sequences."""

    token_ids: np.ndarray  # (B, T) int32, <PAD> padded
    is_numeral: np.ndarray  # (B, T) bool
    exp_ids: np.ndarray  # (B, T) int32, 0 where not a numeral
    mantissa: np.ndarray  # (B, T) float32, 0 where not a numeral
    lengths: np.ndarray  # (B,) int32

    @property
    def shape(self) -> tuple[int, int]:
        return self.token_ids.shape


def pack_sequences(seqs: list[EncodedSequence]) -> Batch:
    b = len(seqs)
    t = max(len(s) for s in seqs)
    token_ids = np.full((b, t), PAD_ID, dtype=np.int32)
    is_num = np.zeros((b, t), dtype=bool)
    exp_ids = np.zeros((b, t), dtype=np.int32)
    mant = np.zeros((b, t), dtype=np.float32)
    lengths = np.zeros(b, dtype=np.int32)
    for i, s in enumerate(seqs):
        n = len(s)
        lengths[i] = n
        token_ids[i, :n] = s.token_ids
        is_num[i, :n] = s.is_numeral
        for pos, nv in s.numerals.items():
            exp_ids[i, pos] = exponent_id(nv.exponent)
            mant[i, pos] = nv.mantissa
    return Batch(token_ids, is_num, exp_ids, mant, lengths)


@dataclass
class HeadOutputs:
    selector_logprobs: Tensor  # (B, T, 2)
    token_logprobs: Tensor  # (B, T, |V|)
    exponent_logprobs: Tensor  # (B, T, |V_e|)
    mantissa_mean: Tensor  # (B, T, 1)


class NumGPT:
    """Model parameters plus forward/loss/generation logic."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=None):
        self.cfg = cfg
        self.dtype = dtype or core.default_dtype()
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        d_h, d = cfg.d_h, cfg.numeral.d

        def param(name, shape, std=0.02):
            arr = rng.normal(0.0, std, size=shape) if std else np.zeros(shape)
            self.params[name] = Tensor(arr, requires_grad=True, dtype=self.dtype)

        def ones_param(name, shape):
            self.params[name] = Tensor(np.ones(shape), requires_grad=True, dtype=self.dtype)

        param("tok_emb", (cfg.vocab_size, d_h))
        param("pos_emb", (cfg.max_seq_len, d_h))
        param("num_slot_tok", (d_h,))
        param("txt_slot_num", (d,))
        param("fuse_w", (d_h + d, d_h))
        param("exp_emb", (EXP_VOCAB_SIZE, cfg.numeral.d_e))
        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            ones_param(p + "ln1_g", (d_h,))
            param(p + "ln1_b", (d_h,), std=0)
            for w in ("q", "k", "v", "o"):
                param(p + f"attn_{w}_w", (d_h, d_h))
                param(p + f"attn_{w}_b", (d_h,), std=0)
            ones_param(p + "ln2_g", (d_h,))
            param(p + "ln2_b", (d_h,), std=0)
            param(p + "mlp_w1", (d_h, 4 * d_h))
            param(p + "mlp_b1", (4 * d_h,), std=0)
            param(p + "mlp_w2", (4 * d_h, d_h))
            param(p + "mlp_b2", (d_h,), std=0)
        ones_param("ln_f_g", (d_h,))
        param("ln_f_b", (d_h,), std=0)
        param("head_sel_w", (d_h, 2))
        param("head_tok_w", (d_h, cfg.vocab_size))
        param("head_exp_w", (d_h, EXP_VOCAB_SIZE))
        param("head_man_w", (d_h, 1))
        param("head_cls_w", (d_h, cfg.n_classes))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # ----- forward ---------------------------------------------------------

    def input_embed(self, batch: Batch) -> Tensor:
        """Fused input embedding, shape (B, T, d_h)."""
        p = self.params
        b, t = batch.shape
        if t > self.cfg.max_seq_len:
            raise UsageError(f"sequence length {t} exceeds max_seq_len {self.cfg.max_seq_len}")
        tok = core.embedding(p["tok_emb"], batch.token_ids)
        pos = core.embedding(p["pos_emb"], np.arange(t))
        if self.cfg.mode == "baseline_gpt":
            return core.add(tok, pos)
        z = Tensor(batch.is_numeral[..., None].astype(self.dtype))
        one_minus_z = Tensor((~batch.is_numeral)[..., None].astype(self.dtype))
        num_tok = core.reshape(p["num_slot_tok"], (1, 1, self.cfg.d_h))
        tok_side = core.add(core.mul(tok, one_minus_z), core.mul(num_tok, z))
        exp_part = core.embedding(p["exp_emb"], batch.exp_ids)
        kernel = Tensor(mantissa_embed_batch(batch.mantissa, self.cfg.numeral, self.dtype))
        ne = core.concat([exp_part, kernel], axis=-1)
        txt_num = core.reshape(p["txt_slot_num"], (1, 1, self.cfg.numeral.d))
        num_side = core.add(core.mul(ne, z), core.mul(txt_num, one_minus_z))
        fused = core.matmul(core.concat([tok_side, num_side], axis=-1), p["fuse_w"])
        return core.add(fused, pos)

    def trunk(self, batch: Batch) -> Tensor:
        """Transformer stack output (pre-head hidden states), (B, T, d_h)."""
        p = self.params
        x = self.input_embed(batch)
        for i in range(self.cfg.n_layers):
            pre = f"layers.{i}."
            h = core.layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
            attn = core.causal_self_attention(
                h,
                self.cfg.n_heads,
                p[pre + "attn_q_w"],
                p[pre + "attn_q_b"],
                p[pre + "attn_k_w"],
                p[pre + "attn_k_b"],
                p[pre + "attn_v_w"],
                p[pre + "attn_v_b"],
                p[pre + "attn_o_w"],
                p[pre + "attn_o_b"],
            )
            x = core.add(x, attn)
            h = core.layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
            h = core.matmul(h, p[pre + "mlp_w1"])
            h = core.add(h, p[pre + "mlp_b1"])
            h = core.gelu(h)
            h = core.matmul(h, p[pre + "mlp_w2"])
            h = core.add(h, p[pre + "mlp_b2"])
            x = core.add(x, h)
        return core.layer_norm(x, self.params["ln_f_g"], self.params["ln_f_b"])

    def heads(self, h: Tensor) -> HeadOutputs:
        p = self.params
        return HeadOutputs(
            selector_logprobs=core.log_softmax(core.matmul(h, p["head_sel_w"]), axis=-1),
            token_logprobs=core.log_softmax(core.matmul(h, p["head_tok_w"]), axis=-1),
            exponent_logprobs=core.log_softmax(core.matmul(h, p["head_exp_w"]), axis=-1),
            mantissa_mean=core.matmul(h, p["head_man_w"]),
        )

    def forward(self, batch: Batch) -> HeadOutputs:
        return self.heads(self.trunk(batch))

    # ----- losses ----------------------------------------------------------

    def numeral_aware_loss(self, outputs: HeadOutputs, batch: Batch) -> Tensor:
        """Mean selector/token/exponent/mantissa NLL over predicted positions."""
        b, t = batch.shape
        if outputs.selector_logprobs.shape[:2] != (b, t):
            raise UsageError("outputs and target batch are misaligned")
        if t < 2:
            raise UsageError("need at least two positions for next-token loss")
        n = b * (t - 1)
        # predictions at column j score targets at column j+1
        valid = (np.arange(1, t)[None, :] < batch.lengths[:, None]).astype(self.dtype)
        z_next = batch.is_numeral[:, 1:]
        zf = z_next.astype(self.dtype).reshape(n)
        mask = valid.reshape(n)

        def shifted(x: Tensor, width: int) -> Tensor:
            return core.reshape(core.slice_axis(x, 1, 0, t - 1), (n, width))

        sel = core.select_index(shifted(outputs.selector_logprobs, 2), z_next.astype(np.int64).reshape(n))
        tok = core.select_index(
            shifted(outputs.token_logprobs, self.cfg.vocab_size),
            batch.token_ids[:, 1:].reshape(n).astype(np.int64),
        )
        expo = core.select_index(
            shifted(outputs.exponent_logprobs, EXP_VOCAB_SIZE),
            batch.exp_ids[:, 1:].reshape(n).astype(np.int64),
        )
        mu = core.reshape(core.slice_axis(outputs.mantissa_mean, 1, 0, t - 1), (n,))
        resid = core.sub(mu, Tensor(batch.mantissa[:, 1:].reshape(n).astype(self.dtype)))
        man_nll = core.add(core.square(resid), Tensor(np.full(n, _HALF_LOG_PI, dtype=self.dtype)))

        mask_t = Tensor(mask)
        tok_w = Tensor(mask * (1.0 - zf))
        num_w = Tensor(mask * zf)
        total = core.add(
            core.add(
                core.neg(core.tsum(core.mul(sel, mask_t))),
                core.neg(core.tsum(core.mul(tok, tok_w))),
            ),
            core.add(
                core.neg(core.tsum(core.mul(expo, num_w))),
                core.tsum(core.mul(man_nll, num_w)),
            ),
        )
        n_pred = float(mask.sum())
        if n_pred == 0:
            raise UsageError("batch has no predicted positions")
        return core.mul(total, Tensor(np.asarray(1.0 / n_pred, dtype=self.dtype)))

    def classification_forward(self, batch: Batch) -> Tensor:
        """Logits from the final <CLS> position, (B, n_classes)."""
        cls_pos = batch.lengths - 1
        got = batch.token_ids[np.arange(len(cls_pos)), cls_pos]
        if not (got == CLS_ID).all():
            raise UsageError("classification input must end with <CLS>")
        h = self.trunk(batch)
        pooled = core.gather_rows(h, cls_pos)
        return core.matmul(pooled, self.params["head_cls_w"])

    def classification_loss(self, logits: Tensor, labels: np.ndarray) -> Tensor:
        lp = core.log_softmax(logits, axis=-1)
        picked = core.select_index(lp, np.asarray(labels, dtype=np.int64))
        return core.neg(core.tmean(picked))

    # ----- generation ------------------------------------------------------

    def generate_next(self, prefix: EncodedSequence, vocab_limit: int | None = None):
        """Greedy next item: token id, NumeralValue, or an overflow marker.

        vocab_limit restricts the token argmax to ids the tokenizer knows
        (the embedding table may be wider than the trained BPE vocab).
        """
        if len(prefix) == 0:
            raise UsageError("prefix must be non-empty")
        batch = pack_sequences([prefix])
        h = self.trunk(batch).data[0, len(prefix) - 1]
        p = self.params
        sel = h @ p["head_sel_w"].data
        if sel[0] >= sel[1]:  # textual
            logits = h @ p["head_tok_w"].data
            if vocab_limit is not None:
                logits = logits[:vocab_limit]
            return int(np.argmax(logits))
        e_id = int(np.argmax(h @ p["head_exp_w"].data))
        if e_id == POS_INF_ID:
            return OVERFLOW
        if e_id == NEG_INF_ID:
            return UNDERFLOW
        mantissa = float(np.clip((h @ p["head_man_w"].data)[0], -10.0, 10.0))
        return compose_generated(mantissa, e_id + EXP_MIN)

    # ----- persistence ------------------------------------------------------

    CKPT_MAGIC = b"numgpt-ckpt v1\n"

    def save(self, path) -> None:
        cfg_json = json.dumps(self.cfg.to_dict(), sort_keys=True, separators=(",", ":"))
        blob = bytearray(self.CKPT_MAGIC)
        raw = cfg_json.encode("utf-8")
        blob += struct.pack("<I", len(raw))
        blob += raw
        for name, p in self.params.items():
            enc = name.encode("utf-8")
            blob += struct.pack("<H", len(enc))
            blob += enc
            blob += struct.pack("<B", p.data.ndim)
            blob += struct.pack(f"<{p.data.ndim}I", *p.data.shape)
            blob += np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        with open(path, "wb") as f:
            f.write(blob)

    @classmethod
    def load(cls, path) -> "NumGPT":
        with open(path, "rb") as f:
            blob = f.read()
        if not blob.startswith(cls.CKPT_MAGIC):
            raise DataError(f"{path}: not a {cls.CKPT_MAGIC.strip().decode()} checkpoint")
        off = len(cls.CKPT_MAGIC)
        (jlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        cfg = ModelConfig.from_dict(json.loads(blob[off : off + jlen].decode("utf-8")))
        off += jlen
        model = cls(cfg, seed=0)
        seen = set()
        while off < len(blob):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
            off += 4 * count
            if name not in model.params:
                raise DataError(f"{path}: unknown parameter {name!r}")
            if model.params[name].data.shape != tuple(shape):
                raise DataError(f"{path}: shape mismatch for {name!r}")
            model.params[name] = Tensor(data.copy(), requires_grad=True, dtype=np.float32)
            seen.add(name)
        if seen != set(model.params):
            raise DataError(f"{path}: missing parameters {sorted(set(model.params) - seen)}")
        return model


def compose_generated(mantissa: float, exponent: int) -> NumeralValue:
    """Turn head outputs into a numeral, snapping near-integers so values
    render canonically (e.g. mantissa 1.006, exponent 4 -> 10060)."""
    value = round(mantissa, 9) * 10.0**exponent
    nearest = round(value)
    if abs(value - nearest) <= 1e-9 * max(1.0, abs(value)):
        value = float(nearest)
    return decompose(value)

"""Byte-pair encoding tokenizer: trainer, encoder, decoder, vocab file.

Base symbols are the 256 byte values, remapped to printable characters so
merge rules serialize cleanly. Reserved control tokens occupy the lowest
ids and are never produced by merges.
"""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path

from .errors import DataError, DecodeError, UsageError

RESERVED = ("<NUM>", "<MASK>", "<PAD>", "<BOS>", "<EOS>", "<CLS>")
# reserved tokens always occupy the lowest ids, in RESERVED order
NUM_ID, MASK_ID, PAD_ID, BOS_ID, EOS_ID, CLS_ID = range(len(RESERVED))
_N_BYTES = 256

# Words are letter runs, digit runs, or punctuation runs, each optionally
# claiming one preceding space; leftover whitespace runs stand alone.
_PRETOK_RE = re.compile(r" ?[A-Za-z]+| ?\d+| ?[^\sA-Za-z\d]+|\s+")


def _bytes_to_unicode() -> dict[int, str]:
    """Bijective byte -> printable character map (control bytes remapped)."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(_N_BYTES):
        if b not in bs:
            bs.append(b)
            cs.append(_N_BYTES + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


_BYTE_ENCODER = _bytes_to_unicode()
_BYTE_DECODER = {c: b for b, c in _BYTE_ENCODER.items()}


def _to_symbols(word: str) -> tuple[str, ...]:
    return tuple(_BYTE_ENCODER[b] for b in word.encode("utf-8"))


class BpeVocab:
    """Trained BPE vocabulary: ordered merges plus the derived token table."""

    def __init__(self, merges: list[tuple[str, str]]):
        self.merges = list(merges)
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self.token_to_id: dict[str, int] = {}
        self.id_to_token: list[str] = []
        for tok in RESERVED:
            self._add(tok)
        for b in range(_N_BYTES):
            self._add(_BYTE_ENCODER[b])
        for left, right in self.merges:
            self._add(left + right)
        self._cache: dict[str, list[int]] = {}

    def _add(self, tok: str) -> None:
        if tok in self.token_to_id:
            raise DataError(f"duplicate token {tok!r} in vocabulary")
        self.token_to_id[tok] = len(self.id_to_token)
        self.id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def reserved_ids(self) -> dict[str, int]:
        return {tok: self.token_to_id[tok] for tok in RESERVED}

    def token_id(self, tok: str) -> int:
        return self.token_to_id[tok]

    def _segment(self, word: str) -> list[str]:
        symbols = list(_to_symbols(word))
        while len(symbols) > 1:
            pairs = set(zip(symbols, symbols[1:]))
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            merged = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        return symbols

    def encode_text(self, text: str) -> list[int]:
        """BPE-encode raw text (no numeral or control-token handling)."""
        ids: list[int] = []
        for word in _PRETOK_RE.findall(text):
            cached = self._cache.get(word)
            if cached is None:
                cached = [self.token_to_id[s] for s in self._segment(word)]
                self._cache[word] = cached
            ids.extend(cached)
        return ids

    def decode_tokens(self, ids: list[int]) -> str:
        """Invert encode_text. Reserved ids are not valid here."""
        chars: list[str] = []
        for i in ids:
            if i < 0 or i >= len(self.id_to_token):
                raise DecodeError(f"unknown token id {i}")
            tok = self.id_to_token[i]
            if tok in RESERVED:
                raise DecodeError(f"reserved token {tok} has no text form")
            chars.append(tok)
        data = bytes(_BYTE_DECODER[c] for c in "".join(chars))
        return data.decode("utf-8")

    def save(self, path: str | Path) -> None:
        lines = ["bpevocab v1", f"merges {len(self.merges)}"]
        lines += [f"{left}\t{right}" for left, right in self.merges]
        lines.append(f"reserved {len(RESERVED)}")
        lines += [f"{tok}\t{self.token_to_id[tok]}" for tok in RESERVED]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BpeVocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != "bpevocab v1":
            raise DataError(f"{path}: not a bpevocab v1 file")
        if not lines[1].startswith("merges "):
            raise DataError(f"{path}: missing merges header")
        n = int(lines[1].split()[1])
        merges = []
        for ln in lines[2 : 2 + n]:
            left, right = ln.split("\t")
            merges.append((left, right))
        vocab = cls(merges)
        header = lines[2 + n]
        if not header.startswith("reserved "):
            raise DataError(f"{path}: missing reserved header")
        k = int(header.split()[1])
        for ln in lines[3 + n : 3 + n + k]:
            tok, tid = ln.split("\t")
            if vocab.token_to_id.get(tok) != int(tid):
                raise DataError(f"{path}: reserved id mismatch for {tok}")
        return vocab


def bpe_train(corpus: list[str], vocab_size: int) -> BpeVocab:
    """Learn merges greedily by pair frequency (ties broken lexicographically)."""
    base = _N_BYTES + len(RESERVED)
    if vocab_size <= base:
        raise UsageError(f"vocab_size must exceed {base} (bytes + reserved), got {vocab_size}")
    word_freq: Counter[tuple[str, ...]] = Counter()
    for doc in corpus:
        for word in _PRETOK_RE.findall(doc):
            word_freq[_to_symbols(word)] += 1
    if not word_freq:
        raise UsageError("empty corpus")

    merges: list[tuple[str, str]] = []
    words = dict(word_freq)
    for _ in range(vocab_size - base):
        pair_freq: Counter[tuple[str, str]] = Counter()
        for wt, f in words.items():
            for pair in zip(wt, wt[1:]):
                pair_freq[pair] += f
        if not pair_freq:
            break
        best = min(pair_freq.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        merged_words = {}
        for wt, f in words.items():
            out = []
            i = 0
            while i < len(wt):
                if i + 1 < len(wt) and (wt[i], wt[i + 1]) == best:
                    out.append(wt[i] + wt[i + 1])
                    i += 2
                else:
                    out.append(wt[i])
                    i += 1
            merged_words[tuple(out)] = merged_words.get(tuple(out), 0) + f
        words = merged_words
    return BpeVocab(merges)

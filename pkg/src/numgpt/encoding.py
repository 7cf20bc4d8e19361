"""Numeral-aware text encoding.

In aware mode each detected numeral (with any directly preceding space)
collapses to a single <NUM> position carrying its NumeralValue; the rest
of the text goes through BPE. In plain mode numerals are left for BPE as
raw digit text, which is the baseline-GPT input convention.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .bpe import RESERVED, BpeVocab
from .errors import DecodeError
from .numbers import NumeralValue, parse_numerals, render

# Control tokens that may appear literally in task text (e.g. masked
# numerals). <NUM> is excluded: it is only ever produced by the parser.
_LITERAL_RE = re.compile("|".join(re.escape(t) for t in RESERVED if t != "<NUM>"))


@dataclass
class EncodedSequence:
    token_ids: list[int]
    is_numeral: list[bool]
    numerals: dict[int, NumeralValue] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.token_ids)

    def validate(self, vocab: BpeVocab) -> None:
        num_id = vocab.token_id("<NUM>")
        assert len(self.token_ids) == len(self.is_numeral)
        for t, (tid, z) in enumerate(zip(self.token_ids, self.is_numeral)):
            assert z == (tid == num_id) == (t in self.numerals)


def _encode_plain(text: str, vocab: BpeVocab, ids: list[int]) -> None:
    """BPE-encode text, honoring literal control tokens."""
    pos = 0
    for m in _LITERAL_RE.finditer(text):
        ids.extend(vocab.encode_text(text[pos : m.start()]))
        ids.append(vocab.token_id(m.group()))
        pos = m.end()
    ids.extend(vocab.encode_text(text[pos:]))


def encode(text: str, vocab: BpeVocab, numeral_aware: bool) -> EncodedSequence:
    ids: list[int] = []
    numerals: dict[int, NumeralValue] = {}
    if numeral_aware:
        num_id = vocab.token_id("<NUM>")
        pos = 0
        for (start, end), nv in parse_numerals(text):
            if start > 0 and text[start - 1] == " ":
                start -= 1  # the numeral slot absorbs its leading space
            _encode_plain(text[pos:start], vocab, ids)
            numerals[len(ids)] = nv
            ids.append(num_id)
            pos = end
        _encode_plain(text[pos:], vocab, ids)
    else:
        _encode_plain(text, vocab, ids)
    num_id = vocab.token_id("<NUM>")
    return EncodedSequence(ids, [i == num_id for i in ids], numerals)


def decode(seq: EncodedSequence, vocab: BpeVocab) -> str:
    """Inverse of encode up to canonical numeral rendering and whitespace."""
    mask_id = vocab.token_id("<MASK>")
    num_id = vocab.token_id("<NUM>")
    structural = {vocab.token_id(t) for t in ("<PAD>", "<BOS>", "<EOS>", "<CLS>")}
    parts: list[str] = []
    run: list[int] = []

    def flush() -> None:
        if run:
            parts.append(vocab.decode_tokens(run))
            run.clear()

    for t, tid in enumerate(seq.token_ids):
        if tid == num_id:
            flush()
            if t not in seq.numerals:
                raise DecodeError(f"<NUM> at position {t} has no numeral value")
            text = render(seq.numerals[t].value)
            if parts and not parts[-1][-1:].isspace():
                text = " " + text
            parts.append(text)
        elif tid == mask_id:
            flush()
            parts.append(" <MASK>" if parts and not parts[-1][-1:].isspace() else "<MASK>")
        elif tid in structural:
            flush()
        else:
            run.append(tid)
    flush()
    return "".join(parts)

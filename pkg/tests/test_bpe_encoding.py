"""BPE trainer/encoder and numeral-aware sequence encoding."""

import pytest

from numgpt.bpe import RESERVED, BpeVocab, bpe_train
from numgpt.encoding import decode, encode
from numgpt.errors import DecodeError, UsageError

CORPUS = [
    "How many grams are 2 eggs? A: 80",
    "Joan found 65 seashells on the beach. She gave Sam 30 of her seashells.",
    "A 20 year old person is younger than a 30 year old person.",
    "The ship is filled with 6518 tons of cargo.",
]


@pytest.fixture(scope="module")
def vocab():
    return bpe_train(CORPUS, vocab_size=400)


def test_train_single_merge_candidate():
    v = bpe_train(["aaaa"], vocab_size=256 + len(RESERVED) + 1)
    assert v.merges == [("a", "a")]


def test_train_rejects_small_vocab():
    with pytest.raises(UsageError):
        bpe_train(CORPUS, vocab_size=100)


def test_train_rejects_empty_corpus():
    with pytest.raises(UsageError):
        bpe_train([""], vocab_size=400)


def test_reserved_ids_stable_and_low(vocab):
    assert [vocab.token_id(t) for t in RESERVED] == list(range(len(RESERVED)))


def test_reserved_never_produced_by_merges(vocab):
    merged = {left + right for left, right in vocab.merges}
    assert not merged & set(RESERVED)


def test_encode_decode_round_trip_plain_text(vocab):
    for text in CORPUS:
        seq = encode(text, vocab, numeral_aware=False)
        assert not any(seq.is_numeral)
        assert decode(seq, vocab) == text


def test_every_corpus_word_encodes(vocab):
    for text in CORPUS:
        seq = encode(text, vocab, numeral_aware=False)
        assert len(seq) >= 1
        seq.validate(vocab)


def test_numeral_aware_two_eggs(vocab):
    seq = encode("2 eggs", vocab, numeral_aware=True)
    assert seq.is_numeral[0] is True
    assert all(z is False for z in seq.is_numeral[1:])
    assert seq.token_ids[0] == vocab.token_id("<NUM>")
    assert seq.numerals[0].value == 2.0
    assert decode(seq, vocab) == "2 eggs"


def test_not_aware_has_no_numerals(vocab):
    seq = encode("2 eggs", vocab, numeral_aware=False)
    assert not any(seq.is_numeral)
    assert not seq.numerals


def test_num_count_matches_parsed_numerals(vocab):
    text = "He bought 3 apples, 12 pears and paid 1,250 coins plus 5% tax."
    seq = encode(text, vocab, numeral_aware=True)
    assert sum(seq.is_numeral) == 4
    seq.validate(vocab)


def test_aware_round_trip_canonicalizes_numerals(vocab):
    text = "price was 1,250 coins"
    seq = encode(text, vocab, numeral_aware=True)
    assert decode(seq, vocab) == "price was 1250 coins"


def test_aware_round_trip_on_corpus(vocab):
    for text in CORPUS:
        seq = encode(text, vocab, numeral_aware=True)
        assert decode(seq, vocab) == text  # corpus numerals are already canonical


def test_decode_empty():
    v = bpe_train(["ab"], vocab_size=263)
    from numgpt.encoding import EncodedSequence

    assert decode(EncodedSequence([], []), v) == ""


def test_decode_single_numeral(vocab):
    seq = encode("0.23", vocab, numeral_aware=True)
    assert decode(seq, vocab) == "0.23"
    seq = encode("10060", vocab, numeral_aware=True)
    assert decode(seq, vocab) == "10060"


def test_mask_literal_round_trip(vocab):
    text = "the box weighs <MASK> grams"
    seq = encode(text, vocab, numeral_aware=True)
    assert vocab.token_id("<MASK>") in seq.token_ids
    assert decode(seq, vocab) == text


def test_decode_unknown_id_raises(vocab):
    from numgpt.encoding import EncodedSequence

    with pytest.raises(DecodeError):
        decode(EncodedSequence([10**6], [False]), vocab)


def test_vocab_file_round_trip(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    head = path.read_text().splitlines()[0]
    assert head == "bpevocab v1"
    loaded = BpeVocab.load(path)
    assert loaded.merges == vocab.merges
    assert loaded.token_to_id == vocab.token_to_id
    text = CORPUS[0]
    assert loaded.encode_text(text) == vocab.encode_text(text)


def test_vocab_file_rerun_identical(tmp_path):
    a = bpe_train(CORPUS, 400)
    b = bpe_train(CORPUS, 400)
    pa, pb = tmp_path / "a.txt", tmp_path / "b.txt"
    a.save(pa)
    b.save(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_encode_ids_round_trip_through_decode_encode(vocab):
    text = "She has 30 seashells."
    seq = encode(text, vocab, numeral_aware=True)
    again = encode(decode(seq, vocab), vocab, numeral_aware=True)
    assert again.token_ids == seq.token_ids
    assert [nv.value for nv in again.numerals.values()] == [
        nv.value for nv in seq.numerals.values()
    ]

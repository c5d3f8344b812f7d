import pytest
from hypothesis import given, strategies as st

from overgen.tokenizer import TokenSeq, span_text, tokenize


def test_empty_input():
    assert tokenize("").tokens == ()


def test_plain_words():
    assert tokenize("Hello world").tokens == ("Hello", "world")


def test_punctuation_split_off():
    assert tokenize("aspetta, aspetta,").tokens == ("aspetta", ",", "aspetta", ",")


def test_hyphen_splits_compounds():
    assert tokenize("Noord-Korea").tokens == ("Noord", "-", "Korea")


def test_cjk_per_character():
    assert tokenize("3分の1").tokens == ("3", "分", "の", "1")


def test_mixed_whitespace_runs():
    seq = tokenize("  a\t b\n\nc ")
    assert seq.tokens == ("a", "b", "c")


def test_offsets_slice_back_to_tokens():
    text = "van Noord-Korea vormt"
    seq = tokenize(text)
    for tok, (start, end) in zip(seq.tokens, seq.offsets):
        assert text[start:end] == tok


def test_span_text_single_token():
    text = "Hello world"
    seq = tokenize(text)
    assert span_text(seq, 0, 0, text) == "Hello"


def test_span_text_full_range():
    text = "  Hello world  "
    seq = tokenize(text)
    assert span_text(seq, 0, len(seq) - 1, text) == "Hello world"


def test_span_text_recovers_compound_region():
    text = "van Noord-Korea vormt"
    seq = tokenize(text)
    # tokens: van Noord - Korea vormt; tokens 1..3 cover the compound
    assert span_text(seq, 1, 3, text) == "Noord-Korea"


def test_span_text_bounds():
    seq = tokenize("a b")
    with pytest.raises(IndexError):
        span_text(seq, 0, 2, "a b")
    with pytest.raises(IndexError):
        span_text(seq, -1, 0, "a b")


def test_token_offset_length_mismatch_rejected():
    with pytest.raises(ValueError):
        TokenSeq(("a",), ())


@given(st.text(max_size=200))
def test_offsets_are_lossless(text):
    seq = tokenize(text)
    assert len(seq.tokens) == len(seq.offsets)
    prev_end = 0
    for tok, (start, end) in zip(seq.tokens, seq.offsets):
        assert start >= prev_end
        assert start < end
        assert text[start:end] == tok
        prev_end = end
    # everything outside token offsets is whitespace
    covered = set()
    for start, end in seq.offsets:
        covered.update(range(start, end))
    for i, ch in enumerate(text):
        if i not in covered:
            assert ch.isspace()


@given(st.text(max_size=200))
def test_tokens_are_atomic_under_retokenization(text):
    for tok in tokenize(text).tokens:
        assert tokenize(tok).tokens == (tok,)

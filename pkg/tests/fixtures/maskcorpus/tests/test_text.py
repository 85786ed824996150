"""Text helper tests (plain assert style)."""

import pytest

from textkit import Splitter, clip, numbers, parse_flag, word_count

MAX_WORDS = 2  # clip budget used across the tests
SAMPLE = "alpha beta gamma"


def test_clip_keeps_limit():
    short = clip(SAMPLE, MAX_WORDS)
    assert short == "alpha beta"


def test_clip_noop_under_limit():
    short = clip("alpha", MAX_WORDS)
    assert short == "alpha"  # nothing to trim


def test_numbers_parses_ints():
    values = numbers("7,8,9")
    assert values == [
        7,
        8,
        9,
    ]


def test_numbers_rejects_garbage():
    with pytest.raises(ValueError):
        numbers("7,eight")


def test_word_count_loop():
    for text in ("a", "a b"):
        count = word_count(text)
        assert count == len(text.split())


@pytest.mark.parametrize("raw,expected", [("on", True), ("off", False)])
def test_parse_flag_values(raw, expected):
    flag = parse_flag(raw)
    assert flag is expected


def test_parse_flag_unknown():
    flag = parse_flag("maybe")
    assert flag is None


def test_splitter_strips():
    parts = Splitter().split("a , b")
    assert parts == ["a", "b"]


def test_clip_and_count():
    text = clip("one two three four", 3)
    n = word_count(text)
    assert n == 3
    assert text == "one two three"


def test_message_assert():
    values = numbers("1")
    assert values, "expected at least one number"

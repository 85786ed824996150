"""Crafted masking cases; each test exercises one extraction edge."""

import unittest

from textkit import clip, numbers, parse_flag

LIMIT = 3  # max words kept by clip


def test_single():
    words = clip("a b c d", LIMIT)
    assert words == "a b c"


def test_multiline():
    values = numbers("1,2,3")
    assert values == [
        1,
        2,
        3,
    ]


def test_trailing_comment():
    flag = parse_flag("on")
    assert flag is True  # textual truthiness


def test_inside_with():
    with open(__file__, encoding="utf-8") as handle:
        first = handle.readline()
        assert first.startswith('"""')


class TestLibraryCases(unittest.TestCase):
    def test_two_equals(self):
        values = numbers("4,5")
        self.assertEqual(values[0], 4)
        self.assertEqual(values[1], 5)

    def test_raises_block(self):
        with self.assertRaises(ValueError):
            numbers("nope")

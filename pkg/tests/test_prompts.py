"""Prompt tests: similarity, sample selection, rendering, response parsing."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assertgen.analyzer import mine_project
from assertgen.errors import MalformedResponseError, NoSampleError, OversizeError
from assertgen.harness import FailureDetail
from assertgen.prompts import (
    PredictionSet,
    generate_cot,
    name_similarity,
    parse_predictions,
    render_feedback,
    render_greeting,
    render_query,
    select_one_shot_sample,
    write_response,
)


@pytest.fixture(scope="module")
def corpus(maskcorpus_root):
    return mine_project(maskcorpus_root, project="maskcorpus", revision="fixed").entries


@pytest.fixture(scope="module")
def by_name(corpus):
    return {e.method_name: e for e in corpus}


# ---------------------------------------------------------------------------
# name_similarity
# ---------------------------------------------------------------------------

def test_similarity_identical():
    assert name_similarity("test_send_html", "test_send_html") == 1.0


def test_similarity_disjoint():
    assert name_similarity("test_send_html", "check_parse") == 0.0


def test_similarity_two_thirds():
    assert abs(name_similarity("test_send_html", "test_send_text") - 2 / 3) < 1e-9


def test_similarity_camel_case_split():
    assert name_similarity("testSendHtml", "test_send_html") == 1.0


identifiers = st.text(
    alphabet="abcdefgXYZ_", min_size=1, max_size=20
).filter(lambda s: any(c.isalpha() for c in s))


@given(identifiers, identifiers)
@settings(max_examples=150, deadline=None)
def test_similarity_properties(a, b):
    score = name_similarity(a, b)
    assert 0.0 <= score <= 1.0
    assert score == name_similarity(b, a)
    assert name_similarity(a, a) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# select_one_shot_sample
# ---------------------------------------------------------------------------

def _stub(eid, project, file_path, class_name, method):
    from assertgen.analyzer import AssertStatement, TestAssertEntry

    return TestAssertEntry(
        id=eid,
        project=project,
        file_path=file_path,
        class_name=class_name,
        method_name=method,
        flavor="keyword",
        revision="r",
        focal_method_source="def f():\n    pass",
        masked_test_source="def %s():\n    <AssertPlaceholder1>" % method,
        globals_source="",
        asserts=[AssertStatement(index=1, text="assert 1", method_kind="assert")],
    )


def test_select_same_class_maximizer():
    target = _stub("p::f::C::test_a", "p", "f", "C", "test_a")
    extra = _stub("p::f::C::test_a_extra", "p", "f", "C", "test_a_extra")
    other = _stub("p::f::C::test_b", "p", "f", "C", "test_b")
    # hand-computed: sim(test_a, test_a_extra)=2/sqrt(6)=0.816; sim(test_a, test_b)=0.5
    assert select_one_shot_sample(target, [target, extra, other]) is extra


def test_select_falls_back_to_project(by_name, corpus):
    # test_flag_fallback sits alone at module level of its file; the most
    # name-similar project-wide method is test_parse_flag_values
    target = by_name["test_flag_fallback"]
    sample = select_one_shot_sample(target, corpus)
    assert sample.id != target.id
    assert sample.project == target.project


def test_select_tie_breaks_lexicographically():
    target = _stub("p::f::C::test_a", "p", "f", "C", "test_a")
    tie_b = _stub("p::f::C::test_zz_b", "p", "f", "C", "test_zz")
    tie_a = _stub("p::f::C::test_zz_a", "p", "f", "C", "test_zz")
    assert select_one_shot_sample(target, [target, tie_b, tie_a]) is tie_a


def test_select_no_sample():
    target = _stub("p::f::C::test_a", "p", "f", "C", "test_a")
    with pytest.raises(NoSampleError):
        select_one_shot_sample(target, [target])


def test_select_deterministic(by_name, corpus):
    target = by_name["test_send_html"]
    first = select_one_shot_sample(target, corpus)
    assert first.method_name == "test_send_text"
    assert all(select_one_shot_sample(target, corpus) is first for _ in range(3))


# ---------------------------------------------------------------------------
# generate_cot
# ---------------------------------------------------------------------------

def test_cot_names_equality_and_param():
    entry = _stub("p::f::C::test_a", "p", "f", "C", "test_a")
    from assertgen.analyzer import AssertStatement

    entry.asserts = [
        AssertStatement(1, "self.assertEqual(x, 5)", "assertEqual", ("x", "5"))
    ]
    entry.focal_method_source = "def compute():\n    return 5"
    cot = generate_cot(entry)
    assert "the assert type is equality" in cot
    assert "The parameter being tested is x" in cot
    assert "the focal method is compute" in cot


def test_cot_one_block_per_placeholder(by_name):
    entry = by_name["test_scale_all"] if "test_scale_all" in by_name else None
    entry = entry or by_name["test_clip_and_count"]
    cot = generate_cot(entry)
    for a in entry.asserts:
        assert f"<AssertPlaceholder{a.index}>:" in cot


def test_cot_keyword_names_operator(by_name):
    entry = by_name["test_clip_keeps_limit"]
    cot = generate_cot(entry)
    assert "the assert type is ==" in cot


def test_cot_without_answers_has_no_truth(by_name):
    entry = by_name["test_clip_keeps_limit"]
    cot = generate_cot(entry, with_answers=False)
    for a in entry.asserts:
        assert a.text not in cot


# ---------------------------------------------------------------------------
# render_greeting / render_query / render_feedback
# ---------------------------------------------------------------------------

def test_greeting_contains_one_sample(by_name, corpus):
    target = by_name["test_send_html"]
    sample = select_one_shot_sample(target, corpus)
    message = render_greeting(target, sample)
    assert message.phase == "greeting"
    # exactly one worked sample: each section header appears on one line
    lines = message.text.splitlines()
    assert lines.count("Focal Method:") == 1
    assert lines.count("Unit Test:") == 1
    assert lines.count("Chain of Thoughts:") == 1
    assert lines.count("Generated Assertions:") == 1
    assert "EXACTLY one assert statement for each" in message.text
    # numbered sample assertions match the sample's placeholder count
    assert f"{len(sample.asserts)}. " in message.text


def test_greeting_flavor_instruction(by_name, corpus):
    library_target = by_name["test_send_html"]
    sample = select_one_shot_sample(library_target, corpus)
    text = render_greeting(library_target, sample).text
    assert "self.assert*" in text
    keyword_target = by_name["test_clip_keeps_limit"]
    sample = select_one_shot_sample(keyword_target, corpus)
    text = render_greeting(keyword_target, sample).text
    assert "plain assert keyword" in text


def test_greeting_oversize_sample_rejected(by_name, corpus):
    target = by_name["test_send_html"]
    sample = select_one_shot_sample(target, corpus)
    flagged = type(sample)(**{**sample.__dict__, "flags": ["oversize"]})
    with pytest.raises(OversizeError) as exc:
        render_greeting(target, flagged)
    assert exc.value.code == "sample-oversize"


def test_greeting_golden(by_name, corpus, golden_dir):
    target = by_name["test_send_html"]
    sample = select_one_shot_sample(target, corpus)
    golden = (golden_dir / "prompts" / "greeting.txt").read_text()
    assert render_greeting(target, sample).text == golden


def test_query_embeds_masked_source(by_name):
    target = by_name["test_scale_all"] if "test_scale_all" in by_name else by_name["test_clip_and_count"]
    text = render_query(target).text
    for a in target.asserts:
        assert f"<AssertPlaceholder{a.index}>" in text


def test_query_globals_before_unit_test(by_name):
    target = by_name["test_clip_keeps_limit"]
    text = render_query(target).text
    assert "Global Variables:" in text
    assert text.index("Global Variables:") < text.index("Unit Test:")


def test_query_never_leaks_ground_truth(corpus):
    for entry in corpus:
        if "oversize" in entry.flags:
            continue
        text = render_query(entry).text
        for a in entry.asserts:
            assert a.text not in text, entry.id


def test_query_oversize_target_rejected(by_name):
    target = by_name["test_clip_keeps_limit"]
    flagged = type(target)(**{**target.__dict__, "flags": ["oversize"]})
    with pytest.raises(OversizeError) as exc:
        render_query(flagged)
    assert exc.value.code == "target-oversize"


def test_query_golden(by_name, golden_dir):
    target = by_name["test_send_html"]
    golden = (golden_dir / "prompts" / "query.txt").read_text()
    assert render_query(target).text == golden


def test_feedback_contains_expected_actual_pattern():
    preds = PredictionSet(
        entry_id="p::f::::t", round=1, predictions=[(1, "assert total == 5")], raw_response=""
    )
    failures = [FailureDetail(placeholder_index=1, expected="5", actual="4", message="assert 4 == 5")]
    text = render_feedback(failures, preds).text
    assert "Expected= 5, Actual= 4" in text
    assert "Your assert: assert total == 5" in text


def test_feedback_blocks_in_placeholder_order():
    preds = PredictionSet(
        entry_id="p::f::::t",
        round=1,
        predictions=[(1, "assert a == 1"), (2, "assert b == 2")],
        raw_response="",
    )
    failures = [
        FailureDetail(placeholder_index=2, expected="2", actual="3"),
        FailureDetail(placeholder_index=1, expected="1", actual="0"),
    ]
    text = render_feedback(failures, preds).text
    assert text.index("<AssertPlaceholder1>") < text.index("<AssertPlaceholder2>")


def test_feedback_message_only_block():
    preds = PredictionSet(
        entry_id="p::f::::t", round=1, predictions=[(1, "assert x")], raw_response=""
    )
    failures = [FailureDetail(placeholder_index=1, message="ValueError: boom")]
    text = render_feedback(failures, preds).text
    assert "Details= ValueError: boom" in text
    assert "Expected=" not in text


def test_feedback_golden(golden_dir):
    preds = PredictionSet(
        entry_id="replayproj::test_calc.py::::test_add_pairs",
        round=1,
        predictions=[(1, "assert total == 5")],
        raw_response="",
    )
    failures = [FailureDetail(placeholder_index=1, expected="5", actual="4", message="assert 4 == 5")]
    golden = (golden_dir / "prompts" / "feedback.txt").read_text()
    assert render_feedback(failures, preds).text == golden


# ---------------------------------------------------------------------------
# parse_predictions
# ---------------------------------------------------------------------------

def test_parse_single_item():
    raw = "Generated Assertions:\n1. assert x == 1"
    result = parse_predictions(raw, 1)
    assert result.predictions == [(1, "assert x == 1")]


def test_parse_after_cot_prose():
    raw = (
        "Chain of Thoughts:\n"
        "<AssertPlaceholder1>:\nStep 1: ...\n\n"
        "Generated Assertions:\n"
        "1. assert a == 1\n"
        "2) self.assertEqual(b, 2)\n"
        "- 3. assert c in d\n"
    )
    result = parse_predictions(raw, 3)
    assert result.predictions == [
        (1, "assert a == 1"),
        (2, "self.assertEqual(b, 2)"),
        (3, "assert c in d"),
    ]


def test_parse_count_mismatch():
    raw = "Generated Assertions:\n1. assert a == 1\n2. assert b == 2\n"
    with pytest.raises(MalformedResponseError) as exc:
        parse_predictions(raw, 3)
    assert exc.value.raw == raw


def test_parse_missing_section():
    with pytest.raises(MalformedResponseError):
        parse_predictions("no assertions here", 1)


def test_parse_duplicate_index():
    raw = "Generated Assertions:\n1. assert a == 1\n1. assert a == 2\n"
    with pytest.raises(MalformedResponseError):
        parse_predictions(raw, 1)


def test_parse_strips_code_fences():
    raw = "Generated Assertions:\n```python\n1. assert x == 1\n```\n"
    result = parse_predictions(raw, 1)
    assert result.predictions == [(1, "assert x == 1")]


def test_parse_uses_final_section():
    raw = (
        "Generated Assertions:\n1. assert wrong == 1\n\n"
        "Wait, correcting myself.\n\n"
        "Generated Assertions:\n1. assert right == 1\n"
    )
    result = parse_predictions(raw, 1)
    assert result.predictions == [(1, "assert right == 1")]


def test_parse_multiline_bracketed_statement():
    raw = "Generated Assertions:\n1. self.assertEqual(xs,\n    [1, 2])\n"
    result = parse_predictions(raw, 1)
    assert result.predictions == [(1, "self.assertEqual(xs,\n    [1, 2])")]


statement_texts = st.lists(
    st.text(alphabet="abcxyz_ =<>!0123456789", min_size=1, max_size=30).map(
        lambda s: "assert " + " ".join(s.split())
    ).filter(lambda s: s.strip() != "assert"),
    min_size=1,
    max_size=5,
)


@given(statement_texts)
@settings(max_examples=100, deadline=None)
def test_parse_round_trips_synthetic_responses(texts):
    predictions = [(i, t) for i, t in enumerate(texts, start=1)]
    raw = write_response(predictions, preamble="Some reasoning first.\n\n")
    parsed = parse_predictions(raw, len(texts))
    assert parsed.predictions == predictions

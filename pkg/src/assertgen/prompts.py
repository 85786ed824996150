"""Prompt construction and response parsing for the three dialogue phases.

The greeting prompt carries a persona, a task description, and one fully
worked sample (focal method, masked test, chain-of-thought, numbered
assertions). The query prompt carries the target entry; the feedback prompt
quotes parsed execution failures. Phase templates live in ``templates/`` and
are overridable through ``prompt.template_dir``.
"""

from __future__ import annotations

import ast
import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .analyzer import TestAssertEntry, AssertStatement
from .errors import MalformedResponseError, NoSampleError, OversizeError

_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_SECTION_RE = re.compile(r"generated assertions\s*:?", re.IGNORECASE)
_ITEM_RE = re.compile(r"^\s*(?:[-*]\s+)?(\d+)[.)]\s*(.*)$")

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Reply again, ending with a "
    '"Generated Assertions:" section that lists exactly one assert statement '
    'per placeholder, numbered "1." through "{n}.".'
)

FLAVOR_INSTRUCTIONS = {
    "library": (
        "Write each assertion with the testing library's self.assert* "
        "methods, matching the style used in this project."
    ),
    "keyword": (
        "Write each assertion with Python's plain assert keyword, matching "
        "the style used in this project."
    ),
}

# Human-readable assert types for the chain-of-thought section.
ASSERT_TYPE_WORDS = {
    "assertEqual": "equality",
    "assertNotEqual": "inequality",
    "assertTrue": "truth",
    "assertFalse": "falsity",
    "assertIs": "identity",
    "assertIsNot": "non-identity",
    "assertIsNone": "a none value",
    "assertIsNotNone": "a non-none value",
    "assertIn": "membership",
    "assertNotIn": "non-membership",
    "assertIsInstance": "an instance type",
    "assertNotIsInstance": "a non-instance type",
    "assertRaises": "a raised exception",
    "assertRaisesRegex": "a raised exception message",
    "assertAlmostEqual": "approximate equality",
    "assertGreater": "a greater-than ordering",
    "assertGreaterEqual": "a greater-or-equal ordering",
    "assertLess": "a less-than ordering",
    "assertLessEqual": "a less-or-equal ordering",
    "assertCountEqual": "matching element counts",
    "assertRegex": "a pattern match",
}

_COMPARE_OPS = {
    ast.Eq: "==",
    ast.NotEq: "!=",
    ast.Lt: "<",
    ast.LtE: "<=",
    ast.Gt: ">",
    ast.GtE: ">=",
    ast.Is: "is",
    ast.IsNot: "is not",
    ast.In: "in",
    ast.NotIn: "not in",
}


@dataclass
class PromptMessage:
    phase: str  # greeting | query | feedback
    text: str
    entry_id: str


@dataclass
class PredictionSet:
    entry_id: str
    round: int
    predictions: list[tuple[int, str]]  # (placeholder_index, assert_text)
    raw_response: str

    def by_index(self) -> dict[int, str]:
        return dict(self.predictions)


def load_template(name: str, template_dir: str | Path | None = None) -> str:
    if template_dir is not None:
        return (Path(template_dir) / f"{name}.txt").read_text(encoding="utf-8")
    return resources.files("assertgen").joinpath(f"templates/{name}.txt").read_text("utf-8")


# ---------------------------------------------------------------------------
# Sample selection
# ---------------------------------------------------------------------------

def name_tokens(name: str) -> list[str]:
    tokens = []
    for chunk in name.split("_"):
        tokens.extend(p.lower() for p in _CAMEL_SPLIT.split(chunk) if p)
    return tokens


def name_similarity(a: str, b: str) -> float:
    """Cosine similarity of token-count vectors of two identifiers."""
    va, vb = Counter(name_tokens(a)), Counter(name_tokens(b))
    if not va or not vb:
        return 0.0
    if va == vb:
        return 1.0
    dot = sum(count * vb.get(token, 0) for token, count in va.items())
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(c * c for c in va.values())) * math.sqrt(sum(c * c for c in vb.values()))
    return min(1.0, dot / norm)


def select_one_shot_sample(
    target: TestAssertEntry, corpus: list[TestAssertEntry]
) -> TestAssertEntry:
    """Pick the one-shot sample: most name-similar test in the target's own
    test class, falling back to the whole project; ties go to the smallest id."""
    same_project = [e for e in corpus if e.project == target.project and e.id != target.id]
    if not same_project:
        raise NoSampleError(f"no candidate sample for {target.id}")
    same_class = [
        e
        for e in same_project
        if e.file_path == target.file_path and e.class_name == target.class_name
    ]
    pool = same_class or same_project
    ranked = sorted(
        pool,
        key=lambda e: (-name_similarity(target.method_name, e.method_name), e.id),
    )
    return ranked[0]


# ---------------------------------------------------------------------------
# Chain of thought
# ---------------------------------------------------------------------------

def _decamel_words(suffix: str) -> str:
    return " ".join(p.lower() for p in _CAMEL_SPLIT.split(suffix) if p)


def _assert_type_and_param(statement: AssertStatement) -> tuple[str, str]:
    if statement.method_kind == "assert":
        try:
            node = ast.parse(statement.text.strip()).body[0]
        except SyntaxError:
            return "truth", statement.text.strip()
        test = node.test if isinstance(node, ast.Assert) else None
        if isinstance(test, ast.Compare) and len(test.ops) == 1:
            return _COMPARE_OPS.get(type(test.ops[0]), "comparison"), ast.unparse(test.left)
        return "truth", ast.unparse(test) if test is not None else statement.text.strip()
    kind = statement.method_kind
    label = ASSERT_TYPE_WORDS.get(kind, _decamel_words(kind[len("assert"):]))
    param = statement.arg_texts[0] if statement.arg_texts else ""
    return label, param


def focal_name(entry: TestAssertEntry) -> str:
    try:
        tree = ast.parse(entry.focal_method_source)
    except SyntaxError:
        return "the focal method"
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return node.name
    return "the focal method"


def generate_cot(entry: TestAssertEntry, with_answers: bool = True) -> str:
    """One three-step rationale block per placeholder, in placeholder order.

    ``with_answers`` fills step 3 with the ground-truth assert (sample use);
    otherwise step 3 stays an instruction (target use).
    """
    focal = focal_name(entry)
    blocks = []
    for statement in entry.asserts:
        assert_type, param = _assert_type_and_param(statement)
        lines = [
            f"<AssertPlaceholder{statement.index}>:",
            f"Step 1: The test method is {entry.method_name} and the focal method is {focal}.",
            f"Step 2: The parameter being tested is {param} and the assert type is {assert_type}.",
        ]
        if with_answers:
            lines.append(f"Step 3: The expected value gives the assert statement: {statement.text}")
        else:
            lines.append("Step 3: Reason the expected value and generate the corresponding assert statement.")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_greeting(
    target: TestAssertEntry,
    sample: TestAssertEntry,
    template_dir: str | Path | None = None,
) -> PromptMessage:
    if sample.id == target.id:
        raise ValueError("sample must differ from target")
    if "oversize" in sample.flags:
        raise OversizeError("sample-oversize")
    template = load_template("greeting", template_dir)
    numbered = "\n".join(f"{a.index}. {a.text}" for a in sample.asserts)
    text = template.format(
        flavor_instruction=FLAVOR_INSTRUCTIONS[target.flavor],
        sample_focal=sample.focal_method_source,
        sample_test=sample.masked_test_source,
        sample_cot=generate_cot(sample, with_answers=True),
        sample_assertions=numbered,
    )
    return PromptMessage(phase="greeting", text=text, entry_id=target.id)


def render_query(
    target: TestAssertEntry, template_dir: str | Path | None = None
) -> PromptMessage:
    if "oversize" in target.flags:
        raise OversizeError("target-oversize")
    template = load_template("query", template_dir)
    globals_section = (
        f"Global Variables:\n{target.globals_source}\n\n" if target.globals_source else ""
    )
    text = template.format(
        focal=target.focal_method_source,
        globals_section=globals_section,
        test=target.masked_test_source,
        n_placeholders=len(target.asserts),
    )
    return PromptMessage(phase="query", text=text, entry_id=target.id)


def render_feedback(
    failures,
    predictions: PredictionSet,
    template_dir: str | Path | None = None,
) -> PromptMessage:
    """Quote each execution failure back to the model.

    ``failures`` are harness FailureDetail values; each must name a
    placeholder. The paper-shaped "Expected= x, Actual= y" line is kept
    verbatim so the model can anchor on it.
    """
    if not failures:
        raise ValueError("at least one failure required")
    preds = predictions.by_index()
    blocks = []
    for failure in sorted(failures, key=lambda f: f.placeholder_index):
        idx = failure.placeholder_index
        lines = [
            f"<AssertPlaceholder{idx}> failed when the test was executed.",
            f"Your assert: {preds.get(idx, '(missing)')}",
        ]
        if failure.expected or failure.actual:
            detail = f"Expected= {failure.expected}, Actual= {failure.actual}"
            if failure.message:
                detail += f", Details= {failure.message}"
            lines.append(detail)
        else:
            lines.append(f"Details= {failure.message}")
        blocks.append("\n".join(lines))
    template = load_template("feedback", template_dir)
    text = template.format(failure_blocks="\n\n".join(blocks) + "\n")
    return PromptMessage(phase="feedback", text=text, entry_id=predictions.entry_id)


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

def _brackets_unbalanced(text: str) -> bool:
    pairs = {"(": ")", "[": "]", "{": "}"}
    depth = 0
    for ch in text:
        if ch in pairs:
            depth += 1
        elif ch in pairs.values():
            depth -= 1
    return depth > 0


def parse_predictions(
    raw: str, expected_count: int, entry_id: str = "", round_no: int = 1
) -> PredictionSet:
    """Read the final "Generated Assertions" section of a model reply.

    Accepts "k.", "k)" and dash-prefixed numbering, joins continuation lines
    while brackets stay open, and tolerates surrounding code fences. Anything
    short of exactly 1..n one-statement predictions is a malformed response.
    """
    sections = list(_SECTION_RE.finditer(raw))
    if not sections:
        raise MalformedResponseError("missing 'Generated Assertions' section", raw)
    lines = raw[sections[-1].end():].splitlines()
    predictions: dict[int, str] = {}
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if stripped.startswith("```"):
            i += 1
            continue
        match = _ITEM_RE.match(lines[i])
        if match:
            index = int(match.group(1))
            statement = match.group(2).strip()
            while _brackets_unbalanced(statement) and i + 1 < len(lines):
                i += 1
                statement += "\n" + lines[i]
            statement = statement.strip().strip("`").strip()
            if index in predictions:
                raise MalformedResponseError(f"duplicate prediction index {index}", raw)
            predictions[index] = statement
        i += 1
    if sorted(predictions) != list(range(1, expected_count + 1)):
        raise MalformedResponseError(
            f"expected {expected_count} predictions, got indices {sorted(predictions)}",
            raw,
        )
    return PredictionSet(
        entry_id=entry_id,
        round=round_no,
        predictions=[(k, predictions[k]) for k in sorted(predictions)],
        raw_response=raw,
    )


def write_response(predictions: list[tuple[int, str]], preamble: str = "") -> str:
    """Render a synthetic model reply for a prediction set (test plumbing:
    the round-trip inverse of parse_predictions)."""
    body = "\n".join(f"{k}. {text}" for k, text in predictions)
    return f"{preamble}Generated Assertions:\n{body}\n"

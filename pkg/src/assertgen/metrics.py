"""Scoring of predicted assert statements against ground truth.

Four metrics: accurate match (functional equivalence via token-normalized
comparison, symmetric-argument swaps, and an extensible equivalence table),
longest-common-subsequence percentage, Levenshtein edit distance, and assert
method match (library flavor only).
"""

from __future__ import annotations

import ast
import copy
import io
import json
import logging
import re
import tokenize
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

_METAVAR = re.compile(r"^_[A-Z][A-Z0-9_]*$")
_SKIP_TOKENS = {
    tokenize.NEWLINE,
    tokenize.NL,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.COMMENT,
    tokenize.ENCODING,
    tokenize.ENDMARKER,
}

# Kinds whose two leading arguments (or compare operands) may be swapped
# without changing meaning.
SYMMETRIC_KINDS = {"assertEqual", "assertNotEqual"}
SYMMETRIC_OPS = (ast.Eq, ast.NotEq)


# ---------------------------------------------------------------------------
# Equivalence table
# ---------------------------------------------------------------------------

@dataclass
class EquivalenceGroup:
    name: str
    kinds: list[str]
    pattern: str = ""  # variant form, with _A/_B/... metavariables
    rewrite: str = ""  # canonical form
    builtin: str = ""  # name of a built-in handler instead of pattern/rewrite


@dataclass
class EquivalenceTable:
    groups: list[EquivalenceGroup]
    version: str = "1"

    @classmethod
    def load(cls, path: Path | str | None = None) -> "EquivalenceTable":
        if path is None:
            text = resources.files("assertgen").joinpath("data/equivalence_groups.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text)
        groups = [EquivalenceGroup(**g) for g in raw["groups"]]
        return cls(groups=groups, version=str(raw.get("version", "1")))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _canonical_string_token(tok: str) -> str:
    try:
        return repr(ast.literal_eval(tok))
    except (ValueError, SyntaxError):
        return tok


def normalize(text: str) -> list[str]:
    """Lex a statement into its canonical token sequence.

    Whitespace, newlines, and comments are dropped; string literals are
    re-rendered with canonical (single-preferred) quoting. Unparseable text
    falls back to a single whitespace-collapsed token, which keeps the
    comparison meaningful while flagging the degradation.
    """
    try:
        tokens = []
        for tok in tokenize.generate_tokens(io.StringIO(text).readline):
            if tok.type in _SKIP_TOKENS or not tok.string:
                continue
            if tok.type == tokenize.STRING:
                tokens.append(_canonical_string_token(tok.string))
            else:
                tokens.append(tok.string)
        return tokens
    except (tokenize.TokenError, IndentationError, SyntaxError):
        log.debug("normalize fallback for %r", text[:80])
        return [" ".join(text.split())]


def _parse_statement(text: str) -> ast.stmt | None:
    try:
        tree = ast.parse(text.strip())
    except (SyntaxError, ValueError):
        return None
    return tree.body[0] if len(tree.body) == 1 else None


class _StripSelfReceiver(ast.NodeTransformer):
    """Rewrite ``self.assertX(...)`` calls to bare ``assertX(...)``."""

    def visit_Call(self, node: ast.Call) -> ast.Call:
        self.generic_visit(node)
        func = node.func
        if (
            isinstance(func, ast.Attribute)
            and isinstance(func.value, ast.Name)
            and func.value.id == "self"
            and func.attr.startswith("assert")
        ):
            node.func = ast.copy_location(ast.Name(id=func.attr, ctx=ast.Load()), func)
        return node


def method_kind_of(text: str) -> str | None:
    """Extract the assert kind: "assert" for the keyword form, else the
    library method name; None when the text is not an assert statement."""
    stmt = _parse_statement(text)
    if stmt is None:
        return None
    if isinstance(stmt, ast.Assert):
        return "assert"
    if isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Call):
        name = _callable_assert_name(stmt.value)
        return name
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        for item in stmt.items:
            if isinstance(item.context_expr, ast.Call):
                name = _callable_assert_name(item.context_expr)
                if name:
                    return name
    return None


def _callable_assert_name(call: ast.Call) -> str | None:
    func = call.func
    if isinstance(func, ast.Attribute) and func.attr.startswith("assert"):
        return func.attr
    if isinstance(func, ast.Name) and func.id.startswith("assert"):
        return func.id
    return None


# ---------------------------------------------------------------------------
# Pattern matching and rewriting
# ---------------------------------------------------------------------------

def _match(pat, node, bindings: dict) -> bool:
    if isinstance(pat, ast.Name) and _METAVAR.match(pat.id):
        if not isinstance(node, ast.expr):
            return False
        dump = ast.dump(node)
        if pat.id in bindings:
            return bindings[pat.id][1] == dump
        bindings[pat.id] = (node, dump)
        return True
    if isinstance(pat, ast.AST):
        if not isinstance(node, ast.AST) or type(pat) is not type(node):
            return False
        return all(
            name == "ctx" or _match(getattr(pat, name, None), getattr(node, name, None), bindings)
            for name in pat._fields
        )
    if isinstance(pat, list):
        return (
            isinstance(node, list)
            and len(pat) == len(node)
            and all(_match(p, n, bindings) for p, n in zip(pat, node))
        )
    return pat == node


class _Substitute(ast.NodeTransformer):
    def __init__(self, bindings: dict):
        self.bindings = bindings

    def visit_Name(self, node: ast.Name):
        if _METAVAR.match(node.id) and node.id in self.bindings:
            return copy.deepcopy(self.bindings[node.id][0])
        return node


def _rewrite_once(stmt: ast.stmt, src_pattern: str, dst_pattern: str) -> ast.stmt | None:
    src = _parse_statement(src_pattern)
    dst = _parse_statement(dst_pattern)
    if src is None or dst is None:
        return None
    bindings: dict = {}
    if not _match(src, stmt, bindings):
        return None
    out = _Substitute(bindings).visit(copy.deepcopy(dst))
    return ast.fix_missing_locations(out)


def _raises_one_line(stmt: ast.stmt) -> ast.stmt | None:
    """Canonicalize a ``with assertRaises(E): f(...)`` block to the one-line
    ``assertRaises(E, f, ...)`` call."""
    if not isinstance(stmt, (ast.With, ast.AsyncWith)) or len(stmt.body) != 1:
        return None
    body = stmt.body[0]
    if not (isinstance(body, ast.Expr) and isinstance(body.value, ast.Call)):
        return None
    for item in stmt.items:
        ctx = item.context_expr
        if isinstance(ctx, ast.Call):
            name = _callable_assert_name(ctx)
            if name and name.startswith("assertRaises"):
                call = ast.Call(
                    func=ast.Name(id=name, ctx=ast.Load()),
                    args=[*ctx.args, body.value.func, *body.value.args],
                    keywords=[*ctx.keywords, *body.value.keywords],
                )
                return ast.fix_missing_locations(ast.Expr(value=call))
    return None


_BUILTIN_REWRITES = {"raises_block": _raises_one_line}


def _swapped(stmt: ast.stmt) -> ast.stmt | None:
    """Swap the two operands of a symmetric assert, if applicable."""
    out = copy.deepcopy(stmt)
    if isinstance(out, ast.Expr) and isinstance(out.value, ast.Call):
        name = _callable_assert_name(out.value)
        if name in SYMMETRIC_KINDS and len(out.value.args) >= 2:
            args = out.value.args
            args[0], args[1] = args[1], args[0]
            return out
    if isinstance(out, ast.Assert):
        test = out.test
        if (
            isinstance(test, ast.Compare)
            and len(test.ops) == 1
            and isinstance(test.ops[0], SYMMETRIC_OPS)
        ):
            test.left, test.comparators[0] = test.comparators[0], test.left
            return out
    return None


def _views(text: str, table: EquivalenceTable) -> set[tuple[str, ...]]:
    """All canonical token sequences a statement may legitimately take."""
    stmt = _parse_statement(text)
    if stmt is None:
        return {tuple(normalize(text))}
    stripped = _StripSelfReceiver().visit(copy.deepcopy(stmt))
    candidates = [stripped]
    for group in table.groups:
        if group.builtin:
            handler = _BUILTIN_REWRITES.get(group.builtin)
            rewritten = handler(stripped) if handler else None
            if rewritten is not None:
                candidates.append(rewritten)
            continue
        for src, dst in ((group.pattern, group.rewrite), (group.rewrite, group.pattern)):
            rewritten = _rewrite_once(stripped, src, dst)
            if rewritten is not None:
                candidates.append(rewritten)
    for cand in list(candidates):
        swap = _swapped(cand)
        if swap is not None:
            candidates.append(swap)
    return {tuple(normalize(ast.unparse(c))) for c in candidates}


def accurate_match(pred: str, orig: str, table: EquivalenceTable) -> bool:
    """Functional-equivalence match between a prediction and the original."""
    if not pred.strip() or not orig.strip():
        return False
    if normalize(pred) == normalize(orig):
        return True
    return bool(_views(pred, table) & _views(orig, table))


# ---------------------------------------------------------------------------
# String metrics
# ---------------------------------------------------------------------------

def lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def lcs_percent(pred: str, orig: str, unit: str = "character") -> float:
    """LCS length relative to the original, as a percentage."""
    if unit == "token":
        pred_seq, orig_seq = normalize(pred), normalize(orig)
    else:
        pred_seq, orig_seq = pred, orig
    if not orig_seq:
        raise ValueError("original assert must be non-empty")
    return lcs_length(pred_seq, orig_seq) / len(orig_seq) * 100.0


def edit_distance(pred: str, orig: str) -> int:
    """Levenshtein distance over characters."""
    if not pred:
        return len(orig)
    if not orig:
        return len(pred)
    prev = list(range(len(orig) + 1))
    for i, x in enumerate(pred, start=1):
        cur = [i]
        for j, y in enumerate(orig, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[len(orig)]


def assert_method_match(pred: str, orig: str) -> bool | None:
    """Whether the predicted assert method kind equals the original's.

    Returns None when the original uses the keyword form (the metric only
    applies to testing-library asserts) or when no kind is extractable.
    """
    orig_kind = method_kind_of(orig)
    if orig_kind is None or orig_kind == "assert":
        return None
    return method_kind_of(pred) == orig_kind


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class SliceStats:
    n: int = 0
    tests: int = 0
    am_pct: float = 0.0
    am_test_pct: float = 0.0
    lcs_pct: float = 0.0
    ed_mean: float = 0.0
    amm_pct: float | None = None
    mean_orig_len: float = 0.0


@dataclass
class MetricsSummary:
    n: int
    am_pct: float
    lcs_pct: float
    ed_mean: float
    amm_pct: float | None
    am_test_pct: float
    skipped: int
    slices: dict[str, SliceStats] = field(default_factory=dict)


class _Agg:
    def __init__(self):
        self.n = 0
        self.tests = 0
        self.am_hits = 0
        self.test_am_hits = 0
        self.lcs_sum = 0.0
        self.ed_sum = 0
        self.amm_n = 0
        self.amm_hits = 0
        self.orig_len_sum = 0

    def add_test(self, per_assert: list[tuple[bool, float, int, bool | None, int]]) -> None:
        self.tests += 1
        if all(am for am, _, _, _, _ in per_assert):
            self.test_am_hits += 1
        for am, lcs, ed, amm, orig_len in per_assert:
            self.n += 1
            self.am_hits += am
            self.lcs_sum += lcs
            self.ed_sum += ed
            self.orig_len_sum += orig_len
            if amm is not None:
                self.amm_n += 1
                self.amm_hits += amm

    def stats(self) -> SliceStats:
        if self.n == 0:
            return SliceStats()
        return SliceStats(
            n=self.n,
            tests=self.tests,
            am_pct=round(self.am_hits / self.n * 100.0, 4),
            am_test_pct=round(self.test_am_hits / self.tests * 100.0, 4),
            lcs_pct=round(self.lcs_sum / self.n, 4),
            ed_mean=round(self.ed_sum / self.n, 4),
            amm_pct=round(self.amm_hits / self.amm_n * 100.0, 4) if self.amm_n else None,
            mean_orig_len=round(self.orig_len_sum / self.n, 4),
        )


def slice_key(project: str, flavor: str, multi: bool) -> str:
    return f"{project}|{flavor}|{'multi' if multi else 'single'}"


def summarize(records, truth, table: EquivalenceTable, lcs_unit: str = "character") -> MetricsSummary:
    """Score prediction records against ground-truth entries.

    ``records`` are result-file dicts carrying ``entry_id`` and
    ``final_predictions``; ``truth`` maps entry id to the mined entry.
    Entries missing from ``truth`` are skipped with a diagnostic. Missing
    individual predictions score as empty strings (a miss).
    """
    overall = _Agg()
    per_slice: dict[str, _Agg] = {}
    skipped = 0
    for record in records:
        entry = truth.get(record["entry_id"])
        if entry is None:
            skipped += 1
            log.warning("no dataset entry for %s; record skipped", record["entry_id"])
            continue
        preds = {
            p["placeholder_index"]: p["assert_text"]
            for p in record.get("final_predictions") or []
        }
        per_assert = []
        for truth_assert in entry.asserts:
            pred = preds.get(truth_assert.index, "")
            am = accurate_match(pred, truth_assert.text, table)
            lcs = lcs_percent(pred, truth_assert.text, unit=lcs_unit)
            ed = edit_distance(pred, truth_assert.text)
            amm = assert_method_match(pred, truth_assert.text) if pred else (
                None if method_kind_of(truth_assert.text) in (None, "assert") else False
            )
            per_assert.append((am, lcs, ed, amm, len(truth_assert.text)))
        key = slice_key(entry.project, entry.flavor, len(entry.asserts) > 1)
        overall.add_test(per_assert)
        per_slice.setdefault(key, _Agg()).add_test(per_assert)

    top = overall.stats()
    return MetricsSummary(
        n=top.n,
        am_pct=top.am_pct,
        lcs_pct=top.lcs_pct,
        ed_mean=top.ed_mean,
        amm_pct=top.amm_pct,
        am_test_pct=top.am_test_pct,
        skipped=skipped,
        slices={key: agg.stats() for key, agg in sorted(per_slice.items())},
    )

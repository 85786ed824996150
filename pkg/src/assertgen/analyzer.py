"""Static analysis of a Python project checkout into test-assert entries.

Walks a local checkout, finds unit-test files by naming convention, extracts
test methods with their comments intact, masks every assert statement with a
numbered ``<AssertPlaceholder{k}>`` marker, matches the focal method (the last
project-defined call before, or embedded inside, the asserts), and keeps
file-level globals as context.

All source extraction is line/offset based on the original text so that
re-substituting the ground-truth asserts reproduces the original bytes.
"""

from __future__ import annotations

import ast
import logging
import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NoAssertsError, NoFocalError

log = logging.getLogger(__name__)

PLACEHOLDER_FMT = "<AssertPlaceholder{k}>"
SKIP_DIRS = {".git", "venv", ".venv", "build", "dist", "__pycache__"}

# Character budget for the prompt payload (focal + globals + masked test).
# Entries above it are flagged "oversize", never truncated.
DEFAULT_CHAR_BUDGET = 12_000

_WRAP_PREFIX = "class _AGWRAP_:\n"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssertStatement:
    """One extracted assert: 1-based index, exact source text, kind, args."""

    index: int
    text: str
    method_kind: str  # "assert" for the keyword form, else e.g. "assertEqual"
    arg_texts: tuple[str, ...] = ()


@dataclass
class TestMethod:
    __test__ = False  # keep pytest from collecting the dataclass

    file_path: Path
    class_name: str | None
    method_name: str
    body_source: str  # full lines incl. decorators and original comments
    start_line: int  # 1-based, first decorator line or the def line
    end_line: int
    flavor: str  # "keyword" | "library"
    decorated: bool = False


@dataclass
class MaskResult:
    masked_source: str
    asserts: list[AssertStatement]
    nested: bool  # at least one assert sat under a loop/conditional


@dataclass
class FocalMethod:
    qualified_name: str
    source: str


@dataclass
class TestAssertEntry:
    __test__ = False  # keep pytest from collecting the dataclass

    id: str
    project: str
    file_path: str  # relative to the project root, posix separators
    class_name: str | None
    method_name: str
    flavor: str
    revision: str
    focal_method_source: str
    masked_test_source: str
    globals_source: str
    asserts: list[AssertStatement]
    flags: list[str] = field(default_factory=list)


@dataclass
class Rejection:
    file_path: str
    test_name: str
    reason: str  # no-asserts | no-focal | parse-error | oversize


@dataclass
class MineResult:
    entries: list[TestAssertEntry]
    rejections: list[Rejection]


class ProjectIndex:
    """Immutable view of a project: test files plus every defined callable.

    ``defined_callables`` holds fully-qualified names ("pkg.mod.Cls.meth");
    resolution of call sites is lexical, by the final name segment.
    """

    def __init__(self, root_path: Path, revision: str = "unknown"):
        self.root_path = Path(root_path)
        self.revision = revision
        self.defined_callables: set[str] = set()
        self.test_files: list[Path] = []
        self._locations: dict[str, tuple[Path, int, int]] = {}
        self._by_name: dict[str, list[str]] = {}

    @classmethod
    def build(cls, root: Path | str, revision: str | None = None) -> "ProjectIndex":
        root = Path(root)
        index = cls(root, revision or detect_revision(root))
        index.test_files = discover_test_files(root)
        for py_file in _walk_python_files(root):
            try:
                source = py_file.read_text(encoding="utf-8")
                tree = ast.parse(source)
            except (SyntaxError, UnicodeDecodeError) as exc:
                log.debug("index skip %s: %s", py_file, exc)
                continue
            module = _module_name(py_file, root)
            for qualname, node in _iter_callables(tree):
                fqn = f"{module}.{qualname}"
                start = _def_start_line(node)
                index._locations.setdefault(fqn, (py_file, start, node.end_lineno or start))
                index.defined_callables.add(fqn)
        for fqn in index.defined_callables:
            index._by_name.setdefault(fqn.rsplit(".", 1)[-1], []).append(fqn)
        for names in index._by_name.values():
            names.sort()
        return index

    def resolve(self, name: str) -> str | None:
        """Resolve a bare call name to a defined callable; smallest FQN wins."""
        candidates = self._by_name.get(name)
        return candidates[0] if candidates else None

    def definition_source(self, fqn: str) -> str:
        path, start, end = self._locations[fqn]
        lines = path.read_text(encoding="utf-8").splitlines()
        return "\n".join(lines[start - 1 : end])


# ---------------------------------------------------------------------------
# Span helpers (ast columns are utf-8 byte offsets)
# ---------------------------------------------------------------------------

def _line_offsets(source: str) -> list[int]:
    offsets = [0]
    for line in source.splitlines(keepends=True):
        offsets.append(offsets[-1] + len(line))
    return offsets


def _col_to_chars(line_text: str, col_bytes: int) -> int:
    return len(line_text.encode("utf-8")[:col_bytes].decode("utf-8", "ignore"))


def _node_span(source: str, lines: list[str], offsets: list[int], node: ast.AST) -> tuple[int, int]:
    start = offsets[node.lineno - 1] + _col_to_chars(lines[node.lineno - 1], node.col_offset)
    end = offsets[node.end_lineno - 1] + _col_to_chars(lines[node.end_lineno - 1], node.end_col_offset)
    return start, end


def _def_start_line(node: ast.AST) -> int:
    decorators = getattr(node, "decorator_list", [])
    return min([d.lineno for d in decorators] + [node.lineno])


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def discover_test_files(root: Path | str) -> list[Path]:
    """Find test files (``test_*.py`` / ``*_test.py``) under ``root``.

    Returns absolute paths sorted by relative path; virtual-env and build
    directories are pruned. Unreadable subtrees are skipped, not fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"not a readable directory: {root}")
    found: list[tuple[str, Path]] = []

    def on_error(err: OSError) -> None:
        log.warning("skipping unreadable path: %s", err)

    for dirpath, dirnames, filenames in os.walk(root, onerror=on_error):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS)
        for name in filenames:
            if not name.endswith(".py"):
                continue
            if name.startswith("test_") or name.endswith("_test.py"):
                path = Path(dirpath) / name
                if path.is_file():
                    found.append((path.relative_to(root).as_posix(), path))
    found.sort(key=lambda pair: pair[0])
    return [path for _, path in found]


def _walk_python_files(root: Path) -> list[Path]:
    result = []
    for dirpath, dirnames, filenames in os.walk(root, onerror=lambda e: None):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS)
        result.extend(Path(dirpath) / n for n in sorted(filenames) if n.endswith(".py"))
    return result


def _module_name(path: Path, root: Path) -> str:
    parts = list(path.relative_to(root).parts)
    if parts[-1] == "__init__.py":
        parts = parts[:-1]
    else:
        parts[-1] = parts[-1][: -len(".py")]
    return ".".join(parts)


def _iter_callables(tree: ast.Module):
    """Yield (qualname, node) for every function/method definition."""

    def visit(nodes, prefix):
        for node in nodes:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                qualname = f"{prefix}{node.name}" if prefix else node.name
                yield qualname, node
                yield from visit(node.body, f"{qualname}.")
            elif isinstance(node, ast.ClassDef):
                cls_prefix = f"{prefix}{node.name}." if prefix else f"{node.name}."
                yield from visit(node.body, cls_prefix)

    yield from visit(tree.body, "")


def _is_testcase_base(base: ast.expr) -> bool:
    name = base.attr if isinstance(base, ast.Attribute) else getattr(base, "id", "")
    return name.endswith("TestCase")


def _is_self_assert_call(node: ast.expr) -> bool:
    return (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Attribute)
        and isinstance(node.func.value, ast.Name)
        and node.func.value.id == "self"
        and node.func.attr.startswith("assert")
    )


def _contains_self_assert(fn_node: ast.AST) -> bool:
    return any(_is_self_assert_call(n) for n in ast.walk(fn_node))


def extract_test_methods(file: Path | str) -> list[TestMethod]:
    """Extract every ``test``-prefixed function from one file.

    ``body_source`` is the verbatim line span (decorators included), so the
    original comments survive. Raises SyntaxError for unparseable files; the
    miner records the diagnostic and moves on.
    """
    file = Path(file)
    source = file.read_text(encoding="utf-8")
    tree = ast.parse(source)
    lines = source.splitlines()
    methods: list[TestMethod] = []

    def body_text(node) -> tuple[str, int, int]:
        start = _def_start_line(node)
        end = node.end_lineno
        return "\n".join(lines[start - 1 : end]), start, end

    def add(node, class_name: str | None, class_is_testcase: bool) -> None:
        if not node.name.startswith("test"):
            return
        text, start, end = body_text(node)
        library = class_is_testcase or _contains_self_assert(node)
        methods.append(
            TestMethod(
                file_path=file,
                class_name=class_name,
                method_name=node.name,
                body_source=text,
                start_line=start,
                end_line=end,
                flavor="library" if library else "keyword",
                decorated=bool(node.decorator_list),
            )
        )

    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            add(node, None, False)
        elif isinstance(node, ast.ClassDef):
            inherits = any(_is_testcase_base(b) for b in node.bases)
            for item in node.body:
                if isinstance(item, (ast.FunctionDef, ast.AsyncFunctionDef)):
                    add(item, node.name, inherits)
    return methods


def _parse_body(body_source: str) -> tuple[ast.Module, str, int]:
    """Parse a test-method body that may carry class-level indentation.

    Returns (tree, parse_source, header_chars) where positions in the tree
    refer to parse_source and body offsets are position - header_chars.
    """
    if body_source[:1] in (" ", "\t"):
        parse_source = _WRAP_PREFIX + body_source
        return ast.parse(parse_source), parse_source, len(_WRAP_PREFIX)
    return ast.parse(body_source), body_source, 0


def _find_function(tree: ast.Module, name: str):
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == name:
            return node
    raise ValueError(f"function {name!r} not found in body source")


def _with_assert_raises_call(node: ast.With | ast.AsyncWith) -> ast.Call | None:
    for item in node.items:
        expr = item.context_expr
        if (
            isinstance(expr, ast.Call)
            and isinstance(expr.func, ast.Attribute)
            and isinstance(expr.func.value, ast.Name)
            and expr.func.value.id == "self"
            and expr.func.attr.startswith("assertRaises")
        ):
            return expr
    return None


def _collect_assert_nodes(fn_node) -> list[tuple[ast.stmt, str, ast.Call | None, bool]]:
    """Collect assert statements in source order.

    A ``with self.assertRaises(...)`` block counts as one assert covering the
    whole statement; asserts under loops/conditionals are collected but
    flagged nested. Nested def/class bodies are not descended into.
    """
    found: list[tuple[ast.stmt, str, ast.Call | None, bool]] = []

    def walk(stmts, nested: bool) -> None:
        for stmt in stmts:
            if isinstance(stmt, ast.Assert):
                found.append((stmt, "assert", None, nested))
            elif isinstance(stmt, ast.Expr) and _is_self_assert_call(stmt.value):
                found.append((stmt, stmt.value.func.attr, stmt.value, nested))
            elif isinstance(stmt, (ast.With, ast.AsyncWith)):
                raises = _with_assert_raises_call(stmt)
                if raises is not None:
                    found.append((stmt, raises.func.attr, raises, nested))
                else:
                    walk(stmt.body, nested)
            elif isinstance(stmt, (ast.For, ast.AsyncFor, ast.While)):
                walk(stmt.body, True)
                walk(stmt.orelse, True)
            elif isinstance(stmt, ast.If):
                walk(stmt.body, True)
                walk(stmt.orelse, True)
            elif isinstance(stmt, ast.Try):
                walk(stmt.body, True)
                for handler in stmt.handlers:
                    walk(handler.body, True)
                walk(stmt.orelse, True)
                walk(stmt.finalbody, True)

    walk(fn_node.body, False)
    found.sort(key=lambda item: (item[0].lineno, item[0].col_offset))
    return found


def _call_arg_texts(call: ast.Call, parse_source: str) -> tuple[str, ...]:
    texts = [ast.get_source_segment(parse_source, a) or "" for a in call.args]
    for kw in call.keywords:
        value = ast.get_source_segment(parse_source, kw.value) or ""
        texts.append(value if kw.arg is None else f"{kw.arg}={value}")
    return tuple(texts)


def extract_asserts(test: TestMethod) -> MaskResult:
    """Mask every assert in the test body with ``<AssertPlaceholder{k}>``.

    Replacement is span-exact: indentation, trailing comments, and the rest
    of the body are untouched, so substituting the recorded texts back
    reproduces the original body byte-identically.
    """
    tree, parse_source, header = _parse_body(test.body_source)
    fn_node = _find_function(tree, test.method_name)
    collected = _collect_assert_nodes(fn_node)
    if not collected:
        raise NoAssertsError(f"{test.method_name}: no asserts")

    lines = parse_source.splitlines(keepends=True)
    plain_lines = parse_source.splitlines()
    offsets = _line_offsets(parse_source)

    asserts: list[AssertStatement] = []
    pieces: list[str] = []
    cursor = 0
    nested_any = False
    for k, (stmt, kind, call, nested) in enumerate(collected, start=1):
        start, end = _node_span(parse_source, plain_lines, offsets, stmt)
        start -= header
        end -= header
        text = test.body_source[start:end]
        args = _call_arg_texts(call, parse_source) if call is not None else ()
        asserts.append(AssertStatement(index=k, text=text, method_kind=kind, arg_texts=args))
        pieces.append(test.body_source[cursor:start])
        pieces.append(PLACEHOLDER_FMT.format(k=k))
        cursor = end
        nested_any = nested_any or nested
    pieces.append(test.body_source[cursor:])
    return MaskResult(masked_source="".join(pieces), asserts=asserts, nested=nested_any)


def _call_name(call: ast.Call) -> str | None:
    if isinstance(call.func, ast.Name):
        return call.func.id
    if isinstance(call.func, ast.Attribute):
        return call.func.attr
    return None


def identify_focal_method(test: TestMethod, index: ProjectIndex) -> FocalMethod:
    """Pick the focal method for a test.

    The last project-defined call before the first assert wins; when no such
    call exists, the last project-defined call embedded inside any assert's
    arguments is used. Calls on one line are ordered left to right.
    """
    tree, parse_source, _ = _parse_body(test.body_source)
    fn_node = _find_function(tree, test.method_name)
    collected = _collect_assert_nodes(fn_node)
    assert_spans = [
        ((s.lineno, s.col_offset), (s.end_lineno, s.end_col_offset))
        for s, _, _, _ in collected
    ]
    first_assert_pos = min(span[0] for span in assert_spans) if assert_spans else None

    calls: list[tuple[tuple[int, int], str]] = []
    for stmt in fn_node.body:
        for node in ast.walk(stmt):
            if isinstance(node, ast.Call) and not _is_self_assert_call(node):
                name = _call_name(node)
                if name:
                    calls.append(((node.lineno, node.col_offset), name))
    calls.sort(key=lambda item: item[0])

    def pick(candidates: list[tuple[tuple[int, int], str]]) -> FocalMethod | None:
        for _, name in reversed(candidates):
            fqn = index.resolve(name)
            if fqn is not None:
                return FocalMethod(qualified_name=fqn, source=index.definition_source(fqn))
        return None

    before = [c for c in calls if first_assert_pos is None or c[0] < first_assert_pos]
    focal = pick(before)
    if focal is None:
        inside = [
            c
            for c in calls
            if any(start <= c[0] <= end for start, end in assert_spans)
        ]
        # function references handed to a library assert (assertRaises style)
        # count as embedded candidates too
        for _, _, assert_call, _ in collected:
            if assert_call is None:
                continue
            for arg in assert_call.args:
                if isinstance(arg, ast.Name):
                    inside.append(((arg.lineno, arg.col_offset), arg.id))
                elif isinstance(arg, ast.Attribute):
                    inside.append(((arg.lineno, arg.col_offset), arg.attr))
        inside.sort(key=lambda item: item[0])
        focal = pick(inside)
    if focal is None:
        raise NoFocalError(f"{test.method_name}: no project-defined call found")
    return focal


def collect_context(file: Path | str) -> str:
    """Return module-level assignment lines (with their comments), in order."""
    source = Path(file).read_text(encoding="utf-8")
    tree = ast.parse(source)
    lines = source.splitlines()
    chunks = [
        "\n".join(lines[node.lineno - 1 : node.end_lineno])
        for node in tree.body
        if isinstance(node, (ast.Assign, ast.AnnAssign))
    ]
    return "\n".join(chunks)


def detect_revision(root: Path) -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=root,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def entry_id(project: str, rel_path: str, class_name: str | None, method_name: str) -> str:
    return f"{project}::{rel_path}::{class_name or ''}::{method_name}"


def mine_project(
    root: Path | str,
    project: str | None = None,
    revision: str | None = None,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> MineResult:
    """Run the full analysis over a checkout and build dataset entries."""
    root = Path(root)
    project = project or root.name
    index = ProjectIndex.build(root, revision)
    entries: list[TestAssertEntry] = []
    rejections: list[Rejection] = []

    for test_file in index.test_files:
        rel = test_file.relative_to(root).as_posix()
        try:
            methods = extract_test_methods(test_file)
            globals_source = collect_context(test_file)
        except SyntaxError as exc:
            rejections.append(Rejection(rel, "", "parse-error"))
            log.warning("parse-error %s: %s", rel, exc)
            continue
        for method in methods:
            try:
                mask = extract_asserts(method)
            except NoAssertsError:
                rejections.append(Rejection(rel, method.method_name, "no-asserts"))
                continue
            try:
                focal = identify_focal_method(method, index)
            except NoFocalError:
                rejections.append(Rejection(rel, method.method_name, "no-focal"))
                continue
            flags = []
            if mask.nested:
                flags.append("nested-assert")
            if method.decorated:
                flags.append("decorated")
            payload = len(focal.source) + len(globals_source) + len(mask.masked_source)
            if payload > char_budget:
                flags.append("oversize")
                rejections.append(Rejection(rel, method.method_name, "oversize"))
            entries.append(
                TestAssertEntry(
                    id=entry_id(project, rel, method.class_name, method.method_name),
                    project=project,
                    file_path=rel,
                    class_name=method.class_name,
                    method_name=method.method_name,
                    flavor=method.flavor,
                    revision=index.revision,
                    focal_method_source=focal.source,
                    masked_test_source=mask.masked_source,
                    globals_source=globals_source,
                    asserts=mask.asserts,
                    flags=flags,
                )
            )
    return MineResult(entries=entries, rejections=rejections)

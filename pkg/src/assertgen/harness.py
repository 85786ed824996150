"""Inject predicted asserts into a sandbox copy of the project and run pytest.

The origin checkout is never written: each run batch works in a disposable
full copy, and every patch rebuilds the target file from the origin bytes so
entries sharing a file cannot contaminate each other. Failure details are
extracted from pytest's assertion output (text mode) or from the shim
plugin's JSON report when present (structured mode).
"""

from __future__ import annotations

import ast
import json
import logging
import os
import re
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .analyzer import TestAssertEntry, extract_test_methods
from .errors import RunnerMissingError

log = logging.getLogger(__name__)

REPORT_FILENAME = ".clap_report.json"
DEFAULT_TIMEOUT_S = 60

_COPY_IGNORE = shutil.ignore_patterns(".git", "__pycache__", ".pytest_cache", "venv", ".venv")

# pytest comparison dump: "E       assert 4 == 5"
_COMPARE_LINE = re.compile(
    r"^E\s+(?:AssertionError: )?assert (.+?) (==|!=|is not|is|not in|in|<=|>=|<|>) (.+)$"
)
# unittest-style messages: "E       AssertionError: 4 != 5"
_UNITTEST_DIFF = re.compile(r"^E\s+AssertionError: (.+?) != (.+)$")
_NOT_FOUND = re.compile(r"^E\s+AssertionError: (.+?) not found in (.+)$")
_ASSERTION_MSG = re.compile(r"^E\s+AssertionError: (.+)$")
_ANY_E_LINE = re.compile(r"^E\s+(.+)$")
_LOCATION = re.compile(r"^(\S+?\.py):(\d+):", re.MULTILINE)


@dataclass
class Workspace:
    origin_root: Path
    sandbox_root: Path
    active: bool = True

    def close(self) -> None:
        if self.active:
            shutil.rmtree(self.sandbox_root, ignore_errors=True)
            self.active = False

    def __enter__(self) -> "Workspace":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def create_workspace(origin_root: Path | str, base_dir: Path | str | None = None) -> Workspace:
    origin = Path(origin_root).resolve()
    sandbox = Path(tempfile.mkdtemp(prefix="assertgen-", dir=base_dir))
    shutil.copytree(origin, sandbox, ignore=_COPY_IGNORE, dirs_exist_ok=True)
    return Workspace(origin_root=origin, sandbox_root=sandbox)


@dataclass
class FailureDetail:
    placeholder_index: int  # 0 when unattributable
    expected: str = ""
    actual: str = ""
    message: str = ""


@dataclass
class ExecutionReport:
    entry_id: str
    verdict: str  # passed | failed | error | timeout
    failures: list[FailureDetail] = field(default_factory=list)
    raw_output: str = ""
    duration_s: float = 0.0


@dataclass
class Injection:
    source: str  # the patched test-method source
    placeholder_lines: dict[int, tuple[int, int]]  # method-relative 1-based spans


# ---------------------------------------------------------------------------
# Injection
# ---------------------------------------------------------------------------

def _reindent(prediction: str, indent: str) -> str:
    lines = prediction.split("\n")
    return "\n".join(
        [lines[0]] + [indent + line if line.strip() else line for line in lines[1:]]
    )


def _splice(masked: str, predictions: dict[int, str], reindent: bool) -> Injection:
    out: list[str] = []
    spans: dict[int, tuple[int, int]] = {}
    cursor = 0
    line_no = 1
    for index in sorted(predictions):
        token = f"<AssertPlaceholder{index}>"
        pos = masked.find(token, cursor)
        if pos < 0:
            raise ValueError(f"placeholder {index} not found in masked source")
        prefix = masked[cursor:pos]
        out.append(prefix)
        line_no += prefix.count("\n")
        injected = predictions[index]
        if reindent:
            line_start = masked.rfind("\n", 0, pos) + 1
            lead = masked[line_start:pos]
            injected = _reindent(injected, lead if lead.strip() == "" else "")
        out.append(injected)
        spans[index] = (line_no, line_no + injected.count("\n"))
        line_no += injected.count("\n")
        cursor = pos + len(token)
    out.append(masked[cursor:])
    return Injection(source="".join(out), placeholder_lines=spans)


def _method_source_parses(source: str) -> bool:
    probe = ("if True:\n" + source) if source[:1] in (" ", "\t") else source
    try:
        ast.parse(probe)
        return True
    except (SyntaxError, IndentationError):
        return False


def inject_asserts(entry: TestAssertEntry, predictions: dict[int, str]) -> Injection:
    """Substitute predictions for every placeholder of the masked test.

    The verbatim splice is tried first, which keeps ground-truth texts (whose
    continuation lines carry their original absolute indentation) byte-exact.
    If the spliced method no longer parses, the predictions are treated as
    relatively indented (model style) and re-indented to each placeholder's
    indentation.
    """
    expected = {a.index for a in entry.asserts}
    if set(predictions) != expected:
        raise ValueError(
            f"prediction indices {sorted(predictions)} do not cover placeholders {sorted(expected)}"
        )
    verbatim = _splice(entry.masked_test_source, predictions, reindent=False)
    if _method_source_parses(verbatim.source):
        return verbatim
    return _splice(entry.masked_test_source, predictions, reindent=True)


def _locate_method(file_text: str, entry: TestAssertEntry, path: Path) -> tuple[int, int]:
    for method in extract_test_methods(path):
        if method.method_name == entry.method_name and method.class_name == entry.class_name:
            return method.start_line, method.end_line
    raise LookupError(f"test method {entry.method_name!r} not found in {path}")


def patch_file(ws: Workspace, entry: TestAssertEntry, injection: Injection) -> dict[int, tuple[int, int]]:
    """Write the patched file into the sandbox, rebuilding from origin bytes.

    Returns placeholder line spans in file coordinates.
    """
    origin_file = ws.origin_root / entry.file_path
    target_file = ws.sandbox_root / entry.file_path
    original = origin_file.read_text(encoding="utf-8")
    start, end = _locate_method(original, entry, origin_file)
    lines = original.splitlines(keepends=True)
    trailing_newline = "\n" if (end - 1 < len(lines) and lines[end - 1].endswith("\n")) else ""
    patched = "".join(lines[: start - 1]) + injection.source + trailing_newline + "".join(lines[end:])
    target_file.write_text(patched, encoding="utf-8")
    offset = start - 1
    return {k: (s + offset, e + offset) for k, (s, e) in injection.placeholder_lines.items()}


def node_id_for(entry: TestAssertEntry) -> str:
    if entry.class_name:
        return f"{entry.file_path}::{entry.class_name}::{entry.method_name}"
    return f"{entry.file_path}::{entry.method_name}"


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

def run_test(
    ws: Workspace,
    node_id: str,
    timeout_s: int = DEFAULT_TIMEOUT_S,
    shim_dir: Path | str | None = None,
    report_path: Path | str | None = None,
) -> tuple[str, str, float]:
    """Run one test node with pytest inside the sandbox.

    Returns (verdict, raw_output, duration). Exit status mapping: 0 passed,
    1 failed, anything else (collection, usage, internal) error.
    """
    cmd = [sys.executable, "-m", "pytest", node_id, "-q", "-x", "--tb=long", "-p", "no:cacheprovider"]
    env = dict(os.environ)
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    if shim_dir is not None:
        env["PYTHONPATH"] = f"{shim_dir}{os.pathsep}" + env.get("PYTHONPATH", "")
        env["CLAP_REPORT_PATH"] = str(report_path or ws.sandbox_root / REPORT_FILENAME)
        cmd.extend(["-p", "assertgen_shim"])
    started = time.monotonic()
    try:
        proc = subprocess.run(
            cmd,
            cwd=ws.sandbox_root,
            capture_output=True,
            text=True,
            timeout=timeout_s,
            env=env,
        )
    except subprocess.TimeoutExpired as exc:
        duration = time.monotonic() - started
        raw = (exc.stdout or "") + (exc.stderr or "")
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", "replace")
        return "timeout", raw, duration
    duration = time.monotonic() - started
    raw = proc.stdout + proc.stderr
    if "No module named pytest" in proc.stderr:
        raise RunnerMissingError(proc.stderr.strip())
    if proc.returncode == 0:
        verdict = "passed"
    elif proc.returncode == 1:
        verdict = "failed"
    else:
        verdict = "error"
    return verdict, raw, duration


# ---------------------------------------------------------------------------
# Failure parsing
# ---------------------------------------------------------------------------

def _attribute_line(raw_output: str, placeholder_lines: dict[int, tuple[int, int]] | None) -> int:
    if not placeholder_lines:
        return 0
    hit = 0
    for match in _LOCATION.finditer(raw_output):
        line = int(match.group(2))
        for index, (start, end) in placeholder_lines.items():
            if start <= line <= end:
                hit = index
    return hit


def parse_failure(
    raw_output: str,
    placeholder_lines: dict[int, tuple[int, int]] | None = None,
) -> list[FailureDetail]:
    """Extract expected/actual/message from a failed pytest run (text mode)."""
    expected = actual = message = ""
    for line in raw_output.splitlines():
        compare = _COMPARE_LINE.match(line)
        if compare and not (expected or actual):
            actual, op, expected = compare.group(1), compare.group(2), compare.group(3)
            if not message:
                message = f"assert {actual} {op} {expected}"
            continue
        diff = _UNITTEST_DIFF.match(line)
        if diff and not (expected or actual):
            actual, expected = diff.group(1), diff.group(2)
            if not message:
                message = f"{actual} != {expected}"
            continue
        not_found = _NOT_FOUND.match(line)
        if not_found and not (expected or actual):
            actual, expected = not_found.group(1), not_found.group(2)
            continue
        msg = _ASSERTION_MSG.match(line)
        if msg and not message:
            message = msg.group(1).strip()
    if not (expected or actual or message):
        for line in raw_output.splitlines():
            any_e = _ANY_E_LINE.match(line)
            if any_e:
                message = any_e.group(1).strip()
                break
    if not (expected or actual or message):
        tail = [l for l in raw_output.splitlines() if l.strip()]
        message = tail[-1].strip() if tail else "unparseable failure output"
    index = _attribute_line(raw_output, placeholder_lines)
    return [FailureDetail(placeholder_index=index, expected=expected, actual=actual, message=message)]


def _failures_from_shim(
    report_file: Path, placeholder_lines: dict[int, tuple[int, int]] | None
) -> list[FailureDetail] | None:
    try:
        reports = json.loads(report_file.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return None
    failures: list[FailureDetail] = []
    for report in reports:
        for failure in report.get("failures", []):
            index = 0
            line = failure.get("line", 0)
            for k, (start, end) in (placeholder_lines or {}).items():
                if start <= line <= end:
                    index = k
            failures.append(
                FailureDetail(
                    placeholder_index=index,
                    expected=failure.get("expected", ""),
                    actual=failure.get("actual", ""),
                    message=failure.get("message", ""),
                )
            )
    return failures or None


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def execute_prediction_set(
    ws: Workspace,
    entry: TestAssertEntry,
    predictions: dict[int, str],
    timeout_s: int = DEFAULT_TIMEOUT_S,
    shim_dir: Path | str | None = None,
) -> ExecutionReport:
    """Inject, run, and parse one prediction set for one entry."""
    for index in sorted(predictions):
        try:
            ast.parse(predictions[index])
        except SyntaxError:
            return ExecutionReport(
                entry_id=entry.id,
                verdict="error",
                failures=[FailureDetail(placeholder_index=index, message="syntax")],
            )
    injection = inject_asserts(entry, predictions)
    spans = patch_file(ws, entry, injection)
    report_file = ws.sandbox_root / REPORT_FILENAME
    report_file.unlink(missing_ok=True)
    verdict, raw, duration = run_test(
        ws, node_id_for(entry), timeout_s=timeout_s, shim_dir=shim_dir, report_path=report_file
    )
    failures: list[FailureDetail] = []
    if verdict == "failed":
        if shim_dir is not None:
            failures = _failures_from_shim(report_file, spans) or parse_failure(raw, spans)
        else:
            failures = parse_failure(raw, spans)
        # default unattributed failures to the first open placeholder
        first = min(predictions)
        for failure in failures:
            if failure.placeholder_index == 0:
                failure.placeholder_index = first
    return ExecutionReport(
        entry_id=entry.id,
        verdict=verdict,
        failures=failures,
        raw_output=raw,
        duration_s=duration,
    )

"""Pytest plugin that writes a machine-readable assertion-failure report.

Load it through the plugin path (``PYTHONPATH=<dir> pytest -p assertgen_shim``).
On session end it writes a JSON array to ``.clap_report.json`` in the working
directory, or to the path named by the ``CLAP_REPORT_PATH`` environment
variable. One object per executed test:

    {"test_id": "<nodeid>", "outcome": "passed" | "failed" | "error",
     "failures": [{"line": <int>, "expected": "<repr>", "actual": "<repr>",
                   "message": "<first error line>"}]}

Line numbers refer to the file as it was run. Expected/actual come from the
runner's comparison operands when the assertion-rewrite hook fires, else from
the failure message; both render exactly like pytest's text output so text
and structured extraction stay in lockstep. Serialization problems degrade
silently: the run itself is never affected.
"""

import json
import os
import re

import pytest

_ASSERT_LINE = re.compile(
    r"^assert (.+?) (==|!=|is not|is|not in|in|<=|>=|<|>) (.+)$"
)
_DIFF_LINE = re.compile(r"^(.+?) != (.+)$")
_NOT_FOUND_LINE = re.compile(r"^(.+?) not found in (.+)$")


class _Recorder:
    def __init__(self):
        self.reports = []
        self.compare = None  # (op, repr(left), repr(right)) of the failing compare


_RECORDER = _Recorder()


def pytest_assertrepr_compare(config, op, left, right):
    try:
        _RECORDER.compare = (op, repr(left), repr(right))
    except Exception:
        _RECORDER.compare = None
    return None


def pytest_runtest_setup(item):
    _RECORDER.compare = None


def _first_line(text):
    return text.splitlines()[0].strip() if text else ""


def _failing_line(item, excinfo):
    test_path = str(getattr(item, "path", None) or item.fspath)
    line = 0
    try:
        for entry in excinfo.traceback:
            if str(entry.path) == test_path:
                line = entry.lineno + 1  # traceback entries are 0-based
    except Exception:
        pass
    return line


def _extract_failure(item, excinfo):
    message = _first_line(str(excinfo.value))
    expected = actual = ""
    if _RECORDER.compare is not None:
        _, actual, expected = (
            _RECORDER.compare[0],
            _RECORDER.compare[1],
            _RECORDER.compare[2],
        )
    else:
        matched = _ASSERT_LINE.match(message)
        if matched:
            actual, expected = matched.group(1), matched.group(3)
        else:
            diff = _DIFF_LINE.match(message)
            not_found = _NOT_FOUND_LINE.match(message)
            if diff:
                actual, expected = diff.group(1), diff.group(2)
            elif not_found:
                actual, expected = not_found.group(1), not_found.group(2)
    return {
        "line": _failing_line(item, excinfo),
        "expected": expected,
        "actual": actual,
        "message": message,
    }


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        if report.failed:  # setup/teardown crash
            _RECORDER.reports.append(
                {
                    "test_id": item.nodeid,
                    "outcome": "error",
                    "failures": [
                        {
                            "line": 0,
                            "expected": "",
                            "actual": "",
                            "message": f"{call.excinfo.typename}: {call.excinfo.value}"
                            if call.excinfo
                            else "setup failure",
                        }
                    ],
                }
            )
        return
    if report.passed:
        _RECORDER.reports.append(
            {"test_id": item.nodeid, "outcome": "passed", "failures": []}
        )
        return
    if report.skipped or call.excinfo is None:
        return
    excinfo = call.excinfo
    if excinfo.errisinstance(AssertionError):
        _RECORDER.reports.append(
            {
                "test_id": item.nodeid,
                "outcome": "failed",
                "failures": [_extract_failure(item, excinfo)],
            }
        )
    else:
        _RECORDER.reports.append(
            {
                "test_id": item.nodeid,
                "outcome": "error",
                "failures": [
                    {
                        "line": _failing_line(item, excinfo),
                        "expected": "",
                        "actual": "",
                        "message": f"{excinfo.typename}: {excinfo.value}",
                    }
                ],
            }
        )


def pytest_sessionfinish(session, exitstatus):
    path = os.environ.get("CLAP_REPORT_PATH") or os.path.join(
        os.getcwd(), ".clap_report.json"
    )
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_RECORDER.reports, fh, indent=2)
            fh.write("\n")
    except Exception:
        pass

"""Per-entry dialogue driver and the batch pipeline.

One entry flows greeting -> query -> round-1 predictions -> execution; a
failed execution earns exactly one feedback round whose predictions are
executed again for the record. Results are appended to a line-delimited JSON
file, which makes interrupted runs resumable by id.

Serialized records omit wall-clock durations and raw runner output so that a
replay-backed pipeline run is byte-for-byte deterministic.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .analyzer import TestAssertEntry
from .errors import (
    BackendUnavailableError,
    MalformedResponseError,
    NoSampleError,
    OversizeError,
    ReplayMissError,
    RunnerMissingError,
)
from .harness import ExecutionReport, Workspace, create_workspace, execute_prediction_set
from .llm import GenerationConfig, Transcript
from .prompts import (
    FORMAT_REMINDER,
    PredictionSet,
    parse_predictions,
    render_feedback,
    render_greeting,
    render_query,
    select_one_shot_sample,
)

log = logging.getLogger(__name__)


@dataclass
class Round:
    predictions: PredictionSet
    execution: ExecutionReport | None


@dataclass
class GenerationRecord:
    entry_id: str
    status: str  # ok | unparseable | oversize | backend-error | runner-error
    rounds: list[Round] = field(default_factory=list)
    final_predictions: PredictionSet | None = None


@dataclass
class PipelineDeps:
    """Everything generate_for_entry needs besides the entry itself."""

    client: object
    gen_cfg: GenerationConfig
    executor: object  # callable(entry, predictions) -> ExecutionReport
    template_dir: str | None = None


def _ask(deps: PipelineDeps, transcript: Transcript, prompt_text: str,
         entry: TestAssertEntry, round_no: int) -> PredictionSet:
    """Send one prompt and parse predictions, with a single format re-ask."""
    raw = deps.client.send(transcript, prompt_text, deps.gen_cfg)
    try:
        return parse_predictions(raw, len(entry.asserts), entry.id, round_no)
    except MalformedResponseError:
        log.info("malformed response for %s (round %d); re-asking once", entry.id, round_no)
        reminder = FORMAT_REMINDER.format(n=len(entry.asserts))
        raw = deps.client.send(transcript, reminder, deps.gen_cfg)
        return parse_predictions(raw, len(entry.asserts), entry.id, round_no)


def generate_for_entry(
    entry: TestAssertEntry,
    corpus: list[TestAssertEntry],
    deps: PipelineDeps,
) -> GenerationRecord:
    """Run the full dialogue for one entry and record every artifact."""
    record = GenerationRecord(entry_id=entry.id, status="ok")
    if "oversize" in entry.flags:
        record.status = "oversize"
        return record
    sample = select_one_shot_sample(entry, corpus)  # NoSampleError propagates
    transcript = Transcript(entry_id=entry.id)
    try:
        greeting = render_greeting(entry, sample, deps.template_dir)
        query = render_query(entry, deps.template_dir)
    except OversizeError:
        record.status = "oversize"
        return record

    try:
        deps.client.send(transcript, greeting.text, deps.gen_cfg)
        preds1 = _ask(deps, transcript, query.text, entry, round_no=1)
    except (BackendUnavailableError, ReplayMissError):
        record.status = "backend-error"
        return record
    except OversizeError:
        record.status = "oversize"
        return record
    except MalformedResponseError:
        record.status = "unparseable"
        return record

    try:
        report1 = deps.executor(entry, preds1.by_index())
    except RunnerMissingError:
        record.status = "runner-error"
        record.rounds.append(Round(preds1, None))
        record.final_predictions = preds1
        return record
    record.rounds.append(Round(preds1, report1))
    record.final_predictions = preds1

    if report1.verdict in ("error", "timeout"):
        record.status = "runner-error"
        return record
    if report1.verdict == "passed" or not report1.failures:
        return record

    # exactly one feedback round, carrying only the first failure
    feedback = render_feedback(report1.failures[:1], preds1, deps.template_dir)
    try:
        preds2 = _ask(deps, transcript, feedback.text, entry, round_no=2)
    except (BackendUnavailableError, ReplayMissError):
        record.status = "backend-error"
        return record
    except OversizeError:
        record.status = "oversize"
        return record
    except MalformedResponseError:
        record.status = "unparseable"
        return record
    try:
        report2 = deps.executor(entry, preds2.by_index())
    except RunnerMissingError:
        record.status = "runner-error"
        record.rounds.append(Round(preds2, None))
        record.final_predictions = preds2
        return record
    record.rounds.append(Round(preds2, report2))
    record.final_predictions = preds2
    return record


# ---------------------------------------------------------------------------
# Serialization (documented results-file schema)
# ---------------------------------------------------------------------------

def _predictions_payload(preds: PredictionSet | None):
    if preds is None:
        return None
    return [{"placeholder_index": k, "assert_text": t} for k, t in preds.predictions]


def _execution_payload(report: ExecutionReport | None):
    if report is None:
        return None
    return {
        "verdict": report.verdict,
        "failures": [
            {
                "placeholder_index": f.placeholder_index,
                "expected": f.expected,
                "actual": f.actual,
                "message": f.message,
            }
            for f in report.failures
        ],
    }


def record_to_dict(record: GenerationRecord) -> dict:
    return {
        "entry_id": record.entry_id,
        "status": record.status,
        "rounds": [
            {
                "round": r.predictions.round,
                "predictions": _predictions_payload(r.predictions),
                "execution": _execution_payload(r.execution),
            }
            for r in record.rounds
        ],
        "final_predictions": _predictions_payload(record.final_predictions),
    }


def record_line(record: GenerationRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def apply_filters(entries: list[TestAssertEntry], filters: dict[str, str] | None):
    if not filters:
        return list(entries)
    selected = []
    for entry in entries:
        if "project" in filters and entry.project != filters["project"]:
            continue
        if "flavor" in filters and entry.flavor != filters["flavor"]:
            continue
        if "asserts" in filters:
            want_multi = filters["asserts"] == "multi"
            if (len(entry.asserts) > 1) != want_multi:
                continue
        selected.append(entry)
    return selected


@dataclass
class PipelineStats:
    processed: int = 0
    skipped_resume: int = 0
    skipped_no_sample: int = 0


def run_pipeline(
    entries: list[TestAssertEntry],
    out_path: Path | str,
    *,
    client,
    gen_cfg: GenerationConfig,
    project_roots: dict[str, Path],
    template_dir: str | None = None,
    timeout_s: int = 60,
    workers: int = 1,
    filters: dict[str, str] | None = None,
    shim_dir: Path | str | None = None,
) -> PipelineStats:
    """Generate asserts for every selected entry, appending one JSON record
    per line. Entries already present in the output are skipped (resume)."""
    out_path = Path(out_path)
    done_ids: set[str] = set()
    if out_path.exists():
        for line in out_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                done_ids.add(json.loads(line)["entry_id"])
    out_path.touch()

    corpus = list(entries)
    selected = apply_filters(entries, filters)
    stats = PipelineStats()

    workspaces: dict[str, Workspace] = {}
    for project, root in project_roots.items():
        workspaces[project] = create_workspace(root)

    append_lock = threading.Lock()
    file_locks: dict[tuple[str, str], threading.Lock] = {}
    locks_guard = threading.Lock()

    def file_lock(entry: TestAssertEntry) -> threading.Lock:
        key = ("__all__", "__all__") if shim_dir else (entry.project, entry.file_path)
        with locks_guard:
            return file_locks.setdefault(key, threading.Lock())

    def executor_for(entry: TestAssertEntry):
        ws = workspaces.get(entry.project)
        if ws is None:
            raise RunnerMissingError(f"no project root configured for {entry.project}")

        def execute(e: TestAssertEntry, predictions: dict[int, str]) -> ExecutionReport:
            with file_lock(e):
                return execute_prediction_set(
                    ws, e, predictions, timeout_s=timeout_s, shim_dir=shim_dir
                )

        return execute

    def process(entry: TestAssertEntry) -> None:
        deps = PipelineDeps(
            client=client,
            gen_cfg=gen_cfg,
            executor=executor_for(entry),
            template_dir=template_dir,
        )
        try:
            record = generate_for_entry(entry, corpus, deps)
        except NoSampleError:
            log.warning("no one-shot sample for %s; entry skipped", entry.id)
            stats.skipped_no_sample += 1
            return
        line = record_line(record)
        with append_lock:
            with out_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        stats.processed += 1
        log.info("generated %s status=%s rounds=%d", entry.id, record.status, len(record.rounds))

    todo = [e for e in selected if e.id not in done_ids]
    stats.skipped_resume = len(selected) - len(todo)
    try:
        if workers <= 1:
            for entry in todo:
                process(entry)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(process, todo))
    finally:
        for ws in workspaces.values():
            ws.close()
    return stats

"""Dataset, results, and summary persistence plus run configuration.

Everything on disk is line-delimited JSON with a fixed key order, so files
are streamable, resumable, and byte-stable across read/write round trips.
The config file is a flat dotted-key text format; CLI flags override file
values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .analyzer import AssertStatement, TestAssertEntry
from .errors import ConfigError
from .metrics import MetricsSummary


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def entry_to_dict(entry: TestAssertEntry) -> dict:
    return {
        "id": entry.id,
        "project": entry.project,
        "file_path": entry.file_path,
        "class_name": entry.class_name,
        "method_name": entry.method_name,
        "flavor": entry.flavor,
        "revision": entry.revision,
        "focal_method_source": entry.focal_method_source,
        "masked_test_source": entry.masked_test_source,
        "globals_source": entry.globals_source,
        "asserts": [
            {
                "index": a.index,
                "text": a.text,
                "method_kind": a.method_kind,
                "arg_texts": list(a.arg_texts),
            }
            for a in entry.asserts
        ],
        "flags": list(entry.flags),
    }


def entry_from_dict(data: dict) -> TestAssertEntry:
    return TestAssertEntry(
        id=data["id"],
        project=data["project"],
        file_path=data["file_path"],
        class_name=data["class_name"],
        method_name=data["method_name"],
        flavor=data["flavor"],
        revision=data["revision"],
        focal_method_source=data["focal_method_source"],
        masked_test_source=data["masked_test_source"],
        globals_source=data["globals_source"],
        asserts=[
            AssertStatement(
                index=a["index"],
                text=a["text"],
                method_kind=a["method_kind"],
                arg_texts=tuple(a["arg_texts"]),
            )
            for a in data["asserts"]
        ],
        flags=list(data.get("flags", [])),
    )


def write_dataset(entries: list[TestAssertEntry], path: Path | str) -> None:
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate entry ids in dataset")
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry_to_dict(entry), ensure_ascii=False) + "\n")


def read_dataset(path: Path | str) -> list[TestAssertEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(entry_from_dict(json.loads(line)))
    return entries


def read_records(path: Path | str) -> list[dict]:
    return [
        json.loads(line)
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


# ---------------------------------------------------------------------------
# Summary files
# ---------------------------------------------------------------------------

def write_summary(summary: MetricsSummary, path: Path | str) -> None:
    rows = [
        {
            "slice": "overall",
            "n": summary.n,
            "am_pct": summary.am_pct,
            "am_test_pct": summary.am_test_pct,
            "lcs_pct": summary.lcs_pct,
            "ed_mean": summary.ed_mean,
            "amm_pct": summary.amm_pct,
            "skipped": summary.skipped,
        }
    ]
    for key, stats in summary.slices.items():
        rows.append(
            {
                "slice": key,
                "n": stats.n,
                "am_pct": stats.am_pct,
                "am_test_pct": stats.am_test_pct,
                "lcs_pct": stats.lcs_pct,
                "ed_mean": stats.ed_mean,
                "amm_pct": stats.amm_pct,
                "mean_orig_len": stats.mean_orig_len,
            }
        )
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_summary(path: Path | str) -> list[dict]:
    return read_records(path)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    endpoint: str = ""
    model: str = "default"
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 0.3
    mode: str = "replay"  # live | record | replay
    replay_path: str = ""
    workers: int = 1
    timeout_s: int = 60
    max_prompt_chars: int = 12_000
    template_dir: str = ""
    table_path: str = ""
    lcs_unit: str = "character"
    project_root: str = ""


_CONFIG_KEYS = {
    "llm.endpoint": ("endpoint", str),
    "llm.model": ("model", str),
    "llm.api_key_env": ("api_key_env", str),
    "llm.temperature": ("temperature", float),
    "llm.mode": ("mode", str),
    "llm.replay_path": ("replay_path", str),
    "pipeline.workers": ("workers", int),
    "pipeline.timeout_s": ("timeout_s", int),
    "pipeline.max_prompt_chars": ("max_prompt_chars", int),
    "pipeline.project_root": ("project_root", str),
    "prompt.template_dir": ("template_dir", str),
    "metrics.table_path": ("table_path", str),
    "metrics.lcs_unit": ("lcs_unit", str),
}


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_run_config(
    config_path: Path | str | None = None, overrides: dict[str, str] | None = None
) -> RunConfig:
    values: dict[str, str] = {}
    if config_path is not None:
        values.update(parse_config_text(Path(config_path).read_text(encoding="utf-8")))
    values.update(overrides or {})
    cfg = RunConfig()
    for dotted, raw in values.items():
        if dotted not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {dotted}")
        attr, cast = _CONFIG_KEYS[dotted]
        try:
            setattr(cfg, attr, cast(raw))
        except ValueError as exc:
            raise ConfigError(f"bad value for {dotted}: {raw!r}") from exc
    if not 0 <= cfg.temperature <= 2:
        raise ConfigError(f"llm.temperature out of range: {cfg.temperature}")
    if cfg.mode not in ("live", "record", "replay"):
        raise ConfigError(f"llm.mode must be live, record, or replay, not {cfg.mode!r}")
    if cfg.lcs_unit not in ("character", "token"):
        raise ConfigError(f"metrics.lcs_unit must be character or token, not {cfg.lcs_unit!r}")
    return cfg


def validate_generation_config(cfg: RunConfig) -> None:
    """Checks that only matter when the dialogue pipeline actually runs."""
    if cfg.mode == "replay" and not cfg.replay_path:
        raise ConfigError("replay mode requires llm.replay_path")
    if cfg.mode in ("live", "record") and not cfg.endpoint:
        raise ConfigError(f"{cfg.mode} mode requires llm.endpoint")


def config_field_names() -> set[str]:
    return {f.name for f in fields(RunConfig)}

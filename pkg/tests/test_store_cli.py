"""Store and CLI tests: persistence round trips, config, command surface."""

import json

import pytest

from assertgen.analyzer import mine_project
from assertgen.cli import main
from assertgen.errors import ConfigError
from assertgen.store import (
    entry_from_dict,
    entry_to_dict,
    load_run_config,
    parse_config_text,
    read_dataset,
    read_summary,
    validate_generation_config,
    write_dataset,
)


# ---------------------------------------------------------------------------
# Dataset persistence
# ---------------------------------------------------------------------------

def test_dataset_round_trip_byte_identical(maskcorpus_root, tmp_path):
    entries = mine_project(maskcorpus_root, project="maskcorpus", revision="fixed").entries
    first = tmp_path / "d1.jsonl"
    second = tmp_path / "d2.jsonl"
    write_dataset(entries, first)
    write_dataset(read_dataset(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_dataset_schema_keys(replayproj_root, tmp_path):
    entries = mine_project(replayproj_root, project="replayproj", revision="fixed").entries
    path = tmp_path / "d.jsonl"
    write_dataset(entries, path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(entries)
    for line in lines:
        row = json.loads(line)  # every line independently parseable
        assert list(row) == [
            "id", "project", "file_path", "class_name", "method_name", "flavor",
            "revision", "focal_method_source", "masked_test_source", "globals_source",
            "asserts", "flags",
        ]


def test_dataset_duplicate_ids_rejected(replayproj_root, tmp_path):
    entries = mine_project(replayproj_root, project="replayproj").entries
    with pytest.raises(ValueError):
        write_dataset(entries + entries[:1], tmp_path / "d.jsonl")


def test_entry_dict_round_trip(replayproj_root):
    entries = mine_project(replayproj_root, project="replayproj", revision="fixed").entries
    for entry in entries:
        assert entry_from_dict(entry_to_dict(entry)) == entry


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def test_config_parse_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        "# comment\n"
        "llm.mode = replay\n"
        "llm.replay_path = script.jsonl\n"
        "pipeline.workers = 3\n"
        "llm.temperature = 0.aa\n".replace("0.aa", "0.7")
    )
    cfg = load_run_config(cfg_file, {"pipeline.workers": "5"})
    assert cfg.mode == "replay"
    assert cfg.replay_path == "script.jsonl"
    assert cfg.workers == 5  # CLI overrides the file
    assert cfg.temperature == 0.7


def test_config_defaults():
    cfg = load_run_config()
    assert cfg.temperature == 0.3
    assert cfg.mode == "replay"
    assert cfg.workers == 1
    assert cfg.timeout_s == 60


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        load_run_config(None, {"llm.nope": "1"})


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        load_run_config(None, {"llm.temperature": "9"})
    with pytest.raises(ConfigError):
        load_run_config(None, {"pipeline.workers": "many"})
    with pytest.raises(ConfigError):
        load_run_config(None, {"metrics.lcs_unit": "words"})


def test_config_replay_requires_path():
    cfg = load_run_config()
    with pytest.raises(ConfigError):
        validate_generation_config(cfg)


def test_config_malformed_line():
    with pytest.raises(ConfigError):
        parse_config_text("just some words\n")


# ---------------------------------------------------------------------------
# CLI: mine
# ---------------------------------------------------------------------------

def make_stats_project(tmp_path):
    """1 single-assert and 3 multi-assert tests, per the stats-row check."""
    proj = tmp_path / "statsproj"
    proj.mkdir()
    (proj / "mod.py").write_text("def f(x):\n    return x + 1\n")
    tests = "\n\n\n".join(
        [
            "from mod import f\n\n\ndef test_one():\n    y = f(1)\n    assert y == 2",
            "def test_two():\n    y = f(2)\n    assert y == 3\n    assert y > 0",
            "def test_three():\n    y = f(3)\n    assert y == 4\n    assert y != 0",
            "def test_four():\n    y = f(4)\n    assert y == 5\n    assert y - 1 == 4",
        ]
    )
    (proj / "test_mod.py").write_text(tests + "\n")
    return proj


def test_mine_stats_row(tmp_path, capsys):
    proj = make_stats_project(tmp_path)
    out = tmp_path / "dataset.jsonl"
    code = main(["mine", str(proj), "-o", str(out), "--revision", "fixed"])
    assert code == 0
    assert "1 / 3 / 4" in capsys.readouterr().out
    assert len(read_dataset(out)) == 4


def test_mine_empty_project_fails(tmp_path, capsys):
    proj = tmp_path / "empty"
    proj.mkdir()
    out = tmp_path / "dataset.jsonl"
    assert main(["mine", str(proj), "-o", str(out)]) == 2


def test_mine_missing_root_is_user_error(tmp_path):
    assert main(["mine", str(tmp_path / "nope"), "-o", str(tmp_path / "d.jsonl")]) == 1


def test_mine_records_library_flavor(maskcorpus_root, tmp_path):
    out = tmp_path / "dataset.jsonl"
    assert main(["mine", str(maskcorpus_root), "-o", str(out), "--revision", "fixed"]) == 0
    entries = read_dataset(out)
    mail = [e for e in entries if e.file_path == "tests/test_mail.py"]
    assert mail and all(e.flavor == "library" for e in mail)


# ---------------------------------------------------------------------------
# CLI: generate / evaluate / report
# ---------------------------------------------------------------------------

@pytest.fixture
def e2e_paths(tmp_path, replayproj_root, fixtures_dir):
    dataset = tmp_path / "dataset.jsonl"
    assert main(["mine", str(replayproj_root), "-o", str(dataset),
                 "--project", "replayproj", "--revision", "fixed"]) == 0
    return {
        "dataset": dataset,
        "results": tmp_path / "results.jsonl",
        "summary": tmp_path / "summary.jsonl",
        "script": fixtures_dir / "scripts" / "e2e_happy.jsonl",
        "root": replayproj_root,
    }


def generate_args(p):
    return [
        "generate", "-d", str(p["dataset"]), "-o", str(p["results"]),
        "--set", f"llm.replay_path={p['script']}",
        "--project-root", str(p["root"]),
    ]


def test_generate_end_to_end(e2e_paths):
    assert main(generate_args(e2e_paths)) == 0
    records = [json.loads(l) for l in e2e_paths["results"].read_text().splitlines()]
    assert len(records) == 3
    assert all(r["status"] == "ok" for r in records)


def test_generate_resume_flag_free(e2e_paths):
    assert main(generate_args(e2e_paths)) == 0
    before = e2e_paths["results"].read_bytes()
    assert main(generate_args(e2e_paths)) == 0  # nothing left to do
    assert e2e_paths["results"].read_bytes() == before


def test_generate_live_without_key_is_config_error(e2e_paths, monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    args = [
        "generate", "-d", str(e2e_paths["dataset"]), "-o", str(e2e_paths["results"]),
        "--set", "llm.mode=live", "--set", "llm.endpoint=https://example.test",
        "--project-root", str(e2e_paths["root"]),
    ]
    assert main(args) == 1


def test_generate_requires_project_root(e2e_paths):
    args = [
        "generate", "-d", str(e2e_paths["dataset"]), "-o", str(e2e_paths["results"]),
        "--set", f"llm.replay_path={e2e_paths['script']}",
    ]
    assert main(args) == 1


def test_generate_filter_single(e2e_paths):
    args = generate_args(e2e_paths) + ["--filter", "asserts=single"]
    assert main(args) == 0
    records = [json.loads(l) for l in e2e_paths["results"].read_text().splitlines()]
    assert len(records) == 2


def test_evaluate_ground_truth_identity(e2e_paths, capsys):
    # identity re-injection: score the dataset's own asserts as predictions
    entries = read_dataset(e2e_paths["dataset"])
    with e2e_paths["results"].open("w") as fh:
        for entry in entries:
            record = {
                "entry_id": entry.id,
                "status": "ok",
                "rounds": [],
                "final_predictions": [
                    {"placeholder_index": a.index, "assert_text": a.text} for a in entry.asserts
                ],
            }
            fh.write(json.dumps(record) + "\n")
    assert main(["evaluate", "-r", str(e2e_paths["results"]), "-d", str(e2e_paths["dataset"]),
                 "-o", str(e2e_paths["summary"])]) == 0
    rows = read_summary(e2e_paths["summary"])
    overall = rows[0]
    assert overall["slice"] == "overall"
    assert overall["am_pct"] == 100.0
    assert overall["ed_mean"] == 0.0
    assert overall["lcs_pct"] == 100.0


def test_evaluate_empty_results(e2e_paths, capsys):
    e2e_paths["results"].write_text("")
    assert main(["evaluate", "-r", str(e2e_paths["results"]), "-d", str(e2e_paths["dataset"]),
                 "-o", str(e2e_paths["summary"])]) == 0
    rows = read_summary(e2e_paths["summary"])
    assert rows[0]["n"] == 0


def test_evaluate_missing_entry_skipped(e2e_paths, capsys):
    e2e_paths["results"].write_text(json.dumps({
        "entry_id": "ghost::x.py::::test_gone", "status": "ok", "rounds": [],
        "final_predictions": [{"placeholder_index": 1, "assert_text": "assert 1"}],
    }) + "\n")
    assert main(["evaluate", "-r", str(e2e_paths["results"]), "-d", str(e2e_paths["dataset"]),
                 "-o", str(e2e_paths["summary"])]) == 0
    assert read_summary(e2e_paths["summary"])[0]["skipped"] == 1
    assert "skipped 1" in capsys.readouterr().out


def test_report_table(e2e_paths, capsys):
    test_evaluate_ground_truth_identity(e2e_paths, capsys)
    capsys.readouterr()
    assert main(["report", "-s", str(e2e_paths["summary"])]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0].split() == ["slice", "n", "AM%", "LCS%", "ED", "AMM%"]
    assert lines[1].startswith("overall")
    assert "100.0" in lines[1]
    assert any("replayproj|keyword|single" in l for l in lines)


def test_report_slice_filter(e2e_paths, capsys):
    test_evaluate_ground_truth_identity(e2e_paths, capsys)
    capsys.readouterr()
    assert main(["report", "-s", str(e2e_paths["summary"]), "--slice", "multi"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2  # header + the one multi slice
    assert "multi" in lines[1]


def test_report_empty_summary(tmp_path, capsys):
    empty = tmp_path / "summary.jsonl"
    empty.write_text("")
    assert main(["report", "-s", str(empty)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1  # header only


def test_unknown_command_is_user_error():
    assert main(["frobnicate"]) == 1

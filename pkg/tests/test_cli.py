import json
import subprocess
import sys

import pytest

from conftest import FIXTURES, RULES
from qlint.cli import main

REPLAY = FIXTURES / "replay"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_rules_clean_writes_empty_file(tmp_path, capsys):
    out = tmp_path / "w.jsonl"
    code, stdout, _ = run(["rules", RULES / "DoubleMeas_neg.py", "--problems", "DoubleMeas", "--out", out], capsys)
    assert code == 0 and out.read_text() == "" and stdout == ""


def test_rules_found(tmp_path, capsys):
    out = tmp_path / "w.jsonl"
    code, stdout, _ = run(["rules", RULES / "DoubleMeas_pos.py", "--problems", "DoubleMeas", "--out", out], capsys)
    assert code == 1
    rec = json.loads(out.read_text())
    assert rec["problem"] == "DoubleMeas" and rec["source"] == "rule"
    assert "DoubleMeas" in stdout


def test_rules_jsonl_to_stdout(capsys):
    code, stdout, _ = run(["rules", RULES / "OldIdenGate_pos.py", "--format", "jsonl"], capsys)
    assert code == 1
    assert [json.loads(l)["problem"] for l in stdout.splitlines()] == ["OldIdenGate"]


def test_rules_syntax_error(tmp_path, capsys):
    bad = tmp_path / "bad.py"
    bad.write_text("def (:\n")
    code, _, err = run(["rules", bad], capsys)
    assert code == 2 and "bad.py" in err


def test_missing_path(capsys):
    code, _, err = run(["rules", "/nonexistent/x.py"], capsys)
    assert code == 2 and "no such file" in err


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "qlint", "rules"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "qlint", "rules", "x.py", "--problems", "Bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 2


@pytest.mark.parametrize("mode", ["cot", "rag"])
def test_llm_replay_matches_golden(mode, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(REPLAY / "corpus")
    monkeypatch.delenv("QLINT_API_KEY", raising=False)
    out = tmp_path / "pred.jsonl"
    argv = ["llm", ".", "--mode", mode, "--mock", REPLAY / "chat", "--out", out, "--format", "jsonl"]
    if mode == "rag":
        argv += ["--kb", REPLAY / "kb"]
    code, _, err = run(argv, capsys)
    assert code == 1, err
    assert out.read_bytes() == (REPLAY / f"golden_{mode}.jsonl").read_bytes()
    # only the cot script cites a line past the end of clean.py
    assert ("[42]" in err) == (mode == "cot")


def test_llm_replay_miss_is_error(tmp_path, capsys):
    src = tmp_path / "new.py"
    src.write_text("from qiskit import QuantumCircuit\nqc = QuantumCircuit(1)\n")
    code, _, err = run(["llm", src, "--mode", "cot", "--mock", REPLAY / "chat", "--problems", "DoubleMeas"], capsys)
    assert code == 2 and "replay_miss" in err


def test_llm_without_key_fails_cleanly(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("QLINT_API_KEY", raising=False)
    src = tmp_path / "a.py"
    src.write_text("from qiskit import QuantumCircuit\nqc = QuantumCircuit(1)\n")
    code, _, err = run(["llm", src, "--mode", "cot", "--problems", "DoubleMeas"], capsys)
    assert code == 2 and "QLINT_API_KEY" in err and "auth" in err


def test_llm_run_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(REPLAY / "corpus")
    run_dir = tmp_path / "run"
    code, _, _ = run(["llm", "bell.py", "--mode", "cot", "--mock", REPLAY / "chat",
                      "--problems", "DoubleMeas", "--run-dir", run_dir], capsys)
    assert code == 1
    assert (run_dir / "bell.py.DoubleMeas.prompt.txt").is_file()
    assert json.loads((run_dir / "diagnostics.json").read_text()) == {"diagnostics": [], "errors": []}


def test_eval_replay_counts(capsys):
    code, out, _ = run(["eval", "--truth", REPLAY / "truth.jsonl",
                        "--pred", REPLAY / "golden_cot.jsonl", "--label", "CoT",
                        "--pred", REPLAY / "golden_rag.jsonl", "--label", "RAG"], capsys)
    assert code == 0
    rows = [l.split() for l in out.splitlines()[2:]]
    assert rows == [["CoT", "5", "3", "1", "0.63", "0.83", "0.71"],
                    ["RAG", "6", "2", "0", "0.75", "1.00", "0.86"]]


def test_eval_reference_counts(tmp_path, capsys):
    # 70 truth sites; predictions hit 30 of them and add 47 misses
    truth = [{"file": "f.py", "problem": "OpAfterMeas", "lines": [i]} for i in range(1, 71)]
    pred = [{"file": "f.py", "problem": "OpAfterMeas", "lines": [i], "snippet": "", "explanation": "",
             "source": "rule"} for i in list(range(1, 31)) + list(range(101, 148))]
    (tmp_path / "t.jsonl").write_text("".join(json.dumps(r) + "\n" for r in truth))
    (tmp_path / "p.jsonl").write_text("".join(json.dumps(r) + "\n" for r in pred))
    code, out, _ = run(["eval", "--truth", tmp_path / "t.jsonl", "--pred", tmp_path / "p.jsonl",
                        "--label", "rules"], capsys)
    assert out.splitlines()[2].split() == ["rules", "30", "47", "40", "0.39", "0.43", "0.41"]


def test_eval_label_mismatch(capsys):
    code, _, err = run(["eval", "--truth", REPLAY / "truth.jsonl", "--pred", REPLAY / "golden_cot.jsonl",
                        "--label", "a", "--label", "b"], capsys)
    assert code == 2


def test_eval_json_per_problem(capsys):
    code, out, _ = run(["eval", "--truth", REPLAY / "truth.jsonl", "--pred", REPLAY / "golden_cot.jsonl",
                        "--pred", REPLAY / "golden_rag.jsonl", "--per-problem", "--format", "json"], capsys)
    data = json.loads(out)
    assert data["golden_cot"]["per_problem"]["DoubleMeas"]["tp"] == 1
    assert "delta" in data


def test_kb_build_and_retrieve(tmp_path, capsys):
    kb = tmp_path / "kb"
    code, out, _ = run(["kb", "build", "--truth", RULES / "truth.jsonl", "--src", RULES, "--out", kb,
                        "--embedder", "hash", "--dimension", "64"], capsys)
    assert code == 0 and "10 files included, 0 excluded" in out
    assert (kb / "manifest").read_bytes() == (REPLAY / "kb" / "manifest").read_bytes()
    code, out, _ = run(["kb", "retrieve", "--problem", "GhostCompose", "--file", RULES / "GhostCompose_pos.py",
                        "--kb", kb, "--json"], capsys)
    hit = json.loads(out)
    assert hit["source_path"] == "GhostCompose_pos.py"
    code, out, _ = run(["kb", "retrieve", "--problem", "GhostCompose", "--file", RULES / "GhostCompose_pos.py",
                        "--kb", kb], capsys)
    assert "# Problem: " in out


def test_obfuscate_cli(tmp_path, capsys):
    out = tmp_path / "o.py"
    code, stdout, _ = run(["obfuscate", RULES / "DoubleMeas_pos.py", "--seed", "3", "--out", out], capsys)
    assert code == 0 and out.is_file() and (tmp_path / "o.py.map.json").is_file()


def test_inject_cli(tmp_path, capsys):
    out, truth = tmp_path / "m.py", tmp_path / "t.jsonl"
    code, _, err = run(["inject", RULES / "DoubleMeas_neg.py", "--problem", "DoubleMeas", "--seed", "1",
                        "--out", out, "--truth", truth], capsys)
    assert code == 0 and "injected DoubleMeas" in err
    rec = json.loads(truth.read_text())
    assert rec["file"] == str(out) and rec["problem"] == "DoubleMeas"
    code, _, _ = run(["rules", out, "--problems", "DoubleMeas"], capsys)
    assert code == 1


def test_inject_not_injectable(tmp_path, capsys):
    src = tmp_path / "x.py"
    src.write_text("x = 1\n")
    code, _, err = run(["inject", src, "--problem", "DoubleMeas"], capsys)
    assert code == 2 and "not injectable" in err

import json
from pathlib import Path

import pytest

from qlint.problems import ProblemType

FIXTURES = Path(__file__).parent / "fixtures"
RULES = FIXTURES / "rules"


def rule_truth():
    out = {}
    for raw in (RULES / "truth.jsonl").read_text().splitlines():
        rec = json.loads(raw)
        out[ProblemType.parse(rec["problem"])] = (rec["file"], tuple(rec["lines"]))
    return out


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# Entries per problem in the verified knowledge base.
KB_ENTRIES = {
    ProblemType.OpAfterMeas: 38, ProblemType.ConstClasBit: 25, ProblemType.OversizedCircuit: 20,
    ProblemType.InsuffClasReg: 18, ProblemType.MeasAllAbuse: 16, ProblemType.DoubleMeas: 15,
    ProblemType.CondWoMeas: 14, ProblemType.OldIdenGate: 10, ProblemType.GhostCompose: 6,
    ProblemType.OpAfterTransp: 4,
}


def synthetic_candidates(oversized: int = 0):
    """157 small files spread over the reference distribution (9 files carry two problems), plus oversized extras."""
    from qlint.rag import KbCandidate

    slots = [p for p, n in KB_ENTRIES.items() for _ in range(n)]
    n_files = 157
    out = []
    for i in range(n_files):
        text = f"from qiskit import QuantumCircuit\nqc = QuantumCircuit({i % 5 + 1})\nqc.h(0)  # file {i}\n"
        out.append(KbCandidate(f"f{i:03d}.py", slots[i], frozenset({2}), text))
    for j, problem in enumerate(slots[n_files:]):
        first = out[j]
        assert first.problem is not problem
        out.append(KbCandidate(first.source_path, problem, frozenset({3}), first.source))
    for k in range(oversized):
        text = "from qiskit import QuantumCircuit\nqc = QuantumCircuit(1)\n" + "qc.h(0)\n" * 5000
        out.append(KbCandidate(f"big{k}.py", slots[k * 7 % len(slots)], frozenset({2}), text))
    return out


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

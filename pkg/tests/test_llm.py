import difflib
import json
import threading

import pytest

from conftest import FIXTURES, RULES, rule_truth
from qlint.codemodel import SourceFile
from qlint.errors import ContextOverflow, MalformedResponse, ProviderError
from qlint.llm import (
    AnalysisMode,
    Diagnostics,
    RunArchive,
    build_prompts,
    messages_for,
    number_lines,
    parse_response,
    run_all_problems,
    run_problem_analysis,
)
from qlint.problems import ALL_PROBLEMS, CATALOG, ProblemType as P
from qlint.providers import HashingEmbedder
from qlint.rag import RagStore, build_index, candidates_from_truth
from qlint.records import DetectorSource

PROMPTS = FIXTURES / "prompts"
PARSE_CASES = json.loads((FIXTURES / "llm" / "parse_cases.json").read_text())


class Scripted:
    """Chat provider answering by problem name found in the strategy message."""

    def __init__(self, answers=None, default="{}"):
        self.answers = answers or {}
        self.default = default
        self.calls = []
        self._lock = threading.Lock()

    def complete(self, messages):
        with self._lock:
            self.calls.append(messages)
        for problem, answer in self.answers.items():
            if f"Problem: {problem.value}\n" in messages[1]["content"]:
                if isinstance(answer, Exception):
                    raise answer
                return answer
        return self.default


def finding(lines, snippet="qc.measure(0, 0)"):
    return json.dumps({"findings": [{"snippet": snippet, "lines": lines, "explanation": "e"}]})


SEVEN_LINES = """\
from qiskit import QuantumCircuit
qc = QuantumCircuit(1, 1)
qc.measure(0, 0)
x = 1
y = 2
z = 3
qc.measure(0, 0)
"""


def source(text=SEVEN_LINES, path="s.py"):
    return SourceFile(path, text)


def test_number_lines():
    assert number_lines("a\nb\n") == "1: a\n2: b"
    assert number_lines("a\n\nb") == "1: a\n2: \n3: b"
    assert number_lines("") == ""


@pytest.mark.parametrize("mode", ["cot", "rag"])
@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.value)
def test_prompt_goldens(mode, problem):
    text = (PROMPTS / "source.py").read_text()
    if mode == "cot":
        example = CATALOG[problem].static_example
    else:
        from qlint.rag import annotate_tp_file
        name, lines = rule_truth()[problem]
        example = annotate_tp_file((RULES / name).read_text(), problem, lines)
    bundle = build_prompts(CATALOG[problem], example, number_lines(text))
    assert bundle.render() == (PROMPTS / mode / f"{problem.value}.txt").read_text()


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.value)
def test_rag_golden_differs_only_in_example(problem):
    cot = (PROMPTS / "cot" / f"{problem.value}.txt").read_text()
    rag = (PROMPTS / "rag" / f"{problem.value}.txt").read_text()
    head, tail = cot.split("<example>")[0], cot.split("</example>")[1]
    assert rag.startswith(head) and rag.endswith(tail)
    changed = [l for l in difflib.ndiff(cot.splitlines(), rag.splitlines()) if l[:1] in "+-"]
    inside = rag.split("<example>")[1].split("</example>")[0].splitlines() + \
        cot.split("<example>")[1].split("</example>")[0].splitlines()
    assert all(l[2:] in inside for l in changed)


def test_bundle_structure():
    bundle = build_prompts(CATALOG[P.DoubleMeas], CATALOG[P.DoubleMeas].static_example, "1: x")
    msgs = bundle.messages()
    assert [m["role"] for m in msgs] == ["system", "user", "user"]
    strategy = msgs[1]["content"]
    for label in ("Strategic Planning", "Code Understanding", "Problem Detection Logic", "Report Results"):
        assert label in strategy
    names = [p.value for p in ALL_PROBLEMS if p.value in strategy]
    assert names == ["DoubleMeas"]
    assert "1: x" in msgs[2]["content"]
    assert bundle == build_prompts(CATALOG[P.DoubleMeas], CATALOG[P.DoubleMeas].static_example, "1: x")


def test_empty_example_rejected():
    with pytest.raises(ValueError):
        build_prompts(CATALOG[P.DoubleMeas], "  \n", "1: x")


@pytest.mark.parametrize("case", PARSE_CASES, ids=[c["name"] for c in PARSE_CASES])
def test_parse_cases(case):
    if case["expect"].get("error"):
        with pytest.raises(MalformedResponse) as err:
            parse_response(case["body"])
        assert err.value.raw == case["body"]
    else:
        got = [[f.snippet, list(f.lines)] for f in parse_response(case["body"])]
        assert got == case["expect"]["findings"]


@pytest.mark.parametrize("body", [
    '{"findings": "none"}', '{"verdict": "ok"}', '[{"snippet": "x", "lines": [true]}]',
    '[{"snippet": "x", "lines": ["seven"]}]', '[{"snippet": "x", "lines": []}]', '["x"]',
])
def test_parse_rejects(body):
    with pytest.raises(MalformedResponse):
        parse_response(body)


def test_parse_null_findings_and_reasoning_only():
    assert parse_response('{"findings": null}') == []
    assert parse_response('{"detection_strategy": "a", "code_summary": "b"}') == []


def test_analysis_empty():
    assert run_problem_analysis(Scripted(), CATALOG[P.DoubleMeas], source(), "ex") == []


def test_analysis_one_finding():
    out = run_problem_analysis(Scripted(default=finding([7])), CATALOG[P.DoubleMeas], source(), "ex")
    assert len(out) == 1
    w = out[0]
    assert (w.problem, w.lines, w.source) == (P.DoubleMeas, (7,), DetectorSource.llm_cot)
    rag = run_problem_analysis(Scripted(default=finding([7])), CATALOG[P.DoubleMeas], source(), "ex",
                               retrieved=True)
    assert rag[0].source is DetectorSource.llm_rag


def test_out_of_range_lines_dropped():
    diag = Diagnostics()
    out = run_problem_analysis(Scripted(default=finding([7, 40])), CATALOG[P.DoubleMeas], source(), "ex",
                               diagnostics=diag)
    assert out[0].lines == (7,)
    out = run_problem_analysis(Scripted(default=finding([0, 99])), CATALOG[P.DoubleMeas], source(), "ex",
                               diagnostics=diag)
    assert out == []
    assert len(diag.items) == 2 and "40" in diag.items[1]


def test_context_overflow_before_request():
    provider = Scripted()
    with pytest.raises(ContextOverflow):
        run_problem_analysis(provider, CATALOG[P.DoubleMeas], source(), "ex", context_limit=10)
    assert provider.calls == []


def test_malformed_carries_raw_body():
    with pytest.raises(MalformedResponse) as err:
        run_problem_analysis(Scripted(default="nope"), CATALOG[P.DoubleMeas], source(), "ex")
    assert err.value.raw == "nope"


def test_archive(tmp_path):
    run_problem_analysis(Scripted(default="{}"), CATALOG[P.GhostCompose], source(path="d/s.py"), "ex",
                         archive=RunArchive(tmp_path))
    assert (tmp_path / "d_s.py.GhostCompose.response.txt").read_text() == "{}"
    assert "=== user_code ===" in (tmp_path / "d_s.py.GhostCompose.prompt.txt").read_text()


def test_all_problems_clean():
    provider = Scripted()
    result = run_all_problems(provider, source())
    assert result.warnings == [] and result.errors == []
    assert len(provider.calls) == 10


def test_all_problems_two_hits():
    provider = Scripted({P.OpAfterMeas: finding([4]), P.DoubleMeas: finding([7])})
    result = run_all_problems(provider, source(), max_concurrency=4)
    assert [(w.problem, w.lines) for w in result.warnings] == [(P.OpAfterMeas, (4,)), (P.DoubleMeas, (7,))]


def test_failures_are_aggregated():
    provider = Scripted({P.DoubleMeas: "garbage", P.GhostCompose: ProviderError("down", kind="http"),
                         P.OldIdenGate: finding([3])})
    result = run_all_problems(provider, source())
    assert [w.problem for w in result.warnings] == [P.OldIdenGate]
    assert sorted((f.problem.value, f.kind) for f in result.errors) == [
        ("DoubleMeas", "malformed"), ("GhostCompose", "provider:http")]
    assert any("malformed" in d for d in result.diagnostics)


def test_concurrency_is_deterministic():
    answers = {p: finding([i % 7 + 1]) for i, p in enumerate(ALL_PROBLEMS)}
    serial = run_all_problems(Scripted(answers), source(), max_concurrency=1).warnings
    parallel = run_all_problems(Scripted(answers), source(), max_concurrency=8).warnings
    assert serial == parallel and len(serial) == 10


def test_rag_mode_uses_retrieval():
    emb = HashingEmbedder(64)
    store = RagStore(build_index(candidates_from_truth(RULES / "truth.jsonl", RULES), emb), emb)
    src = source()
    provider = Scripted()
    run_all_problems(provider, src, mode="rag", rag=store)
    for messages in provider.calls:
        problem = next(p for p in ALL_PROBLEMS if f"Problem: {p.value}\n" in messages[1]["content"])
        example, _ = store.example_for(problem, src.text)
        assert list(messages) == messages_for(problem, src.text, example)


def test_rag_mode_requires_store():
    with pytest.raises(ValueError):
        run_all_problems(Scripted(), source(), mode=AnalysisMode.rag)

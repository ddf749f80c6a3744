"""Multi-prompt chain-of-thought detection with an LLM.

Each problem type gets its own conversation: one system message, a strategy
message describing the problem and the reasoning steps, and a code message
carrying the line-numbered source.  The model answers with one JSON object.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .codemodel import SourceFile, split_lines
from .errors import ContextOverflow, MalformedResponse, ProviderError, QlintError
from .problems import ALL_PROBLEMS, CATALOG, ProblemCatalogEntry, ProblemType
from .providers import ChatProvider, Message
from .records import DetectorSource, LintWarning
from .tokens import count_tokens

log = logging.getLogger(__name__)

# Leaves room for the response inside a 400k-token window.
DEFAULT_CONTEXT_LIMIT = 272_000


class AnalysisMode(str, Enum):
    cot = "cot"
    rag = "rag"


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user_strategy: str
    user_code: str

    def messages(self) -> list[Message]:
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.user_strategy},
            {"role": "user", "content": self.user_code},
        ]

    def token_count(self) -> int:
        return sum(count_tokens(m["content"]) for m in self.messages())

    def render(self) -> str:
        """Flat text form used for golden files and run archives."""
        return (f"=== system ===\n{self.system}\n"
                f"=== user_strategy ===\n{self.user_strategy}\n"
                f"=== user_code ===\n{self.user_code}\n")


@dataclass(frozen=True)
class RawFinding:
    snippet: str
    lines: tuple[int, ...]
    explanation: str = ""


SYSTEM_PROMPT = """\
You are a static analysis linter for Python quantum programs, with deep \
expertise in quantum computing and the Qiskit SDK.
You examine one program at a time for one specific quantum programming problem.
Reply with a single JSON object and no other text.
If the problem does not occur in the program, reply with the empty object {}."""

STRATEGY_TEMPLATE = """\
Your task is to find every occurrence of the following quantum programming \
problem in the program that will be sent in the next message.

Problem: {name}
Description: {description}

Example of the problem. Each offending line ends with a "# Problem:" comment.
<example>
{example}
</example>

Follow these steps:
1. Strategic Planning: write a Detection Strategy that lists the code \
patterns and Qiskit calls revealing this problem.
2. Code Understanding: write a Code Summary of the circuits, registers and \
operations in the program, in execution order.
3. Problem Detection Logic: apply the Detection Strategy to the Code Summary \
and decide which lines contain the problem.
4. Report Results: reply with one JSON object of the form
{{"detection_strategy": "...", "code_summary": "...", "findings": \
[{{"snippet": "<exact code>", "lines": [<line numbers>], "explanation": "<reason>"}}]}}
Use the line numbers printed before each line of the program. \
Reply with {{}} when the problem does not occur."""

CODE_TEMPLATE = """\
Analyze this program following the steps above.
<program>
{numbered_source}
</program>"""


def number_lines(source: str) -> str:
    """Prefix every line with ``"<n>: "``; a trailing newline adds no line."""
    return "\n".join(f"{i}: {line}" for i, line in enumerate(split_lines(source), 1))


def build_prompts(entry: ProblemCatalogEntry, example: str, numbered_source: str) -> PromptBundle:
    if not example.strip():
        raise ValueError("the prompt needs a non-empty example")
    return PromptBundle(
        system=SYSTEM_PROMPT,
        user_strategy=STRATEGY_TEMPLATE.format(
            name=entry.problem.value,
            description=entry.description,
            example=example.rstrip("\n"),
        ),
        user_code=CODE_TEMPLATE.format(numbered_source=numbered_source),
    )


# -- response parsing ----------------------------------------------------------

_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\r?\n(.*?)```", re.DOTALL)
_REASONING_KEYS = {"detection_strategy", "code_summary"}


def _decode_first(text: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    decoder = json.JSONDecoder()
    for m in re.finditer(r"[{\[]", text):
        try:
            value, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(value, (dict, list)):
            return value
    raise MalformedResponse("response contains no JSON object", raw=text)


def _finding(item: object, raw: str) -> RawFinding:
    if not isinstance(item, dict):
        raise MalformedResponse("finding is not an object", raw=raw)
    snippet = item.get("snippet")
    if not isinstance(snippet, str):
        raise MalformedResponse("finding has no snippet", raw=raw)
    lines = item.get("lines")
    if isinstance(lines, (int, str)) and not isinstance(lines, bool):
        lines = [lines]
    if not isinstance(lines, list) or not lines:
        raise MalformedResponse("finding has no lines", raw=raw)
    numbers = []
    for n in lines:
        if isinstance(n, bool):
            raise MalformedResponse(f"invalid line number {n!r}", raw=raw)
        if isinstance(n, int):
            numbers.append(n)
        elif isinstance(n, str) and n.strip().isdigit():
            numbers.append(int(n))
        else:
            raise MalformedResponse(f"invalid line number {n!r}", raw=raw)
    explanation = item.get("explanation", "")
    return RawFinding(snippet, tuple(numbers), explanation if isinstance(explanation, str) else str(explanation))


def parse_response(body: str) -> list[RawFinding]:
    """Turn a model reply into findings.

    Accepted shapes: ``{}``, ``{"findings": [...]}``, a bare array of findings,
    or a single finding object; optionally wrapped in a code fence or preceded
    by prose.
    """
    text = body.strip()
    fence = _FENCE.search(text)
    if fence:
        text = fence.group(1).strip()
    if not text:
        raise MalformedResponse("empty response", raw=body)
    try:
        value = _decode_first(text)
    except MalformedResponse:
        raise MalformedResponse("response contains no JSON object", raw=body) from None
    if isinstance(value, list):
        items = value
    elif "findings" in value:
        items = value["findings"]
        if items is None:
            items = []
        if not isinstance(items, list):
            raise MalformedResponse("'findings' is not an array", raw=body)
    elif "lines" in value or "snippet" in value:
        items = [value]
    elif set(value) <= _REASONING_KEYS:
        items = []
    else:
        raise MalformedResponse(f"unexpected keys {sorted(value)}", raw=body)
    return [_finding(item, body) for item in items]


# -- analysis --------------------------------------------------------------------

class Diagnostics:
    """Thread-safe list of human-readable diagnostic messages."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._items: list[str] = []

    def add(self, message: str) -> None:
        log.info("%s", message)
        with self._lock:
            self._items.append(message)

    @property
    def items(self) -> list[str]:
        with self._lock:
            return sorted(self._items)


class RunArchive:
    """Stores prompts and raw responses of a run for later audit."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _stem(self, source: SourceFile, problem: ProblemType) -> str:
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", source.path).strip("_")
        return f"{safe}.{problem.value}"

    def record(self, source: SourceFile, problem: ProblemType, bundle: PromptBundle,
               response: str | None) -> None:
        stem = self._stem(source, problem)
        (self.directory / f"{stem}.prompt.txt").write_text(bundle.render(), encoding="utf-8")
        if response is not None:
            (self.directory / f"{stem}.response.txt").write_text(response, encoding="utf-8")


class ExampleSource(Protocol):
    def example_for(self, problem: ProblemType, source_text: str) -> tuple[str, bool]: ...


def run_problem_analysis(provider: ChatProvider, entry: ProblemCatalogEntry, source: SourceFile,
                         example: str, retrieved: bool = False,
                         context_limit: int = DEFAULT_CONTEXT_LIMIT,
                         diagnostics: Diagnostics | None = None,
                         archive: RunArchive | None = None) -> list[LintWarning]:
    bundle = build_prompts(entry, example, number_lines(source.text))
    tokens = bundle.token_count()
    if tokens > context_limit:
        raise ContextOverflow(f"{source.path}: prompt for {entry.problem.value} needs "
                              f"{tokens} tokens, limit is {context_limit}")
    log.debug("%s %s: sending %d prompt tokens", source.path, entry.problem.value, tokens)
    response = None
    try:
        response = provider.complete(bundle.messages())
        findings = parse_response(response)
    finally:
        if archive is not None:
            archive.record(source, entry.problem, bundle, response)

    line_count = len(source.lines)
    origin = DetectorSource.llm_rag if retrieved else DetectorSource.llm_cot
    warnings = []
    for finding in findings:
        valid = sorted({n for n in finding.lines if 1 <= n <= line_count})
        dropped = sorted(set(finding.lines) - set(valid))
        if dropped and diagnostics is not None:
            diagnostics.add(f"{source.path}: {entry.problem.value}: model cited line(s) "
                            f"{dropped} outside 1..{line_count}")
        if not valid:
            continue
        warnings.append(LintWarning(
            file=source.path,
            problem=entry.problem,
            lines=tuple(valid),
            snippet=finding.snippet,
            explanation=finding.explanation,
            source=origin,
        ))
    return warnings


@dataclass(frozen=True)
class ProblemFailure:
    file: str
    problem: ProblemType
    kind: str
    message: str


@dataclass
class AnalysisResult:
    warnings: list[LintWarning] = field(default_factory=list)
    errors: list[ProblemFailure] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


def run_all_problems(provider: ChatProvider, source: SourceFile,
                     mode: AnalysisMode | str = AnalysisMode.cot,
                     rag: ExampleSource | None = None,
                     problems: Iterable[ProblemType] = ALL_PROBLEMS,
                     max_concurrency: int = 1,
                     context_limit: int = DEFAULT_CONTEXT_LIMIT,
                     diagnostics: Diagnostics | None = None,
                     archive: RunArchive | None = None) -> AnalysisResult:
    """Run one independent conversation per problem and merge the results.

    Failures of individual problems are collected, not raised, so partial
    results survive.
    """
    mode = AnalysisMode(mode)
    if mode is AnalysisMode.rag and rag is None:
        raise ValueError("rag mode needs a knowledge base")
    diagnostics = diagnostics or Diagnostics()
    problems = list(dict.fromkeys(problems))

    def one(problem: ProblemType) -> tuple[list[LintWarning], ProblemFailure | None]:
        entry = CATALOG[problem]
        try:
            if mode is AnalysisMode.rag:
                example, retrieved = rag.example_for(problem, source.text)
            else:
                example, retrieved = entry.static_example, False
            found = run_problem_analysis(provider, entry, source, example, retrieved,
                                         context_limit, diagnostics, archive)
            return found, None
        except MalformedResponse as exc:
            diagnostics.add(f"{source.path}: {problem.value}: malformed response: {exc}")
            return [], ProblemFailure(source.path, problem, "malformed", str(exc))
        except ProviderError as exc:
            return [], ProblemFailure(source.path, problem, f"provider:{exc.kind}", str(exc))
        except QlintError as exc:
            return [], ProblemFailure(source.path, problem, type(exc).__name__, str(exc))

    with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
        outcomes = list(pool.map(one, problems))

    result = AnalysisResult()
    for found, failure in outcomes:
        result.warnings.extend(found)
        if failure is not None:
            result.errors.append(failure)
    result.warnings.sort(key=LintWarning.sort_key)
    result.diagnostics = diagnostics.items
    return result


def messages_for(problem: ProblemType, source_text: str, example: str | None = None) -> Sequence[Message]:
    """Messages the pipeline would send; used to key replay fixtures."""
    entry = CATALOG[problem]
    return build_prompts(entry, example or entry.static_example, number_lines(source_text)).messages()

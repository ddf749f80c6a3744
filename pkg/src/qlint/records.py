"""Warning and ground-truth records, plus their line-delimited JSON form.

One JSON object per line.  Warnings carry
``file, problem, lines, snippet, explanation, source``; ground-truth records
carry ``file, problem, lines`` and may carry the warning fields too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .problems import ProblemType


class DetectorSource(str, Enum):
    rule = "rule"
    llm_cot = "llm_cot"
    llm_rag = "llm_rag"


@dataclass(frozen=True)
class LintWarning:
    file: str
    problem: ProblemType
    lines: tuple[int, ...]
    snippet: str
    explanation: str
    source: DetectorSource

    def __post_init__(self) -> None:
        if not self.lines:
            raise ValueError("a warning needs at least one line")
        object.__setattr__(self, "lines", tuple(sorted(set(self.lines))))

    @property
    def first_line(self) -> int:
        return self.lines[0]

    def sort_key(self) -> tuple:
        return (self.file, self.first_line, self.problem.value, self.lines, self.snippet)

    def to_record(self) -> dict:
        return {
            "file": self.file,
            "problem": self.problem.value,
            "lines": list(self.lines),
            "snippet": self.snippet,
            "explanation": self.explanation,
            "source": self.source.value,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "LintWarning":
        return cls(
            file=rec["file"],
            problem=ProblemType.parse(rec["problem"]),
            lines=tuple(int(n) for n in rec["lines"]),
            snippet=rec.get("snippet", ""),
            explanation=rec.get("explanation", ""),
            source=DetectorSource(rec.get("source", "rule")),
        )


@dataclass(frozen=True)
class GroundTruthEntry:
    file: str
    problem: ProblemType
    lines: frozenset[int]

    def __post_init__(self) -> None:
        if not self.lines:
            raise ValueError("a ground-truth entry needs at least one line")
        object.__setattr__(self, "lines", frozenset(self.lines))

    def to_record(self) -> dict:
        return {"file": self.file, "problem": self.problem.value, "lines": sorted(self.lines)}

    @classmethod
    def from_record(cls, rec: dict) -> "GroundTruthEntry":
        return cls(rec["file"], ProblemType.parse(rec["problem"]),
                   frozenset(int(n) for n in rec["lines"]))


def dumps_records(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def iter_records(path: str | Path) -> Iterator[dict]:
    for _, rec in _numbered_records(path):
        yield rec


def _numbered_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid record: {exc.msg}") from exc
            yield lineno, rec


def write_warnings(path: str | Path, warnings: Iterable[LintWarning]) -> None:
    Path(path).write_text(dumps_records(w.to_record() for w in warnings), encoding="utf-8")


def _read(path: str | Path, parse) -> list:
    out = []
    for lineno, rec in _numbered_records(path):
        try:
            out.append(parse(rec))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValueError(f"{path}:{lineno}: invalid record: {exc!r}") from exc
    return out


def read_warnings(path: str | Path) -> list[LintWarning]:
    return _read(path, LintWarning.from_record)


def read_truth(path: str | Path) -> list[GroundTruthEntry]:
    return _read(path, GroundTruthEntry.from_record)


def append_truth(path: str | Path, entry: GroundTruthEntry) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry.to_record()) + "\n")

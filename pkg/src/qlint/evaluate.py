"""Matching of predicted warnings against ground truth, and precision/recall/F1.

Metrics are kept as exact fractions and rounded (half-up, two decimals) only
when rendered.  An undefined metric is ``None`` and renders as ``n/a``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .problems import ALL_PROBLEMS, ProblemType
from .records import GroundTruthEntry, LintWarning

Metric = Optional[Fraction]

COLUMNS = ("TP", "FP", "FN", "Precision", "Recall", "F1")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def compute_metrics(counts: ConfusionCounts) -> tuple[Metric, Metric, Metric]:
    precision = Fraction(counts.tp, counts.tp + counts.fp) if counts.tp + counts.fp else None
    recall = Fraction(counts.tp, counts.tp + counts.fn) if counts.tp + counts.fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass(frozen=True)
class MetricRow:
    counts: ConfusionCounts
    precision: Metric
    recall: Metric
    f1: Metric

    @classmethod
    def of(cls, counts: ConfusionCounts) -> "MetricRow":
        return cls(counts, *compute_metrics(counts))


@dataclass(frozen=True)
class MatchRecord:
    prediction: LintWarning | None
    truth: GroundTruthEntry | None

    @property
    def outcome(self) -> str:
        if self.prediction is not None and self.truth is not None:
            return "TP"
        return "FP" if self.prediction is not None else "FN"


@dataclass
class MatchResult:
    counts: ConfusionCounts
    per_problem: dict[ProblemType, ConfusionCounts]
    ledger: list[MatchRecord] = field(default_factory=list)


def _truth_key(t: GroundTruthEntry) -> tuple:
    return (t.file, min(t.lines), tuple(sorted(t.lines)))


def match_warnings(predicted: Iterable[LintWarning],
                   truth: Iterable[GroundTruthEntry]) -> MatchResult:
    """Greedy one-to-one matching per (file, problem).

    Predictions are taken in (file, first line) order.  Each one consumes the
    first unconsumed truth entry of the same file and problem whose lines
    intersect its own.  Truth entries are ordered canonically, so the result
    does not depend on the order of the truth list.
    """
    preds = sorted(predicted, key=LintWarning.sort_key)
    pending: dict[tuple[str, ProblemType], list[GroundTruthEntry]] = {}
    for t in sorted(truth, key=_truth_key):
        pending.setdefault((t.file, t.problem), []).append(t)

    ledger: list[MatchRecord] = []
    per: dict[ProblemType, list[int]] = {}
    for p in preds:
        row = per.setdefault(p.problem, [0, 0, 0])
        candidates = pending.get((p.file, p.problem), [])
        hit = next((i for i, t in enumerate(candidates) if t.lines.intersection(p.lines)), None)
        if hit is None:
            row[1] += 1
            ledger.append(MatchRecord(p, None))
        else:
            row[0] += 1
            ledger.append(MatchRecord(p, candidates.pop(hit)))
    for key in sorted(pending, key=lambda k: (k[0], k[1].value)):
        for t in pending[key]:
            per.setdefault(t.problem, [0, 0, 0])[2] += 1
            ledger.append(MatchRecord(None, t))

    per_problem = {p: ConfusionCounts(*per[p]) for p in ALL_PROBLEMS if p in per}
    total = sum(per_problem.values(), ConfusionCounts())
    return MatchResult(total, per_problem, ledger)


@dataclass
class MetricsReport:
    overall: MetricRow
    per_problem: dict[ProblemType, MetricRow]

    @classmethod
    def from_match(cls, result: MatchResult) -> "MetricsReport":
        return cls(MetricRow.of(result.counts),
                   {p: MetricRow.of(c) for p, c in result.per_problem.items()})

    @classmethod
    def from_counts(cls, overall: ConfusionCounts,
                    per_problem: Mapping[ProblemType, ConfusionCounts] | None = None) -> "MetricsReport":
        return cls(MetricRow.of(overall),
                   {p: MetricRow.of(c) for p, c in (per_problem or {}).items()})


def round_half_up(value: Fraction | float, places: int = 2) -> Fraction:
    """Round half away from zero, exactly."""
    x = Fraction(value)
    scale = 10 ** places
    magnitude = Fraction(math.floor(abs(x) * scale + Fraction(1, 2)), scale)
    return -magnitude if x < 0 else magnitude


def format_metric(value: Metric | float, places: int = 2) -> str:
    if value is None:
        return "n/a"
    r = round_half_up(value, places)
    text = f"{float(r):.{places}f}"
    return "0.00" if text == "-0.00" else text


def metric_delta(after: Metric, before: Metric) -> Metric:
    if after is None or before is None:
        return None
    return after - before


def _metrics_of(row: MetricRow) -> tuple[Metric, Metric, Metric]:
    return row.precision, row.recall, row.f1


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                  for i, (c, w) in enumerate(zip(cells, widths))).rstrip()
    lines = [fmt(header), "  ".join("-" * w for w in widths)]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines) + "\n"


def _row_cells(row: MetricRow) -> list[str]:
    c = row.counts
    return [str(c.tp), str(c.fp), str(c.fn), *(format_metric(m) for m in _metrics_of(row))]


def _as_number(value: Metric) -> float | None:
    return None if value is None else float(value)


def _row_json(row: MetricRow) -> dict:
    c = row.counts
    return {"tp": c.tp, "fp": c.fp, "fn": c.fn,
            "precision": _as_number(row.precision), "recall": _as_number(row.recall),
            "f1": _as_number(row.f1)}


def render_report(reports: Mapping[str, MetricsReport], fmt: str = "text",
                  per_problem: bool = False) -> str:
    """Render one or more labelled reports.

    Overall mode prints one row per report.  Per-problem mode prints one row per
    problem; with exactly two reports it shows both side by side plus the
    second-minus-first deltas.
    """
    if fmt not in ("text", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    labels = list(reports)
    if fmt == "json":
        payload = {
            label: {
                "overall": _row_json(r.overall),
                "per_problem": {p.value: _row_json(r.per_problem[p])
                                for p in ALL_PROBLEMS if p in r.per_problem},
            }
            for label, r in reports.items()
        }
        if per_problem and len(labels) == 2:
            a, b = reports[labels[0]], reports[labels[1]]
            payload["delta"] = {
                p.value: dict(zip(("precision", "recall", "f1"),
                                  (_as_number(metric_delta(y, x)) for x, y in
                                   zip(_metrics_of(a.per_problem[p]), _metrics_of(b.per_problem[p])))))
                for p in ALL_PROBLEMS if p in a.per_problem and p in b.per_problem
            }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    if not per_problem:
        rows = [[label, *_row_cells(reports[label].overall)] for label in labels]
        return _table(["Approach", *COLUMNS], rows)

    problems = [p for p in ALL_PROBLEMS if any(p in r.per_problem for r in reports.values())]
    if len(labels) == 2:
        a, b = reports[labels[0]], reports[labels[1]]
        header = ["Problem",
                  f"{labels[0]} Prec", f"{labels[0]} Rec", f"{labels[0]} F1",
                  f"{labels[1]} Prec", f"{labels[1]} Rec", f"{labels[1]} F1",
                  "ΔPrec", "ΔRec", "ΔF1"]
        empty = MetricRow.of(ConfusionCounts())
        rows = []
        for p in problems:
            ma = _metrics_of(a.per_problem.get(p, empty))
            mb = _metrics_of(b.per_problem.get(p, empty))
            rows.append([p.value, *(format_metric(m) for m in ma), *(format_metric(m) for m in mb),
                         *(format_metric(metric_delta(y, x)) for x, y in zip(ma, mb))])
        return _table(header, rows)

    out = []
    for label in labels:
        r = reports[label]
        rows = [[p.value, *_row_cells(r.per_problem[p])] for p in problems if p in r.per_problem]
        if len(labels) > 1:
            out.append(f"{label}\n")
        out.append(_table(["Problem", *COLUMNS], rows))
    return "".join(out) if out else _table(["Problem", *COLUMNS], [])

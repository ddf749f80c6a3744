"""Mechanical fault injection: one mutation pattern per problem type.

Every pattern proposes candidate mutations on a clean file.  Candidates are
tried in a seed-determined order; a candidate is accepted only if the mutant
parses and the rule engine reports the problem on exactly the ground-truth
lines.  Candidates that add warnings of other problem types are used only
when no clean candidate exists, and the extra types are reported.
"""

from __future__ import annotations

import ast
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .codemodel import CircuitModel, Measure, ProgramModel, model_source, split_lines
from .errors import NotInjectable
from .problems import ProblemType
from .records import GroundTruthEntry
from .rules import run_detectors

MAX_CANDIDATES = 64

_CHUNK = re.compile(r"[^\r\n]*(?:\r\n|\r|\n)|[^\r\n]+$")


@dataclass(frozen=True)
class Mutation:
    text: str
    lines: frozenset[int]
    description: str


@dataclass
class InjectionResult:
    text: str
    truth: GroundTruthEntry
    description: str
    side_effects: list[ProblemType] = field(default_factory=list)


class _Source:
    def __init__(self, text: str, model: ProgramModel, tree: ast.Module):
        self.text = text
        self.model = model
        self.tree = tree
        self.chunks = _CHUNK.findall(text)
        self.lines = split_lines(text)
        first_break = re.search(r"\r\n|\r|\n", text)
        self.newline = first_break.group(0) if first_break else "\n"
        self.statements = [n for n in ast.walk(tree) if isinstance(n, ast.stmt)]

    def anchor(self, line: int) -> tuple[int, str] | None:
        """(end line, indentation) of the simple statement covering ``line``.

        None when the statement does not sit alone on its lines, so that a new
        line cannot be placed after it safely.
        """
        covering = [s for s in self.statements if s.lineno <= line <= (s.end_lineno or s.lineno)]
        if not covering:
            return None
        stmt = max(covering, key=lambda s: (s.lineno, s.col_offset))
        if not isinstance(stmt, (ast.Expr, ast.Assign, ast.AugAssign, ast.AnnAssign)):
            return None
        first = self.lines[stmt.lineno - 1]
        indent = first[:stmt.col_offset]
        if indent.strip():
            return None
        last = self.lines[stmt.end_lineno - 1]
        rest = last[stmt.end_col_offset:].strip()
        if rest and not rest.startswith("#"):
            return None
        return stmt.end_lineno, indent

    def insert_after(self, end_line: int, indent: str, new_lines: list[str]) -> str:
        chunks = list(self.chunks)
        if end_line > len(chunks):
            raise IndexError(end_line)
        if not re.search(r"[\r\n]$", chunks[end_line - 1]):
            chunks[end_line - 1] += self.newline
        added = "".join(indent + line + self.newline for line in new_lines)
        chunks.insert(end_line, added)
        return "".join(chunks)

    def replace_span(self, node: ast.AST, replacement: str) -> str:
        line = self.chunks[node.lineno - 1]
        if node.lineno != node.end_lineno:
            raise ValueError("literal spans several lines")
        chunks = list(self.chunks)
        chunks[node.lineno - 1] = line[:node.col_offset] + replacement + line[node.end_col_offset:]
        return "".join(chunks)

    def calls_on_line(self, line: int, name: str) -> list[ast.Call]:
        out = []
        for node in ast.walk(self.tree):
            if not isinstance(node, ast.Call):
                continue
            func = node.func
            callee = func.attr if isinstance(func, ast.Attribute) else getattr(func, "id", None)
            if callee == name and node.lineno <= line <= (node.end_lineno or node.lineno):
                out.append(node)
        return out


def _targets(model: ProgramModel, allow_derived: bool = False) -> list[CircuitModel]:
    return [c for c in model.circuits
            if c.var_name and (allow_derived or not c.derived_from) and not c.escaped]


def _last_line(circ: CircuitModel) -> int:
    return max([circ.decl_line] + [ev.line for ev in circ.events])


def _int_literal(node: ast.AST | None) -> int | None:
    if isinstance(node, ast.Constant) and type(node.value) is int:
        return node.value
    return None


# -- patterns -------------------------------------------------------------------------

def _double_meas(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model, allow_derived=True):
        for ev in circ.events:
            if not isinstance(ev, Measure) or ev.symbolic or not ev.qubits:
                continue
            spot = src.anchor(ev.line)
            if spot is None:
                continue
            end, indent = spot
            stmt_lines = src.lines[ev.line - 1:end]
            if len(stmt_lines) != 1:
                continue
            yield Mutation(src.insert_after(end, indent, [stmt_lines[0].strip()]),
                           frozenset({end + 1}), f"duplicate the measurement on line {ev.line}")


def _op_after_meas(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model, allow_derived=True):
        measures = [ev for ev in circ.events if isinstance(ev, Measure) and not ev.symbolic and ev.qubits]
        for ev in reversed(measures):
            spot = src.anchor(ev.line)
            if spot is None:
                continue
            end, indent = spot
            for q in ev.qubits:
                yield Mutation(src.insert_after(end, indent, [f"{circ.var_name}.x({q})"]),
                               frozenset({end + 1}), f"apply x to qubit {q} after line {ev.line}")


def _meas_all_abuse(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model, allow_derived=True):
        if not circ.explicit_cregs:
            continue
        spot = src.anchor(_last_line(circ))
        if spot is None:
            continue
        end, indent = spot
        yield Mutation(src.insert_after(end, indent, [f"{circ.var_name}.measure_all()"]),
                       frozenset({end + 1}), f"call measure_all() on {circ.var_name}")


def _cond_wo_meas(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model):
        spot = src.anchor(circ.decl_line)
        if spot is None or not circ.qubit_count:
            continue
        end, indent = spot
        for reg in circ.explicit_cregs:
            if not reg.name:
                continue
            line = f"{circ.var_name}.x(0).c_if({reg.name}, 1)"
            yield Mutation(src.insert_after(end, indent, [line]), frozenset({end + 1}),
                           f"condition a gate on unmeasured register {reg.name}")


def _const_clas_bit(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model):
        if not circ.qubit_count or not circ.clbit_count:
            continue
        spot = src.anchor(circ.decl_line)
        if spot is None:
            continue
        end, indent = spot
        for q in range(circ.qubit_count):
            for c in range(circ.clbit_count):
                yield Mutation(src.insert_after(end, indent, [f"{circ.var_name}.measure({q}, {c})"]),
                               frozenset({end + 1}), f"measure untouched qubit {q} into clbit {c}")


def _insuff_clas_reg(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model):
        if circ.clbit_count is None:
            continue
        distinct: list[int] = []
        firsts: list[int] = []
        for ev in circ.events:
            if isinstance(ev, Measure) and not ev.symbolic:
                for q in ev.qubits:
                    if q not in distinct:
                        distinct.append(q)
                        firsts.append(ev.line)
        if not distinct:
            continue
        shrink = circ.clbit_count - len(distinct) + 1
        if shrink <= 0:
            continue
        # after shrinking, the measurement of the last distinct qubit overflows
        truth_line = firsts[-1]
        for reg, _offset in circ.cregs:
            if reg.size is None or reg.size < shrink:
                continue
            api = "QuantumCircuit" if reg.implicit else "ClassicalRegister"
            for call in src.calls_on_line(reg.line, api):
                if reg.implicit:
                    ints = [a for a in call.args if _int_literal(a) is not None]
                    literal = ints[1] if len(ints) > 1 else None
                else:
                    literal = call.args[0] if call.args else next(
                        (k.value for k in call.keywords if k.arg == "size"), None)
                if _int_literal(literal) != reg.size:
                    continue
                try:
                    text = src.replace_span(literal, str(reg.size - shrink))
                except ValueError:
                    continue
                yield Mutation(text, frozenset({truth_line}),
                               f"shrink a classical register from {reg.size} to {reg.size - shrink}")


def _oversized_circuit(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model):
        if not circ.qubit_count:
            continue
        for reg, _offset in circ.qregs:
            if reg.size is None:
                continue
            api = "QuantumCircuit" if reg.implicit else "QuantumRegister"
            for call in src.calls_on_line(reg.line, api):
                if reg.implicit:
                    ints = [a for a in call.args if _int_literal(a) is not None]
                    literal = ints[0] if ints else None
                else:
                    literal = call.args[0] if call.args else next(
                        (k.value for k in call.keywords if k.arg == "size"), None)
                if _int_literal(literal) != reg.size:
                    continue
                try:
                    text = src.replace_span(literal, str(reg.size + 1))
                except ValueError:
                    continue
                yield Mutation(text, frozenset({circ.decl_line}),
                               f"grow a quantum register from {reg.size} to {reg.size + 1}")


def _ghost_compose(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model, allow_derived=True):
        spot = src.anchor(_last_line(circ))
        if spot is None:
            continue
        end, indent = spot
        v = circ.var_name
        yield Mutation(src.insert_after(end, indent, [f"{v}.compose({v})"]),
                       frozenset({end + 1}), f"discard the result of {v}.compose()")


def _fresh_name(src: _Source, base: str) -> str:
    taken = {n.id for n in ast.walk(src.tree) if isinstance(n, ast.Name)}
    name = base
    k = 1
    while name in taken:
        k += 1
        name = f"{base}{k}"
    return name


def _op_after_transp(src: _Source) -> Iterator[Mutation]:
    imported = None
    for node in ast.walk(src.tree):
        if isinstance(node, ast.ImportFrom) and node.module and node.module.split(".")[0] == "qiskit":
            for alias in node.names:
                if alias.name == "transpile":
                    imported = alias.asname or alias.name
    for circ in _targets(src.model):
        if not circ.qubit_count:
            continue
        spot = src.anchor(_last_line(circ))
        if spot is None:
            continue
        end, indent = spot
        base = circ.var_name.replace(".", "_")
        tvar = _fresh_name(src, f"{base}_transpiled")
        new = [] if imported else ["from qiskit import transpile"]
        func = imported or "transpile"
        new += [f"{tvar} = {func}({circ.var_name})", f"{tvar}.h(0)"]
        yield Mutation(src.insert_after(end, indent, new), frozenset({end + len(new)}),
                       f"apply h to the transpiled copy of {circ.var_name}")


def _old_iden_gate(src: _Source) -> Iterator[Mutation]:
    for circ in _targets(src.model):
        if not circ.qubit_count:
            continue
        spot = src.anchor(circ.decl_line)
        if spot is None:
            continue
        end, indent = spot
        yield Mutation(src.insert_after(end, indent, [f"{circ.var_name}.iden(0)"]),
                       frozenset({end + 1}), f"call the removed iden() on {circ.var_name}")


PATTERNS: dict[ProblemType, Callable[[_Source], Iterator[Mutation]]] = {
    ProblemType.DoubleMeas: _double_meas,
    ProblemType.OpAfterMeas: _op_after_meas,
    ProblemType.MeasAllAbuse: _meas_all_abuse,
    ProblemType.CondWoMeas: _cond_wo_meas,
    ProblemType.ConstClasBit: _const_clas_bit,
    ProblemType.InsuffClasReg: _insuff_clas_reg,
    ProblemType.OversizedCircuit: _oversized_circuit,
    ProblemType.GhostCompose: _ghost_compose,
    ProblemType.OpAfterTransp: _op_after_transp,
    ProblemType.OldIdenGate: _old_iden_gate,
}


def _problem_counts(text: str, path: str) -> Counter:
    return Counter(w.problem for w in run_detectors(model_source(text, path)))


def inject(problem: ProblemType, source: str, seed: int, path: str = "<source>") -> InjectionResult:
    tree = ast.parse(source)
    model = model_source(source, path)
    if not model.circuits:
        raise NotInjectable("the file defines no quantum circuit")
    before = _problem_counts(source, path)
    if before[problem]:
        raise NotInjectable(f"the file already exhibits {problem.value}")

    src = _Source(source, model, tree)
    candidates = []
    for mutation in PATTERNS[problem](src):
        candidates.append(mutation)
        if len(candidates) >= MAX_CANDIDATES:
            break
    if not candidates:
        raise NotInjectable(f"no place to inject {problem.value}")
    random.Random(seed).shuffle(candidates)

    fallback: InjectionResult | None = None
    for mutation in candidates:
        try:
            ast.parse(mutation.text)
        except SyntaxError:
            continue
        warnings = run_detectors(model_source(mutation.text, path))
        if not any(w.problem is problem and set(w.lines) == mutation.lines for w in warnings):
            continue
        after = Counter(w.problem for w in warnings)
        extra = sorted((p for p in after if p is not problem and after[p] > before[p]),
                       key=lambda p: p.value)
        result = InjectionResult(mutation.text, GroundTruthEntry(path, problem, mutation.lines),
                                 mutation.description, extra)
        if not extra:
            return result
        if fallback is None:
            fallback = result
    if fallback is not None:
        return fallback
    raise NotInjectable(f"no candidate mutation produced a detectable {problem.value}")

"""Deterministic detectors, one per problem type, over a ProgramModel."""

from __future__ import annotations

from typing import Callable, Iterable

from .codemodel import (
    CircuitModel,
    ComposeCall,
    Conditional,
    GateApp,
    IdenCall,
    Measure,
    MeasureAll,
    ProgramModel,
    Reset,
    model_source,
)
from .problems import ALL_PROBLEMS, ProblemType
from .records import DetectorSource, LintWarning

Detector = Callable[[ProgramModel], list[LintWarning]]


def snippet_for(model: ProgramModel, lines: Iterable[int]) -> str:
    """Trigger line(s) verbatim, trailing whitespace stripped."""
    src = model.file.lines
    return "\n".join(src[n - 1].rstrip() for n in sorted(set(lines)) if 0 < n <= len(src))


class _Collector:
    """Accumulates warnings for one problem, dropping exact duplicates.

    Duplicates arise naturally because loop bodies are visited twice.
    """

    def __init__(self, model: ProgramModel, problem: ProblemType):
        self.model = model
        self.problem = problem
        self.out: list[LintWarning] = []
        self._seen: set[tuple] = set()

    def add(self, lines: Iterable[int], explanation: str) -> None:
        lines = tuple(sorted(set(lines)))
        if lines in self._seen:
            return
        self._seen.add(lines)
        self.out.append(LintWarning(
            file=self.model.file.path,
            problem=self.problem,
            lines=lines,
            snippet=snippet_for(self.model, lines),
            explanation=explanation,
            source=DetectorSource.rule,
        ))


def _name(circ: CircuitModel) -> str:
    return circ.var_name or "<circuit>"


def _all_qubits(circ: CircuitModel) -> set[int]:
    if circ.qubit_count is not None:
        return set(range(circ.qubit_count))
    seen: set[int] = set()
    for ev in circ.events:
        if isinstance(ev, (GateApp, Measure, Reset, IdenCall)):
            seen.update(ev.qubits)
    return seen


def _transforms(ev: object) -> bool:
    """Events that change qubit state (gates, identity calls, in-place compose)."""
    return isinstance(ev, (GateApp, IdenCall)) or (isinstance(ev, ComposeCall) and ev.inplace)


def _touched(ev: object, circ: CircuitModel) -> set[int]:
    if isinstance(ev, ComposeCall) or getattr(ev, "symbolic", False):
        return _all_qubits(circ)
    return set(ev.qubits)


def detect_double_meas(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.DoubleMeas)
    for circ in model.circuits:
        measured: set[int] = set()
        for ev in circ.events:
            if isinstance(ev, Measure):
                if ev.symbolic:
                    continue
                repeated = sorted(q for q in ev.qubits if q in measured)
                if repeated:
                    out.add([ev.line], f"Qubit(s) {repeated} of {_name(circ)} are measured again "
                                       "with no operation since the previous measurement.")
                measured.update(ev.qubits)
            elif isinstance(ev, MeasureAll):
                measured.update(_all_qubits(circ))
            elif _transforms(ev) or isinstance(ev, Reset):
                measured -= _touched(ev, circ)
    return out.out


def detect_op_after_meas(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.OpAfterMeas)
    for circ in model.circuits:
        measured: set[int] = set()
        for ev in circ.events:
            if isinstance(ev, Measure) and not ev.symbolic:
                measured.update(ev.qubits)
            elif isinstance(ev, MeasureAll):
                measured.update(_all_qubits(circ))
            elif isinstance(ev, Reset):
                measured -= _touched(ev, circ)
            elif isinstance(ev, GateApp) and not ev.symbolic:
                hit = sorted(q for q in ev.qubits if q in measured)
                if hit:
                    out.add([ev.line], f"Gate '{ev.gate}' acts on qubit(s) {hit} of "
                                       f"{_name(circ)} after they were measured.")
    return out.out


def detect_meas_all_abuse(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.MeasAllAbuse)
    for circ in model.circuits:
        if not circ.explicit_cregs:
            continue
        names = ", ".join(r.name or "<register>" for r in circ.explicit_cregs)
        for ev in circ.events:
            if isinstance(ev, MeasureAll):
                out.add([ev.line], f"measure_all() on {_name(circ)} writes to a new register "
                                   f"although classical register(s) {names} exist.")
    return out.out


def detect_cond_wo_meas(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.CondWoMeas)
    for circ in model.circuits:
        written: set[str] = set()
        everything = False
        for ev in circ.events:
            if isinstance(ev, Measure):
                if ev.clbits_symbolic:
                    everything = True
                for bit in ev.clbits:
                    reg = circ.creg_of_clbit(bit)
                    if reg is not None and reg.name:
                        written.add(reg.name)
            elif isinstance(ev, Conditional) and ev.creg is not None:
                if not everything and ev.creg not in written:
                    out.add([ev.line], f"Conditional '{ev.gate}' depends on register {ev.creg}, "
                                       "which no earlier measurement writes.")
    return out.out


def detect_const_clas_bit(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.ConstClasBit)
    for circ in model.circuits:
        if circ.derived_from or circ.escaped:
            continue
        touched: set[int] = set()
        for ev in circ.events:
            if _transforms(ev):
                touched |= _touched(ev, circ)
            elif isinstance(ev, Measure) and not ev.symbolic:
                fresh = sorted(q for q in ev.qubits if q not in touched)
                if fresh:
                    out.add([ev.line], f"Qubit(s) {fresh} of {_name(circ)} are measured "
                                       "without any prior gate, so the outcome is constant.")
    return out.out


def detect_insuff_clas_reg(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.InsuffClasReg)
    for circ in model.circuits:
        distinct: set[int] = set()
        for ev in circ.events:
            if not isinstance(ev, Measure):
                continue
            if not ev.symbolic and not ev.clbits_symbolic and len(ev.qubits) > len(ev.clbits):
                out.add([ev.line], f"{len(ev.qubits)} qubits are measured into only "
                                   f"{len(ev.clbits)} classical bits.")
            if ev.symbolic:
                continue
            distinct.update(ev.qubits)
            if circ.clbit_count is not None and len(distinct) > circ.clbit_count:
                out.add([ev.line], f"{len(distinct)} distinct qubits of {_name(circ)} are "
                                   f"measured but it has only {circ.clbit_count} classical bits.")
    return out.out


def detect_oversized_circuit(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.OversizedCircuit)
    for circ in model.circuits:
        if circ.derived_from or circ.escaped or not circ.qubit_count:
            continue
        used: set[int] = set()
        suppressed = False
        for ev in circ.events:
            if isinstance(ev, MeasureAll) or isinstance(ev, ComposeCall):
                suppressed = True
            elif isinstance(ev, (GateApp, Measure, IdenCall)):
                if ev.symbolic:
                    suppressed = True
                used.update(ev.qubits)
        if suppressed:
            continue
        unused = sorted(set(range(circ.qubit_count)) - used)
        if unused:
            out.add([circ.decl_line], f"Qubit(s) {unused} of {_name(circ)} "
                                      f"({circ.qubit_count} qubits) are never used.")
    return out.out


def detect_ghost_compose(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.GhostCompose)
    for circ in model.circuits:
        for ev in circ.events:
            if not isinstance(ev, ComposeCall) or ev.inplace:
                continue
            if not ev.result_bound:
                out.add([ev.line], f"The circuit returned by {_name(circ)}.compose() is discarded; "
                                   "compose is not in-place by default.")
            elif not ev.result_used:
                out.add([ev.line], f"The composed circuit bound to {ev.result_var} is never used.")
    return out.out


def detect_op_after_transp(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.OpAfterTransp)
    for circ in model.circuits:
        if not circ.transpiled:
            continue
        for ev in circ.events:
            if isinstance(ev, GateApp):
                what = f"Gate '{ev.gate}'"
            elif isinstance(ev, (Measure, MeasureAll)):
                what = "A measurement"
            else:
                continue
            out.add([ev.line], f"{what} is added to the transpiled circuit {_name(circ)}, "
                               "undoing the hardware mapping.")
    return out.out


def detect_old_iden_gate(model: ProgramModel) -> list[LintWarning]:
    out = _Collector(model, ProblemType.OldIdenGate)
    for circ in model.circuits:
        for ev in circ.events:
            if isinstance(ev, IdenCall):
                out.add([ev.line], "QuantumCircuit.iden() was removed from Qiskit; use id().")
    return out.out


DETECTORS: dict[ProblemType, Detector] = {
    ProblemType.DoubleMeas: detect_double_meas,
    ProblemType.OpAfterMeas: detect_op_after_meas,
    ProblemType.MeasAllAbuse: detect_meas_all_abuse,
    ProblemType.CondWoMeas: detect_cond_wo_meas,
    ProblemType.ConstClasBit: detect_const_clas_bit,
    ProblemType.InsuffClasReg: detect_insuff_clas_reg,
    ProblemType.OversizedCircuit: detect_oversized_circuit,
    ProblemType.GhostCompose: detect_ghost_compose,
    ProblemType.OpAfterTransp: detect_op_after_transp,
    ProblemType.OldIdenGate: detect_old_iden_gate,
}


def run_detectors(model: ProgramModel,
                  problems: Iterable[ProblemType] = ALL_PROBLEMS) -> list[LintWarning]:
    """Run the selected detectors; output sorted by (line, problem name)."""
    problems = list(dict.fromkeys(problems))
    if not problems:
        raise ValueError("at least one problem type must be selected")
    found: list[LintWarning] = []
    for problem in problems:
        found.extend(DETECTORS[problem](model))
    return sorted(found, key=LintWarning.sort_key)


def lint_source(text: str, path: str = "<source>",
                problems: Iterable[ProblemType] = ALL_PROBLEMS) -> list[LintWarning]:
    return run_detectors(model_source(text, path), problems)

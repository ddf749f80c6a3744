"""The ten quantum-specific programming problems and their catalog entries."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ProblemType(str, Enum):
    DoubleMeas = "DoubleMeas"
    OpAfterMeas = "OpAfterMeas"
    MeasAllAbuse = "MeasAllAbuse"
    CondWoMeas = "CondWoMeas"
    ConstClasBit = "ConstClasBit"
    InsuffClasReg = "InsuffClasReg"
    OversizedCircuit = "OversizedCircuit"
    GhostCompose = "GhostCompose"
    OpAfterTransp = "OpAfterTransp"
    OldIdenGate = "OldIdenGate"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "ProblemType":
        """Look up a problem by name, case-insensitively. ``OpAfterOpt`` is an alias."""
        key = name.strip()
        if key.lower() == "opafteropt":
            return cls.OpAfterTransp
        for member in cls:
            if member.value.lower() == key.lower():
                return member
        raise ValueError(f"unknown problem type: {name!r}")


ALL_PROBLEMS: tuple[ProblemType, ...] = tuple(ProblemType)


def parse_problem_list(text: str | None) -> list[ProblemType]:
    if not text:
        return list(ALL_PROBLEMS)
    return [ProblemType.parse(part) for part in text.split(",") if part.strip()]


DESCRIPTIONS: dict[ProblemType, str] = {
    ProblemType.DoubleMeas: "Two consecutive measurements are performed on the same qubit state.",
    ProblemType.OpAfterMeas: "A gate is applied to a qubit after it has already been measured.",
    ProblemType.MeasAllAbuse: (
        "Measurement results are stored in a newly and implicitly created register, "
        "despite the presence of an existing classical register."
    ),
    ProblemType.CondWoMeas: "A conditional gate is applied without measuring the associated register.",
    ProblemType.ConstClasBit: "A qubit is measured without undergoing any prior transformation.",
    ProblemType.InsuffClasReg: (
        "There are not enough classical bits to store the measurement results of all qubits."
    ),
    ProblemType.OversizedCircuit: "The quantum register includes qubits that remain unused.",
    ProblemType.GhostCompose: (
        "Two circuits are composed, but the resulting composed circuit is not utilized."
    ),
    ProblemType.OpAfterTransp: "A gate is applied to the circuit after transpilation.",
    ProblemType.OldIdenGate: "An identity gate is created using an API that has been removed.",
}

# Generic snippets used as the one-shot example when no retrieved example is available.
STATIC_EXAMPLES: dict[ProblemType, str] = {
    ProblemType.DoubleMeas: """\
qc = QuantumCircuit(1, 2)
qc.h(0)
qc.measure(0, 0)
qc.measure(0, 1)  # Problem: qubit 0 is measured again with no operation in between
""",
    ProblemType.OpAfterMeas: """\
qc = QuantumCircuit(2, 2)
qc.h(0)
qc.measure(0, 0)
qc.cx(0, 1)  # Problem: qubit 0 was already measured
qc.measure(1, 1)
""",
    ProblemType.MeasAllAbuse: """\
qr = QuantumRegister(2)
cr = ClassicalRegister(2)
qc = QuantumCircuit(qr, cr)
qc.h(qr[0])
qc.cx(qr[0], qr[1])
qc.measure_all()  # Problem: results go to a new register, cr stays empty
""",
    ProblemType.CondWoMeas: """\
qr = QuantumRegister(2)
cr = ClassicalRegister(1)
qc = QuantumCircuit(qr, cr)
qc.h(qr[0])
qc.x(qr[1]).c_if(cr, 1)  # Problem: cr is never written by a measurement
""",
    ProblemType.ConstClasBit: """\
qc = QuantumCircuit(2, 2)
qc.h(0)
qc.measure(0, 0)
qc.measure(1, 1)  # Problem: qubit 1 is still in its initial state
""",
    ProblemType.InsuffClasReg: """\
qr = QuantumRegister(3)
cr = ClassicalRegister(2)
qc = QuantumCircuit(qr, cr)
qc.h(qr)
qc.measure(qr, cr)  # Problem: three qubits but only two classical bits
""",
    ProblemType.OversizedCircuit: """\
qc = QuantumCircuit(3, 2)  # Problem: qubit 2 is never used
qc.h(0)
qc.cx(0, 1)
qc.measure([0, 1], [0, 1])
""",
    ProblemType.GhostCompose: """\
bell = QuantumCircuit(2)
bell.h(0)
bell.cx(0, 1)
qc = QuantumCircuit(2, 2)
qc.compose(bell)  # Problem: the composed circuit is discarded
qc.measure([0, 1], [0, 1])
""",
    ProblemType.OpAfterTransp: """\
qc = QuantumCircuit(2, 2)
qc.h(0)
qc.cx(0, 1)
tqc = transpile(qc, backend)
tqc.measure([0, 1], [0, 1])  # Problem: the transpiled circuit is modified
""",
    ProblemType.OldIdenGate: """\
qc = QuantumCircuit(1, 1)
qc.iden(0)  # Problem: iden() was removed, use id()
qc.measure(0, 0)
""",
}


@dataclass(frozen=True)
class ProblemCatalogEntry:
    problem: ProblemType
    description: str
    static_example: str


CATALOG: dict[ProblemType, ProblemCatalogEntry] = {
    p: ProblemCatalogEntry(p, DESCRIPTIONS[p], STATIC_EXAMPLES[p]) for p in ALL_PROBLEMS
}

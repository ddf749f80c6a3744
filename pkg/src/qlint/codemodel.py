"""Circuit-level event model recovered from a Qiskit script.

The model is a best-effort abstract interpretation of one source file:
statements are visited in lexical order, ``if`` branches are appended one
after another, and loop bodies are visited twice so that orderings carried
around a loop (measure at the end of an iteration, gate at the start of the
next) become visible to the detectors.  Module top level and every function
body are modeled independently.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

__all__ = [
    "SourceFile",
    "RegisterKind",
    "RegisterDecl",
    "GateApp",
    "Measure",
    "MeasureAll",
    "Reset",
    "Conditional",
    "ComposeCall",
    "TranspileCall",
    "IdenCall",
    "CircuitEvent",
    "CircuitModel",
    "ProgramModel",
    "parse_source",
    "build_model",
    "model_source",
    "split_lines",
]

_NEWLINE = re.compile(r"\r\n|\r|\n")


def split_lines(text: str) -> list[str]:
    """Split on the same line terminators the Python tokenizer uses.

    A trailing terminator does not open a new (phantom) empty line.
    """
    if not text:
        return []
    lines = _NEWLINE.split(text)
    if lines and lines[-1] == "":
        lines.pop()
    return lines


@dataclass(frozen=True)
class SourceFile:
    path: str
    text: str

    @property
    def lines(self) -> list[str]:
        return split_lines(self.text)

    @property
    def line_count(self) -> int:
        return max(1, len(self.lines))

    def line(self, number: int) -> str:
        return self.lines[number - 1]

    @classmethod
    def load(cls, path: str | Path) -> "SourceFile":
        data = Path(path).read_bytes()
        return cls(str(path), data.decode("utf-8"))

    def save(self, path: str | Path | None = None) -> None:
        Path(path or self.path).write_bytes(self.text.encode("utf-8"))


class RegisterKind(str, Enum):
    quantum = "quantum"
    classical = "classical"


@dataclass(eq=False)
class RegisterDecl:
    """A register; ``size`` is None when the size expression is not static."""

    name: str
    kind: RegisterKind
    size: int | None
    line: int
    implicit: bool = False


@dataclass(frozen=True)
class GateApp:
    gate: str
    qubits: tuple[int, ...]
    line: int
    symbolic: bool = False


@dataclass(frozen=True)
class Measure:
    qubits: tuple[int, ...]
    clbits: tuple[int, ...]
    line: int
    symbolic: bool = False
    clbits_symbolic: bool = False


@dataclass(frozen=True)
class MeasureAll:
    line: int


@dataclass(frozen=True)
class Reset:
    qubits: tuple[int, ...]
    line: int
    symbolic: bool = False


@dataclass(frozen=True)
class Conditional:
    creg: str | None
    gate: str
    line: int


@dataclass(frozen=True)
class ComposeCall:
    result_bound: bool
    inplace: bool
    line: int
    result_var: str | None = None
    result_used: bool = True


@dataclass(frozen=True)
class TranspileCall:
    arg_var: str | None
    result_var: str | None
    line: int


@dataclass(frozen=True)
class IdenCall:
    qubits: tuple[int, ...]
    line: int
    symbolic: bool = False


CircuitEvent = Union[
    GateApp, Measure, MeasureAll, Reset, Conditional, ComposeCall, TranspileCall, IdenCall
]


@dataclass(eq=False)
class CircuitModel:
    var_name: str
    decl_line: int
    qregs: list[tuple[RegisterDecl, int]] = field(default_factory=list)
    cregs: list[tuple[RegisterDecl, int]] = field(default_factory=list)
    qubit_count: int | None = 0
    clbit_count: int | None = 0
    explicit_cregs: list[RegisterDecl] = field(default_factory=list)
    events: list[CircuitEvent] = field(default_factory=list)
    # "compose" or "transpile" when the circuit is the result of such a call
    derived_from: str | None = None
    # passed to a function defined in the same file; its gates are unknown
    escaped: bool = False

    @property
    def transpiled(self) -> bool:
        return self.derived_from == "transpile"

    def add_register(self, reg: RegisterDecl, explicit: bool = True) -> None:
        if reg.kind is RegisterKind.quantum:
            self.qregs.append((reg, self.qubit_count if self.qubit_count is not None else -1))
            self.qubit_count = _add_size(self.qubit_count, reg.size)
        else:
            self.cregs.append((reg, self.clbit_count if self.clbit_count is not None else -1))
            self.clbit_count = _add_size(self.clbit_count, reg.size)
            if explicit:
                self.explicit_cregs.append(reg)

    def offset_of(self, reg: RegisterDecl) -> int | None:
        for r, off in (*self.qregs, *self.cregs):
            if r is reg:
                return off if off >= 0 else None
        return None

    def creg_of_clbit(self, index: int) -> RegisterDecl | None:
        for reg, off in self.cregs:
            if off < 0 or reg.size is None:
                continue
            if off <= index < off + reg.size:
                return reg
        return None

    def derive(self, kind: str, line: int) -> "CircuitModel":
        return CircuitModel(
            var_name="",
            decl_line=line,
            qregs=list(self.qregs),
            cregs=list(self.cregs),
            qubit_count=self.qubit_count,
            clbit_count=self.clbit_count,
            explicit_cregs=list(self.explicit_cregs),
            derived_from=kind,
        )


@dataclass
class ProgramModel:
    file: SourceFile
    circuits: list[CircuitModel] = field(default_factory=list)
    unresolved_count: int = 0


def _add_size(total: int | None, size: int | None) -> int | None:
    if total is None or size is None:
        return None
    return total + size


def parse_source(text: str, filename: str = "<source>") -> ast.Module:
    """Parse host-language source; raises SyntaxError carrying line/column."""
    return ast.parse(text, filename=filename, type_comments=False)


# -- API tables ------------------------------------------------------------

_CONSTRUCTORS = {"QuantumCircuit", "QuantumRegister", "ClassicalRegister", "transpile"}

# gate name -> number of leading non-qubit parameters
_GATES: dict[str, int] = {
    **dict.fromkeys(
        "h x y z s sdg t tdg sx sxdg id i cx cy cz ch cs csdg swap iswap dcx ecr csx "
        "ccx ccz cswap rccx rcccx toffoli fredkin cnot mcx mct mcx_gray c3x c4x c3sx "
        "mcmt".split(),
        0,
    ),
    **dict.fromkeys("rx ry rz p u1 crx cry crz cp cu1 rxx ryy rzz rzx mcp mcrx mcry mcrz".split(), 1),
    **dict.fromkeys(["u2", "r"], 2),
    **dict.fromkeys("u u3 cu3".split(), 3),
    "cu": 4,
    **dict.fromkeys("unitary initialize prepare_state diagonal isometry iso squ uc ucrx ucry ucrz pauli".split(), 1),
    "hamiltonian": 2,
    "append": 1,
}

_QUBIT_KEYWORDS = ("qubit", "qubits", "qarg", "qargs", "target_qubit", "control_qubit",
                   "control_qubits", "target_qubits", "ctrl_qubit", "tgt_qubit")

# circuit methods that neither transform nor measure qubits
_NEUTRAL_METHODS = set(
    "barrier draw copy copy_empty_like depth size width count_ops num_qubits num_clbits "
    "decompose to_gate to_instruction inverse reverse_bits reverse_ops qasm assign_parameters "
    "bind_parameters add_bits delay snapshot save_statevector save_state save_density_matrix "
    "save_unitary save_counts save_probabilities save_expectation_value save_amplitudes "
    "save_amplitudes_squared save_stabilizer save_matrix_product_state set_statevector "
    "remove_final_measurements num_nonlocal_gates num_tensor_factors num_unitary_factors "
    "num_connected_components find_bit get_instructions has_register clear power repeat "
    "control tensor qubit_duration qubit_start_time qubit_stop_time has_calibration_for "
    "add_calibration to_circuit parameters global_phase count_ops name metadata store add_var "
    "add_input add_uninitialized_var add_capture while_loop for_loop switch break_loop "
    "continue_loop if_else".split()
)


def _int_value(node: ast.AST, consts: dict[str, int]) -> int | None:
    if isinstance(node, ast.Constant) and type(node.value) is int:
        return node.value
    if isinstance(node, ast.Name):
        return consts.get(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        v = _int_value(node.operand, consts)
        return -v if v is not None else None
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
        a, b = _int_value(node.left, consts), _int_value(node.right, consts)
        if a is None or b is None:
            return None
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        return a * b
    return None


def _dotted(node: ast.AST) -> str | None:
    """``a.b.c`` as a string when the chain is made only of names."""
    parts = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return ".".join(reversed(parts))
    return None


class _ImportTable:
    def __init__(self, tree: ast.Module):
        self.modules: set[str] = set()
        self.names: dict[str, str] = {}
        self.user_functions: set[str] = set()
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                for alias in node.names:
                    if alias.name.split(".")[0] == "qiskit":
                        self.modules.add(alias.asname or "qiskit")
            elif isinstance(node, ast.ImportFrom):
                if node.module and node.module.split(".")[0] == "qiskit":
                    for alias in node.names:
                        if alias.name == "*":
                            for name in _CONSTRUCTORS:
                                self.names.setdefault(name, name)
                        else:
                            self.names[alias.asname or alias.name] = alias.name
            elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                self.user_functions.add(node.name)

    @property
    def has_quantum(self) -> bool:
        return bool(self.modules or self.names)

    def resolve(self, func: ast.AST) -> str | None:
        """Canonical qiskit API name for a callee expression, if it is one."""
        if isinstance(func, ast.Name):
            return self.names.get(func.id)
        if isinstance(func, ast.Attribute):
            root = func
            while isinstance(root, ast.Attribute):
                root = root.value
            if isinstance(root, ast.Name) and (root.id in self.modules or root.id in self.names):
                return func.attr
        return None


@dataclass
class _GateHandle:
    circuit: CircuitModel
    gate: str


@dataclass
class _Pending:
    circuit: CircuitModel
    event: CircuitEvent
    call: ast.Call
    step: int
    kind: str


class _ScopeBuilder:
    def __init__(self, imports: _ImportTable, program: ProgramModel):
        self.imports = imports
        self.program = program
        self.env: dict[str, object] = {}
        self.consts: dict[str, int] = {}
        self.step = 0
        self.loads: dict[str, list[int]] = {}
        self.bindings: dict[int, str] = {}
        self.discarded: set[int] = set()
        self.pending: list[_Pending] = []

    # -- statements -----------------------------------------------------

    def run(self, body: list[ast.stmt]) -> None:
        self._block(body)
        self._finalize()

    def _block(self, body: Iterable[ast.stmt]) -> None:
        for stmt in body:
            self._stmt(stmt)

    def _tick(self, *exprs: ast.AST | None) -> None:
        self.step += 1
        for expr in exprs:
            if expr is None:
                continue
            for node in ast.walk(expr):
                if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Load):
                    self.loads.setdefault(node.id, []).append(self.step)
                elif isinstance(node, ast.Attribute) and isinstance(node.ctx, ast.Load):
                    key = _dotted(node)
                    if key:
                        self.loads.setdefault(key, []).append(self.step)

    def _stmt(self, s: ast.stmt) -> None:
        if isinstance(s, ast.Assign):
            self._tick(s)
            if (
                len(s.targets) == 1
                and isinstance(s.targets[0], (ast.Tuple, ast.List))
                and isinstance(s.value, (ast.Tuple, ast.List))
                and len(s.targets[0].elts) == len(s.value.elts)
            ):
                for tgt, val in zip(s.targets[0].elts, s.value.elts):
                    self._bind(tgt, self._eval(val), val)
                return
            value = self._eval(s.value)
            for target in s.targets:
                self._bind(target, value, s.value)
        elif isinstance(s, ast.AnnAssign):
            self._tick(s)
            if s.value is not None:
                self._bind(s.target, self._eval(s.value), s.value)
        elif isinstance(s, ast.AugAssign):
            self._tick(s)
            self._eval(s.value)
            self._unbind(s.target)
        elif isinstance(s, ast.Expr):
            self._tick(s)
            if isinstance(s.value, ast.Call):
                self.discarded.add(id(s.value))
            self._eval(s.value)
        elif isinstance(s, ast.If):
            self._tick(s.test)
            self._eval(s.test)
            self._block(s.body)
            self._block(s.orelse)
        elif isinstance(s, (ast.For, ast.AsyncFor)):
            self._tick(s.iter)
            self._eval(s.iter)
            for _ in range(2):
                self._unbind(s.target)
                self._block(s.body)
            self._block(s.orelse)
        elif isinstance(s, ast.While):
            for _ in range(2):
                self._tick(s.test)
                self._eval(s.test)
                self._block(s.body)
            self._block(s.orelse)
        elif isinstance(s, (ast.With, ast.AsyncWith)):
            for item in s.items:
                self._tick(item.context_expr)
                value = self._eval(item.context_expr)
                if item.optional_vars is not None:
                    self._bind(item.optional_vars, value, item.context_expr)
            self._block(s.body)
        elif isinstance(s, ast.Try) or type(s).__name__ == "TryStar":
            self._block(s.body)
            for handler in s.handlers:
                self._tick(handler.type)
                if handler.name:
                    self.env.pop(handler.name, None)
                self._block(handler.body)
            self._block(s.orelse)
            self._block(s.finalbody)
        elif isinstance(s, ast.Match):
            self._tick(s.subject)
            self._eval(s.subject)
            for case in s.cases:
                self._block(case.body)
        elif isinstance(s, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            self.env.pop(s.name, None)
        elif isinstance(s, (ast.Import, ast.ImportFrom)):
            for alias in s.names:
                self.env.pop((alias.asname or alias.name).split(".")[0], None)
        elif isinstance(s, ast.Delete):
            for target in s.targets:
                self._unbind(target)
        elif isinstance(s, (ast.Return, ast.Raise, ast.Assert)):
            self._tick(s)
            for child in ast.iter_child_nodes(s):
                self._eval(child)

    # -- bindings -------------------------------------------------------

    def _unbind(self, target: ast.AST) -> None:
        for node in ast.walk(target):
            key = _dotted(node) if isinstance(node, (ast.Name, ast.Attribute)) else None
            if key:
                self.env.pop(key, None)
                self.consts.pop(key, None)

    def _bind(self, target: ast.AST, value: object, value_node: ast.AST) -> None:
        key = _dotted(target) if isinstance(target, (ast.Name, ast.Attribute)) else None
        if key is None:
            self._unbind(target)
            return
        if isinstance(value_node, ast.Call):
            self.bindings.setdefault(id(value_node), key)
        if isinstance(value, (CircuitModel, RegisterDecl)):
            if isinstance(value, CircuitModel) and not value.var_name:
                value.var_name = key
            if isinstance(value, RegisterDecl) and not value.name:
                value.name = key
            self.env[key] = value
        else:
            self.env.pop(key, None)
        number = _int_value(value_node, self.consts)
        if number is not None:
            self.consts[key] = number
        else:
            self.consts.pop(key, None)

    # -- expressions ----------------------------------------------------

    def _eval(self, node: ast.AST | None) -> object:
        if node is None:
            return None
        if isinstance(node, ast.Call):
            return self._call(node)
        if isinstance(node, ast.Name):
            return self.env.get(node.id)
        if isinstance(node, ast.Attribute):
            key = _dotted(node)
            if key and key in self.env:
                return self.env[key]
            self._eval(node.value)
            return None
        if isinstance(node, ast.NamedExpr):
            value = self._eval(node.value)
            self._bind(node.target, value, node.value)
            return value
        if isinstance(node, ast.Lambda):
            return None
        for child in ast.iter_child_nodes(node):
            self._eval(child)
        return None

    def _call(self, node: ast.Call) -> object:
        func = node.func
        receiver = self._eval(func.value) if isinstance(func, ast.Attribute) else None
        args = [self._eval(a) for a in node.args]
        for kw in node.keywords:
            self._eval(kw.value)
        line = func.end_lineno or node.lineno

        api = self.imports.resolve(func)
        if api in _CONSTRUCTORS and self.imports.has_quantum:
            if api == "QuantumCircuit":
                return self._new_circuit(node, args, line)
            if api in ("QuantumRegister", "ClassicalRegister"):
                return self._new_register(node, api, line)
            if api == "transpile":
                return self._transpile(node, args, line)
        elif api is None and _callee_name(func) in _CONSTRUCTORS and receiver is None:
            # looks like the API but is not bound through a qiskit import
            self.program.unresolved_count += 1
            return None

        if isinstance(receiver, CircuitModel) and isinstance(func, ast.Attribute):
            return self._method(receiver, func.attr, node, line)
        if isinstance(receiver, _GateHandle) and isinstance(func, ast.Attribute):
            if func.attr == "c_if" and node.args:
                creg = self._creg_name(node.args[0])
                receiver.circuit.events.append(Conditional(creg, receiver.gate, line))
            return None

        callee = _callee_name(func)
        if callee in self.imports.user_functions:
            for value in args:
                if isinstance(value, CircuitModel):
                    value.escaped = True
            for kw in node.keywords:
                value = self.env.get(_dotted(kw.value) or "")
                if isinstance(value, CircuitModel):
                    value.escaped = True
        return None

    def _new_register(self, node: ast.Call, api: str, line: int) -> RegisterDecl:
        size_node = node.args[0] if node.args else _keyword(node, "size")
        size = _int_value(size_node, self.consts) if size_node is not None else 0
        # the binding name identifies the register, not the label argument
        kind = RegisterKind.quantum if api == "QuantumRegister" else RegisterKind.classical
        if size is not None and size < 0:
            size = None
        return RegisterDecl("", kind, size, line)

    def _new_circuit(self, node: ast.Call, args: list[object], line: int) -> CircuitModel:
        circ = CircuitModel(var_name="", decl_line=line)
        ints: list[int | None] = []
        for arg_node, value in zip(node.args, args):
            if isinstance(value, RegisterDecl):
                circ.add_register(value)
            elif isinstance(arg_node, ast.Starred):
                circ.qubit_count = None
                circ.clbit_count = None
            elif isinstance(arg_node, ast.Constant) and isinstance(arg_node.value, str):
                continue
            else:
                ints.append(_int_value(arg_node, self.consts))
        if ints:
            kinds = (RegisterKind.quantum, RegisterKind.classical)
            for kind, size in zip(kinds, ints):
                if size is not None and size < 0:
                    size = None
                circ.add_register(RegisterDecl("", kind, size, line, implicit=True), explicit=False)
        self.program.circuits.append(circ)
        return circ

    def _transpile(self, node: ast.Call, args: list[object], line: int) -> CircuitModel | None:
        source = args[0] if args else None
        arg_var = _dotted(node.args[0]) if node.args else None
        if isinstance(source, CircuitModel):
            result = source.derive("transpile", line)
            owner = source
        else:
            result = CircuitModel(var_name="", decl_line=line, qubit_count=None,
                                  clbit_count=None, derived_from="transpile")
            owner = result
        event = TranspileCall(arg_var, None, line)
        owner.events.append(event)
        self.pending.append(_Pending(owner, event, node, self.step, "transpile"))
        self.program.circuits.append(result)
        return result

    def _method(self, circ: CircuitModel, name: str, node: ast.Call, line: int) -> object:
        if name == "measure":
            qnode = node.args[0] if node.args else _keyword(node, "qubit")
            cnode = node.args[1] if len(node.args) > 1 else _keyword(node, "cbit", "clbit")
            qubits, qsym = self._bits(qnode, circ, RegisterKind.quantum)
            clbits, csym = self._bits(cnode, circ, RegisterKind.classical)
            circ.events.append(Measure(qubits, clbits, line, qsym, csym))
            return _GateHandle(circ, "measure")
        if name in ("measure_all", "measure_active"):
            add_bits = _keyword(node, "add_bits")
            if (
                name == "measure_all"
                and isinstance(add_bits, ast.Constant)
                and add_bits.value is False
                and circ.qubit_count is not None
                and circ.clbit_count is not None
            ):
                circ.events.append(Measure(
                    tuple(range(circ.qubit_count)), tuple(range(circ.clbit_count)), line
                ))
            else:
                circ.events.append(MeasureAll(line))
            return None
        if name == "reset":
            qubits, sym = self._bits(node.args[0] if node.args else _keyword(node, "qubit"),
                                     circ, RegisterKind.quantum)
            circ.events.append(Reset(qubits, line, sym))
            return _GateHandle(circ, "reset")
        if name == "iden":
            qubits, sym = self._bits(node.args[0] if node.args else _keyword(node, "qubit"),
                                     circ, RegisterKind.quantum)
            circ.events.append(IdenCall(qubits, line, sym))
            return _GateHandle(circ, "iden")
        if name == "compose":
            inplace = _keyword(node, "inplace")
            is_inplace = isinstance(inplace, ast.Constant) and inplace.value is True
            event = ComposeCall(result_bound=True, inplace=is_inplace, line=line)
            circ.events.append(event)
            self.pending.append(_Pending(circ, event, node, self.step, "compose"))
            return None if is_inplace else circ.derive("compose", line)
        if name == "add_register":
            for arg in node.args:
                value = self._eval_quiet(arg)
                if isinstance(value, RegisterDecl):
                    circ.add_register(value)
            return None
        if name == "if_test":
            cond = node.args[0] if node.args else _keyword(node, "condition")
            creg = None
            if isinstance(cond, ast.Tuple) and cond.elts:
                creg = self._creg_name(cond.elts[0])
            circ.events.append(Conditional(creg, "if_test", line))
            return None
        if name in _GATES:
            return self._gate(circ, name, node, line)
        if name in _NEUTRAL_METHODS:
            return None
        self.program.unresolved_count += 1
        return None

    def _gate(self, circ: CircuitModel, name: str, node: ast.Call, line: int) -> _GateHandle:
        skip = _GATES[name]
        qubit_nodes = [a for a in node.args[skip:]]
        if name == "append":
            qubit_nodes = node.args[1:2]
        qubit_nodes += [kw.value for kw in node.keywords if kw.arg in _QUBIT_KEYWORDS]
        qubit_nodes = [
            n for n in qubit_nodes
            if not (isinstance(n, ast.Constant) and (n.value is None or isinstance(n.value, (str, bool, float))))
        ]
        qubits: list[int] = []
        symbolic = not qubit_nodes
        for qn in qubit_nodes:
            resolved, sym = self._bits(qn, circ, RegisterKind.quantum)
            qubits.extend(resolved)
            symbolic = symbolic or sym
        circ.events.append(GateApp(name, tuple(qubits), line, symbolic))
        return _GateHandle(circ, name)

    def _eval_quiet(self, node: ast.AST) -> object:
        if isinstance(node, (ast.Name, ast.Attribute)):
            return self.env.get(_dotted(node) or "")
        return None

    def _creg_name(self, node: ast.AST) -> str | None:
        target = node.value if isinstance(node, ast.Subscript) else node
        value = self._eval_quiet(target)
        if isinstance(value, RegisterDecl) and value.kind is RegisterKind.classical:
            return value.name or None
        return None

    def _bits(self, node: ast.AST | None, circ: CircuitModel,
              kind: RegisterKind) -> tuple[tuple[int, ...], bool]:
        """Resolve a qubit/clbit argument to global indices; (refs, symbolic)."""
        if node is None:
            return (), True
        count = circ.qubit_count if kind is RegisterKind.quantum else circ.clbit_count
        number = _int_value(node, self.consts)
        if number is not None:
            if number < 0:
                if count is None:
                    return (), True
                number += count
            return (number,), False
        if isinstance(node, (ast.List, ast.Tuple)):
            out: list[int] = []
            for elt in node.elts:
                refs, sym = self._bits(elt, circ, kind)
                if sym:
                    return (), True
                out.extend(refs)
            return tuple(out), False
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "range":
            bounds = [_int_value(a, self.consts) for a in node.args]
            if node.args and None not in bounds and not node.keywords:
                return tuple(range(*bounds)), False
            return (), True
        bits_attr = "qubits" if kind is RegisterKind.quantum else "clbits"
        if isinstance(node, ast.Attribute) and node.attr == bits_attr:
            if self._eval_quiet(node.value) is circ and count is not None:
                return tuple(range(count)), False
            return (), True
        if isinstance(node, (ast.Name, ast.Attribute)):
            value = self._eval_quiet(node)
            if isinstance(value, RegisterDecl) and value.kind is kind:
                off = circ.offset_of(value)
                if off is None or value.size is None:
                    return (), True
                return tuple(range(off, off + value.size)), False
            return (), True
        if isinstance(node, ast.Subscript):
            base = node.value
            sl = node.slice
            if isinstance(base, ast.Attribute) and base.attr == bits_attr:
                if self._eval_quiet(base.value) is not circ:
                    return (), True
                off, size = 0, count
            else:
                value = self._eval_quiet(base)
                if not (isinstance(value, RegisterDecl) and value.kind is kind):
                    return (), True
                off, size = circ.offset_of(value), value.size
                if off is None:
                    return (), True
            index = _int_value(sl, self.consts)
            if index is not None:
                if index < 0:
                    if size is None:
                        return (), True
                    index += size
                return (off + index,), False
            if isinstance(sl, ast.Slice) and sl.step is None:
                lo = _int_value(sl.lower, self.consts) if sl.lower else 0
                hi = _int_value(sl.upper, self.consts) if sl.upper else size
                if lo is None or hi is None or lo < 0 or hi < 0:
                    return (), True
                return tuple(off + i for i in range(lo, hi)), False
            return (), True
        return (), True

    # -- end of scope ---------------------------------------------------

    def _finalize(self) -> None:
        first_step: dict[int, int] = {}
        for p in self.pending:
            first_step.setdefault(id(p.call), p.step)
        for p in self.pending:
            call_id = id(p.call)
            var = self.bindings.get(call_id)
            if p.kind == "compose":
                bound = call_id not in self.discarded
                used = bound
                if bound and var is not None:
                    used = any(s > first_step[call_id] for s in self.loads.get(var, ()))
                new = replace(p.event, result_bound=bound, result_var=var, result_used=used)
            else:
                new = replace(p.event, result_var=var)
            events = p.circuit.events
            for i, ev in enumerate(events):
                if ev is p.event:
                    events[i] = new
                    break


def _keyword(node: ast.Call, *names: str) -> ast.AST | None:
    for kw in node.keywords:
        if kw.arg in names:
            return kw.value
    return None


def _callee_name(func: ast.AST) -> str | None:
    if isinstance(func, ast.Name):
        return func.id
    if isinstance(func, ast.Attribute):
        return func.attr
    return None


def _function_bodies(tree: ast.AST) -> list[ast.AST]:
    found: list[ast.AST] = []

    def visit(node: ast.AST) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                found.append(child)
            visit(child)

    visit(tree)
    return found


def build_model(tree: ast.Module, file: SourceFile) -> ProgramModel:
    """Recover circuits, registers and ordered circuit events from a parsed file."""
    program = ProgramModel(file=file)
    imports = _ImportTable(tree)
    _ScopeBuilder(imports, program).run(tree.body)
    for func in _function_bodies(tree):
        _ScopeBuilder(imports, program).run(func.body)
    if not imports.has_quantum:
        program.circuits.clear()
    return program


def model_source(text: str, path: str = "<source>") -> ProgramModel:
    """Parse and model in one step."""
    file = SourceFile(path, text)
    return build_model(parse_source(text, path), file)

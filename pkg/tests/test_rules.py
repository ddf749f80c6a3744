from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from conftest import rule_truth
from qlint.problems import ALL_PROBLEMS, ProblemType as P
from qlint.records import DetectorSource
from qlint.rules import DETECTORS, lint_source, run_detectors, snippet_for
from qlint.codemodel import model_source

RULES = Path(__file__).parent / "fixtures" / "rules"
HEAD = "from qiskit import QuantumCircuit, QuantumRegister, ClassicalRegister, transpile\n"


def hits(body, problem):
    """(problem, lines) pairs for one detector on a snippet prefixed by the import line."""
    return [w.lines for w in lint_source(HEAD + body, "t.py", [problem])]


# DoubleMeas
def test_double_meas_consecutive():
    assert hits("qc = QuantumCircuit(1, 2)\nqc.h(0)\nqc.measure(0, 0)\nqc.measure(0, 1)\n", P.DoubleMeas) == [(5,)]


def test_double_meas_with_gate_between():
    body = "qc = QuantumCircuit(1, 2)\nqc.measure(0, 0)\nqc.h(0)\nqc.measure(0, 1)\n"
    assert hits(body, P.DoubleMeas) == []


def test_double_meas_empty_circuit():
    assert hits("qc = QuantumCircuit(1)\n", P.DoubleMeas) == []


# OpAfterMeas
def test_op_after_meas_gate_after_measure():
    assert hits("qc = QuantumCircuit(1, 1)\nqc.h(0)\nqc.measure(0, 0)\nqc.x(0)\n", P.OpAfterMeas) == [(5,)]


def test_op_after_meas_reset_clears():
    body = "qc = QuantumCircuit(1, 1)\nqc.h(0)\nqc.measure(0, 0)\nqc.reset(0)\nqc.x(0)\n"
    assert hits(body, P.OpAfterMeas) == []


def test_op_after_meas_loop_fixture():
    text = (RULES / "OpAfterMeas_pos.py").read_text()
    assert [w.lines for w in lint_source(text, "f.py", [P.OpAfterMeas])] == [(8,)]


# MeasAllAbuse
def test_meas_all_abuse_explicit_creg():
    body = "qr = QuantumRegister(2)\ncr = ClassicalRegister(2)\nqc = QuantumCircuit(qr, cr)\nqc.h(0)\nqc.measure_all()\n"
    assert hits(body, P.MeasAllAbuse) == [(6,)]


def test_meas_all_abuse_no_creg():
    assert hits("qc = QuantumCircuit(2)\nqc.h(0)\nqc.measure_all()\n", P.MeasAllAbuse) == []


def test_meas_all_abuse_implicit_creg_is_not_explicit():
    assert hits("qc = QuantumCircuit(2, 2)\nqc.h(0)\nqc.measure_all()\n", P.MeasAllAbuse) == []


def test_meas_all_abuse_without_measure_all():
    body = "cr = ClassicalRegister(1)\nqc = QuantumCircuit(QuantumRegister(1), cr)\nqc.h(0)\n"
    assert hits(body, P.MeasAllAbuse) == []


# CondWoMeas
COND = "qr = QuantumRegister(1)\nc = ClassicalRegister(1)\nd = ClassicalRegister(1)\nqc = QuantumCircuit(qr, c, d)\nqc.h(0)\n"


def test_cond_without_measure():
    assert hits(COND + "qc.x(0).c_if(c, 1)\n", P.CondWoMeas) == [(7,)]


def test_cond_after_measure_into_register():
    assert hits(COND + "qc.measure(0, c[0])\nqc.x(0).c_if(c, 1)\n", P.CondWoMeas) == []


def test_cond_measure_into_other_register():
    assert hits(COND + "qc.measure(0, d[0])\nqc.x(0).c_if(c, 1)\n", P.CondWoMeas) == [(8,)]


# ConstClasBit
def test_const_clas_bit_fresh_qubit():
    assert hits("qc = QuantumCircuit(1, 1)\nqc.measure(0, 0)\n", P.ConstClasBit) == [(3,)]


def test_const_clas_bit_after_gate():
    assert hits("qc = QuantumCircuit(1, 1)\nqc.h(0)\nqc.measure(0, 0)\n", P.ConstClasBit) == []


def test_const_clas_bit_entangling_gate_touches_target():
    body = "qc = QuantumCircuit(2, 1)\nqc.h(1)\nqc.cx(1, 0)\nqc.measure(0, 0)\n"
    assert hits(body, P.ConstClasBit) == []


# InsuffClasReg
def test_insuff_register_measure():
    body = "qr = QuantumRegister(3)\ncr = ClassicalRegister(2)\nqc = QuantumCircuit(qr, cr)\nqc.h(qr)\nqc.measure(qr, cr)\n"
    assert hits(body, P.InsuffClasReg) == [(6,)]


def test_insuff_sizes_match():
    body = "qc = QuantumCircuit(2, 2)\nqc.h(0)\nqc.h(1)\nqc.measure(0, 0)\nqc.measure(1, 1)\n"
    assert hits(body, P.InsuffClasReg) == []


def test_insuff_three_single_measures_into_two_bits():
    body = "qc = QuantumCircuit(3, 2)\nqc.h([0, 1, 2])\nqc.measure(0, 0)\nqc.measure(1, 1)\nqc.measure(2, 1)\n"
    assert hits(body, P.InsuffClasReg) == [(6,)]


# OversizedCircuit
def test_oversized_unused_qubit():
    out = lint_source(HEAD + "qc = QuantumCircuit(3)\nqc.h(0)\nqc.cx(0, 1)\n", "t.py", [P.OversizedCircuit])
    assert [w.lines for w in out] == [(2,)]
    assert "[2]" in out[0].explanation


def test_oversized_measure_all_uses_everything():
    assert hits("qc = QuantumCircuit(3)\nqc.h(0)\nqc.measure_all()\n", P.OversizedCircuit) == []


def test_oversized_symbolic_ref_suppresses():
    body = "import random\nqc = QuantumCircuit(3)\nk = random.randint(0, 2)\nqc.h(k)\n"
    assert hits(body, P.OversizedCircuit) == []


# GhostCompose
def test_ghost_compose_discarded():
    assert hits("a = QuantumCircuit(1)\nb = QuantumCircuit(1)\na.compose(b)\n", P.GhostCompose) == [(4,)]


def test_ghost_compose_result_used():
    body = "a = QuantumCircuit(1)\nb = QuantumCircuit(1)\nc = a.compose(b)\nc.measure_all()\n"
    assert hits(body, P.GhostCompose) == []


def test_ghost_compose_inplace():
    assert hits("a = QuantumCircuit(1)\nb = QuantumCircuit(1)\na.compose(b, inplace=True)\n", P.GhostCompose) == []


def test_ghost_compose_bound_but_unused():
    assert hits("a = QuantumCircuit(1)\nb = QuantumCircuit(1)\nc = a.compose(b)\n", P.GhostCompose) == [(4,)]


# OpAfterTransp
def test_op_after_transp_gate_on_result():
    assert hits("qc = QuantumCircuit(1)\nqc.h(0)\ntqc = transpile(qc)\ntqc.h(0)\n", P.OpAfterTransp) == [(5,)]


def test_op_after_transp_no_mutation():
    body = "qc = QuantumCircuit(1)\nqc.h(0)\ntqc = transpile(qc)\nbackend = None\njob = backend.run(tqc)\n"
    assert hits(body, P.OpAfterTransp) == []


def test_op_after_transp_original_circuit_not_flagged():
    assert hits("qc = QuantumCircuit(1)\ntqc = transpile(qc)\nqc.h(0)\n", P.OpAfterTransp) == []


# OldIdenGate
def test_old_iden():
    assert hits("qc = QuantumCircuit(1)\nqc.iden(0)\n", P.OldIdenGate) == [(3,)]


def test_current_id_gate():
    assert hits("qc = QuantumCircuit(1)\nqc.id(0)\n", P.OldIdenGate) == []


def test_no_identity_gate():
    assert hits("qc = QuantumCircuit(1)\nqc.h(0)\n", P.OldIdenGate) == []


# symbolic policy: never a trigger, always a suppressor
def test_symbolic_measure_is_not_a_trigger():
    body = "import random\nk = random.randint(0, 1)\nqc = QuantumCircuit(2, 2)\nqc.measure(k, 0)\n"
    assert hits(body, P.ConstClasBit) == []
    assert hits(body, P.DoubleMeas) == []


def test_symbolic_gate_suppresses_const_clas_bit():
    body = "import random\nk = random.randint(0, 1)\nqc = QuantumCircuit(2, 2)\nqc.h(k)\nqc.measure(1, 0)\n"
    assert hits(body, P.ConstClasBit) == []


# fixture suite and dispatcher
TRUTH = rule_truth()


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=str)
def test_fixture_positive_fires_exactly(problem):
    name, lines = TRUTH[problem]
    found = lint_source((RULES / name).read_text(), name)
    assert [(w.problem, w.lines) for w in found] == [(problem, lines)]


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=str)
def test_fixture_negative_is_clean(problem):
    name = f"{problem.value}_neg.py"
    assert lint_source((RULES / name).read_text(), name) == []


def test_dispatcher_rejects_empty_selection():
    with pytest.raises(ValueError):
        run_detectors(model_source("x = 1\n"), [])


def test_warning_fields():
    text = (RULES / "DoubleMeas_pos.py").read_text()
    (w,) = lint_source(text, "DoubleMeas_pos.py")
    model = model_source(text)
    assert w.source is DetectorSource.rule
    assert w.snippet == snippet_for(model, w.lines)
    assert w.snippet in text
    assert all(1 <= n <= model.file.line_count for n in w.lines)


ALL_FIXTURES = sorted(RULES.glob("*.py"))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_FIXTURES), st.sets(st.sampled_from(ALL_PROBLEMS), min_size=1))
def test_monotonic_dispatch(path, subset):
    model = model_source(path.read_text(), path.name)
    full = run_detectors(model)
    part = run_detectors(model, sorted(subset, key=lambda p: p.value))
    assert part == [w for w in full if w.problem in subset]


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.stem)
def test_deterministic_and_sorted(path):
    text = path.read_text()
    a = lint_source(text, path.name)
    assert a == lint_source(text, path.name)
    assert a == sorted(a, key=lambda w: (w.first_line, w.problem.value))


def test_detector_table_is_complete():
    assert set(DETECTORS) == set(ALL_PROBLEMS)

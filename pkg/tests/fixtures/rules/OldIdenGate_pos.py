from qiskit import QuantumCircuit

qc = QuantumCircuit(2, 2)
qc.h(0)
qc.iden(1)
qc.cx(0, 1)
qc.measure([0, 1], [0, 1])

from qiskit import QuantumCircuit, QuantumRegister, ClassicalRegister

qreg = QuantumRegister(2)
creg = ClassicalRegister(2)
bell = QuantumCircuit(qreg, creg)
bell.h(qreg[0])
bell.cx(qreg[0], qreg[1])
bell.measure_all()

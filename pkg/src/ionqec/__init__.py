"""Simulation of trapped-ion error-correcting codes driven by global pulses.

Modules, in pipeline order:

- :mod:`ionqec.crystal`   equilibrium layout and transverse modes
- :mod:`ionqec.coupling`  spin-dependent forces and geometric phases
- :mod:`ionqec.synth`     search for pulse sequences realising a target unitary
- :mod:`ionqec.engine`    six-qubit density-matrix simulator
- :mod:`ionqec.protocol`  encode, store and read out the 5RC and 5QC codes
- :mod:`ionqec.bench`     fidelity curves, high-fidelity times and the scaling fit
- :mod:`ionqec.cli`       the ``ionqec`` command
"""

__version__ = "0.1.0"

"""Spin-dependent forces, spin-mode couplings and geometric phases.

Register basis states are integers ``s`` in ``range(2**n)``.  Qubit 0 (the
hub) is the most significant bit, ring qubits 1..5 follow clockwise, and a
set bit means spin up.  So ``0b100001`` is the state written |1>|00001>.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .crystal import ModeBasis, default_modes

N_QUBITS = 6
N_STATES = 2**N_QUBITS
R_RANGE = (-2.0, -0.5)

# Representatives of the ring-rotation orbits, in the row order used for the
# class-reduced cost (hub bit, then the five ring bits).
CLASS_LABELS = tuple(
    f"{hub}{ring}"
    for hub in "01"
    for ring in ("00000", "00001", "00011", "00101", "00111", "01011", "01111", "11111")
)


class ConsistencyError(ValueError):
    pass


def state_bits(n_qubits: int = N_QUBITS) -> np.ndarray:
    """``bits[s, q]`` is 1 when qubit ``q`` is up in basis state ``s``."""
    s = np.arange(2**n_qubits)[:, None]
    shifts = np.arange(n_qubits - 1, -1, -1)[None, :]
    return (s >> shifts) & 1


def state_label(s: int, n_qubits: int = N_QUBITS) -> str:
    return format(s, f"0{n_qubits}b")


@dataclass(frozen=True)
class ForceModel:
    ratio: float
    f_down: float = 1.0

    @property
    def in_proposed_range(self) -> bool:
        return R_RANGE[0] <= self.ratio <= R_RANGE[1]


def force_matrix(state: int, model: ForceModel, n_ions: int = N_QUBITS) -> np.ndarray:
    """Per-ion force for one basis state: ``ratio`` on up spins, ``f_down`` otherwise."""
    bits = (state >> np.arange(n_ions - 1, -1, -1)) & 1
    return np.where(bits == 1, model.ratio * model.f_down, model.f_down).astype(float)


@dataclass(frozen=True)
class CouplingMatrix:
    """Per-group generalised forces ``entries[g, s]`` (quadrature sums, >= 0).

    ``norm`` converts squared force times pulse area into radians.
    """

    entries: np.ndarray
    norm: float
    ratio: float


def coupling_matrix(modes: ModeBasis, model: ForceModel) -> CouplingMatrix:
    n = modes.eigenvectors.shape[1]
    if not modes.degenerate_groups:
        raise ConsistencyError("mode basis has no degeneracy grouping")
    forces = np.where(state_bits(n) == 1, model.ratio, 1.0) * model.f_down  # (S, n)
    per_mode = modes.eigenvectors @ forces.T  # (modes, S)
    entries = np.stack([
        np.sqrt(np.sum(per_mode[list(g)] ** 2, axis=0)) for g in modes.degenerate_groups
    ])
    if not model.in_proposed_range:
        warnings.warn(f"force ratio {model.ratio} outside the proposed range {R_RANGE}",
                      stacklevel=2)
    # all-down has no ring or breathing component, so group 0 carries it all
    all_down = np.full(n, model.f_down) @ modes.group_projector(0) @ np.full(n, model.f_down)
    return CouplingMatrix(entries, float(np.pi / all_down), float(model.ratio))


@dataclass(frozen=True)
class PulseSolution:
    areas: np.ndarray
    ratio: float
    label: str = ""

    def __post_init__(self):
        areas = np.asarray(self.areas, dtype=float)
        if areas.ndim != 1 or not np.all(np.isfinite(areas)) or np.any(areas < 0):
            raise ValueError(f"pulse areas must be finite and non-negative: {self.areas!r}")
        object.__setattr__(self, "areas", areas)

    @property
    def n_pulses(self) -> int:
        return int(np.count_nonzero(self.areas))

    def to_json(self) -> dict:
        return {"target": self.label, "P": [float(p) for p in self.areas], "R": float(self.ratio)}

    @classmethod
    def from_json(cls, data: dict) -> "PulseSolution":
        return cls(np.asarray(data["P"], dtype=float), float(data["R"]), data.get("target", ""))


SPOKES_SOLUTION = PulseSolution(np.array([3.125, 2.604, 2.604, 0.0]), -1.400, "spokes")
RING_SOLUTION = PulseSolution(np.array([10.99, 7.677, 19.65, 10.99]), -0.6737, "ring")


def phases(coupling: CouplingMatrix, solution: PulseSolution) -> np.ndarray:
    """Accumulated (unreduced) phase of every basis state."""
    if not np.isclose(coupling.ratio, solution.ratio, rtol=0, atol=1e-12):
        raise ConsistencyError(
            f"coupling built for R={coupling.ratio}, solution has R={solution.ratio}")
    return coupling.norm * (solution.areas @ coupling.entries**2)


@dataclass(frozen=True)
class PhaseModel:
    """Squared couplings as explicit quadratics in the force ratio.

    With forces ``1 + (R - 1) b`` for spin bits ``b`` and group projector
    ``Pi``, the squared group force is ``u + 2 (R-1) v + (R-1)^2 w``; this lets
    phases be evaluated for arrays of ``R`` without rebuilding couplings.
    """

    const: np.ndarray  # (G, S)
    linear: np.ndarray
    quad: np.ndarray
    norm: float

    @classmethod
    def from_modes(cls, modes: ModeBasis) -> "PhaseModel":
        n = modes.eigenvectors.shape[1]
        bits = state_bits(n).astype(float)
        ones = np.ones(n)
        projs = modes.group_projectors()
        const = np.einsum("i,gij,j->g", ones, projs, ones)[:, None] * np.ones(len(bits))
        linear = 2 * np.einsum("si,gij,j->gs", bits, projs, ones)
        quad = np.einsum("si,gij,sj->gs", bits, projs, bits)
        return cls(const, linear, quad, float(np.pi / const[0, 0]))

    @property
    def n_groups(self) -> int:
        return self.const.shape[0]

    def squared(self, ratio) -> np.ndarray:
        """Squared group forces, shape ``ratio.shape + (G, S)``."""
        x = np.asarray(ratio, dtype=float)[..., None, None] - 1.0
        return self.const + x * self.linear + x * x * self.quad

    def phases(self, areas, ratio) -> np.ndarray:
        """Phases for broadcastable ``areas (..., G)`` and ``ratio (...)``."""
        areas = np.asarray(areas, dtype=float)
        return self.norm * np.einsum("...g,...gs->...s", areas, self.squared(ratio))

    def solution_phases(self, solution: PulseSolution) -> np.ndarray:
        return self.phases(solution.areas, solution.ratio)


@lru_cache(maxsize=None)
def default_phase_model() -> PhaseModel:
    return PhaseModel.from_modes(default_modes())


def rotate_ring(state: int, k: int = 1) -> int:
    """Rotate the five ring bits of ``state`` by ``k`` positions."""
    hub = state >> 5
    ring = format(state & 0b11111, "05b")
    k %= 5
    return (hub << 5) | int(ring[k:] + ring[:k], 2)


def reflect_ring(state: int) -> int:
    hub = state >> 5
    ring = format(state & 0b11111, "05b")
    return (hub << 5) | int(ring[::-1], 2)


@dataclass(frozen=True)
class CyclicClass:
    label: str
    representative: int
    members: tuple[int, ...] = field(repr=False)

    @property
    def multiplicity(self) -> int:
        return len(self.members)


@lru_cache(maxsize=None)
def cyclic_classes() -> tuple[CyclicClass, ...]:
    """The 16 ring-rotation orbits of the 64 basis states."""
    out = []
    for label in CLASS_LABELS:
        rep = int(label, 2)
        members = sorted({rotate_ring(rep, k) for k in range(5)})
        out.append(CyclicClass(label, rep, tuple(members)))
    return tuple(out)


def class_representatives() -> np.ndarray:
    return np.array([c.representative for c in cyclic_classes()])


def class_of_state() -> np.ndarray:
    """Index of the cyclic class containing each basis state."""
    idx = np.empty(N_STATES, dtype=int)
    for k, c in enumerate(cyclic_classes()):
        idx[list(c.members)] = k
    return idx


def intermediate_fidelity(phases_so_far, target) -> float:
    """Overlap magnitude of the phased |+>^6 register with the target state."""
    d = np.asarray(phases_so_far, dtype=float) - np.asarray(target, dtype=float)
    return float(abs(np.mean(np.exp(1j * d))))


def phase_class_table(phi: np.ndarray) -> list[tuple[str, int, float, float]]:
    """Rows of (representative, multiplicity, phase/pi, phase/pi mod 2)."""
    rows = []
    for c in cyclic_classes():
        x = float(phi[c.representative] / np.pi)
        rows.append((c.label, c.multiplicity, x, float(np.mod(x, 2.0))))
    return rows

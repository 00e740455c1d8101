"""Exact density-matrix simulation of the six-qubit register.

Density matrices are arrays of shape ``(..., 64, 64)``; any leading axes are
batch axes and every operation acts on them elementwise.  Qubit 0 is the hub
and is the most significant bit of the basis index (see
:mod:`ionqec.coupling`).  Bit value 0 is spin down, 1 is spin up; a hub state
``alpha|down> + beta|up>`` is the vector ``(alpha, beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

N_QUBITS = 6
DIM = 2**N_QUBITS
HUB = 0
RING = (1, 2, 3, 4, 5)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class PureTarget:
    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"amplitudes not normalised (|a|^2+|b|^2 = {norm})")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def bloch(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        return np.array([2 * (np.conj(a) * b).real, 2 * (np.conj(a) * b).imag,
                         abs(a) ** 2 - abs(b) ** 2])

    @classmethod
    def from_vector(cls, v) -> "PureTarget":
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(complex(v[0]), complex(v[1]))


@dataclass(frozen=True)
class NoiseChannelSpec:
    kind: Literal["dephasing", "depolarizing"]
    t: float

    def __post_init__(self):
        if self.kind not in ("dephasing", "depolarizing"):
            raise ValueError(f"unknown channel {self.kind!r}")
        if not self.t >= 0:
            raise ValueError(f"channel time must be non-negative, got {self.t}")


@dataclass
class RegisterState:
    rho: np.ndarray

    def check(self, tol: float = 1e-10) -> None:
        check_state(self.rho, tol)


def check_state(rho: np.ndarray, tol: float = 1e-10, pos_tol: float = 1e-9) -> None:
    """Raise ``ValueError`` unless every matrix is a unit-trace density matrix."""
    rho = np.asarray(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1)) > tol:
        raise ValueError(f"trace deviates from 1 by {np.max(np.abs(tr - 1)):.3g}")
    herm = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    if herm > tol:
        raise ValueError(f"not Hermitian (deviation {herm:.3g})")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -pos_tol:
        raise ValueError(f"negative eigenvalue {evals.min():.3g}")


def _as_vectors(psi) -> np.ndarray:
    if isinstance(psi, PureTarget):
        return psi.vector
    return np.asarray(psi, dtype=complex)


def _split(rho: np.ndarray, qubit: int):
    lead = rho.shape[:-2]
    a, b = 2**qubit, 2 ** (N_QUBITS - qubit - 1)
    return lead, rho.reshape(lead + (a, 2, b, a, 2, b))


def apply_operator(rho: np.ndarray, qubit: int, op: np.ndarray) -> np.ndarray:
    """``K rho K^dagger`` with ``K`` acting on one qubit (``op`` may be batched)."""
    lead, t = _split(rho, qubit)
    op = np.asarray(op, dtype=complex)
    out = np.einsum("...ij,...ajbckd,...lk->...aibcld", op, t, op.conj()) if op.ndim > 2 else \
        np.einsum("ij,...ajbckd,lk->...aibcld", op, t, op.conj())
    return out.reshape(rho.shape)


def prepare_initial(psi) -> np.ndarray:
    """``|psi><psi|`` on the hub times ``|+++++><+++++|`` on the ring."""
    v = _as_vectors(psi)
    ring = np.full(32, 2**-2.5, dtype=complex)
    state = (v[..., :, None] * ring).reshape(v.shape[:-1] + (DIM,))
    return state[..., :, None] * state[..., None, :].conj()


def apply_diagonal(rho: np.ndarray, phases) -> np.ndarray:
    """Conjugate by ``diag(exp(i phases))``; phases may carry batch axes."""
    u = np.exp(1j * np.asarray(phases, dtype=float))
    return rho * u[..., :, None] * u[..., None, :].conj()


def _qubit_list(qubits) -> list[int]:
    if qubits is None:
        return list(range(N_QUBITS))
    if isinstance(qubits, (int, np.integer)):
        return [int(qubits)]
    return [int(q) for q in qubits]


_INDEX = np.arange(DIM)
_DIFF = _INDEX[:, None] ^ _INDEX[None, :]
_POPCOUNT = np.array([bin(i).count("1") for i in range(DIM)])


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("channel time must be finite and non-negative")
    return t


def dephase(rho: np.ndarray, qubits, t) -> np.ndarray:
    """Dephasing channel of duration ``t`` on each listed qubit."""
    mask = 0
    for q in _qubit_list(qubits):
        mask |= 1 << (N_QUBITS - 1 - q)
    flips = _POPCOUNT[_DIFF & mask]
    t = _check_time(t)
    factor = np.exp(-t[..., None, None] * flips)
    return rho * factor


def _diag_pair(ten: np.ndarray, bit: int):
    """View of the block with the split qubit equal to ``bit`` on both sides."""
    return ten[..., :, bit, :, :, bit, :]


def depolarize(rho: np.ndarray, qubits, t) -> np.ndarray:
    """Depolarising channel of duration ``t`` on each listed qubit.

    Coherences decay exactly as under dephasing; in addition the two
    diagonal blocks of each qubit relax toward their mean.
    """
    t = _check_time(t)
    out = dephase(rho, qubits, t)
    relax = (0.5 * (1 - np.exp(-t))).reshape(t.shape + (1,) * 4)
    for q in _qubit_list(qubits):
        lead, ten = _split(out, q)
        x, y = _diag_pair(ten, 0), _diag_pair(ten, 1)
        d = x - y
        d *= relax
        x -= d
        y += d
    return out


def kraus_operators(spec: NoiseChannelSpec) -> list[np.ndarray]:
    e = np.exp(-spec.t)
    if spec.kind == "dephasing":
        return [np.sqrt((1 + e) / 2) * PAULI["I"], np.sqrt((1 - e) / 2) * PAULI["Z"]]
    return [np.sqrt((1 + 3 * e) / 4) * PAULI["I"]] + [
        np.sqrt((1 - e) / 4) * PAULI[p] for p in "XYZ"]


def apply_kraus(rho: np.ndarray, qubit: int, kraus: Iterable[np.ndarray]) -> np.ndarray:
    return sum(apply_operator(rho, qubit, k) for k in kraus)


def apply_noise(rho: np.ndarray, qubit, spec: NoiseChannelSpec) -> np.ndarray:
    """Apply the channel to ``qubit`` (an index, a list of indices, or None for all)."""
    if spec.t == 0:
        return rho
    if spec.kind == "dephasing":
        return dephase(rho, qubit, spec.t)
    return depolarize(rho, qubit, spec.t)


def apply_pauli(rho: np.ndarray, qubit: int, pauli: str) -> np.ndarray:
    return apply_operator(rho, qubit, PAULI[pauli.upper()])


def project_x(rho: np.ndarray, qubit: int, outcome: int) -> np.ndarray:
    """Unnormalised post-measurement state for X outcome ``+1`` or ``-1``."""
    proj = 0.5 * (PAULI["I"] + outcome * PAULI["X"])
    return apply_operator(rho, qubit, proj)


@dataclass
class Branch:
    outcome: int
    probability: float
    rho: np.ndarray


def measure_x(rho: np.ndarray, qubit: int, min_probability: float = 1e-14) -> list[Branch]:
    """Both X-basis outcomes of one qubit; impossible outcomes are dropped."""
    branches = []
    for outcome in (+1, -1):
        post = project_x(rho, qubit, outcome)
        p = float(np.trace(post).real)
        if p > min_probability:
            branches.append(Branch(outcome, p, post / p))
    return branches


def reduced_qubit(rho: np.ndarray, qubit: int) -> np.ndarray:
    lead, ten = _split(rho, qubit)
    return np.einsum("...aibakb->...ik", ten)


def trace_out(rho: np.ndarray, qubit: int) -> np.ndarray:
    """Partial trace over one qubit, returning ``(..., 32, 32)``."""
    lead, ten = _split(rho, qubit)
    out = _diag_pair(ten, 0) + _diag_pair(ten, 1)
    return out.reshape(lead + (DIM // 2, DIM // 2))


def reset_qubit(rho: np.ndarray, qubit: int, new_state=PLUS) -> np.ndarray:
    v = _as_vectors(new_state)
    lead, ten = _split(rho, qubit)
    rest = _diag_pair(ten, 0) + _diag_pair(ten, 1)
    pure = np.outer(v, v.conj())
    out = np.empty_like(ten, dtype=complex)
    for i in range(2):
        for k in range(2):
            out[..., :, i, :, :, k, :] = pure[i, k] * rest
    return out.reshape(rho.shape)


def hub_fidelity(rho: np.ndarray, psi) -> np.ndarray | float:
    return state_fidelity(reduced_qubit(rho, HUB), psi)


def state_fidelity(rho_q: np.ndarray, psi) -> np.ndarray | float:
    """``|<psi| rho |psi>|`` for single-qubit states (batched)."""
    v = _as_vectors(psi)
    f = np.abs(np.einsum("...i,...ij,...j->...", v.conj(), rho_q, v))
    return float(f) if np.ndim(f) == 0 else f


def random_pure_target(rng: np.random.Generator, size: int | None = None):
    """Haar-random qubit state(s); ``size`` returns an ``(size, 2)`` array."""
    shape = (2,) if size is None else (size, 2)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    if size is None:
        return PureTarget(complex(z[0]), complex(z[1]))
    return z


def ring_x_transform() -> np.ndarray:
    """Identity on the hub, Hadamard on every ring qubit."""
    h = HADAMARD.real
    out = np.eye(2)
    for _ in RING:
        out = np.kron(out, h)
    return out

"""Planar Coulomb crystal equilibria and transverse normal modes.

Units are dimensionless throughout: the axial (out-of-plane) trap frequency,
the ion mass and the Coulomb constant are all 1, and ``beta`` is the ratio of
in-plane to axial confinement strength.  In these units the transverse
stiffness matrix has unit row sums, so the centre-of-mass mode always sits at
frequency 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

GRAD_TOL = 1e-9
DEGENERACY_TOL = 1e-8
MIN_DISTANCE = 1e-9
MAX_RESTARTS = 32


class CrystalError(ValueError):
    """Base class for invalid crystal inputs or states."""


class ConfigError(CrystalError):
    pass


class GeometryError(CrystalError):
    pass


class UnstableCrystalError(CrystalError):
    """The transverse stiffness matrix is not positive definite."""


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrystalConfig:
    n_ions: int = 6
    # The planar layout goes transversely unstable near beta ~ 0.35 for six ions.
    beta: float = 0.1
    seed: int | None = None
    seed_layout: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ConfigError(f"n_ions must be a positive integer, got {self.n_ions!r}")
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta!r}")
        if self.seed_layout is not None and np.shape(self.seed_layout) != (self.n_ions, 2):
            raise ConfigError("seed_layout must have shape (n_ions, 2)")

    @classmethod
    def from_json(cls, data: dict) -> "CrystalConfig":
        return cls(n_ions=int(data.get("n_ions", 6)), beta=float(data.get("beta", 0.1)),
                   seed=data.get("seed"))


@dataclass(frozen=True)
class Geometry:
    positions: np.ndarray

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    @property
    def pair_distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ModeBasis:
    """Transverse modes, highest frequency first.

    ``eigenvectors[m]`` is the unit mode vector of mode ``m`` (rows of A).
    """

    frequencies: np.ndarray
    eigenvectors: np.ndarray
    degenerate_groups: tuple[tuple[int, ...], ...]

    @property
    def n_groups(self) -> int:
        return len(self.degenerate_groups)

    def group_projector(self, g: int) -> np.ndarray:
        vecs = self.eigenvectors[list(self.degenerate_groups[g])]
        return vecs.T @ vecs

    def group_projectors(self) -> np.ndarray:
        return np.stack([self.group_projector(g) for g in range(self.n_groups)])

    def group_frequencies(self) -> np.ndarray:
        return np.array([self.frequencies[g[0]] for g in self.degenerate_groups])

    def to_json(self) -> dict:
        return {
            "frequencies": [float(w) for w in self.frequencies],
            "eigenvectors": [[float(a) for a in row] for row in self.eigenvectors],
            "degenerate_groups": [list(g) for g in self.degenerate_groups],
        }


def potential_energy(positions: np.ndarray, beta: float) -> float:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    energy = 0.5 * beta * np.sum(pos**2)
    iu = np.triu_indices(len(pos), 1)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)[iu]
    return float(energy + np.sum(1.0 / d))


def potential_gradient(positions: np.ndarray, beta: float) -> np.ndarray:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(d, np.inf)
    grad = beta * pos - np.sum(diff / d[..., None] ** 3, axis=1)
    return grad


def potential_hessian(positions: np.ndarray, beta: float) -> np.ndarray:
    """In-plane Hessian, flattened as (x0, y0, x1, y1, ...)."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pos)
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(d, np.inf)
    # d2/dr_i dr_j of 1/|r_i - r_j| for i != j
    outer = diff[..., :, None] * diff[..., None, :]
    block = np.eye(2) / d[..., None, None] ** 3 - 3 * outer / d[..., None, None] ** 5
    hess = np.zeros((n, 2, n, 2))
    for i in range(n):
        for j in range(n):
            if i != j:
                hess[i, :, j, :] = block[i, j]
        hess[i, :, i, :] = beta * np.eye(2) - block[i].sum(axis=0)
    return hess.reshape(2 * n, 2 * n)


def _hexagonal_seed(n: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    # Triangular-lattice points nearest the origin, scaled to roughly the
    # crystal size, with a small random kick to break symmetry.
    span = int(np.ceil(np.sqrt(n))) + 1
    pts = []
    for i in range(-span, span + 1):
        for j in range(-span, span + 1):
            pts.append((i + 0.5 * j, j * np.sqrt(3) / 2))
    pts = np.array(pts)
    pts = pts[np.argsort(np.linalg.norm(pts, axis=1), kind="stable")][:n]
    spacing = (1.0 / beta) ** (1.0 / 3.0)
    return spacing * pts + 0.1 * spacing * rng.standard_normal((n, 2))


def _newton_polish(pos: np.ndarray, beta: float, steps: int = 20) -> np.ndarray:
    for _ in range(steps):
        grad = potential_gradient(pos, beta).ravel()
        if np.max(np.abs(grad)) < GRAD_TOL * 1e-2:
            break
        hess = potential_hessian(pos, beta)
        step = np.linalg.lstsq(hess, grad, rcond=1e-10)[0]
        pos = pos - step.reshape(-1, 2)
    return pos


def _canonical_order(pos: np.ndarray) -> np.ndarray:
    """Order ions shell by shell, clockwise within a shell, first ring ion on +x."""
    pos = pos - pos.mean(axis=0)
    radius = np.linalg.norm(pos, axis=1)
    if len(pos) == 1:
        return np.zeros((1, 2))
    shells = np.round(radius / max(radius.max(), 1e-12), 4)
    outer = np.argmax(radius)
    # rotate so the outermost ion with the smallest angle lies on +x
    ang0 = np.arctan2(pos[outer, 1], pos[outer, 0])
    c, s = np.cos(-ang0), np.sin(-ang0)
    pos = pos @ np.array([[c, s], [-s, c]])
    angle = np.mod(-np.arctan2(pos[:, 1], pos[:, 0]), 2 * np.pi)
    angle[radius < 1e-6 * radius.max()] = 0.0
    angle = np.where(angle > 2 * np.pi - 1e-9, 0.0, angle)
    order = np.lexsort((angle, shells))
    return pos[order]


def equilibrium_positions(config: CrystalConfig) -> Geometry:
    """Minimum of the planar trap-plus-Coulomb energy.

    Runs gradient-based minimisation from perturbed hexagonal seeds, keeps
    the lowest converged energy, and returns the ions ordered by shell and
    clockwise angle.
    """
    n, beta = config.n_ions, config.beta
    if n == 1:
        return Geometry(np.zeros((1, 2)))
    rng = np.random.default_rng(config.seed if config.seed is not None else 0)

    def fun(x):
        return potential_energy(x, beta)

    def jac(x):
        return potential_gradient(x, beta).ravel()

    best = None
    for attempt in range(MAX_RESTARTS):
        if attempt == 0 and config.seed_layout is not None:
            x0 = np.asarray(config.seed_layout, dtype=float)
        else:
            x0 = _hexagonal_seed(n, beta, rng)
        res = optimize.minimize(fun, x0.ravel(), jac=jac, method="BFGS",
                                options={"gtol": 1e-11, "maxiter": 10_000})
        pos = _newton_polish(res.x.reshape(n, 2), beta)
        if np.max(np.abs(potential_gradient(pos, beta))) >= GRAD_TOL:
            continue
        evals = np.linalg.eigvalsh(potential_hessian(pos, beta))
        if evals.min() < -1e-8:
            continue
        energy = potential_energy(pos, beta)
        if best is None or energy < best[0] - 1e-10:
            best = (energy, pos)
        # small crystals: a handful of agreeing restarts is enough
        if attempt >= 3 and best is not None:
            break
    if best is None:
        raise OptimizationError(f"no converged equilibrium after {MAX_RESTARTS} restarts")
    return Geometry(_canonical_order(best[1]))


def stiffness_matrix(geometry: Geometry) -> np.ndarray:
    d = geometry.pair_distances.copy()
    n = geometry.n_ions
    off = ~np.eye(n, dtype=bool)
    if n > 1 and d[off].min() < MIN_DISTANCE:
        raise GeometryError("coincident ions")
    np.fill_diagonal(d, np.inf)
    k = 1.0 / d**3
    np.fill_diagonal(k, 0.0)
    k[np.diag_indices(n)] = 1.0 - k.sum(axis=1)
    return k


def _group_degenerate(freqs: np.ndarray, tol: float) -> tuple[tuple[int, ...], ...]:
    groups: list[list[int]] = [[0]]
    for m in range(1, len(freqs)):
        if abs(freqs[m] - freqs[groups[-1][-1]]) < tol:
            groups[-1].append(m)
        else:
            groups.append([m])
    return tuple(tuple(g) for g in groups)


def transverse_modes(k: np.ndarray, tol: float = DEGENERACY_TOL) -> ModeBasis:
    k = np.asarray(k, dtype=float)
    if not np.allclose(k, k.T, atol=1e-12):
        raise CrystalError("stiffness matrix is not symmetric")
    lam, vec = np.linalg.eigh(0.5 * (k + k.T))
    if lam.min() <= 0:
        raise UnstableCrystalError(
            f"non-positive stiffness eigenvalue {lam.min():.3g}; planar crystal is unstable")
    order = np.argsort(-lam, kind="stable")
    lam, vec = lam[order], vec[:, order]
    freqs = np.sqrt(lam)
    # fix the sign so that each vector's largest component is positive
    rows = vec.T.copy()
    for row in rows:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return ModeBasis(freqs, rows, _group_degenerate(freqs, tol))


def crystal_modes(config: CrystalConfig | None = None) -> tuple[Geometry, ModeBasis]:
    config = config or CrystalConfig()
    geometry = equilibrium_positions(config)
    return geometry, transverse_modes(stiffness_matrix(geometry))


@lru_cache(maxsize=None)
def default_modes() -> ModeBasis:
    """Modes of the six-ion hub-and-ring crystal used by the protocols."""
    return crystal_modes(CrystalConfig())[1]

"""Search for pulse sequences realising a target diagonal unitary.

A candidate is a pulse-area vector ``P`` (one area per mode-frequency group),
a force ratio ``R`` and an integer string ``n`` (one winding number per
cyclic class).  Classes are ordered as in :data:`ionqec.coupling.CLASS_LABELS`
and the cost telescopes over consecutive classes, so it vanishes exactly when
every class phase matches the target modulo 2 pi up to one common offset.

Targets may declare the hub phase free.  The cost then carries one offset per
hub value, i.e. the unitary is matched up to a Z rotation on the hub, which
is harmless whenever the hub is idle while the unitary acts.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coupling import (
    N_STATES,
    PhaseModel,
    PulseSolution,
    class_representatives,
    cyclic_classes,
    rotate_ring,
    state_bits,
)
from .nelder_mead import nelder_mead

TWO_PI = 2 * np.pi
P_MAX = 25.0
R_BOUNDS = (-2.0, -0.5)
PRUNE_THRESHOLD = 1e-6
ACCEPT_TOLERANCE = 1e-8
# areas below this are reported as exact zeros (pulse omitted)
AREA_ZERO = 1e-10
# Grid minima below this are refined before deciding to prune.
REFINE_THRESHOLD = 1.0
R_GRID = np.linspace(*R_BOUNDS, 301)


@dataclass(frozen=True)
class TargetUnitary:
    phases: np.ndarray
    name: str = "custom"
    hub_phase_free: bool = False

    def __post_init__(self):
        phi = np.mod(np.asarray(self.phases, dtype=float), TWO_PI)
        if phi.shape != (N_STATES,):
            raise ValueError(f"target needs {N_STATES} phases, got shape {phi.shape}")
        object.__setattr__(self, "phases", phi)
        for s in range(N_STATES):
            d = phi[rotate_ring(s)] - phi[s]
            if abs((d + np.pi) % TWO_PI - np.pi) > 1e-9:
                raise ValueError("target phases are not invariant under ring rotation")

    @property
    def class_phases(self) -> np.ndarray:
        return self.phases[class_representatives()]

    def references(self) -> tuple[int, ...]:
        return (0, 8) if self.hub_phase_free else (0,)

    def to_json(self) -> dict:
        return {"name": self.name, "phases": [float(p) for p in self.phases],
                "hub_phase_free": self.hub_phase_free}

    @classmethod
    def from_json(cls, data) -> "TargetUnitary":
        if isinstance(data, list):
            return cls(np.asarray(data, dtype=float))
        return cls(np.asarray(data["phases"], dtype=float), data.get("name", "custom"),
                   bool(data.get("hub_phase_free", False)))


def target_spokes() -> TargetUnitary:
    """Controlled-Z between the hub and every ring qubit."""
    bits = state_bits()
    return TargetUnitary(np.pi * ((bits[:, 0] * bits[:, 1:].sum(axis=1)) % 2), "spokes")


def target_ring() -> TargetUnitary:
    """Controlled-Z on every edge of the pentagon (hub phase left free)."""
    ring = state_bits()[:, 1:]
    edges = sum(ring[:, i] * ring[:, (i + 1) % 5] for i in range(5))
    return TargetUnitary(np.pi * (edges % 2), "ring", hub_phase_free=True)


NAMED_TARGETS = {"spokes": target_spokes, "ring": target_ring}


@dataclass(frozen=True)
class IntegerAssignment:
    n: tuple[int, ...]
    bound: int

    def __post_init__(self):
        if any(abs(k) > self.bound for k in self.n):
            raise ValueError(f"integer string {self.n} exceeds bound {self.bound}")
        if self.n and self.n[0] != 0:
            raise ValueError("reference class must carry n = 0")


@dataclass
class SearchSolution:
    solution: PulseSolution
    residual: float
    assignment: IntegerAssignment

    def rank_key(self):
        s = self.solution
        return (round(float(np.sum(s.areas)), 9), round(abs(s.ratio + 1.0), 9), self.assignment.n)

    def to_json(self) -> dict:
        out = self.solution.to_json()
        out["n"] = list(self.assignment.n)
        out["residual"] = float(self.residual)
        return out


@dataclass
class SearchReport:
    solutions: list[SearchSolution] = field(default_factory=list)
    nodes_explored: int = 0
    nodes_pruned: int = 0
    wall_time: float = 0.0
    exhausted: bool = False

    def ranked(self) -> "SearchReport":
        self.solutions.sort(key=SearchSolution.rank_key)
        return self


class ClassProblem:
    """Class-reduced phase data for one target and phase model."""

    def __init__(self, target: TargetUnitary, model: PhaseModel):
        reps = class_representatives()
        self.target = target
        self.model = model
        self.const = model.const[:, reps]
        self.linear = model.linear[:, reps]
        self.quad = model.quad[:, reps]
        self.goal = target.class_phases
        self.refs = target.references()
        n = len(reps)
        self.terms = [(k - 1, k) for k in range(1, n) if k not in self.refs[1:]]
        self.free = [k for k in range(n) if k not in self.refs]

    @property
    def n_classes(self) -> int:
        return len(self.goal)

    def squared(self, ratio) -> np.ndarray:
        x = np.asarray(ratio, dtype=float)[..., None, None] - 1.0
        return self.const + x * self.linear + x * x * self.quad

    def class_phases(self, areas, ratio) -> np.ndarray:
        return self.model.norm * np.einsum("...g,...gk->...k", np.asarray(areas, float),
                                           self.squared(ratio))

    def term_values(self, areas, ratio, n, terms=None) -> np.ndarray:
        terms = self.terms if terms is None else terms
        dev = self.class_phases(areas, ratio) + TWO_PI * np.asarray(n) - self.goal
        a = np.array([t[0] for t in terms], dtype=int)
        b = np.array([t[1] for t in terms], dtype=int)
        return dev[..., b] - dev[..., a]

    def cost(self, areas, ratio, n, terms=None) -> float:
        return float(np.sum(self.term_values(areas, ratio, n, terms) ** 2))

    # -- profiled partial cost -------------------------------------------------

    def _linear_system(self, ratios: np.ndarray, n, terms):
        a = np.array([t[0] for t in terms], dtype=int)
        b = np.array([t[1] for t in terms], dtype=int)
        sq = self.model.norm * self.squared(ratios)  # (nR, G, K)
        mat = np.swapaxes(sq[..., b] - sq[..., a], -1, -2)  # (nR, T, G)
        n = np.asarray(n, dtype=float)
        rhs = (self.goal[b] - self.goal[a]) - TWO_PI * (n[b] - n[a])  # (T,)
        return mat, rhs

    def profile(self, ratios, n, terms) -> tuple[np.ndarray, np.ndarray]:
        """Exact min over box-bounded areas of the partial cost, per ratio.

        Enumerates the faces of the area box; the minimiser over the box is
        the best feasible face-restricted least-squares point.
        """
        ratios = np.atleast_1d(np.asarray(ratios, dtype=float))
        mat, rhs = self._linear_system(ratios, n, terms)
        gram = np.einsum("rtg,rth->rgh", mat, mat)
        lin = np.einsum("rtg,t->rg", mat, rhs)
        c0 = float(rhs @ rhs)
        g = gram.shape[-1]
        best = np.full(len(ratios), np.inf)
        best_p = np.zeros((len(ratios), g))
        for free in _FREE_SETS[g]:
            fixed = [i for i in range(g) if i not in free]
            if free:
                inv = np.linalg.pinv(gram[:, free][:, :, free])
            for values in _FIXED_VALUES[len(fixed)]:
                p = np.zeros((len(ratios), g))
                if fixed:
                    p[:, fixed] = values
                if free:
                    r_side = lin[:, free] - np.einsum("rfk,rk->rf", gram[:, free][:, :, fixed],
                                                      p[:, fixed]) if fixed else lin[:, free]
                    p[:, free] = np.einsum("rfk,rk->rf", inv, r_side)
                    ok = np.all((p[:, free] >= -1e-12) & (p[:, free] <= P_MAX + 1e-12), axis=1)
                else:
                    ok = np.ones(len(ratios), dtype=bool)
                val = np.einsum("rg,rgh,rh->r", p, gram, p) - 2 * np.einsum("rg,rg->r", p, lin) + c0
                take = ok & (val < best)
                best[take] = val[take]
                best_p[take] = p[take]
        best_p = np.clip(best_p, 0.0, P_MAX)
        return np.maximum(best, 0.0), best_p

    def minimize_partial(self, n, terms, grid=R_GRID, refine_below=REFINE_THRESHOLD):
        """Minimum over (P, R) of the cost restricted to ``terms``.

        Scans a ratio grid, then refines each promising local minimum with a
        one-dimensional Nelder-Mead over the profiled cost.
        """
        vals, ps = self.profile(grid, n, terms)
        i_best = int(np.argmin(vals))
        best = (float(vals[i_best]), ps[i_best], float(grid[i_best]))
        if best[0] == 0.0:
            return best
        local = [i for i in range(len(grid))
                 if vals[i] <= refine_below
                 and (i == 0 or vals[i] <= vals[i - 1])
                 and (i == len(grid) - 1 or vals[i] <= vals[i + 1])]
        local.sort(key=lambda i: vals[i])
        h = grid[1] - grid[0]
        for i in local[:4]:
            def f(x):
                return float(self.profile(x[0], n, terms)[0][0])

            res = nelder_mead(f, np.array([grid[i]]), step=h / 2, bounds=[R_BOUNDS],
                              ftol=1e-18, xtol=1e-13, max_evals=400, restarts=1)
            if res.fun < best[0]:
                val, p = self.profile(res.x[0], n, terms)
                best = (float(val[0]), p[0], float(res.x[0]))
            if best[0] < 1e-16:
                break
        return best


def _free_sets(g):
    return [tuple(c) for k in range(g, -1, -1) for c in itertools.combinations(range(g), k)]


_FREE_SETS = {g: _free_sets(g) for g in range(1, 7)}
_FIXED_VALUES = {k: [np.array(v, dtype=float) for v in itertools.product((0.0, P_MAX), repeat=k)]
                 for k in range(0, 7)}


def cost(areas, ratio, n, target: TargetUnitary, model: PhaseModel) -> float:
    """Telescoping class cost; zero iff phases match the target up to global phase."""
    return ClassProblem(target, model).cost(areas, ratio, n)


def verify_solution(solution: PulseSolution, target: TargetUnitary, model: PhaseModel) -> float:
    """Largest distance (radians) of any state's phase error from the reference offset."""
    phi = model.solution_phases(solution)
    dev = phi - target.phases
    hub = state_bits()[:, 0]
    worst = 0.0
    halves = (hub == 0, hub == 1) if target.hub_phase_free else (np.ones(N_STATES, bool),)
    for mask in halves:
        d = dev[mask] - dev[mask][0]
        worst = max(worst, float(np.max(np.abs((d + np.pi) % TWO_PI - np.pi))))
    return worst


def _tree_size(bound: int, depth: int) -> int:
    b = 2 * bound + 1
    return sum(b**d for d in range(1, depth + 1))


@dataclass(frozen=True)
class _SearchSpec:
    problem: ClassProblem
    bound: int
    tolerance: float
    prune: float | None
    deadline: float | None
    node_budget: int | None
    max_solutions: int | None


def _polish(problem: ClassProblem, n, p0, r0) -> tuple[np.ndarray, float, float]:
    """Nelder-Mead refinement of (P, R) for fixed ``n``; zero areas stay zero."""
    p0 = np.asarray(p0, dtype=float)
    live = p0 > 0

    def expand(x):
        p = np.zeros_like(p0)
        p[live] = x[:-1]
        return p

    def f(x):
        return problem.cost(expand(x), x[-1], n)

    x0 = np.append(p0[live], r0)
    f0 = f(x0)
    if f0 < 1e-20 or not live.any():
        return p0, float(r0), f0
    bounds = [(0.0, P_MAX)] * int(live.sum()) + [R_BOUNDS]
    step = np.append(np.full(int(live.sum()), 1e-3), 1e-4)
    res = nelder_mead(f, x0, step=step, bounds=bounds, ftol=1e-22, max_evals=4000,
                      restarts=2, target=1e-20)
    if res.fun < f0:
        return expand(res.x), float(res.x[-1]), res.fun
    return p0, float(r0), f0


def _dfs(spec: _SearchSpec, prefix: tuple[int, ...]) -> SearchReport:
    """Depth-first search below ``prefix`` (values for the leading free classes)."""
    problem = spec.problem
    free = problem.free
    report = SearchReport()
    n = np.zeros(problem.n_classes, dtype=int)
    choices = list(range(-spec.bound, spec.bound + 1))
    choices.sort(key=lambda k: (abs(k), k))
    depth_total = len(free)
    # terms whose later endpoint is the d-th free class become active at depth d
    active_at = []
    for d in range(depth_total + 1):
        assigned = set(problem.refs) | set(free[:d])
        active_at.append([t for t in problem.terms if t[0] in assigned and t[1] in assigned])

    def out_of_budget():
        if spec.deadline is not None and time.monotonic() > spec.deadline:
            return True
        return spec.node_budget is not None and report.nodes_explored >= spec.node_budget

    def visit(depth):
        if out_of_budget():
            report.exhausted = True
            return False
        if spec.max_solutions is not None and len(report.solutions) >= spec.max_solutions:
            return False
        report.nodes_explored += 1
        terms = active_at[depth]
        leaf = depth == depth_total
        if spec.prune is not None or leaf:
            value, p, r = problem.minimize_partial(n, terms)
            if leaf:
                if value < spec.tolerance * 100:
                    p, r, value = _polish(problem, n, p, r)
                if value < spec.tolerance:
                    sol = PulseSolution(np.where(p < AREA_ZERO, 0.0, p), r, problem.target.name)
                    report.solutions.append(
                        SearchSolution(sol, value, IntegerAssignment(tuple(int(k) for k in n),
                                                                     spec.bound)))
                return True
            if value > spec.prune:
                report.nodes_pruned += _tree_size(spec.bound, depth_total - depth)
                return True
        cls = free[depth]
        for k in choices:
            n[cls] = k
            if not visit(depth + 1):
                n[cls] = 0
                return False
        n[cls] = 0
        return True

    # walk the fixed prefix without evaluating it
    for d, k in enumerate(prefix):
        n[free[d]] = k
    visit(len(prefix))
    return report


def _merge(reports: list[SearchReport]) -> SearchReport:
    out = SearchReport()
    for r in reports:
        out.solutions.extend(r.solutions)
        out.nodes_explored += r.nodes_explored
        out.nodes_pruned += r.nodes_pruned
        out.exhausted = out.exhausted or r.exhausted
    return out


def integer_search(
    target: TargetUnitary,
    model: PhaseModel,
    *,
    bound: int = 3,
    tolerance: float = ACCEPT_TOLERANCE,
    prune: float | None = PRUNE_THRESHOLD,
    budget_secs: float | None = None,
    budget_nodes: int | None = None,
    max_solutions: int | None = None,
    workers: int = 1,
) -> SearchReport:
    """Branch-and-bound over integer strings with profiled partial minimisation.

    Internal nodes fix the winding numbers of a prefix of the classes; the
    partial cost over the fully assigned terms is minimised and the subtree is
    pruned when it exceeds ``prune``.  ``prune=None`` disables pruning and
    minimises only at the leaves (exhaustive reference run).  The root counts
    as one explored node; ``nodes_explored + nodes_pruned`` always equals the
    size of the full tree when the search completes.
    """
    if not 0 <= bound <= 10:
        raise ValueError("bound must lie in [0, 10]")
    start = time.monotonic()
    problem = ClassProblem(target, model)
    deadline = start + budget_secs if budget_secs is not None else None
    spec = _SearchSpec(problem, bound, tolerance, prune, deadline, budget_nodes, max_solutions)
    if workers <= 1 or budget_nodes is not None:
        report = _dfs(spec, ())
    else:
        # root handled here, children farmed out as independent work units
        report = SearchReport(nodes_explored=1)
        root_terms = [t for t in problem.terms if t[0] in problem.refs and t[1] in problem.refs]
        root_ok = True
        if prune is not None and root_terms:
            root_ok = problem.minimize_partial(np.zeros(problem.n_classes, int), root_terms)[0] <= prune
        if not root_ok:
            report.nodes_pruned = _tree_size(bound, len(problem.free))
        else:
            choices = sorted(range(-bound, bound + 1), key=lambda k: (abs(k), k))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_dfs, [spec] * len(choices), [(k,) for k in choices]))
            report = _merge([report] + parts)
    report.wall_time = time.monotonic() - start
    return report.ranked()


# free classes: all but the reference class (two references when the hub phase is free)
N_FREE = {False: len(cyclic_classes()) - 1, True: len(cyclic_classes()) - 2}


def exhaustive_count(bound: int, target: TargetUnitary) -> int:
    """Number of nodes (root included) of the full integer tree."""
    depth = N_FREE[target.hub_phase_free]
    return 1 + _tree_size(bound, depth)


def evolutionary_search(
    target: TargetUnitary,
    model: PhaseModel,
    *,
    population: int = 32,
    generations: int = 200,
    seed: int = 0,
    bound: int = 3,
    tolerance: float = ACCEPT_TOLERANCE,
) -> SearchReport:
    """Genetic search over (P, R, n) with tournament selection and elitism.

    Offspring take Gaussian steps in (P, R) and +-1 steps in n.  Each child is
    locally improved: areas are re-fit exactly for its (R, n), and n is pulled
    toward the winding numbers implied by the fitted phases.  Elites that
    reach the tolerance after polishing are reported.
    """
    if population < 8:
        raise ValueError("population must be at least 8")
    start = time.monotonic()
    rng = np.random.default_rng(seed)
    problem = ClassProblem(target, model)
    free = np.array(problem.free)
    g = problem.const.shape[0]
    report = SearchReport()
    if generations <= 0:
        report.wall_time = time.monotonic() - start
        return report

    def fitness(ind):
        return problem.cost(ind[0], ind[1], ind[2])

    def improve(ind):
        p, r, n = ind
        _, ps = problem.profile(r, n, problem.terms)
        p = ps[0]
        # pull n toward the nearest consistent winding numbers
        dev = problem.class_phases(p, r) - problem.goal
        offsets = np.zeros(problem.n_classes)
        hub_half = np.arange(problem.n_classes) >= 8
        for ref in problem.refs:
            mask = hub_half if ref == 8 else (~hub_half if problem.target.hub_phase_free
                                               else np.ones(problem.n_classes, bool))
            offsets[mask] = dev[ref]
        want = np.rint((offsets - dev) / TWO_PI).astype(int)
        n = n.copy()
        n[free] = np.clip(want[free], -bound, bound)
        _, ps = problem.profile(r, n, problem.terms)
        return (ps[0], r, n)

    def random_individual():
        p = rng.uniform(0, 12, g)
        r = rng.uniform(*R_BOUNDS)
        n = np.zeros(problem.n_classes, dtype=int)
        n[free] = rng.integers(-bound, bound + 1, len(free))
        return improve((p, r, n))

    pop = [random_individual() for _ in range(population)]
    fit = np.array([fitness(ind) for ind in pop])

    def tournament():
        idx = rng.choice(population, 3, replace=False)
        return pop[int(idx[np.argmin(fit[idx])])]

    for _ in range(generations):
        order = np.argsort(fit, kind="stable")
        children = [pop[i] for i in order[:2]]
        while len(children) < population:
            p, r, n = tournament()
            p = np.clip(p + rng.normal(0, 0.3, g), 0, P_MAX)
            r = float(np.clip(r + rng.normal(0, 0.05), *R_BOUNDS))
            n = n.copy()
            flip = rng.random(len(free)) < 1.0 / len(free)
            n[free[flip]] = np.clip(n[free[flip]] + rng.choice([-1, 1], flip.sum()), -bound, bound)
            children.append(improve((p, r, n)))
        pop = children
        fit = np.array([fitness(ind) for ind in pop])
        if fit.min() < tolerance * 1e3:
            break

    seen = set()
    for i in np.argsort(fit, kind="stable"):
        p, r, n = pop[i]
        key = tuple(int(k) for k in n)
        if key in seen or fit[i] > 1e-3:
            continue
        seen.add(key)
        value, p2, r2 = problem.minimize_partial(n, problem.terms)
        p2, r2, value = _polish(problem, n, p2, r2)
        if value < tolerance:
            report.solutions.append(SearchSolution(PulseSolution(p2, r2, target.name), value,
                                                   IntegerAssignment(key, bound)))
    report.nodes_explored = population * (generations + 1)
    report.wall_time = time.monotonic() - start
    return report.ranked()


def solution_integers(solution: PulseSolution, target: TargetUnitary, model: PhaseModel,
                      bound: int = 10) -> IntegerAssignment:
    """Winding numbers that make ``solution`` consistent with ``target``."""
    problem = ClassProblem(target, model)
    dev = problem.class_phases(solution.areas, solution.ratio) - problem.goal
    n = np.zeros(problem.n_classes, dtype=int)
    for k in range(problem.n_classes):
        ref = 8 if (target.hub_phase_free and k >= 8) else 0
        n[k] = int(np.rint((dev[ref] - dev[k]) / TWO_PI))
    return IntegerAssignment(tuple(int(x) for x in n), max(bound, int(np.max(np.abs(n)))))


def pulse_count(solution: PulseSolution) -> int:
    """Nonzero pulses in one application of the sequence."""
    return solution.n_pulses

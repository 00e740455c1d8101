"""Monte-Carlo fidelity curves, high-fidelity times and the scaling-law fit.

Every (sigma, t) cell averages ``samples`` independent protocol runs.  Sample
``si`` of cell ``(sigma_i, t_i)`` draws its target state and pulse noise from
its own substream ``SeedSequence(seed, spawn_key=(sigma_i, t_i, si))``, and
samples are evaluated in fixed blocks, so results do not depend on how the
work is spread over threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import engine
from .nelder_mead import NumericError, nelder_mead
from .protocol import BATCH_CHUNK, DEFAULT_GATE_TIME, CodeKind, run_batch

THRESHOLD = 0.99
DEFAULT_SIGMAS = (0.0, 0.005, 0.01, 0.015)
DEFAULT_SAMPLES = 500
CSV_FLOAT = "%.9g"


def default_time_grid(per_decade: int = 25, t_min: float = 1e-4, t_max: float = 1.0) -> np.ndarray:
    decades = math.log10(t_max / t_min)
    n = int(round(decades * per_decade)) + 1
    return np.logspace(math.log10(t_min), math.log10(t_max), n)


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    code: CodeKind = CodeKind.FIVE_RC
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    samples: int = DEFAULT_SAMPLES
    time_grid: np.ndarray = field(default_factory=default_time_grid)
    seed: int = 0
    gate_time: float = DEFAULT_GATE_TIME
    threads: int = 1

    def __post_init__(self):
        self.code = CodeKind(self.code)
        self.sigmas = tuple(float(s) for s in self.sigmas)
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigmas must be non-negative")
        g = self.time_grid
        if g.ndim != 1 or len(g) == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise ConfigError("time grid must be positive and strictly increasing")
        if self.gate_time < 0:
            raise ConfigError("gate time must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    def to_json(self) -> dict:
        return {"code": self.code.value, "sigmas": list(self.sigmas), "samples": self.samples,
                "time_grid": [float(t) for t in self.time_grid], "seed": self.seed,
                "gate_time": self.gate_time}

    @classmethod
    def from_json(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        if "time_grid" not in data and "tmax" in data:
            data["time_grid"] = default_time_grid(t_max=data.pop("tmax"))
        known = {k: data[k] for k in ("code", "sigmas", "samples", "time_grid", "seed",
                                      "gate_time", "threads") if k in data}
        return cls(**known)


@dataclass
class Curve:
    t: np.ndarray
    mean: np.ndarray
    std_err: np.ndarray
    sigma: float
    code: CodeKind


@dataclass(frozen=True)
class Tau:
    value: float
    censored: bool = False


@dataclass
class FitResult:
    tau0: float
    alpha: float
    sigma_th: float
    rms: float
    converged: bool
    sigma_cross_raw: float | None = None

    def to_json(self) -> dict:
        return {"tau0": self.tau0, "alpha": self.alpha, "sigma_th": self.sigma_th, "rms": self.rms}


@dataclass
class SweepRecord:
    config: SweepConfig
    curves: list[Curve]
    tau: np.ndarray
    censored: np.ndarray
    tau_1q: float
    fit: FitResult | None

    @property
    def sigmas(self) -> np.ndarray:
        return np.array(self.config.sigmas)

    @property
    def ratio(self) -> np.ndarray:
        return self.tau / self.tau_1q


# -- sampling ------------------------------------------------------------------


def sample_rng(seed: int, sigma_index: int, t_index: int, sample: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sigma_index, t_index, sample)))


def draw_block(config: SweepConfig, sigma_index: int, t_index: int, start: int, stop: int):
    """Target states ``(n, 2)`` and pulse factors ``(n, applications, 5)`` for a block."""
    sigma = config.sigmas[sigma_index]
    n_apps = len(config.code.applications)
    psis = np.empty((stop - start, 2), dtype=complex)
    eps = np.empty((stop - start, n_apps, 5))
    for k, si in enumerate(range(start, stop)):
        rng = sample_rng(config.seed, sigma_index, t_index, si)
        psis[k] = engine.random_pure_target(rng, 1)[0]
        eps[k] = 1.0 + sigma * rng.standard_normal((n_apps, 5))
    return psis, eps


def _blocks(samples: int) -> list[tuple[int, int]]:
    return [(i, min(i + BATCH_CHUNK, samples)) for i in range(0, samples, BATCH_CHUNK)]


def _mean_and_error(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def cell_fidelities(config: SweepConfig, sigma_index: int, t_index: int,
                    pool: ThreadPoolExecutor | None = None, t: float | None = None) -> np.ndarray:
    """Per-sample fidelities of one cell; ``t`` overrides the grid time."""
    t = float(config.time_grid[t_index]) if t is None else float(t)

    def block(bounds):
        psis, eps = draw_block(config, sigma_index, t_index, *bounds)
        return run_batch(psis, config.code, t, eps, config.gate_time)

    blocks = _blocks(config.samples)
    parts = list(pool.map(block, blocks)) if pool is not None else [block(b) for b in blocks]
    return np.clip(np.concatenate(parts), 0.0, 1.0)


def evaluate_cell(config, sigma_index, t_index, pool=None, t=None) -> tuple[float, float]:
    return _mean_and_error(cell_fidelities(config, sigma_index, t_index, pool, t))


def _pool(config: SweepConfig):
    return ThreadPoolExecutor(config.threads) if config.threads > 1 else None


def fidelity_curve(config: SweepConfig, sigma: float | None = None, *,
                   sigma_index: int | None = None) -> Curve:
    """Mean fidelity and its standard error at every grid time."""
    if sigma_index is None:
        sigma_index = config.sigmas.index(float(sigma)) if sigma is not None else 0
    pool = _pool(config)
    try:
        stats = [evaluate_cell(config, sigma_index, ti, pool) for ti in range(len(config.time_grid))]
    finally:
        if pool is not None:
            pool.shutdown()
    mean, err = (np.array(x) for x in zip(*stats))
    return Curve(config.time_grid.copy(), mean, err, config.sigmas[sigma_index], config.code)


def simulate_point(code: CodeKind, t: float, sigma: float, samples: int, seed: int = 0,
                   gate_time: float = DEFAULT_GATE_TIME, threads: int = 1) -> tuple[float, float]:
    """Mean fidelity and standard error at a single storage time ``t >= 0``.

    Uses the substreams of cell ``(0, 0)``, so it reproduces the first grid
    cell of a one-sigma sweep whose grid starts at ``t``.
    """
    if t < 0:
        raise ConfigError("storage time must be non-negative")
    config = SweepConfig(code, (sigma,), samples, np.array([max(t, 1.0)]), seed, gate_time, threads)
    pool = _pool(config)
    try:
        return evaluate_cell(config, 0, 0, pool, t)
    finally:
        if pool is not None:
            pool.shutdown()


# -- high-fidelity time ----------------------------------------------------------


def _interpolate(t0, f0, t1, f1, threshold) -> float:
    if f0 == f1:
        return float(t0)
    return float(t0 + (f0 - threshold) * (t1 - t0) / (f0 - f1))


def high_fidelity_time(curve: Curve | tuple, threshold: float = THRESHOLD) -> Tau:
    """First crossing of the mean fidelity below ``threshold``.

    Accepts a :class:`Curve` or a ``(t, mean)`` pair.
    """
    t, mean = (curve.t, curve.mean) if isinstance(curve, Curve) else curve
    t, mean = np.asarray(t, dtype=float), np.asarray(mean, dtype=float)
    below = np.flatnonzero(mean < threshold)
    if len(below) == 0:
        return Tau(float(t[-1]), censored=True)
    i = int(below[0])
    if i == 0:
        return Tau(0.0)
    return Tau(_interpolate(t[i - 1], mean[i - 1], t[i], mean[i], threshold))


def bisect_tau(evaluate: Callable[[int], float], grid: np.ndarray,
               threshold: float = THRESHOLD) -> tuple[Tau, dict[int, float]]:
    """High-fidelity time of a monotone curve from O(log n) grid evaluations.

    Agrees with :func:`high_fidelity_time` on the full curve whenever the
    curve crosses the threshold only once.  Returns the evaluated points too.
    """
    seen: dict[int, float] = {}

    def f(i):
        if i not in seen:
            seen[i] = evaluate(i)
        return seen[i]

    last = len(grid) - 1
    if f(0) < threshold:
        return Tau(0.0), seen
    if f(last) >= threshold:
        return Tau(float(grid[last]), censored=True), seen
    lo, hi = 0, last
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) < threshold:
            hi = mid
        else:
            lo = mid
    return Tau(_interpolate(grid[lo], f(lo), grid[hi], f(hi), threshold)), seen


# -- single-qubit baseline ------------------------------------------------------


def single_qubit_fidelity(psi: np.ndarray, kind: CodeKind, t) -> np.ndarray:
    """Fidelity of a pure qubit after the code's paired channel for time ``t``."""
    kind = CodeKind(kind)
    psi = np.asarray(psi, dtype=complex)
    rho = psi[..., :, None] * psi[..., None, :].conj()
    out = 0
    for k in engine.kraus_operators(engine.NoiseChannelSpec(kind.channel, float(t))):
        out = out + k @ rho @ k.conj().T
    return np.einsum("...i,...ij,...j->...", psi.conj(), out, psi).real


def baseline_tau(kind: CodeKind, samples: int = 100_000, seed: int = 0,
                 threshold: float = THRESHOLD) -> tuple[float, float]:
    """Monte-Carlo high-fidelity time of an unprotected qubit, and its standard error.

    Under either channel a state's fidelity is ``a + (1 - a) exp(-t)`` with
    ``a`` fixed by the state, so the averaged curve has the same form and its
    crossing is found in closed form from the sampled mean of ``a``.
    """
    kind = CodeKind(kind)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**31 - 1,)))
    psis = engine.random_pure_target(rng, samples)
    # the fidelity at t -> infinity gives a directly
    a = single_qubit_fidelity(psis, kind, 50.0)
    a_mean, a_err = _mean_and_error(a)
    tau = -math.log((threshold - a_mean) / (1 - a_mean))
    # d tau / d a = 1/(1-a) - 1/(threshold-a)
    grad = 1 / (1 - a_mean) - 1 / (threshold - a_mean)
    return tau, abs(grad) * a_err


def analytic_baseline_tau(kind: CodeKind, threshold: float = THRESHOLD) -> float:
    a = 2 / 3 if CodeKind(kind) is CodeKind.FIVE_RC else 0.5
    return -math.log((threshold - a) / (1 - a))


# -- scaling law ------------------------------------------------------------------


def scaling_law(sigma, tau0: float, alpha: float):
    return tau0 * (2 - np.exp(np.square(sigma) / alpha))


def threshold_sigma(tau0: float, alpha: float) -> float:
    """Pulse noise at which the fitted ratio falls to 1."""
    if tau0 <= 1:
        return 0.0
    return math.sqrt(alpha * math.log(2 - 1 / tau0))


def raw_crossing(sigmas, ratios) -> float | None:
    """Linear interpolation of the first point where the ratio drops below 1."""
    s, r = np.asarray(sigmas, dtype=float), np.asarray(ratios, dtype=float)
    for i in range(1, len(s)):
        if r[i - 1] >= 1 > r[i]:
            return _interpolate(s[i - 1], r[i - 1], s[i], r[i], 1.0)
    return None


def fit_scaling(sigmas, ratios) -> FitResult:
    """Least-squares fit of ``ratio = tau0 (2 - exp(sigma^2 / alpha))``."""
    s, r = np.asarray(sigmas, dtype=float), np.asarray(ratios, dtype=float)
    if len(s) < 3:
        raise ConfigError("the scaling fit needs at least three sigma values")
    tau0 = float(r[np.argmin(s)])
    alpha = float(np.max(s) ** 2 / math.log(2)) or 1e-4

    def sse(x):
        with np.errstate(over="ignore"):
            pred = scaling_law(s, x[0], math.exp(x[1]))
        return float(np.sum((pred - r) ** 2)) if np.all(np.isfinite(pred)) else 1e300

    try:
        res = nelder_mead(sse, [tau0, math.log(alpha)], step=[0.1 * max(abs(tau0), 1.0), 0.5],
                          ftol=1e-14, max_evals=20_000)
        t0, al = float(res.x[0]), math.exp(float(res.x[1]))
        rms = math.sqrt(res.fun / len(s))
        ok = res.converged and math.isfinite(rms)
    except NumericError:
        t0, al, rms, ok = math.nan, math.nan, math.nan, False
    sig_th = threshold_sigma(t0, al) if ok else math.nan
    return FitResult(t0, al, sig_th, rms, ok, raw_crossing(s, r))


def sweep_and_fit(config: SweepConfig, *, full_curves: bool = False,
                  tau_1q: float | None = None, baseline_samples: int = 100_000) -> SweepRecord:
    """High-fidelity time at each sigma, its ratio to the baseline, and the fit.

    By default the crossing is located by bisection over the grid, which
    evaluates only the cells needed; ``full_curves`` evaluates every cell.
    """
    if len(config.sigmas) < 3:
        raise ConfigError("a sweep needs at least three sigma values")
    pool = _pool(config)
    curves, taus = [], []
    try:
        for si in range(len(config.sigmas)):
            if full_curves:
                stats = {ti: evaluate_cell(config, si, ti, pool) for ti in range(len(config.time_grid))}
            else:
                stats = {}

                def mean_at(ti, si=si):
                    stats[ti] = evaluate_cell(config, si, ti, pool)
                    return stats[ti][0]

                bisect_tau(mean_at, config.time_grid)
            idx = sorted(stats)
            curve = Curve(config.time_grid[idx], np.array([stats[i][0] for i in idx]),
                          np.array([stats[i][1] for i in idx]), config.sigmas[si], config.code)
            curves.append(curve)
            taus.append(high_fidelity_time(curve))
    finally:
        if pool is not None:
            pool.shutdown()
    if tau_1q is None:
        tau_1q, _ = baseline_tau(config.code, baseline_samples, config.seed)
    tau = np.array([x.value for x in taus])
    censored = np.array([x.censored for x in taus])
    fit = fit_scaling(config.sigmas, tau / tau_1q)
    return SweepRecord(config, curves, tau, censored, tau_1q, fit)


# -- output ------------------------------------------------------------------------


def _fmt(x) -> str:
    return CSV_FLOAT % x


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def curves_csv(curves: list[Curve]) -> str:
    rows = [[_fmt(t), _fmt(m), _fmt(e), _fmt(c.sigma), c.code.value]
            for c in curves for t, m, e in zip(c.t, c.mean, c.std_err)]
    return _csv(["t", "mean_fidelity", "std_err", "sigma", "code"], rows)


def sweep_csv(record: SweepRecord) -> str:
    rows = [[_fmt(s), _fmt(t), _fmt(record.tau_1q), _fmt(r)]
            for s, t, r in zip(record.sigmas, record.tau, record.ratio)]
    return _csv(["sigma", "tau", "tau_1q", "ratio"], rows)


def fit_json(fit: FitResult) -> str:
    return json.dumps(fit.to_json(), indent=2) + "\n"


def default_threads() -> int:
    env = os.environ.get("IONQEC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1

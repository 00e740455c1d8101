"""Bounded Nelder-Mead simplex minimiser with jittered restarts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NumericError(ArithmeticError):
    """The objective returned a non-finite value."""


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    nfev: int
    converged: bool
    restarts: int


def _project(x, lower, upper):
    if lower is None:
        return x
    return np.clip(x, lower, upper)


def _run(fun, simplex, lower, upper, ftol, xtol, max_evals, coeffs):
    alpha, gamma, rho, sigma = coeffs
    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        v = fun(x)
        if not np.isfinite(v):
            raise NumericError(f"objective returned {v!r} at {x!r}")
        return float(v)

    simplex = np.array([_project(v, lower, upper) for v in simplex], dtype=float)
    values = np.array([f(v) for v in simplex])
    converged = False
    while nfev < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if values[-1] - values[0] < ftol or (
            xtol > 0 and np.max(np.abs(simplex[1:] - simplex[0])) < xtol
        ):
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = _project(centroid + alpha * (centroid - worst), lower, upper)
        fr = f(xr)
        if fr < values[0]:
            xe = _project(centroid + gamma * (xr - centroid), lower, upper)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = _project(centroid + rho * (xr - centroid), lower, upper)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = _project(centroid + rho * (worst - centroid), lower, upper)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        # shrink toward the best vertex
        for i in range(1, len(simplex)):
            simplex[i] = _project(simplex[0] + sigma * (simplex[i] - simplex[0]), lower, upper)
            values[i] = f(simplex[i])
    best = int(np.argmin(values))
    return simplex[best].copy(), float(values[best]), nfev, converged


def initial_simplex(x0, step, lower=None, upper=None) -> np.ndarray:
    """Axis-aligned simplex at ``x0``; steps that would leave the box are reversed."""
    x0 = _project(np.asarray(x0, dtype=float), lower, upper)
    step = np.broadcast_to(np.asarray(step, dtype=float), x0.shape)
    simplex = [x0.copy()]
    for i in range(len(x0)):
        v = x0.copy()
        h = step[i] if step[i] != 0 else 0.05
        if upper is not None and (v[i] + h > upper[i] or v[i] + h < lower[i]):
            h = -h
        v[i] += h
        simplex.append(v)
    return np.array(simplex)


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0,
    *,
    simplex=None,
    step=0.1,
    bounds=None,
    ftol: float = 1e-12,
    xtol: float = 0.0,
    max_evals: int = 20_000,
    restarts: int = 8,
    target: float | None = None,
    rng: np.random.Generator | None = None,
    coeffs=(1.0, 2.0, 0.5, 0.5),
) -> NelderMeadResult:
    """Minimise ``fun`` starting from ``x0`` (or an explicit ``simplex``).

    ``bounds`` is a sequence of ``(low, high)`` pairs; points are projected
    onto the box.  After convergence the search restarts from the best point
    with a jittered simplex, up to ``restarts`` times, stopping early once no
    restart improves the value or ``fun`` drops below ``target``.  The
    evaluation budget ``max_evals`` is shared across restarts.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = upper = None
    if bounds is not None:
        b = np.asarray(bounds, dtype=float)
        lower, upper = b[:, 0], b[:, 1]
    rng = rng if rng is not None else np.random.default_rng(0)
    if simplex is None:
        simplex = initial_simplex(x0, step, lower, upper)
    x, fx, nfev, converged = _run(fun, simplex, lower, upper, ftol, xtol, max_evals, coeffs)
    done = 0
    scale = np.broadcast_to(np.abs(np.asarray(step, dtype=float)), x0.shape)
    while done < restarts and nfev < max_evals:
        if target is not None and fx <= target:
            break
        done += 1
        jitter = scale * (0.5 ** done) * (1 + rng.standard_normal(x0.shape) * 0.5)
        xs, fs, n2, conv2 = _run(fun, initial_simplex(x, jitter, lower, upper), lower, upper, ftol, xtol,
                                 max_evals - nfev, coeffs)
        nfev += n2
        if fs < fx - max(ftol, 1e-15 * abs(fx)):
            x, fx, converged = xs, fs, conv2
        else:
            converged = converged or conv2
            break
    return NelderMeadResult(x, fx, nfev, converged, done)

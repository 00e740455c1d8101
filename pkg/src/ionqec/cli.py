"""Command-line entry point: ``ionqec <subcommand> [flags]``.

Exit codes: 0 success, 1 validation failure, 2 usage error.  Every output
file gets a ``<name>.manifest.json`` recording the parameters, seed, tool
version and wall time; passing a manifest back through ``--config`` reruns
the command with the same parameters.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import bench, engine
from .coupling import (RING_SOLUTION, SPOKES_SOLUTION, PulseSolution, default_phase_model,
                       phase_class_table)
from .crystal import CrystalConfig, CrystalError, crystal_modes
from .protocol import CodeKind, ProtocolError, run_protocol
from .synth import (ACCEPT_TOLERANCE, NAMED_TARGETS, TargetUnitary, evolutionary_search,
                    integer_search, verify_solution)

# defaults used when neither a flag nor the config file sets a value
DEFAULTS = {
    "seed": 0, "tol": None, "bound": 3, "budget_secs": 600.0, "sigma": 0.0,
    "sigmas": list(bench.DEFAULT_SIGMAS), "samples": bench.DEFAULT_SAMPLES, "code": "5rc",
    "t": None, "tmax": 1.0, "error": [], "target": None, "target_file": None,
    "solution": "spokes", "method": "tree", "max_solutions": None, "full_curves": False,
    "n_ions": 6, "beta": 0.1,
}
PUBLISHED = {"spokes": SPOKES_SOLUTION, "ring": RING_SOLUTION}
VERIFY_TOL = {"spokes": 1e-2 * np.pi, "ring": 2e-2 * np.pi}


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("ionqec")
    except metadata.PackageNotFoundError:
        return "unknown"


# -- argument handling ---------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _error(text: str) -> tuple[str, int]:
    try:
        pauli, qubit = text.split("@")
        pauli, qubit = pauli.upper(), int(qubit)
    except ValueError:
        raise argparse.ArgumentTypeError(f"errors look like Z@3, got {text!r}") from None
    if pauli not in "IXYZ" or len(pauli) != 1 or not 0 <= qubit < engine.N_QUBITS:
        raise argparse.ArgumentTypeError(f"bad error {text!r}")
    return pauli, qubit


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of parameters (or a run manifest)")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)

    p = argparse.ArgumentParser(prog="ionqec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("modes", parents=[common], help="transverse modes of the crystal")
    s.add_argument("--n-ions", type=int, dest="n_ions")
    s.add_argument("--beta", type=float)

    s = sub.add_parser("phases", parents=[common], help="class phase table of a solution")
    s.add_argument("--solution", help="solution JSON, or 'spokes' / 'ring'")

    s = sub.add_parser("search", parents=[common], help="search for a pulse sequence")
    s.add_argument("--target", choices=sorted(NAMED_TARGETS))
    s.add_argument("--target-file", dest="target_file", help="JSON with 64 target phases")
    s.add_argument("--bound", type=int)
    s.add_argument("--tol", type=float, help="acceptance tolerance on the cost")
    s.add_argument("--budget-secs", type=float, dest="budget_secs")
    s.add_argument("--max-solutions", type=int, dest="max_solutions")
    s.add_argument("--method", choices=("tree", "evolve"))

    s = sub.add_parser("verify", parents=[common], help="check a solution against its target")
    s.add_argument("--solution", help="solution JSON, or 'spokes' / 'ring'")
    s.add_argument("--target", choices=sorted(NAMED_TARGETS))
    s.add_argument("--target-file", dest="target_file")
    s.add_argument("--tol", type=float, help="largest allowed phase deviation in radians")

    s = sub.add_parser("inject", parents=[common], help="noiseless error-correction demo")
    s.add_argument("--code", choices=[c.value for c in CodeKind])
    s.add_argument("--error", type=_error, action="append", help="Pauli@qubit, repeatable")

    s = sub.add_parser("simulate", parents=[common], help="mean fidelity at one time or a curve")
    s.add_argument("--code", choices=[c.value for c in CodeKind])
    s.add_argument("--sigma", type=float)
    s.add_argument("--samples", type=int)
    s.add_argument("--t", type=float, help="single storage time")
    s.add_argument("--tmax", type=float, help="curve up to this time on the default grid")

    s = sub.add_parser("sweep", parents=[common], help="tau over sigma and the scaling fit")
    s.add_argument("--code", choices=[c.value for c in CodeKind])
    s.add_argument("--sigmas", type=_floats)
    s.add_argument("--samples", type=int)
    s.add_argument("--tmax", type=float)
    s.add_argument("--full-curves", action="store_true", default=None, dest="full_curves")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over the defaults."""
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if "parameters" in config:  # a manifest
            config = config["parameters"]
    params = dict(DEFAULTS)
    params.update({k: v for k, v in config.items() if k not in ("command", "out", "config")})
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        params[key] = value
    if params.get("threads") is None:
        params["threads"] = bench.default_threads()
    params["error"] = [tuple(e) for e in params.get("error") or []]
    return params


# -- output helpers ----------------------------------------------------------------


def _emit(text: str, out: str | None, outputs: list[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
    outputs.append(out)


def _json_text(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def _csv_text(header, rows) -> str:
    return bench._csv(header, rows)


def _sibling(out: str, suffix: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


def write_manifest(command: str, params: dict, outputs: list[str], wall: float) -> None:
    manifest = {
        "subcommand": command,
        "parameters": {k: v for k, v in params.items() if k not in ("threads", "out")},
        "seed": params.get("seed"),
        "version": tool_version(),
        "wall_time": wall,
        "outputs": outputs,
    }
    for path in outputs:
        Path(path + ".manifest.json").write_text(_json_text(manifest))


def _load_solution(spec: str) -> PulseSolution:
    if spec in PUBLISHED:
        return PUBLISHED[spec]
    try:
        return PulseSolution.from_json(json.loads(Path(spec).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read solution {spec}: {exc}") from None


def _load_target(params: dict, fallback: str | None = None) -> TargetUnitary:
    if params.get("target_file"):
        try:
            return TargetUnitary.from_json(json.loads(Path(params["target_file"]).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"cannot read target {params['target_file']}: {exc}") from None
    name = params.get("target") or fallback
    if name not in NAMED_TARGETS:
        raise UsageError(f"unknown target {name!r}; use --target or --target-file")
    return NAMED_TARGETS[name]()


# -- subcommands -----------------------------------------------------------------------


def cmd_modes(params, outputs) -> int:
    config = CrystalConfig(n_ions=params["n_ions"], beta=params["beta"], seed=params.get("seed"))
    _, modes = crystal_modes(config)
    _emit(_json_text(modes.to_json()), params.get("out"), outputs)
    return 0


def cmd_phases(params, outputs) -> int:
    sol = _load_solution(params["solution"])
    phi = default_phase_model().solution_phases(sol)
    rows = [(label, mult, bench._fmt(x), bench._fmt(xm)) for label, mult, x, xm in phase_class_table(phi)]
    header = ["representative", "multiplicity", "phase_over_pi", "phase_over_pi_mod_2"]
    _emit(_csv_text(header, rows), params.get("out"), outputs)
    return 0


def cmd_search(params, outputs) -> int:
    target = _load_target(params, fallback="spokes")
    model = default_phase_model()
    tol = params["tol"] if params["tol"] is not None else ACCEPT_TOLERANCE
    if params["method"] == "evolve":
        report = evolutionary_search(target, model, seed=params["seed"], bound=params["bound"],
                                     tolerance=tol)
    else:
        report = integer_search(target, model, bound=params["bound"], tolerance=tol,
                                budget_secs=params["budget_secs"],
                                max_solutions=params["max_solutions"], workers=params["threads"])
    print(f"{len(report.solutions)} solution(s); {report.nodes_explored} nodes explored, "
          f"{report.nodes_pruned} pruned, {report.wall_time:.1f} s"
          + (" (budget exhausted)" if report.exhausted else ""), file=sys.stderr)
    if not report.solutions:
        return 1
    best = report.solutions[0].to_json()
    _emit(_json_text(best), params.get("out"), outputs)
    if params.get("out") and len(report.solutions) > 1:
        extra = _sibling(params["out"], "_all.json")
        Path(extra).write_text(_json_text([s.to_json() for s in report.solutions]))
        outputs.append(extra)
    return 0


def cmd_verify(params, outputs) -> int:
    sol = _load_solution(params["solution"])
    name = params.get("target") or sol.label or params["solution"]
    target = _load_target({**params, "target": name})
    tol = params["tol"] if params["tol"] is not None else VERIFY_TOL.get(target.name, 1e-2 * np.pi)
    dev = verify_solution(sol, target, default_phase_model())
    ok = dev <= tol
    result = {"target": target.name, "deviation": dev, "deviation_over_pi": dev / np.pi,
              "tolerance": tol, "pass": ok}
    _emit(_json_text(result), params.get("out"), outputs)
    return 0 if ok else 1


def cmd_inject(params, outputs) -> int:
    kind = CodeKind(params["code"])
    errors = params["error"]
    rows = []
    states = [engine.PureTarget.from_vector(v) for v in
              ([1, 0], [0, 1], engine.PLUS, [1, 1j], [0.6, 0.8j])]
    for err in errors or [("I", 0)]:
        f = min(run_protocol(psi, kind, 0.0, 0.0, gate_time=0.0, errors=[err]) for psi in states)
        rows.append((f"{err[0]}@{err[1]}", bench._fmt(f)))
    if len(errors) > 1:
        f = min(run_protocol(psi, kind, 0.0, 0.0, gate_time=0.0, errors=errors) for psi in states)
        rows.append(("+".join(f"{p}@{q}" for p, q in errors), bench._fmt(f)))
    _emit(_csv_text(["error", "min_fidelity"], rows), params.get("out"), outputs)
    return 0


def cmd_simulate(params, outputs) -> int:
    code = CodeKind(params["code"])
    if params["t"] is not None:
        mean, err = bench.simulate_point(code, params["t"], params["sigma"], params["samples"],
                                         params["seed"], threads=params["threads"])
        curve = bench.Curve(np.array([params["t"]]), np.array([mean]), np.array([err]),
                            params["sigma"], code)
    else:
        config = bench.SweepConfig(code, (params["sigma"],), params["samples"],
                                   bench.default_time_grid(t_max=params["tmax"]), params["seed"],
                                   threads=params["threads"])
        curve = bench.fidelity_curve(config, sigma_index=0)
    _emit(bench.curves_csv([curve]), params.get("out"), outputs)
    return 0


def cmd_sweep(params, outputs) -> int:
    config = bench.SweepConfig(CodeKind(params["code"]), tuple(params["sigmas"]), params["samples"],
                               bench.default_time_grid(t_max=params["tmax"]), params["seed"],
                               threads=params["threads"])
    record = bench.sweep_and_fit(config, full_curves=bool(params["full_curves"]))
    out = params.get("out")
    _emit(bench.sweep_csv(record), out, outputs)
    if out is None:
        print(json.dumps(record.fit.to_json()), file=sys.stderr)
        return 0
    curves_path, fit_path = _sibling(out, "_curves.csv"), _sibling(out, "_fit.json")
    Path(curves_path).write_text(bench.curves_csv(record.curves))
    Path(fit_path).write_text(bench.fit_json(record.fit))
    outputs.extend([curves_path, fit_path])
    return 0


COMMANDS = {"modes": cmd_modes, "phases": cmd_phases, "search": cmd_search, "verify": cmd_verify,
            "inject": cmd_inject, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.perf_counter()
    outputs: list[str] = []
    try:
        params = resolve(args)
        code = COMMANDS[args.command](params, outputs)
    except (UsageError, bench.ConfigError, CrystalError, ValueError) as exc:
        print(f"ionqec {args.command}: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"ionqec {args.command}: {exc}", file=sys.stderr)
        return 1
    if outputs:
        write_manifest(args.command, params, outputs, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())

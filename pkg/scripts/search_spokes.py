"""Branch-and-bound search for spokes (or ring) pulse sequences.

    python3 scripts/search_spokes.py [--target spokes] [--bound 3] [--out solutions.json]
"""

import argparse
import json

import numpy as np

from ionqec import bench
from ionqec.coupling import default_phase_model
from ionqec.synth import NAMED_TARGETS, integer_search, verify_solution


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--target", choices=sorted(NAMED_TARGETS), default="spokes")
    p.add_argument("--bound", type=int, default=3)
    p.add_argument("--budget-secs", type=float, default=600)
    p.add_argument("--workers", type=int, default=bench.default_threads())
    p.add_argument("--out", default=None)
    args = p.parse_args()
    target = NAMED_TARGETS[args.target]()
    model = default_phase_model()
    rep = integer_search(target, model, bound=args.bound, budget_secs=args.budget_secs,
                         workers=args.workers)
    print(f"{len(rep.solutions)} solutions, {rep.nodes_explored} explored, {rep.nodes_pruned} "
          f"pruned, {rep.wall_time:.0f} s{' (budget hit)' if rep.exhausted else ''}")
    for s in rep.solutions:
        dev = verify_solution(s.solution, target, model)
        print(f"  P={np.round(s.solution.areas, 4).tolist()} R={s.solution.ratio:.4f} "
              f"residual={s.residual:.1e} deviation={dev / np.pi:.1e} pi")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([s.to_json() for s in rep.solutions], fh, indent=2)


if __name__ == "__main__":
    main()

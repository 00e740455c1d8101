"""Print the staged class phases of the published spokes sequence.

    python3 scripts/phase_table.py
"""

import numpy as np

from ionqec.coupling import SPOKES_SOLUTION, default_phase_model, intermediate_fidelity, phase_class_table
from ionqec.synth import target_spokes


def main() -> None:
    model = default_phase_model()
    target = target_spokes().phases
    stages = []
    for k in (1, 2, 3):
        p = SPOKES_SOLUTION.areas.copy()
        p[k:] = 0
        stages.append(model.phases(p, SPOKES_SOLUTION.ratio))
    tables = [phase_class_table(phi) for phi in stages]
    print("class   mult  after P1  after P2  after P3   (phase / pi)")
    for rows in zip(*tables):
        label, mult = rows[0][0], rows[0][1]
        print(f"{label}  {mult:>4}  " + "  ".join(f"{r[2]:8.3f}" for r in rows))
    fids = [intermediate_fidelity(np.zeros(64), target)] + [intermediate_fidelity(phi, target) for phi in stages]
    print("fidelity with target:", " ".join(f"{f:.3f}" for f in fids))


if __name__ == "__main__":
    main()

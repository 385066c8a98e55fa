"""Show that coexisting branches cannot influence one another.

Two probes: (1) delete every other branch before evolving one of them and
compare against its share of the full run -- identical, so each branch
evolves as if alone; (2) hit the second branch with a phase flip or a
record scramble mid-run -- the first branch's final component does not
move by even one ulp.  Branches behave as separate non-communicating
universes.
"""

import numpy as np

from branchsim import (
    ExperimentSpec,
    InvalidPerturbationError,
    chain_layout,
    coefficient_independence_check,
    no_signaling_check,
    phase_flip_perturbation,
    record_cycle_perturbation,
)

rng = np.random.default_rng(42)
v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
spec = ExperimentSpec(3, tuple(v / np.linalg.norm(v)))

print("probe 1: run each version alone vs its slice of the full run")
result = coefficient_independence_check(spec)
print(f"  worst residual over all branches: {result.residual:.2e}  "
      f"({'pass' if result.passed else 'FAIL'})")

print("\nprobe 2: perturb version 2 between detection and perception")
layout = chain_layout(3, 1)
for probe in (
    phase_flip_perturbation(layout, 1),
    record_cycle_perturbation(layout, 1),
):
    result = no_signaling_check(spec, probe)
    print(f"  {probe.provenance:<26} branch-1 drift {result.residual:.2e}  "
          f"({'pass' if result.passed else 'FAIL'})")

print("\nand the guard rail: a probe that touches branch 1 is rejected")
try:
    no_signaling_check(spec, phase_flip_perturbation(layout, 0))
except InvalidPerturbationError as exc:
    print(f"  InvalidPerturbationError: {exc}")

"""Step-halving study on the golden instance.

Tabulates, per resolution: the backward-ODE and semigroup residuals of
the extracted fields, the state-coefficient refinement gap, the
cross-representation path gap, and the level-coupling factor distance for
a lag-gap-three variant.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from dataclasses import replace

from delaygame import (assemble_gains, build_grid, continuous_residuals,
                       extract_fields, load_problem, simulate_path_gains,
                       simulate_path_ladder, solve_ladder)
from delaygame.discrete_engine import SweepCoefficients
from delaygame.verify import z_factor_distances


def main():
    root = pathlib.Path(__file__).resolve().parents[1]
    spec = load_problem(root / "problems" / "golden_scalar.json")
    coeffs = SweepCoefficients.from_spec(spec)
    print(f"{'delta':>9} {'ode_res':>10} {'semigroup':>10} {'refine':>10} "
          f"{'cross_rep':>10} {'z_dist(gap3)':>12}")
    prev_P = None
    for m in range(4):
        grid = build_grid(spec, 0.005 / 2 ** m)
        ladder = solve_ladder(spec, grid)
        fields = extract_fields(ladder)
        law = assemble_gains(fields, spec)
        rep = continuous_residuals(fields, coeffs, spec.Q1, spec.Q2)
        tl = simulate_path_ladder(ladder, grid, spec.x0, seed=3, n_paths=64)
        tg = simulate_path_gains(law, spec, grid, seed=3, n_paths=64)
        cross = float(np.max(np.abs(tl.x - tg.x)))
        sampled = fields.P[:, ::2 ** m]
        refine = (float(np.max(np.abs(sampled - prev_P)))
                  if prev_P is not None else np.nan)
        prev_P = sampled

        tiny = replace(spec, h1=4 * grid.delta, h2=grid.delta)
        tgrid = build_grid(tiny, grid.delta)
        zdist = z_factor_distances(solve_ladder(tiny, tgrid))
        print(f"{grid.delta:9.5f} {rep.component('riccati_ode').max:10.3e} "
              f"{rep.component('semigroup_check').max:10.3e} "
              f"{refine:10.3e} {cross:10.3e} {zdist:12.3e}")


if __name__ == "__main__":
    main()

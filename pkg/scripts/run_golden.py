"""End-to-end run on the golden scalar instance.

Solves the backward recursion, extracts the continuous fields, assembles
the equilibrium gains, simulates the closed loop, and prints equilibrium
costs plus a handful of health indicators.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from delaygame import (assemble_gains, build_grid, continuous_residuals,
                       estimate_costs, extract_fields, load_problem,
                       solve_ladder, stationarity_identity_check)
from delaygame.discrete_engine import SweepCoefficients
from delaygame.verify import nash_deviation_test


def main():
    root = pathlib.Path(__file__).resolve().parents[1]
    spec = load_problem(root / "problems" / "golden_scalar.json")
    grid = build_grid(spec, 0.005)
    print(f"grid: N={grid.N} delta={grid.delta} d1={grid.d1} d2={grid.d2}")

    ladder = solve_ladder(spec, grid)
    fields = extract_fields(ladder)
    law = assemble_gains(fields, spec)
    print(f"state coefficients at t=0: P1={fields.P[0, 0, 0, 0]:.6f} "
          f"P2={fields.P[1, 0, 0, 0]:.6f}")
    print(f"gains at t=0: K1={law.k1[0, 0, 0]:+.6f} "
          f"K2(own lag)={law.k2_h2[0, 0, 0]:+.6f} "
          f"K2(coarse lag)={law.k2_h1[0, 0, 0]:+.6f}")

    ident = stationarity_identity_check(law, fields, spec)
    print(f"gain stationarity identity residual: {ident.max:.2e}")

    coeffs = SweepCoefficients.from_spec(spec)
    rep = continuous_residuals(fields, coeffs, spec.Q1, spec.Q2)
    for name in ("riccati_ode", "semigroup_check"):
        print(f"{name} residual max: {rep.component(name).max:.3e}")

    est = estimate_costs(law, spec, grid, n_paths=10_000, seed=0)
    print(f"equilibrium costs: J1={est.j1:.5f} (se {est.j1_se:.5f}), "
          f"J2={est.j2:.5f} (se {est.j2_se:.5f})")

    verdicts = nash_deviation_test(law, spec, grid, n_paths=5000, seed=0)
    worst = min(v.margin + 3 * v.combined_se for v in verdicts)
    print(f"deviation margins: all pass={all(v.passed for v in verdicts)}, "
          f"worst slack {worst:+.2e}")


if __name__ == "__main__":
    main()

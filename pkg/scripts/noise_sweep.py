#!/usr/bin/env python3
"""Sweep the sensor-noise level and report identification quality per soil.

For each multiplier of the nominal noise, runs the default three-soil
scenario and prints per-soil mu error, curve R^2 and the rho_s error.
Useful for judging how much sensor quality the identification needs.

Usage: python scripts/noise_sweep.py [multiplier ...]
"""

import sys

from tractionmap import cli, mapping, sim


def run_once(mult: float):
    noise = sim.SensorNoise(sigma_omega=0.01 * mult, sigma_v=0.02 * mult,
                            sigma_pos=0.3)
    scenario = sim.default_scenario(noise=noise)
    samples, truth = sim.simulate(scenario)
    records, est = cli.run_estimation(samples, scenario.vehicle)
    raw = cli.build_map(records)
    interp = mapping.interpolate(raw) if raw is not None else None
    return cli.compute_metrics(records, truth, raw, interp,
                               clamp_violations=est.clamp_violations)


def main() -> int:
    mults = [float(x) for x in sys.argv[1:]] or [0.0, 0.5, 1.0, 2.0, 5.0]
    print(f"{'noise x':>8} | " + " | ".join(
        f"{label:>26}" for label in ("soil1 err% / R^2",
                                     "soil2 err% / R^2",
                                     "soil3 err% / R^2")) + " | rho_s err%")
    for mult in mults:
        report = run_once(mult)
        cells = []
        for s in report.per_soil:
            r2 = "  n/a " if s.r_squared is None else f"{s.r_squared:.4f}"
            cells.append(f"{s.mu_error_pct:13.2f} / {r2}")
        print(f"{mult:8.2f} | " + " | ".join(f"{c:>26}" for c in cells)
              + f" | {report.rho_s_error_pct:9.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

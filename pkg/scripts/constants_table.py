"""Convergence constants for the benchmark parameters and a small random problem.

Prints one line per dataset; pass --json to dump the full reports.
"""

import argparse
import json

from ipsg import checks, presets, theory


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--datasets", default="cleveland,ash608,abtaha1,mnist,gre_343")
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    reports = {}
    ds = checks.noisy_problem()
    noise = theory.estimate_noise_bounds(ds, ds.x_star, rng=0)
    alpha, delta, T, _ = checks.contraction_params(ds, 5.0, noise)
    reports["random-20x5-s1"] = theory.constants_report(ds.A, alpha, 5.0, delta, noise=noise)
    print(f"random-20x5-s1: contraction from T={T} with alpha={alpha:.4g}, delta={delta:.4g}")

    for name in args.datasets.split(","):
        bench = presets.BENCHMARKS[name]
        real = presets.find_file(bench) is not None
        ds = presets.resolve_dataset(name if real else f"{name}-surrogate")
        p = bench.params["ipsg"]
        reports[ds.name] = theory.constants_report(ds.A, p["alpha"], p["beta"], p["delta"])

    for name, r in reports.items():
        print(f"{name:22s} kappa {r.kappa:10.4g}  rho {r.rho:.4f}  alpha_bar {r.alpha_bar:.4g}"
              f"  alpha {r.alpha:.4g}{'  (alpha >= alpha_bar)' if r.alpha >= r.alpha_bar else ''}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({k: {kk: vv for kk, vv in r.to_dict().items() if kk != "K_beta"}
                       for k, r in reports.items()}, fh, indent=2, default=str)


if __name__ == "__main__":
    main()

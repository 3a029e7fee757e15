"""Median iterations-to-tolerance for every benchmark and method.

Uses the real dataset when it is in the data directory and its
spectrum-matched surrogate otherwise (or always, with --surrogates).
Writes one CSV row per (dataset, method) plus the per-run summaries.

    python scripts/reproduce_iteration_counts.py --datasets ash608,abtaha1 --seeds 0-4 --jobs 4
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from ipsg import cli, presets
from ipsg.errors import InputError


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--datasets", default="cleveland,ash608,abtaha1,mnist")
    ap.add_argument("--methods", default="all")
    ap.add_argument("--seeds", default="0-4")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--surrogates", action="store_true", help="never use the real files")
    ap.add_argument("--t-max-scale", type=float, default=1.0,
                    help="multiply each benchmark's t_max (for quick looks)")
    ap.add_argument("--out", default="results/iteration_counts")
    args = ap.parse_args(argv)

    rows = []
    for name in args.datasets.split(","):
        bench = presets.BENCHMARKS[name]
        real = presets.find_file(bench) is not None and not args.surrogates
        ds_id = name if real else f"{name}-surrogate"
        try:
            ds = presets.resolve_dataset(ds_id)
        except InputError as exc:
            print(f"skip {name}: {exc}", file=sys.stderr)
            continue
        run_args = cli.build_parser().parse_args([
            "compare", "--dataset", ds_id, "--method", args.methods, "--seeds", args.seeds,
            "--jobs", str(args.jobs), "--compute", "consumed",
            "--t-max", str(int(bench.t_max * args.t_max_scale)),
            "--out", str(Path(args.out) / ds_id)])
        spec = cli.build_spec(run_args, ds, "all")
        records, traces, failures, m, kappa = cli.run_experiment(spec, ds)
        cli.write_run_outputs(spec, ds, records, traces, failures, m, kappa)
        for meth in spec.methods:
            med = cli.median_stop(records, meth)
            ref = bench.reported.get(meth)
            rows.append({"dataset": ds_id, "kappa": f"{kappa:.4g}", "eps_tol": spec.eps_tol,
                         "method": meth, "median_stop_iter": "none" if np.isinf(med) else f"{med:g}",
                         "reference": "none" if ref is None else f"{ref:g}"})
            print(f"{ds_id:22s} {meth:8s} median {rows[-1]['median_stop_iter']:>8s}"
                  f"  reference {rows[-1]['reference']:>8s}")
    Path(args.out).mkdir(parents=True, exist_ok=True)
    with open(Path(args.out) / "iteration_counts.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["dataset"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()

"""Desk-scale exploration on the bundled fixture network.

    python scripts/run_desk_search.py --out runs/desk --arch pipelined --tiles 2

Writes a library manifest (exact, two operand truncations, one product
truncation, synthetic energies), runs the search through the CLI and prints
the Pareto archive next to the uniform single-multiplier designs.
"""

import argparse
import csv
import json
from pathlib import Path

from axdse.cli import main as cli_main

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

LIBRARY = [
    {"builtin": "exact", "name": "exact", "energy_pj": 1.0},
    {"builtin": "truncated", "dropped": 3, "name": "trunc_op3", "energy_pj": 0.70},
    {"builtin": "truncated", "dropped": 5, "name": "trunc_op5", "energy_pj": 0.45},
    {"builtin": "product_truncated", "dropped": 8, "name": "trunc_prod8", "energy_pj": 0.80},
]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--arch", default="pipelined", choices=["pipelined", "power-gated"])
    ap.add_argument("--tiles", type=int, default=2)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--subset", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lib = out / "library.json"
    lib.write_text(json.dumps({"multipliers": LIBRARY}, indent=1) + "\n")
    code = cli_main([
        "search", "--net", str(DATA / "fixture_net"), "--data", str(DATA / "synthetic_test.bin"),
        "--lib", str(lib), "--arch", args.arch, "--tiles", str(args.tiles), "--iters", str(args.iters),
        "--subset", str(args.subset), "--seed", str(args.seed), "--jobs", str(args.jobs), "--out", str(out),
    ])
    if code:
        raise SystemExit(code)

    with open(out / "evaluations.csv") as fh:
        seeds = [r for r in csv.DictReader(fh) if r["generation"] == "0"]
    with open(out / "archive.csv") as fh:
        archive = list(csv.DictReader(fh))
    exact_energy = max(float(r["energy_pj"]) for r in seeds)

    print("\nuniform designs (search subset):")
    for entry, r in zip(LIBRARY, seeds):
        print(f"  {entry['name']:<12} acc {float(r['accuracy_subset']):.3f}  "
              f"energy {float(r['energy_pj']) / exact_energy:6.1%}")
    print("\nPareto archive (full dataset):")
    for r in archive:
        print(f"  {r['genome']:<32} acc {float(r['accuracy_full']):.3f}  "
              f"energy {float(r['energy_pj']) / exact_energy:6.1%}")


if __name__ == "__main__":
    main()

"""Command line front end: ``axdse <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import accel, mult
from .accel import AcceleratorSpec, Genome
from .qnet import load_cifar10, load_network, quantize_network, save_network
from .qnet.network import QuantNetwork
from .search import SearchConfig, run_nsga2
from .wtune import compute_weight_map, tuned_med

log = logging.getLogger("axdse")


class CliError(Exception):
    pass


def _load_library(path):
    lib = mult.load_library(path)
    if not lib:
        raise CliError(f"library {path} is empty")
    return lib


def cmd_mult_stats(args):
    lib = _load_library(args.lib)
    header = ["name", "energy_pj", "med", "med_tuned", "err_prob", "mre", "wce"]
    rows = []
    for m in lib:
        em = mult.characterize(m)
        rows.append([m.name, m.energy_pj, em.med, tuned_med(m, compute_weight_map(m)),
                     em.error_probability, em.mean_relative_error, em.worst_case_ed])
    print(f"{'name':<20} {'energy_pj':>10} {'med':>10} {'med_tuned':>10} {'err_prob':>9} {'mre':>9} {'wce':>7}")
    for r in rows:
        print(f"{r[0]:<20} {r[1]:>10.4g} {r[2]:>10.4f} {r[3]:>10.4f} {r[4]:>9.4f} {r[5]:>9.4f} {r[6]:>7d}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows([[r[0]] + [repr(v) if isinstance(v, float) else v for v in r[1:]] for r in rows])


def cmd_build_maps(args):
    lib = _load_library(args.lib)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m in lib:
        wm = compute_weight_map(m)
        wm.save(out / f"{m.name}.map.json")
        print(f"{m.name}: {wm.changed().size} weights remapped")


SEARCH_KEYS = {
    "net": None, "data": None, "lib": None, "arch": "pipelined", "tiles": 2, "pop": 50, "off": 50,
    "pmut": 0.10, "iters": 30, "subset": 1000, "seed": 0, "jobs": None, "out": None,
    "parent_selection": "tournament",
}
_PATH_KEYS = ("net", "data", "lib", "out")


def resolve_run(args) -> dict:
    """Merge the JSON run manifest (if any) with flags; flags win."""
    run = dict(SEARCH_KEYS)
    if args.manifest:
        mpath = Path(args.manifest)
        doc = json.loads(mpath.read_text())
        unknown = set(doc) - set(SEARCH_KEYS)
        if unknown:
            raise CliError(f"unknown manifest keys: {sorted(unknown)}")
        for k in _PATH_KEYS:
            if isinstance(doc.get(k), str):
                doc[k] = str(mpath.parent / doc[k])
            elif isinstance(doc.get(k), list):
                doc[k] = [str(mpath.parent / p) for p in doc[k]]
        run.update(doc)
    for k in SEARCH_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            run[k] = v
    if run["jobs"] is None:
        run["jobs"] = os.cpu_count() or 1
    for k in _PATH_KEYS:
        if not run[k]:
            raise CliError(f"missing required setting --{k}")
    for k in ("net", "lib"):
        if not Path(run[k]).exists():
            raise CliError(f"{k} path {run[k]} does not exist")
    data = run["data"] if isinstance(run["data"], list) else [run["data"]]
    for p in data:
        if not Path(p).exists():
            raise CliError(f"data path {p} does not exist")
    run["arch"] = accel.normalize_arch(run["arch"])
    return run


def cmd_search(args):
    run = resolve_run(args)
    out = Path(run["out"])
    out.mkdir(parents=True, exist_ok=True)
    net = load_network(run["net"])
    if not isinstance(net, QuantNetwork):
        raise CliError(f"{run['net']} holds a float network; quantize it first")
    lib = _load_library(run["lib"])
    data = load_cifar10(run["data"])
    spec = AcceleratorSpec(run["arch"], int(run["tiles"]))
    cfg = SearchConfig(
        population_size=int(run["pop"]), offspring_size=int(run["off"]), p_mut=float(run["pmut"]),
        iterations=int(run["iters"]), eval_subset=int(run["subset"]), rng_seed=int(run["seed"]),
        parent_selection=run["parent_selection"], jobs=int(run["jobs"]),
    )
    echo = {k: v for k, v in run.items() if k != "jobs"}
    (out / "run_manifest.json").write_text(json.dumps(echo, indent=1, sort_keys=True) + "\n")
    archive = run_nsga2(cfg, spec, net, lib, data)
    archive.write_archive_csv(out / "archive.csv")
    archive.write_log_csv(out / "evaluations.csv")
    print(f"{len(archive.log)} evaluations ({archive.unique_evaluations} unique), "
          f"{len(archive.members)} Pareto-optimal designs -> {out}")


def cmd_schedule(args):
    spec = AcceleratorSpec(args.arch, args.tiles)
    genome = Genome.parse(args.genome)
    n_layers = args.layers if args.layers is not None else len(genome.map_lt)
    plan = accel.build_plan(genome, spec, n_layers)
    fh = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"T{t}" for t in range(1, spec.tile_count + 1)])
        w.writerows(plan.rows())
    finally:
        if args.csv:
            fh.close()


def cmd_count_space(args):
    print(accel.count_design_space(args.mults, args.tiles, args.layers, args.arch))


def cmd_lut_from_text(args):
    with open(args.input) as fh:
        m = mult.lut_from_triples(fh, args.bits, args.name or Path(args.input).stem, args.energy)
    mult.store_lut(m, args.output)
    print(f"{m.name}: wrote {args.output}")


def cmd_make_lut(args):
    makers = {
        "exact": lambda: mult.make_exact(args.bits),
        "truncated": lambda: mult.make_truncated(args.bits, args.dropped),
        "product-truncated": lambda: mult.make_product_truncated(args.bits, args.dropped),
    }
    m = makers[args.kind]()
    m = mult.MultiplierModel(args.name or m.name, m.bit_width, m.lut, args.energy)
    mult.store_lut(m, args.output)
    print(f"{m.name}: wrote {args.output}")


def cmd_quantize(args):
    fnet = load_network(args.net)
    if isinstance(fnet, QuantNetwork):
        raise CliError(f"{args.net} is already quantized")
    calib = load_cifar10(args.data).head(args.count)
    save_network(quantize_network(fnet, calib.images), args.out)
    print(f"quantized network written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axdse", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mult-stats", help="error metrics for every library multiplier")
    s.add_argument("--lib", required=True)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_mult_stats)

    s = sub.add_parser("build-maps", help="write a weight-map JSON per multiplier")
    s.add_argument("--lib", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_maps)

    s = sub.add_parser("search", help="NSGA-II design space exploration")
    s.add_argument("--manifest", help="JSON run manifest; flags override its values")
    s.add_argument("--net")
    s.add_argument("--data", nargs="+")
    s.add_argument("--lib")
    s.add_argument("--arch", choices=["pipelined", "power-gated", "power_gated"])
    s.add_argument("--tiles", type=int)
    s.add_argument("--pop", type=int)
    s.add_argument("--off", type=int)
    s.add_argument("--pmut", type=float)
    s.add_argument("--iters", type=int)
    s.add_argument("--subset", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--out")
    s.add_argument("--parent-selection", dest="parent_selection", choices=["tournament", "uniform"])
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("schedule", help="execution plan of a genome as step x tile CSV")
    s.add_argument("--genome", required=True, help='e.g. "TM:[0,1]|LT:[1,2,1]"')
    s.add_argument("--arch", required=True, choices=["pipelined", "power-gated", "power_gated"])
    s.add_argument("--tiles", type=int, required=True)
    s.add_argument("--layers", type=int)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("count-space", help="number of distinct genomes")
    s.add_argument("--mults", type=int, required=True)
    s.add_argument("--tiles", type=int, required=True)
    s.add_argument("--layers", type=int, required=True)
    s.add_argument("--arch", required=True, choices=["pipelined", "power-gated", "power_gated"])
    s.set_defaults(func=cmd_count_space)

    s = sub.add_parser("lut-from-text", help="convert exhaustive 'a b product' lines to a LUT file")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--bits", type=int, default=8)
    s.add_argument("--name")
    s.add_argument("--energy", type=float, required=True, help="pJ per multiplication")
    s.set_defaults(func=cmd_lut_from_text)

    s = sub.add_parser("make-lut", help="write a built-in multiplier as a LUT file")
    s.add_argument("kind", choices=["exact", "truncated", "product-truncated"])
    s.add_argument("output")
    s.add_argument("--bits", type=int, default=8)
    s.add_argument("--dropped", type=int, default=0)
    s.add_argument("--name")
    s.add_argument("--energy", type=float, default=1.0)
    s.set_defaults(func=cmd_make_lut)

    s = sub.add_parser("quantize", help="quantize a float network directory")
    s.add_argument("--net", required=True)
    s.add_argument("--data", required=True, nargs="+")
    s.add_argument("--count", type=int, default=500, help="calibration images")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_quantize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line error contract
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``polycomplex <subcommand> ...``.

Exit codes: 0 success, 1 data error (unparseable input, bad CSV rows),
2 usage error (bad arguments, invalid or missing config, missing files).
Every file a subcommand writes goes under its ``--out`` directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import bench, featurize, forcefield, kernels, polyatomic, smiles
from .atomic import AtomConfig

SEED_ENV = "POLYCOMPLEX_SEED"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


_BENCH_KEYS = {f.name for f in fields(bench.BenchmarkConfig)} - {"atom_config"}
_ATOM_KEYS = {f.name for f in fields(AtomConfig)}


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment, blank lines are ignored."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _as_bool(key: str, value: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {value!r}")


def benchmark_config(values: dict[str, str], base_dir: Path | None = None) -> bench.BenchmarkConfig:
    """Turn raw config entries into a validated :class:`BenchmarkConfig`."""
    values = dict(values)
    if "featurizer" in values:
        values.setdefault("representation", values.pop("featurizer"))
    unknown = set(values) - _BENCH_KEYS - _ATOM_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for required in ("dataset", "target_cols"):
        if required not in values:
            raise UsageError(f"{required}: required config key is missing")
    kwargs: dict = {}
    try:
        for key in _BENCH_KEYS & set(values):
            raw = values[key]
            if key == "target_cols":
                kwargs[key] = [c.strip() for c in raw.split(",") if c.strip()]
            elif key in ("n_trials", "n_epochs", "seed", "n_resamples", "wl_iterations", "jobs"):
                kwargs[key] = int(raw)
            elif key == "max_rows":
                kwargs[key] = None if raw.lower() in ("", "none", "all") else int(raw)
            elif key == "train_ratio":
                kwargs[key] = float(raw)
            elif key == "include_hydrogens":
                kwargs[key] = _as_bool(key, raw)
            else:
                kwargs[key] = raw
        atom = AtomConfig.from_mapping({k: values[k] for k in _ATOM_KEYS & set(values)})
    except ValueError as exc:
        raise UsageError(f"invalid config value: {exc}") from None
    dataset = Path(kwargs["dataset"])
    if not dataset.is_file() and base_dir is not None and (base_dir / dataset).is_file():
        dataset = base_dir / dataset
    if not dataset.is_file():
        raise UsageError(f"dataset: file {kwargs['dataset']} not found")
    kwargs["dataset"] = str(dataset)
    cfg = bench.BenchmarkConfig(atom_config=atom, **kwargs)
    try:
        cfg.validate()
    except bench.ConfigError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inputs(args) -> list[tuple[str, str, int | None]]:
    """(id, smiles, csv line) triples from positional SMILES or --csv."""
    rows = [(str(i), s, None) for i, s in enumerate(args.smiles or [])]
    if args.csv:
        path = Path(args.csv)
        if not path.is_file():
            raise UsageError(f"input file {path} not found")
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if args.smiles_col not in (reader.fieldnames or []):
                raise DataError(f"{path}: no column {args.smiles_col!r}")
            for row in reader:
                ident = row.get(args.id_col, "") if args.id_col else str(len(rows))
                rows.append((ident or str(len(rows)), row[args.smiles_col] or "", reader.line_num))
    if not rows:
        raise UsageError("no input: give SMILES arguments or --csv")
    return rows


def cmd_validate(args) -> int:
    errors = 0
    rows = _inputs(args)
    for ident, smi, line in rows:
        where = f"line {line}" if line is not None else f"#{ident}"
        try:
            smiles.atom_inventory(smiles.parse(smi), args.include_hydrogens)
        except smiles.SmilesError as exc:
            errors += 1
            print(f"ERROR {where}: {smi!r}: {type(exc).__name__}: {exc}")
        else:
            if not args.quiet:
                print(f"OK    {where}: {smi}")
    total = len(rows)
    print(f"{total - errors}/{total} parsed")
    return 1 if errors else 0


def _atom_config(args) -> AtomConfig:
    if args.config:
        values = read_config(args.config)
        return AtomConfig.from_mapping({k: v for k, v in values.items() if k in _ATOM_KEYS})
    return AtomConfig()


def _encode_all(args):
    config = _atom_config(args)
    seed = _seed(args)
    coords = None
    if getattr(args, "xyz", None):
        symbols, coords = polyatomic.read_xyz(args.xyz)
        items = [("xyz", " ".join(symbols), None, symbols)]
    else:
        items = []
        for ident, smi, line in _inputs(args):
            try:
                inv = smiles.inventory_from_smiles(smi, args.include_hydrogens)
            except smiles.SmilesError as exc:
                where = f"line {line}" if line is not None else f"#{ident}"
                raise DataError(f"{where}: {smi!r}: {type(exc).__name__}: {exc}") from None
            items.append((ident, smi, line, inv))
    out = []
    for ident, smi, _, atoms in items:
        poly = polyatomic.build_polyatomic_complex(
            atoms,
            using_radial=args.radial,
            using_force_model=args.force_model,
            coords=coords,
            config=config,
            seed=seed,
        )
        out.append((ident, smi, poly))
    return out


def cmd_encode(args) -> int:
    out = _out_dir(args)
    encoded = _encode_all(args)
    with open(out / "complexes.jsonl", "w") as fh:
        for ident, smi, poly in encoded:
            record = {"id": ident, "smiles": smi, "polyatomic": json.loads(poly.serialize())}
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    mats = [featurize.featurize(poly, args.featurizer) for _, _, poly in encoded]
    featurize.write_feature_cache(out / "features.csv", [i for i, _, _ in encoded], mats)
    for (ident, _, poly), m in zip(encoded, mats):
        print(f"{ident}: {len(poly.C)} cells, features {m.shape[0]}x{m.shape[1]}")
    return 0


def cmd_featurize(args) -> int:
    out = _out_dir(args)
    encoded = _encode_all(args)
    mats = featurize.zero_pad([featurize.featurize(p, args.featurizer) for _, _, p in encoded])
    featurize.write_feature_cache(out / "features.csv", [i for i, _, _ in encoded], mats)
    print(f"{len(mats)} matrices padded to {mats[0].shape[0]}x{mats[0].shape[1]}")
    return 0


def cmd_kernel(args) -> int:
    out = _out_dir(args)
    rows = _inputs(args)
    try:
        if args.kernel == "tanimoto":
            encoded = _encode_all(args)
            mats = featurize.zero_pad([featurize.featurize(p, args.featurizer) for _, _, p in encoded])
            items = np.vstack([featurize.flatten(m) for m in mats])
        elif args.kernel == "wl":
            items = [smiles.parse(s) for _, s, _ in rows]
        else:
            items = [s for _, s, _ in rows]
    except smiles.SmilesError as exc:
        raise DataError(str(exc)) from None
    K = kernels.gram(args.kernel, items, args.sigma2, args.jitter).values
    np.savetxt(out / "gram.csv", K, delimiter=",", fmt="%.17g")
    print(f"{len(K)}x{len(K)} {args.kernel} Gram matrix; min eigenvalue {np.linalg.eigvalsh(K).min():.3e}")
    return 0


def cmd_benchmark(args) -> int:
    values = read_config(args.config)
    if args.jobs is not None:
        values["jobs"] = str(args.jobs)
    elif "jobs" not in values:
        values["jobs"] = str(os.cpu_count() or 1)
    seed = _seed(args) if (args.seed is not None or SEED_ENV in os.environ) else None
    if seed is not None:
        values["seed"] = str(seed)
    cfg = benchmark_config(values, Path(args.config).resolve().parent)
    try:
        reports = bench.run_benchmark(cfg)
    except (bench.BenchError, smiles.SmilesError) as exc:
        raise DataError(str(exc)) from None
    out = _out_dir(args)
    if len(reports) == 1:
        names = {next(iter(reports)): "report.json"}
    else:
        names = {t: f"report-{_slug(t)}.json" for t in reports}
    print(f"{'target':<40} {'MAE':>16} {'RMSE':>16} {'CRPS':>16}")
    for target, report in reports.items():
        (out / names[target]).write_text(bench.report_json(report))
        agg = report["aggregates"]
        cells = []
        for metric in ("mae", "rmse", "crps"):
            se = agg[metric]["stderr"]
            cells.append(f"{agg[metric]['mean']:.3f} ± {se:.3f}" if se is not None else f"{agg[metric]['mean']:.3f}")
        print(f"{target[:40]:<40} {cells[0]:>16} {cells[1]:>16} {cells[2]:>16}")
    return 0


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text).strip("_").lower()


def cmd_rdf(args) -> int:
    out = _out_dir(args)
    if args.table:
        rdf = polyatomic.read_rdf_table(args.table)
    else:
        if not args.xyz:
            raise UsageError("rdf needs --xyz or --table")
        _, coords = polyatomic.read_xyz(args.xyz, to_bohr=False)
        try:
            params = polyatomic.RDFParams(args.r_max, args.bins, args.samples)
        except polyatomic.BadHistogramParams as exc:
            raise UsageError(str(exc)) from None
        rdf = polyatomic.radial_distribution(coords, params, _seed(args), args.box)
    with open(out / "rdf.csv", "w") as fh:
        fh.write("r_lo,r_hi,g\n")
        for lo, hi, g in zip(rdf.edges[:-1], rdf.edges[1:], rdf.g):
            fh.write(f"{lo!r},{hi!r},{float(g)!r}\n")
    print(f"wrote {len(rdf.g)} bins to {out / 'rdf.csv'}")
    return 0


def cmd_potential(args) -> int:
    out = _out_dir(args)
    symbols, coords = polyatomic.read_xyz(args.xyz, to_bohr=False)
    params = forcefield.load_params(args.params)
    bonds = None
    if args.smiles:
        graph = smiles.parse(args.smiles)
        if len(graph.atoms) != len(symbols):
            raise DataError(f"SMILES has {len(graph.atoms)} atoms but the XYZ file has {len(symbols)}")
        bonds = [(b.a, b.b) for b in graph.bonds]
    cx = forcefield.atom_complex(symbols, coords, params.r_bond, bonds)
    total, breakdown = forcefield.classical_potential(cx, coords, params)
    result = {"total": total, "breakdown": breakdown}
    (out / "potential.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    for name, value in breakdown.items():
        print(f"{name:<10} {value: .10g}")
    print(f"{'total':<10} {total: .10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polycomplex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_inputs(p):
        p.add_argument("smiles", nargs="*", help="SMILES strings")
        p.add_argument("--csv", help="CSV file with a SMILES column")
        p.add_argument("--smiles-col", default="smiles")
        p.add_argument("--id-col", default=None)
        p.add_argument("--no-hydrogens", dest="include_hydrogens", action="store_false",
                       help="leave implicit hydrogens out of the atom inventory")

    def add_encoding(p):
        p.add_argument("--featurizer", choices=("fast", "deep"), default="fast")
        p.add_argument("--config", help="key=value file with atom construction settings")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--xyz", help="encode one system from an XYZ file instead of SMILES")
        p.add_argument("--force-model", action="store_true", help="build F with Coulomb off-diagonal blocks")
        p.add_argument("--radial", action="store_true", help="build D_E with RDF lookups")
        p.add_argument("--out", required=True)

    p = sub.add_parser("validate", help="parse SMILES and report errors")
    add_inputs(p)
    p.add_argument("--quiet", action="store_true", help="print errors only")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("encode", help="write complexes.jsonl and per-molecule features.csv")
    add_inputs(p)
    add_encoding(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("featurize", help="write a zero-padded feature cache for a dataset")
    add_inputs(p)
    add_encoding(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("kernel", help="write a Gram matrix")
    add_inputs(p)
    add_encoding(p)
    p.add_argument("--kernel", choices=kernels.KERNELS, default="tanimoto")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("benchmark", help="run the GP benchmark described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel trials (default: all cores)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("rdf", help="radial distribution function of an XYZ system")
    p.add_argument("--xyz")
    p.add_argument("--table", help="use an r,g CSV table instead of sampling")
    p.add_argument("--box", type=float, default=None, help="cubic periodic box edge")
    p.add_argument("--r-max", type=float, default=10.0)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rdf)

    p = sub.add_parser("potential", help="evaluate the classical potential of an XYZ geometry")
    p.add_argument("--xyz", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--smiles", help="take bonds from this SMILES (same atom order as the XYZ)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_potential)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

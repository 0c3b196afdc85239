"""``smiles-screen`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .augment import enumerate_smiles
from .harness import Dataset, EvalRow, IngestError, build_grid, config_hash, ingest, nested_cv, parse_config, report
from .persist import save_model
from .pipelines import MODEL_KINDS, default_representation, make_estimator
from .smiles_core import ParseDiagnostic, canonical_smiles, iter_smiles_lines, natural_walk, try_parse, write_smiles
from .structure import diameter_report


def _open_input(path: str | None):
    if path is None or path == "-":
        return sys.stdin
    return open(path, encoding="utf-8")


def _each_molecule(path, out, handle):
    """Apply ``handle`` to every parsed line; diagnostics go to ``out`` as ``ERROR <offset>: ...``."""
    ok = True
    with _open_input(path) as fh:
        for _, text in iter_smiles_lines(fh):
            got = try_parse(text)
            if isinstance(got, ParseDiagnostic):
                out.write(f"{got}\n")
                ok = False
            else:
                handle(got)
    return 0 if ok else 1


def cmd_parse(args) -> int:
    def show(m):
        sys.stdout.write(f"{write_smiles(m, natural_walk(m))}\t{len(m.atoms)}\t{len(m.bonds)}\n")

    return _each_molecule(args.input, sys.stdout, show)


def cmd_canonicalize(args) -> int:
    return _each_molecule(args.input, sys.stdout, lambda m: sys.stdout.write(canonical_smiles(m) + "\n"))


def cmd_augment(args) -> int:
    rng = np.random.default_rng(args.seed)

    def emit(m):
        for s in enumerate_smiles(m, args.n, rng):
            sys.stdout.write(s + "\n")

    return _each_molecule(args.input, sys.stderr, emit)


def cmd_stats(args) -> int:
    with _open_input(args.input) as fh:
        rep = diameter_report(fh)
    sys.stdout.write(rep.to_csv())
    sys.stdout.write("\n" + rep.summary() + "\n")
    return 0


def _load_config(path: str | None) -> dict[str, list]:
    return parse_config(Path(path).read_text(encoding="utf-8")) if path else {}


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _load_config(args.config)
    representation = args.repr or default_representation(args.model)
    try:
        dataset = ingest(args.data, quarantine=out / "quarantine.tsv")
    except IngestError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    grid, settings = build_grid(args.model, config)
    row = nested_cv(dataset, args.model, grid, settings, seed=args.seed, representation=representation)
    write_outputs(out, [row])
    for f in row.folds:
        if f.status != "ok":
            sys.stderr.write(f"fold {f.fold} failed: {f.error}\n")
    return 0 if row.failed == 0 else 1


def write_outputs(out: Path, rows: list[EvalRow]) -> None:
    (out / "report.md").write_text(report(rows, "markdown"), encoding="utf-8")
    (out / "report.csv").write_text(report(rows, "csv"), encoding="utf-8")
    for row in rows:
        with open(out / f"folds_{row.dataset}_{row.representation}_{row.model}.jsonl", "w", encoding="utf-8") as fh:
            for f in row.folds:
                fh.write(f.to_json() + "\n")


def cmd_train(args) -> int:
    config = _load_config(args.config)
    settings = {k: v[0] for k, v in config.items()}
    multi = sorted(k for k, v in config.items() if len(v) > 1)
    if multi:
        sys.stderr.write(f"note: grid axes {multi} given to train; using the first value of each\n")
    dataset: Dataset = ingest(args.data)
    representation = args.repr or default_representation(args.model)
    model = make_estimator(args.model, settings, representation, args.seed)
    model.fit(dataset.smiles, dataset.labels)
    record = {"model": args.model, "representation": representation, "seed": args.seed, "settings": settings}
    record["config_hash"] = config_hash(record)
    save_model(model, args.out, record)
    sys.stdout.write(json.dumps({"checkpoint": str(args.out), **record}, default=str) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smiles-screen", description="SMILES tools and virtual-screening evaluation")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, text in (("parse", cmd_parse, "parse SMILES, print rewritten form with atom and bond counts"),
                           ("canonicalize", cmd_canonicalize, "print canonical SMILES")):
        s = sub.add_parser(name, help=text)
        s.add_argument("input", nargs="?", help="file of SMILES lines (default: stdin)")
        s.set_defaults(func=fn)

    s = sub.add_parser("augment", help="print K random writings per input line")
    s.add_argument("input", nargs="?")
    s.add_argument("-n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("stats", help="structural statistics")
    s.add_argument("input", nargs="?")
    s.add_argument("--diameter", action="store_true", required=True)
    s.set_defaults(func=cmd_stats)

    for name, fn in (("evaluate", cmd_evaluate), ("train", cmd_train)):
        s = sub.add_parser(name)
        s.add_argument("--data", required=True)
        s.add_argument("--model", required=True, choices=MODEL_KINDS)
        s.add_argument("--repr", choices=("ngram", "symbols"))
        s.add_argument("--config")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)
        s.set_defaults(func=fn)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

    nonprob estimate --method raking --sample poll.csv --margins census.csv --target vote
    nonprob simulate --scenario ignorable --out results/ignorable

Exit status: 0 success, 2 configuration error, 3 data error, 4 estimation
error, 5 resampling instability. Errors are printed to stderr as one line:
``error code=<CODE> exit=<N> message=<json string>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import common_support_report
from .errors import ConfigError, NonprobError
from .io import file_digest, infer_schema, read_cells, read_header, read_margins, read_reference, read_sample
from .simulation import bundled_scenarios, load_scenario, parse_value, run_benchmark
from .uncertainty import METHODS, Auxiliary, EstimatorSpec, bootstrap, jackknife, run_estimator
from .weighting import DEFAULT_TRIM

NEEDS = {
    "mean": (),
    "raking": ("margins|cells",),
    "psipw": ("cells|reference",),
    "poststrat": ("cells",),
    "mrp": ("cells",),
    "match": ("cells|reference",),
    "inverse": ("cells",),
    "drp": ("cells",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _trim(text):
    if text is None:
        return None
    if text == "default":
        return DEFAULT_TRIM
    try:
        low, high = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--trim expects LOW,HIGH, got {text!r}") from None
    if not 0 < low <= high:
        raise ConfigError(f"--trim needs 0 < LOW <= HIGH, got {text!r}")
    return (low, high)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nonprob", description="Selection-bias correction for non-probability samples.")
    p.add_argument("--version", action="version", version=f"nonprob {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    e = sub.add_parser("estimate", help="estimate a population mean from a sample and census inputs")
    e.add_argument("--method", required=True, choices=METHODS)
    e.add_argument("--sample", required=True)
    e.add_argument("--cells")
    e.add_argument("--margins")
    e.add_argument("--reference")
    e.add_argument("--target", required=True)
    e.add_argument("--bootstrap", type=int, default=1000, metavar="B", help="bootstrap replicates (0 = none)")
    e.add_argument("--jackknife", action="store_true", help="delete-one jackknife instead of bootstrap")
    e.add_argument("--seed", type=int, default=42)
    e.add_argument("--trim", help="LOW,HIGH weight bounds for raking, or 'default' for 0.2,5")
    e.add_argument("--normalization", choices=("paper", "hajek"), default="hajek")
    e.add_argument("--option", action="append", default=[], metavar="KEY=VALUE",
                   help="extra estimator option, e.g. reference_weighting=inverse (repeatable)")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", help="report path; a .json sidecar is written next to it")

    s = sub.add_parser("simulate", help="run a benchmark scenario")
    s.add_argument("--scenario", required=True, help=f"scenario file or bundled name ({', '.join(bundled_scenarios())})")
    s.add_argument("--replications", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--bootstrap", type=int, default=0, metavar="B", help="bootstrap B per replication for coverage")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.txt")
    return p


def _check_inputs(args):
    for need in NEEDS[args.method]:
        if not any(getattr(args, k) for k in need.split("|")):
            wanted = " or ".join(f"--{k}" for k in need.split("|"))
            raise ConfigError(f"method {args.method} needs {wanted}")
    if args.trim and args.method != "raking":
        raise ConfigError("--trim only applies to --method raking")
    if args.bootstrap < 0 or args.bootstrap == 1:
        raise ConfigError("--bootstrap must be 0 or at least 2")


def _load(args):
    cells = read_cells(args.cells) if args.cells else None
    margins = read_margins(args.margins) if args.margins else None
    if cells is not None and margins is not None and cells.schema != margins.schema:
        raise ConfigError("--cells and --margins describe different covariates or levels")
    if cells is not None:
        schema = cells.schema
    elif margins is not None:
        schema = margins.schema
    else:
        header = read_header(args.reference if args.reference else args.sample)
        skip = {args.target, "inclusion_prob"}
        covs = [h for h in header if h not in skip]
        schema = infer_schema([p for p in (args.reference, args.sample) if p], covs)
    sample = read_sample(args.sample, schema, args.target)
    reference = read_reference(args.reference, schema) if args.reference else None
    return sample, Auxiliary(cells, margins, reference)


def _options(args) -> dict:
    opts = {}
    if args.method == "raking":
        opts["trim"] = _trim(args.trim)
    if args.method == "psipw":
        opts["normalization"] = args.normalization
    for item in args.option:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--option expects KEY=VALUE, got {item!r}")
        opts[key.strip()] = parse_value(value)
    return opts


def run_estimate(args) -> dict:
    _check_inputs(args)
    sample, aux = _load(args)
    spec = EstimatorSpec(args.method, _options(args), args.seed)
    est = run_estimator(spec, sample, aux)
    diagnostics = {k: v for k, v in est.diagnostics.items()}
    if aux.cells is not None:
        rep = common_support_report(sample, aux.cells)
        diagnostics["common_support_violations"] = ["/".join(c) for c in rep.violations]
    unc = None
    if args.jackknife:
        unc = jackknife(spec, sample, aux, n_jobs=args.jobs)
    elif args.bootstrap:
        unc = bootstrap(spec, sample, aux, args.bootstrap, args.seed, n_jobs=args.jobs)
    if unc is not None:
        diagnostics["replicate_failures"] = unc.failures
    inputs = {k: getattr(args, k) for k in ("sample", "cells", "margins", "reference") if getattr(args, k)}
    return {
        "method": args.method,
        "estimate": est.value,
        "se": None if unc is None else unc.se,
        "ci_low": None if unc is None else unc.ci_low,
        "ci_high": None if unc is None else unc.ci_high,
        "uncertainty": None if unc is None else unc.method,
        "replicates": None if unc is None else unc.B,
        "n": sample.n,
        "options": {
            **spec.effective_options(),
            "target": args.target,
            "bootstrap": 0 if args.jackknife else args.bootstrap,
            "jackknife": args.jackknife,
            "seed": args.seed,
            "normalization": args.normalization,
            "trim": _trim(args.trim),
        },
        "diagnostics": diagnostics,
        "provenance": {
            "version": __version__,
            "seed": args.seed,
            "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in inputs.items()},
        },
    }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    return v


def format_report(rep: dict) -> str:
    lines = [f"nonprob {rep['provenance']['version']} estimate report", ""]
    for key in ("method", "estimate", "se", "ci_low", "ci_high", "uncertainty", "replicates", "n"):
        v = rep[key]
        lines.append(f"{key:<12}{'-' if v is None else (f'{v:.6f}' if isinstance(v, float) else v)}")
    for block in ("options", "diagnostics"):
        lines += ["", f"[{block}]"]
        for k in sorted(rep[block]):
            lines.append(f"{k} = {json.dumps(_plain(rep[block][k]), default=_plain)}")
    lines += ["", "[provenance]", f"seed = {rep['provenance']['seed']}"]
    for k, v in rep["provenance"]["inputs"].items():
        lines.append(f"{k} = {v['path']} sha256:{v['sha256']}")
    return "\n".join(lines) + "\n"


def run_simulate(args):
    scen = load_scenario(args.scenario)
    if args.replications is not None and args.replications < 2:
        raise ConfigError("--replications must be at least 2")
    table = run_benchmark([scen], R=args.replications, seed=args.seed, bootstrap_B=args.bootstrap,
                          n_jobs=args.jobs)
    text = table.to_text()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{out}.csv").write_text(table.to_csv(), encoding="utf-8")
        Path(f"{out}.txt").write_text(text, encoding="utf-8")
    return table, text


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "estimate":
            rep = run_estimate(args)
            text = format_report(rep)
            if args.out:
                out = Path(args.out)
                out.parent.mkdir(parents=True, exist_ok=True)
                out.write_text(text, encoding="utf-8")
                out.with_suffix(".json").write_text(
                    json.dumps(rep, indent=2, sort_keys=True, default=_plain) + "\n", encoding="utf-8")
            sys.stdout.write(text)
        else:
            _, text = run_simulate(args)
            sys.stdout.write(text)
        return 0
    except NonprobError as exc:
        msg = json.dumps(str(exc))
        sys.stderr.write(f"error code={exc.code} exit={exc.exit_status} message={msg}\n")
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())

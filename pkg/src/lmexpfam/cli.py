"""Command-line entry point: ``lmexpfam {fit,simulate-dirichlet,simulate-aitchison,report}``.

Study settings come from built-in defaults, then an optional ``key = value``
config file, then command-line flags.  The seed additionally honours the
``LMEXPFAM_SEED`` environment variable, which replaces the built-in default
but not a seed given in the config file or with ``--seed``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields

from .bench import (
    BenchConfig,
    emit_report,
    fit_dataset,
    format_table,
    load_report,
    run_aitchison_study,
    run_dirichlet_study,
)
from .errors import ConfigError, DataError, LMExpFamError

SEED_ENV = "LMEXPFAM_SEED"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

_TUPLE_FIELDS = {"algorithms": str, "initializers": str, "dimensions": int, "totals": float}
_SCALAR_FIELDS = {
    "model": str, "n_samples": int, "n_replicates": int, "half_width": float,
    "aitchison_alpha": float, "aitchison_beta": float, "seed": int, "quad_order": int,
    "maxit": int, "fixed_gamma": float, "burn_in": int, "thin": int, "jobs": int,
}
# fit-only keys accepted in a config file
_FIT_FIELDS = {
    "model": str, "initializer": str, "algorithms": str, "ref_index": int, "delimiter": str,
    "header": str, "zero_policy": str, "maxit": int, "quad_order": int,
}


def _convert(key, raw, table):
    kind = table[key]
    try:
        if key in _TUPLE_FIELDS:
            items = [s.strip() for s in str(raw).split(",") if s.strip()]
            return tuple(kind(s) for s in items)
        if raw in (None, "", "none", "None") and key in ("quad_order", "ref_index"):
            return None
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def read_config_file(path, table):
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if key not in table:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value.strip(), table)
    return out


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def build_config(args, model):
    """Merge defaults, env seed, config file and flags into a :class:`BenchConfig`."""
    table = {**_SCALAR_FIELDS, **_TUPLE_FIELDS}
    values = {}
    env_seed = _env_seed()
    if env_seed is not None:
        values["seed"] = env_seed
    if args.config:
        values.update(read_config_file(args.config, table))
    for f in fields(BenchConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = _convert(f.name, flag, table) if f.name in _TUPLE_FIELDS else flag
    if values.get("model", model) != model:
        raise ConfigError(f"config file sets model={values['model']} for a {model} study")
    values["model"] = model
    if model == "Aitchison":
        values.setdefault("initializers", ("ALN",))
        values.setdefault("algorithms", ("LMAdaptive", "NewtonRaphson"))
        values.setdefault("dimensions", (3, 5))
        values.setdefault("n_replicates", 100)
    return BenchConfig(**values)


def _add_output(p):
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--timing", action="store_true", help="include runtimes in JSON output")


def _add_study(p, model):
    p.add_argument("--config", help="key = value file; flags override its values")
    p.add_argument("--algorithms", help="comma-separated subset of algorithms")
    p.add_argument("--dimensions", help="comma-separated K values")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--n-replicates", dest="n_replicates", type=int)
    p.add_argument("--seed", type=int, help=f"master seed (overrides ${SEED_ENV})")
    p.add_argument("--maxit", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for replicates")
    if model == "Dirichlet":
        p.add_argument("--initializers", help="comma-separated subset of initializers")
        p.add_argument("--totals", help="comma-separated sums of alpha, one block each")
        p.add_argument("--half-width", dest="half_width", type=float)
        p.add_argument("--fixed-gamma", dest="fixed_gamma", type=float)
    else:
        p.add_argument("--alpha", dest="aitchison_alpha", type=float)
        p.add_argument("--beta", dest="aitchison_beta", type=float)
        p.add_argument("--quad-order", dest="quad_order", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--thin", type=int)
    _add_output(p)


def make_parser():
    parser = argparse.ArgumentParser(
        prog="lmexpfam",
        description="Damped Newton maximum likelihood for Dirichlet and Aitchison models.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a CSV of compositions")
    p.add_argument("path")
    p.add_argument("--config", help="key = value file; flags override its values")
    p.add_argument("--model", choices=("Dirichlet", "Aitchison"))
    p.add_argument("--initializer")
    p.add_argument("--algorithms", help="comma-separated list")
    p.add_argument("--ref-index", dest="ref_index", type=int,
                   help="1-based alr reference column (default: last)")
    p.add_argument("--delimiter")
    header = p.add_mutually_exclusive_group()
    header.add_argument("--header", dest="header", action="store_const", const="yes")
    header.add_argument("--no-header", dest="header", action="store_const", const="no")
    p.add_argument("--zero-policy", dest="zero_policy", help="reject or replace:DELTA")
    p.add_argument("--maxit", type=int)
    p.add_argument("--quad-order", dest="quad_order", type=int)
    _add_output(p)

    _add_study(sub.add_parser("simulate-dirichlet", help="Dirichlet simulation study"),
               "Dirichlet")
    _add_study(sub.add_parser("simulate-aitchison", help="Aitchison simulation study"),
               "Aitchison")

    p = sub.add_parser("report", help="summarize or convert a saved JSON report")
    p.add_argument("path")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--out")
    return parser


def _header_flag(value):
    if value is None:
        return None
    v = str(value).strip().lower()
    if v in ("yes", "true", "1"):
        return True
    if v in ("no", "false", "0"):
        return False
    if v == "auto":
        return None
    raise ConfigError(f"header must be yes, no or auto, got {value!r}")


def _fit(args):
    values = read_config_file(args.config, _FIT_FIELDS) if args.config else {}
    for key in _FIT_FIELDS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _convert(key, flag, _FIT_FIELDS) if key in _TUPLE_FIELDS else flag
    return fit_dataset(
        args.path,
        model=values.get("model", "Dirichlet"),
        initializer=values.get("initializer"),
        algorithms=values.get("algorithms"),
        ref_index=values.get("ref_index"),
        delimiter=values.get("delimiter", ","),
        header=_header_flag(values.get("header")),
        zero_policy=values.get("zero_policy", "reject"),
        maxit=values.get("maxit", 1000),
        quad_order=values.get("quad_order"),
    )


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            report = load_report(args.path)
            if args.format == "table":
                _write(format_table(report), args.out)
            else:
                _write(emit_report(report, args.format), args.out)
            return EXIT_OK
        if args.command == "fit":
            report = _fit(args)
        elif args.command == "simulate-dirichlet":
            report = run_dirichlet_study(build_config(args, "Dirichlet"))
        else:
            report = run_aitchison_study(build_config(args, "Aitchison"))
        _write(emit_report(report, args.format, include_timing=args.timing), args.out)
        if args.out is not None:
            sys.stderr.write(format_table(report))
    except (DataError, OSError) as exc:
        print(f"lmexpfam: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"lmexpfam: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LMExpFamError as exc:
        print(f"lmexpfam: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``riv ci``, ``riv select`` and ``riv simulate``.

Exit status is 0 on success, 1 on error (with a JSON error record on stderr)
and 2 when ``ci`` finds both intervals empty.
"""

import argparse
import json
import sys
from pathlib import Path

from riv import _kernels
from riv.data_io import Schema, load_csv, load_summary
from riv.errors import RIVError, UnsupportedError, ValidationError
from riv.pipeline import AnalysisConfig, analyze, fit_input, select
from riv.simulation import METHODS, build_setting, emit_table, run_replications

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2

DEFAULTS = {
    "alpha": 0.05,
    "mode": "plurality",
    "M": 1000,
    "K": 1000,
    "rho_method": "bootstrap",
    "a": 0.6,
    "seed": 0,
    "reps": 500,
    "format": "csv",
    "methods": ",".join(METHODS),
    "gamma0": "0.5",
    "tau": "0.2",
    "n": "2000",
    "covariates": "",
    "standardize": False,
    "robust": False,
    "emit_selection": False,
    "emit_samples": False,
    "workers": 1,
}


def _csv_list(text, cast=str):
    if text is None or text == "":
        return []
    if isinstance(text, (list, tuple)):
        return [cast(t) for t in text]
    try:
        return [cast(t.strip()) for t in str(text).split(",") if t.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"bad list value {text!r}: {exc}") from None


def _add_analysis_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=["plurality", "majority"])
    p.add_argument("--M", type=int, help="number of sampled reduced-form draws")
    p.add_argument("--K", type=int, help="bootstrap draws for the threshold")
    p.add_argument("--rho-method", dest="rho_method",
                   choices=["bootstrap", "bonferroni", "sqrt_log"])
    p.add_argument("--a", type=float, help="grid spacing exponent, step n^-a")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="cap on numba threads")
    p.add_argument("--config", help="JSON file with default values for these flags")


def _add_input_flags(p):
    p.add_argument("input", nargs="?", help="CSV data file")
    p.add_argument("--summary", help="JSON summary-statistics file instead of a CSV")
    p.add_argument("--outcome")
    p.add_argument("--treatment")
    p.add_argument("--instruments", help="comma-separated instrument columns")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--robust", action="store_true", default=None,
                   help="heteroscedasticity-robust covariance (CSV input only)")
    p.add_argument("--emit-selection", dest="emit_selection", action="store_true", default=None,
                   help="include the voting matrix in the output")
    p.add_argument("--valid-set", dest="valid_set", help="comma-separated 0-based instrument indices")


def build_parser():
    parser = argparse.ArgumentParser(prog="riv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    ci = sub.add_parser("ci", help="searching and sampling confidence intervals")
    _add_input_flags(ci)
    _add_analysis_flags(ci)
    ci.add_argument("--emit-samples", dest="emit_samples", action="store_true", default=None,
                    help="include each sampled interval")
    ci.add_argument("--out", help="write JSON here instead of stdout")

    sel = sub.add_parser("select", help="relevant instruments and the voting valid set")
    _add_input_flags(sel)
    _add_analysis_flags(sel)
    sel.add_argument("--out")

    sim = sub.add_parser("simulate", help="coverage and length over simulated replications")
    sim.add_argument("--setting", required=True)
    sim.add_argument("--gamma0", help="comma list")
    sim.add_argument("--tau", help="comma list")
    sim.add_argument("--n", help="comma list")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    sim.add_argument("--format", choices=["csv", "text"])
    sim.add_argument("--workers", type=int, help="processes for replications")
    sim.add_argument("--out", help="write the table here instead of stdout")
    _add_analysis_flags(sim)
    return parser


def resolve(args):
    """Merge built-in defaults, the ``--config`` file and explicit flags, in that order."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in doc.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    return opts


def analysis_config(opts):
    vs = opts.get("valid_set")
    return AnalysisConfig(
        alpha=float(opts["alpha"]),
        mode=opts["mode"],
        M=int(opts["M"]),
        K=int(opts["K"]),
        rho_method=opts["rho_method"],
        a=float(opts["a"]),
        seed=int(opts["seed"]),
        valid_set=None if vs in (None, "") else tuple(_csv_list(vs, int)),
        robust=bool(opts["robust"]),
    )


def load_input(opts):
    if opts.get("summary"):
        if opts.get("input"):
            raise ValidationError("give either a CSV input or --summary, not both")
        if opts["robust"]:
            raise UnsupportedError("--robust needs raw CSV input")
        if opts["standardize"]:
            raise UnsupportedError("--standardize needs raw CSV input")
        return load_summary(opts["summary"])
    if not opts.get("input"):
        raise ValidationError("no input: pass a CSV path or --summary")
    missing = [f for f in ("outcome", "treatment", "instruments") if not opts.get(f)]
    if missing:
        raise ValidationError("CSV input needs --" + ", --".join(missing))
    schema = Schema(opts["outcome"], opts["treatment"], _csv_list(opts["instruments"]),
                    _csv_list(opts["covariates"]))
    return load_csv(opts["input"], schema, standardize=bool(opts["standardize"]))


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(doc):
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def cmd_ci(opts):
    cfg = analysis_config(opts)
    res = analyze(load_input(opts), cfg)
    doc = res.to_dict(include_matrix=bool(opts["emit_selection"]),
                      include_samples=bool(opts["emit_samples"]))
    _write(_json(doc), opts.get("out"))
    return EXIT_EMPTY if res.searching.empty and res.sampling.ci.empty else EXIT_OK


def cmd_select(opts):
    cfg = analysis_config(opts)
    fit = fit_input(load_input(opts), cfg.robust)
    sel = select(fit, cfg)
    doc = {"mode": cfg.mode, "selection": sel.to_dict(include_matrix=bool(opts["emit_selection"]))}
    _write(_json(doc), opts.get("out"))
    return EXIT_OK


def cmd_simulate(opts):
    cfg = analysis_config(opts)
    reps = int(opts["reps"])
    if reps < 1:
        raise ValidationError("--reps must be at least 1")
    gammas = _csv_list(opts["gamma0"], float)
    taus = _csv_list(opts["tau"], float)
    ns = _csv_list(opts["n"], int)
    methods = _csv_list(opts["methods"])
    if not (gammas and taus and ns and methods):
        raise ValidationError("--gamma0, --tau, --n and --methods need at least one value")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValidationError(f"unknown methods {bad}; choose from {METHODS}")
    reports = []
    for g0 in gammas:
        for tau in taus:
            for n in ns:
                setting = build_setting(opts["setting"], g0, tau, n)
                reports.append(run_replications(setting, methods, reps, cfg.seed, cfg,
                                                workers=int(opts["workers"])))
    _write(emit_table(reports, opts["format"]), opts.get("out"))
    return EXIT_OK


COMMANDS = {"ci": cmd_ci, "select": cmd_select, "simulate": cmd_simulate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        opts = resolve(args)
        _kernels.set_threads(opts.get("threads"))
        return COMMANDS[args.command](opts)
    except (RIVError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("row", "column"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

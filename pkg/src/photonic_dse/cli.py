"""``photonic-dse`` command-line front end.

Exit codes: 0 success, 2 input error, 3 configuration error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import reporting
from .device_models import ALL_ORGS, DpuOrganization, SpectralParams
from .link_budget import (
    InfeasiblePrecisionError,
    ParamFileError,
    PhotonicLinkParams,
    ScalabilityQuery,
    format_params,
    load_params,
    max_n,
    sweep_scalability,
)
from .mapper import REDUCTION_MODES, AcceleratorConfig, plan_model, plans_to_csv
from .simulator import (
    REFERENCE_TABLE,
    ReportInvariantError,
    area_proportionate_counts,
    check_report,
    compare_accelerators,
    reference_config,
    run_inference,
)
from .workload import BUNDLED_MODELS, ModelFormatError, resolve_model

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3, 4


class InputError(Exception):
    pass


class ConfigError(Exception):
    pass


def _list(conv):
    def parse(text):
        try:
            return [conv(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _number(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", metavar="FILE", help="key = value parameter file")
    common.add_argument("--model", metavar="FILE", action="append", default=None,
                        help=f"descriptor CSV or bundled name ({', '.join(BUNDLED_MODELS)}); repeatable")
    common.add_argument("--org", type=_list(DpuOrganization.parse), default=list(ALL_ORGS),
                        help="comma-separated organizations (default: all)")
    common.add_argument("--dr", type=_list(_number), default=[1, 5, 10], help="datarates in GS/s")
    common.add_argument("--b", type=_list(_number), default=list(range(1, 9)), help="bit precisions")
    common.add_argument("--out", metavar="FILE", help="output CSV (default: stdout)")
    common.add_argument("--reference-counts", action="store_true",
                        help="use the reference DPU sizes and counts instead of deriving them")
    common.add_argument("--reduction", choices=REDUCTION_MODES, default="tree",
                        help="psum reduction timing model")
    common.add_argument("--pipelined-reduction", dest="reduction", action="store_const",
                        const="pipelined", help="same as --reduction pipelined")
    common.add_argument("--n", type=_list(int), default=None, help="DPU size(s) N")
    common.add_argument("--dpus", type=int, default=None, help="DPU count (plan/simulate)")
    common.add_argument("--hw-bits", type=int, default=4, help="DPE precision in bits")
    common.add_argument("--model-bits", type=int, default=8, help="model operand precision in bits")
    common.add_argument("--no-plot", action="store_true", help="skip the PNG figure next to --out")

    p = argparse.ArgumentParser(prog="photonic-dse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("scalability", parents=[common], help="supported N per (org, DR, B)")
    sub.add_parser("penalty", parents=[common], help="crosstalk flags and losses per org")
    sub.add_parser("simulate", parents=[common], help="absolute inference reports")
    sub.add_parser("compare", parents=[common], help="normalized comparison with gmean rows")
    sub.add_parser("plan", parents=[common], help="per-layer mapping dump for one model")
    sub.add_parser("seed-params", parents=[common], help="write the default parameter file")
    return p


# -- helpers --------------------------------------------------------------

def _params(args):
    if not args.params:
        return PhotonicLinkParams(), SpectralParams()
    path = Path(args.params)
    if not path.is_file():
        raise InputError(f"parameter file not found: {path}")
    return load_params(path)


def _models(args):
    specs = args.model or list(BUNDLED_MODELS)
    models = []
    for spec in specs:
        if spec not in BUNDLED_MODELS and not Path(spec).is_file():
            raise InputError(f"model file not found: {spec}")
        models.append(resolve_model(spec, args.model_bits))
    return models


def _emit(args, text, plot=None):
    if args.out:
        reporting.atomic_write(args.out, text)
        if plot is not None and not args.no_plot:
            plot(reporting.figure_path(args.out))
    else:
        sys.stdout.write(text)


def _config_factory(args, params, spectral):
    """Return ``config_for(org, dr)`` following the command-line options."""
    extra = dict(reduction_mode=args.reduction, hw_bits=args.hw_bits)
    if args.reference_counts:
        def from_table(org, dr):
            try:
                return reference_config(org, dr, **extra)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return from_table

    cache = {}

    def derived(org, dr):
        if dr not in cache:
            if args.n:
                sizes = {o: args.n[0] for o in args.org}
            else:
                sizes = {}
                for o in args.org:
                    try:
                        sizes[o] = max_n(ScalabilityQuery(args.hw_bits, dr, o), params, spectral).n_max
                    except InfeasiblePrecisionError as exc:
                        raise ConfigError(str(exc)) from None
            if args.dpus is not None:
                counts = {o: args.dpus for o in sizes}
            else:
                counts = area_proportionate_counts(sizes, datarate_gsps=dr, **extra)
            cache[dr] = (sizes, counts)
        sizes, counts = cache[dr]
        if sizes[org] < 1 or counts[org] < 1:
            raise ConfigError(f"{org} has no feasible configuration at {dr} GS/s")
        try:
            return AcceleratorConfig(org, n=sizes[org], dpu_count=counts[org], datarate_gsps=dr, **extra)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return derived


# -- commands -------------------------------------------------------------

def cmd_scalability(args):
    params, spectral = _params(args)
    rows = sweep_scalability(args.b, args.dr, args.org, params, spectral)
    _emit(args, reporting.scalability_table(rows), lambda p: reporting.plot_scalability(rows, p))


def cmd_penalty(args):
    params, _ = _params(args)
    rows = reporting.penalty_rows(args.n or [36], args.org, params)
    _emit(args, reporting.to_csv(reporting.PENALTY_HEADER, rows), lambda p: reporting.plot_penalty(rows, p))


def _simulate_all(args):
    params, spectral = _params(args)
    models = _models(args)
    config_for = _config_factory(args, params, spectral)
    results = []
    for model in models:
        for org in args.org:
            for dr in args.dr:
                cfg = config_for(org, dr)
                report = run_inference(model, cfg)
                check_report(report)
                results.append((model.name, cfg, report))
    return results


def cmd_simulate(args):
    results = _simulate_all(args)
    _emit(args, reporting.report_table(results), lambda p: reporting.plot_reports(results, p))
    if args.out:
        out = Path(args.out)
        reporting.atomic_write(out.with_name(out.stem + "_breakdown.csv"), reporting.breakdown_table(results))


def cmd_compare(args):
    params, spectral = _params(args)
    models = _models(args)
    config_for = _config_factory(args, params, spectral)
    try:
        rows = compare_accelerators(models, args.org, args.dr, config_for)
    except LookupError as exc:
        raise ConfigError(str(exc)) from None
    for r in rows:
        check_report(r.report)
    _emit(args, reporting.compare_table(rows), lambda p: reporting.plot_compare(rows, p))


def cmd_plan(args):
    params, spectral = _params(args)
    models = _models(args)
    if len(models) != 1:
        raise InputError("plan takes exactly one --model")
    org, dr = args.org[0], args.dr[0]
    if args.n or args.dpus is not None:
        n = args.n[0] if args.n else REFERENCE_TABLE.get(int(dr), {}).get(org, (1, 1))[0]
        cfg = AcceleratorConfig(org, n=n, dpu_count=args.dpus if args.dpus is not None else 1,
                                datarate_gsps=dr, hw_bits=args.hw_bits)
    else:
        cfg = _config_factory(args, params, spectral)(org, dr)
    _emit(args, plans_to_csv(plan_model(models[0], cfg)))


def cmd_seed_params(args):
    _emit(args, format_params())


COMMANDS = {
    "scalability": cmd_scalability,
    "penalty": cmd_penalty,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "plan": cmd_plan,
    "seed-params": cmd_seed_params,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            COMMANDS[args.command](args)
    except (InputError, ParamFileError, ModelFormatError, FileNotFoundError) as exc:
        print(f"photonic-dse: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"photonic-dse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReportInvariantError as exc:
        print(f"photonic-dse: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"photonic-dse: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``sparch {simulate,fit,select,weights,diagnose}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 regularity
violation during simulation, 4 I/O failure, 5 optimizer non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, diagnostics
from .estimate import (
    ConvergenceError,
    FitResult,
    OptimizerConfig,
    RankDeficiencyError,
    design_matrix,
    fit_sarsparch,
    fit_sparch,
    stepwise_bic,
)
from .io import DataError, check_dimensions, load_dataset, load_weights, save_weights, weights_digest
from .simulate import RegularityError, SimulationError, SimulationSpec, simulate
from .weights import (
    WeightsError,
    higher_order_sum,
    is_strictly_triangularizable,
    lattice,
    row_standardize,
    truncation_bound,
)

log = logging.getLogger("sparch")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGULARITY = 3
EXIT_IO = 4
EXIT_CONVERGENCE = 5


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    """Full-precision, platform-stable float text."""
    v = float(v)
    return repr(v) if np.isfinite(v) else ("nan" if np.isnan(v) else ("inf" if v > 0 else "-inf"))


def _g6(v) -> str:
    v = float(v)
    return f"{v:.6g}" if np.isfinite(v) else "NA"


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# shared inputs


def _parse_lattice(text):
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise ConfigError(f"--lattice expects ROWSxCOLS, got {text!r}") from None


def _require_file(path, flag):
    if path is None:
        raise ConfigError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{flag}: file not found: {p}")
    return p


def _weights_from_args(args, n=None, required=True):
    if getattr(args, "w", None):
        return load_weights(_require_file(args.w, "--w"), n=n)
    if getattr(args, "lattice", None):
        r, c = _parse_lattice(args.lattice)
        return lattice(r, c, args.scheme, standardize=args.standardize)
    if required:
        raise ConfigError("either --w or --lattice is required")
    return None


def _fixed(args):
    fixed = {}
    for item in args.fix or ():
        name, _, val = item.partition("=")
        try:
            fixed[name.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"--fix expects NAME=VALUE, got {item!r}") from None
    return fixed


def _optimizer_config(args):
    return OptimizerConfig(
        max_iterations=args.max_iter,
        n_starts=args.starts,
        b=args.b,
        free_b=args.free_b,
        fixed=_fixed(args),
    )


def _load_data(args, columns=None):
    data = load_dataset(_require_file(args.data, "--data"), y=args.y, columns=columns,
                        id_column=args.id_column)
    W = _weights_from_args(args)
    B = load_weights(_require_file(args.b_matrix, "--b-matrix")) if args.b_matrix else None
    check_dimensions(data.n, W=W, B=B)
    return data, W, B


def _split(text):
    return [c.strip() for c in text.split(",") if c.strip()] if text else []


# ---------------------------------------------------------------------------
# reports


_STARS = ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "."))


def _stars(p):
    if not np.isfinite(p):
        return ""
    for cut, s in _STARS:
        if p < cut:
            return s
    return ""


def _pval(p):
    if not np.isfinite(p):
        return "NA"
    return "< 2.2e-16" if p < 2.2e-16 else f"{p:.4g}"


def summary_text(fit: FitResult, call: str) -> str:
    """Human-readable block: call, residual summary, coefficients, criteria, Moran tests."""
    u = fit.residuals
    q = np.quantile(u, [0.0, 0.25, 0.5, 0.75, 1.0])
    heads = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."]
    vals = [q[0], q[1], q[2], u.mean(), q[3], q[4]]
    cells = [_g6(v) for v in vals]
    w = max(max(len(h) for h in heads), max(len(c) for c in cells)) + 1
    lines = [" Call:", call, "", " Residuals:"]
    lines.append("".join(h.rjust(w) for h in heads))
    lines.append("".join(c.rjust(w) for c in cells))
    lines += ["", " Coefficients:"]
    rows = []
    for label, est, se, t, p in fit.coef_table():
        rows.append([label, _g6(est), _g6(se), _g6(t), _pval(p), _stars(p)])
    hdr = ["", "Estimate", "Std. Error", "t value", "Pr(>|t|)", ""]
    widths = [max(len(r[k]) for r in rows + [hdr]) for k in range(6)]
    lines.append(" ".join(
        hdr[k].ljust(widths[k]) if k == 0 else hdr[k].rjust(widths[k]) for k in range(5)
    ).rstrip())
    for r in rows:
        lines.append(" ".join(
            [r[0].ljust(widths[0])] + [r[k].rjust(widths[k]) for k in range(1, 5)] + [r[5]]
        ).rstrip())
    lines += ["---", "Signif. codes:  0 *** 0.001 ** 0.01 * 0.05 . 0.1   1", ""]
    lines.append(f" AIC: {_g6(fit.aic)}, BIC: {_g6(fit.bic)} (Log-Likelihood: {_g6(fit.loglik)})")
    for title, mt in (("residuals", fit.moran_residuals), ("squared residuals", fit.moran_squared)):
        if mt is not None:
            lines += ["", f" Moran's I ({title}): {_g6(mt.I)}, p-value: {_g6(mt.p_value)}"]
    flags = [k for k, v in fit.convergence["boundary"].items() if v]
    if flags:
        lines += ["", f" Note: {', '.join(flags)} at a constraint boundary; standard errors unavailable"
                  + (" (rho = 0 nests the homoscedastic model)" if "rho" in flags else "")]
    if not fit.convergence.get("hessian_positive_definite", True):
        lines += ["", " Note: negative Hessian not positive definite; standard errors unavailable"]
    return "\n".join(lines) + "\n"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _plot_data(out: Path, z, W, svg: bool, prefix=""):
    sc = diagnostics.moran_scatter_data(z, W)
    sc2 = diagnostics.moran_scatter_data(z * z, W)
    qq = diagnostics.qq_data(z, standardize=True)
    _write_csv(out / f"{prefix}moran_scatter_residuals.csv", ["residual", "spatial_lag"], sc.rows())
    _write_csv(out / f"{prefix}moran_scatter_squared_residuals.csv", ["squared_residual", "spatial_lag"],
               sc2.rows())
    _write_csv(out / f"{prefix}qq.csv", ["theoretical", "sample"], qq.rows())
    if svg:
        (out / f"{prefix}moran_scatter_residuals.svg").write_text(diagnostics.render_svg(
            sc.x, sc.lag, "Residuals", "Spatially Lagged Residuals", (sc.intercept, sc.slope)))
        (out / f"{prefix}moran_scatter_squared_residuals.svg").write_text(diagnostics.render_svg(
            sc2.x, sc2.lag, "Squared Residuals", "Spatially Lagged Squared Residuals",
            (sc2.intercept, sc2.slope)))
        (out / f"{prefix}qq.svg").write_text(diagnostics.render_svg(
            qq.theoretical, qq.sample, "Theoretical Quantiles", "Standardized Residuals",
            (qq.intercept, qq.slope)))


def _with_alternative(fit: FitResult, alternative):
    if alternative == "two_sided":
        return fit
    from dataclasses import replace

    mr = diagnostics.morans_i(fit.std_residuals, fit.W, alternative)
    ms = diagnostics.morans_i(fit.std_residuals ** 2, fit.W, alternative)
    return replace(fit, moran_residuals=mr, moran_squared=ms)


def _write_fit(fit: FitResult, out: Path, args, call: str):
    fit = _with_alternative(fit, args.alternative)
    report = fit.to_dict()
    report["call"] = call
    _dump_json(report, out / "fit.json")
    (out / "summary.txt").write_text(summary_text(fit, call))
    _write_csv(
        out / "fitted.csv",
        ["index", "y", "fitted", "residual", "std_residual", "h"],
        zip(range(1, fit.n + 1), fit.y, fit.fitted, fit.residuals, fit.std_residuals, fit.h),
    )
    if args.plot_data:
        _plot_data(out, fit.std_residuals, fit.W, args.svg)
    sys.stdout.write(summary_text(fit, call))


def _call(args, formula):
    parts = [f"formula = {formula}"]
    if args.b_matrix:
        parts.append("B = B")
    parts.append("W = W")
    parts.append(f'family = "{args.family}"')
    return f"{args.command}({', '.join(parts)})"


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    W = _weights_from_args(args, required=args.family != "white_noise")
    n = W.n if W is not None else args.n
    if n is None:
        raise ConfigError("white_noise without --w/--lattice needs --n")
    seed = args.seed
    if seed is None:
        from .simulate import new_seed

        seed = new_seed()
        print(f"seed: {seed}", file=sys.stderr)
    try:
        spec = SimulationSpec(n=n, alpha=args.alpha, rho=args.rho, b=args.b, family=args.family,
                              seed=seed, truncate=not args.no_truncation,
                              truncation_power=args.truncation_power)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    field = simulate(spec, W)
    out = _out_dir(args)
    _write_csv(
        out / "field.csv",
        ["index", "y_re", "y_im", "eps", "h"],
        zip(range(1, n + 1), np.real(field.y).astype(float), np.imag(field.y).astype(float),
            field.eps.astype(float), field.h.astype(float)),
    )
    manifest = {
        "version": __version__,
        "family": args.family,
        "seed": int(seed),
        "n": n,
        "parameters": {"alpha": args.alpha, "rho": args.rho, "b": args.b},
        "truncation": {
            "enabled": not args.no_truncation,
            "bound": _json_num(field.truncation),
            "power": args.truncation_power,
        },
        "w_digest": weights_digest(W) if W is not None else None,
        "w_source": args.w or (f"lattice {args.lattice} {args.scheme}"
                               + (" row-standardized" if args.standardize else "")
                               if args.lattice else None),
    }
    _dump_json(manifest, out / "manifest.json")
    return EXIT_OK


def _json_num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def cmd_fit(args) -> int:
    covs = _split(args.x)
    data, W, B = _load_data(args, columns=covs)
    intercept = (B is not None or bool(covs)) and not args.no_intercept
    X, labels = (design_matrix(data.columns, covs, intercept=intercept, n=data.n)
                 if (covs or intercept) else (None, []))
    cfg = _optimizer_config(args)
    formula = f"{data.y_name} ~ " + " + ".join((["1"] if intercept else ["0"]) + covs)
    call = _call(args, formula)
    out = _out_dir(args)
    try:
        if B is not None:
            fit = fit_sarsparch(data.y, X, B, W, args.family, cfg, xnames=labels)
        else:
            fit = fit_sparch(data.y, W, args.family, cfg, X=X, xnames=labels)
    except ConvergenceError as exc:
        if exc.fit is not None:
            _write_fit(exc.fit, out, args, call)
        raise
    _write_fit(fit, out, args, call)
    return EXIT_OK


def cmd_select(args) -> int:
    data, W, B = _load_data(args, columns=_split(args.candidates) or None)
    names = list(data.columns)
    X_full = np.column_stack([data.columns[c] for c in names]) if names else None
    cfg = _optimizer_config(args)
    out = _out_dir(args)
    fit = stepwise_bic(data.y, X_full, B, W, args.family, cfg, names=names,
                       intercept=not args.no_intercept)
    accepted = [t for t in fit.trace if "error" not in t]
    formula = accepted[-1]["formula"].replace("y ~", f"{data.y_name} ~", 1)
    _write_fit(fit, out, args, _call(args, formula))
    with open(out / "trace.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "action", "formula", "bic", "aic", "accepted", "error"])
        acc_ids = {id(t) for t in accepted}
        for t in fit.trace:
            wr.writerow([
                t["step"], t["action"], t["formula"],
                "" if t.get("bic") is None else _fmt(t["bic"]),
                "" if t.get("aic") is None else _fmt(t["aic"]),
                int(id(t) in acc_ids), t.get("error", ""),
            ])
    return EXIT_OK


def cmd_weights(args) -> int:
    W = _weights_from_args(args)
    if args.order > 1:
        W = higher_order_sum(W, args.order)
        if args.standardize:
            W = row_standardize(W)
    tri, _ = is_strictly_triangularizable(W)
    info = {
        "n": W.n,
        "nnz": W.nnz,
        "row_standardized": W.row_standardized,
        "strictly_triangularizable": bool(tri),
        "digest": weights_digest(W),
    }
    if args.rho is not None:
        info["truncation_bound"] = _json_num(truncation_bound(W, args.rho, args.truncation_power))
        info["rho"] = args.rho
    if args.out:
        out = Path(args.out)
        if out.suffix.lower() not in (".mtx", ".mm", ".csv"):
            raise ConfigError("weights --out must end in .mtx or .csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        save_weights(W, out)
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    data = load_dataset(_require_file(args.data, "--data"), y=args.y, columns=[],
                        id_column=args.id_column)
    W = _weights_from_args(args)
    check_dimensions(data.n, W=W)
    z = data.y
    try:
        mi = diagnostics.morans_i(z, W, args.alternative)
        mi2 = diagnostics.morans_i(z * z, W, args.alternative)
    except diagnostics.DegenerateInputError as exc:
        raise ConfigError(str(exc)) from exc
    report = {"n": data.n, "column": data.y_name, "moran": mi.as_dict(), "moran_squared": mi2.as_dict()}
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        out = _out_dir(args)
        _dump_json(report, out / "diagnose.json")
        if args.plot_data:
            _plot_data(out, z, W, args.svg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_weights_flags(p):
    p.add_argument("--w", help="weighting matrix file (.mtx or triplet .csv)")
    p.add_argument("--lattice", help="build a ROWSxCOLS lattice instead of reading --w")
    p.add_argument("--scheme", choices=("rook", "queen"), default="rook")
    p.add_argument("--standardize", action="store_true", help="row-standardize the lattice")


def _add_shared(p):
    p.add_argument("--data", help="CSV with a header row")
    p.add_argument("--y", default="y", help="response column (default: y)")
    p.add_argument("--id-column", default=None)
    p.add_argument("--b-matrix", help="mean-equation weighting matrix; selects the SAR model")
    p.add_argument("--family", choices=("sparch_gaussian", "esparch"), default="sparch_gaussian")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--plot-data", action="store_true", help="write Moran scatter and Q-Q CSVs")
    p.add_argument("--svg", action="store_true", help="also render SVG plots")
    p.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")


def _add_optimizer(p):
    p.add_argument("--b", type=float, default=2.0, help="E-spARCH exponent (default 2)")
    p.add_argument("--free-b", action="store_true", help="estimate b instead of fixing it")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE", help="hold a parameter fixed")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--starts", type=int, default=3)
    p.add_argument("--no-intercept", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a random field")
    _add_weights_flags(p)
    p.add_argument("--family", choices=("sparch_gaussian", "esparch", "complex", "white_noise"),
                   default="sparch_gaussian")
    p.add_argument("--n", type=int, default=None, help="size for white noise without W")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--b", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-truncation", action="store_true",
                   help="never truncate spARCH errors (may violate regularity)")
    p.add_argument("--truncation-power", type=int, choices=(1, 2), default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    for name, func, hlp in (("fit", cmd_fit, "fit a model by QML"),
                            ("select", cmd_select, "stepwise BIC covariate selection")):
        p = sub.add_parser(name, help=hlp)
        _add_shared(p)
        _add_weights_flags(p)
        _add_optimizer(p)
        if name == "fit":
            p.add_argument("--x", help="comma-separated covariate columns")
        else:
            p.add_argument("--candidates", help="comma-separated candidate columns (default: all)")
        p.set_defaults(func=func)

    p = sub.add_parser("weights", help="build, convert and describe weighting matrices")
    _add_weights_flags(p)
    p.add_argument("--order", type=int, default=1, help="include neighbours up to this order")
    p.add_argument("--rho", type=float, default=None, help="report the truncation bound at rho")
    p.add_argument("--truncation-power", type=int, choices=(1, 2), default=None)
    p.add_argument("--out", default=None, help="output file (.mtx or .csv)")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("diagnose", help="Moran's I of a data column and its square")
    _add_shared(p)
    _add_weights_flags(p)
    p.set_defaults(func=cmd_diagnose, out=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    if hasattr(args, "alternative"):
        args.alternative = diagnostics.normalize_alternative(args.alternative)
    try:
        return args.func(args)
    except RegularityError as exc:
        print(f"error: regularity violated: {exc}", file=sys.stderr)
        return EXIT_REGULARITY
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, DataError, WeightsError, RankDeficiencyError, SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

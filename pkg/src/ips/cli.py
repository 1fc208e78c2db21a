"""Command-line front end: fit, effects, simulate, kernel-dump.

Exit codes: 0 success, 1 usage/data error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .balance import balance_state, lte_balance_state
from .data import DesignSpec, load_csv
from .effects import ate, dte, late, ldte, lqte, qte
from .estimator import balance_report, fit_cbps_just, fit_ips, fit_lips
from .exceptions import ConvergenceError, IpsError, SeparationError, WeakInstrumentError
from .inference import (
    bootstrap_se,
    cbps_influence,
    effect_variance,
    mle_influence,
    ps_influence,
)
from .kernels import FAMILIES, build_kernel, dump_kernel
from .optim import OptimOptions
from .propensity import LogisticModel, fit_mle
from .simulation import (
    EXOG_ESTIMATORS,
    LTE_ESTIMATORS,
    StudyConfig,
    run_study,
    write_metrics_csv,
    write_metrics_json,
)

_FAMILY_ALIAS = {"exp": "exponential", "proj": "projection", "ind": "indicator"}
EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # the scripting contract reserves exit code 2 for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _comma_list(text: str) -> list:
    return [item.strip() for item in text.split(",") if item.strip()]


def _add_data_args(p, outcome_required=False):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--treatment", default="d", help="treatment column name")
    p.add_argument("--covariates", required=True,
                   help="comma-separated covariate column names")
    p.add_argument("--outcome", required=outcome_required, default=None,
                   help="outcome column name")
    p.add_argument("--instrument", default=None, help="instrument column name")


def _add_fit_args(p):
    p.add_argument("--family", choices=sorted(_FAMILY_ALIAS) + list(FAMILIES),
                   default="proj", help="balance weight family")
    p.add_argument("--mode", choices=["exog", "lte"], default="exog")
    p.add_argument("--estimator", default=None,
                   help="estimator tag (default: ips/lips per mode)")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)


def _load(args):
    return load_csv(
        args.data,
        treatment=args.treatment,
        covariates=_comma_list(args.covariates),
        outcome=args.outcome,
        instrument=args.instrument,
    )


def _resolve_family(tag: str) -> str:
    return _FAMILY_ALIAS.get(tag, tag)


def _fit_design(ds, args, opts):
    """Fit the requested propensity estimator; returns (fit, kernel or None)."""
    family = _resolve_family(args.family)
    estimator = args.estimator or ("lips" if args.mode == "lte" else "ips")
    if args.mode == "lte" and ds.z is None:
        raise IpsError("lte mode requires --instrument")
    if estimator == "mle":
        return fit_mle(ds, response="z" if args.mode == "lte" else "d"), None
    if estimator == "cbps_just":
        mode = "lte" if args.mode == "lte" else "exogenous"
        return fit_cbps_just(ds, mode=mode), None
    kernel = build_kernel(ds.x, family)
    if args.mode == "lte":
        return fit_lips(ds, family=family, opts=opts, kernel=kernel), kernel
    return fit_ips(ds, family=family, opts=opts, kernel=kernel), kernel


def cmd_fit(args) -> int:
    ds = _load(args)
    opts = OptimOptions(starts=args.starts, max_iter=args.max_iter,
                        tol=args.tol, seed=args.seed)
    code = EXIT_OK
    try:
        fit, _ = _fit_design(ds, args, opts)
    except ConvergenceError as err:
        if err.best is None:
            raise
        fit, code = err.best, EXIT_NONCONVERGED
    model = LogisticModel(beta=fit.beta)
    payload = fit.to_dict()
    if args.mode == "lte":
        # the instrument propensity balances covariates across instrument arms
        from .data import Dataset
        ds_bal = Dataset(d=ds.z, x=ds.x, y=ds.y, names=ds.names)
    else:
        ds_bal = ds
    payload["balance"] = balance_report(ds_bal, model)
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code if fit.converged else EXIT_NONCONVERGED


def cmd_effects(args) -> int:
    ds = _load(args)
    if ds.y is None:
        raise IpsError("effects requires --outcome")
    opts = OptimOptions(starts=args.starts, max_iter=args.max_iter,
                        tol=args.tol, seed=args.seed)
    fit, kernel = _fit_design(ds, args, opts)
    model = LogisticModel(beta=fit.beta)
    taus = [float(t) for t in _comma_list(args.tau)] if args.tau else []
    ygrid = [float(v) for v in _comma_list(args.ygrid)] if args.ygrid else []

    rows = []  # (effect, at, point, se)
    if args.mode == "lte":
        state = lte_balance_state(ds, model)
        rows.append(("late", "", float(late(ds, state).point), np.nan))
        if taus:
            est = lqte(ds, state, taus)
            for j, t in enumerate(taus):
                rows.append(("lqte", t, float(est.point[j]), np.nan))
        if ygrid:
            est = ldte(ds, state, ygrid)
            for j, v in enumerate(ygrid):
                rows.append(("ldte", v, float(est.point[j]), np.nan))
        if args.bootstrap_reps > 0:
            def boot_fn(ds_b, idx):
                f, k = _fit_design(ds_b, args, opts)
                st = lte_balance_state(ds_b, LogisticModel(beta=f.beta))
                vec = [late(ds_b, st).point]
                if taus:
                    vec.extend(np.atleast_1d(lqte(ds_b, st, taus).point))
                if ygrid:
                    vec.extend(np.atleast_1d(ldte(ds_b, st, ygrid).point))
                return np.asarray(vec)

            boot = bootstrap_se(ds, boot_fn, B=args.bootstrap_reps, seed=args.seed)
            rows = [(e, a, p, float(s)) for (e, a, p, _), s in zip(rows, boot.se)]
    else:
        state = balance_state(ds, model)
        estimator = args.estimator or "ips"
        if estimator == "mle":
            psinf = mle_influence(ds, fit.beta)
        elif estimator == "cbps_just":
            psinf = cbps_influence(ds, fit.beta)
        else:
            psinf = ps_influence(state, kernel)
        se_a, _ = effect_variance("ate", ds, state, psinf)
        rows.append(("ate", "", float(ate(ds, state).point), float(se_a)))
        if taus:
            est = qte(ds, state, taus)
            ses, _ = effect_variance("qte", ds, state, psinf, at=taus)
            for j, t in enumerate(taus):
                rows.append(("qte", t, float(est.point[j]), float(ses[j])))
        if ygrid:
            est = dte(ds, state, ygrid)
            ses, _ = effect_variance("dte", ds, state, psinf, at=ygrid)
            for j, v in enumerate(ygrid):
                rows.append(("dte", v, float(est.point[j]), float(ses[j])))

    records = [
        {
            "effect": e, "at": a, "point": p, "se": s,
            "ci_low": p - 1.96 * s if np.isfinite(s) else np.nan,
            "ci_high": p + 1.96 * s if np.isfinite(s) else np.nan,
        }
        for e, a, p, s in rows
    ]
    if args.format == "json":
        text = json.dumps({"beta": [float(b) for b in fit.beta],
                           "effects": records}, indent=2) + "\n"
    else:
        lines = ["effect,at,point,se,ci_low,ci_high"]
        for r in records:
            lines.append(
                f"{r['effect']},{r['at']},{r['point']!r},{r['se']!r},"
                f"{r['ci_low']!r},{r['ci_high']!r}"
            )
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    fields = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            fields.update(json.load(fh))
    for key in ("design", "scenario", "n", "reps", "seed", "workers", "starts"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if args.estimators:
        fields["estimators"] = tuple(_comma_list(args.estimators))
    if args.taus:
        fields["taus"] = tuple(float(t) for t in _comma_list(args.taus))
    if args.bootstrap_reps is not None:
        fields["bootstrap_reps"] = args.bootstrap_reps
    if args.baseline:
        fields["relmse_baseline"] = args.baseline
    if args.smoke:
        fields["reps"] = min(int(fields.get("reps", 100)), 100)
    if "estimators" not in fields:
        fields["estimators"] = (
            LTE_ESTIMATORS if fields.get("design") == "lte_roy" else EXOG_ESTIMATORS
        )
    if "estimators" in fields:
        fields["estimators"] = tuple(fields["estimators"])
    if "taus" in fields:
        fields["taus"] = tuple(fields["taus"])
    config = StudyConfig(**fields)
    result = run_study(config)
    if args.out:
        if args.format == "json":
            write_metrics_json(result, args.out)
        else:
            write_metrics_csv(result, args.out)
    else:
        for row in result.rows:
            print(f"{row.estimator:>10} {row.effect:>10}  bias={row.bias:+.3f}  "
                  f"rmse={row.rmse:.3f}  cov={row.cov:.3f}")
    return EXIT_OK


def cmd_kernel_dump(args) -> int:
    ds = _load(args)
    kernel = build_kernel(ds.x, _resolve_family(args.family))
    dump_kernel(kernel, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ips", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = sub.add_parser("fit", help="fit a propensity model", parents=[])
    _add_data_args(p_fit)
    _add_fit_args(p_fit)
    p_fit.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p_fit.set_defaults(func=cmd_fit)

    p_eff = sub.add_parser("effects", help="estimate treatment effects")
    _add_data_args(p_eff, outcome_required=True)
    _add_fit_args(p_eff)
    p_eff.add_argument("--tau", default="0.25,0.5,0.75",
                       help="comma-separated quantile levels")
    p_eff.add_argument("--ygrid", default=None,
                       help="comma-separated outcome grid for distribution effects")
    p_eff.add_argument("--bootstrap-reps", type=int, default=0)
    p_eff.add_argument("--format", choices=["csv", "json"], default="csv")
    p_eff.add_argument("--out", default=None)
    p_eff.set_defaults(func=cmd_effects)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    p_sim.add_argument("--config", default=None, help="StudyConfig JSON file")
    p_sim.add_argument("--design", choices=["kang_schafer", "lte_roy"], default=None)
    p_sim.add_argument("--scenario", choices=["correct", "misspecified"], default=None)
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--reps", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--estimators", default=None)
    p_sim.add_argument("--taus", default=None)
    p_sim.add_argument("--bootstrap-reps", type=int, default=None)
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.add_argument("--starts", type=int, default=None)
    p_sim.add_argument("--baseline", default=None)
    p_sim.add_argument("--smoke", action="store_true",
                       help="cap replications at 100 for a quick check")
    p_sim.add_argument("--format", choices=["csv", "json"], default="csv")
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_ker = sub.add_parser("kernel-dump", help="write a balance kernel to disk")
    _add_data_args(p_ker)
    p_ker.add_argument("--family", choices=sorted(_FAMILY_ALIAS) + list(FAMILIES),
                       default="proj")
    p_ker.add_argument("--out", required=True)
    p_ker.set_defaults(func=cmd_kernel_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"ips: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, SeparationError, WeakInstrumentError) as err:
        print(f"ips: error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except IpsError as err:
        print(f"ips: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"ips: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line interface.

Exit status is 0 on success, 2 on argument or data errors and 3 when the
numerics fail (after the fitting restarts are exhausted).
"""

import argparse
import contextlib
import csv
import json
import logging
import sys

import numpy as np
from scipy.optimize import brentq

from ._errors import DataError, DomainError, NumericError, PHFrailtyError
from .data import Dataset, read_csv, write_csv
from .estimation import FitOptions, fit
from .frailty import FrailtyModel, frailty_survival, resolvent_terms, risk_factor, tail_index
from .multivariate import fit_shared
from .serialization import load_model, round_floats
from .simulation import (
    CensoringScheme,
    SharedSource,
    nelson_aalen,
    simulate_dataset,
    simulate_lognormal_two_group,
)

log = logging.getLogger("phfrailty")

STRUCTURE_ALIASES = {"hyperexp": "hyperexponential"}


class UsageError(Exception):
    pass


def _digits(args):
    return 17 if args.full_precision else 6


def _fmt(v, digits):
    return f"{v:.{digits}g}"


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def _scaled(data, scale):
    if scale == 1.0:
        return data
    return Dataset(data.y * scale, data.delta, data.x, data.cluster)


def _round_model(d, digits):
    d = round_floats(d, digits)
    T = d.get("T")
    if T is not None:
        # rounding can push a zero row sum slightly positive; keep T admissible
        for i, row in enumerate(T):
            off = sum(v for j, v in enumerate(row) if j != i)
            if row[i] + off > 0:
                row[i] = -off
    return d


def _emit_json(obj, args):
    text = json.dumps(_round_model(obj, _digits(args)), indent=2)
    with _open_out(args.out) as fh:
        fh.write(text + "\n")


def _fit_options(args):
    return FitOptions(
        ph_dim=args.dim,
        structure=STRUCTURE_ALIASES.get(args.structure, args.structure),
        baseline=args.baseline,
        max_outer_iter=args.max_iter,
        inner_iter_per_outer=args.inner_iter,
        rel_tol=args.rel_tol,
        quad_nodes=args.nodes,
        seed=args.seed,
    )


def run_fit(args):
    data = _scaled(read_csv(args.data), args.scale)
    opts = _fit_options(args)
    res = fit_shared(data, opts) if args.command == "fit-shared" else fit(data, opts)
    _emit_json(res.to_dict(), args)


def _parse_grid(text):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must be start:stop:step, got {text!r}")
    if step <= 0 or stop < start or start < 0:
        raise UsageError(f"invalid grid {text!r}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _parse_x(text, model):
    if text is None:
        return np.zeros(model.beta.size) if model.beta.size else None
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad covariate vector {text!r}")
    if x.size != model.beta.size:
        raise UsageError(f"model has {model.beta.size} coefficients, got {x.size} covariates")
    return x


def eval_curves(model, y, x=None):
    """Columns ``survival, density, hazard, cumhaz, EZ_given_surv`` on a grid.

    At ``y = 0`` density and hazard are the right limits (``inf`` when the
    baseline hazard is unbounded there).
    """
    y = np.asarray(y, dtype=float)
    c = risk_factor(model.beta, x)
    r = resolvent_terms(model.frailty, c * model.baseline.cumhaz(y), 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = c * model.baseline.hazard(y)
        surv = r[:, 0]
        dens = mu * r[:, 1]
        return {
            "survival": surv,
            "density": dens,
            "hazard": mu * r[:, 1] / r[:, 0],
            "cumhaz": -np.log(surv),
            "EZ_given_surv": r[:, 1] / r[:, 0],
        }


def model_quantile(model, prob, x=None):
    """Smallest ``y`` with ``F_Y(y) = prob``, by bracketing and Brent's method."""
    target = 1.0 - prob
    hi = 1.0
    for _ in range(200):
        if frailty_survival(model, hi, x) < target:
            break
        hi *= 2.0
    else:
        raise NumericError(f"cannot bracket quantile {prob}")
    return brentq(lambda y: frailty_survival(model, y, x) - target, 0.0, hi, xtol=1e-14, rtol=1e-12)


def run_eval(args):
    model = load_model(args.model)
    if not isinstance(model, FrailtyModel):
        raise UsageError("eval needs a univariate frailty model JSON")
    x = _parse_x(args.x, model)
    d = _digits(args)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        if args.qq:
            data = _scaled(read_csv(args.qq), args.scale)
            emp = np.sort(data.y[data.delta == 1])
            probs = (np.arange(1, emp.size + 1) - 0.5) / emp.size
            w.writerow(["empirical", "model"])
            for e, p in zip(emp, probs):
                w.writerow([_fmt(e, d), _fmt(model_quantile(model, p, x), d)])
            return
        if args.grid is None:
            raise UsageError("eval needs --grid or --qq")
        y = _parse_grid(args.grid)
        cols = eval_curves(model, y, x)
        w.writerow(["y", *cols])
        for i, yi in enumerate(y):
            w.writerow([_fmt(yi, d), *(_fmt(v[i], d) for v in cols.values())])


def run_simulate(args):
    if args.two_group:
        data = simulate_lognormal_two_group(seed=args.seed, censoring=args.censoring)
    else:
        if args.model is None or args.n is None:
            raise UsageError("simulate needs --two-group or both --model and --n")
        model = load_model(args.model)
        if not isinstance(model, FrailtyModel):
            raise UsageError("simulate needs a univariate frailty model JSON")
        if model.beta.size:
            raise UsageError("simulating models with covariates is only available via --two-group")
        source = SharedSource(model, args.cluster_size) if args.cluster_size else model
        data = simulate_dataset(source, args.n, args.censoring, np.random.SeedSequence(args.seed))
    with _open_out(args.out) as fh:
        write_csv(data, fh, precision=_digits(args))


def run_nelson_aalen(args):
    data = _scaled(read_csv(args.data), args.scale)
    with _open_out(args.out) as fh:
        nelson_aalen(data).to_csv(fh, precision=_digits(args))


def run_tail_index(args):
    model = load_model(args.model)
    if not isinstance(model, FrailtyModel):
        raise UsageError("tail-index needs a univariate frailty model JSON")
    ti = tail_index(model)
    with _open_out(args.out) as fh:
        fh.write(_fmt(ti.value, _digits(args)) + "\n")


def _censoring(text):
    try:
        return CensoringScheme.parse(text)
    except (DomainError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser():
    p = argparse.ArgumentParser(prog="phfrailty", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output path (default: standard output)")
        sp.add_argument("--full-precision", action="store_true", help="print 17 significant digits")

    for name in ("fit", "fit-shared"):
        sp = sub.add_parser(name, help="fit a phase-type frailty model by EM")
        sp.add_argument("--data", required=True)
        sp.add_argument("--dim", type=int, default=2)
        sp.add_argument("--structure", default="general", choices=["general", "coxian", "erlang", "hyperexp", "hyperexponential"])
        sp.add_argument("--baseline", default="constant", choices=["constant", "gompertz", "power"])
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-iter", type=int, default=200)
        sp.add_argument("--inner-iter", type=int, default=5)
        sp.add_argument("--rel-tol", type=float, default=1e-8)
        sp.add_argument("--nodes", type=int, default=200)
        sp.add_argument("--scale", type=float, default=1.0, help="multiply observed times by this factor")
        common(sp)
        sp.set_defaults(func=run_fit)

    sp = sub.add_parser("simulate", help="simulate a dataset")
    sp.add_argument("--two-group", "--paper-5-1", dest="two_group", action="store_true",
                    help="two groups of 500, Gompertz baseline, lognormal frailty")
    sp.add_argument("--model")
    sp.add_argument("--n", type=int)
    sp.add_argument("--cluster-size", type=int)
    sp.add_argument("--censoring", type=_censoring, default=CensoringScheme())
    sp.add_argument("--seed", type=int, default=0)
    common(sp)
    sp.set_defaults(func=run_simulate)

    sp = sub.add_parser("eval", help="evaluate model curves or QQ pairs")
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid")
    sp.add_argument("--x", help="comma-separated covariate values")
    sp.add_argument("--qq", help="data CSV for quantile-quantile pairs of event times")
    sp.add_argument("--scale", type=float, default=1.0)
    common(sp)
    sp.set_defaults(func=run_eval)

    sp = sub.add_parser("nelson-aalen", help="Nelson-Aalen cumulative hazard of a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--scale", type=float, default=1.0)
    common(sp)
    sp.set_defaults(func=run_nelson_aalen)

    sp = sub.add_parser("tail-index", help="tail index of a fitted model")
    sp.add_argument("--model", required=True)
    common(sp)
    sp.set_defaults(func=run_tail_index)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, DataError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"phfrailty: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"phfrailty: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (PHFrailtyError, ValueError) as exc:
        print(f"phfrailty: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

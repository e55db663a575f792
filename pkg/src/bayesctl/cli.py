"""Command-line entry point.

    bayesctl COMMAND --scenario PATH [--reps N] [--seed N] [--mode derived|printed]
                     [--theta X] [--out PATH] [--workers N]

Commands: validate, coeffs, simulate, compare-modes, oracle-check.
Reports are CSV (to ``--out`` or stdout) preceded by ``# key=value`` comment
lines recording mode and theta. Diagnostics go to stderr.

Exit codes: 0 ok, 1 usage, 2 validation, 3 numerical.
"""
import argparse
import io
import sys
from pathlib import Path

import numpy as np

from .errors import (
    BayesCtlError,
    ExtrapolationError,
    InconsistentTransitionError,
    InvalidInputError,
    MomentUndefinedError,
    ScenarioError,
    SingularSolveError,
)
from .filtering import MODES, lambda_factors, moment_constants
from .oracles import GridOracle, GridOraclePolicyFactory, quadrature_moment
from .policy import BayesPolicyFactory, ZeroPolicyFactory
from .recursion import backward_coefficients, bayes_risk_value, stage_betas
from .scenario import load_scenario
from .sim import estimate_risk

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

COMPARE_RTOL = 1e-10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def render_report(header, rows, meta=None):
    """CSV text: ``# key=value`` lines, a header row, then data rows."""
    if not rows:
        raise InvalidInputError("empty result set")
    buf = io.StringIO()
    for key, val in (meta or {}).items():
        buf.write(f"# {key}={fmt(val) if val is not None else 'none'}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise InvalidInputError("row width does not match header")
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def emit_report(header, rows, path, meta=None):
    """Write a CSV report. Nothing is created when ``rows`` is empty."""
    text = render_report(header, rows, meta)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return None
    path = Path(path)
    path.write_text(text)
    return path


def sim_report_rows(report):
    return (
        ["mean_loss", "std_error", "replications", "seed"],
        [[report.mean_loss, report.std_error, report.replications, report.seed]],
    )


def _meta(args, **extra):
    meta = {"command": args.command, "mode": args.mode, "theta": args.theta}
    meta.update(extra)
    return meta


def cmd_validate(args, sc):
    header = ["m", "r", "M", "k", "generalized"]
    rows = [[sc.m, sc.r, sc.M, sc.k, sc.generalized]]
    print(f"scenario ok: m={sc.m} r={sc.r} M={sc.M} k={sc.k}", file=sys.stderr)
    emit_report(header, rows, args.out, _meta(args))


def cmd_coeffs(args, sc):
    rc = backward_coefficients(sc, args.mode, args.theta, regularize=args.regularize)
    header = ["stage", "phi", "case", "name", "row", "col", "value"]
    rows = []
    for n in range(sc.M + 1):
        A, B, C = rc.coefficients(n)
        tag = rc.tags[n].value
        for name, mat in (("K", rc.K[n]), ("A", A), ("B", B), ("C", C), ("F", rc.F[n]), ("H", rc.H[n])):
            for (i, j), val in np.ndenumerate(mat):
                rows.append([n, rc.phi[n], tag, name, i, j, val])
    W0 = bayes_risk_value(rc, 0, sc.x0, sc.prior.rbar)
    emit_report(header, rows, args.out, _meta(args, exact=rc.exact, W0=W0))


def cmd_simulate(args, sc):
    factory = BayesPolicyFactory(sc, args.mode, args.theta)
    report = estimate_risk(sc, factory, args.reps, args.seed, workers=args.workers)
    meta = _meta(args, policy="bayes", exact=factory.rc.exact)
    if factory.rc.exact:
        meta["W0"] = bayes_risk_value(factory.rc, 0, sc.x0, sc.prior.rbar)
    header, rows = sim_report_rows(report)
    emit_report(header, rows, args.out, meta)


def compare_rows(betas):
    """Rows ``beta, constant, printed, derived, quadrature, status``."""
    rows = []
    for beta in betas:
        pr = moment_constants([beta], "printed")
        de = moment_constants([beta], "derived")
        T, T1 = lambda_factors([beta])
        quad = {
            "Q": quadrature_moment(beta, 1.0, "v"),
            "Q1": quadrature_moment(beta, 1.0, "v2"),
            "Q2": quadrature_moment(beta, 1.0, "max"),
            "Q3": quadrature_moment(beta, 1.0, "max2"),
            "Q4": quadrature_moment(beta, 1.0, "vmax"),
            "T": quadrature_moment(beta, 1.0, "lambda"),
            "T1": quadrature_moment(beta, 1.0, "lambda2"),
        }
        for name in ("Q", "Q1", "Q2", "Q3", "Q4", "T", "T1"):
            if name in ("T", "T1"):
                p = d = float((T if name == "T" else T1)[0])
            else:
                p = float(getattr(pr, name)[0])
                d = float(getattr(de, name)[0])
            q = quad[name]
            ok = abs(p - q) <= COMPARE_RTOL * abs(q)
            rows.append([beta, name, p, d, q, "agree" if ok else "discrepant"])
    return rows


def cmd_compare_modes(args, sc):
    if args.beta:
        betas = sorted(set(args.beta))
    else:
        betas = sorted(
            {float(b) for n in range(sc.M + 1) for b in stage_betas(sc.prior.beta, n)[: sc.k]}
        )
    if not betas:
        raise ScenarioError("prior", "no active disturbance coordinates to compare")
    header = ["beta", "constant", "printed", "derived", "quadrature", "status"]
    rows = compare_rows(betas)
    for row in rows:
        if row[5] == "discrepant":
            print(f"beta={row[0]:g}: printed {row[1]} = {row[2]:.6g} "
                  f"differs from quadrature {row[4]:.6g}", file=sys.stderr)
    emit_report(header, rows, args.out, {"command": args.command, "reference": "quadrature"})


def cmd_oracle_check(args, sc):
    if sc.m != 1 or sc.k != 1 or sc.M > 3:
        raise ScenarioError("<scenario>", "oracle-check needs m = 1, k = 1 and M <= 3")
    u_grid = (-args.u_range, args.u_range, args.u_step)
    x_grid = (-args.x_range, args.x_range, args.x_step)
    oracle = GridOracle(sc, u_grid, x_grid)
    bayes = BayesPolicyFactory(sc, args.mode, args.theta)
    x0, r0 = sc.x0[0], sc.prior.rbar[0]
    u_bayes = float(bayes().act(0, sc.x0)[0])
    u_oracle = oracle.action(0, x0, r0)
    header = ["policy", "initial_action", "mean_loss", "std_error", "replications", "seed"]
    rows = []
    for name, factory, u0 in (
        ("bayes", bayes, u_bayes),
        ("grid_oracle", GridOraclePolicyFactory(oracle), u_oracle),
        ("zero", ZeroPolicyFactory(sc.m), 0.0),
    ):
        rep = estimate_risk(sc, factory, args.reps, args.seed, workers=args.workers)
        rows.append([name, u0, rep.mean_loss, rep.std_error, rep.replications, rep.seed])
    meta = _meta(args, u_step=args.u_step * r0, x_step=args.x_step,
                 oracle_W0=oracle.value(0, x0, r0))
    if bayes.rc.exact:
        meta["W0"] = bayes_risk_value(bayes.rc, 0, sc.x0, sc.prior.rbar)
    gap = abs(u_bayes - u_oracle)
    print(f"initial action: bayes {u_bayes:.6g}, oracle {u_oracle:.6g}, "
          f"gap {gap:.3g} (grid step {args.u_step * r0:.3g})", file=sys.stderr)
    emit_report(header, rows, args.out, meta)


COMMANDS = {
    "validate": cmd_validate,
    "coeffs": cmd_coeffs,
    "simulate": cmd_simulate,
    "compare-modes": cmd_compare_modes,
    "oracle-check": cmd_oracle_check,
}


def build_parser():
    p = _Parser(prog="bayesctl", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=MODES, default="derived")
    p.add_argument("--theta", type=float, default=None,
                   help="regularization for rank-deficient stages (default 1e-6 (1 + |K|))")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--regularize", action="store_true",
                   help="coeffs: evaluate the regularized control on rank-deficient stages")
    p.add_argument("--beta", type=float, nargs="*", help="compare-modes: explicit beta values")
    p.add_argument("--u-step", type=float, default=0.01)
    p.add_argument("--u-range", type=float, default=4.0)
    p.add_argument("--x-step", type=float, default=0.02)
    p.add_argument("--x-range", type=float, default=8.0)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.reps < 1:
            raise UsageError("--reps must be at least 1")
        if args.command in ("simulate", "oracle-check") and args.reps < 2:
            raise UsageError("--reps must be at least 2 to estimate a standard error")
        if args.theta is not None and not args.theta > 0:
            raise UsageError("--theta must be positive")
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
    except UsageError as exc:
        print(f"bayesctl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        sc = load_scenario(args.scenario)
        COMMANDS[args.command](args, sc)
    except ScenarioError as exc:
        print(f"bayesctl: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SingularSolveError, InconsistentTransitionError, MomentUndefinedError,
            ExtrapolationError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" (stage {stage})" if stage is not None else ""
        print(f"bayesctl: numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidInputError as exc:
        print(f"bayesctl: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bayesctl: i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BayesCtlError as exc:
        print(f"bayesctl: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``ebarx {simulate,fit,compare,curves}``.

Exit codes
----------
0 success, 2 invalid flags or config, 3 unstable model with burn-in,
4 rank deficiency or missing hyperparameters, 5 file errors,
6 a comparison scenario failed for every replicate.
"""

import argparse
import configparser
import csv
import io
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import _fmt
from .errors import EbarxError, NotPositiveDefinite, RankDeficient, UnstableModel
from .estimators import Prior, bayes_posterior, example51_curves, least_squares, marginal_estimate
from .experiments import (ScenarioSpec, format_table, mse_curves, run_scenario, write_aggregate_csv,
                          write_curves_csv, write_reports_csv)
from .filters import (estimate_hyperparameters, run_forward,
                      write_trace_csv)
from .model import (ArxSpec, ParamWalkSpec, build_regressors, check_stability, read_dataset_csv,
                    simulate_fixed, simulate_varying, write_dataset_csv, write_trajectory_csv)

EXIT_USAGE = 2
EXIT_UNSTABLE = 3
EXIT_RANK = 4
EXIT_FILE = 5
EXIT_SCENARIO = 6

CONFIG_HELP = """\
Config files are flat key = value text under a section named after the
command, e.g.

  [compare]
  seed = 3
  replicates = 100
  priors = 0.01,0.08
  lambdas = 0,0.01,0.02

Keys are the long flag names with dashes replaced by underscores. Unknown
keys are an error. Flags given on the command line override file values.
"""


class UsageError(Exception):
    pass


class MissingHyperparameters(Exception):
    pass


def floats(text):
    """Comma-separated floats, e.g. ``1.5,-0.7``."""
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def ints(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def flag(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# (dest, type, default, help); type ``flag`` is a store_true switch on the CLI.
_GLOBAL = [
    ("seed", int, 0, "base RNG seed"),
    ("out", str, None, "output file (simulate, fit, curves) or directory (compare)"),
    ("quiet", flag, False, "suppress the printed report"),
]

_OPTIONS = {
    "simulate": [
        ("n_order", int, 2, "AR order n"),
        ("m_order", int, 0, "input order m (input is unit white noise)"),
        ("a", floats, (1.5, -0.7), "AR coefficients a1..an"),
        ("b", floats, (), "input coefficients b1..bm"),
        ("sigma2", float, 1.0, "measurement noise variance"),
        ("N", int, 200, "number of retained samples"),
        ("burn_in", int, 500, "discarded transient samples"),
        ("varying", flag, False, "simulate randomly varying AR coefficients"),
        ("lambda", float, 0.01, "std of the coefficient walk increments"),
        ("decay", floats, (0.98, 0.97), "per-coefficient walk decay"),
    ],
    "fit": [
        ("data", str, None, "dataset CSV (t,y[,u])"),
        ("n_order", int, 2, "AR order n"),
        ("m_order", int, 0, "input order m"),
        ("method", str, "ls", "ls | marginal | eb | forward-kf | backward-kf"),
        ("pi", floats, (), "prior variance: one scale for pi*I or p*p row-major entries"),
        ("mu", floats, (), "prior mean (default zeros)"),
        ("prior_sigma2", float, 1.0, "noise variance paired with --pi"),
        ("hyper", str, "none", "none | backward: estimate (sigma2, pi) with the backward filter"),
        ("theta0", floats, (), "reference parameter; prints both MSE values"),
        ("trace", str, None, "write the filter trace CSV here (kf methods)"),
    ],
    "compare": [
        ("theta", floats, (1.5, -0.7), "true AR parameter / walk mean"),
        ("decay", floats, (0.98, 0.97), "walk decay"),
        ("lambdas", floats, (0.0, 0.01, 0.02), "walk std per table (0 = fixed)"),
        ("priors", floats, (0.01, 0.08), "initial prior scales pi*I"),
        ("sample_sizes", ints, (50, 100, 200), "stopping times N"),
        ("replicates", int, 100, "Monte-Carlo replicates per scenario"),
        ("sigma2", float, 1.0, "measurement noise variance"),
        ("burn_in", int, 500, "discarded transient samples"),
        ("sigma2_source", str, "backward", "backward | forward | forward-dof"),
        ("workers", int, 1, "parallel worker processes"),
        ("curves", flag, False, "write the scalar MSE curve grid instead of tables"),
        ("theta0", float, 0.9, "scalar parameter for --curves"),
        ("delta_sq", float, 100.0, "scalar Gram value for --curves"),
        ("pi_min", float, 1e-4, "smallest prior scale in the grid"),
        ("pi_max", float, 1e2, "largest prior scale in the grid"),
        ("points", int, 121, "log-spaced grid points"),
    ],
    "curves": [
        ("theta0", floats, (0.9,), "reference parameter"),
        ("gram", floats, (100.0,), "Gram matrix: p*p row-major entries"),
        ("mu", floats, (), "prior mean (default zeros)"),
        ("sigma2", float, 1.0, "noise variance"),
        ("pi_min", float, 1e-4, "smallest prior scale in the grid"),
        ("pi_max", float, 1e2, "largest prior scale in the grid"),
        ("points", int, 121, "log-spaced grid points"),
    ],
}


def _options(command):
    return _GLOBAL + _OPTIONS[command]


@dataclass
class RunConfig:
    """Flat parameter bundle for one command; keys mirror the long flags."""

    command: str
    values: dict = field(default_factory=dict)

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp[self.command] = {k: _format_value(v) for k, v in self.values.items() if v is not None}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text, command):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise UsageError(f"config: {exc}")
        extra = [s for s in cp.sections() if s not in ("global", command)]
        if extra and command in _OPTIONS:
            unknown = [s for s in extra if s not in _OPTIONS]
            if unknown:
                raise UsageError(f"config: unknown section(s) {', '.join(unknown)}")
        known = {dest: typ for dest, typ, _, _ in _options(command)}
        values = {}
        for section in ("global", command):
            if not cp.has_section(section):
                continue
            for key, raw in cp.items(section):
                if key not in known:
                    raise UsageError(f"config: unknown key {key!r} in [{section}]")
                try:
                    values[key] = known[key](raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"config: bad value for {key}: {exc}")
        return cls(command, values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="ebarx", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for command in _OPTIONS:
        sp = sub.add_parser(command, epilog=CONFIG_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="key = value config file (see below)")
        sp.add_argument("--save-config", help="write the effective config here")
        for dest, typ, default, help_ in _options(command):
            opt = "--" + dest.replace("_", "-")
            if typ is flag:
                sp.add_argument(opt, dest=dest, action="store_true", default=None, help=help_)
            else:
                sp.add_argument(opt, dest=dest, type=typ, default=None,
                                help=f"{help_} (default {_format_value(default)})")
    return parser


def resolve_config(argv):
    """Merge defaults, config file and flags into a :class:`RunConfig`."""
    args = build_parser().parse_args(argv)
    command = args.command
    values = {dest: default for dest, _, default, _ in _options(command)}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        values.update(RunConfig.from_ini(text, command).values)
    for dest, _, _, _ in _options(command):
        v = getattr(args, dest)
        if v is not None:
            values[dest] = v
    cfg = RunConfig(command, values)
    if args.save_config:
        with open(args.save_config, "w") as fh:
            fh.write(cfg.to_ini())
    return cfg


def _say(cfg, *lines):
    if not cfg.values["quiet"]:
        for line in lines:
            print(line)


def _need_out(cfg):
    out = cfg.values["out"]
    if not out:
        raise UsageError(f"{cfg.command}: --out is required")
    return out


def _vec(v):
    return "[" + ", ".join(_fmt.num(x) for x in np.ravel(v)) + "]"


def _mat(m):
    return "[" + "; ".join(" ".join(_fmt.num(x) for x in row) for row in np.atleast_2d(m)) + "]"


def cmd_simulate(cfg):
    v = cfg.values
    out = _need_out(cfg)
    seed = v["seed"]
    if v["varying"]:
        walk = ParamWalkSpec(mean=v["a"], decay=v["decay"], lam=v["lambda"])
        stable, moduli = check_stability(np.asarray(walk.mean))
        d, traj = simulate_varying(walk, v["N"], v["sigma2"], seed, v["burn_in"])
        write_dataset_csv(d, out)
        root, _ = os.path.splitext(out)
        write_trajectory_csv(traj, root + ".theta.csv")
    else:
        if len(v["a"]) != v["n_order"] or len(v["b"]) != v["m_order"]:
            raise UsageError("simulate: --a/--b lengths must match --n-order/--m-order")
        spec = ArxSpec(v["n_order"], v["m_order"], tuple(v["a"]) + tuple(v["b"]), v["sigma2"])
        stable, moduli = check_stability(spec)
        u = None
        if spec.m:
            u_ss = np.random.SeedSequence(seed).spawn(3)[2]
            u = np.random.Generator(np.random.PCG64(u_ss)).standard_normal(v["N"] + v["burn_in"])
        d = simulate_fixed(spec, v["N"], seed, v["burn_in"], u=u)
        write_dataset_csv(d, out)
    _say(cfg, f"seed: {seed}",
         f"stable: {stable} (pole moduli {_vec(moduli)})",
         f"wrote {d.N} samples to {out}")
    return 0


def _prior_from(v, p):
    if not v["pi"]:
        return None
    pi = np.asarray(v["pi"], dtype=float)
    if pi.size == 1:
        pi = pi[0] * np.eye(p)
    elif pi.size == p * p:
        pi = pi.reshape(p, p)
    else:
        raise UsageError(f"fit: --pi needs 1 or {p * p} entries")
    mu = np.zeros(p) if not v["mu"] else np.asarray(v["mu"], dtype=float)
    if mu.size != p:
        raise UsageError(f"fit: --mu needs {p} entries")
    return Prior(mu, v["prior_sigma2"], pi)


def _fit_rows(names, est, var):
    return [f"  {nm} = {_fmt.num(e)}  (var {_fmt.num(s)})"
            for nm, e, s in zip(names, est, np.diag(var))]


def cmd_fit(cfg):
    v = cfg.values
    if not v["data"]:
        raise UsageError("fit: --data is required")
    method = v["method"]
    if method not in ("ls", "marginal", "eb", "forward-kf", "backward-kf"):
        raise UsageError(f"fit: unknown method {method!r}")
    if v["hyper"] not in ("none", "backward"):
        raise UsageError("fit: --hyper must be none or backward")
    try:
        d = read_dataset_csv(v["data"])
    except (OSError, ValueError, IndexError) as exc:
        raise FileNotFoundError(f"cannot read dataset {v['data']}: {exc}") from exc
    n, m = v["n_order"], v["m_order"]
    p = n + m
    names = [f"a{i + 1}" for i in range(n)] + [f"b{i + 1}" for i in range(m)]
    fwd_r = build_regressors(d, n, m, "forward")
    prior = _prior_from(v, p)
    theta0 = np.asarray(v["theta0"], dtype=float) if v["theta0"] else None
    if theta0 is not None and theta0.size != p:
        raise UsageError(f"fit: --theta0 needs {p} entries")
    lines = [f"method: {method}", f"samples: {fwd_r.rows}"]
    hyper = None
    if method in ("marginal", "eb") or v["hyper"] == "backward" or method == "backward-kf":
        if v["hyper"] == "backward" or method == "backward-kf":
            hyper = estimate_hyperparameters(d, n, m, prior_init=prior, warn=False)
            prior_used = hyper.prior
        elif prior is not None:
            prior_used = prior
        else:
            raise MissingHyperparameters(
                f"fit --method {method} needs hyperparameters: give --pi or --hyper backward")
    gram = fwd_r.gram()

    if method == "ls":
        rep = least_squares(fwd_r)
        est, var = rep.estimate, rep.variance
        resid = fwd_r.y - fwd_r.phi @ est
        s2 = float(resid @ resid) / fwd_r.rows
    elif method == "marginal":
        rep = marginal_estimate(fwd_r, prior_used)
        est, var, s2 = rep.estimate, rep.variance, prior_used.sigma2
    elif method == "eb":
        if hyper is not None and prior is not None:
            end = hyper.forward.final
            est, var = end.xhat, hyper.sigma2_hat * end.p_norm
        else:
            rep = bayes_posterior(fwd_r, prior_used)
            est, var = rep.estimate, rep.variance
        s2 = prior_used.sigma2
    elif method == "forward-kf":
        start = prior if prior is not None else Prior(np.zeros(p), 1.0, 1e3 * np.eye(p))
        tr = run_forward(fwd_r, start)
        est, s2 = tr.final.xhat, tr.final.sigma2_hat
        var = s2 * tr.final.p_norm
        if v["trace"]:
            write_trace_csv(tr, v["trace"])
    else:
        tr = hyper.backward
        est, s2 = tr.final.xhat, hyper.sigma2_hat
        var = s2 * tr.final.p_norm
        if v["trace"]:
            write_trace_csv(tr, v["trace"])

    lines.append("estimates:")
    lines += _fit_rows(names, est, var)
    lines.append(f"sigma2_hat: {_fmt.num(s2)}")
    if hyper is not None:
        rec = hyper.recovery
        lines.append(f"P0_hat: {_mat(rec.pi)}")
        if rec.ill_conditioned:
            lines.append(f"warning: recovered prior is ill-conditioned "
                         f"(clipped={rec.clipped}, cond={rec.condition:.3g})")
    mse = {}
    if theta0 is not None:
        gram_inv_tr = float(np.trace(np.linalg.inv(gram)))
        if hyper is not None:
            marg = hyper.sigma2_hat * (gram_inv_tr + float(np.trace(hyper.recovery.pi)))
            src = hyper.forward.final if hyper.forward is not None else hyper.backward.final
            err = src.xhat - theta0
            ebm = float(err @ err) + hyper.sigma2_hat * float(np.trace(src.p_norm))
        elif prior is not None:
            marg = prior.sigma2 * (gram_inv_tr + float(np.trace(prior.pi)))
            post = bayes_posterior(fwd_r, prior)
            err = post.estimate - theta0
            ebm = float(err @ err) + float(np.trace(post.variance))
        else:
            marg = ebm = None
            lines.append("MSE: needs --pi or --hyper backward")
        if marg is not None:
            mse = {"marg_mse": marg, "eb_mse": ebm}
            lines.append(f"marginal MSE: {_fmt.num(marg)}")
            lines.append(f"empirical Bayes MSE: {_fmt.num(ebm)}")
    _say(cfg, *lines)
    if v["out"]:
        with open(v["out"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coefficient", "estimate", "variance"])
            for nm, e, s in zip(names, est, np.diag(var)):
                w.writerow([nm, _fmt.num(e), _fmt.num(s)])
            w.writerow(["sigma2_hat", _fmt.num(s2), ""])
            for k, val in mse.items():
                w.writerow([k, _fmt.num(val), ""])
    return 0


def _grid(v):
    if not (0 < v["pi_min"] < v["pi_max"]) or v["points"] < 2:
        raise UsageError("need 0 < pi-min < pi-max and points >= 2")
    return np.logspace(np.log10(v["pi_min"]), np.log10(v["pi_max"]), v["points"])


def _scenarios(v):
    theta = tuple(v["theta"])
    out = []
    for lam in v["lambdas"]:
        if lam < 0:
            raise UsageError("compare: lambdas must be >= 0")
        model = ArxSpec(len(theta), 0, theta, v["sigma2"]) if lam == 0 else \
            ParamWalkSpec(mean=theta, decay=v["decay"], lam=lam)
        specs = [ScenarioSpec(f"lambda{_format_value(lam)}_pi{_format_value(pi)}", model,
                              Prior.isotropic(len(theta), pi), v["sample_sizes"],
                              v["replicates"], v["seed"], v["burn_in"], v["sigma2"],
                              v["sigma2_source"])
                 for pi in v["priors"]]
        out.append((lam, specs))
    return out


def cmd_compare(cfg):
    v = cfg.values
    out = _need_out(cfg)
    if v["curves"]:
        rows = example51_curves(v["theta0"], v["delta_sq"], _grid(v))
        write_curves_csv(rows, out, columns=("pi", "e2_eb", "e2_m"))
        _say(cfg, f"wrote {len(rows)} grid points to {out}")
        return 0
    if v["sigma2_source"] not in ("backward", "forward", "forward-dof"):
        raise UsageError(f"compare: unknown sigma2-source {v['sigma2_source']!r}")
    try:
        tables = _scenarios(v)
    except ValueError as exc:
        raise UsageError(f"compare: {exc}")
    os.makedirs(out, exist_ok=True)
    status = 0
    p = len(v["theta"])
    for lam, specs in tables:
        reports, aggs = [], []
        for spec in specs:
            res = run_scenario(spec, workers=v["workers"])
            for idx, err in res.failures:
                print(f"{spec.scenario}: replicate {idx} failed: {err}", file=sys.stderr)
            if not res.reports:
                print(f"{spec.scenario}: every replicate failed", file=sys.stderr)
                status = EXIT_SCENARIO
                continue
            reports += res.reports
            aggs += res.aggregate()
        stem = os.path.join(out, f"lambda_{_format_value(lam)}")
        write_reports_csv(reports, stem + ".csv", p)
        write_aggregate_csv(aggs, stem + ".agg.csv", p)
        _say(cfg, f"lambda = {_format_value(lam)}  ({v['replicates']} replicates, medians)",
             format_table(aggs), "")
    return status


def cmd_curves(cfg):
    v = cfg.values
    out = _need_out(cfg)
    theta0 = np.asarray(v["theta0"], dtype=float)
    p = theta0.size
    gram = np.asarray(v["gram"], dtype=float)
    if gram.size != p * p:
        raise UsageError(f"curves: --gram needs {p * p} entries")
    mu = np.zeros(p) if not v["mu"] else np.asarray(v["mu"], dtype=float)
    try:
        table = mse_curves(theta0, gram.reshape(p, p), mu, v["sigma2"], _grid(v))
    except np.linalg.LinAlgError:
        raise RankDeficient("curves: --gram must be positive definite")
    write_curves_csv(table, out)
    lines = [f"wrote {len(table.rows)} grid points to {out}"]
    lines += [f"crossing in ({_fmt.num(a)}, {_fmt.num(b)})" for a, b in table.crossings]
    _say(cfg, *lines)
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "compare": cmd_compare,
            "curves": cmd_curves}


def main(argv=None):
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnstableModel as exc:
        print(f"error: unstable model: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (RankDeficient, NotPositiveDefinite, MissingHyperparameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except (EbarxError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Monte-Carlo comparison of the marginal and Empirical Bayes estimators.

Each replicate simulates one trajectory of length ``max(sample_sizes)`` and
evaluates every sample size on its prefix, so the estimates at different
``N`` come from the same data, as in a single stopped simulation.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fmt
from .errors import EbarxError
from .estimators import Prior, example51_curves, least_squares
from .filters import recover_prior, run_backward, run_forward, batch_sigma2
from .model import ArxSpec, ParamWalkSpec, build_regressors, simulate_fixed, simulate_varying

DEFAULT_SAMPLE_SIZES = (50, 100, 200)


@dataclass(frozen=True)
class ScenarioSpec:
    """One row group of a comparison table.

    ``model`` is either a fixed :class:`ArxSpec` (pure AR) or a
    :class:`ParamWalkSpec`; ``prior_init`` is the prior the forward filter
    starts from. The reference parameter for the error terms is the fixed
    ``theta`` or the walk mean. ``presample`` overrides the zero initial
    values, which only matters when ``burn_in`` is 0.
    """

    scenario: str
    model: object
    prior_init: Prior
    sample_sizes: tuple = DEFAULT_SAMPLE_SIZES
    replicates: int = 100
    base_seed: int = 0
    burn_in: int = 500
    sigma2: float = 1.0
    sigma2_source: str = "backward"
    presample: tuple = None

    def __post_init__(self):
        sizes = tuple(int(v) for v in self.sample_sizes)
        object.__setattr__(self, "sample_sizes", sizes)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sample_sizes must be non-empty and strictly increasing")
        if self.sigma2_source not in ("backward", "forward", "forward-dof"):
            raise ValueError(f"unknown sigma2_source {self.sigma2_source!r}")
        if isinstance(self.model, ArxSpec) and self.model.m:
            raise ValueError("scenarios cover pure AR models only")
        if self.prior_init.p != self.theta0.size:
            raise ValueError("prior dimension does not match the model")

    @property
    def lam(self):
        return self.model.lam if isinstance(self.model, ParamWalkSpec) else 0.0

    @property
    def theta0(self):
        if isinstance(self.model, ParamWalkSpec):
            return np.asarray(self.model.mean)
        return self.model.theta

    @property
    def n(self):
        return self.theta0.size


@dataclass(frozen=True)
class MseReport:
    scenario: str
    replicate: int
    N: int
    prior_init: np.ndarray
    prior_recovered: np.ndarray
    marg_estimate: np.ndarray
    marg_mse: float
    eb_estimate: np.ndarray
    eb_mse: float
    sigma2_hat: float
    eb_var_term: float
    clipped: bool


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    reports: list
    failures: list = field(default_factory=list)

    def by_n(self, N):
        return [r for r in self.reports if r.N == N]

    def column(self, name, N):
        return np.array([getattr(r, name) for r in self.by_n(N)])

    def aggregate(self):
        return [aggregate_reports(self.by_n(N), self.spec.theta0) for N in self.spec.sample_sizes
                if self.by_n(N)]


def replicate_seeds(base_seed, replicates):
    """One independent SeedSequence per replicate."""
    return np.random.SeedSequence(base_seed).spawn(replicates)


def simulate_replicate(spec, seed):
    N = spec.sample_sizes[-1]
    if isinstance(spec.model, ParamWalkSpec):
        d, _ = simulate_varying(spec.model, N, spec.sigma2, seed, spec.burn_in, spec.presample)
    else:
        d = simulate_fixed(replace(spec.model, sigma2=spec.sigma2), N, seed, spec.burn_in,
                           presample=spec.presample)
    return d


def _replicate_reports(spec, index, seed):
    d = simulate_replicate(spec, seed)
    n = spec.n
    theta0 = spec.theta0
    fwd_r = build_regressors(d, n, 0, "forward")
    fwd = run_forward(fwd_r, spec.prior_init)
    out = []
    for N in spec.sample_sizes:
        r_N = fwd_r.head(N)
        end = fwd.states[N]
        bwd = run_backward(build_regressors(d.head(N), n, 0, "backward"), end.xhat, end.p_norm)
        if spec.sigma2_source == "backward":
            s2 = bwd.final.sigma2_hat
        else:
            s2 = batch_sigma2(r_N, end.xhat, dof=spec.sigma2_source == "forward-dof")
        gram = r_N.gram()
        rec = recover_prior(replace(end, sigma2_hat=s2), gram, warn=False)
        # The marginal point estimate does not depend on the prior; its MSE
        # is built here rather than through Prior, whose Cholesky check can
        # reject a clipped recovery with a huge eigenvalue spread.
        ls = least_squares(r_N)
        marg_mse = s2 * float(np.trace(np.linalg.inv(gram)) + np.trace(rec.pi))
        err = end.xhat - theta0
        var_term = s2 * float(np.trace(end.p_norm))
        out.append(MseReport(
            scenario=spec.scenario, replicate=index, N=N,
            prior_init=spec.prior_init.p0, prior_recovered=rec.pi,
            marg_estimate=ls.estimate, marg_mse=marg_mse,
            eb_estimate=end.xhat, eb_mse=float(err @ err) + var_term,
            sigma2_hat=s2, eb_var_term=var_term, clipped=rec.clipped,
        ))
    return out


def _replicate_job(args):
    spec, index, seed = args
    try:
        return index, _replicate_reports(spec, index, seed), None
    except (EbarxError, np.linalg.LinAlgError) as exc:
        return index, [], f"{type(exc).__name__}: {exc}"


def run_scenario(spec, workers=1):
    """Run all replicates of ``spec``.

    A replicate that raises is recorded in ``failures`` and left out of the
    reports. Results are ordered by replicate index whatever ``workers`` is.
    """
    jobs = [(spec, i, s) for i, s in enumerate(replicate_seeds(spec.base_seed, spec.replicates))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_replicate_job(j) for j in jobs]
    results.sort(key=lambda item: item[0])
    reports, failures = [], []
    for index, reps, err in results:
        reports.extend(reps)
        if err is not None:
            failures.append((index, err))
    return ScenarioResult(spec, reports, failures)


def _median_iqr(values):
    q1, med, q3 = np.percentile(values, [25, 50, 75], axis=0)
    return med, q3 - q1


def aggregate_reports(reports, theta0):
    """Medians and interquartile ranges over replicates for one ``N``.

    ``eb_mse_avg`` is the replicate-averaged reading of the Empirical Bayes
    MSE: squared error of the mean estimate plus the mean variance term.
    """
    arr = lambda name: np.array([getattr(r, name) for r in reports])
    agg = {"scenario": reports[0].scenario, "N": reports[0].N, "replicates": len(reports),
           "prior_init": reports[0].prior_init}
    for name in ("prior_recovered", "marg_estimate", "marg_mse", "eb_estimate", "eb_mse",
                 "sigma2_hat"):
        agg[name + "_median"], agg[name + "_iqr"] = _median_iqr(arr(name))
    mean_err = arr("eb_estimate").mean(axis=0) - theta0
    agg["eb_mse_avg"] = float(mean_err @ mean_err) + float(arr("eb_var_term").mean())
    agg["clipped_fraction"] = float(arr("clipped").mean())
    return agg


@dataclass(frozen=True)
class CurveTable:
    """Rows ``(pi, bias2, var_eb, var_m, mse_eb, mse_m)`` and crossing intervals."""

    rows: np.ndarray
    crossings: list

    columns = ("pi", "bias2", "var_eb", "var_m", "mse_eb", "mse_m")


def mse_curves(theta0, gram, mu, sigma2, pi_grid):
    """Theoretical MSE of both estimators along ``pi * I``.

    ``crossings`` lists adjacent grid pairs ``(pi_a, pi_b)`` across which
    ``mse_m - mse_eb`` changes sign.
    """
    gram = np.asarray(gram, dtype=float)
    p = gram.shape[0]
    np.linalg.cholesky(gram)
    delta0 = np.asarray(mu, dtype=float) - np.asarray(theta0, dtype=float)
    gram_inv_tr = float(np.trace(np.linalg.inv(gram)))
    rows = []
    for pi in np.asarray(pi_grid, dtype=float):
        shrink = np.linalg.solve(np.eye(p) + pi * gram, np.eye(p))
        bias = shrink @ delta0
        b2 = float(bias @ bias)
        var_eb = sigma2 * pi * float(np.trace(shrink))
        var_m = sigma2 * (gram_inv_tr + p * pi)
        rows.append((pi, b2, var_eb, var_m, b2 + var_eb, var_m))
    rows = np.array(rows)
    diff = np.sign(rows[:, 5] - rows[:, 4])
    crossings = [(rows[i, 0], rows[i + 1, 0]) for i in range(len(rows) - 1)
                 if diff[i] != diff[i + 1]]
    return CurveTable(rows, crossings)


def coefficient_names(n, m=0):
    return [f"a{i + 1}" for i in range(n)] + [f"b{i + 1}" for i in range(m)]


def _upper(p):
    return [(i, j) for i in range(p) for j in range(i, p)]


def report_header(p):
    tri = _upper(p)
    names = coefficient_names(p)
    return (["scenario", "replicate", "N"]
            + [f"p0_init_{i + 1}{j + 1}" for i, j in tri]
            + [f"p0_hat_{i + 1}{j + 1}" for i, j in tri]
            + [f"marg_{c}" for c in names] + ["marg_mse"]
            + [f"eb_{c}" for c in names] + ["eb_mse"])


def write_reports_csv(reports, path, p=2):
    tri = _upper(p)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report_header(p))
        for r in reports:
            w.writerow([r.scenario, str(r.replicate), str(r.N)]
                       + [_fmt.num(r.prior_init[i, j]) for i, j in tri]
                       + [_fmt.num(r.prior_recovered[i, j]) for i, j in tri]
                       + [_fmt.num(v) for v in r.marg_estimate] + [_fmt.num(r.marg_mse)]
                       + [_fmt.num(v) for v in r.eb_estimate] + [_fmt.num(r.eb_mse)])


def aggregate_header(p):
    tri = _upper(p)
    names = coefficient_names(p)
    cols = ["scenario", "N", "replicates"] + [f"p0_init_{i + 1}{j + 1}" for i, j in tri]
    stats = ([f"p0_hat_{i + 1}{j + 1}" for i, j in tri] + [f"marg_{c}" for c in names]
             + ["marg_mse"] + [f"eb_{c}" for c in names] + ["eb_mse", "sigma2_hat"])
    for s in stats:
        cols += [f"{s}_median", f"{s}_iqr"]
    return cols + ["eb_mse_avg", "clipped_fraction"]


def _agg_values(agg, p):
    tri = _upper(p)
    vals = [agg["scenario"], str(agg["N"]), str(agg["replicates"])]
    vals += [_fmt.num(agg["prior_init"][i, j]) for i, j in tri]
    pairs = [(agg["prior_recovered_median"][i, j], agg["prior_recovered_iqr"][i, j]) for i, j in tri]
    pairs += list(zip(agg["marg_estimate_median"], agg["marg_estimate_iqr"]))
    pairs += [(agg["marg_mse_median"], agg["marg_mse_iqr"])]
    pairs += list(zip(agg["eb_estimate_median"], agg["eb_estimate_iqr"]))
    pairs += [(agg["eb_mse_median"], agg["eb_mse_iqr"]),
              (agg["sigma2_hat_median"], agg["sigma2_hat_iqr"])]
    for med, iqr in pairs:
        vals += [_fmt.num(med), _fmt.num(iqr)]
    return vals + [_fmt.num(agg["eb_mse_avg"]), _fmt.num(agg["clipped_fraction"])]


def write_aggregate_csv(aggregates, path, p=2):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(aggregate_header(p))
        for agg in aggregates:
            w.writerow(_agg_values(agg, p))


def write_curves_csv(table, path, columns=None):
    columns = columns or table.columns
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in table.rows if hasattr(table, "rows") else table:
            w.writerow([_fmt.num(v) for v in row])


def _mat(m):
    return "[" + "; ".join(" ".join(f"{v:.5f}" for v in row) for row in m) + "]"


def _vec(v):
    return "[" + " ".join(f"{x:.5f}" for x in v) + "]"


def format_table(aggregates):
    """Human-readable table of medians, one row per (prior, N), rounded to 5 decimals."""
    head = ["Initial P0", "P0hat(N)", "N", "Marg. estimates", "Marg. MSE",
            "Emp. Bayes estimates", "Emp. Bayes MSE"]
    rows = []
    for agg in aggregates:
        rows.append([_mat(agg["prior_init"]), _mat(agg["prior_recovered_median"]), str(agg["N"]),
                     _vec(agg["marg_estimate_median"]), f"{agg['marg_mse_median']:.5f}",
                     _vec(agg["eb_estimate_median"]), f"{agg['eb_mse_median']:.5f}"])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(head)]
    line = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    out = [line(head), "-+-".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out)


__all__ = [
    "ScenarioSpec", "MseReport", "ScenarioResult", "CurveTable", "run_scenario", "mse_curves",
    "example51_curves", "aggregate_reports", "write_reports_csv", "write_aggregate_csv",
    "write_curves_csv", "format_table", "replicate_seeds",
]

"""Acceptance criteria; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

import time

import numpy as np

from ebarx.cli import main
from ebarx.estimators import Prior, example51_curves, marginal_estimate
from ebarx.experiments import ScenarioSpec, run_scenario
from ebarx.filters import FilterState, recover_prior, run_backward, run_forward
from ebarx.model import ParamWalkSpec, RegressorSet, build_regressors, simulate_fixed

from conftest import AR2, batch_posterior, random_spd

REPLICATES = 200
BASE_SEED = 20240601

# published single-run (marginal MSE, EB MSE) for the fixed and lambda = 0.01 runs
REFERENCE = {
    (0.0, 0.01): {50: (0.03674, 0.90160), 100: (0.04079, 0.46583), 200: (0.03201, 0.23242)},
    (0.0, 0.08): {50: (1.12862, 0.15418), 100: (1.22632, 0.07475), 200: (1.00381, 0.03051)},
    (0.01, 0.01): {50: (0.03319, 0.74723), 100: (0.04286, 0.38233), 200: (0.03106, 0.22698)},
    (0.01, 0.08): {50: (0.82156, 0.09042), 100: (1.37825, 0.06532), 200: (0.85930, 0.02890)},
}


def verdict(k, ok, detail):
    print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def relerr(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def datasets():
    return [simulate_fixed(AR2, 200, seed=1000 + s) for s in range(50)]


_results = {}


def scenario(lam, pi):
    key = (lam, pi)
    if key not in _results:
        model = AR2 if lam == 0 else ParamWalkSpec(lam=lam)
        spec = ScenarioSpec(f"lam{lam}_pi{pi}", model, Prior.isotropic(2, pi),
                            replicates=REPLICATES, base_seed=BASE_SEED)
        t0 = time.perf_counter()
        _results[key] = (run_scenario(spec), time.perf_counter() - t0)
    return _results[key]


def medians(res, N):
    return np.median(res.column("marg_mse", N)), np.median(res.column("eb_mse", N))


def test_criterion_1_forward_filter_batch():
    t0 = time.perf_counter()
    worst = 0.0
    prior = Prior.isotropic(2, 0.08)
    for d in datasets():
        r = build_regressors(d, 2)
        fin = run_forward(r, prior).final
        x, P = batch_posterior(r.phi, r.y, prior.mu, prior.pi)
        worst = max(worst, relerr(fin.xhat, x), relerr(fin.p_norm, P))
    dt = time.perf_counter() - t0
    verdict(1, worst < 1e-8 and dt < 5, f"max rel err {worst:.2e}, {dt:.2f} s")


def test_criterion_2_backward_filter_batch():
    t0 = time.perf_counter()
    worst = 0.0
    mean, P0 = np.zeros(2), 1e3 * np.eye(2)
    for d in datasets():
        r = build_regressors(d, 2, 0, "backward")
        fin = run_backward(r, mean, P0).final
        x, P = batch_posterior(r.phi, r.y, mean, P0)
        worst = max(worst, relerr(fin.xhat, x), relerr(fin.p_norm, P))
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-8 and dt < 5, f"max rel err {worst:.2e}, {dt:.2f} s")


def test_criterion_3_marginal_variance_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 5))
        N = int(rng.integers(p + 1, 41))
        phi = rng.standard_normal((N, p))
        r = RegressorSet(phi, rng.standard_normal(N), "forward", np.arange(1, N + 1))
        prior = Prior(np.zeros(p), float(rng.uniform(0.2, 3.0)), random_spd(rng, p, 0.5))
        R = np.eye(N) + phi @ prior.pi @ phi.T
        n_space = prior.sigma2 * np.linalg.inv(phi.T @ np.linalg.solve(R, phi))
        worst = max(worst, relerr(marginal_estimate(r, prior).variance, n_space))
    dt = time.perf_counter() - t0
    verdict(3, worst < 1e-8 and dt < 10, f"max rel Frobenius err {worst:.2e}, {dt:.2f} s")


def test_criterion_4_prior_recovery_identity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        p = int(rng.integers(1, 5))
        N = 60
        phi = rng.standard_normal((N, p))
        r = RegressorSet(phi, rng.standard_normal(N), "forward", np.arange(1, N + 1))
        pi = random_spd(rng, p, rng.uniform(0.01, 1.0))
        sigma2 = float(rng.uniform(0.5, 2.0))
        fin = run_forward(r, Prior(np.zeros(p), sigma2, pi)).final
        state = FilterState(fin.t, fin.xhat, fin.p_norm, "forward", sigma2_hat=sigma2)
        rec = recover_prior(state, r.gram(), filter_sigma2=sigma2)
        worst = max(worst, relerr(rec.pi_inv, np.linalg.inv(pi)))
    verdict(4, worst < 1e-6, f"max rel err {worst:.2e}")


def test_criterion_5_fixed_parameter_table():
    failures, in_band, cells, elapsed = [], 0, [], 0.0
    for pi in (0.01, 0.08):
        res, dt = scenario(0.0, pi)
        elapsed += dt
        for N in (50, 100, 200):
            marg, eb = medians(res, N)
            ok = marg < eb if pi == 0.01 else eb < marg
            if not ok:
                failures.append(f"pi={pi} N={N}: marg {marg:.4g} eb {eb:.4g}")
    for lam in (0.0, 0.01):
        for pi in (0.01, 0.08):
            res, dt = scenario(lam, pi)
            if lam:
                elapsed += dt
            for N, (ref_marg, ref_eb) in REFERENCE[(lam, pi)].items():
                ok = True
                for name, ref in (("marg_mse", ref_marg), ("eb_mse", ref_eb)):
                    lo, hi = np.percentile(res.column(name, N), [5, 95])
                    ok &= lo <= ref <= hi
                in_band += ok
                if not ok:
                    cells.append(f"lam={lam} pi={pi} N={N}")
    ok = not failures and in_band >= 10 and elapsed < 120
    detail = (f"orderings {'hold' if not failures else 'broken: ' + '; '.join(failures)}; "
              f"{in_band}/12 cells in the 5-95% band"
              + (f" (outside: {', '.join(cells)})" if cells else "") + f"; {elapsed:.1f} s")
    verdict(5, ok, detail)


def test_criterion_6_varying_parameters():
    problems, elapsed = [], 0.0
    for lam in (0.0, 0.01, 0.02):
        for pi in (0.01, 0.08):
            res, dt = scenario(lam, pi)
            elapsed += dt if lam else 0.0
            ebs = []
            for N in (50, 100, 200):
                marg, eb = medians(res, N)
                ebs.append(eb)
                if lam and not (marg < eb if pi == 0.01 else eb < marg):
                    problems.append(f"order lam={lam} pi={pi} N={N}: {marg:.4g} vs {eb:.4g}")
            if not (ebs[2] < ebs[1] < ebs[0]):
                problems.append(f"EB not decreasing lam={lam} pi={pi}: {np.round(ebs, 4)}")
    ok = not problems and elapsed < 240
    verdict(6, ok, ("all orderings and EB monotonicity hold" if not problems
                    else "; ".join(problems)) + f"; {elapsed:.1f} s")


def test_criterion_7_example51_limits():
    theta0, D = 0.9, 100.0
    lo, hi = example51_curves(theta0, D, [1e-9, 1e9])
    checks = [bool(c) for c in (abs(lo[1] - theta0 ** 2) < 1e-6,
              abs(lo[2] - 1 / D) < 1e-6,
              abs(hi[1] - 1 / D) < 1e-3 / D,
              hi[2] > 1e8)]
    verdict(7, all(checks), f"checks {checks}")


def test_criterion_8_riccati_and_forgetting():
    d = simulate_fixed(AR2, 5000, seed=8)
    r = build_regressors(d, 2)
    ta = run_forward(r, Prior.isotropic(2, 0.01))
    tb = run_forward(r, Prior.isotropic(2, 0.08))
    traces = np.array([np.trace(s.p_norm) for s in ta.states + tb.states[1:]])
    monotone = all(np.all(np.diff([np.trace(s.p_norm) for s in t.states]) <= 0)
                   for t in (ta, tb))
    fwd_gap = np.linalg.norm(ta.final.p_norm - tb.final.p_norm)
    db = simulate_fixed(AR2, 500, seed=9)
    rb = build_regressors(db, 2, 0, "backward")
    xa = run_backward(rb, np.zeros(2), 1e3 * np.eye(2)).final.xhat
    xb = run_backward(rb, np.zeros(2), np.eye(2)).final.xhat
    bwd_gap = np.max(np.abs(xa - xb))
    ok = monotone and fwd_gap < 1e-3 and bwd_gap < 1e-3 and traces.min() > 0
    verdict(8, ok, f"trace P non-increasing: {monotone}; ||P_a - P_b|| = {fwd_gap:.2e}; "
                   f"max |xbar_a(1) - xbar_b(1)| = {bwd_gap:.2e}")


def test_criterion_9_compare_determinism(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[compare]\nseed = 42\nreplicates = 5\nlambdas = 0,0.02\nquiet = true\n")
    codes = [main(["compare", "--config", str(cfg), "--out", str(tmp_path / d)])
             for d in ("a", "b")]
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in files)
    capsys.readouterr()
    with capsys.disabled():
        verdict(9, codes == [0, 0] and same and len(files) == 4,
                f"exit codes {codes}; {len(files)} CSVs byte-identical: {same}")

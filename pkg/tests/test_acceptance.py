"""Acceptance criteria 1-11 at their stated tolerances.

Each test appends one PASS/FAIL line to the run summary (see conftest.py)
and prints it. Experiment-scale criteria (4-10) take a few minutes in total
on one core.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import ACCEPTANCE_LINES
from hyfc.config import parse_config
from hyfc.dynamics import KSParams, estimate_lyapunov, generate_trajectory, ks_step
from hyfc.evaluation import (
    ForecastTask,
    run_fresh_trials,
    score_hybrid,
    score_reservoir,
    summarize,
    summarize_groups,
    train_samples_for,
)
from hyfc.experiment import derive_seed, run_sweep
from hyfc.hybrid import HybridConfig, load_hybrid_artifact, save_hybrid_artifact, train_hybrid
from hyfc.knowledge import KnowledgeModel
from hyfc.reservoir import (
    ReservoirConfig,
    build_adjacency,
    fit_readout,
    load_artifact,
    save_artifact,
    spectral_radius,
    train_reservoir,
)

HERE = Path(__file__).parent


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------------------
# shared experiment runs


@pytest.fixture(scope="module")
def lorenz_sweep(tmp_path_factory):
    """Lorenz defaults, D_r in {50, 100, 200, 500}, eps = 0.05, 32 x 20 trials."""
    c = parse_config(overrides={"D_r": [50, 100, 200, 500], "epsilon": [0.05], "seed": 0}, env={})
    res = run_sweep(c, tmp_path_factory.mktemp("lorenz_sweep"))
    assert res.ok
    return summarize_groups(res.trials)


@pytest.fixture(scope="module")
def ks_sweep(tmp_path_factory):
    """KS defaults, D_r = 500, eps in {0.1, 1}, 8 realizations x 20 intervals."""
    c = parse_config(overrides={"system": "ks", "D_r": [500], "epsilon": [0.1, 1.0],
                                "realizations": 8, "seed": 0}, env={})
    res = run_sweep(c, tmp_path_factory.mktemp("ks_sweep"))
    assert res.ok
    return summarize_groups(res.trials)


# ---------------------------------------------------------------------------


def test_criterion_01_readout_matches_dense_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(50):
        F = int(rng.integers(2, 201))
        n = F + int(rng.integers(10, 300))
        M = int(rng.integers(1, 6))
        X = rng.standard_normal((n, F)) * rng.uniform(0.1, 3.0)
        Y = rng.standard_normal((n, M))
        beta = float(10 ** rng.uniform(-8, 0))
        W = fit_readout(X, Y, beta).W_out
        oracle = np.linalg.solve(X.T @ X + beta * np.eye(F), X.T @ Y).T
        worst = max(worst, np.max(np.abs(W - oracle)) / np.max(np.abs(oracle)))
    assert report(1, worst <= 1e-8, f"max relative deviation {worst:.2e} over 50 instances (tol 1e-8)")


def test_criterion_02_spectral_radius():
    rng = np.random.default_rng(7)
    worst_build = 0.0
    for D_r, seed in [(50, 0), (100, 1), (200, 2), (500, 3), (500, 4), (1000, 5), (2000, 6)]:
        for rho in (0.4, 1.2):
            A = build_adjacency(D_r, 3.0, rho, seed)
            dense = np.max(np.abs(np.linalg.eigvals(A.toarray())))
            worst_build = max(worst_build, abs(dense - rho))
    worst_pi = 0.0
    for i in range(50):
        A = rng.standard_normal((50, 50)) * (rng.random((50, 50)) < rng.uniform(0.05, 1.0))
        dense = np.max(np.abs(np.linalg.eigvals(A)))
        worst_pi = max(worst_pi, abs(spectral_radius(sp.csr_matrix(A), seed=i) - dense))
    ok = worst_build <= 1e-6 and worst_pi <= 1e-6
    assert report(2, ok, f"built |lambda_max - rho| <= {worst_build:.1e}; power iteration vs dense "
                         f"<= {worst_pi:.1e} on 50 instances (tol 1e-6)")


def test_criterion_03_ks_integrator():
    p = KSParams()
    y = generate_trajectory("ks", 0.25, seed=3).samples[0] + 0.3
    worst = 0.0
    for _ in range(10_000):
        nxt = ks_step(y, p, 0.25)
        worst = max(worst, abs(nxt.mean() - y.mean()))
        y = nxt
    k = 2 * np.pi / p.L
    y0 = 1e-6 * np.cos(k * p.grid)
    amp = 2 * np.abs(np.fft.rfft(ks_step(y0, p, 0.25))[1]) / p.Q
    expect = np.exp((k**2 - k**4) * 0.25)
    rel = abs(amp / 1e-6 - expect) / expect
    ok = worst <= 1e-9 and rel <= 1e-3
    assert report(3, ok, f"mean drift per step <= {worst:.1e} over 1e4 steps (tol 1e-9); "
                         f"single-mode growth rel err {rel:.1e} (tol 1e-3)")


def test_criterion_04_ks_lyapunov():
    lam = estimate_lyapunov("ks", 2000.0, seed=0)
    assert report(4, abs(lam - 0.07) <= 0.02, f"KS lambda_max = {lam:.4f} (target 0.07 +- 0.02)")


def test_criterion_05_lorenz_headline(lorenz_sweep):
    s = lorenz_sweep
    h500 = s[("hybrid", 500, 0.05)]
    k = s[("knowledge", 0, 0.05)].median
    lines, order_ok = [], True
    for d in (50, 100, 200, 500):
        h, r = s[("hybrid", d, 0.05)].median, s[("reservoir", d, 0.0)].median
        order_ok &= h > r and h > k
        lines.append(f"D_r={d}: H {h:.2f} R {r:.2f}")
    ok = h500.median >= 8 and h500.count == 640 and order_ok
    assert report(5, ok, f"hybrid D_r=500 median {h500.median:.2f} over {h500.count} trials (>= 8); "
                         f"K {k:.2f}; " + "; ".join(lines))


def test_criterion_06_small_hybrid_vs_large_reservoir(lorenz_sweep):
    h50 = lorenz_sweep[("hybrid", 50, 0.05)].median
    r500 = lorenz_sweep[("reservoir", 500, 0.0)].median
    assert report(6, h50 >= 0.75 * r500,
                  f"hybrid D_r=50 {h50:.2f} >= 0.75 x reservoir D_r=500 ({0.75 * r500:.2f})")


def test_criterion_07_epsilon_robustness(tmp_path):
    eps = [0.05, 0.1, 0.2, 0.4, 1.0]
    c = parse_config(overrides={"D_r": [50], "epsilon": eps, "seed": 0}, env={})
    res = run_sweep(c, tmp_path, plots=True)
    s = summarize_groups(res.trials)
    r = s[("reservoir", 50, 0.0)].median
    hs = [s[("hybrid", 50, e)].median for e in eps]
    ks = [s[("knowledge", 0, e)].median for e in eps]
    dominates = all(h >= max(r, k) for h, k in zip(hs, ks))
    monotone = all(a >= b for a, b in zip(ks, ks[1:]))
    detail = ", ".join(f"eps={e:g}: H {h:.2f} K {k:.3f}" for e, h, k in zip(eps, hs, ks))
    assert report(7, dominates and monotone, f"R(D_r=50) {r:.2f}; {detail}")


def test_criterion_08_ks_headline(ks_sweep, tmp_path):
    s = ks_sweep
    h = s[("hybrid", 500, 0.1)]
    k, r = s[("knowledge", 0, 0.1)].median, s[("reservoir", 500, 0.0)].median
    ok = h.median >= 2.5 and k <= 1.5 and r <= 1.5 and h.count >= 160
    # desk-scale-optional larger reservoir: ordering only
    c = parse_config(overrides={"system": "ks", "D_r": [2000], "epsilon": [0.1], "realizations": 4,
                                "seed": 0, "methods": ["reservoir", "hybrid"]}, env={})
    big = summarize_groups(run_sweep(c, tmp_path, plots=False).trials)
    hb, rb = big[("hybrid", 2000, 0.1)].median, big[("reservoir", 2000, 0.0)].median
    ok_big = hb >= max(rb, k)
    assert report(8, ok and ok_big,
                  f"D_r=500 eps=0.1: hybrid {h.median:.2f} (>= 2.5, n={h.count}), knowledge {k:.2f}, "
                  f"reservoir {r:.2f} (each <= 1.5); D_r=2000 ordering: hybrid {hb:.2f} >= "
                  f"max(R {rb:.2f}, K {k:.2f})")


def test_criterion_09_ks_nonviable_model(ks_sweep):
    h = ks_sweep[("hybrid", 500, 1.0)].median
    k = ks_sweep[("knowledge", 0, 1.0)].median
    ok = h >= 2 * k and h >= 1 and k < 0.5
    assert report(9, ok, f"eps=1: hybrid {h:.2f} (>= 1 and >= 2 x K), knowledge {k:.3f} (< 0.5)")


def test_criterion_10_training_reusability(tmp_path):
    c = parse_config(overrides={"seed": 0}, env={})
    task = ForecastTask.generate("lorenz", c.eval_config(), train_samples_for(c.reservoir_config(500)), 0)
    model = KnowledgeModel("lorenz", 0.05)
    seeds = [derive_seed(0, "reuse", 500, 0.05, i) for i in range(4)]
    lam = task.eval.lambda_max
    parts, ok = [], True
    for method in ("reservoir", "hybrid"):
        rc = c.reservoir_config(500)
        fresh = summarize(run_fresh_trials(task, method, seeds, reservoir=rc, model=model)).median
        stored = {10.0: [], 0.0: []}
        for i, seed in enumerate(seeds):
            path = tmp_path / f"{method}_{i}.npz"
            cfg = rc.replace(seed=seed)
            if method == "reservoir":
                save_artifact(path, *train_reservoir(cfg, task.training))
            else:
                hc = HybridConfig(cfg, 0.5, model)
                save_hybrid_artifact(path, *train_hybrid(hc, task.training), hc)
            for xi in stored:
                if method == "reservoir":
                    _, net, w = load_artifact(path)
                    tv, _ = score_reservoir(task, net, w, xi)
                else:
                    hc2, net, w = load_hybrid_artifact(path)
                    tv, _ = score_hybrid(task, net, w, hc2.model, xi)
                stored[xi].extend(tv * lam)
        m10, m0 = np.median(stored[10.0]), np.median(stored[0.0])
        rel = abs(m10 - fresh) / fresh
        ok &= rel <= 0.2 and m0 < m10
        parts.append(f"{method}: fresh {fresh:.2f}, stored+xi=10 {m10:.2f} ({rel:.0%} off, tol 20%), "
                     f"xi=0 {m0:.2f}")
    assert report(10, ok, "; ".join(parts))


def test_criterion_11_property_suite_fast():
    start = time.time()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(HERE / "test_properties.py")], capture_output=True, text=True,
                          cwd=HERE.parent)
    elapsed = time.time() - start
    ok = proc.returncode == 0 and elapsed < 60
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert report(11, ok, f"property suite: {last} in {elapsed:.1f} s (< 60 s)")

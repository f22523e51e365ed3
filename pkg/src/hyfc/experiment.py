"""Sweep orchestration over {method} x {D_r} x {epsilon}.

Seed scheme: the true run uses the master seed; every (method, D_r,
epsilon, realization) job gets ``derive_seed`` of those values, a blake2b
hash, so any cell can be rerun on its own and reproduce its rows exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import IntegrationBlowupError, get_system
from .evaluation import (
    ForecastTask,
    TrialResult,
    run_realization,
    summarize_groups,
    train_samples_for,
    valid_time,
    write_summary_csv,
    write_trials_csv,
)
from .hybrid import HybridConfig, iter_hybrid, resynchronize_hybrid, train_hybrid
from .knowledge import KnowledgeModel, k_step
from .reservoir import iter_closed_loop, resynchronize, train_reservoir

log = logging.getLogger(__name__)


def derive_seed(master: int, method: str, D_r: int, epsilon: float, realization: int) -> int:
    """Stable 63-bit seed: blake2b over ``master|method|D_r|repr(epsilon)|realization``."""
    key = f"{int(master)}|{method}|{int(D_r)}|{float(epsilon)!r}|{int(realization)}"
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def sweep_cells(config: ExperimentConfig) -> list[tuple[str, int, float]]:
    """(method, D_r, epsilon) cells; D_r is 0 for the model alone, epsilon 0 for the reservoir alone."""
    cells = []
    for method in config.methods:
        if method == "knowledge":
            cells += [(method, 0, float(e)) for e in config.epsilon]
        elif method == "reservoir":
            cells += [(method, int(d), 0.0) for d in config.D_r]
        else:
            cells += [(method, int(d), float(e)) for d in config.D_r for e in config.epsilon]
    return cells


def make_task(config: ExperimentConfig) -> ForecastTask:
    n_train = train_samples_for(config.reservoir_config(max(config.D_r)))
    return ForecastTask.generate(config.system, config.eval_config(), n_train, config.seed)


# per-process state for pool workers
_WORKER: dict = {}


def _init_worker(config: ExperimentConfig, task: ForecastTask):
    _WORKER["config"], _WORKER["task"] = config, task


@dataclass(frozen=True)
class Job:
    method: str
    D_r: int
    epsilon: float
    realization: int
    seed: int


def _run_job(job: Job) -> tuple[Job, list[TrialResult], str | None]:
    config, task = _WORKER["config"], _WORKER["task"]
    try:
        rows = run_realization(task, job.method, job.seed,
                               reservoir=config.reservoir_config(job.D_r) if job.D_r else None,
                               model=KnowledgeModel(config.system, job.epsilon),
                               gamma=config.gamma)
        return job, rows, None
    except Exception as exc:  # recorded in the manifest, the sweep carries on
        return job, [], f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def make_jobs(config: ExperimentConfig) -> list[Job]:
    jobs = []
    for method, D_r, eps in sweep_cells(config):
        # the model alone is deterministic: one pass over the intervals
        n = 1 if method == "knowledge" else config.realizations
        jobs += [Job(method, D_r, eps, i, derive_seed(config.seed, method, D_r, eps, i))
                 for i in range(n)]
    return jobs


@dataclass
class SweepResult:
    trials: list[TrialResult]
    failures: list[dict] = field(default_factory=list)
    empty_cells: list[tuple[str, int, float]] = field(default_factory=list)
    out: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.empty_cells


def run_jobs(config: ExperimentConfig, task: ForecastTask, jobs: list[Job]):
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_init_worker,
                                 initargs=(config, task)) as pool:
            return list(pool.map(_run_job, jobs))
    _init_worker(config, task)
    return [_run_job(j) for j in jobs]


def _sort_key(r: TrialResult):
    return (r.method, r.D_r, r.epsilon, r.realization_seed, r.interval_index)


def run_sweep(config: ExperimentConfig, out: str | Path | None = None, plots: bool = True
              ) -> SweepResult:
    """Run every sweep cell and write trials.csv, summary.csv, plots and manifest.json."""
    out = Path(out if out is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    task = make_task(config)
    jobs = make_jobs(config)
    log.info("sweep: %d jobs over %d cells, %d worker(s)", len(jobs), len(sweep_cells(config)),
             config.jobs)

    trials, failures = [], []
    for job, rows, err in run_jobs(config, task, jobs):
        trials.extend(rows)
        if err is not None:
            log.warning("job %s failed: %s", job, err.splitlines()[0])
            failures.append({"method": job.method, "D_r": job.D_r, "epsilon": job.epsilon,
                             "realization": job.realization, "seed": job.seed, "error": err})
    trials.sort(key=_sort_key)
    have = {(r.method, r.D_r, r.epsilon) for r in trials}
    empty = [c for c in sweep_cells(config) if c not in have]

    write_trials_csv(trials, out / "trials.csv")
    summaries = summarize_groups(trials)
    write_summary_csv(summaries, out / "summary.csv")
    figures = []
    if plots and summaries:
        figures = write_figures(config, task, summaries, out)
    write_manifest(out / "manifest.json", config, started, failures, empty, figures, len(trials))
    return SweepResult(trials, failures, empty, out)


def write_manifest(path, config, started, failures, empty, figures, n_trials):
    import matplotlib
    import scipy
    import sklearn

    manifest = {
        "config": config.to_dict(),
        "versions": {"hyfc": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "scikit-learn": sklearn.__version__, "matplotlib": matplotlib.__version__},
        "seed_scheme": "blake2b(master|method|D_r|repr(epsilon)|realization), 8 bytes little-endian >> 1",
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_clock_s": round(time.time() - started, 3),
        "n_trials": n_trials,
        "failures": failures,
        "empty_cells": [list(c) for c in empty],
        "figures": figures,
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


# --------------------------------------------------------------------------
# Representative trials, computed with the sample-by-sample API


def _collect(gen, n, M):
    out = np.full((n, M), np.nan)
    try:
        for i in range(n):
            out[i] = next(gen)
    except IntegrationBlowupError:
        pass
    return out


def _knowledge_iter(model, u):
    while True:
        u = k_step(model, u)
        yield u


def trace_prediction(task: ForecastTask, method: str, seed: int, config: ExperimentConfig,
                     D_r: int, epsilon: float, interval: int = 0) -> np.ndarray:
    """Full-window prediction for one trial; NaN rows after a model blowup."""
    t0 = int(task.starts[interval])
    n = task.steps(task.eval.tau)
    M = task.truth.dim
    model = KnowledgeModel(config.system, epsilon)
    recent = task.truth.samples[t0 - task.steps(config.xi) + 1: t0 + 1]
    if method == "knowledge":
        gen = _knowledge_iter(model, task.truth.samples[t0])
    elif method == "reservoir":
        net, w = train_reservoir(config.reservoir_config(D_r, seed), task.training)
        gen = iter_closed_loop(resynchronize(net, recent), w)
    elif method == "hybrid":
        hc = HybridConfig(config.reservoir_config(D_r, seed), config.gamma, model)
        net, w = train_hybrid(hc, task.training)
        gen = iter_hybrid(resynchronize_hybrid(net, model, recent), model, w)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _collect(gen, n, M)


def representative_cells(config: ExperimentConfig) -> list[tuple[str, int, float]]:
    """One cell per method: largest D_r, first epsilon."""
    D_r, eps = max(config.D_r), float(config.epsilon[0])
    picks = {"knowledge": ("knowledge", 0, eps), "reservoir": ("reservoir", D_r, 0.0),
             "hybrid": ("hybrid", D_r, eps)}
    return [picks[m] for m in config.methods]


def write_figures(config: ExperimentConfig, task: ForecastTask, summaries, out: Path) -> list[str]:
    from . import plotting

    figures = []
    lam = task.eval.lambda_max
    sizes = sorted({d for (m, d, e) in summaries if m != "knowledge"})
    for eps in sorted(set(float(e) for e in config.epsilon)):
        if sizes:
            name = f"valid_time_vs_Dr_eps{eps:g}.svg"
            plotting.plot_valid_time_vs_reservoir_size(summaries, eps, out / name)
            figures.append(name)
    for D_r in sorted(config.D_r):
        if "hybrid" in config.methods or "knowledge" in config.methods:
            name = f"valid_time_vs_epsilon_Dr{D_r}.svg"
            plotting.plot_valid_time_vs_epsilon(summaries, D_r, out / name)
            figures.append(name)

    # representative trial: realization 0, interval 0
    errors, preds, tvs = {}, {}, {}
    n = task.steps(task.eval.tau)
    window = task.windows()[0]
    for method, D_r, eps in representative_cells(config):
        seed = derive_seed(config.seed, method, D_r, eps, 0)
        pred = trace_prediction(task, method, seed, config, D_r, eps)
        E = np.linalg.norm(window - pred, axis=-1) / task.denom
        errors[method], preds[method] = E, pred
        tvs[method] = valid_time(E, task.eval.f, task.dt)[0] * lam
    horizon = min(n, max(10, int(np.ceil(2.0 * max(tvs.values()) / (lam * task.dt)))))
    lyap_t = (np.arange(1, n + 1) * task.dt * lam)[:horizon]

    with open(out / "error_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lyapunov_time"] + [f"E_{m}" for m in errors])
        for i in range(horizon):
            w.writerow([repr((i + 1) * task.dt), repr(float(lyap_t[i]))]
                       + [repr(float(errors[m][i])) for m in errors])
    plotting.plot_error_curves(lyap_t, {m: e[:horizon] for m, e in errors.items()}, task.eval.f,
                               tvs, out / "error_curves.svg")
    figures.append("error_curves.svg")

    if config.system == "ks":
        truth = window[:horizon]
        diffs = {m: p[:horizon] - truth for m, p in preds.items()}
        grid = get_system("ks").params.grid
        np.savetxt(out / "spacetime_truth.csv", truth, delimiter=",", fmt="%.10g")
        for m, d in diffs.items():
            np.savetxt(out / f"spacetime_error_{m}.csv", d, delimiter=",", fmt="%.10g")
        plotting.plot_spacetime_errors(lyap_t, grid, truth, diffs, tvs, out / "spacetime_errors.svg")
        figures.append("spacetime_errors.svg")
    return figures


def check_trace_consistency(task, method, seed, config, D_r, epsilon, interval=0) -> float:
    """Valid time of one trial recomputed with the unbatched API (used by tests)."""
    pred = trace_prediction(task, method, seed, config, D_r, epsilon, interval)
    E = np.linalg.norm(task.windows()[interval] - pred, axis=-1) / task.denom
    return valid_time(E, task.eval.f, task.dt)[0]

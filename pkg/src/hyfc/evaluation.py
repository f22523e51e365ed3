"""Error metric, valid time and the multi-interval, multi-realization trial protocol."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .dynamics import IntegrationBlowupError, Trajectory, generate_trajectory, get_system
from .hybrid import HybridConfig, hybrid_features, train_hybrid
from .knowledge import KnowledgeModel, k_step
from .reservoir import ReservoirConfig, _update, quadratic_features, train_reservoir

METHODS = ("knowledge", "reservoir", "hybrid")


@dataclass(frozen=True)
class EvalConfig:
    f: float = 0.4
    tau: float = 250.0
    intervals: int = 20
    realizations: int = 32
    lambda_max: float = 1.0
    xi: float = 10.0
    gap: float = 10.0

    def __post_init__(self):
        if not 0 < self.f < 1:
            raise ValueError(f"f must be in (0, 1), got {self.f}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.intervals < 1 or self.realizations < 1:
            raise ValueError("intervals and realizations must be >= 1")

    @property
    def block(self) -> float:
        return self.tau + self.xi + self.gap


@dataclass(frozen=True)
class TrialResult:
    method: str
    D_r: int
    epsilon: float
    realization_seed: int
    interval_index: int
    t_v: float
    t_v_lyapunov: float
    censored: bool


@dataclass(frozen=True)
class TrialSummary:
    median: float
    q1: float
    q3: float
    count: int
    n_censored: int = 0


def normalized_error(u_true, u_pred, denom: float) -> np.ndarray | float:
    """``||u_true - u_pred|| / denom`` along the last axis."""
    u_true = np.asarray(u_true, dtype=float)
    u_pred = np.asarray(u_pred, dtype=float)
    if u_true.shape != u_pred.shape:
        raise ValueError(f"shape mismatch: {u_true.shape} vs {u_pred.shape}")
    if not denom > 0:
        raise ValueError(f"denominator must be positive, got {denom}")
    e = np.linalg.norm(u_true - u_pred, axis=-1) / denom
    return float(e) if e.ndim == 0 else e


def rms_norm(samples) -> float:
    """``<||u||^2>^(1/2)`` over the rows of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    return float(np.sqrt(np.mean(np.sum(samples**2, axis=-1))))


def valid_time(E_series, f: float, dt: float) -> tuple[float, bool]:
    """Time until the error first exceeds ``f``.

    Entry ``i`` of ``E_series`` (0-based) is the error at ``(i + 1) * dt``.
    If it never exceeds ``f`` the whole duration is returned, censored.
    """
    E = np.asarray(E_series, dtype=float)
    if E.size == 0:
        raise ValueError("error series is empty")
    over = np.flatnonzero(~(E <= f))  # NaN counts as exceeding
    if over.size == 0:
        return float(E.size * dt), True
    return float((over[0] + 1) * dt), False


def summarize(results: Iterable[TrialResult] | Sequence[float], lambda_max: float | None = None
              ) -> TrialSummary:
    """Median and linear-interpolation quartiles of the valid times in Lyapunov units.

    ``results`` may be trial records (their ``t_v`` is rescaled by
    ``lambda_max`` when given, else ``t_v_lyapunov`` is used) or raw valid times.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to summarize")
    if isinstance(results[0], TrialResult):
        if lambda_max is None:
            vals = np.array([r.t_v_lyapunov for r in results])
        else:
            vals = np.array([r.t_v for r in results]) * lambda_max
        n_cens = sum(r.censored for r in results)
    else:
        vals = np.asarray(results, dtype=float) * (1.0 if lambda_max is None else lambda_max)
        n_cens = 0
    q1, med, q3 = np.percentile(np.sort(vals), [25, 50, 75])
    return TrialSummary(float(med), float(q1), float(q3), len(vals), int(n_cens))


def summarize_groups(results: Iterable[TrialResult]) -> dict[tuple[str, int, float], TrialSummary]:
    groups: dict[tuple[str, int, float], list[TrialResult]] = {}
    for r in results:
        groups.setdefault((r.method, r.D_r, r.epsilon), []).append(r)
    return {key: summarize(groups[key]) for key in sorted(groups)}


# --------------------------------------------------------------------------
# Task layout


@dataclass
class ForecastTask:
    """A long true run split into a training segment and disjoint test intervals.

    Samples ``0 .. train_end`` are training data (``t = 0`` at
    ``train_end``). Interval ``k`` occupies the block starting at
    ``k * (tau + xi + gap)``: its resync window is the first ``xi`` of the
    block and prediction starts at block start + ``xi``.
    """

    truth: Trajectory
    train_end: int
    eval: EvalConfig

    def __post_init__(self):
        need = self.train_end + self.steps(self.eval.block) * self.eval.intervals + 1
        if len(self.truth) < need:
            raise ValueError(f"truth has {len(self.truth)} samples, protocol needs {need}")
        self._denom = rms_norm(self.truth.samples[: self.train_end + 1])

    @property
    def dt(self) -> float:
        return self.truth.dt

    def steps(self, duration: float) -> int:
        return int(round(duration / self.dt))

    @property
    def training(self) -> Trajectory:
        return self.truth.segment(0, self.train_end + 1)

    @property
    def denom(self) -> float:
        return self._denom

    @property
    def starts(self) -> np.ndarray:
        """Sample index of each prediction start ``t0``."""
        k = np.arange(self.eval.intervals)
        return self.train_end + k * self.steps(self.eval.block) + self.steps(self.eval.xi)

    def windows(self) -> np.ndarray:
        """True states to be predicted, shape ``(intervals, tau/dt, M)``."""
        n = self.steps(self.eval.tau)
        return np.stack([self.truth.samples[s + 1: s + 1 + n] for s in self.starts])

    def resync_segments(self, xi: float) -> np.ndarray:
        """The ``xi / dt`` samples ending at each ``t0``, shape ``(n, intervals, M)``."""
        n = self.steps(xi)
        return np.stack([self.truth.samples[s - n + 1: s + 1] for s in self.starts], axis=1)

    @classmethod
    def generate(cls, system: str, eval_config: EvalConfig, train_samples: int, seed: int = 0
                 ) -> "ForecastTask":
        """Generate a fresh true run long enough for ``train_samples`` plus all intervals."""
        sys_ = get_system(system)
        n_block = int(round(eval_config.block / sys_.dt))
        train_end = train_samples - 1
        n = train_end + n_block * eval_config.intervals + 1
        truth = generate_trajectory(sys_, (n - 1) * sys_.dt, sys_.dt, 0.0, seed)
        return cls(truth, train_end, eval_config)


def train_samples_for(config: ReservoirConfig) -> int:
    """Samples needed by one training run: washout + T/dt regression rows + 1."""
    return config.washout_steps + config.train_steps + 1


# --------------------------------------------------------------------------
# Scoring


def _race(emit, advance, windows, denom, f, dt):
    """Run batched forecasts until every member's error exceeds ``f``.

    ``emit(idx)`` returns the next prediction for members ``idx``;
    ``advance(idx, pred)`` feeds the accepted predictions back.
    """
    B, n, _ = windows.shape
    first_bad = np.full(B, n, dtype=int)
    censored = np.ones(B, dtype=bool)
    active = np.arange(B)
    for j in range(n):
        pred = emit(active)
        e = np.linalg.norm(windows[active, j] - pred, axis=-1) / denom
        bad = ~(e <= f)
        first_bad[active[bad]] = j + 1
        censored[active[bad]] = False
        active = active[~bad]
        if active.size == 0:
            break
        if j + 1 < n:
            advance(active, pred[~bad])
    return first_bad * dt, censored


def _safe_k(model, U):
    try:
        return k_step(model, U)
    except IntegrationBlowupError:
        out = np.empty_like(U)
        for i, u in enumerate(U):
            try:
                out[i] = k_step(model, u)
            except IntegrationBlowupError:
                out[i] = np.nan
        return out


def score_knowledge(task: ForecastTask, model: KnowledgeModel):
    windows = task.windows()
    state = task.truth.samples[task.starts].copy()

    def emit(idx):
        return _safe_k(model, state[idx])

    def advance(idx, pred):
        state[idx] = pred

    return _race(emit, advance, windows, task.denom, task.eval.f, task.dt)


def score_reservoir(task: ForecastTask, net, readout, xi: float):
    """Resync a copy of the trained net to every interval, then race the predictions."""
    windows = task.windows()
    B = windows.shape[0]
    R = np.tile(net.r, (B, 1))
    if xi > 0:
        for u in task.resync_segments(xi):
            R = _update(net.A, net.W_in, R, u)

    def emit(idx):
        return readout(quadratic_features(R[idx]))

    def advance(idx, pred):
        R[idx] = _update(net.A, net.W_in, R[idx], pred)

    return _race(emit, advance, windows, task.denom, task.eval.f, task.dt)


def score_hybrid(task: ForecastTask, net, readout, model: KnowledgeModel, xi: float):
    windows = task.windows()
    B = windows.shape[0]
    R = np.tile(net.r, (B, 1))
    K = np.tile(net.k_last, (B, 1))
    if xi > 0:
        for u in task.resync_segments(xi):
            K = k_step(model, u)
            R = _update(net.A, net.W_in, R, np.concatenate([K, u], axis=1))

    def emit(idx):
        return readout(hybrid_features(K[idx], R[idx]))

    def advance(idx, pred):
        k = _safe_k(model, pred)
        R[idx] = _update(net.A, net.W_in, R[idx], np.concatenate([k, pred], axis=1))
        K[idx] = k

    return _race(emit, advance, windows, task.denom, task.eval.f, task.dt)


def _records(method, D_r, epsilon, seed, tv, censored, lam):
    return [TrialResult(method, int(D_r), float(epsilon), int(seed), i, float(t), float(t * lam), bool(c))
            for i, (t, c) in enumerate(zip(tv, censored))]


def run_realization(task: ForecastTask, method: str, seed: int, *,
                    reservoir: ReservoirConfig | None = None, model: KnowledgeModel | None = None,
                    gamma: float = 0.5, resync_xi: float | None = None) -> list[TrialResult]:
    """Train once with ``seed`` and score every interval of ``task``."""
    lam = task.eval.lambda_max
    if method == "knowledge":
        tv, cens = score_knowledge(task, model)
        return _records(method, 0, model.epsilon, seed, tv, cens, lam)
    cfg = reservoir.replace(seed=seed)
    xi = cfg.xi if resync_xi is None else resync_xi
    if method == "reservoir":
        net, readout = train_reservoir(cfg, task.training)
        tv, cens = score_reservoir(task, net, readout, xi)
        return _records(method, cfg.D_r, 0.0, seed, tv, cens, lam)
    if method == "hybrid":
        hc = HybridConfig(cfg, gamma, model)
        net, readout = train_hybrid(hc, task.training)
        tv, cens = score_hybrid(task, net, readout, model, xi)
        return _records(method, cfg.D_r, model.epsilon, seed, tv, cens, lam)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def run_trials(task: ForecastTask, method: str, seeds: Sequence[int] | None = None, **kwargs
               ) -> list[TrialResult]:
    """Full protocol for one method.

    Reservoir and hybrid methods train one readout per realization seed and
    reuse it on all intervals; the knowledge method runs once per interval.
    """
    if method == "knowledge":
        return run_realization(task, method, 0, **kwargs)
    if seeds is None:
        seeds = range(task.eval.realizations)
    out = []
    for s in seeds:
        out.extend(run_realization(task, method, s, **kwargs))
    return out


def run_fresh_trials(task: ForecastTask, method: str, seeds: Sequence[int], *,
                     reservoir: ReservoirConfig, model: KnowledgeModel | None = None,
                     gamma: float = 0.5) -> list[TrialResult]:
    """Retrain on the data immediately preceding every interval (no training reuse)."""
    n_train = train_samples_for(reservoir)
    lam = task.eval.lambda_max
    out = []
    for seed in seeds:
        for i, t0 in enumerate(task.starts):
            if t0 - n_train + 1 < 0:
                raise ValueError("not enough data before interval start for fresh training")
            # training ends at t0 itself, so no resync window or gap is needed
            sub_eval = EvalConfig(**{**asdict(task.eval), "intervals": 1, "xi": 0.0, "gap": 0.0})
            sub = ForecastTask(task.truth.segment(t0 - n_train + 1), n_train - 1, sub_eval)
            sub._denom = task.denom
            rec = run_realization(sub, method, seed, reservoir=reservoir, model=model,
                                  gamma=gamma, resync_xi=0.0)[0]
            out.append(TrialResult(rec.method, rec.D_r, rec.epsilon, rec.realization_seed, i,
                                   rec.t_v, rec.t_v * lam, rec.censored))
    return out


# --------------------------------------------------------------------------
# CSV persistence

TRIAL_COLUMNS = [f.name for f in fields(TrialResult)]
SUMMARY_COLUMNS = ["method", "D_r", "epsilon", "count", "median", "q1", "q3", "n_censored"]


def write_trials_csv(results: Iterable[TrialResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for r in results:
            w.writerow([r.method, r.D_r, repr(r.epsilon), r.realization_seed, r.interval_index,
                        repr(r.t_v), repr(r.t_v_lyapunov), int(r.censored)])


def read_trials_csv(path) -> list[TrialResult]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TrialResult(row["method"], int(row["D_r"]), float(row["epsilon"]),
                        int(row["realization_seed"]), int(row["interval_index"]), float(row["t_v"]),
                        float(row["t_v_lyapunov"]), bool(int(row["censored"])))
            for row in rows]


def write_summary_csv(summaries: dict[tuple[str, int, float], TrialSummary], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for (method, D_r, eps), s in summaries.items():
            w.writerow([method, D_r, repr(eps), s.count, repr(s.median), repr(s.q1), repr(s.q3),
                        s.n_censored])


def lyapunov_units(t, lambda_max: float) -> float:
    return t * lambda_max if math.isfinite(t) else t

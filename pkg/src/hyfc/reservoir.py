"""Echo-state reservoir: construction, open-loop drive, ridge readout, closed-loop prediction.

Reservoir states may carry a leading batch axis, ``r.shape == (B, D_r)``,
so several prediction intervals can be advanced through one network at once.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .dynamics import Trajectory

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1


class SpectralRadiusError(RuntimeError):
    """Power iteration failed to converge; ``estimate`` holds the last value."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ReservoirConfig:
    D_r: int = 500
    rho: float = 0.4
    avg_degree: float = 3.0
    sigma: float = 0.15
    dt: float = 0.1
    T: float = 100.0
    beta: float = 1e-6
    xi: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.D_r < 1:
            raise ValueError(f"D_r must be >= 1, got {self.D_r}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0 < self.avg_degree <= self.D_r:
            raise ValueError(f"avg_degree must be in (0, D_r], got {self.avg_degree}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")

    @property
    def washout_steps(self) -> int:
        return int(round(self.xi / self.dt))

    @property
    def train_steps(self) -> int:
        return int(round(self.T / self.dt))

    def replace(self, **changes) -> "ReservoirConfig":
        return ReservoirConfig(**{**asdict(self), **changes})


@dataclass
class ReservoirNet:
    A: sp.csr_matrix
    W_in: sp.csr_matrix
    r: np.ndarray
    config: ReservoirConfig | None = None
    # hybrid nets remember the last model output K[u] to feed the readout
    k_last: np.ndarray | None = None

    @property
    def D_r(self) -> int:
        return self.A.shape[0]

    def copy(self) -> "ReservoirNet":
        return ReservoirNet(self.A, self.W_in, self.r.copy(), self.config,
                            None if self.k_last is None else self.k_last.copy())


@dataclass
class ReadoutWeights:
    W_out: np.ndarray

    def __post_init__(self):
        self.W_out = np.asarray(self.W_out, dtype=float)
        if not np.all(np.isfinite(self.W_out)):
            raise ValueError("readout weights contain non-finite entries")

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return features @ self.W_out.T


# --------------------------------------------------------------------------
# Construction


def spectral_radius(A, tol: float = 1e-8, max_iter: int = 10_000, block: int = 8,
                    seed: int = 0) -> float:
    """Largest eigenvalue magnitude by block power iteration.

    A small orthogonal block is iterated and the dominant Ritz value of the
    projected matrix is tracked, which handles complex-conjugate dominant
    pairs. Converged once the Ritz residual falls below ``tol * |theta|``.
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    n = A.shape[0]
    k = min(block, n)
    rng = np.random.default_rng(seed)
    Qb, _ = np.linalg.qr(rng.standard_normal((n, k)))
    est = np.nan
    for _ in range(max_iter):
        Z = A @ Qb
        w, S = np.linalg.eig(Qb.T @ Z)
        i = int(np.argmax(np.abs(w)))
        theta = w[i]
        est = float(abs(theta))
        y = Qb @ S[:, i]
        resid = np.linalg.norm(Z @ S[:, i] - theta * y) / np.linalg.norm(y)
        if resid <= tol * est or not np.any(Z):
            return est if np.any(Z) else 0.0
        Qb, _ = np.linalg.qr(Z)
    raise SpectralRadiusError(f"power iteration did not converge in {max_iter} iterations", est)


def _child_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


def scale_to_spectral_radius(A, rho: float, seed: int = 0) -> sp.csr_matrix:
    """Rescale ``A`` globally so its spectral radius is ``rho``."""
    A = sp.csr_matrix(A, dtype=float)
    radius = spectral_radius(A, seed=seed) if A.nnz else 0.0
    if radius <= 1e-12:
        raise ValueError("matrix has zero spectral radius and cannot be rescaled")
    return (A * (rho / radius)).tocsr()


def build_adjacency(D_r: int, avg_degree: float, rho: float, seed: int) -> sp.csr_matrix:
    """Erdos-Renyi digraph with U[-1, 1] weights, rescaled to spectral radius ``rho``."""
    p = avg_degree / D_r
    attempt = 0
    while True:
        rng = _child_rng(seed, 1000 + attempt)
        # independent Bernoulli(p) entries == Binomial(D_r^2, p) distinct positions
        nnz = rng.binomial(D_r * D_r, p)
        flat = np.sort(rng.choice(D_r * D_r, size=nnz, replace=False))
        rows, cols = np.divmod(flat, D_r)
        vals = rng.uniform(-1.0, 1.0, nnz)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(D_r, D_r))
        try:
            return scale_to_spectral_radius(A, rho, seed)
        except ValueError:
            pass
        logger.warning("adjacency draw %d for seed %d has zero spectral radius; redrawing",
                       attempt, seed)
        attempt += 1


def build_input_weights(D_r: int, M: int, sigma: float, seed: int) -> sp.csr_matrix:
    """One nonzero per row, in a uniformly chosen column, drawn from U[-sigma, sigma]."""
    rng = _child_rng(seed, 2)
    cols = rng.integers(0, M, D_r)
    vals = rng.uniform(-sigma, sigma, D_r)
    return sp.csr_matrix((vals, (np.arange(D_r), cols)), shape=(D_r, M))


def build_net(config: ReservoirConfig, M: int) -> ReservoirNet:
    A = build_adjacency(config.D_r, config.avg_degree, config.rho, config.seed)
    W_in = build_input_weights(config.D_r, M, config.sigma, config.seed)
    return ReservoirNet(A, W_in, np.zeros(config.D_r), config)


# --------------------------------------------------------------------------
# Dynamics


def _update(A, W_in, r, inp):
    # works for r of shape (D_r,) and (B, D_r)
    return np.tanh((A @ r.T).T + (W_in @ inp.T).T)


def drive(net: ReservoirNet, u) -> ReservoirNet:
    """One open-loop step ``r <- tanh(A r + W_in u)``; updates ``net`` in place."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != net.W_in.shape[1]:
        raise ValueError(f"input has {u.shape[-1]} components, W_in expects {net.W_in.shape[1]}")
    net.r = _update(net.A, net.W_in, net.r, u)
    return net


def quadratic_features(r) -> np.ndarray:
    """Square every second component (the even ones in 1-based numbering)."""
    out = np.array(r, dtype=float, copy=True)
    out[..., 1::2] **= 2
    return out


def _drive_sequence(net: ReservoirNet, inputs: np.ndarray, record_from: int = 0) -> np.ndarray:
    """Drive through ``inputs`` row by row; return states after each step from ``record_from`` on."""
    proj = (net.W_in @ inputs.T).T
    A = net.A
    r = net.r
    states = np.empty((max(len(inputs) - record_from, 0), net.D_r))
    for t in range(len(inputs)):
        r = np.tanh(A @ r + proj[t])
        if t >= record_from:
            states[t - record_from] = r
    net.r = r
    return states


def fit_readout(features, targets, beta: float) -> ReadoutWeights:
    """Ridge solution ``W_out = Y^T X (X^T X + beta I)^-1``.

    Uses a Cholesky factorization of the regularized Gram matrix; with
    ``beta == 0`` a rank-deficient design raises :class:`RankDeficiencyError`.
    """
    X = np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"features {X.shape} and targets {Y.shape} must be 2-D with equal rows")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    G = X.T @ X
    G[np.diag_indices_from(G)] += beta
    rhs = X.T @ Y
    try:
        c, low = scipy.linalg.cho_factor(G, check_finite=True)
        W = scipy.linalg.cho_solve((c, low), rhs)
    except np.linalg.LinAlgError:
        if beta == 0:
            raise RankDeficiencyError(
                "normal equations are singular with beta=0; use beta > 0") from None
        # numerically indefinite Gram matrix: fall back to least squares on the augmented system
        Xa = np.vstack([X, np.sqrt(beta) * np.eye(X.shape[1])])
        Ya = np.vstack([Y, np.zeros((X.shape[1], Y.shape[1]))])
        W = scipy.linalg.lstsq(Xa, Ya)[0]
    if beta == 0 and np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError("normal equations are singular with beta=0; use beta > 0")
    return ReadoutWeights(W.T)


def _as_samples(data) -> np.ndarray:
    return data.samples if isinstance(data, Trajectory) else np.atleast_2d(np.asarray(data, float))


def train_reservoir(config: ReservoirConfig, training) -> tuple[ReservoirNet, ReadoutWeights]:
    """Drive from ``r = 0`` through the training series and fit the readout.

    The first ``xi / dt`` driven steps are washout and are not regressed.
    The returned net is synchronized to predict the sample following the
    last training sample.
    """
    U = _as_samples(training)
    wash = config.washout_steps
    if len(U) < wash + 2:
        raise ValueError(f"training series has {len(U)} samples; need more than washout {wash} + 1")
    net = build_net(config, U.shape[1])
    states = _drive_sequence(net, U, record_from=wash)
    # state after input u(t) is r(t+dt), regressed against u(t+dt)
    readout = fit_readout(quadratic_features(states[:-1]), U[wash + 1:], config.beta)
    return net, readout


def iter_closed_loop(net: ReservoirNet, w: ReadoutWeights):
    """Yield successive autonomous predictions forever, advancing ``net`` in place."""
    while True:
        u = w(quadratic_features(net.r))
        yield u
        net.r = _update(net.A, net.W_in, net.r, u)


def predict_closed_loop(net: ReservoirNet, w: ReadoutWeights, steps: int,
                        t0: float = 0.0) -> Trajectory:
    """Autonomous prediction of ``steps`` samples after the current sync point."""
    M = w.W_out.shape[0]
    out = np.empty((steps, M))
    loop = iter_closed_loop(net, w)
    for i in range(steps):
        out[i] = next(loop)
    dt = net.config.dt if net.config is not None else 1.0
    return Trajectory(out.reshape(steps, M), dt, t0 + dt)


def resynchronize(net: ReservoirNet, recent) -> ReservoirNet:
    """Open-loop drive over ``recent`` without touching the readout.

    Afterwards the net is synchronized to predict the sample that follows
    the last one in ``recent``.
    """
    U = _as_samples(recent)
    if U.size and U.shape[-1] != net.W_in.shape[1]:
        raise ValueError(f"segment has {U.shape[-1]} components, net expects {net.W_in.shape[1]}")
    if net.config is not None and isinstance(recent, Trajectory) and not np.isclose(recent.dt, net.config.dt):
        raise ValueError(f"segment dt {recent.dt} differs from reservoir dt {net.config.dt}")
    _drive_sequence(net, U, record_from=len(U))
    return net


# --------------------------------------------------------------------------
# Artifacts


def _coo_block(m):
    m = m.tocoo()
    return np.stack([m.row, m.col]).astype(np.int64), m.data


def save_artifact(path, net: ReservoirNet, readout: ReadoutWeights, **extra_header) -> None:
    """Write net + readout as a versioned ``.npz`` archive."""
    cfg = net.config or ReservoirConfig(D_r=net.D_r)
    header = {"format_version": ARTIFACT_VERSION, "kind": "reservoir", "D_r": net.D_r,
              "M": int(readout.W_out.shape[0]), "rho": cfg.rho, "sigma": cfg.sigma,
              "seed": cfg.seed, "config": asdict(cfg), **extra_header}
    a_idx, a_val = _coo_block(net.A)
    w_idx, w_val = _coo_block(net.W_in)
    arrays = dict(header=np.array(json.dumps(header)), W_out=readout.W_out,
                  A_index=a_idx, A_value=a_val, W_in_index=w_idx, W_in_value=w_val,
                  W_in_shape=np.array(net.W_in.shape), r=net.r)
    if net.k_last is not None:
        arrays["k_last"] = net.k_last
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_artifact(path) -> tuple[dict, ReservoirNet, ReadoutWeights]:
    with np.load(path, allow_pickle=False) as z:
        if "header" not in z.files:
            raise ValueError(f"{path}: not a model artifact (no header)")
        header = json.loads(str(z["header"]))
        if header.get("format_version") != ARTIFACT_VERSION:
            raise ValueError(f"{path}: artifact format version {header.get('format_version')} "
                             f"is not supported (expected {ARTIFACT_VERSION})")
        D_r = header["D_r"]
        A = sp.csr_matrix((z["A_value"], tuple(z["A_index"])), shape=(D_r, D_r))
        W_in = sp.csr_matrix((z["W_in_value"], tuple(z["W_in_index"])),
                             shape=tuple(z["W_in_shape"]))
        k_last = z["k_last"] if "k_last" in z.files else None
        net = ReservoirNet(A, W_in, z["r"].copy(), ReservoirConfig(**header["config"]), k_last)
        readout = ReadoutWeights(z["W_out"])
    return header, net, readout

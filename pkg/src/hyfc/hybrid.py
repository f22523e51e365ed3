"""Hybrid predictor: a reservoir fed by both the data and the knowledge model.

Input stacking order is ``[K[u]; u]`` everywhere; the readout acts on
``[K[u(t - dt)]; r*(t)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dynamics import Trajectory
from .knowledge import KnowledgeModel, k_step
from .reservoir import (
    ReadoutWeights,
    ReservoirConfig,
    ReservoirNet,
    _as_samples,
    _child_rng,
    _update,
    build_adjacency,
    fit_readout,
    load_artifact,
    quadratic_features,
    save_artifact,
)


@dataclass(frozen=True)
class HybridConfig:
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    gamma: float = 0.5
    model: KnowledgeModel = field(default_factory=KnowledgeModel)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


# Same container as the reservoir-only readout; W_out is M x (M + D_r).
HybridReadout = ReadoutWeights


def build_hybrid_input_weights(D_r: int, M: int, sigma: float, gamma: float,
                               seed: int) -> sp.csr_matrix:
    """``D_r x 2M`` coupling with exactly ``round(gamma D_r)`` rows on the raw-input block.

    Columns ``0..M-1`` carry the model output, ``M..2M-1`` the raw input.
    """
    rng = _child_rng(seed, 3)
    n_raw = int(round(gamma * D_r))
    raw_rows = rng.permutation(D_r)[:n_raw]
    cols = rng.integers(0, M, D_r)
    cols[raw_rows] += M
    vals = rng.uniform(-sigma, sigma, D_r)
    return sp.csr_matrix((vals, (np.arange(D_r), cols)), shape=(D_r, 2 * M))


def build_hybrid_net(config: HybridConfig, M: int) -> ReservoirNet:
    rc = config.reservoir
    A = build_adjacency(rc.D_r, rc.avg_degree, rc.rho, rc.seed)
    W_in = build_hybrid_input_weights(rc.D_r, M, rc.sigma, config.gamma, rc.seed)
    return ReservoirNet(A, W_in, np.zeros(rc.D_r), rc)


def hybrid_features(k_out, r) -> np.ndarray:
    return np.concatenate([k_out, quadratic_features(r)], axis=-1)


def drive_hybrid(net: ReservoirNet, model: KnowledgeModel, u) -> tuple[ReservoirNet, np.ndarray]:
    """Open-loop step with the stacked input ``[K[u]; u]``."""
    u = np.asarray(u, dtype=float)
    if 2 * u.shape[-1] != net.W_in.shape[1]:
        raise ValueError(f"input has {u.shape[-1]} components, W_in expects {net.W_in.shape[1] // 2}")
    k_out = k_step(model, u)
    net.r = _update(net.A, net.W_in, net.r, np.concatenate([k_out, u], axis=-1))
    net.k_last = k_out
    return net, k_out


def _drive_hybrid_sequence(net, model, U, record_from=0):
    KU = k_step(model, U)  # teacher forcing: K applied to recorded data only
    proj = (net.W_in @ np.concatenate([KU, U], axis=1).T).T
    A = net.A
    r = net.r
    states = np.empty((max(len(U) - record_from, 0), net.D_r))
    for t in range(len(U)):
        r = np.tanh(A @ r + proj[t])
        if t >= record_from:
            states[t - record_from] = r
    net.r = r
    if len(U):
        net.k_last = KU[-1]
    return KU, states


def train_hybrid(config: HybridConfig, training) -> tuple[ReservoirNet, HybridReadout]:
    """Teacher-forced drive over the training data, then ridge fit of the joint readout."""
    U = _as_samples(training)
    rc = config.reservoir
    wash = rc.washout_steps
    if len(U) < wash + 2:
        raise ValueError(f"training series has {len(U)} samples; need more than washout {wash} + 1")
    net = build_hybrid_net(config, U.shape[1])
    KU, states = _drive_hybrid_sequence(net, config.model, U, record_from=wash)
    # state after input u(t) is r(t+dt); pair it with K[u(t)] against target u(t+dt)
    X = hybrid_features(KU[wash:-1], states[:-1])
    readout = fit_readout(X, U[wash + 1:], rc.beta)
    return net, readout


def iter_hybrid(net: ReservoirNet, model: KnowledgeModel, w: HybridReadout):
    """Yield autonomous hybrid predictions forever, advancing ``net`` in place."""
    if net.k_last is None:
        raise ValueError("hybrid net is not synchronized (no previous model output)")
    while True:
        u = w(hybrid_features(net.k_last, net.r))
        yield u
        k = k_step(model, u)
        net.r = _update(net.A, net.W_in, net.r, np.concatenate([k, u], axis=-1))
        net.k_last = k


def predict_hybrid(net: ReservoirNet, model: KnowledgeModel, w: HybridReadout, steps: int,
                   t0: float = 0.0) -> Trajectory:
    M = w.W_out.shape[0]
    out = np.empty((steps, M))
    if steps:
        loop = iter_hybrid(net, model, w)
        for i in range(steps):
            out[i] = next(loop)
    dt = model.step_dt
    return Trajectory(out.reshape(steps, M), dt, t0 + dt, model.system, None, model.epsilon)


def resynchronize_hybrid(net: ReservoirNet, model: KnowledgeModel, recent) -> ReservoirNet:
    U = _as_samples(recent)
    if U.size and 2 * U.shape[-1] != net.W_in.shape[1]:
        raise ValueError(f"segment has {U.shape[-1]} components, net expects {net.W_in.shape[1] // 2}")
    if isinstance(recent, Trajectory) and not np.isclose(recent.dt, model.step_dt):
        raise ValueError(f"segment dt {recent.dt} differs from model dt {model.step_dt}")
    _drive_hybrid_sequence(net, model, U, record_from=len(U))
    return net


def save_hybrid_artifact(path, net: ReservoirNet, readout: HybridReadout, config: HybridConfig,
                         **extra_header):
    save_artifact(path, net, readout, kind="hybrid", gamma=config.gamma,
                  epsilon=config.model.epsilon, system=config.model.system, **extra_header)


def hybrid_config_from_header(header: dict, net: ReservoirNet) -> HybridConfig:
    model = KnowledgeModel(header["system"], header["epsilon"], net.config.dt)
    return HybridConfig(net.config, header["gamma"], model)


def load_hybrid_artifact(path) -> tuple[HybridConfig, ReservoirNet, HybridReadout]:
    header, net, readout = load_artifact(path)
    if header.get("kind") != "hybrid":
        raise ValueError(f"{path}: expected a hybrid artifact, found {header.get('kind')!r}")
    return hybrid_config_from_header(header, net), net, readout

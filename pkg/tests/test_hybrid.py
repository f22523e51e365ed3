import numpy as np
import pytest

from hyfc.hybrid import (
    HybridConfig,
    build_hybrid_input_weights,
    build_hybrid_net,
    drive_hybrid,
    hybrid_features,
    load_hybrid_artifact,
    predict_hybrid,
    resynchronize_hybrid,
    save_hybrid_artifact,
    train_hybrid,
)
from hyfc.knowledge import KnowledgeModel, k_step
from hyfc.reservoir import (
    ReservoirConfig,
    _drive_sequence,
    build_net,
    fit_readout,
    quadratic_features,
)


def test_gamma_partition():
    W = build_hybrid_input_weights(500, 3, 0.15, 0.5, 0)
    assert W.shape == (500, 6)
    assert np.all(np.diff(W.indptr) == 1)
    assert np.sum(W.indices >= 3) == 250 and np.sum(W.indices < 3) == 250
    assert np.all(np.abs(W.data) <= 0.15)


@pytest.mark.parametrize("gamma,raw", [(1.0, 101), (0.0, 0), (0.3, 30)])
def test_gamma_rounding(gamma, raw):
    W = build_hybrid_input_weights(101, 3, 0.15, gamma, 1)
    assert np.sum(W.indices >= 3) == round(gamma * 101)


def test_gamma_validation():
    with pytest.raises(ValueError):
        HybridConfig(gamma=1.5)


def test_drive_zero_and_stacking(lorenz_run):
    model = KnowledgeModel("lorenz", 0.05)
    net = build_hybrid_net(HybridConfig(ReservoirConfig(D_r=40), 0.5, model), 3)
    _, k = drive_hybrid(net, model, np.zeros(3))
    np.testing.assert_array_equal(net.r, 0)
    np.testing.assert_array_equal(k, 0)
    # instrumentation: input is [K[u]; u] in that order
    u = lorenz_run.samples[7]
    r0 = np.random.default_rng(0).uniform(-1, 1, 40)
    net.r = r0.copy()
    _, k = drive_hybrid(net, model, u)
    expect = np.tanh(net.A @ r0 + net.W_in @ np.concatenate([k_step(model, u), u]))
    np.testing.assert_allclose(net.r, expect, atol=1e-15)
    np.testing.assert_array_equal(k, k_step(model, u))
    assert np.all(np.abs(net.r) < 1)
    with pytest.raises(ValueError):
        drive_hybrid(net, model, np.zeros(4))


def test_gamma_one_ignores_model_at_input(lorenz_run):
    model = KnowledgeModel("lorenz", 0.05)
    net = build_hybrid_net(HybridConfig(ReservoirConfig(D_r=40), 1.0, model), 3)
    u = lorenz_run.samples[3]
    drive_hybrid(net, model, u)
    expect = np.tanh(net.W_in[:, 3:] @ u)
    np.testing.assert_allclose(net.r, expect, atol=1e-15)


def test_feature_layout():
    f = hybrid_features(np.array([1.0, 2.0, 3.0]), np.array([-0.5, -0.5]))
    np.testing.assert_allclose(f, [1, 2, 3, -0.5, 0.25])


def _hybrid_residual(config, U):
    net = build_hybrid_net(config, U.shape[1])
    KU = k_step(config.model, U)
    states = np.empty((len(U), config.reservoir.D_r))
    for i, u in enumerate(U):
        drive_hybrid(net, config.model, u)
        states[i] = net.r
    _, w = train_hybrid(config, U)
    wash = config.reservoir.washout_steps
    pred = w(hybrid_features(KU[wash:-1], states[wash:-1]))
    return np.sqrt(np.mean(np.sum((pred - U[wash + 1:]) ** 2, axis=1)))


def test_training_residual_small(lorenz_training):
    U = lorenz_training.samples
    rms = np.sqrt(np.mean(np.sum(U**2, axis=1)))
    cfg = HybridConfig(ReservoirConfig(D_r=500), 0.5, KnowledgeModel("lorenz", 0.05))
    assert _hybrid_residual(cfg, U) < 0.01 * rms
    _, w = train_hybrid(cfg, U)
    assert w.W_out.shape == (3, 503)


def test_perfect_model_beats_reservoir_in_sample(lorenz_training):
    from hyfc.reservoir import drive, train_reservoir
    U = lorenz_training.samples
    rc = ReservoirConfig(D_r=200, seed=4)
    net, w = train_reservoir(rc, U)
    fresh = build_net(rc, 3)
    states = np.array([drive(fresh, u).r.copy() for u in U])
    res_r = np.sqrt(np.mean(np.sum((w(quadratic_features(states[100:-1])) - U[101:]) ** 2, 1)))
    res_h = _hybrid_residual(HybridConfig(rc, 0.5, KnowledgeModel("lorenz", 0.0)), U)
    assert res_h <= res_r


def test_superset_features_do_not_raise_ridge_objective(lorenz_training):
    """Same states, zero-padded reservoir features vs [K; r*] with equal beta."""
    U = lorenz_training.samples
    model = KnowledgeModel("lorenz", 0.05)
    rc = ReservoirConfig(D_r=100, seed=1)
    net = build_net(rc, 3)
    states = _drive_sequence(net, U, record_from=100)
    R = quadratic_features(states[:-1])
    Y = U[101:]
    K = k_step(model, U)[100:-1]
    beta = rc.beta

    def objective(X):
        W = fit_readout(X, Y, beta).W_out
        return np.sum((X @ W.T - Y) ** 2) + beta * np.sum(W**2), np.sum((X @ W.T - Y) ** 2)

    padded = np.hstack([np.zeros_like(K), R])
    full = np.hstack([K, R])
    obj_r, res_r = objective(padded[:, 3:])
    obj_h, res_h = objective(full)
    assert obj_h <= obj_r + 1e-9
    assert res_h <= res_r + 1e-9


def test_determinism_and_prediction(lorenz_training):
    cfg = HybridConfig(ReservoirConfig(D_r=100, seed=2), 0.5, KnowledgeModel("lorenz", 0.05))
    n1, w1 = train_hybrid(cfg, lorenz_training)
    n2, w2 = train_hybrid(cfg, lorenz_training)
    np.testing.assert_array_equal(w1.W_out, w2.W_out)
    assert len(predict_hybrid(n1.copy(), cfg.model, w1, 0)) == 0
    a = predict_hybrid(n1, cfg.model, w1, 25).samples
    b = predict_hybrid(n2, cfg.model, w2, 25).samples
    np.testing.assert_array_equal(a, b)
    assert a.shape == (25, 3)


def test_prediction_uses_model_on_previous_output(lorenz_training):
    cfg = HybridConfig(ReservoirConfig(D_r=60, seed=2), 0.5, KnowledgeModel("lorenz", 0.05))
    net, w = train_hybrid(cfg, lorenz_training)
    ref = net.copy()
    out = predict_hybrid(net, cfg.model, w, 3).samples
    # first output uses K of the last training sample
    np.testing.assert_allclose(ref.k_last, k_step(cfg.model, lorenz_training.samples[-1]))
    r, k = ref.r, ref.k_last
    for i in range(3):
        u = w(hybrid_features(k, r))
        np.testing.assert_allclose(out[i], u, atol=1e-12)
        k = k_step(cfg.model, u)
        r = np.tanh(ref.A @ r + ref.W_in @ np.concatenate([k, u]))


def test_resync_and_artifact(tmp_path, lorenz_training, lorenz_run):
    cfg = HybridConfig(ReservoirConfig(D_r=80, seed=6), 0.5, KnowledgeModel("lorenz", 0.1))
    net, w = train_hybrid(cfg, lorenz_training)
    path = tmp_path / "h.npz"
    save_hybrid_artifact(path, net, w, cfg)
    cfg2, net2, w2 = load_hybrid_artifact(path)
    assert (cfg2.gamma, cfg2.reservoir) == (cfg.gamma, cfg.reservoir)
    m1, m2 = cfg.model, cfg2.model
    assert (m2.system, m2.epsilon, m2.step_dt) == (m1.system, m1.epsilon, m1.step_dt)
    seg = lorenz_run.segment(1500, 1600)
    resynchronize_hybrid(net, cfg.model, seg)
    resynchronize_hybrid(net2, cfg2.model, seg)
    np.testing.assert_array_equal(net.r, net2.r)
    np.testing.assert_array_equal(predict_hybrid(net, cfg.model, w, 20).samples,
                                  predict_hybrid(net2, cfg2.model, w2, 20).samples)
    with pytest.raises(ValueError):
        resynchronize_hybrid(net, cfg.model, np.zeros((3, 2)))
    from hyfc.reservoir import save_artifact
    save_artifact(tmp_path / "r.npz", net, w)
    with pytest.raises(ValueError, match="hybrid"):
        load_hybrid_artifact(tmp_path / "r.npz")


def test_unsynced_net_rejected():
    from hyfc.hybrid import iter_hybrid
    cfg = HybridConfig(ReservoirConfig(D_r=20), 0.5, KnowledgeModel("lorenz", 0.1))
    net = build_hybrid_net(cfg, 3)
    with pytest.raises(ValueError):
        next(iter_hybrid(net, cfg.model, None))

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import LinearKalmanFilter
from tractionmap import ukf


def linear_model(f_mat, h_mat):
    f_mat = np.asarray(f_mat, dtype=float)
    h_mat = np.asarray(h_mat, dtype=float)
    return ukf.NonlinearModel(
        state_dim=f_mat.shape[0], input_dim=1, output_dim=h_mat.shape[0],
        f=lambda x, u: x @ f_mat.T, h=lambda x: x @ h_mat.T)


def random_psd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T + 0.1 * np.eye(n))


# --- sigma points -----------------------------------------------------------

def test_sigma_points_scalar_reference():
    ss = ukf.sigma_points(np.zeros(1), np.eye(1),
                          ukf.UnscentedScaling(alpha=1.0, beta=0.0, kappa=0.0))
    assert ss.points[:, 0] == pytest.approx([0.0, 1.0, -1.0], abs=1e-14)
    assert ss.w_mean == pytest.approx([0.0, 0.5, 0.5], abs=1e-14)
    assert ss.w_cov == pytest.approx([0.0, 0.5, 0.5], abs=1e-14)


def test_sigma_points_weights_sum_to_one():
    rng = np.random.default_rng(3)
    ss = ukf.sigma_points(rng.normal(size=6), random_psd(rng, 6))
    assert ss.w_mean.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 8))
def test_sigma_points_reproduce_moments(seed, n):
    rng = np.random.default_rng(seed)
    mean = rng.normal(size=n)
    cov = random_psd(rng, n)
    ss = ukf.sigma_points(mean, cov)
    rebuilt_mean = ss.w_mean @ ss.points
    dev = ss.points - rebuilt_mean
    rebuilt_cov = (dev * ss.w_cov[:, None]).T @ dev
    assert np.allclose(rebuilt_mean, mean, atol=1e-10 * max(1, abs(mean).max()))
    scale = max(1.0, np.abs(cov).max())
    assert np.abs(rebuilt_cov - cov).max() < 1e-10 * scale


def test_sigma_points_failure_on_non_psd():
    bad = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ukf.DecompositionFailure):
        ukf.sigma_points(np.zeros(2), bad)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        ukf.NoiseSpec(q=np.eye(2), r=np.zeros((2, 2)))  # R not PD
    with pytest.raises(ValueError):
        ukf.NoiseSpec(q=np.array([[0.0, 1.0], [0.0, 0.0]]), r=np.eye(2))


# --- predict ----------------------------------------------------------------

def test_predict_matches_linear_propagation():
    rng = np.random.default_rng(5)
    f_mat = np.array([[1.0, 0.1, 0.0], [0.0, 0.95, 0.02], [0.0, 0.0, 0.9]])
    model = linear_model(f_mat, np.eye(3))
    noise = ukf.NoiseSpec(q=0.05 * np.eye(3), r=np.eye(3))
    mean = rng.normal(size=3)
    cov = random_psd(rng, 3)
    fs = ukf.FilterState.initial(mean, cov)
    out = ukf.predict(fs, model, None, noise)
    assert np.allclose(out.mean, f_mat @ mean, atol=1e-8)
    assert np.allclose(out.cov, f_mat @ cov @ f_mat.T + noise.q, atol=1e-8)


def test_predict_identity_no_noise():
    model = linear_model(np.eye(2), np.eye(2))
    noise = ukf.NoiseSpec(q=np.zeros((2, 2)), r=np.eye(2))
    fs = ukf.FilterState.initial(np.array([1.0, -2.0]), 0.5 * np.eye(2))
    out = ukf.predict(fs, model, None, noise)
    assert np.allclose(out.mean, fs.mean, atol=1e-12)
    assert np.allclose(out.cov, fs.cov, atol=1e-12)


def test_predict_identity_grows_by_scaled_q():
    model = linear_model(np.eye(2), np.eye(2))
    q = 0.3 * np.eye(2)
    noise = ukf.NoiseSpec(q=q, r=np.eye(2))
    fs = ukf.FilterState.initial(np.zeros(2), np.eye(2))
    fs = replace(fs, a_diag=np.array([2.0, 0.5]), phi=3.0)
    out = ukf.predict(fs, model, None, noise)
    expected = np.eye(2) + 3.0 * np.diag([2.0, 0.5]) @ q
    assert np.allclose(out.cov, expected, atol=1e-10)


# --- update -----------------------------------------------------------------

def test_update_requires_predicted_state():
    model = linear_model(np.eye(2), np.eye(2))
    noise = ukf.NoiseSpec(q=np.eye(2), r=np.eye(2))
    fs = ukf.FilterState.initial(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        ukf.update(fs, model, np.zeros(2), noise)


def test_update_matches_linear_kf_gain_and_posterior():
    rng = np.random.default_rng(11)
    f_mat = np.eye(3)
    h_mat = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    model = linear_model(f_mat, h_mat)
    q = 0.01 * np.eye(3)
    r = 0.2 * np.eye(2)
    noise = ukf.NoiseSpec(q=q, r=r)
    mean = rng.normal(size=3)
    cov = random_psd(rng, 3)
    y = rng.normal(size=2)

    oracle = LinearKalmanFilter(f_mat, h_mat, q, r, mean, cov)
    oracle.predict()
    oracle.update(y)

    fs = ukf.FilterState.initial(mean, cov)
    fs = ukf.predict(fs, linear_model(f_mat, h_mat), None, noise)
    fs = ukf.update(fs, model, y, noise)
    assert np.allclose(fs.mean, oracle.x, atol=1e-8)
    assert np.allclose(fs.cov, oracle.p, atol=1e-8)


def test_update_perfect_measurement_keeps_mean():
    model = linear_model(np.eye(2), np.eye(2))
    noise = ukf.NoiseSpec(q=0.01 * np.eye(2), r=0.1 * np.eye(2))
    fs = ukf.FilterState.initial(np.array([0.3, -1.2]), np.eye(2))
    fs = ukf.predict(fs, model, None, noise)
    before = fs.mean.copy()
    cov_before = fs.cov.copy()
    out = ukf.update(fs, model, before, noise)
    assert np.allclose(out.mean, before, atol=1e-12)
    # posterior covariance never exceeds the prior
    assert np.all(np.linalg.eigvalsh(cov_before - out.cov) > -1e-12)


def test_update_uninformative_measurement():
    model = linear_model(np.eye(2), np.eye(2))
    noise = ukf.NoiseSpec(q=0.01 * np.eye(2), r=1e12 * np.eye(2))
    fs = ukf.FilterState.initial(np.array([0.5, 2.0]), np.eye(2))
    fs = ukf.predict(fs, model, None, noise)
    before = fs.mean.copy()
    out = ukf.update(fs, model, np.array([100.0, -50.0]), noise)
    assert np.allclose(out.mean, before, atol=1e-6)


def test_update_pushes_residual_into_buffer():
    model = linear_model(np.eye(2), np.eye(2))
    noise = ukf.NoiseSpec(q=0.01 * np.eye(2), r=0.1 * np.eye(2))
    fs = ukf.FilterState.initial(np.zeros(2), np.eye(2))
    for k in range(40):
        fs = ukf.predict(fs, model, None, noise)
        fs = ukf.update(fs, model, np.array([1.0, -1.0]), noise,
                        residual_window=30)
    assert len(fs.residuals) == 30


# --- 100-step linear equivalence and covariance health ----------------------

def test_linear_kf_equivalence_over_100_steps():
    rng = np.random.default_rng(42)
    f_mat = np.array([[1.0, 0.1, 0.0, 0.0],
                      [0.0, 0.97, 0.0, 0.0],
                      [0.0, 0.0, 1.0, 0.1],
                      [0.0, 0.0, 0.0, 0.97]])
    h_mat = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    q = 0.01 * np.eye(4)
    r = 0.1 * np.eye(2)
    noise = ukf.NoiseSpec(q=q, r=r)
    model = linear_model(f_mat, h_mat)

    oracle = LinearKalmanFilter(f_mat, h_mat, q, r, np.zeros(4), np.eye(4))
    fs = ukf.FilterState.initial(np.zeros(4), np.eye(4))
    x = rng.normal(size=4)
    for _ in range(100):
        x = f_mat @ x + rng.multivariate_normal(np.zeros(4), q)
        y = h_mat @ x + rng.multivariate_normal(np.zeros(2), r)
        oracle.predict()
        oracle.update(y)
        fs = ukf.predict(fs, model, None, noise)
        fs = ukf.update(fs, model, y, noise)
        assert np.abs(fs.mean - oracle.x).max() < 1e-8
        assert np.abs(fs.cov - oracle.p).max() < 1e-8
        # symmetry is maintained exactly after each step
        assert np.abs(fs.cov - fs.cov.T).max() < 1e-9
        # informative measurement shrinks the total variance
        assert np.trace(fs.cov) <= np.trace(fs.pred_cov) + 1e-12


# --- adaptation -------------------------------------------------------------

def _mc_adaptation(q_true_scale, seed, steps=600):
    """Random-walk system observed directly; returns A history after warmup."""
    rng = np.random.default_rng(seed)
    q = np.diag([2e-3, 1e-3])
    r = np.diag([0.05, 0.08])
    model = ukf.NonlinearModel(state_dim=2, input_dim=1, output_dim=2,
                               f=lambda x, u: x.copy(), h=lambda x: x.copy())
    noise = ukf.NoiseSpec(q=q, r=r)
    fs = ukf.FilterState.initial(np.zeros(2), np.eye(2))
    x = np.zeros(2)
    q_true = q * q_true_scale
    history = []
    for k in range(steps):
        x = x + rng.multivariate_normal(np.zeros(2), q_true)
        y = x + rng.multivariate_normal(np.zeros(2), r)
        try:
            fs = replace(fs, a_diag=ukf.adapt_q(fs))
        except ukf.InsufficientSamples:
            pass
        fs = ukf.predict(fs, model, None, noise)
        fs = ukf.update(fs, model, y, noise)
        if k > 200:
            history.append(fs.a_diag.copy())
    return np.asarray(history)


def test_adapt_q_consistent_run_keeps_a_near_identity():
    for seed in (1, 2, 3):
        hist = _mc_adaptation(1.0, seed)
        mean_a = hist.mean(axis=0)
        assert np.all(mean_a > 0.5) and np.all(mean_a < 2.0)


def test_adapt_q_grows_under_process_noise_mismatch():
    for seed in (1, 2, 3):
        hist = _mc_adaptation(10.0, seed)
        assert np.all(hist.mean(axis=0) > 1.0)


def test_adapt_q_insufficient_samples():
    fs = ukf.FilterState.initial(np.zeros(2), np.eye(2))
    with pytest.raises(ukf.InsufficientSamples):
        ukf.adapt_q(fs)


def test_adapt_q_respects_clamp():
    rng = np.random.default_rng(0)
    model = linear_model(np.eye(1), np.eye(1))
    noise = ukf.NoiseSpec(q=np.eye(1) * 1e-8, r=np.eye(1) * 1e-4)
    fs = ukf.FilterState.initial(np.zeros(1), np.eye(1))
    cfg = ukf.AdaptationConfig(window=10)
    for _ in range(60):
        fs = ukf.predict(fs, model, None, noise)
        fs = ukf.update(fs, model, rng.normal(size=1) * 10, noise,
                        residual_window=cfg.window)
        try:
            fs = replace(fs, a_diag=ukf.adapt_q(fs, cfg))
        except ukf.InsufficientSamples:
            continue
        assert np.all(fs.a_diag >= cfg.a_min)
        assert np.all(fs.a_diag <= cfg.a_max)


# --- fuzzy supervisor -------------------------------------------------------

def test_fuzzy_factor_endpoints():
    sup = ukf.FuzzySupervisor()
    assert ukf.fuzzy_factor(0.0, sup) == pytest.approx(sup.phi_low)
    assert ukf.fuzzy_factor(1.0, sup) == pytest.approx(sup.phi_high)
    assert ukf.fuzzy_factor(7.5, sup) == pytest.approx(sup.phi_high)
    assert ukf.fuzzy_factor(0.5, sup) == pytest.approx(1.0)


def test_fuzzy_factor_rejects_negative_signal():
    with pytest.raises(ValueError):
        ukf.fuzzy_factor(-0.1)


@given(st.floats(0.0, 2.0))
def test_fuzzy_factor_within_bounds(signal):
    sup = ukf.FuzzySupervisor()
    phi = ukf.fuzzy_factor(signal, sup)
    assert sup.phi_low - 1e-12 <= phi <= sup.phi_high + 1e-12


def test_fuzzy_factor_monotone_on_grid():
    sup = ukf.FuzzySupervisor()
    values = [ukf.fuzzy_factor(x, sup) for x in np.linspace(0.0, 1.2, 121)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

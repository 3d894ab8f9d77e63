import numpy as np
import pytest

from teampsa import ekf
from teampsa.errors import ConditioningError
from teampsa.models import (
    AgentGeometry,
    LinearObservationModel,
    ObservationModel,
    TransitionModel,
    build_cv_transition,
)

from .conftest import random_spd

GEOM = AgentGeometry([[-10, 0], [-10, 30], [20, 0], [20, 30]])
OBS = ObservationModel(0.5, [0.0, 2.7, 0.0, 0.07])


def _identity_transition(n=4):
    return TransitionModel(A=np.eye(n), Q=np.zeros((n, n)), ts=1.0, q_x=0.0, q_y=0.0)


def test_predict_identity_dynamics():
    b = ekf.GaussianBelief(np.array([1.0, 2, 3, 4]), np.diag([1.0, 2, 3, 4]))
    p = ekf.predict(b, _identity_transition())
    np.testing.assert_array_equal(p.mean, b.mean)
    np.testing.assert_array_equal(p.cov, b.cov)


def test_predict_one_cv_step():
    b = ekf.GaussianBelief(np.array([0.0, 0, 0.2, 0.4]), np.eye(4))
    p = ekf.predict(b, build_cv_transition(1.0, 0.0, 0.0))
    np.testing.assert_allclose(p.mean, [0.2, 0.4, 0.2, 0.4])


def test_predict_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        A = rng.standard_normal((4, 4))
        Q = random_spd(rng, 4)
        P = random_spd(rng, 4)
        tm = TransitionModel(A=A, Q=Q, ts=1.0, q_x=0.0, q_y=0.0)
        p = ekf.predict(ekf.GaussianBelief(rng.standard_normal(4), P), tm)
        oracle = np.zeros((4, 4))
        for i in range(4):
            for j in range(4):
                oracle[i, j] = sum(A[i, k] * P[k, l] * A[j, l] for k in range(4) for l in range(4)) + Q[i, j]
        assert np.linalg.norm(p.cov - oracle) <= 1e-12 * max(1.0, np.linalg.norm(oracle))


def test_innovate_zero_innovation():
    b = ekf.GaussianBelief(np.array([3.0, 4.0, 0.1, 0.1]), np.eye(4))
    y = OBS.predict(GEOM, b.mean)
    e, S, J, y_hat = ekf.innovate(b, OBS, GEOM, y)
    np.testing.assert_array_equal(e, np.zeros(4))
    np.testing.assert_array_equal(y_hat, y)


def test_innovate_certain_state_gives_R():
    b = ekf.GaussianBelief(np.array([3.0, 4.0, 0.1, 0.1]), np.zeros((4, 4)))
    _, S, _, _ = ekf.innovate(b, OBS, GEOM, np.zeros(4))
    np.testing.assert_array_equal(S, OBS.R)


def test_innovate_matches_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        P = random_spd(rng, 4)
        m = np.concatenate([rng.uniform(-5, 15, 2), rng.standard_normal(2)])
        _, S, J, _ = ekf.innovate(ekf.GaussianBelief(m, P), OBS, GEOM, np.zeros(4))
        oracle = np.einsum("ik,kl,jl->ij", J, P, J) + OBS.R
        assert np.linalg.norm(S - oracle) <= 1e-12 * max(1.0, np.linalg.norm(oracle))


def test_update_zero_innovation_keeps_mean():
    rng = np.random.default_rng(2)
    P = random_spd(rng, 4)
    b = ekf.GaussianBelief(np.array([3.0, 4.0, 0.1, 0.1]), P)
    e, S, J, _ = ekf.innovate(b, OBS, GEOM, OBS.predict(GEOM, b.mean))
    upd, K = ekf.update(b, e, S, J)
    np.testing.assert_array_equal(upd.mean, b.mean)
    np.testing.assert_allclose(upd.cov, ekf.symmetrize(P - K @ S @ K.T), atol=1e-14)


def test_update_scalar_textbook():
    b = ekf.GaussianBelief(np.array([0.0]), np.array([[1.0]]))
    S = np.array([[2.0]])
    upd, K = ekf.update(b, np.array([1.0]), S, np.array([[1.0]]))
    assert K[0, 0] == pytest.approx(0.5)
    assert upd.cov[0, 0] == pytest.approx(0.5)
    assert upd.mean[0] == pytest.approx(0.5)


def test_update_random_spd_contracts_covariance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        P = random_spd(rng, 4)
        m = np.concatenate([rng.uniform(-5, 15, 2), rng.standard_normal(2)])
        b = ekf.GaussianBelief(m, P)
        e, S, J, _ = ekf.innovate(b, OBS, GEOM, OBS.predict(GEOM, m) + rng.standard_normal(4))
        upd, _ = ekf.update(b, e, S, J)
        assert np.linalg.eigvalsh(upd.cov).min() >= -1e-10
        assert np.trace(upd.cov) <= np.trace(P) + 1e-10
        assert np.abs(upd.cov - upd.cov.T).max() <= 1e-10


def test_update_ill_conditioned_raises():
    b = ekf.GaussianBelief(np.zeros(2), np.eye(2))
    S = np.diag([1.0, 1e-14])
    with pytest.raises(ConditioningError) as info:
        ekf.update(b, np.zeros(2), S, np.eye(2))
    assert info.value.condition > 1e12


def _linear_kf(m, P, A, Q, H, R, y):
    m = A @ m
    P = A @ P @ A.T + Q
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    return m + K @ (y - H @ m), P - K @ S @ K.T, S


def test_linear_observation_equals_linear_kf():
    rng = np.random.default_rng(4)
    tm = build_cv_transition(1.0, 0.3, 0.2)
    H = rng.standard_normal((3, 4))
    obs = LinearObservationModel(H, [0.5, 0.7, 1.1])
    belief = ekf.GaussianBelief(np.zeros(4), np.eye(4))
    m, P = np.zeros(4), np.eye(4)
    for _ in range(100):
        y = rng.standard_normal(3) * 3
        rec = ekf.step(belief, tm, obs, None, y)
        m, P, S = _linear_kf(m, P, tm.A, tm.Q, H, obs.R, y)
        np.testing.assert_allclose(rec.updated.mean, m, atol=1e-10, rtol=0)
        np.testing.assert_allclose(rec.updated.cov, P, atol=1e-10, rtol=0)
        np.testing.assert_allclose(rec.innov_cov, S, atol=1e-10, rtol=0)
        belief = rec.updated
        for M in (rec.predicted.cov, rec.updated.cov, rec.innov_cov):
            assert np.abs(M - M.T).max() <= 1e-10

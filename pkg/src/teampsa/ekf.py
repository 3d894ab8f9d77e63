"""Extended Kalman filter recursion for range-only team tracking.

The covariance update keeps the plain ``P - K S K^T`` form; the result is
symmetrised after every step and projected onto the PSD cone only when an
eigenvalue falls below ``-PSD_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConditioningError

MAX_CONDITION = 1e12
PSD_TOL = 1e-10


def symmetrize(M):
    return 0.5 * (M + M.T)


def _project_psd(P):
    w, v = np.linalg.eigh(P)
    if w.min() >= -PSD_TOL:
        return P
    return symmetrize((v * np.clip(w, 0.0, None)) @ v.T)


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True, eq=False)
class StepRecord:
    predicted: GaussianBelief
    updated: GaussianBelief
    innovation: np.ndarray
    innov_cov: np.ndarray
    gain: np.ndarray
    predicted_measurement: np.ndarray
    jacobian: np.ndarray


def predict(belief, transition):
    A = transition.A
    return GaussianBelief(
        mean=A @ belief.mean,
        cov=symmetrize(A @ belief.cov @ A.T + transition.Q),
    )


def innovate(predicted, obs_model, geometry, y_t, t=1):
    """Innovation, its covariance, the Jacobian and the predicted measurement.

    Returns ``(e, S, J, y_hat)`` with ``y_hat = h(m_pred)`` under the model's
    own bias assumption at step ``t`` and ``S = J P J^T + R``.
    """
    J = obs_model.jacobian(geometry, predicted.mean)
    y_hat = obs_model.predict(geometry, predicted.mean, t)
    e = np.asarray(y_t, dtype=float) - y_hat
    S = symmetrize(J @ predicted.cov @ J.T + obs_model.R)
    return e, S, J, y_hat


def update(predicted, e, S, J):
    """Measurement update; returns ``(updated_belief, K)``.

    ``K = P J^T S^-1`` is obtained from a Cholesky solve rather than an
    explicit inverse.
    """
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError(
            f"innovation covariance condition number {cond:.3e} exceeds "
            f"{MAX_CONDITION:.0e}", condition=cond)
    try:
        factor = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        raise ConditioningError(f"innovation covariance is not SPD: {exc}",
                                condition=cond) from exc
    P = predicted.cov
    K = linalg.cho_solve(factor, J @ P).T
    mean = predicted.mean + K @ e
    cov = _project_psd(symmetrize(P - K @ S @ K.T))
    return GaussianBelief(mean=mean, cov=cov), K


def step(belief, transition, obs_model, geometry, y_t, t=1):
    """One full predict/innovate/update cycle."""
    pred = predict(belief, transition)
    e, S, J, y_hat = innovate(pred, obs_model, geometry, y_t, t)
    upd, K = update(pred, e, S, J)
    return StepRecord(pred, upd, e, S, K, y_hat, J)

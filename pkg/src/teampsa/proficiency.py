"""Per-step team proficiency metrics: MPB, KS distance/p-values, KL divergence."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from . import stats
from .errors import ConditioningError, DomainError


@dataclass(frozen=True)
class KsTestConfig:
    """Significance level and history window for the per-agent KS test.

    ``window=None`` uses the whole history since the first step; an integer
    keeps only the most recent ``window`` distances.
    """

    alpha: float = 0.05
    window: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.window is not None and (int(self.window) != self.window or self.window < 5):
            raise DomainError(f"sliding window must be an integer >= 5, got {self.window}")

    @property
    def policy(self):
        return "cumulative" if self.window is None else "sliding"


@dataclass(frozen=True, eq=False)
class ProficiencyRecord:
    mpb_matrix: np.ndarray
    team_mpb: float
    agent_mpb: np.ndarray
    d_mpb_bar: float
    d_mpb_agent: np.ndarray
    sq_error: np.ndarray
    cdf: np.ndarray
    d_ks: np.ndarray
    p_values: np.ndarray
    d_kl_pointwise: float
    d_kl_closed: float

    @property
    def inv_team_mpb(self):
        return 1.0 / self.team_mpb


def mpb_matrix(S):
    """Measurement prediction bound of a Gaussian predictive density: ``S^-1``."""
    S = np.asarray(S, dtype=float)
    try:
        factor = linalg.cho_factor(S, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(f"innovation covariance is not SPD: {exc}") from exc
    inv = linalg.cho_solve(factor, np.eye(S.shape[0]))
    return 0.5 * (inv + inv.T)


def team_mpb(mpb):
    mpb = np.asarray(mpb, dtype=float)
    if mpb.ndim != 2 or mpb.shape[0] != mpb.shape[1]:
        raise DomainError(f"MPB must be square, got shape {mpb.shape}")
    return float(np.trace(mpb) / mpb.shape[0])


def mpb_deviation(inv_mpb, sq_error):
    """Normalized absolute deviation ``|inv_mpb - e^2| / |inv_mpb|``.

    Works elementwise on arrays so per-agent values come out in one call.
    """
    inv_mpb = np.asarray(inv_mpb, dtype=float)
    if np.any(~(inv_mpb > 0)):
        raise DomainError("inverse MPB must be > 0")
    out = np.abs(inv_mpb - sq_error) / np.abs(inv_mpb)
    return float(out) if out.ndim == 0 else out


def ks_distance_agent(innovation, s_jj):
    """Single-observation KS distance against the Gaussian predictive CDF.

    Returns ``(F, d)`` with ``F = erfc(e / sqrt(2 s)) / 2`` and
    ``d = max(F, 1 - F)``. Vectorised over matching arrays.
    """
    s_jj = np.asarray(s_jj, dtype=float)
    if np.any(~(s_jj > 0)):
        raise DomainError("predictive variance must be > 0")
    F = 0.5 * stats.erfc(np.asarray(innovation, dtype=float) / np.sqrt(2.0 * s_jj))
    d = np.maximum(F, 1.0 - F)
    if np.ndim(F) == 0:
        return float(F), float(d)
    return F, d


def ks_two_sample(samples_actual, samples_pred):
    """``sup_y |F_L(y) - F_K(y)|`` between two empirical CDFs."""
    a = np.sort(np.asarray(samples_actual, dtype=float).ravel())
    b = np.sort(np.asarray(samples_pred, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("both samples must be non-empty")
    # ECDFs are step functions that only change at sample points; evaluating
    # the right-continuous value at every merged point attains the sup.
    points = np.concatenate([a, b])
    fa = np.searchsorted(a, points, side="right") / a.size
    fb = np.searchsorted(b, points, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


class KsDecision(NamedTuple):
    reject: bool
    statistic: float
    threshold: float


def ks_reject(d, n_l, n_k, alpha):
    """Two-sample KS decision at level ``alpha`` using the asymptotic quantile."""
    if n_l < 1 or n_k < 1:
        raise DomainError("sample sizes must be >= 1")
    scaled = math.sqrt(n_l * n_k / (n_l + n_k)) * d
    gamma = stats.kolmogorov_quantile(alpha)
    return KsDecision(reject=bool(scaled >= gamma), statistic=scaled, threshold=gamma)


def uniform_half_cdf(x):
    """CDF of U(0.5, 1)."""
    return np.clip(2.0 * (np.asarray(x, dtype=float) - 0.5), 0.0, 1.0)


def ks_one_sample_uniform(history):
    """One-sample KS statistic ``D_n`` of ``history`` against U(0.5, 1)."""
    x = np.sort(np.asarray(history, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("KS history is empty")
    F0 = uniform_half_cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F0), np.max(F0 - (i - 1) / n)))


def ks_pvalue_sequence(history, cfg=KsTestConfig()):
    """p-value of the KS test that ``history`` is i.i.d. U(0.5, 1).

    Uses the Kolmogorov limit with Stephens' finite-sample scaling
    ``(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D_n``.
    """
    h = np.asarray(history, dtype=float).ravel()
    if cfg.window is not None:
        h = h[-cfg.window:]
    if h.size == 0:
        raise DomainError("KS history is empty")
    d_n = ks_one_sample_uniform(h)
    rn = math.sqrt(h.size)
    return stats.kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d_n)


class KsHistory:
    """Append-only per-agent record of KS distances for one (trial, model)."""

    def __init__(self, n_agents, cfg=KsTestConfig()):
        self.cfg = cfg
        self._rows = []
        self.n_agents = n_agents

    def __len__(self):
        return len(self._rows)

    def append(self, d_ks):
        d_ks = np.asarray(d_ks, dtype=float)
        if d_ks.shape != (self.n_agents,):
            raise DomainError(f"expected {self.n_agents} distances, got {d_ks.shape}")
        self._rows.append(d_ks.copy())

    def pvalues(self):
        table = np.array(self._rows)
        return np.array([ks_pvalue_sequence(table[:, j], self.cfg)
                         for j in range(self.n_agents)])


def kl_pointwise(y, true_means, true_vars, pred_means, pred_vars):
    """Density-weighted log ratio summed over agents at the realised ``y``.

    ``sum_j f(y_j) * (log f(y_j) - log g(y_j))`` with ``f = N(h(x_t), R_jj)``
    and ``g = N(h(m_t|t-1), S_jj)``. This is a pointwise surrogate, not the
    integral divergence, and needs the true state, so it is only usable as a
    simulation benchmark. Log densities keep the ratio finite when ``g``
    underflows.
    """
    log_f = stats.gaussian_logpdf(y, true_means, true_vars)
    log_g = stats.gaussian_logpdf(y, pred_means, pred_vars)
    return float(np.sum(np.exp(log_f) * (log_f - log_g)))


def kl_closed_gaussian(mu1, var1, mu2, var2):
    """KL(N(mu1, var1) || N(mu2, var2)), summed over entries for arrays."""
    var1 = np.asarray(var1, dtype=float)
    var2 = np.asarray(var2, dtype=float)
    if np.any(~(var1 > 0)) or np.any(~(var2 > 0)):
        raise DomainError("variances must be > 0")
    diff = np.asarray(mu1, dtype=float) - np.asarray(mu2, dtype=float)
    kl = 0.5 * np.log(var2 / var1) + (var1 + diff ** 2) / (2.0 * var2) - 0.5
    # Guard tiny negative round-off for identical inputs.
    return max(float(np.sum(kl)), 0.0)


def assess_step(S, innovation, y, true_means, true_vars, pred_means, history):
    """All proficiency metrics for one filter step.

    ``history`` is the (trial, model) :class:`KsHistory`; it is appended to.
    The team deviation compares the inverse team MPB with the agent-averaged
    squared innovation; per-agent deviations use the inverse diagonal of the
    MPB matrix against each agent's own squared innovation.
    """
    S = np.asarray(S, dtype=float)
    e = np.asarray(innovation, dtype=float)
    mpb = mpb_matrix(S)
    agent = np.diag(mpb).copy()
    team = team_mpb(mpb)
    sq = e ** 2
    d_team = mpb_deviation(1.0 / team, float(np.mean(sq)))
    d_agent = mpb_deviation(1.0 / agent, sq)
    s_diag = np.diag(S).copy()
    cdf, d_ks = ks_distance_agent(e, s_diag)
    history.append(d_ks)
    return ProficiencyRecord(
        mpb_matrix=mpb,
        team_mpb=team,
        agent_mpb=agent,
        d_mpb_bar=d_team,
        d_mpb_agent=d_agent,
        sq_error=sq,
        cdf=cdf,
        d_ks=d_ks,
        p_values=history.pvalues(),
        d_kl_pointwise=kl_pointwise(y, true_means, true_vars, pred_means, s_diag),
        d_kl_closed=kl_closed_gaussian(true_means, true_vars, pred_means, s_diag),
    )

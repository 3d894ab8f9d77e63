"""Monte Carlo experiment: simulate once per trial, filter with every model."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ekf
from .config import config_digest
from .errors import DomainError, PsaError, TrialError
from .proficiency import KsHistory, assess_step
from .simulate import simulate_trajectory, synthesize_measurements, trial_streams

log = logging.getLogger(__name__)

# Curves recorded per (trial, model), in CSV column order. Per-agent curves
# have shape (n_hor, n_agents), the rest (n_hor,).
AGENT_CURVES = ("e2", "sjj", "dks", "pval")
CURVE_KEYS = ("e2", "sjj", "inv_team_mpb", "d_mpb_bar", "dks", "pval", "pval_mean",
              "dkl_pointwise", "dkl_closed", "state_mse")

CRITERIA = {
    # criterion -> (curve, higher_is_better)
    "d_mpb_bar": ("d_mpb_bar", False),
    "mean_p_value": ("pval_mean", True),
    "d_kl": ("dkl_pointwise", False),
}


@dataclass(eq=False)
class TrialResult:
    trial_id: int
    models: list
    steps: dict
    metrics: dict
    state_se: dict
    dataset_digest: str
    model_digests: dict = field(default_factory=dict)
    trajectory: object = None
    measurements: object = None

    def curves(self, model):
        steps = self.steps[model]
        recs = self.metrics[model]
        return {
            "e2": np.array([r.sq_error for r in recs]),
            "sjj": np.array([np.diag(s.innov_cov) for s in steps]),
            "inv_team_mpb": np.array([r.inv_team_mpb for r in recs]),
            "d_mpb_bar": np.array([r.d_mpb_bar for r in recs]),
            "dks": np.array([r.d_ks for r in recs]),
            "pval": np.array([r.p_values for r in recs]),
            "pval_mean": np.array([r.p_values.mean() for r in recs]),
            "dkl_pointwise": np.array([r.d_kl_pointwise for r in recs]),
            "dkl_closed": np.array([r.d_kl_closed for r in recs]),
            "state_mse": np.asarray(self.state_se[model]),
        }

    def all_curves(self):
        return {m: self.curves(m) for m in self.models}


def run_trial(config, trial_id, models=None):
    """Run every library model (or the named subset) on one shared dataset.

    Numeric failures are re-raised as :class:`TrialError` naming the trial,
    step and model.
    """
    traj_stream, meas_stream = trial_streams(config.seed, trial_id)
    truth = config.library.true_model
    geometry = config.geometry
    traj = simulate_trajectory(config, traj_stream)
    meas = synthesize_measurements(traj, truth, geometry, meas_stream)
    digest = meas.digest()
    true_vars = truth.observation.variances

    names = config.library.names if models is None else list(models)
    result = TrialResult(trial_id=trial_id, models=names, steps={}, metrics={},
                         state_se={}, dataset_digest=digest,
                         trajectory=traj, measurements=meas)
    for name in names:
        spec = config.library.get(name)
        belief = ekf.GaussianBelief(np.array(config.m0), np.array(config.P0))
        history = KsHistory(geometry.n_agents, config.ks)
        steps, recs = [], []
        se = np.empty(config.n_hor)
        result.model_digests[name] = meas.digest()
        for t in range(1, config.n_hor + 1):
            y = meas.observations[t - 1]
            x_true = traj.states[t - 1]
            try:
                rec = ekf.step(belief, spec.transition, spec.observation, geometry, y, t)
                prof = assess_step(
                    rec.innov_cov, rec.innovation, y,
                    true_means=truth.observation.predict(geometry, x_true, t),
                    true_vars=true_vars,
                    pred_means=rec.predicted_measurement,
                    history=history,
                )
            except (PsaError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
                raise TrialError(trial_id, t, name, exc) from exc
            belief = rec.updated
            se[t - 1] = float(np.sum((belief.mean - x_true) ** 2))
            steps.append(rec)
            recs.append(prof)
        result.steps[name] = steps
        result.metrics[name] = recs
        result.state_se[name] = se
    return result


@dataclass(eq=False)
class AggregateReport:
    models: list
    curves: dict
    n_trials: int
    n_agents: int
    n_hor: int
    burn_in: int
    config_digest: str
    failed: list = field(default_factory=list)
    trial_curves: dict = None

    def window(self, start=None):
        start = self.burn_in if start is None else start
        return slice(start - 1, self.n_hor)

    def time_mean(self, model, key, start=None):
        """Mean over ``t >= start`` (default burn-in) of an aggregated curve."""
        return float(np.mean(self.curves[model][key][self.window(start)]))

    def summary(self):
        out = {}
        for m in self.models:
            c = self.curves[m]
            w = self.window()
            out[m] = {
                "d_mpb_bar": float(np.mean(c["d_mpb_bar"][w])),
                "pval_mean": float(np.mean(c["pval_mean"][w])),
                "pval_agent": np.mean(c["pval"][w], axis=0).tolist(),
                "dks_mean": float(np.mean(c["dks"][w])),
                "dkl_pointwise": float(np.mean(c["dkl_pointwise"][w])),
                "dkl_closed": float(np.mean(c["dkl_closed"][w])),
                "mse": float(np.mean(c["e2"][w])),
                "inv_team_mpb": float(np.mean(c["inv_team_mpb"][w])),
                "state_mse": float(np.mean(c["state_mse"][w])),
            }
        return out


def aggregate(trial_curves, models, n_agents, n_hor, burn_in, digest, failed=()):
    """Arithmetic means over trials, reduced in ascending trial-id order.

    ``trial_curves`` maps ``trial_id -> {model: {curve: array}}``.
    """
    ids = sorted(trial_curves)
    if not ids:
        raise DomainError("no completed trials to aggregate")
    curves = {}
    for m in models:
        curves[m] = {}
        for key in CURVE_KEYS:
            stack = np.stack([trial_curves[i][m][key] for i in ids])
            curves[m][key] = stack.sum(axis=0) / len(ids)
    return AggregateReport(models=list(models), curves=curves, n_trials=len(ids),
                           n_agents=n_agents, n_hor=n_hor, burn_in=burn_in,
                           config_digest=digest, failed=list(failed))


def _trial_worker(args):
    config, trial_id = args
    try:
        return trial_id, run_trial(config, trial_id).all_curves(), None
    except TrialError as exc:
        return trial_id, None, str(exc)


def run_montecarlo(config, threads=1, keep_trials=False):
    """Run ``config.n_mc`` trials and aggregate their curves.

    ``threads > 1`` farms trials out to worker processes; the reduction
    order is fixed by trial id so the report does not depend on scheduling.
    Failed trials are listed in ``report.failed`` and left out of the means.
    """
    jobs = [(config, i) for i in range(config.n_mc)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, len(jobs) // (4 * threads))
            outcomes = list(pool.map(_trial_worker, jobs, chunksize=chunk))
    else:
        outcomes = [_trial_worker(job) for job in jobs]
    done, failed = {}, []
    for trial_id, curves, err in outcomes:
        if err is None:
            done[trial_id] = curves
        else:
            log.warning("trial failed: %s", err)
            failed.append({"trial": trial_id, "error": err})
    report = aggregate(done, config.library.names, config.n_agents, config.n_hor,
                       config.burn_in, config_digest(config), failed)
    if keep_trials:
        report.trial_curves = done
    return report


@dataclass(frozen=True)
class Ranking:
    criterion: str
    order: list
    scores: dict
    ties: list


def rank_models(report, criterion, start=None):
    """Order models by a time-averaged metric, best first.

    Lower is better for ``d_mpb_bar`` and ``d_kl``, higher for
    ``mean_p_value``. Equal scores keep library order and are reported in
    ``ties``.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; choose from {sorted(CRITERIA)}")
    if len(report.models) < 2:
        raise DomainError("ranking needs at least two models")
    key, higher_better = CRITERIA[criterion]
    scores = {m: report.time_mean(m, key, start) for m in report.models}
    sign = -1.0 if higher_better else 1.0
    order = sorted(report.models, key=lambda m: (sign * scores[m], report.models.index(m)))
    ties = []
    for a, b in zip(order, order[1:]):
        if np.isclose(scores[a], scores[b], rtol=1e-12, atol=0.0):
            ties.append([a, b])
    return Ranking(criterion=criterion, order=order, scores=scores, ties=ties)

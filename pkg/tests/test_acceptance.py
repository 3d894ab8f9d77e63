"""Exit criteria on the reference scenario (4 agents, 100 steps, 100 trials).

Each test appends a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import json

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps

from teampsa import ekf
from teampsa.cli import main
from teampsa.models import (
    AgentGeometry,
    LinearObservationModel,
    ObservationModel,
    build_cv_transition,
    observation_jacobian,
)
from teampsa.proficiency import kl_closed_gaussian, ks_pvalue_sequence, mpb_matrix

from .conftest import ACCEPTANCE_LINES, random_spd

BIASED = 1  # agent 2, bias 2.7 m


def check(name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


def test_c1_calibration_under_true_model(reference_report):
    c0 = reference_report.curves["M0"]
    rel = np.abs(c0["e2"] - c0["sjj"]) / c0["sjj"]
    frac0 = np.mean(rel[4:] <= 0.25, axis=0)
    c1 = reference_report.curves["M1"]
    frac1 = np.mean(c1["e2"][19:, BIASED] >= 3 * c1["sjj"][19:, BIASED])
    ok = bool(np.all(frac0 >= 0.9) and frac1 >= 0.8)
    check("C1 calibration", ok,
          f"M0 per-agent fraction within 25% (t>=5) = {np.round(frac0, 3).tolist()} (need >=0.9); "
          f"M1 agent 2 fraction e2 >= 3 S_jj (t>=20) = {frac1:.3f} (need >=0.8)")


def test_c2_d_mpb_separation(reference_report):
    m0 = reference_report.time_mean("M0", "d_mpb_bar", 20)
    m1 = reference_report.time_mean("M1", "d_mpb_bar", 20)
    ok = 0.3 <= m0 <= 0.9 and m1 >= 1.5 and m1 / m0 >= 2
    check("C2 d_MPB separation", ok,
          f"M0 = {m0:.3f} in [0.3, 0.9]; M1 = {m1:.3f} >= 1.5; ratio = {m1 / m0:.2f} >= 2")


def test_c3_pvalues(reference_report):
    p0 = reference_report.curves["M0"]["pval"]
    grand = float(np.mean(p0[19:]))
    above = float(np.mean(reference_report.curves["M0"]["pval_mean"] > 0.05))
    p1 = reference_report.curves["M1"]["pval"][19:, BIASED]
    below = float(np.mean(p1 < 0.05))
    ok = 0.3 <= grand <= 0.7 and above >= 0.9 and below >= 0.9
    check("C3 p-values", ok,
          f"M0 grand mean (t>=20) = {grand:.3f} in [0.3, 0.7]; M0 steps above 0.05 = {above:.2f}; "
          f"M1 agent 2 steps below 0.05 (t>=20) = {below:.2f}")


def test_c4_kl_ordering(reference_report):
    pw0 = reference_report.time_mean("M0", "dkl_pointwise", 20)
    pw1 = reference_report.time_mean("M1", "dkl_pointwise", 20)
    cf0 = reference_report.time_mean("M0", "dkl_closed", 20)
    cf1 = reference_report.time_mean("M1", "dkl_closed", 20)
    ok = pw0 < pw1 and pw1 / pw0 >= 2 and cf0 < cf1
    check("C4 KL ordering", ok,
          f"pointwise M0 = {pw0:.3f}, M1 = {pw1:.3f} (ratio {pw1 / pw0:.2f}); "
          f"closed M0 = {cf0:.3f}, M1 = {cf1:.3f}")


def test_c5_ks_distance_distribution(reference_report):
    pooled = np.concatenate([c["M0"]["dks"].ravel() for c in reference_report.trial_curves.values()])
    rng = np.random.default_rng(5)
    sub = rng.choice(pooled, size=5000, replace=False)
    p = sps.kstest(sub, sps.uniform(loc=0.5, scale=0.5).cdf).pvalue
    mean = float(pooled.mean())
    ok = pooled.size >= 40_000 and abs(mean - 0.75) <= 0.02 and p > 0.01
    check("C5 d_KS ~ U(0.5, 1)", ok,
          f"n = {pooled.size}, mean = {mean:.4f} (0.75 +- 0.02), KS p on 5000 = {p:.3f} > 0.01")


def test_c6a_linear_ekf_equals_kf():
    rng = np.random.default_rng(60)
    tm = build_cv_transition(1.0, 0.2, 0.4)
    H = rng.standard_normal((4, 4))
    obs = LinearObservationModel(H, [0.5, 0.6, 0.7, 0.8])
    belief = ekf.GaussianBelief(np.zeros(4), np.eye(4))
    m, P = np.zeros(4), np.eye(4)
    worst = 0.0
    for _ in range(100):
        y = 2 * rng.standard_normal(4)
        rec = ekf.step(belief, tm, obs, None, y)
        m, P = tm.A @ m, tm.A @ P @ tm.A.T + tm.Q
        S = H @ P @ H.T + obs.R
        K = P @ H.T @ np.linalg.inv(S)
        m, P = m + K @ (y - H @ m), P - K @ S @ K.T
        worst = max(worst, np.abs(rec.updated.mean - m).max(), np.abs(rec.updated.cov - P).max())
        belief = rec.updated
    check("C6a linear EKF == KF", worst <= 1e-10, f"max abs difference {worst:.2e} <= 1e-10")


def test_c6b_mpb_multiply_back():
    rng = np.random.default_rng(61)
    worst = max(np.linalg.norm(mpb_matrix(S) @ S - np.eye(4))
                for S in (random_spd(rng, 4, jitter=0.5) for _ in range(100)))
    check("C6b MPB multiply-back", worst <= 1e-10, f"max ||S^-1 S - I||_F = {worst:.2e}")


def test_c6c_jacobian_finite_differences():
    rng = np.random.default_rng(62)
    g = AgentGeometry([[-10, 0], [-10, 30], [20, 0], [20, 30]])
    obs = ObservationModel(0.5, [0.0, 2.7, 0.0, 0.07])
    worst = 0.0
    for _ in range(100):
        x = np.concatenate([rng.uniform(-5, 15, 2), rng.standard_normal(2)])
        J = observation_jacobian(g, x)
        for k in range(4):
            dx = np.zeros(4)
            dx[k] = 1e-6
            fd = (obs.predict(g, x + dx) - obs.predict(g, x - dx)) / 2e-6
            worst = max(worst, np.abs(J[:, k] - fd).max())
    check("C6c Jacobian vs finite differences", worst <= 1e-6, f"max abs difference {worst:.2e}")


def test_c6d_kl_quadrature():
    rng = np.random.default_rng(63)
    worst = 0.0
    for _ in range(50):
        m1, m2 = rng.uniform(-3, 3, 2)
        v1, v2 = rng.uniform(0.2, 4.0, 2)
        s1 = np.sqrt(v1)

        def integrand(x):
            lf = sps.norm.logpdf(x, m1, s1)
            return np.exp(lf) * (lf - sps.norm.logpdf(x, m2, np.sqrt(v2)))
        ref, _ = integrate.quad(integrand, m1 - 15 * s1, m1 + 15 * s1,
                                epsabs=1e-13, epsrel=1e-12, limit=200)
        worst = max(worst, abs(kl_closed_gaussian(m1, v1, m2, v2) - ref))
    check("C6d closed-form KL vs quadrature", worst <= 1e-8, f"max abs difference {worst:.2e}")


def test_c6e_pvalue_calibration():
    rng = np.random.default_rng(64)
    rate = float(np.mean([ks_pvalue_sequence(rng.uniform(0.5, 1.0, 100)) < 0.05
                          for _ in range(1000)]))
    check("C6e KS p-value calibration", abs(rate - 0.05) <= 0.02,
          f"rejection rate {rate:.3f} (0.05 +- 0.02)")


def test_c7_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    rc_a = main(["montecarlo", "--config", "scenario_paper.toml", "--out", str(a), "--threads", "1"])
    rc_b = main(["montecarlo", "--config", "scenario_paper.toml", "--out", str(b), "--threads", "2"])
    same = all((a / f).read_bytes() == (b / f).read_bytes()
               for f in ("aggregate.csv", "summary.json"))
    check("C7 determinism", rc_a == rc_b == 0 and same,
          f"exit codes {rc_a}/{rc_b}; aggregate.csv and summary.json byte-identical "
          f"across --threads 1/2: {same}")

    capsys.readouterr()
    assert main(["report", "--in", str(a), "--criterion", "d_mpb_bar"]) == 0
    assert json.loads(capsys.readouterr().out)["ranking"][0] == "M0"

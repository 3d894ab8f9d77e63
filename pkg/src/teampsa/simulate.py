"""Ground-truth trajectories and noisy team range measurements.

Randomness comes from :class:`NormalStream`: raw 64-bit words of a PCG64
bit generator turned into uniforms and then into standard normals with the
Box-Muller transform. The bit-generator stream is stable across numpy
releases, so golden outputs only change if :data:`SAMPLER_VERSION` does.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

SAMPLER_VERSION = "pcg64-boxmuller-v1"

_TWO_POW_M53 = 2.0 ** -53


class NormalStream:
    """Seeded source of uniforms and standard normals.

    Normals are produced in Box-Muller pairs; an odd request discards the
    unused partner so every call consumes a whole number of pairs.
    """

    def __init__(self, seed_sequence):
        if not isinstance(seed_sequence, np.random.SeedSequence):
            seed_sequence = np.random.SeedSequence(seed_sequence)
        self.seed_sequence = seed_sequence
        self._bits = np.random.PCG64(seed_sequence)

    def uniform(self, n):
        """``n`` doubles in the open interval (0, 1)."""
        raw = self._bits.random_raw(int(n))
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53

    def normal(self, n):
        n = int(n)
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        radius = np.sqrt(-2.0 * np.log(u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * m)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n]


def trial_streams(master_seed, trial_id):
    """Independent (trajectory, measurement) streams for one trial.

    The trial's seed sequence is ``SeedSequence(master_seed,
    spawn_key=(trial_id,))``: the trial index acts as a counter in the
    spawn key, so trials never share state and can run in any order.
    """
    root = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial_id),))
    traj, meas = root.spawn(2)
    return NormalStream(traj), NormalStream(meas)


def psd_factor(cov):
    """``L`` with ``L @ L.T == cov`` for a symmetric PSD (possibly singular) matrix."""
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def draw_gaussian(cov, stream, n):
    """``n`` zero-mean draws with covariance ``cov``, shape ``(n, dim)``."""
    L = psd_factor(cov)
    z = stream.normal(n * L.shape[0]).reshape(n, L.shape[0])
    return z @ L.T


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    scenario_digest: str = ""

    @property
    def n_hor(self):
        return self.states.shape[0]

    def positions(self):
        return self.states[:, :2]


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    observations: np.ndarray

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.observations).tobytes()).hexdigest()


def simulate_trajectory(config, stream, scenario_digest=""):
    """Propagate ``x_t = A x_{t-1} + u_t`` for ``t = 1..n_hor`` from ``x0``."""
    transition = config.library.true_model.transition
    noise = draw_gaussian(transition.Q, stream, config.n_hor)
    states = np.empty((config.n_hor, transition.n_state))
    x = np.array(config.x0, dtype=float)
    for t in range(config.n_hor):
        x = transition.A @ x + noise[t]
        states[t] = x
    states.setflags(write=False)
    return Trajectory(states=states, scenario_digest=scenario_digest)


def synthesize_measurements(traj, true_model, geometry, stream):
    """``y_{i,t} = ||p_i - p_t|| + b_{i,t} + v_{i,t}`` with independent noise."""
    obs = true_model.observation
    n_hor, n_a = traj.n_hor, geometry.n_agents
    noise = stream.normal(n_hor * n_a).reshape(n_hor, n_a) * obs.sigma_v
    y = np.empty((n_hor, n_a))
    for t in range(n_hor):
        y[t] = obs.predict(geometry, traj.states[t], t + 1) + noise[t]
    y.setflags(write=False)
    return MeasurementSet(observations=y)

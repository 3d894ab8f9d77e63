"""State-space model family: CV dynamics, biased range observations, library.

State layout is fixed as ``[p_x, p_y, v_x, v_y]``. All types are frozen and
their arrays are made read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SingularGeometryError
from .proficiency import KsTestConfig

# Target-agent distances at or below this are treated as coincident.
EPS_GEOM = 1e-9

STATE_DIM = 4


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AgentGeometry:
    """Fixed 2-D agent positions; agent ``i`` lives at row ``i``."""

    positions: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ConfigError(
                f"agent positions must be a non-empty list of [x, y] pairs, "
                f"got shape {pos.shape}", key="agents")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("agent positions must be finite", key="agents")
        object.__setattr__(self, "positions", pos)

    @property
    def n_agents(self):
        return self.positions.shape[0]


@dataclass(frozen=True, eq=False)
class TransitionModel:
    A: np.ndarray
    Q: np.ndarray
    ts: float
    q_x: float
    q_y: float

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "Q", _frozen(self.Q))

    @property
    def n_state(self):
        return self.A.shape[0]


def build_cv_transition(ts, q_x, q_y):
    """Constant-velocity model with white-noise acceleration.

    ``A = [[I, ts I], [0, I]]`` and ``Q`` is the integrated white-noise
    acceleration covariance with per-axis spectral densities ``q_x, q_y``.
    """
    if not ts > 0 or not math.isfinite(ts):
        raise ConfigError(f"ts must be > 0, got {ts}", key="ts")
    if q_x < 0 or q_y < 0:
        raise ConfigError(f"q_x, q_y must be >= 0, got {q_x}, {q_y}", key="q_x")
    eye = np.eye(2)
    A = np.block([[eye, ts * eye], [np.zeros((2, 2)), eye]])
    qbar = np.diag([q_x, q_y])
    Q = np.block([
        [ts ** 3 / 3.0 * qbar, ts ** 2 / 2.0 * qbar],
        [ts ** 2 / 2.0 * qbar, ts * qbar],
    ])
    return TransitionModel(A=A, Q=Q, ts=float(ts), q_x=float(q_x), q_y=float(q_y))


def cv_noise_from_beta(ts, v0, beta0):
    """Process-noise densities ``((v/beta0)^2 / ts)`` per axis."""
    return tuple((float(v) / beta0) ** 2 / ts for v in v0)


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """Biased range observations with independent Gaussian noise.

    ``biases`` is either one value per agent (constant in time) or a
    ``(T, N_A)`` table indexed by 1-based time step.
    """

    sigma_v: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        sigma = _frozen(np.atleast_1d(self.sigma_v))
        biases = _frozen(self.biases)
        if sigma.ndim != 1 or np.any(~(sigma > 0)) or not np.all(np.isfinite(sigma)):
            raise ConfigError("sigma_v must be > 0 for every agent", key="sigma_v")
        if biases.ndim not in (1, 2) or biases.size == 0:
            raise ConfigError("biases must be a list or a table of lists", key="biases")
        if np.any(biases < 0) or not np.all(np.isfinite(biases)):
            raise ConfigError("biases must be finite and >= 0", key="biases")
        n_agents = biases.shape[-1]
        if sigma.size == 1 and n_agents > 1:
            sigma = _frozen(np.full(n_agents, sigma[0]))
        if sigma.size != n_agents:
            raise ConfigError(
                f"sigma_v has {sigma.size} entries but biases cover {n_agents} agents",
                key="sigma_v")
        object.__setattr__(self, "sigma_v", sigma)
        object.__setattr__(self, "biases", biases)

    @property
    def n_agents(self):
        return self.sigma_v.size

    @property
    def R(self):
        return np.diag(self.sigma_v ** 2)

    @property
    def variances(self):
        return self.sigma_v ** 2

    @property
    def time_varying(self):
        return self.biases.ndim == 2

    def bias_at(self, t):
        """Per-agent biases at 1-based step ``t``."""
        if not self.time_varying:
            return self.biases
        if not 1 <= t <= self.biases.shape[0]:
            raise IndexError(
                f"bias table covers steps 1..{self.biases.shape[0]}, asked for {t}")
        return self.biases[t - 1]

    def predict(self, geometry, state, t=1):
        """Noise-free observation vector ``h(x)`` at step ``t``."""
        return ranges(geometry, state) + self.bias_at(t)

    def jacobian(self, geometry, state):
        return observation_jacobian(geometry, state, self)

    def same_as(self, other, tol=0.0):
        return (
            self.biases.shape == other.biases.shape
            and np.allclose(self.biases, other.biases, rtol=0, atol=tol)
            and np.allclose(self.sigma_v, other.sigma_v, rtol=0, atol=tol)
        )


@dataclass(frozen=True, eq=False)
class LinearObservationModel:
    """``y = H x + v`` with diagonal noise; the linear-Gaussian reference case."""

    H: np.ndarray
    sigma_v: np.ndarray

    def __post_init__(self):
        H = _frozen(np.atleast_2d(self.H))
        sigma = _frozen(np.broadcast_to(np.asarray(self.sigma_v, dtype=float), (H.shape[0],)))
        if np.any(~(sigma > 0)):
            raise ConfigError("sigma_v must be > 0 for every row", key="sigma_v")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "sigma_v", sigma)

    @property
    def n_agents(self):
        return self.H.shape[0]

    @property
    def R(self):
        return np.diag(self.sigma_v ** 2)

    @property
    def variances(self):
        return self.sigma_v ** 2

    def predict(self, geometry, state, t=1):
        return self.H @ np.asarray(state, dtype=float)

    def jacobian(self, geometry, state):
        return np.array(self.H)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    transition: TransitionModel
    observation: ObservationModel


@dataclass(frozen=True, eq=False)
class ModelLibrary:
    """Ordered candidate models; ``true_index`` is for the simulator only."""

    specs: tuple
    true_index: int = 0

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise ConfigError("model library must contain at least one model", key="models")
        if not 0 <= self.true_index < len(specs):
            raise ConfigError(f"true_index {self.true_index} out of range", key="true_model")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"model names must be unique, got {names}", key="models")
        object.__setattr__(self, "specs", specs)

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    @property
    def names(self):
        return [s.name for s in self.specs]

    @property
    def true_model(self):
        return self.specs[self.true_index]

    def get(self, name):
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise KeyError(f"no model named {name!r}; available: {self.names}")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    geometry: AgentGeometry
    library: ModelLibrary
    x0: np.ndarray
    m0: np.ndarray
    P0: np.ndarray
    n_hor: int = 100
    n_mc: int = 100
    seed: int = 0
    beta0: float = 10.0
    burn_in: int = 20
    ks: KsTestConfig = field(default_factory=KsTestConfig)

    def __post_init__(self):
        for name in ("x0", "m0", "P0"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n_s = self.library.true_model.transition.n_state
        if self.x0.shape != (n_s,):
            raise ConfigError(f"x0 must have length {n_s}", key="x0")
        if self.m0.shape != (n_s,):
            raise ConfigError(f"m0 must have length {n_s}", key="m0")
        if self.P0.shape != (n_s, n_s):
            raise ConfigError(f"P0 must be {n_s}x{n_s}", key="p0_diag")
        if not np.allclose(self.P0, self.P0.T, atol=1e-12):
            raise ConfigError("P0 must be symmetric", key="p0_diag")
        if np.linalg.eigvalsh(self.P0).min() < -1e-12:
            raise ConfigError("P0 must be positive semi-definite", key="p0_diag")
        if int(self.n_hor) != self.n_hor or self.n_hor < 1:
            raise ConfigError("n_hor must be ≥ 1", key="n_hor")
        if int(self.n_mc) != self.n_mc or self.n_mc < 1:
            raise ConfigError("n_mc must be ≥ 1", key="n_mc")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer", key="seed")
        if self.burn_in < 1 or self.burn_in > self.n_hor:
            raise ConfigError(f"burn_in must lie in [1, n_hor], got {self.burn_in}",
                              key="burn_in")
        for spec in self.library:
            obs = spec.observation
            if obs.n_agents != self.geometry.n_agents:
                raise ConfigError(
                    f"model {spec.name!r} covers {obs.n_agents} agents, "
                    f"geometry has {self.geometry.n_agents}", key="models")
            if obs.time_varying and obs.biases.shape[0] < self.n_hor:
                raise ConfigError(
                    f"bias table of model {spec.name!r} is shorter than n_hor",
                    key="models")

    @property
    def n_agents(self):
        return self.geometry.n_agents

    @property
    def n_state(self):
        return self.x0.size


def range_observation(agent_pos, target_pos, bias=0.0):
    """Noise-free range ``||p_agent - p_target|| + bias``."""
    d = np.asarray(target_pos, dtype=float) - np.asarray(agent_pos, dtype=float)
    return float(math.hypot(d[0], d[1]) + bias)


def ranges(geometry, state):
    """Distances from every agent to the target position in ``state``."""
    diff = np.asarray(state, dtype=float)[:2] - geometry.positions
    return np.hypot(diff[:, 0], diff[:, 1])


def observation_jacobian(geometry, state, obs_model=None):
    """Jacobian of the range vector w.r.t. the state, shape ``(N_A, N_S)``.

    Row ``i`` is the unit line-of-sight vector from agent ``i`` to the target
    over the position entries and zero over velocity. Biases do not depend
    on the state and contribute nothing, so ``obs_model`` is accepted only
    for interface symmetry.
    """
    state = np.asarray(state, dtype=float)
    diff = state[:2] - geometry.positions
    dist = np.hypot(diff[:, 0], diff[:, 1])
    if np.any(dist <= EPS_GEOM):
        bad = int(np.argmin(dist))
        raise SingularGeometryError(
            f"target at {state[:2].tolist()} coincides with agent {bad + 1}")
    J = np.zeros((geometry.n_agents, state.size))
    J[:, :2] = diff / dist[:, None]
    return J

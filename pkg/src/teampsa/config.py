"""Scenario configuration files (TOML).

Top-level keys::

    agents        [[x, y], ...]             required
    sigma_v       float or per-agent list   required
    true_biases   per-agent list or table   required
    x0            [px, py, vx, vy]          required
    m0            list                      default x0
    p0_diag       list                      default [0.1^2, 0.1^2, (vx0/100)^2, (vy0/100)^2]
    p0            full matrix               alternative to p0_diag
    ts            float                     default 1.0
    beta0         float                     default 10.0
    q_x, q_y      float                     default (v0/beta0)^2 / ts per axis
    n_hor, n_mc   int                       default 100, 100
    seed          int                       default 0
    burn_in       int                       default 20
    true_model    model name                default: candidate matching the truth
    [ks]          alpha (0.05), window ("cumulative" or integer W >= 5)
    [[models]]    name, assumed_biases, sigma_v (default top-level sigma_v)

Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import re
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .errors import ConfigError, DomainError
from .models import (
    AgentGeometry,
    ModelLibrary,
    ModelSpec,
    ObservationModel,
    ScenarioConfig,
    build_cv_transition,
    cv_noise_from_beta,
)
from .proficiency import KsTestConfig

TOP_KEYS = {
    "agents", "sigma_v", "true_biases", "x0", "m0", "p0_diag", "p0", "ts",
    "beta0", "q_x", "q_y", "n_hor", "n_mc", "seed", "burn_in", "true_model",
    "ks", "models",
}
REQUIRED_KEYS = ("agents", "sigma_v", "true_biases", "x0", "models")
KS_KEYS = {"alpha", "window"}
MODEL_KEYS = {"name", "assumed_biases", "sigma_v"}

REFERENCE_SCENARIO = "scenario_paper.toml"


def bundled_scenario(name=REFERENCE_SCENARIO):
    return resources.files("teampsa") / "scenarios" / name


def _line_of(text, key):
    if text is None:
        return None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for no, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return no
    return None


class _Checker:
    def __init__(self, path, text):
        self.path = path
        self.text = text

    def fail(self, key, message):
        leaf = key.rsplit(".", 1)[-1]
        raise ConfigError(f"{key}: {message}", key=key, path=self.path,
                          line=_line_of(self.text, leaf))

    def number(self, raw, key, integer=False):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            self.fail(key, f"expected {'integer' if integer else 'number'}, "
                           f"got {type(raw).__name__}")
        if integer and not isinstance(raw, int):
            self.fail(key, f"expected integer, got {type(raw).__name__}")
        return raw if integer else float(raw)

    def array(self, raw, key, ndim=(1,), length=None):
        if not isinstance(raw, list):
            self.fail(key, f"expected array, got {type(raw).__name__}")
        try:
            arr = np.array(raw, dtype=float)
        except (TypeError, ValueError):
            self.fail(key, "expected a (nested) array of numbers")
        if any(isinstance(v, bool) for v in np.ravel(np.array(raw, dtype=object))):
            self.fail(key, "expected numbers, got boolean")
        if arr.ndim not in ndim:
            self.fail(key, f"expected {' or '.join(f'{d}-D' for d in ndim)} array, "
                           f"got {arr.ndim}-D")
        if length is not None and arr.shape[-1] != length:
            self.fail(key, f"expected {length} entries per row, got {arr.shape[-1]}")
        return arr


def config_from_dict(data, path=None, text=None):
    """Validate a decoded configuration mapping and build a ScenarioConfig."""
    c = _Checker(path, text)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table", path=path)
    for key in data:
        if key not in TOP_KEYS:
            c.fail(key, "unknown key")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(f"{key}: missing required key", key=key, path=path)

    agents = c.array(data["agents"], "agents", ndim=(2,), length=2)
    n_a = agents.shape[0]
    x0 = c.array(data["x0"], "x0", length=4)
    m0 = c.array(data["m0"], "m0", length=4) if "m0" in data else x0.copy()
    if "p0" in data and "p0_diag" in data:
        c.fail("p0", "give either p0 or p0_diag, not both")
    if "p0" in data:
        P0 = c.array(data["p0"], "p0", ndim=(2,), length=4)
    elif "p0_diag" in data:
        P0 = np.diag(c.array(data["p0_diag"], "p0_diag", length=4))
    else:
        P0 = np.diag([0.1 ** 2, 0.1 ** 2, (x0[2] / 100) ** 2, (x0[3] / 100) ** 2])

    ts = c.number(data.get("ts", 1.0), "ts")
    beta0 = c.number(data.get("beta0", 10.0), "beta0")
    if not beta0 > 0:
        c.fail("beta0", "must be > 0")
    if not ts > 0:
        c.fail("ts", "must be > 0")
    q_default = cv_noise_from_beta(ts, x0[2:4], beta0)
    q_x = c.number(data.get("q_x", q_default[0]), "q_x")
    q_y = c.number(data.get("q_y", q_default[1]), "q_y")
    transition = build_cv_transition(ts, q_x, q_y)

    def sigma_of(raw, key):
        if isinstance(raw, list):
            return c.array(raw, key, length=n_a)
        return c.number(raw, key)

    sigma_v = sigma_of(data["sigma_v"], "sigma_v")
    true_biases = c.array(data["true_biases"], "true_biases", ndim=(1, 2), length=n_a)
    truth = _observation(c, sigma_v, true_biases, "true_biases")

    raw_models = data["models"]
    if not isinstance(raw_models, list) or not raw_models:
        c.fail("models", "expected at least one [[models]] table")
    specs = []
    for k, entry in enumerate(raw_models):
        if not isinstance(entry, dict):
            c.fail("models", f"entry {k} must be a table")
        for key in entry:
            if key not in MODEL_KEYS:
                c.fail(f"models.{key}", "unknown key")
        if "name" not in entry or not isinstance(entry["name"], str) or not entry["name"]:
            c.fail("models.name", f"entry {k} needs a non-empty string name")
        if "assumed_biases" not in entry:
            c.fail("models.assumed_biases", f"model {entry['name']!r} is missing it")
        biases = c.array(entry["assumed_biases"], "models.assumed_biases",
                         ndim=(1, 2), length=n_a)
        sig = sigma_of(entry.get("sigma_v", data["sigma_v"]), "models.sigma_v")
        obs = _observation(c, sig, biases, "models.assumed_biases")
        specs.append(ModelSpec(name=entry["name"], transition=transition, observation=obs))

    names = [s.name for s in specs]
    if "true_model" in data:
        if data["true_model"] not in names:
            c.fail("true_model", f"{data['true_model']!r} is not one of {names}")
        true_index = names.index(data["true_model"])
        if not specs[true_index].observation.same_as(truth):
            c.fail("true_model", f"model {data['true_model']!r} does not match "
                                 "sigma_v/true_biases")
    else:
        matches = [i for i, s in enumerate(specs) if s.observation.same_as(truth)]
        if not matches:
            c.fail("true_biases", "no [[models]] entry matches the generative model; "
                                  "the library must contain it")
        true_index = matches[0]

    ks_raw = data.get("ks", {})
    if not isinstance(ks_raw, dict):
        c.fail("ks", "expected a table")
    for key in ks_raw:
        if key not in KS_KEYS:
            c.fail(f"ks.{key}", "unknown key")
    window = ks_raw.get("window", "cumulative")
    if window == "cumulative":
        window = None
    elif isinstance(window, bool) or not isinstance(window, int):
        c.fail("ks.window", 'expected "cumulative" or an integer window length')
    try:
        ks = KsTestConfig(alpha=c.number(ks_raw.get("alpha", 0.05), "ks.alpha"),
                          window=window)
    except DomainError as exc:
        c.fail("ks.alpha" if "alpha" in str(exc) else "ks.window", str(exc))

    ints = {}
    for key, default in (("n_hor", 100), ("n_mc", 100), ("seed", 0), ("burn_in", 20)):
        ints[key] = c.number(data.get(key, default), key, integer=True)
    if ints["n_hor"] < 1:
        c.fail("n_hor", "n_hor must be ≥ 1")
    if ints["n_mc"] < 1:
        c.fail("n_mc", "n_mc must be ≥ 1")

    try:
        return ScenarioConfig(
            geometry=AgentGeometry(agents),
            library=ModelLibrary(tuple(specs), true_index),
            x0=x0, m0=m0, P0=P0, beta0=beta0, ks=ks, **ints,
        )
    except ConfigError as exc:
        if exc.path is None:
            c.fail(exc.key or "config", exc.message)
        raise


def _observation(c, sigma, biases, key):
    try:
        return ObservationModel(sigma_v=sigma, biases=biases)
    except ConfigError as exc:
        c.fail(exc.key if exc.key == "sigma_v" else key, exc.message)


def parse_config(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"TOML syntax error: {exc}", path=path, line=line) from exc
    return config_from_dict(data, path=path, text=text)


def _plain(a):
    return np.asarray(a, dtype=float).tolist()


def config_to_dict(config):
    """Explicit mapping that :func:`config_from_dict` maps back to ``config``."""
    lib = config.library
    truth = lib.true_model
    trans = truth.transition
    P0 = config.P0
    out = {
        "agents": _plain(config.geometry.positions),
        "sigma_v": _plain(truth.observation.sigma_v),
        "true_biases": _plain(truth.observation.biases),
        "true_model": truth.name,
        "x0": _plain(config.x0),
        "m0": _plain(config.m0),
        "ts": trans.ts,
        "beta0": float(config.beta0),
        "q_x": trans.q_x,
        "q_y": trans.q_y,
        "n_hor": int(config.n_hor),
        "n_mc": int(config.n_mc),
        "seed": int(config.seed),
        "burn_in": int(config.burn_in),
        "ks": {
            "alpha": config.ks.alpha,
            "window": "cumulative" if config.ks.window is None else int(config.ks.window),
        },
        "models": [
            {
                "name": s.name,
                "assumed_biases": _plain(s.observation.biases),
                "sigma_v": _plain(s.observation.sigma_v),
            }
            for s in lib
        ],
    }
    if np.count_nonzero(P0 - np.diag(np.diag(P0))) == 0:
        out["p0_diag"] = _plain(np.diag(P0))
    else:
        out["p0"] = _plain(P0)
    return out


def write_config(config, path):
    data = config_to_dict(config)
    # tomli_w only accepts integers below 2**63.
    if data["seed"] >= 2 ** 63:
        raise ConfigError("seed >= 2**63 cannot be written as a TOML integer", key="seed")
    Path(path).write_text(tomli_w.dumps(data), encoding="utf-8")


def config_digest(config):
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def reference_scenario(**overrides):
    """The bundled reference scenario, optionally with top-level keys replaced."""
    text = bundled_scenario().read_text(encoding="utf-8")
    data = tomli.loads(text)
    data.update(overrides)
    return config_from_dict(data, path=REFERENCE_SCENARIO, text=text)

"""Plot-ready CSV tables and JSON documents written by the CLI."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .harness import AGENT_CURVES, CURVE_KEYS

_CSV_NAMES = {"e2": "e2", "sjj": "sjj", "dks": "dks", "pval": "pval"}


def fmt(x):
    """17 significant digits: enough to round-trip any double."""
    return f"{float(x):.17g}"


def header(n_agents, with_trial=False):
    cols = ["trial"] if with_trial else []
    cols += ["t", "model"]
    for key in CURVE_KEYS:
        if key in AGENT_CURVES:
            cols += [f"{_CSV_NAMES[key]}_agent{j}" for j in range(1, n_agents + 1)]
        else:
            cols.append(key)
    return cols


def curve_rows(model, curves, trial=None):
    n_hor = curves["d_mpb_bar"].shape[0]
    for k in range(n_hor):
        row = [] if trial is None else [str(trial)]
        row += [str(k + 1), model]
        for key in CURVE_KEYS:
            val = curves[key][k]
            if key in AGENT_CURVES:
                row += [fmt(v) for v in val]
            else:
                row.append(fmt(val))
        yield row


def render_csv(n_agents, per_model, trial=None):
    """CSV text for ``{model: curves}``, model-major then time order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header(n_agents, with_trial=trial is not None))
    for model, curves in per_model.items():
        w.writerows(curve_rows(model, curves, trial))
    return buf.getvalue()


def read_trial_csv(path):
    """Inverse of :func:`render_csv` for a per-trial file.

    Returns ``(trial_id, {model: curves})``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    if head[:3] != ["trial", "t", "model"]:
        raise ValueError(f"{path}: not a per-trial table")
    n_agents = sum(1 for c in head if c.startswith("e2_agent"))
    if head != header(n_agents, with_trial=True):
        raise ValueError(f"{path}: unexpected column layout")
    trial_ids = {r[0] for r in body}
    if len(trial_ids) != 1:
        raise ValueError(f"{path}: expected rows of a single trial")
    by_model = {}
    for r in body:
        by_model.setdefault(r[2], []).append([float(v) for v in r[3:]])
    out = {}
    for model, vals in by_model.items():
        a = np.array(vals)
        curves, col = {}, 0
        for key in CURVE_KEYS:
            width = n_agents if key in AGENT_CURVES else 1
            block = a[:, col:col + width]
            curves[key] = block if key in AGENT_CURVES else block[:, 0]
            col += width
        out[model] = curves
    return int(trial_ids.pop()), out


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

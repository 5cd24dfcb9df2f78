"""Matching estimators for multiple treatments.

Array inputs: ``x`` is an n x P float array, ``treatment`` any sequence of
labels (converted with ``str``), ``y`` a length-n float array. Results that
the command line writes as JSON come back as parsed dictionaries.
"""

import json

import numpy as np

from . import _core
from ._core import NumericalError, ValidationError

__all__ = [
    "NumericalError",
    "ValidationError",
    "analyze",
    "analyze_csv",
    "default_sim_config",
    "dr_att",
    "fit_gps",
    "global_test",
    "ipw_att",
    "match",
    "render_tables",
    "simulate_cell",
]


def _x(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return x


def _labels(treatment):
    return [str(t) for t in treatment]


def fit_gps(x, treatment, ridge=0.0):
    return _core.fit_gps(_x(x), _labels(treatment), ridge)


def analyze(x, treatment, y, reference="", **options):
    """Pairwise ATT (or ATE with reference="all") with SEs and the global test."""
    if reference != "" and reference != "all":
        reference = str(reference)
    docs = _core.analyze(_x(x), _labels(treatment), np.asarray(y, dtype=float), reference, **options)
    out = {k: json.loads(docs[k]) for k in ("estimate", "inference", "overlap")}
    out["summary"] = docs["summary"]
    return out


def analyze_csv(data, treatment, outcome, covariates=(), out="analysis", **options):
    """Runs the file-based pipeline; returns (exit_code, message)."""
    return _core.analyze_csv(str(data), treatment, outcome, list(covariates), str(out), **options)


def match(x, treatment, reference, **options):
    return _core.match(_x(x), _labels(treatment), str(reference), **options)


def ipw_att(x, treatment, y, reference, weight_cap=None, ridge=0.0):
    return json.loads(
        _core.ipw_att(_x(x), _labels(treatment), np.asarray(y, dtype=float), str(reference), weight_cap, ridge))


def dr_att(x, treatment, y, reference, weight_cap=None, ridge=0.0):
    return json.loads(
        _core.dr_att(_x(x), _labels(treatment), np.asarray(y, dtype=float), str(reference), weight_cap, ridge))


def global_test(tau_hat, covariance, null_tau=None, alpha=0.05, pairs=None, pseudo_inverse=False):
    tau_hat = np.asarray(tau_hat, dtype=float)
    null = None if null_tau is None else np.asarray(null_tau, dtype=float)
    return json.loads(
        _core.global_test(tau_hat, np.asarray(covariance, dtype=float), null, alpha, pairs, pseudo_inverse))


def default_sim_config():
    return json.loads(_core.default_sim_config())


def simulate_cell(config=None, workers=1, **overrides):
    """Runs one simulation cell. Unspecified fields take the defaults."""
    cfg = default_sim_config()
    cfg.update(config or {})
    cfg.update(overrides)
    return json.loads(_core.simulate_cell(json.dumps(cfg), workers))


def render_tables(reports, table=0):
    return _core.render_tables([json.dumps(r) for r in reports], table)

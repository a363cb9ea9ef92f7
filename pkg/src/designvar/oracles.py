"""Exact enumeration oracles: psi, true variance, estimator expectations.

Everything here walks the full design support, so it applies to explicit
designs only. These are the reference quantities the estimators are tested
against; they deliberately use routes independent of the estimators
themselves (direct enumeration rather than shared algebra).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .core import (
    AssumptionError,
    ObservedData,
    PotentialOutcomes,
    ValidationError,
    as_value,
    reveal,
    weighted_fsum,
)
from .designs import Design, ExplicitDesign, MCEstimate
from .estimators import hajek


def _require_explicit(d: Design, what: str) -> ExplicitDesign:
    if not isinstance(d, ExplicitDesign):
        raise AssumptionError(f"{what} needs an enumerable design, got kind={d.kind!r}")
    return d


def psi(d: Design, v: np.ndarray) -> float:
    """Design-weighted squared-contrast functional of a unit vector v.

    psi(v) = (1/N^2) sum_w p_w (sum_treated v/pi - sum_control v/(1-pi))^2.
    Equals Var_d of the inverse-propensity estimator when v is the
    propensity-weighted average potential outcome vector c.
    """
    d = _require_explicit(d, "psi")
    v = np.asarray(v, dtype=float)
    if v.shape != (d.n,):
        raise ValidationError(f"psi needs a length-{d.n} vector, got shape {v.shape}")
    contrasts = d.contrast_matrix @ v
    return weighted_fsum(d.probs, contrasts * contrasts) / d.n**2


def psi_mc(d: Design, v: np.ndarray, m: int, seed: int) -> MCEstimate:
    """Monte Carlo version of :func:`psi` for sampler-backed designs."""
    v = np.asarray(v, dtype=float)
    if v.shape != (d.n,):
        raise ValidationError(f"psi needs a length-{d.n} vector, got shape {v.shape}")
    if m < 2:
        raise ValidationError("psi_mc needs at least 2 draws")
    pi = d.propensities
    draws = d.sample_matrix(m, seed).astype(float)
    vals = (draws @ (v / pi) - (1.0 - draws) @ (v / (1.0 - pi))) ** 2 / d.n**2
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m)), m)


def ht_values(d: ExplicitDesign, po: PotentialOutcomes) -> np.ndarray:
    """Inverse-propensity estimate at every support vector, in support order."""
    if po.n != d.n:
        raise ValidationError(f"table has {po.n} units but design has {d.n}")
    pi = d.propensities
    u = d.matrix
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise AssumptionError("positivity fails: some unit is always (or never) treated")
    return (u @ (po.y1 / pi) - (1.0 - u) @ (po.y0 / (1.0 - pi))) / d.n


def true_variance(d: Design, po: PotentialOutcomes) -> float:
    """Exact design variance of the inverse-propensity estimator.

    Computed directly as sum_w p_w (tau_hat(w) - tau)^2; psi(c_vector(...))
    must agree and is checked against this in the tests, not reused here.
    """
    d = _require_explicit(d, "true_variance")
    dev = ht_values(d, po) - po.tau
    return weighted_fsum(d.probs, dev * dev)


def estimator_expectation(
    d: Design,
    po: PotentialOutcomes,
    est: Callable[[ObservedData], "float | object"],
) -> float:
    """Design expectation of an estimator evaluated on every revealed table."""
    d = _require_explicit(d, "estimator_expectation")
    if po.n != d.n:
        raise ValidationError(f"table has {po.n} units but design has {d.n}")
    pairs = getattr(d, "pairs", None)
    values = []
    for w, _ in d.enumerate_support():
        obs = reveal(po, w, pair_labels=pairs)
        try:
            values.append(as_value(est(obs)))
        except Exception as exc:
            exc.args = (f"{exc} (estimator failed at support vector {w})",)
            raise
    return weighted_fsum(d.probs, values)


def estimator_moments(
    d: Design,
    po: PotentialOutcomes,
    est: Callable[[ObservedData], "float | object"],
) -> tuple[float, float]:
    """Design expectation and standard deviation of an estimator."""
    d = _require_explicit(d, "estimator_moments")
    pairs = getattr(d, "pairs", None)
    values = []
    for w, _ in d.enumerate_support():
        obs = reveal(po, w, pair_labels=pairs)
        try:
            values.append(as_value(est(obs)))
        except Exception as exc:
            exc.args = (f"{exc} (estimator failed at support vector {w})",)
            raise
    vals = np.asarray(values)
    mean = weighted_fsum(d.probs, vals)
    var = weighted_fsum(d.probs, (vals - mean) ** 2)
    return mean, math.sqrt(max(var, 0.0))


def true_mse_hajek(d: Design, po: PotentialOutcomes) -> float:
    """Exact design MSE of the ratio estimator about the true effect."""
    d = _require_explicit(d, "true_mse_hajek")
    if po.n != d.n:
        raise ValidationError(f"table has {po.n} units but design has {d.n}")
    pi = d.propensities
    tau = po.tau
    devs = []
    for w, _ in d.enumerate_support():
        obs = reveal(po, w)
        try:
            devs.append(hajek(obs, pi) - tau)
        except AssumptionError as exc:
            exc.args = (f"{exc} (at support vector {w})",)
            raise
    devs = np.asarray(devs)
    return weighted_fsum(d.probs, devs * devs)

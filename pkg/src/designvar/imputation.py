"""Variance estimation by imputing the missing potential outcomes.

The design variance of the inverse-probability estimator equals psi(c),
where c_i = (1 - pi_i) Y_i(1) + pi_i Y_i(0) mixes each unit's potential
outcomes and psi is a known quadratic in the design. Plugging an estimate
of c into psi gives a variance estimate that is nonnegative by
construction. This module builds the c estimates: effect-guess imputation
of the science table, direct unbiased estimation of c from one observed
arm, and jackknife leave-one-out effect guesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    MC_DEFAULT_DRAWS,
    PROB_TOL,
    AssignmentVector,
    AssumptionError,
    ObservedData,
    PotentialOutcomes,
    ValidationError,
    VarianceEstimate,
    _as_float_vector,
)
from .designs import Design, ExplicitDesign, MCEstimate
from .estimators import check_propensities, horvitz_thompson
from .oracles import psi

GAMMA_KINDS = ("fixed", "tau_hat", "tau_loo", "theta_loo")


@dataclass(frozen=True)
class GammaSpec:
    """Which effect guess drives the c estimate.

    kind 'fixed' carries a scalar or per-unit vector; 'tau_hat' plugs in the
    realized inverse-probability effect estimate; 'tau_loo' and 'theta_loo'
    are the leave-one-out jackknife versions (the latter reweighted so its
    conditional expectation is assignment-free).
    """

    kind: str
    value: float | tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in GAMMA_KINDS:
            raise ValidationError(
                f"gamma kind must be one of {GAMMA_KINDS}, got {self.kind!r}"
            )
        if self.kind == "fixed":
            if self.value is None:
                raise ValidationError("fixed gamma needs a value")
            if np.ndim(self.value) == 0:
                val: float | tuple[float, ...] = float(self.value)
                if not math.isfinite(val):
                    raise ValidationError(f"fixed gamma must be finite, got {val}")
            else:
                arr = _as_float_vector(np.asarray(self.value, dtype=float), "gamma")
                val = tuple(float(v) for v in arr)
            object.__setattr__(self, "value", val)
        elif self.value is not None:
            raise ValidationError(f"gamma kind {self.kind!r} takes no value")

    @classmethod
    def fixed(cls, value) -> "GammaSpec":
        return cls(kind="fixed", value=value)

    @classmethod
    def parse(cls, text: str) -> "GammaSpec":
        """Parse CLI-style specs: 'fixed:<v>[,<v>...]', 'tau-hat', ..."""
        text = text.strip()
        if text.startswith("fixed:"):
            payload = text[len("fixed:") :]
            parts = [p for p in payload.split(",") if p]
            if not parts:
                raise ValidationError(f"no value in gamma spec {text!r}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ValidationError(f"bad gamma value in {text!r}") from exc
            return cls.fixed(vals[0] if len(vals) == 1 else vals)
        kind = text.replace("-", "_")
        if kind in GAMMA_KINDS and kind != "fixed":
            return cls(kind=kind)
        raise ValidationError(
            f"cannot parse gamma spec {text!r}; expected fixed:<v>, tau-hat, "
            "tau-loo, or theta-loo"
        )

    def describe(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.value})"
        return self.kind


def _per_unit(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    elif arr.shape != (n,):
        raise ValidationError(
            f"{name} must be a scalar or length-{n} vector, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


def impute_potential_outcomes(obs: ObservedData, beta) -> PotentialOutcomes:
    """Fill in the missing arm as if unit i's treatment effect were beta_i."""
    beta = _per_unit(beta, obs.n, "beta")
    t = obs.w.to_array().astype(bool)
    y1 = np.where(t, obs.y_obs, obs.y_obs + beta)
    y0 = np.where(t, obs.y_obs - beta, obs.y_obs)
    return PotentialOutcomes(y0=y0, y1=y1)


def theta_ht(obs: ObservedData, pi: np.ndarray) -> float:
    """Inverse-probability estimate of the reweighted mean contrast theta.

    theta = (1/N) sum[{(1-pi)/pi} Y(1) - {pi/(1-pi)} Y(0)]; it collapses to
    the average treatment effect when pi is 0.5 everywhere.
    """
    pi = check_propensities(pi, obs.n)
    t = obs.w.to_array().astype(float)
    y = obs.y_obs
    terms = list(t * y * (1.0 - pi) / pi**2) + list(
        -(1.0 - t) * y * pi / (1.0 - pi) ** 2
    )
    return math.fsum(terms) / obs.n


def impute_c(obs: ObservedData, pi: np.ndarray, gamma) -> np.ndarray:
    """Single-arm unbiased estimate of c_i = (1-pi_i)Y_i(1) + pi_i Y_i(0).

    c_hat_i = {(1-pi_i)/pi_i} Y_obs_i - (1-pi_i) gamma_i when treated, and
    {pi_i/(1-pi_i)} Y_obs_i + pi_i gamma_i when control. Unbiased for any
    deterministic gamma because the gamma terms cancel in expectation.
    """
    pi = check_propensities(pi, obs.n)
    gamma = _per_unit(gamma, obs.n, "gamma")
    t = obs.w.to_array().astype(bool)
    y = obs.y_obs
    treated = (1.0 - pi) / pi * y - (1.0 - pi) * gamma
    control = pi / (1.0 - pi) * y + pi * gamma
    return np.where(t, treated, control)


def implicit_beta(obs: ObservedData, pi: np.ndarray, gamma) -> np.ndarray:
    """The per-unit effect guess whose imputed table reproduces impute_c.

    Feeding the result to impute_potential_outcomes and mixing the imputed
    arms with (1-pi, pi) weights gives exactly impute_c(obs, pi, gamma);
    at pi = 0.5 it reduces to gamma itself.
    """
    pi = check_propensities(pi, obs.n)
    gamma = _per_unit(gamma, obs.n, "gamma")
    t = obs.w.to_array().astype(bool)
    y = obs.y_obs
    treated = (2.0 * pi - 1.0) / pi**2 * y + (1.0 - pi) / pi * gamma
    control = (2.0 * pi - 1.0) / (1.0 - pi) ** 2 * y + pi / (1.0 - pi) * gamma
    return np.where(t, treated, control)


def _conditional_row(d: Design, i: int, wi: int) -> np.ndarray:
    """Pr(W_j = 1 | W_i = wi) for all j, with entry i undefined."""
    if isinstance(d, ExplicitDesign):
        return d.conditional_propensities(i, wi)
    pi = d.propensities
    base = float(pi[i]) if wi else 1.0 - float(pi[i])
    if base <= PROB_TOL:
        raise AssumptionError(f"conditioning event W_{i}={wi} has probability 0")
    out = np.full(d.n, np.nan)
    for j in range(d.n):
        if j == i:
            continue
        cell = d.pairwise_prob(i, j, wi, 1)
        if isinstance(cell, MCEstimate):
            raise AssumptionError(
                "exact conditional assignment probabilities are unavailable "
                f"for this sampler-backed {d.kind} design"
            )
        out[j] = cell / base
    return out


def _loo_estimate(
    obs: ObservedData, pi: np.ndarray, cond: np.ndarray, i: int, reweighted: bool
) -> float:
    """Leave-one-out inverse-probability estimate excluding unit i.

    With reweighted=True the summands carry the extra (1-pi_j)/pi_j and
    pi_j/(1-pi_j) factors that target theta instead of the effect.
    """
    bits = obs.w.bits
    y = obs.y_obs
    n = obs.n
    treated_terms = []
    control_terms = []
    for j in range(n):
        if j == i:
            continue
        ptilde = cond[j]
        if bits[j] == 1:
            if ptilde <= PROB_TOL:
                raise AssumptionError(
                    f"unit {j} is treated but Pr(W_{j}=1 | W_{i}={bits[i]}) = 0; "
                    "leave-one-out weight undefined"
                )
            term = y[j] / ptilde
            if reweighted:
                term *= (1.0 - pi[j]) / pi[j]
            treated_terms.append(term)
        else:
            if ptilde >= 1.0 - PROB_TOL:
                raise AssumptionError(
                    f"unit {j} is control but Pr(W_{j}=1 | W_{i}={bits[i]}) = 1; "
                    "leave-one-out weight undefined"
                )
            term = y[j] / (1.0 - ptilde)
            if reweighted:
                term *= pi[j] / (1.0 - pi[j])
            control_terms.append(term)
    if not treated_terms:
        raise AssumptionError(
            f"leave-one-out estimate undefined: no treated units remain "
            f"after excluding unit {i}"
        )
    if not control_terms:
        raise AssumptionError(
            f"leave-one-out estimate undefined: no control units remain "
            f"after excluding unit {i}"
        )
    return (math.fsum(treated_terms) - math.fsum(control_terms)) / (n - 1)


def gamma_vector(spec: GammaSpec, obs: ObservedData, d: Design) -> np.ndarray:
    """Evaluate the effect-guess vector once from the realized data."""
    n = obs.n
    if spec.kind == "fixed":
        return _per_unit(spec.value, n, "gamma")
    if d.n != n:
        raise ValidationError(f"design has {d.n} units but data has {n}")
    pi = check_propensities(d.propensities, n)
    if spec.kind == "tau_hat":
        return np.full(n, horvitz_thompson(obs, pi))
    bits = obs.w.bits
    out = np.empty(n)
    for i in range(n):
        cond = _conditional_row(d, i, bits[i])
        out[i] = _loo_estimate(obs, pi, cond, i, reweighted=spec.kind == "theta_loo")
    return out


def v_imputation(d: Design, obs: ObservedData, spec: GammaSpec) -> VarianceEstimate:
    """Exact psi(c_hat) by support enumeration."""
    if not isinstance(d, ExplicitDesign):
        raise AssumptionError(
            f"exact enumeration unavailable for a sampler-backed {d.kind} "
            "design; use v_imputation_mc"
        )
    if obs.n != d.n:
        raise ValidationError(f"observed data has {obs.n} units, design has {d.n}")
    pi = check_propensities(d.propensities, d.n)
    gamma = gamma_vector(spec, obs, d)
    c_hat = impute_c(obs, pi, gamma)
    return VarianceEstimate(
        value=psi(d, c_hat),
        estimator="imputation",
        params={"gamma": spec.describe()},
    )


def v_imputation_mc(
    d: Design,
    obs: ObservedData,
    spec: GammaSpec,
    m: int = MC_DEFAULT_DRAWS,
    seed: int | None = None,
) -> VarianceEstimate:
    """Monte Carlo psi(c_hat): resample the design over a fixed imputed table.

    1. Impute the science table with the effect guess that makes its c
       vector equal impute_c's estimate (so the MC target is the exact
       estimator's value).
    2. Draw m assignments from the design.
    3. Recompute the inverse-probability effect estimate on each draw.
    4. Report the sample variance (divisor m - 1), with a jackknife
       standard error for the variance itself.
    """
    if m < 2:
        raise ValidationError(f"need at least 2 draws, got {m}")
    if obs.n != d.n:
        raise ValidationError(f"observed data has {obs.n} units, design has {d.n}")
    pi = check_propensities(d.propensities, d.n)
    gamma = gamma_vector(spec, obs, d)
    beta = implicit_beta(obs, pi, gamma)
    table = impute_potential_outcomes(obs, beta)
    draws = np.asarray(d.sample_matrix(m, seed), dtype=float)
    tau_m = draws @ (table.y1 / pi) / d.n - (1.0 - draws) @ (table.y0 / (1.0 - pi)) / d.n
    dev = tau_m - tau_m.mean()
    total = float(dev @ dev)
    value = total / (m - 1)
    if m > 2:
        sq_dev = dev * dev - total / m
        se = math.sqrt(m * float(sq_dev @ sq_dev)) / ((m - 1) ** 0.5 * (m - 2))
    else:
        se = math.nan
    return VarianceEstimate(
        value=value,
        estimator="imputation",
        exact=False,
        mc_draws=m,
        mc_se=se,
        params={"gamma": spec.describe(), "seed": seed},
    )


def imputation_bias_terms(
    d: Design, po: PotentialOutcomes, w: AssignmentVector, beta: float
) -> tuple[float, float]:
    """The two per-realization error terms of fixed-guess imputation.

    Under effect homogeneity, psi of the imputed-table c vector equals the
    true design variance plus these two terms: a nonnegative quadratic in
    the realized assignment (scaled by the squared guess error) and a cross
    term that averages to zero on fixed-total-weight designs.
    """
    if not isinstance(d, ExplicitDesign):
        raise AssumptionError(
            f"error-term enumeration needs an explicit design, got {d.kind} sampler"
        )
    if po.n != d.n or w.n != d.n:
        raise ValidationError("design, table, and assignment sizes must agree")
    n = d.n
    pi = check_propensities(d.propensities, n)
    u = d.matrix
    probs = d.probs
    sizes = u.sum(axis=1)
    t = w.to_array().astype(float)

    r_y0 = u @ (po.y0 / pi) - (1.0 - u) @ (po.y0 / (1.0 - pi))
    k = u @ ((1.0 - pi) / pi) - (n - sizes)
    r_w = u @ (t / pi) - (1.0 - u) @ (t / (1.0 - pi))
    base = r_y0 + po.tau * k
    gap = r_w - k

    err = po.tau - beta
    a1 = err**2 / n**2 * math.fsum((probs * gap * gap).tolist())
    a2 = 2.0 * err / n**2 * math.fsum((probs * base * gap).tolist())
    return a1, a2

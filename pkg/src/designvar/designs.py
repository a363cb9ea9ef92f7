"""Randomized designs: probability queries, enumeration, sampling, checks.

A design is either explicit (materialized support + probabilities, every
query exact) or sampler-backed (draws available, probability queries are
analytic where a closed form exists and Monte Carlo estimates otherwise).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .core import (
    PROB_TOL,
    SUPPORT_CAP,
    WEIGHT_TOL,
    AssignmentVector,
    AssumptionError,
    ValidationError,
)

BalanceCriterion = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo probability estimate with its standard error."""

    value: float
    se: float
    draws: int


@dataclass(frozen=True)
class AssumptionReport:
    """Per-design flags for the assumptions the estimators rely on.

    ``None`` means the check needs enumeration and the design is
    sampler-backed. ``details`` carries a human-readable diagnostic per flag.
    """

    positivity: bool | None
    equal_size_constant_propensity: bool | None
    epsem: bool | None
    measurable: bool | None
    closed_under_label_switching: bool | None
    substitution: bool | None
    fixed_total_weight: bool | None
    details: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        flags = {
            k: getattr(self, k)
            for k in (
                "positivity",
                "equal_size_constant_propensity",
                "epsem",
                "measurable",
                "closed_under_label_switching",
                "substitution",
                "fixed_total_weight",
            )
        }
        return {"flags": flags, "details": dict(self.details)}


def _rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class Design:
    """Common interface of explicit and sampler-backed designs."""

    n: int
    kind: str

    @property
    def is_enumerable(self) -> bool:
        raise NotImplementedError

    @property
    def propensities(self) -> np.ndarray:
        raise NotImplementedError

    def propensity(self, i: int) -> float:
        self._check_unit(i)
        return float(self.propensities[i])

    def sample_matrix(self, m: int, seed: int | np.random.Generator | None) -> np.ndarray:
        """Draw ``m`` assignments as an (m, n) 0/1 array."""
        raise NotImplementedError

    def sample_assignment(self, seed: int | np.random.Generator | None) -> AssignmentVector:
        row = self.sample_matrix(1, seed)[0]
        return AssignmentVector.from_bits(row.tolist())

    def _check_unit(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise ValidationError(f"unit index {i} out of range for n={self.n}")

    def _check_pair(self, i: int, j: int) -> None:
        self._check_unit(i)
        self._check_unit(j)
        if i == j:
            raise ValidationError("pairwise probabilities need two distinct units")


class ExplicitDesign(Design):
    """A design with a materialized support; all queries are exact."""

    def __init__(
        self,
        vectors: Sequence[AssignmentVector],
        probs: Sequence[float] | np.ndarray,
        *,
        kind: str = "explicit",
        pairs: tuple[tuple[int, int], ...] | None = None,
        meta: dict[str, Any] | None = None,
    ) -> None:
        if len(vectors) == 0:
            raise ValidationError("design support is empty")
        ns = {v.n for v in vectors}
        if len(ns) != 1:
            raise ValidationError(f"support vectors have mixed lengths: {sorted(ns)}")
        if len({v.mask for v in vectors}) != len(vectors):
            raise ValidationError("support vectors must be distinct")
        p = np.asarray(probs, dtype=float)
        if p.shape != (len(vectors),):
            raise ValidationError(
                f"{len(vectors)} support vectors but {p.size} probabilities"
            )
        if np.any(p <= 0) or not np.all(np.isfinite(p)):
            raise ValidationError("probabilities must be finite and strictly positive")
        total = math.fsum(p.tolist())
        if abs(total - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")

        order = np.argsort([v.mask for v in vectors], kind="stable")
        self.n = next(iter(ns))
        self.kind = kind
        self._vectors: tuple[AssignmentVector, ...] = tuple(vectors[k] for k in order)
        self._probs = (p[order] / total).copy()
        self._probs.setflags(write=False)
        self._index = {v.mask: k for k, v in enumerate(self._vectors)}
        self.pairs = pairs
        self.meta = dict(meta or {})

    # -- support -----------------------------------------------------------
    @property
    def is_enumerable(self) -> bool:
        return True

    @property
    def support(self) -> tuple[AssignmentVector, ...]:
        return self._vectors

    @property
    def support_size(self) -> int:
        return len(self._vectors)

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    def enumerate_support(self) -> Iterator[tuple[AssignmentVector, float]]:
        """Support in lexicographic bit-string order with probabilities."""
        for v, p in zip(self._vectors, self._probs):
            yield v, float(p)

    def index_of(self, w: AssignmentVector) -> int:
        if w.n != self.n:
            raise ValidationError(f"assignment has {w.n} units, design has {self.n}")
        k = self._index.get(w.mask)
        if k is None:
            raise ValidationError(f"assignment {w} is not in the design support")
        return k

    def __contains__(self, w: AssignmentVector) -> bool:
        return w.n == self.n and w.mask in self._index

    def prob_of(self, w: AssignmentVector) -> float:
        if w.n != self.n:
            raise ValidationError(f"assignment has {w.n} units, design has {self.n}")
        k = self._index.get(w.mask)
        return 0.0 if k is None else float(self._probs[k])

    @cached_property
    def matrix(self) -> np.ndarray:
        """(support_size, n) float matrix of assignment indicators."""
        m = np.array([v.bits for v in self._vectors], dtype=float)
        m.setflags(write=False)
        return m

    # -- probability queries -------------------------------------------------
    @cached_property
    def propensities(self) -> np.ndarray:
        pi = self._probs @ self.matrix
        pi.setflags(write=False)
        return pi

    @cached_property
    def _p11(self) -> np.ndarray:
        u = self.matrix
        p11 = (u * self._probs[:, None]).T @ u
        p11.setflags(write=False)
        return p11

    def pairwise_prob(self, i: int, j: int, wi: int, wj: int) -> float:
        self._check_pair(i, j)
        pi, pj = self.propensities[i], self.propensities[j]
        p11 = self._p11[i, j]
        if (wi, wj) == (1, 1):
            val = p11
        elif (wi, wj) == (1, 0):
            val = pi - p11
        elif (wi, wj) == (0, 1):
            val = pj - p11
        elif (wi, wj) == (0, 0):
            val = 1.0 - pi - pj + p11
        else:
            raise ValidationError(f"cell indicators must be 0/1, got ({wi},{wj})")
        # exact zeros can come out as tiny negatives after the subtractions
        return float(max(val, 0.0))

    def pairwise_cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(P11, P10, P01, P00) joint-assignment matrices, exact tiny negatives
        clipped to 0. Off-diagonal entries are the pairwise cell probabilities;
        diagonals are the (degenerate) single-unit values and should be ignored.
        """
        pi = self.propensities
        p11 = self._p11
        p10 = np.clip(pi[:, None] - p11, 0.0, None)
        p01 = np.clip(pi[None, :] - p11, 0.0, None)
        p00 = np.clip(1.0 - pi[:, None] - pi[None, :] + p11, 0.0, None)
        return p11, p10, p01, p00

    def conditional_propensities(self, i: int, wi: int) -> np.ndarray:
        """Pr(W_j = 1 | W_i = wi) for every j; entry i is NaN."""
        self._check_unit(i)
        if wi not in (0, 1):
            raise ValidationError(f"conditioning state must be 0/1, got {wi}")
        pi = self.propensities
        denom = pi[i] if wi == 1 else 1.0 - pi[i]
        if denom <= 0.0:
            raise AssumptionError(
                f"cannot condition on W_{i}={wi}: that event has probability 0"
            )
        cell = self._p11[i] if wi == 1 else pi - self._p11[i]
        out = np.clip(cell / denom, 0.0, 1.0)
        out[i] = np.nan
        return out

    # -- sampling ------------------------------------------------------------
    def sample_matrix(self, m: int, seed: int | np.random.Generator | None) -> np.ndarray:
        rng = _rng(seed)
        rows = rng.choice(self.support_size, size=m, p=self._probs)
        return self.matrix[rows].astype(np.int8)

    # -- derived helper matrices used by the oracles -------------------------
    @cached_property
    def sign_matrix(self) -> np.ndarray:
        """(support_size, n) matrix of l(w) = 2w - 1 sign vectors."""
        s = 2.0 * self.matrix - 1.0
        s.setflags(write=False)
        return s

    @cached_property
    def contrast_matrix(self) -> np.ndarray:
        """Rows D_w with D_wi = w_i/pi_i - (1-w_i)/(1-pi_i).

        The Horvitz-Thompson error can be written (1/N) D_w . c - tau, so
        psi(v) = (1/N^2) sum_w p_w (D_w . v)^2.
        """
        pi = self.propensities
        if np.any(pi <= 0.0) or np.any(pi >= 1.0):
            raise AssumptionError(
                "positivity fails: some unit is always (or never) treated"
            )
        u = self.matrix
        d = u / pi - (1.0 - u) / (1.0 - pi)
        d.setflags(write=False)
        return d


class SampledDesign(Design):
    """A design known only through a sampler (support too large to list).

    Propensities must either be supplied analytically or are estimated on
    demand from a declared Monte Carlo budget; pairwise queries without a
    closed form always come back as :class:`MCEstimate`, never as bare
    point values.
    """

    def __init__(
        self,
        n: int,
        sampler: Callable[[np.random.Generator, int], np.ndarray],
        *,
        kind: str = "sampled",
        propensities: np.ndarray | None = None,
        pairwise: Callable[[int, int, int, int], float] | None = None,
        mc_budget: int = 20_000,
        probe_seed: int = 0,
        meta: dict[str, Any] | None = None,
    ) -> None:
        if n <= 0:
            raise ValidationError(f"n must be positive, got {n}")
        if mc_budget < 2:
            raise ValidationError("mc_budget must be at least 2")
        self.n = n
        self.kind = kind
        self._sampler = sampler
        self._pi = None if propensities is None else np.asarray(propensities, float)
        self._pairwise = pairwise
        self.mc_budget = int(mc_budget)
        self.probe_seed = int(probe_seed)
        self.meta = dict(meta or {})

    @property
    def is_enumerable(self) -> bool:
        return False

    def enumerate_support(self) -> Iterator[tuple[AssignmentVector, float]]:
        raise AssumptionError(
            f"{self.kind} design with n={self.n} is sampler-backed; "
            "its support cannot be enumerated"
        )

    @property
    def propensities(self) -> np.ndarray:
        if self._pi is None:
            raise AssumptionError(
                "no analytic propensities; use propensity_mc for estimates"
            )
        return self._pi

    def _probe(self, spawn_key: tuple[int, ...]) -> np.ndarray:
        seq = np.random.SeedSequence(entropy=self.probe_seed, spawn_key=spawn_key)
        return self.sample_matrix(self.mc_budget, np.random.default_rng(seq))

    def propensity_mc(self, i: int) -> MCEstimate:
        self._check_unit(i)
        draws = self._probe((0, i))[:, i]
        m = draws.shape[0]
        p = float(draws.mean())
        return MCEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / m), m)

    def pairwise_prob(self, i: int, j: int, wi: int, wj: int) -> float | MCEstimate:
        self._check_pair(i, j)
        if self._pairwise is not None:
            return self._pairwise(i, j, wi, wj)
        draws = self._probe((1, i, j))
        hits = (draws[:, i] == wi) & (draws[:, j] == wj)
        m = hits.shape[0]
        p = float(hits.mean())
        return MCEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / m), m)

    def sample_matrix(self, m: int, seed: int | np.random.Generator | None) -> np.ndarray:
        rng = _rng(seed)
        return self._sampler(rng, m)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_explicit(
    support: Sequence[AssignmentVector | str | Sequence[int]],
    probs: Sequence[float],
    *,
    kind: str = "explicit",
    pairs: tuple[tuple[int, int], ...] | None = None,
) -> ExplicitDesign:
    vecs = []
    for w in support:
        if isinstance(w, AssignmentVector):
            vecs.append(w)
        elif isinstance(w, str):
            vecs.append(AssignmentVector.from_string(w))
        else:
            vecs.append(AssignmentVector.from_bits(w))
    return ExplicitDesign(vecs, probs, kind=kind, pairs=pairs)


def _crd_masks(n: int, k: int) -> list[int]:
    out = []
    for treated in itertools.combinations(range(n), k):
        mask = 0
        for i in treated:
            mask |= 1 << (n - 1 - i)
        out.append(mask)
    return out


def _crd_pairwise(n: int, k: int) -> Callable[[int, int, int, int], float]:
    denom = n * (n - 1)
    cells = {
        (1, 1): k * (k - 1) / denom,
        (1, 0): k * (n - k) / denom,
        (0, 1): k * (n - k) / denom,
        (0, 0): (n - k) * (n - k - 1) / denom,
    }

    def pairwise(i: int, j: int, wi: int, wj: int) -> float:
        return cells[(wi, wj)]

    return pairwise


def build_crd(
    n: int,
    n_treated: int,
    *,
    cap: int = SUPPORT_CAP,
    allow_sampler: bool = True,
) -> Design:
    """Completely randomized design: uniform over all size-``n_treated`` groups."""
    if not 0 < n_treated < n:
        raise ValidationError(f"need 0 < n_treated < n, got n_treated={n_treated}, n={n}")
    count = math.comb(n, n_treated)
    meta = {"n_treated": n_treated}
    if count <= cap:
        masks = _crd_masks(n, n_treated)
        vecs = [AssignmentVector(n, m) for m in masks]
        return ExplicitDesign(vecs, np.full(count, 1.0 / count), kind="crd", meta=meta)
    if not allow_sampler:
        raise AssumptionError(
            f"support too large: C({n},{n_treated}) = {count} exceeds cap {cap}"
        )

    def sampler(rng: np.random.Generator, m: int) -> np.ndarray:
        out = np.zeros((m, n), dtype=np.int8)
        for r in range(m):
            out[r, rng.choice(n, size=n_treated, replace=False)] = 1
        return out

    return SampledDesign(
        n,
        sampler,
        kind="crd",
        propensities=np.full(n, n_treated / n),
        pairwise=_crd_pairwise(n, n_treated),
        meta=meta,
    )


def build_matched_pair(
    pairs: Sequence[tuple[int, int]],
    *,
    cap: int = SUPPORT_CAP,
) -> ExplicitDesign:
    """Matched-pair design: exactly one treated unit per pair, all splits equal."""
    pairs = tuple((int(a), int(b)) for a, b in pairs)
    units = [u for ab in pairs for u in ab]
    n = 2 * len(pairs)
    if sorted(units) != list(range(n)):
        raise ValidationError("pairs must be disjoint and cover units 0..n-1")
    count = 1 << len(pairs)
    if count > cap:
        raise AssumptionError(
            f"support too large: 2^{len(pairs)} = {count} exceeds cap {cap}"
        )
    vecs = []
    for chosen in itertools.product(*pairs):
        mask = 0
        for i in chosen:
            mask |= 1 << (n - 1 - i)
        vecs.append(AssignmentVector(n, mask))
    return ExplicitDesign(
        vecs, np.full(count, 1.0 / count), kind="matched_pair", pairs=pairs
    )


def asmd(x: Sequence[float] | np.ndarray, w: AssignmentVector) -> float:
    """Absolute standardized mean difference of ``x`` between the two groups.

    |mean_t - mean_c| / sqrt((s2_t + s2_c) / 2) with sample variances.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (w.n,):
        raise ValidationError(f"covariate length {x.shape} does not match n={w.n}")
    bits = w.to_array().astype(bool)
    xt, xc = x[bits], x[~bits]
    if len(xt) < 2 or len(xc) < 2:
        raise ValidationError("asmd needs at least two units per group")
    scale = math.sqrt((xt.var(ddof=1) + xc.var(ddof=1)) / 2.0)
    if scale == 0.0:
        raise ValidationError("asmd undefined: zero pooled variance")
    return abs(float(xt.mean() - xc.mean())) / scale


def max_asmd(covariates: np.ndarray, w: AssignmentVector) -> float:
    """Largest ASMD across covariate columns (the rerandomization criterion)."""
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return max(asmd(x[:, c], w) for c in range(x.shape[1]))


def build_rerandomized(
    base: Design,
    covariates: np.ndarray,
    threshold: float,
    *,
    criterion: str | BalanceCriterion = "max-asmd",
    retry_budget: int = 200_000,
) -> Design:
    """Keep only assignments whose balance criterion is below ``threshold``.

    Enumerable bases are filtered exactly (probabilities renormalized);
    sampler-backed bases become accept-reject samplers.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != base.n:
        raise ValidationError(
            f"covariates have {x.shape[0]} rows but the design has {base.n} units"
        )

    if criterion == "max-asmd":
        def score(w: AssignmentVector) -> float:
            return max_asmd(x, w)
        builtin = True
    elif callable(criterion):
        def score(w: AssignmentVector) -> float:
            return float(criterion(x, w))  # type: ignore[operator]
        builtin = False
    else:
        raise ValidationError(f"unknown balance criterion {criterion!r}")

    meta = {"threshold": float(threshold), "base_kind": base.kind}

    if isinstance(base, ExplicitDesign):
        keep = [k for k, (w, _) in enumerate(base.enumerate_support())
                if score(w) < threshold]
        if not keep:
            raise ValidationError(
                f"infeasible threshold {threshold}: no support vector is balanced enough"
            )
        vecs = [base.support[k] for k in keep]
        probs = base.probs[keep]
        return ExplicitDesign(
            vecs, probs / probs.sum(), kind="rerandomized",
            meta={**meta, "base_support": base.support_size},
        )

    assert isinstance(base, SampledDesign)

    def sampler(rng: np.random.Generator, m: int) -> np.ndarray:
        out = np.zeros((m, base.n), dtype=np.int8)
        tries = 0
        got = 0
        while got < m:
            if tries >= retry_budget:
                rate = got / tries if tries else 0.0
                raise AssumptionError(
                    f"accept-reject budget {retry_budget} exhausted; "
                    f"acceptance rate so far about {rate:.2e}"
                )
            batch = base.sample_matrix(min(m - got, 1024), rng)
            tries += len(batch)
            for row in batch:
                if score(AssignmentVector.from_bits(row.tolist())) < threshold:
                    out[got] = row
                    got += 1
                    if got == m:
                        break
        return out

    # For an equal-group CRD base the max-ASMD criterion is invariant under
    # swapping the two groups, so the accepted set stays closed under label
    # switching and every propensity is exactly 1/2.
    pi = None
    if (
        builtin
        and base.kind == "crd"
        and base.meta.get("n_treated") == base.n // 2
        and base.n % 2 == 0
    ):
        pi = np.full(base.n, 0.5)
    return SampledDesign(
        base.n, sampler, kind="rerandomized", propensities=pi, meta=meta,
        mc_budget=getattr(base, "mc_budget", 20_000),
    )


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------

def check_assumptions(d: Design) -> AssumptionReport:
    """Evaluate every design assumption the estimators in this package use."""
    details: dict[str, str] = {}
    if not isinstance(d, ExplicitDesign):
        try:
            pi = d.propensities
            positivity = bool(np.all((pi > 0.0) & (pi < 1.0)))
            epsem = bool(np.ptp(pi) <= PROB_TOL)
        except AssumptionError:
            positivity = None
            epsem = None
        details["support"] = "sampler-backed design: enumeration-based checks skipped"
        return AssumptionReport(
            positivity=positivity,
            equal_size_constant_propensity=None,
            epsem=epsem,
            measurable=None,
            closed_under_label_switching=None,
            substitution=None,
            fixed_total_weight=None,
            details=details,
        )

    n = d.n
    pi = d.propensities
    u = d.matrix

    positivity = bool(np.all((pi > 0.0) & (pi < 1.0)))
    if not positivity:
        bad = int(np.argmax(~((pi > 0.0) & (pi < 1.0))))
        details["positivity"] = f"unit {bad} has propensity {pi[bad]!r}"

    epsem = bool(np.ptp(pi) <= PROB_TOL)
    if not epsem:
        details["epsem"] = f"propensities range over [{pi.min():.6g}, {pi.max():.6g}]"

    group_sizes = u.sum(axis=1).astype(int)
    equal_groups = bool(n % 2 == 0 and np.all(group_sizes == n // 2))
    equal_size = equal_groups and epsem
    if not equal_size:
        if not equal_groups:
            details["equal_size_constant_propensity"] = (
                f"treated-group sizes take values {sorted(set(group_sizes.tolist()))}"
            )
        else:
            details["equal_size_constant_propensity"] = "propensities are not constant"

    cells = np.stack([
        d._p11,
        pi[:, None] - d._p11,
        pi[None, :] - d._p11,
        1.0 - pi[:, None] - pi[None, :] + d._p11,
    ])
    off = ~np.eye(n, dtype=bool)
    measurable = bool(np.all(cells[:, off] > PROB_TOL))
    if not measurable:
        c, i, j = np.argwhere((cells <= PROB_TOL) & off[None, :, :])[0]
        wi, wj = [(1, 1), (1, 0), (0, 1), (0, 0)][c]
        details["measurable"] = (
            f"Pr(W_{i}={wi}, W_{j}={wj}) = 0 for units ({i},{j})"
        )

    closed = all(w.complement() in d for w in d.support)
    if not closed:
        w = next(w for w in d.support if w.complement() not in d)
        details["closed_under_label_switching"] = f"complement of {w} is not in support"

    from .contrast import substitute_counts, substitution_mode

    try:
        mode = substitution_mode(d)
        counts = substitute_counts(d, mode)
        substitution = bool(np.all(counts > 0))
        if not substitution:
            w = d.support[int(np.argmax(counts == 0))]
            details["substitution"] = f"{w} has no substitute in the support"
    except AssumptionError as exc:
        substitution = False
        details["substitution"] = str(exc)

    if positivity:
        weights = u @ (1.0 / pi) + (1.0 - u) @ (1.0 / (1.0 - pi))
        fixed_weight = bool(np.all(np.abs(weights - 2.0 * n) <= WEIGHT_TOL))
        if not fixed_weight:
            k = int(np.argmax(np.abs(weights - 2.0 * n) > WEIGHT_TOL))
            details["fixed_total_weight"] = (
                f"total weight at {d.support[k]} is {weights[k]:.6g}, not {2 * n}"
            )
    else:
        fixed_weight = False
        details.setdefault("fixed_total_weight", "positivity fails")

    return AssumptionReport(
        positivity=positivity,
        equal_size_constant_propensity=equal_size,
        epsem=epsem,
        measurable=measurable,
        closed_under_label_switching=closed,
        substitution=substitution,
        fixed_total_weight=fixed_weight,
        details=details,
    )

"""Per-locus estimation of the recombination-to-mutation rate ratio.

The estimator maximizes a weighted sum of per-pair log-likelihoods (a
composite likelihood) over the compact coordinate t = lam/(1+lam).
Because pairs within a dependence group share events, the usual
likelihood asymptotics are rescaled: with sigma^2 the per-pair score
variance and alpha the within-group score correlation, the expected
information is I = sigma^2 * sum w_i while the score variance is
J = sigma^2 * (G + alpha * sum_g (k_g - 1)). The deviance scaled by
gamma = J/I is asymptotically chi-squared(1), which gives confidence
intervals by bisecting the scaled deviance against the chi-squared
quantile on each side of the maximum.

alpha and sigma^2 come from a compound-symmetry Gaussian model of the
per-pair scores at the fitted maximum, maximized in closed form over
sigma^2 and numerically over alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AlphaUnidentifiableError,
    DegenerateScoresError,
    EmptyPartitionError,
    InvalidParamsError,
    NonMonotoneDevianceError,
)
from .numerics import (
    DEFAULT_TOL,
    Tolerances,
    chi2_quantile,
    lam_to_t,
    maximize_scalar,
    t_to_lam,
)
from .pair_likelihood import PairModel, log_pmf, score_vector
from .slv import SlvPartition


@dataclass(frozen=True)
class CompositeLikelihood:
    """Weighted per-pair log-likelihood for one locus."""

    partition: SlvPartition
    model: PairModel
    weights: tuple[float, ...] | None = None  # override; defaults to group weights

    def __post_init__(self):
        for pair in self.partition.pairs:
            if not 1 <= pair.x <= self.model.m:
                raise InvalidParamsError(
                    f"pair ({pair.st_a},{pair.st_b}) has x={pair.x} outside 1..{self.model.m}"
                )
        if self.weights is not None and len(self.weights) != len(self.partition.pairs):
            raise InvalidParamsError("weight override length does not match pair count")

    @property
    def locus(self) -> str:
        return self.partition.locus

    @property
    def n_pairs(self) -> int:
        return self.partition.n_pairs

    def pair_xs(self) -> np.ndarray:
        return np.array([p.x for p in self.partition.pairs], dtype=np.int64)

    def pair_weights(self) -> np.ndarray:
        if self.weights is not None:
            return np.asarray(self.weights, dtype=float)
        return np.asarray(self.partition.weights, dtype=float)

    def loglik(self, lam: float) -> float:
        if self.n_pairs == 0:
            raise EmptyPartitionError(f"locus {self.locus} has no SLV pairs")
        logp = log_pmf(self.model, lam)
        return float(np.dot(self.pair_weights(), logp[self.pair_xs() - 1]))

    def scores_by_group(self, lam: float) -> list[np.ndarray]:
        """Unweighted per-pair scores at lam, grouped by dependence group.

        Only groups that contribute at least one pair appear.
        """
        if self.n_pairs == 0:
            raise EmptyPartitionError(f"locus {self.locus} has no SLV pairs")
        full = score_vector(self.model, lam)
        per_pair = full[self.pair_xs() - 1]
        grouped: dict[int, list[float]] = {}
        for pair, u in zip(self.partition.pairs, per_pair):
            grouped.setdefault(pair.group_id, []).append(float(u))
        return [np.asarray(grouped[gid]) for gid in sorted(grouped)]


def composite_loglik(cl: CompositeLikelihood, lam: float) -> float:
    return cl.loglik(lam)


def maximize(
    cl: CompositeLikelihood, tol: Tolerances = DEFAULT_TOL
) -> tuple[float, float, bool]:
    """(lam_hat, maximized value, boundary flag)."""
    t_max = lam_to_t(tol.lambda_max)
    res = maximize_scalar(lambda t: cl.loglik(t_to_lam(t)), 0.0, t_max, tol=tol.opt_t)
    lam_hat = t_to_lam(res.argmax)
    return lam_hat, res.value, res.at_boundary


# -- compound-symmetry score model ---------------------------------------------


def _quad_form(scores_by_group: Sequence[np.ndarray], alpha: float) -> float:
    """sigma^2-free quadratic form of the compound-symmetry Gaussian."""
    total = 0.0
    for v in scores_by_group:
        k = len(v)
        s2 = float(np.dot(v, v))
        t = float(np.sum(v))
        a_k = 1.0 / (1.0 - alpha)
        b_k = -alpha / ((1.0 - alpha) * (1.0 + (k - 1) * alpha))
        total += a_k * s2 + b_k * t * t
    return total


def loglik_alpha_sigma(
    scores_by_group: Sequence[np.ndarray], alpha: float, sigma2: float
) -> float:
    """Gaussian log-likelihood (additive constants dropped) of grouped scores."""
    total = 0.0
    for v in scores_by_group:
        k = len(v)
        total -= 0.5 * k * math.log(sigma2 * (1.0 - alpha))
        total -= 0.5 * math.log((1.0 + (k - 1) * alpha) / (1.0 - alpha))
    total -= 0.5 * _quad_form(scores_by_group, alpha) / sigma2
    return total


def sigma2_given_alpha(scores_by_group: Sequence[np.ndarray], alpha: float) -> float:
    """Closed-form maximizer of the Gaussian likelihood in sigma^2."""
    n = sum(len(v) for v in scores_by_group)
    q = _quad_form(scores_by_group, alpha)
    if q <= 0.0:
        raise DegenerateScoresError("score quadratic form is not positive")
    return q / n


@dataclass(frozen=True)
class AlphaSigmaFit:
    alpha: float
    sigma2: float
    loglik_at_max: float


def fit_alpha_sigma(
    scores_by_group: Sequence[np.ndarray], tol: Tolerances = DEFAULT_TOL
) -> AlphaSigmaFit:
    """Maximize the compound-symmetry Gaussian likelihood over (alpha, sigma^2).

    sigma^2 is profiled out in closed form, leaving a 1-D bounded search
    over alpha in [0, 1). Deterministic for identical inputs.
    """
    groups = [np.asarray(v, dtype=float) for v in scores_by_group if len(v) > 0]
    n = sum(len(v) for v in groups)
    if max((len(v) for v in groups), default=0) < 2:
        raise AlphaUnidentifiableError(
            "every group contributes a single pair; within-group correlation drops out"
        )
    if n < 2:
        raise DegenerateScoresError(f"need at least 2 scores, got {n}")
    pooled = np.concatenate(groups)
    if float(pooled.max()) == float(pooled.min()):
        raise DegenerateScoresError("all scores identical")

    def profile(alpha: float) -> float:
        q = _quad_form(groups, alpha)
        if q <= 0.0:
            return -math.inf  # not reachable for alpha in [0, 1), guards rounding
        value = -0.5 * n * (math.log(q / n) + 1.0)
        for v in groups:
            k = len(v)
            value -= 0.5 * k * math.log(1.0 - alpha)
            value -= 0.5 * math.log((1.0 + (k - 1) * alpha) / (1.0 - alpha))
        return value

    res = maximize_scalar(profile, 0.0, tol.alpha_cap, tol=1e-10)
    alpha = res.argmax
    sigma2 = sigma2_given_alpha(groups, alpha)
    return AlphaSigmaFit(alpha=alpha, sigma2=sigma2, loglik_at_max=loglik_alpha_sigma(groups, alpha, sigma2))


# -- information quantities ------------------------------------------------------


def godambe(
    partition: SlvPartition, alpha: float, sigma2: float
) -> tuple[float, float, float]:
    """(I, J, gamma): expected information, score variance, and their ratio.

    Computed from the pairs actually present; on a clean partition this
    is I = sigma^2 * sum_g sqrt(k_g) and
    J = sigma^2 * (G + alpha * sum_g (k_g - 1)) with k_g the per-group
    pair count. gamma does not depend on sigma^2.
    """
    if partition.n_pairs == 0:
        raise EmptyPartitionError(f"locus {partition.locus} has no SLV pairs")
    i_unit = 0.0
    j_unit = 0.0
    by_group: dict[int, list[float]] = {}
    for pair in partition.pairs:
        by_group.setdefault(pair.group_id, []).append(partition.weight(pair))
    for ws in by_group.values():
        w = np.asarray(ws)
        sum_w = float(w.sum())
        sum_w2 = float(np.dot(w, w))
        i_unit += sum_w
        j_unit += sum_w2 + alpha * (sum_w * sum_w - sum_w2)
    return sigma2 * i_unit, sigma2 * j_unit, j_unit / i_unit


# -- confidence interval ----------------------------------------------------------


def deviance_ci(
    cl: CompositeLikelihood,
    lam_hat: float,
    cl_max: float,
    gamma: float,
    level: float = 0.95,
    tol: Tolerances = DEFAULT_TOL,
) -> tuple[float, float]:
    """Confidence interval from the scaled deviance.

    Returns (lower, upper); the lower bound clamps to 0 and the upper is
    math.inf when the deviance never reaches the chi-squared threshold
    before the search ceiling.
    """
    if not 0.0 < level < 1.0:
        raise InvalidParamsError(f"level must be in (0,1), got {level}")
    threshold = chi2_quantile(level, 1)
    t_max = lam_to_t(tol.lambda_max)
    t_hat = min(lam_to_t(lam_hat), t_max)

    def excess(t: float) -> float:
        w = (2.0 / gamma) * (cl_max - cl.loglik(t_to_lam(t)))
        return w - threshold

    def locate(side_lo: float, side_hi: float, side: str) -> float:
        # bisect until the bracket is below the t tolerance AND the deviance
        # sits within the endpoint slack; a steep deviance needs the extra
        # refinement to honor the second contract
        lo_val, hi_val = excess(side_lo), excess(side_hi)
        if lo_val == 0.0:
            return side_lo
        if hi_val == 0.0:
            return side_hi
        if (lo_val > 0.0) == (hi_val > 0.0):
            raise NonMonotoneDevianceError(
                f"locus {cl.locus}: no deviance crossing on the {side} side "
                f"(t in [{side_lo:.6g}, {side_hi:.6g}], "
                f"excess {lo_val:.3g} and {hi_val:.3g})"
            )
        lo, hi = side_lo, side_hi
        mid, mid_val = 0.5 * (lo + hi), excess(0.5 * (lo + hi))
        for _ in range(200):
            if (hi - lo) <= tol.ci_t and abs(mid_val) <= 0.5 * tol.ci_w_slack:
                break
            if (mid_val > 0.0) == (hi_val > 0.0):
                hi, hi_val = mid, mid_val
            else:
                lo, lo_val = mid, mid_val
            mid = 0.5 * (lo + hi)
            mid_val = excess(mid)
            if mid == lo or mid == hi:
                break  # float resolution exhausted
        if abs(mid_val) > tol.ci_w_slack:
            raise NonMonotoneDevianceError(
                f"locus {cl.locus}: {side} deviance crossing off by {abs(mid_val):.3g} "
                f"(> {tol.ci_w_slack}); deviance may be non-monotone"
            )
        return mid

    if t_hat <= 0.0 or excess(0.0) <= 0.0:
        lower = 0.0
    else:
        lower = t_to_lam(locate(0.0, t_hat, "lower"))
    if t_hat >= t_max or excess(t_max) <= 0.0:
        upper = math.inf
    else:
        upper = t_to_lam(locate(t_hat, t_max, "upper"))
    return lower, upper


# -- one-locus fit ---------------------------------------------------------------


@dataclass(frozen=True)
class LocusFit:
    locus: str
    lam_hat: float
    cl_max: float
    alpha: float
    sigma2: float
    info_i: float
    info_j: float
    gamma: float
    ci_lower: float
    ci_upper: float
    n_pairs: int
    n_groups: int
    at_boundary: bool
    alpha_source: str           # locus | common | fallback
    raw_score_variance: float   # diagnostic: plain variance of the scores


@dataclass(frozen=True)
class _Prefit:
    lam_hat: float
    cl_max: float
    at_boundary: bool
    score_groups: tuple[np.ndarray, ...]


def _prefit(cl: CompositeLikelihood, tol: Tolerances) -> _Prefit:
    lam_hat, cl_max, at_boundary = maximize(cl, tol)
    return _Prefit(
        lam_hat=lam_hat,
        cl_max=cl_max,
        at_boundary=at_boundary,
        score_groups=tuple(cl.scores_by_group(lam_hat)),
    )


def _assemble(
    cl: CompositeLikelihood,
    pre: _Prefit,
    alpha: float,
    sigma2: float,
    source: str,
    level: float,
    tol: Tolerances,
) -> LocusFit:
    info_i, info_j, gamma = godambe(cl.partition, alpha, sigma2)
    lower, upper = deviance_ci(cl, pre.lam_hat, pre.cl_max, gamma, level, tol)
    pooled = np.concatenate(pre.score_groups)
    return LocusFit(
        locus=cl.locus,
        lam_hat=pre.lam_hat,
        cl_max=pre.cl_max,
        alpha=alpha,
        sigma2=sigma2,
        info_i=info_i,
        info_j=info_j,
        gamma=gamma,
        ci_lower=lower,
        ci_upper=upper,
        n_pairs=cl.n_pairs,
        n_groups=cl.partition.n_groups,
        at_boundary=pre.at_boundary,
        alpha_source=source,
        raw_score_variance=float(np.var(pooled)),
    )


def fit_locus(
    cl: CompositeLikelihood,
    level: float = 0.95,
    alpha_override: float | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> LocusFit:
    """Full single-locus fit.

    With ``alpha_override`` the within-group correlation is taken as
    given (the cross-locus common value) and only sigma^2 is refit, so
    the (alpha, sigma^2) pair stays coherent.
    """
    pre = _prefit(cl, tol)
    if alpha_override is None:
        fit = fit_alpha_sigma(pre.score_groups, tol)
        alpha, sigma2, source = fit.alpha, fit.sigma2, "locus"
    else:
        alpha = alpha_override
        sigma2 = sigma2_given_alpha(pre.score_groups, alpha)
        source = "common"
    return _assemble(cl, pre, alpha, sigma2, source, level, tol)


def fit_all_loci(
    cls: Sequence[CompositeLikelihood],
    level: float = 0.95,
    alpha_mode: str = "common",
    tol: Tolerances = DEFAULT_TOL,
) -> list[LocusFit]:
    """Fit every locus, sharing the within-group correlation across loci.

    ``common`` averages the locus-specific correlation estimates and
    refits each locus with the average; ``per-locus`` keeps each locus's
    own estimate. Either way, a locus with no identifiable correlation
    (no group bigger than one pair) inherits the cross-locus average,
    or zero when no locus can estimate it.
    """
    if alpha_mode not in ("common", "per-locus"):
        raise InvalidParamsError(f"alpha_mode must be common or per-locus, got {alpha_mode!r}")
    prefits = [_prefit(cl, tol) for cl in cls]
    own: list[AlphaSigmaFit | None] = []
    for pre in prefits:
        try:
            own.append(fit_alpha_sigma(pre.score_groups, tol))
        except AlphaUnidentifiableError:
            own.append(None)
    alphas = [fit.alpha for fit in own if fit is not None]
    common_alpha = sum(alphas) / len(alphas) if alphas else 0.0

    results: list[LocusFit] = []
    for cl, pre, own_fit in zip(cls, prefits, own):
        if alpha_mode == "per-locus" and own_fit is not None:
            results.append(
                _assemble(cl, pre, own_fit.alpha, own_fit.sigma2, "locus", level, tol)
            )
            continue
        source = "common" if own_fit is not None or alphas else "fallback"
        sigma2 = sigma2_given_alpha(pre.score_groups, common_alpha)
        results.append(_assemble(cl, pre, common_alpha, sigma2, source, level, tol))
    return results

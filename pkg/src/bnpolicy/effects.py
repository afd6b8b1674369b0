"""Per-intervention-unit effect quantities: totals, tests, intervals, ratios."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import FeatureMap, InterferenceMap, OutcomeTable
from .errors import DataValidationError, EstimationError


@dataclass(frozen=True)
class EffectTable:
    """Per-unit aggregate effects with uncertainty.

    ``p_one_sided`` tests H0: effect >= 0 against the protective
    alternative, so it is small when the effect is strongly negative.
    ``structural_zero`` marks units whose interference column is entirely
    zero (no transport, effect structurally absent).
    """

    total_effect: np.ndarray
    se: np.ndarray
    p_one_sided: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    benefit_cost: np.ndarray | None
    structural_zero: np.ndarray
    level: float


def total_effects(h: InterferenceMap, out: OutcomeTable, beta,
                  basis_fa: FeatureMap) -> np.ndarray:
    """Aggregate effect of treating each unit: (1/J) sum_i H_ij fa(x_i) . beta."""
    if h.n != out.n:
        raise DataValidationError("interference map rows do not match outcome table")
    beta = np.asarray(beta, dtype=float)
    fa = basis_fa.expand(out.x)
    if fa.shape[1] != beta.shape[0]:
        raise DataValidationError(
            f"beta has {beta.shape[0]} entries but the basis produces {fa.shape[1]}")
    return h.h.T @ (fa @ beta) / h.j


def effect_weights(h: InterferenceMap, out: OutcomeTable,
                   basis_fa: FeatureMap) -> np.ndarray:
    """Rows w_j = (1/J) sum_i H_ij fa(x_i); total effects are W beta."""
    fa = basis_fa.expand(out.x)
    return h.h.T @ fa / h.j


def effect_inference(te_weights: np.ndarray, cov_beta: np.ndarray,
                     level: float = 0.95):
    """Standard errors, one-sided p-values and CIs for W beta.

    ``cov_beta`` must already be on the per-sample scale (variance of
    beta_hat itself).
    """
    if not 0.0 < level < 1.0:
        raise DataValidationError("confidence level must lie in (0, 1)")
    w = np.asarray(te_weights, dtype=float)
    variances = np.einsum("jk,kl,jl->j", w, cov_beta, w)
    bad = variances < 0
    if np.any(bad):
        raise EstimationError(
            f"negative effect variance at unit {int(np.flatnonzero(bad)[0])}: "
            "the beta covariance block is not positive semidefinite")
    se = np.sqrt(variances)
    return se


def effect_table(h: InterferenceMap, out: OutcomeTable, beta,
                 cov_beta: np.ndarray, basis_fa: FeatureMap,
                 cost=None, level: float = 0.95) -> EffectTable:
    """Assemble the full per-unit effect report."""
    te = total_effects(h, out, beta, basis_fa)
    w = effect_weights(h, out, basis_fa)
    se = effect_inference(w, cov_beta, level)
    z = norm.ppf(0.5 + level / 2.0)
    # degenerate se = 0: the one-sided p collapses to an indicator
    safe = np.where(se > 0, se, 1.0)
    p = np.where(se > 0, norm.cdf(te / safe),
                 np.where(te < 0, 0.0, np.where(te > 0, 1.0, 0.5)))
    ci_low = te - z * se
    ci_high = te + z * se
    bc = None if cost is None else benefit_cost(te, cost)
    zero_cols = np.zeros(h.j, dtype=bool)
    zero_cols[h.zero_columns()] = True
    return EffectTable(total_effect=te, se=se, p_one_sided=p, ci_low=ci_low,
                       ci_high=ci_high, benefit_cost=bc,
                       structural_zero=zero_cols, level=level)


def benefit_cost(te, cost) -> np.ndarray:
    """Elementwise effect-to-cost ratio; NaN where the cost is not positive.

    Units with nonpositive cost are excluded from ratio-based ranking by
    the policy module, so the NaN marker is deliberate rather than an
    error here.
    """
    te = np.asarray(te, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if te.shape != cost.shape:
        raise DataValidationError("total effects and costs must have equal length")
    out = np.full(te.shape, np.nan)
    ok = cost > 0
    out[ok] = te[ok] / cost[ok]
    return out

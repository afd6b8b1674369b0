"""Treatment allocation: unconstrained rule, budgeted greedy, sweeps, values.

Only units with strictly negative total effect are ever candidates; a
non-protective unit can only waste budget.  The budgeted solutions are
fractional-knapsack greedies over the continuous relaxation, so at most
one coordinate of the allocation is fractional and the result is optimal
for the relaxed program.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import FeatureMap, InterferenceMap, OutcomeTable
from .errors import DataValidationError
from .exposure import exposure_map

FEAS_RTOL = 1e-9


@dataclass(frozen=True)
class PolicySolution:
    pi: np.ndarray
    spent: float
    budget: float
    value_rate: float
    value_count: float | None
    method: str


def _value_rate(te, pi, n_out) -> float:
    return float(pi @ te / n_out)


def unconstrained_policy(te, n_out: int, cost=None) -> PolicySolution:
    """Treat exactly the units with strictly negative total effect."""
    te = np.asarray(te, dtype=float)
    pi = (te < 0).astype(float)
    spent = float(pi @ np.asarray(cost, dtype=float)) if cost is not None else 0.0
    return PolicySolution(pi=pi, spent=spent, budget=np.inf,
                          value_rate=_value_rate(te, pi, n_out),
                          value_count=None, method="unconstrained")


def _greedy(te, cost, budget, n_out, order_key, method):
    te = np.asarray(te, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if te.shape != cost.shape:
        raise DataValidationError("total effects and costs must have equal length")
    if budget < 0:
        raise DataValidationError("budget must be nonnegative")
    candidates = np.flatnonzero(te < 0)
    if np.any(cost[candidates] <= 0):
        bad = candidates[cost[candidates] <= 0][0]
        raise DataValidationError(
            f"candidate unit {int(bad)} has nonpositive cost; cannot rank it")
    # ties: lower cost first, then lower index, for deterministic output
    order = sorted(candidates,
                   key=lambda j: (order_key[j], cost[j], j))
    pi = np.zeros(te.shape[0])
    remaining = float(budget)
    for j in order:
        if remaining <= 0.0:
            break
        if cost[j] <= remaining:
            pi[j] = 1.0
            remaining -= float(cost[j])
        else:
            pi[j] = remaining / float(cost[j])
            remaining = 0.0
            break
    spent = float(pi @ cost)
    return PolicySolution(pi=pi, spent=spent, budget=float(budget),
                          value_rate=_value_rate(te, pi, n_out),
                          value_count=None, method=method)


def knapsack_policy(te, cost, budget: float, n_out: int) -> PolicySolution:
    """Budgeted allocation ranked by effect-to-cost ratio (most negative first)."""
    te = np.asarray(te, dtype=float)
    cost = np.asarray(cost, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cost > 0, te / np.where(cost > 0, cost, 1.0), np.inf)
    return _greedy(te, cost, budget, n_out, ratio, "bc_greedy")


def te_ranked_policy(te, cost, budget: float, n_out: int) -> PolicySolution:
    """Naive comparator: same greedy, ranked by raw total effect."""
    te = np.asarray(te, dtype=float)
    return _greedy(te, np.asarray(cost, dtype=float), budget, n_out, te, "te_greedy")


def truncate_fractional(sol: PolicySolution, te, cost, n_out: int) -> PolicySolution:
    """Zero out the fractional coordinate (a fractional unit is physical nonsense).

    Keeps the original budget and reports the lower spend.
    """
    pi = sol.pi.copy()
    frac = np.flatnonzero((pi > 0.0) & (pi < 1.0))
    pi[frac] = 0.0
    cost = np.asarray(cost, dtype=float)
    return replace(sol, pi=pi, spent=float(pi @ cost),
                   value_rate=_value_rate(np.asarray(te, dtype=float), pi, n_out),
                   method=sol.method + "_integral")


def policy_value(te, pi, n_out: int, h: InterferenceMap | None = None,
                 out: OutcomeTable | None = None, beta=None,
                 basis_fa: FeatureMap | None = None):
    """(rate-scale value, count-scale value or None) for an allocation.

    The rate value is (1/n) sum_j pi_j TE_j.  The count value needs the
    full effect context plus person-years: it converts each unit's rate
    change to counts via delta_i * person_years_i / 10000.
    """
    te = np.asarray(te, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if te.shape != pi.shape:
        raise DataValidationError("pi and total effects must have equal length")
    if np.any(pi < 0) or np.any(pi > 1):
        raise DataValidationError("allocations must lie in [0, 1]")
    rate = _value_rate(te, pi, n_out)
    count = None
    if h is not None:
        if out is None or beta is None or basis_fa is None or out.person_years is None:
            raise DataValidationError(
                "count-scale value needs h, outcome table with person_years, "
                "beta and the effect basis")
        fa_vals = basis_fa.expand(out.x) @ np.asarray(beta, dtype=float)
        delta = exposure_map(h, pi) * fa_vals
        count = float(delta @ out.person_years / 1e4)
    return rate, count


def budget_sweep(te, cost, fractions, n_out: int):
    """Paired (ratio-ranked, effect-ranked) solutions per budget fraction.

    Budgets are fractions of the total cost of treating every unit.
    """
    fractions = list(fractions)
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise DataValidationError("budget fractions must lie in (0, 1]")
    if sorted(fractions) != fractions:
        raise DataValidationError("budget fractions must be sorted ascending")
    cost = np.asarray(cost, dtype=float)
    total = float(cost.sum())
    pairs = []
    for f in fractions:
        budget = f * total
        pairs.append((knapsack_policy(te, cost, budget, n_out),
                      te_ranked_policy(te, cost, budget, n_out)))
    return pairs


def check_feasible(sol: PolicySolution) -> bool:
    return sol.spent <= sol.budget * (1.0 + FEAS_RTOL) or sol.budget == np.inf

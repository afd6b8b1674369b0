"""File formats for the CLI: unit tables, interference matrices, reports.

Every emitted file starts with a version comment line.  Machine-readable
numbers are written with repr so re-parsing reproduces the in-memory
values bit for bit; human-readable tables round to 4 significant digits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import InterferenceMap, InterventionTable, OutcomeTable
from .effects import EffectTable
from .errors import DataValidationError
from .policy import PolicySolution
from .simlab import CELLS, SimReport

FORMAT_PREFIX = "# bnpolicy-"


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_human(x: float) -> str:
    if not np.isfinite(x):
        return str(x)
    return f"{x:.4g}"


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [ln.rstrip("\n") for ln in fh if ln.strip() != ""]


def _split_header_rows(lines):
    rows = [ln for ln in lines if not ln.startswith("#")]
    if not rows:
        raise DataValidationError("file has no content rows")
    header = [c.strip() for c in rows[0].split(",")]
    return header, [r.split(",") for r in rows[1:]]


def read_outcome_csv(path):
    """Outcome units: header id,y[,person_years],x1..xp."""
    header, rows = _split_header_rows(_read_lines(path))
    if header[:2] != ["id", "y"]:
        raise DataValidationError(
            f"{path}: expected header starting 'id,y', got {header[:2]}")
    has_py = len(header) > 2 and header[2] == "person_years"
    x_start = 3 if has_py else 2
    ids = [r[0] for r in rows]
    y = np.array([float(r[1]) for r in rows])
    py = np.array([float(r[2]) for r in rows]) if has_py else None
    x = np.array([[float(v) for v in r[x_start:]] for r in rows])
    if x.size == 0:
        raise DataValidationError(f"{path}: no covariate columns found")
    return ids, OutcomeTable(x=x, y=y, person_years=py)


def read_intervention_csv(path):
    """Intervention units: header id,a[,cost],z1..zq.

    Empty cost cells become NaN so they can be imputed; a table with any
    NaN costs is returned with cost=None and the raw column is handed
    back separately.
    """
    header, rows = _split_header_rows(_read_lines(path))
    if header[:2] != ["id", "a"]:
        raise DataValidationError(
            f"{path}: expected header starting 'id,a', got {header[:2]}")
    has_cost = len(header) > 2 and header[2] == "cost"
    x_start = 3 if has_cost else 2
    ids = [r[0] for r in rows]
    a = np.array([float(r[1]) for r in rows])
    raw_cost = None
    if has_cost:
        raw_cost = np.array([float(r[2]) if r[2].strip() != "" else np.nan
                             for r in rows])
    x = np.array([[float(v) for v in r[x_start:]] for r in rows])
    if x.size == 0:
        raise DataValidationError(f"{path}: no covariate columns found")
    cost = raw_cost if raw_cost is not None and not np.any(np.isnan(raw_cost)) else None
    return ids, InterventionTable(x=x, a=a, cost=cost), raw_cost


def read_interference_csv(path, n=None, j=None):
    """Dense (n rows x J numeric columns) or triplet (header i,j,value)."""
    lines = _read_lines(path)
    rows = [ln for ln in lines if not ln.startswith("#")]
    first = [c.strip() for c in rows[0].split(",")]
    if first[:3] == ["i", "j", "value"]:
        if n is None or j is None:
            raise DataValidationError("triplet interference file needs n and J")
        h = np.zeros((n, j))
        for r in rows[1:]:
            i_s, j_s, v_s = r.split(",")
            i_idx, j_idx = int(i_s), int(j_s)
            if not (0 <= i_idx < n and 0 <= j_idx < j):
                raise DataValidationError(
                    f"triplet index ({i_idx}, {j_idx}) outside {n}x{j}")
            h[i_idx, j_idx] = float(v_s)
        return InterferenceMap(h)
    h = np.array([[float(v) for v in r.split(",")] for r in rows])
    if n is not None and h.shape[0] != n:
        raise DataValidationError(f"interference map has {h.shape[0]} rows, expected {n}")
    if j is not None and h.shape[1] != j:
        raise DataValidationError(f"interference map has {h.shape[1]} cols, expected {j}")
    return InterferenceMap(h)


EFFECTS_COLUMNS = ("id", "total_effect", "se", "p_one_sided", "ci_low", "ci_high",
                   "benefit_cost", "structural_zero")


def write_effects_csv(path, ids, table: EffectTable):
    lines = [f"{FORMAT_PREFIX}effects v1", ",".join(EFFECTS_COLUMNS)]
    bc = table.benefit_cost
    for k, uid in enumerate(ids):
        bc_s = "" if bc is None else _fmt(bc[k])
        lines.append(",".join([
            str(uid), _fmt(table.total_effect[k]), _fmt(table.se[k]),
            _fmt(table.p_one_sided[k]), _fmt(table.ci_low[k]),
            _fmt(table.ci_high[k]), bc_s, str(int(table.structural_zero[k]))]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_effects_csv(path):
    header, rows = _split_header_rows(_read_lines(path))
    if tuple(header) != EFFECTS_COLUMNS:
        raise DataValidationError(f"{path}: unexpected effects header {header}")
    ids = [r[0] for r in rows]
    cols = {name: [] for name in EFFECTS_COLUMNS[1:]}
    for r in rows:
        for k, name in enumerate(EFFECTS_COLUMNS[1:], start=1):
            cols[name].append(r[k])
    bc_col = cols["benefit_cost"]
    bc = None if all(v == "" for v in bc_col) else np.array([float(v) for v in bc_col])
    table = EffectTable(
        total_effect=np.array([float(v) for v in cols["total_effect"]]),
        se=np.array([float(v) for v in cols["se"]]),
        p_one_sided=np.array([float(v) for v in cols["p_one_sided"]]),
        ci_low=np.array([float(v) for v in cols["ci_low"]]),
        ci_high=np.array([float(v) for v in cols["ci_high"]]),
        benefit_cost=bc,
        structural_zero=np.array([v == "1" for v in cols["structural_zero"]]),
        level=0.95)
    return ids, table


def write_coefficients_csv(path, names, estimates, ses, ci_low, ci_high, p_values):
    lines = [f"{FORMAT_PREFIX}coefficients v1",
             "name,estimate,se,ci_low,ci_high,p_value"]
    for k, name in enumerate(names):
        lines.append(",".join([name, _fmt(estimates[k]), _fmt(ses[k]),
                               _fmt(ci_low[k]), _fmt(ci_high[k]), _fmt(p_values[k])]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_policy_json(path, sol: PolicySolution, ids):
    doc = {
        "format": "bnpolicy-policy v1",
        "method": sol.method,
        "budget": None if np.isinf(sol.budget) else sol.budget,
        "spent": sol.spent,
        "value_rate": sol.value_rate,
        "value_count": sol.value_count,
        "allocation": {str(uid): float(sol.pi[k]) for k, uid in enumerate(ids)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(path, fractions, pairs, dominance_ok: bool):
    lines = [f"{FORMAT_PREFIX}sweep v1",
             "fraction,bc_value_rate,bc_spent,te_value_rate,te_spent,bc_leq_te"]
    for f, (bc_sol, te_sol) in zip(fractions, pairs):
        lines.append(",".join([
            _fmt(f), _fmt(bc_sol.value_rate), _fmt(bc_sol.spent),
            _fmt(te_sol.value_rate), _fmt(te_sol.spent),
            str(int(bc_sol.value_rate <= te_sol.value_rate))]))
    lines.append(f"# dominance_holds={int(dominance_ok)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_CELL_DISPLAY = {
    "q_correct": ("Q-learning", "correct", "-"),
    "q_misspec": ("Q-learning", "misspec", "-"),
    "a_cc": ("A-learning", "correct", "correct"),
    "a_c_misP": ("A-learning", "correct", "misspec"),
    "a_misB_c": ("A-learning", "misspec", "correct"),
    "a_mis_mis": ("A-learning", "misspec", "misspec"),
}


def sim_report_to_dict(report: SimReport) -> dict:
    return {
        "format": "bnpolicy-sim-report v1",
        "master_seed": report.master_seed,
        "reps": report.reps,
        "theta0": [float(v) for v in report.theta0],
        "gamma0_slopes": [float(v) for v in report.gamma0_slopes],
        "cells": {
            name: {
                "bias": stats.mean_bias,
                "rmse": stats.mean_rmse,
                "coverage_pct": stats.mean_coverage,
                "n_ok": stats.n_ok,
                "n_failed": stats.n_failed,
            } for name, stats in report.cells.items()
        },
    }


def write_sim_report(json_path, txt_path, report: SimReport):
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sim_report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = [["Method", "BS", "PS", "Bias", "RMSE", "Coverage", "Failed"]]
    for name in CELLS:
        stats = report.cells[name]
        method, bs, ps = _CELL_DISPLAY[name]
        rows.append([method, bs, ps, _fmt_human(stats.mean_bias),
                     _fmt_human(stats.mean_rmse), _fmt_human(stats.mean_coverage),
                     str(stats.n_failed)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [f"{FORMAT_PREFIX}sim-report v1 (seed={report.master_seed}, reps={report.reps})"]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_imputed_costs_csv(path, ids, observed_mask, costs):
    lines = [f"{FORMAT_PREFIX}imputed-costs v1", "id,cost,source"]
    for k, uid in enumerate(ids):
        src = "observed" if observed_mask[k] else "imputed"
        lines.append(f"{uid},{_fmt(costs[k])},{src}")
    lines.append(f"# total_cost={_fmt(float(np.sum(costs)))}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

"""Analysis report emission: report.json (machine-readable) and
report.md (human-readable). Output is deterministic so reruns on
identical inputs are byte-stable.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

from .analysis import AgreementGrid, HypothesisOutcome
from .metrics import METRICS_FIELDS, IssueMetrics
from .ngram import SurprisalScore
from .stats import Series, descriptive, kappa_gate

# Report keys are research-question based; this table cross-references
# them to the alternate H-prefixed numbering some hypothesis lists use.
HYPOTHESIS_CROSSREF = {
    "RQ2": "difficulty of issues (alternate labels H1.x / H2.x)",
    "RQ3": "difficulty of pull requests (alternate labels H1.x / H2.x)",
    "RQ4": "perceived importance of issues (alternate labels H3.x / H4.x)",
    "RQ5": "perceived importance of pull requests (alternate labels H3.x / H4.x)",
}

NUMERIC_METRIC_FIELDS = ["reopenings", "participants", "interactions",
                         "open_state_duration", "release_mentions", "reactions"]


def _round(value, places=10):
    if isinstance(value, float):
        return round(value, places)
    return value


def _test_result_dict(result) -> Optional[Dict]:
    if result is None:
        return None
    return {
        "test_name": result.test_name,
        "statistic": _round(result.statistic),
        "p_value": _round(result.p_value),
        "n": result.n,
    }


def _outcome_dict(outcome: HypothesisOutcome) -> Dict:
    details = {}
    for key, value in outcome.details.items():
        if isinstance(value, Mapping):
            details[key] = {k: _round(v) for k, v in sorted(value.items())}
        elif isinstance(value, list):
            details[key] = [_round(v) for v in value]
        else:
            details[key] = _round(value)
    return {
        "hypothesis_id": outcome.hypothesis_id,
        "crossref": HYPOTHESIS_CROSSREF.get(outcome.hypothesis_id.split(".")[0], ""),
        "predictor": outcome.predictor,
        "response": outcome.response,
        "stratum": outcome.stratum,
        "normality": _test_result_dict(outcome.normality),
        "correlation": _test_result_dict(outcome.correlation),
        "decision": outcome.decision,
        "note": outcome.note,
        "details": details,
    }


def _descriptives(scores: Sequence[SurprisalScore],
                  metrics_rows: Sequence[IssueMetrics]) -> Dict:
    tables: Dict[str, Dict] = {}
    if scores:
        d = descriptive(Series(tuple(s.cross_entropy_bits_per_token for s in scores)))
        tables["surprisal_bits_per_token"] = d._asdict()
    for field in NUMERIC_METRIC_FIELDS:
        values = [float(getattr(m, field)) for m in metrics_rows]
        if values:
            tables[field] = descriptive(Series(tuple(values)))._asdict()
    return {name: {k: _round(v) for k, v in table.items()}
            for name, table in sorted(tables.items())}


def _grid_dict(grid: AgreementGrid) -> Dict:
    cells = {}
    for (variant, order), cell in sorted(grid.cells.items()):
        cells[f"{variant}/{order}"] = _test_result_dict(cell)
    return {
        "inter_rater_kappa": _round(grid.inter_rater_kappa),
        "kappa_gate_passed": kappa_gate(grid.inter_rater_kappa),
        "sample_issue_numbers": list(grid.sample_issue_numbers),
        "cells": cells,
        "disagreements": [dict(d) for d in grid.disagreements],
    }


def build_report(outcomes: Sequence[HypothesisOutcome],
                 scores: Sequence[SurprisalScore],
                 metrics_rows: Sequence[IssueMetrics],
                 alpha: float,
                 grid: Optional[AgreementGrid] = None) -> Dict:
    report = {
        "alpha": alpha,
        "n_scores": len(scores),
        "n_metrics_rows": len(metrics_rows),
        "descriptives": _descriptives(scores, metrics_rows),
        "hypotheses": [_outcome_dict(o) for o in outcomes],
    }
    if grid is not None:
        report["agreement"] = _grid_dict(grid)
    return report


def write_report_json(report: Dict, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def write_report_md(report: Dict, path: Union[str, Path]) -> None:
    lines: List[str] = ["# Analysis report", ""]
    lines += [f"Significance level alpha = {report['alpha']}",
              f"Scored documents: {report['n_scores']}; "
              f"metrics rows: {report['n_metrics_rows']}", ""]

    lines += ["## Descriptive statistics", "",
              "| variable | n | mean | std | min | max |",
              "|---|---|---|---|---|---|"]
    for name, d in report["descriptives"].items():
        lines.append(f"| {name} | {d['n']} | {_fmt(d['mean'])} | {_fmt(d['std'])} "
                     f"| {_fmt(d['minimum'])} | {_fmt(d['maximum'])} |")
    lines.append("")

    lines += ["## Hypothesis outcomes", "",
              "| id | stratum | response | test | statistic | p | decision | note |",
              "|---|---|---|---|---|---|---|---|"]
    for h in report["hypotheses"]:
        corr = h["correlation"] or {}
        lines.append(
            f"| {h['hypothesis_id']} | {h['stratum']} | {h['response']} "
            f"| {corr.get('test_name', '-')} | {_fmt(corr.get('statistic'))} "
            f"| {_fmt(corr.get('p_value'))} | {h['decision']} | {h['note'] or '-'} |")
    lines.append("")

    regressions = [h for h in report["hypotheses"]
                   if h["response"] == "difficulty_combination" and h["details"]]
    if regressions:
        lines += ["## Combined difficulty regressions", ""]
        for h in regressions:
            lines += [f"### {h['hypothesis_id']} ({h['stratum']})", ""]
            det = h["details"]
            lines.append(f"- Null predictor: {det['null_predictor']}")
            lines.append(f"- R-squared: null {_fmt(det['null_r_squared'])}, "
                         f"full {_fmt(det['full_r_squared'])}")
            lines.append("- VIF: " + ", ".join(
                f"{name}={_fmt(v)}" for name, v in sorted(det["vif"].items())))
            lines.append(f"- Note: {h['note']}")
            lines.append("")

    lines += ["## Hypothesis id cross-reference", ""]
    for rq, label in sorted(HYPOTHESIS_CROSSREF.items()):
        lines.append(f"- {rq}: {label}")
    lines.append("")

    if "agreement" in report:
        ag = report["agreement"]
        lines += ["## Model-agreement experiment", "",
                  f"Inter-rater Cohen's kappa: {_fmt(ag['inter_rater_kappa'])} "
                  f"(gate {'passed' if ag['kappa_gate_passed'] else 'FAILED'})", "",
                  "| variant/order | tau | p |", "|---|---|---|"]
        for key, cell in ag["cells"].items():
            if cell is None:
                lines.append(f"| {key} | unavailable | - |")
            else:
                lines.append(f"| {key} | {_fmt(cell['statistic'])} "
                             f"| {_fmt(cell['p_value'])} |")
        lines.append("")
        if ag["disagreements"]:
            lines += ["### Largest model-human rank disagreements", ""]
            for d in ag["disagreements"]:
                lines.append(f"- issue #{d['issue']}: model rank {_fmt(d['model_rank'])}, "
                             f"human rank {_fmt(d['human_rank'])} "
                             f"(distance {_fmt(d['rank_distance'])})")
            lines.append("")

    Path(path).write_text("\n".join(lines), encoding="utf-8")

"""The correlational analysis plan: per-hypothesis tests, the combined
difficulty regression, and the model-agreement experiment grid.

Hypothesis identifiers are keyed by research question: RQ2/RQ3 cover
resolution difficulty for issues and pull requests, RQ4/RQ5 perceived
importance. H5 of the difficulty questions is the nested-regression
check; by the stated analysis rule its alternate hypothesis is accepted
when the nested F-test is NOT significant, which inverts the usual
convention and is flagged in the report.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (DomainError, EmptyCorpus, EmptyDocument,
                     InsufficientRatings, SampleSizeError)
from .metrics import IMPORTANCE_LEVELS, IssueMetrics
from .ngram import SurprisalScore, train, train_excluding
from .stats import (
    OlsResult,
    Series,
    TestResult,
    cohens_kappa,
    average_ranks,
    kendall_tau,
    nested_f_test,
    ols_regression,
    pearson,
    shapiro_wilk,
    spearman,
    vif,
)
from .textprep import TokenSequence

log = logging.getLogger(__name__)

DIFFICULTY_RESPONSES = [
    ("H1", "reopenings", False),
    ("H2", "participants", False),
    ("H3", "interactions", False),
    ("H4", "open_state_duration", False),
]
IMPORTANCE_RESPONSES = [
    ("H1", "release_mentions", False),
    ("H2", "order_of_address", True),
    ("H3", "reactions", False),
    ("H4", "importance", True),
]
DIFFICULTY_PREDICTORS = ["reopenings", "interactions", "participants", "open_state_duration"]

STRATA = (("issues", "issue"), ("pull_requests", "pull_request"))


@dataclass(frozen=True)
class HypothesisOutcome:
    hypothesis_id: str
    predictor: str
    response: str
    stratum: str
    normality: Optional[TestResult]
    correlation: Optional[TestResult]
    decision: str  # reject_null | fail_to_reject
    note: str = ""
    details: Mapping = field(default_factory=dict)


def _response_value(row: IssueMetrics, name: str) -> Optional[float]:
    value = getattr(row, name)
    if value is None:
        return None
    if name == "importance":
        return float(IMPORTANCE_LEVELS.index(value))
    return float(value)


def _normality(series: Series, alpha: float) -> Tuple[Optional[TestResult], bool]:
    try:
        result = shapiro_wilk(series)
    except (SampleSizeError, DomainError):
        return None, False
    return result, result.p_value > alpha


def _paired(scores_by_source, rows, response):
    xs, ys = [], []
    for row in rows:
        score = scores_by_source.get(row.source)
        if score is None:
            continue
        y = _response_value(row, response)
        if y is None:
            continue
        xs.append(score.cross_entropy_bits_per_token)
        ys.append(y)
    return xs, ys


def run_hypothesis_suite(scores: Sequence[SurprisalScore],
                         metrics_rows: Sequence[IssueMetrics],
                         alpha: float = 0.05) -> List[HypothesisOutcome]:
    """Test surprisal against every response variable in both strata.

    Test selection: Pearson only when both series pass Shapiro-Wilk at
    `alpha`; otherwise Spearman. Ordinal responses always use the
    rank-based test.
    """
    scores_by_source = {s.source: s for s in scores}
    outcomes: List[HypothesisOutcome] = []
    for stratum_name, kind in STRATA:
        rq_difficulty = "RQ2" if stratum_name == "issues" else "RQ3"
        rq_importance = "RQ4" if stratum_name == "issues" else "RQ5"
        rows = [m for m in metrics_rows if m.kind == kind]
        plan = ([(rq_difficulty, h, resp, ordinal) for h, resp, ordinal in DIFFICULTY_RESPONSES]
                + [(rq_importance, h, resp, ordinal) for h, resp, ordinal in IMPORTANCE_RESPONSES])
        for rq, h, response, ordinal in plan:
            hid = f"{rq}.{h}"
            xs, ys = _paired(scores_by_source, rows, response)
            if len(xs) < 3:
                outcomes.append(HypothesisOutcome(
                    hypothesis_id=hid, predictor="surprisal", response=response,
                    stratum=stratum_name, normality=None, correlation=None,
                    decision="fail_to_reject", note=f"insufficient data (n={len(xs)})"))
                continue
            x_series = Series(tuple(xs), label="surprisal")
            y_series = Series(tuple(ys), label=response)
            norm_x, ok_x = _normality(x_series, alpha)
            norm_y, ok_y = _normality(y_series, alpha)
            normality = min((r for r in (norm_x, norm_y) if r is not None),
                            key=lambda r: r.p_value, default=None)
            details = {}
            try:
                if not ordinal and ok_x and ok_y:
                    corr = pearson(x_series, y_series)
                else:
                    corr = spearman(x_series, y_series)
                # Record the parametric number alongside the rank-based one
                # (and vice versa) so both are in the report.
                if not ordinal:
                    other = (spearman if corr.test_name == "pearson" else pearson)
                    try:
                        alt = other(x_series, y_series)
                        details["alternative"] = {
                            "test_name": alt.test_name,
                            "statistic": alt.statistic,
                            "p_value": alt.p_value,
                        }
                    except DomainError:
                        pass
            except DomainError as exc:
                outcomes.append(HypothesisOutcome(
                    hypothesis_id=hid, predictor="surprisal", response=response,
                    stratum=stratum_name, normality=normality, correlation=None,
                    decision="fail_to_reject", note=str(exc)))
                continue
            decision = "reject_null" if corr.p_value < alpha else "fail_to_reject"
            outcomes.append(HypothesisOutcome(
                hypothesis_id=hid, predictor="surprisal", response=response,
                stratum=stratum_name, normality=normality, correlation=corr,
                decision=decision, details=details))
        outcomes.append(_combined_difficulty_outcome(
            rq_difficulty, stratum_name, scores_by_source, rows, outcomes, alpha))
    return outcomes


def _combined_difficulty_outcome(rq, stratum_name, scores_by_source, rows,
                                 prior_outcomes, alpha) -> HypothesisOutcome:
    hid = f"{rq}.H5"
    paired_rows = [r for r in rows
                   if r.source in scores_by_source]
    xs = [scores_by_source[r.source].cross_entropy_bits_per_token for r in paired_rows]
    if len(paired_rows) < len(DIFFICULTY_PREDICTORS) + 2:
        return HypothesisOutcome(
            hypothesis_id=hid, predictor="surprisal", response="difficulty_combination",
            stratum=stratum_name, normality=None, correlation=None,
            decision="fail_to_reject", note=f"insufficient data (n={len(paired_rows)})")
    matrix = [[float(getattr(r, name)) for name in DIFFICULTY_PREDICTORS] for r in paired_rows]
    y_series = Series(tuple(xs), label="surprisal")
    # Null model: the single difficulty measure with the strongest
    # correlation among this stratum's H1-H4 outcomes.
    candidates = {
        o.response: o.correlation.p_value
        for o in prior_outcomes
        if o.stratum == stratum_name and o.hypothesis_id.startswith(rq)
        and o.response in DIFFICULTY_PREDICTORS and o.correlation is not None
    }
    best = min(candidates, key=candidates.get) if candidates else DIFFICULTY_PREDICTORS[0]
    best_col = DIFFICULTY_PREDICTORS.index(best)
    try:
        null_model = ols_regression([[row[best_col]] for row in matrix], y_series)
        full_model = ols_regression(matrix, y_series)
        f_result = nested_f_test(null_model, full_model)
        inflation = vif(matrix)
    except (DomainError, SampleSizeError, Exception) as exc:  # noqa: BLE001 - report, don't crash the suite
        return HypothesisOutcome(
            hypothesis_id=hid, predictor="surprisal", response="difficulty_combination",
            stratum=stratum_name, normality=None, correlation=None,
            decision="fail_to_reject", note=f"regression failed: {exc}")
    # Stated analysis rule: a non-significant F favours the combined model.
    decision = "reject_null" if f_result.p_value >= alpha else "fail_to_reject"
    return HypothesisOutcome(
        hypothesis_id=hid, predictor="surprisal", response="difficulty_combination",
        stratum=stratum_name, normality=None, correlation=f_result, decision=decision,
        note="decision rule inverted by design: alternate accepted when F not significant",
        details={
            "null_predictor": best,
            "full_r_squared": full_model.r_squared,
            "null_r_squared": null_model.r_squared,
            "coefficients": list(full_model.coefficients),
            "vif": {name: v for name, v in zip(DIFFICULTY_PREDICTORS, inflation)},
        })


# -- model-agreement experiment -------------------------------------------

@dataclass(frozen=True)
class RatingFile:
    rater_id: str
    ratings: Mapping[int, int]  # issue number -> 1..5

    def __post_init__(self):
        for issue_id, rating in self.ratings.items():
            if not 1 <= rating <= 5:
                raise ValueError(f"rating {rating} for issue {issue_id} outside 1..5")
        object.__setattr__(self, "ratings", dict(self.ratings))


def read_ratings_csv(path: Union[str, Path]) -> List[RatingFile]:
    """ratings.csv: rater_id, issue_id, rating(1..5); one file may hold
    several raters."""
    by_rater: Dict[str, Dict[int, int]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            by_rater.setdefault(rec["rater_id"], {})[int(rec["issue_id"])] = int(rec["rating"])
    return [RatingFile(rater_id=r, ratings=m) for r, m in sorted(by_rater.items())]


VARIANTS = ("full", "minus_repository", "leave_one_issue_out")


@dataclass(frozen=True)
class AgreementGrid:
    inter_rater_kappa: float
    cells: Mapping[Tuple[str, int], Optional[TestResult]]  # (variant, order) -> kendall tau
    sample_issue_numbers: Tuple[int, ...]
    disagreements: Tuple[Mapping, ...]


def model_agreement_experiment(ratings: Sequence[RatingFile],
                               corpus: Sequence[TokenSequence],
                               repo: str,
                               orders: Sequence[int] = tuple(range(1, 11)),
                               variants: Sequence[str] = VARIANTS) -> AgreementGrid:
    """Agreement between model surprisal and human surprisal ratings.

    For every (training-set variant, n-gram order) cell, ranks the rated
    issues by model surprisal and correlates (Kendall tau) with the mean
    human rating. Reports the inter-rater kappa up front.
    """
    if len(ratings) < 2:
        raise InsufficientRatings("need at least two raters")
    shared = set(ratings[0].ratings)
    for rating_file in ratings[1:]:
        shared &= set(rating_file.ratings)
    by_source = {seq.source: seq for seq in corpus}
    sample = sorted(n for n in shared if (repo, n) in by_source)
    if not sample:
        raise InsufficientRatings(f"no rated issues overlap the corpus for {repo}")

    first, second = ratings[0], ratings[1]
    kappa = cohens_kappa([first.ratings[n] for n in sorted(shared)],
                         [second.ratings[n] for n in sorted(shared)])
    mean_rating = {
        n: float(np.mean([r.ratings[n] for r in ratings])) for n in sample
    }

    cells: Dict[Tuple[str, int], Optional[TestResult]] = {}
    surprisal_by_cell: Dict[Tuple[str, int], List[float]] = {}
    for variant in variants:
        for order in orders:
            try:
                values = _cell_surprisal(corpus, repo, sample, by_source, variant, order)
            except (EmptyCorpus, EmptyDocument):
                # A variant can empty the training set (excluding the only
                # repository) or leave an issue with no scorable tokens;
                # record the cell as unavailable.
                cells[(variant, order)] = None
                continue
            surprisal_by_cell[(variant, order)] = values
            cells[(variant, order)] = kendall_tau(
                Series(tuple(values), label="surprisal"),
                Series(tuple(mean_rating[n] for n in sample), label="mean_rating"))

    if surprisal_by_cell:
        reference_cell = surprisal_by_cell.get(
            ("full", 3), surprisal_by_cell[next(iter(surprisal_by_cell))])
        disagreements = _disagreement_cases(sample, reference_cell, mean_rating)
    else:
        disagreements = []
    return AgreementGrid(inter_rater_kappa=kappa, cells=cells,
                         sample_issue_numbers=tuple(sample),
                         disagreements=tuple(disagreements))


def _cell_surprisal(corpus, repo, sample, by_source, variant, order) -> List[float]:
    if variant == "full":
        model = train(corpus, order)
        return [
            model.sequence_cross_entropy(by_source[(repo, n)]).cross_entropy_bits_per_token
            for n in sample
        ]
    if variant == "minus_repository":
        model = train_excluding(corpus, order, exclude_repo=repo)
        return [
            model.sequence_cross_entropy(by_source[(repo, n)],
                                         skip_unknown=True).cross_entropy_bits_per_token
            for n in sample
        ]
    if variant == "leave_one_issue_out":
        values = []
        for n in sample:
            model = train_excluding(corpus, order, exclude_issue=(repo, n))
            values.append(model.sequence_cross_entropy(
                by_source[(repo, n)], skip_unknown=True).cross_entropy_bits_per_token)
        return values
    raise DomainError(f"unknown variant {variant!r}")


def _disagreement_cases(sample, surprisal_values, mean_rating) -> List[Dict]:
    model_ranks = average_ranks(surprisal_values)
    human_ranks = average_ranks([mean_rating[n] for n in sample])
    distances = np.abs(model_ranks - human_ranks)
    if len(distances) == 0:
        return []
    threshold = float(np.percentile(distances, 75))
    out = []
    for i, n in enumerate(sample):
        if distances[i] >= threshold and distances[i] > 0:
            out.append({
                "issue": n,
                "model_rank": float(model_ranks[i]),
                "human_rank": float(human_ranks[i]),
                "rank_distance": float(distances[i]),
            })
    out.sort(key=lambda d: (-d["rank_distance"], d["issue"]))
    return out

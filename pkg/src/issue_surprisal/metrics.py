"""Response-variable extraction: one value per issue for each of the
eight tracked measures (reopenings, participants, interactions, open
duration, release mentions, order of address, reactions, importance).

All computations are pure functions over immutable records and can run
per repository in parallel; order-of-address groups by contributor first.
"""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .records import Dataset, IssueRecord, ReleaseRecord

log = logging.getLogger(__name__)

IMPORTANCE_LEVELS = ("low", "regular", "high")
VERDICTS = IMPORTANCE_LEVELS + ("unrelated",)

CLOSING_EVENTS = frozenset({"closed", "merged"})
MIN_RESOLUTIONS_FOR_HIATUS = 5


@dataclass(frozen=True)
class IssueMetrics:
    repo: str
    number: int
    kind: str
    reopenings: int
    participants: int
    interactions: int
    open_state_duration: float  # seconds
    release_mentions: int
    reactions: int
    order_of_address: Optional[int] = None
    importance: Optional[str] = None

    def __post_init__(self):
        if self.participants > self.interactions + 1:
            raise ValueError("participants cannot exceed interactions plus the author")
        if self.open_state_duration < 0:
            raise ValueError("open_state_duration must be nonnegative")
        if self.importance is not None and self.importance not in IMPORTANCE_LEVELS:
            raise ValueError(f"importance must be one of {IMPORTANCE_LEVELS}")

    @property
    def source(self) -> Tuple[str, int]:
        return (self.repo, self.number)


@dataclass(frozen=True)
class LabelClassification:
    raw_label: str
    verdict: str

    def __post_init__(self):
        if not self.raw_label:
            raise ValueError("raw_label must be non-empty")
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")


def count_reopenings(issue: IssueRecord) -> int:
    return sum(1 for e in issue.events if e.event_type == "reopened")


def count_participants(issue: IssueRecord) -> int:
    actors = {e.actor for e in issue.events if e.actor}
    actors.add(issue.author)
    actors.discard("")
    return max(len(actors), 1)


def count_interactions(issue: IssueRecord) -> int:
    return len(issue.events)


def count_reactions(issue: IssueRecord) -> int:
    return sum(issue.reactions.values())


def final_resolution_time(issue: IssueRecord) -> Optional[datetime]:
    times = [e.at for e in issue.events if e.event_type in CLOSING_EVENTS]
    return max(times) if times else None


def open_state_duration(issue: IssueRecord, analysis_time: datetime) -> float:
    """Seconds from creation to the final close/merge, or to analysis time
    for still-open issues. Clock skew clamps to zero."""
    resolved = final_resolution_time(issue)
    end = resolved if resolved is not None else analysis_time
    seconds = (end - issue.created_at).total_seconds()
    if seconds < 0:
        log.warning("clock skew on %s#%d: closing event predates creation", issue.repo, issue.number)
        return 0.0
    return seconds


def release_mentions(releases: Sequence[ReleaseRecord], issue_number: int) -> int:
    """Occurrences of '#<number>' across release bodies, on non-digit
    boundaries, so issue 12 does not match '#123'."""
    pattern = re.compile(rf"(?<![#0-9])#{issue_number}(?![0-9])")
    return sum(len(pattern.findall(r.body)) for r in releases)


Resolution = Tuple[int, datetime, datetime]  # (issue number, assigned_at, resolved_at)


def order_of_address(resolutions_by_contributor: Mapping[str, Sequence[Resolution]]
                     ) -> Dict[int, int]:
    """Ordinal position of each issue within its post-hiatus band.

    A hiatus is an inter-resolution gap strictly above the contributor's
    interpolated 75th-percentile gap. Issues resolved after a hiatus form
    a band, ordered by oldest assignment time. Contributors with fewer
    than MIN_RESOLUTIONS_FOR_HIATUS resolutions contribute nothing; an
    issue reached by several contributors keeps its smallest ordinal.
    """
    ordinals: Dict[int, int] = {}
    for contributor in sorted(resolutions_by_contributor):
        resolutions = sorted(resolutions_by_contributor[contributor], key=lambda r: r[2])
        if len(resolutions) < MIN_RESOLUTIONS_FOR_HIATUS:
            continue
        gaps = [
            (resolutions[i + 1][2] - resolutions[i][2]).total_seconds()
            for i in range(len(resolutions) - 1)
        ]
        threshold = float(np.percentile(gaps, 75))
        bands: List[List[Resolution]] = []
        current: Optional[List[Resolution]] = None
        for i, res in enumerate(resolutions):
            if i > 0 and gaps[i - 1] > threshold:
                current = []
                bands.append(current)
            elif current is None:
                continue  # before the first hiatus: no ordinal
            else:
                current.append(res)
                continue
            current.append(res)
        for band in bands:
            band.sort(key=lambda r: r[1])
            for position, res in enumerate(band, start=1):
                number = res[0]
                if number not in ordinals or position < ordinals[number]:
                    ordinals[number] = position
    return ordinals


def normalize_labels(issue_labels: Sequence[str],
                     classification: Mapping[str, str]) -> Optional[str]:
    """Map raw labels to the 3-degree importance scale; ties break upward."""
    lookup = {k.lower(): v for k, v in classification.items()}
    best: Optional[int] = None
    for label in issue_labels:
        verdict = lookup.get(label.lower())
        if verdict in IMPORTANCE_LEVELS:
            rank = IMPORTANCE_LEVELS.index(verdict)
            if best is None or rank > best:
                best = rank
    return IMPORTANCE_LEVELS[best] if best is not None else None


_P_LABEL = re.compile(r"^p\s*(\d+)$", re.IGNORECASE)
_LOW_WORDS = ("low", "minor", "trivial")
_REGULAR_WORDS = ("medium", "normal", "moderate", "regular")
_HIGH_WORDS = ("high", "urgent", "critical", "blocker", "important")


def suggest_label_map(all_labels: Iterable[str]) -> List[LabelClassification]:
    """Heuristic draft of a label classification for human review.

    'P<k>' schemes split their rank range into three groups with ties
    going to the higher importance; priority-word labels match keyword
    lists; everything else is drafted as unrelated.
    """
    labels = sorted(set(all_labels))
    ranks = {}
    for label in labels:
        m = _P_LABEL.match(label.strip())
        if m:
            ranks[label] = int(m.group(1))
    p_split = {}
    if ranks:
        ordered = sorted(set(ranks.values()))
        k = len(ordered)
        low_n = k // 3
        rem = k % 3
        regular_n = k // 3 + (1 if rem >= 2 else 0)
        for i, value in enumerate(ordered):
            if i < low_n:
                p_split[value] = "low"
            elif i < low_n + regular_n:
                p_split[value] = "regular"
            else:
                p_split[value] = "high"
    out = []
    for label in labels:
        text = label.lower()
        if label in ranks:
            verdict = p_split[ranks[label]]
        elif "priority" in text or "importance" in text or "severity" in text:
            if any(w in text for w in _HIGH_WORDS):
                verdict = "high"
            elif any(w in text for w in _LOW_WORDS):
                verdict = "low"
            elif any(w in text for w in _REGULAR_WORDS):
                verdict = "regular"
            else:
                verdict = "unrelated"
        else:
            verdict = "unrelated"
        out.append(LabelClassification(raw_label=label, verdict=verdict))
    return out


def build_resolutions(issues: Sequence[IssueRecord]) -> Dict[str, List[Resolution]]:
    """Assignment/resolution triples grouped by contributor.

    Resolution of an issue is its final closed/merged event; assignment
    times come from the per-contributor assignee history.
    """
    by_contributor: Dict[str, List[Resolution]] = {}
    for issue in issues:
        resolved = final_resolution_time(issue)
        if resolved is None:
            continue
        for contributor, assigned_at in issue.assignee_history:
            by_contributor.setdefault(contributor, []).append(
                (issue.number, assigned_at, resolved))
    for resolutions in by_contributor.values():
        resolutions.sort(key=lambda r: r[2])
    return by_contributor


def compute_all_metrics(dataset: Dataset,
                        label_map: Mapping[str, str],
                        analysis_time: Optional[datetime] = None) -> List[IssueMetrics]:
    """One IssueMetrics row per issue, in dataset order."""
    analysis_time = analysis_time or dataset.analysis_time
    if analysis_time is None:
        raise ValueError("analysis_time required (none stored in the dataset)")
    rows = []
    repos = sorted({i.repo for i in dataset.issues})
    ordinals_by_repo: Dict[str, Dict[int, int]] = {}
    for repo in repos:
        ordinals_by_repo[repo] = order_of_address(build_resolutions(dataset.issues_for(repo)))
    for issue in dataset.issues:
        releases = dataset.releases_for(issue.repo)
        rows.append(IssueMetrics(
            repo=issue.repo,
            number=issue.number,
            kind=issue.kind,
            reopenings=count_reopenings(issue),
            participants=count_participants(issue),
            interactions=count_interactions(issue),
            open_state_duration=open_state_duration(issue, analysis_time),
            release_mentions=release_mentions(releases, issue.number),
            reactions=count_reactions(issue),
            order_of_address=ordinals_by_repo[issue.repo].get(issue.number),
            importance=normalize_labels(issue.labels, label_map),
        ))
    return rows


# -- CSV interfaces --------------------------------------------------------

METRICS_FIELDS = ["repo", "number", "kind", "reopenings", "participants", "interactions",
                  "open_state_duration", "release_mentions", "reactions",
                  "order_of_address", "importance"]


def write_metrics_csv(rows: Sequence[IssueMetrics], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({
                "repo": row.repo,
                "number": row.number,
                "kind": row.kind,
                "reopenings": row.reopenings,
                "participants": row.participants,
                "interactions": row.interactions,
                "open_state_duration": f"{row.open_state_duration:.0f}",
                "release_mentions": row.release_mentions,
                "reactions": row.reactions,
                "order_of_address": "" if row.order_of_address is None else row.order_of_address,
                "importance": row.importance or "",
            })


def read_metrics_csv(path: Union[str, Path]) -> List[IssueMetrics]:
    rows = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(IssueMetrics(
                repo=rec["repo"],
                number=int(rec["number"]),
                kind=rec["kind"],
                reopenings=int(rec["reopenings"]),
                participants=int(rec["participants"]),
                interactions=int(rec["interactions"]),
                open_state_duration=float(rec["open_state_duration"]),
                release_mentions=int(rec["release_mentions"]),
                reactions=int(rec["reactions"]),
                order_of_address=int(rec["order_of_address"]) if rec["order_of_address"] else None,
                importance=rec["importance"] or None,
            ))
    return rows


def read_label_map_csv(path: Union[str, Path]) -> Dict[str, str]:
    out = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out[rec["raw_label"]] = rec["verdict"]
    return out


def write_label_map_csv(classifications: Sequence[LabelClassification],
                        path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["raw_label", "verdict"])
        for item in classifications:
            writer.writerow([item.raw_label, item.verdict])

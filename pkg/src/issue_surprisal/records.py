"""Canonical dataset records: repositories, issues, events, and releases.

All records are immutable after construction and safe to share between
threads. Timestamps are timezone-aware UTC datetimes everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Optional, Sequence, Tuple

ISSUE_KINDS = ("issue", "pull_request")
ISSUE_STATES = ("open", "closed", "merged")


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp ('Z' suffix allowed) into aware UTC."""
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class RepositorySnapshot:
    full_name: str
    stars: int
    issue_count: int
    primary_language_hint: Optional[str] = None
    fetched_at: Optional[datetime] = None

    def __post_init__(self):
        parts = self.full_name.split("/")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"full_name must be 'owner/name', got {self.full_name!r}")
        if self.stars < 0 or self.issue_count < 0:
            raise ValueError("stars and issue_count must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "full_name": self.full_name,
            "stars": self.stars,
            "issue_count": self.issue_count,
            "primary_language_hint": self.primary_language_hint,
            "fetched_at": format_timestamp(self.fetched_at) if self.fetched_at else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RepositorySnapshot":
        return cls(
            full_name=d["full_name"],
            stars=int(d["stars"]),
            issue_count=int(d["issue_count"]),
            primary_language_hint=d.get("primary_language_hint"),
            fetched_at=parse_timestamp(d["fetched_at"]) if d.get("fetched_at") else None,
        )


@dataclass(frozen=True)
class EventRecord:
    event_type: str
    actor: str
    at: datetime

    def __post_init__(self):
        if not self.event_type:
            raise ValueError("event_type must be non-empty")
        if not isinstance(self.at, datetime):
            raise ValueError("at must be a datetime")

    def to_dict(self) -> dict:
        return {"event_type": self.event_type, "actor": self.actor, "at": format_timestamp(self.at)}

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        return cls(event_type=d["event_type"], actor=d["actor"], at=parse_timestamp(d["at"]))


@dataclass(frozen=True)
class IssueRecord:
    repo: str
    number: int
    kind: str
    title: str
    body: str
    author: str
    created_at: datetime
    state: str
    events: Tuple[EventRecord, ...] = ()
    labels: Tuple[str, ...] = ()
    reactions: Mapping[str, int] = field(default_factory=dict)
    assignee_history: Tuple[Tuple[str, datetime], ...] = ()
    partial: bool = False

    def __post_init__(self):
        if self.number < 1:
            raise ValueError("issue number must be positive")
        if self.kind not in ISSUE_KINDS:
            raise ValueError(f"kind must be one of {ISSUE_KINDS}, got {self.kind!r}")
        if self.state not in ISSUE_STATES:
            raise ValueError(f"state must be one of {ISSUE_STATES}, got {self.state!r}")
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "assignee_history", tuple((a, t) for a, t in self.assignee_history))
        object.__setattr__(self, "reactions", dict(self.reactions))
        times = [e.at for e in self.events]
        if times != sorted(times):
            raise ValueError(f"events of {self.repo}#{self.number} not sorted by timestamp")
        if any(c < 0 for c in self.reactions.values()):
            raise ValueError("reaction counts must be nonnegative")

    @property
    def source(self) -> Tuple[str, int]:
        return (self.repo, self.number)

    def to_dict(self) -> dict:
        return {
            "repo": self.repo,
            "number": self.number,
            "kind": self.kind,
            "title": self.title,
            "body": self.body,
            "author": self.author,
            "created_at": format_timestamp(self.created_at),
            "state": self.state,
            "events": [e.to_dict() for e in self.events],
            "labels": list(self.labels),
            "reactions": dict(sorted(self.reactions.items())),
            "assignee_history": [[a, format_timestamp(t)] for a, t in self.assignee_history],
            "partial": self.partial,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IssueRecord":
        return cls(
            repo=d["repo"],
            number=int(d["number"]),
            kind=d["kind"],
            title=d.get("title", ""),
            body=d.get("body", ""),
            author=d.get("author", ""),
            created_at=parse_timestamp(d["created_at"]),
            state=d["state"],
            events=tuple(EventRecord.from_dict(e) for e in d.get("events", [])),
            labels=tuple(d.get("labels", [])),
            reactions={k: int(v) for k, v in d.get("reactions", {}).items()},
            assignee_history=tuple((a, parse_timestamp(t)) for a, t in d.get("assignee_history", [])),
            partial=bool(d.get("partial", False)),
        )


@dataclass(frozen=True)
class ReleaseRecord:
    repo: str
    tag: str
    published_at: datetime
    body: str = ""

    def __post_init__(self):
        if not self.tag:
            raise ValueError("release tag must be non-empty")

    def to_dict(self) -> dict:
        return {
            "repo": self.repo,
            "tag": self.tag,
            "published_at": format_timestamp(self.published_at),
            "body": self.body,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReleaseRecord":
        return cls(
            repo=d["repo"],
            tag=d["tag"],
            published_at=parse_timestamp(d["published_at"]),
            body=d.get("body", ""),
        )


@dataclass(frozen=True)
class Dataset:
    """A complete mined dataset plus the archive-wide analysis timestamp."""

    repositories: Tuple[RepositorySnapshot, ...]
    issues: Tuple[IssueRecord, ...]
    releases: Tuple[ReleaseRecord, ...]
    analysis_time: Optional[datetime] = None

    def __post_init__(self):
        object.__setattr__(self, "repositories", tuple(self.repositories))
        object.__setattr__(self, "issues", tuple(self.issues))
        object.__setattr__(self, "releases", tuple(self.releases))
        seen = set()
        for issue in self.issues:
            key = (issue.repo, issue.number)
            if key in seen:
                raise ValueError(f"duplicate issue {issue.repo}#{issue.number}")
            seen.add(key)

    def issues_for(self, repo: str) -> Tuple[IssueRecord, ...]:
        return tuple(i for i in self.issues if i.repo == repo)

    def releases_for(self, repo: str) -> Tuple[ReleaseRecord, ...]:
        return tuple(r for r in self.releases if r.repo == repo)

"""GitHub-compatible API client with rate pacing, plus repository filters.

The client never drops requests to satisfy the hourly quota: it pauses.
The HTTP session, clock, and sleep function are injectable so tests can
run against canned fixtures with a simulated clock.
"""
from __future__ import annotations

import logging
import re
import time
from datetime import datetime, timezone
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence

import requests

from .errors import AuthFailure, NetworkError, RateLimited
from .records import EventRecord, IssueRecord, ReleaseRecord, RepositorySnapshot, parse_timestamp

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.github.com"
DEFAULT_RATE_LIMIT = 5000  # calls per hour
MAX_RETRIES = 3
BACKOFF_SECONDS = (1.0, 2.0, 4.0)
PER_PAGE = 100


class RateLimiter:
    """Sliding-window pacer: at most `calls_per_hour` calls in any hour."""

    def __init__(self, calls_per_hour: int = DEFAULT_RATE_LIMIT,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if calls_per_hour < 1:
            raise ValueError("calls_per_hour must be positive")
        self.calls_per_hour = calls_per_hour
        self._clock = clock
        self._sleep = sleep
        self._timestamps: List[float] = []

    def acquire(self) -> None:
        now = self._clock()
        window_start = now - 3600.0
        self._timestamps = [t for t in self._timestamps if t > window_start]
        if len(self._timestamps) >= self.calls_per_hour:
            wait = self._timestamps[0] + 3600.0 - now
            if wait > 0:
                self._sleep(wait)
                now = self._clock()
                self._timestamps = [t for t in self._timestamps if t > now - 3600.0]
        self._timestamps.append(self._clock())


class GitHubClient:
    def __init__(self, token: str, session: Optional[requests.Session] = None,
                 base_url: str = DEFAULT_BASE_URL, rate_limit: int = DEFAULT_RATE_LIMIT,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.token = token
        self.session = session or requests.Session()
        self.base_url = base_url.rstrip("/")
        self.limiter = RateLimiter(rate_limit, clock=clock, sleep=sleep)
        self._sleep = sleep

    # -- transport ---------------------------------------------------------

    def _get(self, path: str, params: Optional[dict] = None):
        url = path if path.startswith("http") else self.base_url + path
        headers = {"Accept": "application/vnd.github+json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_exc: Optional[Exception] = None
        for attempt in range(MAX_RETRIES):
            self.limiter.acquire()
            try:
                resp = self.session.get(url, params=params, headers=headers, timeout=30)
            except requests.RequestException as exc:
                last_exc = exc
                self._sleep(BACKOFF_SECONDS[attempt])
                continue
            if resp.status_code == 401:
                raise AuthFailure(f"authentication failed for {url}")
            if resp.status_code in (403, 429) and _looks_rate_limited(resp):
                retry_after = _retry_after_seconds(resp)
                log.info("rate limited; pausing %.0fs", retry_after)
                self._sleep(retry_after)
                continue
            if resp.status_code >= 500:
                last_exc = NetworkError(f"server error {resp.status_code} for {url}")
                self._sleep(BACKOFF_SECONDS[attempt])
                continue
            resp.raise_for_status()
            return resp
        raise NetworkError(f"request to {url} failed after {MAX_RETRIES} attempts") from last_exc

    def _paginate(self, path: str, params: Optional[dict] = None) -> Iterator[dict]:
        params = dict(params or {})
        params.setdefault("per_page", PER_PAGE)
        page = 1
        while True:
            params["page"] = page
            resp = self._get(path, params=params)
            payload = resp.json()
            items = payload.get("items", payload) if isinstance(payload, dict) else payload
            if not items:
                return
            yield from items
            if len(items) < params["per_page"]:
                return
            page += 1

    # -- endpoints ---------------------------------------------------------

    def fetch_top_repositories(self, count: int) -> List[RepositorySnapshot]:
        """The `count` most starred repositories, stars non-increasing."""
        if count < 1:
            raise ValueError("count must be positive")
        fetched_at = datetime.now(timezone.utc)
        snapshots: List[RepositorySnapshot] = []
        for item in self._paginate("/search/repositories",
                                   {"q": "stars:>=1", "sort": "stars", "order": "desc"}):
            snapshots.append(RepositorySnapshot(
                full_name=item["full_name"],
                stars=int(item.get("stargazers_count", 0)),
                issue_count=int(item.get("open_issues_count", 0)),
                primary_language_hint=item.get("language"),
                fetched_at=fetched_at,
            ))
            if len(snapshots) >= count:
                break
        snapshots.sort(key=lambda s: -s.stars)
        return snapshots[:count]

    def fetch_issues(self, repo: RepositorySnapshot) -> Iterator[IssueRecord]:
        """Every issue and pull request of `repo`, with events and reactions.

        Issues whose event pages keep failing are yielded with
        ``partial=True`` rather than dropped.
        """
        seen = set()
        for item in self._paginate(f"/repos/{repo.full_name}/issues", {"state": "all"}):
            number = int(item["number"])
            if number in seen:
                continue
            seen.add(number)
            partial = False
            try:
                events = self._fetch_events(repo.full_name, number)
            except NetworkError:
                log.warning("event pages failed for %s#%d; marking partial", repo.full_name, number)
                events, partial = [], True
            reactions = {
                k: int(v) for k, v in (item.get("reactions") or {}).items()
                if isinstance(v, int) and k not in ("total_count",)
            }
            state = item.get("state", "open")
            if item.get("pull_request") and (item["pull_request"].get("merged_at") or item.get("merged_at")):
                state = "merged"
            assignee_history = tuple(
                (e.actor, e.at) for e in events if e.event_type == "assigned"
            )
            yield IssueRecord(
                repo=repo.full_name,
                number=number,
                kind="pull_request" if item.get("pull_request") else "issue",
                title=item.get("title") or "",
                body=item.get("body") or "",
                author=(item.get("user") or {}).get("login", ""),
                created_at=parse_timestamp(item["created_at"]),
                state=state,
                events=tuple(sorted(events, key=lambda e: e.at)),
                labels=tuple(l["name"] if isinstance(l, dict) else str(l) for l in item.get("labels", [])),
                reactions=reactions,
                assignee_history=assignee_history,
                partial=partial,
            )

    def _fetch_events(self, full_name: str, number: int) -> List[EventRecord]:
        events = []
        for ev in self._paginate(f"/repos/{full_name}/issues/{number}/events"):
            events.append(EventRecord(
                event_type=ev.get("event", "unknown"),
                actor=(ev.get("actor") or {}).get("login", ""),
                at=parse_timestamp(ev["created_at"]),
            ))
        return events

    def fetch_releases(self, repo: RepositorySnapshot) -> List[ReleaseRecord]:
        releases = []
        for item in self._paginate(f"/repos/{repo.full_name}/releases"):
            releases.append(ReleaseRecord(
                repo=repo.full_name,
                tag=item.get("tag_name") or item.get("name") or "untagged",
                published_at=parse_timestamp(item.get("published_at") or item["created_at"]),
                body=item.get("body") or "",
            ))
        return releases


# -- filtering ------------------------------------------------------------

_CODE_SPAN = re.compile(r"`[^`]*`")


def _title_is_mostly_ascii_letters(title: str) -> bool:
    text = _CODE_SPAN.sub(" ", title)
    letters = [c for c in text if c.isalpha()]
    if not letters:
        return False
    ascii_letters = sum(1 for c in letters if c.isascii())
    return ascii_letters * 2 > len(letters)


def looks_english(titles: Sequence[str], threshold: float = 0.8) -> bool:
    """True when >= `threshold` of sampled titles are majority ASCII-letter."""
    if not titles:
        return False
    good = sum(1 for t in titles if _title_is_mostly_ascii_letters(t))
    return good >= threshold * len(titles)


def filter_repositories(repos: Iterable[RepositorySnapshot], min_issues: int = 1000,
                        english_only: bool = False,
                        title_samples: Optional[Dict[str, Sequence[str]]] = None
                        ) -> List[RepositorySnapshot]:
    """Drop repositories below the issue threshold and, optionally, non-English ones.

    Order-preserving and idempotent. The English heuristic needs sampled
    issue titles; repositories without samples are kept, since the
    snapshot alone carries no natural-language evidence.
    """
    survivors = []
    for repo in repos:
        if repo.issue_count < min_issues:
            continue
        if english_only:
            samples = (title_samples or {}).get(repo.full_name)
            if samples is not None and not looks_english(samples):
                continue
        survivors.append(repo)
    return survivors


def _looks_rate_limited(resp) -> bool:
    if resp.status_code == 429:
        return True
    remaining = resp.headers.get("X-RateLimit-Remaining")
    return remaining == "0" or "rate limit" in (resp.text or "").lower()


def _retry_after_seconds(resp) -> float:
    if resp.headers.get("Retry-After"):
        return float(resp.headers["Retry-After"])
    reset = resp.headers.get("X-RateLimit-Reset")
    if reset:
        return max(1.0, float(reset) - time.time())
    return 60.0

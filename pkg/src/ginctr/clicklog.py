"""Click-log parsing and query-coherent sessionization.

A click log is a UTF-8 TSV with one click per line::

    user_id <TAB> timestamp <TAB> query_text <TAB> item_id

Lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import groupby
from typing import Iterable, Sequence


class ClickLogError(ValueError):
    """Raised for malformed click-log input."""


def tokenize(text: str) -> frozenset[str]:
    return frozenset(text.lower().split())


@dataclass(frozen=True)
class ClickEvent:
    user_id: str
    timestamp: int
    query_tokens: frozenset[str]
    item_id: str

    def __post_init__(self):
        if self.timestamp < 0:
            raise ClickLogError(f"negative timestamp {self.timestamp}")
        if not self.query_tokens:
            raise ClickLogError("empty query")
        if not self.item_id or not self.user_id:
            raise ClickLogError("empty id")


@dataclass(frozen=True)
class Session:
    user_id: str
    events: tuple[ClickEvent, ...]

    @property
    def items(self) -> list[str]:
        return [e.item_id for e in self.events]

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class SessionConfig:
    jaccard_threshold: float = 0.3
    max_gap_seconds: int = 1800

    def __post_init__(self):
        if not 0.0 <= self.jaccard_threshold <= 1.0:
            raise ValueError("jaccard_threshold must lie in [0, 1]")
        if self.max_gap_seconds <= 0:
            raise ValueError("max_gap_seconds must be positive")


def parse_click_log(lines: Iterable[str]) -> list[ClickEvent]:
    """Parse click-log lines into events, preserving file order.

    Raises :class:`ClickLogError` naming the 1-based line number on the
    first malformed line.
    """
    events = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ClickLogError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
        user, ts, query, item = fields
        try:
            timestamp = int(ts)
        except ValueError:
            raise ClickLogError(f"line {lineno}: non-integer timestamp {ts!r}") from None
        user, item = user.strip(), item.strip()
        if not user or not item:
            raise ClickLogError(f"line {lineno}: empty user or item id")
        try:
            events.append(ClickEvent(user, timestamp, tokenize(query), item))
        except ClickLogError as exc:
            raise ClickLogError(f"line {lineno}: {exc}") from None
    return events


def read_click_log(path) -> list[ClickEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_click_log(fh)


def query_similarity(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """Jaccard similarity of two non-empty token sets."""
    if not a or not b:
        raise ValueError("query token sets must be non-empty")
    return len(a & b) / len(a | b)


def sort_events(events: Iterable[ClickEvent]) -> list[ClickEvent]:
    # stable, so equal (user, timestamp) keep file order
    return sorted(events, key=lambda e: (e.user_id, e.timestamp))


def filter_recent(events: Sequence[ClickEvent], max_age_days: float | None) -> list[ClickEvent]:
    """Keep only events within ``max_age_days`` of the newest timestamp in the log."""
    if max_age_days is None or not events:
        return list(events)
    cutoff = max(e.timestamp for e in events) - max_age_days * 86400
    return [e for e in events if e.timestamp >= cutoff]


def segment_sessions(events: Sequence[ClickEvent], cfg: SessionConfig = SessionConfig()) -> list[Session]:
    """Split per-user click sequences into sessions.

    ``events`` must be sorted by ``(user_id, timestamp)``. A session breaks
    between consecutive clicks of a user when their query similarity drops
    below ``cfg.jaccard_threshold`` or the gap exceeds ``cfg.max_gap_seconds``.
    """
    for prev, cur in zip(events, events[1:]):
        if (cur.user_id, cur.timestamp) < (prev.user_id, prev.timestamp):
            raise ClickLogError(
                f"events not sorted by (user_id, timestamp): {prev.user_id}@{prev.timestamp} "
                f"before {cur.user_id}@{cur.timestamp}"
            )
    sessions = []
    for user, group in groupby(events, key=lambda e: e.user_id):
        current: list[ClickEvent] = []
        for ev in group:
            if current:
                last = current[-1]
                if (
                    ev.timestamp - last.timestamp > cfg.max_gap_seconds
                    or query_similarity(ev.query_tokens, last.query_tokens) < cfg.jaccard_threshold
                ):
                    sessions.append(Session(user, tuple(current)))
                    current = []
            current.append(ev)
        if current:
            sessions.append(Session(user, tuple(current)))
    return sessions

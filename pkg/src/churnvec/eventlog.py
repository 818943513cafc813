"""Raw game-log records, the line-delimited wire format, and per-user timelines.

One event per line, as a JSON object with keys in canonical order::

    {"user":"u00001","day":3,"kind":"login","session_seconds":600}
    {"user":"u00001","day":3,"kind":"stage_clear","stage_id":4}
    {"user":"u00001","day":3,"kind":"get_resource","resource_amount":120}
    {"user":"u00001","day":4,"kind":"get_character","character_id":"c2"}

Days are integer offsets from the dataset epoch.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Optional


class EventKind(enum.Enum):
    LOGIN = "login"
    STAGE_CLEAR = "stage_clear"
    GET_RESOURCE = "get_resource"
    GET_CHARACTER = "get_character"


# payload key carried by each kind, in wire order
PAYLOAD_FIELD = {
    EventKind.LOGIN: "session_seconds",
    EventKind.STAGE_CLEAR: "stage_id",
    EventKind.GET_RESOURCE: "resource_amount",
    EventKind.GET_CHARACTER: "character_id",
}
_ALL_PAYLOAD = frozenset(PAYLOAD_FIELD.values())


class EventLogError(ValueError):
    """A log line could not be turned into a valid event."""

    def __init__(self, reason: str, line_no: Optional[int] = None, field: Optional[str] = None):
        self.reason = reason
        self.line_no = line_no
        self.field = field
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(where + reason)


class SchemaError(EventLogError):
    pass


class RangeError(EventLogError):
    pass


@dataclass(frozen=True)
class GameEvent:
    user_id: str
    day: int
    kind: EventKind
    session_seconds: Optional[int] = None
    stage_id: Optional[int] = None
    resource_amount: Optional[int] = None
    character_id: Optional[str] = None

    @property
    def payload(self):
        return getattr(self, PAYLOAD_FIELD[self.kind])

    def validate(self, dataset_length_days: Optional[int] = None) -> None:
        """Raise SchemaError/RangeError if the event breaks its invariants."""
        expected = PAYLOAD_FIELD[self.kind]
        for name in _ALL_PAYLOAD:
            value = getattr(self, name)
            if name == expected and value is None:
                raise SchemaError(f"{self.kind.value} event missing '{name}'", field=name)
            if name != expected and value is not None:
                raise SchemaError(f"{self.kind.value} event must not carry '{name}'", field=name)
        if not isinstance(self.user_id, str) or not self.user_id:
            raise SchemaError("'user' must be a non-empty string", field="user")
        if not _is_int(self.day):
            raise SchemaError("'day' must be an integer", field="day")
        if self.day < 0:
            raise RangeError(f"negative day {self.day}", field="day")
        if dataset_length_days is not None and self.day >= dataset_length_days:
            raise RangeError(f"day {self.day} outside [0, {dataset_length_days})", field="day")
        value = self.payload
        if self.kind is EventKind.GET_CHARACTER:
            if not isinstance(value, str) or not value:
                raise SchemaError("'character_id' must be a non-empty string", field=expected)
            return
        if not _is_int(value):
            raise SchemaError(f"'{expected}' must be an integer", field=expected)
        if self.kind is EventKind.STAGE_CLEAR:
            if value < 1:
                raise RangeError(f"stage_id must be positive, got {value}", field=expected)
        elif value < 0:
            raise RangeError(f"negative {expected} {value}", field=expected)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def event_from_dict(obj: dict, line_no: Optional[int] = None,
                    dataset_length_days: Optional[int] = None) -> GameEvent:
    if not isinstance(obj, dict):
        raise SchemaError("record is not an object", line_no)
    for key in ("user", "day", "kind"):
        if key not in obj:
            raise SchemaError(f"missing field '{key}'", line_no, key)
    try:
        kind = EventKind(obj["kind"])
    except ValueError:
        raise SchemaError(f"unknown kind {obj['kind']!r}", line_no, "kind") from None
    extra = set(obj) - {"user", "day", "kind"} - _ALL_PAYLOAD
    if extra:
        raise SchemaError(f"unknown field(s) {sorted(extra)}", line_no, sorted(extra)[0])
    event = GameEvent(
        user_id=obj["user"],
        day=obj["day"],
        kind=kind,
        **{k: obj[k] for k in _ALL_PAYLOAD if k in obj},
    )
    try:
        event.validate(dataset_length_days)
    except EventLogError as exc:
        raise type(exc)(exc.reason, line_no, exc.field) from None
    return event


def event_to_dict(event: GameEvent) -> dict:
    key = PAYLOAD_FIELD[event.kind]
    return {"user": event.user_id, "day": event.day, "kind": event.kind.value, key: event.payload}


def format_event(event: GameEvent) -> str:
    return json.dumps(event_to_dict(event), separators=(",", ":"), ensure_ascii=False)


def parse_events(lines: Iterable[str], dataset_length_days: Optional[int] = None) -> list[GameEvent]:
    """Parse line-delimited records into events, preserving input order.

    Blank lines are skipped. Any malformed line raises an ``EventLogError``
    (``SchemaError`` or ``RangeError`` for the specific cases) whose
    ``line_no`` is 1-based.
    """
    if isinstance(lines, str):
        # only "\n" ends a record; str.splitlines would also split on U+2028 etc.
        lines = lines.split("\n")
    events = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventLogError(f"malformed record: {exc.msg}", line_no) from None
        events.append(event_from_dict(obj, line_no, dataset_length_days))
    return events


def serialize_events(events: Iterable[GameEvent]) -> str:
    return "".join(format_event(e) + "\n" for e in events)


def read_events(path, dataset_length_days: Optional[int] = None) -> list[GameEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh, dataset_length_days)


def write_events(path, events: Iterable[GameEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_events(events))


@dataclass
class UserTimeline:
    user_id: str
    events: list[GameEvent]
    first_play_day: int
    last_play_day: int

    @property
    def lifetime_days(self) -> int:
        return self.last_play_day - self.first_play_day


def build_timelines(events: Iterable[GameEvent]) -> dict[str, UserTimeline]:
    """Group events by user, sorted by day with input order kept for ties.

    Users are returned in order of first appearance. A user without any
    login is rejected since nothing downstream can measure their play.
    """
    by_user: dict[str, list[GameEvent]] = {}
    for e in events:
        by_user.setdefault(e.user_id, []).append(e)
    timelines = {}
    for user, evs in by_user.items():
        evs.sort(key=lambda e: e.day)  # stable
        if not any(e.kind is EventKind.LOGIN for e in evs):
            raise SchemaError(f"user {user!r} has no login event", field="kind")
        timelines[user] = UserTimeline(user, evs, evs[0].day, evs[-1].day)
    return timelines

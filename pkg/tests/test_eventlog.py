"""Tests for the event wire format, validation, and per-user timelines."""
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnvec.eventlog import (
    EventKind,
    EventLogError,
    GameEvent,
    RangeError,
    SchemaError,
    build_timelines,
    event_to_dict,
    format_event,
    parse_events,
    read_events,
    serialize_events,
    write_events,
)


def _login(user, day, secs=600):
    return GameEvent(user, day, EventKind.LOGIN, session_seconds=secs)


def _reference_check(obj):
    """Schema oracle: rebuild the canonical line by hand and compare."""
    payload = {"login": "session_seconds", "stage_clear": "stage_id",
               "get_resource": "resource_amount", "get_character": "character_id"}[obj["kind"]]
    return json.dumps({"user": obj["user"], "day": obj["day"], "kind": obj["kind"],
                       payload: obj[payload]}, separators=(",", ":"), ensure_ascii=False)


events_strategy = st.lists(
    st.one_of(
        st.builds(lambda u, d, s: GameEvent(u, d, EventKind.LOGIN, session_seconds=s),
                  st.sampled_from(["u1", "u2", "x"]), st.integers(0, 239), st.integers(0, 10**5)),
        st.builds(lambda u, d, s: GameEvent(u, d, EventKind.STAGE_CLEAR, stage_id=s),
                  st.sampled_from(["u1", "u2", "x"]), st.integers(0, 239), st.integers(1, 500)),
        st.builds(lambda u, d, a: GameEvent(u, d, EventKind.GET_RESOURCE, resource_amount=a),
                  st.sampled_from(["u1", "u2", "x"]), st.integers(0, 239), st.integers(0, 10**6)),
        st.builds(lambda u, d, c: GameEvent(u, d, EventKind.GET_CHARACTER, character_id=c),
                  st.sampled_from(["u1", "u2", "x"]), st.integers(0, 239),
                  st.text(min_size=1, max_size=8)),
    ),
    max_size=40,
)


class TestParse:
    def test_login_line(self):
        events = parse_events(['{"user":"u1","day":3,"kind":"login","session_seconds":600}'])
        assert events == [GameEvent("u1", 3, EventKind.LOGIN, session_seconds=600)]
        assert events[0].payload == 600

    def test_empty_input(self):
        assert parse_events([]) == []
        assert parse_events("") == []

    def test_blank_lines_skipped_and_count_matches(self):
        text = "\n".join([format_event(_login("a", 1)), "", format_event(_login("a", 2)), "  "])
        assert len(parse_events(text)) == 2

    def test_stage_clear_missing_stage_id(self):
        line = '{"user":"u1","day":3,"kind":"stage_clear"}'
        with pytest.raises(SchemaError) as err:
            parse_events([line])
        assert err.value.field == "stage_id"
        assert err.value.line_no == 1
        assert "stage_id" in str(err.value)

    def test_unknown_kind(self):
        with pytest.raises(SchemaError) as err:
            parse_events(['{"user":"u1","day":3,"kind":"logout","session_seconds":5}'])
        assert err.value.field == "kind"

    def test_wrong_payload_for_kind(self):
        with pytest.raises(SchemaError):
            parse_events(['{"user":"u1","day":3,"kind":"login","session_seconds":5,"stage_id":2}'])

    def test_malformed_line_reports_line_number(self):
        good = format_event(_login("u1", 0))
        with pytest.raises(EventLogError) as err:
            parse_events([good, good, "{not json"])
        assert err.value.line_no == 3

    @pytest.mark.parametrize("line", [
        '{"user":"u1","day":-1,"kind":"login","session_seconds":5}',
        '{"user":"u1","day":1,"kind":"login","session_seconds":-5}',
        '{"user":"u1","day":1,"kind":"get_resource","resource_amount":-1}',
        '{"user":"u1","day":1,"kind":"stage_clear","stage_id":0}',
    ])
    def test_range_errors(self, line):
        with pytest.raises(RangeError):
            parse_events([line])

    def test_day_beyond_dataset_length(self):
        line = format_event(_login("u1", 240))
        assert len(parse_events([line])) == 1
        with pytest.raises(RangeError):
            parse_events([line], dataset_length_days=240)

    def test_bool_is_not_an_integer(self):
        with pytest.raises(SchemaError):
            parse_events(['{"user":"u1","day":true,"kind":"login","session_seconds":5}'])

    @given(events_strategy)
    @settings(max_examples=60, deadline=None)
    def test_line_matches_schema_oracle(self, events):
        for e in events:
            assert format_event(e) == _reference_check(event_to_dict(e))


class TestRoundTrip:
    @given(events_strategy)
    @settings(max_examples=80, deadline=None)
    def test_serialize_parse_identity(self, events):
        text = serialize_events(events)
        parsed = parse_events(text)
        assert parsed == events
        assert serialize_events(parsed) == text

    def test_unicode_line_separators_inside_strings(self):
        events = [GameEvent("u1", 0, EventKind.GET_CHARACTER, character_id="a\u2028b\x85c")]
        text = serialize_events(events)
        assert parse_events(text) == events

    def test_file_round_trip(self, tmp_path):
        events = [_login("u1", 0), GameEvent("u1", 0, EventKind.GET_CHARACTER, character_id="é")]
        path = tmp_path / "events.jsonl"
        write_events(path, events)
        assert read_events(path) == events
        raw = path.read_bytes()
        write_events(path, read_events(path))
        assert path.read_bytes() == raw


class TestTimelines:
    def test_first_last_from_unsorted_days(self):
        events = [_login("u", 2), _login("u", 7), _login("u", 5)]
        tl = build_timelines(events)["u"]
        assert (tl.first_play_day, tl.last_play_day) == (2, 7)
        assert [e.day for e in tl.events] == [2, 5, 7]
        assert tl.lifetime_days == 5

    def test_two_users_partition(self):
        events = [_login("a", 1), _login("b", 1), _login("a", 2)]
        tls = build_timelines(events)
        assert set(tls) == {"a", "b"}
        assert len(tls["a"].events) == 2 and len(tls["b"].events) == 1

    def test_stable_order_within_day(self):
        e1 = GameEvent("a", 4, EventKind.STAGE_CLEAR, stage_id=1)
        e2 = _login("a", 4)
        e3 = GameEvent("a", 4, EventKind.STAGE_CLEAR, stage_id=2)
        tl = build_timelines([e1, _login("a", 1), e2, e3])["a"]
        assert tl.events[1:] == [e1, e2, e3]

    def test_user_without_login_rejected(self):
        with pytest.raises(SchemaError):
            build_timelines([GameEvent("a", 1, EventKind.STAGE_CLEAR, stage_id=1)])

    @given(events_strategy)
    @settings(max_examples=60, deadline=None)
    def test_partition_and_sorting(self, events):
        # every user needs a login for a timeline to exist
        users = sorted({e.user_id for e in events})
        events = events + [_login(u, 0) for u in users]
        tls = build_timelines(events)
        assert sum(len(t.events) for t in tls.values()) == len(events)
        for tl in tls.values():
            days = [e.day for e in tl.events]
            assert days == sorted(days)
            assert tl.first_play_day == min(days)
            assert tl.last_play_day == max(days)

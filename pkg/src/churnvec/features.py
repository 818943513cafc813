"""Daily player records, the 16-factor feature rows, and sequence windows.

Extraction runs in four stages: raw logs are aggregated into per-day player
data, then day-over-day changes, then change rates. Every user gets one
record for each day of their active span, including days without a login.

Conventions chosen here:

* ``rank_today`` is the dense rank (1 = most) of cumulative resources among
  all users who have joined by that day. Users past their last play day keep
  their final total, so a row never depends on events after its day.
* ``delta_X(d) = X(d) - X(d-1)``, zero on a user's first day.
* ``rate_X(d) = delta_X(d) / max(|X(d-1)|, eps)`` with ``eps = 1``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .eventlog import EventKind, UserTimeline

RATE_EPS = 1.0
DEFAULT_WINDOW = 20

FEATURE_GROUPS = {
    "action": ("play_time_today", "rank_today", "stage_cleared_today", "characters_today"),
    "record": ("most_play_time", "highest_rank", "highest_stage_cleared", "total_characters"),
    "change": ("delta_play_time", "delta_rank", "delta_stage", "delta_characters"),
    "achievement": ("rate_play_time", "rate_rank", "rate_stage", "rate_characters"),
}
FEATURE_NAMES = tuple(name for group in FEATURE_GROUPS.values() for name in group)
N_FEATURES = len(FEATURE_NAMES)

# delta/rate suffix -> the base column it differentiates
_CHANGE_BASE = {
    "play_time": "play_time_today",
    "rank": "rank_today",
    "stage": "highest_stage_cleared",
    "resources": "total_resources",
    "characters": "total_characters",
}


@dataclass(frozen=True)
class DailyPlayerRecord:
    user_id: str
    day: int
    play_time_today: float
    rank_today: int
    stage_cleared_today: int
    characters_today: int
    resources_today: int
    highest_stage_cleared: int
    total_play_time: float
    total_resources: int
    total_characters: int
    most_play_time: float
    highest_rank: int
    delta_play_time: float
    delta_rank: float
    delta_stage: float
    delta_resources: float
    delta_characters: float
    rate_play_time: float
    rate_rank: float
    rate_stage: float
    rate_resources: float
    rate_characters: float


RECORD_FIELDS = tuple(f.name for f in fields(DailyPlayerRecord))


@dataclass(frozen=True)
class FeatureRow:
    user_id: str
    day: int
    values: np.ndarray
    feature_names: tuple = FEATURE_NAMES

    def __eq__(self, other):
        return (isinstance(other, FeatureRow) and self.user_id == other.user_id
                and self.day == other.day and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class SequenceWindow:
    user_id: str
    end_day: int
    matrix: np.ndarray  # (W, N_FEATURES)
    mask: np.ndarray    # (W,) 1.0 for observed days, 0.0 for padding


def _user_daily_columns(tl: UserTimeline) -> dict:
    first, last = tl.first_play_day, tl.last_play_day
    n = last - first + 1
    play = np.zeros(n)
    stage_today = np.zeros(n, dtype=np.int64)
    chars = np.zeros(n, dtype=np.int64)
    res = np.zeros(n, dtype=np.int64)
    for e in tl.events:
        i = e.day - first
        if e.kind is EventKind.LOGIN:
            play[i] += e.session_seconds
        elif e.kind is EventKind.STAGE_CLEAR:
            stage_today[i] = max(stage_today[i], e.stage_id)
        elif e.kind is EventKind.GET_RESOURCE:
            res[i] += e.resource_amount
        else:
            chars[i] += 1
    return {
        "day": np.arange(first, last + 1),
        "play_time_today": play,
        "stage_cleared_today": stage_today,
        "characters_today": chars,
        "resources_today": res,
        "highest_stage_cleared": np.maximum.accumulate(stage_today),
        "total_play_time": np.cumsum(play),
        "total_resources": np.cumsum(res),
        "total_characters": np.cumsum(chars),
        "most_play_time": np.maximum.accumulate(play),
    }


def dense_rank_desc(values: np.ndarray) -> np.ndarray:
    """1 for the largest value; ties share a rank; no gaps."""
    _, inverse = np.unique(-np.asarray(values), return_inverse=True)
    return inverse.reshape(-1) + 1


def daily_ranks(columns: dict, firsts: dict, lasts: dict, dataset_length_days: int) -> dict:
    """Per-user rank arrays over each user's active span.

    Also usable on its own to inspect the whole ranking population: returns
    ``{user: ranks}`` where ranks cover ``[first, last]``.
    """
    users = list(columns)
    L = dataset_length_days
    cum = np.full((len(users), L), np.nan)
    for k, u in enumerate(users):
        f, l = firsts[u], lasts[u]
        cum[k, f:l + 1] = columns[u]["total_resources"]
        cum[k, l + 1:] = columns[u]["total_resources"][-1]
    ranks = np.zeros((len(users), L), dtype=np.int64)
    for d in range(L):
        present = ~np.isnan(cum[:, d])
        if present.any():
            ranks[present, d] = dense_rank_desc(cum[present, d])
    return {u: ranks[k, firsts[u]:lasts[u] + 1] for k, u in enumerate(users)}


def _add_changes(cols: dict, eps: float = RATE_EPS) -> None:
    for suffix, base in _CHANGE_BASE.items():
        x = cols[base].astype(float)
        prev = np.concatenate(([x[0]], x[:-1]))
        delta = x - prev
        cols["delta_" + suffix] = delta
        cols["rate_" + suffix] = delta / np.maximum(np.abs(prev), eps)


def compute_daily_columns(timelines: dict, dataset_length_days: int, eps: float = RATE_EPS) -> dict:
    """Columnar form of ``compute_daily_records``: ``{user: {field: array}}``."""
    if not eps > 0:
        raise ValueError("rate eps must be positive")
    for u, tl in timelines.items():
        if tl.last_play_day >= dataset_length_days:
            raise ValueError(f"user {u} plays on day {tl.last_play_day} >= {dataset_length_days}")
    cols = {u: _user_daily_columns(tl) for u, tl in timelines.items()}
    firsts = {u: tl.first_play_day for u, tl in timelines.items()}
    lasts = {u: tl.last_play_day for u, tl in timelines.items()}
    ranks = daily_ranks(cols, firsts, lasts, dataset_length_days)
    for u, c in cols.items():
        c["rank_today"] = ranks[u]
        c["highest_rank"] = np.minimum.accumulate(ranks[u])
        _add_changes(c, eps)
    return cols


def compute_daily_records(timelines: dict, dataset_length_days: int,
                          eps: float = RATE_EPS) -> list[DailyPlayerRecord]:
    """One record per user per day of the active span, ordered by (user, day).

    Rates divide by ``max(|previous|, eps)``.
    """
    cols = compute_daily_columns(timelines, dataset_length_days, eps)
    records = []
    names = RECORD_FIELDS[2:]
    for u, c in cols.items():
        arrays = [c[n].tolist() for n in names]
        for i, day in enumerate(c["day"].tolist()):
            records.append(DailyPlayerRecord(u, day, *(a[i] for a in arrays)))
    return records


def assemble_feature_rows(records: Iterable[DailyPlayerRecord]) -> list[FeatureRow]:
    rows = []
    for r in records:
        values = np.array([getattr(r, n) for n in FEATURE_NAMES], dtype=float)
        if not np.all(np.isfinite(values)):
            bad = FEATURE_NAMES[int(np.argmin(np.isfinite(values)))]
            raise ArithmeticError(f"non-finite feature {bad!r} for user {r.user_id} day {r.day}")
        rows.append(FeatureRow(r.user_id, r.day, values))
    return rows


def feature_array(rows: Sequence[FeatureRow]) -> np.ndarray:
    if not rows:
        return np.zeros((0, N_FEATURES))
    return np.stack([r.values for r in rows])


def group_rows(rows: Iterable[FeatureRow]) -> dict:
    """``{user: (days, values)}`` with days sorted; used for fast window lookup."""
    by_user: dict = {}
    for r in rows:
        by_user.setdefault(r.user_id, []).append(r)
    out = {}
    for u, rs in by_user.items():
        rs.sort(key=lambda r: r.day)
        out[u] = (np.array([r.day for r in rs]), np.stack([r.values for r in rs]))
    return out


def _window_at(days: np.ndarray, values: np.ndarray, end_day: int, W: int):
    end = int(np.searchsorted(days, end_day, side="right"))
    if end == 0 or days[end - 1] != end_day:
        raise KeyError(f"no row for day {end_day}")
    start = max(0, end - W)
    # only days inside (end_day - W, end_day] belong to the window
    start = max(start, int(np.searchsorted(days, end_day - W + 1, side="left")))
    mat = np.zeros((W, values.shape[1]))
    mask = np.zeros(W)
    rel = days[start:end] - (end_day - W + 1)
    mat[rel] = values[start:end]
    mask[rel] = 1.0
    return mat, mask


def windowize(rows: Iterable[FeatureRow], W: int = DEFAULT_WINDOW,
              keys: Optional[Iterable[tuple]] = None) -> list[SequenceWindow]:
    """Fixed-length windows of W consecutive days ending at each row's day.

    Days before the user's history are zero rows with mask 0. ``keys``
    restricts output to the given ``(user, end_day)`` pairs.
    """
    if W < 1:
        raise ValueError("window length must be >= 1")
    grouped = group_rows(rows)
    if keys is None:
        keys = [(u, int(d)) for u, (days, _) in grouped.items() for d in days]
    out = []
    for u, d in keys:
        days, values = grouped[u]
        mat, mask = _window_at(days, values, d, W)
        out.append(SequenceWindow(u, d, mat, mask))
    return out


def window_arrays(grouped: dict, keys: Sequence[tuple], W: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``(X, mask)`` of shape (n, W, F) and (n, W) for the given keys."""
    X = np.zeros((len(keys), W, N_FEATURES))
    M = np.zeros((len(keys), W))
    for i, (u, d) in enumerate(keys):
        days, values = grouped[u]
        X[i], M[i] = _window_at(days, values, d, W)
    return X, M


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        for a in (self.mean, self.std):
            a.setflags(write=False)


STD_FLOOR = 1e-12


def compute_stats(data, mask: Optional[np.ndarray] = None) -> FeatureStats:
    """Per-feature mean/std; for windows only observed (mask=1) rows count."""
    X = _as_matrix(data)
    if isinstance(data, list) and data and isinstance(data[0], SequenceWindow):
        mask = np.stack([w.mask for w in data])
    if X.ndim == 3:
        flat = X.reshape(-1, X.shape[-1])
        if mask is not None:
            flat = flat[np.asarray(mask).reshape(-1) > 0]
        X = flat
    if X.shape[0] == 0:
        raise ValueError("cannot compute stats on empty data")
    return FeatureStats(X.mean(axis=0), X.std(axis=0))


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return data
    if data and isinstance(data[0], SequenceWindow):
        return np.stack([w.matrix for w in data])
    return feature_array(data)


def standardize_array(X: np.ndarray, stats: FeatureStats, mask: Optional[np.ndarray] = None) -> np.ndarray:
    if X.shape[-1] != stats.mean.shape[0]:
        raise ValueError(f"stats cover {stats.mean.shape[0]} features, data has {X.shape[-1]}")
    tiny = stats.std < STD_FLOOR
    scale = np.where(tiny, 1.0, stats.std)
    Z = np.where(tiny, 0.0, (X - stats.mean) / scale)
    if mask is not None:
        Z = Z * (np.asarray(mask)[..., None] > 0)
    return Z


def standardize(data: Union[list, np.ndarray], stats: FeatureStats, mask: Optional[np.ndarray] = None):
    """Z-score with training-split stats; near-constant features map to 0.

    Accepts FeatureRow lists, SequenceWindow lists, or raw arrays; returns the
    same kind. Padded window rows stay zero.
    """
    if isinstance(data, np.ndarray):
        return standardize_array(data, stats, mask)
    if not data:
        return []
    if isinstance(data[0], SequenceWindow):
        return [SequenceWindow(w.user_id, w.end_day, standardize_array(w.matrix, stats, w.mask), w.mask)
                for w in data]
    Z = standardize_array(feature_array(data), stats)
    return [FeatureRow(r.user_id, r.day, z) for r, z in zip(data, Z)]


def _fmt(x: float) -> str:
    return repr(float(x))


def format_feature_csv(rows: Iterable[FeatureRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user", "day", *FEATURE_NAMES])
    for r in rows:
        w.writerow([r.user_id, r.day, *(_fmt(v) for v in r.values)])
    return buf.getvalue()


def parse_feature_csv(text: str) -> list[FeatureRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header[2:]) != FEATURE_NAMES or header[:2] != ["user", "day"]:
        raise ValueError("feature CSV header does not match the canonical schema")
    return [FeatureRow(row[0], int(row[1]), np.array([float(v) for v in row[2:]])) for row in reader]


def format_window_blocks(windows: Iterable[SequenceWindow]) -> str:
    """Human-readable dump: a ``# window`` header line, then ``mask,features`` per row."""
    lines = ["mask," + ",".join(FEATURE_NAMES)]
    for w in windows:
        lines.append(f"# window user={w.user_id} end_day={w.end_day} length={len(w.mask)}")
        for m, row in zip(w.mask, w.matrix):
            lines.append(",".join([str(int(m))] + [_fmt(v) for v in row]))
        lines.append("")
    return "\n".join(lines) + "\n"


def parse_window_blocks(text: str) -> list[SequenceWindow]:
    out = []
    lines = text.splitlines()[1:]
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.startswith("# window"):
            i += 1
            continue
        meta = dict(kv.split("=") for kv in line.split()[2:])
        W = int(meta["length"])
        block = [list(map(float, ln.split(","))) for ln in lines[i + 1:i + 1 + W]]
        arr = np.array(block).reshape(W, N_FEATURES + 1)
        out.append(SequenceWindow(meta["user"], int(meta["end_day"]), arr[:, 1:], arr[:, 0]))
        i += 1 + W
    return out

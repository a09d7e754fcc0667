"""Check-in ingestion, filtering, day segmentation and empirical analysis.

Log format, one record per line (UTF-8, LF)::

    user_id<TAB>poi_id<TAB>lat<TAB>lon<TAB>ISO-8601 timestamp

Lines starting with ``#`` and blank lines are ignored.  Timestamps without an
explicit offset are read as UTC.
"""

from __future__ import annotations

import io
import itertools
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import IntEnum
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
# 1970-01-01 was a Thursday; Monday == 0.
_EPOCH_WEEKDAY = 3
DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class CheckinFormatError(ValueError):
    """A log line could not be turned into a valid check-in."""


class TemporalState(IntEnum):
    WEEKDAY = 0
    WEEKEND = 1


@dataclass(frozen=True, slots=True)
class Checkin:
    user_id: str
    poi_id: str
    lat: float
    lon: float
    timestamp: int

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise CheckinFormatError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise CheckinFormatError(f"longitude out of range: {self.lon}")
        if self.timestamp < 0:
            raise CheckinFormatError(f"negative timestamp: {self.timestamp}")


@dataclass(frozen=True)
class DaySequence:
    """The POIs one user visited on one local calendar day, in time order."""

    user_id: str
    day_key: int
    temporal_state: TemporalState
    pois: tuple[str, ...]


def parse_timestamp(text: str) -> int:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_line(line: str) -> Checkin:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 5:
        raise CheckinFormatError(f"expected 5 tab-separated fields, got {len(fields)}")
    user_id, poi_id, lat, lon, ts = fields
    if not user_id or not poi_id:
        raise CheckinFormatError("empty user or POI id")
    try:
        lat_f, lon_f = float(lat), float(lon)
        stamp = parse_timestamp(ts)
    except ValueError as exc:
        raise CheckinFormatError(str(exc)) from exc
    if not (math.isfinite(lat_f) and math.isfinite(lon_f)):
        raise CheckinFormatError("non-finite coordinate")
    return Checkin(user_id, poi_id, lat_f, lon_f, stamp)


def parse_checkin_log(stream: IO[bytes] | IO[str] | Iterable, strict: bool = False) -> list[Checkin]:
    """Parse a check-in log.

    Malformed lines (including out-of-range coordinates) are skipped with a
    warning, or raise :class:`CheckinFormatError` when ``strict`` is set.
    """
    out = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not line.strip() or line.startswith("#"):
            continue
        try:
            out.append(parse_line(line))
        except CheckinFormatError as exc:
            if strict:
                raise CheckinFormatError(f"line {lineno}: {exc}") from exc
            log.warning("skipping line %d: %s", lineno, exc)
    return out


def read_checkin_log(path, strict: bool = False) -> list[Checkin]:
    with open(path, "rb") as fh:
        return parse_checkin_log(fh, strict=strict)


def format_checkin(c: Checkin) -> str:
    return f"{c.user_id}\t{c.poi_id}\t{c.lat!r}\t{c.lon!r}\t{format_timestamp(c.timestamp)}"


def write_checkin_log(checkins: Iterable[Checkin], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in checkins:
            fh.write(format_checkin(c) + "\n")


def filter_dataset(checkins: Sequence[Checkin], min_users_per_poi: int,
                   min_checkins_per_user: int) -> list[Checkin]:
    """Drop sparse POIs and users, repeating until nothing changes."""
    if min_users_per_poi < 1 or min_checkins_per_user < 1:
        raise ValueError("thresholds must be >= 1")
    current = list(checkins)
    while True:
        poi_users = defaultdict(set)
        for c in current:
            poi_users[c.poi_id].add(c.user_id)
        kept = [c for c in current if len(poi_users[c.poi_id]) >= min_users_per_poi]
        per_user = Counter(c.user_id for c in kept)
        kept = [c for c in kept if per_user[c.user_id] >= min_checkins_per_user]
        if len(kept) == len(current):
            return kept
        current = kept


def day_key(timestamp: int, tz_offset_hours: float = 0.0) -> int:
    return math.floor((timestamp + tz_offset_hours * 3600) / SECONDS_PER_DAY)


def day_of_week(key: int) -> int:
    """Monday == 0 ... Sunday == 6."""
    return (key + _EPOCH_WEEKDAY) % 7


def temporal_state(key: int) -> TemporalState:
    return TemporalState.WEEKEND if day_of_week(key) >= 5 else TemporalState.WEEKDAY


def segment_sequences(checkins: Sequence[Checkin], tz_offset_hours: float = 0.0) -> list[DaySequence]:
    """Group check-ins into per-user, per-day sequences.

    Within a day POIs are ordered by timestamp; equal timestamps keep input
    order.  Sequences are returned sorted by (user_id, day_key).
    """
    groups = defaultdict(list)
    for c in checkins:
        groups[(c.user_id, day_key(c.timestamp, tz_offset_hours))].append(c)
    out = []
    for (user, key) in sorted(groups):
        events = sorted(groups[(user, key)], key=lambda c: c.timestamp)
        out.append(DaySequence(user, key, temporal_state(key), tuple(c.poi_id for c in events)))
    return out


class IndexSpaceError(KeyError):
    """An id is not present in a fixed user/POI index."""


@dataclass
class Dataset:
    """Check-ins plus their day sequences and dense id indices.

    ``poi_coords`` rows are NaN for POIs in the index that have no check-in in
    this dataset (e.g. a POI only seen in the other half of a split).
    """

    checkins: list[Checkin]
    sequences: list[DaySequence]
    user_index: dict[str, int]
    poi_index: dict[str, int]
    poi_coords: np.ndarray
    checkin_counts: np.ndarray
    tz_offset_hours: float = 0.0
    user_ids: list[str] = field(init=False, repr=False)
    poi_ids: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        self.user_ids = sorted(self.user_index, key=self.user_index.get)
        self.poi_ids = sorted(self.poi_index, key=self.poi_index.get)

    @classmethod
    def from_checkins(cls, checkins: Sequence[Checkin], tz_offset_hours: float = 0.0,
                      user_index: Mapping[str, int] | None = None,
                      poi_index: Mapping[str, int] | None = None) -> "Dataset":
        """Build a dataset, creating dense indices unless fixed ones are given.

        New indices number ids in order of first appearance.  With fixed
        indices, an unknown id raises :class:`IndexSpaceError`.
        """
        checkins = list(checkins)
        if user_index is None:
            user_index = {}
            for c in checkins:
                user_index.setdefault(c.user_id, len(user_index))
        if poi_index is None:
            poi_index = {}
            for c in checkins:
                poi_index.setdefault(c.poi_id, len(poi_index))
        user_index, poi_index = dict(user_index), dict(poi_index)

        coords = np.full((len(poi_index), 2), np.nan)
        counts = np.zeros(len(poi_index), dtype=np.int64)
        for c in checkins:
            if c.user_id not in user_index:
                raise IndexSpaceError(f"unknown user id {c.user_id!r}")
            try:
                p = poi_index[c.poi_id]
            except KeyError:
                raise IndexSpaceError(f"unknown POI id {c.poi_id!r}") from None
            if np.isnan(coords[p, 0]):
                coords[p] = (c.lat, c.lon)
            elif coords[p, 0] != c.lat or coords[p, 1] != c.lon:
                raise CheckinFormatError(f"POI {c.poi_id!r} has inconsistent coordinates")
            counts[p] += 1
        return cls(checkins, segment_sequences(checkins, tz_offset_hours), user_index,
                   poi_index, coords, counts, tz_offset_hours)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_pois(self) -> int:
        return len(self.poi_index)

    @cached_property
    def poi_users(self) -> dict[int, frozenset]:
        """Dense POI index -> set of distinct user ids who checked in there."""
        acc = defaultdict(set)
        for c in self.checkins:
            acc[self.poi_index[c.poi_id]].add(c.user_id)
        return {p: frozenset(users) for p, users in acc.items()}

    @cached_property
    def user_pois(self) -> list[np.ndarray]:
        """Per dense user index, the sorted distinct dense POIs checked in."""
        acc = [set() for _ in range(self.n_users)]
        for c in self.checkins:
            acc[self.user_index[c.user_id]].add(self.poi_index[c.poi_id])
        return [np.array(sorted(s), dtype=np.int64) for s in acc]

    def sequence_arrays(self):
        """Flatten sequences into CSR-style arrays for the training kernel.

        Returns ``(ptr, pois, users, states)`` where sequence ``j`` covers
        ``pois[ptr[j]:ptr[j+1]]``.
        """
        lengths = [len(s.pois) for s in self.sequences]
        ptr = np.zeros(len(self.sequences) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum(lengths)
        pois = np.fromiter((self.poi_index[p] for s in self.sequences for p in s.pois),
                           dtype=np.int64, count=int(ptr[-1]))
        users = np.array([self.user_index[s.user_id] for s in self.sequences], dtype=np.int64)
        states = np.array([int(s.temporal_state) for s in self.sequences], dtype=np.int64)
        return ptr, pois, users, states

    def checked_arrays(self):
        """CSR layout of :attr:`user_pois`: ``(ptr, pois)``."""
        ptr = np.zeros(self.n_users + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(p) for p in self.user_pois])
        flat = np.concatenate(self.user_pois) if self.n_users else np.zeros(0, dtype=np.int64)
        return ptr, flat.astype(np.int64)


def chronological_split(dataset: Dataset, ratio: float) -> tuple[Dataset, Dataset]:
    """Per user, the first ``ceil(ratio * n_u)`` check-ins go to train.

    Both halves keep the parent's user/POI indices so model rows line up.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    by_user = defaultdict(list)
    for pos, c in enumerate(dataset.checkins):
        by_user[c.user_id].append(pos)
    train_pos = set()
    for positions in by_user.values():
        positions.sort(key=lambda i: dataset.checkins[i].timestamp)
        # round() guards against 0.7 * 10 == 7.000000000000001
        n_train = math.ceil(round(ratio * len(positions), 9))
        train_pos.update(positions[:n_train])
    train = [c for i, c in enumerate(dataset.checkins) if i in train_pos]
    test = [c for i, c in enumerate(dataset.checkins) if i not in train_pos]

    def rebuild(part):
        ds = Dataset.from_checkins(part, dataset.tz_offset_hours, dataset.user_index, dataset.poi_index)
        # coordinates are per-POI constants; keep the full table
        ds.poi_coords = dataset.poi_coords.copy()
        return ds

    return rebuild(train), rebuild(test)


def jaccard_correlation(poi_a: str, poi_b: str, dataset: Dataset) -> float:
    a = dataset.poi_users[dataset.poi_index[poi_a]]
    b = dataset.poi_users[dataset.poi_index[poi_b]]
    union = len(a | b)
    return len(a & b) / union if union else 0.0


@dataclass
class CorrelationReport:
    """Pair-weighted mean Jaccard correlations; ``None`` marks an absent statistic."""

    mean_sequence_pair: float | None
    mean_random_pair: float | None
    mean_consecutive: float | None
    mean_nonconsecutive: float | None
    n_sequence_pairs: int = 0
    n_random_pairs: int = 0
    n_consecutive: int = 0
    n_nonconsecutive: int = 0

    def to_text(self) -> str:
        lines = []
        for name in ("mean_sequence_pair", "mean_random_pair", "mean_consecutive", "mean_nonconsecutive"):
            value = getattr(self, name)
            lines.append(f"{name}={'NA' if value is None else format(value, '.10g')}")
        for name in ("n_sequence_pairs", "n_random_pairs", "n_consecutive", "n_nonconsecutive"):
            lines.append(f"{name}={getattr(self, name)}")
        return "\n".join(lines) + "\n"


def _mean(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def sequence_pair_correlation_report(dataset: Dataset, n_random_pairs: int,
                                     rng: np.random.Generator) -> CorrelationReport:
    """Compare Jaccard correlation of POIs sharing a day sequence to random pairs.

    Position pairs holding the same POI twice are left out, since a POI is
    trivially correlated with itself.  Random pairs are two distinct POIs
    drawn uniformly.
    """
    users = dataset.poi_users
    cache = {}

    def jac(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            sa, sb = users[a], users[b]
            cache[key] = len(sa & sb) / len(sa | sb)
        return cache[key]

    every, consecutive, nonconsecutive = [], [], []
    for seq in dataset.sequences:
        idx = [dataset.poi_index[p] for p in seq.pois]
        for i, j in itertools.combinations(range(len(idx)), 2):
            if idx[i] == idx[j]:
                continue
            value = jac(idx[i], idx[j])
            every.append(value)
            (consecutive if j == i + 1 else nonconsecutive).append(value)

    present = sorted(users)
    randoms = []
    if len(present) >= 2:
        for _ in range(n_random_pairs):
            a, b = rng.choice(len(present), size=2, replace=False)
            randoms.append(jac(present[a], present[b]))

    return CorrelationReport(_mean(every), _mean(randoms), _mean(consecutive), _mean(nonconsecutive),
                             len(every), len(randoms), len(consecutive), len(nonconsecutive))


def day_hour_histogram(checkins: Iterable[Checkin], tz_offset_hours: float = 0.0) -> np.ndarray:
    """7x24 counts; rows Monday..Sunday, columns local hour."""
    hist = np.zeros((7, 24), dtype=np.int64)
    for c in checkins:
        local = c.timestamp + tz_offset_hours * 3600
        hour = int((local % SECONDS_PER_DAY) // 3600)
        hist[day_of_week(day_key(c.timestamp, tz_offset_hours)), hour] += 1
    return hist


def histogram_to_csv(hist: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("day," + ",".join(f"h{h:02d}" for h in range(24)) + "\n")
    for name, row in zip(DAY_NAMES, hist):
        buf.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
    return buf.getvalue()

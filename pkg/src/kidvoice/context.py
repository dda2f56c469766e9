"""Non-acoustic features: transcripts, time of day, and per-device usage ratios."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np

from .errors import EmptyCorpus, LeakageError, ManifestError, UnknownTimezone

NIGHT_START_HOUR = 23
NIGHT_END_HOUR = 6
MISSING_RATIO = 0.5
TIME_FEATURE_DIM = 7 + 24 + 1
RATIO_FEATURE_DIM = 3
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class Label(str, enum.Enum):
    ADULT = "ADULT"
    KID = "KID"

    @property
    def y(self) -> int:
        return int(self is Label.KID)


class Gender(str, enum.Enum):
    MALE = "MALE"
    FEMALE = "FEMALE"
    KID = "KID"


class ContentKind(str, enum.Enum):
    KIDS_SHOW = "kids_show"
    OTHER = "other"

    @classmethod
    def parse(cls, value) -> "ContentKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


def label_from_gender(gender: Gender) -> Label:
    return Label.KID if gender is Gender.KID else Label.ADULT


def parse_timestamp(value) -> datetime:
    """RFC 3339 timestamp to an aware UTC datetime."""
    if isinstance(value, datetime):
        ts = value
    else:
        text = str(value).strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        try:
            ts = datetime.fromisoformat(text)
        except ValueError as exc:
            raise ManifestError(f"bad timestamp {value!r}") from exc
    if ts.tzinfo is None:
        raise ManifestError(f"timestamp {value!r} has no UTC offset")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@lru_cache(maxsize=None)
def get_zone(name: str) -> ZoneInfo:
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError, TypeError) as exc:
        raise UnknownTimezone(f"cannot resolve timezone {name!r}") from exc


def local_time(ts: datetime, zone: str) -> datetime:
    return ts.astimezone(get_zone(zone))


def is_night_hour(hour: int) -> bool:
    return hour >= NIGHT_START_HOUR or hour < NIGHT_END_HOUR


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: str = ""
    transcript: str = ""
    device_id: str = ""
    timestamp_utc: datetime | None = None
    timezone: str = "UTC"
    label: Label | None = None
    gender: Gender | None = None
    requested_content_kind: ContentKind | None = None
    split: str | None = None  # "train" / "test" once partitioned

    @property
    def y(self) -> int:
        if self.label is None:
            raise ManifestError(f"record {self.id!r} has no label")
        return self.label.y

    def local_time(self) -> datetime:
        if self.timestamp_utc is None:
            raise ManifestError(f"record {self.id!r} has no timestamp")
        return local_time(self.timestamp_utc, self.timezone)

    @property
    def is_night(self) -> bool:
        return is_night_hour(self.local_time().hour)

    @classmethod
    def from_dict(cls, d: dict) -> "UtteranceRecord":
        if "id" not in d:
            raise ManifestError(f"manifest row without id: {d!r}")
        gender = Gender(str(d["gender"]).upper()) if d.get("gender") else None
        label = d.get("label")
        if label:
            label = Label(str(label).upper())
        elif gender is not None:
            label = label_from_gender(gender)
        else:
            label = None
        ts = d.get("timestamp_utc")
        kind = d.get("requested_content_kind")
        return cls(
            id=str(d["id"]),
            audio_path=str(d.get("audio_path", "")),
            transcript=d.get("transcript") or "",
            device_id=str(d.get("device_id", "")),
            timestamp_utc=parse_timestamp(ts) if ts else None,
            timezone=d.get("timezone") or "UTC",
            label=label,
            gender=gender,
            requested_content_kind=ContentKind.parse(kind) if kind else None,
            split=d.get("split"),
        )

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "audio_path": self.audio_path,
            "transcript": self.transcript,
            "device_id": self.device_id,
            "timestamp_utc": format_timestamp(self.timestamp_utc) if self.timestamp_utc else None,
            "timezone": self.timezone,
            "label": self.label.value if self.label else None,
            "gender": self.gender.value if self.gender else None,
            "requested_content_kind": self.requested_content_kind.value if self.requested_content_kind else None,
        }
        if self.split is not None:
            d["split"] = self.split
        return d


@dataclass(frozen=True)
class UsageEvent:
    device_id: str
    timestamp_utc: datetime
    timezone: str
    content_kind: ContentKind
    split: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "UsageEvent":
        return cls(
            device_id=str(d["device_id"]),
            timestamp_utc=parse_timestamp(d["timestamp_utc"]),
            timezone=d.get("timezone") or "UTC",
            content_kind=ContentKind.parse(d["content_kind"]),
        )

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "timestamp_utc": format_timestamp(self.timestamp_utc),
            "timezone": self.timezone,
            "content_kind": self.content_kind.value,
        }


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_manifest(path) -> list[UtteranceRecord]:
    """Read a JSONL manifest; relative audio paths resolve against its directory."""
    base = Path(path).resolve().parent
    records, seen = [], set()
    for row in read_jsonl(path):
        rec = UtteranceRecord.from_dict(row)
        if rec.id in seen:
            raise ManifestError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.audio_path and not Path(rec.audio_path).is_absolute():
            rec = replace(rec, audio_path=str(base / rec.audio_path))
        get_zone(rec.timezone)
        records.append(rec)
    return records


def load_usage_log(path) -> list[UsageEvent]:
    return [UsageEvent.from_dict(row) for row in read_jsonl(path)]


# ---------------------------------------------------------------------------
# bag of words


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def index(self, word: str) -> int | None:
        return self._index.get(word)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for w, c in zip(self.words, self.counts):
                fh.write(f"{w}\t{c}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, counts = [], []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    w, c = line.rstrip("\n").split("\t")
                    words.append(w)
                    counts.append(int(c))
        return cls(tuple(words), tuple(counts))


def _refuse_test(items, what: str) -> None:
    for item in items:
        if getattr(item, "split", None) == "test":
            raise LeakageError(f"{what} must be built from training data only")


def build_vocabulary(train_records: Sequence[UtteranceRecord], max_vocab: int = 2000) -> Vocabulary:
    """Most frequent ``max_vocab`` tokens, ties broken alphabetically."""
    _refuse_test(train_records, "vocabulary")
    counts = Counter()
    for rec in train_records:
        counts.update(tokenize(rec.transcript))
    if not counts:
        raise EmptyCorpus("no tokens in training transcripts")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_vocab]
    return Vocabulary(tuple(w for w, _ in ranked), tuple(c for _, c in ranked))


def bow_vector(transcript: str, vocab: Vocabulary) -> np.ndarray:
    if len(vocab) == 0:
        raise EmptyCorpus("empty vocabulary")
    v = np.zeros(len(vocab))
    for tok in tokenize(transcript):
        i = vocab.index(tok)
        if i is not None:
            v[i] += 1.0
    return v


# ---------------------------------------------------------------------------
# time of day


@dataclass(frozen=True)
class TimeFeatures:
    weekday_onehot: np.ndarray
    hour_onehot: np.ndarray
    is_night: int

    def vector(self) -> np.ndarray:
        return np.concatenate((self.weekday_onehot, self.hour_onehot, [float(self.is_night)]))


def time_features_at(local: datetime) -> TimeFeatures:
    wd = np.zeros(7)
    wd[local.weekday()] = 1.0
    hr = np.zeros(24)
    hr[local.hour] = 1.0
    return TimeFeatures(wd, hr, int(is_night_hour(local.hour)))


def time_features(record: UtteranceRecord) -> TimeFeatures:
    return time_features_at(record.local_time())


def time_feature_names() -> list[str]:
    return [f"weekday_{d}" for d in WEEKDAYS] + [f"hour_{h:02d}" for h in range(24)] + ["is_night"]


# ---------------------------------------------------------------------------
# usage profiles


@dataclass
class UsageProfile:
    device_id: str
    kid_count_by_hour: list[int] = field(default_factory=lambda: [0] * 24)
    request_count_by_hour: list[int] = field(default_factory=lambda: [0] * 24)
    kid_count_by_weekday: list[int] = field(default_factory=lambda: [0] * 7)
    request_count_by_weekday: list[int] = field(default_factory=lambda: [0] * 7)

    @staticmethod
    def _ratio(kid: int, total: int) -> float | None:
        return kid / total if total else None

    @property
    def kid_ratio_by_hour(self) -> list[float | None]:
        return [self._ratio(k, t) for k, t in zip(self.kid_count_by_hour, self.request_count_by_hour)]

    @property
    def kid_ratio_by_weekday(self) -> list[float | None]:
        return [self._ratio(k, t) for k, t in zip(self.kid_count_by_weekday, self.request_count_by_weekday)]

    @property
    def kid_ratio_overall(self) -> float | None:
        return self._ratio(sum(self.kid_count_by_hour), sum(self.request_count_by_hour))

    def to_dict(self) -> dict:
        return asdict(self)


def build_usage_profiles(usage_log: Iterable[UsageEvent]) -> dict[str, UsageProfile]:
    """Per-device kids-show counts and totals by local hour and weekday."""
    events = list(usage_log)
    _refuse_test(events, "usage profiles")
    profiles: dict[str, UsageProfile] = {}
    for ev in events:
        prof = profiles.setdefault(ev.device_id, UsageProfile(ev.device_id))
        local = local_time(ev.timestamp_utc, ev.timezone)
        kid = int(ev.content_kind is ContentKind.KIDS_SHOW)
        prof.request_count_by_hour[local.hour] += 1
        prof.kid_count_by_hour[local.hour] += kid
        prof.request_count_by_weekday[local.weekday()] += 1
        prof.kid_count_by_weekday[local.weekday()] += kid
    return dict(sorted(profiles.items()))


def save_profiles(path, profiles: dict[str, UsageProfile]) -> None:
    with open(path, "w") as fh:
        json.dump({k: p.to_dict() for k, p in profiles.items()}, fh, sort_keys=True, indent=1)


def load_profiles(path) -> dict[str, UsageProfile]:
    with open(path) as fh:
        return {k: UsageProfile(**v) for k, v in json.load(fh).items()}


def ratio_features(record: UtteranceRecord, profiles: dict[str, UsageProfile]) -> np.ndarray:
    """[ratio at local hour, ratio at local weekday, overall ratio] for the record's device.

    Empty buckets and unknown devices read as 0.5; night-time records get
    all zeros.
    """
    local = record.local_time()
    if is_night_hour(local.hour):
        return np.zeros(RATIO_FEATURE_DIM)
    prof = profiles.get(record.device_id)
    if prof is None:
        return np.full(RATIO_FEATURE_DIM, MISSING_RATIO)
    vals = (
        prof.kid_ratio_by_hour[local.hour],
        prof.kid_ratio_by_weekday[local.weekday()],
        prof.kid_ratio_overall,
    )
    return np.array([MISSING_RATIO if v is None else v for v in vals])


RATIO_FEATURE_NAMES = ("kid_ratio_hour", "kid_ratio_weekday", "kid_ratio_overall")

"""Synthetic desk-scale corpus: source-filter voices plus transcripts and usage logs.

The voice model is deliberately crude: an impulse train at the speaker's F0
through two formant resonators, a syllable-rate amplitude envelope, a noise
floor, and optional silence padding. Children get higher F0 and formants
shifted up by a constant factor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import scipy.signal

from .audio import AudioClip, write_wav
from .context import ContentKind, Gender, UsageEvent, UtteranceRecord, get_zone, label_from_gender, write_jsonl
from .errors import KidVoiceError
from .seeds import derive_seed

ZONES = ("America/New_York", "America/Chicago", "America/Denver", "America/Los_Angeles")
KID_TEMPLATES = (
    "watch spongebob", "paw patrol", "peppa pig", "play cartoons", "i want paw patrol",
    "put on disney junior", "watch frozen", "show me bluey", "sesame street please", "play pokemon",
)
ADULT_TEMPLATES = (
    "cnn", "watch the news", "espn", "go to fox news", "record the game", "play the voice",
    "show me hbo", "watch game of thrones", "turn on msnbc", "find the weather channel",
)
NEUTRAL_TEMPLATES = (
    "watch tv", "go back", "channel up", "open netflix", "show me movies", "what is on",
    "play something", "volume up", "guide", "show recordings",
)


class IoError(KidVoiceError):
    pass


@dataclass
class SyntheticCorpusSpec:
    n_utterances: int = 200
    priors: tuple[float, float] = (0.5, 0.5)  # (ADULT, KID)
    adult_f0: tuple[float, float] = (85.0, 255.0)
    kid_f0: tuple[float, float] = (250.0, 400.0)
    kid_formant_shift: float = 1.25
    duration: tuple[float, float] = (0.6, 2.0)
    sample_rate: int = 16000
    noise_floor_db: float = -40.0
    silence_prob: float = 0.7
    silence_range: tuple[float, float] = (0.1, 0.5)
    adult_level: tuple[float, float] = (0.15, 0.5)
    kid_level: tuple[float, float] = (0.3, 0.8)
    n_devices: int = 30
    family_fraction: float = 0.5
    usage_events: tuple[int, int] = (60, 160)
    transcript_informative: float = 0.6
    # complementary mode: each utterance carries class signal in exactly one
    # modality (acoustic or metadata); the other is drawn class-independently
    complementary: bool = False
    ambiguous_f0: tuple[float, float] = (170.0, 290.0)
    seed: int = 7

    def __post_init__(self):
        self.priors = tuple(float(p) for p in self.priors)
        if abs(sum(self.priors) - 1.0) > 1e-9 or min(self.priors) < 0:
            raise ValueError("priors must be non-negative and sum to 1")
        for lo, hi in (self.adult_f0, self.kid_f0, self.ambiguous_f0):
            if not 0 < lo <= hi:
                raise ValueError("F0 ranges must be positive and ordered")

    def class_counts(self) -> tuple[int, int]:
        n_kid = int(round(self.priors[1] * self.n_utterances))
        return self.n_utterances - n_kid, n_kid


def synthesize_voice(rng: np.random.Generator, f0: float, formants: tuple[float, float], duration: float,
                     level: float, sr: int, noise_floor_db: float, lead: float = 0.0, trail: float = 0.0) -> np.ndarray:
    n = int(round(duration * sr))
    t = np.arange(n) / sr
    # gentle declination and vibrato around the sampled F0
    contour = f0 * (1.0 + 0.04 * (0.5 - t / max(duration, 1e-9)) + 0.01 * np.sin(2 * np.pi * 5.0 * t))
    phase = np.cumsum(contour) / sr
    pulses = np.flatnonzero(np.diff(np.floor(phase), prepend=0.0) > 0)
    src = np.zeros(n)
    src[pulses] = 1.0
    y = src
    for fc, bw in zip(formants, (80.0, 120.0)):
        r = np.exp(-np.pi * bw / sr)
        theta = 2 * np.pi * fc / sr
        y = scipy.signal.lfilter([1.0 - r], [1.0, -2 * r * np.cos(theta), r * r], y)
    # syllable-rate envelope with soft attack and release
    syl = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3.0, 5.0) * t + rng.uniform(0, 2 * np.pi)) ** 2
    ramp = np.minimum(1.0, np.minimum(t, duration - t) / 0.03)
    y = y * syl * np.clip(ramp, 0.0, 1.0)
    peak = np.max(np.abs(y))
    y = y / peak * level if peak > 0 else y
    voice_rms = np.sqrt(np.mean(y * y))
    pad_l, pad_t = int(round(lead * sr)), int(round(trail * sr))
    out = np.concatenate((np.zeros(pad_l), y, np.zeros(pad_t)))
    out += rng.standard_normal(out.shape[0]) * voice_rms * 10.0 ** (noise_floor_db / 20.0)
    return np.clip(out, -1.0, 1.0)


def _local_instant(rng, zone: str, hour: int, base: datetime) -> datetime:
    day = int(rng.integers(0, 28))
    local = datetime(base.year, base.month, 1, hour, int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                     tzinfo=get_zone(zone)) + timedelta(days=day)
    return local.astimezone(timezone.utc)


def _kid_show_prob(family: bool, hour: int) -> float:
    if not family:
        return 0.05
    if 7 <= hour <= 20:
        return 0.6
    return 0.05


@dataclass
class Corpus:
    records: list[UtteranceRecord]
    usage: list[UsageEvent]
    clips: dict[str, AudioClip] = field(default_factory=dict)
    truth_f0: dict[str, float] = field(default_factory=dict)


def build_corpus(spec: SyntheticCorpusSpec) -> Corpus:
    """Generate the corpus in memory (audio kept in ``clips``)."""
    rng = np.random.default_rng(derive_seed(spec.seed, "corpus"))
    base = datetime(2016, 3, 1)
    n_family = int(round(spec.family_fraction * spec.n_devices))
    devices = [
        {"id": f"dev{i:03d}", "family": i < n_family, "zone": ZONES[i % len(ZONES)]}
        for i in range(spec.n_devices)
    ]
    family_devs = [d for d in devices if d["family"]]
    adult_devs = [d for d in devices if not d["family"]]

    usage = []
    for dev in devices:
        for _ in range(int(rng.integers(spec.usage_events[0], spec.usage_events[1] + 1))):
            hour = int(rng.integers(0, 24))
            kind = ContentKind.KIDS_SHOW if rng.random() < _kid_show_prob(dev["family"], hour) else ContentKind.OTHER
            usage.append(UsageEvent(dev["id"], _local_instant(rng, dev["zone"], hour, base), dev["zone"], kind))

    n_adult, n_kid = spec.class_counts()
    labels = np.array([0] * n_adult + [1] * n_kid)
    labels = labels[rng.permutation(labels.shape[0])]
    records, clips, truth = [], {}, {}
    for i, y in enumerate(labels):
        kid = bool(y)
        rid = f"utt{i:05d}"
        if kid:
            gender = Gender.KID
        else:
            gender = Gender.MALE if rng.random() < 0.5 else Gender.FEMALE

        acoustic_informative = True
        meta_informative = True
        if spec.complementary:
            acoustic_informative = rng.random() < 0.5
            meta_informative = not acoustic_informative

        if acoustic_informative:
            if kid:
                f0 = rng.uniform(*spec.kid_f0)
            elif gender is Gender.MALE:
                f0 = rng.uniform(spec.adult_f0[0], min(155.0, spec.adult_f0[1]))
            else:
                f0 = rng.uniform(max(165.0, spec.adult_f0[0]), spec.adult_f0[1])
            shift = spec.kid_formant_shift if kid else 1.0
            level = rng.uniform(*(spec.kid_level if kid else spec.adult_level))
        else:
            f0 = rng.uniform(*spec.ambiguous_f0)
            shift = spec.kid_formant_shift if rng.random() < 0.5 else 1.0
            level = rng.uniform(min(spec.adult_level[0], spec.kid_level[0]), max(spec.adult_level[1], spec.kid_level[1]))
        formants = (rng.uniform(500.0, 800.0) * shift, rng.uniform(1200.0, 1800.0) * shift)
        duration = rng.uniform(*spec.duration)
        lead = rng.uniform(*spec.silence_range) if rng.random() < spec.silence_prob else 0.0
        trail = rng.uniform(*spec.silence_range) if rng.random() < spec.silence_prob else 0.0
        samples = synthesize_voice(rng, f0, formants, duration, level, spec.sample_rate, spec.noise_floor_db, lead, trail)

        if meta_informative:
            dev = family_devs[int(rng.integers(len(family_devs)))] if kid or rng.random() < 0.3 \
                else adult_devs[int(rng.integers(len(adult_devs)))]
            hour = int(rng.integers(7, 21)) if kid else int(rng.integers(0, 24))
            if rng.random() < spec.transcript_informative:
                pool = KID_TEMPLATES if kid else ADULT_TEMPLATES
            else:
                pool = NEUTRAL_TEMPLATES
            kind_p = 0.7 if kid else 0.15
        else:
            dev = devices[int(rng.integers(len(devices)))]
            hour = int(rng.integers(7, 21))
            pool = NEUTRAL_TEMPLATES
            kind_p = 0.4
        transcript = pool[int(rng.integers(len(pool)))]
        content = ContentKind.KIDS_SHOW if rng.random() < kind_p else ContentKind.OTHER
        ts = _local_instant(rng, dev["zone"], hour, base)
        records.append(UtteranceRecord(
            id=rid,
            audio_path=f"wavs/{rid}.wav",
            transcript=transcript,
            device_id=dev["id"],
            timestamp_utc=ts,
            timezone=dev["zone"],
            label=label_from_gender(gender),
            gender=gender,
            requested_content_kind=content,
        ))
        clips[rid] = AudioClip(samples, spec.sample_rate, rid)
        truth[rid] = float(f0)
    return Corpus(records, usage, clips, truth)


def generate_corpus(spec: SyntheticCorpusSpec, out_dir) -> Path:
    """Write WAVs, ``manifest.jsonl``, ``usage.jsonl`` and ``corpus_spec.json``; return the manifest path."""
    out = Path(out_dir)
    try:
        (out / "wavs").mkdir(parents=True, exist_ok=True)
        corpus = build_corpus(spec)
        for rec in corpus.records:
            write_wav(out / rec.audio_path, corpus.clips[rec.id])
        manifest = out / "manifest.jsonl"
        write_jsonl(manifest, (r.to_dict() for r in corpus.records))
        write_jsonl(out / "usage.jsonl", (e.to_dict() for e in corpus.usage))
        (out / "corpus_spec.json").write_text(json.dumps(asdict(spec), indent=1, sort_keys=True))
        (out / "truth_f0.json").write_text(json.dumps(corpus.truth_f0, indent=1, sort_keys=True))
    except OSError as exc:
        raise IoError(f"cannot write corpus to {out}: {exc}") from exc
    return manifest

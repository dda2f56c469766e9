from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kidvoice.context import (
    MISSING_RATIO,
    ContentKind,
    Gender,
    Label,
    UsageEvent,
    UtteranceRecord,
    Vocabulary,
    bow_vector,
    build_usage_profiles,
    build_vocabulary,
    get_zone,
    is_night_hour,
    load_manifest,
    load_profiles,
    parse_timestamp,
    ratio_features,
    save_profiles,
    time_features,
    time_features_at,
    tokenize,
)
from kidvoice.errors import EmptyCorpus, LeakageError, ManifestError, UnknownTimezone

NY = "America/New_York"


def rec(rid="r", transcript="", local=None, zone=NY, device="d1", split=None, gender=Gender.KID):
    ts = None
    if local is not None:
        ts = local.replace(tzinfo=get_zone(zone)).astimezone(timezone.utc)
    return UtteranceRecord(rid, "", transcript, device, ts, zone, Label.KID if gender is Gender.KID else Label.ADULT,
                           gender, None, split)


def ev(device, local, kind, zone=NY):
    return UsageEvent(device, local.replace(tzinfo=get_zone(zone)).astimezone(timezone.utc), zone, kind)


# ---------------------------------------------------------------------------
# bag of words


def test_tokenize():
    assert tokenize("Watch  SpongeBob, ep.2!") == ["watch", "spongebob", "ep", "2"]
    assert tokenize("") == []


def test_vocabulary_examples():
    v = build_vocabulary([rec(transcript="watch cnn"), rec(transcript="watch spongebob")], 2)
    assert v.words == ("watch", "cnn") and v.counts == (2, 1)
    v = build_vocabulary([rec(transcript="a b c")], 100)
    assert v.words == ("a", "b", "c")
    words = [f"w{i:04d}" for i in range(5092)]
    v = build_vocabulary([rec(transcript=" ".join(words))], 2000)
    assert len(v) == 2000


def test_vocabulary_guards():
    with pytest.raises(EmptyCorpus):
        build_vocabulary([rec(transcript="  ")])
    with pytest.raises(LeakageError):
        build_vocabulary([rec(transcript="hi", split="test")])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["watch", "cnn", "paw", "patrol", "news", "go"]), min_size=1, max_size=6),
                min_size=1, max_size=12), st.randoms(use_true_random=False))
def test_vocabulary_order_invariance(transcripts, rnd):
    recs = [rec(str(i), " ".join(t)) for i, t in enumerate(transcripts)]
    v1 = build_vocabulary(recs, 4)
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    assert build_vocabulary(shuffled, 4) == v1
    assert list(v1.counts) == sorted(v1.counts, reverse=True)
    vec = bow_vector(" ".join(transcripts[0]), v1)
    perm = list(transcripts[0])
    rnd.shuffle(perm)
    np.testing.assert_array_equal(vec, bow_vector(" ".join(perm), v1))
    assert vec.sum() == sum(1 for w in transcripts[0] if v1.index(w) is not None)


def test_bow_examples(tmp_path):
    vocab = Vocabulary(("watch", "spongebob", "cnn"), (3, 2, 1))
    assert bow_vector("watch spongebob watch", vocab).tolist() == [2, 1, 0]
    assert bow_vector("", vocab).tolist() == [0, 0, 0]
    assert bow_vector("madmax", vocab).tolist() == [0, 0, 0]
    vocab.save(tmp_path / "v.tsv")
    assert Vocabulary.load(tmp_path / "v.tsv") == vocab


# ---------------------------------------------------------------------------
# time


def test_time_feature_examples():
    tue = time_features(rec(local=datetime(2016, 3, 1, 23, 30)))  # a Tuesday
    assert tue.is_night == 1 and tue.hour_onehot[23] == 1 and tue.weekday_onehot[1] == 1
    assert time_features(rec(local=datetime(2016, 3, 5, 12, 0))).is_night == 0
    assert time_features(rec(local=datetime(2016, 3, 5, 6, 0))).is_night == 0
    assert time_features(rec(local=datetime(2016, 3, 5, 5, 59))).is_night == 1


def test_time_features_use_local_zone():
    r = UtteranceRecord("x", timestamp_utc=parse_timestamp("2016-03-02T03:30:00Z"), timezone="America/Los_Angeles")
    tf = time_features(r)
    assert tf.hour_onehot[19] == 1 and tf.weekday_onehot[1] == 1 and tf.is_night == 0


def test_unknown_zone():
    with pytest.raises(UnknownTimezone):
        get_zone("Mars/Olympus")


@settings(max_examples=100, deadline=None)
@given(st.datetimes(min_value=datetime(2000, 1, 1), max_value=datetime(2030, 1, 1)),
       st.sampled_from(["UTC", NY, "Europe/Berlin", "Asia/Kolkata"]))
def test_time_onehots(dt, zone):
    r = UtteranceRecord("x", timestamp_utc=dt.replace(tzinfo=timezone.utc), timezone=zone)
    tf = time_features(r)
    assert tf.weekday_onehot.sum() == 1 and tf.hour_onehot.sum() == 1
    assert tf.vector().shape == (32,)
    hour = int(np.argmax(tf.hour_onehot))
    assert tf.is_night == int(hour >= 23 or hour < 6)


def test_is_night_brute_force():
    assert [h for h in range(24) if is_night_hour(h)] == [0, 1, 2, 3, 4, 5, 23]
    for h in range(24):
        assert time_features_at(datetime(2016, 3, 1, h)).is_night == (h == 23 or h < 6)


# ---------------------------------------------------------------------------
# usage profiles


def test_usage_profile_examples(tmp_path):
    base = datetime(2016, 3, 1, 9, 15)  # Tuesday
    log = [ev("d1", base, ContentKind.KIDS_SHOW)] * 3 + [ev("d1", base, ContentKind.OTHER)]
    log += [ev("d2", datetime(2016, 3, 2, 10), ContentKind.KIDS_SHOW)]
    prof = build_usage_profiles(log)
    assert prof["d1"].kid_ratio_by_hour[9] == 0.75
    assert prof["d1"].kid_ratio_by_hour[14] is None
    assert prof["d2"].kid_ratio_overall == 1.0
    assert build_usage_profiles([]) == {}

    r = rec(local=datetime(2016, 3, 8, 9, 40), device="d1")
    np.testing.assert_allclose(ratio_features(r, prof), [0.75, 0.75, 0.75])
    assert ratio_features(rec(local=datetime(2016, 3, 8, 23, 30)), prof).tolist() == [0, 0, 0]
    assert ratio_features(rec(local=datetime(2016, 3, 8, 12), device="zz"), prof).tolist() == [MISSING_RATIO] * 3
    r = rec(local=datetime(2016, 3, 8, 14, 0), device="d1")
    assert ratio_features(r, prof)[0] == MISSING_RATIO

    save_profiles(tmp_path / "p.json", prof)
    assert load_profiles(tmp_path / "p.json") == prof


def test_usage_leakage_guard():
    e = UsageEvent("d", parse_timestamp("2016-03-01T10:00:00Z"), "UTC", ContentKind.OTHER, split="test")
    with pytest.raises(LeakageError):
        build_usage_profiles([e])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 24 * 28 - 1), st.booleans()), max_size=80))
def test_profile_buckets_reconstruct_overall(events):
    start = datetime(2016, 3, 1)
    log = [ev(f"d{d}", start + timedelta(hours=h), ContentKind.KIDS_SHOW if k else ContentKind.OTHER)
           for d, h, k in events]
    for p in build_usage_profiles(log).values():
        for ratios in (p.kid_ratio_by_hour, p.kid_ratio_by_weekday):
            assert all(r is None or 0 <= r <= 1 for r in ratios)
        assert sum(p.kid_count_by_hour) == sum(p.kid_count_by_weekday)
        assert sum(p.kid_count_by_hour) / sum(p.request_count_by_hour) == p.kid_ratio_overall


# ---------------------------------------------------------------------------
# manifest


def test_manifest_roundtrip_and_errors(tmp_path):
    row = {"id": "u1", "audio_path": "w/u1.wav", "transcript": "hi", "device_id": "d", "timestamp_utc":
           "2016-03-01T10:00:00Z", "timezone": NY, "gender": "FEMALE", "requested_content_kind": "kids_show"}
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(row) + "\n")
    [r] = load_manifest(path)
    assert r.label is Label.ADULT and r.gender is Gender.FEMALE
    assert r.audio_path == str(tmp_path / "w/u1.wav")
    assert r.requested_content_kind is ContentKind.KIDS_SHOW
    assert UtteranceRecord.from_dict(r.to_dict()) == r
    path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
    with pytest.raises(ManifestError):
        load_manifest(path)
    path.write_text(json.dumps({**row, "timezone": "Nowhere/Land"}) + "\n")
    with pytest.raises(UnknownTimezone):
        load_manifest(path)

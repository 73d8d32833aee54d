import json
import multiprocessing as mp
import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from retrospect.buffer import (
    EmptyBuffer,
    MalformedGroup,
    PersistFailed,
    PreferenceStats,
    ReplayBuffer,
    build_preferences,
    group_records,
    positive,
    sample_batch,
)
from retrospect.core import InvalidRecord, ReflectionRecord


def make_records(n, seed=0, prefix="q"):
    gen = np.random.default_rng(seed)
    out = []
    for i in range(n):
        before, after = float(gen.random()), float(gen.random())
        out.append(ReflectionRecord(
            env_id="synthqa", task_id=f"{prefix}{i // 2}", trial_index=1 + i % 3,
            instruction=f"prompt {i} é\n\"quoted\"", response_id=int(gen.integers(8)),
            response_text=f"reflection {i}", return_before=before, return_after=after, rating=after - before,
            old_logprob=float(-gen.exponential()), sample_temperature=0.9))
    return out


def bits(x):
    return struct.pack("<d", x)


def test_roundtrip_bit_exact(tmp_path):
    records = make_records(10_000)
    buf = ReplayBuffer(tmp_path / "b.jsonl")
    buf.extend(records)
    back = buf.read_all()
    assert back == records
    for a, b in zip(records, back):
        for name in ("return_before", "return_after", "rating", "old_logprob", "sample_temperature"):
            assert bits(getattr(a, name)) == bits(getattr(b, name))
        assert b.rating == b.return_after - b.return_before


def test_header_and_append(tmp_path):
    path = tmp_path / "b.jsonl"
    buf = ReplayBuffer(path)
    assert buf.read_all() == []
    rec = make_records(1)[0]
    buf.append(rec)
    buf.append(rec)
    lines = path.read_text().splitlines()
    assert json.loads(lines[0]) == {"schema": "retrospect-buffer", "version": 1}
    assert len(lines) == 3 and len(buf) == 2


def test_invalid_record_rejected(tmp_path):
    buf = ReplayBuffer(tmp_path / "b.jsonl")
    bad = ReflectionRecord("synthqa", "q", 1, "x", 0, "y", 0.2, 0.9, 0.5)
    with pytest.raises(InvalidRecord):
        buf.append(bad)
    assert len(buf) == 0


def test_wrong_header(tmp_path):
    path = tmp_path / "b.jsonl"
    path.write_text('{"schema": "other"}\n')
    with pytest.raises(InvalidRecord):
        ReplayBuffer(path).read_all()


def test_persist_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises((PersistFailed, OSError)):
        ReplayBuffer(blocker / "sub" / "b.jsonl").append(make_records(1)[0])


def test_concurrent_threads(tmp_path):
    buf = ReplayBuffer(tmp_path / "b.jsonl")
    batches = [make_records(125, seed=w, prefix=f"w{w}-") for w in range(8)]

    def writer(batch):
        for r in batch:
            buf.append(r)

    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(writer, batches))
    back = buf.read_all()
    assert len(back) == 1000
    assert sorted(map(repr, back)) == sorted(repr(r) for b in batches for r in b)


def _proc_writer(path, w):
    buf = ReplayBuffer(path)
    for r in make_records(125, seed=w, prefix=f"p{w}-"):
        buf.append(r)


def test_concurrent_processes(tmp_path):
    path = str(tmp_path / "b.jsonl")
    ctx = mp.get_context("spawn")
    procs = [ctx.Process(target=_proc_writer, args=(path, w)) for w in range(8)]
    for p in procs:
        p.start()
    for p in procs:
        p.join(60)
        assert p.exitcode == 0
    assert len(ReplayBuffer(path).read_all()) == 1000


def rec(task, rating, rid=0, trial=1):
    before = 0.5
    return ReflectionRecord("synthqa", task, trial, f"x-{task}", rid, "y", before, before + rating,
                            (before + rating) - before)


def test_preferences_ordering_and_ties():
    pairs = build_preferences(group_records([rec("a", 0.5, 1), rec("a", -0.25, 2)]))
    assert len(pairs) == 1
    assert (pairs[0].accepted_id, pairs[0].rejected_id) == (1, 2)
    stats = PreferenceStats()
    assert build_preferences(group_records([rec("b", 0.25, 1), rec("b", 0.25, 2)]), stats) == []
    assert stats.ties == 1 and stats.groups == 1


def test_preferences_counting():
    records = []
    for g in range(10):
        tied = g < 3
        records += [rec(f"t{g}", 0.25, 1), rec(f"t{g}", 0.25 if tied else -0.5, 2)]
    stats = PreferenceStats()
    pairs = build_preferences(group_records(records), stats)
    assert len(pairs) == 7 and stats.pairs == 7 and stats.ties == 3 and stats.groups == 10


def test_malformed_group():
    with pytest.raises(MalformedGroup):
        build_preferences(group_records([rec("a", 0.5), rec("a", 0.25), rec("a", 0.0)]))
    with pytest.raises(MalformedGroup):
        build_preferences(group_records([rec("a", 0.5)]))


def mixed():
    return [rec(f"m{i}", r, i % 8) for i, r in enumerate([0.5, -0.5, 0.0, 0.25, -0.25, 0.5, 0.0, 0.25])]


def test_sample_positive_filter():
    batch = sample_batch(mixed(), positive, 10, seed=1)
    assert len(batch) == 10 and all(r.rating > 0 for r in batch)


def test_sample_permutation_when_full():
    pool = [r for r in mixed() if r.rating > 0]
    batch = sample_batch(mixed(), positive, len(pool), seed=2)
    assert sorted(map(repr, batch)) == sorted(map(repr, pool))


def test_sample_deterministic():
    assert sample_batch(mixed(), None, 5, 3) == sample_batch(mixed(), None, 5, 3)
    assert sample_batch(mixed(), None, 5, 3) != sample_batch(mixed(), None, 5, 4)


def test_sample_empty():
    with pytest.raises(EmptyBuffer):
        sample_batch(mixed(), lambda r: r.rating > 1, 3, 0)
    with pytest.raises(EmptyBuffer):
        sample_batch([], None, 3, 0)

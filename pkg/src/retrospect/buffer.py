"""Append-only replay buffer of reflection records, stored as JSONL.

File layout: a header line ``{"schema": "retrospect-buffer", "version": 1}``
followed by one record object per line. Appends take an exclusive file lock
and write a whole line in a single call, so concurrent writers (threads or
processes) never interleave. Readers parse whatever is on disk at open time.
"""

from __future__ import annotations

import json
import os
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import filelock

from .core import InvalidRecord, PreferencePair, ReflectionRecord, RetrospectError
from .seeding import rng

BUFFER_SCHEMA = "retrospect-buffer"
BUFFER_VERSION = 1

_RECORD_FIELDS = tuple(f.name for f in fields(ReflectionRecord))


class PersistFailed(RetrospectError):
    pass


class EmptyBuffer(RetrospectError):
    pass


class MalformedGroup(RetrospectError):
    pass


def record_to_line(record: ReflectionRecord) -> str:
    # json writes floats with repr(), which round-trips every double exactly
    return json.dumps(asdict(record), sort_keys=True, allow_nan=False)


def record_from_line(line: str) -> ReflectionRecord:
    payload = json.loads(line)
    missing = set(_RECORD_FIELDS) - set(payload)
    if missing:
        raise InvalidRecord(f"record is missing fields {sorted(missing)}")
    return ReflectionRecord(**{k: payload[k] for k in _RECORD_FIELDS})


class ReplayBuffer:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = filelock.FileLock(str(self.path) + ".lock")
        self._thread_lock = threading.Lock()

    def _header(self) -> str:
        return json.dumps({"schema": BUFFER_SCHEMA, "version": BUFFER_VERSION}, sort_keys=True)

    def append(self, record: ReflectionRecord) -> None:
        self.extend([record])

    def extend(self, records: Iterable[ReflectionRecord]) -> None:
        records = list(records)
        for r in records:
            r.validate()
        payload = "".join(record_to_line(r) + "\n" for r in records)
        try:
            with self._thread_lock, self._lock:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                fresh = not self.path.exists() or self.path.stat().st_size == 0
                fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
                try:
                    data = ((self._header() + "\n") if fresh else "") + payload
                    os.write(fd, data.encode("utf-8"))
                    os.fsync(fd)
                finally:
                    os.close(fd)
        except OSError as exc:
            raise PersistFailed(f"could not append to {self.path}: {exc}") from exc

    def read_all(self) -> list[ReflectionRecord]:
        if not self.path.exists():
            return []
        lines = self.path.read_text(encoding="utf-8").splitlines()
        if not lines:
            return []
        header = json.loads(lines[0])
        if header.get("schema") != BUFFER_SCHEMA:
            raise InvalidRecord(f"{self.path} is not a replay buffer")
        if header.get("version") != BUFFER_VERSION:
            raise InvalidRecord(f"unsupported buffer version {header.get('version')}")
        records = [record_from_line(line) for line in lines[1:] if line.strip()]
        for r in records:
            r.validate()
        return records

    def __len__(self) -> int:
        return len(self.read_all())

    def sample_batch(
        self,
        predicate: Callable[[ReflectionRecord], bool] | None,
        batch_size: int,
        seed: int,
    ) -> list[ReflectionRecord]:
        return sample_batch(self.read_all(), predicate, batch_size, seed)


def positive(record: ReflectionRecord) -> bool:
    return record.rating > 0


def negative(record: ReflectionRecord) -> bool:
    return record.rating < 0


def sample_batch(
    records: Sequence[ReflectionRecord],
    predicate: Callable[[ReflectionRecord], bool] | None,
    batch_size: int,
    seed: int,
) -> list[ReflectionRecord]:
    """Seeded uniform sample; without replacement unless the filtered pool is too small."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    pool = [r for r in records if predicate is None or predicate(r)]
    if not pool:
        raise EmptyBuffer("no records left after filtering")
    gen = rng("sample-batch", seed)
    if len(pool) >= batch_size:
        idx = gen.choice(len(pool), size=batch_size, replace=False)
    else:
        idx = gen.choice(len(pool), size=batch_size, replace=True)
    return [pool[int(i)] for i in idx]


def group_records(records: Iterable[ReflectionRecord]) -> dict[tuple[str, str, int], list[ReflectionRecord]]:
    groups: dict[tuple[str, str, int], list[ReflectionRecord]] = defaultdict(list)
    for r in records:
        groups[r.group_key].append(r)
    return dict(groups)


@dataclass
class PreferenceStats:
    groups: int = 0
    pairs: int = 0
    ties: int = 0


def build_preferences(
    groups: dict[tuple[str, str, int], Sequence[ReflectionRecord]],
    stats: PreferenceStats | None = None,
) -> list[PreferencePair]:
    """One accepted/rejected pair per two-response group; tied ratings are skipped and counted."""
    stats = stats if stats is not None else PreferenceStats()
    pairs = []
    for key, group in groups.items():
        if len(group) != 2:
            raise MalformedGroup(f"group {key} has {len(group)} responses, expected 2")
        a, b = group
        stats.groups += 1
        if a.rating == b.rating:
            stats.ties += 1
            continue
        hi, lo = (a, b) if a.rating > b.rating else (b, a)
        pairs.append(
            PreferencePair(
                instruction=a.instruction,
                accepted_id=hi.response_id,
                rejected_id=lo.response_id,
                accepted_rating=hi.rating,
                rejected_rating=lo.rating,
                source=key,
            )
        )
        stats.pairs += 1
    return pairs

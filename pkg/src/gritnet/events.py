"""Student event data model, JSONL ingestion, label derivation and dataset statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence


class ParseError(ValueError):
    """Raised for a malformed event-log line; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Event:
    action: str
    day: int

    def __post_init__(self):
        if self.day < 0:
            raise ValueError(f"event day must be >= 0, got {self.day}")


@dataclass(frozen=True)
class StudentRecord:
    """One student's time-ordered events plus the binary graduation label."""

    student_id: str
    enrollment_day: int
    events: tuple[Event, ...] = ()
    label: int = 0
    graduated_day: Optional[int] = None

    @property
    def days(self) -> list[int]:
        return [e.day for e in self.events]

    @property
    def actions(self) -> list[str]:
        return [e.action for e in self.events]

    def __len__(self) -> int:
        return len(self.events)


class Vocabulary:
    """Bijection between action names and contiguous indices ``0..L-1``.

    Index ``L`` is reserved for actions unseen when the vocabulary was built;
    it is only handed out when ``lookup`` is called with ``allow_unknown=True``.
    """

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
        return idx

    @classmethod
    def from_records(cls, records: Iterable[StudentRecord]) -> "Vocabulary":
        vocab = cls()
        for rec in records:
            for ev in rec.events:
                vocab.add(ev.action)
        return vocab

    @property
    def unknown_index(self) -> int:
        return len(self._names)

    def index(self, name: str) -> int:
        return self._index[name]

    def lookup(self, name: str, allow_unknown: bool = False) -> int:
        idx = self._index.get(name)
        if idx is None:
            if allow_unknown:
                return self.unknown_index
            raise KeyError(f"action {name!r} is not in the vocabulary")
        return idx

    def name(self, idx: int) -> str:
        return self._names[idx]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._names == other._names

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"


@dataclass(frozen=True)
class DatasetStats:
    student_count: int
    graduate_count: int
    graduation_rate: float
    min_length: int
    mean_length: float
    max_length: int
    unique_actions: int


def derive_label(graduated_day: Optional[int], deadline: Optional[int]) -> int:
    """1 iff a graduation day is present and strictly before ``deadline``.

    ``deadline=None`` means no cutoff: any recorded graduation counts.
    """
    if graduated_day is None:
        return 0
    if deadline is None:
        return 1
    return int(graduated_day < deadline)


def filter_pre_enrollment(record: StudentRecord) -> StudentRecord:
    kept = tuple(e for e in record.events if e.day >= record.enrollment_day)
    if len(kept) == len(record.events):
        return record
    return replace(record, events=kept)


def _require_int(obj: dict, key: str, lineno: int, optional: bool = False) -> Optional[int]:
    if key not in obj or obj[key] is None:
        if optional:
            return None
        raise ParseError(lineno, f"missing field {key!r}")
    val = obj[key]
    # bool is an int subclass; reject it explicitly
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(lineno, f"field {key!r} must be an integer day, got {val!r}")
    if isinstance(val, float):
        if val != val or val in (float("inf"), float("-inf")):
            raise ParseError(lineno, f"field {key!r} is not finite")
        val = int(val // 1)  # sub-day precision truncated
    if val < 0:
        raise ParseError(lineno, f"field {key!r} must be >= 0, got {val}")
    return val


def parse_event_log(
    lines: Iterable[str | bytes], deadline: Optional[int] = None
) -> tuple[list[StudentRecord], Vocabulary]:
    """Parse a JSONL event log into student records and an action vocabulary.

    Two line kinds are recognised by their fields: event lines
    (``student_id``, ``action``, ``day``) and enrollment lines
    (``student_id``, ``enrollment_day``, optional ``graduated_day``).
    Students appear in order of first mention; each student's events are
    stably sorted by day, so same-day ties keep their ingestion order.
    Every student with events must also have an enrollment line.
    """
    order: list[str] = []
    events: dict[str, list[Event]] = {}
    enrollment: dict[str, tuple[int, Optional[int]]] = {}
    first_line: dict[str, int] = {}

    for lineno, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        text = raw.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ParseError(lineno, "expected a JSON object")
        sid = obj.get("student_id")
        if not isinstance(sid, str) or not sid:
            raise ParseError(lineno, "missing or non-string 'student_id'")
        if sid not in first_line:
            first_line[sid] = lineno
            order.append(sid)
            events[sid] = []

        if "enrollment_day" in obj:
            if sid in enrollment:
                raise ParseError(lineno, f"duplicate enrollment line for {sid!r}")
            enrollment[sid] = (
                _require_int(obj, "enrollment_day", lineno),
                _require_int(obj, "graduated_day", lineno, optional=True),
            )
        elif "action" in obj:
            action = obj["action"]
            if not isinstance(action, str) or not action:
                raise ParseError(lineno, "'action' must be a non-empty string")
            events[sid].append(Event(action, _require_int(obj, "day", lineno)))
        else:
            raise ParseError(lineno, "line is neither an event nor an enrollment record")

    records = []
    for sid in order:
        if sid not in enrollment:
            raise ParseError(first_line[sid], f"student {sid!r} has no enrollment line")
        enroll_day, grad_day = enrollment[sid]
        evs = sorted(events[sid], key=lambda e: e.day)
        records.append(
            StudentRecord(
                student_id=sid,
                enrollment_day=enroll_day,
                events=tuple(evs),
                label=derive_label(grad_day, deadline),
                graduated_day=grad_day,
            )
        )
    return records, Vocabulary.from_records(records)


def iter_event_log(records: Sequence[StudentRecord]) -> Iterator[str]:
    """Serialize records back to JSONL lines (enrollment line first per student)."""
    for rec in records:
        enroll = {"student_id": rec.student_id, "enrollment_day": rec.enrollment_day}
        if rec.graduated_day is not None:
            enroll["graduated_day"] = rec.graduated_day
        yield json.dumps(enroll, separators=(",", ":"))
        for ev in rec.events:
            yield json.dumps(
                {"student_id": rec.student_id, "action": ev.action, "day": ev.day},
                separators=(",", ":"),
            )


def write_event_log(records: Sequence[StudentRecord]) -> str:
    return "".join(line + "\n" for line in iter_event_log(records))


def dataset_stats(records: Sequence[StudentRecord]) -> DatasetStats:
    n = len(records)
    if n == 0:
        return DatasetStats(0, 0, 0.0, 0, 0.0, 0, 0)
    lengths = [len(r.events) for r in records]
    grads = sum(r.label for r in records)
    actions = {e.action for r in records for e in r.events}
    return DatasetStats(
        student_count=n,
        graduate_count=grads,
        graduation_rate=grads / n,
        min_length=min(lengths),
        mean_length=sum(lengths) / n,
        max_length=max(lengths),
        unique_actions=len(actions),
    )

"""Synthetic MOOC clickstreams with a tunable split of order-borne vs count-borne label signal.

Each student walks a curriculum of lessons (a few content pages then a quiz)
with a project after every few lessons. A student carries the label signal
through one of two channels:

* count channel: graduates move faster, answer quizzes correctly more often
  and do not churn; non-graduates are slow and drop out after a few weeks.
  A bag-of-words model sees all of this.
* order channel: both classes share pace, quiz accuracy and weekly event
  counts. Graduates work through each lesson in curriculum order on regular,
  closely spaced days; non-graduates shuffle the lesson (quiz before pages)
  and binge on one or two days a week, leaving long gaps. Counts carry no
  information about the label here.

``order_signal_strength`` is the probability of the order channel. Project
outcomes are a late count signal for everyone, so any model catches up once
students reach their first project (around week four).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

EPOCH_DAY = 17232  # 2017-03-07 as days since 1970-01-01


def default_curriculum(n_lessons: int = 24, pages_per_lesson: int = 3, lessons_per_project: int = 8) -> list[str]:
    items = []
    for lesson in range(1, n_lessons + 1):
        items += [f"page:L{lesson:02d}.{p}" for p in range(1, pages_per_lesson + 1)]
        items.append(f"quiz:L{lesson:02d}")
        if lesson % lessons_per_project == 0:
            items.append(f"project:P{lesson // lessons_per_project}")
    return items


@dataclass
class SyntheticSpec:
    student_count: int = 2000
    curriculum: list[str] = field(default_factory=default_curriculum)
    graduation_rate_target: float = 0.4
    order_signal_strength: float = 0.8
    horizon_weeks: int = 8
    seed: int = 0

    def validate(self) -> None:
        if self.student_count < 1:
            raise ValueError("student_count must be positive")
        if len(set(self.curriculum)) != len(self.curriculum):
            raise ValueError("curriculum item names must be unique")
        for item in self.curriculum:
            kind = item.split(":", 1)[0]
            if kind not in ("page", "quiz", "project") or ":" not in item:
                raise ValueError(f"curriculum item {item!r} must start with page:, quiz: or project:")
        if not any(i.startswith("quiz:") for i in self.curriculum):
            raise ValueError("curriculum needs at least one quiz")
        for name in ("graduation_rate_target", "order_signal_strength"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.horizon_weeks < 1:
            raise ValueError("horizon_weeks must be positive")


def _units(curriculum: list[str]) -> list[tuple[str, list[str]]]:
    """Group the curriculum into ('lesson', pages + quiz) and ('project', [name]) units."""
    units = []
    block: list[str] = []
    for item in curriculum:
        kind = item.split(":", 1)[0]
        if kind == "project":
            if block:
                units.append(("lesson", block))
                block = []
            units.append(("project", [item]))
        else:
            block.append(item)
            if kind == "quiz":
                units.append(("lesson", block))
                block = []
    if block:
        units.append(("lesson", block))
    return units


@dataclass
class _Profile:
    label: int
    order_channel: bool
    pace: float  # lessons per week
    quiz_p: float
    ordered_p: float
    active_days: tuple[int, int]  # inclusive range of active days per week
    churn_week: int  # weeks of activity before dropping out
    project_p: float


def _profile(rng: np.random.Generator, label: int, order_channel: bool, horizon: int) -> _Profile:
    project_p = 0.97 if label else 0.04
    if order_channel:
        return _Profile(
            label,
            True,
            pace=rng.uniform(1.6, 2.6),
            quiz_p=0.7,
            ordered_p=0.9 if label else 0.1,
            active_days=(4, 6) if label else (1, 2),
            churn_week=horizon,
            project_p=project_p,
        )
    if label:
        return _Profile(label, False, rng.uniform(1.8, 3.0), 0.8, 0.5, (2, 5), horizon, project_p)
    return _Profile(
        label, False, rng.uniform(0.7, 1.9), 0.45, 0.5, (2, 5), int(rng.integers(1, 5)), project_p
    )


def _item_stream(rng, prof: _Profile, units) -> list[str]:
    """The student's action names in study order, before any timing is attached."""
    out: list[str] = []
    seen_pages: list[str] = []
    for kind, items in units:
        if kind == "project":
            name = items[0]
            passed = rng.random() < prof.project_p
            out.append(f"{name}:{'passed' if passed else 'failed'}")
            if not passed and rng.random() < 0.5:
                out.append(f"{name}:{'passed' if rng.random() < prof.project_p else 'failed'}")
            continue
        block = list(items)
        if rng.random() >= prof.ordered_p:
            block = [block[i] for i in rng.permutation(len(block))]
        for item in block:
            if item.startswith("quiz:"):
                correct = rng.random() < prof.quiz_p
                out.append(f"{item}:{'correct' if correct else 'incorrect'}")
                if not correct:
                    out.append(f"{item}:{'correct' if rng.random() < prof.quiz_p else 'incorrect'}")
            else:
                out.append(item)
                seen_pages.append(item)
            if seen_pages and rng.random() < 0.15:
                out.append(seen_pages[int(rng.integers(len(seen_pages)))])
    return out


def _student_events(rng, prof: _Profile, units, enroll: int, horizon: int) -> list[tuple[str, int]]:
    stream = _item_stream(rng, prof, units)
    per_lesson = len(stream) / max(1, sum(1 for k, _ in units if k == "lesson"))
    events = []
    pos = 0
    for week in range(min(horizon, prof.churn_week)):
        n = int(rng.poisson(prof.pace * per_lesson))
        chunk = stream[pos : pos + n]
        pos += len(chunk)
        if not chunk:
            break
        lo, hi = prof.active_days
        k = int(rng.integers(lo, hi + 1))
        days = np.sort(rng.choice(7, size=k, replace=False))
        # spread events over the active days, in study order
        counts = rng.multinomial(len(chunk), np.full(k, 1.0 / k))
        day_of = np.repeat(days, counts)
        for action, d in zip(chunk, day_of):
            events.append((action, enroll + 7 * week + int(d)))
    return events


def _student_id(seed: int, i: int) -> str:
    return hashlib.blake2b(f"{seed}:{i}".encode(), digest_size=6).hexdigest()


def generate_synthetic(spec: SyntheticSpec) -> bytes:
    """JSONL event log (enrollment line, then events, per student); same seed gives the same bytes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.student_count
    n_grad = int(round(spec.graduation_rate_target * n))
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[:n_grad]] = 1
    units = _units(spec.curriculum)
    horizon = spec.horizon_weeks
    lines = []
    for i in range(n):
        label = int(labels[i])
        order_channel = bool(rng.random() < spec.order_signal_strength)
        prof = _profile(rng, label, order_channel, horizon)
        sid = _student_id(spec.seed, i)
        enroll = EPOCH_DAY + int(rng.integers(0, 60))
        enroll_line = {"student_id": sid, "enrollment_day": enroll}
        if label:
            enroll_line["graduated_day"] = enroll + 7 * horizon + int(rng.integers(0, 60))
        lines.append(enroll_line)
        # free-trial activity before enrollment, dropped by pre-enrollment filtering
        if rng.random() < 0.2:
            for _ in range(int(rng.integers(1, 4))):
                item = spec.curriculum[int(rng.integers(min(4, len(spec.curriculum))))]
                if item.startswith("quiz:"):
                    item += ":correct"
                lines.append({"student_id": sid, "action": item, "day": enroll - int(rng.integers(1, 8))})
        for action, day in _student_events(rng, prof, units, enroll, horizon):
            lines.append({"student_id": sid, "action": action, "day": day})
    return "".join(json.dumps(obj, separators=(",", ":")) + "\n" for obj in lines).encode()

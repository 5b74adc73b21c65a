"""Synthetic expert panels with parameterized skill.

The simulator drives complete studies through the public session operations
only (enroll, next_task, submit_response), so every run exercises the full
ordering and immutability surface. Runs are fully deterministic per
(study seed, profile seeds).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rng
from .domain import (
    Category,
    Lesion,
    Procedure,
    Question,
    Source,
    TaskInstance,
    TaskKind,
    resolve_truth,
)
from .engine import StudyEngine
from .errors import ValidationError

UNIFORM_5 = (0.2, 0.2, 0.2, 0.2, 0.2)

#: abnormal-subtype option index for each lesion (catalog order)
_LESION_OPTION = {
    Lesion.EROSION: 1,
    Lesion.ERYTHEMA: 2,
    Lesion.ULCER: 3,
    Lesion.OTHER: 4,
}


@dataclass(frozen=True)
class SkillProfile:
    """Behavioral parameters of one simulated expert."""

    seed: int
    years_experience: int = 10
    expert_id: Optional[str] = None
    #: probability of a correct real/synthetic call given the true class
    p_correct_real: float = 0.65
    p_correct_synth: float = 0.70
    #: probability of identifying the real image of a pair
    p_pair: float = 0.6682
    #: abnormality-call operating point
    sens_abn: float = 0.712
    spec_abn: float = 0.864
    difficulty_dist: tuple = UNIFORM_5
    quality_dist: tuple = UNIFORM_5
    realism_dist: tuple = UNIFORM_5
    diversity_dist: tuple = UNIFORM_5
    #: independent per-reason selection probabilities
    reason_probs: tuple = (0.5, 0.5, 0.2, 0.2, 0.2)

    def __post_init__(self):
        for name in ("p_correct_real", "p_correct_synth", "p_pair", "sens_abn", "spec_abn"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1], got {value}")
        for name in ("difficulty_dist", "quality_dist", "realism_dist", "diversity_dist"):
            dist = getattr(self, name)
            if len(dist) != 5 or any(p < 0 for p in dist):
                raise ValidationError(f"{name} must be 5 non-negative probabilities")
            if abs(sum(dist) - 1.0) > 1e-9:
                raise ValidationError(f"{name} must sum to 1, got {sum(dist)}")
        if len(self.reason_probs) != 5 or any(not 0 <= p <= 1 for p in self.reason_probs):
            raise ValidationError("reason_probs must be 5 probabilities in [0, 1]")


def load_profiles(path: Path) -> list[SkillProfile]:
    """Read a JSON list of SkillProfile records."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not raw:
        raise ValidationError("profile file must hold a non-empty JSON list")
    profiles = []
    for index, row in enumerate(raw, start=1):
        if not isinstance(row, dict):
            raise ValidationError(f"profile {index} must be an object")
        for key in ("difficulty_dist", "quality_dist", "realism_dist", "diversity_dist", "reason_probs"):
            if key in row:
                row[key] = tuple(row[key])
        try:
            profiles.append(SkillProfile(**row))
        except TypeError as exc:
            raise ValidationError(f"profile {index}: {exc}") from None
    return profiles


def logical_clock(start: Optional[datetime] = None):
    """A deterministic clock: each call advances one second."""
    current = start or datetime(2026, 1, 1, tzinfo=timezone.utc)
    tick = {"n": 0}

    def now() -> datetime:
        value = current + timedelta(seconds=tick["n"])
        tick["n"] += 1
        return value

    return now


def _categorical(gen: np.random.Generator, dist: Sequence[float]) -> int:
    return int(gen.choice(len(dist), p=np.asarray(dist) / sum(dist)))


def answer_for(task: TaskInstance, study, profile: SkillProfile, gen: np.random.Generator):
    """Draw one answer for a task according to the skill profile."""
    kind, procedure = task.kind, task.procedure
    if procedure is Procedure.A5:
        dist = profile.diversity_dist if kind is TaskKind.T1 else profile.realism_dist
        return _categorical(gen, dist)
    if kind is TaskKind.T1:
        if procedure is Procedure.A4:
            real_slot = (
                0 if study.image(task.payload.slot1).source is Source.REAL else 1
            )
            if gen.random() < profile.p_pair:
                return real_slot
            return 1 - real_slot
        image = study.judged_image(task)
        truth_real = resolve_truth(image, Question.REALNESS)
        p_correct = profile.p_correct_real if truth_real else profile.p_correct_synth
        correct = gen.random() < p_correct
        says_real = truth_real == correct
        return 0 if says_real else 1
    if kind is TaskKind.T2:
        return _categorical(gen, profile.difficulty_dist)
    if kind is TaskKind.T3:
        picks = [i for i, p in enumerate(profile.reason_probs) if gen.random() < p]
        if not picks:
            weights = list(profile.reason_probs)
            if sum(weights) <= 0:
                weights = [1.0] * 5
            picks = [_categorical(gen, [w / sum(weights) for w in weights])]
        return picks
    if kind in (TaskKind.T4, TaskKind.T4A, TaskKind.T4B):
        image = study.judged_image(task)
        truth_abnormal = image.category is Category.ABNORMAL
        p_abnormal = profile.sens_abn if truth_abnormal else 1.0 - profile.spec_abn
        if gen.random() >= p_abnormal:
            return 0
        if image.lesion is not None:
            return _LESION_OPTION[image.lesion]
        return int(gen.integers(1, 5))
    if kind in (TaskKind.T5, TaskKind.T5A, TaskKind.T5B):
        return _categorical(gen, profile.quality_dist)
    raise ValidationError(f"no answer model for task kind {kind.value}")


@dataclass(frozen=True)
class PanelMember:
    profile: SkillProfile
    expert_id: str
    session_token: str


def simulate_panel(
    engine: StudyEngine,
    profiles: Sequence[SkillProfile],
    on_enroll=None,
) -> list[PanelMember]:
    """Run every profile through the full study via the public session API.

    Experts are processed in order, one at a time, so the accepted-response
    log is itself deterministic. ``on_enroll(profile, token)`` runs right
    after each enrollment (used by callers that persist experts).
    """
    study = engine.study
    members: list[PanelMember] = []
    for index, profile in enumerate(profiles, start=1):
        expert_id = profile.expert_id or f"sim-{index:02d}"
        expert, token = engine.enroll_expert(
            profile.years_experience, expert_id=expert_id
        )
        if on_enroll is not None:
            on_enroll(expert, token)
        gen = rng.stream(study.config.seed, f"sim.{profile.seed}.{expert_id}")
        while (task := engine.next_task(token)) is not None:
            answer = answer_for(task, study, profile, gen)
            engine.submit_response(token, task.task_id, answer)
        members.append(PanelMember(profile=profile, expert_id=expert_id, session_token=token))
    return members


def reference_panel(n_experts: int = 10, base_seed: int = 1000) -> list[SkillProfile]:
    """A panel shaped like the reference cohort: 3 junior, 4 mid, 3 senior
    experts, all at the pooled reference skill rates."""
    years = [5, 7, 9, 10, 14, 16, 19, 21, 24, 27]
    profiles = []
    for index in range(n_experts):
        profiles.append(
            SkillProfile(
                seed=base_seed + index,
                years_experience=years[index % len(years)],
            )
        )
    return profiles

"""Per-expert session state machine over a frozen study.

A study is materialized exactly once: every procedure's items are sampled at
creation and frozen, so each enrolled expert sees the same item sets. Session
cursors only advance; accepted responses are immutable, and the full engine
state is reconstructable by replaying the accepted-response log.
"""

from __future__ import annotations

import dataclasses
import json
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Optional

from . import rng
from .domain import (
    SYNTHETIC_GENERATORS,
    ExpertProfile,
    Generator,
    GroupPayload,
    GroupingPolicy,
    ImageRecord,
    PairPayload,
    Procedure,
    ProcedureCounts,
    Response,
    SinglePayload,
    Source,
    StudyConfig,
    TaskInstance,
    TaskKind,
    TASK_ORDER,
    is_multi_select,
    option_catalog,
    validate_answer,
)
from .errors import (
    AuthError,
    ImmutabilityError,
    NotFoundError,
    OrderingError,
    StratumError,
    ValidationError,
)
from .sampling import (
    GroupingResult,
    ImageGroup,
    GroupLabel,
    OrderedPair,
    SamplingPlan,
    build_a4_pairs,
    build_a5_groups,
    plan_quotas,
    sample_individual_set,
)


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class Study:
    """A frozen, fully materialized study: item sets plus the task schedule."""

    def __init__(
        self,
        config: StudyConfig,
        pool: Iterable[ImageRecord],
        a1_items: tuple[str, ...],
        a2_items: tuple[str, ...],
        a3_items: tuple[str, ...],
        a4_pairs: tuple[OrderedPair, ...],
        a5_groups: tuple[ImageGroup, ...],
        a5_leftovers: dict,
    ):
        self.config = config
        self.pool: dict[str, ImageRecord] = {}
        for record in pool:
            if record.image_id in self.pool:
                raise ValidationError(f"duplicate image_id {record.image_id!r} in pool")
            self.pool[record.image_id] = record
        self.a1_items = a1_items
        self.a2_items = a2_items
        self.a3_items = a3_items
        self.a4_pairs = a4_pairs
        self.a5_groups = a5_groups
        self.a5_leftovers = a5_leftovers
        self.tasks: dict[str, TaskInstance] = {}
        self._group_by_item: dict[str, ImageGroup] = {}
        self.schedule = self._materialize_tasks()

    # -- materialization --

    def _materialize_tasks(self) -> tuple[str, ...]:
        schedule: list[str] = []

        def add(procedure: Procedure, index: int, payload) -> None:
            for kind in TASK_ORDER[procedure]:
                task_id = f"{procedure.value}-{index:03d}-{kind.value}"
                self.tasks[task_id] = TaskInstance(
                    task_id=task_id,
                    procedure=procedure,
                    kind=kind,
                    payload=payload,
                    options=option_catalog(procedure, kind),
                    multi_select=is_multi_select(kind),
                )
                schedule.append(task_id)

        for procedure, items in (
            (Procedure.A1, self.a1_items),
            (Procedure.A2, self.a2_items),
            (Procedure.A3, self.a3_items),
        ):
            for index, image_id in enumerate(items, start=1):
                add(procedure, index, SinglePayload(image_id))
        for index, pair in enumerate(self.a4_pairs, start=1):
            add(Procedure.A4, index, PairPayload(pair.slot1, pair.slot2))
        for index, group in enumerate(self.a5_groups, start=1):
            self._group_by_item[f"{Procedure.A5.value}-{index:03d}"] = group
            add(Procedure.A5, index, GroupPayload(group.image_ids))
        return tuple(schedule)

    # -- lookups --

    @property
    def study_id(self) -> str:
        return self.config.study_id

    def task(self, task_id: str) -> TaskInstance:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise NotFoundError(f"unknown task {task_id!r}") from None

    def image(self, image_id: str) -> ImageRecord:
        try:
            return self.pool[image_id]
        except KeyError:
            raise NotFoundError(f"unknown image {image_id!r}") from None

    @staticmethod
    def item_key(task: TaskInstance) -> str:
        return task.task_id.rsplit("-", 1)[0]

    def judged_image(self, task: TaskInstance) -> ImageRecord:
        """The single image a response to this task is judging."""
        payload = task.payload
        if isinstance(payload, SinglePayload):
            return self.image(payload.image_id)
        if isinstance(payload, PairPayload):
            if task.kind in (TaskKind.T4A, TaskKind.T5A):
                return self.image(payload.slot1)
            if task.kind in (TaskKind.T4B, TaskKind.T5B):
                return self.image(payload.slot2)
        raise ValidationError(f"task {task.task_id} does not judge a single image")

    def group_label(self, task: TaskInstance) -> GroupLabel:
        group = self._group_by_item.get(self.item_key(task))
        if group is None:
            raise NotFoundError(f"task {task.task_id} is not a group task")
        return group.label

    def groups_are_category_homogeneous(self) -> bool:
        return self.config.grouping_policy is GroupingPolicy.HOMOGENEOUS_SOURCE_CATEGORY

    # -- serialization --

    def plan_dict(self) -> dict:
        return {
            "config": {
                "study_id": self.config.study_id,
                "seed": self.config.seed,
                "counts": vars(self.config.counts),
                "grouping_policy": self.config.grouping_policy.value,
                "shuffle_per_expert": self.config.shuffle_per_expert,
            },
            "a1_items": list(self.a1_items),
            "a2_items": list(self.a2_items),
            "a3_items": list(self.a3_items),
            "a4_pairs": [[p.slot1, p.slot2] for p in self.a4_pairs],
            "a5_groups": [
                {
                    "group_id": g.group_id,
                    "image_ids": list(g.image_ids),
                    "source": g.label.source,
                    "category": g.label.category,
                }
                for g in self.a5_groups
            ],
            "a5_leftovers": {k: list(v) for k, v in sorted(self.a5_leftovers.items())},
        }

    def plan_bytes(self) -> bytes:
        return json.dumps(self.plan_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_plan_dict(cls, plan: dict, pool: Iterable[ImageRecord]) -> "Study":
        cfg = plan["config"]
        config = StudyConfig(
            study_id=cfg["study_id"],
            seed=cfg["seed"],
            counts=ProcedureCounts(**cfg["counts"]),
            grouping_policy=GroupingPolicy(cfg["grouping_policy"]),
            shuffle_per_expert=cfg.get("shuffle_per_expert", False),
        )
        return cls(
            config=config,
            pool=pool,
            a1_items=tuple(plan["a1_items"]),
            a2_items=tuple(plan["a2_items"]),
            a3_items=tuple(plan["a3_items"]),
            a4_pairs=tuple(OrderedPair(s1, s2) for s1, s2 in plan["a4_pairs"]),
            a5_groups=tuple(
                ImageGroup(
                    group_id=g["group_id"],
                    image_ids=tuple(g["image_ids"]),
                    label=GroupLabel(g["source"], g["category"]),
                )
                for g in plan["a5_groups"]
            ),
            a5_leftovers={k: list(v) for k, v in plan["a5_leftovers"].items()},
        )


def create_study(config: StudyConfig, pool: Iterable[ImageRecord]) -> Study:
    """Sample all five procedures' items once and freeze them.

    Deterministic: the same (config, pool contents) always materializes the
    same study, regardless of pool ordering.
    """
    pool = list(pool)
    seen: set[str] = set()
    for record in pool:
        if record.image_id in seen:
            raise ValidationError(f"duplicate image_id {record.image_id!r} in pool")
        seen.add(record.image_id)

    seed = config.seed
    counts = config.counts
    by_id = {record.image_id: record for record in pool}
    reals = [r for r in pool if r.source is Source.REAL]
    tide2 = [r for r in pool if r.generator is Generator.TIDE_II]
    by_generator = {
        generator: [r for r in pool if r.generator is generator]
        for generator in SYNTHETIC_GENERATORS
    }

    def draw(subpool, total, dims, tag, procedure) -> list[str]:
        quotas = plan_quotas(total, dims, rng.stream(seed, f"{tag}.plan"))
        plan = SamplingPlan(procedure=procedure, quotas=quotas, seed=seed, stream_name=f"{tag}.draw")
        return sample_individual_set(subpool, plan)

    # A1 mixes real with TIDE-II synthetic images, balanced on all three axes.
    a1_items = draw(
        reals + tide2, counts.a1, ("source", "category", "origin"), "A1", Procedure.A1
    )
    a2_items = draw(tide2, counts.a2, ("category", "origin"), "A2", Procedure.A2)
    a3_items = draw(reals, counts.a3, ("category", "origin"), "A3", Procedure.A3)

    # A4 draws two fresh subsets with one shared quota vector, then pairs them.
    pair_quotas = plan_quotas(
        counts.a4_pairs, ("category", "origin"), rng.stream(seed, "A4.plan")
    )
    a4_real = sample_individual_set(
        reals, SamplingPlan(Procedure.A4, pair_quotas, seed, "A4.real")
    )
    a4_synth = sample_individual_set(
        tide2, SamplingPlan(Procedure.A4, pair_quotas, seed, "A4.synth")
    )
    a4_pairs = build_a4_pairs(
        [by_id[i] for i in a4_real], [by_id[i] for i in a4_synth], seed
    )

    # A5: one balanced real part plus one balanced subset per generator.
    a5_real = draw(reals, counts.a5_real_total, ("category", "origin"), "A5.real", Procedure.A5)
    synth_subsets = {}
    for generator in SYNTHETIC_GENERATORS:
        subpool = by_generator[generator]
        if len(subpool) < counts.a5_per_generator:
            raise StratumError(
                f"generator {generator.value!r} supplies {len(subpool)} image(s), "
                f"needs {counts.a5_per_generator} for the group assessment"
            )
        ids = draw(
            subpool,
            counts.a5_per_generator,
            ("category", "origin"),
            f"A5.{generator.value}",
            Procedure.A5,
        )
        synth_subsets[generator] = [by_id[i] for i in ids]
    grouping: GroupingResult = build_a5_groups(
        [by_id[i] for i in a5_real],
        synth_subsets,
        config.grouping_policy,
        seed,
        group_size=counts.a5_group_size,
    )

    return Study(
        config=config,
        pool=pool,
        a1_items=tuple(a1_items),
        a2_items=tuple(a2_items),
        a3_items=tuple(a3_items),
        a4_pairs=tuple(a4_pairs),
        a5_groups=grouping.groups,
        a5_leftovers=grouping.leftovers,
    )


# --- Sessions ----------------------------------------------------------------


class SessionStatus:
    ACTIVE = "active"
    COMPLETED = "completed"


@dataclass
class SessionState:
    session_token: str
    study_id: str
    expert_id: str
    schedule: tuple[str, ...]
    cursor: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def status(self) -> str:
        return SessionStatus.COMPLETED if self.cursor >= len(self.schedule) else SessionStatus.ACTIVE

    def current_task_id(self) -> Optional[str]:
        if self.cursor >= len(self.schedule):
            return None
        return self.schedule[self.cursor]


@dataclass(frozen=True)
class Receipt:
    response_id: str
    task_id: str
    expert_id: str
    seq: int
    duplicate: bool


class StudyEngine:
    """Live state: sessions, cursors and the append-only accepted-response log.

    ``sink`` is invoked with each accepted Response before it is committed to
    memory; a raising sink aborts the submission (durability before
    acknowledgment). Submissions within one session are serialized.
    """

    def __init__(
        self,
        study: Study,
        sink: Optional[Callable[[Response], int]] = None,
        clock: Callable[[], datetime] = _utc_now,
    ):
        self.study = study
        self.sink = sink
        self.clock = clock
        self.profiles: dict[str, ExpertProfile] = {}
        self.sessions: dict[str, SessionState] = {}
        self._by_expert: dict[str, SessionState] = {}
        self._responses: dict[tuple[str, str], Response] = {}
        self._receipts: dict[tuple[str, str], Receipt] = {}
        self._log: list[Response] = []
        self._enroll_lock = threading.Lock()

    # -- enrollment --

    def enroll_expert(
        self,
        years_experience: int,
        expert_id: Optional[str] = None,
        session_token: Optional[str] = None,
    ) -> tuple[ExpertProfile, str]:
        with self._enroll_lock:
            if expert_id is None:
                expert_id = f"expert-{len(self.profiles) + 1:02d}"
            if expert_id in self.profiles:
                raise ValidationError(f"expert {expert_id!r} is already enrolled")
            profile = ExpertProfile(expert_id=expert_id, years_experience=years_experience)
            token = session_token or secrets.token_urlsafe(24)
            if token in self.sessions:
                raise ValidationError("session token collision; retry enrollment")
            state = SessionState(
                session_token=token,
                study_id=self.study.study_id,
                expert_id=expert_id,
                schedule=self._schedule_for(expert_id),
            )
            self.profiles[expert_id] = profile
            self.sessions[token] = state
            self._by_expert[expert_id] = state
            return profile, token

    def _schedule_for(self, expert_id: str) -> tuple[str, ...]:
        if not self.study.config.shuffle_per_expert:
            return self.study.schedule
        # Permute item order within each procedure; task order inside an item
        # is fixed by the protocol.
        by_item: dict[str, list[str]] = {}
        item_order: list[str] = []
        for task_id in self.study.schedule:
            item = task_id.rsplit("-", 1)[0]
            if item not in by_item:
                by_item[item] = []
                item_order.append(item)
            by_item[item].append(task_id)
        shuffled: list[str] = []
        for procedure in Procedure:
            items = [i for i in item_order if i.startswith(procedure.value + "-")]
            gen = rng.stream(self.study.config.seed, f"expert-order.{procedure.value}.{expert_id}")
            order = gen.permutation(len(items))
            for index in order:
                shuffled.extend(by_item[items[int(index)]])
        return tuple(shuffled)

    # -- queries --

    def _session(self, token: str) -> SessionState:
        state = self.sessions.get(token)
        if state is None:
            raise AuthError("unknown session token")
        return state

    def session_view(self, token: str) -> dict:
        state = self._session(token)
        current = state.current_task_id()
        view = {
            "study_id": state.study_id,
            "expert_id": state.expert_id,
            "status": state.status,
            "progress": {"answered": state.cursor, "total": len(state.schedule)},
        }
        if current is not None:
            task = self.study.task(current)
            item = task.task_id.rsplit("-", 2)
            view["cursor"] = {
                "procedure": task.procedure.value,
                "item": int(item[1]),
                "kind": task.kind.value,
            }
        return view

    def next_task(self, token: str) -> Optional[TaskInstance]:
        """The cursor's task, or None once the session is completed."""
        state = self._session(token)
        current = state.current_task_id()
        if current is None:
            return None
        return self.study.task(current)

    def progress(self, token: str) -> tuple[int, int]:
        state = self._session(token)
        return state.cursor, len(state.schedule)

    def response_log(self) -> tuple[Response, ...]:
        return tuple(self._log)

    def response_for(self, expert_id: str, task_id: str) -> Optional[Response]:
        return self._responses.get((expert_id, task_id))

    # -- submission --

    def submit_response(self, token: str, task_id: str, answer) -> Receipt:
        state = self._session(token)
        with state.lock:
            return self._accept(state, task_id, answer)

    def _accept(
        self,
        state: SessionState,
        task_id: str,
        answer,
        response_id: Optional[str] = None,
        answered_at: Optional[datetime] = None,
    ) -> Receipt:
        expert_id = state.expert_id
        key = (expert_id, task_id)
        stored = self._responses.get(key)
        if stored is not None:
            task = self.study.task(task_id)
            if validate_answer(task, answer) == stored.answer:
                # Idempotent retry: hand back the original receipt, flagged.
                return dataclasses.replace(self._receipts[key], duplicate=True)
            raise ImmutabilityError(
                f"task {task_id} already has an accepted response; answers are final"
            )
        expected = state.current_task_id()
        if expected is None:
            raise OrderingError("session is completed; no further submissions accepted")
        if task_id != expected:
            self.study.task(task_id)  # unknown ids surface as not-found
            raise OrderingError(
                f"expected a response to task {expected}, got {task_id}"
            )
        task = self.study.task(task_id)
        canonical = validate_answer(task, answer)
        response = Response(
            response_id=response_id or f"r-{expert_id}-{task_id}",
            study_id=state.study_id,
            expert_id=expert_id,
            task_id=task_id,
            answer=canonical,
            answered_at=answered_at or self.clock(),
        )
        seq = len(self._log) + 1
        if self.sink is not None:
            sunk = self.sink(response)
            if sunk is not None:
                seq = sunk
        self._responses[key] = response
        self._log.append(response)
        state.cursor += 1
        receipt = Receipt(
            response_id=response.response_id,
            task_id=task_id,
            expert_id=expert_id,
            seq=seq,
            duplicate=False,
        )
        self._receipts[key] = receipt
        return receipt

    # -- replay --

    def replay(self, experts: Iterable[tuple[ExpertProfile, str]], responses: Iterable[Response]):
        """Reconstruct engine state from persisted experts and the response log.

        Entries pass through the same acceptance path as live submissions, so
        an inconsistent log fails loudly instead of materializing bad state.
        """
        for profile, token in experts:
            self.enroll_expert(
                profile.years_experience, expert_id=profile.expert_id, session_token=token
            )
        for response in responses:
            state = self._by_expert.get(response.expert_id)
            if state is None:
                raise ValidationError(
                    f"log references unenrolled expert {response.expert_id!r}"
                )
            self._accept(
                state,
                response.task_id,
                response.answer,
                response_id=response.response_id,
                answered_at=response.answered_at,
            )
        return self

    def snapshot(self) -> dict:
        """Canonical state digest used to verify replay equivalence."""
        return {
            expert_id: {
                "cursor": state.cursor,
                "status": state.status,
                "answers": [
                    [
                        r.task_id,
                        sorted(r.answer) if isinstance(r.answer, frozenset) else r.answer,
                        r.answered_at.isoformat(),
                    ]
                    for r in self._log
                    if r.expert_id == expert_id
                ],
            }
            for expert_id, state in sorted(self._by_expert.items())
        }

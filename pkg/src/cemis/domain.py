"""Protocol domain: value types, task/option catalogs, ground-truth rules.

Everything here is immutable and stateless. Option labels are the exact
wire-visible strings of the assessment protocol and must never be edited;
the UI conformance suite compares them byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional, Union

from .errors import NotFoundError, ValidationError


class Source(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


class Generator(str, Enum):
    NONE = "none"
    STYLEGANV2 = "StyleGANv2"
    CYCLEGAN = "CycleGAN"
    TSGAN = "TS-GAN"
    ENDOVAE = "EndoVAE"
    TIDE = "TIDE"
    TIDE_II = "TIDE-II"


#: Generators that actually produce images (everything but NONE), in a fixed
#: documented order used for stratification and reporting.
SYNTHETIC_GENERATORS = (
    Generator.STYLEGANV2,
    Generator.CYCLEGAN,
    Generator.TSGAN,
    Generator.ENDOVAE,
    Generator.TIDE,
    Generator.TIDE_II,
)


class Category(str, Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"


class Lesion(str, Enum):
    EROSION = "erosion"
    ERYTHEMA = "erythema"
    ULCER = "ulcer"
    OTHER = "other"


class Origin(str, Enum):
    KID = "KID"
    KVASIR = "Kvasir"


class ExperienceGroup(str, Enum):
    G1_LT10 = "G1_lt10"
    G2_10TO20 = "G2_10to20"
    G3_GT20 = "G3_gt20"


class Procedure(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    A5 = "A5"


class TaskKind(str, Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T4A = "T4a"
    T4B = "T4b"
    T5 = "T5"
    T5A = "T5a"
    T5B = "T5b"


class Question(str, Enum):
    """Binary ground-truth questions a task can be scored against."""

    REALNESS = "realness"
    ABNORMALITY = "abnormality"


class GroupingPolicy(str, Enum):
    #: A5 groups share one source and one category (enables per-category reports).
    HOMOGENEOUS_SOURCE_CATEGORY = "homogeneous_source_category"
    #: A5 groups share one source, categories mixed (30 real + 5 per generator groups).
    HOMOGENEOUS_SOURCE_MIXED = "homogeneous_source_mixed"


@dataclass(frozen=True)
class ImageRecord:
    """One catalogued image with its ground-truth metadata."""

    image_id: str
    path: str
    source: Source
    generator: Generator
    category: Category
    origin: Origin
    lesion: Optional[Lesion] = None

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        if self.source is Source.REAL and self.generator is not Generator.NONE:
            raise ValidationError(
                f"image {self.image_id!r}: real images must have generator 'none', "
                f"got {self.generator.value!r}"
            )
        if self.source is Source.SYNTHETIC and self.generator is Generator.NONE:
            raise ValidationError(
                f"image {self.image_id!r}: synthetic images must name their generator"
            )
        if self.category is Category.NORMAL and self.lesion is not None:
            raise ValidationError(
                f"image {self.image_id!r}: normal images cannot carry a lesion"
            )
        if self.category is Category.ABNORMAL and self.lesion is None:
            raise ValidationError(
                f"image {self.image_id!r}: abnormal images must carry a lesion type"
            )


def derive_experience_group(years: int) -> ExperienceGroup:
    """Map years of reviewing experience to the cohort group.

    y < 10 -> G1, 10 <= y <= 20 -> G2 (boundaries inclusive), y > 20 -> G3.
    """
    if not isinstance(years, int) or isinstance(years, bool):
        raise ValidationError(f"years must be an integer, got {years!r}")
    if years < 0:
        raise ValidationError(f"years must be non-negative, got {years}")
    if years < 10:
        return ExperienceGroup.G1_LT10
    if years <= 20:
        return ExperienceGroup.G2_10TO20
    return ExperienceGroup.G3_GT20


@dataclass(frozen=True)
class ExpertProfile:
    expert_id: str
    years_experience: int
    experience_group: ExperienceGroup = field(init=False)

    def __post_init__(self):
        if not self.expert_id:
            raise ValidationError("expert_id must be non-empty")
        object.__setattr__(
            self, "experience_group", derive_experience_group(self.years_experience)
        )


@dataclass(frozen=True)
class ProcedureCounts:
    """Per-procedure set sizes. Defaults are the reference study sizes."""

    a1: int = 50
    a2: int = 50
    a3: int = 50
    a4_pairs: int = 50
    a5_group_size: int = 10
    a5_real_total: int = 300
    a5_per_generator: int = 50

    def validate(self):
        for name, value in vars(self).items():
            if value <= 0:
                raise ValidationError(f"count {name} must be strictly positive, got {value}")
        for name in ("a1", "a2", "a3"):
            if getattr(self, name) % 2 != 0:
                raise ValidationError(
                    f"count {name} must be even for balanced sampling, got {getattr(self, name)}"
                )


@dataclass(frozen=True)
class StudyConfig:
    study_id: str
    seed: int
    counts: ProcedureCounts = field(default_factory=ProcedureCounts)
    grouping_policy: GroupingPolicy = GroupingPolicy.HOMOGENEOUS_SOURCE_CATEGORY
    #: When true, item order within each procedure is reshuffled per expert.
    shuffle_per_expert: bool = False

    def __post_init__(self):
        if not self.study_id:
            raise ValidationError("study_id must be non-empty")
        if not (0 <= self.seed < 2**64):
            raise ValidationError("seed must be a 64-bit unsigned integer")
        self.counts.validate()


# --- Task payloads ---------------------------------------------------------

@dataclass(frozen=True)
class SinglePayload:
    image_id: str


@dataclass(frozen=True)
class PairPayload:
    slot1: str
    slot2: str


@dataclass(frozen=True)
class GroupPayload:
    image_ids: tuple[str, ...]


Payload = Union[SinglePayload, PairPayload, GroupPayload]


@dataclass(frozen=True)
class TaskInstance:
    """One presentable unit of work with its exact option catalog."""

    task_id: str
    procedure: Procedure
    kind: TaskKind
    payload: Payload
    options: tuple[str, ...]
    multi_select: bool

    def __post_init__(self):
        pair_only = self.kind in (TaskKind.T4A, TaskKind.T4B, TaskKind.T5A, TaskKind.T5B)
        if pair_only and self.procedure is not Procedure.A4:
            raise ValidationError(
                f"task kind {self.kind.value} is only valid in procedure A4"
            )
        if self.procedure is Procedure.A4 and self.kind in (TaskKind.T4, TaskKind.T5):
            raise ValidationError(
                "A4 uses the per-image T4a/T4b and T5a/T5b variants"
            )
        if self.procedure is Procedure.A5:
            if self.kind not in (TaskKind.T1, TaskKind.T2):
                raise ValidationError("A5 defines only the diversity (T1) and realism (T2) tasks")
            if not isinstance(self.payload, GroupPayload):
                raise ValidationError("A5 tasks take a group payload")


AnswerValue = Union[int, frozenset]


@dataclass(frozen=True)
class Response:
    """One accepted expert answer; append-only and immutable once stored."""

    response_id: str
    study_id: str
    expert_id: str
    task_id: str
    answer: AnswerValue
    answered_at: datetime


def validate_answer(task: TaskInstance, answer) -> AnswerValue:
    """Normalize and validate an answer against the task's option catalog.

    Accepts an option index, a verbatim option label, or (for multi-select
    tasks) a collection of either. Returns the canonical form: an int for
    single-select, a frozenset of ints for multi-select.
    """

    def to_index(value) -> int:
        if isinstance(value, bool):
            raise ValidationError(f"answer {value!r} is not an option index")
        if isinstance(value, int):
            if not (0 <= value < len(task.options)):
                raise ValidationError(
                    f"option index {value} out of range for task {task.task_id} "
                    f"({len(task.options)} options)"
                )
            return value
        if isinstance(value, str):
            try:
                return task.options.index(value)
            except ValueError:
                raise ValidationError(
                    f"answer {value!r} does not match any option of task {task.task_id}"
                ) from None
        raise ValidationError(f"unsupported answer value {value!r}")

    if task.multi_select:
        if isinstance(answer, (int, str)):
            answer = [answer]  # single selection on a multi-select task
        if not isinstance(answer, (list, tuple, set, frozenset)):
            raise ValidationError("multi-select answer must be a collection of options")
        indices = frozenset(to_index(v) for v in answer)
        if not indices:
            raise ValidationError(f"multi-select answer for task {task.task_id} is empty")
        return indices
    if isinstance(answer, (list, tuple, set, frozenset)):
        raise ValidationError(
            f"task {task.task_id} is single-select; got a collection"
        )
    return to_index(answer)


# --- Ground truth ----------------------------------------------------------

def resolve_truth(image: ImageRecord, question: Question) -> bool:
    """Binary label for an image under the stated positive conventions.

    realness: real images are positive, synthetic negative.
    abnormality: abnormal images are positive, normal negative.
    """
    if question is Question.REALNESS:
        return image.source is Source.REAL
    if question is Question.ABNORMALITY:
        return image.category is Category.ABNORMAL
    raise ValidationError(f"unknown question {question!r}")


# --- Verbatim option catalogs ----------------------------------------------

_DIFFICULTY = ("Very Difficult", "Difficult", "Neutral", "Easy", "Very easy")
_NORMAL_ABNORMAL = (
    "Normal",
    "Abnormal - Erosion",
    "Abnormal - Erythema",
    "Abnormal - Ulcer",
    "Abnormal - Other",
)
_QUALITY = (
    "Very acceptable",
    "Acceptable",
    "Moderately acceptable",
    "Slightly acceptable",
    "Not Acceptable",
)
_INDIVIDUAL_REASONS = (
    "Color",
    "Texture",
    "Existence of artifacts/ luminal content",
    "Unrealistic appearance of anatomical structures",
    "Appearance of findings",
)
_PAIRED_REASONS = (
    "Color",
    "Texture",
    "Absence of artifacts",
    "Realistic anatomical structures",
    "Realistic appearance of findings",
)
_DIVERSITY = ("Very Diverse", "Diverse", "Moderately diverse", "Slightly diverse", "Not diverse")
_REALISM = (
    "Very Realistic",
    "Realistic",
    "Moderately realistic",
    "Slightly realistic",
    "Not realistic",
)

_INDIVIDUAL_CATALOG = {
    TaskKind.T1: ("Real", "Fake"),
    TaskKind.T2: _DIFFICULTY,
    TaskKind.T3: _INDIVIDUAL_REASONS,
    TaskKind.T4: _NORMAL_ABNORMAL,
    TaskKind.T5: _QUALITY,
}

_PAIRED_CATALOG = {
    TaskKind.T1: ("Image 1", "Image 2"),
    TaskKind.T2: _DIFFICULTY,
    TaskKind.T3: _PAIRED_REASONS,
    TaskKind.T4A: _NORMAL_ABNORMAL,
    TaskKind.T4B: _NORMAL_ABNORMAL,
    TaskKind.T5A: _QUALITY,
    TaskKind.T5B: _QUALITY,
}

_GROUP_CATALOG = {
    TaskKind.T1: _DIVERSITY,
    TaskKind.T2: _REALISM,
}

_CATALOGS: dict[Procedure, dict[TaskKind, tuple[str, ...]]] = {
    Procedure.A1: _INDIVIDUAL_CATALOG,
    Procedure.A2: _INDIVIDUAL_CATALOG,
    Procedure.A3: _INDIVIDUAL_CATALOG,
    Procedure.A4: _PAIRED_CATALOG,
    Procedure.A5: _GROUP_CATALOG,
}

#: Task prompts shown to experts, verbatim.
_INDIVIDUAL_PROMPTS = {
    TaskKind.T1: "The image presented is:",
    TaskKind.T2: "Difficulty rate for this decision:",
    TaskKind.T3: "Reason(s) behind this decision:",
    TaskKind.T4: "Characterize the presented image as normal or abnormal:",
    TaskKind.T5: "Evaluate the quality of this image:",
}
_PAIRED_PROMPTS = {
    TaskKind.T1: "Indicate which is the real image:",
    TaskKind.T2: "Difficulty rate for this decision:",
    TaskKind.T3: "Reason(s) behind this decision:",
    TaskKind.T4A: "Characterize Image-1 as normal or abnormal:",
    TaskKind.T4B: "Characterize Image-2 as normal or abnormal:",
    TaskKind.T5A: "Evaluate the quality of Image-1:",
    TaskKind.T5B: "Evaluate the quality of Image-2:",
}
_GROUP_PROMPTS = {
    TaskKind.T1: "Characterize the diversity of this collection:",
    TaskKind.T2: "Characterize the realism of this collection:",
}
_PROMPTS: dict[Procedure, dict[TaskKind, str]] = {
    Procedure.A1: _INDIVIDUAL_PROMPTS,
    Procedure.A2: _INDIVIDUAL_PROMPTS,
    Procedure.A3: _INDIVIDUAL_PROMPTS,
    Procedure.A4: _PAIRED_PROMPTS,
    Procedure.A5: _GROUP_PROMPTS,
}

#: Disclosed to experts at the start of the paired procedure; the only
#: source/type information any task may carry.
A4_FRAMING = (
    "Each pair consists of one real and one synthetic image, presented side "
    "by side in randomized positions."
)

#: Reason tasks are the only multi-select tasks.
MULTI_SELECT_KINDS = frozenset({TaskKind.T3})

#: Task order within one item of each procedure.
TASK_ORDER: dict[Procedure, tuple[TaskKind, ...]] = {
    Procedure.A1: (TaskKind.T1, TaskKind.T2, TaskKind.T3, TaskKind.T4, TaskKind.T5),
    Procedure.A2: (TaskKind.T1, TaskKind.T2, TaskKind.T3, TaskKind.T4, TaskKind.T5),
    Procedure.A3: (TaskKind.T1, TaskKind.T2, TaskKind.T3, TaskKind.T4, TaskKind.T5),
    Procedure.A4: (
        TaskKind.T1,
        TaskKind.T2,
        TaskKind.T3,
        TaskKind.T4A,
        TaskKind.T4B,
        TaskKind.T5A,
        TaskKind.T5B,
    ),
    Procedure.A5: (TaskKind.T1, TaskKind.T2),
}

PROCEDURE_ORDER = (Procedure.A1, Procedure.A2, Procedure.A3, Procedure.A4, Procedure.A5)


def option_catalog(procedure: Procedure, kind: TaskKind) -> tuple[str, ...]:
    """The verbatim, ordered option strings for a (procedure, kind) pair."""
    try:
        return _CATALOGS[procedure][kind]
    except KeyError:
        raise NotFoundError(
            f"no option catalog for procedure {procedure.value}, task {kind.value}"
        ) from None


def task_prompt(procedure: Procedure, kind: TaskKind) -> str:
    """The verbatim prompt text for a (procedure, kind) pair."""
    try:
        return _PROMPTS[procedure][kind]
    except KeyError:
        raise NotFoundError(
            f"no prompt for procedure {procedure.value}, task {kind.value}"
        ) from None


def is_multi_select(kind: TaskKind) -> bool:
    return kind in MULTI_SELECT_KINDS

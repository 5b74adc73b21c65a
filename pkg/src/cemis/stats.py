"""Numeric core: confusion metrics, pooled proportion intervals, exact tests,
Likert/reason aggregations and cohort breakdowns.

Everything is a pure function of the response log plus the frozen study;
recomputing after a log replay is bit-identical. Values are kept at full
precision here; presentation rounding (2 decimals, half away from zero)
happens in the reporting layer via :func:`round2`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence

from scipy.special import gammaincc, ndtri

from .domain import (
    ExperienceGroup,
    ExpertProfile,
    Procedure,
    Question,
    Response,
    Source,
    TaskInstance,
    TaskKind,
    resolve_truth,
)
from .errors import UnsupportedError, ValidationError

#: Two-sided 95% normal quantile, pinned so reported intervals are stable.
Z_95 = 1.959964


class Sidedness(str, Enum):
    TWO_SIDED = "two_sided"
    ONE_SIDED_LOWER = "one_sided_lower"


def round2(value: float) -> float:
    """Round to 2 decimals, ties away from zero (report convention)."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


# --- Confusion counts and derived metrics -----------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, truth: bool, predicted: bool) -> "ConfusionCounts":
        if truth and predicted:
            return ConfusionCounts(self.tp + 1, self.fp, self.tn, self.fn)
        if truth and not predicted:
            return ConfusionCounts(self.tp, self.fp, self.tn, self.fn + 1)
        if not truth and predicted:
            return ConfusionCounts(self.tp, self.fp + 1, self.tn, self.fn)
        return ConfusionCounts(self.tp, self.fp, self.tn + 1, self.fn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    sensitivity: Optional[float]
    specificity: Optional[float]


def metrics(cc: ConfusionCounts) -> Metrics:
    """Accuracy, sensitivity and specificity; degenerate denominators give None."""
    if cc.total < 1:
        raise ValidationError("confusion counts are empty")
    accuracy = (cc.tp + cc.tn) / cc.total
    sensitivity = cc.tp / (cc.tp + cc.fn) if (cc.tp + cc.fn) > 0 else None
    specificity = cc.tn / (cc.tn + cc.fp) if (cc.tn + cc.fp) > 0 else None
    return Metrics(accuracy, sensitivity, specificity)


@dataclass(frozen=True)
class ConfusionTally:
    per_expert: dict
    #: responses skipped because no binary truth applied to their task
    excluded: int


def confusion_from_log(
    rows: Iterable[tuple[Response, TaskInstance]],
    truth_of: Callable[[Response, TaskInstance], Optional[bool]],
    predicted_positive_of: Callable[[Response, TaskInstance], Optional[bool]],
) -> ConfusionTally:
    """Tally per-expert confusion counts under the caller's positive convention.

    Rows whose truth or prediction resolves to None are excluded and counted.
    """
    per_expert: dict[str, ConfusionCounts] = {}
    excluded = 0
    for response, task in rows:
        truth = truth_of(response, task)
        predicted = predicted_positive_of(response, task)
        if truth is None or predicted is None:
            excluded += 1
            continue
        current = per_expert.get(response.expert_id, ConfusionCounts())
        per_expert[response.expert_id] = current.add(truth, predicted)
    return ConfusionTally(per_expert=per_expert, excluded=excluded)


@dataclass(frozen=True)
class MetricSummary:
    per_expert: dict
    #: None only for an empty group row in a breakdown
    mean: Optional[float]
    #: sample standard deviation (divisor n-1); None when n < 2
    std: Optional[float]


def summarize_across_experts(values: Mapping[str, float]) -> MetricSummary:
    """Mean and sample standard deviation of a per-expert metric."""
    if not values:
        raise ValidationError("at least one expert value is required")
    xs = list(values.values())
    n = len(xs)
    mean = sum(xs) / n
    std = math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1)) if n >= 2 else None
    return MetricSummary(per_expert=dict(values), mean=mean, std=std)


# --- Pooled proportion interval ---------------------------------------------

@dataclass(frozen=True)
class ProportionCI:
    p_hat: float
    n: int
    level: float
    lower: float
    upper: float


def _z_for(level: float) -> float:
    if not (0 < level < 1):
        raise ValidationError(f"confidence level must be in (0, 1), got {level}")
    if level == 0.95:
        return Z_95
    return float(ndtri((1 + level) / 2))


def wald_ci(k: float, n: int, level: float = 0.95) -> ProportionCI:
    """Wald normal-approximation interval on a pooled proportion.

    ``k`` may be fractional when reconstructed from a rounded rate. Bounds are
    clipped to [0, 1]; at p_hat in {0, 1} the interval degenerates to a point
    (known limitation of the Wald construction).
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not (0 <= k <= n):
        raise ValidationError(f"k must be within [0, {n}], got {k}")
    return wald_ci_from_rate(k / n, n, level)


def wald_ci_from_rate(p_hat: float, n: int, level: float = 0.95) -> ProportionCI:
    """Wald interval given the proportion directly."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not (0 <= p_hat <= 1):
        raise ValidationError(f"p_hat must be within [0, 1], got {p_hat}")
    z = _z_for(level)
    half = z * math.sqrt(p_hat * (1 - p_hat) / n)
    return ProportionCI(
        p_hat=p_hat,
        n=n,
        level=level,
        lower=max(0.0, p_hat - half),
        upper=min(1.0, p_hat + half),
    )


# --- Exact binomial test -----------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    sidedness: Sidedness
    df: Optional[int] = None


def _logsumexp_sorted(log_terms: list[float]) -> float:
    """logsumexp with addends sorted ascending, so equal multisets of terms
    always sum to the identical float (needed for the exact symmetry
    binom_test(k) == binom_test(n-k) at p0 = 0.5)."""
    if not log_terms:
        return -math.inf
    terms = sorted(log_terms)
    peak = terms[-1]
    if peak == -math.inf:
        return -math.inf
    return peak + math.log(sum(math.exp(t - peak) for t in terms))


def _binom_logpmf_table(n: int, p0: float) -> list[float]:
    log_p = math.log(p0)
    log_q = log_p if p0 == 0.5 else math.log1p(-p0)
    lgn = math.lgamma(n + 1)
    return [
        lgn - math.lgamma(i + 1) - math.lgamma(n - i + 1) + i * log_p + (n - i) * log_q
        for i in range(n + 1)
    ]


def binom_test(
    k: int, n: int, p0: float = 0.5, sidedness: Sidedness = Sidedness.TWO_SIDED
) -> TestResult:
    """Exact binomial test by log-space summation of Binomial(n, p0) masses.

    one_sided_lower is P(X <= k). The two-sided p-value follows the
    minimum-likelihood convention: the sum of P(X = i) over every outcome i
    no more probable than the observed k (with a 1e-7 relative slack against
    floating-point ties), capped at 1.
    """
    if not isinstance(k, int) or not isinstance(n, int):
        raise ValidationError("k and n must be integers")
    if n < 1 or not (0 <= k <= n):
        raise ValidationError(f"require 0 <= k <= n with n >= 1, got k={k} n={n}")
    if not (0 < p0 < 1):
        raise ValidationError(f"p0 must be in (0, 1), got {p0}")
    sidedness = Sidedness(sidedness)

    table = _binom_logpmf_table(n, p0)
    if sidedness is Sidedness.ONE_SIDED_LOWER:
        addends = table[: k + 1]
    else:
        threshold = table[k] + 1e-7
        addends = [lp for lp in table if lp <= threshold]
    if len(addends) == n + 1:
        p_value = 1.0  # the whole support is included; total mass is exactly 1
    else:
        p_value = min(1.0, math.exp(_logsumexp_sorted(addends)))
    return TestResult(statistic=float(k), p_value=p_value, sidedness=sidedness)


# --- Chi-square goodness of fit ----------------------------------------------

def chi2_gof(observed: Sequence[float], expected: Sequence[float]) -> TestResult:
    """Pearson goodness-of-fit statistic with the exact upper-tail p-value
    computed from the regularized upper incomplete gamma function."""
    if len(observed) != len(expected):
        raise ValidationError("observed and expected must have the same length")
    if len(observed) < 2:
        raise ValidationError("at least two cells are required")
    if any(e <= 0 for e in expected):
        raise ValidationError("expected counts must all be strictly positive")
    if any(o < 0 for o in observed):
        raise ValidationError("observed counts must be non-negative")
    if abs(sum(observed) - sum(expected)) > 1e-9:
        raise ValidationError(
            f"observed sum {sum(observed)} != expected sum {sum(expected)}"
        )
    statistic = sum((o - e) ** 2 / e for o, e in zip(observed, expected))
    df = len(observed) - 1
    p_value = float(gammaincc(df / 2, statistic / 2))
    return TestResult(
        statistic=statistic,
        p_value=min(1.0, max(0.0, p_value)),
        sidedness=Sidedness.TWO_SIDED,
        df=df,
    )


def chance_expected(total: int, cells: int = 2) -> list[float]:
    """Expected counts under the chance-level null (equal mass per cell)."""
    if total <= 0 or cells < 2:
        raise ValidationError("need a positive total over at least two cells")
    return [total / cells] * cells


# --- Likert aggregation -------------------------------------------------------

@dataclass(frozen=True)
class LikertDistribution:
    options: tuple[str, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def percentages(self) -> Optional[tuple[float, ...]]:
        total = self.total
        if total == 0:
            return None
        return tuple(100.0 * c / total for c in self.counts)


def likert_aggregate(
    rows: Iterable[tuple[Response, TaskInstance]],
    group_of: Optional[Callable[[Response, TaskInstance], Hashable]] = None,
) -> dict:
    """Count 5-point single-select answers, optionally per group.

    All rows must share one option catalog; mixing catalogs is an error.
    Returns {group_key: LikertDistribution}; the ungrouped result lives under
    the key None.
    """
    options: Optional[tuple[str, ...]] = None
    tallies: dict[Hashable, list[int]] = {}
    for response, task in rows:
        if task.multi_select or len(task.options) != 5:
            raise ValidationError(
                f"task {task.task_id} is not a 5-point single-select task"
            )
        if options is None:
            options = task.options
        elif task.options != options:
            raise ValidationError(
                f"mixed option catalogs: {task.options} vs {options}"
            )
        key = group_of(response, task) if group_of else None
        bucket = tallies.setdefault(key, [0] * 5)
        bucket[response.answer] += 1
    if options is None:
        return {}
    return {
        key: LikertDistribution(options=options, counts=tuple(counts))
        for key, counts in tallies.items()
    }


# --- Reason crosstab ----------------------------------------------------------

@dataclass(frozen=True)
class ReasonCrosstab:
    options: tuple[str, ...]
    #: condition ("all" | "correct" | "incorrect") -> number of responses
    n_by_condition: dict
    #: condition -> per-reason selection rate in [0,1], or None when the
    #: condition holds no responses
    rates: dict
    excluded: int


def reason_crosstab(
    rows: Iterable[tuple[Response, TaskInstance]],
    correct_of: Callable[[Response, TaskInstance], Optional[bool]],
) -> ReasonCrosstab:
    """Selection rate of each reason overall and conditioned on the
    correctness of the companion decision task.

    A multi-select response contributes to every reason it selected; rows
    whose companion correctness cannot be resolved are excluded and counted.
    """
    options: Optional[tuple[str, ...]] = None
    counts = {"all": None, "correct": None, "incorrect": None}
    totals = {"all": 0, "correct": 0, "incorrect": 0}
    excluded = 0
    for response, task in rows:
        if not task.multi_select:
            raise ValidationError(f"task {task.task_id} is not a reason (multi-select) task")
        if options is None:
            options = task.options
            for key in counts:
                counts[key] = [0] * len(options)
        elif task.options != options:
            raise ValidationError(f"mixed option catalogs: {task.options} vs {options}")
        correct = correct_of(response, task)
        if correct is None:
            excluded += 1
            continue
        conditions = ("all", "correct" if correct else "incorrect")
        for condition in conditions:
            totals[condition] += 1
            for index in response.answer:
                counts[condition][index] += 1
    if options is None:
        return ReasonCrosstab(options=(), n_by_condition=dict(totals), rates={}, excluded=excluded)
    rates = {}
    for condition, total in totals.items():
        if total == 0:
            rates[condition] = None
        else:
            rates[condition] = tuple(c / total for c in counts[condition])
    return ReasonCrosstab(
        options=options, n_by_condition=dict(totals), rates=rates, excluded=excluded
    )


# --- Experience-group breakdown ------------------------------------------------

def experience_breakdown(
    per_expert_values: Mapping[str, float], profiles: Mapping[str, ExpertProfile]
) -> dict:
    """Mean +/- sample std of a per-expert metric within each experience group.

    Every group is present in the output; empty groups carry None values and
    singleton groups carry std None.
    """
    for expert_id in per_expert_values:
        if expert_id not in profiles:
            raise ValidationError(f"no profile for expert {expert_id!r}")
    out = {}
    for group in ExperienceGroup:
        values = {
            expert_id: value
            for expert_id, value in per_expert_values.items()
            if profiles[expert_id].experience_group is group
        }
        if not values:
            out[group] = MetricSummary(per_expert={}, mean=None, std=None)
        else:
            out[group] = summarize_across_experts(values)
    return out


# --- Study-aware resolvers and scores ------------------------------------------

def realness_rows(study, responses: Iterable[Response], procedures=None):
    """(response, task) rows for the single-image real/synthetic decisions."""
    individual = {Procedure.A1, Procedure.A2, Procedure.A3}
    allowed = individual if procedures is None else individual & set(procedures)
    for response in responses:
        task = study.task(response.task_id)
        if task.procedure in allowed and task.kind is TaskKind.T1:
            yield response, task


def abnormality_rows(study, responses: Iterable[Response], image_filter=None, procedures=None):
    """(response, task) rows for normal/abnormal decisions, optionally keeping
    only rows whose judged image passes ``image_filter``."""
    for response in responses:
        task = study.task(response.task_id)
        if task.kind not in (TaskKind.T4, TaskKind.T4A, TaskKind.T4B):
            continue
        if procedures is not None and task.procedure not in procedures:
            continue
        image = study.judged_image(task)
        if image_filter is None or image_filter(image):
            yield response, task


def realness_truth(study):
    def truth_of(response: Response, task: TaskInstance):
        image = study.judged_image(task)
        return resolve_truth(image, Question.REALNESS)

    return truth_of


def realness_prediction(response: Response, task: TaskInstance):
    return response.answer == 0  # option 0 is the verbatim "Real"


def abnormality_truth(study):
    def truth_of(response: Response, task: TaskInstance):
        image = study.judged_image(task)
        return resolve_truth(image, Question.ABNORMALITY)

    return truth_of


def abnormality_prediction(response: Response, task: TaskInstance):
    return response.answer != 0  # options 1..4 are the abnormal subtypes


def realness_confusion(study, responses: Iterable[Response], procedures=None) -> ConfusionTally:
    """Per-expert confusion for A1-A3 T1 under real-positive convention."""
    return confusion_from_log(
        realness_rows(study, responses, procedures),
        realness_truth(study),
        lambda r, t: realness_prediction(r, t),
    )


def abnormality_confusion(
    study, responses: Iterable[Response], image_filter=None, procedures=None
) -> ConfusionTally:
    """Per-expert confusion for T4/T4a/T4b under abnormal-positive convention."""
    return confusion_from_log(
        abnormality_rows(study, responses, image_filter, procedures),
        abnormality_truth(study),
        lambda r, t: abnormality_prediction(r, t),
    )


def pair_pick_accuracy(study, responses: Iterable[Response]) -> dict:
    """Per-expert fraction of A4 pairs whose real image was identified."""
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    for response in responses:
        task = study.task(response.task_id)
        if task.procedure is not Procedure.A4 or task.kind is not TaskKind.T1:
            continue
        chosen_id = task.payload.slot1 if response.answer == 0 else task.payload.slot2
        hit = study.image(chosen_id).source is Source.REAL
        total[response.expert_id] = total.get(response.expert_id, 0) + 1
        correct[response.expert_id] = correct.get(response.expert_id, 0) + int(hit)
    return {
        expert_id: correct.get(expert_id, 0) / n for expert_id, n in total.items()
    }


def pair_pick_correct(study):
    """Correctness resolver for an A4 T1 response (used by reason crosstabs)."""

    def correct_of(response: Response, task: TaskInstance):
        chosen_id = task.payload.slot1 if response.answer == 0 else task.payload.slot2
        return study.image(chosen_id).source is Source.REAL

    return correct_of


def companion_t1_correct(study, responses: Iterable[Response]):
    """Resolver mapping any response to the correctness of its item's T1.

    For A1-A3 the companion is the realness call on the same image; for A4 it
    is the real-image pick on the same pair. Returns None when the companion
    response is absent.
    """
    t1_correct: dict[tuple[str, str], bool] = {}
    for response in responses:
        task = study.task(response.task_id)
        if task.kind is not TaskKind.T1 or task.procedure is Procedure.A5:
            continue
        if task.procedure is Procedure.A4:
            chosen_id = task.payload.slot1 if response.answer == 0 else task.payload.slot2
            hit = study.image(chosen_id).source is Source.REAL
        else:
            truth_positive = resolve_truth(study.judged_image(task), Question.REALNESS)
            hit = (response.answer == 0) == truth_positive
        t1_correct[(response.expert_id, study.item_key(task))] = hit

    def correct_of(response: Response, task: TaskInstance):
        return t1_correct.get((response.expert_id, study.item_key(task)))

    return correct_of


# --- A5 model comparison --------------------------------------------------------

@dataclass(frozen=True)
class ModelComparison:
    #: (source, category) -> {"diversity": LikertDistribution, "realism": ...};
    #: category is None for rows aggregated over categories
    distributions: dict
    #: source names ranked by top-2-box realism rate, best first
    ranking: tuple


def model_comparison(study, responses: Iterable[Response], split_category: bool = False) -> ModelComparison:
    """Per-source (real plus each generator) Likert distributions of the A5
    diversity and realism ratings, ranked by top-2-box realism."""
    if split_category and not study.groups_are_category_homogeneous():
        raise UnsupportedError(
            "per-category comparison requires the homogeneous_source_category "
            "grouping policy"
        )
    questions = {TaskKind.T1: "diversity", TaskKind.T2: "realism"}
    rows = {TaskKind.T1: [], TaskKind.T2: []}
    for response in responses:
        task = study.task(response.task_id)
        if task.procedure is Procedure.A5:
            rows[task.kind].append((response, task))

    distributions: dict = {}
    for kind, name in questions.items():
        def group_of(response, task):
            label = study.group_label(task)
            return (label.source, label.category if split_category else None)

        for key, dist in likert_aggregate(rows[kind], group_of).items():
            distributions.setdefault(key, {})[name] = dist

    def top2(source_key) -> float:
        entry = distributions.get(source_key, {}).get("realism")
        if entry is None or entry.total == 0:
            return -1.0
        return (entry.counts[0] + entry.counts[1]) / entry.total

    if split_category:
        sources = sorted({key[0] for key in distributions})
        totals = {}
        for source in sources:
            merged = [0] * 5
            n = 0
            for (src, _cat), qs in distributions.items():
                if src == source and "realism" in qs:
                    merged = [a + b for a, b in zip(merged, qs["realism"].counts)]
                    n += qs["realism"].total
            totals[source] = (merged[0] + merged[1]) / n if n else -1.0
        ranking = tuple(sorted(sources, key=lambda s: totals[s], reverse=True))
    else:
        ranking = tuple(
            source
            for source, _ in sorted(
                ((key[0], top2(key)) for key in distributions),
                key=lambda pair: pair[1],
                reverse=True,
            )
        )
    return ModelComparison(distributions=distributions, ranking=ranking)

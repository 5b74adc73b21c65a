"""Machine-readable exports of the study's summary tables.

Reports are emitted as data tables (delimited text or structured records),
not rendered plots. Every number is recomputed from the response log on each
render; percentages are rounded to 2 decimals half-away-from-zero and
not-applicable cells are exported as "NA".
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Optional

from .domain import (
    ExpertProfile,
    Origin,
    Procedure,
    Response,
    Source,
    TaskKind,
)
from .errors import EmptyReportError, ValidationError
from .stats import (
    abnormality_confusion,
    companion_t1_correct,
    likert_aggregate,
    metrics,
    model_comparison,
    pair_pick_accuracy,
    realness_confusion,
    reason_crosstab,
    round2,
    summarize_across_experts,
)


class ReportKind(str, Enum):
    TABLE1 = "table1"
    TABLE2 = "table2"
    FIG1 = "fig1"
    DIFFICULTY = "difficulty"
    REASONS = "reasons"
    QUALITY = "quality"
    REALISM_DIVERSITY = "realism_diversity"
    MODEL_COMPARISON = "model_comparison"


class ExportFormat(str, Enum):
    DELIMITED_TABLE = "delimited-table"
    STRUCTURED_RECORD = "structured-record"


_FORMAT_ALIASES = {
    "csv": ExportFormat.DELIMITED_TABLE,
    "delimited-table": ExportFormat.DELIMITED_TABLE,
    "json": ExportFormat.STRUCTURED_RECORD,
    "structured-record": ExportFormat.STRUCTURED_RECORD,
}

SCHEMAS: dict[ReportKind, tuple[str, ...]] = {
    ReportKind.TABLE1: (
        "procedure",
        "accuracy_mean", "accuracy_std",
        "sensitivity_mean", "sensitivity_std",
        "specificity_mean", "specificity_std",
    ),
    ReportKind.TABLE2: (
        "procedure", "image_type", "origin",
        "accuracy_mean", "accuracy_std",
        "sensitivity_mean", "sensitivity_std",
        "specificity_mean", "specificity_std",
    ),
    ReportKind.FIG1: ("expert_id", "years", "group", "procedure", "accuracy"),
    ReportKind.DIFFICULTY: (
        "procedure", "image_type", "experience_group", "option_label", "count", "percentage",
    ),
    ReportKind.REASONS: ("procedure", "condition", "option_label", "percentage", "n"),
    ReportKind.QUALITY: (
        "procedure", "image_type", "experience_group", "option_label", "count", "percentage",
    ),
    ReportKind.REALISM_DIVERSITY: ("source", "question", "option_label", "count", "percentage"),
    ReportKind.MODEL_COMPARISON: ("source", "category", "question", "option_label", "percentage"),
}


@dataclass(frozen=True)
class ReportEnvelope:
    study_id: str
    kind: ReportKind
    generated_at: datetime
    columns: tuple[str, ...]
    rows: list
    footnotes: list = field(default_factory=list)


def _pct(value: Optional[float]) -> Optional[float]:
    """Proportion -> percentage at 2 decimals; None stays not-applicable."""
    if value is None:
        return None
    return round2(100.0 * value)


def _summary_triplet(per_expert_metrics: dict) -> dict:
    """Columns for acc/sens/spec mean +/- std over per-expert Metrics."""
    out = {}
    for name in ("accuracy", "sensitivity", "specificity"):
        values = {
            expert: getattr(m, name)
            for expert, m in per_expert_metrics.items()
            if getattr(m, name) is not None
        }
        if values:
            summary = summarize_across_experts(values)
            out[f"{name}_mean"] = _pct(summary.mean)
            out[f"{name}_std"] = _pct(summary.std) if summary.std is not None else None
        else:
            out[f"{name}_mean"] = None
            out[f"{name}_std"] = None
    return out


def _na_triplet() -> dict:
    return {
        "accuracy_mean": None, "accuracy_std": None,
        "sensitivity_mean": None, "sensitivity_std": None,
        "specificity_mean": None, "specificity_std": None,
    }


def _per_expert_metrics(tally) -> dict:
    return {expert: metrics(cc) for expert, cc in tally.per_expert.items()}


def render(
    kind: ReportKind | str,
    study,
    responses: Iterable[Response],
    profiles: dict[str, ExpertProfile],
    generated_at: Optional[datetime] = None,
) -> ReportEnvelope:
    """Build one report over a frozen snapshot of the response log."""
    kind = ReportKind(kind)
    responses = list(responses)
    if not responses:
        raise EmptyReportError(f"study {study.study_id!r} has no responses to report on")
    builder = _BUILDERS[kind]
    rows, footnotes = builder(study, responses, profiles)
    return ReportEnvelope(
        study_id=study.study_id,
        kind=kind,
        generated_at=generated_at or datetime.now(timezone.utc),
        columns=SCHEMAS[kind],
        rows=rows,
        footnotes=footnotes,
    )


# --- builders -----------------------------------------------------------------

def _build_table1(study, responses, profiles):
    rows = []
    footnotes = []
    for procedure in (Procedure.A1, Procedure.A2, Procedure.A3):
        tally = realness_confusion(study, responses, procedures=(procedure,))
        if tally.per_expert:
            triplet = _summary_triplet(_per_expert_metrics(tally))
        else:
            triplet = _na_triplet()
        if procedure is not Procedure.A1:
            # single-class image sets: sensitivity/specificity not estimable
            triplet.update(
                sensitivity_mean=None, sensitivity_std=None,
                specificity_mean=None, specificity_std=None,
            )
        rows.append({"procedure": procedure.value, **triplet})
    per_expert_pairs = pair_pick_accuracy(study, responses)
    triplet = _na_triplet()
    if per_expert_pairs:
        summary = summarize_across_experts(per_expert_pairs)
        triplet["accuracy_mean"] = _pct(summary.mean)
        triplet["accuracy_std"] = _pct(summary.std) if summary.std is not None else None
    rows.append({"procedure": Procedure.A4.value, **triplet})
    footnotes.append(
        "sensitivity/specificity reported only for the mixed-set procedure; "
        "single-class sets leave them not estimable"
    )
    return rows, footnotes


_TABLE2_LAYOUT = {
    Procedure.A1: [("real", None), ("synthetic", None), ("total", None)],
    Procedure.A2: [
        ("real", None),
        ("synthetic", Origin.KID), ("synthetic", Origin.KVASIR),
        ("total", None),
    ],
    Procedure.A3: [
        ("real", Origin.KID), ("real", Origin.KVASIR),
        ("synthetic", None),
        ("total", None),
    ],
    Procedure.A4: [
        ("real", None), ("real", Origin.KID), ("real", Origin.KVASIR),
        ("synthetic", None), ("synthetic", Origin.KID), ("synthetic", Origin.KVASIR),
    ],
}


def _build_table2(study, responses, profiles):
    rows = []
    excluded_total = 0
    for procedure, layout in _TABLE2_LAYOUT.items():
        for image_type, origin in layout:
            def keep(image, image_type=image_type, origin=origin):
                if image_type == "real" and image.source is not Source.REAL:
                    return False
                if image_type == "synthetic" and image.source is not Source.SYNTHETIC:
                    return False
                if origin is not None and image.origin is not origin:
                    return False
                return True

            tally = abnormality_confusion(
                study, responses, image_filter=keep, procedures=(procedure,)
            )
            excluded_total += tally.excluded
            triplet = (
                _summary_triplet(_per_expert_metrics(tally))
                if tally.per_expert
                else _na_triplet()
            )
            rows.append(
                {
                    "procedure": procedure.value,
                    "image_type": image_type,
                    "origin": origin.value if origin else "all",
                    **triplet,
                }
            )
    footnotes = []
    if excluded_total:
        footnotes.append(f"{excluded_total} responses lacked a resolvable binary truth")
    return rows, footnotes


def _build_fig1(study, responses, profiles):
    per_procedure: dict[Procedure, dict[str, float]] = {}
    for procedure in (Procedure.A1, Procedure.A2, Procedure.A3):
        tally = realness_confusion(study, responses, procedures=(procedure,))
        per_procedure[procedure] = {
            expert: metrics(cc).accuracy for expert, cc in tally.per_expert.items()
        }
    per_procedure[Procedure.A4] = pair_pick_accuracy(study, responses)

    ordered = sorted(profiles.values(), key=lambda p: (p.years_experience, p.expert_id))
    rows = []
    for profile in ordered:
        for procedure in (Procedure.A1, Procedure.A2, Procedure.A3, Procedure.A4):
            accuracy = per_procedure[procedure].get(profile.expert_id)
            rows.append(
                {
                    "expert_id": profile.expert_id,
                    "years": profile.years_experience,
                    "group": profile.experience_group.value,
                    "procedure": procedure.value,
                    "accuracy": _pct(accuracy),
                }
            )
    return rows, []


def _image_type_for_likert(study, task) -> str:
    if task.procedure is Procedure.A4 and task.kind in (TaskKind.T2, TaskKind.T3):
        return "pair"
    image = study.judged_image(task)
    return image.source.value


def _build_likert_report(study, responses, profiles, kinds):
    """Shared shape of the difficulty and quality reports."""
    rows = []
    collected = []
    for response in responses:
        task = study.task(response.task_id)
        if task.procedure is Procedure.A5:
            continue
        if task.kind in kinds:
            collected.append((response, task))
    if not collected:
        raise EmptyReportError("no matching responses for this report")

    def group_of(response, task):
        image_type = _image_type_for_likert(study, task)
        group = profiles[response.expert_id].experience_group.value
        return (task.procedure.value, image_type, group)

    grouped = likert_aggregate(collected, group_of)
    rollup = likert_aggregate(
        collected,
        lambda r, t: group_of(r, t)[:2] + ("all",),
    )
    merged = {**grouped, **rollup}
    for key in sorted(merged):
        procedure, image_type, group = key
        dist = merged[key]
        percentages = dist.percentages
        for index, label in enumerate(dist.options):
            rows.append(
                {
                    "procedure": procedure,
                    "image_type": image_type,
                    "experience_group": group,
                    "option_label": label,
                    "count": dist.counts[index],
                    "percentage": _pct(percentages[index] / 100.0) if percentages else None,
                }
            )
    return rows, []


def _build_difficulty(study, responses, profiles):
    return _build_likert_report(study, responses, profiles, (TaskKind.T2,))


def _build_quality(study, responses, profiles):
    return _build_likert_report(
        study, responses, profiles, (TaskKind.T5, TaskKind.T5A, TaskKind.T5B)
    )


def _build_reasons(study, responses, profiles):
    rows = []
    correct_of = companion_t1_correct(study, responses)
    for procedure in (Procedure.A1, Procedure.A2, Procedure.A3, Procedure.A4):
        collected = []
        for response in responses:
            task = study.task(response.task_id)
            if task.procedure is procedure and task.kind is TaskKind.T3:
                collected.append((response, task))
        if not collected:
            continue
        table = reason_crosstab(collected, correct_of)
        for condition in ("all", "correct", "incorrect"):
            rates = table.rates.get(condition)
            for index, label in enumerate(table.options):
                rows.append(
                    {
                        "procedure": procedure.value,
                        "condition": condition,
                        "option_label": label,
                        "percentage": _pct(rates[index]) if rates is not None else None,
                        "n": table.n_by_condition[condition],
                    }
                )
    if not rows:
        raise EmptyReportError("no reason responses recorded yet")
    return rows, []


def _build_realism_diversity(study, responses, profiles):
    comparison = model_comparison(study, responses, split_category=False)
    rows = []
    for source in comparison.ranking:
        questions = comparison.distributions.get((source, None), {})
        for question in ("realism", "diversity"):
            dist = questions.get(question)
            if dist is None:
                continue
            percentages = dist.percentages
            for index, label in enumerate(dist.options):
                rows.append(
                    {
                        "source": source,
                        "question": question,
                        "option_label": label,
                        "count": dist.counts[index],
                        "percentage": _pct(percentages[index] / 100.0) if percentages else None,
                    }
                )
    if not rows:
        raise EmptyReportError("no group-assessment responses recorded yet")
    return rows, [f"sources ranked by top-2-box realism: {', '.join(comparison.ranking)}"]


def _build_model_comparison(study, responses, profiles):
    split = study.groups_are_category_homogeneous()
    comparison = model_comparison(study, responses, split_category=split)
    rows = []
    keys = sorted(
        comparison.distributions,
        key=lambda key: (comparison.ranking.index(key[0]), key[1] or ""),
    )
    for source, category in keys:
        for question in ("realism", "diversity"):
            dist = comparison.distributions[(source, category)].get(question)
            if dist is None:
                continue
            percentages = dist.percentages
            for index, label in enumerate(dist.options):
                rows.append(
                    {
                        "source": source,
                        "category": category if category else "all",
                        "question": question,
                        "option_label": label,
                        "percentage": _pct(percentages[index] / 100.0) if percentages else None,
                    }
                )
    if not rows:
        raise EmptyReportError("no group-assessment responses recorded yet")
    footnotes = [f"sources ranked by top-2-box realism: {', '.join(comparison.ranking)}"]
    if not split:
        footnotes.append("grouping policy mixes categories; per-category split unavailable")
    return rows, footnotes


_BUILDERS = {
    ReportKind.TABLE1: _build_table1,
    ReportKind.TABLE2: _build_table2,
    ReportKind.FIG1: _build_fig1,
    ReportKind.DIFFICULTY: _build_difficulty,
    ReportKind.REASONS: _build_reasons,
    ReportKind.QUALITY: _build_quality,
    ReportKind.REALISM_DIVERSITY: _build_realism_diversity,
    ReportKind.MODEL_COMPARISON: _build_model_comparison,
}


# --- export ---------------------------------------------------------------------

def _cell_text(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _cell_json(value):
    if value is None:
        return "NA"
    return value


def export(envelope: ReportEnvelope, fmt: ExportFormat | str) -> bytes:
    """Serialize an envelope; identical envelopes yield identical bytes."""
    try:
        fmt = _FORMAT_ALIASES[fmt] if isinstance(fmt, str) else ExportFormat(fmt)
    except (KeyError, ValueError):
        raise ValidationError(
            f"unsupported export format {fmt!r}; expected one of {sorted(_FORMAT_ALIASES)}"
        ) from None
    if fmt is ExportFormat.DELIMITED_TABLE:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(envelope.columns)
        for row in envelope.rows:
            writer.writerow([_cell_text(row.get(column)) for column in envelope.columns])
        return buffer.getvalue().encode("utf-8")
    payload = {
        "study_id": envelope.study_id,
        "kind": envelope.kind.value,
        "generated_at": envelope.generated_at.isoformat(),
        "columns": list(envelope.columns),
        "rows": [
            {column: _cell_json(row.get(column)) for column in envelope.columns}
            for row in envelope.rows
        ],
        "footnotes": list(envelope.footnotes),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def parse_csv_export(blob: bytes) -> list[dict]:
    """Parse a delimited export back into row dicts (round-trip helper)."""
    text = blob.decode("utf-8")
    reader = csv.DictReader(io.StringIO(text))
    return list(reader)

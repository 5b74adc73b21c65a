"""Blinded clinical-evaluation platform for synthetic medical image assessment.

The package is organized around the five assessment procedures (A1-A5):

- :mod:`cemis.domain` -- value types, verbatim task/option catalogs, truth rules
- :mod:`cemis.sampling` -- seeded stratified selection of images, pairs, groups
- :mod:`cemis.engine` -- study materialization and immutable expert sessions
- :mod:`cemis.stats` -- confusion metrics, exact tests, Likert aggregation
- :mod:`cemis.reporting` -- machine-readable summary tables
- :mod:`cemis.storage` -- manifests, frozen plans, append-only response log
- :mod:`cemis.api` -- HTTP service
- :mod:`cemis.simulator` -- skill-parameterized expert panels
- :mod:`cemis.cli` -- administrative command line
"""

from .domain import (
    Category,
    ExperienceGroup,
    ExpertProfile,
    Generator,
    GroupingPolicy,
    ImageRecord,
    Lesion,
    Origin,
    Procedure,
    ProcedureCounts,
    Question,
    Response,
    Source,
    StudyConfig,
    TaskInstance,
    TaskKind,
    derive_experience_group,
    option_catalog,
    resolve_truth,
)
from .engine import Study, StudyEngine, create_study
from .errors import CemisError
from .simulator import SkillProfile, simulate_panel
from .stats import (
    ConfusionCounts,
    LikertDistribution,
    MetricSummary,
    ProportionCI,
    Sidedness,
    TestResult,
    binom_test,
    chi2_gof,
    metrics,
    summarize_across_experts,
    wald_ci,
    wald_ci_from_rate,
)

__version__ = "0.1.0"

__all__ = [
    "Category",
    "CemisError",
    "ConfusionCounts",
    "ExperienceGroup",
    "ExpertProfile",
    "Generator",
    "GroupingPolicy",
    "ImageRecord",
    "Lesion",
    "LikertDistribution",
    "MetricSummary",
    "Origin",
    "Procedure",
    "ProcedureCounts",
    "ProportionCI",
    "Question",
    "Response",
    "Sidedness",
    "SkillProfile",
    "Source",
    "Study",
    "StudyConfig",
    "StudyEngine",
    "TaskInstance",
    "TaskKind",
    "TestResult",
    "binom_test",
    "chi2_gof",
    "create_study",
    "derive_experience_group",
    "metrics",
    "option_catalog",
    "resolve_truth",
    "simulate_panel",
    "summarize_across_experts",
    "wald_ci",
    "wald_ci_from_rate",
]

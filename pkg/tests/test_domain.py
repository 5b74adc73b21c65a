from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cemis.domain import (
    Category,
    ExperienceGroup,
    ExpertProfile,
    Generator,
    ImageRecord,
    Lesion,
    Origin,
    Procedure,
    ProcedureCounts,
    Question,
    SinglePayload,
    Source,
    StudyConfig,
    TaskInstance,
    TaskKind,
    derive_experience_group,
    is_multi_select,
    option_catalog,
    resolve_truth,
    task_prompt,
    validate_answer,
)
from cemis.errors import NotFoundError, ValidationError


def make_image(**overrides) -> ImageRecord:
    defaults = dict(
        image_id="img-1",
        path="img-1.png",
        source=Source.REAL,
        generator=Generator.NONE,
        category=Category.NORMAL,
        lesion=None,
        origin=Origin.KID,
    )
    defaults.update(overrides)
    return ImageRecord(**defaults)


class TestExperienceGroups:
    @pytest.mark.parametrize(
        "years,expected",
        [
            (5, ExperienceGroup.G1_LT10),
            (0, ExperienceGroup.G1_LT10),
            (9, ExperienceGroup.G1_LT10),
            (10, ExperienceGroup.G2_10TO20),
            (20, ExperienceGroup.G2_10TO20),
            (21, ExperienceGroup.G3_GT20),
            (27, ExperienceGroup.G3_GT20),
        ],
    )
    def test_mapping(self, years, expected):
        assert derive_experience_group(years) is expected

    def test_negative_years_rejected(self):
        with pytest.raises(ValidationError):
            derive_experience_group(-1)

    def test_non_integer_rejected(self):
        with pytest.raises(ValidationError):
            derive_experience_group(12.5)

    @given(st.integers(min_value=0, max_value=10_000))
    def test_partitions_every_year(self, years):
        group = derive_experience_group(years)
        expected = (
            ExperienceGroup.G1_LT10
            if years < 10
            else ExperienceGroup.G2_10TO20
            if years <= 20
            else ExperienceGroup.G3_GT20
        )
        assert group is expected

    def test_profile_derives_group(self):
        profile = ExpertProfile(expert_id="e1", years_experience=15)
        assert profile.experience_group is ExperienceGroup.G2_10TO20


class TestResolveTruth:
    def test_real_is_positive_for_realness(self):
        assert resolve_truth(make_image(), Question.REALNESS) is True

    def test_synthetic_is_negative_for_realness(self):
        image = make_image(source=Source.SYNTHETIC, generator=Generator.TIDE_II)
        assert resolve_truth(image, Question.REALNESS) is False

    def test_normal_is_negative_for_abnormality(self):
        assert resolve_truth(make_image(), Question.ABNORMALITY) is False

    def test_abnormal_is_positive_for_abnormality(self):
        image = make_image(category=Category.ABNORMAL, lesion=Lesion.ULCER)
        assert resolve_truth(image, Question.ABNORMALITY) is True


class TestImageRecordInvariants:
    def test_real_with_generator_rejected(self):
        with pytest.raises(ValidationError):
            make_image(generator=Generator.TIDE)

    def test_synthetic_without_generator_rejected(self):
        with pytest.raises(ValidationError):
            make_image(source=Source.SYNTHETIC)

    def test_normal_with_lesion_rejected(self):
        with pytest.raises(ValidationError):
            make_image(lesion=Lesion.EROSION)

    def test_abnormal_without_lesion_rejected(self):
        with pytest.raises(ValidationError):
            make_image(category=Category.ABNORMAL)


# The wire-visible strings, frozen. Any edit to these is a protocol change.
EXPECTED_CATALOGS = {
    (Procedure.A1, TaskKind.T1): ["Real", "Fake"],
    (Procedure.A1, TaskKind.T2): ["Very Difficult", "Difficult", "Neutral", "Easy", "Very easy"],
    (Procedure.A1, TaskKind.T3): [
        "Color",
        "Texture",
        "Existence of artifacts/ luminal content",
        "Unrealistic appearance of anatomical structures",
        "Appearance of findings",
    ],
    (Procedure.A1, TaskKind.T4): [
        "Normal",
        "Abnormal - Erosion",
        "Abnormal - Erythema",
        "Abnormal - Ulcer",
        "Abnormal - Other",
    ],
    (Procedure.A1, TaskKind.T5): [
        "Very acceptable",
        "Acceptable",
        "Moderately acceptable",
        "Slightly acceptable",
        "Not Acceptable",
    ],
    (Procedure.A4, TaskKind.T1): ["Image 1", "Image 2"],
    (Procedure.A4, TaskKind.T3): [
        "Color",
        "Texture",
        "Absence of artifacts",
        "Realistic anatomical structures",
        "Realistic appearance of findings",
    ],
    (Procedure.A5, TaskKind.T1): [
        "Very Diverse",
        "Diverse",
        "Moderately diverse",
        "Slightly diverse",
        "Not diverse",
    ],
    (Procedure.A5, TaskKind.T2): [
        "Very Realistic",
        "Realistic",
        "Moderately realistic",
        "Slightly realistic",
        "Not realistic",
    ],
}


class TestOptionCatalogs:
    @pytest.mark.parametrize("key", sorted(EXPECTED_CATALOGS, key=str))
    def test_verbatim_catalogs(self, key):
        procedure, kind = key
        assert list(option_catalog(procedure, kind)) == EXPECTED_CATALOGS[key]

    def test_individual_procedures_share_catalogs(self):
        for kind in (TaskKind.T1, TaskKind.T2, TaskKind.T3, TaskKind.T4, TaskKind.T5):
            assert option_catalog(Procedure.A1, kind) == option_catalog(Procedure.A2, kind)
            assert option_catalog(Procedure.A1, kind) == option_catalog(Procedure.A3, kind)

    def test_a4_reuses_t4_t5_catalogs_per_image(self):
        for kind in (TaskKind.T4A, TaskKind.T4B):
            assert option_catalog(Procedure.A4, kind) == option_catalog(Procedure.A1, TaskKind.T4)
        for kind in (TaskKind.T5A, TaskKind.T5B):
            assert option_catalog(Procedure.A4, kind) == option_catalog(Procedure.A1, TaskKind.T5)

    def test_catalog_sizes(self):
        assert len(option_catalog(Procedure.A1, TaskKind.T1)) == 2
        assert len(option_catalog(Procedure.A4, TaskKind.T1)) == 2
        for procedure, kinds in {
            Procedure.A1: (TaskKind.T2, TaskKind.T3, TaskKind.T4, TaskKind.T5),
            Procedure.A4: (TaskKind.T2, TaskKind.T3, TaskKind.T4A, TaskKind.T5B),
            Procedure.A5: (TaskKind.T1, TaskKind.T2),
        }.items():
            for kind in kinds:
                assert len(option_catalog(procedure, kind)) == 5

    def test_invalid_combination_not_found(self):
        with pytest.raises(NotFoundError):
            option_catalog(Procedure.A5, TaskKind.T3)
        with pytest.raises(NotFoundError):
            option_catalog(Procedure.A1, TaskKind.T4A)

    def test_only_reason_tasks_multi_select(self):
        assert is_multi_select(TaskKind.T3)
        for kind in TaskKind:
            if kind is not TaskKind.T3:
                assert not is_multi_select(kind)

    def test_prompts_exist_for_all_catalog_entries(self):
        for procedure, kind in EXPECTED_CATALOGS:
            assert task_prompt(procedure, kind)


class TestTaskInstance:
    def _task(self, procedure, kind, payload=None):
        return TaskInstance(
            task_id="t",
            procedure=procedure,
            kind=kind,
            payload=payload or SinglePayload("img-1"),
            options=option_catalog(procedure, kind),
            multi_select=is_multi_select(kind),
        )

    def test_pair_kinds_restricted_to_a4(self):
        with pytest.raises(ValidationError):
            TaskInstance(
                task_id="t",
                procedure=Procedure.A1,
                kind=TaskKind.T4A,
                payload=SinglePayload("img-1"),
                options=option_catalog(Procedure.A4, TaskKind.T4A),
                multi_select=False,
            )

    def test_a5_restricted_to_group_tasks(self):
        with pytest.raises(ValidationError):
            self._task(Procedure.A5, TaskKind.T1)  # single payload, needs group


class TestValidateAnswer:
    def _task(self, procedure=Procedure.A1, kind=TaskKind.T1):
        return TaskInstance(
            task_id="t",
            procedure=procedure,
            kind=kind,
            payload=SinglePayload("img-1"),
            options=option_catalog(procedure, kind),
            multi_select=is_multi_select(kind),
        )

    def test_index_accepted(self):
        assert validate_answer(self._task(), 1) == 1

    def test_verbatim_label_accepted(self):
        assert validate_answer(self._task(), "Fake") == 1

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            validate_answer(self._task(), 2)

    def test_unknown_label_rejected(self):
        with pytest.raises(ValidationError):
            validate_answer(self._task(), "Synthetic")

    def test_multi_select_set(self):
        task = self._task(kind=TaskKind.T3)
        assert validate_answer(task, [0, 1]) == frozenset({0, 1})
        assert validate_answer(task, ["Color", "Texture"]) == frozenset({0, 1})

    def test_empty_multi_select_rejected(self):
        with pytest.raises(ValidationError):
            validate_answer(self._task(kind=TaskKind.T3), [])

    def test_collection_on_single_select_rejected(self):
        with pytest.raises(ValidationError):
            validate_answer(self._task(), [0, 1])


class TestStudyConfig:
    def test_defaults_valid(self):
        config = StudyConfig(study_id="s", seed=1)
        assert config.counts.a1 == 50

    def test_odd_individual_count_rejected(self):
        with pytest.raises(ValidationError):
            StudyConfig(study_id="s", seed=1, counts=ProcedureCounts(a1=49))

    def test_nonpositive_count_rejected(self):
        with pytest.raises(ValidationError):
            StudyConfig(study_id="s", seed=1, counts=ProcedureCounts(a4_pairs=0))

    def test_seed_range(self):
        with pytest.raises(ValidationError):
            StudyConfig(study_id="s", seed=-1)
        with pytest.raises(ValidationError):
            StudyConfig(study_id="s", seed=2**64)

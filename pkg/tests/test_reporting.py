from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest

from cemis.domain import GroupingPolicy, StudyConfig
from cemis.engine import StudyEngine, create_study
from cemis.errors import EmptyReportError, UnsupportedError, ValidationError
from cemis.reporting import (
    ExportFormat,
    ReportKind,
    export,
    parse_csv_export,
    render,
)
from cemis.simulator import SkillProfile, logical_clock, reference_panel, simulate_panel
from cemis.stats import model_comparison
from conftest import build_pool

GENERATED_AT = datetime(2026, 2, 1, tzinfo=timezone.utc)


@pytest.fixture(scope="module")
def simulated():
    study = create_study(StudyConfig(study_id="report-study", seed=77), build_pool())
    engine = StudyEngine(study, clock=logical_clock())
    simulate_panel(engine, reference_panel(10))
    return study, engine


@pytest.fixture(scope="module")
def simulated_mixed():
    config = StudyConfig(
        study_id="report-mixed",
        seed=77,
        grouping_policy=GroupingPolicy.HOMOGENEOUS_SOURCE_MIXED,
    )
    study = create_study(config, build_pool())
    engine = StudyEngine(study, clock=logical_clock())
    simulate_panel(engine, reference_panel(4))
    return study, engine


def render_kind(simulated, kind):
    study, engine = simulated
    return render(
        kind, study, engine.response_log(), engine.profiles, generated_at=GENERATED_AT
    )


class TestTable1:
    def test_four_procedure_rows(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        assert [row["procedure"] for row in envelope.rows] == ["A1", "A2", "A3", "A4"]

    def test_sens_spec_only_for_a1(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        by_procedure = {row["procedure"]: row for row in envelope.rows}
        assert by_procedure["A1"]["sensitivity_mean"] is not None
        assert by_procedure["A1"]["specificity_mean"] is not None
        for procedure in ("A2", "A3", "A4"):
            assert by_procedure[procedure]["sensitivity_mean"] is None
            assert by_procedure[procedure]["specificity_mean"] is None

    def test_values_are_percent_scale(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        for row in envelope.rows:
            assert 0 <= row["accuracy_mean"] <= 100


class TestTable2:
    def test_origin_rows_present(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE2)
        keys = {(r["procedure"], r["image_type"], r["origin"]) for r in envelope.rows}
        for procedure in ("A2", "A3", "A4"):
            image_type = {"A2": "synthetic", "A3": "real", "A4": "real"}[procedure]
            assert (procedure, image_type, "KID") in keys
            assert (procedure, image_type, "Kvasir") in keys

    def test_absent_class_rows_are_na(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE2)
        by_key = {(r["procedure"], r["image_type"], r["origin"]): r for r in envelope.rows}
        assert by_key[("A2", "real", "all")]["accuracy_mean"] is None
        assert by_key[("A3", "synthetic", "all")]["accuracy_mean"] is None

    def test_total_rows_cover_both_types(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE2)
        by_key = {(r["procedure"], r["image_type"], r["origin"]): r for r in envelope.rows}
        assert by_key[("A1", "total", "all")]["accuracy_mean"] is not None


class TestFig1:
    def test_series_per_expert_ordered_by_years(self, simulated):
        study, engine = simulated
        envelope = render_kind(simulated, ReportKind.FIG1)
        years = [row["years"] for row in envelope.rows]
        assert years == sorted(years)
        experts = {row["expert_id"] for row in envelope.rows}
        assert len(experts) == len(engine.profiles)
        assert len(envelope.rows) == 4 * len(experts)


class TestLikertReports:
    def test_difficulty_splits_a1_by_source(self, simulated):
        envelope = render_kind(simulated, ReportKind.DIFFICULTY)
        a1_types = {r["image_type"] for r in envelope.rows if r["procedure"] == "A1"}
        assert a1_types == {"real", "synthetic"}
        a4_types = {r["image_type"] for r in envelope.rows if r["procedure"] == "A4"}
        assert a4_types == {"pair"}

    def test_quality_assigns_types_via_judged_slot(self, simulated):
        envelope = render_kind(simulated, ReportKind.QUALITY)
        a4_types = {r["image_type"] for r in envelope.rows if r["procedure"] == "A4"}
        assert a4_types == {"real", "synthetic"}

    def test_percentages_sum_to_100_per_stratum(self, simulated):
        envelope = render_kind(simulated, ReportKind.DIFFICULTY)
        sums = {}
        for row in envelope.rows:
            key = (row["procedure"], row["image_type"], row["experience_group"])
            sums[key] = sums.get(key, 0.0) + (row["percentage"] or 0.0)
        for total in sums.values():
            assert total == pytest.approx(100.0, abs=0.05)

    def test_rollup_rows_present(self, simulated):
        envelope = render_kind(simulated, ReportKind.DIFFICULTY)
        groups = {r["experience_group"] for r in envelope.rows}
        assert "all" in groups
        assert {"G1_lt10", "G2_10to20", "G3_gt20"} <= groups


class TestReasons:
    def test_conditions_present(self, simulated):
        envelope = render_kind(simulated, ReportKind.REASONS)
        conditions = {r["condition"] for r in envelope.rows}
        assert conditions == {"all", "correct", "incorrect"}

    def test_rates_within_bounds(self, simulated):
        envelope = render_kind(simulated, ReportKind.REASONS)
        for row in envelope.rows:
            if row["percentage"] is not None:
                assert 0 <= row["percentage"] <= 100


class TestModelComparison:
    def test_seven_sources(self, simulated):
        envelope = render_kind(simulated, ReportKind.MODEL_COMPARISON)
        sources = {row["source"] for row in envelope.rows}
        assert sources == {
            "real", "StyleGANv2", "CycleGAN", "TS-GAN", "EndoVAE", "TIDE", "TIDE-II",
        }

    def test_category_split_under_category_policy(self, simulated):
        envelope = render_kind(simulated, ReportKind.MODEL_COMPARISON)
        categories = {row["category"] for row in envelope.rows}
        assert categories == {"normal", "abnormal"}

    def test_mixed_policy_uses_all_category(self, simulated_mixed):
        envelope = render_kind(simulated_mixed, ReportKind.MODEL_COMPARISON)
        categories = {row["category"] for row in envelope.rows}
        assert categories == {"all"}

    def test_category_split_unsupported_under_mixed_policy(self, simulated_mixed):
        study, engine = simulated_mixed
        with pytest.raises(UnsupportedError):
            model_comparison(study, engine.response_log(), split_category=True)

    def test_realism_diversity_report(self, simulated):
        envelope = render_kind(simulated, ReportKind.REALISM_DIVERSITY)
        questions = {row["question"] for row in envelope.rows}
        assert questions == {"realism", "diversity"}

    def test_skewed_profile_dominates_distribution(self):
        study = create_study(StudyConfig(study_id="skew", seed=5), build_pool())
        engine = StudyEngine(study, clock=logical_clock())
        profiles = [
            SkillProfile(seed=1, realism_dist=(0, 0, 1.0, 0, 0))  # all "Moderately realistic"
        ]
        simulate_panel(engine, profiles)
        comparison = model_comparison(study, engine.response_log(), split_category=False)
        tide2 = comparison.distributions[("TIDE-II", None)]["realism"]
        assert tide2.counts[2] == tide2.total


class TestExport:
    def test_csv_round_trip(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        rows = parse_csv_export(export(envelope, "csv"))
        assert len(rows) == 4
        original = envelope.rows[0]["accuracy_mean"]
        assert rows[0]["accuracy_mean"] == f"{original:.2f}"

    def test_identical_envelope_identical_bytes(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE2)
        assert export(envelope, "csv") == export(envelope, "csv")
        assert export(envelope, "json") == export(envelope, "json")

    def test_re_render_is_reproducible(self, simulated):
        first = render_kind(simulated, ReportKind.TABLE2)
        second = render_kind(simulated, ReportKind.TABLE2)
        assert export(first, "json") == export(second, "json")

    def test_na_tokens_in_output(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        blob = export(envelope, "csv").decode()
        assert ",NA," in blob or blob.rstrip().endswith("NA")
        payload = json.loads(export(envelope, "json"))
        assert payload["rows"][1]["sensitivity_mean"] == "NA"

    def test_numbers_have_two_decimals(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        rows = parse_csv_export(export(envelope, "csv"))
        for row in rows:
            if row["accuracy_mean"] != "NA":
                whole, frac = row["accuracy_mean"].split(".")
                assert len(frac) == 2

    def test_unknown_format_rejected(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        with pytest.raises(ValidationError):
            export(envelope, "parquet")

    def test_formats_accept_canonical_names(self, simulated):
        envelope = render_kind(simulated, ReportKind.TABLE1)
        assert export(envelope, ExportFormat.DELIMITED_TABLE) == export(envelope, "csv")
        assert export(envelope, ExportFormat.STRUCTURED_RECORD) == export(envelope, "json")


class TestEmptyStudy:
    def test_no_responses_rejected(self):
        study = create_study(StudyConfig(study_id="empty", seed=5), build_pool())
        with pytest.raises(EmptyReportError):
            render(ReportKind.TABLE1, study, [], {})

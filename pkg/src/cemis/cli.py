"""Administrative command line: ingest, study creation, enrollment, serving,
reporting and simulation.

Every subcommand is scriptable: no prompts, stable exit codes (0 success,
1 domain error, 2 usage), and failures print a single machine-parsable line
``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .domain import GroupingPolicy, ProcedureCounts, StudyConfig
from .engine import create_study
from .errors import CemisError, ValidationError
from .reporting import ReportKind, export, render
from .simulator import load_profiles, simulate_panel
from .storage import StudyStore, data_root, open_engine, parse_manifest


def _fail(error: CemisError) -> None:
    click.echo(f"error: {error.category}: {error}", err=True)
    sys.exit(1)


def _load_config_file(path: Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValidationError("study config must be a mapping")
    return raw


def _config_from(raw: dict, study_override: str | None, seed_override: int | None) -> StudyConfig:
    known = {"study_id", "seed", "counts", "grouping_policy", "shuffle_per_expert"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config field(s): {sorted(unknown)}")
    study_id = study_override or raw.get("study_id")
    seed = seed_override if seed_override is not None else raw.get("seed")
    if not study_id:
        raise ValidationError("config needs a study_id (or pass --study)")
    if seed is None:
        raise ValidationError("config needs a seed (or pass --seed)")
    counts = ProcedureCounts(**raw["counts"]) if raw.get("counts") else ProcedureCounts()
    policy = (
        GroupingPolicy(raw["grouping_policy"])
        if raw.get("grouping_policy")
        else GroupingPolicy.HOMOGENEOUS_SOURCE_CATEGORY
    )
    return StudyConfig(
        study_id=study_id,
        seed=int(seed),
        counts=counts,
        grouping_policy=policy,
        shuffle_per_expert=bool(raw.get("shuffle_per_expert", False)),
    )


data_dir_option = click.option(
    "--data-dir",
    default=None,
    help="Data root (defaults to $CEMIS_DATA_DIR).",
)


@click.group()
def main():
    """Blinded clinical-evaluation platform for synthetic image assessment."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--study", "study_id", required=True)
@data_dir_option
def ingest(manifest_path, study_id, data_dir):
    """Validate an image manifest and persist it as a study pool."""
    try:
        records = parse_manifest(Path(manifest_path))
        store = StudyStore(data_root(data_dir), study_id)
        store.save_pool(records)
    except CemisError as error:
        _fail(error)
    click.echo(f"ingested {len(records)} images into study {study_id}")


@main.group()
def study():
    """Study management."""


@study.command("create")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--study", "study_override", default=None, help="Override config study_id.")
@click.option("--seed", type=int, default=None, help="Override config seed.")
@data_dir_option
def study_create(config_path, study_override, seed, data_dir):
    """Materialize all five procedures' item sets and freeze them."""
    try:
        raw = _load_config_file(Path(config_path))
        config = _config_from(raw, study_override, seed)
        store = StudyStore(data_root(data_dir), config.study_id)
        if store.study_exists():
            raise CemisError(
                f"study {config.study_id!r} already exists", category="study.exists"
            )
        pool = store.load_pool()
        materialized = create_study(config, pool)
        store.save_study(materialized)
    except CemisError as error:
        _fail(error)
    except (OSError, json.JSONDecodeError) as error:
        _fail(CemisError(str(error), category="config.unreadable"))
    summary = {
        "study_id": materialized.study_id,
        "seed": config.seed,
        "items": {
            "A1": len(materialized.a1_items),
            "A2": len(materialized.a2_items),
            "A3": len(materialized.a3_items),
            "A4": len(materialized.a4_pairs),
            "A5": len(materialized.a5_groups),
        },
        "tasks_per_expert": len(materialized.schedule),
        "a5_leftovers": {k: len(v) for k, v in sorted(materialized.a5_leftovers.items())},
    }
    click.echo(json.dumps(summary, sort_keys=True))


@main.group()
def expert():
    """Expert enrollment."""


@expert.command("add")
@click.option("--study", "study_id", required=True)
@click.option("--years", required=True, type=int)
@click.option("--expert-id", default=None)
@data_dir_option
def expert_add(study_id, years, expert_id, data_dir):
    """Enroll an expert and print the session token."""
    try:
        store = StudyStore(data_root(data_dir), study_id)
        engine = open_engine(store)
        profile, token = engine.enroll_expert(years, expert_id=expert_id)
        store.append_expert(profile, token)
    except CemisError as error:
        _fail(error)
    click.echo(
        json.dumps(
            {
                "expert_id": profile.expert_id,
                "experience_group": profile.experience_group.value,
                "session_token": token,
            },
            sort_keys=True,
        )
    )


@main.command()
@click.option("--addr", default="127.0.0.1:8000", show_default=True)
@data_dir_option
def serve(addr, data_dir):
    """Start the HTTP service."""
    from .api import serve as run_service

    try:
        run_service(addr=addr, data_dir=data_dir)
    except CemisError as error:
        _fail(error)
    except OSError as error:
        _fail(CemisError(str(error), category="serve.bind"))


@main.command()
@click.option("--study", "study_id", required=True)
@click.option("--kind", required=True, type=click.Choice([k.value for k in ReportKind]))
@click.option("--format", "fmt", default="json", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@data_dir_option
def report(study_id, kind, fmt, out_path, data_dir):
    """Render one report and write it to a file."""
    try:
        store = StudyStore(data_root(data_dir), study_id)
        engine = open_engine(store, sink=False)
        envelope = render(
            ReportKind(kind), engine.study, engine.response_log(), engine.profiles
        )
        blob = export(envelope, fmt)
        Path(out_path).write_bytes(blob)
    except CemisError as error:
        _fail(error)
    click.echo(f"wrote {kind} ({len(blob)} bytes) to {out_path}")


@main.command()
@click.option("--study", "study_id", required=True)
@click.option("--profiles", "profiles_path", required=True, type=click.Path())
@click.option(
    "--fsync/--no-fsync",
    default=False,
    show_default=True,
    help="fsync every appended response (bulk simulation defaults to buffered writes).",
)
@data_dir_option
def simulate(study_id, profiles_path, fsync, data_dir):
    """Run a simulated expert panel through the full study."""
    try:
        store = StudyStore(data_root(data_dir), study_id, fsync=fsync)
        engine = open_engine(store)
        profiles = load_profiles(Path(profiles_path))
        members = simulate_panel(
            engine, profiles, on_enroll=store.append_expert
        )
    except CemisError as error:
        _fail(error)
    click.echo(
        json.dumps(
            {
                "simulated_experts": [m.expert_id for m in members],
                "responses": len(engine.response_log()),
            },
            sort_keys=True,
        )
    )


if __name__ == "__main__":
    main()

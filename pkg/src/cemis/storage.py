"""Durable persistence: manifests, frozen study plans, experts, response log.

Layout under the data root (environment variable CEMIS_DATA_DIR):

    studies/<study_id>/pool.json      validated image manifest
    studies/<study_id>/study.json     config + frozen sampling plans
    studies/<study_id>/experts.jsonl  enrolled experts (append-only)
    studies/<study_id>/responses.log  accepted responses (append-only, checksummed)

The response log is the record of truth: entries carry a gap-free sequence
number and a SHA-256 checksum over their canonical serialization, and there
is no code path that updates or deletes an entry.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .domain import (
    Category,
    ExpertProfile,
    Generator,
    ImageRecord,
    Lesion,
    Origin,
    Response,
    Source,
)
from .engine import Study
from .errors import LogCorruptError, ManifestError, NotFoundError, ValidationError

DATA_DIR_ENV = "CEMIS_DATA_DIR"

_MANIFEST_FIELDS = {"image_id", "path", "source", "generator", "category", "lesion", "origin"}


def data_root(override: Optional[str] = None) -> Path:
    value = override or os.environ.get(DATA_DIR_ENV)
    if not value:
        raise ValidationError(
            f"no data directory: set {DATA_DIR_ENV} or pass --data-dir",
        )
    return Path(value)


def _record_from_dict(raw: dict, where: str, base_dir: Path, require_files: bool) -> ImageRecord:
    if not isinstance(raw, dict):
        raise ManifestError(f"{where}: record must be an object")
    unknown = set(raw) - _MANIFEST_FIELDS
    if unknown:
        raise ManifestError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = {"image_id", "path", "source", "category", "origin"} - set(raw)
    if missing:
        raise ManifestError(f"{where}: missing field(s) {sorted(missing)}")
    try:
        source = Source(raw["source"])
        generator = Generator(raw["generator"]) if raw.get("generator") else Generator.NONE
        category = Category(raw["category"])
        lesion = Lesion(raw["lesion"]) if raw.get("lesion") else None
        origin = Origin(raw["origin"])
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from None
    path = Path(raw["path"])
    if not path.is_absolute():
        path = base_dir / path
    if require_files and not path.is_file():
        raise ManifestError(
            f"{where}: image file not found: {path}", category="manifest.missing_file"
        )
    try:
        return ImageRecord(
            image_id=raw["image_id"],
            path=str(path),
            source=source,
            generator=generator,
            category=category,
            lesion=lesion,
            origin=origin,
        )
    except ValidationError as exc:
        raise ManifestError(f"{where}: {exc}") from None


def parse_manifest(path: Path, require_files: bool = True) -> list[ImageRecord]:
    """Parse and validate a manifest file (JSON array or JSON lines).

    Validation is all-or-nothing: any schema violation, missing image file or
    duplicate image_id rejects the whole manifest.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8")
    base_dir = path.parent
    records: list[ImageRecord] = []
    stripped = text.lstrip()
    if not stripped:
        raise ManifestError("manifest is empty", category="manifest.empty")
    if stripped.startswith("["):
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from None
        for index, raw in enumerate(rows, start=1):
            records.append(_record_from_dict(raw, f"record {index}", base_dir, require_files))
    else:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: invalid JSON: {exc}") from None
            records.append(_record_from_dict(raw, f"line {lineno}", base_dir, require_files))
    if not records:
        raise ManifestError("manifest holds no records", category="manifest.empty")
    seen: dict[str, int] = {}
    for index, record in enumerate(records, start=1):
        if record.image_id in seen:
            raise ManifestError(
                f"record {index}: duplicate image_id {record.image_id!r} "
                f"(first seen in record {seen[record.image_id]})",
                category="manifest.duplicate_id",
            )
        seen[record.image_id] = index
    return records


# --- Response log ---------------------------------------------------------


@dataclass(frozen=True)
class ResponseLogEntry:
    seq: int
    response: Response
    checksum: str


def _canonical_entry(seq: int, response: Response) -> dict:
    answer = response.answer
    if isinstance(answer, frozenset):
        answer = sorted(answer)
    return {
        "seq": seq,
        "response_id": response.response_id,
        "study_id": response.study_id,
        "expert_id": response.expert_id,
        "task_id": response.task_id,
        "answer": answer,
        "answered_at": response.answered_at.isoformat(),
    }


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def read_log(path: Path) -> Iterator[ResponseLogEntry]:
    """Yield log entries in order, halting at the first corrupt record."""
    path = Path(path)
    if not path.exists():
        return
    offset = 0
    expected_seq = 1
    with open(path, "rb") as handle:
        for raw_line in handle:
            line = raw_line.decode("utf-8", errors="replace").rstrip("\n")
            if not line.strip():
                offset += len(raw_line)
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError:
                if not raw_line.endswith(b"\n"):
                    # torn tail: an append in progress; the prefix is consistent
                    return
                raise LogCorruptError(
                    f"unparsable log entry at byte offset {offset}",
                    seq=expected_seq,
                    offset=offset,
                ) from None
            stated = payload.get("checksum")
            body = {k: v for k, v in payload.items() if k != "checksum"}
            if stated != _checksum(body):
                raise LogCorruptError(
                    f"checksum mismatch for seq {payload.get('seq')} "
                    f"at byte offset {offset}",
                    seq=payload.get("seq"),
                    offset=offset,
                )
            if payload["seq"] != expected_seq:
                raise LogCorruptError(
                    f"sequence gap: expected {expected_seq}, found {payload['seq']} "
                    f"at byte offset {offset}",
                    seq=payload["seq"],
                    offset=offset,
                )
            answer = payload["answer"]
            response = Response(
                response_id=payload["response_id"],
                study_id=payload["study_id"],
                expert_id=payload["expert_id"],
                task_id=payload["task_id"],
                answer=frozenset(answer) if isinstance(answer, list) else answer,
                answered_at=datetime.fromisoformat(payload["answered_at"]),
            )
            yield ResponseLogEntry(seq=payload["seq"], response=response, checksum=stated)
            expected_seq += 1
            offset += len(raw_line)


class ResponseLog:
    """Append-only, checksummed, line-delimited record of accepted responses."""

    def __init__(self, path: Path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self._next_seq = 1
        for entry in read_log(self.path):  # validate the existing tail
            self._next_seq = entry.seq + 1

    def append(self, response: Response) -> ResponseLogEntry:
        seq = self._next_seq
        payload = _canonical_entry(seq, response)
        payload["checksum"] = _checksum(_canonical_entry(seq, response))
        line = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
            handle.flush()
            if self.fsync:
                os.fsync(handle.fileno())
        self._next_seq = seq + 1
        return ResponseLogEntry(seq=seq, response=response, checksum=payload["checksum"])

    def replay(self) -> Iterator[ResponseLogEntry]:
        return read_log(self.path)


# --- Study store ------------------------------------------------------------


class StudyStore:
    """Filesystem home of one study."""

    def __init__(self, root: Path, study_id: str, fsync: bool = True):
        if not study_id or "/" in study_id or study_id.startswith("."):
            raise ValidationError(f"invalid study id {study_id!r}")
        self.root = Path(root)
        self.study_id = study_id
        self.dir = self.root / "studies" / study_id
        self.fsync = fsync
        self._log: Optional[ResponseLog] = None

    # pool

    def pool_path(self) -> Path:
        return self.dir / "pool.json"

    def save_pool(self, records: Iterable[ImageRecord]) -> int:
        records = list(records)
        self.dir.mkdir(parents=True, exist_ok=True)
        rows = [
            {
                "image_id": r.image_id,
                "path": r.path,
                "source": r.source.value,
                "generator": None if r.generator is Generator.NONE else r.generator.value,
                "category": r.category.value,
                "lesion": r.lesion.value if r.lesion else None,
                "origin": r.origin.value,
            }
            for r in records
        ]
        tmp = self.pool_path().with_suffix(".json.tmp")
        tmp.write_text(json.dumps(rows, indent=1, sort_keys=True), encoding="utf-8")
        tmp.replace(self.pool_path())  # atomic: never a half-written pool
        return len(rows)

    def load_pool(self) -> list[ImageRecord]:
        if not self.pool_path().is_file():
            raise NotFoundError(
                f"study {self.study_id!r} has no ingested pool; run ingest first"
            )
        rows = json.loads(self.pool_path().read_text(encoding="utf-8"))
        return [
            ImageRecord(
                image_id=raw["image_id"],
                path=raw["path"],
                source=Source(raw["source"]),
                generator=Generator(raw["generator"]) if raw["generator"] else Generator.NONE,
                category=Category(raw["category"]),
                lesion=Lesion(raw["lesion"]) if raw["lesion"] else None,
                origin=Origin(raw["origin"]),
            )
            for raw in rows
        ]

    # study plan

    def study_path(self) -> Path:
        return self.dir / "study.json"

    def save_study(self, study: Study) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        tmp = self.study_path().with_suffix(".json.tmp")
        tmp.write_bytes(study.plan_bytes())
        tmp.replace(self.study_path())

    def load_study(self) -> Study:
        if not self.study_path().is_file():
            raise NotFoundError(f"study {self.study_id!r} has not been created")
        plan = json.loads(self.study_path().read_text(encoding="utf-8"))
        return Study.from_plan_dict(plan, self.load_pool())

    def study_exists(self) -> bool:
        return self.study_path().is_file()

    # experts

    def experts_path(self) -> Path:
        return self.dir / "experts.jsonl"

    def append_expert(self, profile: ExpertProfile, session_token: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        row = {
            "expert_id": profile.expert_id,
            "years_experience": profile.years_experience,
            "session_token": session_token,
        }
        with open(self.experts_path(), "a", encoding="utf-8") as handle:
            handle.write(json.dumps(row, sort_keys=True) + "\n")
            handle.flush()
            if self.fsync:
                os.fsync(handle.fileno())

    def load_experts(self) -> list[tuple[ExpertProfile, str]]:
        if not self.experts_path().is_file():
            return []
        out = []
        for line in self.experts_path().read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            out.append(
                (
                    ExpertProfile(
                        expert_id=raw["expert_id"],
                        years_experience=raw["years_experience"],
                    ),
                    raw["session_token"],
                )
            )
        return out

    # response log

    def log_path(self) -> Path:
        return self.dir / "responses.log"

    def response_log(self) -> ResponseLog:
        if self._log is None:
            self.dir.mkdir(parents=True, exist_ok=True)
            self._log = ResponseLog(self.log_path(), fsync=self.fsync)
        return self._log

    def load_responses(self) -> list[Response]:
        return [entry.response for entry in read_log(self.log_path())]


def open_engine(store: StudyStore, sink: bool = True, clock=None):
    """Load a study from disk and replay its state into a fresh engine."""
    from .engine import StudyEngine, _utc_now

    study = store.load_study()
    log = store.response_log() if sink else None

    def writer(response: Response) -> int:
        return log.append(response).seq

    engine = StudyEngine(
        study,
        sink=writer if sink else None,
        clock=clock or _utc_now,
    )
    # Replay persisted state without re-appending it to the log.
    saved_sink = engine.sink
    engine.sink = None
    engine.replay(store.load_experts(), store.load_responses())
    engine.sink = saved_sink
    return engine

"""Wire interface: expert session endpoints plus admin study management.

Expert traffic is keyed by the session token; admin endpoints require the
credential from CEMIS_ADMIN_TOKEN (header X-Admin-Token). Task payloads sent
to experts carry opaque image ids only; image bytes are gated to the caller's
current task so nothing about upcoming items or ground truth can leak.
"""

from __future__ import annotations

import mimetypes
import os
import secrets
import threading
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request, Response as HTTPResponse
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .domain import (
    A4_FRAMING,
    GroupPayload,
    GroupingPolicy,
    PairPayload,
    Procedure,
    ProcedureCounts,
    SinglePayload,
    StudyConfig,
    TaskInstance,
    task_prompt,
)
from .engine import StudyEngine, create_study
from .errors import (
    AuthError,
    CemisError,
    ForbiddenError,
    NotFoundError,
    ValidationError,
)
from .reporting import ReportKind, export, render
from .storage import StudyStore, data_root, open_engine

ADMIN_TOKEN_ENV = "CEMIS_ADMIN_TOKEN"

_STATUS_BY_CATEGORY_PREFIX = [
    ("auth.forbidden", 403),
    ("auth", 401),
    ("not_found", 404),
    ("session.", 409),
    ("study.exists", 409),
    ("reporting.empty", 409),
    ("storage.", 500),
    ("manifest.", 422),
    ("sampling.", 422),
    ("validation", 422),
    ("unsupported", 400),
]


def _status_for(category: str) -> int:
    for prefix, status in _STATUS_BY_CATEGORY_PREFIX:
        if category == prefix or category.startswith(prefix):
            return status
    return 400


class StudyCreateBody(BaseModel):
    study_id: str
    seed: int = Field(ge=0, lt=2**64)
    counts: Optional[dict] = None
    grouping_policy: Optional[str] = None
    shuffle_per_expert: bool = False


class ExpertBody(BaseModel):
    years_experience: int
    expert_id: Optional[str] = None


class ResponseBody(BaseModel):
    task_id: str
    answer: object


def wire_task(task: TaskInstance, progress: tuple[int, int]) -> dict:
    """Serialize one task for the client; blind by construction."""
    payload = task.payload
    if isinstance(payload, SinglePayload):
        wire_payload = {"type": "single", "image_id": payload.image_id}
    elif isinstance(payload, PairPayload):
        wire_payload = {"type": "pair", "slot1": payload.slot1, "slot2": payload.slot2}
    elif isinstance(payload, GroupPayload):
        wire_payload = {"type": "group", "image_ids": list(payload.image_ids)}
    else:  # pragma: no cover - payload union is closed
        raise ValidationError(f"unknown payload {payload!r}")
    wire = {
        "task_id": task.task_id,
        "procedure": task.procedure.value,
        "kind": task.kind.value,
        "prompt": task_prompt(task.procedure, task.kind),
        "options": list(task.options),
        "multi_select": task.multi_select,
        "payload": wire_payload,
        "progress": {"answered": progress[0], "total": progress[1]},
    }
    if task.procedure is Procedure.A4:
        wire["procedure_note"] = A4_FRAMING
    return wire


class _Runtime:
    """One loaded study: engine plus its store."""

    def __init__(self, store: StudyStore, engine: StudyEngine):
        self.store = store
        self.engine = engine


class AppState:
    def __init__(self, root: Path, admin_token: str, fsync: bool = True):
        self.root = root
        self.admin_token = admin_token
        self.fsync = fsync
        self._runtimes: dict[str, _Runtime] = {}
        self._lock = threading.Lock()

    def runtime(self, study_id: str) -> _Runtime:
        with self._lock:
            runtime = self._runtimes.get(study_id)
            if runtime is None:
                store = StudyStore(self.root, study_id, fsync=self.fsync)
                engine = open_engine(store)
                runtime = _Runtime(store, engine)
                self._runtimes[study_id] = runtime
            return runtime

    def register(self, study_id: str, runtime: _Runtime) -> None:
        with self._lock:
            self._runtimes[study_id] = runtime

    def find_session(self, token: str) -> _Runtime:
        """Locate the loaded runtime owning a session token."""
        with self._lock:
            loaded = list(self._runtimes.values())
        for runtime in loaded:
            if token in runtime.engine.sessions:
                return runtime
        # fall back to scanning studies on disk that are not loaded yet
        studies_dir = self.root / "studies"
        if studies_dir.is_dir():
            for child in sorted(studies_dir.iterdir()):
                if not child.is_dir() or child.name in self._runtimes:
                    continue
                try:
                    runtime = self.runtime(child.name)
                except CemisError:
                    continue
                if token in runtime.engine.sessions:
                    return runtime
        raise AuthError("unknown session token")


def create_app(
    data_dir: Optional[str] = None,
    admin_token: Optional[str] = None,
    fsync: bool = True,
) -> FastAPI:
    root = data_root(data_dir)
    admin = admin_token or os.environ.get(ADMIN_TOKEN_ENV)
    if not admin:
        raise ValidationError(
            f"no admin credential: set {ADMIN_TOKEN_ENV} or pass admin_token"
        )
    app = FastAPI(title="cemis", version="0.1.0")
    state = AppState(root, admin, fsync=fsync)
    app.state.cemis = state

    @app.exception_handler(CemisError)
    async def _domain_error(request: Request, exc: CemisError):
        return JSONResponse(
            status_code=_status_for(exc.category),
            content={"error": exc.category, "message": str(exc)},
        )

    def require_admin(x_admin_token: Optional[str] = Header(default=None)) -> None:
        if not x_admin_token or not secrets.compare_digest(x_admin_token, admin):
            raise AuthError("missing or invalid admin credential")

    def bearer_token(authorization: Optional[str] = Header(default=None)) -> Optional[str]:
        if authorization and authorization.lower().startswith("bearer "):
            return authorization[7:].strip()
        return None

    @app.get("/api/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/studies", status_code=201)
    def create_study_endpoint(body: StudyCreateBody, _: None = Depends(require_admin)):
        store = StudyStore(root, body.study_id, fsync=fsync)
        if store.study_exists():
            raise CemisError(
                f"study {body.study_id!r} already exists", category="study.exists"
            )
        pool = store.load_pool()
        config = StudyConfig(
            study_id=body.study_id,
            seed=body.seed,
            counts=ProcedureCounts(**body.counts) if body.counts else ProcedureCounts(),
            grouping_policy=(
                GroupingPolicy(body.grouping_policy)
                if body.grouping_policy
                else GroupingPolicy.HOMOGENEOUS_SOURCE_CATEGORY
            ),
            shuffle_per_expert=body.shuffle_per_expert,
        )
        study = create_study(config, pool)
        store.save_study(study)
        log = store.response_log()
        engine = StudyEngine(study, sink=lambda r: log.append(r).seq)
        state.register(body.study_id, _Runtime(store, engine))
        return {
            "study_id": study.study_id,
            "items": {
                "A1": len(study.a1_items),
                "A2": len(study.a2_items),
                "A3": len(study.a3_items),
                "A4": len(study.a4_pairs),
                "A5": len(study.a5_groups),
            },
            "tasks_per_expert": len(study.schedule),
            "a5_leftovers": {k: len(v) for k, v in study.a5_leftovers.items()},
        }

    @app.post("/api/studies/{study_id}/experts", status_code=201)
    def enroll_expert(study_id: str, body: ExpertBody, _: None = Depends(require_admin)):
        runtime = state.runtime(study_id)
        profile, token = runtime.engine.enroll_expert(
            body.years_experience, expert_id=body.expert_id
        )
        runtime.store.append_expert(profile, token)
        return {
            "expert_id": profile.expert_id,
            "experience_group": profile.experience_group.value,
            "session_token": token,
        }

    @app.get("/api/sessions/{token}/state")
    def session_state(token: str):
        runtime = state.find_session(token)
        return runtime.engine.session_view(token)

    @app.get("/api/sessions/{token}/task")
    def session_task(token: str):
        runtime = state.find_session(token)
        task = runtime.engine.next_task(token)
        if task is None:
            return {"completed": True}
        return wire_task(task, runtime.engine.progress(token))

    @app.post("/api/sessions/{token}/responses")
    def submit_response(token: str, body: ResponseBody):
        runtime = state.find_session(token)
        receipt = runtime.engine.submit_response(token, body.task_id, body.answer)
        next_task = runtime.engine.next_task(token)
        return {
            "receipt": {
                "response_id": receipt.response_id,
                "task_id": receipt.task_id,
                "seq": receipt.seq,
                "duplicate": receipt.duplicate,
            },
            "next": (
                {"completed": True}
                if next_task is None
                else wire_task(next_task, runtime.engine.progress(token))
            ),
        }

    @app.get("/api/images/{image_id}")
    def image_bytes(
        image_id: str,
        token: Optional[str] = Depends(bearer_token),
        x_admin_token: Optional[str] = Header(default=None),
    ):
        if x_admin_token and secrets.compare_digest(x_admin_token, admin):
            runtime = _find_image_runtime(state, image_id)
        else:
            if not token:
                raise AuthError("present a session bearer token or admin credential")
            runtime = state.find_session(token)
            task = runtime.engine.next_task(token)
            allowed: set[str] = set()
            if task is not None:
                payload = task.payload
                if isinstance(payload, SinglePayload):
                    allowed = {payload.image_id}
                elif isinstance(payload, PairPayload):
                    allowed = {payload.slot1, payload.slot2}
                elif isinstance(payload, GroupPayload):
                    allowed = set(payload.image_ids)
            if image_id not in allowed:
                raise ForbiddenError(
                    "image is not part of the caller's current task"
                )
        record = runtime.engine.study.image(image_id)
        path = Path(record.path)
        if not path.is_file():
            raise NotFoundError(f"image file missing on disk: {path}")
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return FileResponse(path, media_type=media_type)

    @app.get("/api/studies/{study_id}/reports/{kind}")
    def study_report(
        study_id: str,
        kind: str,
        format: str = "json",
        _: None = Depends(require_admin),
    ):
        runtime = state.runtime(study_id)
        try:
            report_kind = ReportKind(kind)
        except ValueError:
            raise NotFoundError(f"unknown report kind {kind!r}") from None
        # Statistics run over the durable log snapshot, not engine memory, so
        # responses appended by other writers (e.g. a simulation run against
        # the same data directory) are never silently missing.
        responses = runtime.store.load_responses()
        profiles = {p.expert_id: p for p, _ in runtime.store.load_experts()}
        envelope = render(report_kind, runtime.engine.study, responses, profiles)
        blob = export(envelope, format)
        media_type = "text/csv" if blob[:1] != b"{" else "application/json"
        return HTTPResponse(content=blob, media_type=media_type)

    return app


def _find_image_runtime(state: AppState, image_id: str):
    with state._lock:
        loaded = list(state._runtimes.values())
    for runtime in loaded:
        if image_id in runtime.engine.study.pool:
            return runtime
    studies_dir = state.root / "studies"
    if studies_dir.is_dir():
        for child in sorted(studies_dir.iterdir()):
            if not child.is_dir():
                continue
            try:
                runtime = state.runtime(child.name)
            except CemisError:
                continue
            if image_id in runtime.engine.study.pool:
                return runtime
    raise NotFoundError(f"unknown image {image_id!r}")


def serve(
    addr: str = "127.0.0.1:8000",
    data_dir: Optional[str] = None,
    admin_token: Optional[str] = None,
) -> None:
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValidationError(f"--addr must look like host:port, got {addr!r}")
    app = create_app(data_dir=data_dir, admin_token=admin_token)
    uvicorn.run(app, host=host, port=int(port), log_level="info")

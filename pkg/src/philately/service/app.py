"""FastAPI application exposing submissions, structure queries, leaderboard and statistics."""

from __future__ import annotations

import logging
from typing import Annotated

from fastapi import BackgroundTasks, FastAPI, File, Form, HTTPException, Query as Q, Request, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse

from philately.calculator import Calculator
from philately.cif import emit_cif
from philately.config import Config
from philately.pipeline import EmptySubmission, InvalidTransition, Pipeline, PipelineError
from philately.service.schemas import (
    ErrorBody,
    LeaderboardEntry,
    QueryResponse,
    RecordModel,
    StatsResponse,
    SubmissionCreated,
    SubmissionStatus,
)
from philately.store import BadQuery, Query, Store, StoreError

log = logging.getLogger(__name__)

MAX_LIMIT = 1000


def _split(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(v.strip() for v in value.split(",") if v.strip())


def create_app(store: Store, calc: Calculator, config: Config | None = None) -> FastAPI:
    config = config or Config()
    pipeline = Pipeline(store, calc, config)
    app = FastAPI(title="philately", version="0.1.0")
    app.state.store = store
    app.state.pipeline = pipeline

    @app.exception_handler(BadQuery)
    async def _bad_query(_: Request, exc: BadQuery):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(InvalidTransition)
    async def _conflict(_: Request, exc: InvalidTransition):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(StoreError)
    async def _store_error(_: Request, exc: StoreError):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    def _run(sub_id: str) -> None:
        try:
            pipeline.process(sub_id)
        except (PipelineError, StoreError):
            log.exception("processing of submission %s stopped", sub_id)

    @app.post("/submissions", response_model=SubmissionCreated, status_code=202,
              responses={422: {"model": ErrorBody}})
    async def create_submission(
        background: BackgroundTasks,
        participant: Annotated[str, Form()],
        files: Annotated[list[UploadFile], File()],
        process: Annotated[bool, Form()] = True,
    ):
        payload = []
        for f in files:
            raw = await f.read()
            payload.append((f.filename or "upload.cif", raw.decode("latin-1")))
        try:
            sub = pipeline.submit(participant, payload)
        except EmptySubmission as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        if process:
            background.add_task(_run, sub.id)
        return SubmissionCreated(id=sub.id, status=sub.status, files=len(payload))

    def _status(sub_id: str) -> SubmissionStatus:
        try:
            return SubmissionStatus.model_validate(pipeline.status(sub_id))
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no submission {sub_id}") from None

    @app.get("/submissions/{sub_id}", response_model=SubmissionStatus, responses={404: {"model": ErrorBody}})
    def get_submission(sub_id: str):
        return _status(sub_id)

    @app.post("/submissions/{sub_id}/evaluate", response_model=SubmissionStatus,
              responses={404: {"model": ErrorBody}, 409: {"model": ErrorBody}})
    def evaluate_submission(sub_id: str):
        _status(sub_id)
        pipeline.process(sub_id)
        return _status(sub_id)

    @app.get("/structures", response_model=QueryResponse, responses={400: {"model": ErrorBody}})
    def query_structures(
        elements: str | None = None,
        formula: str | None = None,
        spacegroup: int | None = None,
        source: str | None = None,
        wyckoff: str | None = None,
        max_ehull: float | None = None,
        include_duplicates: bool = False,
        offset: Annotated[int, Q(ge=0)] = 0,
        limit: Annotated[int, Q(ge=0, le=MAX_LIMIT)] = 100,
    ):
        q = Query(elements=_split(elements), formula=formula, space_group=spacegroup, source=source,
                  wyckoff=_split(wyckoff), max_ehull=max_ehull, canonical_only=not include_duplicates,
                  offset=offset, limit=limit)
        records, total = store.query_records(q)
        current = store.hull().current
        return QueryResponse(total=total, offset=offset, limit=limit,
                             records=[RecordModel.from_record(r, current[r.id]) for r in records])

    def _record(record_id: str):
        try:
            return store.get(record_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no structure {record_id}") from None

    @app.get("/structures/{record_id}.cif", response_class=PlainTextResponse,
             responses={404: {"model": ErrorBody}})
    def get_structure_cif(record_id: str):
        rec = _record(record_id)
        return PlainTextResponse(emit_cif(rec.structure, rec.id), media_type="chemical/x-cif")

    @app.get("/structures/{record_id}", response_model=RecordModel, responses={404: {"model": ErrorBody}})
    def get_structure(record_id: str):
        rec = _record(record_id)
        return RecordModel.from_record(rec, store.current_e_hull(rec.id))

    @app.get("/leaderboard", response_model=list[LeaderboardEntry])
    def get_leaderboard(start: Annotated[str | None, Q(alias="from")] = None,
                        end: Annotated[str | None, Q(alias="to")] = None):
        return [LeaderboardEntry(participant=r.participant, total_score=r.total_score,
                                 novel_count=r.novel_count, first_submission=r.first_submission)
                for r in store.leaderboard(start, end)]

    @app.get("/stats", response_model=StatsResponse, responses={400: {"model": ErrorBody}})
    def get_stats(bin_width: Annotated[float, Q(gt=0)] = 0.1):
        return StatsResponse.from_dict(store.summarize_corpus(bin_width).to_dict())

    return app


def app_from_config(config: Config) -> FastAPI:
    """Application over the durable store configured in `config`."""
    store = Store(config.store.path, eps_hull=config.hull.eps_hull, snapshot_every=config.store.snapshot_every,
                  match_tolerances=(config.dedup.ltol, config.dedup.stol, config.dedup.atol))
    return create_app(store, config.build_calculator(), config)

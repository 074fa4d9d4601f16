"""HTTP session service over the release + denoise + decide pipeline.

Confidential counts never appear in any response; clients see noisy
releases, posterior summaries, decisions and ledger totals only.  All
mutating endpoints accept an Idempotency-Key header so retries never spend
budget twice.
"""

from __future__ import annotations

from typing import Annotated

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..decisions import (
    LossSpec,
    escape_upper_bound,
    max_class_distance,
    required_topup,
    trinary_rule,
)
from ..errors import BudgetExhaustedError, DesignError, DomainError
from ..exact import DesignSizes, OutcomeTable
from ..posterior import posterior_report, rejection_evidence
from .store import Dataset, ServiceConfig, Session, SessionSettings, Store

ADVICE_SPEND_MULTIPLIER = 3.0


class TableBody(BaseModel):
    n1: int
    n0: int
    n11: int
    n01: int


class DatasetBody(BaseModel):
    table: TableBody
    cap: float | None = Field(default=None, gt=0)


class LossBody(BaseModel):
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda_u: float = 0.025


class SessionBody(BaseModel):
    epsilon: float = Field(gt=0)
    prior: dict | None = None
    alpha: float = Field(default=0.05, gt=0, lt=1)
    losses: LossBody = LossBody()
    eta: float = Field(default=0.05, gt=0, lt=1)


class TopupBody(BaseModel):
    epsilon_plus: float = Field(gt=0)


class CalibrationBody(BaseModel):
    method: str = "worst-case"
    alpha_freq: float = Field(default=0.05, gt=0, lt=1)
    eta: float | None = Field(default=None, gt=0, lt=1)


def _error(status: int, code: str, message: str, **extra):
    return HTTPException(status_code=status, detail={"code": code, "message": message, **extra})


def create_app(config: ServiceConfig | None = None, store: Store | None = None) -> FastAPI:
    config = config or ServiceConfig()
    store = store or Store(config)
    app = FastAPI(title="dp-frt release service")
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "malformed_request", "message": str(exc.errors()[:1])},
        )

    @app.exception_handler(HTTPException)
    async def flat_errors(request: Request, exc: HTTPException):
        # error bodies are flat {code, message, ...}
        detail = (
            exc.detail
            if isinstance(exc.detail, dict)
            else {"code": "error", "message": str(exc.detail)}
        )
        return JSONResponse(status_code=exc.status_code, content=detail)

    def authorized(authorization: Annotated[str | None, Header()] = None):
        if config.token is None:
            return
        if authorization != f"Bearer {config.token}":
            raise _error(401, "unauthorized", "missing or invalid bearer token")

    def get_dataset(dataset_id: str) -> Dataset:
        dataset = store.datasets.get(dataset_id)
        if dataset is None:
            raise _error(404, "unknown_dataset", f"no dataset {dataset_id}")
        return dataset

    def get_session(session_id: str) -> Session:
        session = store.sessions.get(session_id)
        if session is None:
            raise _error(404, "unknown_session", f"no session {session_id}")
        return session

    def ledger_view(dataset: Dataset) -> dict:
        ledger = dataset.ledger
        return {
            "dataset_id": dataset.dataset_id,
            "cap": dataset.cap,
            "spent": ledger.spent,
            "remaining": None if dataset.cap is None else ledger.remaining,
            "entries": [
                {
                    "mechanism": e.mechanism,
                    "epsilon": e.epsilon,
                    "timestamp": e.timestamp,
                    "release_id": e.release_id,
                }
                for e in ledger.entries
            ],
        }

    def session_view(session: Session) -> dict:
        dataset = store.datasets[session.dataset_id]
        settings = session.settings
        pp = store.session_posterior(session)
        psi = rejection_evidence(pp, settings.alpha)
        decision = trinary_rule(psi, LossSpec(*settings.losses), alpha=settings.alpha)
        ledger = dataset.ledger
        return {
            "session_id": session.session_id,
            "dataset_id": session.dataset_id,
            "settings": settings.to_dict(),
            "releases": [
                {
                    "n11_tilde": r.n11_tilde,
                    "n01_tilde": r.n01_tilde,
                    "epsilon": r.epsilon,
                    "released_at": r.released_at,
                    "release_id": r.release_id,
                }
                for r in session.releases
            ],
            "posterior": posterior_report(
                pp, alpha=settings.alpha, max_points=2048
            ),
            "psi": psi,
            "decision": decision.to_dict(),
            "budget": {
                "spent": ledger.spent,
                "cap": dataset.cap,
                "remaining": None if dataset.cap is None else ledger.remaining,
            },
        }

    @app.post("/datasets", status_code=201, dependencies=[Depends(authorized)])
    def create_dataset(
        body: DatasetBody,
        idempotency_key: Annotated[str | None, Header()] = None,
    ):
        cached = store.idempotent(idempotency_key, "datasets")
        if cached:
            return JSONResponse(status_code=cached[0], content=cached[1])
        try:
            table = OutcomeTable(
                DesignSizes(body.table.n1, body.table.n0),
                body.table.n11,
                body.table.n01,
            )
        except DesignError as exc:
            raise _error(400, "invalid_table", str(exc))
        dataset = store.create_dataset(table, body.cap)
        payload = {"dataset_id": dataset.dataset_id, "cap": dataset.cap}
        store.remember(idempotency_key, "datasets", 201, payload)
        return payload

    @app.post(
        "/datasets/{dataset_id}/sessions",
        status_code=201,
        dependencies=[Depends(authorized)],
    )
    def create_session(
        dataset_id: str,
        body: SessionBody,
        idempotency_key: Annotated[str | None, Header()] = None,
    ):
        dataset = get_dataset(dataset_id)
        cached = store.idempotent(idempotency_key, f"sessions:{dataset_id}")
        if cached:
            return JSONResponse(status_code=cached[0], content=cached[1])
        settings = SessionSettings(
            epsilon=body.epsilon,
            prior_spec=body.prior or {"family": "uniform"},
            alpha=body.alpha,
            losses=(body.losses.lambda0, body.losses.lambda1, body.losses.lambda_u),
            eta=body.eta,
        )
        try:
            session = store.create_session(dataset, settings)
        except BudgetExhaustedError as exc:
            raise _error(
                409, "budget_exhausted", str(exc), remaining_budget=exc.remaining
            )
        except DomainError as exc:
            raise _error(400, "invalid_request", str(exc))
        payload = session_view(session)
        store.remember(idempotency_key, f"sessions:{dataset_id}", 201, payload)
        return payload

    @app.get("/sessions/{session_id}", dependencies=[Depends(authorized)])
    def read_session(session_id: str):
        return session_view(get_session(session_id))

    @app.post("/sessions/{session_id}/topup", dependencies=[Depends(authorized)])
    def topup(
        session_id: str,
        body: TopupBody,
        idempotency_key: Annotated[str | None, Header()] = None,
    ):
        session = get_session(session_id)
        cached = store.idempotent(idempotency_key, f"topup:{session_id}")
        if cached:
            return JSONResponse(status_code=cached[0], content=cached[1])
        try:
            store.topup_session(session, body.epsilon_plus)
        except BudgetExhaustedError as exc:
            raise _error(
                409, "budget_exhausted", str(exc), remaining_budget=exc.remaining
            )
        payload = session_view(session)
        store.remember(idempotency_key, f"topup:{session_id}", 200, payload)
        return payload

    @app.get("/sessions/{session_id}/advice", dependencies=[Depends(authorized)])
    def advice(session_id: str, eta: float | None = None):
        session = get_session(session_id)
        dataset = store.datasets[session.dataset_id]
        settings = session.settings
        eta = eta if eta is not None else settings.eta
        if not 0 < eta < 1:
            raise _error(400, "invalid_request", f"eta must lie in (0,1), got {eta}")
        pp = store.session_posterior(session)
        psi = rejection_evidence(pp, settings.alpha)
        decision = trinary_rule(psi, LossSpec(*settings.losses), alpha=settings.alpha)
        if decision.outcome != "abstain":
            raise _error(
                409,
                "not_abstaining",
                f"advice applies only to abstaining sessions (decision: {decision.outcome})",
            )
        l_max = max_class_distance(dataset.table.design, settings.alpha)
        if l_max < 1:
            raise _error(
                409, "degenerate_classes",
                "one decision class is empty; no top-up can change the decision",
            )
        bound = required_topup(psi, decision.region, l_max, eta)
        remaining = dataset.ledger.remaining
        suggested = (
            None
            if bound.unbounded
            else min(
                bound.epsilon_plus_lower_bound * ADVICE_SPEND_MULTIPLIER,
                remaining if dataset.cap is not None else float("inf"),
            )
        )
        curve_grid = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0]
        return {
            "session_id": session.session_id,
            "psi": psi,
            "advice": bound.to_dict(),
            "note": "necessary minimum, not sufficient",
            "suggested_spend": suggested,
            "escape_bound_curve": [
                {
                    "epsilon_plus": e,
                    "bound": escape_upper_bound(psi, decision.region, l_max, e),
                }
                for e in curve_grid
            ],
            "remaining_budget": None if dataset.cap is None else remaining,
        }

    @app.get("/datasets/{dataset_id}/ledger", dependencies=[Depends(authorized)])
    def read_ledger(dataset_id: str):
        return ledger_view(get_dataset(dataset_id))

    @app.post(
        "/sessions/{session_id}/calibrations", dependencies=[Depends(authorized)]
    )
    def calibrate(session_id: str, body: CalibrationBody):
        session = get_session(session_id)
        dataset = store.datasets[session.dataset_id]
        if body.method not in ("worst-case", "neyman"):
            raise _error(400, "invalid_request", f"unknown method {body.method!r}")
        if body.method == "neyman":
            if body.eta is None or not 0 < body.eta < body.alpha_freq:
                raise _error(
                    400, "invalid_request",
                    "neyman calibration requires 0 < eta < alpha_freq",
                )
        try:
            status, payload = store.calibration_payload(
                dataset, session, body.method, body.alpha_freq, body.eta
            )
        except DomainError as exc:
            raise _error(400, "invalid_request", str(exc))
        return JSONResponse(status_code=status, content=payload)

    @app.get("/calibrations/{job_id}", dependencies=[Depends(authorized)])
    def calibration_job(job_id: str):
        job = store.jobs.get(job_id)
        if job is None:
            raise _error(404, "unknown_job", f"no calibration job {job_id}")
        if job["status"] == "pending":
            return JSONResponse(status_code=202, content={"status": "pending"})
        if job["status"] == "failed":
            raise _error(500, "calibration_failed", job["message"])
        return job["result"]

    @app.get("/healthz")
    def health():
        return {"status": "ok"}

    return app

"""JSON HTTP facade over the assistant services.

Every response matches a schema shipped under schemas/; error bodies share
one shape: {"code", "message", "retriable"}. The server holds no per-client
state, so any request sequence replayed against a fresh server with the same
fixture data returns the same bodies (given an injected clock).
"""

from __future__ import annotations

import datetime as dt
import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import services as services_mod
from .corpus import TimeRange
from .engine import EngineOverloaded, EvolutionQueueFull, Runtime
from .errors import ConflictError, NotFoundError, ValidationError
from .feeds import FeedUnavailable, normalize_name
from .llm import PromptTooLarge, ProviderUnavailable
from .services import NoProfileError, NoPublicationsFound, NotSignedUpError

logger = logging.getLogger(__name__)

VERDICT_MAP = {"like": services_mod.LIKE_PLAIN, "dislike": services_mod.DISLIKE_PLAIN}


class ProfileRequest(BaseModel):
    name: str


class ProfileEditRequest(BaseModel):
    name: str
    text: str


class ChatRequest(BaseModel):
    name: str
    question: str


class FeedbackRequest(BaseModel):
    verdict: str


class CommentRequest(BaseModel):
    name: str
    minutes: int


class SignupRequest(BaseModel):
    name: str
    email: str


class UpdateRequest(BaseModel):
    date: str | None = None


def _error(status: int, code: str, message: str, retriable: bool = False) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "retriable": retriable},
    )


def _profile_response(payload: dict, code: str | None = None) -> dict:
    return {
        "user": payload["user"],
        "profile": payload["profile"],
        "origin": payload["origin"],
        "updated_at": payload["updated_at"],
        "code": code,
    }


def build_app(runtime: Runtime, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="paperdesk", version="0.1.0", docs_url=None, redoc_url=None)
    services = runtime.services
    engine = runtime.engine

    @app.exception_handler(RequestValidationError)
    async def on_request_validation(request: Request, exc: RequestValidationError):
        return _error(400, "VALIDATION", str(exc.errors()[:1]))

    @app.exception_handler(ValidationError)
    async def on_validation(request: Request, exc: ValidationError):
        return _error(400, "VALIDATION", str(exc))

    @app.exception_handler(NoProfileError)
    async def on_no_profile(request: Request, exc: NoProfileError):
        return _error(409, "NO_PROFILE", str(exc))

    @app.exception_handler(NotSignedUpError)
    async def on_not_signed_up(request: Request, exc: NotSignedUpError):
        return _error(409, "NOT_SIGNED_UP", str(exc))

    @app.exception_handler(ConflictError)
    async def on_conflict(request: Request, exc: ConflictError):
        return _error(409, "CONFLICT", str(exc))

    @app.exception_handler(NotFoundError)
    async def on_not_found(request: Request, exc: NotFoundError):
        # KeyError reprs wrap the message in quotes; unwrap for the body.
        return _error(404, "NOT_FOUND", exc.args[0] if exc.args else "not found")

    @app.exception_handler(PromptTooLarge)
    async def on_prompt_too_large(request: Request, exc: PromptTooLarge):
        return _error(400, "PROMPT_TOO_LARGE", str(exc))

    @app.exception_handler(ProviderUnavailable)
    async def on_provider_unavailable(request: Request, exc: ProviderUnavailable):
        return _error(502, "PROVIDER_UNAVAILABLE", str(exc), retriable=True)

    @app.exception_handler(FeedUnavailable)
    async def on_feed_unavailable(request: Request, exc: FeedUnavailable):
        return _error(502, "FEED_UNAVAILABLE", str(exc), retriable=True)

    @app.exception_handler(EngineOverloaded)
    async def on_overloaded(request: Request, exc: EngineOverloaded):
        return _error(503, "OVERLOADED", str(exc), retriable=True)

    @app.exception_handler(EvolutionQueueFull)
    async def on_queue_full(request: Request, exc: EvolutionQueueFull):
        return _error(503, "QUEUE_FULL", str(exc), retriable=True)

    @app.post("/profile")
    def create_profile(req: ProfileRequest):
        with engine.request_slot():
            try:
                payload = services.generate_profile(req.name)
            except NoPublicationsFound:
                return _profile_response(
                    {"user": normalize_name(req.name), "profile": "", "origin": None, "updated_at": None},
                    code="NO_PUBLICATIONS",
                )
            return _profile_response(payload)

    @app.put("/profile")
    def edit_profile(req: ProfileEditRequest):
        with engine.request_slot():
            return _profile_response(services.edit_profile(req.name, req.text))

    @app.get("/trends")
    def get_trends(name: str = "", range: str = "week"):
        with engine.request_slot():
            payload = services.generate_trends(name, TimeRange.parse(range))
            return {
                "user": payload["user"],
                "range": payload["range"],
                "trending_papers": payload["trending_papers"],
                "topics": payload["topics"],
                "ideas": payload["ideas"],
                "generated_at": payload["generated_at"],
            }

    @app.post("/chat")
    def chat(req: ChatRequest):
        with engine.request_slot():
            payload = services.answer_chat(req.name, req.question)
            return {
                "exchange_id": payload["exchange_id"],
                "user": payload["user"],
                "question": payload["question"],
                "answer_augmented": payload["answer_augmented"],
                "answer_plain": payload["answer_plain"],
                "created_at": payload["created_at"],
            }

    @app.get("/chat/{exchange_id}")
    def get_exchange(exchange_id: str):
        with engine.request_slot():
            payload = services.get_exchange(exchange_id)
            wire_verdict = {v: k for k, v in VERDICT_MAP.items()}.get(payload["feedback"])
            return {**payload, "feedback": wire_verdict}

    @app.post("/chat/{exchange_id}/feedback")
    def feedback(exchange_id: str, req: FeedbackRequest):
        verdict = VERDICT_MAP.get(req.verdict)
        if verdict is None:
            return _error(400, "VALIDATION", f"verdict must be 'like' or 'dislike', got {req.verdict!r}")
        with engine.request_slot():
            payload = services.apply_feedback(exchange_id, verdict)
            return {"exchange_id": payload["exchange_id"], "kept": payload["kept"]}

    @app.post("/comment")
    def comment(req: CommentRequest):
        with engine.request_slot():
            payload = services.record_saved_minutes(req.name, req.minutes)
            return {"ack": payload["ack"], "mean_minutes": payload["mean_minutes"]}

    @app.post("/signup")
    def signup(req: SignupRequest):
        with engine.request_slot():
            payload = services.signup(req.name, req.email)
            return {"ack": payload["ack"], "user": payload["user"]}

    @app.get("/health")
    def health():
        return engine.health()

    @app.post("/admin/update")
    def admin_update(req: UpdateRequest | None = None):
        date = None
        if req is not None and req.date:
            try:
                date = dt.date.fromisoformat(req.date)
            except ValueError:
                return _error(400, "VALIDATION", f"bad date: {req.date!r}")
        summary = runtime.engine.run_daily_update(date)
        return summary

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app

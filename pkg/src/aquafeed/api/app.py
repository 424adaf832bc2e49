"""FastAPI application over a ControlService.

Read endpoints serve consistent snapshots of the per-tank state; write
endpoints funnel into the tank's serialized decision loop. /api/v1/stream
pushes state-delta events as server-sent events.
"""

from __future__ import annotations

import asyncio
import functools
import json
import queue
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..control.engine import FeedCapExceededError
from ..control.service import ControlService, UnknownTankError
from ..control.state import AlertRule
from ..errors import InvalidInputError
from .models import (
    DecisionPageResponse,
    EventPageResponse,
    FeedRequest,
    FeedResponse,
    RuleModel,
    ScenarioRequest,
    ScenarioResponse,
    TankListResponse,
    TankStateModel,
    TelemetryRangeResponse,
)

STREAM_POLL_S = 0.25
STREAM_KEEPALIVE_S = 10.0


def create_app(service: ControlService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="aquafeed control API", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service

    @app.exception_handler(UnknownTankError)
    async def _unknown_tank(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=404, content={"error": "not-found", "detail": str(exc)})

    @app.exception_handler(FeedCapExceededError)
    async def _cap(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=409, content={"error": "feed-cap", "detail": str(exc)})

    @app.exception_handler(InvalidInputError)
    async def _invalid(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"error": "invalid-input", "detail": str(exc)})

    @app.get("/api/v1/tanks", response_model=TankListResponse)
    def list_tanks():
        return {"tanks": service.tank_ids()}

    @app.get("/api/v1/tanks/{tank_id}", response_model=TankStateModel)
    def tank_state(tank_id: str):
        runtime = service.get(tank_id)
        return runtime.controller.state_dict()

    @app.get("/api/v1/tanks/{tank_id}/telemetry", response_model=TelemetryRangeResponse)
    def telemetry_range(
        tank_id: str,
        kind: str,
        from_ts: int = Query(default=0, ge=0),
        to_ts: int = Query(default=2**62),
    ):
        runtime = service.get(tank_id)
        if from_ts > to_ts:
            raise HTTPException(status_code=400, detail="from_ts must be <= to_ts")
        points = runtime.store.query_range(tank_id, kind, from_ts, to_ts)
        return {"tank_id": tank_id, "kind": kind, "points": points}

    @app.get("/api/v1/tanks/{tank_id}/decisions", response_model=DecisionPageResponse)
    def decisions(tank_id: str, offset: int = Query(0, ge=0), limit: int = Query(50, ge=1, le=500)):
        runtime = service.get(tank_id)
        return {"tank_id": tank_id, "decisions": runtime.controller.decisions_page(offset, limit)}

    @app.get("/api/v1/tanks/{tank_id}/events", response_model=EventPageResponse)
    def events(tank_id: str, after_seq: int = Query(0, ge=0), limit: int = Query(100, ge=1, le=1000)):
        runtime = service.get(tank_id)
        return {"tank_id": tank_id, "events": runtime.controller.events_page(after_seq, limit)}

    @app.post("/api/v1/tanks/{tank_id}/feed", response_model=FeedResponse)
    def manual_feed(tank_id: str, request: FeedRequest):
        runtime = service.get(tank_id)
        result = runtime.controller.request_manual_feed(request.command_id)
        response = dict(result)
        if result.get("decision_id") is not None:
            decision = runtime.controller.fold.decisions.get(result["decision_id"])
            if decision is not None:
                response["decision"] = decision.to_dict()
        return response

    @app.put("/api/v1/tanks/{tank_id}/rules", response_model=RuleModel)
    def update_rule(tank_id: str, rule: RuleModel):
        runtime = service.get(tank_id)
        runtime.controller.update_rule(
            AlertRule(rule.kind, rule.low, rule.high, rule.hysteresis, rule.action)
        )
        return rule

    @app.post("/api/v1/tanks/{tank_id}/scenario", response_model=ScenarioResponse)
    def scenario(tank_id: str, request: ScenarioRequest):
        return service.scenario_control(tank_id, request.action, request.speed)

    @app.get("/api/v1/stream")
    async def stream(
        tank_id: str,
        max_events: int = Query(default=0, ge=0, description="stop after N events (0 = endless)"),
        timeout_s: float = Query(default=0.0, ge=0.0, description="stop after this long (0 = endless)"),
    ):
        service.get(tank_id)  # 404 before the stream starts
        q = service.hub.subscribe(tank_id)

        async def gen():
            loop = asyncio.get_running_loop()
            sent = 0
            idle = 0.0
            deadline = time.monotonic() + timeout_s if timeout_s > 0 else None
            try:
                yield ": connected\n\n"
                while True:
                    if deadline is not None and time.monotonic() >= deadline:
                        return
                    try:
                        delta = await loop.run_in_executor(
                            None, functools.partial(q.get, timeout=STREAM_POLL_S)
                        )
                    except queue.Empty:
                        idle += STREAM_POLL_S
                        if idle >= STREAM_KEEPALIVE_S:
                            idle = 0.0
                            yield ": keepalive\n\n"
                        continue
                    idle = 0.0
                    yield f"data: {json.dumps(delta, separators=(',', ':'))}\n\n"
                    sent += 1
                    if max_events and sent >= max_events:
                        return
            finally:
                service.hub.unsubscribe(tank_id, q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="dashboard")

    return app

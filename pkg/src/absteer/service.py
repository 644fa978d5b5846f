"""HTTP session service: lets a human replace the simulated user live.

A thin adapter over the engine: every behavior is the engine's own, the
service only validates input, serializes views, and streams per-timestep
events. Sessions are handled one command at a time; a second command
arriving while one is in flight is refused rather than queued.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator, Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .autouser import AutouserConfig
from .engine import Engine, EngineConfig, Session
from .learning import Feedback
from .reports import RunLog, SessionLog, entropy_series, success_curve
from .selectors import SelectorConfig
from .surrogate import EnvConfig, SurrogateState, render_description


class SessionCreateRequest(BaseModel):
    seed: Optional[int] = None
    k_au: int = Field(default=5, ge=2)
    max_adjustments: int = Field(default=200, ge=1)


class FeedbackRequest(BaseModel):
    kind: str
    manual_operator: Optional[str] = None
    travel_to: Optional[int] = None


class ServiceState:
    def __init__(self, engine: Engine):
        self.engine = engine
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.events: dict[str, list[dict]] = {}

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    def push_event(self, session: Session, view: dict) -> dict:
        buf = self.events[session.session_id]
        event = {
            "id": len(buf) + 1,
            "type": "state" if session.open else "closed",
            "session": session.session_id,
            "view": view,
        }
        buf.append(event)
        return event


def _describe(state: SurrogateState) -> dict:
    stats = state.stats
    occurrences = max(1, stats.named_occurrences)
    return {
        "text": render_description(stats),
        "fingerprint": stats.fingerprint,
        "unique_named": stats.unique_named,
        "named_occurrences": stats.named_occurrences,
        "conjunct_count": stats.conjunct_count,
        "disjunct_count": stats.disjunct_count,
        "box_range_count": stats.box_range_count,
        "n_boxes": stats.n_boxes,
        "volumes": {
            "named_total": stats.vol_named_total,
            "named_unique": stats.vol_named_unique,
            "box_total": stats.vol_box_total,
            "box_unique": stats.vol_box_unique,
            "conjunct_total": stats.vol_conjunct_total,
            "conjunct_unique": stats.vol_conjunct_unique,
        },
        "named_predicates": [
            {
                "id": pid,
                "count": count,
                "share": count / occurrences,
            }
            for pid, count in sorted(stats.named_multiset.items())
        ],
        "disallowed_predicates": sorted(state.params.disallowed_predicates),
    }


def build_view(engine: Engine, session: Session, state: ServiceState) -> dict:
    w = engine.weights.w
    order = w.argsort()
    specs = engine.specs

    def weight_rows(ids):
        return [
            {"selector": int(i), "label": specs[int(i)].label(), "weight": float(w[int(i)])}
            for i in ids
        ]

    trace = session.pending_trace
    return {
        "session_id": session.session_id,
        "open": session.open,
        "close_reason": session.close_reason,
        "timestep": session.current.timestep,
        "question": session.question.to_json_dict(),
        "last_operator": session.pending_operator,
        "fell_back": session.pending_fell_back,
        "description": _describe(session.current),
        "params": {
            "refinement_depth": session.current.params.refinement_depth,
            "sampling_radius": session.current.params.sampling_radius,
            "merge_iters": session.current.params.merge_iters,
            "produce_greater_abstraction": session.current.params.produce_greater_abstraction,
            "split_question_vars_only": session.current.params.split_question_vars_only,
        },
        "last_d_samp": trace.to_json_dict()["d_samp"] if trace else None,
        "entropy": trace.entropy if trace else None,
        "weights_top": weight_rows(order[::-1][:10]),
        "weights_bottom": weight_rows(order[:10]),
        "success_rate": engine.store.global_success_rate(),
        "allowed_actions": ["m", "l", "b", "u"] if session.open else [],
        "operators": [op.name for op in engine.catalog.selectable],
        "event_id": len(state.events[session.session_id]),
    }


def _session_run_log(engine: Engine, session_id: str) -> RunLog:
    records = [
        r.to_json_dict() for r in engine.store.records if r.session_id == session_id
    ]
    return RunLog([SessionLog(session_id, None, records, None)])


def create_app(
    out_dir: Optional[Path] = None,
    master_seed: int = 0,
    env_cfg: Optional[EnvConfig] = None,
    engine_cfg: EngineConfig = EngineConfig(),
    selector_cfg: SelectorConfig = SelectorConfig(),
) -> FastAPI:
    engine = Engine(
        env_cfg=env_cfg or EnvConfig(master_seed=master_seed),
        engine_cfg=engine_cfg,
        selector_cfg=selector_cfg,
        out_dir=out_dir,
    )
    state = ServiceState(engine)
    app = FastAPI(title="absteer session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.service = state

    @app.get("/catalog")
    def get_catalog():
        return {
            "operators": engine.catalog.to_json(),
            "selectable": [op.name for op in engine.catalog.selectable],
            "selector_census": len(engine.specs),
            "selectors": [s.to_json_dict() for s in engine.specs],
        }

    @app.post("/sessions")
    def create_session(req: SessionCreateRequest):
        if req.k_au != 5:
            raise HTTPException(
                status_code=422, detail="k_au must be 5 for the built-in criteria set"
            )
        session = engine.create_session(user_source="interactive", seed=req.seed)
        state.sessions[session.session_id] = session
        state.locks[session.session_id] = threading.Lock()
        state.events[session.session_id] = []
        view = build_view(engine, session, state)
        state.push_event(session, view)
        return {"session_id": session.session_id, "view": view}

    @app.get("/sessions/{session_id}")
    def get_view(session_id: str):
        session = state.get(session_id)
        return build_view(engine, session, state)

    @app.get("/sessions/{session_id}/history")
    def get_history(session_id: str):
        state.get(session_id)
        timeline = [
            {
                "t": r.timestep,
                "op": r.operator,
                "feedback": r.feedback,
                "fingerprint": r.fingerprint,
                "unique_named": r.unique_named,
            }
            for r in engine.store.records
            if r.session_id == session_id
        ]
        return {"session": session_id, "timeline": timeline}

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, req: FeedbackRequest):
        session = state.get(session_id)
        if not session.open:
            raise HTTPException(status_code=409, detail="session is closed")
        if req.kind not in ("m", "l", "b", "u"):
            raise HTTPException(status_code=400, detail=f"unknown feedback kind {req.kind!r}")
        try:
            feedback = Feedback(
                req.kind, manual_operator=req.manual_operator, travel_to=req.travel_to
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        lock = state.locks[session_id]
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a feedback is already in flight")
        try:
            try:
                engine.run_timestep(session, feedback)
            except KeyError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            view = build_view(engine, session, state)
            state.push_event(session, view)
            return view
        finally:
            lock.release()

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        state.get(session_id)
        run = _session_run_log(engine, session_id)
        return {
            "session": session_id,
            "success_curve": success_curve(run),
            "entropy": entropy_series(run),
            "global_success_rate": engine.store.global_success_rate(),
            "operator_uses": {
                op.name: int(engine.store.use_counts[i])
                for i, op in enumerate(engine.catalog.selectable)
            },
        }

    @app.get("/sessions/{session_id}/events")
    def stream_events(
        session_id: str,
        request: Request,
        after: int = Query(default=0, ge=0),
        limit: Optional[int] = Query(default=None, ge=1),
    ):
        session = state.get(session_id)
        header_resume = request.headers.get("last-event-id")
        if header_resume:
            try:
                after = max(after, int(header_resume))
            except ValueError:
                pass

        def generate() -> Iterator[str]:
            sent = 0
            cursor = after
            buf = state.events[session_id]
            while True:
                while cursor < len(buf):
                    event = buf[cursor]
                    cursor += 1
                    sent += 1
                    yield f"id: {event['id']}\ndata: {json.dumps(event)}\n\n"
                    if limit is not None and sent >= limit:
                        return
                if not session.open:
                    return
                if limit is not None:
                    return  # do not block test clients waiting for more
                import time

                time.sleep(0.05)

        return StreamingResponse(generate(), media_type="text/event-stream")

    return app

"""Session service: episodes, live events, theory and feedback endpoints.

Sessions are independent and serialized internally; the event list per
session backs both the step responses and the server-sent event stream
consumed by the advisor console.
"""

from __future__ import annotations

import asyncio
import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from . import dsl, trace, worlds
from .governor import Feedback, RevisionError, Session, process_feedback
from .reasons import ReasonError, expr_atoms


class CreateSessionBody(BaseModel):
    scenario: str
    theory: Optional[str] = None  # inline .grt text
    advisor: str = "scripted"  # "scripted" | "remote"
    advisor_timeout: float = 0.0
    seed: int = 0


class FeedbackBody(BaseModel):
    step: int
    criticized_action: str
    expected_mat: str
    reason: str


class RemoteAdvisor:
    """Advisor backed by the session's feedback queue.

    With a zero timeout the review returns immediately (feedback is then
    applied post-hoc through the feedback endpoint); a positive timeout
    blocks the in-flight step until feedback arrives or the timeout runs
    out.
    """

    def __init__(self, svc: "ServiceSession", timeout: float):
        self.svc = svc
        self.timeout = timeout

    def review(self, record) -> Optional[Feedback]:
        self.svc.emit("advisor_request", {"step": record.step})
        if self.timeout <= 0:
            return None
        self.svc.pending_step = record.step
        try:
            return self.svc.feedback_queue.get(timeout=self.timeout)
        except queue.Empty:
            return None
        finally:
            self.svc.pending_step = None


@dataclass
class ServiceSession:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    events: list[dict] = field(default_factory=list)
    feedback_queue: "queue.Queue[Feedback]" = field(default_factory=queue.Queue)
    pending_step: Optional[int] = None

    def emit(self, kind: str, data: dict) -> None:
        self.events.append({"event": kind, "data": data})

    def validate_feedback(self, body: FeedbackBody) -> Feedback:
        try:
            expected = dsl.parse_mat_head_text(body.expected_mat)
            reason = dsl.parse_rexpr_text(body.reason)
        except dsl.DslError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        theory = self.session.mm_state.theory
        mat_arity = theory.mat_signatures.get(expected.name)
        if mat_arity is not None and mat_arity != len(expected.args):
            raise HTTPException(status_code=400, detail="arity mismatch for MAT %s" % expected.name)
        for atom in expr_atoms(reason):
            declared = theory.reason_signatures.get(atom.predicate)
            if declared is not None and declared != len(atom.args):
                raise HTTPException(
                    status_code=400,
                    detail="arity mismatch for reason predicate %s" % atom.predicate)
            if not atom.is_ground():
                raise HTTPException(status_code=400, detail="feedback reason must be ground")
        if not expected.is_ground():
            raise HTTPException(status_code=400, detail="expected MAT must be ground")
        return Feedback(
            criticized_action=body.criticized_action,
            expected_mat=expected,
            reason=reason,
            step=body.step,
        )


def create_app() -> FastAPI:
    app = FastAPI(title="reasonguard session service")
    sessions: dict[str, ServiceSession] = {}

    def get_session(session_id: str) -> ServiceSession:
        svc = sessions.get(session_id)
        if svc is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return svc

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        doc = None
        if body.theory:
            try:
                doc = dsl.parse_theory(body.theory)
            except dsl.DslError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        if body.scenario == "therapy1":
            session = worlds.therapy_scenario_1(theory_doc=doc, advisor=None)
        elif body.scenario == "therapy2":
            session = worlds.therapy_scenario_2(theory_doc=doc)
        elif body.scenario == "grid":
            session = worlds.gridworld_scenario(seed=body.seed)
        else:
            raise HTTPException(status_code=400, detail="unknown scenario %r" % body.scenario)
        svc = ServiceSession(session=session)
        if body.advisor == "remote":
            session.advisor = RemoteAdvisor(svc, body.advisor_timeout)
        session_id = uuid.uuid4().hex[:12]
        sessions[session_id] = svc
        return {"session_id": session_id}

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str):
        svc = get_session(session_id)
        with svc.lock:
            if svc.session.halted or svc.session.finished:
                raise HTTPException(status_code=409, detail="session is not steppable")
            record = svc.session.run_step()
            if record is None:
                raise HTTPException(status_code=409, detail="episode already ended")
            payload = trace.record_payload(record)
            payload["halted"] = svc.session.halted
            payload["finished"] = svc.session.finished
            svc.emit("record", payload)
            if svc.session.finished or svc.session.halted:
                svc.emit("end", {"halted": svc.session.halted})
            return payload

    @app.get("/sessions/{session_id}/events")
    async def events(session_id: str, request: Request):
        svc = get_session(session_id)

        async def stream():
            cursor = 0
            while True:
                if await request.is_disconnected():
                    return
                while cursor < len(svc.events):
                    event = svc.events[cursor]
                    yield "id: %d\nevent: %s\ndata: %s\n\n" % (
                        cursor, event["event"], json.dumps(event["data"]))
                    if event["event"] == "end":
                        return
                    cursor += 1
                await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/feedback")
    def feedback(session_id: str, body: FeedbackBody):
        svc = get_session(session_id)
        fb = svc.validate_feedback(body)
        if svc.pending_step == body.step:
            svc.feedback_queue.put(fb)
            with svc.lock:  # wait for the blocked step to finish
                record = next((r for r in svc.session.records if r.step == body.step), None)
            if record is None or record.revision is None:
                raise HTTPException(status_code=409, detail="feedback was not applied")
            return {"revision": trace.record_payload(record)["revision"]}
        with svc.lock:
            record = next((r for r in svc.session.records if r.step == body.step), None)
            if record is None:
                raise HTTPException(status_code=404, detail="no record for step %d" % body.step)
            try:
                new_state, revision = process_feedback(svc.session.mm_state, record, fb)
            except RevisionError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except ReasonError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            svc.session.mm_state = new_state
            payload = trace._revision_payload(revision)
            svc.emit("revision", {"step": body.step, "revision": payload})
            return {"revision": payload}

    @app.get("/sessions/{session_id}/theory", response_class=PlainTextResponse)
    def theory(session_id: str):
        svc = get_session(session_id)
        with svc.lock:
            state = svc.session.mm_state
            doc = dsl.document_from_parts(
                state.theory,
                definitions=dict(state.mat_definitions),
                conflict_pairs=state.conflict_oracle.declared,
            )
            return dsl.print_theory(doc)

    @app.get("/sessions/{session_id}/justification/{step}")
    def justification(session_id: str, step: int):
        svc = get_session(session_id)
        with svc.lock:
            record = next((r for r in svc.session.records if r.step == step), None)
        if record is None:
            raise HTTPException(status_code=404, detail="no record for step %d" % step)
        j = record.justification
        defeated = j.defeated_indices()
        nodes = [
            {
                "index": i,
                "source": g.source_id,
                "substitution": {v: c for v, c in g.substitution},
                "conclusion": str(g.conclusion),
                "defeated": i in defeated,
            }
            for i, g in enumerate(j.triggered)
        ]
        edges = [{"kind": "conflict", "a": a, "b": b} for a, b in sorted(j.conflicts)]
        edges += [{"kind": "defeat", "from": winner, "to": loser}
                  for loser, winner in sorted(j.defeats)]
        return {"step": step, "nodes": nodes, "edges": edges,
                "phi_perm": trace._phi_payload(record.phi_perm)}

    return app


app = create_app()

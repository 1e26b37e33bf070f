import json
from importlib import resources
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from reasonguard.service import create_app

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def client():
    return TestClient(create_app())


def create(client, **kwargs):
    body = {"scenario": "therapy1"}
    body.update(kwargs)
    response = client.post("/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()["session_id"]


FEEDBACK_1 = {"step": 1, "criticized_action": "idle",
              "expected_mat": "report(h)", "reason": "F(h)"}


class TestSessions:
    def test_create_unknown_scenario(self, client):
        response = client.post("/sessions", json={"scenario": "marswalk"})
        assert response.status_code == 400

    def test_create_bad_inline_theory(self, client):
        response = client.post("/sessions", json={"scenario": "therapy1",
                                                  "theory": "rule oops\n"})
        assert response.status_code == 400

    def test_unknown_session_is_404(self, client):
        assert client.post("/sessions/nope/step").status_code == 404
        assert client.get("/sessions/nope/theory").status_code == 404
        assert client.post("/sessions/nope/feedback", json=FEEDBACK_1).status_code == 404

    def test_step_payload_matches_cli_trace(self, client):
        session_id = create(client)
        payload = client.post("/sessions/%s/step" % session_id).json()
        assert payload.pop("halted") is False
        assert payload.pop("finished") is True
        golden = json.loads((GOLDEN / "therapy1.jsonl").read_text())
        assert payload == golden

    def test_step_after_finish_is_409(self, client):
        session_id = create(client)
        client.post("/sessions/%s/step" % session_id)
        assert client.post("/sessions/%s/step" % session_id).status_code == 409


class TestFeedbackFlow:
    def test_remote_advisor_post_hoc_revision(self, client):
        session_id = create(client, advisor="remote")
        payload = client.post("/sessions/%s/step" % session_id).json()
        # The remote advisor does not block the step; no revision yet.
        assert payload["revision"] is None
        response = client.post("/sessions/%s/feedback" % session_id, json=FEEDBACK_1)
        assert response.status_code == 200
        revision = response.json()["revision"]
        assert revision["blame"] == "moral_module"
        assert revision["added_default"] == "d3: F(X) => report(X)"
        assert revision["added_priorities"] == [["d1", "d3"]]
        theory_text = client.get("/sessions/%s/theory" % session_id).text
        shipped = resources.files("reasonguard.data").joinpath(
            "therapy_revised.grt").read_text()
        assert theory_text == shipped

    def test_feedback_unknown_step(self, client):
        session_id = create(client, advisor="remote")
        client.post("/sessions/%s/step" % session_id)
        body = dict(FEEDBACK_1, step=9)
        assert client.post("/sessions/%s/feedback" % session_id,
                           json=body).status_code == 404

    @pytest.mark.parametrize("patch", [
        {"expected_mat": "report("},          # syntax error
        {"expected_mat": "report(X)"},        # not ground
        {"expected_mat": "report(h, x)"},     # arity mismatch
        {"reason": "F(h, x)"},                # reason arity mismatch
        {"reason": "F(X)"},                   # reason not ground
    ])
    def test_malformed_feedback_is_400(self, client, patch):
        session_id = create(client, advisor="remote")
        client.post("/sessions/%s/step" % session_id)
        body = dict(FEEDBACK_1)
        body.update(patch)
        assert client.post("/sessions/%s/feedback" % session_id,
                           json=body).status_code == 400

    def test_revision_cycle_is_409(self, client):
        theory = (
            "reason D/1\nreason W/1\nreason F/1\n"
            "mat protect(X) := G !disclosed(X)\n"
            "mat follow(W) := G !intervened\n"
            "mat report(X) := F reported(X)\n"
            "rule d1: D(X) => protect(X)\n"
            "rule d2: F(X) => report(X)\n"
            "prefer d1 > d2\n"
            "conflict protect(X) <> report(Y)\n")
        session_id = create(client, advisor="remote", theory=theory)
        client.post("/sessions/%s/step" % session_id)
        response = client.post("/sessions/%s/feedback" % session_id, json=FEEDBACK_1)
        assert response.status_code == 409

    def test_executor_side_feedback(self, client):
        session_id = create(client, scenario="therapy2", advisor="remote")
        client.post("/sessions/%s/step" % session_id)
        body = dict(FEEDBACK_1, criticized_action="call_number(emergency)")
        response = client.post("/sessions/%s/feedback" % session_id, json=body)
        assert response.status_code == 200
        assert response.json()["revision"]["blame"] == "executor_side"


class TestTheoryEndpoint:
    def test_initial_theory_is_canonical_base(self, client):
        session_id = create(client)
        text = client.get("/sessions/%s/theory" % session_id).text
        shipped = resources.files("reasonguard.data").joinpath(
            "therapy_base.grt").read_text()
        assert text == shipped


class TestJustificationEndpoint:
    def test_graph_shape(self, client):
        session_id = create(client, scenario="therapy2")
        client.post("/sessions/%s/step" % session_id)
        graph = client.get("/sessions/%s/justification/1" % session_id).json()
        assert [n["source"] for n in graph["nodes"]] == ["d1", "d2", "d3"]
        assert [n["defeated"] for n in graph["nodes"]] == [True, False, False]
        assert graph["nodes"][0]["substitution"] == {"X": "l"}
        conflict_edges = [e for e in graph["edges"] if e["kind"] == "conflict"]
        defeat_edges = [e for e in graph["edges"] if e["kind"] == "defeat"]
        assert [(e["a"], e["b"]) for e in conflict_edges] == [(0, 2), (1, 2)]
        assert defeat_edges == [{"kind": "defeat", "from": 2, "to": 0}]
        assert graph["phi_perm"]["mats"] == ["follow(not_i)", "report(h)"]

    def test_unknown_step_is_404(self, client):
        session_id = create(client, scenario="therapy2")
        assert client.get("/sessions/%s/justification/5" % session_id).status_code == 404


class TestEventStream:
    def read_events(self, client, session_id):
        events = []
        with client.stream("GET", "/sessions/%s/events" % session_id) as response:
            assert response.status_code == 200
            assert response.headers["content-type"].startswith("text/event-stream")
            current = {}
            for line in response.iter_lines():
                if line.startswith("event:"):
                    current["event"] = line.split(":", 1)[1].strip()
                elif line.startswith("data:"):
                    current["data"] = json.loads(line.split(":", 1)[1])
                elif line == "" and current:
                    events.append(current)
                    current = {}
        return events

    def test_stream_carries_record_and_end(self, client):
        session_id = create(client)
        client.post("/sessions/%s/step" % session_id)
        events = self.read_events(client, session_id)
        kinds = [e["event"] for e in events]
        assert kinds == ["record", "end"]
        record = events[0]["data"]
        golden = json.loads((GOLDEN / "therapy1.jsonl").read_text())
        record.pop("halted")
        record.pop("finished")
        assert record == golden

    def test_remote_advisor_emits_request_event(self, client):
        session_id = create(client, advisor="remote")
        client.post("/sessions/%s/step" % session_id)
        client.post("/sessions/%s/feedback" % session_id, json=FEEDBACK_1)
        events = self.read_events(client, session_id)
        kinds = [e["event"] for e in events]
        assert kinds[0] == "advisor_request"
        assert "record" in kinds
        assert kinds[-1] == "end"

    def test_multi_step_stream(self, client):
        session_id = create(client, scenario="grid", seed=42)
        while True:
            response = client.post("/sessions/%s/step" % session_id)
            if response.status_code == 409 or response.json()["finished"]:
                break
        events = self.read_events(client, session_id)
        records = [e for e in events if e["event"] == "record"]
        golden = [json.loads(line) for line in
                  (GOLDEN / "grid_seed42.jsonl").read_text().splitlines()]
        assert len(records) == len(golden)
        for got, want in zip(records, golden):
            got["data"].pop("halted")
            got["data"].pop("finished")
            assert got["data"] == want

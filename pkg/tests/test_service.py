from __future__ import annotations

import threading
import time

import pytest
from fastapi.testclient import TestClient

from capgap.backends import OracleBackend, default_oracle_config
from capgap.service import create_app

TOKEN = "test-token"
AUTH = {"Authorization": f"Bearer {TOKEN}"}


class SlowOracle(OracleBackend):
    """Oracle with an injected per-evaluation delay for progress observation."""

    def __init__(self, config, delay: float) -> None:
        super().__init__(config)
        self.delay = delay

    def _score_alignment(self, sample, subgoal):
        time.sleep(self.delay)
        return super()._score_alignment(sample, subgoal)


@pytest.fixture
def medical_backend():
    return OracleBackend(default_oracle_config("medical"), complete_after_rounds=2)


@pytest.fixture
def client(tmp_path, medical_backend):
    app = create_app(tmp_path / "data", medical_backend, api_token=TOKEN)
    with TestClient(app) as c:
        yield c


def _medical_goal() -> dict:
    return {
        "statement": "Answer medical questions with safety in mind.",
        "domain_label": "medical",
        "task_type": "qa",
    }


def _upload_dataset(client, texts: list[str]) -> str:
    body = {
        "samples": [{"id": f"s{i}", "input": t, "output": ""} for i, t in enumerate(texts)],
    }
    response = client.post("/datasets", json=body, headers=AUTH)
    assert response.status_code == 201
    return response.json()["id"]


def _medical_subgoal_set(client) -> dict:
    session = client.post(
        "/sessions", json={"goal": _medical_goal(), "max_rounds": 1}, headers=AUTH
    ).json()
    done = client.post(
        f"/sessions/{session['id']}/responses",
        json={"version": session["version"], "responses": ["a"] * len(session["exchanges"][0]["questions"])},
        headers=AUTH,
    ).json()
    assert done["state"] == "decomposed"
    return done["result"]


def _wait_for_job(client, route: str, job_id: str, timeout: float = 10.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        handle = client.get(f"{route}/{job_id}").json()
        if handle["state"] in ("done", "failed", "partial"):
            return handle
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish")


class TestHealthAndAuth:
    def test_health_open(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def test_mutating_requires_token(self, client):
        response = client.post("/sessions", json={"goal": _medical_goal()})
        assert response.status_code == 401

    def test_absent_token_disables_mutations(self, tmp_path, medical_backend):
        app = create_app(tmp_path / "d2", medical_backend, api_token=None)
        with TestClient(app) as bare:
            response = bare.post("/sessions", json={"goal": _medical_goal()})
            assert response.status_code == 403
            assert bare.get("/health").status_code == 200

    def test_schema_violation_is_400_class(self, client):
        response = client.post("/sessions", json={"goal": {"statement": 42}}, headers=AUTH)
        assert response.status_code == 422
        assert response.json()["detail"][0]["loc"]


class TestSessions:
    def test_create_returns_awaiting_with_questions(self, client):
        response = client.post("/sessions", json={"goal": _medical_goal()}, headers=AUTH)
        assert response.status_code == 201
        body = response.json()
        assert body["state"] == "awaiting_responses"
        assert any("specialties" in q.lower() for q in body["exchanges"][0]["questions"])

    def test_get_after_create(self, client):
        created = client.post("/sessions", json={"goal": _medical_goal()}, headers=AUTH).json()
        fetched = client.get(f"/sessions/{created['id']}").json()
        assert fetched == created

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_responses_advance_round(self, client):
        session = client.post("/sessions", json={"goal": _medical_goal(), "max_rounds": 3}, headers=AUTH).json()
        n = len(session["exchanges"][0]["questions"])
        after = client.post(
            f"/sessions/{session['id']}/responses",
            json={"version": session["version"], "responses": ["x"] * n},
            headers=AUTH,
        )
        assert after.status_code == 200
        assert len(after.json()["exchanges"]) == 2

    def test_stale_version_conflicts(self, client):
        session = client.post("/sessions", json={"goal": _medical_goal(), "max_rounds": 3}, headers=AUTH).json()
        n = len(session["exchanges"][0]["questions"])
        first = client.post(
            f"/sessions/{session['id']}/responses",
            json={"version": session["version"], "responses": ["x"] * n},
            headers=AUTH,
        )
        assert first.status_code == 200
        second = client.post(
            f"/sessions/{session['id']}/responses",
            json={"version": session["version"], "responses": ["x"] * n},
            headers=AUTH,
        )
        assert second.status_code == 409

    def test_racing_submits_exactly_one_wins(self, tmp_path):
        backend = OracleBackend(default_oracle_config("medical"))
        app = create_app(tmp_path / "race", backend, api_token=TOKEN)
        with TestClient(app) as racing_client:
            session = racing_client.post(
                "/sessions", json={"goal": _medical_goal(), "max_rounds": 3}, headers=AUTH
            ).json()
            n = len(session["exchanges"][0]["questions"])
            payload = {"version": session["version"], "responses": ["x"] * n}
            statuses = []

            def submit():
                response = racing_client.post(
                    f"/sessions/{session['id']}/responses", json=payload, headers=AUTH
                )
                statuses.append(response.status_code)

            threads = [threading.Thread(target=submit) for _ in range(2)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert sorted(statuses) == [200, 409]

    def test_finalize_decomposes(self, client):
        session = client.post("/sessions", json={"goal": _medical_goal(), "max_rounds": 5}, headers=AUTH).json()
        done = client.post(
            f"/sessions/{session['id']}/finalize",
            json={"version": session["version"]},
            headers=AUTH,
        ).json()
        assert done["state"] == "decomposed"
        assert [s["label"] for s in done["result"]["subgoals"]] == [
            "Clinical reasoning", "Cardiology expertise", "Drug information",
        ]

    def test_abandon(self, client):
        session = client.post("/sessions", json={"goal": _medical_goal()}, headers=AUTH).json()
        gone = client.post(
            f"/sessions/{session['id']}/abandon",
            json={"version": session["version"]},
            headers=AUTH,
        ).json()
        assert gone["state"] == "abandoned"

    def test_sessions_persist_across_restart(self, tmp_path, medical_backend):
        app = create_app(tmp_path / "persist", medical_backend, api_token=TOKEN)
        with TestClient(app) as c1:
            session = c1.post("/sessions", json={"goal": _medical_goal()}, headers=AUTH).json()
        app2 = create_app(tmp_path / "persist", medical_backend, api_token=TOKEN)
        with TestClient(app2) as c2:
            fetched = c2.get(f"/sessions/{session['id']}")
            assert fetched.status_code == 200
            assert fetched.json()["state"] == session["state"]


class TestAssessments:
    def test_job_runs_to_done_with_report(self, client):
        dataset_id = _upload_dataset(client, ["cardiac heart ecg", "drug dosage mg", "plain text"])
        subgoal_set = _medical_subgoal_set(client)
        response = client.post(
            "/assessments",
            json={"dataset_id": dataset_id, "subgoal_set": subgoal_set, "tau": 0.4},
            headers=AUTH,
        )
        assert response.status_code == 202
        handle = _wait_for_job(client, "/assessments", response.json()["id"])
        assert handle["state"] == "done"
        assert handle["progress"] == 1.0
        report = client.get(handle["result_ref"]).json()
        assert report["n_records"] == 9
        assert len(report["summaries"]) == 3

    def test_progress_observable_midway(self, tmp_path):
        backend = SlowOracle(default_oracle_config("medical"), delay=0.05)
        app = create_app(tmp_path / "slow", backend, api_token=TOKEN)
        with TestClient(app) as slow_client:
            dataset_id = _upload_dataset(slow_client, ["cardiac"] * 4)
            subgoal_set = {
                "goal_id": "g",
                "subgoals": [
                    {"id": "cardiology_expertise", "label": "C", "description": "c."},
                    {"id": "drug_information", "label": "D", "description": "d."},
                    {"id": "clinical_reasoning", "label": "R", "description": "r."},
                ],
            }
            job = slow_client.post(
                "/assessments",
                json={"dataset_id": dataset_id, "subgoal_set": subgoal_set, "concurrency": 1},
                headers=AUTH,
            ).json()
            saw_intermediate = False
            for _ in range(200):
                handle = slow_client.get(f"/assessments/{job['id']}").json()
                if handle["state"] == "done":
                    break
                if 0.0 < handle["progress"] < 1.0:
                    saw_intermediate = True
                    assert 0 < handle["completed"] < handle["total"] == 12
                time.sleep(0.01)
            assert saw_intermediate
            assert _wait_for_job(slow_client, "/assessments", job["id"])["state"] == "done"

    def test_idempotent_creation(self, client):
        dataset_id = _upload_dataset(client, ["cardiac"])
        subgoal_set = _medical_subgoal_set(client)
        body = {
            "dataset_id": dataset_id,
            "subgoal_set": subgoal_set,
            "idempotency_key": "abc",
        }
        first = client.post("/assessments", json=body, headers=AUTH).json()
        second = client.post("/assessments", json=body, headers=AUTH).json()
        assert first["id"] == second["id"]

    def test_unknown_dataset_404(self, client):
        subgoal_set = _medical_subgoal_set(client)
        response = client.post(
            "/assessments",
            json={"dataset_id": "ghost", "subgoal_set": subgoal_set},
            headers=AUTH,
        )
        assert response.status_code == 404


class TestGapsRecommendSynthesis:
    def _assessed(self, client):
        dataset_id = _upload_dataset(
            client,
            ["cardiac heart ecg myocardial coronary cardio ekg cardiovascular",
             "routine note", "another plain note"],
        )
        subgoal_set = _medical_subgoal_set(client)
        job = client.post(
            "/assessments",
            json={"dataset_id": dataset_id, "subgoal_set": subgoal_set},
            headers=AUTH,
        ).json()
        _wait_for_job(client, "/assessments", job["id"])
        return job["id"]

    def test_gaps_recommendations_synthesis_flow(self, client):
        assessment_id = self._assessed(client)
        gaps = client.post(
            "/gaps", json={"assessment_id": assessment_id, "tau": 0.4}, headers=AUTH
        ).json()
        assert gaps["flagged_subgoal_ids"]
        recommendations = client.post(
            "/recommendations", json={"gaps_id": gaps["id"]}, headers=AUTH
        ).json()["recommendations"]
        assert len(recommendations) == len(gaps["findings"])

        flagged = gaps["flagged_subgoal_ids"][0]
        job = client.post(
            "/synthesis",
            json={"gaps_id": gaps["id"], "subgoal_id": flagged, "target_count": 3},
            headers=AUTH,
        )
        assert job.status_code == 202
        handle = _wait_for_job(client, "/synthesis", job.json()["id"])
        assert handle["state"] == "done"
        result = client.get(f"/synthesis/{handle['id']}").json()["result"]
        assert len(result["accepted"]) == 3

    def test_gaps_for_unknown_assessment_404(self, client):
        response = client.post("/gaps", json={"assessment_id": "ghost"}, headers=AUTH)
        assert response.status_code == 404


class TestCorruptionRoute:
    def test_experiment_with_builtin_pattern(self, client):
        dataset_id = _upload_dataset(
            client,
            ["cardiac heart ecg myocardial", "drug dosage mg", "plain note", "cardio ekg"],
        )
        subgoal_set = _medical_subgoal_set(client)
        job = client.post(
            "/experiments/corruption",
            json={
                "dataset_id": dataset_id,
                "subgoal_set": subgoal_set,
                "pattern_name": "medical_cardiology",
            },
            headers=AUTH,
        )
        assert job.status_code == 202
        handle = _wait_for_job(client, "/experiments", job.json()["id"])
        assert handle["state"] == "done"
        report = client.get(f"/experiments/{handle['id']}/report").json()
        assert report["pattern_name"] == "medical_cardiology"
        target_rows = [r for r in report["rows"] if r["is_target"]]
        assert len(target_rows) == 1
        assert report["retention_pct"] == pytest.approx(50.0)


class TestStaticMount:
    def test_frontend_assets_served_when_present(self, tmp_path, medical_backend):
        static = tmp_path / "dist"
        static.mkdir()
        (static / "index.html").write_text("<html><body>capgap ui</body></html>")
        app = create_app(tmp_path / "withui", medical_backend, api_token=TOKEN, static_dir=static)
        with TestClient(app) as c:
            response = c.get("/ui/")
            assert response.status_code == 200
            assert "capgap ui" in response.text

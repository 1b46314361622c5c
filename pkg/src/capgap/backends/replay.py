"""Record/replay backend: replays previously recorded calls with zero traffic."""

from __future__ import annotations

import json
from typing import Optional

from ..errors import ReplayMissError
from ..model import (
    AlignmentRecord,
    GapFinding,
    Recommendation,
    RecordStatus,
    Sample,
    SubgoalSet,
    content_hash,
)
from ..storage import ReplayStore
from .base import EvaluatorBackend


class ReplayBackend(EvaluatorBackend):
    """Serves recorded responses; with an inner backend it records pass-through.

    The replayed backend id is preserved so score-cache keys stay identical
    between recording and replay runs.
    """

    kind = "replay"

    def __init__(self, store: ReplayStore, inner: Optional[EvaluatorBackend] = None) -> None:
        super().__init__()
        self.store = store
        self.inner = inner
        if inner is not None:
            store.set_backend_id(inner.id)
            self.id = inner.id
        else:
            recorded = store.backend_id()
            if recorded is None:
                raise ReplayMissError("replay store is empty and no inner backend was given")
            self.id = recorded

    def _fetch(self, op: str, fingerprint: str, producer):
        key = f"{op}:{fingerprint}"
        stored = self.store.get(key)
        if stored is not None:
            return stored
        if self.inner is None:
            raise ReplayMissError(f"no recording for {key}")
        value = producer()
        self.store.put(key, value)
        return value

    # hooks -------------------------------------------------------------------

    def _score_alignment(self, sample, subgoal):
        fingerprint = content_hash(sample.input, sample.output, subgoal.id)
        key = f"score:{fingerprint}"
        stored = self.store.get(key)
        if stored is not None:
            record = AlignmentRecord.from_dict(stored)
            # replayed records keep their recorded evaluator id but must point
            # at the caller's sample id
            if record.sample_id != sample.id:
                record = AlignmentRecord.from_dict({**stored, "sample_id": sample.id})
            return record
        if self.inner is None:
            raise ReplayMissError(f"no recording for {key}")
        record = self.inner.score_alignment(sample, subgoal)
        # transport failures are retryable and must not be pinned into the tape
        if record.status is RecordStatus.OK or record.failure_kind == "format":
            self.store.put(key, record.to_dict())
        return record

    def _generate_questions(self, goal, history):
        fingerprint = content_hash(
            goal.statement,
            goal.domain_label,
            json.dumps([e.to_dict() for e in history]),
        )
        payload = self._fetch("questions", fingerprint, lambda: self._call_questions(goal, history))
        return list(payload["questions"]), bool(payload["complete"])

    def _call_questions(self, goal, history) -> dict:
        questions, complete = self.inner.generate_questions(goal, history)
        return {"questions": questions, "complete": complete}

    def _decompose_goal(self, goal, history):
        fingerprint = content_hash(
            goal.statement,
            goal.domain_label,
            json.dumps([e.to_dict() for e in history]),
        )
        payload = self._fetch(
            "decompose",
            fingerprint,
            lambda: self.inner.decompose_goal(goal, history).to_dict(),
        )
        return SubgoalSet.from_dict(payload)

    def _analyze_gap(self, explanations, subgoal):
        fingerprint = content_hash(subgoal.id, *explanations)
        payload = self._fetch(
            "analyze",
            fingerprint,
            lambda: self.inner.analyze_gap(explanations, subgoal).to_dict(),
        )
        return GapFinding.from_dict(payload)

    def _recommend(self, gap, subgoal):
        fingerprint = content_hash(subgoal.id, json.dumps(gap.to_dict()))
        payload = self._fetch(
            "recommend",
            fingerprint,
            lambda: self.inner.recommend(gap, subgoal).to_dict(),
        )
        return Recommendation.from_dict(payload)

    def _generate_samples(self, subgoal, gap, count, iteration):
        fingerprint = content_hash(
            subgoal.id,
            json.dumps(gap.to_dict()) if gap else "",
            str(count),
            str(iteration),
        )
        payload = self._fetch(
            "generate",
            fingerprint,
            lambda: [s.to_dict() for s in self.inner.generate_samples(subgoal, gap, count, iteration)],
        )
        return [Sample.from_dict(s) for s in payload]

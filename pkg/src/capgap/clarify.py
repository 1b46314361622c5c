"""Interactive goal-clarification sessions: question rounds, refinement, decomposition.

Sessions are immutable values; every operation returns a new session with a
bumped version, which is what the optimistic-concurrency layer checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

from .backends.base import EvaluatorBackend
from .errors import PreconditionError, StateError
from .model import ClarifyingExchange, Goal, SubgoalSet, content_hash, validate_subgoal_set


class SessionState(str, Enum):
    CREATED = "created"
    AWAITING_RESPONSES = "awaiting_responses"
    REFINING = "refining"
    DECOMPOSED = "decomposed"
    ABANDONED = "abandoned"


@dataclass(frozen=True)
class ClarificationSession:
    id: str
    goal: Goal
    state: SessionState
    exchanges: tuple[ClarifyingExchange, ...]
    max_rounds: int
    result: Optional[SubgoalSet] = None
    version: int = 1
    transitions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "state", SessionState(self.state))
        object.__setattr__(self, "exchanges", tuple(self.exchanges))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if self.max_rounds < 1:
            raise PreconditionError("max_rounds must be >= 1")
        if len(self.exchanges) > self.max_rounds:
            raise StateError("more exchanges than max_rounds")
        if (self.state is SessionState.DECOMPOSED) != (self.result is not None):
            raise StateError("result must be present exactly in the decomposed state")
        if self.result is not None and validate_subgoal_set(self.result):
            raise StateError("decomposed session carries an invalid subgoal set")

    @property
    def pending_questions(self) -> tuple[str, ...]:
        if self.state is not SessionState.AWAITING_RESPONSES or not self.exchanges:
            return ()
        last = self.exchanges[-1]
        if len(last.responses) < len(last.questions):
            return last.questions
        return ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "goal": self.goal.to_dict(),
            "state": self.state.value,
            "exchanges": [e.to_dict() for e in self.exchanges],
            "max_rounds": self.max_rounds,
            "result": self.result.to_dict() if self.result else None,
            "version": self.version,
            "transitions": list(self.transitions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClarificationSession":
        return cls(
            id=data["id"],
            goal=Goal.from_dict(data["goal"]),
            state=SessionState(data["state"]),
            exchanges=tuple(ClarifyingExchange.from_dict(e) for e in data["exchanges"]),
            max_rounds=data["max_rounds"],
            result=SubgoalSet.from_dict(data["result"]) if data.get("result") else None,
            version=data.get("version", 1),
            transitions=tuple(data.get("transitions", ())),
        )


def _decompose(session: ClarificationSession, backend: EvaluatorBackend) -> ClarificationSession:
    result = backend.decompose_goal(session.goal, session.exchanges)
    return replace(
        session,
        state=SessionState.DECOMPOSED,
        result=result,
        version=session.version + 1,
        transitions=session.transitions + (SessionState.REFINING.value, SessionState.DECOMPOSED.value),
    )


def start_session(
    goal: Goal, backend: EvaluatorBackend, max_rounds: int = 3, session_id: str = ""
) -> ClarificationSession:
    """Open a session; round-1 questions are populated immediately, unless the
    backend already judges the goal specific enough to decompose."""
    if max_rounds < 1:
        raise PreconditionError("max_rounds must be >= 1")
    session = ClarificationSession(
        id=session_id or content_hash(goal.id, goal.statement, str(max_rounds)),
        goal=goal,
        state=SessionState.CREATED,
        exchanges=(),
        max_rounds=max_rounds,
        transitions=(SessionState.CREATED.value,),
    )
    questions, complete = backend.generate_questions(goal, ())
    if complete:
        return _decompose(session, backend)
    return replace(
        session,
        state=SessionState.AWAITING_RESPONSES,
        exchanges=(ClarifyingExchange(round=1, questions=tuple(questions)),),
        version=session.version + 1,
        transitions=session.transitions + (SessionState.AWAITING_RESPONSES.value,),
    )


def submit_responses(
    session: ClarificationSession, responses: Sequence[str], backend: EvaluatorBackend
) -> ClarificationSession:
    """Record one round of answers and either ask again or decompose.

    The loop always terminates: either the backend signals completeness or
    the round counter reaches max_rounds.
    """
    if session.state is not SessionState.AWAITING_RESPONSES:
        raise StateError(f"cannot submit responses in state {session.state.value}")
    pending = session.pending_questions
    if len(responses) != len(pending):
        raise PreconditionError(
            f"expected {len(pending)} responses, got {len(responses)}"
        )
    answered = replace(
        session.exchanges[-1], responses=tuple(str(r) for r in responses)
    )
    session = replace(session, exchanges=session.exchanges[:-1] + (answered,))

    if len(session.exchanges) >= session.max_rounds:
        return _decompose(session, backend)
    questions, complete = backend.generate_questions(session.goal, session.exchanges)
    if complete:
        return _decompose(session, backend)
    next_exchange = ClarifyingExchange(
        round=len(session.exchanges) + 1, questions=tuple(questions)
    )
    return replace(
        session,
        exchanges=session.exchanges + (next_exchange,),
        version=session.version + 1,
        transitions=session.transitions + (SessionState.AWAITING_RESPONSES.value,),
    )


def force_finalize(
    session: ClarificationSession, backend: EvaluatorBackend
) -> ClarificationSession:
    """Practitioner steering: decompose now, treating the goal specification as complete."""
    if session.state is SessionState.DECOMPOSED:
        raise StateError("session is already decomposed")
    if session.state is SessionState.ABANDONED:
        raise StateError("session was abandoned")
    return _decompose(session, backend)


def abandon_session(session: ClarificationSession) -> ClarificationSession:
    if session.state is SessionState.DECOMPOSED:
        raise StateError("cannot abandon a decomposed session")
    if session.state is SessionState.ABANDONED:
        return session
    return replace(
        session,
        state=SessionState.ABANDONED,
        version=session.version + 1,
        transitions=session.transitions + (SessionState.ABANDONED.value,),
    )

"""Per-timestep orchestration and bootstrap runs.

Flow per timestep: the user's reaction to the current state resolves the
reward for the operator that produced it (updating selector weights), the
resolved record is appended to the store, and for an m/l request the
selectors vote, votes aggregate, the exploration-adjusted choice is applied
(or the fallback copies the state when the choice cannot act), producing
the next state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .autouser import Autouser, AutouserConfig, AutouserVerdict
from .decision import DecisionTrace, aggregate_votes, choose_operator, make_trace
from .history import HistoryStore, InteractionRecord
from .learning import Feedback, SelectorWeights, reward_from_feedback
from .operators import (
    InapplicableOperator,
    OperatorCatalog,
    apply_operator,
    build_catalog,
    fallback_state,
)
from .selectors import (
    SelectorConfig,
    build_context,
    build_selector_specs,
    projection_vectors,
    run_voting_rounds,
)
from .surrogate import EnvConfig, StateParams, SurrogateState, make_state

_SESSION_PURPOSE = 401


@dataclass(frozen=True)
class EngineConfig:
    history_window: int = 512
    ucb_count_scope: str = "global"  # "global" or "session"
    policy: str = "learned"  # "learned" or "blank"
    max_records: Optional[int] = None  # advisory record-count cap
    wall_clock_seconds: Optional[float] = None  # per-session budget

    def __post_init__(self):
        if self.ucb_count_scope not in ("global", "session"):
            raise ValueError("ucb_count_scope must be 'global' or 'session'")
        if self.policy not in ("learned", "blank"):
            raise ValueError("policy must be 'learned' or 'blank'")


@dataclass(eq=False)
class Question:
    question_id: str
    dims: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {"id": self.question_id, "dims": list(self.dims)}


@dataclass(eq=False)
class Session:
    session_id: str
    question: Question
    user_source: str
    rng: np.random.Generator
    current: SurrogateState
    open: bool = True
    # Decision that produced the current state, pending reward resolution.
    pending_operator: str = "start"
    pending_votes: Optional[np.ndarray] = None
    pending_trace: Optional[DecisionTrace] = None
    pending_gen_req: Optional[str] = None
    pending_fell_back: bool = False
    pending_payload: Optional[dict] = None
    fingerprints: list[str] = field(default_factory=list)
    unique_named_counts: list[int] = field(default_factory=list)
    session_use_counts: Optional[np.ndarray] = None
    previous_state: Optional[SurrogateState] = None
    adjudicated: int = 0
    close_reason: Optional[str] = None
    started_at: float = field(default_factory=time.monotonic)
    event_seq: int = 0


class Engine:
    """One learning engine instance: catalog, selector census, weights, store."""

    def __init__(
        self,
        env_cfg: EnvConfig = EnvConfig(),
        au_cfg: AutouserConfig = AutouserConfig(),
        engine_cfg: EngineConfig = EngineConfig(),
        selector_cfg: SelectorConfig = SelectorConfig(),
        out_dir: Optional[Union[str, Path]] = None,
    ):
        self.env_cfg = env_cfg
        self.au_cfg = au_cfg
        self.engine_cfg = engine_cfg
        self.selector_cfg = selector_cfg
        self.catalog: OperatorCatalog = build_catalog(env_cfg)
        self.specs = build_selector_specs(self.catalog, selector_cfg)
        self.weights = SelectorWeights(len(self.specs))
        self.proj_vectors = projection_vectors(
            env_cfg.master_seed, selector_cfg.n_projection_vectors
        )
        self.store = HistoryStore(
            env_cfg.master_seed,
            out_dir=Path(out_dir) if out_dir is not None else None,
            selectable_names=[op.name for op in self.catalog.selectable],
        )
        self._session_counter = 0
        self._blank_sel_index = self.catalog.selectable_index(self.catalog.by_name("blank"))

    # -- session lifecycle ---------------------------------------------------

    def _session_rng(self, index: int, seed: Optional[int]) -> np.random.Generator:
        if seed is not None:
            seq = np.random.SeedSequence([int(seed) & (2**63 - 1), _SESSION_PURPOSE])
        else:
            seq = np.random.SeedSequence(
                [self.env_cfg.master_seed & (2**63 - 1), _SESSION_PURPOSE, index]
            )
        return np.random.Generator(np.random.PCG64(seq))

    def create_session(self, user_source: str = "interactive", seed: Optional[int] = None) -> Session:
        index = self._session_counter
        self._session_counter += 1
        session_id = f"s{index:04d}"
        rng = self._session_rng(index, seed)
        dims = tuple(
            int(d)
            for d in sorted(
                rng.choice(self.env_cfg.input_dims, size=self.env_cfg.question_dims, replace=False)
            )
        )
        question = Question(question_id=f"{session_id}:q0", dims=dims)
        noise = int(rng.integers(0, 2**63))
        start = make_state(
            StateParams().with_noise(noise), self.env_cfg, timestep=0, question_id=question.question_id
        )
        session = Session(
            session_id=session_id,
            question=question,
            user_source=user_source,
            rng=rng,
            current=start,
        )
        if self.engine_cfg.ucb_count_scope == "session":
            session.session_use_counts = np.zeros(self.catalog.selectable_count, dtype=np.int64)
        session.fingerprints.append(start.fingerprint)
        session.unique_named_counts.append(start.stats.unique_named)
        self.store.write_event(
            session.session_id,
            {
                "kind": "session_start",
                "session": session.session_id,
                "user_source": user_source,
                "question": question.to_json_dict(),
                "master_seed": self.env_cfg.master_seed,
                "policy": self.engine_cfg.policy,
            },
        )
        return session

    # -- core timestep ---------------------------------------------------------

    def run_timestep(
        self,
        session: Session,
        feedback: Feedback,
        verdict: Optional[AutouserVerdict] = None,
    ) -> tuple[Optional[SurrogateState], Optional[DecisionTrace]]:
        """Resolve the reward for the current state, then act on the request.

        Returns (new state, decision trace); both are None when the session
        closes (b) and the trace is None for manual (u) transitions.
        """
        if not session.open:
            raise RuntimeError(f"session {session.session_id} is closed")

        self._resolve_and_append(session, feedback, verdict)

        if feedback.kind == "b":
            self._close(session, reason=(verdict.termination if verdict else None) or "user_exit")
            return None, None

        if feedback.kind == "u":
            new_state = self._apply_manual(session, feedback)
            return new_state, None

        new_state, trace = self._decide_and_apply(session, feedback.kind)
        return new_state, trace

    def _resolve_and_append(
        self, session: Session, feedback: Feedback, verdict: Optional[AutouserVerdict]
    ) -> None:
        gen_req = session.pending_gen_req
        reward: Optional[int] = None
        learn: Optional[dict] = None
        if gen_req is not None:
            signal = reward_from_feedback(gen_req, feedback)
            reward = signal.y if signal.present else None
        if reward in (-1, 1):
            session.adjudicated += 1
            if session.pending_votes is not None:
                op_sel = self.catalog.selectable_index(
                    self.catalog.by_name(session.pending_operator)
                )
                deltas = self.weights.update(
                    session.pending_votes, op_sel, reward, self.catalog.selectable_count
                )
                learn = {
                    "y": reward,
                    "dw_sum": float(np.abs(deltas).sum()),
                    "dw_max": float(np.abs(deltas).max()),
                }

        state = session.current
        p = state.params
        rec = InteractionRecord(
            session_id=session.session_id,
            question_id=session.question.question_id,
            timestep=state.timestep,
            operator=session.pending_operator,
            generating_request=gen_req,
            feedback=feedback.kind,
            reward=reward,
            fell_back=session.pending_fell_back,
            params={
                "refinement_depth": p.refinement_depth,
                "sampling_radius": p.sampling_radius,
                "reuse_reach": p.reuse_reach,
                "split_question_vars_only": p.split_question_vars_only,
                "merge_iters": p.merge_iters,
                "merge_precision": p.merge_precision,
                "produce_greater_abstraction": p.produce_greater_abstraction,
                "disallowed_predicates": sorted(p.disallowed_predicates),
                "noise_draw": p.noise_draw,
            },
            v=state.v,
            named_multiset=dict(state.stats.named_multiset),
            fingerprint=state.fingerprint,
            unique_named=state.stats.unique_named,
            trace=session.pending_trace.to_json_dict() if session.pending_trace else None,
            verdict=verdict.to_json_dict() if verdict else None,
            learn=learn,
            feedback_payload=_payload_dict(feedback),
        )
        self.store.append(rec)
        if session.session_use_counts is not None:
            try:
                op = self.catalog.by_name(rec.operator)
            except KeyError:
                op = None
            if op is not None and op.index > 0:
                session.session_use_counts[self.catalog.selectable_index(op)] += 1

    def _decide_and_apply(self, session: Session, request: str) -> tuple[SurrogateState, DecisionTrace]:
        state = session.current
        if self.engine_cfg.policy == "blank":
            op = self.catalog.by_name("blank")
            d_samp = np.zeros(self.catalog.selectable_count)
            d_samp[self._blank_sel_index] = 1.0
            trace = make_trace(d_samp, np.zeros_like(d_samp), self._blank_sel_index, op.name)
            votes = None
        else:
            ctx = build_context(
                state,
                request,
                self.store,
                self.catalog,
                self.proj_vectors,
                history_window=self.engine_cfg.history_window,
            )
            votes = run_voting_rounds(self.specs, ctx)
            d_samp = aggregate_votes(votes, self.weights.w)
            if session.session_use_counts is not None:
                counts = session.session_use_counts
            else:
                counts = self.store.use_counts
            chosen_sel, indices = choose_operator(d_samp, counts, int(counts.sum()))
            op = self.catalog.selectable[chosen_sel]
            trace = make_trace(d_samp, indices, chosen_sel, op.name)

        fell_back = False
        noise = int(session.rng.integers(0, 2**63))
        try:
            new_state = apply_operator(op, state, self.store, request, self.env_cfg, noise)
        except InapplicableOperator:
            new_state = fallback_state(state)
            fell_back = True
        trace.fell_back = fell_back

        session.previous_state = state
        session.current = new_state
        session.pending_operator = op.name
        session.pending_votes = votes
        session.pending_trace = trace
        session.pending_gen_req = request
        session.pending_fell_back = fell_back
        session.fingerprints.append(new_state.fingerprint)
        session.unique_named_counts.append(new_state.stats.unique_named)
        return new_state, trace

    def _apply_manual(self, session: Session, feedback: Feedback) -> SurrogateState:
        state = session.current
        if feedback.manual_operator is not None:
            op = self.catalog.by_name(feedback.manual_operator)
            if op.name == "start":
                raise ValueError("start cannot be applied manually")
            noise = int(session.rng.integers(0, 2**63))
            fell_back = False
            try:
                new_state = apply_operator(op, state, self.store, None, self.env_cfg, noise)
            except InapplicableOperator:
                new_state = fallback_state(state)
                fell_back = True
            op_name = op.name
        else:
            target = feedback.travel_to
            rec = next(
                (
                    r
                    for r in self.store.records
                    if r.session_id == session.session_id and r.timestep == target
                ),
                None,
            )
            if rec is not None:
                params = params_from_dict(rec.params)
            elif target == state.timestep:
                params = state.params  # current state is not recorded yet
            else:
                raise KeyError(f"no recorded timestep {target} in session")
            # Same params (including the noise draw) regenerate the identical
            # description; only the timestep is fresh.
            new_state = make_state(
                params, self.env_cfg, state.timestep + 1, session.question.question_id
            )
            fell_back = False
            op_name = "history_travel"

        session.previous_state = state
        session.current = new_state
        session.pending_operator = op_name
        session.pending_votes = None
        session.pending_trace = None
        session.pending_gen_req = "u"
        session.pending_fell_back = fell_back
        session.fingerprints.append(new_state.fingerprint)
        session.unique_named_counts.append(new_state.stats.unique_named)
        return new_state

    def _close(self, session: Session, reason: str) -> None:
        session.open = False
        session.close_reason = reason
        self.store.write_event(
            session.session_id,
            {
                "kind": "session_end",
                "session": session.session_id,
                "reason": reason,
                "weights": [float(w) for w in self.weights.w],
            },
        )
        self.store.write_index_entry(
            {
                "session": session.session_id,
                "user_source": session.user_source,
                "reason": reason,
                "records": session.current.timestep + 1,
            }
        )
        self.store.close_session_file(session.session_id)

    # -- autouser loop -----------------------------------------------------------

    def run_autouser_session(self, max_adjustments: Optional[int] = None) -> Session:
        """One full simulated-user session, from start state to exit."""
        au_cfg = self.au_cfg
        if max_adjustments is not None:
            au_cfg = AutouserConfig(
                k_au=au_cfg.k_au,
                gamma1=au_cfg.gamma1,
                gamma2=au_cfg.gamma2,
                max_adjustments=max_adjustments,
                stall_patience=au_cfg.stall_patience,
                ecdf_band=au_cfg.ecdf_band,
                sign_convention_flip=au_cfg.sign_convention_flip,
            )
        session = self.create_session(user_source="autouser")
        au = Autouser(au_cfg, session.rng)
        request = au.first_request()
        self.run_timestep(session, Feedback(request))
        deadline = (
            session.started_at + self.engine_cfg.wall_clock_seconds
            if self.engine_cfg.wall_clock_seconds is not None
            else None
        )
        while session.open:
            verdict = au.respond(
                session.previous_state,
                session.current,
                self.store,
                session.fingerprints,
                session.unique_named_counts,
            )
            if deadline is not None and time.monotonic() > deadline:
                verdict.response = "b"
                verdict.termination = "wall_clock"
            self.run_timestep(session, Feedback(verdict.response), verdict=verdict)
        return session


@dataclass(eq=False)
class RunSummary:
    n_sessions: int
    total_records: int
    adjudicated: int
    successes: int
    failures: int
    global_success_rate: float
    trailing_success_rate: float
    wall_seconds: float
    out_dir: Optional[str]

    def to_json_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "total_records": self.total_records,
            "adjudicated": self.adjudicated,
            "successes": self.successes,
            "failures": self.failures,
            "global_success_rate": self.global_success_rate,
            "trailing_success_rate": self.trailing_success_rate,
            "wall_seconds": self.wall_seconds,
            "out_dir": self.out_dir,
        }


def trailing_success_rate(store: HistoryStore, window: int = 100) -> float:
    rewards = [r.reward for r in store.records if r.reward in (-1, 1)]
    tail = rewards[-window:]
    if not tail:
        return 0.0
    return sum(1 for y in tail if y == 1) / len(tail)


def run_bootstrap(
    engine: Engine, n_sessions: int, max_adjustments: Optional[int] = None
) -> RunSummary:
    """Drive n simulated-user sessions; fully deterministic given the master
    seed. Respects the advisory record cap when configured."""
    if n_sessions < 1:
        raise ValueError("n_sessions must be >= 1")
    t0 = time.monotonic()
    for _ in range(n_sessions):
        if (
            engine.engine_cfg.max_records is not None
            and len(engine.store.records) >= engine.engine_cfg.max_records
        ):
            break
        engine.run_autouser_session(max_adjustments=max_adjustments)
    wall = time.monotonic() - t0
    store = engine.store
    summary = RunSummary(
        n_sessions=engine._session_counter,
        total_records=len(store.records),
        adjudicated=store.n_success + store.n_failure,
        successes=store.n_success,
        failures=store.n_failure,
        global_success_rate=store.global_success_rate(),
        trailing_success_rate=trailing_success_rate(store),
        wall_seconds=wall,
        out_dir=str(store.out_dir) if store.out_dir else None,
    )
    return summary


def _payload_dict(feedback: Feedback) -> Optional[dict]:
    if feedback.kind != "u":
        return None
    if feedback.manual_operator is not None:
        return {"manual_operator": feedback.manual_operator}
    return {"travel_to": feedback.travel_to}


def params_from_dict(d: dict) -> StateParams:
    return StateParams(
        refinement_depth=d["refinement_depth"],
        sampling_radius=d["sampling_radius"],
        reuse_reach=d["reuse_reach"],
        split_question_vars_only=d["split_question_vars_only"],
        merge_iters=d["merge_iters"],
        merge_precision=d["merge_precision"],
        produce_greater_abstraction=d["produce_greater_abstraction"],
        disallowed_predicates=frozenset(d["disallowed_predicates"]),
        noise_draw=d["noise_draw"],
    )

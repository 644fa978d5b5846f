"""Engine orchestration: timestep flow, bootstrap, determinism, fallback."""

import json
from pathlib import Path

import numpy as np
import pytest

from absteer.autouser import AutouserConfig
from absteer.engine import Engine, EngineConfig, run_bootstrap, trailing_success_rate
from absteer.learning import Feedback
from absteer.surrogate import EnvConfig


def fresh_engine(tmp_path=None, seed=7, **engine_kw):
    return Engine(
        env_cfg=EnvConfig(master_seed=seed),
        engine_cfg=EngineConfig(**engine_kw),
        out_dir=tmp_path,
    )


class TestTimestepFlow:
    def test_start_state_has_no_vote_round(self):
        eng = fresh_engine()
        session = eng.create_session()
        assert session.current.timestep == 0
        assert session.pending_operator == "start"
        assert session.pending_trace is None

    def test_m_then_l_rewards_previous_step(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        eng.run_timestep(session, Feedback("l"))
        rec = eng.store.records[1]
        assert rec.generating_request == "m"
        assert rec.feedback == "l"
        assert rec.reward == 1
        assert rec.learn is not None  # weights updated exactly here

    def test_repeat_request_negative_reward(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        eng.run_timestep(session, Feedback("m"))
        assert eng.store.records[1].reward == -1

    def test_break_closes_and_rewards(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        new_state, trace = eng.run_timestep(session, Feedback("b"))
        assert new_state is None and trace is None
        assert not session.open
        assert eng.store.records[1].reward == 1  # (m, b)
        with pytest.raises(RuntimeError):
            eng.run_timestep(session, Feedback("m"))

    def test_opening_record_carries_start_and_no_reward(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        rec = eng.store.records[0]
        assert rec.timestep == 0
        assert rec.operator == "start"
        assert rec.generating_request is None
        assert rec.reward is None

    def test_never_selects_start_after_t0(self):
        eng = fresh_engine()
        session = eng.create_session()
        for kind in ("m", "l", "m", "l", "m"):
            eng.run_timestep(session, Feedback(kind))
        assert all(r.operator != "start" for r in eng.store.records[1:])


class TestManualSubmenu:
    def test_manual_operator_applies_with_zero_reward(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        state, trace = eng.run_timestep(session, Feedback("u", manual_operator="refine_deeper"))
        assert trace is None
        assert state.params.refinement_depth == 4
        # the m-step resolved with y=0 (m, u): no weight motion
        rec = eng.store.records[1]
        assert rec.reward == 0
        assert rec.learn is None
        # and the manual step itself resolves to 0 on the next feedback
        eng.run_timestep(session, Feedback("l"))
        assert eng.store.records[2].generating_request == "u"
        assert eng.store.records[2].reward == 0

    def test_manual_start_rejected(self):
        eng = fresh_engine()
        session = eng.create_session()
        with pytest.raises(ValueError):
            eng.run_timestep(session, Feedback("u", manual_operator="start"))

    def test_history_travel_restores_params_and_description(self):
        eng = fresh_engine()
        session = eng.create_session()
        origin = session.current
        eng.run_timestep(session, Feedback("m"))
        eng.run_timestep(session, Feedback("m"))
        state, _ = eng.run_timestep(session, Feedback("u", travel_to=0))
        assert state.params == origin.params
        assert state.fingerprint == origin.fingerprint
        assert state.timestep == session.current.timestep
        assert state.timestep == 3  # fresh timestep, not the restored one

    def test_history_travel_unknown_timestep(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        with pytest.raises(KeyError):
            eng.run_timestep(session, Feedback("u", travel_to=42))


class TestWeightDiscipline:
    def test_adjudicated_steps_update_weights_once(self):
        eng = fresh_engine()
        session = eng.create_session()
        initial = eng.weights.snapshot()
        eng.run_timestep(session, Feedback("m"))
        assert np.array_equal(eng.weights.w, initial)  # start step: no reward
        eng.run_timestep(session, Feedback("l"))
        moved = eng.weights.snapshot()
        assert not np.array_equal(moved, initial)
        updates = [r.learn for r in eng.store.records if r.learn is not None]
        adjudicated = [r for r in eng.store.records if r.reward in (-1, 1)]
        assert len(updates) == len(adjudicated)

    def test_u_and_b_never_mutate_weights(self):
        eng = fresh_engine()
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        before = eng.weights.snapshot()
        eng.run_timestep(session, Feedback("u", manual_operator="blank"))
        eng.run_timestep(session, Feedback("b"))
        assert np.array_equal(eng.weights.w, before)


class TestFallback:
    def test_inapplicable_manual_reallow_falls_back(self):
        eng = fresh_engine()
        session = eng.create_session()
        state0 = session.current
        assert not state0.params.disallowed_predicates
        state, _ = eng.run_timestep(session, Feedback("u", manual_operator="reallow_for_more"))
        assert state.fingerprint == state0.fingerprint
        assert state.params == state0.params
        assert state.timestep == state0.timestep + 1
        eng.run_timestep(session, Feedback("m"))
        assert eng.store.records[1].fell_back

    def test_injected_fallbacks_always_copy(self):
        eng = fresh_engine()
        session = eng.create_session()
        for i in range(10):
            before = session.current
            state, _ = eng.run_timestep(
                session, Feedback("u", manual_operator="reallow_for_less")
            )
            assert state.fingerprint == before.fingerprint
            assert state.params == before.params


class TestBootstrap:
    def test_single_session_single_adjustment_logs_two_states(self, tmp_path):
        eng = fresh_engine(tmp_path)
        summary = run_bootstrap(eng, n_sessions=1, max_adjustments=1)
        assert summary.total_records == 2
        recs = eng.store.records
        assert recs[0].operator == "start"
        assert recs[1].feedback == "b"

    def test_autouser_sessions_close_and_learn(self):
        eng = fresh_engine()
        summary = run_bootstrap(eng, n_sessions=3, max_adjustments=8)
        assert summary.n_sessions == 3
        assert summary.adjudicated > 0
        assert 0.0 <= summary.global_success_rate <= 1.0

    def test_deterministic_jsonl(self, tmp_path):
        logs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            eng = fresh_engine(out, seed=123)
            run_bootstrap(eng, n_sessions=2, max_adjustments=4)
            eng.store.close()
            blob = b""
            for f in sorted((out / "sessions").glob("*.jsonl")):
                blob += f.read_bytes()
            logs.append(blob)
        assert logs[0] == logs[1]
        assert len(logs[0]) > 0

    def test_blank_policy_only_uses_blank(self):
        eng = fresh_engine(policy="blank")
        run_bootstrap(eng, n_sessions=2, max_adjustments=6)
        chosen = {r.operator for r in eng.store.records if r.timestep > 0}
        assert chosen == {"blank"}

    def test_wall_clock_forces_exit(self):
        eng = fresh_engine(wall_clock_seconds=0.0)
        session = eng.run_autouser_session(max_adjustments=500)
        assert not session.open
        assert session.close_reason == "wall_clock"

    def test_advisory_record_cap_stops_new_sessions(self):
        eng = fresh_engine(max_records=3)
        summary = run_bootstrap(eng, n_sessions=10, max_adjustments=2)
        assert summary.n_sessions < 10

    def test_trailing_success_rate_window(self):
        eng = fresh_engine()
        run_bootstrap(eng, n_sessions=2, max_adjustments=6)
        rate = trailing_success_rate(eng.store, window=5)
        assert 0.0 <= rate <= 1.0


class TestSessionScopedCounts:
    def test_session_scope_config(self):
        eng = fresh_engine(ucb_count_scope="session")
        session = eng.create_session()
        eng.run_timestep(session, Feedback("m"))
        eng.run_timestep(session, Feedback("l"))
        assert session.session_use_counts is not None
        assert session.session_use_counts.sum() >= 1


class TestKnnEnabledEngine:
    def test_knn_census_wires_through_decisions(self):
        from absteer.selectors import SelectorConfig

        eng = Engine(
            env_cfg=EnvConfig(master_seed=13),
            selector_cfg=SelectorConfig(enable_knn=True),
        )
        assert sum(1 for s in eng.specs if s.kind == "knn") == 28
        assert len(eng.weights) == len(eng.specs)
        session = eng.create_session()
        for kind in ("m", "l", "m"):
            state, trace = eng.run_timestep(session, Feedback(kind))
            assert trace.d_samp.sum() == pytest.approx(1.0, abs=1e-9)

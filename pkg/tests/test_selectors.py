"""Selector votes, census, featurization, and the voting rounds protocol."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absteer.history import HistoryStore, Reservoir, RunningMoments
from absteer.selectors import (
    ALPHAS,
    DeadlockDetected,
    SelectorConfig,
    SelectorSpec,
    VoteContext,
    applicability_vote,
    build_context,
    build_selector_specs,
    dirac_vote,
    featurize_ecdf,
    featurize_standardize,
    history_informed_vote,
    knn_vote,
    product_vote,
    projection_vectors,
    random_projection_distance,
    rank_mass_fraction,
    rank_neighbors,
    rank_order,
    run_voting_rounds,
    single_feature_distance,
    uniform_vote,
)
from absteer.surrogate import StateParams, make_state


def assert_distribution(v, k):
    assert v.shape == (k,)
    assert (v >= 0).all()
    assert v.sum() == pytest.approx(1.0, abs=1e-9)


class TestElementaryVotes:
    def test_uniform(self):
        v = uniform_vote(22)
        assert_distribution(v, 22)
        assert (v == 1 / 22).all()
        assert list(uniform_vote(1)) == [1.0]

    def test_dirac(self):
        v = dirac_vote(3, 5)
        assert list(v) == [0, 0, 0, 1, 0]
        with pytest.raises(ValueError):
            dirac_vote(5, 5)

    def test_applicability_inapplicable_spreads_complement(self):
        v = applicability_vote([2], all_inapplicable=True, k=5)
        assert v[2] == 0.0
        assert v[0] == pytest.approx(1 / 4)
        assert_distribution(v, 5)

    def test_applicability_applicable_is_uniform(self):
        v = applicability_vote([2], all_inapplicable=False, k=5)
        assert (v == 1 / 5).all()

    def test_product(self):
        va = np.array([0.5, 0.5, 0.0])
        vb = np.array([0.2, 0.6, 0.2])
        assert list(product_vote(va, vb)) == pytest.approx([0.25, 0.75, 0.0])
        # uniform is the identity after renormalization
        u = uniform_vote(3)
        assert list(product_vote(u, vb)) == pytest.approx(list(vb))
        # disjoint support falls back to uniform
        da = np.array([1.0, 0.0, 0.0])
        db = np.array([0.0, 1.0, 0.0])
        assert list(product_vote(da, db)) == pytest.approx([1 / 3] * 3)
        with pytest.raises(ValueError):
            product_vote(np.ones(2), np.ones(3))


class TestRanking:
    def test_nearest_gets_rank_one(self):
        ranks = rank_order(np.array([0.1, 0.5, 0.3]))
        assert list(ranks) == [1, 3, 2]

    def test_ties_newer_first(self):
        ranks = rank_order(np.array([0.2, 0.2, 0.2]))
        assert list(ranks) == [3, 2, 1]

    def test_rank_neighbors_empty(self):
        assert rank_neighbors([], np.zeros(28), lambda r: 0.0) == []

    def test_rank_neighbors_orders_records(self):
        recs = ["far", "near", "mid"]
        dists = {"far": 0.9, "near": 0.1, "mid": 0.4}
        out = rank_neighbors(recs, np.zeros(28), lambda r: dists[r])
        assert out == ["near", "mid", "far"]


class TestDistances:
    def test_single_feature(self):
        a = np.zeros(28)
        b = np.zeros(28)
        a[4], b[4] = 2.0, 4.5
        assert single_feature_distance(a, b, 4) == pytest.approx(2.5)
        assert single_feature_distance(a, b, 4) == single_feature_distance(b, a, 4)
        assert single_feature_distance(a, a, 4) == 0.0

    def test_projection_identity_state_is_zero(self):
        u = projection_vectors(9, 4)[0]
        phi = np.random.default_rng(0).uniform(size=28)
        assert random_projection_distance(phi, phi, u) == 0.0

    def test_projection_axis_vector_reduces_to_field_distance(self):
        u = np.zeros(28)
        u[7] = 1.0
        a = np.random.default_rng(1).uniform(size=28)
        b = np.random.default_rng(2).uniform(size=28)
        assert random_projection_distance(a, b, u) == pytest.approx(abs(a[7] - b[7]))

    def test_projection_hand_computed_three_fields(self):
        # 3-field toy embedded in the 28-vector, standardized by hand.
        u = np.zeros(28)
        u[0:3] = np.array([3.0, 4.0, 0.0]) / 5.0
        a = np.zeros(28)
        b = np.zeros(28)
        a[0:3] = [1.0, 2.0, 9.0]
        b[0:3] = [3.0, 6.0, 9.0]
        # hand: |0.6*(1-3) + 0.8*(2-6)| = |-1.2 - 3.2| = 4.4
        assert random_projection_distance(a, b, u) == pytest.approx(4.4)

    def test_vectors_unit_norm_and_persistent(self):
        vs1 = projection_vectors(123, 8)
        vs2 = projection_vectors(123, 8)
        assert np.array_equal(vs1, vs2)
        assert np.linalg.norm(vs1, axis=1) == pytest.approx(np.ones(8))
        assert (vs1 >= 0).all()  # components sampled on [0,1] before scaling


class TestFeaturize:
    def test_standardize_at_mean_is_zero(self):
        m = RunningMoments(28)
        for x in (1.0, 2.0, 3.0):
            v = np.zeros(28)
            v[0] = x
            m.add(v)
        assert featurize_standardize(2.0, 0, m) == pytest.approx(0.0)

    def test_standardize_population_std(self):
        m = RunningMoments(28)
        for x in (1.0, 2.0, 3.0):
            v = np.zeros(28)
            v[0] = x
            m.add(v)
        assert featurize_standardize(3.0, 0, m) == pytest.approx(1.2247, abs=1e-4)

    def test_standardize_degenerate_guard(self):
        m = RunningMoments(28)
        assert featurize_standardize(5.0, 0, m) == 0.0
        v = np.ones(28)
        m.add(v)
        assert featurize_standardize(5.0, 0, m) == 0.0  # count < 2
        m.add(v)
        assert featurize_standardize(5.0, 0, m) == 0.0  # zero spread

    def test_standardize_ratio_identity(self):
        rng = np.random.default_rng(5)
        m = RunningMoments(28)
        for _ in range(10):
            v = np.zeros(28)
            v[0] = rng.uniform(0, 10)
            m.add(v)
        for _ in range(20):
            a, b, c = rng.uniform(0, 10, size=3)
            if abs(a - b) < 1e-9:
                continue
            lhs = (a - c) / (a - b)
            rhs = (
                featurize_standardize(a, 0, m) - featurize_standardize(c, 0, m)
            ) / (featurize_standardize(a, 0, m) - featurize_standardize(b, 0, m))
            assert rhs == pytest.approx(lhs, rel=1e-9)

    def test_ecdf_counting(self):
        rng = np.random.default_rng(0)
        res = Reservoir(16, rng)
        for x in (1.0, 2.0, 2.0, 5.0):
            res.insert(x)
        assert featurize_ecdf(2.0, 0, res) == pytest.approx(0.75)
        assert featurize_ecdf(0.5, 0, res) == 0.0
        assert featurize_ecdf(5.0, 0, res) == 1.0

    def test_ecdf_empty_reservoir_midpoint(self):
        res = Reservoir(16, np.random.default_rng(0))
        assert featurize_ecdf(3.0, 0, res) == 0.5


class TestHistoryInformedVote:
    def test_empty_is_uniform(self):
        v = history_informed_vote(np.array([], dtype=np.int64), np.array([]), np.array([], dtype=np.int64), 0.811, 22)
        assert (v == 1 / 22).all()

    def test_single_positive_record_is_dirac(self):
        v = history_informed_vote(
            np.array([1]), np.array([1.0]), np.array([2]), 0.811, 5
        )
        assert list(v) == [0, 0, 1, 0, 0]

    def test_three_record_arithmetic(self):
        # (op1,+1,rank1), (op2,+1,rank2), (op1,-1,rank3) at alpha=0.5:
        # raw op1 = 0.5 - 0.125 = 0.375, op2 = 0.25 -> [0.6, 0.4]
        v = history_informed_vote(
            np.array([1, 2, 3]),
            np.array([1.0, 1.0, -1.0]),
            np.array([1, 2, 1]),
            0.5,
            3,
        )
        assert v[1] == pytest.approx(0.375 / 0.625)
        assert v[2] == pytest.approx(0.25 / 0.625)
        assert v[0] == 0.0

    def test_all_negative_is_uniform(self):
        v = history_informed_vote(
            np.array([1, 2]), np.array([-1.0, -1.0]), np.array([0, 1]), 0.811, 4
        )
        assert (v == 0.25).all()

    def test_alpha_mass_targets(self):
        # ~90% of the decayed mass sits in the top 10 / top 20 ranks.
        m10 = rank_mass_fraction(0.811, 10)
        m20 = rank_mass_fraction(0.896, 20)
        assert m10 == pytest.approx(1 - 0.811**10, abs=1e-9)
        assert m20 == pytest.approx(1 - 0.896**20, abs=1e-9)
        assert 0.85 <= m10 <= 0.95
        assert 0.85 <= m20 <= 0.95


class TestKnnVote:
    def test_single_neighbor_success_is_dirac(self):
        v = knn_vote(np.array([1]), np.array([1.0]), np.array([4]), z=3, k=6)
        assert v[4] == 1.0

    def test_z_larger_than_history_uses_all(self):
        ranks = np.array([1, 2])
        v = knn_vote(ranks, np.array([1.0, 1.0]), np.array([0, 1]), z=10, k=3)
        assert v[0] == pytest.approx(0.5)
        assert v[1] == pytest.approx(0.5)

    def test_four_record_rates(self):
        # op0: +1, -1 -> rate 0.5; op1: +1 -> rate 1.0; op2: y=0 ignored.
        ranks = np.array([1, 2, 3, 4])
        y = np.array([1.0, -1.0, 1.0, 0.0])
        ops = np.array([0, 0, 1, 2])
        v = knn_vote(ranks, y, ops, z=4, k=3)
        assert v[0] == pytest.approx(0.5 / 1.5)
        assert v[1] == pytest.approx(1.0 / 1.5)
        assert v[2] == 0.0


class TestCensus:
    def test_default_census_is_845(self, catalog):
        specs = build_selector_specs(catalog)
        assert len(specs) == 845
        kinds = {}
        for s in specs:
            kinds[s.kind] = kinds.get(s.kind, 0) + 1
        assert kinds == {
            "uniform": 1,
            "dirac": 22,
            "applicability": 4,
            "single_feature": 56,
            "random_projection": 32,
            "product": 378 + 352,
        }

    def test_ids_dense_and_products_depend_on_base(self, catalog):
        specs = build_selector_specs(catalog)
        assert [s.id for s in specs] == list(range(845))
        for s in specs:
            if s.kind == "product":
                for dep in s.depends_on:
                    assert specs[dep].kind != "product"
            else:
                assert s.depends_on == ()

    def test_knn_gated_off_by_default(self, catalog):
        assert not any(s.kind == "knn" for s in build_selector_specs(catalog))
        with_knn = build_selector_specs(catalog, SelectorConfig(enable_knn=True))
        assert sum(1 for s in with_knn if s.kind == "knn") == 28


def _context_from_engine_store(env_cfg, catalog, n_records=12, request="m", seed=0):
    rng = np.random.default_rng(seed)
    store = HistoryStore(master_seed=7, selectable_names=[o.name for o in catalog.selectable])
    from absteer.history import InteractionRecord

    for i in range(n_records):
        op = catalog.selectable[int(rng.integers(0, catalog.selectable_count))]
        store.append(
            InteractionRecord(
                session_id=f"s{i}",
                question_id=f"s{i}:q0",
                timestep=0,
                operator=op.name,
                generating_request=None,
                feedback="m",
                reward=None,
                fell_back=False,
                params={},
                v=rng.uniform(0, 1, size=28),
                named_multiset={},
                fingerprint=f"f{i}",
                unique_named=1,
            ),
            persist=False,
        )
        store.append(
            InteractionRecord(
                session_id=f"s{i}",
                question_id=f"s{i}:q0",
                timestep=1,
                operator=op.name,
                generating_request="m" if rng.random() < 0.7 else "l",
                feedback="l" if rng.random() < 0.5 else "m",
                reward=int(rng.integers(-1, 2)),
                fell_back=False,
                params={},
                v=rng.uniform(0, 1, size=28),
                named_multiset={},
                fingerprint=f"g{i}",
                unique_named=1,
            ),
            persist=False,
        )
    state = make_state(StateParams(), env_cfg, 0, "cur:q0")
    ctx = build_context(state, request, store, catalog, projection_vectors(7), history_window=0)
    return ctx


class TestVotingRounds:
    def test_base_only_single_round(self, catalog, env_cfg):
        ctx = _context_from_engine_store(env_cfg, catalog)
        specs = [s for s in build_selector_specs(catalog) if s.kind != "product"]
        votes = run_voting_rounds(specs, ctx)
        assert votes.shape == (len(specs), 22)
        for row in votes:
            assert row.sum() == pytest.approx(1.0, abs=1e-9)
            assert (row >= 0).all()

    @pytest.mark.parametrize("seed", [0, 17, 91])
    @pytest.mark.parametrize("request_kind", ["m", "l"])
    def test_full_census_all_distributions(self, catalog, env_cfg, seed, request_kind):
        ctx = _context_from_engine_store(
            env_cfg, catalog, n_records=int(5 + seed % 20), request=request_kind, seed=seed
        )
        specs = build_selector_specs(catalog)
        votes = run_voting_rounds(specs, ctx)
        assert votes.shape == (845, 22)
        sums = votes.sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-9)
        assert (votes >= 0).all()

    def test_products_match_frozen_base_votes(self, catalog, env_cfg):
        ctx = _context_from_engine_store(env_cfg, catalog)
        specs = build_selector_specs(catalog)
        votes = run_voting_rounds(specs, ctx)
        for s in specs:
            if s.kind == "product":
                a, b = s.depends_on
                assert np.allclose(votes[s.id], product_vote(votes[a], votes[b]))

    def test_rerun_reproduces_votes(self, catalog, env_cfg):
        ctx1 = _context_from_engine_store(env_cfg, catalog, seed=4)
        ctx2 = _context_from_engine_store(env_cfg, catalog, seed=4)
        specs = build_selector_specs(catalog)
        assert np.array_equal(run_voting_rounds(specs, ctx1), run_voting_rounds(specs, ctx2))

    def test_cyclic_specs_deadlock(self, catalog, env_cfg):
        ctx = _context_from_engine_store(env_cfg, catalog)
        cyclic = [
            SelectorSpec(id=0, kind="product", depends_on=(1, 1)),
            SelectorSpec(id=1, kind="product", depends_on=(0, 0)),
        ]
        with pytest.raises(DeadlockDetected):
            run_voting_rounds(cyclic, ctx)

    def test_applicability_wired_to_state(self, catalog, env_cfg):
        # Fresh state: nothing disallowed, so reallow ops are inapplicable.
        ctx = _context_from_engine_store(env_cfg, catalog)
        specs = build_selector_specs(catalog)
        votes = run_voting_rounds(specs, ctx)
        for s in specs:
            if s.kind == "applicability":
                op = catalog.selectable[s.op_sel_index]
                if op.constrain_action == "reallow":
                    assert votes[s.id][s.op_sel_index] == 0.0
                else:
                    assert votes[s.id][s.op_sel_index] == pytest.approx(1 / 22)


@given(
    masses=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8),
    ranks_seed=st.integers(0, 10_000),
)
@settings(max_examples=60, deadline=None)
def test_history_vote_always_distribution(masses, ranks_seed):
    rng = np.random.default_rng(ranks_seed)
    n = len(masses)
    k = 5
    ranks = rank_order(np.asarray(masses))
    y = rng.choice([-1.0, 0.0, 1.0], size=n)
    ops = rng.integers(0, k, size=n)
    v = history_informed_vote(ranks, y, ops, 0.811, k)
    assert v.sum() == pytest.approx(1.0, abs=1e-9)
    assert (v >= 0).all()

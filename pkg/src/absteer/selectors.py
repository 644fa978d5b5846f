"""Selector families and the round-based vote-gathering protocol.

Every selector emits one normalized distribution over the selectable
operators. Uninformed selectors (uniform, one dirac per operator) anchor
exploration and interpretation; applicability selectors flag operators that
cannot act; history-informed selectors rank past records by distance to the
current state and convert operator rewards into vote mass with a
geometrically decaying rank weight; product selectors multiply two base
votes to capture joint behavior.

Vote gathering runs in rounds: a selector may vote once its dependencies
have voted, votes are never modified or rescinded, and a round in which
nobody votes is a deadlock (impossible for the acyclic default census, but
asserted).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .history import HistoryStore, Reservoir, RunningMoments
from .operators import OperatorCatalog, OperatorCategory, OperatorSpec
from .surrogate import N_FEATURES, SurrogateState

ALPHAS = (0.811, 0.896)
FEATURIZATIONS = ("standardize", "ecdf")
DEFAULT_PROJECTION_COUNT = 8
STD_GUARD = 1e-12

_PROJ_PURPOSE = 301


class DeadlockDetected(Exception):
    """A voting round completed with no selector able to cast a vote."""


@dataclass(frozen=True)
class SelectorConfig:
    alphas: tuple[float, float] = ALPHAS
    n_projection_vectors: int = DEFAULT_PROJECTION_COUNT
    product_alpha: float = 0.811
    enable_knn: bool = False
    knn_z: int = 12


@dataclass(frozen=True)
class SelectorSpec:
    id: int
    kind: str
    field_index: Optional[int] = None
    alpha: Optional[float] = None
    op_sel_index: Optional[int] = None
    constrain_action: Optional[str] = None
    vec_index: Optional[int] = None
    featurization: Optional[str] = None
    z: Optional[int] = None
    depends_on: tuple[int, ...] = ()

    def label(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "dirac":
            return f"dirac[op={self.op_sel_index}]"
        if self.kind == "applicability":
            return f"applicability[op={self.op_sel_index}]"
        if self.kind == "single_feature":
            return f"feature[{self.field_index}]a={self.alpha}"
        if self.kind == "random_projection":
            return f"proj[{self.vec_index}]{self.featurization},a={self.alpha}"
        if self.kind == "knn":
            return f"knn[{self.field_index}]z={self.z}"
        return f"product[{self.depends_on[0]}*{self.depends_on[1]}]"

    def to_json_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "label": self.label()}
        for key in ("field_index", "alpha", "op_sel_index", "vec_index", "featurization", "z"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        if self.depends_on:
            d["depends_on"] = list(self.depends_on)
        return d


def build_selector_specs(
    catalog: OperatorCatalog, cfg: SelectorConfig = SelectorConfig()
) -> list[SelectorSpec]:
    """The default census, in frozen id order.

    1 uniform + one dirac per selectable operator + one applicability
    selector per predicate-constraining operator + per-field history
    selectors at each decay rate + random-projection history selectors +
    the product layer (distinct-field single-feature pairs at the product
    decay rate, and every history selector crossed with every applicability
    selector).
    """
    specs: list[SelectorSpec] = []

    def add(**kw) -> SelectorSpec:
        spec = SelectorSpec(id=len(specs), **kw)
        specs.append(spec)
        return spec

    add(kind="uniform")
    for i in range(catalog.selectable_count):
        add(kind="dirac", op_sel_index=i)
    for op in catalog.predicate_ops():
        add(
            kind="applicability",
            op_sel_index=catalog.selectable_index(op),
            constrain_action=op.constrain_action,
        )
    sf_ids: dict[tuple[int, float], int] = {}
    for j in range(N_FEATURES):
        for alpha in cfg.alphas:
            spec = add(kind="single_feature", field_index=j, alpha=alpha)
            sf_ids[(j, alpha)] = spec.id
    for vec in range(cfg.n_projection_vectors):
        for feat in FEATURIZATIONS:
            for alpha in cfg.alphas:
                add(kind="random_projection", vec_index=vec, featurization=feat, alpha=alpha)
    if cfg.enable_knn:
        for j in range(N_FEATURES):
            add(kind="knn", field_index=j, z=cfg.knn_z)

    history_ids = [s.id for s in specs if s.kind in ("single_feature", "random_projection")]
    applicability_ids = [s.id for s in specs if s.kind == "applicability"]

    for a in range(N_FEATURES):
        for b in range(a + 1, N_FEATURES):
            add(
                kind="product",
                depends_on=(sf_ids[(a, cfg.product_alpha)], sf_ids[(b, cfg.product_alpha)]),
            )
    for hid in history_ids:
        for aid in applicability_ids:
            add(kind="product", depends_on=(hid, aid))
    return specs


def projection_vectors(master_seed: int, count: int = DEFAULT_PROJECTION_COUNT) -> np.ndarray:
    """Unit-norm projection vectors, components drawn uniformly on [0,1]
    before normalizing; drawn once from the master seed."""
    seq = np.random.SeedSequence([master_seed & (2**63 - 1), _PROJ_PURPOSE])
    rng = np.random.Generator(np.random.PCG64(seq))
    vecs = rng.uniform(0.0, 1.0, size=(count, N_FEATURES))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


# -- elementary vote shapes -------------------------------------------------


def uniform_vote(k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("need at least one selectable operator")
    return np.full(k, 1.0 / k)


def dirac_vote(op_sel_index: int, k: int) -> np.ndarray:
    if not (0 <= op_sel_index < k):
        raise ValueError("operator is not selectable")
    out = np.zeros(k)
    out[op_sel_index] = 1.0
    return out


def applicability_vote(op_set: Iterable[int], all_inapplicable: bool, k: int) -> np.ndarray:
    """Uniform over the complement when every member of op_set is
    inapplicable; plain uniform otherwise (no claim among live options)."""
    ops = list(op_set)
    if not ops:
        raise ValueError("op_set must be non-empty")
    if not all_inapplicable:
        return uniform_vote(k)
    out = np.full(k, 1.0 / (k - len(ops)))
    out[ops] = 0.0
    return out


def product_vote(va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """Normalized elementwise product; empty support falls back to uniform."""
    if len(va) != len(vb):
        raise ValueError("vote length mismatch")
    prod = va * vb
    total = prod.sum()
    if total <= 0.0:
        return uniform_vote(len(va))
    return prod / total


# -- featurization -----------------------------------------------------------


def featurize_standardize(x: float, j: int, moments: RunningMoments) -> float:
    """Zero-mean unit-variance transform of field j; degenerate fields
    (fewer than two observations or vanishing spread) map everything to 0."""
    if moments.count < 2:
        return 0.0
    std = float(moments.std()[j])
    if std < STD_GUARD:
        return 0.0
    return (x - float(moments.mean()[j])) / std


def featurize_ecdf(x: float, j: int, reservoir: Reservoir) -> float:
    """Fraction of the sampled field-j distribution at or below x."""
    return reservoir.ecdf(x)


# -- distances ----------------------------------------------------------------


def single_feature_distance(a_v: np.ndarray, b_v: np.ndarray, j: int) -> float:
    return abs(float(a_v[j]) - float(b_v[j]))


def random_projection_distance(
    a_phi: np.ndarray, b_phi: np.ndarray, u_p: np.ndarray
) -> float:
    """Absolute difference of featurized states projected on a unit vector."""
    return abs(float(u_p @ a_phi) - float(u_p @ b_phi))


# -- ranking and history-informed voting --------------------------------------


def rank_order(dists: np.ndarray) -> np.ndarray:
    """1-based ranks, nearest first; ties broken toward the newer record
    (higher array position)."""
    n = len(dists)
    order = np.lexsort((-np.arange(n), dists))
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(1, n + 1)
    return ranks


def rank_neighbors(records: Sequence, current_v: np.ndarray, dist_fn) -> list:
    """Matching records sorted nearest-first under dist_fn(record, current)."""
    if not records:
        return []
    dists = np.asarray([dist_fn(r) for r in records], dtype=np.float64)
    ranks = rank_order(dists)
    out = [None] * len(records)
    for rec, rank in zip(records, ranks):
        out[rank - 1] = rec
    return out


def history_informed_vote(
    ranks: np.ndarray, y: np.ndarray, ops: np.ndarray, alpha: float, k: int
) -> np.ndarray:
    """Rank-weighted reward mass per operator, clamped at zero and normalized.

    Negative accumulations are clamped before normalizing (a signed list has
    no distribution reading); if nothing positive remains, or no records
    match, the vote is uniform.
    """
    if len(ranks) == 0:
        return uniform_vote(k)
    contrib = y * np.power(alpha, ranks.astype(np.float64))
    raw = np.bincount(ops, weights=contrib, minlength=k)
    raw = np.maximum(raw, 0.0)
    total = raw.sum()
    if total <= 0.0:
        return uniform_vote(k)
    return raw / total


def knn_vote(
    ranks: np.ndarray, y: np.ndarray, ops: np.ndarray, z: int, k: int
) -> np.ndarray:
    """Per-operator success rate over the z nearest matching records, no mass
    elsewhere; all-zero falls back to uniform."""
    if z < 1:
        raise ValueError("z must be >= 1")
    if len(ranks) == 0:
        return uniform_vote(k)
    near = ranks <= z
    succ = np.bincount(ops[near & (y > 0)], minlength=k).astype(np.float64)
    uses = succ + np.bincount(ops[near & (y < 0)], minlength=k)
    rates = np.divide(succ, uses, out=np.zeros(k), where=uses > 0)
    total = rates.sum()
    if total <= 0.0:
        return uniform_vote(k)
    return rates / total


def rank_mass_fraction(alpha: float, top: int) -> float:
    """Share of the infinite rank-weight mass held by the top ranks."""
    head = sum(alpha**r for r in range(1, top + 1))
    return head / (alpha / (1.0 - alpha))


# -- evaluation context --------------------------------------------------------


class VoteContext:
    """Read-only snapshot everything selectors vote from.

    Lazily caches per-field and per-projection rank orders so the two decay
    rates sharing a distance function also share the sort.
    """

    def __init__(
        self,
        current_v: np.ndarray,
        request: str,
        feats: np.ndarray,
        y: np.ndarray,
        ops: np.ndarray,
        k: int,
        moments: RunningMoments,
        raw_reservoirs: Sequence[Reservoir],
        proj_vectors: np.ndarray,
        predicate_applicable: dict[int, bool],
    ):
        self.current_v = current_v
        self.request = request
        self.feats = feats
        self.y = y
        self.ops = ops
        self.k = k
        self.moments = moments
        self.raw_reservoirs = raw_reservoirs
        self.proj_vectors = proj_vectors
        self.predicate_applicable = predicate_applicable
        self._field_ranks: dict[int, np.ndarray] = {}
        self._phi: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._proj_ranks: dict[tuple[int, str], np.ndarray] = {}

    @property
    def n_records(self) -> int:
        return len(self.y)

    def field_ranks(self, j: int) -> np.ndarray:
        ranks = self._field_ranks.get(j)
        if ranks is None:
            dists = np.abs(self.feats[:, j] - self.current_v[j])
            ranks = rank_order(dists)
            self._field_ranks[j] = ranks
        return ranks

    def _featurized(self, featurization: str) -> tuple[np.ndarray, np.ndarray]:
        cached = self._phi.get(featurization)
        if cached is not None:
            return cached
        if featurization == "standardize":
            if self.moments.count < 2:
                phi_w = np.zeros_like(self.feats)
                phi_c = np.zeros_like(self.current_v)
            else:
                mean = self.moments.mean()
                std = self.moments.std()
                ok = std >= STD_GUARD
                safe_std = np.where(ok, std, 1.0)
                phi_w = np.where(ok, (self.feats - mean) / safe_std, 0.0)
                phi_c = np.where(ok, (self.current_v - mean) / safe_std, 0.0)
        elif featurization == "ecdf":
            phi_w = np.empty_like(self.feats)
            phi_c = np.empty_like(self.current_v)
            for j, res in enumerate(self.raw_reservoirs):
                if not res.items:
                    phi_w[:, j] = 0.5
                    phi_c[j] = 0.5
                    continue
                vals = res.sorted_values()
                phi_w[:, j] = np.searchsorted(vals, self.feats[:, j], side="right") / len(vals)
                phi_c[j] = res.ecdf(float(self.current_v[j]))
        else:
            raise ValueError(f"unknown featurization: {featurization}")
        self._phi[featurization] = (phi_w, phi_c)
        return phi_w, phi_c

    def projection_ranks(self, vec_index: int, featurization: str) -> np.ndarray:
        key = (vec_index, featurization)
        ranks = self._proj_ranks.get(key)
        if ranks is None:
            phi_w, phi_c = self._featurized(featurization)
            u_p = self.proj_vectors[vec_index]
            dists = np.abs(phi_w @ u_p - float(phi_c @ u_p))
            ranks = rank_order(dists)
            self._proj_ranks[key] = ranks
        return ranks


def build_context(
    state: SurrogateState,
    request: str,
    store: HistoryStore,
    catalog: OperatorCatalog,
    proj_vectors: np.ndarray,
    history_window: int = 0,
) -> VoteContext:
    """Snapshot the store for one decision. history_window bounds how many of
    the most recent matching records the history selectors consider
    (0 = unbounded)."""
    feats, y, ops = store.kind_window(request, history_window)
    applicable: dict[int, bool] = {}
    for op in catalog.predicate_ops():
        sel = catalog.selectable_index(op)
        if op.constrain_action == "disallow":
            applicable[sel] = state.stats.unique_named >= 1
        else:
            applicable[sel] = len(state.params.disallowed_predicates) > 0
    return VoteContext(
        current_v=state.v,
        request=request,
        feats=feats,
        y=y,
        ops=ops,
        k=catalog.selectable_count,
        moments=store.moments,
        raw_reservoirs=store.raw_reservoirs,
        proj_vectors=proj_vectors,
        predicate_applicable=applicable,
    )


# -- the voting protocol -------------------------------------------------------


def _evaluate_base(spec: SelectorSpec, ctx: VoteContext) -> np.ndarray:
    if spec.kind == "uniform":
        return uniform_vote(ctx.k)
    if spec.kind == "dirac":
        return dirac_vote(spec.op_sel_index, ctx.k)
    if spec.kind == "applicability":
        applicable = ctx.predicate_applicable.get(spec.op_sel_index, True)
        return applicability_vote([spec.op_sel_index], not applicable, ctx.k)
    if spec.kind == "single_feature":
        ranks = ctx.field_ranks(spec.field_index)
        return history_informed_vote(ranks, ctx.y, ctx.ops, spec.alpha, ctx.k)
    if spec.kind == "random_projection":
        ranks = ctx.projection_ranks(spec.vec_index, spec.featurization)
        return history_informed_vote(ranks, ctx.y, ctx.ops, spec.alpha, ctx.k)
    if spec.kind == "knn":
        ranks = ctx.field_ranks(spec.field_index)
        return knn_vote(ranks, ctx.y, ctx.ops, spec.z, ctx.k)
    raise ValueError(f"not a base selector: {spec.kind}")


def run_voting_rounds(specs: Sequence[SelectorSpec], ctx: VoteContext) -> np.ndarray:
    """Gather one vote per selector, in dependency rounds.

    Within a round every ready selector votes from the same frozen snapshot
    (the round is order-independent, so it may run concurrently); selectors
    whose dependencies have not voted wait for a later round. Returns the
    (n_selectors, k) matrix in selector-id order.
    """
    n = len(specs)
    votes = np.full((n, ctx.k), np.nan)
    done = np.zeros(n, dtype=bool)
    while not done.all():
        ready_products = []
        progressed = False
        for spec in specs:
            if done[spec.id]:
                continue
            if spec.kind == "product":
                a, b = spec.depends_on
                if done[a] and done[b]:
                    ready_products.append(spec)
                continue
            votes[spec.id] = _evaluate_base(spec, ctx)
            done[spec.id] = True
            progressed = True
        if ready_products:
            ids = np.asarray([s.id for s in ready_products])
            a_ids = np.asarray([s.depends_on[0] for s in ready_products])
            b_ids = np.asarray([s.depends_on[1] for s in ready_products])
            prods = votes[a_ids] * votes[b_ids]
            totals = prods.sum(axis=1)
            dead = totals <= 0.0
            prods[dead] = 1.0 / ctx.k
            totals[dead] = 1.0
            votes[ids] = prods / totals[:, None]
            done[ids] = True
            progressed = True
        if not progressed:
            raise DeadlockDetected("no selector could vote this round")
    return votes

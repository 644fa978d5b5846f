"""Operator catalog and application.

Three operator categories: special (start, blank), parameter-adjusting
(clamped mutations of state parameters), and predicate-constraining
(disallow/reallow a named predicate, the predicate picked by a
deterministic UCB sub-bandit over past interaction records).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Optional

from .surrogate import (
    DEPTH_MAX,
    DEPTH_MIN,
    MERGE_ITERS_MAX,
    MERGE_ITERS_MIN,
    MERGE_PRECISIONS,
    RADIUS_MAX,
    RADIUS_MIN,
    EnvConfig,
    StateParams,
    SurrogateState,
    make_state,
)

if TYPE_CHECKING:
    from .history import HistoryStore


class OperatorCategory(str, Enum):
    SPECIAL = "special"
    PARAM_ADJUST = "param_adjust"
    PREDICATE_CONSTRAIN = "predicate_constrain"


class InapplicableOperator(Exception):
    """The chosen operator cannot act on this state; caller falls back."""


class NoCandidates(InapplicableOperator):
    """No predicate satisfies the sub-bandit's candidacy condition."""


def _clamp(x, lo, hi):
    return max(lo, min(hi, x))


@dataclass(frozen=True)
class OperatorSpec:
    index: int
    name: str
    category: OperatorCategory
    description: str
    # For parameter ops: pure params mutation. For predicate ops: the
    # constraining action ("disallow"/"reallow") plus the aim direction
    # the sub-bandit conditions on.
    mutate: Optional[Callable[[StateParams], StateParams]] = None
    constrain_action: Optional[str] = None
    aim: Optional[str] = None

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "name": self.name,
            "category": self.category.value,
            "description": self.description,
        }


def _step_precision(value: float, direction: int) -> float:
    levels = sorted(MERGE_PRECISIONS)
    i = min(range(len(levels)), key=lambda k: abs(levels[k] - value))
    return levels[_clamp(i + direction, 0, len(levels) - 1)]


def _param_ops() -> list[tuple[str, str, Callable[[StateParams], StateParams]]]:
    return [
        (
            "radius_up",
            "multiply the sampling radius by 1.5 (clamped)",
            lambda p: replace(p, sampling_radius=_clamp(p.sampling_radius * 1.5, RADIUS_MIN, RADIUS_MAX)),
        ),
        (
            "radius_down",
            "divide the sampling radius by 1.5 (clamped)",
            lambda p: replace(p, sampling_radius=_clamp(p.sampling_radius / 1.5, RADIUS_MIN, RADIUS_MAX)),
        ),
        ("reuse_on", "reuse previous reachability results", lambda p: replace(p, reuse_reach=True)),
        ("reuse_off", "recompute all reachability results", lambda p: replace(p, reuse_reach=False)),
        (
            "split_question_only",
            "split axes only along question variables",
            lambda p: replace(p, split_question_vars_only=True),
        ),
        (
            "split_all_axes",
            "allow splitting along all input variables",
            lambda p: replace(p, split_question_vars_only=False),
        ),
        (
            "merge_more",
            "one more box-merging iteration (clamped)",
            lambda p: replace(p, merge_iters=_clamp(p.merge_iters + 1, MERGE_ITERS_MIN, MERGE_ITERS_MAX)),
        ),
        (
            "merge_less",
            "one fewer box-merging iteration (clamped)",
            lambda p: replace(p, merge_iters=_clamp(p.merge_iters - 1, MERGE_ITERS_MIN, MERGE_ITERS_MAX)),
        ),
        ("merge_off", "disable box merging", lambda p: replace(p, merge_iters=0)),
        (
            "precision_coarser",
            "coarser coordinate comparison when merging",
            lambda p: replace(p, merge_precision=_step_precision(p.merge_precision, +1)),
        ),
        (
            "precision_finer",
            "finer coordinate comparison when merging",
            lambda p: replace(p, merge_precision=_step_precision(p.merge_precision, -1)),
        ),
        (
            "refine_deeper",
            "refine one level deeper (stop side-length / 3, clamped)",
            lambda p: replace(p, refinement_depth=_clamp(p.refinement_depth + 1, DEPTH_MIN, DEPTH_MAX)),
        ),
        (
            "refine_shallower",
            "refine one level shallower (stop side-length * 3, clamped)",
            lambda p: replace(p, refinement_depth=_clamp(p.refinement_depth - 1, DEPTH_MIN, DEPTH_MAX)),
        ),
        (
            "greater_abstraction_on",
            "enable greater-abstraction description mode",
            lambda p: replace(p, produce_greater_abstraction=True),
        ),
        (
            "greater_abstraction_off",
            "disable greater-abstraction description mode",
            lambda p: replace(p, produce_greater_abstraction=False),
        ),
        (
            "combo_more_abstract",
            "shallower refinement and greater-abstraction mode together",
            lambda p: replace(
                p,
                refinement_depth=_clamp(p.refinement_depth - 1, DEPTH_MIN, DEPTH_MAX),
                produce_greater_abstraction=True,
            ),
        ),
        (
            "combo_less_abstract",
            "deeper refinement with greater-abstraction mode off",
            lambda p: replace(
                p,
                refinement_depth=_clamp(p.refinement_depth + 1, DEPTH_MIN, DEPTH_MAX),
                produce_greater_abstraction=False,
            ),
        ),
    ]


@dataclass(frozen=True)
class OperatorCatalog:
    operators: tuple[OperatorSpec, ...]

    @property
    def start(self) -> OperatorSpec:
        return self.operators[0]

    @property
    def selectable(self) -> tuple[OperatorSpec, ...]:
        return self.operators[1:]

    @property
    def selectable_count(self) -> int:
        return len(self.operators) - 1

    def by_name(self, name: str) -> OperatorSpec:
        for op in self.operators:
            if op.name == name:
                return op
        raise KeyError(name)

    def selectable_index(self, op: OperatorSpec) -> int:
        # Dense 0-based index over the selectable set (catalog minus start).
        if op.index == 0:
            raise ValueError("start operator is not selectable")
        return op.index - 1

    def predicate_ops(self) -> tuple[OperatorSpec, ...]:
        return tuple(
            op for op in self.operators if op.category == OperatorCategory.PREDICATE_CONSTRAIN
        )

    def to_json(self) -> list[dict]:
        return [op.to_json_dict() for op in self.operators]


def build_catalog(cfg: EnvConfig) -> OperatorCatalog:
    """The full 23-operator catalog; index 0 is the start operator."""
    ops: list[OperatorSpec] = []

    def add(name, category, description, **kw):
        ops.append(OperatorSpec(len(ops), name, category, description, **kw))

    add("start", OperatorCategory.SPECIAL, "generate the initial description with default settings")
    add(
        "blank",
        OperatorCategory.SPECIAL,
        "regenerate the description with fresh randomness only",
        mutate=lambda p: p,
    )
    for name, desc, fn in _param_ops():
        add(name, OperatorCategory.PARAM_ADJUST, desc, mutate=fn)
    add(
        "disallow_for_more",
        OperatorCategory.PREDICATE_CONSTRAIN,
        "bar a named predicate, aiming for more abstraction",
        constrain_action="disallow",
        aim="m",
    )
    add(
        "disallow_for_less",
        OperatorCategory.PREDICATE_CONSTRAIN,
        "bar a named predicate, aiming for less abstraction",
        constrain_action="disallow",
        aim="l",
    )
    add(
        "reallow_for_more",
        OperatorCategory.PREDICATE_CONSTRAIN,
        "readmit a barred predicate, aiming for more abstraction",
        constrain_action="reallow",
        aim="m",
    )
    add(
        "reallow_for_less",
        OperatorCategory.PREDICATE_CONSTRAIN,
        "readmit a barred predicate, aiming for less abstraction",
        constrain_action="reallow",
        aim="l",
    )
    return OperatorCatalog(operators=tuple(ops))


def _occ_succ_sets(
    history: "HistoryStore", predicate: str, request: str, reversed_inequality: bool
) -> tuple[int, int]:
    """Count records where the request matched and the predicate's occurrence
    count moved across the successor, plus how many of those moves were
    followed by a flipped request or an exit.

    A missing successor contributes an infinite occurrence count: the plain
    inequality then fails and the reversed one holds, and neither the flip
    nor the exit test can pass.
    """
    flip = "l" if request == "m" else "m"
    occ = 0
    succ = 0
    for rec in history.records:
        if rec.feedback != request:
            continue
        w_here = rec.named_multiset.get(predicate, 0)
        nxt = history.successor(rec)
        w_next = math.inf if nxt is None else nxt.named_multiset.get(predicate, 0)
        moved = (w_here < w_next) if reversed_inequality else (w_here > w_next)
        if not moved:
            continue
        occ += 1
        if nxt is not None and (nxt.feedback == flip or nxt.feedback == "b"):
            succ += 1
    return occ, succ


def _ucb_pick(candidates: list[str], counts: dict[str, tuple[int, int]]) -> str:
    """Deterministic UCB over predicates; untried candidates win, ties break
    lexicographically."""
    total = sum(counts[p][0] for p in candidates)
    log_total = math.log(total) if total >= 1 else 0.0

    def index(p: str) -> float:
        occ, succ = counts[p]
        if occ == 0:
            return math.inf
        return succ / occ + math.sqrt(2.0 * log_total / occ)

    return min(candidates, key=lambda p: (-index(p), p))


def select_predicate_to_remove(
    state: SurrogateState, history: "HistoryStore", request: str
) -> str:
    """Pick which currently-occurring named predicate to disallow."""
    candidates = sorted(state.stats.named_multiset)
    if not candidates:
        raise NoCandidates("description contains no named predicates")
    counts = {
        p: _occ_succ_sets(history, p, request, reversed_inequality=False) for p in candidates
    }
    return _ucb_pick(candidates, counts)


def select_predicate_to_reallow(
    state: SurrogateState, history: "HistoryStore", request: str
) -> str:
    """Pick which barred predicate to readmit (occurrence inequality reversed)."""
    candidates = sorted(state.params.disallowed_predicates)
    if not candidates:
        raise NoCandidates("no predicates are disallowed")
    counts = {
        p: _occ_succ_sets(history, p, request, reversed_inequality=True) for p in candidates
    }
    return _ucb_pick(candidates, counts)


def apply_operator(
    op: OperatorSpec,
    state: Optional[SurrogateState],
    history: "HistoryStore",
    request: Optional[str],
    cfg: EnvConfig,
    noise_draw: int,
    question_id: str = "",
) -> SurrogateState:
    """Apply one operator, regenerating the description under a fresh noise draw.

    Parameter operators clamp at their range bounds. Predicate operators
    raise InapplicableOperator when no candidate predicate exists; the
    caller handles the fallback path.
    """
    if op.name == "start":
        if state is not None:
            raise ValueError("start may only produce the initial state")
        params = StateParams().with_noise(noise_draw)
        return make_state(params, cfg, timestep=0, question_id=question_id)

    if op.category == OperatorCategory.PREDICATE_CONSTRAIN:
        aim = op.aim or request or "m"
        if op.constrain_action == "disallow":
            pid = select_predicate_to_remove(state, history, aim)
            disallowed = frozenset(state.params.disallowed_predicates | {pid})
        else:
            pid = select_predicate_to_reallow(state, history, aim)
            disallowed = frozenset(state.params.disallowed_predicates - {pid})
        params = replace(state.params, disallowed_predicates=disallowed)
    else:
        params = op.mutate(state.params)

    params = params.with_noise(noise_draw)
    return make_state(
        params, cfg, timestep=state.timestep + 1, question_id=state.question_id
    )


def fallback_state(state: SurrogateState) -> SurrogateState:
    """Successor for an inapplicable operator: same params, same description,
    only the timestep moves."""
    return SurrogateState(
        params=state.params,
        stats=state.stats,
        v=state.v.copy(),
        timestep=state.timestep + 1,
        question_id=state.question_id,
    )

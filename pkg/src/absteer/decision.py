"""Vote aggregation and the final exploration-aware operator choice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

DENOMINATOR_GUARD = 1e-12


@dataclass(eq=False)
class DecisionTrace:
    """Observability for one decision: the aggregated distribution, the
    exploration-adjusted indices, and what was ultimately applied."""

    d_samp: np.ndarray
    ucb_indices: np.ndarray
    chosen_sel_index: int
    chosen_name: str
    fell_back: bool
    entropy: float

    def to_json_dict(self) -> dict:
        def clean(x):
            return None if not math.isfinite(x) else float(x)

        return {
            "d_samp": [float(v) for v in self.d_samp],
            "ucb": [clean(v) for v in self.ucb_indices],
            "chosen": self.chosen_name,
            "fell_back": self.fell_back,
            "entropy": self.entropy,
        }


def aggregate_votes(votes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of selector votes, shifted by the most-negative entry and
    renormalized into a distribution.

    The shift applies only when some aggregated entry is negative; a glut of
    positive weights therefore flattens rather than sharpens the result. A
    vanishing denominator falls back to uniform.
    """
    raw = weights @ votes
    shift = min(0.0, float(raw.min()))
    shifted = raw - shift
    denom = float(shifted.sum())
    k = votes.shape[1]
    if denom <= DENOMINATOR_GUARD:
        return np.full(k, 1.0 / k)
    return shifted / denom


def entropy(dist: np.ndarray) -> float:
    """Shannon entropy in nats, with 0*ln(0) taken as 0."""
    nz = dist[dist > 0.0]
    return float(-(nz * np.log(nz)).sum())


def choose_operator(
    d_samp: np.ndarray, use_counts: np.ndarray, total_uses: int
) -> tuple[int, np.ndarray]:
    """Index of the operator to apply: each aggregated mass is treated as a
    success rate and given the deterministic upper-confidence bonus.

    Untried operators get an infinite index; ties break toward the lowest
    operator index. Returns (selectable index, full index vector).
    """
    k = len(d_samp)
    indices = np.empty(k, dtype=np.float64)
    log_t = math.log(total_uses) if total_uses >= 1 else 0.0
    for i in range(k):
        n = use_counts[i]
        indices[i] = math.inf if n == 0 else d_samp[i] + math.sqrt(2.0 * log_t / n)
    return int(np.argmax(indices)), indices


def make_trace(
    d_samp: np.ndarray,
    ucb_indices: np.ndarray,
    chosen_sel_index: int,
    chosen_name: str,
    fell_back: bool = False,
) -> DecisionTrace:
    return DecisionTrace(
        d_samp=d_samp,
        ucb_indices=ucb_indices,
        chosen_sel_index=chosen_sel_index,
        chosen_name=chosen_name,
        fell_back=fell_back,
        entropy=entropy(d_samp),
    )

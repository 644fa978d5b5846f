"""Reward derivation from consecutive requests and selector-weight updates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

FEEDBACK_KINDS = ("m", "l", "b", "u")


@dataclass(frozen=True)
class Feedback:
    """One user request: m/l adjust abstraction, b ends the session, u opens
    the manual submenu (apply a named operator or travel to a past timestep)."""

    kind: str
    manual_operator: Optional[str] = None
    travel_to: Optional[int] = None

    def __post_init__(self):
        if self.kind not in FEEDBACK_KINDS:
            raise ValueError(f"unknown feedback kind: {self.kind}")
        if self.kind == "u" and (self.manual_operator is None) == (self.travel_to is None):
            raise ValueError("u feedback carries exactly one of manual_operator/travel_to")


def feedback_kind(f: Union[Feedback, str, None]) -> Optional[str]:
    if f is None:
        return None
    return f.kind if isinstance(f, Feedback) else f


@dataclass(frozen=True)
class RewardSignal:
    y: int
    present: bool

    def __post_init__(self):
        if self.present and self.y not in (-1, 0, 1):
            raise ValueError("reward must be in {-1, 0, 1}")


_REWARD_TABLE = {
    ("m", "m"): -1,
    ("m", "l"): +1,
    ("m", "b"): +1,
    ("l", "l"): -1,
    ("l", "m"): +1,
    ("l", "b"): +1,
}


def reward_from_feedback(
    f_t: Union[Feedback, str], f_next: Union[Feedback, str, None]
) -> RewardSignal:
    """Score the operator applied after request f_t, given the next request.

    Reversing the request (or exiting) signals the abstraction moved in the
    right direction; repeating it signals failure; manual interactions are
    neutral. After b there is no next iteration, so the signal is absent.
    """
    kind_t = feedback_kind(f_t)
    if kind_t == "b":
        return RewardSignal(0, present=False)
    kind_next = feedback_kind(f_next)
    if kind_next is None:
        raise ValueError(f"feedback after {kind_t!r} is required to derive a reward")
    if kind_t == "u" or kind_next == "u":
        return RewardSignal(0, present=True)
    return RewardSignal(_REWARD_TABLE[(kind_t, kind_next)], present=True)


class SelectorWeights:
    """The learned signed weight per selector, updated additively.

    The update credits a selector by how far its vote on the chosen operator
    exceeded the uniform-chance probability, scaled by the reward sign, so
    abstaining (voting exactly chance) never moves a weight.
    """

    def __init__(self, n_selectors: int, initial: float = 1.0):
        self.w = np.full(n_selectors, float(initial), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.w)

    def snapshot(self) -> np.ndarray:
        return self.w.copy()

    def update(self, votes: np.ndarray, chosen_sel_index: int, y: int, selectable_count: int) -> np.ndarray:
        """Apply one reward step; returns the per-selector deltas.

        votes: (n_selectors, selectable_count) matrix of the distributions
        cast at decision time, row order matching the weight vector.
        """
        if y == 0:
            return np.zeros_like(self.w)
        chance = 1.0 / selectable_count
        deltas = y * (votes[:, chosen_sel_index] - chance)
        self.w += deltas
        return deltas


def update_weights(
    w: np.ndarray, votes: np.ndarray, chosen_sel_index: int, y: int, selectable_count: int
) -> np.ndarray:
    """Functional form of the weight update; returns the new weight vector."""
    if y == 0:
        return w.copy()
    chance = 1.0 / selectable_count
    return w + y * (votes[:, chosen_sel_index] - chance)

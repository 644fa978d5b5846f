"""The simulated user that bootstraps learning.

It judges whether each of five description criteria moved, boils the
per-criterion verdicts into a satisfaction decision against an adaptive
random threshold that hardens as the system's global success rate grows,
and enforces the session termination rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .history import HistoryStore
from .surrogate import CRITERIA_FEATURE_INDICES, SurrogateState


@dataclass(frozen=True)
class AutouserConfig:
    k_au: int = 5
    gamma1: frozenset[int] = frozenset({2, 3, 4, 5})
    gamma2: frozenset[int] = frozenset({1, 2, 3, 4})
    max_adjustments: int = 200
    stall_patience: int = 10
    ecdf_band: tuple[float, float] = (0.4, 0.6)
    sign_convention_flip: bool = False

    def __post_init__(self):
        if self.k_au < 2:
            raise ValueError("k_au must be >= 2")
        universe = set(range(1, self.k_au + 1))
        if not (self.gamma1 <= universe and self.gamma2 <= universe):
            raise ValueError("gamma sets must be subsets of [1..k_au]")
        if self.max_adjustments < 1:
            raise ValueError("max_adjustments must be positive")
        if self.k_au != len(CRITERIA_FEATURE_INDICES):
            raise ValueError("k_au must match the criteria count")

    @property
    def ell(self) -> float:
        return compute_ell(self.k_au)


@dataclass(eq=False)
class AutouserVerdict:
    psi: np.ndarray
    s1: int
    s2: int
    alpha_draw: float
    threshold: float
    response: str
    opinion_strength: float
    success_rate: float
    termination: Optional[str] = None

    def to_json_dict(self) -> dict:
        def clean(x: float):
            return float(x) if math.isfinite(x) else None

        return {
            "psi": [int(p) for p in self.psi],
            "s1": self.s1,
            "s2": self.s2,
            "alpha": clean(self.alpha_draw),
            "threshold": clean(self.threshold),
            "response": self.response,
            "strength": clean(self.opinion_strength),
            "g": self.success_rate,
            "termination": self.termination,
        }


def step_fn(x: float, a: float, b: float) -> int:
    """Three-valued threshold: 1 above b, 0 inside [a, b], -1 below a."""
    if a > b:
        raise ValueError("step bounds must satisfy a <= b")
    if x > b:
        return 1
    if x < a:
        return -1
    return 0


def compute_ell(k_au: int) -> float:
    """Decay exponent tuned so that at a 60% global success rate the lower
    threshold bound equals 1/(k_au - 1)."""
    if k_au < 2:
        raise ValueError("k_au must be >= 2")
    return -math.log(k_au - 1) / math.log(0.6)


def compute_psi(
    prev: SurrogateState,
    curr: SurrogateState,
    store: HistoryStore,
    request: str,
    cfg: AutouserConfig = AutouserConfig(),
) -> np.ndarray:
    """The per-criterion change-judgment vector.

    Each entry combines the request direction, a gate on the criterion's
    group membership, and either a banded rank of the criterion's delta
    within the historical delta distribution or its raw sign. Only the
    difference between consecutive states is examined, never raw values.
    """
    if request not in ("m", "l"):
        raise ValueError("psi is judged for m/l requests only")
    dir_factor = step_fn(1.0 if request == "m" else 0.0, 0.5, 0.5)
    lo, hi = cfg.ecdf_band
    psi = np.zeros(cfg.k_au, dtype=np.int64)
    for j in range(1, cfg.k_au + 1):
        feature = CRITERIA_FEATURE_INDICES[j - 1]
        gate = step_fn(0.0 if j in cfg.gamma1 else 1.0, 0.5, 0.5)
        if cfg.sign_convention_flip:
            gate = -gate
        delta = float(prev.v[feature] - curr.v[feature])
        if j in cfg.gamma2:
            inner = step_fn(store.delta_distribution(feature).ecdf(delta), lo, hi)
        else:
            inner = step_fn(delta, 0.0, 0.0)
        psi[j - 1] = dir_factor * gate * inner
    return psi


def decide_satisfied(
    ratio: float, g: float, rng: np.random.Generator, ell: float
) -> tuple[bool, float, float]:
    """The randomized threshold test on S1/S2: satisfied when the ratio meets
    a uniform mixture of g and g**ell. Returns (satisfied, alpha, threshold)."""
    alpha = float(rng.uniform(0.0, 1.0))
    threshold = alpha * g + (1.0 - alpha) * g**ell
    return ratio >= threshold, alpha, threshold


def opposite(request: str) -> str:
    if request == "m":
        return "l"
    if request == "l":
        return "m"
    raise ValueError(f"no opposite for request {request!r}")


def opinion_strength(ratio: float, g: float, ell: float) -> float:
    """Where the ratio sits between the threshold's lower and upper bounds;
    undefined (nan) when the bounds coincide."""
    denom = g - g**ell
    if denom == 0.0:
        return math.nan
    return (ratio - g**ell) / denom


def judge(
    prev: SurrogateState,
    curr: SurrogateState,
    store: HistoryStore,
    r_prev: str,
    rng: np.random.Generator,
    cfg: AutouserConfig = AutouserConfig(),
) -> AutouserVerdict:
    """Decide whether the previous request was satisfied.

    No noticeable change reissues the request without consuming randomness;
    otherwise the signed-change ratio faces the adaptive threshold, flipping
    the request on success and reissuing on failure.
    """
    if r_prev not in ("m", "l"):
        raise ValueError("judged request must be 'm' or 'l'")
    psi = compute_psi(prev, curr, store, r_prev, cfg)
    s1 = int(psi.sum())
    s2 = int(np.abs(psi).sum())
    g = store.global_success_rate()
    ell = cfg.ell
    if s2 == 0:
        return AutouserVerdict(
            psi=psi,
            s1=s1,
            s2=s2,
            alpha_draw=math.nan,
            threshold=math.nan,
            response=r_prev,
            opinion_strength=math.nan,
            success_rate=g,
        )
    ratio = s1 / s2
    satisfied, alpha, threshold = decide_satisfied(ratio, g, rng, ell)
    return AutouserVerdict(
        psi=psi,
        s1=s1,
        s2=s2,
        alpha_draw=alpha,
        threshold=threshold,
        response=opposite(r_prev) if satisfied else r_prev,
        opinion_strength=opinion_strength(ratio, g, ell),
        success_rate=g,
    )


def should_terminate(
    adjustments_issued: int,
    fingerprints: Sequence[str],
    unique_named_counts: Sequence[int],
    cfg: AutouserConfig = AutouserConfig(),
) -> str:
    """Session-ending check, in order: adjustment budget exhausted, the
    description frozen for the stall patience, or the description empty of
    named predicates for the stall patience. Returns one of
    continue/max_reached/stalled/box_range_only."""
    if adjustments_issued >= cfg.max_adjustments:
        return "max_reached"
    k = cfg.stall_patience
    if len(fingerprints) >= k and len(set(fingerprints[-k:])) == 1:
        return "stalled"
    if len(unique_named_counts) >= k and all(u == 0 for u in unique_named_counts[-k:]):
        return "box_range_only"
    return "continue"


class Autouser:
    """Session-scoped simulated user: issues the first request at random,
    judges every new state, and exits via the termination rules."""

    def __init__(self, cfg: AutouserConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.adjustments_issued = 0
        self.last_request: Optional[str] = None

    def first_request(self) -> str:
        self.last_request = "m" if self.rng.random() < 0.5 else "l"
        self.adjustments_issued = 1
        return self.last_request

    def respond(
        self,
        prev: SurrogateState,
        curr: SurrogateState,
        store: HistoryStore,
        fingerprints: Sequence[str],
        unique_named_counts: Sequence[int],
    ) -> AutouserVerdict:
        verdict = judge(prev, curr, store, self.last_request, self.rng, self.cfg)
        termination = should_terminate(
            self.adjustments_issued, fingerprints, unique_named_counts, self.cfg
        )
        if termination != "continue":
            verdict.response = "b"
            verdict.termination = termination
        else:
            self.last_request = verdict.response
            self.adjustments_issued += 1
        return verdict

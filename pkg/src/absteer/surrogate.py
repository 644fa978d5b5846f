"""Surrogate description environment.

A deterministic, seed-reproducible stand-in for a real description
generator: state parameters map to description statistics and a fixed
28-field feature vector, so operators have observable, learnable effects.
All randomness is derived from (master_seed, noise_draw, purpose), never
from global state.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

N_FEATURES = 28

# Depth E encodes the refinement stop side-length 3^(-E).
DEPTH_MIN, DEPTH_MAX = 1, 6
RADIUS_MIN, RADIUS_MAX = 0.1, 2.0
MERGE_ITERS_MIN, MERGE_ITERS_MAX = 0, 3
MERGE_PRECISIONS = (1e-6, 1e-4, 1e-2)

# Box statistics above this count are computed from a fixed-size seeded
# sample; materializing up to 3^24 per-box values is not feasible.
BOX_SAMPLE_CAP = 2048

# Mean of U(0.05, 1.0), used to scale sampled box volumes when the full
# population is not materialized.
_RAW_DRAW_MEAN = 0.525

# Sub-stream purposes for per-state randomness.
_PURPOSE_FACTORS = 1
_PURPOSE_ETA = 2
_PURPOSE_BOXES = 3
_PURPOSE_MULTISET = 4


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def log3(x: float) -> float:
    return math.log(x) / math.log(3.0)


@dataclass(frozen=True)
class NamedPredicateSpec:
    """A human-meaningful atomic predicate with an abstraction level in [0,1]."""

    id: str
    abstraction_level: float

    def __post_init__(self):
        if not (0.0 <= self.abstraction_level <= 1.0):
            raise ValueError(f"abstraction_level out of [0,1]: {self.abstraction_level}")


def default_predicate_catalog(size: int = 12) -> tuple[NamedPredicateSpec, ...]:
    """Predicates with abstraction levels evenly spread over [0,1]."""
    levels = np.linspace(0.0, 1.0, size)
    return tuple(
        NamedPredicateSpec(id=f"p{i:02d}", abstraction_level=float(levels[i]))
        for i in range(size)
    )


@dataclass(frozen=True)
class EnvConfig:
    input_dims: int = 4
    question_dims: int = 2
    predicate_catalog: tuple[NamedPredicateSpec, ...] = field(
        default_factory=default_predicate_catalog
    )
    master_seed: int = 0

    def __post_init__(self):
        if self.input_dims < 1:
            raise ValueError("input_dims must be positive")
        if not (1 <= self.question_dims <= self.input_dims):
            raise ValueError("question_dims must satisfy 1 <= h <= input_dims")
        if not self.predicate_catalog:
            raise ValueError("predicate catalog must be non-empty")
        ids = [p.id for p in self.predicate_catalog]
        if len(set(ids)) != len(ids):
            raise ValueError("predicate catalog ids must be unique")

    @property
    def catalog_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.predicate_catalog)

    @staticmethod
    def from_file(path: str) -> "EnvConfig":
        """Load from a declarative JSON document (key/value)."""
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        catalog = doc.get("predicate_catalog")
        if catalog is not None:
            catalog = tuple(
                NamedPredicateSpec(id=e["id"], abstraction_level=float(e["abstraction_level"]))
                for e in catalog
            )
        else:
            catalog = default_predicate_catalog()
        return EnvConfig(
            input_dims=int(doc.get("input_dims", 4)),
            question_dims=int(doc.get("question_dims", 2)),
            predicate_catalog=catalog,
            master_seed=int(doc.get("master_seed", 0)),
        )


@dataclass(frozen=True)
class StateParams:
    """Description-generation parameters carried inside a state."""

    refinement_depth: int = 3
    sampling_radius: float = 1.0
    reuse_reach: bool = True
    split_question_vars_only: bool = True
    merge_iters: int = 0
    merge_precision: float = 1e-4
    produce_greater_abstraction: bool = False
    disallowed_predicates: frozenset[str] = frozenset()
    noise_draw: int = 0

    def validate(self, cfg: EnvConfig) -> None:
        if not (DEPTH_MIN <= self.refinement_depth <= DEPTH_MAX):
            raise ValueError(f"refinement_depth out of range: {self.refinement_depth}")
        if not (RADIUS_MIN <= self.sampling_radius <= RADIUS_MAX + 1e-12):
            raise ValueError(f"sampling_radius out of range: {self.sampling_radius}")
        if not (MERGE_ITERS_MIN <= self.merge_iters <= MERGE_ITERS_MAX):
            raise ValueError(f"merge_iters out of range: {self.merge_iters}")
        if self.merge_precision not in MERGE_PRECISIONS:
            raise ValueError(f"merge_precision not in {MERGE_PRECISIONS}")
        unknown = self.disallowed_predicates - set(cfg.catalog_ids)
        if unknown:
            raise ValueError(f"disallowed predicates not in catalog: {sorted(unknown)}")

    def with_noise(self, noise_draw: int) -> "StateParams":
        return replace(self, noise_draw=int(noise_draw))


@dataclass(eq=False)
class DescriptionStats:
    """Observable statistics of one generated description."""

    n_boxes: int
    unique_named: int
    named_occurrences: int
    box_range_count: int
    disjunct_count: int
    conjunct_count: int
    vol_named_total: float
    vol_named_unique: float
    vol_box_total: float
    vol_box_unique: float
    vol_conjunct_total: float
    vol_conjunct_unique: float
    box_volumes: np.ndarray
    box_side_sums: np.ndarray
    named_multiset: dict[str, int]
    fingerprint: str
    # Exact totals kept separately: box_volumes/box_side_sums hold a capped
    # sample when n_boxes exceeds BOX_SAMPLE_CAP.
    box_volume_total: float = 0.0
    box_side_total: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "n_boxes": self.n_boxes,
            "unique_named": self.unique_named,
            "named_occurrences": self.named_occurrences,
            "box_range_count": self.box_range_count,
            "disjunct_count": self.disjunct_count,
            "conjunct_count": self.conjunct_count,
            "vol_named_total": self.vol_named_total,
            "vol_named_unique": self.vol_named_unique,
            "vol_box_total": self.vol_box_total,
            "vol_box_unique": self.vol_box_unique,
            "vol_conjunct_total": self.vol_conjunct_total,
            "vol_conjunct_unique": self.vol_conjunct_unique,
            "box_volumes": [float(v) for v in self.box_volumes],
            "box_side_sums": [float(v) for v in self.box_side_sums],
            "named_multiset": {k: self.named_multiset[k] for k in sorted(self.named_multiset)},
            "fingerprint": self.fingerprint,
            "box_volume_total": self.box_volume_total,
            "box_side_total": self.box_side_total,
        }


@dataclass(eq=False)
class SurrogateState:
    """One timestep's full state: params, generated stats, features."""

    params: StateParams
    stats: DescriptionStats
    v: np.ndarray
    timestep: int
    question_id: str

    @property
    def fingerprint(self) -> str:
        return self.stats.fingerprint


def _purpose_rng(cfg: EnvConfig, params: StateParams, purpose: int) -> np.random.Generator:
    seq = np.random.SeedSequence([cfg.master_seed & (2**63 - 1), params.noise_draw & (2**63 - 1), purpose])
    return np.random.Generator(np.random.PCG64(seq))


def _draw_factors(rng: np.random.Generator, count: int) -> list[int]:
    """Per-axis split factors: 3 with probability 0.5, else 2."""
    return [3 if rng.random() < 0.5 else 2 for _ in range(count)]


def effective_dims(params: StateParams, cfg: EnvConfig) -> int:
    return cfg.question_dims if params.split_question_vars_only else cfg.input_dims


def abstraction_score(params: StateParams) -> float:
    """Scalar summary of how abstract the generated description will be."""
    return clamp01(
        0.15 * (6 - params.refinement_depth)
        + 0.25 * (1.0 if params.produce_greater_abstraction else 0.0)
        + 0.1 * (params.sampling_radius - 1.0)
        + 0.05 * params.merge_iters
    )


def render_description(stats: DescriptionStats) -> str:
    """Stable human-readable rendering; its hash is the state fingerprint."""
    named = ", ".join(
        f"{pid}x{stats.named_multiset[pid]}" for pid in sorted(stats.named_multiset)
    )
    vols = (
        f"named={stats.vol_named_total:.6f}/{stats.vol_named_unique:.6f} "
        f"box={stats.vol_box_total:.6f}/{stats.vol_box_unique:.6f} "
        f"conj={stats.vol_conjunct_total:.6f}/{stats.vol_conjunct_unique:.6f}"
    )
    boxes = ",".join(f"{v:.9f}" for v in stats.box_volumes[:16])
    return (
        f"{stats.disjunct_count} disjuncts / {stats.conjunct_count} conjuncts; "
        f"named[{named}]; ranges={stats.box_range_count}; "
        f"boxes={stats.n_boxes}({boxes}); {vols}"
    )


def generate_description(params: StateParams, cfg: EnvConfig) -> DescriptionStats:
    """Deterministically generate description statistics for a parameter set.

    Holding seeds fixed, the raw box count is nondecreasing in refinement
    depth and effective dimension, the box-range count is nonincreasing in
    the abstraction score, and the named coverage volume is nondecreasing
    in the abstraction score.
    """
    params.validate(cfg)
    d_eff = effective_dims(params, cfg)
    depth = params.refinement_depth

    factors = _draw_factors(_purpose_rng(cfg, params, _PURPOSE_FACTORS), d_eff * depth)
    n_raw = 1
    for f in factors:
        n_raw *= f
    if params.merge_iters == 0:
        n_boxes = n_raw
    else:
        n_boxes = max(1, round(n_raw * (1.0 - 0.08 * params.merge_iters)))

    score = abstraction_score(params)

    window = 0.2 + 0.1 * params.sampling_radius
    allowed = [p for p in cfg.predicate_catalog if p.id not in params.disallowed_predicates]
    support = sorted(p.id for p in allowed if abs(p.abstraction_level - score) <= window)
    unique_named = len(support)
    occurrences = unique_named + round(0.3 * unique_named * (1.0 - score))

    eta_rng = _purpose_rng(cfg, params, _PURPOSE_ETA)
    eta = int(eta_rng.integers(-1, 2))
    eta_prime = int(eta_rng.integers(-1, 2))
    box_range = max(0, round((1.0 - score) * (2.0 + log3(n_boxes))) + eta)

    disjuncts = 1 + round(2.0 * (1.0 - score))
    conjuncts = disjuncts * max(1, round((unique_named + box_range) / disjuncts))

    vol_named_total = clamp01(0.2 + 0.6 * score) if unique_named > 0 else 0.0
    vol_named_unique = 0.8 * vol_named_total
    vol_box_total = 1.0 - vol_named_total
    vol_box_unique = 0.8 * vol_box_total
    vol_conjunct_total = clamp01(0.4 + 0.4 * score)
    vol_conjunct_unique = 0.8 * vol_conjunct_total

    target_total = clamp01(0.9 + 0.05 * eta_prime)
    n_sample = min(n_boxes, BOX_SAMPLE_CAP)
    draws = _purpose_rng(cfg, params, _PURPOSE_BOXES).uniform(0.05, 1.0, size=n_sample)
    if n_boxes <= BOX_SAMPLE_CAP:
        box_volumes = draws * (target_total / draws.sum())
        box_volume_total = float(box_volumes.sum())
    else:
        # Sample of the population; scale by the expected normalizer.
        box_volumes = draws * (target_total / (n_boxes * _RAW_DRAW_MEAN))
        box_volume_total = target_total
    box_side_sums = d_eff * box_volumes ** (1.0 / d_eff)
    if n_boxes <= BOX_SAMPLE_CAP:
        box_side_total = float(box_side_sums.sum())
    else:
        box_side_total = float(n_boxes * box_side_sums.mean())

    multiset = {pid: 1 for pid in support}
    extra = occurrences - unique_named
    if extra > 0:
        extra_rng = _purpose_rng(cfg, params, _PURPOSE_MULTISET)
        for pid in extra_rng.choice(support, size=extra):
            multiset[str(pid)] += 1

    stats = DescriptionStats(
        n_boxes=n_boxes,
        unique_named=unique_named,
        named_occurrences=occurrences,
        box_range_count=box_range,
        disjunct_count=disjuncts,
        conjunct_count=conjuncts,
        vol_named_total=vol_named_total,
        vol_named_unique=vol_named_unique,
        vol_box_total=vol_box_total,
        vol_box_unique=vol_box_unique,
        vol_conjunct_total=vol_conjunct_total,
        vol_conjunct_unique=vol_conjunct_unique,
        box_volumes=box_volumes,
        box_side_sums=box_side_sums,
        named_multiset=multiset,
        fingerprint="",
        box_volume_total=box_volume_total,
        box_side_total=box_side_total,
    )
    stats.fingerprint = hashlib.sha256(render_description(stats).encode("utf-8")).hexdigest()[:16]
    return stats


def box_count_feature(n_boxes: int, depth: int, d_eff: int) -> float:
    """log3 of the box count relative to the maximum possible under full trisection.

    Equals 0 at maximal trisection (n = 3^(d_eff * depth)), negative otherwise.
    """
    if n_boxes < 1:
        raise ValueError("n_boxes must be >= 1")
    return log3(n_boxes) - d_eff * depth


def _eight_stats(values: np.ndarray, total: float) -> list[float]:
    # Fixed order: min, max, mean, median, std (population), total, Q1, Q3.
    if len(values) == 1:
        v = float(values[0])
        return [v, v, v, v, 0.0, total, v, v]
    return [
        float(values.min()),
        float(values.max()),
        float(values.mean()),
        float(np.median(values)),
        float(values.std()),
        total,
        float(np.percentile(values, 25)),
        float(np.percentile(values, 75)),
    ]


def extract_features(params: StateParams, stats: DescriptionStats, cfg: EnvConfig) -> np.ndarray:
    """The frozen 28-field feature vector over a generated description.

    Layout: [0-7] box-volume stats, [8-15] box side-sum stats, [16] box-count
    feature, [17] unique named, [18] named occurrences, [19] conjuncts,
    [20] disjuncts, [21] box-range count, [22-27] the six coverage volumes.
    """
    d_eff = effective_dims(params, cfg)
    out = np.empty(N_FEATURES, dtype=np.float64)
    out[0:8] = _eight_stats(stats.box_volumes, stats.box_volume_total)
    out[8:16] = _eight_stats(stats.box_side_sums, stats.box_side_total)
    out[16] = box_count_feature(stats.n_boxes, params.refinement_depth, d_eff)
    out[17] = stats.unique_named
    out[18] = stats.named_occurrences
    out[19] = stats.conjunct_count
    out[20] = stats.disjunct_count
    out[21] = stats.box_range_count
    out[22] = stats.vol_named_total
    out[23] = stats.vol_named_unique
    out[24] = stats.vol_box_total
    out[25] = stats.vol_box_unique
    out[26] = stats.vol_conjunct_total
    out[27] = stats.vol_conjunct_unique
    return out


# Feature indices (0-based) of the five judgment criteria:
# named coverage volume, box coverage volume, unique named count,
# conjunction count, box-range count.
CRITERIA_FEATURE_INDICES = (22, 24, 17, 19, 21)


def autouser_criteria(state: SurrogateState) -> np.ndarray:
    """The five-field criteria vector the simulated user judges changes by."""
    return state.v[list(CRITERIA_FEATURE_INDICES)].copy()


def make_state(
    params: StateParams, cfg: EnvConfig, timestep: int, question_id: str
) -> SurrogateState:
    stats = generate_description(params, cfg)
    v = extract_features(params, stats, cfg)
    return SurrogateState(
        params=params, stats=stats, v=v, timestep=timestep, question_id=question_id
    )


def state_to_json_dict(state: SurrogateState) -> dict:
    """Golden-file serialization with fixed key order."""
    p = state.params
    return {
        "params": {
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
        "stats": state.stats.to_json_dict(),
        "v": [float(x) for x in state.v],
        "timestep": state.timestep,
        "question_id": state.question_id,
    }

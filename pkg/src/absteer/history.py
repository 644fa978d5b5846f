"""Append-only interaction store with streaming statistics.

One record per displayed state, appended once the user's reaction to that
state is known. Each append atomically updates the per-field running
moments, the raw-value and delta reservoirs, the operator use counts, and
the global success tallies, so replaying a log reconstructs the exact same
statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .surrogate import N_FEATURES

RESERVOIR_CAPACITY = 4096

_RES_PURPOSE_RAW = 101
_RES_PURPOSE_DELTA = 102


class Reservoir:
    """Fixed-capacity uniform sample of a stream (classic algorithm R)."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.items: list[float] = []
        self.seen_count = 0
        self.rng = rng
        self._sorted: Optional[np.ndarray] = None

    def insert(self, x: float) -> None:
        self.seen_count += 1
        self._sorted = None
        if len(self.items) < self.capacity:
            self.items.append(x)
            return
        j = int(self.rng.integers(0, self.seen_count))
        if j < self.capacity:
            self.items[j] = x

    def sorted_values(self) -> np.ndarray:
        if self._sorted is None:
            self._sorted = np.sort(np.asarray(self.items, dtype=np.float64))
        return self._sorted

    def ecdf(self, x: float) -> float:
        """Fraction of sampled values <= x; 0.5 when nothing has been seen."""
        if not self.items:
            return 0.5
        vals = self.sorted_values()
        return float(np.searchsorted(vals, x, side="right")) / len(vals)


class RunningMoments:
    """Per-field count/sum/sum-of-squares, enough for mean and population std."""

    def __init__(self, n_fields: int = N_FEATURES):
        self.count = 0
        self.sum = np.zeros(n_fields)
        self.sum_sq = np.zeros(n_fields)

    def add(self, v: np.ndarray) -> None:
        self.count += 1
        self.sum += v
        self.sum_sq += v * v

    def mean(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.sum)
        return self.sum / self.count

    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.sum)
        m = self.mean()
        var = np.maximum(self.sum_sq / self.count - m * m, 0.0)
        return np.sqrt(var)


@dataclass(eq=False)
class InteractionRecord:
    """One resolved step: the state shown, the operator that produced it, the
    request that prompted that operator, the user's reaction, and the reward.

    generating_request is None for the session-opening state. The reward is
    None exactly when no operator is being scored (the opening state).
    """

    session_id: str
    question_id: str
    timestep: int
    operator: str
    generating_request: Optional[str]
    feedback: str
    reward: Optional[int]
    fell_back: bool
    params: dict
    v: np.ndarray
    named_multiset: dict[str, int]
    fingerprint: str
    unique_named: int
    trace: Optional[dict] = None
    verdict: Optional[dict] = None
    learn: Optional[dict] = None
    feedback_payload: Optional[dict] = None

    def to_json_dict(self) -> dict:
        d = {
            "kind": "record",
            "session": self.session_id,
            "question": self.question_id,
            "t": self.timestep,
            "op": self.operator,
            "gen_req": self.generating_request,
            "feedback": self.feedback,
            "reward": self.reward,
            "fell_back": self.fell_back,
            "params": self.params,
            "v": [float(x) for x in self.v],
            "named_multiset": {k: self.named_multiset[k] for k in sorted(self.named_multiset)},
            "fingerprint": self.fingerprint,
            "u": self.unique_named,
        }
        if self.trace is not None:
            d["trace"] = self.trace
        if self.verdict is not None:
            d["verdict"] = self.verdict
        if self.learn is not None:
            d["learn"] = self.learn
        if self.feedback_payload is not None:
            d["feedback_payload"] = self.feedback_payload
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "InteractionRecord":
        return InteractionRecord(
            session_id=d["session"],
            question_id=d["question"],
            timestep=d["t"],
            operator=d["op"],
            generating_request=d["gen_req"],
            feedback=d["feedback"],
            reward=d["reward"],
            fell_back=d["fell_back"],
            params=d["params"],
            v=np.asarray(d["v"], dtype=np.float64),
            named_multiset=dict(d["named_multiset"]),
            fingerprint=d["fingerprint"],
            unique_named=d["u"],
            trace=d.get("trace"),
            verdict=d.get("verdict"),
            learn=d.get("learn"),
            feedback_payload=d.get("feedback_payload"),
        )


class _KindIndex:
    """Growable arrays over records sharing one generating request kind."""

    def __init__(self):
        self.size = 0
        cap = 256
        self.features = np.empty((cap, N_FEATURES))
        self.y = np.empty(cap)
        self.op_sel = np.empty(cap, dtype=np.int64)

    def append(self, v: np.ndarray, y: float, op_sel: int) -> None:
        if self.size == len(self.y):
            cap = 2 * self.size
            self.features = np.concatenate([self.features, np.empty((self.size, N_FEATURES))])
            self.y = np.concatenate([self.y, np.empty(self.size)])
            self.op_sel = np.concatenate([self.op_sel, np.empty(self.size, dtype=np.int64)])
        self.features[self.size] = v
        self.y[self.size] = y
        self.op_sel[self.size] = op_sel
        self.size += 1

    def window(self, limit: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo = 0 if limit <= 0 else max(0, self.size - limit)
        return (
            self.features[lo : self.size],
            self.y[lo : self.size],
            self.op_sel[lo : self.size],
        )


class HistoryStore:
    """Single-writer record store; readers see immutable snapshots.

    Persistence is one JSONL file per session plus a global index file,
    append-only. Reservoir randomness derives from the master seed so a
    replay of the same log reproduces identical reservoirs.
    """

    def __init__(
        self,
        master_seed: int,
        out_dir: Optional[Path] = None,
        reservoir_capacity: int = RESERVOIR_CAPACITY,
        selectable_names: Optional[list[str]] = None,
    ):
        self.master_seed = master_seed
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.records: list[InteractionRecord] = []
        self.moments = RunningMoments()
        self.raw_reservoirs = [
            Reservoir(reservoir_capacity, self._rng(_RES_PURPOSE_RAW, j)) for j in range(N_FEATURES)
        ]
        self.delta_reservoirs = [
            Reservoir(reservoir_capacity, self._rng(_RES_PURPOSE_DELTA, j))
            for j in range(N_FEATURES)
        ]
        self.selectable_names = list(selectable_names or [])
        self._sel_index = {n: i for i, n in enumerate(self.selectable_names)}
        self.use_counts = np.zeros(len(self.selectable_names), dtype=np.int64)
        self.n_success = 0
        self.n_failure = 0
        self._by_kind: dict[str, _KindIndex] = {"m": _KindIndex(), "l": _KindIndex()}
        self._by_key: dict[tuple[str, int], int] = {}
        self._last_in_question: dict[str, int] = {}
        self._session_files: dict[str, object] = {}
        if self.out_dir is not None:
            (self.out_dir / "sessions").mkdir(parents=True, exist_ok=True)

    def _rng(self, purpose: int, j: int) -> np.random.Generator:
        seq = np.random.SeedSequence([self.master_seed & (2**63 - 1), purpose, j])
        return np.random.Generator(np.random.PCG64(seq))

    # -- append path -------------------------------------------------------

    def append(self, rec: InteractionRecord, persist: bool = True) -> None:
        key = (rec.session_id, rec.timestep)
        if key in self._by_key:
            raise ValueError(f"duplicate record key: {key}")
        prev_idx = self._last_in_question.get(rec.question_id)
        if prev_idx is None:
            if rec.timestep != 0:
                raise ValueError("first record of a question must have timestep 0")
        else:
            prev = self.records[prev_idx]
            if rec.timestep != prev.timestep + 1:
                raise ValueError("timesteps within a question must be contiguous")

        idx = len(self.records)
        self.records.append(rec)
        self._by_key[key] = idx

        self.moments.add(rec.v)
        for j in range(N_FEATURES):
            self.raw_reservoirs[j].insert(float(rec.v[j]))
        if prev_idx is not None:
            prev_v = self.records[prev_idx].v
            for j in range(N_FEATURES):
                self.delta_reservoirs[j].insert(float(rec.v[j] - prev_v[j]))
        self._last_in_question[rec.question_id] = idx

        op_sel = self._sel_index.get(rec.operator)
        if op_sel is not None:
            self.use_counts[op_sel] += 1

        if rec.reward == 1:
            self.n_success += 1
        elif rec.reward == -1:
            self.n_failure += 1

        if rec.generating_request in ("m", "l") and rec.reward is not None:
            self._by_kind[rec.generating_request].append(
                rec.v, float(rec.reward), -1 if op_sel is None else op_sel
            )

        if persist and self.out_dir is not None:
            self._write_line(rec.session_id, rec.to_json_dict())

    # -- persistence -------------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.out_dir / "sessions" / f"{session_id}.jsonl"

    def _write_line(self, session_id: str, obj: dict) -> None:
        fh = self._session_files.get(session_id)
        if fh is None:
            fh = open(self._session_path(session_id), "a", encoding="utf-8")
            self._session_files[session_id] = fh
        fh.write(json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n")
        fh.flush()

    def write_event(self, session_id: str, obj: dict) -> None:
        if self.out_dir is not None:
            self._write_line(session_id, obj)

    def write_index_entry(self, obj: dict) -> None:
        if self.out_dir is None:
            return
        with open(self.out_dir / "index.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n")

    def close_session_file(self, session_id: str) -> None:
        fh = self._session_files.pop(session_id, None)
        if fh is not None:
            fh.close()

    def close(self) -> None:
        for fh in self._session_files.values():
            fh.close()
        self._session_files.clear()

    # -- queries -----------------------------------------------------------

    def successor(self, rec: InteractionRecord) -> Optional[InteractionRecord]:
        """The next state answering the same question instance, if recorded."""
        idx = self._by_key.get((rec.session_id, rec.timestep + 1))
        if idx is None:
            return None
        nxt = self.records[idx]
        return nxt if nxt.question_id == rec.question_id else None

    def filter_q(self, request: str) -> list[InteractionRecord]:
        """Records whose generating request matches and whose reward resolved."""
        if request not in ("m", "l"):
            raise ValueError("request must be 'm' or 'l'")
        return [
            r
            for r in self.records
            if r.generating_request == request and r.reward is not None
        ]

    def kind_window(self, request: str, limit: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Array view (features, rewards, selectable op indices) over the most
        recent matching records; limit <= 0 means unbounded."""
        return self._by_kind[request].window(limit)

    def global_success_rate(self) -> float:
        denom = self.n_success + self.n_failure
        return 0.0 if denom == 0 else self.n_success / denom

    def total_uses(self) -> int:
        return int(self.use_counts.sum())

    def delta_distribution(self, j: int) -> Reservoir:
        return self.delta_reservoirs[j]

    # -- replay ------------------------------------------------------------

    @staticmethod
    def iter_log(path: Path) -> Iterable[dict]:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    @classmethod
    def replay(
        cls,
        master_seed: int,
        session_files: list[Path],
        reservoir_capacity: int = RESERVOIR_CAPACITY,
        selectable_names: Optional[list[str]] = None,
    ) -> "HistoryStore":
        """Rebuild a store (records plus all streaming statistics) from logs."""
        store = cls(
            master_seed,
            out_dir=None,
            reservoir_capacity=reservoir_capacity,
            selectable_names=selectable_names,
        )
        for path in session_files:
            for obj in cls.iter_log(path):
                if obj.get("kind") == "record":
                    store.append(InteractionRecord.from_json_dict(obj), persist=False)
        return store

"""Post-run analysis battery over session logs.

Every report is a pure function of the logs: a replay of the same JSONL
directory produces identical tables. The report path also renders the
figures to PNG files next to the delimited output, plus one static HTML
summary page.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .autouser import compute_ell
from .decision import entropy
from .surrogate import CRITERIA_FEATURE_INDICES

WILSON_Z = 1.959963984540054  # two-sided 95%

CRITERIA_NAMES = (
    "vol_named_total",
    "vol_box_total",
    "unique_named",
    "conjunct_count",
    "box_range_count",
)


@dataclass(eq=False)
class SessionLog:
    session_id: str
    start: Optional[dict]
    records: list[dict]
    end: Optional[dict]


@dataclass(eq=False)
class RunLog:
    sessions: list[SessionLog]

    @property
    def records(self) -> list[dict]:
        out = []
        for s in self.sessions:
            out.extend(s.records)
        return out

    def final_weights(self) -> Optional[list[float]]:
        for s in reversed(self.sessions):
            if s.end is not None and "weights" in s.end:
                return s.end["weights"]
        return None


def load_run(log_dir: Path) -> RunLog:
    log_dir = Path(log_dir)
    sessions = []
    for path in sorted((log_dir / "sessions").glob("*.jsonl")):
        start, end, records = None, None, []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                kind = obj.get("kind")
                if kind == "session_start":
                    start = obj
                elif kind == "session_end":
                    end = obj
                elif kind == "record":
                    records.append(obj)
        sessions.append(SessionLog(path.stem, start, records, end))
    return RunLog(sessions)


# -- individual analyses -------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


def success_curve(run: RunLog, window: int = 100) -> list[dict]:
    """Trailing-window success rate over adjudicated steps, with 95% Wilson
    bounds to account for discretization."""
    rewards = [r["reward"] for r in run.records if r["reward"] in (-1, 1)]
    out = []
    for i in range(len(rewards)):
        lo = max(0, i + 1 - window)
        chunk = rewards[lo : i + 1]
        wins = sum(1 for y in chunk if y == 1)
        lo_b, hi_b = wilson_interval(wins, len(chunk))
        out.append(
            {"step": i, "rate": wins / len(chunk), "lower": lo_b, "upper": hi_b, "n": len(chunk)}
        )
    return out


def entropy_series(run: RunLog) -> list[dict]:
    """Recomputed entropy of every logged aggregated distribution, plus the
    running mean."""
    out = []
    total = 0.0
    for rec in run.records:
        trace = rec.get("trace")
        if not trace or trace.get("d_samp") is None:
            continue
        h = entropy(np.asarray(trace["d_samp"], dtype=np.float64))
        total += h
        out.append(
            {
                "session": rec["session"],
                "t": rec["t"],
                "entropy": h,
                "running_mean": total / (len(out) + 1),
            }
        )
    return out


def opinion_strength_series(run: RunLog, k_au: int = 5) -> list[dict]:
    """Judgment-strength value per adjudicated simulated-user step; undefined
    points (no noticeable change, or a success rate pinned at 0/1) are skipped."""
    ell = compute_ell(k_au)
    out = []
    for rec in run.records:
        verdict = rec.get("verdict")
        if not verdict or verdict["s2"] == 0:
            continue
        g = verdict["g"]
        denom = g - g**ell
        if denom == 0.0:
            continue
        ratio = verdict["s1"] / verdict["s2"]
        out.append(
            {
                "session": rec["session"],
                "t": rec["t"],
                "strength": (ratio - g**ell) / denom,
                "ratio": ratio,
                "g": g,
            }
        )
    return out


def blank_baseline(run: RunLog) -> list[dict]:
    """Mean/variance of each judgment criterion's change across blank-operator
    transitions: the natural-variance baseline."""
    deltas: dict[str, list[float]] = {name: [] for name in CRITERIA_NAMES}
    for session in run.sessions:
        for prev, rec in zip(session.records, session.records[1:]):
            if rec["op"] != "blank":
                continue
            for name, idx in zip(CRITERIA_NAMES, CRITERIA_FEATURE_INDICES):
                deltas[name].append(rec["v"][idx] - prev["v"][idx])
    out = []
    for name in CRITERIA_NAMES:
        vals = np.asarray(deltas[name])
        if len(vals) == 0:
            continue
        out.append(
            {
                "criterion": name,
                "n": len(vals),
                "mean": float(vals.mean()),
                "variance": float(vals.var()),
            }
        )
    return out


def cycle_scan(run: RunLog) -> list[dict]:
    """Repeated description fingerprints within a session; every recurrence is
    one cycle whose period is the gap to the previous occurrence."""
    out = []
    for session in run.sessions:
        last_seen: dict[str, int] = {}
        for rec in session.records:
            fp = rec["fingerprint"]
            if fp in last_seen:
                out.append(
                    {
                        "session": session.session_id,
                        "t": rec["t"],
                        "period": rec["t"] - last_seen[fp],
                        "fingerprint": fp,
                    }
                )
            last_seen[fp] = rec["t"]
    return out


def weight_report(run: RunLog, specs: Optional[list] = None) -> list[dict]:
    """Final selector weights, ranked by signed value."""
    weights = run.final_weights()
    if weights is None:
        return []
    labels = {}
    if specs is not None:
        labels = {s.id: s.label() for s in specs}
    rows = [
        {"selector": i, "label": labels.get(i, str(i)), "weight": w}
        for i, w in enumerate(weights)
    ]
    rows.sort(key=lambda r: -r["weight"])
    for rank, row in enumerate(rows):
        row["rank"] = rank + 1
    return rows


def usage_report(run: RunLog) -> list[dict]:
    """Per-operator use counts and success rates."""
    uses: dict[str, int] = {}
    wins: dict[str, int] = {}
    losses: dict[str, int] = {}
    for rec in run.records:
        if rec["t"] == 0:
            continue
        op = rec["op"]
        uses[op] = uses.get(op, 0) + 1
        if rec["reward"] == 1:
            wins[op] = wins.get(op, 0) + 1
        elif rec["reward"] == -1:
            losses[op] = losses.get(op, 0) + 1
    rows = []
    for op in sorted(uses):
        n_adj = wins.get(op, 0) + losses.get(op, 0)
        rows.append(
            {
                "operator": op,
                "uses": uses[op],
                "successes": wins.get(op, 0),
                "failures": losses.get(op, 0),
                "success_rate": wins.get(op, 0) / n_adj if n_adj else math.nan,
            }
        )
    rows.sort(key=lambda r: -r["uses"])
    return rows


def dirac_cross_reference(run: RunLog, specs: list, selectable_names: list[str]) -> list[dict]:
    weights = run.final_weights()
    if weights is None:
        return []
    rows = []
    for s in specs:
        if s.kind == "dirac":
            rows.append(
                {
                    "operator": selectable_names[s.op_sel_index],
                    "selector": s.id,
                    "weight": weights[s.id],
                }
            )
    rows.sort(key=lambda r: -r["weight"])
    return rows


def correlation_report(run: RunLog) -> list[dict]:
    """Pearson correlation between consecutive aggregated distributions,
    stratified by whether the later step flipped the request, with the
    judgment strength alongside for the scatter."""
    out = []
    for session in run.sessions:
        for prev, rec in zip(session.records, session.records[1:]):
            tp, tc = prev.get("trace"), rec.get("trace")
            if not tp or not tc or tp.get("d_samp") is None or tc.get("d_samp") is None:
                continue
            a = np.asarray(tp["d_samp"])
            b = np.asarray(tc["d_samp"])
            if a.std() == 0.0 or b.std() == 0.0:
                continue
            r = float(np.corrcoef(a, b)[0, 1])
            verdict = rec.get("verdict") or {}
            strength = verdict.get("strength")
            out.append(
                {
                    "session": session.session_id,
                    "t": rec["t"],
                    "pearson_r": r,
                    "flipped": prev["feedback"] != rec["feedback"],
                    "strength": strength if strength is not None else math.nan,
                }
            )
    return out


# -- emission --------------------------------------------------------------------


def _finite_or_none(rows: list[dict]) -> list[dict]:
    return [
        {
            k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in row.items()
        }
        for row in rows
    ]


def _write_table(rows: list[dict], path: Path, fmt: str) -> None:
    rows = _finite_or_none(rows)
    if fmt == "json":
        with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1, allow_nan=False)
        return
    with open(path.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        if not rows:
            fh.write("")
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _render_figures(tables: dict[str, list[dict]], out_dir: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []

    def save(fig, name):
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path.name)

    rows = tables["success_curve"]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        xs = [r["step"] for r in rows]
        ax.plot(xs, [r["rate"] for r in rows], lw=1.2, label="trailing success")
        ax.fill_between(
            xs,
            [r["lower"] for r in rows],
            [r["upper"] for r in rows],
            alpha=0.25,
            label="95% Wilson",
        )
        ax.set_xlabel("adjudicated step")
        ax.set_ylabel("success rate")
        ax.set_ylim(0, 1)
        ax.legend(loc="lower right", fontsize=8)
        save(fig, "success_curve")

    rows = tables["entropy"]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.plot([r["entropy"] for r in rows], lw=0.6, alpha=0.5, label="per-step")
        ax.plot([r["running_mean"] for r in rows], lw=1.5, label="running mean")
        ax.set_xlabel("decision")
        ax.set_ylabel("entropy (nats)")
        ax.legend(fontsize=8)
        save(fig, "entropy")

    rows = tables["opinion_strength"]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.plot([r["strength"] for r in rows], ".", ms=2, alpha=0.5)
        ax.axhline(0.0, color="k", lw=0.5)
        ax.axhline(1.0, color="k", lw=0.5)
        ax.set_xlabel("adjudicated autouser step")
        ax.set_ylabel("opinion strength")
        save(fig, "opinion_strength")

    rows = tables["selector_weights"]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        top = rows[:15][::-1]
        bottom = rows[-15:][::-1]
        names = [r["label"] for r in bottom] + [r["label"] for r in top]
        vals = [r["weight"] for r in bottom] + [r["weight"] for r in top]
        ax.barh(range(len(vals)), vals, height=0.7)
        ax.set_yticks(range(len(vals)))
        ax.set_yticklabels(names, fontsize=6)
        ax.set_xlabel("weight")
        save(fig, "selector_weights")

    rows = tables["operator_usage"]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.bar(range(len(rows)), [r["uses"] for r in rows])
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels([r["operator"] for r in rows], rotation=75, fontsize=6)
        ax.set_ylabel("uses")
        save(fig, "operator_usage")

    rows = tables["cycles"]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        periods = [r["period"] for r in rows]
        ax.hist(periods, bins=range(1, max(periods) + 2))
        ax.set_xlabel("cycle period")
        ax.set_ylabel("count")
        save(fig, "cycles")

    rows = [r for r in tables["correlation"] if math.isfinite(r["strength"])]
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        flip = [r for r in rows if r["flipped"]]
        stay = [r for r in rows if not r["flipped"]]
        if stay:
            ax.plot(
                [r["strength"] for r in stay], [r["pearson_r"] for r in stay],
                ".", ms=3, alpha=0.5, label="reissued",
            )
        if flip:
            ax.plot(
                [r["strength"] for r in flip], [r["pearson_r"] for r in flip],
                ".", ms=3, alpha=0.5, label="flipped",
            )
        ax.set_xlabel("opinion strength")
        ax.set_ylabel("consecutive-vote correlation")
        ax.legend(fontsize=8)
        save(fig, "correlation")

    return written


_HTML_TEMPLATE = """<!doctype html>
<html><head><meta charset="utf-8"><title>run report</title>
<style>
 body {{ font-family: sans-serif; margin: 2em; max-width: 70em; }}
 table {{ border-collapse: collapse; margin: 1em 0; }}
 td, th {{ border: 1px solid #999; padding: 2px 8px; font-size: 13px; }}
 img {{ max-width: 100%; display: block; margin: 1em 0; }}
</style></head>
<body>
<h1>Run report</h1>
<table>
<tr><th>sessions</th><td>{n_sessions}</td></tr>
<tr><th>records</th><td>{n_records}</td></tr>
<tr><th>adjudicated</th><td>{adjudicated}</td></tr>
<tr><th>global success rate</th><td>{success_rate:.4f}</td></tr>
<tr><th>trailing-100 success</th><td>{trailing:.4f}</td></tr>
</table>
{figures}
</body></html>
"""


def build_tables(
    run: RunLog,
    specs: Optional[list] = None,
    selectable_names: Optional[list[str]] = None,
) -> dict[str, list[dict]]:
    tables = {
        "success_curve": success_curve(run),
        "entropy": entropy_series(run),
        "opinion_strength": opinion_strength_series(run),
        "blank_baseline": blank_baseline(run),
        "cycles": cycle_scan(run),
        "selector_weights": weight_report(run, specs),
        "operator_usage": usage_report(run),
        "correlation": correlation_report(run),
        "records": records_table(run),
    }
    if specs is not None and selectable_names is not None:
        tables["dirac_weights"] = dirac_cross_reference(run, specs, selectable_names)
    return tables


def records_table(run: RunLog) -> list[dict]:
    """Flat per-record slice keyed by (session, t): the raw material for any
    human-driven analysis not automated here."""
    rows = []
    for rec in run.records:
        rows.append(
            {
                "session": rec["session"],
                "t": rec["t"],
                "op": rec["op"],
                "gen_req": rec["gen_req"],
                "feedback": rec["feedback"],
                "reward": rec["reward"],
                "fell_back": rec["fell_back"],
                "fingerprint": rec["fingerprint"],
                "unique_named": rec["u"],
                "entropy": (rec.get("trace") or {}).get("entropy"),
            }
        )
    return rows


def write_report(
    log_dir: Path,
    out_dir: Optional[Path] = None,
    fmt: str = "csv",
    specs: Optional[list] = None,
    selectable_names: Optional[list[str]] = None,
    render: bool = True,
    sessions: Optional[list[str]] = None,
) -> dict:
    """Emit the full battery: delimited tables, PNG figures, HTML summary.
    Returns the summary dict."""
    log_dir = Path(log_dir)
    out_dir = Path(out_dir) if out_dir is not None else log_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    run = load_run(log_dir)
    if sessions:
        run = RunLog([s for s in run.sessions if s.session_id in sessions])
    tables = build_tables(run, specs, selectable_names)
    for name, rows in tables.items():
        _write_table(rows, out_dir / name, fmt)

    figures = _render_figures(tables, out_dir) if render else []

    rewards = [r["reward"] for r in run.records if r["reward"] in (-1, 1)]
    tail = rewards[-100:]
    summary = {
        "n_sessions": len(run.sessions),
        "n_records": len(run.records),
        "adjudicated": len(rewards),
        "success_rate": (
            sum(1 for y in rewards if y == 1) / len(rewards) if rewards else 0.0
        ),
        "trailing_success_rate": (
            sum(1 for y in tail if y == 1) / len(tail) if tail else 0.0
        ),
        "tables": sorted(tables),
        "figures": figures,
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
    html = _HTML_TEMPLATE.format(
        n_sessions=summary["n_sessions"],
        n_records=summary["n_records"],
        adjudicated=summary["adjudicated"],
        success_rate=summary["success_rate"],
        trailing=summary["trailing_success_rate"],
        figures="\n".join(f'<h2>{name[:-4]}</h2><img src="{name}">' for name in figures),
    )
    (out_dir / "report.html").write_text(html, encoding="utf-8")
    return summary

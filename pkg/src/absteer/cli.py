"""Command-line entry points: bootstrap runs, log replay, the report
battery, the live session service, and catalog export.

Exit codes: 0 ok, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .autouser import AutouserConfig
from .engine import Engine, EngineConfig, run_bootstrap
from .history import HistoryStore
from .operators import build_catalog
from .reports import write_report
from .selectors import SelectorConfig, build_selector_specs
from .surrogate import EnvConfig

IO_ERROR = 3
CONFIG_ERROR = 2


def _env_config(env_config_path, seed):
    if env_config_path is not None:
        cfg = EnvConfig.from_file(env_config_path)
        if seed is not None:
            from dataclasses import replace

            cfg = replace(cfg, master_seed=seed)
        return cfg
    return EnvConfig(master_seed=seed if seed is not None else 0)


@click.group()
def main():
    """Operator-selection learning engine with a simulated-user bootstrap."""


@main.command()
@click.option("--sessions", "n_sessions", type=int, required=True, help="Number of sessions to run.")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed.")
@click.option("--max-adjustments", type=int, default=30, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--policy", type=click.Choice(["learned", "blank"]), default="learned", show_default=True)
@click.option("--history-window", type=int, default=512, show_default=True)
@click.option("--env-config", type=click.Path(exists=True, path_type=Path), default=None)
def bootstrap(n_sessions, seed, max_adjustments, out_dir, policy, history_window, env_config):
    """Run simulated-user sessions and write JSONL logs."""
    if n_sessions < 1 or max_adjustments < 1:
        raise click.UsageError("--sessions and --max-adjustments must be positive")
    try:
        env_cfg = _env_config(env_config, seed)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_ERROR)
    try:
        engine = Engine(
            env_cfg=env_cfg,
            engine_cfg=EngineConfig(policy=policy, history_window=history_window),
            out_dir=out_dir,
        )
        summary = run_bootstrap(engine, n_sessions, max_adjustments=max_adjustments)
        engine.store.close()
        with open(out_dir / "run_summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary.to_json_dict(), fh, indent=1)
        _write_weights_csv(engine, out_dir / "weights.csv")
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(IO_ERROR)
    click.echo(json.dumps(summary.to_json_dict(), indent=1))


def _write_weights_csv(engine, path):
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["selector", "kind", "label", "weight"])
        for spec, w in zip(engine.specs, engine.weights.w):
            writer.writerow([spec.id, spec.kind, spec.label(), repr(float(w))])


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="One session JSONL file, or a run directory.")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed of the original run.")
def replay(log_path, seed):
    """Rebuild streaming statistics from a log and print a digest."""
    try:
        if log_path.is_dir():
            files = sorted((log_path / "sessions").glob("*.jsonl"))
        else:
            files = [log_path]
        if not files:
            click.echo("no session files found", err=True)
            sys.exit(CONFIG_ERROR)
        catalog = build_catalog(EnvConfig(master_seed=seed))
        store = HistoryStore.replay(
            seed, files, selectable_names=[op.name for op in catalog.selectable]
        )
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(IO_ERROR)
    digest = {
        "records": len(store.records),
        "adjudicated": store.n_success + store.n_failure,
        "global_success_rate": store.global_success_rate(),
        "operator_uses": int(store.total_uses()),
        "moments_count": store.moments.count,
    }
    click.echo(json.dumps(digest, indent=1))


@main.command()
@click.option("--log", "log_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.option("--sessions", default=None, help="Comma-separated session ids to slice.")
@click.option("--no-figures", is_flag=True, default=False, help="Skip PNG rendering.")
@click.option("--seed", type=int, default=0, show_default=True)
def report(log_dir, fmt, out_dir, sessions, no_figures, seed):
    """Emit the analysis battery: tables, figures, and an HTML summary."""
    env_cfg = EnvConfig(master_seed=seed)
    catalog = build_catalog(env_cfg)
    specs = build_selector_specs(catalog)
    try:
        summary = write_report(
            log_dir,
            out_dir=out_dir,
            fmt=fmt,
            specs=specs,
            selectable_names=[op.name for op in catalog.selectable],
            render=not no_figures,
            sessions=sessions.split(",") if sessions else None,
        )
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(IO_ERROR)
    click.echo(json.dumps(summary, indent=1))


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Directory for session logs (shared with bootstrap runs).")
def serve(port, host, seed, out_dir):
    """Serve live sessions over HTTP for the steering console."""
    import uvicorn

    from .service import create_app

    app = create_app(out_dir=out_dir, master_seed=seed)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Write JSON here instead of stdout.")
@click.option("--seed", type=int, default=0, show_default=True)
def catalog(out_path, seed):
    """Dump the operator catalog and selector census as JSON."""
    env_cfg = EnvConfig(master_seed=seed)
    cat = build_catalog(env_cfg)
    specs = build_selector_specs(cat)
    doc = {
        "operators": cat.to_json(),
        "selectable_count": cat.selectable_count,
        "selector_census": len(specs),
        "selectors": [s.to_json_dict() for s in specs],
    }
    text = json.dumps(doc, indent=1)
    if out_path is not None:
        try:
            out_path.write_text(text, encoding="utf-8")
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(IO_ERROR)
    else:
        click.echo(text)


if __name__ == "__main__":
    main()

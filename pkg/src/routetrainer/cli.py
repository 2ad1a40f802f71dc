"""Command line entry points.

Everything works against a store directory, so the commands compose: ingest a
trace, curate the draft it produced, run the negotiation script, simulate
training sessions, then read the reports. `serve` exposes the same store over
HTTP.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .canonical import canonical_dumps
from .config import AppConfig, load_config
from .engine import Modality, Supervision, TrainingConfig
from .geo import read_trace_csv
from .model import Way
from .service import TrainingService
from .sim import WalkerProfile, run_simulation
from .store import Store


def _read_rows(path: Path) -> list[dict]:
    """Accept either a JSON array or NDJSON, one object per line."""
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        rows = json.loads(text)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not isinstance(rows, list):
        raise click.ClickException(f"{path}: expected a list of objects")
    return rows


@click.group()
@click.option(
    "--store",
    "store_path",
    envvar="ROUTETRAINER_STORE",
    default="./routetrainer-data",
    show_default=True,
    help="Store directory (also via ROUTETRAINER_STORE).",
)
@click.option("--config", "config_path", default=None, help="Config JSON file.")
@click.pass_context
def main(ctx, store_path: str, config_path: str | None):
    ctx.ensure_object(dict)
    ctx.obj["store"] = Store(store_path)
    ctx.obj["config"] = load_config(config_path)
    ctx.obj["service"] = TrainingService(ctx.obj["store"], ctx.obj["config"])


def _service(ctx) -> TrainingService:
    return ctx.obj["service"]


@main.group()
def erw():
    """Environment walk capture."""


@erw.command("ingest")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--way", "way_id", required=True, help="Way the walk belongs to.")
@click.option("--owner", default="trainer", show_default=True, help="Owner for an auto-created way.")
@click.pass_context
def erw_ingest(ctx, trace: Path, way_id: str, owner: str):
    """Turn a recorded GPS trace into a finished walk and a draft route."""
    service = _service(ctx)
    store = ctx.obj["store"]
    fixes = read_trace_csv(trace)
    if not fixes:
        raise click.ClickException(f"{trace}: no fixes")
    if way_id not in store.list_ways():
        # a stub way lets a bare trace enter the pipeline without setup
        store.save_way(
            Way(
                id=way_id,
                origin_label="origin",
                origin=fixes[0].point,
                destination_label="destination",
                destination=fixes[-1].point,
                owner_user_id=owner,
            )
        )
        click.echo(f"created way {way_id}")
    session, draft = service.ingest_walk(way_id, fixes)
    click.echo(f"walk {session.id}: {len(fixes)} fixes, {len(session.candidate_pois)} candidates")
    click.echo(f"draft route {draft.id} v{draft.version} ({draft.geometry.length_m:.0f} m)")


@main.group()
def route():
    """Route curation."""


@route.command("curate")
@click.argument("route_id")
@click.option(
    "--edits",
    "edits_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Edit list (JSON array or NDJSON).",
)
@click.pass_context
def route_curate(ctx, route_id: str, edits_path: Path):
    """Apply an edit batch; all edits land or none do."""
    edits = _read_rows(edits_path)
    updated = _service(ctx).curate(route_id, edits)
    click.echo(f"route {updated.id} now v{updated.version} ({len(updated.pois)} POIs)")


@main.group()
def negotiate():
    """Route negotiation."""


@negotiate.command("run")
@click.argument("route_id")
@click.option(
    "--script",
    "script_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Action transcript (JSON array or NDJSON).",
)
@click.pass_context
def negotiate_run(ctx, route_id: str, script_path: Path):
    """Replay a negotiation transcript and finalize if everything is decided."""
    service = _service(ctx)
    actions = _read_rows(script_path)
    neg = service.open_negotiation(route_id)
    ts = 0
    for row in actions:
        ts = row.get("ts_ms", ts + 1)
        neg = service.step_negotiation(
            route_id, row["action"], ts, detail=row.get("detail")
        )
    click.echo(f"negotiation {neg.id}: {len(actions)} actions")
    if neg.all_decided():
        working = service.finalize_negotiation(route_id)
        click.echo(f"route {working.id} v{working.version} is working")
    else:
        undecided = [p.id for p in neg.route.pois if neg.record_for(p.id).decided is None]
        click.echo(f"still undecided: {', '.join(undecided)}")


@main.group()
def train():
    """Training sessions."""


@train.command("simulate")
@click.option("--route", "route_id", required=True)
@click.option("--profile", "profile_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--seed", required=True, type=int)
@click.option("--supervision", default="in_person", show_default=True)
@click.option("--modality", "modalities", multiple=True, default=("text", "audio"), show_default=True)
@click.pass_context
def train_simulate(ctx, route_id: str, profile_path: Path, seed: int, supervision: str, modalities: tuple[str, ...]):
    """Run one scripted walker over a working route and store the record."""
    store = ctx.obj["store"]
    config: AppConfig = ctx.obj["config"]
    route = store.load_route(route_id)
    profile = WalkerProfile.from_dict(json.loads(profile_path.read_text(encoding="utf-8")))
    training = TrainingConfig(Supervision(supervision), frozenset(Modality(m) for m in modalities))
    record = run_simulation(route, training, profile, seed, settings=config.engine)
    store.save_session_record(record)
    click.echo(f"session {record.session_id}: {len(record.events)} events")
    report = _service(ctx).indicators_for(record.session_id)
    for key in ("autonomy", "accuracy", "error_rate_per_km", "recovery"):
        click.echo(f"  {key}: {report[key]}")


@main.group()
def indicators():
    """Learning indicators."""


@indicators.command("report")
@click.argument("session_id")
@click.pass_context
def indicators_report_cmd(ctx, session_id: str):
    """Print the indicator report for an ended session as JSON."""
    click.echo(canonical_dumps(_service(ctx).indicators_for(session_id)))


@main.command("serve")
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--config", "config_path", default=None, help="Config JSON file (overrides the group option).")
@click.pass_context
def serve(ctx, port: int, host: str, config_path: str | None):
    """Serve the store over HTTP."""
    import uvicorn

    from .server import create_app

    config = load_config(config_path) if config_path else ctx.obj["config"]
    app = create_app(ctx.obj["store"], config)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

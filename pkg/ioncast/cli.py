"""
Command-line entry point.

Usage:
    ioncast synth --config configs/desk_gnn.toml
    ioncast ingest --config configs/files.toml
    ioncast mesh-info --levels 3
    ioncast train --config configs/desk_gnn.toml [--dry-run] [--resume runs/x/checkpoint.npz]
    ioncast forecast --config ... --checkpoint runs/x/best.npz --start 2015-02-10T00:00:00Z --horizon 48
    ioncast evaluate --config ... --checkpoint runs/x/best.npz
    ioncast ablate --config ... [--date-ranges]

Exit codes: 0 ok, 1 runtime failure, 2 configuration or argument error.
Every artifact directory receives the exact run config as run_config.json.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from ioncast import __version__
from ioncast.config import RunConfig, get_settings, load_run_config, parse_run_config
from ioncast.data.channels import ChannelSpec
from ioncast.data.dataset import Dataset
from ioncast.data.events import EventCatalog, SplitSpec, read_event_csv
from ioncast.data.ingest import ingest_files
from ioncast.data.iongrid import GridStack, write_grid_stack
from ioncast.data.normalizer import Normalizer
from ioncast.data.synth import synth_dataset, write_synth_files
from ioncast.errors import ConfigError, IoncastError, RolloutError
from ioncast.forcings.maps import ForcingProvider
from ioncast.logging_config import configure_logging, get_logger, log_error
from ioncast.mesh.graphs import build_grid2mesh, build_mesh2grid, degree_summary
from ioncast.mesh.grid import LatLonGrid
from ioncast.mesh.icosphere import build_multimesh, describe_levels
from ioncast.metrics import write_metrics
from ioncast.models import RolloutPlan, build_model, load_checkpoint, model_from_checkpoint
from ioncast.services.evaluation import evaluate, model_forecast
from ioncast.services.experiments import run_ablation, run_date_range_experiment
from ioncast.services.reports import write_report, write_table
from ioncast.services.training import CHECKPOINT_NAME, make_splits, run_channel_spec, train
from ioncast.tensor import set_default_precision
from ioncast.timeutil import format_time, parse_time

logger = get_logger(__name__)


# ── Shared plumbing ────────────────────────────────────────────────


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Run file (or defaults) with the --seed and --out overrides applied."""
    run = load_run_config(Path(args.config)) if args.config else RunConfig()
    if args.seed is None and args.out is None:
        return run
    raw = run.echo()
    if args.seed is not None:
        raw["train"]["seed"] = args.seed
        raw["data"]["synth"]["seed"] = args.seed
    if args.out is not None:
        raw["output"]["directory"] = args.out
    return parse_run_config(raw)


def write_run_config(directory: Path, run: RunConfig) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "run_config.json"
    path.write_text(json.dumps(run.echo(), indent=2, sort_keys=True), encoding="utf-8")
    return path


def refuse_overwrite(paths: Sequence[Path], force: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise ConfigError(f"output already exists: {', '.join(existing)} (use --force to overwrite)", key="--force")


def load_inputs(run: RunConfig, spec: ChannelSpec) -> tuple[Dataset, EventCatalog]:
    dataset_path = Path(run.data.dataset_path)
    if not dataset_path.exists():
        raise ConfigError(f"dataset {dataset_path} not found; run synth or ingest first", key="data.dataset_path")
    return Dataset.load(dataset_path, spec), read_event_csv(Path(run.data.events_path))


def output_dir(run: RunConfig, *parts: str) -> Path:
    return Path(run.output.directory).joinpath(*parts)


# ── Commands ───────────────────────────────────────────────────────


def cmd_synth(args: argparse.Namespace, run: RunConfig) -> int:
    spec = run_channel_spec(run)
    dataset_path = Path(run.data.dataset_path)
    refuse_overwrite([dataset_path, Path(run.data.events_path)], args.force)
    result = synth_dataset(run.data, spec)
    paths = write_synth_files(result, run.data)
    write_run_config(dataset_path.parent, run)
    print(f"dataset:  {paths['dataset']}  ({len(result.dataset)} frames, {len(spec.names)} channels)")
    print(f"events:   {paths['events']}  ({len(result.catalog)} events)")
    for row in result.catalog.summary():
        print(f"  {row['g_level']}: {row['events']} events, {row['hours']:.1f} h")
    return 0


def cmd_ingest(args: argparse.Namespace, run: RunConfig) -> int:
    spec = run_channel_spec(run)
    dataset_path = Path(run.data.dataset_path)
    refuse_overwrite([dataset_path], args.force)
    result = ingest_files(run.data, spec)
    write_run_config(dataset_path.parent, run)
    print(f"dataset:  {dataset_path}  ({len(result.dataset)} frames, {len(spec.names)} channels)")
    print(f"events:   {len(result.catalog)}")
    return 0


def cmd_mesh_info(args: argparse.Namespace, run: RunConfig) -> int:
    levels = args.levels if args.levels is not None else run.model.gnn.multimesh_levels
    mesh = build_multimesh(levels, run.model.gnn.k_hop)
    rows = describe_levels(mesh)
    for row in rows:
        print(
            f"level {row['level']}: V={row['vertices']} E={row['edges']} F={row['faces']} "
            f"euler={row['euler']} edge_deg=[{row['edge_min_deg']:.3f}, {row['edge_mean_deg']:.3f}, "
            f"{row['edge_max_deg']:.3f}]"
        )
    print(f"multimesh: V={mesh.n_vertices} directed_edges={mesh.senders.size}")
    grid = LatLonGrid(run.data.synth.n_lat, run.data.synth.n_lon)
    for name, graph in (
        ("grid2mesh", build_grid2mesh(grid, mesh, run.model.gnn.radius_scale)),
        ("mesh2grid", build_mesh2grid(mesh, grid)),
    ):
        summary = degree_summary(graph)
        print(
            f"{name}: edges={summary['edges']} receiver_degree=[{summary['receiver_degree_min']}, "
            f"{summary['receiver_degree_mean']:.2f}, {summary['receiver_degree_max']}] fallbacks={summary['fallbacks']}"
        )
    out = output_dir(run, "mesh")
    write_table(out / "mesh_levels.csv", list(rows[0]), rows)
    write_run_config(out, run)
    return 0


def cmd_train(args: argparse.Namespace, run: RunConfig) -> int:
    spec = run_channel_spec(run)
    out = output_dir(run)
    if args.dry_run:
        dataset_path = Path(run.data.dataset_path)
        if dataset_path.exists():
            grid = Dataset.load(dataset_path, spec).grid
        else:
            grid = LatLonGrid(run.data.synth.n_lat, run.data.synth.n_lon)
        identity = Normalizer(spec.names, np.zeros(len(spec.names)), np.ones(len(spec.names)))
        model = build_model(run.model, spec, grid, identity, seed=run.train.seed)
        print(f"config ok: {run.model.architecture}, {len(spec.names)} channels, grid {grid.n_lat}x{grid.n_lon}")
        print(f"parameters: {model.parameter_count()}")
        return 0

    resume_path = args.resume or run.train.resume_from
    if not resume_path:
        refuse_overwrite([out / CHECKPOINT_NAME], args.force)
    resume = load_checkpoint(Path(resume_path), expected_spec=spec) if resume_path else None
    dataset, catalog = load_inputs(run, spec)
    write_run_config(out, run)
    result = train(run, dataset, catalog, out, resume=resume)
    print(f"checkpoint: {result.checkpoint_path} (step {result.step})")
    if result.best_path is not None:
        print(f"best:       {result.best_path} (val RMSE {result.best_val:.4f} TECU)")
    print(f"log:        {result.log_path}")
    return 0


def cmd_forecast(args: argparse.Namespace, run: RunConfig) -> int:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    dataset, _ = load_inputs(run, checkpoint.spec)
    model = model_from_checkpoint(checkpoint, dataset.grid).eval()
    horizon = args.horizon or run.eval.horizon
    start = parse_time(args.start)
    cadence = dataset.cadence
    context_times = start - cadence * np.arange(model.context_len, 0, -1, dtype=np.int64)
    try:
        indices = [dataset.index_of(int(t)) for t in context_times]
    except KeyError as exc:
        raise RolloutError(
            f"forecast from {format_time(start)} needs {model.context_len} frames "
            f"{format_time(int(context_times[0]))} .. {format_time(int(context_times[-1]))} at {cadence} s; "
            f"{format_time(int(exc.args[0]))} is missing"
        ) from exc

    out = output_dir(run, "forecast")
    target = out / "forecast.iongrid"
    refuse_overwrite([target], args.force)
    plan = RolloutPlan(
        window=dataset.data[indices],
        last_timestamp=int(context_times[-1]),
        cadence=cadence,
        horizon=horizon,
        forcings=ForcingProvider(dataset.grid, checkpoint.spec.forcing_names),
    )
    frames = model.rollout(plan)
    timestamps = plan.timestamps()
    write_grid_stack(target, GridStack(checkpoint.spec.names, cadence, timestamps, frames))
    _write_driver_diagnostics(out, checkpoint.spec, dataset.grid, frames, timestamps, run)
    write_run_config(out, run)
    print(f"forecast: {target} ({horizon} frames, {format_time(int(timestamps[0]))} .. {format_time(int(timestamps[-1]))})")
    return 0


def _write_driver_diagnostics(
    out: Path,
    spec: ChannelSpec,
    grid: LatLonGrid,
    frames: np.ndarray,
    timestamps: np.ndarray,
    run: RunConfig,
) -> None:
    """Per-frame node statistics of every driver channel plus a seeded node sample."""
    drivers = spec.indices_of("driver")
    stats, samples = [], []
    rng = np.random.default_rng(run.train.seed)
    n_sample = min(run.eval.driver_sample_nodes, grid.n_nodes)
    nodes = np.sort(rng.choice(grid.n_nodes, size=n_sample, replace=False)) if n_sample else np.zeros(0, int)
    for lead, (t, frame) in enumerate(zip(timestamps, frames), start=1):
        for c in drivers:
            values = frame[c].astype(np.float64).ravel()
            name = spec.names[c]
            stats.append(
                {
                    "timestamp": format_time(int(t)),
                    "lead_steps": lead,
                    "channel": name,
                    "mean": float(values.mean()),
                    "std": float(values.std()),
                    "min": float(values.min()),
                    "max": float(values.max()),
                }
            )
            for node in nodes:
                samples.append(
                    {
                        "timestamp": format_time(int(t)),
                        "lead_steps": lead,
                        "channel": name,
                        "node": int(node),
                        "lat": float(grid.node_lat[node]),
                        "lon": float(grid.node_lon[node]),
                        "value": float(values[node]),
                    }
                )
    write_table(out / "driver_stats.csv", ["timestamp", "lead_steps", "channel", "mean", "std", "min", "max"], stats)
    write_table(
        out / "driver_nodes.csv", ["timestamp", "lead_steps", "channel", "node", "lat", "lon", "value"], samples
    )


def cmd_evaluate(args: argparse.Namespace, run: RunConfig) -> int:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    dataset, catalog = load_inputs(run, checkpoint.spec)
    model = model_from_checkpoint(checkpoint, dataset.grid)
    if checkpoint.splits:
        splits = SplitSpec.from_dict(checkpoint.splits)
    else:
        splits = make_splits(checkpoint.config, dataset, catalog)
    out = output_dir(run, "evaluation")
    refuse_overwrite([out / "rmse_by_lead.csv"], args.force)
    report = evaluate(
        model_forecast(model),
        dataset,
        splits,
        model.context_len,
        run.eval,
        split=run.eval.split,
        horizon=args.horizon,
        seed=run.train.seed,
    )
    write_report(report, out, svg=run.eval.svg)
    write_run_config(out, run)
    print(f"events: {len(report.events)}  starts: {report.n_starts}")
    for hours in (1.0, 6.0, 12.0):
        print(f"RMSE@{hours:g}h: {report.rmse_at_hours(hours):.4f} TECU")
    print(f"report: {out}")
    return 0


def cmd_ablate(args: argparse.Namespace, run: RunConfig) -> int:
    dataset, catalog = load_inputs(run, run_channel_spec(run))
    if args.date_ranges:
        out = output_dir(run, "date_ranges")
        refuse_overwrite([out / "date_ranges.csv"], args.force)
        write_run_config(out, run)
        rows = run_date_range_experiment(run, dataset, catalog, out, threads=args.threads)
        for row in rows:
            print(f"{row['range']:<16} {row['g_level']:<4} events={row['events']:<3} rmse={row['rmse']:.4f}")
        return 0
    out = output_dir(run, "ablation")
    refuse_overwrite([out / "ablation.csv"], args.force)
    write_run_config(out, run)
    rows = run_ablation(run, dataset, catalog, out, threads=args.threads)
    for row in rows:
        print(f"{row['group']:<45} {row['rmse_mean']:.4f} +- {row['rmse_std']:.4f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "mesh-info": cmd_mesh_info,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run file (.toml, or .json mirror)")
    common.add_argument("--seed", type=int, help="Override train.seed and data.synth.seed")
    common.add_argument("--out", help="Override output.directory")
    common.add_argument("--force", action="store_true", help="Overwrite existing outputs")
    common.add_argument(
        "--threads",
        type=int,
        default=get_settings().threads,
        help="Worker processes for ablation/date-range runs (default: IONCAST_THREADS)",
    )

    parser = argparse.ArgumentParser(prog="ioncast", description="TEC map forecasting engine")
    parser.add_argument("--version", action="version", version=f"ioncast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="Generate a synthetic dataset and event catalog")
    sub.add_parser("ingest", parents=[common], help="Assemble a dataset from TEC and driver files")

    mesh = sub.add_parser("mesh-info", parents=[common], help="Print multi-mesh and grid graph statistics")
    mesh.add_argument("--levels", type=int, help="Refinement levels (default: model.gnn.multimesh_levels)")

    train_parser = sub.add_parser("train", parents=[common], help="Train a forecaster")
    train_parser.add_argument("--dry-run", action="store_true", help="Validate and print the parameter count")
    train_parser.add_argument("--resume", help="Checkpoint to continue from")

    forecast = sub.add_parser("forecast", parents=[common], help="Roll a checkpoint forward from a start time")
    forecast.add_argument("--checkpoint", required=True)
    forecast.add_argument("--start", required=True, help="Time of the first predicted frame (ISO-8601)")
    forecast.add_argument("--horizon", type=int, help="Frames to predict (default: eval.horizon)")

    evaluate_parser = sub.add_parser("evaluate", parents=[common], help="Score a checkpoint on held-out events")
    evaluate_parser.add_argument("--checkpoint", required=True)
    evaluate_parser.add_argument("--horizon", type=int, help="Override eval.horizon")

    ablate = sub.add_parser("ablate", parents=[common], help="Run the input ablation plan")
    ablate.add_argument("--date-ranges", action="store_true", help="Run the training date-range experiment instead")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    configure_logging()
    set_default_precision(settings.float_precision)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        run = resolve_config(args)
        return COMMANDS[args.command](args, run)
    except IoncastError as exc:
        log_error(logger, exc, context=args.command, key=getattr(exc, "key", None))
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    finally:
        if settings.metrics_textfile:
            write_metrics(Path(settings.metrics_textfile))


if __name__ == "__main__":
    sys.exit(main())

"""
gsdlab CLI

Command-line interface for gradient subspace distances, private training
and the experiment harness.
"""

import functools
import json
import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.config import configure_logging, load_config_file, load_settings
from src.errors import ConfigError, GsdLabError
from src.gep import GepRunConfig, gep_train
from src.gsd import gsd as compute_gsd
from src.harness import ExperimentConfig, default_config, run_experiment
from src.models import init_model
from src.privacy import PrivacyParams, dp_gsd, privacy_block
from src.storage import LabStorage
from src.synth import Dataset, ShiftSpec, TaskSpec, make_shifted_public, make_task

# JSON goes to stdout; everything for humans goes to stderr
console = Console(stderr=True)


def handle_errors(fn):
    """Domain and validation errors exit with status 2 and one red line"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (GsdLabError, ValidationError) as e:
            console.print(f"[red]❌ {type(e).__name__}: {e}[/red]")
            sys.exit(2)
    return wrapper


def _load_model(storage: LabStorage, model_path: str, params_path, seed: int):
    spec = storage.load_model_spec(model_path)
    if params_path:
        return spec, storage.load_params(spec, params_path)
    return spec, init_model(spec, seed)


def _echo_json(data: dict) -> None:
    click.echo(json.dumps(data, indent=2))


def _angles_table(report, title: str) -> Table:
    table = Table(title=title)
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("k", str(report.k))
    table.add_row("Distance (raw)", f"{report.distance_raw:.6f}")
    table.add_row("Distance (normalized)", f"{report.distance_normalized:.6f}")
    table.add_row("Largest angle", f"{max(report.angles):.6f}")
    table.add_row("m_priv / m_pub / p", f"{report.m_priv} / {report.m_pub} / {report.p}")
    return table


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Log progress at INFO level')
@handle_errors
def cli(verbose):
    """📐 gsdlab - Gradient subspace distance for choosing public data"""
    settings = load_settings()
    configure_logging("INFO" if verbose else settings.log_level)


@cli.command()
@click.option('--model', 'model_path', required=True, help='Model spec JSON')
@click.option('--private', 'private_path', required=True, help='Private batch CSV')
@click.option('--public', 'public_path', required=True, help='Public batch CSV')
@click.option('--params', 'params_path', default=None, help='Parameter CSV (default: seeded init)')
@click.option('--k', default=16, show_default=True, help='Subspace dimension')
@click.option('--random-labels', is_flag=True, help='Replace labels with random ones first')
@click.option('--raw', is_flag=True, help='Report the unnormalized distance')
@click.option('--seed', default=0, show_default=True, help='Seed for init and random labels')
@handle_errors
def gsd(model_path, private_path, public_path, params_path, k, random_labels, raw, seed):
    """Gradient subspace distance between two batches"""
    storage = LabStorage()
    spec, model = _load_model(storage, model_path, params_path, seed)
    priv = storage.load_batch(private_path, spec)
    pub = storage.load_batch(public_path, spec)

    report = compute_gsd(priv, pub, model, k=k, random_label=random_labels, seed=seed)
    console.print(_angles_table(report, "Gradient Subspace Distance"))

    out = report.model_dump(mode="json")
    out["distance"] = report.distance(raw)
    out["normalized"] = not raw
    _echo_json(out)


@cli.command('dp-gsd')
@click.option('--model', 'model_path', required=True, help='Model spec JSON')
@click.option('--private', 'private_path', required=True, help='Private batch CSV')
@click.option('--public', 'public_path', required=True, help='Public batch CSV')
@click.option('--epsilon', type=float, required=True, help='Privacy budget')
@click.option('--delta', type=float, default=1e-5, show_default=True, help='Accepted, unused by the sampler')
@click.option('--clip', type=float, default=1.0, show_default=True, help='Per-row clip norm c')
@click.option('--params', 'params_path', default=None, help='Parameter CSV (default: seeded init)')
@click.option('--seed', default=0, show_default=True, help='Seed for init and sampling')
@handle_errors
def dp_gsd_command(model_path, private_path, public_path, epsilon, delta, clip, params_path, seed):
    """Differentially private subspace distance (k = 1)"""
    storage = LabStorage()
    spec, model = _load_model(storage, model_path, params_path, seed)
    priv = storage.load_batch(private_path, spec)
    pub = storage.load_batch(public_path, spec)
    params = PrivacyParams(epsilon=epsilon, delta=delta, clip_norm=clip)

    report = dp_gsd(priv, pub, model, params, seed)
    console.print(_angles_table(report, "Private Gradient Subspace Distance"))

    out = report.model_dump(mode="json")
    out["distance"] = report.distance_raw
    out["privacy"] = privacy_block(params)
    _echo_json(out)


@cli.command('gep-train')
@click.option('--config', 'config_path', required=True, help='GEP run config (JSON or YAML)')
@click.option('--private', 'private_path', required=True, help='Private training CSV')
@click.option('--public', 'public_path', required=True, help='Public examples CSV')
@click.option('--out', 'out_path', required=True, help='Result JSON')
@click.option('--test', 'test_path', default=None, help='Test CSV (default: the private set)')
@click.option('--trace', 'trace_path', default=None, help='Per-step trace CSV')
@handle_errors
def gep_train_command(config_path, private_path, public_path, out_path, test_path, trace_path):
    """Private training with gradient embedding perturbation"""
    console.print("\n🔒 [bold cyan]Training with GEP...[/bold cyan]\n")
    run = GepRunConfig(**load_config_file(Path(config_path)))
    storage = LabStorage()
    spec = run.model

    train = storage.load_batch(private_path, spec)
    test = storage.load_batch(test_path, spec) if test_path else train
    pub = storage.load_batch(public_path, spec)
    private = Dataset(name="private", train=train, test=test, num_classes=spec.num_classes)
    public = Dataset(name="public", train=pub, test=pub, public=pub, num_classes=spec.num_classes)

    result = gep_train(private, public, init_model(spec, run.init_seed), run.gep, run.privacy)

    storage.save_json({
        "final_params": result.final.theta.tolist(),
        "averaged_params": result.averaged.theta.tolist(),
        "learning_rate": result.learning_rate,
        "iterations": result.iterations,
        "sigma_embedding": result.sigma_embedding,
        "sigma_residual": result.sigma_residual,
        "losses": result.losses,
        "test_metrics": result.test_metrics.model_dump(),
        "averaged_test_metrics": result.averaged_test_metrics.model_dump(),
        "trace": [step.model_dump() for step in result.trace],
    }, out_path)
    if trace_path:
        storage.save_trace(result.trace, trace_path)

    table = Table(title="GEP Result")
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Iterations", str(result.iterations))
    table.add_row("Learning rate", f"{result.learning_rate:.4g}")
    table.add_row("Noise (embedding / residual)", f"{result.sigma_embedding:.4g} / {result.sigma_residual:.4g}")
    table.add_row("Test accuracy", f"{result.test_metrics.accuracy:.4f}")
    table.add_row("Final train loss", f"{result.losses[-1]:.4f}")
    console.print(table)
    console.print(f"\n[bold green]✅ Result saved to {out_path}[/bold green]")


@cli.group()
def synth():
    """Synthetic tasks with controlled shifts"""
    pass


@synth.command('make')
@click.option('--spec', 'spec_path', required=True, help='Task spec, optionally with shifts')
@click.option('--out', 'out_dir', default=None, help='Output directory (default: GSDLAB_DATA_DIR)')
@handle_errors
def synth_make(spec_path, out_dir):
    """Write train/test/public CSVs and a manifest"""
    raw = load_config_file(Path(spec_path))
    if "task" in raw:
        task = TaskSpec(**raw["task"])
        shifts = [ShiftSpec(**s) for s in raw.get("shifts", [])]
    else:
        task, shifts = TaskSpec(**raw), []

    ds = make_task(task)
    variants = [make_shifted_public(ds, shift, task.seed) for shift in shifts]
    out = LabStorage().save_dataset(ds, out_dir or load_settings().data_dir, variants)

    table = Table(title=f"Task '{ds.name}'")
    table.add_column("Split", style="cyan")
    table.add_column("Examples", style="green")
    table.add_row("train", str(ds.train.size))
    table.add_row("test", str(ds.test.size))
    for variant in [ds] + variants:
        table.add_row(f"public_{variant.name}", str(variant.public.size))
    console.print(table)
    console.print(f"\n[dim]Saved to: {out}[/dim]")


@cli.command()
@click.option('--config', 'config_path', default=None, help='Experiment config (JSON or YAML)')
@click.option('--stock', default=None, help='Run the stock config of this experiment')
@click.option('--out', 'out_path', default=None, help='Report JSON (side tables land next to it)')
@click.option('--threads', type=int, default=None, help='Worker threads (default: GSDLAB_THREADS)')
@handle_errors
def experiment(config_path, stock, out_path, threads):
    """Run an experiment; exit 1 when it fails its threshold"""
    if bool(config_path) == bool(stock):
        raise ConfigError("Pass exactly one of --config and --stock")
    cfg = default_config(stock) if stock else ExperimentConfig(**load_config_file(Path(config_path)))

    console.print(f"\n🔬 [bold cyan]Running {cfg.experiment}...[/bold cyan]\n")
    report = run_experiment(cfg, threads=threads)

    target = out_path or cfg.output
    if target:
        LabStorage().save_report(report, target)
        console.print(f"[dim]Report saved to: {target}[/dim]")
    else:
        click.echo(report.to_json())

    table = Table(title="Aggregates")
    table.add_column("Name", style="cyan")
    table.add_column("Value", style="green")
    for name, value in report.aggregates.items():
        table.add_row(name, str(value))
    console.print(table)
    for message in report.warnings:
        console.print(f"[yellow]{message}[/yellow]")

    if report.passed is False:
        console.print("\n[bold red]❌ Experiment failed its threshold[/bold red]")
        sys.exit(1)
    verdict = "passed" if report.passed else "finished (no threshold applied)"
    console.print(f"\n[bold green]✅ Experiment {verdict}[/bold green]")


if __name__ == '__main__':
    cli()

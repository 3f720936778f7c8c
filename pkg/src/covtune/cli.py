"""Command-line entry points: simulate, pretrain, bo-run, plot, serve."""

from __future__ import annotations

import json
import os
import sys

import click

from . import _jsonio


@click.group()
def main():
    """Bayesian optimisation with pre-trained covariance functions."""


@main.command()
@click.option("--out", "out_dir", default="simulate-out", show_default=True,
              help="Output directory for traces and the summary.")
@click.option("--iterations", "-t", default=40, show_default=True)
@click.option("--repetitions", "-r", default=10, show_default=True)
@click.option("--seed", default=20240501, show_default=True)
@click.option("--resolution", default=41, show_default=True)
@click.option("--noise-std", default=0.0, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--methods", default=None,
              help="Comma-separated kernel+acq pairs, e.g. "
                   "'reweighted+ucb,plain-se+ucb' (default: all).")
def simulate(out_dir, iterations, repetitions, seed, resolution, noise_std,
             workers, methods):
    """Run the simulated ring benchmark suite."""
    from .experiments import default_simulation_config, run_experiment_suite

    overrides = dict(iterations=iterations, repetitions=repetitions, seed=seed,
                     resolution=resolution, noise_std=noise_std)
    if methods:
        parsed = []
        for item in methods.split(","):
            kernel, _, acq = item.strip().rpartition("+")
            parsed.append((kernel, acq))
        overrides["methods"] = tuple(parsed)
    config = default_simulation_config(**overrides)
    summary = run_experiment_suite(config, out_dir, workers=workers)
    for method in sorted(summary):
        med = summary[method]["median"]
        click.echo(f"{method}: final median best {med[-1]:.4f}"
                   if len(med) else f"{method}: no iterations")
    click.echo(f"wrote {os.path.join(out_dir, 'summary.csv')}")


@main.command()
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--out", "out_path", default="pretrained.json", show_default=True)
@click.option("--c-grid", default="1,10,100", show_default=True)
@click.option("--sigma-grid", default="0.05,0.1,0.2,0.4,0.8", show_default=True)
@click.option("--epsilon", default=0.01, show_default=True)
@click.option("--normalize/--no-normalize", "normalize_result", default=True,
              show_default=True)
def pretrain(csv_path, out_path, c_grid, sigma_grid, epsilon, normalize_result):
    """Pre-train a kernel on an auxiliary CSV (header x1,...,xn,y)."""
    from .bo import pretrain_kernel
    from .data import load_dataset_csv, normalize_unit_box
    from .kernels import KernelSpec

    raw = load_dataset_csv(csv_path)
    aux, _ = normalize_unit_box(raw)
    spec, report = pretrain_kernel(
        aux, KernelSpec.se(1.0),
        [float(v) for v in c_grid.split(",")],
        [float(v) for v in sigma_grid.split(",")],
        epsilon=epsilon, normalize_result=normalize_result,
    )
    payload = {
        "spec": spec.to_dict(),
        "provenance": {
            "C": report.C, "sigma": report.sigma, "loo_mse": report.loo_mse,
            "n_support": report.n_support, "n_anchors": report.n_anchors,
            "epsilon": report.epsilon, "normalized": report.normalized,
            "source": os.path.basename(csv_path),
        },
    }
    with open(out_path, "w") as fh:
        fh.write(_jsonio.dumps(payload) + "\n")
    click.echo(f"selected C={report.C} sigma={report.sigma} "
               f"loo_mse={report.loo_mse:.6g} support={report.n_support}")
    click.echo(f"wrote {out_path}")


@main.command("bo-run")
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", default="bo-run-out", show_default=True)
@click.option("--workers", default=1, show_default=True)
def bo_run(config_path, out_dir, workers):
    """Run a suite described by an experiment config JSON file."""
    from .experiments import ExperimentConfig, run_experiment_suite

    config = ExperimentConfig.from_json_file(config_path)
    summary = run_experiment_suite(config, out_dir, workers=workers)
    manifest = os.path.join(out_dir, "manifest.json")
    with open(manifest) as fh:
        jobs = json.load(fh)["jobs"]
    failed = [j for j in jobs if j.get("status") != "ok"]
    click.echo(f"{len(jobs) - len(failed)}/{len(jobs)} jobs ok; "
               f"summary at {os.path.join(out_dir, 'summary.csv')}")
    if failed:
        for j in failed:
            click.echo(f"  FAILED {j['method']} rep {j['rep']}: {j.get('error')}",
                       err=True)
        sys.exit(1)


@main.command()
@click.argument("summary_csv", type=click.Path(exists=True))
@click.option("--out", "out_path", default="summary.svg", show_default=True)
@click.option("--title", default="")
def plot(summary_csv, out_path, title):
    """Render a summary CSV as an SVG line chart (median with IQR band)."""
    from .plotting import plot_summary_csv

    plot_summary_csv(summary_csv, out_path, title=title)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option("--data-dir", default=None,
              help="Session persistence directory (default: $DATA_DIR or ./data).")
def serve(host, port, data_dir):
    """Start the HTTP session service."""
    from .service import main as service_main

    service_main(host=host, port=port, data_dir=data_dir)


if __name__ == "__main__":
    main()

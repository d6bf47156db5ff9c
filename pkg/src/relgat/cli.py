"""relgat command line: single runs, sweeps, summaries, post-hoc metrics.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure (NaN abort).
"""

from __future__ import annotations

import json
import os
import sys

import click

from .errors import ConfigError, DataError, NumericError, RelgatError

RELATION_CHOICES = ["none", "diff", "absdiff", "prod", "absdiff_prod"]
NORM_CHOICES = ["none", "pairnorm"]


@click.group()
def cli():
    """Relational graph attention training and over-smoothing diagnostics."""


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(), help="dataset directory")
@click.option("--layers", required=True, type=int)
@click.option("--relation", type=click.Choice(RELATION_CHOICES), default="none")
@click.option("--norm", type=click.Choice(NORM_CHOICES), default="none")
@click.option("--missing", type=int, default=0, help="missing-feature percentage")
@click.option("--seed", required=True, type=int)
@click.option("--epochs", type=int, default=1000)
@click.option("--lr", type=float, default=0.005)
@click.option("--dropout", type=float, default=0.6)
@click.option("--weight-decay", type=float, default=5e-4)
@click.option("--hidden", type=int, default=64)
@click.option("--pairnorm-scale", type=float, default=1.0)
@click.option("--no-row-normalize", is_flag=True, default=False)
@click.option("--metrics-cap", type=int, default=1000)
@click.option("--out", "out_dir", required=True, type=click.Path())
def run(data_dir, layers, relation, norm, missing, seed, epochs, lr, dropout,
        weight_decay, hidden, pairnorm_scale, no_row_normalize, metrics_cap,
        out_dir):
    """Train one configuration; write a JSONL record and a checkpoint."""
    from .data import load_dataset
    from .model import save_checkpoint
    from .sweep import RECORDS_NAME, SweepSpec, execute_run, run_config_dict

    ds = load_dataset(data_dir)
    spec = SweepSpec(
        data_dir=data_dir,
        out_dir=out_dir,
        layers=[layers],
        relations=[relation],
        normalizations=[norm],
        missing_rates=[missing],
        seeds=[seed],
        epochs=epochs,
        learning_rate=lr,
        weight_decay=weight_decay,
        hidden_dim=hidden,
        dropout=dropout,
        pairnorm_scale=pairnorm_scale,
        row_normalize=not no_row_normalize,
        metrics_cap=metrics_cap,
    )
    config = run_config_dict(ds.name, spec, layers, relation, norm, missing, seed)
    record, result = execute_run(ds, config)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, RECORDS_NAME), "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")
    from .model import ModelConfig, RelationKind

    model_config = ModelConfig(
        num_layers=layers,
        hidden_dim=hidden,
        relation=RelationKind(relation),
        normalization=norm,
        pairnorm_scale=pairnorm_scale,
        dropout=dropout,
    )
    save_checkpoint(
        os.path.join(out_dir, "checkpoint"),
        result.best_params,
        model_config,
        extra={
            "dataset": ds.name,
            "seed": seed,
            "missing": missing,
            "row_normalize": not no_row_normalize,
            "best_epoch": result.best_epoch,
            "metrics_cap": metrics_cap,
        },
    )
    click.echo(
        f"seed {seed}: best epoch {record['best_epoch']} "
        f"val_acc {record['val_acc']:.4f} test_acc {record['test_acc']:.4f}"
    )


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--workers", type=int, default=None, help="worker processes (default: logical cores)")
def sweep(data_dir, config_path, out_dir, workers):
    """Run a sweep described by a JSON config; resumes where it left off."""
    from .sweep import SweepSpec, run_sweep

    spec = SweepSpec.from_json(config_path, data_dir=data_dir, out_dir=out_dir)
    records_path = run_sweep(spec, workers=workers, log=click.echo)
    click.echo(f"records: {records_path}")


@cli.command()
@click.option("--in", "in_dir", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["csv", "md"]), default="csv")
def summarize(in_dir, fmt):
    """Aggregate records into a summary table and per-layer curve CSV."""
    from .sweep import (
        RECORDS_NAME,
        curves_csv,
        read_records,
        summarize as aggregate,
        summary_csv,
        summary_md,
    )

    records = read_records(os.path.join(in_dir, RECORDS_NAME))
    if not records:
        raise ConfigError(f"no records found in {in_dir}")
    summary_rows, curve_rows = aggregate(records)
    curves_path = os.path.join(in_dir, "curves.csv")
    with open(curves_path, "w", encoding="utf-8") as fh:
        fh.write(curves_csv(curve_rows))
    rendered = summary_csv(summary_rows) if fmt == "csv" else summary_md(summary_rows)
    summary_path = os.path.join(in_dir, f"summary.{fmt}")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(rendered)
    click.echo(rendered, nl=False)
    click.echo(f"wrote {summary_path} and {curves_path}", err=True)


@cli.command()
@click.option("--in", "checkpoint", required=True, type=click.Path())
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def metrics(checkpoint, data_dir, out_path):
    """Compute the over-smoothing metrics for a saved checkpoint."""
    from .data import MissingSpec, load_dataset, prepare
    from .metrics import accuracy, compute_report
    from .model import load_checkpoint, model_forward

    params, model_config, extra = load_checkpoint(checkpoint)
    ds = load_dataset(data_dir)
    missing = None
    if extra.get("missing"):
        missing = MissingSpec(rate=extra["missing"], seed=extra.get("seed", 0))
    prepared = prepare(ds, missing, extra.get("row_normalize", True))
    result = model_forward(
        prepared.features,
        (prepared.edge_src, prepared.edge_dst),
        params,
        model_config,
        training=False,
    )
    test_acc = accuracy(result.logits.data, ds.labels, ds.test_idx)
    report = compute_report(
        features=prepared.features,
        representations=result.hidden.data,
        labels=ds.labels,
        test_accuracy=test_acc,
        cap=extra.get("metrics_cap", 1000),
        seed=extra.get("seed", 0),
    )
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {out_path}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(2)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(3)
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(4)
    except RelgatError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()

"""Experiment harness: single runs, sweeps over depth/relation/normalization/
missing rate/seed, JSONL records, and aggregation into summary tables and
per-layer curve CSVs.

Records are keyed by a sha256 hash of the full run configuration (seed
included); a sweep skips configurations whose key already appears in
records.jsonl, so interrupted sweeps resume. Workers are spawned processes
pinned to one BLAS thread each, which keeps records bitwise-identical across
executions and pool sizes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .data import GraphDataset, MissingSpec, load_dataset, prepare
from .errors import ConfigError, DataError
from .metrics import compute_report
from .model import ModelConfig, RelationKind
from .training import TrainConfig, train_run

DEFAULT_LAYERS = [1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 16]
DEFAULT_MISSING = [0, 20, 40, 60, 80, 100]
DEFAULT_SEEDS = [0, 1, 2, 3]

RECORDS_NAME = "records.jsonl"
MANIFEST_NAME = "manifest.json"

CURVE_HEADER = (
    "dataset,relation,norm,missing,layers,mean_test_acc,sd_test_acc,"
    "mean_row_diff,mean_col_diff,mean_r_group,mean_g_ins"
)


@dataclass
class SweepSpec:
    data_dir: str
    out_dir: str
    layers: list = field(default_factory=lambda: list(DEFAULT_LAYERS))
    relations: list = field(default_factory=lambda: [RelationKind.NONE])
    normalizations: list = field(default_factory=lambda: ["none"])
    missing_rates: list = field(default_factory=lambda: list(DEFAULT_MISSING))
    seeds: list = field(default_factory=lambda: list(DEFAULT_SEEDS))
    epochs: int = 1000
    learning_rate: float = 0.005
    weight_decay: float = 5e-4
    hidden_dim: int = 64
    dropout: float = 0.6
    leaky_slope: float = 0.2
    pairnorm_scale: float = 1.0
    row_normalize: bool = True
    metrics_cap: int = 1000

    def __post_init__(self):
        self.relations = [
            r if isinstance(r, RelationKind) else RelationKind(r)
            for r in self.relations
        ]
        for name in ("layers", "relations", "normalizations", "missing_rates", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"sweep spec: {name} must be non-empty")
        if min(self.layers) < 1:
            raise ConfigError("sweep spec: layers must be >= 1")
        for norm in self.normalizations:
            if norm not in ("none", "pairnorm"):
                raise ConfigError(f"sweep spec: unknown normalization {norm!r}")
        for rate in self.missing_rates:
            if not 0 <= rate <= 100:
                raise ConfigError(f"sweep spec: missing rate {rate} out of [0, 100]")

    @classmethod
    def from_json(cls, path, data_dir=None, out_dir=None) -> "SweepSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read sweep config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid sweep config {path}: {exc}") from None
        known = {
            "layers", "relations", "normalizations", "missing_rates", "seeds",
            "epochs", "learning_rate", "weight_decay", "hidden_dim", "dropout",
            "leaky_slope", "pairnorm_scale", "row_normalize", "metrics_cap",
            "data_dir", "out_dir",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown sweep config keys: {sorted(unknown)}")
        raw.setdefault("data_dir", data_dir)
        raw.setdefault("out_dir", out_dir)
        if data_dir is not None:
            raw["data_dir"] = data_dir
        if out_dir is not None:
            raw["out_dir"] = out_dir
        if raw.get("data_dir") is None or raw.get("out_dir") is None:
            raise ConfigError("sweep spec needs data_dir and out_dir")
        return cls(**raw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["relations"] = [r.value for r in self.relations]
        return d


def run_config_dict(dataset_name, spec: SweepSpec, layers, relation, norm,
                    missing, seed) -> dict:
    """Full configuration of one run, in the record's field order."""
    return {
        "dataset": dataset_name,
        "relation": relation.value if isinstance(relation, RelationKind) else relation,
        "norm": norm,
        "missing": int(missing),
        "layers": int(layers),
        "hidden": spec.hidden_dim,
        "dropout": spec.dropout,
        "leaky_slope": spec.leaky_slope,
        "pairnorm_scale": spec.pairnorm_scale,
        "row_normalize": spec.row_normalize,
        "epochs": spec.epochs,
        "lr": spec.learning_rate,
        "weight_decay": spec.weight_decay,
        "metrics_cap": spec.metrics_cap,
        "seed": int(seed),
    }


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def execute_run(ds: GraphDataset, config: dict):
    """Train one configuration and compute its metrics. Returns the JSONL
    record dict (field order per the record format) and the RunResult."""
    model_config = ModelConfig(
        num_layers=config["layers"],
        hidden_dim=config["hidden"],
        relation=RelationKind(config["relation"]),
        normalization=config["norm"],
        pairnorm_scale=config["pairnorm_scale"],
        dropout=config["dropout"],
        leaky_slope=config["leaky_slope"],
    )
    train_config = TrainConfig(
        learning_rate=config["lr"],
        weight_decay=config["weight_decay"],
        epochs=config["epochs"],
        seeds=(config["seed"],),
    )
    missing = MissingSpec(rate=config["missing"], seed=config["seed"])
    result = train_run(
        ds, model_config, train_config, missing, config["seed"],
        normalize_rows=config["row_normalize"],
    )
    prepared = prepare(ds, missing, config["row_normalize"])
    report = compute_report(
        features=prepared.features,
        representations=result.representations,
        labels=ds.labels,
        test_accuracy=result.test_accuracy_at_best_val,
        cap=config["metrics_cap"],
        seed=config["seed"],
    )
    record = {"config_hash": config_hash(config)}
    record.update(config)
    record.update(
        {
            "best_epoch": result.best_epoch,
            "val_acc": float(result.val_acc[result.best_epoch]),
            "test_acc": result.test_accuracy_at_best_val,
            "row_diff": report.row_diff,
            "col_diff": report.col_diff,
            "r_group": report.group_distance_ratio,
            "g_ins": report.instance_info_gain,
            "runtime_s": result.elapsed_s,
        }
    )
    return record, result


_WORKER_DS: GraphDataset | None = None


def _worker_init(data_dir):
    global _WORKER_DS
    _WORKER_DS = load_dataset(data_dir)


def _worker_run(config):
    record, _ = execute_run(_WORKER_DS, config)
    return record


def enumerate_configs(spec: SweepSpec, dataset_name: str):
    """Deterministic nested order: layers, relations, norms, missing, seeds."""
    for layers in spec.layers:
        for relation in spec.relations:
            for norm in spec.normalizations:
                for missing in spec.missing_rates:
                    for seed in spec.seeds:
                        yield run_config_dict(
                            dataset_name, spec, layers, relation, norm, missing, seed
                        )


def read_records(path):
    records = []
    if os.path.isfile(path):
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    raise DataError(f"{path}, line {lineno}: invalid record") from None
    return records


def run_sweep(spec: SweepSpec, workers: int | None = None, log=None) -> str:
    """Execute every (layers, relation, norm, missing, seed) combination,
    skipping records already present. Returns the records.jsonl path."""
    log = log or (lambda message: None)
    ds = load_dataset(spec.data_dir)
    os.makedirs(spec.out_dir, exist_ok=True)
    if not os.access(spec.out_dir, os.W_OK):
        raise ConfigError(f"output directory {spec.out_dir} is not writable")
    records_path = os.path.join(spec.out_dir, RECORDS_NAME)
    manifest_path = os.path.join(spec.out_dir, MANIFEST_NAME)

    spec_dict = spec.as_dict()
    if os.path.isfile(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("spec") != spec_dict:
            raise ConfigError(
                f"{manifest_path} was written for a different sweep config; "
                "use a fresh output directory"
            )
    else:
        manifest = {
            "library_version": __version__,
            "spec": spec_dict,
            "dataset": {
                "name": ds.name,
                "num_nodes": ds.n,
                "num_features": ds.d,
                "num_classes": ds.num_classes,
                "num_edges": ds.num_edges,
            },
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    done = {r["config_hash"] for r in read_records(records_path)}
    todo = [
        c for c in enumerate_configs(spec, ds.name) if config_hash(c) not in done
    ]
    total = len(done) + len(todo)
    log(f"{len(done)}/{total} records present, {len(todo)} to run")
    if not todo:
        return records_path

    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, min(workers, len(todo)))

    import multiprocessing as mp

    # one BLAS thread per worker: deterministic across pool sizes, no
    # oversubscription; spawned children inherit the environment
    pinned = {"OPENBLAS_NUM_THREADS": "1", "OMP_NUM_THREADS": "1", "MKL_NUM_THREADS": "1"}
    saved = {k: os.environ.get(k) for k in pinned}
    os.environ.update(pinned)
    try:
        ctx = mp.get_context("spawn")
        with ctx.Pool(
            processes=workers, initializer=_worker_init, initargs=(spec.data_dir,)
        ) as pool:
            with open(records_path, "a", encoding="utf-8") as fh:
                for i, record in enumerate(pool.imap(_worker_run, todo, chunksize=1)):
                    fh.write(json.dumps(record) + "\n")
                    fh.flush()
                    log(
                        f"[{len(done) + i + 1}/{total}] layers={record['layers']} "
                        f"relation={record['relation']} norm={record['norm']} "
                        f"missing={record['missing']} seed={record['seed']} "
                        f"test_acc={record['test_acc']:.4f}"
                    )
    finally:
        for key, value in saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value
    return records_path


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    relation: str
    norm: str
    missing: int
    best_mean_test_acc: float
    optimal_layers: int
    sd_at_optimal: float
    num_seeds: int


def _mean_or_none(values):
    clean = [v for v in values if v is not None]
    if not clean:
        return None
    return float(np.mean(clean))


def summarize(records):
    """Aggregate seed-level records into per-layer curve rows and
    best-over-layers summary rows. Pure function of the record multiset:
    input order does not matter."""
    if not records:
        raise ConfigError("summarize: no records")
    by_cell_layer = {}
    for r in records:
        key = (r["dataset"], r["relation"], r["norm"], r["missing"], r["layers"])
        by_cell_layer.setdefault(key, []).append(r)

    curve_rows = []
    for key in sorted(by_cell_layer):
        group = by_cell_layer[key]
        accs = [r["test_acc"] for r in group]
        sd = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        curve_rows.append(
            {
                "dataset": key[0],
                "relation": key[1],
                "norm": key[2],
                "missing": key[3],
                "layers": key[4],
                "mean_test_acc": float(np.mean(accs)),
                "sd_test_acc": sd,
                "mean_row_diff": _mean_or_none([r["row_diff"] for r in group]),
                "mean_col_diff": _mean_or_none([r["col_diff"] for r in group]),
                "mean_r_group": _mean_or_none([r["r_group"] for r in group]),
                "mean_g_ins": _mean_or_none([r["g_ins"] for r in group]),
                "num_seeds": len(group),
            }
        )

    summary_rows = []
    by_cell = {}
    for row in curve_rows:
        cell = (row["dataset"], row["relation"], row["norm"], row["missing"])
        by_cell.setdefault(cell, []).append(row)
    for cell in sorted(by_cell):
        rows = by_cell[cell]
        best = max(rows, key=lambda r: (r["mean_test_acc"], -r["layers"]))
        summary_rows.append(
            SummaryRow(
                dataset=cell[0],
                relation=cell[1],
                norm=cell[2],
                missing=cell[3],
                best_mean_test_acc=best["mean_test_acc"],
                optimal_layers=best["layers"],
                sd_at_optimal=best["sd_test_acc"],
                num_seeds=best["num_seeds"],
            )
        )
    return summary_rows, curve_rows


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}" if math.isfinite(value) else repr(value)
    return str(value)


def curves_csv(curve_rows) -> str:
    lines = [CURVE_HEADER]
    for row in curve_rows:
        lines.append(
            ",".join(
                _format_cell(row[k])
                for k in (
                    "dataset", "relation", "norm", "missing", "layers",
                    "mean_test_acc", "sd_test_acc", "mean_row_diff",
                    "mean_col_diff", "mean_r_group", "mean_g_ins",
                )
            )
        )
    return "\n".join(lines) + "\n"


SUMMARY_FIELDS = (
    "dataset", "relation", "norm", "missing",
    "best_mean_test_acc", "optimal_layers", "sd_at_optimal", "num_seeds",
)


def summary_csv(summary_rows) -> str:
    lines = [",".join(SUMMARY_FIELDS)]
    for row in summary_rows:
        lines.append(
            ",".join(_format_cell(getattr(row, f)) for f in SUMMARY_FIELDS)
        )
    return "\n".join(lines) + "\n"


def summary_md(summary_rows) -> str:
    header = "| " + " | ".join(SUMMARY_FIELDS) + " |"
    rule = "|" + "|".join(" --- " for _ in SUMMARY_FIELDS) + "|"
    lines = [header, rule]
    for row in summary_rows:
        lines.append(
            "| " + " | ".join(_format_cell(getattr(row, f)) for f in SUMMARY_FIELDS) + " |"
        )
    return "\n".join(lines) + "\n"

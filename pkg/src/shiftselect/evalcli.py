"""Experiment runner, statistical testing, report emission, and the CLI.

A run is fully described by a :class:`RunConfig` (JSON on disk): dataset
source, split fractions, protocol parameters, the classifier families, the
quantifier, the accuracy-predictor knobs, and the strategy roster. Given the
same config and seed, a run produces byte-identical output files:

* ``manifest.json``  resolved configuration, split sizes, grid sizes;
* ``results.csv``    one row per (strategy, bag);
* ``summary.csv``    per-strategy mean/std plus significance vs the best;
* ``shift_curve.csv``  per-shift-bin mean accuracy per strategy;
* ``summary.txt``    human-readable digest.

The environment variable ``SHIFTSELECT_SEED`` overrides the config seed.
Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, asdict

import numpy as np

from .dataspace import (Dataset, apply_scaler, fit_scaler, load_csv,
                        stratified_split, synth_gaussian_pps,
                        uniform_prevalence, LabelledSet)
from .classifiers import FAMILIES, build_grid
from .protocol import (ShiftRecord, app_generate, bin_by_shift, l1_shift,
                       reveal_labels, DEFAULT_SHIFT_BINS)
from .selection import (ModelRegistry, build_registry, default_select,
                        ims_select, oracle_select, tms_select)

ENV_SEED = "SHIFTSELECT_SEED"
WILCOXON_EXACT_MAX = 12

DEFAULT_STRATEGIES = (
    "default-LR", "default-KNN", "default-MLP",
    "IMS-LR", "IMS-KNN", "IMS-MLP", "IMS-All",
    "TMS-All", "oracle",
)

DEFAULT_DATASET = {
    "kind": "synthetic",
    "n_classes": 3,
    "dims": 2,
    "n": 2000,
    "class_separation": 2.0,
    "prevalence": None,
}


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 1)."""


class StageError(RuntimeError):
    """A pipeline stage failed (CLI exit code 2)."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    dataset: dict = field(default_factory=lambda: dict(DEFAULT_DATASET))
    train_fraction: float = 0.7
    proper_fraction: float = 0.5
    r: int = 1000
    s: int = 100
    seed: int = 0
    n_bins: int = DEFAULT_SHIFT_BINS
    families: tuple = FAMILIES
    quantifier: str = "KDEyML"
    bandwidth: float = 0.1
    cap_weight: float = 1.0
    smoothing: float = 0.0
    strategies: tuple = DEFAULT_STRATEGIES
    standardize: bool = True
    alpha: float = 0.01
    outdir: str = "runs/out"

    def validate(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(f"train_fraction {self.train_fraction} not in (0,1)")
        if not (0.0 < self.proper_fraction < 1.0):
            raise ConfigError(f"proper_fraction {self.proper_fraction} not in (0,1)")
        if self.r < 1 or self.s < 1:
            raise ConfigError("r and s must be at least 1")
        if self.n_bins < 1:
            raise ConfigError("n_bins must be at least 1")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")
        if self.cap_weight <= 0:
            raise ConfigError("cap_weight must be positive")
        for fam in self.families:
            if fam not in FAMILIES:
                raise ConfigError(f"unknown family {fam!r}")
        if self.quantifier not in ("KDEyML", "CC"):
            raise ConfigError(f"unknown quantifier {self.quantifier!r}")
        kind = self.dataset.get("kind")
        if kind not in ("synthetic", "csv"):
            raise ConfigError(f"dataset.kind must be 'synthetic' or 'csv', got {kind!r}")
        for strat in self.strategies:
            _parse_strategy(strat, self.families)


def _parse_strategy(name: str, families):
    """Split a strategy name into (kind, scope); raises ConfigError."""
    if name == "oracle":
        return "oracle", "All"
    for prefix, kind in (("default-", "default"), ("IMS-", "IMS"), ("TMS-", "TMS")):
        if name.startswith(prefix):
            scope = name[len(prefix):]
            if scope == "All" and kind != "default":
                return kind, "All"
            if scope in families:
                return kind, scope
            raise ConfigError(f"strategy {name!r} references unknown scope {scope!r}")
    raise ConfigError(f"unknown strategy {name!r}")


def load_config(path) -> RunConfig:
    """Read a JSON config file, apply defaults and the env seed override."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(raw)
    for key in ("families", "strategies"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    config = RunConfig(**kwargs)
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        try:
            config.seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED}={env_seed!r} is not an integer") from exc
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    significant: bool
    n: int
    method: str


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a, b, alpha: float = 0.01) -> WilcoxonResult:
    """Two-sided paired signed-rank test.

    Zero differences are dropped; ties get averaged ranks. The null
    distribution is enumerated exactly for up to 12 nonzero pairs and
    approximated by a continuity-corrected normal beyond that.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two paired vectors of equal length")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n < 5:
        raise ValueError(f"only {n} nonzero differences; need at least 5")

    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if n <= WILCOXON_EXACT_MAX:
        masks = np.arange(1 << n, dtype=np.int64)
        bits = (masks[:, None] >> np.arange(n)) & 1
        totals = bits @ ranks
        p = 2.0 * float((totals <= w + 1e-12).mean())
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var -= (tie_counts ** 3 - tie_counts).sum() / 48.0
        z = (w - mean + 0.5) / math.sqrt(var)
        p = 2.0 * 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
        method = "normal"
    p = min(p, 1.0)
    return WilcoxonResult(statistic=w, p_value=p, significant=p < alpha,
                          n=n, method=method)


# ---------------------------------------------------------------------------
# Result table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    run_id: str
    dataset: str
    strategy: str
    bag_id: int
    l1_shift: float
    true_acc: float
    est_acc: float    # None when the strategy produces no estimate (oracle)
    model_id: int


@dataclass
class ResultTable:
    rows: list
    aggregates: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows, meta=None):
        return cls(list(rows), aggregate_rows(rows), dict(meta or {}))

    def strategies(self):
        return sorted({row.strategy for row in self.rows})

    def accuracy_series(self, strategy) -> np.ndarray:
        rows = sorted((r for r in self.rows if r.strategy == strategy),
                      key=lambda r: r.bag_id)
        return np.array([r.true_acc for r in rows])


def aggregate_rows(rows) -> dict:
    """Per-strategy (mean, population std, count) of true accuracy."""
    by_strategy = {}
    for row in rows:
        by_strategy.setdefault(row.strategy, []).append(row.true_acc)
    return {
        name: {
            "mean": float(np.mean(vals)),
            "std": float(np.std(vals)),
            "n": len(vals),
        }
        for name, vals in sorted(by_strategy.items())
    }


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _load_dataset(config: RunConfig) -> Dataset:
    spec = config.dataset
    if spec["kind"] == "synthetic":
        n_classes = int(spec["n_classes"])
        prevalence = spec.get("prevalence")
        if prevalence is None:
            prevalence = uniform_prevalence(n_classes)
        return synth_gaussian_pps(
            n_classes=n_classes,
            dims=int(spec["dims"]),
            prevalence=prevalence,
            n=int(spec["n"]),
            class_separation=float(spec["class_separation"]),
            seed=int(spec.get("seed", config.seed)),
            name=spec.get("name"),
        )
    return load_csv(spec["path"], spec["label_column"],
                    header=bool(spec.get("header", True)),
                    name=spec.get("name"))


def _derived_seeds(seed: int) -> dict:
    names = ("split_outer", "split_inner", "registry", "protocol")
    state = np.random.SeedSequence(seed).generate_state(len(names))
    return {name: int(s) for name, s in zip(names, state)}


def _run_id(config: RunConfig) -> str:
    # the output directory is not part of the experiment identity: the same
    # config run into two directories must produce byte-identical files
    payload = asdict(config)
    payload.pop("outdir", None)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _fingerprint(ds: Dataset) -> str:
    digest = hashlib.sha256()
    digest.update(ds.features.tobytes())
    digest.update(ds.labels.tobytes())
    return digest.hexdigest()[:12]


def _prepare(config: RunConfig):
    """Load data, split, standardize, and assemble the manifest."""
    config.validate()
    seeds = _derived_seeds(config.seed)
    with _stage("dataset"):
        ds = _load_dataset(config)
    scaler = None
    with _stage("split"):
        everything = ds.all_instances()
        labelled, test = stratified_split(everything, config.train_fraction,
                                          seeds["split_outer"])
        proper, validation = stratified_split(labelled, config.proper_fraction,
                                              seeds["split_inner"])
        if config.standardize:
            scaler = fit_scaler(proper)
            scaled = Dataset(apply_scaler(scaler, ds.features), ds.labels,
                             ds.n_classes, ds.name, ds.class_map,
                             require_all_classes=ds.require_all_classes)
            labelled = LabelledSet(scaled, labelled.indices)
            test = LabelledSet(scaled, test.indices)
            proper = LabelledSet(scaled, proper.indices)
            validation = LabelledSet(scaled, validation.indices)

    manifest = {
        "run_id": _run_id(config),
        "dataset": {
            "name": ds.name,
            "fingerprint": _fingerprint(ds),
            "n_instances": len(ds),
            "n_features": ds.n_features,
            "n_classes": ds.n_classes,
            "class_map": dict(ds.class_map),
        },
        "scaler": None if scaler is None else {
            "mean": scaler.mean_.tolist(),
            "std": scaler.std_.tolist(),
        },
        "splits": {
            "train_fraction": config.train_fraction,
            "proper_fraction": config.proper_fraction,
            "labelled": len(labelled),
            "proper_train": len(proper),
            "validation": len(validation),
            "test": len(test),
        },
        "protocol": {"r": config.r, "s": config.s, "seed": config.seed,
                     "n_bins": config.n_bins},
        "families": list(config.families),
        "grid_sizes": {fam: len(build_grid(fam, ds.n_classes))
                       for fam in config.families},
        "quantifier": {"kind": config.quantifier, "bandwidth": config.bandwidth},
        "cap": {"weight": config.cap_weight, "smoothing": config.smoothing},
        "strategies": list(config.strategies),
        "standardize": config.standardize,
        "derived_seeds": seeds,
    }
    return ds, proper, validation, test, manifest


def emit_manifest(config: RunConfig, outdir=None) -> dict:
    """Resolve the config onto the data (splits included) and write
    manifest.json; no training happens."""
    *_, manifest = _prepare(config)
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def run_experiment(config: RunConfig, registry: ModelRegistry = None) -> ResultTable:
    """Execute the full pipeline and return one row per (strategy, bag).

    Pass a prebuilt `registry` to skip training (the `run` subcommand does
    this when pointed at a persisted registry). Partial rows are flushed to
    results.csv if a later stage fails.
    """
    ds, proper, validation, test, manifest = _prepare(config)
    seeds = manifest["derived_seeds"]
    outdir = config.outdir
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)

    if registry is None:
        with _stage("registry"):
            registry = build_registry(
                config.families, proper, validation,
                quantifier_kind=config.quantifier, seed=seeds["registry"],
                bandwidth=config.bandwidth, cap_weight=config.cap_weight,
                smoothing=config.smoothing, run_id=manifest["run_id"])
            if not registry.entries:
                raise RuntimeError("every configuration failed to train")

    with _stage("protocol"):
        bags = app_generate(test, config.r, config.s, seeds["protocol"])

    run_id = manifest["run_id"]
    rows = []
    try:
        with _stage("evaluate"):
            for row in _evaluate(config, registry, test, bags, proper, run_id,
                                 ds.name):
                rows.append(row)
    except StageError:
        _write_results_csv(rows, os.path.join(outdir, "results.csv"))
        raise

    meta = {"run_id": run_id, "dataset": ds.name, "n_bins": config.n_bins,
            "alpha": config.alpha, "warnings": list(registry.warnings)}
    return ResultTable.from_rows(rows, meta)


def _evaluate(config, registry, test, bags, proper, run_id, dataset_name):
    """Yield one ResultRow per (bag, strategy); incremental so that partial
    progress survives a mid-run failure."""
    # Posteriors over the whole test set are computed once per model; a bag's
    # posteriors are then row lookups, which keeps TMS and the oracle cheap.
    posteriors_test = {e.model_id: e.model.predict_posteriors(test.X)
                       for e in registry.entries}
    labels_test = {mid: np.argmax(P, axis=1)
                   for mid, P in posteriors_test.items()}
    train_prevalence = proper.prevalence()

    static = {}
    for strat in config.strategies:
        kind, scope = _parse_strategy(strat, config.families)
        if kind == "default":
            static[strat] = default_select(registry, scope)
        elif kind == "IMS":
            static[strat] = ims_select(registry, scope)

    for bag_id, bag in enumerate(bags):
        truth = reveal_labels(bag)
        shift = l1_shift(train_prevalence, bag.realized_prevalence)

        def lookup(entry, idx=bag.indices):
            return posteriors_test[entry.model_id][idx]

        for strat in config.strategies:
            kind, scope = _parse_strategy(strat, config.families)
            if strat in static:
                mid = static[strat]
                acc = float((labels_test[mid][bag.indices] == truth).mean())
                est = registry.entry(mid).val_accuracy
            elif kind == "TMS":
                outcome = tms_select(registry, scope, bag, posterior_fn=lookup)
                mid = outcome.model_id
                acc = float((outcome.predicted_labels == truth).mean())
                est = outcome.estimated_accuracy
            else:  # oracle
                outcome = oracle_select(registry, "All", bag, truth,
                                        posterior_fn=lookup)
                mid = outcome.model_id
                acc = outcome.true_accuracy
                est = None
            yield ResultRow(run_id, dataset_name, strat, bag_id, shift,
                            acc, est, mid)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_results_csv(rows, path):
    ordered = sorted(rows, key=lambda r: (r.strategy, r.bag_id))
    _write_csv(path,
               ["run_id", "dataset", "strategy", "bag_id", "l1_shift",
                "true_acc", "est_acc", "model_id"],
               [(r.run_id, r.dataset, r.strategy, r.bag_id, r.l1_shift,
                 r.true_acc, r.est_acc, r.model_id) for r in ordered])


def shift_records(table: ResultTable):
    """Regroup result rows into one shift record per bag."""
    by_bag = {}
    for row in table.rows:
        rec = by_bag.setdefault(row.bag_id, {"l1": row.l1_shift, "acc": {}})
        rec["acc"][row.strategy] = row.true_acc
    return [ShiftRecord(bag_id=bid, l1=rec["l1"], accuracies=rec["acc"])
            for bid, rec in sorted(by_bag.items())]


def emit_report(table: ResultTable, outdir, n_bins=None, alpha=None):
    """Write results.csv, summary.csv, shift_curve.csv, and summary.txt."""
    os.makedirs(outdir, exist_ok=True)
    n_bins = n_bins if n_bins is not None else table.meta.get("n_bins", DEFAULT_SHIFT_BINS)
    alpha = alpha if alpha is not None else table.meta.get("alpha", 0.01)

    _write_results_csv(table.rows, os.path.join(outdir, "results.csv"))

    aggregates = table.aggregates or aggregate_rows(table.rows)
    strategies = sorted(aggregates)
    best = max(strategies, key=lambda s: (aggregates[s]["mean"], s), default=None)

    summary_rows = []
    for strat in strategies:
        agg = aggregates[strat]
        if strat == best:
            flag_best, dagger, p_val = 1, 0, None
        else:
            series = table.accuracy_series(strat)
            best_series = table.accuracy_series(best)
            try:
                res = wilcoxon_signed_rank(series, best_series, alpha=alpha)
                dagger, p_val = int(not res.significant), res.p_value
            except ValueError:
                # degenerate pairing (near-identical scores): not distinguishable
                dagger, p_val = 1, None
            flag_best = 0
        summary_rows.append((strat, agg["n"], agg["mean"], agg["std"],
                             flag_best, dagger, p_val))
    _write_csv(os.path.join(outdir, "summary.csv"),
               ["strategy", "n_bags", "mean_true_acc", "std_true_acc",
                "best", "not_sig_diff_from_best", "p_vs_best"],
               summary_rows)

    bins = bin_by_shift(shift_records(table), n_bins=n_bins)
    curve_rows = []
    for b in bins:
        for strat in sorted(b.mean_accuracy):
            curve_rows.append((b.index, b.lo, b.hi, b.count, strat,
                               b.mean_accuracy[strat]))
    _write_csv(os.path.join(outdir, "shift_curve.csv"),
               ["bin_index", "bin_lo", "bin_hi", "n_bags", "strategy",
                "mean_true_acc"],
               curve_rows)

    lines = [
        f"run {table.meta.get('run_id', '?')} on {table.meta.get('dataset', '?')}",
        f"significance: two-sided Wilcoxon signed-rank at alpha={alpha}, "
        "paired on per-bag accuracies within this dataset",
        "",
        f"{'strategy':<16} {'mean':>8} {'std':>8}  flags",
    ]
    for strat, n, mean, std, flag_best, dagger, _ in summary_rows:
        marks = ("best" if flag_best else "") + ("+" if dagger and not flag_best else "")
        lines.append(f"{strat:<16} {mean:8.4f} {std:8.4f}  {marks}")
    for warning in table.meta.get("warnings", []):
        lines.append(f"warning: {warning}")
    with open(os.path.join(outdir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results_csv(path) -> ResultTable:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                run_id=rec["run_id"],
                dataset=rec["dataset"],
                strategy=rec["strategy"],
                bag_id=int(rec["bag_id"]),
                l1_shift=float(rec["l1_shift"]),
                true_acc=float(rec["true_acc"]),
                est_acc=float(rec["est_acc"]) if rec["est_acc"] else None,
                model_id=int(rec["model_id"]),
            ))
    meta = {"run_id": rows[0].run_id, "dataset": rows[0].dataset} if rows else {}
    return ResultTable.from_rows(rows, meta)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _cmd_train(args) -> int:
    config = load_config(args.config)
    if args.outdir:
        config.outdir = args.outdir
    ds, proper, validation, test, manifest = _prepare(config)
    seeds = manifest["derived_seeds"]
    registry_dir = os.path.join(config.outdir, "registry")
    registry = build_registry(
        config.families, proper, validation,
        quantifier_kind=config.quantifier, seed=seeds["registry"],
        bandwidth=config.bandwidth, cap_weight=config.cap_weight,
        smoothing=config.smoothing, run_id=manifest["run_id"],
        out_dir=registry_dir)
    os.makedirs(config.outdir, exist_ok=True)
    with open(os.path.join(config.outdir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    print(f"trained {len(registry)} models into {registry_dir}")
    for warning in registry.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.outdir:
        config.outdir = args.outdir
    table = run_experiment(config)
    emit_report(table, config.outdir)
    print(f"wrote results for {len(table.rows)} (strategy, bag) pairs "
          f"to {config.outdir}")
    return 0


def _cmd_report(args) -> int:
    table = read_results_csv(args.results)
    emit_report(table, args.outdir, n_bins=args.bins, alpha=args.alpha)
    print(f"re-emitted reports to {args.outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftselect",
        description="Transductive model selection under prior probability shift.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="build and persist the model registry")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--outdir", default=None)
    p_train.set_defaults(func=_cmd_train)

    p_run = sub.add_parser("run", help="run the full experiment from a config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--outdir", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="re-emit reports from a results.csv")
    p_rep.add_argument("--results", required=True)
    p_rep.add_argument("--outdir", required=True)
    p_rep.add_argument("--bins", type=int, default=DEFAULT_SHIFT_BINS)
    p_rep.add_argument("--alpha", type=float, default=0.01)
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end orchestration: train-time screening, streaming admission,
and the benchmark comparing the screened store against the unscreened
baseline.

Training order: split -> scale -> isolation forest (drop anomalies) ->
KNN-Shapley valuation against the reference subset (drop low-value rows)
-> boosted regressor on the kept rows -> populate the encrypted store
with the kept rows. Streamed records pass the same gates in the same
order before insertion.

A run is reproducible from (config, dataset): admission decisions, entry
counts, and model metrics are identical across runs; only measured
timings vary. The benchmark is single-threaded so timing means are
stable.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import anomaly, dataset as ds_mod, regressor, sse, valuation
from .dataset import KEYWORDS, Dataset, Scaler, SensorRecord
from .errors import ArgumentError, MiniElsaError, PipelineStageError

_SCHEMA_VERSION = 1
_DEFAULT_MASTER = "6d696e69656c73612d6465762d6d61737465722d736563726574"  # dev-only secret


@dataclass
class PipelineConfig:
    """Every knob of a run; serializable to a key=value config file."""

    train_fraction: float = 0.9
    shap_ref_size: int = 450
    split_seed: int = 13
    screening: bool = True
    iforest_trees: int = 20
    iforest_subsample: int = 50
    iforest_contamination: float = 0.1
    iforest_seed: int = 29
    valuation_k: int = 5
    keep_policy: str = "top_fraction"
    top_fraction: float = 0.9
    admit_percentile: float = 20.0
    gbrt_profile: str = "full"
    gbrt_trees: int | None = None
    gbrt_lr: float | None = None
    gbrt_depth: int | None = None
    gbrt_min_leaf: int | None = None
    gbrt_seed: int = 0
    cv_folds: int = 5
    cv_seed: int = 101
    repetitions: int = 100
    warmup: int = 3
    master_secret_hex: str = _DEFAULT_MASTER

    def gbrt_params(self) -> regressor.GBRTParams:
        return regressor.GBRTParams.from_profile(
            self.gbrt_profile,
            n_trees=self.gbrt_trees,
            learning_rate=self.gbrt_lr,
            max_depth=self.gbrt_depth,
            min_samples_leaf=self.gbrt_min_leaf,
            seed=self.gbrt_seed,
        )

    def forest_params(self) -> anomaly.ForestParams:
        return anomaly.ForestParams(
            n_trees=self.iforest_trees,
            subsample_size=self.iforest_subsample,
            contamination=self.iforest_contamination,
        )

    def keys(self) -> sse.KeyMaterial:
        return sse.keygen(bytes.fromhex(self.master_secret_hex))

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            for key, name in _CONFIG_KEYS.items():
                value = getattr(self, name)
                if value is None:
                    continue
                if isinstance(value, bool):
                    value = "on" if value else "off"
                fh.write(f"{key}={value}\n")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        config = cls()
        for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ArgumentError(f"{path}:{line_no}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            config.set_key(key.strip(), value.strip())
        return config

    def set_key(self, key: str, value: str) -> None:
        if key not in _CONFIG_KEYS:
            raise ArgumentError(f"unknown config key {key!r}")
        name = _CONFIG_KEYS[key]
        kind = _FIELD_TYPES[name]
        if kind is bool:
            if value not in ("on", "off", "true", "false"):
                raise ArgumentError(f"{key}: expected on/off, got {value!r}")
            parsed = value in ("on", "true")
        elif kind is int:
            parsed = int(value)
        elif kind is float:
            parsed = float(value)
        else:
            parsed = value
        setattr(self, name, parsed)


_CONFIG_KEYS = {
    "train_fraction": "train_fraction",
    "shap_ref_size": "shap_ref_size",
    "split_seed": "split_seed",
    "screening": "screening",
    "iforest.trees": "iforest_trees",
    "iforest.subsample": "iforest_subsample",
    "iforest.contamination": "iforest_contamination",
    "iforest.seed": "iforest_seed",
    "valuation.k": "valuation_k",
    "valuation.keep_policy": "keep_policy",
    "valuation.top_fraction": "top_fraction",
    "valuation.admit_percentile": "admit_percentile",
    "gbrt.profile": "gbrt_profile",
    "gbrt.trees": "gbrt_trees",
    "gbrt.lr": "gbrt_lr",
    "gbrt.depth": "gbrt_depth",
    "gbrt.min_leaf": "gbrt_min_leaf",
    "gbrt.seed": "gbrt_seed",
    "cv.folds": "cv_folds",
    "cv.seed": "cv_seed",
    "repetitions": "repetitions",
    "warmup": "warmup",
    "master_secret": "master_secret_hex",
}

_FIELD_TYPES = {
    f.name: (int if f.type in ("int", "int | None") else
             float if f.type in ("float", "float | None") else
             bool if f.type == "bool" else str)
    for f in fields(PipelineConfig)
}


class ScreeningReason(str, Enum):
    ADMITTED = "admitted"
    REJECTED_ANOMALY = "rejected_anomaly"
    REJECTED_LOW_VALUE = "rejected_low_value"


@dataclass(frozen=True)
class ScreeningDecision:
    admitted: bool
    anomaly_score: float | None
    shapley_value: float | None  # None when anomaly rejection skipped valuation
    reason: ScreeningReason


@dataclass
class TrainCounts:
    n_total: int
    n_train: int
    n_test: int
    n_shap_ref: int
    n_validation: int
    n_anomalous: int
    n_valued: int
    n_kept: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedBundle:
    """Everything the edge node holds after training."""

    config: PipelineConfig
    scaler: Scaler
    forest: anomaly.ForestModel | None
    valuation_ctx: valuation.ValuationContext | None
    valuation_report: valuation.ValuationReport | None
    admit_threshold: float | None
    ensemble: regressor.BoostedEnsemble
    keys: sse.KeyMaterial
    table: sse.EdgeLookupTable
    store: sse.CloudStore
    counts: TrainCounts
    validation_metrics: regressor.RegressionMetrics
    train_records: Dataset
    test_records: Dataset
    shap_ref_records: Dataset
    validation_records: Dataset
    kept_X: np.ndarray
    kept_y: np.ndarray
    valued_ids: np.ndarray | None = None  # record ids of the rows that were valued


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MiniElsaError as exc:
        raise PipelineStageError(name, exc) from exc


def train_pipeline(config: PipelineConfig, dataset: Dataset) -> TrainedBundle:
    """Run the full training path and populate the store with kept rows."""
    train, test = _stage("split", ds_mod.split, dataset, config.train_fraction, config.split_seed)
    shap_ref, validation = _stage("subsplit", ds_mod.subsplit_test, test, config.shap_ref_size)
    scaler = _stage("scale", ds_mod.fit_scaler, train)
    X_train = scaler.transform(train.features())
    y_train = train.targets()

    forest = None
    keep_train = train
    n_anomalous = 0
    if config.screening:
        forest = _stage("anomaly", anomaly.fit_forest, X_train, config.forest_params(),
                        config.iforest_seed)
        mask = anomaly.flag_anomalies(forest, X_train)
        n_anomalous = int(mask.sum())
        keep_train = train.subset(np.nonzero(~mask)[0])

    X_valued = scaler.transform(keep_train.features())
    y_valued = keep_train.targets()
    X_ref = scaler.transform(shap_ref.features())
    y_ref = shap_ref.targets()

    ctx = None
    report = None
    admit_threshold = None
    kept = keep_train
    if config.screening:
        ctx = _stage(
            "valuation", valuation.ValuationContext,
            X_valued, y_valued, X_ref, y_ref, config.valuation_k,
        )
        values = _stage(
            "valuation", valuation.shapley_exact,
            X_valued, y_valued, X_ref, y_ref, config.valuation_k,
        )
        keep_mask = _stage(
            "valuation", valuation.select_keep,
            values, config.keep_policy, config.top_fraction,
        )
        report = valuation.ValuationReport(
            values=values,
            k=config.valuation_k,
            ref_set_size=len(shap_ref),
            keep_mask=keep_mask,
            policy=config.keep_policy,
            fraction=config.top_fraction,
        )
        admit_threshold = float(np.percentile(values, config.admit_percentile))
        kept = keep_train.subset(np.nonzero(keep_mask)[0])

    kept_X = scaler.transform(kept.features())
    kept_y = kept.targets()
    ensemble = _stage("regression", regressor.fit_gbrt, kept_X, kept_y, config.gbrt_params())
    val_metrics = regressor.metrics(
        validation.targets(), ensemble.predict(scaler.transform(validation.features()))
    )

    keys = config.keys()
    table = sse.EdgeLookupTable()
    store = sse.CloudStore()
    for record in kept.records:
        _stage("store", sse.insert, table, store, keys, record)

    counts = TrainCounts(
        n_total=len(dataset),
        n_train=len(train),
        n_test=len(test),
        n_shap_ref=len(shap_ref),
        n_validation=len(validation),
        n_anomalous=n_anomalous,
        n_valued=len(keep_train) if config.screening else 0,
        n_kept=len(kept),
    )
    return TrainedBundle(
        config=config,
        scaler=scaler,
        forest=forest,
        valuation_ctx=ctx,
        valuation_report=report,
        admit_threshold=admit_threshold,
        ensemble=ensemble,
        keys=keys,
        table=table,
        store=store,
        counts=counts,
        validation_metrics=val_metrics,
        train_records=train,
        test_records=test,
        shap_ref_records=shap_ref,
        validation_records=validation,
        kept_X=kept_X,
        kept_y=kept_y,
        valued_ids=keep_train.ids() if config.screening else None,
    )


def screen(bundle: TrainedBundle, record: SensorRecord) -> ScreeningDecision:
    """Gate one streamed record: anomaly check, then candidate valuation.

    Valuation is skipped (and marked None) when the anomaly check already
    rejects. Deterministic: identical records get identical decisions.
    """
    if not bundle.config.screening:
        return ScreeningDecision(True, None, None, ScreeningReason.ADMITTED)
    x = bundle.scaler.transform(record.features())[0]
    score = anomaly.anomaly_score(bundle.forest, x)
    if score > bundle.forest.threshold:
        return ScreeningDecision(False, score, None, ScreeningReason.REJECTED_ANOMALY)
    value = bundle.valuation_ctx.value_candidate(x, record.pe)
    if value < bundle.admit_threshold:
        return ScreeningDecision(False, score, value, ScreeningReason.REJECTED_LOW_VALUE)
    return ScreeningDecision(True, score, value, ScreeningReason.ADMITTED)


@dataclass
class IngestStats:
    streamed: int = 0
    admitted: int = 0
    rejected_anomaly: int = 0
    rejected_low_value: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def ingest_stream(bundle: TrainedBundle, records) -> IngestStats:
    """Screen records in order and insert the admitted ones."""
    stats = IngestStats()
    records = records.records if isinstance(records, Dataset) else records
    for record in records:
        stats.streamed += 1
        decision = screen(bundle, record)
        if decision.admitted:
            sse.insert(bundle.table, bundle.store, bundle.keys, record)
            stats.admitted += 1
        elif decision.reason is ScreeningReason.REJECTED_ANOMALY:
            stats.rejected_anomaly += 1
        else:
            stats.rejected_low_value += 1
    return stats


@dataclass
class TimingStat:
    mean_s: float
    std_s: float
    repetitions: int

    def to_dict(self) -> dict:
        return asdict(self)


def _timing_stat(samples: list[float]) -> TimingStat:
    arr = np.asarray(samples, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return TimingStat(mean_s=float(arr.mean()), std_s=std, repetitions=arr.size)


@dataclass
class SchemeResult:
    entry_count: int
    table_bytes: int
    store_bytes: int
    train_admitted: int
    ingest: IngestStats
    validation: regressor.RegressionMetrics
    cv: regressor.CVResult
    search_time: dict[str, TimingStat]
    overall_time: TimingStat

    def to_dict(self) -> dict:
        return {
            "entry_count": self.entry_count,
            "table_bytes": self.table_bytes,
            "store_bytes": self.store_bytes,
            "train_admitted": self.train_admitted,
            "ingest": self.ingest.to_dict(),
            "validation": asdict(self.validation),
            "cv": {
                "mse": self.cv.mse,
                "rmse": self.cv.rmse,
                "ae": self.cv.ae,
                "r2": self.cv.r2,
                "folds": [asdict(m) for m in self.cv.folds],
            },
            "search_time": {kw: t.to_dict() for kw, t in self.search_time.items()},
            "overall_time": self.overall_time.to_dict(),
        }


@dataclass
class BenchmarkReport:
    """All measurements of one benchmark run.

    Byte ratios are over entry payloads (the fixed 16-byte header
    excluded), which makes them equal the entry-count ratio exactly since
    both layouts are strictly linear in the entry count.
    """

    schema_version: int
    profile: str
    dataset_size: int
    dataset_provenance: str
    baseline: SchemeResult
    mini: SchemeResult
    entry_ratio: float
    table_payload_ratio: float
    store_payload_ratio: float
    retention: float
    search_improvement_pct: float
    overall_improvement_pct: float
    store_mode: str
    runtime_seconds: float
    tradeoff: list[tuple[float, float]] | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "profile": self.profile,
            "dataset_size": self.dataset_size,
            "dataset_provenance": self.dataset_provenance,
            "baseline": self.baseline.to_dict(),
            "mini": self.mini.to_dict(),
            "ratios": {
                "entry": self.entry_ratio,
                "table_payload_bytes": self.table_payload_ratio,
                "store_payload_bytes": self.store_payload_ratio,
                "retention": self.retention,
            },
            "timing_improvement_pct": {
                "search": self.search_improvement_pct,
                "overall": self.overall_improvement_pct,
            },
            "store_mode": self.store_mode,
            "runtime_seconds": self.runtime_seconds,
            "tradeoff": self.tradeoff,
        }

    def comparable_dict(self) -> dict:
        """Report content with timing-derived fields removed, for
        run-to-run reproducibility comparison."""
        d = self.to_dict()
        d.pop("runtime_seconds")
        d.pop("timing_improvement_pct")
        for scheme in ("baseline", "mini"):
            d[scheme].pop("search_time")
            d[scheme].pop("overall_time")
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def summary(self) -> str:
        lines = [
            f"dataset: {self.dataset_size} records ({self.dataset_provenance})",
            f"profile: {self.profile}; store mode: {self.store_mode}",
            f"entries: baseline {self.baseline.entry_count}, screened {self.mini.entry_count} "
            f"(ratio {self.entry_ratio:.3f}, storage saved {100 * (1 - self.entry_ratio):.1f}%)",
            f"table bytes: baseline {self.baseline.table_bytes}, screened {self.mini.table_bytes}",
            f"store bytes: baseline {self.baseline.store_bytes}, screened {self.mini.store_bytes}",
            f"validation RMSE: baseline {self.baseline.validation.rmse:.3f}, "
            f"screened {self.mini.validation.rmse:.3f}",
            f"validation AE:   baseline {self.baseline.validation.ae:.3f}, "
            f"screened {self.mini.validation.ae:.3f}",
            f"validation R2:   baseline {self.baseline.validation.r2:.4f}, "
            f"screened {self.mini.validation.r2:.4f}",
            f"{self.mini.cv.folds and len(self.mini.cv.folds)}-fold CV RMSE: "
            f"baseline {self.baseline.cv.rmse:.3f}, screened {self.mini.cv.rmse:.3f}",
            f"mean search time: baseline "
            f"{np.mean([t.mean_s for t in self.baseline.search_time.values()]) * 1e3:.3f} ms, "
            f"screened {np.mean([t.mean_s for t in self.mini.search_time.values()]) * 1e3:.3f} ms "
            f"({self.search_improvement_pct:+.1f}%)",
            f"overall execution: baseline {self.baseline.overall_time.mean_s * 1e3:.3f} ms, "
            f"screened {self.mini.overall_time.mean_s * 1e3:.3f} ms "
            f"({self.overall_improvement_pct:+.1f}%)",
            f"benchmark runtime: {self.runtime_seconds:.1f} s "
            f"({self.baseline.overall_time.repetitions} timing repetitions)",
        ]
        if self.tradeoff is not None:
            pts = ", ".join(f"{f:.2f}:{r:.3f}" for f, r in self.tradeoff)
            lines.append(f"keep-fraction vs RMSE: {pts}")
        return "\n".join(lines)


def _measure_timings(bundles: dict[str, TrainedBundle], repetitions: int, warmup: int):
    """Interleaved per-repetition timing of search and full query cycles."""
    search_samples = {name: {kw: [] for kw in KEYWORDS} for name in bundles}
    overall_samples = {name: [] for name in bundles}
    tokens = {
        name: {kw: sse.trapdoor(b.keys, kw) for kw in KEYWORDS}
        for name, b in bundles.items()
    }
    for rep in range(warmup + repetitions):
        keep = rep >= warmup
        for name, bundle in bundles.items():
            for kw in KEYWORDS:
                t0 = time.perf_counter()
                sse.search(bundle.table, tokens[name][kw])
                dt = time.perf_counter() - t0
                if keep:
                    search_samples[name][kw].append(dt)
            t0 = time.perf_counter()
            for kw in KEYWORDS:
                token = sse.trapdoor(bundle.keys, kw)
                ids = sse.search(bundle.table, token)
                sse.fetch_and_decrypt(bundle.store, bundle.keys, ids)
            dt = time.perf_counter() - t0
            if keep:
                overall_samples[name].append(dt)
    search_stats = {
        name: {kw: _timing_stat(samples) for kw, samples in per_kw.items()}
        for name, per_kw in search_samples.items()
    }
    overall_stats = {name: _timing_stat(s) for name, s in overall_samples.items()}
    return search_stats, overall_stats


def run_benchmark(
    config: PipelineConfig,
    dataset: Dataset,
    tradeoff_fractions: list[float] | None = None,
) -> BenchmarkReport:
    """Build both schemes, stream the test split into each, measure."""
    t_start = time.perf_counter()
    mini_bundle = train_pipeline(config, dataset)
    mini_ingest = ingest_stream(mini_bundle, mini_bundle.test_records)
    base_config = replace(config, screening=False)
    base_bundle = train_pipeline(base_config, dataset)
    base_ingest = ingest_stream(base_bundle, base_bundle.test_records)

    search_stats, overall_stats = _measure_timings(
        {"baseline": base_bundle, "mini": mini_bundle}, config.repetitions, config.warmup
    )

    def scheme_result(bundle, ingest, name) -> SchemeResult:
        cv = regressor.kfold_cv(
            bundle.kept_X, bundle.kept_y, config.cv_folds,
            config.gbrt_params(), config.cv_seed,
        )
        return SchemeResult(
            entry_count=bundle.table.entry_count(),
            table_bytes=sse.table_size_bytes(bundle.table),
            store_bytes=sse.store_size_bytes(bundle.store),
            train_admitted=bundle.counts.n_kept,
            ingest=ingest,
            validation=bundle.validation_metrics,
            cv=cv,
            search_time=search_stats[name],
            overall_time=overall_stats[name],
        )

    base_result = scheme_result(base_bundle, base_ingest, "baseline")
    mini_result = scheme_result(mini_bundle, mini_ingest, "mini")

    entry_ratio = mini_result.entry_count / base_result.entry_count
    table_payload_ratio = (mini_result.table_bytes - sse.HEADER_BYTES) / (
        base_result.table_bytes - sse.HEADER_BYTES
    )
    store_payload_ratio = (mini_result.store_bytes - sse.HEADER_BYTES) / (
        base_result.store_bytes - sse.HEADER_BYTES
    )

    base_search = float(np.mean([t.mean_s for t in base_result.search_time.values()]))
    mini_search = float(np.mean([t.mean_s for t in mini_result.search_time.values()]))

    tradeoff = None
    if tradeoff_fractions:
        tradeoff = tradeoff_curve(config, dataset, tradeoff_fractions)

    return BenchmarkReport(
        schema_version=_SCHEMA_VERSION,
        profile=config.gbrt_profile,
        dataset_size=len(dataset),
        dataset_provenance=dataset.provenance,
        baseline=base_result,
        mini=mini_result,
        entry_ratio=entry_ratio,
        table_payload_ratio=table_payload_ratio,
        store_payload_ratio=store_payload_ratio,
        retention=entry_ratio,
        search_improvement_pct=100.0 * (1.0 - mini_search / base_search),
        overall_improvement_pct=100.0
        * (1.0 - mini_result.overall_time.mean_s / base_result.overall_time.mean_s),
        store_mode="in-process",
        runtime_seconds=time.perf_counter() - t_start,
        tradeoff=tradeoff,
    )


def tradeoff_curve(
    config: PipelineConfig, dataset: Dataset, fractions: list[float]
) -> list[tuple[float, float]]:
    """Validation RMSE as a function of the keep fraction, ascending."""
    for f in fractions:
        if not (0.0 < f <= 1.0):
            raise ArgumentError(f"keep fraction must be in (0, 1], got {f}")
    train, test = ds_mod.split(dataset, config.train_fraction, config.split_seed)
    shap_ref, validation = ds_mod.subsplit_test(test, config.shap_ref_size)
    scaler = ds_mod.fit_scaler(train)
    X_train = scaler.transform(train.features())

    forest = anomaly.fit_forest(X_train, config.forest_params(), config.iforest_seed)
    mask = anomaly.flag_anomalies(forest, X_train)
    keep_train = train.subset(np.nonzero(~mask)[0])
    X_valued = scaler.transform(keep_train.features())
    y_valued = keep_train.targets()
    values = valuation.shapley_exact(
        X_valued, y_valued,
        scaler.transform(shap_ref.features()), shap_ref.targets(),
        config.valuation_k,
    )
    X_val = scaler.transform(validation.features())
    y_val = validation.targets()

    curve = []
    for f in sorted(fractions):
        keep_mask = valuation.select_keep(values, "top_fraction", f)
        kept_idx = np.nonzero(keep_mask)[0]
        model = regressor.fit_gbrt(X_valued[kept_idx], y_valued[kept_idx], config.gbrt_params())
        rmse = regressor.metrics(y_val, model.predict(X_val)).rmse
        curve.append((f, rmse))
    return curve


def export_tradeoff(curve: list[tuple[float, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("keep_fraction,validation_rmse\n")
        for f, rmse in curve:
            fh.write(f"{f!r},{rmse!r}\n")


# --- bundle persistence for the CLI ------------------------------------


def save_bundle(bundle: TrainedBundle, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle.config.to_file(out / "config.cfg")
    (out / "scaler.json").write_text(json.dumps(bundle.scaler.to_dict()))
    (out / "gbrt.bin").write_bytes(regressor.gbrt_to_bytes(bundle.ensemble))
    (out / "table.bin").write_bytes(bundle.table.to_bytes())
    (out / "store.bin").write_bytes(bundle.store.to_bytes())
    (out / "counts.json").write_text(json.dumps(bundle.counts.to_dict()))
    (out / "metrics.json").write_text(json.dumps(asdict(bundle.validation_metrics)))
    if bundle.forest is not None:
        (out / "forest.bin").write_bytes(anomaly.forest_to_bytes(bundle.forest))
    if bundle.valuation_ctx is not None:
        ctx = bundle.valuation_ctx
        np.savez_compressed(
            out / "valuation.npz",
            train_X=ctx.train_X,
            train_y=ctx.train_y,
            ref_X=ctx.ref_X,
            ref_y=ctx.ref_y,
            k=np.array(ctx.k),
            admit_threshold=np.array(bundle.admit_threshold),
            values=bundle.valuation_report.values,
            keep_mask=bundle.valuation_report.keep_mask,
            valued_ids=bundle.valued_ids,
        )
    # plot-ready delimited exports
    if bundle.valuation_report is not None:
        bundle.valuation_report.export(out / "values.csv", ids=bundle.valued_ids)
    if len(bundle.validation_records) > 0:
        y_val = bundle.validation_records.targets()
        pred = bundle.ensemble.predict(
            bundle.scaler.transform(bundle.validation_records.features())
        )
        rep = regressor.residuals(y_val, pred)
        rep.export_residuals(out / "residuals.csv")
        rep.export_qq(out / "qq.csv")


def load_bundle(in_dir) -> TrainedBundle:
    src = Path(in_dir)
    config = PipelineConfig.from_file(src / "config.cfg")
    scaler = Scaler.from_dict(json.loads((src / "scaler.json").read_text()))
    ensemble = regressor.gbrt_from_bytes((src / "gbrt.bin").read_bytes())
    table = sse.EdgeLookupTable.from_bytes((src / "table.bin").read_bytes())
    store = sse.CloudStore.from_bytes((src / "store.bin").read_bytes())
    counts = TrainCounts(**json.loads((src / "counts.json").read_text()))
    val_metrics = regressor.RegressionMetrics(**json.loads((src / "metrics.json").read_text()))
    forest = None
    ctx = None
    report = None
    admit_threshold = None
    valued_ids = None
    if (src / "forest.bin").exists():
        forest = anomaly.forest_from_bytes((src / "forest.bin").read_bytes())
    if (src / "valuation.npz").exists():
        data = np.load(src / "valuation.npz")
        ctx = valuation.ValuationContext(
            data["train_X"], data["train_y"], data["ref_X"], data["ref_y"], int(data["k"])
        )
        admit_threshold = float(data["admit_threshold"])
        valued_ids = data["valued_ids"]
        report = valuation.ValuationReport(
            values=data["values"],
            k=int(data["k"]),
            ref_set_size=int(data["ref_X"].shape[0]),
            keep_mask=data["keep_mask"],
            policy=config.keep_policy,
            fraction=config.top_fraction,
        )
    empty = Dataset((), provenance="file")
    return TrainedBundle(
        config=config,
        scaler=scaler,
        forest=forest,
        valuation_ctx=ctx,
        valuation_report=report,
        admit_threshold=admit_threshold,
        ensemble=ensemble,
        keys=config.keys(),
        table=table,
        store=store,
        counts=counts,
        validation_metrics=val_metrics,
        train_records=empty,
        test_records=empty,
        shap_ref_records=empty,
        validation_records=empty,
        kept_X=np.empty((0, 4)),
        kept_y=np.empty(0),
        valued_ids=valued_ids,
    )

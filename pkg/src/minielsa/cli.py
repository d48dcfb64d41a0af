"""Command-line interface: train, screen, ingest, search, bench, tradeoff, report."""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline, sse
from .dataset import SensorRecord, load_ccpp, synth_ccpp
from .errors import MiniElsaError


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="delimited sensor file (header AT,V,AP,RH,PE)")
    p.add_argument("--synth", type=int, metavar="N", help="generate N synthetic records instead")
    p.add_argument("--synth-seed", type=int, default=1)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def _load_config(args) -> pipeline.PipelineConfig:
    config = (
        pipeline.PipelineConfig.from_file(args.config)
        if args.config
        else pipeline.PipelineConfig()
    )
    for item in args.set:
        key, _, value = item.partition("=")
        config.set_key(key.strip(), value.strip())
    return config


def _load_dataset(args):
    if args.data:
        return load_ccpp(args.data)
    if args.synth:
        return synth_ccpp(args.synth, args.synth_seed)
    raise MiniElsaError("provide --data FILE or --synth N")


def _parse_record(text: str, record_id: int) -> SensorRecord:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 5:
        raise MiniElsaError("record must be 'AT,V,AP,RH,PE'")
    return SensorRecord(record_id, *parts)


def cmd_train(args) -> int:
    config = _load_config(args)
    dataset = _load_dataset(args)
    bundle = pipeline.train_pipeline(config, dataset)
    pipeline.save_bundle(bundle, args.out)
    c = bundle.counts
    print(f"trained on {c.n_train} rows ({c.n_anomalous} anomalous removed, "
          f"{c.n_kept} kept); store entries: {bundle.table.entry_count()}")
    print(f"validation RMSE {bundle.validation_metrics.rmse:.3f}, "
          f"AE {bundle.validation_metrics.ae:.3f}, R2 {bundle.validation_metrics.r2:.4f}")
    print(f"bundle written to {args.out}")
    return 0


def cmd_screen(args) -> int:
    bundle = pipeline.load_bundle(args.bundle)
    record = _parse_record(args.record, record_id=args.id)
    decision = pipeline.screen(bundle, record)
    print(json.dumps({
        "admitted": decision.admitted,
        "reason": decision.reason.value,
        "anomaly_score": decision.anomaly_score,
        "shapley_value": decision.shapley_value,
    }, indent=2))
    return 0


def cmd_ingest(args) -> int:
    bundle = pipeline.load_bundle(args.bundle)
    dataset = _load_dataset(args)
    # streamed records continue the store's ingestion-order id sequence
    next_id = max(bundle.store.blobs, default=-1) + 1
    records = [
        SensorRecord(next_id + i, r.at, r.v, r.ap, r.rh, r.pe)
        for i, r in enumerate(dataset.records)
    ]
    stats = pipeline.ingest_stream(bundle, records)
    pipeline.save_bundle(bundle, args.bundle)
    print(json.dumps(stats.to_dict(), indent=2))
    return 0


def cmd_search(args) -> int:
    bundle = pipeline.load_bundle(args.bundle)
    token = sse.trapdoor(bundle.keys, args.keyword)
    ids = sse.search(bundle.table, token)
    if args.fetch:
        records = sse.fetch_and_decrypt(bundle.store, bundle.keys, ids)
        for r in records:
            print(f"{r.id},{r.at},{r.v},{r.ap},{r.rh},{r.pe}")
    else:
        print(" ".join(str(i) for i in ids))
    print(f"# {len(ids)} records match {args.keyword!r}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    config = _load_config(args)
    dataset = _load_dataset(args)
    fractions = (
        [float(f) for f in args.tradeoff_fractions.split(",")]
        if args.tradeoff_fractions
        else None
    )
    report = pipeline.run_benchmark(config, dataset, fractions)
    if args.out:
        report.to_json(args.out)
        print(f"report written to {args.out}", file=sys.stderr)
    print(report.summary())
    return 0


def cmd_tradeoff(args) -> int:
    config = _load_config(args)
    dataset = _load_dataset(args)
    fractions = [float(f) for f in args.fractions.split(",")]
    curve = pipeline.tradeoff_curve(config, dataset, fractions)
    if args.out:
        pipeline.export_tradeoff(curve, args.out)
        print(f"curve written to {args.out}", file=sys.stderr)
    for f, rmse in curve:
        print(f"{f:.3f},{rmse:.6f}")
    return 0


def cmd_report(args) -> int:
    with open(args.report) as fh:
        data = json.load(fh)
    print(json.dumps(data, indent=2) if args.json else _summarize_saved(data))
    return 0


def _summarize_saved(d: dict) -> str:
    lines = [
        f"dataset: {d['dataset_size']} records ({d['dataset_provenance']})",
        f"profile: {d['profile']}; store mode: {d['store_mode']}",
        f"entries: baseline {d['baseline']['entry_count']}, "
        f"screened {d['mini']['entry_count']} (ratio {d['ratios']['entry']:.3f})",
        f"validation RMSE: baseline {d['baseline']['validation']['rmse']:.3f}, "
        f"screened {d['mini']['validation']['rmse']:.3f}",
        f"search improvement: {d['timing_improvement_pct']['search']:+.1f}%, "
        f"overall: {d['timing_improvement_pct']['overall']:+.1f}%",
        f"runtime: {d['runtime_seconds']:.1f} s",
    ]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minielsa",
        description="Screened edge/cloud searchable encrypted sensor store",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the pipeline and write a bundle")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--out", required=True, help="bundle output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("screen", help="screen one record against a trained bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--record", required=True, help="'AT,V,AP,RH,PE'")
    p.add_argument("--id", type=int, default=0)
    p.set_defaults(fn=cmd_screen)

    p = sub.add_parser("ingest", help="stream records through the screening gate")
    p.add_argument("--bundle", required=True)
    _add_data_args(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("search", help="keyword search over the encrypted store")
    p.add_argument("--bundle", required=True)
    p.add_argument("keyword")
    p.add_argument("--fetch", action="store_true", help="decrypt and print matches")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("bench", help="run the baseline-vs-screened benchmark")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--tradeoff-fractions", help="comma list, e.g. 0.1,0.2,0.5,0.8,1.0")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("tradeoff", help="keep-fraction vs RMSE curve")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--fractions", required=True, help="comma list of keep fractions")
    p.add_argument("--out", help="write CSV plot data here")
    p.set_defaults(fn=cmd_tradeoff)

    p = sub.add_parser("report", help="print a saved benchmark report")
    p.add_argument("report")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MiniElsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

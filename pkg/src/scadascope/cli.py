"""Command-line entry point.

Subcommands: synth, rank, analyze, eval, stability, inspect.  Exit codes:
0 success, 2 input or configuration error, 3 low-confidence or partial
analysis (a protocol iteration produced no field devices, or the ranked
list ran out before the requested number of protocols).
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, asdict

import scadascope
from scadascope import ingest
from scadascope.features import RankingConfig, write_ranking_csv
from scadascope.inference import (
    InferenceConfig,
    ProtocolEntry,
    TopologyReport,
    analyze_records,
    evaluate,
    load_ground_truth,
    prefix_stability,
    report_to_dot,
)
from scadascope.segmentation import DEFAULT_T_COMM, segment_stream
from scadascope.synth import generate, load_scenario, write_pcap, write_records

log = logging.getLogger("scadascope")

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_LOW_CONFIDENCE = 3

PROGRESS_EVERY = 1_000_000


@dataclass
class RunManifest:
    """Reproducibility envelope embedded in every report."""

    inputs: list[str]
    input_sha256: str
    tool_version: str
    config: dict
    records: int
    segments: int
    ft_count: int
    duration_s: float


def _sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _progress(records, quiet: bool):
    if quiet:
        yield from records
        return
    n = 0
    for rec in records:
        n += 1
        if n % PROGRESS_EVERY == 0:
            log.info("processed %d records", n)
        yield rec


def _filter_config(args) -> ingest.FilterConfig | None:
    """Service-port filtering is off unless one of the filter flags appears."""
    if args.filter_ports is None and not args.no_default_filter:
        return None
    ports: set[int] = set() if args.no_default_filter else set(ingest.DEFAULT_SERVICE_PORTS)
    if args.filter_ports:
        for part in args.filter_ports.split(","):
            part = part.strip()
            if part:
                ports.add(int(part))
    return ingest.FilterConfig(service_ports=frozenset(ports), drop_non_tcp=True)


def _load_stream(args):
    stats = ingest.IngestStats()
    records = ingest.open_trace(args.input, stats)
    records = ingest.ensure_time_order(records, force_sort=args.force_sort)
    fstats = ingest.FilterStats()
    config = _filter_config(args)
    if config is not None:
        records = ingest.filter_packets(records, config, fstats)
    return _progress(records, args.quiet), stats, fstats


def _shards(args) -> int:
    cap = os.environ.get("SCADASCOPE_THREADS")
    shards = args.shards
    if cap:
        try:
            shards = min(shards, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer SCADASCOPE_THREADS=%r", cap)
    return shards


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-comm", type=float, default=DEFAULT_T_COMM, metavar="SECONDS")
    parser.add_argument("--filter-ports", metavar="CSV", default=None,
                        help="enable service-port filtering and add these ports to the list")
    parser.add_argument("--no-default-filter", action="store_true",
                        help="when filtering, start from an empty port list instead of the default eleven")
    parser.add_argument("--force-sort", action="store_true",
                        help="fully sort out-of-order input instead of failing")
    parser.add_argument("--pr-cap", type=float, default=RankingConfig.pr_cap,
                        help="periodicity value assigned when variance is exactly zero")
    parser.add_argument("--log-base", choices=("e", "10"), default="e")
    parser.add_argument("--shards", type=int, default=1,
                        help="partition conversations over this many workers (result is identical)")


def cmd_synth(args) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config.seed = args.seed
    records, truth = generate(config)
    if args.pcap:
        records = list(records)
        count = write_records(records, args.out)
        write_pcap(records, args.pcap)
    else:
        count = write_records(records, args.out)
    if args.truth:
        with open(args.truth, "w", encoding="utf-8") as fp:
            json.dump(truth.to_dict(), fp, indent=2, sort_keys=True)
            fp.write("\n")
    print(f"wrote {count} records to {args.out}")
    return EXIT_OK


def cmd_rank(args) -> int:
    started = time.monotonic()
    records, _stats, _fstats = _load_stream(args)
    ranking = RankingConfig(pr_cap=args.pr_cap, log_base=args.log_base)
    result = analyze_records(
        records,
        t_comm=args.t_comm,
        ranking_config=ranking,
        shards=_shards(args),
    )
    ranked = result.ranked
    if not ranked:
        log.warning("empty trace, nothing to rank")
        print("no communications to rank")
        return EXIT_OK

    if args.format == "json":
        rows = [
            {
                "rank": i + 1,
                "src_ip": e.key.src_ip,
                "src_port": e.key.src_port,
                "dst_ip": e.key.dst_ip,
                "dst_port": e.key.dst_port,
                "seg_size": e.key.seg_size,
                "n": e.n,
                "features": list(e.fv.normalized()),
                "f": e.fv.f,
            }
            for i, e in enumerate(ranked[: args.top])
        ]
        out = json.dumps(rows, indent=2)
    else:
        buf = io.StringIO()
        write_ranking_csv(ranked, buf, top=args.top)
        out = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(out)
    else:
        print(out, end="" if out.endswith("\n") else "\n")

    window = ranked[: min(1000, len(ranked))]
    candidates = {ranked[0].key.src_port, ranked[0].key.dst_port}
    counts = {
        port: sum(1 for e in window if port in (e.key.src_port, e.key.dst_port))
        for port in sorted(candidates)
    }
    best_port, best_count = max(counts.items(), key=lambda kv: kv[1])
    print(
        f"summary: {best_count} of top-{len(window)} communications touch port {best_port}; "
        f"{len(ranked)} ranked in {time.monotonic() - started:.2f}s"
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    started = time.monotonic()
    records, stats, fstats = _load_stream(args)
    ranking = RankingConfig(pr_cap=args.pr_cap, log_base=args.log_base)
    inference = InferenceConfig(
        num_scada_protocols=args.num_protocols,
        fd_degree_threshold=args.fd_degree_threshold,
        scada_fraction_threshold=args.scada_fraction,
        three_layer=args.three_layer,
    )
    result = analyze_records(
        records,
        t_comm=args.t_comm,
        ranking_config=ranking,
        inference_config=inference,
        shards=_shards(args),
    )
    report = result.report
    manifest = RunManifest(
        inputs=[args.input],
        input_sha256=_sha256_of(args.input),
        tool_version=scadascope.__version__,
        config={
            "t_comm": args.t_comm,
            "filter_ports": sorted(_filter_config(args).service_ports) if _filter_config(args) else None,
            "num_scada_protocols": inference.num_scada_protocols,
            "fd_degree_threshold": inference.fd_degree_threshold,
            "scada_fraction_threshold": inference.scada_fraction_threshold,
            "three_layer": inference.three_layer,
            "pr_cap": ranking.pr_cap,
            "log_base": ranking.log_base,
        },
        records=result.record_count,
        segments=result.segment_count,
        ft_count=len(result.ft_map),
        duration_s=round(time.monotonic() - started, 3),
    )
    payload = report.to_dict()
    payload["manifest"] = asdict(manifest)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(text)
    else:
        print(text, end="")
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fp:
            fp.write(report_to_dot(report, result.ft_map))
    for entry in report.protocols:
        print(
            f"protocol port {entry.scada_port}: {len(entry.field_devices)} field devices, "
            f"{len(entry.master_servers)} master servers"
        )
    if report.hmi is not None:
        print(f"hmi: {report.hmi}")
    for warning in report.warnings:
        log.warning("%s", warning)
    return EXIT_LOW_CONFIDENCE if report.low_confidence else EXIT_OK


def cmd_eval(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fp:
        payload = json.load(fp)
    with open(args.truth, "r", encoding="utf-8") as fp:
        truth = load_ground_truth(json.load(fp))
    report = TopologyReport(
        protocols=[
            ProtocolEntry(
                scada_port=e["scada_port"],
                scada_ip=e.get("scada_ip", ""),
                field_devices=set(e.get("field_devices", [])),
                master_servers=set(e.get("master_servers", [])),
            )
            for e in payload.get("protocols", [])
        ],
        hmi=payload.get("hmi"),
    )
    metrics = evaluate(report, truth)
    print(f"precision={metrics['precision']:.4f} recall={metrics['recall']:.4f} f_score={metrics['f_score']:.4f}")
    print(f"tp={metrics['tp']} fp={metrics['fp']} fn={metrics['fn']}")
    return EXIT_OK


def cmd_stability(args) -> int:
    fractions = [float(part) for part in args.fractions.split(",") if part.strip()]
    records, _stats, _fstats = _load_stream(args)
    inference = InferenceConfig(
        num_scada_protocols=args.num_protocols,
        fd_degree_threshold=args.fd_degree_threshold,
        scada_fraction_threshold=args.scada_fraction,
        three_layer=args.three_layer,
    )
    ranking = RankingConfig(pr_cap=args.pr_cap, log_base=args.log_base)
    result = prefix_stability(
        list(records),
        fractions,
        t_comm=args.t_comm,
        ranking_config=ranking,
        inference_config=inference,
    )
    target = result.full_report.topology_signature()
    for frac in sorted(result.by_fraction):
        match = result.by_fraction[frac].topology_signature() == target
        print(f"fraction {frac:g}: {'matches full trace' if match else 'differs'}")
    if result.smallest_stable is None:
        print("no tested fraction reproduces the full-trace topology")
    else:
        print(f"smallest stable fraction: {result.smallest_stable:g}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    stats = ingest.IngestStats()
    records = ingest.open_trace(args.input, stats)
    records = ingest.ensure_time_order(records, force_sort=args.force_sort)
    fstats = ingest.FilterStats()
    config = _filter_config(args)
    if config is not None:
        records = ingest.filter_packets(records, config, fstats)

    protos: dict[str, int] = {}
    ips: set[str] = set()
    ports: set[int] = set()
    first = last = None
    count = 0
    dump = open(args.dump_segments, "w", encoding="utf-8") if args.dump_segments else None

    def watch(stream):
        nonlocal first, last, count
        for rec in stream:
            count += 1
            protos[rec.proto] = protos.get(rec.proto, 0) + 1
            ips.add(rec.src_ip)
            ips.add(rec.dst_ip)
            ports.add(rec.src_port)
            ports.add(rec.dst_port)
            if first is None:
                first = rec.ts
            last = rec.ts
            yield rec

    seg_count = 0
    try:
        for seg in segment_stream(watch(records), t_comm=args.t_comm):
            seg_count += 1
            if dump:
                dump.write(seg.to_json())
                dump.write("\n")
    finally:
        if dump:
            dump.close()

    print(f"records: {count}")
    if config is not None:
        print(f"filter: kept {fstats.kept}, dropped {fstats.dropped}")
    if stats.skipped:
        print(f"skipped frames: {stats.skipped}")
    print(f"devices: {len(ips)}, distinct ports: {len(ports)}")
    print(f"transports: {json.dumps(protos, sort_keys=True)}")
    if first is not None:
        print(f"time span: {first:.6f} .. {last:.6f} ({last - first:.3f}s)")
    print(f"segments (t_comm={args.t_comm:g}s): {seg_count}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scadascope",
        description="Passive SCADA fingerprinting from packet traces, no payload inspection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {scadascope.__version__}")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic trace")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True, help="output records file (JSON lines)")
    p.add_argument("--pcap", help="also write a pcap rendering")
    p.add_argument("--truth", help="write ground-truth labels JSON")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rank", help="rank 5-tuples by the product score")
    p.add_argument("input")
    _add_pipeline_flags(p)
    p.add_argument("--top", type=int, default=20, help="rows to show")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("analyze", help="full topology inference")
    p.add_argument("input")
    _add_pipeline_flags(p)
    p.add_argument("--num-protocols", type=int, default=1)
    p.add_argument("--fd-degree-threshold", type=int, default=5)
    p.add_argument("--scada-fraction", type=float, default=0.5)
    p.add_argument("--three-layer", action="store_true")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--dot", help="DOT graph path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="score a report against ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stability", help="rerun the pipeline on trace prefixes")
    p.add_argument("input")
    _add_pipeline_flags(p)
    p.add_argument("--fractions", default="0.02,0.06,0.1,0.25,1.0")
    p.add_argument("--num-protocols", type=int, default=1)
    p.add_argument("--fd-degree-threshold", type=int, default=5)
    p.add_argument("--scada-fraction", type=float, default=0.5)
    p.add_argument("--three-layer", action="store_true")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("inspect", help="ingest statistics and optional segment dump")
    p.add_argument("input")
    _add_pipeline_flags(p)
    p.add_argument("--dump-segments", help="write segments as JSON lines")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, LookupError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Topology inference from the ranked 5-tuple list.

The loop: take the top-ranked communication, read the SCADA port off its
lower-degree endpoint, classify field devices and master servers against
that port, strip every entry touching the port, repeat once per deployed
protocol.  Optionally pick the HMI behind the master by communication
quantity when a three-layer deployment is known.
"""

from __future__ import annotations

import bisect
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from scadascope.features import RankedFt, RankingConfig, rank
from scadascope.ingest import PacketRecord
from scadascope.segmentation import (
    DEFAULT_T_COMM,
    FtKey,
    FtStats,
    aggregate_records,
    total_segments,
)

log = logging.getLogger(__name__)


class NoScadaFoundError(LookupError):
    """The ranked list is empty; nothing to infer a port from."""


@dataclass
class InferenceConfig:
    num_scada_protocols: int = 1
    fd_degree_threshold: int = 5
    scada_fraction_threshold: float = 0.5
    three_layer: bool = False

    def __post_init__(self) -> None:
        if self.num_scada_protocols < 1:
            raise ValueError("num_scada_protocols must be >= 1")
        if self.fd_degree_threshold <= 0 or self.scada_fraction_threshold <= 0:
            raise ValueError("thresholds must be positive")


@dataclass
class DeviceProfile:
    """Per-device connectivity and port-usage evidence."""

    ip: str
    peers: set[str] = field(default_factory=set)
    ft_count: int = 0
    ports_used: set[int] = field(default_factory=set)
    own_port_segments: Counter = field(default_factory=Counter)
    total_segments: int = 0

    @property
    def degree(self) -> int:
        return len(self.peers)

    def scada_fraction(self, port: int) -> float:
        """Share of this device's segments carrying ``port`` on its own side."""
        if self.total_segments == 0:
            return 0.0
        return self.own_port_segments.get(port, 0) / self.total_segments

    def snapshot(self, port: int | None) -> dict:
        return {
            "degree": self.degree,
            "ft_count": self.ft_count,
            "ports_used": len(self.ports_used),
            "segments": self.total_segments,
            "scada_fraction": None if port is None else round(self.scada_fraction(port), 6),
        }


def build_device_profiles(ft_map: dict[FtKey, FtStats]) -> dict[str, DeviceProfile]:
    profiles: dict[str, DeviceProfile] = {}

    def get(ip: str) -> DeviceProfile:
        prof = profiles.get(ip)
        if prof is None:
            prof = profiles[ip] = DeviceProfile(ip)
        return prof

    for key, stats in ft_map.items():
        n = stats.n
        src = get(key.src_ip)
        dst = get(key.dst_ip)
        src.peers.add(key.dst_ip)
        dst.peers.add(key.src_ip)
        src.ft_count += 1
        dst.ft_count += 1
        src.ports_used.add(key.src_port)
        dst.ports_used.add(key.dst_port)
        src.own_port_segments[key.src_port] += n
        dst.own_port_segments[key.dst_port] += n
        src.total_segments += n
        dst.total_segments += n
    return profiles


@dataclass
class ProtocolEntry:
    scada_port: int
    scada_ip: str
    field_devices: set[str] = field(default_factory=set)
    master_servers: set[str] = field(default_factory=set)
    degree_tie: bool = False

    def to_dict(self) -> dict:
        return {
            "scada_port": self.scada_port,
            "scada_ip": self.scada_ip,
            "field_devices": sorted(self.field_devices),
            "master_servers": sorted(self.master_servers),
            "degree_tie": self.degree_tie,
        }


@dataclass
class TopologyReport:
    protocols: list[ProtocolEntry] = field(default_factory=list)
    hmi: str | None = None
    unclassified: set[str] = field(default_factory=set)
    evidence: dict[str, dict] = field(default_factory=dict)
    status: str = "ok"  # ok | partial
    warnings: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def low_confidence(self) -> bool:
        return self.status != "ok" or any(not p.field_devices for p in self.protocols)

    def classified_devices(self) -> set[str]:
        out: set[str] = set()
        for entry in self.protocols:
            out |= entry.field_devices
            out |= entry.master_servers
        if self.hmi is not None:
            out.add(self.hmi)
        return out

    def topology_signature(self) -> tuple:
        """Comparable summary of the inferred topology (ignores evidence)."""
        return (
            tuple(
                (p.scada_port, frozenset(p.field_devices), frozenset(p.master_servers))
                for p in self.protocols
            ),
            self.hmi,
        )

    def to_dict(self) -> dict:
        return {
            "protocols": [p.to_dict() for p in self.protocols],
            "hmi": self.hmi,
            "unclassified": sorted(self.unclassified),
            "evidence": {ip: self.evidence[ip] for ip in sorted(self.evidence)},
            "status": self.status,
            "warnings": list(self.warnings),
            "metrics": dict(self.metrics),
        }


def infer_scada_port(
    ranked: Sequence[RankedFt], profiles: dict[str, DeviceProfile]
) -> tuple[int, str, bool]:
    """Infer the SCADA port from the top-ranked communication.

    Returns (port, ip owning it, tie flag).  The port sits on the endpoint
    with the lower connectivity degree; a degree tie falls back to the
    lower-numbered port.
    """
    if not ranked:
        raise NoScadaFoundError("ranked list is empty, no SCADA communication to pick")
    key = ranked[0].key
    deg_src = profiles[key.src_ip].degree
    deg_dst = profiles[key.dst_ip].degree
    if deg_src < deg_dst:
        return key.src_port, key.src_ip, False
    if deg_dst < deg_src:
        return key.dst_port, key.dst_ip, False
    if key.src_port <= key.dst_port:
        return key.src_port, key.src_ip, True
    return key.dst_port, key.dst_ip, True


def infer_field_devices(
    scada_port: int,
    profiles: dict[str, DeviceProfile],
    config: InferenceConfig,
) -> set[str]:
    """Devices dominated by own-side SCADA traffic with few peers."""
    out: set[str] = set()
    for ip, prof in profiles.items():
        if prof.scada_fraction(scada_port) <= config.scada_fraction_threshold:
            continue
        if prof.degree >= config.fd_degree_threshold:
            continue
        out.add(ip)
    return out


def infer_master_servers(
    scada_port: int,
    field_devices: set[str],
    ft_map: dict[FtKey, FtStats],
) -> set[str]:
    """Non-field-devices with SCADA-port communication to an inferred field device."""
    if not field_devices:
        log.warning("no field devices inferred for port %d, master set is empty", scada_port)
        return set()
    masters: set[str] = set()
    for key in ft_map:
        if key.src_port != scada_port and key.dst_port != scada_port:
            continue
        if key.src_ip in field_devices and key.dst_ip not in field_devices:
            masters.add(key.dst_ip)
        elif key.dst_ip in field_devices and key.src_ip not in field_devices:
            masters.add(key.src_ip)
    return masters


def hmi_candidates(master: str, ft_map: dict[FtKey, FtStats]) -> list[tuple[float, str]]:
    """Peers of ``master`` ordered by total communication quantity, best first.

    Quantity of one 5-tuple is occurrence count times segment size; per-peer
    totals sum over every 5-tuple the master initiates toward that peer.
    """
    qty: dict[str, float] = {}
    for key, stats in ft_map.items():
        if key.src_ip != master:
            continue
        qty[key.dst_ip] = qty.get(key.dst_ip, 0.0) + stats.n * key.seg_size
    return sorted(((q, ip) for ip, q in qty.items()), key=lambda t: (-t[0], t[1]))


def infer_hmi(master: str, ft_map: dict[FtKey, FtStats]) -> str:
    """The peer receiving the largest communication quantity from the master."""
    candidates = hmi_candidates(master, ft_map)
    if not candidates:
        raise NoScadaFoundError(f"master {master} initiates no communication")
    return candidates[0][1]


def run_algorithm1(
    ft_map: dict[FtKey, FtStats],
    ranked: Sequence[RankedFt],
    config: InferenceConfig,
    profiles: dict[str, DeviceProfile] | None = None,
) -> TopologyReport:
    """Infer one protocol entry per iteration, removing its port in between."""
    if profiles is None:
        profiles = build_device_profiles(ft_map)
    report = TopologyReport()
    working = list(ranked)
    classifying_port: dict[str, int] = {}

    for i in range(config.num_scada_protocols):
        if not working:
            report.status = "partial"
            report.warnings.append(
                f"ranked list exhausted after {i} of {config.num_scada_protocols} protocol iterations"
            )
            break
        port, owner_ip, tie = infer_scada_port(working, profiles)
        fds = infer_field_devices(port, profiles, config)
        masters = infer_master_servers(port, fds, ft_map)
        entry = ProtocolEntry(
            scada_port=port,
            scada_ip=owner_ip,
            field_devices=fds,
            master_servers=masters,
            degree_tie=tie,
        )
        report.protocols.append(entry)
        if tie:
            report.warnings.append(f"protocol {i}: degree tie on top entry, chose port {port}")
        if not fds:
            report.warnings.append(
                f"protocol {i}: no device met the field-device conditions for port {port}"
            )
        for ip in fds | masters:
            classifying_port.setdefault(ip, port)
        working = [
            r for r in working if port != r.key.src_port and port != r.key.dst_port
        ]

    if config.three_layer:
        all_masters = sorted({m for p in report.protocols for m in p.master_servers})
        if not all_masters:
            report.warnings.append("three-layer requested but no master server was inferred")
        else:
            ranked_masters = sorted(
                all_masters,
                key=lambda m: (-sum(q for q, _ in hmi_candidates(m, ft_map)), m),
            )
            primary = ranked_masters[0]
            candidates = hmi_candidates(primary, ft_map)
            if not candidates:
                report.warnings.append(f"master {primary} initiates no communication, HMI unknown")
            else:
                report.hmi = candidates[0][1]
                if len(candidates) > 1 and candidates[1][0] == candidates[0][0]:
                    report.warnings.append("HMI quantity tie, chose lowest address")
                if report.hmi is not None:
                    classifying_port.setdefault(report.hmi, report.protocols[0].scada_port)

    classified = report.classified_devices()
    report.unclassified = set(profiles) - classified
    first_port = report.protocols[0].scada_port if report.protocols else None
    for ip, prof in profiles.items():
        report.evidence[ip] = prof.snapshot(classifying_port.get(ip, first_port))
        report.evidence[ip]["role"] = _role_of(ip, report)
    return report


def _role_of(ip: str, report: TopologyReport) -> str:
    if ip == report.hmi:
        return "hmi"
    for entry in report.protocols:
        if ip in entry.field_devices:
            return "field_device"
        if ip in entry.master_servers:
            return "master"
    return "unclassified"


@dataclass
class AnalysisResult:
    report: TopologyReport
    ranked: list[RankedFt]
    ft_map: dict[FtKey, FtStats]
    record_count: int
    segment_count: int


def analyze_records(
    records: Iterable[PacketRecord],
    t_comm: float = DEFAULT_T_COMM,
    ranking_config: RankingConfig | None = None,
    inference_config: InferenceConfig | None = None,
    shards: int = 1,
) -> AnalysisResult:
    """Full pipeline from a time-ordered record stream to a topology report."""
    if inference_config is None:
        inference_config = InferenceConfig()
    counter = _CountingIterator(records)
    ft_map = aggregate_records(counter, t_comm=t_comm, shards=shards)
    ranked = rank(ft_map, config=ranking_config)
    if ranked:
        report = run_algorithm1(ft_map, ranked, inference_config)
    else:
        report = TopologyReport(status="partial", warnings=["no communication to rank"])
    seg_count = total_segments(ft_map)
    report.metrics = {
        "records": counter.count,
        "segments": seg_count,
        "ft_count": len(ft_map),
    }
    return AnalysisResult(
        report=report,
        ranked=ranked,
        ft_map=ft_map,
        record_count=counter.count,
        segment_count=seg_count,
    )


class _CountingIterator:
    __slots__ = ("_it", "count")

    def __init__(self, iterable: Iterable[PacketRecord]) -> None:
        self._it = iter(iterable)
        self.count = 0

    def __iter__(self):
        for item in self._it:
            self.count += 1
            yield item


def evaluate(report: TopologyReport, truth: dict[str, str]) -> dict:
    """Precision/recall/F-score of the claimed SCADA set against labels.

    ``truth`` maps ip to a role; field_device, master and hmi count as
    positives, everything else as negatives.
    """
    if not truth:
        raise ValueError("ground truth is empty")
    claimed = report.classified_devices()
    actual = {ip for ip, role in truth.items() if role in ("field_device", "master", "hmi")}
    tp = len(claimed & actual)
    fp = len(claimed - actual)
    fn = len(actual - claimed)
    if claimed:
        precision = tp / len(claimed)
    else:
        precision = 1.0 if not actual else 0.0
    recall = tp / len(actual) if actual else 1.0
    f_score = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f_score": f_score,
        "tp": tp,
        "fp": fp,
        "fn": fn,
    }


@dataclass
class StabilityResult:
    by_fraction: dict[float, TopologyReport]
    full_report: TopologyReport
    smallest_stable: float | None

    def stable_fractions(self) -> list[float]:
        target = self.full_report.topology_signature()
        return [f for f, rep in self.by_fraction.items() if rep.topology_signature() == target]


def prefix_stability(
    records: Sequence[PacketRecord],
    fractions: Iterable[float],
    t_comm: float = DEFAULT_T_COMM,
    ranking_config: RankingConfig | None = None,
    inference_config: InferenceConfig | None = None,
) -> StabilityResult:
    """Rerun the pipeline on time prefixes of the trace.

    A fraction p keeps packets in the first p of the trace duration.  The
    result records which fractions already reproduce the full-trace topology.
    """
    fractions = sorted(set(fractions))
    if not fractions or fractions[0] <= 0 or fractions[-1] > 1:
        raise ValueError("fractions must lie in (0, 1]")
    records = list(records)
    full = analyze_records(
        records, t_comm=t_comm, ranking_config=ranking_config, inference_config=inference_config
    ).report
    if not records:
        return StabilityResult({f: full for f in fractions}, full, fractions[0])

    t0 = records[0].ts
    span = records[-1].ts - t0
    times = [r.ts for r in records]
    by_fraction: dict[float, TopologyReport] = {}
    smallest: float | None = None
    target = full.topology_signature()
    for frac in fractions:
        cutoff = t0 + frac * span
        prefix = records[: bisect.bisect_right(times, cutoff)]
        rep = analyze_records(
            prefix, t_comm=t_comm, ranking_config=ranking_config, inference_config=inference_config
        ).report
        by_fraction[frac] = rep
        if smallest is None and rep.topology_signature() == target:
            smallest = frac
    return StabilityResult(by_fraction=by_fraction, full_report=full, smallest_stable=smallest)


def load_ground_truth(obj: dict) -> dict[str, str]:
    """Normalize a truth mapping: values may be plain roles or {role, protocol}."""
    out: dict[str, str] = {}
    for ip, value in obj.items():
        role = value.get("role") if isinstance(value, dict) else value
        if role not in ("field_device", "master", "hmi", "peripheral"):
            raise ValueError(f"unknown ground-truth role {role!r} for {ip}")
        out[ip] = role
    return out


_DOT_SHAPES = {
    "field_device": "box",
    "master": "doublecircle",
    "hmi": "diamond",
    "unclassified": "ellipse",
}


def report_to_dot(report: TopologyReport, ft_map: dict[FtKey, FtStats]) -> str:
    """Render the inferred topology as an undirected DOT graph."""
    lines = ["graph scada_topology {", "  node [shape=ellipse];"]
    roles = {ip: _role_of(ip, report) for ip in report.evidence}
    for ip in sorted(roles):
        lines.append(f'  "{ip}" [shape={_DOT_SHAPES[roles[ip]]}];')

    for entry in report.protocols:
        port = entry.scada_port
        seg_counts: dict[tuple[str, str], int] = {}
        for key, stats in ft_map.items():
            if port != key.src_port and port != key.dst_port:
                continue
            pair = tuple(sorted((key.src_ip, key.dst_ip)))
            seg_counts[pair] = seg_counts.get(pair, 0) + stats.n
        for (a, b), n in sorted(seg_counts.items()):
            if a in entry.field_devices or b in entry.field_devices:
                lines.append(f'  "{a}" -- "{b}" [label="port {port} n={n}"];')
    if report.hmi is not None:
        for entry in report.protocols:
            for master in sorted(entry.master_servers):
                qty = {ip: q for q, ip in hmi_candidates(master, ft_map)}
                if report.hmi in qty:
                    lines.append(
                        f'  "{master}" -- "{report.hmi}" [label="hmi qty={qty[report.hmi]:.3e}"];'
                    )
    lines.append("}")
    return "\n".join(lines) + "\n"

"""Seeded synthetic CI traffic with ground-truth labels.

Field devices report on a fixed port with jittered periodic schedules, the
master answers from ephemeral ports that rotate on reconnect, peripherals
emit their own periodic chatter, and an optional third layer adds a bulk
feed from the master to the HMI.  The same seed always produces the same
packet stream, so generated traces serve as oracles for the analysis side.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
import struct
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from scadascope.ingest import ICMP, OTHER, TCP, UDP, PacketRecord

log = logging.getLogger(__name__)

MIN_FRAME_BYTES = 54  # ethernet + IPv4 + TCP headers
ACK_BYTES = 66

PERIPHERAL_KINDS = ("ntp", "heartbeat", "backup", "x11", "netbios")
_PERIPH_SERVER_PORT = {"ntp": 123, "heartbeat": 5666, "backup": 873, "x11": 6000, "netbios": 137}
_PERIPH_PROTO = {"ntp": UDP, "netbios": UDP, "heartbeat": TCP, "backup": TCP, "x11": TCP}
_TWO_WAY_KINDS = {"ntp", "x11"}

# Master-to-HMI feed: a steady drip of frames, each its own segment, with
# sizes varying per frame the way payload-sized forwarding does.  The volume
# dominates any other master peer while no single 5-tuple looks periodic.
HMI_FEED_PORT = 8055
HMI_FEED_INTERVAL = 1.3
HMI_FEED_FRAMES = (1514, 1106, 646, 206)

_NOISE_OFFSETS = (0.0, 1.0, 3.0, 7.0, 15.0, 31.0)  # backoff-style retry pattern

# Schedules are clamped so two firings of one source are never closer than
# this; at the default 1 s segmentation threshold adjacent firings therefore
# always land in distinct segments.
MIN_INTERVAL = 1.1

_IP_PROTO_NUM = {TCP: 6, UDP: 17, ICMP: 1, OTHER: 253}


class ScenarioError(ValueError):
    """The scenario configuration is impossible or inconsistent."""


@dataclass
class ScadaGroup:
    port: int
    num_field_devices: int
    poll_mean: float
    poll_jitter_stddev: float
    object_sizes: list[int]
    response: bool = True


@dataclass
class MasterConfig:
    ephemeral_port_range: tuple[int, int] = (49152, 65535)
    reconnect_rate: float = 0.0  # expected reconnects per conversation per day


@dataclass
class PeripheralSpec:
    kind: str
    period: float
    size: int
    hosts: tuple[str, str] | None = None  # explicit (src, dst) override


@dataclass
class NoiseConfig:
    nonresponder_retry: bool = False


@dataclass
class ReportingSpec:
    """A workstation that speaks on the SCADA port without being a field device.

    It reports on the SCADA port to ``consumers`` peers and, if
    ``noise_period`` is set, emits unrelated chatter that dilutes its
    SCADA share below the classification threshold.
    """

    scada_period: float
    noise_period: float | None = None
    consumers: int = 1
    report_size: int = 150
    noise_size: int = 120
    port: int | None = None  # defaults to the first group's port


@dataclass
class ScenarioConfig:
    duration: float
    seed: int
    scada_groups: list[ScadaGroup] = field(default_factory=list)
    master: MasterConfig = field(default_factory=MasterConfig)
    layers: int = 2
    peripherals: list[PeripheralSpec] = field(default_factory=list)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    reporting: list[ReportingSpec] = field(default_factory=list)

    def validate(self) -> None:
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.layers not in (2, 3):
            raise ScenarioError(f"layers must be 2 or 3, got {self.layers}")
        if self.layers == 3 and not self.scada_groups:
            raise ScenarioError("a three-layer scenario needs at least one SCADA group")
        lo, hi = self.master.ephemeral_port_range
        if not (1024 <= lo < hi <= 65535):
            raise ScenarioError(f"bad ephemeral port range ({lo}, {hi})")
        if self.master.reconnect_rate < 0:
            raise ScenarioError("reconnect_rate must be >= 0")
        seen_ports: set[int] = set()
        for g, group in enumerate(self.scada_groups):
            where = f"scada_groups[{g}]"
            if not 1 <= group.port <= 65535:
                raise ScenarioError(f"{where}: port out of range")
            if lo <= group.port <= hi:
                raise ScenarioError(f"{where}: port {group.port} inside the ephemeral range")
            if group.port in seen_ports:
                raise ScenarioError(f"{where}: duplicate SCADA port {group.port}")
            seen_ports.add(group.port)
            if not 0 <= group.num_field_devices <= 253:
                raise ScenarioError(f"{where}: num_field_devices must be 0..253")
            if group.poll_mean <= 1.0:
                raise ScenarioError(f"{where}: poll_mean must exceed one second")
            if not 0 <= group.poll_jitter_stddev < group.poll_mean:
                raise ScenarioError(f"{where}: jitter stddev must be below the poll mean")
            if not group.object_sizes:
                raise ScenarioError(f"{where}: object_sizes must not be empty")
            floor = MIN_FRAME_BYTES + (ACK_BYTES if group.response else 0)
            for size in group.object_sizes:
                if size < floor:
                    raise ScenarioError(f"{where}: object size {size} below the {floor}-byte floor")
        feed_rate = sum(HMI_FEED_FRAMES) / len(HMI_FEED_FRAMES) / HMI_FEED_INTERVAL
        for k, spec in enumerate(self.peripherals):
            where = f"peripherals[{k}]"
            if spec.kind not in PERIPHERAL_KINDS:
                raise ScenarioError(f"{where}: unknown kind {spec.kind!r}")
            if spec.period <= 0:
                raise ScenarioError(f"{where}: period must be positive")
            sizes = _peripheral_packet_sizes(spec)
            if min(sizes) < MIN_FRAME_BYTES:
                raise ScenarioError(
                    f"{where}: a {min(sizes)}-byte packet falls below the {MIN_FRAME_BYTES}-byte floor"
                )
            if self.layers == 3 and spec.kind == "backup":
                avg_rate = sum(sizes) / len(sizes) / spec.period
                if avg_rate > 0.5 * feed_rate:
                    raise ScenarioError(
                        f"{where}: backup volume would rival the HMI feed; lower size/period"
                    )
        for r, spec in enumerate(self.reporting):
            where = f"reporting[{r}]"
            if not self.scada_groups and spec.port is None:
                raise ScenarioError(f"{where}: no SCADA group to borrow a port from")
            if spec.consumers < 1:
                raise ScenarioError(f"{where}: consumers must be >= 1")
            if spec.scada_period <= MIN_INTERVAL or (
                spec.noise_period is not None and spec.noise_period <= MIN_INTERVAL
            ):
                raise ScenarioError(f"{where}: periods must exceed {MIN_INTERVAL}s")
            if spec.report_size < MIN_FRAME_BYTES or spec.noise_size < MIN_FRAME_BYTES:
                raise ScenarioError(f"{where}: sizes below the {MIN_FRAME_BYTES}-byte floor")


def _peripheral_packet_sizes(spec: PeripheralSpec) -> tuple[int, ...]:
    if spec.kind in _TWO_WAY_KINDS:
        request = spec.size // 2 if spec.kind == "ntp" else 2 * spec.size // 3
        return (request, spec.size - request)
    if spec.kind == "backup":
        return _drip_palette(spec.size)
    return (spec.size,)


def _drip_palette(size: int) -> tuple[int, ...]:
    """Per-frame sizes for bulk drips; varied like payload-sized transfers."""
    palette = [size, 3 * size // 4, size // 2, size // 4]
    kept = tuple(s for s in palette if s >= MIN_FRAME_BYTES)
    return kept if kept else (size,)


@dataclass
class GroundTruth:
    """Role labels for every address a scenario emits."""

    labels: dict[str, dict] = field(default_factory=dict)

    def add(self, ip: str, role: str, protocol: int | None = None) -> None:
        self.labels[ip] = {"role": role, "protocol": protocol}

    def role_map(self) -> dict[str, str]:
        return {ip: entry["role"] for ip, entry in self.labels.items()}

    def devices_with_role(self, *roles: str) -> set[str]:
        return {ip for ip, entry in self.labels.items() if entry["role"] in roles}

    def to_dict(self) -> dict:
        return {ip: dict(self.labels[ip]) for ip in sorted(self.labels)}


@dataclass
class _Layout:
    """Deterministic address plan for one scenario."""

    master_ip: str | None
    hmi_ip: str | None
    fd_ips: list[list[str]]
    peripheral_hosts: list[tuple[str, str]]
    reporting_ips: list[str]
    consumer_ips: list[list[str]]
    noise_peer_ips: list[str]
    retrier_ip: str | None
    dead_ip: str | None


def _plan_layout(config: ScenarioConfig) -> _Layout:
    master_ip = "10.0.0.1" if config.scada_groups else None
    hmi_ip = "10.0.0.2" if config.layers == 3 else None
    fd_ips = [
        [f"10.0.{10 + g}.{1 + i}" for i in range(group.num_field_devices)]
        for g, group in enumerate(config.scada_groups)
    ]
    peripheral_hosts: list[tuple[str, str]] = []
    auto = 1
    for spec in config.peripherals:
        if spec.hosts is not None:
            peripheral_hosts.append((spec.hosts[0], spec.hosts[1]))
        elif config.layers == 3 and spec.kind == "backup" and master_ip is not None:
            peripheral_hosts.append((master_ip, f"10.0.200.{auto}"))
            auto += 1
        else:
            peripheral_hosts.append((f"10.0.200.{auto}", f"10.0.200.{auto + 1}"))
            auto += 2
    reporting_ips = [f"10.0.240.{1 + i}" for i in range(len(config.reporting))]
    consumer_ips = []
    consumer_auto = 1
    for spec in config.reporting:
        consumer_ips.append([f"10.0.241.{consumer_auto + j}" for j in range(spec.consumers)])
        consumer_auto += spec.consumers
    noise_peer_ips = [f"10.0.242.{1 + i}" for i in range(len(config.reporting))]
    retrier_ip = "10.0.250.1" if config.noise.nonresponder_retry else None
    dead_ip = "10.0.250.2" if config.noise.nonresponder_retry else None
    return _Layout(
        master_ip=master_ip,
        hmi_ip=hmi_ip,
        fd_ips=fd_ips,
        peripheral_hosts=peripheral_hosts,
        reporting_ips=reporting_ips,
        consumer_ips=consumer_ips,
        noise_peer_ips=noise_peer_ips,
        retrier_ip=retrier_ip,
        dead_ip=dead_ip,
    )


def ground_truth(config: ScenarioConfig) -> GroundTruth:
    layout = _plan_layout(config)
    truth = GroundTruth()
    if layout.master_ip is not None:
        truth.add(layout.master_ip, "master")
    if layout.hmi_ip is not None:
        truth.add(layout.hmi_ip, "hmi")
    for g, group in enumerate(config.scada_groups):
        for ip in layout.fd_ips[g]:
            truth.add(ip, "field_device", group.port)
    for src, dst in layout.peripheral_hosts:
        for ip in (src, dst):
            if ip not in truth.labels:
                truth.add(ip, "peripheral")
    for i, spec in enumerate(config.reporting):
        truth.add(layout.reporting_ips[i], "peripheral")
        for ip in layout.consumer_ips[i]:
            truth.add(ip, "peripheral")
        if spec.noise_period is not None:
            truth.add(layout.noise_peer_ips[i], "peripheral")
    if layout.retrier_ip is not None:
        truth.add(layout.retrier_ip, "peripheral")
        truth.add(layout.dead_ip, "peripheral")
    return truth


def generate(config: ScenarioConfig) -> tuple[Iterator[PacketRecord], GroundTruth]:
    """Build the packet stream and its labels; fully determined by the seed."""
    config.validate()
    return _packet_stream(config), ground_truth(config)


def _ts(t_us: int) -> float:
    # Compose seconds the same way the pcap reader does, so timestamps
    # survive a write/read round trip bit for bit.
    return (t_us // 1_000_000) + (t_us % 1_000_000) / 1e6


def _packet_stream(config: ScenarioConfig) -> Iterator[PacketRecord]:
    rng = random.Random(config.seed)
    layout = _plan_layout(config)
    duration_us = round(config.duration * 1e6)

    heap: list[tuple[int, int, object]] = []
    seq = 0

    def push(t_us: int, item: object) -> None:
        nonlocal seq
        if t_us <= duration_us:
            heapq.heappush(heap, (t_us, seq, item))
            seq += 1

    def push_pkt(t_us: int, src_ip: str, sport: int, dst_ip: str, dport: int, proto: str, size: int) -> None:
        push(t_us, (src_ip, sport, dst_ip, dport, proto, size))

    def interval_us(mean: float, sigma: float) -> int:
        return round(max(MIN_INTERVAL, rng.gauss(mean, sigma)) * 1e6)

    eph_lo, eph_hi = config.master.ephemeral_port_range
    next_eph = eph_lo

    def alloc_eph() -> int:
        nonlocal next_eph
        if next_eph > eph_hi:
            raise ScenarioError("master ephemeral port range exhausted")
        port = next_eph
        next_eph += 1
        return port

    master_ip = layout.master_ip
    conv_eph: dict[tuple[int, int], int] = {}

    def fd_source(group: ScadaGroup, conv: tuple[int, int], fd_ip: str) -> Callable[[int], None]:
        sizes = group.object_sizes
        state = {"tick": conv[1]}  # offset the size cycle per device

        def tick(t_us: int) -> None:
            size = sizes[state["tick"] % len(sizes)]
            state["tick"] += 1
            eph = conv_eph[conv]
            if group.response:
                push_pkt(t_us, fd_ip, group.port, master_ip, eph, TCP, size - ACK_BYTES)
                delay = rng.randint(2000, 20000)
                push_pkt(t_us + delay, master_ip, eph, fd_ip, group.port, TCP, ACK_BYTES)
            else:
                push_pkt(t_us, fd_ip, group.port, master_ip, eph, TCP, size)
            push(t_us + interval_us(group.poll_mean, group.poll_jitter_stddev), tick)

        return tick

    def reconnect_source(conv: tuple[int, int], mean_interval_s: float) -> Callable[[int], None]:
        def tick(t_us: int) -> None:
            conv_eph[conv] = alloc_eph()
            push(t_us + round(rng.expovariate(1.0) * mean_interval_s * 1e6), tick)

        return tick

    for g, group in enumerate(config.scada_groups):
        for i, fd_ip in enumerate(layout.fd_ips[g]):
            conv = (g, i)
            conv_eph[conv] = alloc_eph()
            first = round(rng.uniform(0.0, group.poll_mean) * 1e6)
            push(first, fd_source(group, conv, fd_ip))
            if config.master.reconnect_rate > 0:
                mean_s = 86400.0 / config.master.reconnect_rate
                push(round(rng.expovariate(1.0) * mean_s * 1e6), reconnect_source(conv, mean_s))

    def peripheral_source(spec: PeripheralSpec, idx: int, src: str, dst: str) -> Callable[[int], None]:
        server_port = _PERIPH_SERVER_PORT[spec.kind]
        proto = _PERIPH_PROTO[spec.kind]
        if spec.kind in ("ntp", "netbios"):
            client_port = server_port  # symmetric service
        elif spec.kind == "backup" and src == master_ip:
            client_port = alloc_eph()
        else:
            client_port = 40000 + idx
        sizes = _peripheral_packet_sizes(spec)
        # cron-style services carry scheduler jitter with an absolute floor;
        # session chatter (x11) is far more irregular than a scheduler
        sigma = 0.3 * spec.period if spec.kind == "x11" else max(0.1, 0.01 * spec.period)
        is_drip = spec.kind == "backup"
        two_way = spec.kind in _TWO_WAY_KINDS

        def tick(t_us: int) -> None:
            size = rng.choice(sizes) if is_drip else sizes[0]
            push_pkt(t_us, src, client_port, dst, server_port, proto, size)
            if two_way:
                push_pkt(t_us + rng.randint(2000, 20000), dst, server_port, src, client_port, proto, sizes[1])
            push(t_us + interval_us(spec.period, sigma), tick)

        return tick

    for idx, spec in enumerate(config.peripherals):
        src, dst = layout.peripheral_hosts[idx]
        first = round(rng.uniform(0.05, max(0.1, spec.period)) * 1e6)
        push(first, peripheral_source(spec, idx, src, dst))

    if config.layers == 3 and master_ip is not None:
        feed_port = alloc_eph()
        hmi_ip = layout.hmi_ip

        def hmi_feed(t_us: int) -> None:
            push_pkt(t_us, master_ip, feed_port, hmi_ip, HMI_FEED_PORT, TCP, rng.choice(HMI_FEED_FRAMES))
            push(t_us + interval_us(HMI_FEED_INTERVAL, 0.05), hmi_feed)

        push(round(rng.uniform(0.1, 1.0) * 1e6), hmi_feed)

    if config.noise.nonresponder_retry:
        retrier, dead = layout.retrier_ip, layout.dead_ip
        noise_state = {"cycle": 0}

        def retry_cycle(t_us: int) -> None:
            sport = 45001 + (noise_state["cycle"] % 8000)
            noise_state["cycle"] += 1
            for i, offset in enumerate(_NOISE_OFFSETS):
                jitter = rng.uniform(-0.05, 0.05) if i else 0.0
                push_pkt(t_us + round((offset + jitter) * 1e6), retrier, sport, dead, 9999, TCP, 66)
            push(t_us + round((63.0 + rng.uniform(-1.0, 1.0)) * 1e6), retry_cycle)

        push(round(rng.uniform(0.1, 5.0) * 1e6), retry_cycle)

    for r, spec in enumerate(config.reporting):
        r_ip = layout.reporting_ips[r]
        consumers = layout.consumer_ips[r]
        port = spec.port if spec.port is not None else config.scada_groups[0].port
        state = {"tick": 0}

        def report_tick(t_us: int, r_ip=r_ip, consumers=consumers, port=port, spec=spec, state=state) -> None:
            j = state["tick"] % len(consumers)
            state["tick"] += 1
            push_pkt(t_us, r_ip, port, consumers[j], 36000 + j, TCP, spec.report_size)
            push(t_us + interval_us(spec.scada_period, max(0.1, 0.02 * spec.scada_period)), report_tick)

        push(round(rng.uniform(0.1, spec.scada_period) * 1e6), report_tick)
        if spec.noise_period is not None:
            peer = layout.noise_peer_ips[r]

            def noise_tick(t_us: int, r_ip=r_ip, peer=peer, spec=spec) -> None:
                push_pkt(t_us, r_ip, 52000 + r, peer, 7070, TCP, spec.noise_size)
                push(t_us + interval_us(spec.noise_period, max(0.1, 0.02 * spec.noise_period)), noise_tick)

            push(round(rng.uniform(0.1, spec.noise_period) * 1e6), noise_tick)

    while heap:
        t_us, _, item = heapq.heappop(heap)
        if callable(item):
            item(t_us)
        else:
            src_ip, sport, dst_ip, dport, proto, size = item
            yield PacketRecord(
                _ts(t_us), sys.intern(src_ip), sport, sys.intern(dst_ip), dport, proto, size
            )


def write_records(records: Iterable[PacketRecord], path: str) -> int:
    """Write the canonical JSON-lines format; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fp:
        for rec in records:
            fp.write(rec.to_json())
            fp.write("\n")
            count += 1
    return count


def _mac_for(ip: str) -> bytes:
    octets = [int(part) & 0xFF for part in ip.split(".")[:4]]
    while len(octets) < 4:
        octets.append(0)
    return bytes([0x02, 0x00, *octets])


def _ip_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) | header[i + 1]
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def write_pcap(records: Iterable[PacketRecord], path: str) -> int:
    """Write a classic little-endian pcap whose captured lengths equal record sizes.

    Frames are synthetic Ethernet/IPv4/TCP-or-UDP-or-ICMP with zero padding;
    payload content is meaningless by design.  Records smaller than the
    54-byte header floor are rejected.
    """
    count = 0
    ip_id = 0
    with open(path, "wb") as fp:
        fp.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1))
        for rec in records:
            if rec.size < MIN_FRAME_BYTES:
                raise ValueError(
                    f"record of {rec.size} bytes cannot be framed (floor {MIN_FRAME_BYTES})"
                )
            sec = int(rec.ts)
            usec = round((rec.ts - sec) * 1e6)
            if usec == 1_000_000:
                sec += 1
                usec = 0
            frame = _build_frame(rec, ip_id)
            ip_id = (ip_id + 1) & 0xFFFF
            fp.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
            fp.write(frame)
            count += 1
    return count


def _build_frame(rec: PacketRecord, ip_id: int) -> bytes:
    eth = _mac_for(rec.dst_ip) + _mac_for(rec.src_ip) + b"\x08\x00"
    proto_num = _IP_PROTO_NUM[rec.proto]
    total_len = rec.size - 14
    src = bytes(int(p) for p in rec.src_ip.split("."))
    dst = bytes(int(p) for p in rec.dst_ip.split("."))
    ip_hdr = struct.pack(
        ">BBHHHBBH4s4s", 0x45, 0, total_len, ip_id, 0x4000, 64, proto_num, 0, src, dst
    )
    ip_hdr = ip_hdr[:10] + struct.pack(">H", _ip_checksum(ip_hdr)) + ip_hdr[12:]
    if rec.proto == TCP:
        l4 = struct.pack(
            ">HHIIBBHHH", rec.src_port, rec.dst_port, 0, 0, 5 << 4, 0x18, 8192, 0, 0
        )
    elif rec.proto == UDP:
        udp_len = total_len - 20
        l4 = struct.pack(">HHHH", rec.src_port, rec.dst_port, udp_len, 0)
    elif rec.proto == ICMP:
        l4 = struct.pack(">BBHHH", 8, 0, 0, 0, 0)
    else:
        l4 = b""
    padding = rec.size - 14 - 20 - len(l4)
    return eth + ip_hdr + l4 + b"\x00" * padding


_SCENARIO_KEYS = {
    "duration",
    "seed",
    "scada_groups",
    "master",
    "layers",
    "peripherals",
    "noise",
    "reporting",
}


def scenario_from_dict(obj: dict) -> ScenarioConfig:
    """Parse a scenario file object, rejecting unknown keys."""
    unknown = set(obj) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    try:
        groups = [
            ScadaGroup(
                port=int(g["port"]),
                num_field_devices=int(g["num_field_devices"]),
                poll_mean=float(g["poll_mean"]),
                poll_jitter_stddev=float(g["poll_jitter_stddev"]),
                object_sizes=[int(s) for s in g["object_sizes"]],
                response=bool(g.get("response", True)),
            )
            for g in obj.get("scada_groups", [])
        ]
        master_obj = obj.get("master", {})
        master = MasterConfig(
            ephemeral_port_range=tuple(master_obj.get("ephemeral_port_range", (49152, 65535))),
            reconnect_rate=float(master_obj.get("reconnect_rate", 0.0)),
        )
        peripherals = [
            PeripheralSpec(
                kind=p["kind"],
                period=float(p["period"]),
                size=int(p["size"]),
                hosts=tuple(p["hosts"]) if p.get("hosts") else None,
            )
            for p in obj.get("peripherals", [])
        ]
        reporting = [
            ReportingSpec(
                scada_period=float(r["scada_period"]),
                noise_period=float(r["noise_period"]) if r.get("noise_period") else None,
                consumers=int(r.get("consumers", 1)),
                report_size=int(r.get("report_size", 150)),
                noise_size=int(r.get("noise_size", 120)),
                port=int(r["port"]) if r.get("port") else None,
            )
            for r in obj.get("reporting", [])
        ]
        config = ScenarioConfig(
            duration=float(obj["duration"]),
            seed=int(obj["seed"]),
            scada_groups=groups,
            master=master,
            layers=int(obj.get("layers", 2)),
            peripherals=peripherals,
            noise=NoiseConfig(nonresponder_retry=bool(obj.get("noise", {}).get("nonresponder_retry", False))),
            reporting=reporting,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    config.validate()
    return config


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "duration": config.duration,
        "seed": config.seed,
        "scada_groups": [
            {
                "port": g.port,
                "num_field_devices": g.num_field_devices,
                "poll_mean": g.poll_mean,
                "poll_jitter_stddev": g.poll_jitter_stddev,
                "object_sizes": list(g.object_sizes),
                "response": g.response,
            }
            for g in config.scada_groups
        ],
        "master": {
            "ephemeral_port_range": list(config.master.ephemeral_port_range),
            "reconnect_rate": config.master.reconnect_rate,
        },
        "layers": config.layers,
        "peripherals": [
            {
                "kind": p.kind,
                "period": p.period,
                "size": p.size,
                **({"hosts": list(p.hosts)} if p.hosts else {}),
            }
            for p in config.peripherals
        ],
        "noise": {"nonresponder_retry": config.noise.nonresponder_retry},
        "reporting": [
            {
                "scada_period": r.scada_period,
                "noise_period": r.noise_period,
                "consumers": r.consumers,
                "report_size": r.report_size,
                "noise_size": r.noise_size,
                **({"port": r.port} if r.port else {}),
            }
            for r in config.reporting
        ],
    }


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fp:
        return scenario_from_dict(json.load(fp))

"""Communication segmentation and 5-tuple aggregation.

A conversation (unordered endpoint pair) is cut into segments wherever the
gap to the previous packet reaches the ``t_comm`` threshold.  Segments are
then bucketed by the 5-tuple (initiator ip/port, responder ip/port, segment
size), which is the unit everything downstream ranks and classifies.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from scadascope.ingest import PacketRecord

log = logging.getLogger(__name__)

DEFAULT_T_COMM = 1.0

Endpoint = tuple[str, int]
ConversationKey = tuple[Endpoint, Endpoint]


def conversation_key(rec: PacketRecord) -> ConversationKey:
    """Direction-free key: lexicographically smaller endpoint first."""
    a = (rec.src_ip, rec.src_port)
    b = (rec.dst_ip, rec.dst_port)
    return (a, b) if a <= b else (b, a)


@dataclass(slots=True)
class CommunicationSegment:
    """A gap-delimited run of packets on one conversation."""

    key: ConversationKey
    start_ts: float
    end_ts: float
    seg_size: int
    packet_count: int
    initiator: Endpoint

    @property
    def responder(self) -> Endpoint:
        a, b = self.key
        return b if self.initiator == a else a

    def to_json(self) -> str:
        (a_ip, a_port), (b_ip, b_port) = self.key
        return json.dumps(
            {
                "key": f"{a_ip}:{a_port}|{b_ip}:{b_port}",
                "start": self.start_ts,
                "end": self.end_ts,
                "size": self.seg_size,
                "initiator": f"{self.initiator[0]}:{self.initiator[1]}",
                "packets": self.packet_count,
            },
            separators=(",", ":"),
        )


@dataclass(frozen=True, slots=True)
class FtKey:
    """5-tuple identifying one ranked communication type.

    Direction follows the segment initiator; the size is part of the key, so
    one conversation producing two segment sizes yields two entries.
    """

    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    seg_size: int

    def as_tuple(self) -> tuple[str, int, str, int, int]:
        return (self.src_ip, self.src_port, self.dst_ip, self.dst_port, self.seg_size)

    def __str__(self) -> str:
        return f"{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}/{self.seg_size}B"


@dataclass(slots=True)
class FtStats:
    """Per-5-tuple aggregate: occurrence count and inter-arrival times."""

    key: FtKey
    start_times: list[float] = field(default_factory=list)
    _iat: list[float] | None = None

    @property
    def n(self) -> int:
        return len(self.start_times)

    @property
    def iat(self) -> list[float]:
        """Start-to-start gaps between consecutive segments, in seconds."""
        if self._iat is None or len(self._iat) != len(self.start_times) - 1:
            t = self.start_times
            self._iat = [t[i + 1] - t[i] for i in range(len(t) - 1)]
        return self._iat


def segment_stream(
    records: Iterable[PacketRecord], t_comm: float = DEFAULT_T_COMM
) -> Iterator[CommunicationSegment]:
    """Split a time-ordered packet stream into communication segments.

    A gap >= t_comm to the previous packet on the same conversation closes
    the open segment; every packet lands in exactly one segment.  Open
    segments are flushed at end of stream in first-seen conversation order.
    """
    if t_comm <= 0:
        raise ValueError(f"t_comm must be positive, got {t_comm}")
    open_segs: dict[ConversationKey, CommunicationSegment] = {}
    for rec in records:
        key = conversation_key(rec)
        seg = open_segs.get(key)
        if seg is not None and rec.ts - seg.end_ts < t_comm:
            seg.end_ts = rec.ts
            seg.seg_size += rec.size
            seg.packet_count += 1
            continue
        if seg is not None:
            yield seg
        open_segs[key] = CommunicationSegment(
            key=key,
            start_ts=rec.ts,
            end_ts=rec.ts,
            seg_size=rec.size,
            packet_count=1,
            initiator=(rec.src_ip, rec.src_port),
        )
    yield from open_segs.values()


def ft_of_segment(seg: CommunicationSegment) -> FtKey:
    src = seg.initiator
    dst = seg.responder
    return FtKey(src[0], src[1], dst[0], dst[1], seg.seg_size)


def aggregate_ft(segments: Iterable[CommunicationSegment]) -> dict[FtKey, FtStats]:
    """Bucket segments by 5-tuple, recording start times in arrival order."""
    table: dict[FtKey, FtStats] = {}
    for seg in segments:
        key = ft_of_segment(seg)
        stats = table.get(key)
        if stats is None:
            stats = table[key] = FtStats(key)
        stats.start_times.append(seg.start_ts)
    return table


def merge_ft_maps(maps: Iterable[dict[FtKey, FtStats]]) -> dict[FtKey, FtStats]:
    """Disjoint union of shard-local tables (one 5-tuple never spans shards)."""
    merged: dict[FtKey, FtStats] = {}
    for table in maps:
        for key, stats in table.items():
            if key in merged:
                raise ValueError(f"5-tuple {key} appeared in more than one shard")
            merged[key] = stats
    return merged


def _shard_of(key: ConversationKey, shards: int) -> int:
    (a_ip, a_port), (b_ip, b_port) = key
    raw = f"{a_ip}:{a_port}|{b_ip}:{b_port}".encode()
    return zlib.crc32(raw) % shards


def aggregate_records(
    records: Iterable[PacketRecord],
    t_comm: float = DEFAULT_T_COMM,
    shards: int = 1,
) -> dict[FtKey, FtStats]:
    """Segment and aggregate a record stream, optionally sharded by conversation.

    Sharding partitions conversations, so the result is identical for any
    shard count; it exists so large traces can be fanned out.
    """
    if shards <= 1:
        return aggregate_ft(segment_stream(records, t_comm))
    buckets: list[list[PacketRecord]] = [[] for _ in range(shards)]
    for rec in records:
        buckets[_shard_of(conversation_key(rec), shards)].append(rec)
    return merge_ft_maps(
        aggregate_ft(segment_stream(bucket, t_comm)) for bucket in buckets
    )


def total_segments(ft_map: dict[FtKey, FtStats]) -> int:
    return sum(stats.n for stats in ft_map.values())

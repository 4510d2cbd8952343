"""Segmentation tests: gap splitting, 5-tuple aggregation, shard merging."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from scadascope.ingest import PacketRecord
from scadascope.segmentation import (
    FtKey,
    aggregate_ft,
    aggregate_records,
    conversation_key,
    ft_of_segment,
    merge_ft_maps,
    segment_stream,
    total_segments,
)
from scadascope.synth import MasterConfig, ScadaGroup, ScenarioConfig, generate

from reference import ref_ft_table, ref_iat, ref_segments
from scenarios import dataset1_like, small_random_scenario


def pkt(ts, src="10.0.0.1", sport=20000, dst="10.0.0.9", dport=50000, size=100):
    return PacketRecord(ts, src, sport, dst, dport, "tcp", size)


def as_tuple(seg):
    return (seg.key, seg.start_ts, seg.end_ts, seg.seg_size, seg.packet_count, seg.initiator)


def test_gap_split_example():
    packets = [pkt(t) for t in (0.0, 0.2, 0.5, 2.0, 2.1)]
    segs = list(segment_stream(packets, t_comm=1.0))
    assert len(segs) == 2
    first, second = sorted(segs, key=lambda s: s.start_ts)
    assert (first.start_ts, first.end_ts, first.packet_count) == (0.0, 0.5, 3)
    assert (second.start_ts, second.end_ts, second.packet_count) == (2.0, 2.1, 2)
    assert first.seg_size == 300 and second.seg_size == 200


def test_single_packet_segment():
    segs = list(segment_stream([pkt(3.0, size=74)], t_comm=1.0))
    assert len(segs) == 1
    assert segs[0].seg_size == 74
    assert segs[0].initiator == ("10.0.0.1", 20000)


def test_gap_exactly_t_comm_splits():
    segs = list(segment_stream([pkt(0.0), pkt(1.0)], t_comm=1.0))
    assert len(segs) == 2


def test_gap_just_under_t_comm_merges():
    segs = list(segment_stream([pkt(0.0), pkt(0.999999)], t_comm=1.0))
    assert len(segs) == 1


def test_bidirectional_packets_share_segment():
    packets = [
        pkt(0.0, src="10.0.0.5", sport=20000, dst="10.0.0.9", dport=50000, size=274),
        pkt(0.01, src="10.0.0.9", sport=50000, dst="10.0.0.5", dport=20000, size=66),
    ]
    segs = list(segment_stream(packets, t_comm=1.0))
    assert len(segs) == 1
    assert segs[0].seg_size == 340
    assert segs[0].initiator == ("10.0.0.5", 20000)
    assert ft_of_segment(segs[0]) == FtKey("10.0.0.5", 20000, "10.0.0.9", 50000, 340)


def test_t_comm_must_be_positive():
    with pytest.raises(ValueError):
        list(segment_stream([pkt(0.0)], t_comm=0.0))


def test_oracle_equivalence_on_synth_trace():
    config = dataset1_like(duration=900.0, seed=11, fds=8)
    records = list(generate(config)[0])
    assert len(records) > 400
    got = sorted(map(as_tuple, segment_stream(records, 1.0)))
    want = sorted(
        (s["key"], s["start"], s["end"], s["size"], s["packets"], s["initiator"])
        for s in ref_segments(records, 1.0)
    )
    assert got == want


def test_reconstruction_counts_and_gap_bounds():
    config = dataset1_like(duration=600.0, seed=12, fds=6)
    records = list(generate(config)[0])
    segs = list(segment_stream(records, 1.0))
    assert sum(s.packet_count for s in segs) == len(records)
    assert sum(s.seg_size for s in segs) == sum(r.size for r in records)
    # consecutive segments on one conversation start >= t_comm apart
    by_key = {}
    for seg in segs:
        by_key.setdefault(seg.key, []).append(seg)
    for group in by_key.values():
        group.sort(key=lambda s: s.start_ts)
        for a, b in zip(group, group[1:]):
            assert b.start_ts - a.end_ts >= 1.0


def test_doubling_t_comm_never_increases_segments():
    config = dataset1_like(duration=600.0, seed=13, fds=5)
    records = list(generate(config)[0])
    t = 0.25
    counts = []
    for _ in range(5):
        counts.append(sum(1 for _ in segment_stream(records, t)))
        t *= 2
    assert counts == sorted(counts, reverse=True)


def test_aggregate_same_key_same_size():
    packets = [pkt(0.0, size=340), pkt(10.0, size=340)]
    table = aggregate_ft(segment_stream(packets, 1.0))
    assert len(table) == 1
    stats = next(iter(table.values()))
    assert stats.n == 2
    assert stats.iat == [10.0]


def test_aggregate_distinct_sizes_make_distinct_entries():
    packets = [pkt(0.0, size=340), pkt(10.0, size=225)]
    table = aggregate_ft(segment_stream(packets, 1.0))
    sizes = sorted(key.seg_size for key in table)
    assert sizes == [225, 340]
    assert all(stats.n == 1 for stats in table.values())


def test_one_ft_entry_per_field_device():
    config = ScenarioConfig(
        duration=600.0,
        seed=21,
        scada_groups=[
            ScadaGroup(
                port=20000,
                num_field_devices=49,
                poll_mean=8.75,
                poll_jitter_stddev=1.0,
                object_sizes=[340],
            )
        ],
        master=MasterConfig(reconnect_rate=0.0),
    )
    records = list(generate(config)[0])
    table = aggregate_ft(segment_stream(records, 1.0))
    on_port = [key for key in table if key.src_port == 20000]
    assert len(on_port) == 49
    assert {key.src_ip for key in on_port} == {f"10.0.10.{i + 1}" for i in range(49)}


def test_iat_lower_bound_within_ft():
    config = dataset1_like(duration=900.0, seed=14, fds=4)
    records = list(generate(config)[0])
    table = aggregate_ft(segment_stream(records, 1.0))
    for stats in table.values():
        assert len(stats.iat) == stats.n - 1
        assert all(gap >= 1.0 for gap in stats.iat)


def test_total_segments_matches_stream():
    config = dataset1_like(duration=300.0, seed=15, fds=4)
    records = list(generate(config)[0])
    segs = list(segment_stream(records, 1.0))
    table = aggregate_ft(segs)
    assert total_segments(table) == len(segs)


def test_sharded_aggregation_identical():
    config = dataset1_like(duration=600.0, seed=16, fds=7)
    records = list(generate(config)[0])
    base = aggregate_records(iter(records), shards=1)
    for shards in (2, 3, 8):
        other = aggregate_records(iter(records), shards=shards)
        assert set(other) == set(base)
        assert all(other[k].start_times == base[k].start_times for k in base)


def test_merge_rejects_key_collision():
    key = FtKey("a", 1, "b", 2, 50)
    from scadascope.segmentation import FtStats

    with pytest.raises(ValueError):
        merge_ft_maps([{key: FtStats(key)}, {key: FtStats(key)}])


def test_random_scenarios_match_reference():
    meta = random.Random(2024)
    for _ in range(8):
        config = small_random_scenario(meta)
        records = list(generate(config)[0])
        got = sorted(map(as_tuple, segment_stream(records, 1.0)))
        want = sorted(
            (s["key"], s["start"], s["end"], s["size"], s["packets"], s["initiator"])
            for s in ref_segments(records, 1.0)
        )
        assert got == want
        table = aggregate_ft(segment_stream(records, 1.0))
        ref_table = ref_ft_table(ref_segments(records, 1.0))
        assert {k.as_tuple() for k in table} == set(ref_table)
        for key, stats in table.items():
            assert stats.start_times == ref_table[key.as_tuple()]
            assert stats.iat == ref_iat(ref_table[key.as_tuple()])


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0, max_value=50, allow_nan=False),
            st.integers(0, 3),
            st.integers(0, 3),
            st.integers(1, 500),
        ),
        min_size=1,
        max_size=80,
    )
)
def test_property_matches_reference(raw):
    ips = ["10.0.0.1", "10.0.0.2", "10.0.0.3", "10.0.0.4"]
    records = sorted(
        (
            PacketRecord(round(ts, 3), ips[a], 1000 + a, ips[b], 2000 + b, "tcp", size)
            for ts, a, b, size in raw
        ),
        key=lambda r: r.ts,
    )
    got = sorted(map(as_tuple, segment_stream(records, 1.0)))
    want = sorted(
        (s["key"], s["start"], s["end"], s["size"], s["packets"], s["initiator"])
        for s in ref_segments(records, 1.0)
    )
    assert got == want


def test_conversation_key_is_direction_free():
    a = pkt(0.0, src="10.0.0.5", sport=20000, dst="10.0.0.9", dport=50000)
    b = pkt(0.0, src="10.0.0.9", sport=50000, dst="10.0.0.5", dport=20000)
    assert conversation_key(a) == conversation_key(b)

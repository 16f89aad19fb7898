"""Flow engine tests: ingest counters, latency matching, window snapshots."""

import pytest

from frames import frame, packet
from ualab.codec import ChunkFlag, MessageKind
from ualab.flow import (
    FlowEngine,
    FlowTable,
    OutOfOrderTimestamp,
    WindowNotClosed,
    extract_flow_windows,
)


def run_engine(records, **kwargs):
    engine = FlowEngine(**kwargs)
    for r in records:
        engine.ingest(r)
    engine.finish()
    return engine


class TestOrientation:
    def test_server_port_pins_server_side(self):
        table = FlowTable({4840})
        key, fwd = table.orient(packet(0, forward=True))
        assert (key.server_ip, key.server_port) == ("10.0.0.1", 4840)
        assert fwd
        key2, fwd2 = table.orient(packet(1, forward=False))
        assert key2 == key and not fwd2

    def test_tie_broken_by_first_packet_destination(self):
        table = FlowTable({4840})
        rec = packet(0, client=("10.0.1.1", 50000), server=("10.0.2.2", 60000))
        key, fwd = table.orient(rec)
        assert (key.server_ip, key.server_port) == ("10.0.2.2", 60000)
        assert fwd


class TestIngest:
    def test_single_forward_packet_without_body(self):
        rec = packet(0, payload=b"", wire_size=120)
        stats = run_engine([rec]).snapshot_window(0)
        assert len(stats) == 1
        s = stats[0]
        assert s.t_pkt_count == 1
        assert s.t_fwd_pkt_count == 1
        assert s.t_bwd_pkt_count == 0
        assert s.t_pkt_size_sum == 120
        assert s.t_body_count == 0
        assert s.t_iat_count == 0
        assert s.t_active_flow_drt == 0.0

    def test_read_request_response_pair(self):
        req = packet(1_000_000, payload=frame(service_id=631, req=5))
        res = packet(1_004_000, payload=frame(service_id=634, req=5), forward=False)
        s = run_engine([req, res]).snapshot_window(0)[0]
        assert s.t_read_req == 1 and s.t_read_res == 1
        assert s.t_service_req_count == 1 and s.t_service_res_count == 1
        assert s.t_server_res_time_count == 1
        assert s.t_server_res_time_sum == pytest.approx(0.004)
        assert s.service_req_kinds == {"Read": 1}

    def test_opn_burst_counts_requests_and_channel_transitions(self):
        records = []
        ts = 0
        # 100 open-channel cycles: request on channel 0, response assigns k
        for k in range(100):
            records.append(
                packet(ts, payload=frame(kind=MessageKind.OPEN_SECURE_CHANNEL, channel=0, req=k + 1, service_id=446))
            )
            records.append(
                packet(
                    ts + 2000,
                    payload=frame(kind=MessageKind.OPEN_SECURE_CHANNEL, channel=k + 1, req=k + 1, service_id=449),
                    forward=False,
                )
            )
            ts += 10_000
        s = run_engine(records).snapshot_window(0)[0]
        assert s.t_open_sec_ch_req == 100
        assert s.t_open_sec_ch_res == 100
        # wire sequence 0,1,0,2,0,3,... every frame changes the channel id
        assert s.t_sec_ch_count == 200

    def test_stable_channel_counts_one_transition(self):
        records = [
            packet(i * 1000, payload=frame(channel=9, req=i + 1, service_id=631))
            for i in range(5)
        ]
        s = run_engine(records).snapshot_window(0)[0]
        assert s.t_sec_ch_count == 1  # first observation only

    def test_out_of_order_timestamp_rejected(self):
        engine = FlowEngine()
        engine.ingest(packet(5000))
        with pytest.raises(OutOfOrderTimestamp):
            engine.ingest(packet(4000))

    def test_iat_merged_over_both_directions(self):
        records = [
            packet(0, payload=b"a"),
            packet(10_000, payload=b"b", forward=False),
            packet(40_000, payload=b"c"),
        ]
        s = run_engine(records).snapshot_window(0)[0]
        assert s.t_iat_count == 2
        assert s.t_iat_sum == pytest.approx(0.04)

    def test_chunk_flood_inflates_totals_without_per_service_counts(self):
        records = [
            packet(0, payload=frame(chunk=ChunkFlag.INTERMEDIATE, service_id=673, req=1, body=b"\x00" * 100))
        ]
        records += [
            packet((i + 1) * 1000, payload=frame(chunk=ChunkFlag.INTERMEDIATE, service_id=None, req=1, body=b"\x00" * 100))
            for i in range(9)
        ]
        s = run_engine(records).snapshot_window(0)[0]
        assert s.t_service_req_count == 1
        assert s.t_write_req == 0
        assert s.t_body_count == 10
        assert s.service_req_kinds == {}

    def test_finalized_chunked_request_counts_service_at_completion(self):
        records = [
            packet(0, payload=frame(chunk=ChunkFlag.INTERMEDIATE, service_id=631, req=3, body=b"\x00" * 50)),
            packet(1000, payload=frame(chunk=ChunkFlag.INTERMEDIATE, service_id=None, req=3, body=b"\x00" * 50)),
            packet(2000, payload=frame(chunk=ChunkFlag.FINAL, service_id=None, req=3, body=b"\x00" * 20)),
        ]
        s = run_engine(records).snapshot_window(0)[0]
        assert s.t_service_req_count == 1
        assert s.t_read_req == 1
        assert s.service_req_kinds == {"Read": 1}


class TestMatchResponse:
    def test_latency_sample(self):
        req = packet(1_000_000, payload=frame(service_id=631, req=7))
        res = packet(1_050_000, payload=frame(service_id=634, req=7), forward=False)
        engine = run_engine([req, res])
        s = engine.snapshot_window(0)[0]
        assert s.t_server_res_time_sum == pytest.approx(0.050)
        assert engine.diagnostics.unmatched_responses == 0

    def test_unmatched_response_counts_in_diagnostics(self):
        res = packet(0, payload=frame(service_id=634, req=99), forward=False)
        engine = run_engine([res])
        s = engine.snapshot_window(0)[0]
        assert s.t_server_res_time_count == 0
        assert s.t_service_res_count == 1
        assert engine.diagnostics.unmatched_responses == 1

    def test_pending_expires_after_timeout(self):
        req = packet(0, payload=frame(service_id=826, req=1))
        res = packet(31_000_000, payload=frame(service_id=829, req=1), forward=False)
        engine = run_engine([req, res], pending_timeout_s=30.0)
        total_samples = sum(
            s.t_server_res_time_count
            for wid in range(engine.current_window)
            for s in engine.snapshot_window(wid)
        )
        assert total_samples == 0

    def test_flood_pending_set_matches_only_pairs(self):
        # publish flood: 50 requests, only 10 responded
        records = [packet(i * 1000, payload=frame(service_id=826, req=i)) for i in range(50)]
        records += [
            packet(100_000 + i * 1000, payload=frame(service_id=829, req=i), forward=False)
            for i in range(10)
        ]
        s = run_engine(records).snapshot_window(0)[0]
        assert s.t_publish_req == 50
        assert s.t_publish_res == 10
        assert s.t_server_res_time_count == 10


class TestWindows:
    def test_empty_window_snapshot(self):
        engine = run_engine([packet(0, payload=b"x"), packet(11_000_000, payload=b"y")])
        assert engine.snapshot_window(1) == []
        assert len(engine.snapshot_window(0)) == 1
        assert len(engine.snapshot_window(2)) == 1

    def test_snapshot_of_open_window_raises(self):
        engine = FlowEngine()
        engine.ingest(packet(0, payload=b"x"))
        with pytest.raises(WindowNotClosed):
            engine.snapshot_window(0)

    def test_two_flows_conserve_packet_total(self):
        a = [packet(i * 1000, payload=b"a", client=("10.0.1.1", 50001)) for i in range(10)]
        b = [packet(500 + i * 1000, payload=b"b", client=("10.0.1.2", 50002)) for i in range(30)]
        records = sorted(a + b, key=lambda r: r.ts_us)
        stats = run_engine(records).snapshot_window(0)
        assert len(stats) == 2
        assert sum(s.t_pkt_count for s in stats) == 40

    def test_flow_spanning_windows_appears_in_both(self):
        records = [
            packet(16_000_000, payload=b"a"),  # window 0 starts at first packet
            packet(17_000_000, payload=b"b"),
            packet(22_000_000, payload=b"c"),  # window 1
            packet(23_500_000, payload=b"d"),
        ]
        engine = run_engine(records)
        w0 = engine.snapshot_window(0)
        w1 = engine.snapshot_window(1)
        assert len(w0) == 1 and len(w1) == 1
        assert w0[0].t_active_flow_drt == pytest.approx(1.0)
        assert w1[0].t_active_flow_drt == pytest.approx(1.5)
        assert w0[0].t_iat_count == 1  # first packet of each window has no IAT
        assert w1[0].t_iat_count == 1

    def test_extract_flow_windows_fills_gap_windows(self):
        records = [packet(0, payload=b"x"), packet(26_000_000, payload=b"y")]
        windows, diags, origin = extract_flow_windows(records)
        assert sorted(windows) == [0, 1, 2, 3, 4, 5]
        assert windows[1] == windows[2] == []
        assert origin == 0


class TestDirectionReversal:
    def test_reversing_packets_swaps_fwd_bwd_exactly(self):
        records = [
            packet(0, payload=b"req1"),
            packet(2000, payload=b"res1", forward=False),
            packet(5000, payload=b"req2"),
        ]
        reversed_records = []
        for r in records:
            reversed_records.append(
                packet(
                    r.ts_us,
                    payload=r.payload,
                    forward=r.src_port == 4840,
                )
            )
        s = run_engine(records).snapshot_window(0)[0]
        rs = run_engine(reversed_records).snapshot_window(0)[0]
        assert (s.t_fwd_pkt_count, s.t_bwd_pkt_count) == (rs.t_bwd_pkt_count, rs.t_fwd_pkt_count)
        assert (s.t_fwd_pkt_size_sum, s.t_bwd_pkt_size_sum) == (
            rs.t_bwd_pkt_size_sum,
            rs.t_fwd_pkt_size_sum,
        )
        assert s.t_pkt_count == rs.t_pkt_count


class TestEviction:
    def test_idle_flow_evicted_between_windows(self):
        records = [
            packet(0, payload=frame(service_id=631, req=1)),
            # idle for 130 s, then other flow activity forces window closes
            packet(130_000_000, payload=b"x", client=("10.0.1.9", 50009)),
        ]
        engine = run_engine(records, evict_idle_s=120.0)
        assert engine.diagnostics.evicted_flows == 1


class TestRetransmitGate:
    def test_retransmitted_segment_counts_packet_but_not_frames(self):
        payload = frame(service_id=631, req=1)
        first = packet(0, payload=payload)
        first.tcp_seq = 1
        dup = packet(1000, payload=payload)
        dup.tcp_seq = 1  # same sequence: retransmission of the same bytes
        nxt = packet(2000, payload=frame(service_id=631, req=2))
        nxt.tcp_seq = 1 + len(payload)
        engine = run_engine([first, dup, nxt])
        s = engine.snapshot_window(0)[0]
        assert s.t_pkt_count == 3  # the duplicate is still a wire packet
        assert s.t_body_count == 2  # but decodes only once
        assert s.t_service_req_count == 2
        assert engine.diagnostics.dropped_segments == 1

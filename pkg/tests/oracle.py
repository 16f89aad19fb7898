"""Brute-force batch recomputation of flow/window statistics.

Independent check for the streaming engine: group all packets by flow and
window, then recompute every per-flow counter and every cross-flow feature
directly from their definitions in plain passes over the raw packets. Kept
deliberately naive; only the frame codec is shared with the code under
test (it has its own round-trip suite).
"""

import math
import struct
from collections import defaultdict

from ualab.codec import (
    ChunkFlag,
    Direction,
    MessageKind,
    NeedMoreData,
    classify_service,
    decode_message,
    encoded_body_length,
)

WINDOW_US = 5_000_000
PENDING_TIMEOUT_US = 30_000_000

SERVICE_STEMS = {
    "Read": "read",
    "Write": "write",
    "Publish": "publish",
    "OpenSecureChannel": "open_sec_ch",
    "CloseSecureChannel": "close_sec_ch",
    "CreateSession": "create_session",
    "ActivateSession": "activate_session",
    "CloseSession": "close_session",
    "CreateMonitoredItems": "create_mnt_itm",
    "CreateSubscription": "create_sub",
    "DeleteSubscriptions": "del_sub",
    "GetEndpoints": "endpoints",
}


def orient_all(records, server_ports=frozenset({4840})):
    """Replay the orientation rule; returns [(record, flow_id, forward)]."""
    orientation = {}
    out = []
    for r in records:
        src = (r.src_ip, r.src_port)
        dst = (r.dst_ip, r.dst_port)
        pair = frozenset((src, dst))
        if pair not in orientation:
            if src[1] in server_ports and dst[1] not in server_ports:
                orientation[pair] = (dst, src)
            else:
                orientation[pair] = (src, dst)
        client, server = orientation[pair]
        flow_id = f"{client[0]}:{client[1]}-{server[0]}:{server[1]}"
        out.append((r, flow_id, src == client))
    return out


def decode_per_packet(oriented):
    """Frames completed by each packet, via a local sequential decode loop.

    Returns {packet index: [(msg, first_chunk)]}. Chunk continuation is
    keyed by the request id in the fixed header, as on the wire.
    """
    buffers = defaultdict(bytearray)
    open_reqs = defaultdict(set)
    frames = defaultdict(list)
    for idx, (rec, flow_id, forward) in enumerate(oriented):
        if not rec.payload:
            continue
        slot = (flow_id, forward)
        buf = buffers[slot]
        buf.extend(rec.payload)
        while True:
            first = True
            if buf[0:3] == b"MSG" and len(buf) >= 24:
                req_id = struct.unpack_from("<I", buf, 20)[0]
                first = req_id not in open_reqs[slot]
            try:
                msg, used = decode_message(buf, 0, first_chunk=first)
            except NeedMoreData:
                break
            del buf[:used]
            frames[idx].append((msg, first))
            if msg.kind is MessageKind.MESSAGE:
                if msg.chunk is ChunkFlag.INTERMEDIATE:
                    open_reqs[slot].add(msg.request_id)
                else:
                    open_reqs[slot].discard(msg.request_id)
    return frames


def batch_flow_windows(records, server_ports=frozenset({4840}), window_us=WINDOW_US):
    """Recompute {window_id: {flow_id: counters dict}} from definitions."""
    records = list(records)
    if not records:
        return {}, None
    origin = records[0].ts_us
    oriented = orient_all(records, server_ports)
    frames = decode_per_packet(oriented)

    cells = defaultdict(dict)  # wid -> flow_id -> counters

    def cell(wid, flow_id):
        if flow_id not in cells[wid]:
            counters = defaultdict(float)
            counters["_kinds"] = {}
            cells[wid][flow_id] = counters
        return cells[wid][flow_id]

    # packet-level counters
    per_flow_window_ts = defaultdict(list)
    for rec, flow_id, forward in oriented:
        wid = (rec.ts_us - origin) // window_us
        c = cell(wid, flow_id)
        c["t_pkt_count"] += 1
        c["t_pkt_size_sum"] += rec.wire_size
        c["t_fwd_pkt_count" if forward else "t_bwd_pkt_count"] += 1
        c["t_fwd_pkt_size_sum" if forward else "t_bwd_pkt_size_sum"] += rec.wire_size
        per_flow_window_ts[(flow_id, wid)].append(rec.ts_us)

    # inter-arrival and active duration per flow-window from the merged
    # timestamp list (arrival order == timestamp order)
    for (flow_id, wid), ts_list in per_flow_window_ts.items():
        c = cell(wid, flow_id)
        c["t_iat_sum"] = sum((b - a) / 1e6 for a, b in zip(ts_list, ts_list[1:]))
        c["t_iat_count"] = max(len(ts_list) - 1, 0)
        c["t_active_flow_drt"] = (ts_list[-1] - ts_list[0]) / 1e6

    # frame-level counters, channel transitions, service counting and
    # latency matching, replayed in capture order per flow
    last_channel = {}
    pending = defaultdict(dict)  # flow_id -> request_id -> (ts, kind)
    in_progress = {}  # (flow_id, forward, request_id) -> (kind, sdir)
    for idx, (rec, flow_id, forward) in enumerate(oriented):
        if idx not in frames:
            continue
        wid = (rec.ts_us - origin) // window_us
        c = cell(wid, flow_id)
        for msg, first in frames[idx]:
            c["t_body_count"] += 1
            c["t_body_length_sum"] += encoded_body_length(msg)
            if msg.secure_channel_id is not None:
                if last_channel.get(flow_id) != msg.secure_channel_id:
                    c["t_sec_ch_count"] += 1
                    last_channel[flow_id] = msg.secure_channel_id
            if msg.kind in (MessageKind.HELLO, MessageKind.ACKNOWLEDGE, MessageKind.ERROR):
                continue
            if first and msg.service_id is not None:
                kind, sdir = classify_service(msg.service_id)
                if sdir is Direction.REQUEST:
                    c["t_service_req_count"] += 1
                    pending[flow_id][msg.request_id] = (rec.ts_us, kind)
                else:
                    c["t_service_res_count"] += 1
                    entry = pending[flow_id].pop(msg.request_id, None)
                    if entry is not None and rec.ts_us - entry[0] <= PENDING_TIMEOUT_US:
                        c["t_server_res_time_sum"] += (rec.ts_us - entry[0]) / 1e6
                        c["t_server_res_time_count"] += 1
                if msg.chunk is ChunkFlag.FINAL:
                    _complete(c, kind, sdir)
                elif msg.chunk is ChunkFlag.INTERMEDIATE:
                    in_progress[(flow_id, forward, msg.request_id)] = (kind, sdir)
            elif not first and msg.chunk is not ChunkFlag.INTERMEDIATE:
                prog = in_progress.pop((flow_id, forward, msg.request_id), None)
                if prog is not None and msg.chunk is ChunkFlag.FINAL:
                    _complete(c, prog[0], prog[1])

    last_wid = (records[-1].ts_us - origin) // window_us
    for wid in range(last_wid + 1):
        cells.setdefault(wid, {})
    return dict(cells), origin


def _complete(c, kind, sdir):
    stem = SERVICE_STEMS.get(kind.value)
    suffix = "req" if sdir is Direction.REQUEST else "res"
    if stem is not None:
        c[f"t_{stem}_{suffix}"] += 1
    if sdir is Direction.REQUEST:
        c["_kinds"][kind.value] = c["_kinds"].get(kind.value, 0) + 1


def batch_window_features(flow_cells):
    """Recompute the cross-flow features for one window's {flow_id: counters}."""

    def ratio(n, d):
        return n / d if d > 0 else 0.0

    flows = list(flow_cells.values())
    out = {}
    total = lambda key: sum(f[key] for f in flows)
    n = len(flows)
    if n == 0:
        return None
    pkt = total("t_pkt_count")
    size = total("t_pkt_size_sum")
    req = total("t_service_req_count")
    res = total("t_service_res_count")
    out["gl_mean_pkt_size"] = ratio(size, pkt)
    out["gl_mean_body_len"] = ratio(total("t_body_length_sum"), total("t_body_count"))
    out["gl_body_pkt_ratio"] = ratio(
        sum(min(f["t_body_count"], f["t_pkt_count"]) for f in flows), pkt
    )
    out["gl_body_byte_ratio"] = min(1.0, ratio(total("t_body_length_sum"), size))
    out["gl_fwd_pkt_ratio"] = ratio(total("t_fwd_pkt_count"), pkt)
    out["gl_fwd_byte_ratio"] = ratio(total("t_fwd_pkt_size_sum"), size)
    out["gl_mean_iat"] = ratio(total("t_iat_sum"), total("t_iat_count"))
    out["gl_mean_flow_drt"] = ratio(total("t_active_flow_drt"), n)
    out["gl_max_flow_drt"] = max(f["t_active_flow_drt"] for f in flows)
    out["gl_req_res_ratio"] = req / max(res, 1)
    out["gl_mean_server_res_time"] = ratio(
        total("t_server_res_time_sum"), total("t_server_res_time_count")
    )
    out["gl_req_per_flow"] = ratio(req, n)
    out["gl_read_ratio"] = ratio(total("t_read_req"), req)
    out["gl_write_ratio"] = ratio(total("t_write_req"), req)
    out["gl_publish_ratio"] = ratio(total("t_publish_req"), req)
    out["gl_monitored_item_rate"] = ratio(total("t_create_mnt_itm_req"), n)
    out["gl_flow_count"] = n
    out["gl_sec_ch_churn"] = total("t_open_sec_ch_req") + total("t_close_sec_ch_req")
    out["gl_session_churn"] = (
        total("t_create_session_req")
        + total("t_activate_session_req")
        + total("t_close_session_req")
    )
    out["gl_sub_churn"] = total("t_create_sub_req") + total("t_del_sub_req")
    out["gl_max_flow_pkt_ratio"] = max(ratio(f["t_pkt_count"], pkt) for f in flows)
    out["gl_max_flow_req_ratio"] = max(ratio(f["t_service_req_count"], req) for f in flows)
    pub = total("t_publish_req")
    out["gl_max_flow_publish_ratio"] = max(ratio(f["t_publish_req"], pub) for f in flows)
    reqs = [f["t_service_req_count"] for f in flows]
    pubs = [f["t_publish_req"] for f in flows]
    out["gl_std_flow_req_count"] = _pstd(reqs)
    out["gl_std_flow_publish_count"] = _pstd(pubs)
    merged = {}
    for f in flows:
        for k, v in f["_kinds"].items():
            merged[k] = merged.get(k, 0) + v
    total_kinds = sum(merged.values())
    h = 0.0
    for v in merged.values():
        if v > 0:
            p = v / total_kinds
            h -= p * math.log2(p)
    out["gl_service_entropy"] = h
    return out


def _pstd(xs):
    n = len(xs)
    mean = sum(xs) / n
    return math.sqrt(sum((x - mean) ** 2 for x in xs) / n)


def assert_engine_matches_oracle(records, t_columns, rel_tol=1e-9):
    """Run both paths over the records and compare field-for-field."""
    from ualab.flow import extract_flow_windows
    from ualab.windows import aggregate

    records = list(records)
    stream_windows, _, origin = extract_flow_windows(records)
    oracle_cells, oracle_origin = batch_flow_windows(records)
    assert origin == oracle_origin
    assert set(stream_windows) == set(oracle_cells), "window id sets differ"

    for wid in sorted(oracle_cells):
        stream_stats = {s.flow_id: s for s in stream_windows[wid]}
        oracle_stats = oracle_cells[wid]
        assert set(stream_stats) == set(oracle_stats), f"window {wid}: flow sets differ"
        for flow_id, counters in oracle_stats.items():
            s = stream_stats[flow_id]
            for col in t_columns:
                got = getattr(s, col)
                want = counters[col]
                assert math.isclose(got, want, rel_tol=rel_tol, abs_tol=1e-12), (
                    f"window {wid} flow {flow_id} {col}: engine {got} oracle {want}"
                )
            assert s.service_req_kinds == counters["_kinds"], (wid, flow_id)
        if oracle_stats:
            vec = aggregate(stream_windows[wid])
            want_gl = batch_window_features(oracle_stats)
            for col, want in want_gl.items():
                got = vec.values[col]
                assert math.isclose(got, want, rel_tol=rel_tol, abs_tol=1e-12), (
                    f"window {wid} {col}: engine {got} oracle {want}"
                )

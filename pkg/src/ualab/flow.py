"""Bidirectional flow state and per-flow per-window traffic statistics.

Statistics are collected per flow within fixed windows; window boundaries
are driven by the caller feeding timestamp-ordered packets. Flow identity,
pending request/response matching state and the last seen secure channel id
persist across windows; per-window accumulators reset at each rollover.

Counting rules for chunked messages: totals (t_service_req_count,
t_service_res_count) and request stamping happen on the first chunk, where
the service type id travels; per-service counters and the request-kind
distribution update when a message completes on its final chunk. A chunk
flood that never sends the final chunk therefore inflates the request total
and the pending set without ever touching a per-service counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterable, Iterator

from .capture import PacketRecord
from .codec import (
    ChunkFlag,
    CodecError,
    Direction,
    FrameStream,
    MessageKind,
    OpcUaMessage,
    ServiceKind,
    classify_service,
    encoded_body_length,
)

DEFAULT_SERVER_PORTS = frozenset({4840})
DEFAULT_WINDOW_US = 5_000_000
DEFAULT_PENDING_TIMEOUT_S = 30.0
DEFAULT_EVICT_IDLE_S = 120.0


class FlowError(Exception):
    pass


class OutOfOrderTimestamp(FlowError):
    pass


class WindowNotClosed(FlowError):
    pass


@dataclass(frozen=True)
class FlowKey:
    client_ip: str
    client_port: int
    server_ip: str
    server_port: int

    @property
    def flow_id(self) -> str:
        return f"{self.client_ip}:{self.client_port}-{self.server_ip}:{self.server_port}"


# ServiceKind -> per-service counter column stem. Kinds without a stem
# (Browse, TranslateBrowsePaths, Call, Other) count only in the
# request/response totals.
SERVICE_COLUMN_STEMS: dict[ServiceKind, str] = {
    ServiceKind.READ: "read",
    ServiceKind.WRITE: "write",
    ServiceKind.PUBLISH: "publish",
    ServiceKind.OPEN_SECURE_CHANNEL: "open_sec_ch",
    ServiceKind.CLOSE_SECURE_CHANNEL: "close_sec_ch",
    ServiceKind.CREATE_SESSION: "create_session",
    ServiceKind.ACTIVATE_SESSION: "activate_session",
    ServiceKind.CLOSE_SESSION: "close_session",
    ServiceKind.CREATE_MONITORED_ITEMS: "create_mnt_itm",
    ServiceKind.CREATE_SUBSCRIPTION: "create_sub",
    ServiceKind.DELETE_SUBSCRIPTIONS: "del_sub",
    ServiceKind.GET_ENDPOINTS: "endpoints",
}


@dataclass
class FlowWindowStats:
    """All per-flow per-window counters; one record per active flow-window."""

    flow_id: str
    window_id: int
    t_pkt_count: int = 0
    t_pkt_size_sum: int = 0
    t_body_count: int = 0
    t_body_length_sum: int = 0
    t_fwd_pkt_count: int = 0
    t_bwd_pkt_count: int = 0
    t_fwd_pkt_size_sum: int = 0
    t_bwd_pkt_size_sum: int = 0
    t_iat_sum: float = 0.0
    t_iat_count: int = 0
    t_active_flow_drt: float = 0.0
    t_sec_ch_count: int = 0
    t_service_req_count: int = 0
    t_service_res_count: int = 0
    t_server_res_time_sum: float = 0.0
    t_server_res_time_count: int = 0
    t_read_req: int = 0
    t_read_res: int = 0
    t_write_req: int = 0
    t_write_res: int = 0
    t_publish_req: int = 0
    t_publish_res: int = 0
    t_open_sec_ch_req: int = 0
    t_open_sec_ch_res: int = 0
    t_close_sec_ch_req: int = 0
    t_close_sec_ch_res: int = 0
    t_create_session_req: int = 0
    t_create_session_res: int = 0
    t_activate_session_req: int = 0
    t_activate_session_res: int = 0
    t_close_session_req: int = 0
    t_close_session_res: int = 0
    t_create_mnt_itm_req: int = 0
    t_create_mnt_itm_res: int = 0
    t_create_sub_req: int = 0
    t_create_sub_res: int = 0
    t_del_sub_req: int = 0
    t_del_sub_res: int = 0
    t_endpoints_req: int = 0
    t_endpoints_res: int = 0
    # Completed-request kind distribution feeding the service entropy
    # feature; not an emitted column.
    service_req_kinds: dict[str, int] = field(default_factory=dict)


T_COLUMNS: tuple[str, ...] = tuple(
    f.name for f in fields(FlowWindowStats) if f.name.startswith("t_")
)


@dataclass
class PendingRequest:
    request_id: int
    sent_us: int
    kind: ServiceKind


@dataclass
class FlowDiagnostics:
    unmatched_responses: int = 0
    expired_pending: int = 0
    duplicate_request_ids: int = 0
    evicted_flows: int = 0
    malformed_frames: int = 0
    dropped_segments: int = 0  # retransmitted/out-of-order payloads, foreign pcaps only


class FlowTable:
    """Maps packets to oriented flow keys.

    The endpoint on a configured server port is the server; when both or
    neither endpoint matches, the destination of the flow's first observed
    packet is the server.
    """

    def __init__(self, server_ports: Iterable[int] = DEFAULT_SERVER_PORTS):
        self._server_ports = frozenset(server_ports)
        self._orientations: dict[frozenset, FlowKey] = {}

    def orient(self, rec: PacketRecord) -> tuple[FlowKey, bool]:
        """Return (flow key, is_forward); forward means client to server."""
        src = (rec.src_ip, rec.src_port)
        dst = (rec.dst_ip, rec.dst_port)
        pair = frozenset((src, dst))
        key = self._orientations.get(pair)
        if key is None:
            src_is_server = rec.src_port in self._server_ports
            dst_is_server = rec.dst_port in self._server_ports
            if src_is_server and not dst_is_server:
                client, server = dst, src
            else:
                # covers the port match on dst and both tie-break cases
                client, server = src, dst
            key = FlowKey(client[0], client[1], server[0], server[1])
            self._orientations[pair] = key
        forward = src == (key.client_ip, key.client_port)
        return key, forward


class _FlowState:
    __slots__ = (
        "key",
        "acc",
        "last_pkt_us",
        "first_pkt_us_in_window",
        "last_pkt_us_in_window",
        "last_channel_id",
        "pending",
        "streams",
        "in_progress",
        "last_activity_us",
        "next_seq",
    )

    def __init__(self, key: FlowKey):
        self.key = key
        self.acc: FlowWindowStats | None = None
        self.last_pkt_us: int | None = None  # within current window, for IAT
        self.first_pkt_us_in_window: int | None = None
        self.last_pkt_us_in_window: int | None = None
        self.last_channel_id: int | None = None
        self.pending: dict[int, PendingRequest] = {}
        self.streams = {"fwd": FrameStream(), "bwd": FrameStream()}
        # (direction, request_id) -> classification of a chunked message in
        # flight, applied to per-service counters at its final chunk
        self.in_progress: dict[tuple[str, int], tuple[ServiceKind, Direction]] = {}
        self.last_activity_us = 0
        # expected next TCP sequence per direction, when captures carry one
        self.next_seq: dict[str, int | None] = {"fwd": None, "bwd": None}


class FlowEngine:
    """Streaming per-capture statistics engine.

    Feed timestamp-ordered packets through `ingest`; closed windows become
    available via `snapshot_window` / `pop_closed_windows`, and `finish`
    closes the last one. One engine per capture; captures may be processed
    in parallel with no shared state.
    """

    def __init__(
        self,
        server_ports: Iterable[int] = DEFAULT_SERVER_PORTS,
        window_us: int = DEFAULT_WINDOW_US,
        pending_timeout_s: float = DEFAULT_PENDING_TIMEOUT_S,
        evict_idle_s: float = DEFAULT_EVICT_IDLE_S,
    ):
        self._table = FlowTable(server_ports)
        self._window_us = window_us
        self._pending_timeout_us = int(pending_timeout_s * 1e6)
        self._evict_idle_us = int(evict_idle_s * 1e6)
        self._flows: dict[FlowKey, _FlowState] = {}
        self._origin_us: int | None = None
        self._last_ts_us: int | None = None
        self._current_window: int | None = None
        self._closed: dict[int, list[FlowWindowStats]] = {}
        self.diagnostics = FlowDiagnostics()

    @property
    def origin_us(self) -> int | None:
        return self._origin_us

    @property
    def current_window(self) -> int | None:
        return self._current_window

    def ingest(self, rec: PacketRecord) -> None:
        if self._last_ts_us is not None and rec.ts_us < self._last_ts_us:
            raise OutOfOrderTimestamp(f"{rec.ts_us} after {self._last_ts_us}")
        self._last_ts_us = rec.ts_us
        if self._origin_us is None:
            self._origin_us = rec.ts_us
            self._current_window = 0
        wid = (rec.ts_us - self._origin_us) // self._window_us
        while self._current_window < wid:
            self._close_current_window()

        key, forward = self._table.orient(rec)
        state = self._flows.get(key)
        if state is None:
            state = _FlowState(key)
            self._flows[key] = state
        state.last_activity_us = rec.ts_us
        acc = state.acc
        if acc is None:
            acc = FlowWindowStats(flow_id=key.flow_id, window_id=wid)
            state.acc = acc

        acc.t_pkt_count += 1
        acc.t_pkt_size_sum += rec.wire_size
        if forward:
            acc.t_fwd_pkt_count += 1
            acc.t_fwd_pkt_size_sum += rec.wire_size
        else:
            acc.t_bwd_pkt_count += 1
            acc.t_bwd_pkt_size_sum += rec.wire_size
        if state.last_pkt_us is not None:
            acc.t_iat_sum += (rec.ts_us - state.last_pkt_us) / 1e6
            acc.t_iat_count += 1
        state.last_pkt_us = rec.ts_us
        if state.first_pkt_us_in_window is None:
            state.first_pkt_us_in_window = rec.ts_us
        state.last_pkt_us_in_window = rec.ts_us

        if rec.payload:
            direction = "fwd" if forward else "bwd"
            # in-order-only: gate on TCP sequence when the capture carries
            # one, so retransmissions never double-feed the decoder
            if rec.tcp_seq is not None:
                expected = state.next_seq[direction]
                if expected is not None and rec.tcp_seq != expected:
                    self.diagnostics.dropped_segments += 1
                    return
                state.next_seq[direction] = rec.tcp_seq + len(rec.payload)
            stream = state.streams[direction]
            try:
                frames = stream.feed(rec.payload)
            except CodecError:
                self.diagnostics.malformed_frames += 1
                stream.reset()
                frames = []
            for msg, first in frames:
                self._ingest_frame(state, acc, direction, msg, first, rec.ts_us)

    def _ingest_frame(
        self,
        state: _FlowState,
        acc: FlowWindowStats,
        direction: str,
        msg: OpcUaMessage,
        first_chunk: bool,
        ts_us: int,
    ) -> None:
        acc.t_body_count += 1
        acc.t_body_length_sum += encoded_body_length(msg)

        if msg.secure_channel_id is not None:
            if state.last_channel_id != msg.secure_channel_id:
                acc.t_sec_ch_count += 1
                state.last_channel_id = msg.secure_channel_id

        if msg.kind in (MessageKind.HELLO, MessageKind.ACKNOWLEDGE, MessageKind.ERROR):
            return

        if first_chunk and msg.service_id is not None:
            kind, sdir = classify_service(msg.service_id)
            if sdir is Direction.REQUEST:
                acc.t_service_req_count += 1
                if msg.request_id in state.pending:
                    self.diagnostics.duplicate_request_ids += 1
                state.pending[msg.request_id] = PendingRequest(msg.request_id, ts_us, kind)
            else:
                acc.t_service_res_count += 1
                self.match_response(state, msg.request_id, ts_us, acc)
            if msg.chunk is ChunkFlag.FINAL:
                self._count_completed(acc, kind, sdir)
            elif msg.chunk is ChunkFlag.INTERMEDIATE:
                state.in_progress[(direction, msg.request_id)] = (kind, sdir)
        elif not first_chunk and msg.chunk is not ChunkFlag.INTERMEDIATE:
            progressing = state.in_progress.pop((direction, msg.request_id), None)
            if progressing is not None and msg.chunk is ChunkFlag.FINAL:
                self._count_completed(acc, progressing[0], progressing[1])

    @staticmethod
    def _count_completed(acc: FlowWindowStats, kind: ServiceKind, sdir: Direction) -> None:
        stem = SERVICE_COLUMN_STEMS.get(kind)
        if stem is not None:
            col = f"t_{stem}_{'req' if sdir is Direction.REQUEST else 'res'}"
            setattr(acc, col, getattr(acc, col) + 1)
        if sdir is Direction.REQUEST:
            name = kind.value
            acc.service_req_kinds[name] = acc.service_req_kinds.get(name, 0) + 1

    def match_response(
        self,
        state: _FlowState,
        request_id: int,
        ts_us: int,
        acc: FlowWindowStats,
    ) -> float | None:
        """Match a response to its pending request; returns the latency or None."""
        entry = state.pending.pop(request_id, None)
        if entry is None:
            self.diagnostics.unmatched_responses += 1
            return None
        if ts_us - entry.sent_us > self._pending_timeout_us:
            self.diagnostics.expired_pending += 1
            return None
        latency = (ts_us - entry.sent_us) / 1e6
        acc.t_server_res_time_sum += latency
        acc.t_server_res_time_count += 1
        return latency

    def _close_current_window(self) -> None:
        wid = self._current_window
        stats: list[FlowWindowStats] = []
        window_end_us = self._origin_us + (wid + 1) * self._window_us
        for state in self._flows.values():
            if state.acc is not None:
                acc = state.acc
                if state.first_pkt_us_in_window is not None:
                    acc.t_active_flow_drt = (
                        state.last_pkt_us_in_window - state.first_pkt_us_in_window
                    ) / 1e6
                stats.append(acc)
                state.acc = None
            state.last_pkt_us = None
            state.first_pkt_us_in_window = None
            state.last_pkt_us_in_window = None
            for req_id in [
                r for r, p in state.pending.items()
                if window_end_us - p.sent_us > self._pending_timeout_us
            ]:
                del state.pending[req_id]
                self.diagnostics.expired_pending += 1
        stats.sort(key=lambda s: s.flow_id)
        self._closed[wid] = stats
        self._current_window = wid + 1
        # evict flows idle past the threshold between windows
        for key in [
            k for k, s in self._flows.items()
            if window_end_us - s.last_activity_us >= self._evict_idle_us
        ]:
            del self._flows[key]
            self.diagnostics.evicted_flows += 1

    def snapshot_window(self, window_id: int) -> list[FlowWindowStats]:
        """Finalized stats of a closed window (empty list when no flow was active)."""
        if self._current_window is None or window_id >= self._current_window:
            raise WindowNotClosed(f"window {window_id} is still open")
        return self._closed.get(window_id, [])

    def finish(self) -> None:
        """Close the window containing the last ingested packet."""
        if self._current_window is not None and any(
            s.acc is not None for s in self._flows.values()
        ):
            self._close_current_window()

    def pop_closed_windows(self) -> Iterator[tuple[int, list[FlowWindowStats]]]:
        for wid in sorted(self._closed):
            yield wid, self._closed.pop(wid)


def extract_flow_windows(
    records: Iterable[PacketRecord],
    server_ports: Iterable[int] = DEFAULT_SERVER_PORTS,
    window_us: int = DEFAULT_WINDOW_US,
) -> tuple[dict[int, list[FlowWindowStats]], FlowDiagnostics, int | None]:
    """Batch convenience: run a capture through the engine.

    Returns ({window_id: stats}, diagnostics, origin_us). Window ids run
    from 0 to the last window containing a packet; ids with no active flow
    map to empty lists.
    """
    engine = FlowEngine(server_ports=server_ports, window_us=window_us)
    for rec in records:
        engine.ingest(rec)
    engine.finish()
    windows = dict(engine.pop_closed_windows())
    if engine.current_window is not None:
        for wid in range(engine.current_window):
            windows.setdefault(wid, [])
    return windows, engine.diagnostics, engine.origin_us

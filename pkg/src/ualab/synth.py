"""Deterministic labeled OPC UA traffic synthesis.

Generates benign application traffic (HMI polling, a remote control loop,
a subscription client and a browsing client, each over its own connection)
and nine attack scenarios with their published parameter sets, scheduled
as 3 s bursts separated by 7 s idle phases. A capture is a benign stream
with at most one attack stream merged in after a warm-up and before a
recovery phase.

Everything is driven by seeded generators: identical (spec, seed) inputs
produce byte-identical event streams on any machine. Client requests fire
on exact schedule grids; server behavior is simulated with a latency model
(base + jitter + load-dependent inflation) plus a per-request complexity
term for payload-heavy services.

Benign path rates below are assumptions, not published values; they are
config fields with documented defaults.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum

from .capture import GroundTruthLabel, LabeledEvent, PacketRecord
from .codec import (
    CONDITION_REFRESH_METHOD_ID,
    ChunkFlag,
    MessageKind,
    OpcUaMessage,
    encode_message,
)


class SynthError(Exception):
    pass


class InvalidConfig(SynthError):
    pass


class OffsetOutOfRange(SynthError):
    pass


class InvalidSpec(SynthError):
    pass


def derive_seed(*parts) -> int:
    """Stable cross-machine seed derivation (never hash())."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Scenario(Enum):
    BENIGN = "BENIGN"
    HEL_F = "HEL-F"
    OMSC = "OMSC"
    CHUNK_F = "CHUNK-F"
    PUB_F = "PUB-F"
    COND_REF = "COND-REF"
    BROWSE = "BROWSE"
    READ_EXP = "READ-EXP"
    NESTED = "NESTED"
    TBP = "TBP"

    @property
    def label(self) -> str:
        return self.value


ALL_LABELS = tuple(s.value for s in Scenario)

# published parameter sets per scenario
ATTACK_PARAMS: dict[Scenario, tuple[int, ...]] = {
    Scenario.HEL_F: (500, 1000, 2000),  # HEL/s
    Scenario.OMSC: (50, 100, 150),  # channel openings/s
    Scenario.CHUNK_F: (200, 1000, 4000),  # chunk bytes
    Scenario.PUB_F: (50, 100, 150),  # publish requests/s
    Scenario.COND_REF: (30, 50, 100),  # refresh calls/s
    Scenario.BROWSE: (20, 40, 80),  # browse requests/s
    Scenario.READ_EXP: (16, 32, 64),  # NodesToRead list size
    Scenario.NESTED: (16, 32, 64),  # variant nesting depth
    Scenario.TBP: (32, 64, 128),  # relative path depth
}

# fixed request rates for the payload-complexity scenarios
FIXED_RATES: dict[Scenario, float] = {
    Scenario.READ_EXP: 5.0,
    Scenario.NESTED: 5.0,
    Scenario.TBP: 20.0,
}

# default load-inflation coefficient (seconds per pending request)
LOAD_COEFF: dict[Scenario, float] = {
    Scenario.HEL_F: 0.002,
    Scenario.OMSC: 0.01,
    Scenario.CHUNK_F: 0.0,
    Scenario.PUB_F: 0.01,
    Scenario.COND_REF: 0.01,
    Scenario.BROWSE: 0.005,
    Scenario.READ_EXP: 0.002,
    Scenario.NESTED: 0.002,
    Scenario.TBP: 0.002,
}

COMPLEXITY_S_PER_UNIT = 0.0002  # extra server latency per payload unit
MAX_LATENCY_S = 10.0
HANDSHAKE_STEP_S = 0.05

ATTACKER_IP = "10.0.9.9"
SERVER_IPS = ("10.0.0.1", "10.0.0.2", "10.0.0.3", "10.0.0.4")
OPC_PORT = 4840


@dataclass(frozen=True)
class TimingModel:
    """Server response latency: base + jitter + load term, per-packet draws."""

    base_latency_s: float = 0.015
    jitter: str = "lognormal"  # "none" or "lognormal"
    jitter_mu: float = math.log(0.005)
    jitter_sigma: float = 0.5

    def sample(self, rng: random.Random) -> float:
        if self.jitter == "none":
            return 0.0
        return rng.lognormvariate(self.jitter_mu, self.jitter_sigma)


@dataclass
class ScenarioConfig:
    scenario: Scenario
    param: int
    duration_s: float
    burst_s: float = 3.0
    idle_s: float = 7.0
    seed: int = 0
    timing: TimingModel = field(default_factory=TimingModel)
    load_coeff_s: float | None = None  # None -> per-scenario default
    message_size_range: tuple[int, int] = (200_000, 300_000)  # CHUNK-F only
    chunk_gap_s: float = 0.002  # CHUNK-F inter-chunk spacing
    target_server: str = SERVER_IPS[0]

    def validate(self) -> None:
        if self.scenario is Scenario.BENIGN:
            raise InvalidConfig("benign traffic is generated by synth_benign")
        if self.duration_s <= 0:
            raise InvalidConfig(f"duration must be positive, got {self.duration_s}")
        if self.burst_s + self.idle_s <= 0:
            raise InvalidConfig("burst + idle must be positive")
        if self.message_size_range[0] > self.message_size_range[1]:
            raise InvalidConfig("empty message size range")

    @property
    def nonstandard_param(self) -> bool:
        return self.param not in ATTACK_PARAMS[self.scenario]

    @property
    def load_coeff(self) -> float:
        if self.load_coeff_s is not None:
            return self.load_coeff_s
        return LOAD_COEFF[self.scenario]


@dataclass
class BenignConfig:
    """Benign application paths; rates are documented assumptions."""

    duration_s: float
    hmi_poll_interval_s: float = 0.5  # paths 1/2/4: HMI read polling
    control_read_interval_s: float = 0.5  # path 3: remote control loop
    control_write_interval_s: float = 1.0
    publish_interval_s: float = 1.0  # path 5: subscription client
    browse_gap_range_s: tuple[float, float] = (20.0, 60.0)  # path 6
    browse_burst_range: tuple[int, int] = (10, 30)
    browse_spacing_s: float = 0.1
    monitored_items: int = 8
    timing: TimingModel = field(default_factory=TimingModel)
    load_coeff_s: float = 0.0005
    enabled_paths: tuple[int, ...] = (1, 2, 3, 4, 5, 6)

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise InvalidConfig(f"duration must be positive, got {self.duration_s}")


# --- deterministic body filler -------------------------------------------------
# Sizes approximate real encodings; features depend on counts, sizes and
# timing, not payload semantics.

REQ_HEADER = 29
RES_HEADER = 24


def _filler(n: int) -> bytes:
    return bytes(max(n, 0))


def read_req_body(n_nodes: int) -> bytes:
    return _filler(REQ_HEADER + 17 + 18 * n_nodes)


def read_res_body(n_nodes: int) -> bytes:
    return _filler(RES_HEADER + 9 + 13 * n_nodes)


def write_req_body(depth: int) -> bytes:
    return _filler(REQ_HEADER + 9 + 8 * depth)


def write_res_body() -> bytes:
    return _filler(RES_HEADER + 9)


def browse_req_body(depth: int) -> bytes:
    return _filler(REQ_HEADER + 16 + 26 * depth)


def browse_res_body(depth: int) -> bytes:
    return _filler(RES_HEADER + 9 + 40 * depth)


def tbp_req_body(depth: int) -> bytes:
    return _filler(REQ_HEADER + 9 + 14 * depth)


def tbp_res_body(depth: int) -> bytes:
    return _filler(RES_HEADER + 13 + 6 * depth)


def condition_refresh_body() -> bytes:
    # call request whose first method id is ConditionType.ConditionRefresh
    method = b"\x01\x00" + CONDITION_REFRESH_METHOD_ID.to_bytes(2, "little")
    return _filler(REQ_HEADER) + method + _filler(13)


def hello_body(server_ip: str) -> bytes:
    import struct

    url = f"opc.tcp://{server_ip}:{OPC_PORT}".encode()
    return struct.pack("<IIIII", 0, 65536, 65536, 1 << 24, 256) + struct.pack("<i", len(url)) + url


def ack_body() -> bytes:
    import struct

    return struct.pack("<IIIII", 0, 65536, 65536, 1 << 24, 256)


SETUP_BODIES = {
    "opn_req": _filler(33),
    "opn_res": _filler(41),
    "create_session_req": _filler(REQ_HEADER + 110),
    "create_session_res": _filler(RES_HEADER + 130),
    "activate_session_req": _filler(REQ_HEADER + 45),
    "activate_session_res": _filler(RES_HEADER + 21),
    "close_session_req": _filler(REQ_HEADER + 9),
    "close_session_res": _filler(RES_HEADER + 5),
    "create_sub_req": _filler(REQ_HEADER + 29),
    "create_sub_res": _filler(RES_HEADER + 17),
    "del_sub_req": _filler(REQ_HEADER + 13),
    "del_sub_res": _filler(RES_HEADER + 9),
    "publish_req": _filler(REQ_HEADER + 13),
    "publish_res": _filler(RES_HEADER + 50),
    "call_res": _filler(RES_HEADER + 17),
    "clo_req": _filler(REQ_HEADER),
}


def create_mon_items_req_body(n: int) -> bytes:
    return _filler(REQ_HEADER + 21 + 40 * n)


def create_mon_items_res_body(n: int) -> bytes:
    return _filler(RES_HEADER + 9 + 16 * n)


# service type ids used by the generator (request, response)
SID = {
    "open_sec_ch": (446, 449),
    "close_sec_ch": (452, 455),
    "create_session": (461, 464),
    "activate_session": (467, 470),
    "close_session": (473, 476),
    "browse": (527, 530),
    "tbp": (554, 557),
    "read": (631, 634),
    "write": (673, 676),
    "call": (712, 715),
    "create_mnt_itm": (751, 754),
    "create_sub": (787, 790),
    "publish": (826, 829),
}


class ServerSim:
    """Latency and id assignment for one simulated server."""

    def __init__(self, timing: TimingModel, load_coeff_s: float, rng: random.Random, first_channel: int):
        self.timing = timing
        self.load_coeff_s = load_coeff_s
        self.rng = rng
        self._outstanding: list[int] = []  # response emission times, as a heap
        self._next_channel = first_channel

    def assign_channel(self) -> int:
        cid = self._next_channel
        self._next_channel += 1
        return cid

    def respond_at(self, req_ts_us: int, complexity_s: float = 0.0) -> int:
        while self._outstanding and self._outstanding[0] <= req_ts_us:
            heapq.heappop(self._outstanding)
        pending = len(self._outstanding)
        latency = (
            self.timing.base_latency_s
            + self.timing.sample(self.rng)
            + self.load_coeff_s * pending
            + complexity_s
        )
        latency = min(latency, MAX_LATENCY_S)
        res_ts = req_ts_us + int(latency * 1e6)
        heapq.heappush(self._outstanding, res_ts)
        return res_ts


class _Connection:
    __slots__ = ("client_ip", "client_port", "server_ip", "channel", "client_seq", "server_seq", "req_id")

    def __init__(self, client_ip: str, client_port: int, server_ip: str):
        self.client_ip = client_ip
        self.client_port = client_port
        self.server_ip = server_ip
        self.channel = 0  # assigned by the server's open-channel response
        self.client_seq = 0
        self.server_seq = 0
        self.req_id = 0


# scheduled client-side actions, processed in global timestamp order
@dataclass
class _Hello:
    ts_us: int
    conn: _Connection
    acked: bool = True


@dataclass
class _Request:
    ts_us: int
    conn: _Connection
    req_sid: int
    req_body: bytes
    res_sid: int | None = None
    res_body: bytes = b""
    complexity_s: float = 0.0
    opens_channel: bool = False
    adopts_channel: bool = False
    channel_override: int | None = None


@dataclass
class _ChunkBurst:
    ts_us: int
    conn: _Connection
    gap_us: int
    first_sid: int
    chunk_bodies: list[bytes]
    deadline_us: int  # chunks past this point are not sent


class _Generator:
    """Turns scheduled actions into timestamped labeled packets."""

    def __init__(self, label: str, attacker: bool, timing: TimingModel, load_coeff_s: float, seed: int):
        self.label = label
        self.attacker = attacker
        self.packets: list[tuple[int, PacketRecord]] = []
        self._servers: dict[str, ServerSim] = {}
        self._responses: dict[_Connection, list[tuple[int, int, int, bytes, int]]] = {}
        self._timing = timing
        self._load_coeff_s = load_coeff_s
        self._seed = seed

    def server_for(self, ip: str) -> ServerSim:
        sim = self._servers.get(ip)
        if sim is None:
            index = len(self._servers)
            sim = ServerSim(
                self._timing,
                self._load_coeff_s,
                random.Random(derive_seed(self._seed, "server", ip)),
                first_channel=1000 * (index + 1),
            )
            self._servers[ip] = sim
        return sim

    def _emit(self, ts_us: int, src: tuple[str, int], dst: tuple[str, int], frame: bytes) -> None:
        self.packets.append(
            (
                ts_us,
                PacketRecord(
                    ts_us=ts_us,
                    src_ip=src[0],
                    dst_ip=dst[0],
                    src_port=src[1],
                    dst_port=dst[1],
                    payload=frame,
                    wire_size=54 + len(frame),
                ),
            )
        )

    def _emit_client(self, ts_us: int, conn: _Connection, frame: bytes) -> None:
        self._emit(ts_us, (conn.client_ip, conn.client_port), (conn.server_ip, OPC_PORT), frame)

    def _emit_server(self, ts_us: int, conn: _Connection, frame: bytes) -> None:
        self._emit(ts_us, (conn.server_ip, OPC_PORT), (conn.client_ip, conn.client_port), frame)

    def run(self, actions: list) -> list[LabeledEvent]:
        actions = sorted(actions, key=lambda a: a.ts_us)
        for action in actions:
            if isinstance(action, _Hello):
                self._do_hello(action)
            elif isinstance(action, _Request):
                self._do_request(action)
            elif isinstance(action, _ChunkBurst):
                self._do_chunks(action)
            else:
                raise TypeError(f"unknown action {action!r}")
        self._flush_responses()
        self.packets.sort(key=lambda p: p[0])
        truth = GroundTruthLabel(self.label, self.attacker)
        return [LabeledEvent(rec, truth) for _, rec in self.packets]

    def _do_hello(self, action: _Hello) -> None:
        conn = action.conn
        frame = encode_message(OpcUaMessage(kind=MessageKind.HELLO, body=hello_body(conn.server_ip)))
        self._emit_client(action.ts_us, conn, frame)
        if action.acked:
            server = self.server_for(conn.server_ip)
            ack_ts = server.respond_at(action.ts_us)
            ack = encode_message(OpcUaMessage(kind=MessageKind.ACKNOWLEDGE, body=ack_body()))
            self._emit_server(ack_ts, conn, ack)

    def _do_request(self, action: _Request) -> None:
        conn = action.conn
        server = self.server_for(conn.server_ip)
        conn.req_id += 1
        conn.client_seq += 1
        is_opn = action.req_sid == SID["open_sec_ch"][0]
        kind = MessageKind.OPEN_SECURE_CHANNEL if is_opn else MessageKind.MESSAGE
        if action.req_sid == SID["close_sec_ch"][0]:
            kind = MessageKind.CLOSE_SECURE_CHANNEL
        channel = action.channel_override
        if channel is None:
            channel = 0 if is_opn and action.opens_channel else conn.channel
        frame = encode_message(
            OpcUaMessage(
                kind=kind,
                secure_channel_id=channel,
                sequence_number=conn.client_seq,
                request_id=conn.req_id,
                service_id=action.req_sid,
                body=action.req_body,
            )
        )
        self._emit_client(action.ts_us, conn, frame)
        if action.res_sid is None:
            return
        res_ts = server.respond_at(action.ts_us, action.complexity_s)
        res_channel = conn.channel
        if is_opn and action.opens_channel:
            res_channel = server.assign_channel()
            if action.adopts_channel:
                conn.channel = res_channel
        self._responses.setdefault(conn, []).append(
            (res_ts, conn.req_id, action.res_sid, action.res_body, res_channel)
        )

    def _do_chunks(self, action: _ChunkBurst) -> None:
        conn = action.conn
        conn.req_id += 1
        ts = action.ts_us
        for i, body in enumerate(action.chunk_bodies):
            if ts >= action.deadline_us:
                break
            conn.client_seq += 1
            frame = encode_message(
                OpcUaMessage(
                    kind=MessageKind.MESSAGE,
                    chunk=ChunkFlag.INTERMEDIATE,
                    secure_channel_id=conn.channel,
                    sequence_number=conn.client_seq,
                    request_id=conn.req_id,
                    service_id=action.first_sid if i == 0 else None,
                    body=body,
                )
            )
            self._emit_client(ts, conn, frame)
            ts += action.gap_us

    def _flush_responses(self) -> None:
        for conn, items in self._responses.items():
            items.sort(key=lambda it: (it[0], it[1]))
            for res_ts, req_id, res_sid, res_body, channel in items:
                conn.server_seq += 1
                is_opn_res = res_sid == SID["open_sec_ch"][1]
                kind = MessageKind.OPEN_SECURE_CHANNEL if is_opn_res else MessageKind.MESSAGE
                frame = encode_message(
                    OpcUaMessage(
                        kind=kind,
                        secure_channel_id=channel,
                        sequence_number=conn.server_seq,
                        request_id=req_id,
                        service_id=res_sid,
                        body=res_body,
                    )
                )
                self._emit_server(res_ts, conn, frame)


def _handshake(conn: _Connection, start_us: int, actions: list, subscription: int = 0) -> int:
    """Connection setup action sequence; returns the first free timestamp."""
    step = int(HANDSHAKE_STEP_S * 1e6)
    t = start_us
    actions.append(_Hello(t, conn))
    t += step
    actions.append(
        _Request(
            t,
            conn,
            SID["open_sec_ch"][0],
            SETUP_BODIES["opn_req"],
            SID["open_sec_ch"][1],
            SETUP_BODIES["opn_res"],
            opens_channel=True,
            adopts_channel=True,
        )
    )
    t += step
    actions.append(
        _Request(
            t,
            conn,
            SID["create_session"][0],
            SETUP_BODIES["create_session_req"],
            SID["create_session"][1],
            SETUP_BODIES["create_session_res"],
        )
    )
    t += step
    actions.append(
        _Request(
            t,
            conn,
            SID["activate_session"][0],
            SETUP_BODIES["activate_session_req"],
            SID["activate_session"][1],
            SETUP_BODIES["activate_session_res"],
        )
    )
    t += step
    if subscription:
        actions.append(
            _Request(
                t,
                conn,
                SID["create_sub"][0],
                SETUP_BODIES["create_sub_req"],
                SID["create_sub"][1],
                SETUP_BODIES["create_sub_res"],
            )
        )
        t += step
        actions.append(
            _Request(
                t,
                conn,
                SID["create_mnt_itm"][0],
                create_mon_items_req_body(subscription),
                SID["create_mnt_itm"][1],
                create_mon_items_res_body(subscription),
            )
        )
        t += step
    return t


def _teardown(conn: _Connection, end_us: int, actions: list) -> None:
    step = int(HANDSHAKE_STEP_S * 1e6)
    t = end_us - 2 * step
    actions.append(
        _Request(
            t,
            conn,
            SID["close_session"][0],
            SETUP_BODIES["close_session_req"],
            SID["close_session"][1],
            SETUP_BODIES["close_session_res"],
        )
    )
    # close-channel requests get no wire response; servers close silently
    actions.append(_Request(t + step, conn, SID["close_sec_ch"][0], SETUP_BODIES["clo_req"], None))


def _grid(start_us: int, end_us: int, rate_per_s: float) -> list[int]:
    """Exact request grid: start + i/rate while inside [start, end)."""
    out = []
    i = 0
    while True:
        t = start_us + int(i * 1e6 / rate_per_s)
        if t >= end_us:
            return out
        out.append(t)
        i += 1


def burst_intervals(duration_s: float, burst_s: float, idle_s: float) -> list[tuple[int, int]]:
    """Burst [start, end) intervals in microseconds over the attack span."""
    period_us = int((burst_s + idle_s) * 1e6)
    burst_us = int(burst_s * 1e6)
    duration_us = int(duration_s * 1e6)
    out = []
    start = 0
    while start < duration_us:
        out.append((start, min(start + burst_us, duration_us)))
        start += period_us
    return out


def synth_benign(config: BenignConfig, seed: int) -> list[LabeledEvent]:
    """Benign application traffic over the modeled communication paths."""
    config.validate()
    duration_us = int(config.duration_s * 1e6)
    actions: list = []
    rng = random.Random(derive_seed(seed, "benign"))
    gen = _Generator("BENIGN", False, config.timing, config.load_coeff_s, derive_seed(seed, "benign-servers"))

    def connection(path: int, client_ip: str, server_ip: str) -> _Connection:
        return _Connection(client_ip, 49100 + path, server_ip)

    open_stagger_us = int(0.3 * 1e6)

    # paths 1/2/4: HMI polling clients reading process state
    hmi_paths = [(1, SERVER_IPS[0]), (2, SERVER_IPS[1]), (4, SERVER_IPS[3])]
    for path, server_ip in hmi_paths:
        if path not in config.enabled_paths:
            continue
        conn = connection(path, f"10.0.1.{10 + path}", server_ip)
        t = _handshake(conn, (path - 1) * open_stagger_us, actions)
        for ts in _grid(t, duration_us, 1.0 / config.hmi_poll_interval_s):
            n = rng.randint(1, 5)
            actions.append(
                _Request(ts, conn, SID["read"][0], read_req_body(n), SID["read"][1], read_res_body(n))
            )
        _teardown(conn, duration_us, actions)

    # path 3: remote PLC control loop (read + write)
    if 3 in config.enabled_paths:
        conn = connection(3, "10.0.1.3", SERVER_IPS[2])
        t = _handshake(conn, 2 * open_stagger_us, actions)
        for ts in _grid(t, duration_us, 1.0 / config.control_read_interval_s):
            actions.append(
                _Request(ts, conn, SID["read"][0], read_req_body(2), SID["read"][1], read_res_body(2))
            )
        for ts in _grid(t + 250_000, duration_us, 1.0 / config.control_write_interval_s):
            actions.append(
                _Request(ts, conn, SID["write"][0], write_req_body(1), SID["write"][1], write_res_body())
            )
        _teardown(conn, duration_us, actions)

    # path 5: SCADA subscription client (publish cycle)
    if 5 in config.enabled_paths:
        conn = connection(5, "10.0.1.5", SERVER_IPS[0])
        t = _handshake(conn, 4 * open_stagger_us, actions, subscription=config.monitored_items)
        for ts in _grid(t, duration_us, 1.0 / config.publish_interval_s):
            actions.append(
                _Request(
                    ts,
                    conn,
                    SID["publish"][0],
                    SETUP_BODIES["publish_req"],
                    SID["publish"][1],
                    SETUP_BODIES["publish_res"],
                )
            )
        _teardown(conn, duration_us, actions)

    # path 6: non-periodic browsing client (engineering/diagnostic tool)
    if 6 in config.enabled_paths:
        conn = connection(6, "10.0.1.6", SERVER_IPS[3])
        t = _handshake(conn, 5 * open_stagger_us, actions)
        while True:
            t += int(rng.uniform(*config.browse_gap_range_s) * 1e6)
            if t >= duration_us:
                break
            for k in range(rng.randint(*config.browse_burst_range)):
                ts = t + int(k * config.browse_spacing_s * 1e6)
                if ts >= duration_us:
                    break
                depth = rng.randint(1, 3) if rng.random() < 0.6 else rng.randint(5, 15)
                actions.append(
                    _Request(
                        ts,
                        conn,
                        SID["browse"][0],
                        browse_req_body(depth),
                        SID["browse"][1],
                        browse_res_body(depth),
                    )
                )
        _teardown(conn, duration_us, actions)

    return gen.run(actions)


def synth_attack(config: ScenarioConfig) -> list[LabeledEvent]:
    """One attack scenario's traffic, timestamps relative to the attack start."""
    config.validate()
    rng = random.Random(derive_seed(config.seed, "attack", config.scenario.value))
    gen = _Generator(
        config.scenario.label,
        True,
        config.timing,
        config.load_coeff,
        derive_seed(config.seed, "attack-servers"),
    )
    duration_us = int(config.duration_s * 1e6)
    bursts = burst_intervals(config.duration_s, config.burst_s, config.idle_s)
    actions: list = []
    scenario = config.scenario

    if scenario is Scenario.HEL_F:
        # each HEL opens a fresh connection; ports cycle through a pool
        port_pool = 40000
        i = 0
        for b0, b1 in bursts:
            for ts in _grid(b0, b1, float(config.param)):
                conn = _Connection(ATTACKER_IP, 20000 + (i % port_pool), config.target_server)
                actions.append(_Hello(ts, conn))
                i += 1
    elif scenario is Scenario.OMSC:
        conn = _Connection(ATTACKER_IP, 20001, config.target_server)
        t = _handshake(conn, 0, actions)
        for b0, b1 in bursts:
            for ts in _grid(max(b0, t), b1, float(config.param)):
                actions.append(
                    _Request(
                        ts,
                        conn,
                        SID["open_sec_ch"][0],
                        SETUP_BODIES["opn_req"],
                        SID["open_sec_ch"][1],
                        SETUP_BODIES["opn_res"],
                        opens_channel=True,
                        adopts_channel=False,
                    )
                )
    elif scenario is Scenario.CHUNK_F:
        conn = _Connection(ATTACKER_IP, 20002, config.target_server)
        t = _handshake(conn, 0, actions)
        gap_us = int(config.chunk_gap_s * 1e6)
        for b0, b1 in bursts:
            ts = max(b0, t)
            while ts < b1:
                size = rng.randint(*config.message_size_range)
                n_chunks = math.ceil(size / config.param)
                bodies = [_filler(config.param) for _ in range(n_chunks - 1)]
                actions.append(
                    _ChunkBurst(ts, conn, gap_us, SID["write"][0], bodies, deadline_us=b1)
                )
                ts += gap_us * len(bodies)
    elif scenario is Scenario.PUB_F:
        conn = _Connection(ATTACKER_IP, 20003, config.target_server)
        t = _handshake(conn, 0, actions, subscription=4)
        for b0, b1 in bursts:
            for ts in _grid(max(b0, t), b1, float(config.param)):
                actions.append(
                    _Request(
                        ts,
                        conn,
                        SID["publish"][0],
                        SETUP_BODIES["publish_req"],
                        SID["publish"][1],
                        SETUP_BODIES["publish_res"],
                    )
                )
    elif scenario is Scenario.COND_REF:
        conn = _Connection(ATTACKER_IP, 20004, config.target_server)
        t = _handshake(conn, 0, actions, subscription=4)
        for b0, b1 in bursts:
            for ts in _grid(max(b0, t), b1, float(config.param)):
                actions.append(
                    _Request(
                        ts,
                        conn,
                        SID["call"][0],
                        condition_refresh_body(),
                        SID["call"][1],
                        SETUP_BODIES["call_res"],
                    )
                )
    elif scenario is Scenario.BROWSE:
        conn = _Connection(ATTACKER_IP, 20005, config.target_server)
        t = _handshake(conn, 0, actions)
        for b0, b1 in bursts:
            for ts in _grid(max(b0, t), b1, float(config.param)):
                depth = rng.randint(1, 3) if rng.random() < 0.5 else rng.randint(8, 20)
                actions.append(
                    _Request(
                        ts,
                        conn,
                        SID["browse"][0],
                        browse_req_body(depth),
                        SID["browse"][1],
                        browse_res_body(depth),
                        complexity_s=COMPLEXITY_S_PER_UNIT * depth,
                    )
                )
    elif scenario in (Scenario.READ_EXP, Scenario.NESTED, Scenario.TBP):
        conn = _Connection(ATTACKER_IP, 20006, config.target_server)
        t = _handshake(conn, 0, actions)
        rate = FIXED_RATES[scenario]
        complexity = COMPLEXITY_S_PER_UNIT * config.param
        for b0, b1 in bursts:
            for ts in _grid(max(b0, t), b1, rate):
                if scenario is Scenario.READ_EXP:
                    req = _Request(
                        ts,
                        conn,
                        SID["read"][0],
                        read_req_body(config.param),
                        SID["read"][1],
                        read_res_body(config.param),
                        complexity_s=complexity,
                    )
                elif scenario is Scenario.NESTED:
                    req = _Request(
                        ts,
                        conn,
                        SID["write"][0],
                        write_req_body(config.param),
                        SID["write"][1],
                        write_res_body(),
                        complexity_s=complexity,
                    )
                else:
                    req = _Request(
                        ts,
                        conn,
                        SID["tbp"][0],
                        tbp_req_body(config.param),
                        SID["tbp"][1],
                        tbp_res_body(config.param),
                        complexity_s=complexity,
                    )
                actions.append(req)
    else:
        raise InvalidConfig(f"unsupported scenario {scenario}")

    return gen.run(actions)


def merge_streams(
    benign: list[LabeledEvent],
    attack: list[LabeledEvent],
    offset_s: float,
    warmup_s: float = 30.0,
    recovery_s: float = 30.0,
    capture_duration_s: float | None = None,
    attack_span_s: float | None = None,
) -> list[LabeledEvent]:
    """Timestamp-merge an attack stream into a benign capture.

    The attacker's activity must start at or after the warm-up and end at
    or before the capture end minus the recovery phase; `attack_span_s` is
    the configured attack duration (defaults to the stream's last event --
    note that simulated server responses may trail the last attack request
    into the recovery phase, which is the realistic capture shape). Equal
    timestamps keep benign events first (stable merge).
    """
    if not attack:
        return list(benign)
    if capture_duration_s is None:
        if not benign:
            raise OffsetOutOfRange("cannot derive capture duration from an empty benign stream")
        capture_duration_s = benign[-1].record.ts_us / 1e6
    if offset_s < warmup_s:
        raise OffsetOutOfRange(f"offset {offset_s}s inside the {warmup_s}s warm-up")
    offset_us = int(offset_s * 1e6)
    if attack_span_s is None:
        attack_span_s = attack[-1].record.ts_us / 1e6
    attack_end_s = offset_s + attack_span_s
    if attack_end_s > capture_duration_s - recovery_s + 1e-9:
        raise OffsetOutOfRange(
            f"attack ends at {attack_end_s:.3f}s, within the {recovery_s}s recovery phase"
        )
    shifted = [
        LabeledEvent(replace(ev.record, ts_us=ev.record.ts_us + offset_us), ev.truth)
        for ev in attack
    ]
    merged = list(benign) + shifted
    merged.sort(key=lambda ev: ev.record.ts_us)
    return merged


# --- corpus building -----------------------------------------------------------


@dataclass(frozen=True)
class CaptureSpec:
    """One planned capture; durations are unscaled seconds."""

    capture_id: str
    scenario: Scenario
    param: int | None
    capture_duration_s: float
    seed: int


@dataclass
class CorpusSpec:
    benign_count: int = 10
    benign_duration_s: float = 1800.0
    attack_durations_s: tuple[float, ...] = (180.0, 360.0, 540.0)
    warmup_s: float = 30.0
    recovery_s: float = 30.0
    attacks: dict[Scenario, tuple[int, ...]] = field(
        default_factory=lambda: {s: p for s, p in ATTACK_PARAMS.items()}
    )

    def validate(self) -> None:
        if self.benign_count < 0 or self.benign_duration_s <= 0:
            raise InvalidSpec("benign capture plan invalid")
        for d in self.attack_durations_s:
            if d <= self.warmup_s + self.recovery_s:
                raise InvalidSpec(
                    f"attack capture of {d}s leaves no active span after "
                    f"{self.warmup_s}s warm-up and {self.recovery_s}s recovery"
                )
        for scenario in self.attacks:
            if scenario is Scenario.BENIGN:
                raise InvalidSpec("BENIGN cannot appear in the attack grid")


PAPER_GRID = CorpusSpec()


def plan_corpus(spec: CorpusSpec, seed: int) -> list[CaptureSpec]:
    """The capture grid: benign captures plus scenario x param x duration."""
    spec.validate()
    plans: list[CaptureSpec] = []
    for i in range(spec.benign_count):
        cid = f"benign-{i:02d}"
        plans.append(
            CaptureSpec(cid, Scenario.BENIGN, None, spec.benign_duration_s, derive_seed(seed, cid))
        )
    for scenario, params in spec.attacks.items():
        for param in params:
            for dur in spec.attack_durations_s:
                cid = f"{scenario.label.lower()}-{param}-{int(dur)}s"
                plans.append(CaptureSpec(cid, scenario, param, dur, derive_seed(seed, cid)))
    return plans


def generate_capture(plan: CaptureSpec, spec: CorpusSpec, scale: float = 1.0) -> list[LabeledEvent]:
    """Deterministically build one capture's labeled event stream."""
    if not 0 < scale <= 1.0:
        raise InvalidSpec(f"scale must be in (0, 1], got {scale}")
    rng = random.Random(derive_seed(plan.seed, "benign-shape"))
    benign_cfg = BenignConfig(
        duration_s=plan.capture_duration_s * scale,
        hmi_poll_interval_s=rng.choice((0.4, 0.5, 0.6, 0.8)),
        publish_interval_s=rng.choice((0.5, 1.0, 2.0)),
        browse_gap_range_s=(rng.uniform(15.0, 25.0), rng.uniform(40.0, 70.0)),
    )
    benign = synth_benign(benign_cfg, derive_seed(plan.seed, "benign-stream"))
    if plan.scenario is Scenario.BENIGN:
        return benign
    warmup = spec.warmup_s * scale
    recovery = spec.recovery_s * scale
    attack_cfg = ScenarioConfig(
        scenario=plan.scenario,
        param=plan.param,
        duration_s=plan.capture_duration_s * scale - warmup - recovery,
        seed=derive_seed(plan.seed, "attack-stream"),
    )
    attack = synth_attack(attack_cfg)
    return merge_streams(
        benign,
        attack,
        offset_s=warmup,
        warmup_s=warmup,
        recovery_s=recovery,
        capture_duration_s=benign_cfg.duration_s,
        attack_span_s=attack_cfg.duration_s,
    )

"""Packet capture I/O and per-flow stream assembly.

Two on-disk formats:

* classic pcap (magic 0xA1B2C3D4, microsecond timestamps, linktype
  Ethernet). Synthesized frames carry minimal Ethernet+IPv4+TCP headers
  with correct length fields, strictly increasing TCP sequence numbers and
  zeroed checksums.
* a native labeled event stream: one JSON object per line carrying the
  packet fields plus its ground-truth label. pcap has no label channel, so
  the event stream is the authoritative ground-truth source.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
ETH_IP_TCP_OVERHEAD = 14 + 20 + 20

_GLOBAL_HDR = struct.Struct("<IHHiIII")
_RECORD_HDR = struct.Struct("<IIII")


class CaptureError(Exception):
    """Base class for capture I/O failures."""


class UnknownMagic(CaptureError):
    pass


class TruncatedRecord(CaptureError):
    pass


class NonMonotoneTimestamps(CaptureError):
    pass


class UnorderedRecords(CaptureError):
    pass


class SchemaViolation(CaptureError):
    pass


@dataclass
class PacketRecord:
    """One timestamped TCP payload-bearing packet.

    `wire_size` counts the bytes on the wire including link/IP/TCP headers.
    `tcp_seq` is transport plumbing used for retransmit detection when
    reading foreign pcaps; it does not participate in record identity.
    """

    ts_us: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    payload: bytes
    wire_size: int
    tcp_seq: int | None = field(default=None, compare=False)

    @property
    def ts_s(self) -> float:
        return self.ts_us / 1e6


@dataclass(frozen=True)
class GroundTruthLabel:
    label: str
    attacker: bool = False


@dataclass
class LabeledEvent:
    record: PacketRecord
    truth: GroundTruthLabel


@dataclass
class AssemblyDiagnostics:
    dropped_retransmit: int = 0
    dropped_out_of_order: int = 0
    skipped_frames: int = 0  # non-IPv4/TCP frames in read_capture


# --- pcap -------------------------------------------------------------------


def write_capture(path: str | Path, records: Iterable[PacketRecord]) -> int:
    """Write records to a classic pcap file; returns the record count."""
    next_seq: dict[tuple, int] = {}
    count = 0
    last_ts = None
    with open(path, "wb") as fh:
        fh.write(_GLOBAL_HDR.pack(PCAP_MAGIC, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
        for rec in records:
            if last_ts is not None and rec.ts_us < last_ts:
                raise UnorderedRecords(f"timestamp {rec.ts_us} after {last_ts}")
            last_ts = rec.ts_us
            frame = _build_frame(rec, next_seq)
            fh.write(_RECORD_HDR.pack(rec.ts_us // 1_000_000, rec.ts_us % 1_000_000, len(frame), rec.wire_size))
            fh.write(frame)
            count += 1
    return count


def _mac_for(ip: str) -> bytes:
    octets = [int(p) for p in ip.split(".")]
    return bytes([0x02, 0x00] + octets)


def _build_frame(rec: PacketRecord, next_seq: dict[tuple, int]) -> bytes:
    key = (rec.src_ip, rec.src_port, rec.dst_ip, rec.dst_port)
    if rec.tcp_seq is not None:
        seq = rec.tcp_seq
    else:
        seq = next_seq.get(key, 1)
    next_seq[key] = seq + len(rec.payload)

    eth = _mac_for(rec.dst_ip) + _mac_for(rec.src_ip) + b"\x08\x00"
    total_len = 20 + 20 + len(rec.payload)
    ip = struct.pack(
        "<BB",
        0x45,  # version 4, IHL 5
        0,
    ) + struct.pack(
        ">HHHBBH4s4s",
        total_len,
        0,  # identification
        0x4000,  # don't fragment
        64,
        6,  # TCP
        0,  # checksum zeroed
        bytes(int(p) for p in rec.src_ip.split(".")),
        bytes(int(p) for p in rec.dst_ip.split(".")),
    )
    tcp = struct.pack(
        ">HHIIBBHHH",
        rec.src_port,
        rec.dst_port,
        seq & 0xFFFFFFFF,
        0,  # ack number not modeled
        5 << 4,  # data offset 5 words
        0x18,  # PSH|ACK
        65535,
        0,  # checksum zeroed
        0,
    )
    return eth + ip + tcp + rec.payload


def read_capture(path: str | Path, diagnostics: AssemblyDiagnostics | None = None) -> Iterator[PacketRecord]:
    """Yield PacketRecords from a classic pcap file in file order.

    Only IPv4/TCP frames become records; anything else is counted in the
    diagnostics and skipped. Decreasing timestamps reject the capture.
    """
    with open(path, "rb") as fh:
        head = fh.read(_GLOBAL_HDR.size)
        if len(head) < _GLOBAL_HDR.size:
            raise UnknownMagic(f"{path}: too short for a pcap header")
        magic_le = struct.unpack_from("<I", head)[0]
        if magic_le == PCAP_MAGIC:
            endian = "<"
        elif struct.unpack_from(">I", head)[0] == PCAP_MAGIC:
            endian = ">"
        else:
            raise UnknownMagic(f"{path}: magic 0x{magic_le:08x}")
        rec_hdr = struct.Struct(endian + "IIII")
        last_ts = None
        while True:
            hdr = fh.read(rec_hdr.size)
            if not hdr:
                return
            if len(hdr) < rec_hdr.size:
                raise TruncatedRecord(f"{path}: partial record header")
            ts_sec, ts_usec, incl_len, orig_len = rec_hdr.unpack(hdr)
            data = fh.read(incl_len)
            if len(data) < incl_len:
                raise TruncatedRecord(f"{path}: record declares {incl_len} bytes, {len(data)} available")
            ts_us = ts_sec * 1_000_000 + ts_usec
            if last_ts is not None and ts_us < last_ts:
                raise NonMonotoneTimestamps(f"{path}: timestamp went backwards at {ts_us}")
            last_ts = ts_us
            rec = _parse_frame(ts_us, data, orig_len)
            if rec is None:
                if diagnostics is not None:
                    diagnostics.skipped_frames += 1
                continue
            yield rec


def _parse_frame(ts_us: int, data: bytes, orig_len: int) -> PacketRecord | None:
    if len(data) < ETH_IP_TCP_OVERHEAD or data[12:14] != b"\x08\x00":
        return None
    ihl = (data[14] & 0x0F) * 4
    if data[14] >> 4 != 4 or data[14 + 9] != 6:
        return None
    ip_off = 14
    tcp_off = ip_off + ihl
    if len(data) < tcp_off + 20:
        return None
    src_ip = ".".join(str(b) for b in data[ip_off + 12 : ip_off + 16])
    dst_ip = ".".join(str(b) for b in data[ip_off + 16 : ip_off + 20])
    src_port, dst_port, seq = struct.unpack_from(">HHI", data, tcp_off)
    doff = (data[tcp_off + 12] >> 4) * 4
    payload = data[tcp_off + doff :]
    return PacketRecord(
        ts_us=ts_us,
        src_ip=src_ip,
        dst_ip=dst_ip,
        src_port=src_port,
        dst_port=dst_port,
        payload=payload,
        wire_size=orig_len,
        tcp_seq=seq,
    )


# --- native labeled event stream ---------------------------------------------

_EVENT_FIELDS = {"capture_id", "ts_us", "src", "sport", "dst", "dport", "wire_size", "label", "attacker"}


def write_events(
    path: str | Path,
    capture_id: str,
    events: Iterable[LabeledEvent],
    payload_encoding: str = "hex",
) -> int:
    """Write a line-delimited labeled event stream; returns the event count."""
    if payload_encoding not in ("hex", "b64"):
        raise SchemaViolation(f"unsupported payload encoding {payload_encoding!r}")
    payload_key = "payload_" + payload_encoding
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            rec = ev.record
            if payload_encoding == "hex":
                payload = rec.payload.hex()
            else:
                payload = base64.b64encode(rec.payload).decode("ascii")
            obj = {
                "capture_id": capture_id,
                "ts_us": rec.ts_us,
                "src": rec.src_ip,
                "sport": rec.src_port,
                "dst": rec.dst_ip,
                "dport": rec.dst_port,
                "wire_size": rec.wire_size,
                payload_key: payload,
                "label": ev.truth.label,
                "attacker": ev.truth.attacker,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
            count += 1
    return count


def read_events(path: str | Path) -> Iterator[LabeledEvent]:
    """Yield LabeledEvents from a native event stream, validating the schema."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            yield _parse_event(obj, f"{path}:{lineno}")


def _parse_event(obj: dict, where: str) -> LabeledEvent:
    keys = set(obj)
    payload_keys = keys & {"payload_hex", "payload_b64"}
    if len(payload_keys) != 1:
        raise SchemaViolation(f"{where}: exactly one payload field required, got {sorted(payload_keys)}")
    unknown = keys - _EVENT_FIELDS - payload_keys
    if unknown:
        raise SchemaViolation(f"{where}: unknown fields {sorted(unknown)}")
    missing = _EVENT_FIELDS - keys
    if missing:
        raise SchemaViolation(f"{where}: missing fields {sorted(missing)}")
    if "payload_hex" in obj:
        payload = bytes.fromhex(obj["payload_hex"])
    else:
        payload = base64.b64decode(obj["payload_b64"])
    rec = PacketRecord(
        ts_us=int(obj["ts_us"]),
        src_ip=obj["src"],
        dst_ip=obj["dst"],
        src_port=int(obj["sport"]),
        dst_port=int(obj["dport"]),
        payload=payload,
        wire_size=int(obj["wire_size"]),
    )
    return LabeledEvent(rec, GroundTruthLabel(obj["label"], bool(obj["attacker"])))


# --- per-flow stream assembly -------------------------------------------------


@dataclass(frozen=True)
class FlowSegment:
    flow_key: "FlowKey"  # noqa: F821 -- defined in ualab.flow
    direction: str  # "fwd" (client->server) or "bwd"
    ts_us: int
    data: bytes


def assemble_streams(
    records: Iterable[PacketRecord],
    server_ports: frozenset[int] | set[int] = frozenset({4840}),
    diagnostics: AssemblyDiagnostics | None = None,
) -> Iterator[FlowSegment]:
    """Yield in-order payload segments per flow direction.

    In-order-only: when TCP sequence numbers are available, retransmitted or
    out-of-order segments are dropped and counted; without sequence numbers
    (native event streams, in-order by construction) everything passes.
    """
    from .flow import FlowTable  # local import to avoid a module cycle

    table = FlowTable(server_ports)
    expected: dict[tuple, int] = {}
    for rec in records:
        if not rec.payload:
            continue
        key, forward = table.orient(rec)
        direction = "fwd" if forward else "bwd"
        if rec.tcp_seq is not None:
            slot = (key, direction)
            exp = expected.get(slot)
            if exp is not None and rec.tcp_seq != exp:
                if diagnostics is not None:
                    if rec.tcp_seq < exp:
                        diagnostics.dropped_retransmit += 1
                    else:
                        diagnostics.dropped_out_of_order += 1
                continue
            expected[slot] = rec.tcp_seq + len(rec.payload)
        yield FlowSegment(flow_key=key, direction=direction, ts_us=rec.ts_us, data=rec.payload)

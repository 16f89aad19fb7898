"""OPC UA TCP binary frame codec (unencrypted opc.tcp subset).

Wire layout handled here, all integers little-endian:

    offset  size  field
    0       3     message code: HEL ACK ERR OPN CLO MSG
    3       1     chunk flag:   F (final) C (intermediate) A (abort)
    4       4     total frame size, header included

HEL/ACK/ERR frames carry their body directly after the 8-byte header.
OPN/CLO/MSG frames continue with:

    8       4     secure channel id
    OPN:          security header = policy uri string + two null byte strings
    CLO/MSG:      symmetric token id (u32, fixed in generated traffic)
    ...     4     sequence number
    ...     4     request id
    ...     var   service type id (encoded NodeId) -- first chunk only
    ...     var   body

Security modes are out of scope: the policy header always carries the
"None" policy uri, so the OPN prefix has a fixed length.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from enum import Enum
from importlib import resources


class MessageKind(Enum):
    HELLO = "HEL"
    ACKNOWLEDGE = "ACK"
    ERROR = "ERR"
    OPEN_SECURE_CHANNEL = "OPN"
    CLOSE_SECURE_CHANNEL = "CLO"
    MESSAGE = "MSG"


class ChunkFlag(Enum):
    FINAL = "F"
    INTERMEDIATE = "C"
    ABORT = "A"


class ServiceKind(Enum):
    READ = "Read"
    WRITE = "Write"
    PUBLISH = "Publish"
    OPEN_SECURE_CHANNEL = "OpenSecureChannel"
    CLOSE_SECURE_CHANNEL = "CloseSecureChannel"
    CREATE_SESSION = "CreateSession"
    ACTIVATE_SESSION = "ActivateSession"
    CLOSE_SESSION = "CloseSession"
    CREATE_MONITORED_ITEMS = "CreateMonitoredItems"
    CREATE_SUBSCRIPTION = "CreateSubscription"
    DELETE_SUBSCRIPTIONS = "DeleteSubscriptions"
    GET_ENDPOINTS = "GetEndpoints"
    BROWSE = "Browse"
    TRANSLATE_BROWSE_PATHS = "TranslateBrowsePaths"
    CALL = "Call"
    OTHER = "Other"


class Direction(Enum):
    REQUEST = "Request"
    RESPONSE = "Response"


# Kinds that never carry channel/sequence headers or a service body.
SIMPLE_KINDS = frozenset(
    {MessageKind.HELLO, MessageKind.ACKNOWLEDGE, MessageKind.ERROR}
)

SECURITY_POLICY_NONE = b"http://opcfoundation.org/UA/SecurityPolicy#None"
SYMMETRIC_TOKEN_ID = 1

HEADER_LEN = 8
MSG_PREFIX_LEN = HEADER_LEN + 4 + 4 + 8  # channel + token + seq + req
OPN_SECURITY_HEADER_LEN = 4 + len(SECURITY_POLICY_NONE) + 4 + 4
OPN_PREFIX_LEN = HEADER_LEN + 4 + OPN_SECURITY_HEADER_LEN + 8

# Method NodeId of ConditionType.ConditionRefresh in namespace 0, carried at
# the start of Call request bodies that refresh conditions. Regenerate with
# tools/regen_service_registry.py alongside the service id fixture.
CONDITION_REFRESH_METHOD_ID = 3875

MAX_FRAME_SIZE = 2**32 - 1


class CodecError(Exception):
    """Base class for encode/decode failures."""


class InvalidCombination(CodecError):
    pass


class BodyTooLarge(CodecError):
    pass


class NeedMoreData(CodecError):
    """Frame incomplete; `required` more bytes are needed.

    When fewer than 8 bytes are available the count is a lower bound: the
    size field has not arrived yet.
    """

    def __init__(self, required: int):
        super().__init__(f"need {required} more bytes")
        self.required = required


class MalformedHeader(CodecError):
    pass


class SizeFieldTooSmall(CodecError):
    pass


class BodyDeclarationMismatch(CodecError):
    pass


@dataclass(frozen=True)
class OpcUaMessage:
    """One decoded opc.tcp frame.

    `service_id` is set on frames whose body starts with a service type id:
    OPN/CLO frames and first chunks of MSG frames. Continuation chunks carry
    `service_id=None` and an opaque body slice.
    """

    kind: MessageKind
    chunk: ChunkFlag = ChunkFlag.FINAL
    secure_channel_id: int | None = None
    sequence_number: int | None = None
    request_id: int | None = None
    service_id: int | None = None
    body: bytes = b""

    @property
    def total_size(self) -> int:
        return frame_prefix_len(self.kind) + _type_id_len(self.service_id) + len(self.body)


def frame_prefix_len(kind: MessageKind) -> int:
    """Bytes before the (type id +) body for the given kind."""
    if kind in SIMPLE_KINDS:
        return HEADER_LEN
    if kind is MessageKind.OPEN_SECURE_CHANNEL:
        return OPN_PREFIX_LEN
    return MSG_PREFIX_LEN


def encoded_body_length(msg: OpcUaMessage) -> int:
    """Wire length of the frame past its fixed prefix (type id included)."""
    return msg.total_size - frame_prefix_len(msg.kind)


def _type_id_len(service_id: int | None) -> int:
    if service_id is None:
        return 0
    if service_id <= 0xFF:
        return 2
    if service_id <= 0xFFFF:
        return 4
    return 7


def _encode_type_id(service_id: int) -> bytes:
    if service_id <= 0xFF:
        return bytes((0x00, service_id))
    if service_id <= 0xFFFF:
        return b"\x01\x00" + struct.pack("<H", service_id)
    return b"\x02\x00\x00" + struct.pack("<I", service_id)


def _decode_type_id(frame: bytes, pos: int) -> tuple[int, int]:
    if pos >= len(frame):
        raise BodyDeclarationMismatch("service type id truncated")
    enc = frame[pos]
    if enc == 0x00:
        if pos + 2 > len(frame):
            raise BodyDeclarationMismatch("two-byte node id truncated")
        return frame[pos + 1], pos + 2
    if enc == 0x01:
        if pos + 4 > len(frame):
            raise BodyDeclarationMismatch("four-byte node id truncated")
        return struct.unpack_from("<H", frame, pos + 2)[0], pos + 4
    if enc == 0x02:
        if pos + 7 > len(frame):
            raise BodyDeclarationMismatch("numeric node id truncated")
        return struct.unpack_from("<I", frame, pos + 3)[0], pos + 7
    raise BodyDeclarationMismatch(f"unsupported node id encoding 0x{enc:02x}")


def encode_message(msg: OpcUaMessage) -> bytes:
    """Encode one frame; `decode_message` inverts it field-for-field."""
    if msg.chunk is not ChunkFlag.FINAL and msg.kind is not MessageKind.MESSAGE:
        raise InvalidCombination(f"{msg.kind.value} frames must be final chunks")
    if msg.kind in SIMPLE_KINDS:
        if (
            msg.secure_channel_id is not None
            or msg.sequence_number is not None
            or msg.request_id is not None
            or msg.service_id is not None
        ):
            raise InvalidCombination(f"{msg.kind.value} carries no channel or service fields")
        parts = [msg.body]
    else:
        if msg.secure_channel_id is None or msg.sequence_number is None or msg.request_id is None:
            raise InvalidCombination(f"{msg.kind.value} requires channel, sequence and request ids")
        if msg.service_id is None and msg.kind is not MessageKind.MESSAGE:
            raise InvalidCombination(f"{msg.kind.value} requires a service id")
        if msg.service_id is not None and msg.chunk is ChunkFlag.ABORT:
            raise InvalidCombination("abort chunks carry no service id")
        parts = [struct.pack("<I", msg.secure_channel_id)]
        if msg.kind is MessageKind.OPEN_SECURE_CHANNEL:
            parts.append(struct.pack("<i", len(SECURITY_POLICY_NONE)))
            parts.append(SECURITY_POLICY_NONE)
            parts.append(struct.pack("<ii", -1, -1))  # no certificate, no thumbprint
        else:
            parts.append(struct.pack("<I", SYMMETRIC_TOKEN_ID))
        parts.append(struct.pack("<II", msg.sequence_number, msg.request_id))
        if msg.service_id is not None:
            parts.append(_encode_type_id(msg.service_id))
        parts.append(msg.body)

    total = HEADER_LEN + sum(len(p) for p in parts)
    if total > MAX_FRAME_SIZE:
        raise BodyTooLarge(f"frame of {total} bytes exceeds the u32 size field")
    header = msg.kind.value.encode("ascii") + msg.chunk.value.encode("ascii")
    return header + struct.pack("<I", total) + b"".join(parts)


_CODE_TO_KIND = {k.value.encode("ascii"): k for k in MessageKind}
_FLAG_TO_CHUNK = {c.value.encode("ascii"): c for c in ChunkFlag}


def decode_message(
    data: bytes | bytearray | memoryview,
    offset: int = 0,
    first_chunk: bool = True,
) -> tuple[OpcUaMessage, int]:
    """Decode one frame starting at `offset`; returns (message, bytes consumed).

    `first_chunk` tells whether a MSG frame opens a new chunked message and
    therefore carries a service type id; continuation chunks do not. Callers
    walking a byte stream track that state (see FrameStream). Never reads
    past the declared frame size.
    """
    if offset < 0 or offset > len(data):
        raise IndexError("offset out of bounds")
    avail = len(data) - offset
    if avail < HEADER_LEN:
        raise NeedMoreData(HEADER_LEN - avail)
    view = bytes(data[offset : offset + HEADER_LEN])
    kind = _CODE_TO_KIND.get(view[0:3])
    if kind is None:
        raise MalformedHeader(f"unknown message code {view[0:3]!r}")
    chunk = _FLAG_TO_CHUNK.get(view[3:4])
    if chunk is None:
        raise MalformedHeader(f"unknown chunk flag {view[3:4]!r}")
    if chunk is not ChunkFlag.FINAL and kind is not MessageKind.MESSAGE:
        raise MalformedHeader(f"{kind.value} frame with chunk flag {chunk.value}")
    size = struct.unpack_from("<I", view, 4)[0]
    if size < frame_prefix_len(kind):
        raise SizeFieldTooSmall(f"declared {size} bytes, {kind.value} needs {frame_prefix_len(kind)}")
    if avail < size:
        raise NeedMoreData(size - avail)
    frame = bytes(data[offset : offset + size])

    if kind in SIMPLE_KINDS:
        return OpcUaMessage(kind=kind, chunk=chunk, body=frame[HEADER_LEN:]), size

    channel_id = struct.unpack_from("<I", frame, HEADER_LEN)[0]
    pos = HEADER_LEN + 4
    if kind is MessageKind.OPEN_SECURE_CHANNEL:
        pos = _skip_opn_security_header(frame, pos)
    else:
        pos += 4  # symmetric token id, fixed in generated traffic
    if pos + 8 > size:
        raise BodyDeclarationMismatch("sequence header crosses frame end")
    seq, req = struct.unpack_from("<II", frame, pos)
    pos += 8

    service_id = None
    if kind is not MessageKind.MESSAGE or (first_chunk and chunk is not ChunkFlag.ABORT):
        service_id, pos = _decode_type_id(frame, pos)
    return (
        OpcUaMessage(
            kind=kind,
            chunk=chunk,
            secure_channel_id=channel_id,
            sequence_number=seq,
            request_id=req,
            service_id=service_id,
            body=frame[pos:],
        ),
        size,
    )


def _skip_opn_security_header(frame: bytes, pos: int) -> int:
    # policy uri string, then two length-prefixed byte strings (-1 = null)
    for _ in range(3):
        if pos + 4 > len(frame):
            raise BodyDeclarationMismatch("security header crosses frame end")
        n = struct.unpack_from("<i", frame, pos)[0]
        pos += 4
        if n > 0:
            if pos + n > len(frame):
                raise BodyDeclarationMismatch("security header field crosses frame end")
            pos += n
        elif n < -1:
            raise BodyDeclarationMismatch(f"negative field length {n}")
    return pos


class FrameStream:
    """Incremental decoder over one flow direction's byte stream.

    Chunked messages are keyed by the request id in the fixed header: a MSG
    frame whose request id has no intermediate chunk outstanding opens a new
    message and carries the service type id; later chunks of that request id
    are continuations. `feed` returns the frames completed by the new bytes
    as (message, first_chunk) pairs.
    """

    def __init__(self):
        self._buf = bytearray()
        self._open: set[int] = set()  # request ids with an unfinished chunk sequence

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[tuple[OpcUaMessage, bool]]:
        self._buf.extend(data)
        out: list[tuple[OpcUaMessage, bool]] = []
        while True:
            first = True
            if self._buf[0:3] == b"MSG" and len(self._buf) >= MSG_PREFIX_LEN:
                req_id = struct.unpack_from("<I", self._buf, MSG_PREFIX_LEN - 4)[0]
                first = req_id not in self._open
            try:
                msg, used = decode_message(self._buf, 0, first_chunk=first)
            except NeedMoreData:
                break
            del self._buf[:used]
            out.append((msg, first))
            if msg.kind is MessageKind.MESSAGE:
                if msg.chunk is ChunkFlag.INTERMEDIATE:
                    self._open.add(msg.request_id)
                else:
                    self._open.discard(msg.request_id)
        return out

    def reset(self):
        """Drop buffered bytes and chunk state (after a decode failure)."""
        self._buf.clear()
        self._open.clear()


# --- service id registry ----------------------------------------------------

_REGISTRY: dict[int, tuple[ServiceKind, Direction]] | None = None


def _load_registry() -> dict[int, tuple[ServiceKind, Direction]]:
    table: dict[int, tuple[ServiceKind, Direction]] = {}
    with resources.files("ualab").joinpath("service_ids.csv").open("r", encoding="utf-8") as fh:
        for row in csv.reader(line for line in fh if line.strip() and not line.startswith("#")):
            sid, kind, direction = row[0].strip(), row[1].strip(), row[2].strip()
            table[int(sid)] = (ServiceKind(kind), Direction(direction))
    return table


def service_registry() -> dict[int, tuple[ServiceKind, Direction]]:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _load_registry()
    return _REGISTRY


def classify_service(service_id: int) -> tuple[ServiceKind, Direction]:
    """Map a numeric service type id to (kind, direction); total function.

    Unmapped ids classify as (Other, Request) -- no parity heuristics.
    """
    return service_registry().get(service_id, (ServiceKind.OTHER, Direction.REQUEST))

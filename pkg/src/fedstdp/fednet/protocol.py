"""Length-prefixed frames for the worker/orchestrator link.

On the wire a frame is a 4-byte big-endian payload length, a 1-byte
message type, then the payload.  Payload encodings:

===========  ==============================================================
HELLO        1 byte protocol version, then a UTF-8 peer name
CONFIG       uint32be JSON length, JSON, then train and eval dataset blobs
             (omitted when the JSON names rows of the worker's preload);
             acknowledged by an empty CONFIG
TRAIN        empty; answered by TRAIN_DONE carrying a JSON summary
GET_WEIGHTS  empty; answered by WEIGHTS carrying an FSTD weight blob
INJECT       weight blob; acknowledged by an empty INJECT
EVALUATE     empty (current model) or a weight blob (evaluate those
             weights); answered by EVAL_RESULT ``{"correct", "total",
             "accuracy"}``
THRESHOLDS   threshold sidecar to install, or empty to query; answered by
             THRESHOLDS carrying the node's current thresholds
ERROR        UTF-8 message
SHUTDOWN     empty; echoed before the worker exits
===========  ==============================================================
"""

from __future__ import annotations

import enum
import json
import socket
import struct
from dataclasses import dataclass

from ..errors import ProtocolError

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 16 * 1024 * 1024
HEADER = struct.Struct(">IB")
HEADER_BYTES = HEADER.size  # 5


class MessageType(enum.IntEnum):
    HELLO = 1
    CONFIG = 2
    TRAIN = 3
    TRAIN_DONE = 4
    GET_WEIGHTS = 5
    WEIGHTS = 6
    INJECT = 7
    EVALUATE = 8
    EVAL_RESULT = 9
    THRESHOLDS = 10
    ERROR = 14
    SHUTDOWN = 15


_KNOWN = {m.value for m in MessageType}


class IncompleteFrame(Exception):
    """More bytes are needed; ``needed`` is the total frame size if known."""

    def __init__(self, needed: int):
        super().__init__(f"incomplete frame, need {needed} bytes")
        self.needed = needed


@dataclass(frozen=True)
class Frame:
    msg_type: MessageType
    payload: bytes = b""

    def __post_init__(self):
        if int(self.msg_type) not in _KNOWN:
            raise ProtocolError(f"unknown message type {int(self.msg_type)}")
        object.__setattr__(self, "msg_type", MessageType(int(self.msg_type)))
        object.__setattr__(self, "payload", bytes(self.payload))

    @property
    def wire_size(self) -> int:
        return HEADER_BYTES + len(self.payload)


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(frame.payload)} bytes exceeds the {MAX_PAYLOAD}-byte cap")
    return HEADER.pack(len(frame.payload), int(frame.msg_type)) + frame.payload


def decode_frame(buf: bytes) -> tuple[Frame, int]:
    """``(frame, bytes consumed)``; raises :class:`IncompleteFrame` on short input."""
    if len(buf) < HEADER_BYTES:
        raise IncompleteFrame(HEADER_BYTES)
    length, code = HEADER.unpack_from(buf, 0)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"frame announces {length} bytes, above the {MAX_PAYLOAD}-byte cap")
    if code not in _KNOWN:
        raise ProtocolError(f"unknown message type {code}")
    end = HEADER_BYTES + length
    if len(buf) < end:
        raise IncompleteFrame(end)
    return Frame(MessageType(code), bytes(buf[HEADER_BYTES:end])), end


# -- socket helpers ------------------------------------------------------------

def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise ConnectionError(f"peer closed the connection after {got} of {n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Frame:
    head = _recv_exact(sock, HEADER_BYTES)
    length, code = HEADER.unpack(head)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"frame announces {length} bytes, above the {MAX_PAYLOAD}-byte cap")
    if code not in _KNOWN:
        # drain the payload so the stream stays aligned for the next frame
        _recv_exact(sock, length)
        raise ProtocolError(f"unknown message type {code}")
    return Frame(MessageType(code), _recv_exact(sock, length))


def write_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(encode_frame(frame))


# -- payload helpers -----------------------------------------------------------

def hello_payload(name: str = "") -> bytes:
    return bytes([PROTOCOL_VERSION]) + name.encode("utf-8")


def parse_hello(payload: bytes) -> tuple[int, str]:
    if not payload:
        raise ProtocolError("HELLO without a version byte")
    return payload[0], payload[1:].decode("utf-8", errors="replace")


def json_payload(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode("utf-8")


def pack_config(meta: dict, blobs: bytes = b"") -> bytes:
    raw = json_payload(meta)
    return struct.pack(">I", len(raw)) + raw + blobs


def unpack_config(payload: bytes) -> tuple[dict, bytes]:
    if len(payload) < 4:
        raise ProtocolError("CONFIG payload too short")
    (n,) = struct.unpack_from(">I", payload, 0)
    if len(payload) < 4 + n:
        raise ProtocolError("CONFIG JSON truncated")
    try:
        meta = json.loads(payload[4:4 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"CONFIG JSON unreadable: {exc}") from None
    return meta, payload[4 + n:]

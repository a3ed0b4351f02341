"""Orchestrator side: remote node handles and over-the-wire trials.

:class:`RemoteHandle` exposes the same methods as the in-process handle, so
:func:`fedstdp.experiment.run_trial` drives remote workers unchanged and
merges stay at the orchestrator.

Every request waits at most ``timeout`` seconds.  A timed-out or dropped
request is retried once on a fresh connection when it is idempotent
(everything except TRAIN, which would advance the node's random stream
twice); otherwise the error propagates and the trial is recorded as failed.
"""

from __future__ import annotations

import json
import logging
import socket

from ..errors import FedStdpError, ProtocolError
from ..experiment import TrialRecord, TrialSpec, failed_record, run_trial
from ..fstd import decode_thresholds, decode_weights, encode_dataset, encode_thresholds, encode_weights
from .protocol import (
    PROTOCOL_VERSION, Frame, MessageType, hello_payload, pack_config, parse_hello, read_frame, write_frame,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
_NOT_IDEMPOTENT = {MessageType.TRAIN}


class RemoteError(ProtocolError):
    """The worker answered with an ERROR frame."""


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = str(text).rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address {text!r} is not host:port")
    return host, int(port)


class RemoteHandle:
    def __init__(self, address, timeout: float = DEFAULT_TIMEOUT, retries: int = 1, name: str = "orchestrator"):
        self.address = parse_address(address) if isinstance(address, str) else tuple(address)
        self.timeout = timeout
        self.retries = retries
        self.name = name
        self.sock: socket.socket | None = None
        self.active = None
        self.bytes_sent = 0
        self.bytes_received = 0

    # -- connection ----------------------------------------------------------

    def connect(self):
        self.close()
        self.sock = socket.create_connection(self.address, timeout=self.timeout)
        self.sock.settimeout(self.timeout)
        reply = self._exchange(Frame(MessageType.HELLO, hello_payload(self.name)))
        version, _ = parse_hello(reply.payload)
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"worker speaks protocol {version}, expected {PROTOCOL_VERSION}")

    def close(self):
        if self.sock is not None:
            try:
                self.sock.close()
            finally:
                self.sock = None

    def _exchange(self, frame: Frame) -> Frame:
        write_frame(self.sock, frame)
        self.bytes_sent += frame.wire_size
        reply = read_frame(self.sock)
        self.bytes_received += reply.wire_size
        return reply

    def request(self, msg_type: MessageType, payload: bytes = b"", expect: MessageType | None = None) -> Frame:
        attempts = 1 + (self.retries if msg_type not in _NOT_IDEMPOTENT else 0)
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                if self.sock is None:
                    self.connect()
                reply = self._exchange(Frame(msg_type, payload))
                break
            except (OSError, ConnectionError) as exc:   # socket.timeout is an OSError
                last = exc
                self.close()
                log.warning("%s to %s failed (attempt %d): %s", msg_type.name, self.address, attempt + 1, exc)
        else:
            raise ConnectionError(f"{msg_type.name} to {self.address[0]}:{self.address[1]} failed: {last}")
        if reply.msg_type is MessageType.ERROR:
            raise RemoteError(reply.payload.decode("utf-8", errors="replace"))
        expect = expect or msg_type
        if reply.msg_type is not expect:
            raise ProtocolError(f"expected {expect.name}, got {reply.msg_type.name}")
        return reply

    # -- node surface -----------------------------------------------------------

    def configure(self, cfg, train, eval):
        meta = {"node": cfg.to_json()}
        self.request(MessageType.CONFIG, pack_config(meta, encode_dataset(train) + encode_dataset(eval)))

    def configure_rows(self, cfg, train_rows, eval_rows):
        meta = {"node": cfg.to_json(), "train_rows": [int(i) for i in train_rows],
                "eval_rows": [int(i) for i in eval_rows]}
        self.request(MessageType.CONFIG, pack_config(meta))

    def set_thresholds(self, tv):
        return decode_thresholds(self.request(MessageType.THRESHOLDS, encode_thresholds(tv)).payload)

    def thresholds(self):
        return decode_thresholds(self.request(MessageType.THRESHOLDS).payload)

    def train(self) -> dict:
        info = json.loads(self.request(MessageType.TRAIN, expect=MessageType.TRAIN_DONE).payload)
        info["neuron_counts"] = {int(c): n for c, n in info["neuron_counts"].items()}
        return info

    def get_weights(self):
        payload = self.request(MessageType.GET_WEIGHTS, expect=MessageType.WEIGHTS).payload
        w, _ = decode_weights(payload)
        return w

    def inject(self, w) -> None:
        self.request(MessageType.INJECT, encode_weights(w))

    def evaluate(self, w=None) -> tuple[int, int]:
        payload = b"" if w is None else encode_weights(w)
        result = json.loads(self.request(MessageType.EVALUATE, payload, expect=MessageType.EVAL_RESULT).payload)
        return int(result["correct"]), int(result["total"])

    def shutdown(self):
        try:
            self.request(MessageType.SHUTDOWN)
        finally:
            self.close()


def orchestrate_trial(addresses, spec: TrialSpec, timeout: float = DEFAULT_TIMEOUT) -> TrialRecord:
    """Run ``spec`` on remote workers; failures yield a failed record."""
    handles = [RemoteHandle(a, timeout=timeout) for a in addresses]
    try:
        return run_trial(spec, handles)
    except (OSError, ProtocolError) as exc:
        log.error("trial seed=%s failed: %s", spec.seed, exc)
        return failed_record(spec, exc)
    except FedStdpError as exc:
        return failed_record(spec, exc)
    finally:
        for h in handles:
            h.close()


def orchestrate_sweep(addresses, specs, timeout: float = DEFAULT_TIMEOUT, sink=None) -> list[TrialRecord]:
    out = []
    for spec in specs:
        rec = orchestrate_trial(addresses, spec, timeout)
        if sink is not None:
            sink(rec)
        out.append(rec)
    return out

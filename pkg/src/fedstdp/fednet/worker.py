"""Node worker: one orchestrator connection at a time, state kept across
connections.

States move ``IDLE -> CONFIGURED -> TRAINED``; a new CONFIG always returns
to CONFIGURED.  Any bad request is answered with ERROR and leaves the state
as it was.
"""

from __future__ import annotations

import enum
import logging
import socket
import threading

import numpy as np

from ..binarize import ThresholdVector
from ..errors import FedStdpError, ProtocolError
from ..fstd import decode_dataset, decode_thresholds, decode_weights, encode_thresholds, encode_weights
from ..node import NodeConfig, NodeRuntime
from .protocol import (
    PROTOCOL_VERSION, Frame, MessageType, hello_payload, json_payload, parse_hello, read_frame,
    unpack_config, write_frame,
)

log = logging.getLogger(__name__)


class WorkerState(str, enum.Enum):
    IDLE = "idle"
    CONFIGURED = "configured"
    TRAINED = "trained"


class Worker:
    """Message handler without any socket code (``handle`` is pure I/O-free)."""

    def __init__(self, name: str = "worker", preload=None):
        self.name = name
        self.preload = preload          # optional Int8FeatureDataset addressed by row index
        self.runtime: NodeRuntime | None = None
        self.state = WorkerState.IDLE

    # -- dispatch ----------------------------------------------------------

    def handle(self, frame: Frame) -> Frame:
        try:
            method = getattr(self, "_on_" + frame.msg_type.name.lower(), None)
            if method is None:
                raise ProtocolError(f"{frame.msg_type.name} is not a request")
            return method(frame.payload)
        except (FedStdpError, ValueError, KeyError, TypeError) as exc:
            return Frame(MessageType.ERROR, str(exc).encode("utf-8"))

    def _need(self, *states):
        if self.state not in states:
            if self.state is WorkerState.IDLE:
                raise ProtocolError("not configured")
            raise ProtocolError("not trained")

    def _on_hello(self, payload: bytes) -> Frame:
        version, _ = parse_hello(payload)
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version {version} unsupported (worker speaks {PROTOCOL_VERSION})")
        return Frame(MessageType.HELLO, hello_payload(self.name))

    def _on_config(self, payload: bytes) -> Frame:
        meta, blobs = unpack_config(payload)
        cfg = NodeConfig.from_json(meta["node"])
        if "train_rows" in meta:
            if self.preload is None:
                raise ProtocolError("CONFIG names preloaded rows but this worker has no data")
            train = self.preload.subset(np.array(meta["train_rows"], dtype=np.int64))
            eval_set = self.preload.subset(np.array(meta["eval_rows"], dtype=np.int64))
        else:
            train, pos = decode_dataset(blobs, 0, cfg.class_roster)
            eval_set, end = decode_dataset(blobs, pos, cfg.class_roster)
            if end != len(blobs):
                raise ProtocolError("trailing bytes after CONFIG datasets")
        runtime = NodeRuntime(cfg, train, eval_set)
        self.runtime, self.state = runtime, WorkerState.CONFIGURED
        return Frame(MessageType.CONFIG)

    def _on_thresholds(self, payload: bytes) -> Frame:
        self._need(WorkerState.CONFIGURED, WorkerState.TRAINED)
        if payload:
            tv: ThresholdVector = decode_thresholds(payload)
            self.runtime.set_thresholds(tv)
        return Frame(MessageType.THRESHOLDS, encode_thresholds(self.runtime.thresholds))

    def _on_train(self, payload: bytes) -> Frame:
        self._need(WorkerState.CONFIGURED, WorkerState.TRAINED)
        info = self.runtime.train()
        self.state = WorkerState.TRAINED
        info = {"samples": info["samples"], "neuron_counts": {str(c): n for c, n in info["neuron_counts"].items()}}
        return Frame(MessageType.TRAIN_DONE, json_payload(info))

    def _on_get_weights(self, payload: bytes) -> Frame:
        self._need(WorkerState.TRAINED)
        return Frame(MessageType.WEIGHTS, encode_weights(self.runtime.get_weights()))

    def _weights(self, payload: bytes):
        w, end = decode_weights(payload)
        if end != len(payload):
            raise ProtocolError("trailing bytes after weight blob")
        return w

    def _on_inject(self, payload: bytes) -> Frame:
        self._need(WorkerState.TRAINED)
        self.runtime.inject(self._weights(payload))
        return Frame(MessageType.INJECT)

    def _on_evaluate(self, payload: bytes) -> Frame:
        if payload:
            self._need(WorkerState.CONFIGURED, WorkerState.TRAINED)
            correct, total = self.runtime.evaluate(self._weights(payload))
        else:
            self._need(WorkerState.TRAINED)
            correct, total = self.runtime.evaluate(None)
        return Frame(MessageType.EVAL_RESULT, json_payload({"correct": correct, "total": total, "accuracy": correct / total}))

    def _on_shutdown(self, payload: bytes) -> Frame:
        return Frame(MessageType.SHUTDOWN)


def _serve_connection(worker: Worker, conn: socket.socket) -> bool:
    """Service one connection; True when SHUTDOWN was received."""
    with conn:
        while True:
            try:
                frame = read_frame(conn)
            except ProtocolError as exc:
                write_frame(conn, Frame(MessageType.ERROR, str(exc).encode("utf-8")))
                continue
            except (ConnectionError, OSError):
                return False
            reply = worker.handle(frame)
            try:
                write_frame(conn, reply)
            except OSError:
                return False
            if frame.msg_type is MessageType.SHUTDOWN:
                return True


def worker_serve(bind_addr, worker: Worker | None = None, ready: threading.Event | None = None,
                 listener: socket.socket | None = None) -> None:
    """Accept connections on ``bind_addr`` until a SHUTDOWN arrives."""
    worker = worker or Worker()
    srv = listener or socket.create_server(tuple(bind_addr))
    with srv:
        if ready is not None:
            ready.set()
        while True:
            conn, peer = srv.accept()
            log.debug("connection from %s", peer)
            if _serve_connection(worker, conn):
                return


def start_worker_thread(host: str = "127.0.0.1", port: int = 0, worker: Worker | None = None):
    """Run a worker on a daemon thread; returns ``(thread, (host, port), worker)``."""
    worker = worker or Worker()
    srv = socket.create_server((host, port))
    addr = srv.getsockname()[:2]
    t = threading.Thread(target=worker_serve, args=(addr, worker, None, srv), daemon=True)
    t.start()
    return t, addr, worker

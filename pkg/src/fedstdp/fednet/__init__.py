"""Socket runtime: frame protocol, node worker and orchestrator."""

from .orchestrator import RemoteError, RemoteHandle, orchestrate_sweep, orchestrate_trial, parse_address
from .protocol import (
    MAX_PAYLOAD, PROTOCOL_VERSION, Frame, IncompleteFrame, MessageType, decode_frame, encode_frame,
)
from .worker import Worker, WorkerState, start_worker_thread, worker_serve

__all__ = [
    "Frame", "MessageType", "IncompleteFrame", "encode_frame", "decode_frame", "MAX_PAYLOAD", "PROTOCOL_VERSION",
    "Worker", "WorkerState", "worker_serve", "start_worker_thread",
    "RemoteHandle", "RemoteError", "orchestrate_trial", "orchestrate_sweep", "parse_address",
]

"""FSTD binary tensor format and the sidecars built on it.

Tensor layout (little-endian)::

    offset  size  field
    0       4     magic b"FSTD"
    4       1     version (1)
    5       1     dtype tag: 0 = int8, 1 = bit-packed
    6       4     row count (uint32)
    10      4     column count (uint32)
    14      ...   row-major payload

Int8 payload is ``rows * cols`` bytes.  Bit-packed rows are packed
MSB-first into ``ceil(cols / 8)`` bytes each, zero padded.

Labels live in a sibling ``.labels`` file of ``uint32`` class ids, one per row.

A weight blob is an int8 tensor holding all neuron rows in block order,
followed by a block table: ``b"BLKS"``, ``uint32`` block count, then
``(uint32 class_id, uint32 row_count)`` per block.

A threshold sidecar is ``b"FSTT"``, version, method byte (0 mean, 1 median,
2 entropy), provenance byte (0 shared, 1 local), ``int32`` node id (-1 when
shared), ``uint32`` D, then D ``float64`` thresholds.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import BinaryDataset, ClassBlockedWeights, Int8FeatureDataset
from .errors import FormatError, TruncatedError

MAGIC = b"FSTD"
VERSION = 1
DTYPE_INT8 = 0
DTYPE_BITS = 1
HEADER = struct.Struct("<4sBBII")
HEADER_BYTES = HEADER.size  # 14

BLOCK_MAGIC = b"BLKS"
_BLOCK_COUNT = struct.Struct("<4sI")
_BLOCK_ENTRY = struct.Struct("<II")

THRESH_MAGIC = b"FSTT"
_THRESH_HEADER = struct.Struct("<4sBBBiI")
METHOD_CODES = {"mean": 0, "median": 1, "entropy": 2}
METHOD_NAMES = {v: k for k, v in METHOD_CODES.items()}


def _row_bytes(cols: int, dtype: int) -> int:
    return cols if dtype == DTYPE_INT8 else (cols + 7) // 8


def encode_tensor(array: np.ndarray, dtype: int = DTYPE_INT8) -> bytes:
    array = np.asarray(array)
    if array.ndim != 2:
        raise FormatError(f"FSTD tensors are 2-D, got shape {array.shape}")
    rows, cols = array.shape
    head = HEADER.pack(MAGIC, VERSION, dtype, rows, cols)
    if dtype == DTYPE_INT8:
        body = np.ascontiguousarray(array, dtype=np.int8).tobytes()
    elif dtype == DTYPE_BITS:
        body = np.packbits(np.asarray(array, dtype=np.uint8), axis=1, bitorder="big").tobytes()
    else:
        raise FormatError(f"unknown dtype tag {dtype}")
    return head + body


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int, int]:
    """Parse one tensor at ``offset``; returns ``(array, dtype, end_offset)``."""
    if len(buf) - offset < HEADER_BYTES:
        raise TruncatedError(f"FSTD header needs {HEADER_BYTES} bytes, have {len(buf) - offset}")
    magic, version, dtype, rows, cols = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported FSTD version {version}")
    if dtype not in (DTYPE_INT8, DTYPE_BITS):
        raise FormatError(f"unknown dtype tag {dtype}")
    start = offset + HEADER_BYTES
    size = rows * _row_bytes(cols, dtype)
    if len(buf) - start < size:
        raise TruncatedError(f"payload truncated: header claims {rows} rows ({size} bytes), have {len(buf) - start}")
    raw = np.frombuffer(buf, dtype=np.uint8, count=size, offset=start)
    if dtype == DTYPE_INT8:
        array = raw.view(np.int8).reshape(rows, cols).copy()
    else:
        packed = raw.reshape(rows, _row_bytes(cols, dtype))
        array = np.unpackbits(packed, axis=1, count=cols, bitorder="big") if rows else np.zeros((0, cols), np.uint8)
    return array, dtype, start + size


def encode_labels(labels) -> bytes:
    return np.asarray(labels, dtype="<u4").tobytes()


def decode_labels(buf: bytes) -> np.ndarray:
    if len(buf) % 4:
        raise TruncatedError("labels file length is not a multiple of 4")
    return np.frombuffer(buf, dtype="<u4").astype(np.int64)


def labels_path(path) -> Path:
    return Path(path).with_suffix(".labels")


def save_dataset(ds, path) -> Path:
    """Write features to ``path`` and labels to the sibling ``.labels`` file."""
    path = Path(path)
    if isinstance(ds, BinaryDataset):
        blob = encode_tensor(ds.bits, DTYPE_BITS)
    else:
        blob = encode_tensor(ds.features, DTYPE_INT8)
    path.write_bytes(blob)
    labels_path(path).write_bytes(encode_labels(ds.labels))
    return path


def _load(path, class_roster):
    path = Path(path)
    buf = path.read_bytes()
    array, dtype, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after FSTD payload")
    labels = decode_labels(labels_path(path).read_bytes())
    if labels.shape[0] != array.shape[0]:
        raise TruncatedError(f"{array.shape[0]} rows but {labels.shape[0]} labels")
    return array, dtype, labels


def load_features(path, class_roster=None) -> Int8FeatureDataset:
    array, dtype, labels = _load(path, class_roster)
    if dtype != DTYPE_INT8:
        raise FormatError("expected an int8 tensor; use load_binary for bit-packed files")
    return Int8FeatureDataset(array, labels, class_roster)


def load_binary(path, class_roster=None) -> BinaryDataset:
    array, dtype, labels = _load(path, class_roster)
    if dtype != DTYPE_BITS:
        raise FormatError("expected a bit-packed tensor")
    return BinaryDataset(array, labels, class_roster)


# -- labeled dataset blob (tensor + count + labels), used on the wire -------

def encode_dataset(ds) -> bytes:
    if isinstance(ds, BinaryDataset):
        blob = encode_tensor(ds.bits, DTYPE_BITS)
    else:
        blob = encode_tensor(ds.features, DTYPE_INT8)
    return blob + struct.pack("<I", ds.n) + encode_labels(ds.labels)


def decode_dataset(buf: bytes, offset: int = 0, class_roster=None):
    array, dtype, pos = decode_tensor(buf, offset)
    if len(buf) - pos < 4:
        raise TruncatedError("dataset blob missing label count")
    (n,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if n != array.shape[0] or len(buf) - pos < 4 * n:
        raise TruncatedError("dataset blob labels truncated or mismatched")
    labels = decode_labels(buf[pos:pos + 4 * n])
    pos += 4 * n
    cls = Int8FeatureDataset if dtype == DTYPE_INT8 else BinaryDataset
    return cls(array, labels, class_roster), pos


# -- weights ---------------------------------------------------------------

def weight_header_bytes(n_blocks: int) -> int:
    return HEADER_BYTES + _BLOCK_COUNT.size + _BLOCK_ENTRY.size * n_blocks


def encode_weights(w: ClassBlockedWeights) -> bytes:
    out = [encode_tensor(w.matrix(), DTYPE_INT8), _BLOCK_COUNT.pack(BLOCK_MAGIC, len(w.blocks))]
    out.extend(_BLOCK_ENTRY.pack(c, rows.shape[0]) for c, rows in w.blocks)
    return b"".join(out)


def decode_weights(buf: bytes, offset: int = 0) -> tuple[ClassBlockedWeights, int]:
    matrix, dtype, pos = decode_tensor(buf, offset)
    if dtype != DTYPE_INT8:
        raise FormatError("weight tensors must be int8")
    if len(buf) - pos < _BLOCK_COUNT.size:
        raise TruncatedError("weight blob missing block table")
    magic, k = _BLOCK_COUNT.unpack_from(buf, pos)
    if magic != BLOCK_MAGIC:
        raise FormatError(f"bad block table magic {magic!r}")
    pos += _BLOCK_COUNT.size
    if len(buf) - pos < k * _BLOCK_ENTRY.size:
        raise TruncatedError("block table truncated")
    blocks, start = [], 0
    for _ in range(k):
        c, n = _BLOCK_ENTRY.unpack_from(buf, pos)
        pos += _BLOCK_ENTRY.size
        blocks.append((c, matrix[start:start + n]))
        start += n
    if start != matrix.shape[0]:
        raise FormatError(f"block table covers {start} rows, tensor has {matrix.shape[0]}")
    return ClassBlockedWeights(blocks, matrix.shape[1]), pos


def save_weights(w: ClassBlockedWeights, path) -> Path:
    path = Path(path)
    path.write_bytes(encode_weights(w))
    return path


def load_weights(path) -> ClassBlockedWeights:
    buf = Path(path).read_bytes()
    w, end = decode_weights(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after weight blob")
    return w


# -- thresholds ------------------------------------------------------------

def encode_thresholds(tv) -> bytes:
    node = -1 if tv.node_id is None else int(tv.node_id)
    head = _THRESH_HEADER.pack(
        THRESH_MAGIC, VERSION, METHOD_CODES[tv.method], 0 if tv.node_id is None else 1, node, len(tv.values)
    )
    return head + np.asarray(tv.values, dtype="<f8").tobytes()


def decode_thresholds(buf: bytes):
    from .binarize import ThresholdVector

    if len(buf) < _THRESH_HEADER.size:
        raise TruncatedError("threshold sidecar header truncated")
    magic, version, method, prov, node, d = _THRESH_HEADER.unpack_from(buf, 0)
    if magic != THRESH_MAGIC:
        raise FormatError(f"bad threshold magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported threshold version {version}")
    if method not in METHOD_NAMES or prov not in (0, 1):
        raise FormatError("bad method or provenance byte")
    body = buf[_THRESH_HEADER.size:]
    if len(body) != 8 * d:
        raise TruncatedError(f"expected {d} thresholds, have {len(body) / 8:g}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return ThresholdVector(values, METHOD_NAMES[method], None if prov == 0 else node)

"""Binary sample container, dataset manifest and checkpoint files.

Sample container (little-endian)::

    magic "CASP" | u16 version | u16 flags
    u32 H | u32 W | u32 T_i | u32 T_o | u32 F_s | u32 F_d
    f64 resolution | f64 ego_row | f64 ego_col
    payload: static u8 [H,W,F_s] | dynamic f32 [T_i,H,W,F_d] | drivable u8 [H,W]
             | gt f32 [T_o,2] | history f32 [T_i,2]
    u32 CRC32(payload)

Checkpoint::

    magic "CASPCKPT" | u16 version | u32 header length | header (sorted JSON)
    payload: raw little-endian tensors at the header offsets
    u32 CRC32(header + payload)
"""

import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from scene.raster import RasterSample

logger = logging.getLogger(__name__)

SAMPLE_MAGIC = b"CASP"
SAMPLE_VERSION = 1
SAMPLE_HEADER = struct.Struct("<4sHHIIIIIIddd")
CHECKPOINT_MAGIC = b"CASPCKPT"
CHECKPOINT_VERSION = 1
_CRC = struct.Struct("<I")


class SampleFormatError(ValueError):
    """A sample or checkpoint file cannot be decoded."""


class BadMagicError(SampleFormatError):
    pass


class VersionMismatchError(SampleFormatError):
    pass


class TruncatedSampleError(SampleFormatError):
    pass


class ChecksumError(SampleFormatError):
    pass


def _le(array: np.ndarray, dtype) -> bytes:
    return np.ascontiguousarray(array, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def encode_sample(sample: RasterSample) -> bytes:
    height, width, fs = sample.static.shape
    ti, _, _, fd = sample.dynamic.shape
    to = sample.gt.shape[0]
    header = SAMPLE_HEADER.pack(
        SAMPLE_MAGIC,
        SAMPLE_VERSION,
        0,
        height,
        width,
        ti,
        to,
        fs,
        fd,
        float(sample.resolution),
        float(sample.ego_cell[0]),
        float(sample.ego_cell[1]),
    )
    payload = b"".join(
        [
            _le(sample.static, np.uint8),
            _le(sample.dynamic, np.float32),
            _le(sample.drivable_mask, np.uint8),
            _le(sample.gt, np.float32),
            _le(sample.history, np.float32),
        ]
    )
    return header + payload + _CRC.pack(zlib.crc32(payload))


def decode_sample(blob: bytes, source: str = "<bytes>") -> RasterSample:
    if len(blob) < 4 or blob[:4] != SAMPLE_MAGIC:
        raise BadMagicError(f"{source}: not a sample container")
    if len(blob) < SAMPLE_HEADER.size:
        raise TruncatedSampleError(f"{source}: header cut short")
    _, version, _flags, height, width, ti, to, fs, fd, resolution, ego_row, ego_col = SAMPLE_HEADER.unpack_from(blob)
    if version != SAMPLE_VERSION:
        raise VersionMismatchError(f"{source}: version {version}, reader supports {SAMPLE_VERSION}")

    layout = [
        ("static", np.uint8, (height, width, fs)),
        ("dynamic", np.float32, (ti, height, width, fd)),
        ("drivable_mask", np.uint8, (height, width)),
        ("gt", np.float32, (to, 2)),
        ("history", np.float32, (ti, 2)),
    ]
    payload_size = sum(np.dtype(dt).itemsize * int(np.prod(shape)) for _, dt, shape in layout)
    start = SAMPLE_HEADER.size
    if len(blob) < start + payload_size + _CRC.size:
        raise TruncatedSampleError(f"{source}: expected {start + payload_size + _CRC.size} bytes, got {len(blob)}")
    payload = blob[start : start + payload_size]
    (stored,) = _CRC.unpack_from(blob, start + payload_size)
    if zlib.crc32(payload) != stored:
        raise ChecksumError(f"{source}: payload checksum mismatch")

    fields, offset = {}, 0
    for name, dtype, shape in layout:
        le = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape))
        fields[name] = np.frombuffer(payload, dtype=le, count=count, offset=offset).astype(dtype).reshape(shape)
        offset += count * le.itemsize
    return RasterSample(
        ego_cell=np.array([ego_row, ego_col], dtype=np.float64),
        resolution=resolution,
        **fields,
    )


def write_sample(sample: RasterSample, path: str):
    """Write ``sample`` to ``path`` in the container format"""
    try:
        with open(path, "wb") as f:
            f.write(encode_sample(sample))
    except OSError as e:
        logger.error(f"Error writing sample {path}: {e}")
        raise


def read_sample(path: str) -> RasterSample:
    """Read a sample written by ``write_sample``"""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        logger.error(f"Error reading sample {path}: {e}")
        raise
    try:
        return decode_sample(blob, source=path)
    except SampleFormatError as e:
        logger.error(f"Invalid sample file: {e}")
        raise


@dataclass
class ManifestEntry:
    path: str
    kind: str
    seed: int
    split: str = "train"


def write_manifest(entries: Iterable[ManifestEntry], path: str):
    """Newline-delimited JSON, one record per sample"""
    lines = [json.dumps(vars(e), sort_keys=True) for e in entries]
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write("".join(line + "\n" for line in lines))
        logger.info(f"Saved manifest with {len(lines)} entries to {path}")
    except OSError as e:
        logger.error(f"Error writing manifest {path}: {e}")
        raise


def read_manifest(path: str, split: Optional[str] = None) -> List[ManifestEntry]:
    """Load manifest entries, optionally only one split.

    Relative sample paths are resolved against the manifest directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                entry = ManifestEntry(**json.loads(line))
                if not os.path.isabs(entry.path):
                    entry.path = os.path.join(base, entry.path)
                if split is None or entry.split == split:
                    entries.append(entry)
    except (OSError, json.JSONDecodeError, TypeError) as e:
        logger.error(f"Error reading manifest {path}: {e}")
        raise
    logger.info(f"Loaded {len(entries)} manifest entries from {path}")
    return entries


@dataclass
class Checkpoint:
    """Everything needed to resume or evaluate a run.

    Attributes:
        config_hash: Hash of the RunConfig that produced the tensors.
        epoch: Number of completed epochs.
        tensors: Ordered name -> array; parameters are prefixed ``param.``,
            optimizer moments ``optim.``.
        meta: JSON-serializable extras (optimizer step, RNG state, config).
    """

    config_hash: str
    epoch: int
    tensors: Dict[str, np.ndarray]
    meta: Dict[str, Any]


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, array in ckpt.tensors.items():
        array = np.asarray(array)
        raw = _le(array, array.dtype)
        entries.append({"name": name, "dtype": array.dtype.str.lstrip("<>|="), "shape": list(array.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"config_hash": ckpt.config_hash, "epoch": ckpt.epoch, "meta": ckpt.meta, "tensors": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = header + b"".join(chunks)
    prefix = CHECKPOINT_MAGIC + struct.pack("<HI", CHECKPOINT_VERSION, len(header))
    return prefix + body + _CRC.pack(zlib.crc32(body))


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    magic_len = len(CHECKPOINT_MAGIC)
    if blob[:magic_len] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{source}: not a checkpoint")
    if len(blob) < magic_len + 6:
        raise TruncatedSampleError(f"{source}: header cut short")
    version, header_len = struct.unpack_from("<HI", blob, magic_len)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{source}: checkpoint version {version}, reader supports {CHECKPOINT_VERSION}")
    start = magic_len + 6
    if len(blob) < start + header_len + _CRC.size:
        raise TruncatedSampleError(f"{source}: truncated header")
    header = json.loads(blob[start : start + header_len].decode("utf-8"))
    payload_len = sum(e["nbytes"] for e in header["tensors"])
    end = start + header_len + payload_len
    if len(blob) < end + _CRC.size:
        raise TruncatedSampleError(f"{source}: truncated payload")
    (stored,) = _CRC.unpack_from(blob, end)
    if zlib.crc32(blob[start:end]) != stored:
        raise ChecksumError(f"{source}: checkpoint checksum mismatch")

    payload = blob[start + header_len : end]
    tensors = {}
    for e in header["tensors"]:
        dtype = np.dtype(e["dtype"])
        le = dtype.newbyteorder("<")
        count = e["nbytes"] // le.itemsize
        tensors[e["name"]] = (
            np.frombuffer(payload, dtype=le, count=count, offset=e["offset"]).astype(dtype).reshape(e["shape"])
        )
    return Checkpoint(header["config_hash"], header["epoch"], tensors, header["meta"])


def save_checkpoint(ckpt: Checkpoint, path: str):
    """Write atomically through a temporary file next to ``path``"""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(encode_checkpoint(ckpt))
        os.replace(tmp, path)
        logger.info(f"Saved checkpoint epoch={ckpt.epoch} to {path}")
    except OSError as e:
        logger.error(f"Error saving checkpoint {path}: {e}")
        raise


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            blob = f.read()
        return decode_checkpoint(blob, source=path)
    except (OSError, SampleFormatError) as e:
        logger.error(f"Error loading checkpoint {path}: {e}")
        raise

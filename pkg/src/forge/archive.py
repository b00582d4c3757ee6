"""Single-file named-tensor archive, safetensors-compatible layout.

Byte layout, exactly:

  bytes 0..8    little-endian uint64 ``N`` = length of the JSON header
  bytes 8..8+N  UTF-8 JSON object mapping tensor names to
                ``{"dtype": "F32"|"F16"|"BF16", "shape": [...], "data_offsets": [begin, end]}``
                plus an optional ``"__metadata__"`` object of string pairs
  bytes 8+N..   raw little-endian tensor data; ``data_offsets`` are relative
                to the end of the header

Writers emit names in sorted order with contiguous data offsets and a
header serialized with sorted keys and no whitespace, so identical tensor
content produces byte-identical archives.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Mapping, Union

DTYPE_SIZES = {"f32": 4, "f16": 2, "bf16": 2}
_DTYPE_TO_WIRE = {"f32": "F32", "f16": "F16", "bf16": "BF16"}
_WIRE_TO_DTYPE = {v: k for k, v in _DTYPE_TO_WIRE.items()}

_COPY_CHUNK = 8 * 1024 * 1024


class ArchiveError(Exception):
    """Base error for unreadable or invalid tensor archives."""


class StructuralError(ArchiveError):
    """The archive parses but violates a structural invariant."""


class CorruptionError(ArchiveError):
    """Byte ranges or sizes are inconsistent with the header."""


@dataclass(frozen=True)
class TensorEntry:
    name: str
    dtype: str  # f32 | f16 | bf16
    shape: tuple[int, ...]
    byte_offset: int  # relative to end of header
    byte_len: int

    @property
    def expected_len(self) -> int:
        count = 1
        for d in self.shape:
            count *= d
        return count * DTYPE_SIZES[self.dtype]


# A tensor's data is either in-memory bytes or a (path, offset, length)
# slice of an existing archive, so rewrites never load whole checkpoints.
TensorSource = Union[bytes, tuple[str, int, int]]


def read_header(path: str) -> tuple[dict[str, TensorEntry], dict[str, str], int]:
    """Parse the archive header.

    Returns (entries by name, metadata, absolute offset of the data block).
    """
    with open(path, "rb") as fh:
        prefix = fh.read(8)
        if len(prefix) < 8:
            raise ArchiveError(f"{path}: truncated header length prefix")
        (header_len,) = struct.unpack("<Q", prefix)
        raw = fh.read(header_len)
        if len(raw) < header_len:
            raise ArchiveError(f"{path}: truncated JSON header")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ArchiveError(f"{path}: unparseable header: {exc}") from exc
        data_start = 8 + header_len
        file_size = os.fstat(fh.fileno()).st_size

    if not isinstance(header, dict):
        raise ArchiveError(f"{path}: header is not an object")
    metadata = header.pop("__metadata__", {}) or {}

    entries: dict[str, TensorEntry] = {}
    for name, info in header.items():
        try:
            wire_dtype = info["dtype"]
            shape = tuple(int(d) for d in info["shape"])
            begin, end = info["data_offsets"]
        except (TypeError, KeyError, ValueError) as exc:
            raise ArchiveError(f"{path}: bad entry for {name!r}: {exc}") from exc
        if wire_dtype not in _WIRE_TO_DTYPE:
            raise ArchiveError(f"{path}: unsupported dtype {wire_dtype!r} for {name!r}")
        entry = TensorEntry(name, _WIRE_TO_DTYPE[wire_dtype], shape, begin, end - begin)
        if entry.byte_len != entry.expected_len:
            raise CorruptionError(
                f"{path}: {name!r} spans {entry.byte_len} bytes, "
                f"shape/dtype require {entry.expected_len}"
            )
        if begin < 0 or data_start + end > file_size:
            raise CorruptionError(f"{path}: {name!r} byte range outside the file")
        entries[name] = entry

    _check_no_overlap(path, entries)
    return entries, dict(metadata), data_start


def _check_no_overlap(path: str, entries: Mapping[str, TensorEntry]) -> None:
    spans = sorted(
        ((e.byte_offset, e.byte_offset + e.byte_len, e.name) for e in entries.values())
    )
    for (b0, e0, n0), (b1, _e1, n1) in zip(spans, spans[1:]):
        if b1 < e0:
            raise CorruptionError(f"{path}: byte ranges of {n0!r} and {n1!r} overlap")


def read_tensor(path: str, entry: TensorEntry, data_start: int) -> bytes:
    with open(path, "rb") as fh:
        fh.seek(data_start + entry.byte_offset)
        data = fh.read(entry.byte_len)
    if len(data) != entry.byte_len:
        raise CorruptionError(f"{path}: short read for {entry.name!r}")
    return data


def iter_source(source: TensorSource) -> Iterator[bytes]:
    if isinstance(source, bytes):
        yield source
        return
    src_path, offset, length = source
    with open(src_path, "rb") as fh:
        fh.seek(offset)
        remaining = length
        while remaining > 0:
            chunk = fh.read(min(_COPY_CHUNK, remaining))
            if not chunk:
                raise CorruptionError(f"{src_path}: short read while copying")
            remaining -= len(chunk)
            yield chunk


def write_archive(
    path: str,
    tensors: Mapping[str, tuple[str, tuple[int, ...], TensorSource]],
    metadata: Mapping[str, str] | None = None,
) -> None:
    """Write an archive atomically (temp file in place, then rename).

    ``tensors`` maps name -> (dtype, shape, source). Offsets are assigned
    contiguously in sorted-name order.
    """
    header: dict = {}
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in metadata.items()}

    offset = 0
    ordered = sorted(tensors.items())
    for name, (dtype, shape, _source) in ordered:
        if dtype not in DTYPE_SIZES:
            raise ValueError(f"unsupported dtype {dtype!r} for {name!r}")
        count = 1
        for d in shape:
            count *= d
        length = count * DTYPE_SIZES[dtype]
        header[name] = {
            "dtype": _DTYPE_TO_WIRE[dtype],
            "shape": list(shape),
            "data_offsets": [offset, offset + length],
        }
        offset += length

    raw_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(struct.pack("<Q", len(raw_header)))
            fh.write(raw_header)
            for name, (dtype, shape, source) in ordered:
                written = 0
                for chunk in iter_source(source):
                    fh.write(chunk)
                    written += len(chunk)
                expected = header[name]["data_offsets"][1] - header[name]["data_offsets"][0]
                if written != expected:
                    raise CorruptionError(
                        f"{name!r}: source produced {written} bytes, header says {expected}"
                    )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

"""Binary embedding store for precomputed fragment vectors.

Layout (all integers little-endian):

    header:  magic b"TFEM" | u32 version (=1) | u32 dimension | u8 pooling
    record:  u16 id_len | id utf-8 | dimension * f32 | u32 crc32

The CRC covers the id_len bytes, the id bytes and the raw vector bytes of
its own record, so a flipped bit anywhere in a record is caught and the
error message can name the record. Vectors round-trip bit-exactly; no
float parsing or re-encoding happens anywhere in this module.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

MAGIC = b"TFEM"
VERSION = 1
POOLING_CODES = {"cls": 0, "mean": 1, "max": 2}
POOLING_NAMES = {v: k for k, v in POOLING_CODES.items()}

_HEADER = struct.Struct("<4sIIB")
_ID_LEN = struct.Struct("<H")
_CRC = struct.Struct("<I")


class StoreFormatError(ValueError):
    """Malformed store file: bad header, truncation, or CRC mismatch."""


class MissingEmbedding(KeyError):
    """Requested fragment id is not present in the store."""


class EmbeddingStore:
    """Read-only view over a TFEM file; validates every record on open."""

    def __init__(self, path: Path, expected_dimension: Optional[int] = None) -> None:
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        try:
            self._read_header(expected_dimension)
            self._index = self._scan()
        except Exception:
            self._fh.close()
            raise

    def _read_header(self, expected_dimension: Optional[int]) -> None:
        raw = self._fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise StoreFormatError(f"{self.path}: truncated header")
        magic, version, dim, pooling = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise StoreFormatError(f"{self.path}: bad magic {magic!r}")
        if version != VERSION:
            raise StoreFormatError(f"{self.path}: unsupported version {version}")
        if pooling not in POOLING_NAMES:
            raise StoreFormatError(f"{self.path}: unknown pooling code {pooling}")
        if expected_dimension is not None and dim != expected_dimension:
            raise StoreFormatError(
                f"{self.path}: dimension {dim} does not match configured {expected_dimension}"
            )
        self.dimension = int(dim)
        self.pooling = POOLING_NAMES[pooling]

    def _scan(self) -> Dict[str, int]:
        index: Dict[str, int] = {}
        record = 0
        while True:
            offset = self._fh.tell()
            head = self._fh.read(_ID_LEN.size)
            if not head:
                return index
            fragment_id, _ = self._read_record_at(offset, record, head)
            if fragment_id in index:
                raise StoreFormatError(
                    f"{self.path}: duplicate fragment id {fragment_id!r} in record {record}"
                )
            index[fragment_id] = offset
            record += 1

    def _read_record_at(self, offset: int, record: int, head: Optional[bytes] = None) -> Tuple[str, bytes]:
        self._fh.seek(offset)
        head = self._fh.read(_ID_LEN.size)
        if len(head) < _ID_LEN.size:
            raise StoreFormatError(f"{self.path}: truncated record {record} at offset {offset}")
        (id_len,) = _ID_LEN.unpack(head)
        body = self._fh.read(id_len + 4 * self.dimension)
        if len(body) < id_len + 4 * self.dimension:
            raise StoreFormatError(f"{self.path}: truncated record {record} at offset {offset}")
        crc_raw = self._fh.read(_CRC.size)
        if len(crc_raw) < _CRC.size:
            raise StoreFormatError(f"{self.path}: truncated record {record} at offset {offset}")
        (crc,) = _CRC.unpack(crc_raw)
        actual = zlib.crc32(head + body) & 0xFFFFFFFF
        if crc != actual:
            raise StoreFormatError(
                f"{self.path}: CRC mismatch in record {record} at offset {offset}"
            )
        try:
            fragment_id = body[:id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StoreFormatError(f"{self.path}: undecodable id in record {record}") from exc
        return fragment_id, body[id_len:]

    # ------------------------------------------------------------- access

    @property
    def ids(self) -> List[str]:
        return sorted(self._index)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, fragment_id: str) -> bool:
        return fragment_id in self._index

    def get(self, fragment_id: str) -> np.ndarray:
        """Fetch one vector as float32, re-validating the record's CRC."""
        offset = self._index.get(fragment_id)
        if offset is None:
            raise MissingEmbedding(fragment_id)
        _, vec_bytes = self._read_record_at(offset, record=-1)
        return np.frombuffer(vec_bytes, dtype="<f4").copy()

    def content_digest(self) -> str:
        """SHA-256 over (id, raw vector bytes) in sorted id order.

        Language-neutral: any writer that produced bit-identical vectors
        arrives at the same digest.
        """
        h = hashlib.sha256()
        for fragment_id in self.ids:
            _, vec_bytes = self._read_record_at(self._index[fragment_id], record=-1)
            h.update(fragment_id.encode("utf-8"))
            h.update(b"\x00")
            h.update(vec_bytes)
        return h.hexdigest()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "EmbeddingStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_store(
    path: Path,
    dimension: int,
    pooling: str,
    records: Iterable[Tuple[str, np.ndarray]],
) -> int:
    """Write a TFEM file; returns the number of records written."""
    if pooling not in POOLING_CODES:
        raise ValueError(f"unknown pooling {pooling!r}")
    count = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dimension, POOLING_CODES[pooling]))
        for fragment_id, vector in records:
            vec = np.asarray(vector, dtype="<f4")
            if vec.shape != (dimension,):
                raise ValueError(
                    f"vector for {fragment_id!r} has shape {vec.shape}, expected ({dimension},)"
                )
            id_bytes = fragment_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ValueError(f"fragment id too long: {fragment_id!r}")
            payload = _ID_LEN.pack(len(id_bytes)) + id_bytes + vec.tobytes()
            fh.write(payload)
            fh.write(_CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF))
            count += 1
    return count


def pair_input(store: EmbeddingStore, left: str, right: str) -> np.ndarray:
    """Concatenated [left ; right] embedding as float64, length 2 * dimension."""
    return np.concatenate([store.get(left), store.get(right)]).astype(np.float64)

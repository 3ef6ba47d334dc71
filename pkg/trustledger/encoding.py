"""
Canonical encodings.

Binary (see spec/canonical-binary-v1.yaml):
- Field order fixed by the caller
- Integers fixed-width big-endian (u8 / u32 / u64)
- Byte strings and UTF-8 strings prefixed with a u32 length
- Hashes written as raw 32 bytes
- Optional values prefixed with a presence byte

JSON (reports and human-facing files): sorted keys, compact separators.
"""

import json
import struct
from typing import Any, Callable, List, Optional, TypeVar

from .config import MAX_FIELD_BYTES
from .crypto import HASH_SIZE, Hash256
from .errors import EncodingError

T = TypeVar("T")

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


def canonical_json(obj: Any) -> str:
    """
    Canonical JSON for deterministic hashing.

    Rules:
    - Keys sorted lexicographically
    - Compact serialization (no whitespace)
    - UTF-8 encoding
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Writer:
    """Append-only builder for canonical byte strings."""

    def __init__(self):
        self._parts: List[bytes] = []

    def u8(self, value: int) -> "Writer":
        return self._pack(_U8, value, "u8")

    def u32(self, value: int) -> "Writer":
        return self._pack(_U32, value, "u32")

    def u64(self, value: int) -> "Writer":
        return self._pack(_U64, value, "u64")

    def _pack(self, fmt: struct.Struct, value: int, label: str) -> "Writer":
        try:
            self._parts.append(fmt.pack(value))
        except struct.error as e:
            raise EncodingError(f"Integer {value!r} does not fit {label}") from e
        return self

    def raw(self, data: bytes) -> "Writer":
        self._parts.append(bytes(data))
        return self

    def blob(self, data: bytes, limit: int = MAX_FIELD_BYTES) -> "Writer":
        if len(data) > limit:
            raise EncodingError(f"Field of {len(data)} bytes exceeds limit of {limit}")
        self.u32(len(data))
        return self.raw(data)

    def text(self, value: str, limit: int = MAX_FIELD_BYTES) -> "Writer":
        return self.blob(value.encode("utf-8"), limit)

    def hash(self, value: Hash256) -> "Writer":
        return self.raw(value.digest)

    def optional(self, value: Optional[T], write: Callable[["Writer", T], Any]) -> "Writer":
        if value is None:
            return self.u8(0)
        self.u8(1)
        write(self, value)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Cursor over canonical bytes. Every read is bounds-checked."""

    def __init__(self, data: bytes):
        self._data = bytes(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise EncodingError(
                f"Truncated input: wanted {n} bytes at offset {self._pos}, "
                f"have {len(self._data) - self._pos}"
            )
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self, limit: int = MAX_FIELD_BYTES) -> bytes:
        n = self.u32()
        if n > limit:
            raise EncodingError(f"Field of {n} bytes exceeds limit of {limit}")
        return self._take(n)

    def text(self, limit: int = MAX_FIELD_BYTES) -> str:
        try:
            return self.blob(limit).decode("utf-8")
        except UnicodeDecodeError as e:
            raise EncodingError(f"Invalid UTF-8 in string field: {e}") from e

    def hash(self) -> Hash256:
        return Hash256(self._take(HASH_SIZE))

    def flag(self) -> bool:
        value = self.u8()
        if value not in (0, 1):
            raise EncodingError(f"Invalid flag byte {value}")
        return value == 1

    def optional(self, read: Callable[["Reader"], T]) -> Optional[T]:
        return read(self) if self.flag() else None

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self):
        if self.remaining:
            raise EncodingError(f"{self.remaining} trailing bytes after record")


def write_records(records: List[bytes]) -> bytes:
    """Concatenate length-prefixed records."""
    w = Writer()
    for record in records:
        w.blob(record, limit=1 << 31)
    return w.getvalue()


def read_records(reader: Reader) -> List[bytes]:
    """Read length-prefixed records until the reader is exhausted."""
    records = []
    while reader.remaining:
        records.append(reader.blob(limit=1 << 31))
    return records

"""Small helper for parsing the package's binary file formats."""

from __future__ import annotations

import struct

from .errors import FormatError


class BinaryReader:
    """Sequential reader that reports the byte offset of any corruption."""

    def __init__(self, blob: bytes, label: str):
        self.blob = blob
        self.pos = 0
        self.label = label

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.label}: truncated while reading {what} at byte offset {self.pos} "
                f"(need {n} bytes, have {len(self.blob) - self.pos})")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic), "magic")
        if got != magic:
            raise FormatError(
                f"{self.label}: bad magic {got!r} at byte offset 0, expected {magic!r}")

    def expect_end(self) -> None:
        if self.pos != len(self.blob):
            raise FormatError(
                f"{self.label}: {len(self.blob) - self.pos} trailing bytes "
                f"at byte offset {self.pos}")

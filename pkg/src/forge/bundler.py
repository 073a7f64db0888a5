"""Byte-exact container joining a host program with per-target device images.

Layout: the 8-byte magic ``OMPBNDL1``, an entry count (u32 LE), then per
entry a name length (u32 LE), the name bytes, a payload length (u64 LE),
and the payload bytes. The host entry is always first. There is no
compression and no checksum, so equal inputs produce equal bytes and a
bundle can be picked apart with a hex dump.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

MAGIC = b"OMPBNDL1"
HOST_ENTRY = "host"
BUNDLE_SUFFIX = ".o"

_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<I")
_PAYLOAD_LEN = struct.Struct("<Q")


class BundleError(Exception):
    """The byte stream does not describe a well-formed bundle."""


class BadMagic(BundleError):
    """The input does not begin with the bundle magic."""


class Truncated(BundleError):
    """A length field points past the end of the input."""


def bundle(host: bytes, images: list[tuple[str, bytes]]) -> bytes:
    """Serialize the host payload and named device images, host first."""
    entries: list[tuple[str, bytes]] = [(HOST_ENTRY, bytes(host))]
    for name, payload in images:
        entries.append((str(name), bytes(payload)))
    seen: set[str] = set()
    for name, _ in entries:
        if name in seen:
            raise BundleError(f"duplicate bundle entry '{name}'")
        seen.add(name)

    out = bytearray(MAGIC)
    out += _COUNT.pack(len(entries))
    for name, payload in entries:
        raw = name.encode("utf-8")
        out += _NAME_LEN.pack(len(raw))
        out += raw
        out += _PAYLOAD_LEN.pack(len(payload))
        out += payload
    return bytes(out)


def unbundle(data: bytes) -> tuple[bytes, list[tuple[str, bytes]]]:
    """Split a bundle into its host payload and the named device images.

    Exact inverse of bundle: unbundle(bundle(h, i)) == (h, i).
    """
    data = bytes(data)
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise Truncated(f"need {n} bytes at offset {pos}, "
                            f"have {len(data) - pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (count,) = _COUNT.unpack(take(_COUNT.size))
    entries: list[tuple[str, bytes]] = []
    seen: set[str] = set()
    for _ in range(count):
        (name_len,) = _NAME_LEN.unpack(take(_NAME_LEN.size))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as err:
            raise BundleError(f"entry name is not UTF-8: {err}") from None
        (payload_len,) = _PAYLOAD_LEN.unpack(take(_PAYLOAD_LEN.size))
        payload = take(payload_len)
        if name in seen:
            raise BundleError(f"duplicate bundle entry '{name}'")
        seen.add(name)
        entries.append((name, payload))

    if pos != len(data):
        raise BundleError(f"{len(data) - pos} trailing bytes after last entry")
    if not entries or entries[0][0] != HOST_ENTRY:
        raise BundleError(f"bundle has no leading '{HOST_ENTRY}' entry")
    return entries[0][1], entries[1:]


@dataclass(frozen=True)
class Bundle:
    """Parsed bundle: ordered entries, the first of which is the host."""

    entries: tuple[tuple[str, bytes], ...]

    @property
    def host(self) -> bytes:
        return self.entries[0][1]

    @property
    def images(self) -> tuple[tuple[str, bytes], ...]:
        return self.entries[1:]

    def to_bytes(self) -> bytes:
        return bundle(self.host, list(self.images))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bundle":
        host, images = unbundle(data)
        return cls(entries=((HOST_ENTRY, host), *images))


def host_payload(source: str, entry: str = "main",
                 filename: str = "<input>") -> bytes:
    """Host entry content: the program source plus how to start it."""
    doc = {"format": 1, "entry": entry, "filename": filename, "source": source}
    return json.dumps(doc, sort_keys=True).encode("utf-8")

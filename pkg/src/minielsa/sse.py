"""Keyword-searchable encrypted record store (edge lookup table + cloud blobs).

Single-reader symmetric construction: keywords are mapped to opaque
16-byte tokens by a keyed PRF, the edge keeps a flat (token, record id)
list, and the cloud role keeps record id -> AES-GCM blob. Searching
matches tokens without revealing keywords; fetching decrypts and
authenticates. One table entry per admitted record, so the table size is
exactly 16 + 20 * entries bytes and the store 16 + 73 * entries.

Writer/reader discipline: a single writer mutates; `insert` adds the blob
before the table entry so a concurrent reader never finds an entry whose
record is missing.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .dataset import SensorRecord, bin_power
from .errors import (
    ArgumentError,
    AuthenticationError,
    DuplicateRecordError,
    FormatError,
    RecordNotFoundError,
)

TOKEN_BYTES = 16
NONCE_BYTES = 12
TAG_BYTES = 16
PLAINTEXT_BYTES = 41  # 5 little-endian float64 + 1 bin-code byte
BLOB_BYTES = NONCE_BYTES + PLAINTEXT_BYTES + TAG_BYTES  # 69
HEADER_BYTES = 16
ENTRY_BYTES = TOKEN_BYTES + 4  # token + u32 record id

_TABLE_MAGIC = b"MELSALUT"
_STORE_MAGIC = b"MELSACLD"
_VERSION = 1


@dataclass(frozen=True)
class KeyMaterial:
    prf_key: bytes
    enc_key: bytes


def _hkdf_expand(master: bytes, label: bytes) -> bytes:
    # HKDF-SHA256, extract with a fixed salt then a single expand block.
    prk = hmac.new(b"minielsa-kdf-salt", master, hashlib.sha256).digest()
    return hmac.new(prk, label + b"\x01", hashlib.sha256).digest()


def keygen(master_secret: bytes) -> KeyMaterial:
    """Derive independent PRF and encryption keys from one master secret."""
    if len(master_secret) < 16:
        raise ArgumentError("master secret must be at least 16 bytes")
    return KeyMaterial(
        prf_key=_hkdf_expand(master_secret, b"token-prf"),
        enc_key=_hkdf_expand(master_secret, b"record-enc"),
    )


def trapdoor(keys: KeyMaterial, keyword: str) -> bytes:
    """Deterministic 16-byte search token for a keyword."""
    mac = hmac.new(keys.prf_key, keyword.encode("utf-8"), hashlib.sha256)
    return mac.digest()[:TOKEN_BYTES]


def encode_record(r: SensorRecord) -> bytes:
    return struct.pack("<5d", r.at, r.v, r.ap, r.rh, r.pe) + bytes([int(bin_power(r.pe))])


def decode_record(plaintext: bytes, record_id: int) -> SensorRecord:
    if len(plaintext) != PLAINTEXT_BYTES:
        raise FormatError(f"record plaintext must be {PLAINTEXT_BYTES} bytes")
    at, v, ap, rh, pe = struct.unpack_from("<5d", plaintext, 0)
    if plaintext[40] > 3:
        raise FormatError(f"invalid bin code byte {plaintext[40]}")
    return SensorRecord(id=record_id, at=at, v=v, ap=ap, rh=rh, pe=pe)


def encrypt_record(keys: KeyMaterial, r: SensorRecord) -> bytes:
    """nonce || AES-GCM(plaintext); fresh random nonce per call."""
    nonce = os.urandom(NONCE_BYTES)
    ct = AESGCM(keys.enc_key).encrypt(nonce, encode_record(r), None)
    return nonce + ct


def decrypt_record(keys: KeyMaterial, blob: bytes, record_id: int = 0) -> SensorRecord:
    if len(blob) != BLOB_BYTES:
        raise AuthenticationError(f"ciphertext must be {BLOB_BYTES} bytes, got {len(blob)}")
    try:
        plaintext = AESGCM(keys.enc_key).decrypt(blob[:NONCE_BYTES], blob[NONCE_BYTES:], None)
    except InvalidTag as exc:
        raise AuthenticationError("record failed authentication") from exc
    return decode_record(plaintext, record_id)


@dataclass
class EdgeLookupTable:
    """Flat ordered (token, record id) entries; one entry per admitted record."""

    tokens: list[bytes] = field(default_factory=list)
    ids: list[int] = field(default_factory=list)

    def entry_count(self) -> int:
        return len(self.ids)

    def append(self, token: bytes, record_id: int) -> None:
        if len(token) != TOKEN_BYTES:
            raise ArgumentError(f"token must be {TOKEN_BYTES} bytes")
        if not (0 <= record_id < 2**32):
            raise ArgumentError("record id must fit an unsigned 32-bit integer")
        self.tokens.append(token)
        self.ids.append(record_id)

    def search(self, token: bytes) -> list[int]:
        """Ids whose token matches, in insertion order. Unknown token: empty.

        Linear scan: the benchmark times this, so cost tracks table size.
        """
        return [rid for tok, rid in zip(self.tokens, self.ids) if tok == token]

    def to_bytes(self) -> bytes:
        parts = [_TABLE_MAGIC, struct.pack("<II", _VERSION, self.entry_count())]
        for tok, rid in zip(self.tokens, self.ids):
            parts.append(tok)
            parts.append(struct.pack("<I", rid))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EdgeLookupTable":
        if blob[:8] != _TABLE_MAGIC:
            raise FormatError("not a serialized lookup table (bad magic)")
        version, count = struct.unpack_from("<II", blob, 8)
        if version != _VERSION:
            raise FormatError(f"unsupported lookup-table version {version}")
        if len(blob) != HEADER_BYTES + ENTRY_BYTES * count:
            raise FormatError("lookup table is truncated or padded")
        table = cls()
        off = HEADER_BYTES
        for _ in range(count):
            token = blob[off : off + TOKEN_BYTES]
            (rid,) = struct.unpack_from("<I", blob, off + TOKEN_BYTES)
            table.append(token, rid)
            off += ENTRY_BYTES
        return table


@dataclass
class CloudStore:
    """Record id -> authenticated encrypted blob (insertion-ordered)."""

    blobs: dict[int, bytes] = field(default_factory=dict)

    def entry_count(self) -> int:
        return len(self.blobs)

    def put(self, record_id: int, blob: bytes) -> None:
        if record_id in self.blobs:
            raise DuplicateRecordError(f"record id {record_id} already stored")
        if len(blob) != BLOB_BYTES:
            raise ArgumentError(f"blob must be {BLOB_BYTES} bytes")
        self.blobs[record_id] = blob

    def get(self, record_id: int) -> bytes:
        try:
            return self.blobs[record_id]
        except KeyError:
            raise RecordNotFoundError(f"record id {record_id} not in store") from None

    def to_bytes(self) -> bytes:
        parts = [_STORE_MAGIC, struct.pack("<II", _VERSION, self.entry_count())]
        for rid, blob in self.blobs.items():
            parts.append(struct.pack("<I", rid))
            parts.append(blob)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CloudStore":
        if blob[:8] != _STORE_MAGIC:
            raise FormatError("not a serialized cloud store (bad magic)")
        version, count = struct.unpack_from("<II", blob, 8)
        if version != _VERSION:
            raise FormatError(f"unsupported cloud-store version {version}")
        if len(blob) != HEADER_BYTES + (4 + BLOB_BYTES) * count:
            raise FormatError("cloud store is truncated or padded")
        store = cls()
        off = HEADER_BYTES
        for _ in range(count):
            (rid,) = struct.unpack_from("<I", blob, off)
            store.put(rid, blob[off + 4 : off + 4 + BLOB_BYTES])
            off += 4 + BLOB_BYTES
        return store


def insert(
    table: EdgeLookupTable, store: CloudStore, keys: KeyMaterial, r: SensorRecord
) -> None:
    """Admit one record: blob into the cloud store, token entry at the edge.

    The caller enforces the screening gate. Blob goes in first so readers
    never see a table entry without its record.
    """
    if r.id in store.blobs:
        raise DuplicateRecordError(f"record id {r.id} already stored")
    token = trapdoor(keys, bin_power(r.pe).keyword)
    blob = encrypt_record(keys, r)
    store.put(r.id, blob)
    table.append(token, r.id)


def search(table: EdgeLookupTable, token: bytes) -> list[int]:
    return table.search(token)


def fetch_and_decrypt(
    store: CloudStore, keys: KeyMaterial, ids: list[int]
) -> list[SensorRecord]:
    """Decrypt the requested records, in request order."""
    return [decrypt_record(keys, store.get(rid), rid) for rid in ids]


def table_size_bytes(table: EdgeLookupTable) -> int:
    """Exact serialized size: 16-byte header + 20 bytes per entry."""
    return HEADER_BYTES + ENTRY_BYTES * table.entry_count()


def store_size_bytes(store: CloudStore) -> int:
    """Exact serialized size: 16-byte header + 73 bytes per record."""
    return HEADER_BYTES + (4 + BLOB_BYTES) * store.entry_count()

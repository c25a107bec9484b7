"""Persistent response cache keyed by request hash.

On-disk layout inside the cache directory:

    records.bin  append-only log of (hash: 32 raw bytes, len: u64-le,
                 canonical response bytes)
    index.json   sidecar mapping hash-hex -> byte offset of the record;
                 rebuilt by scanning records.bin when absent or stale

A hash maps to exactly one response forever: re-putting the identical
body is a no-op, re-putting a different body is a hard error. Reads are
safe from many threads; writes are serialized on a lock.
"""

from __future__ import annotations

import json
import struct
import threading
from pathlib import Path

from .errors import CacheConflict, DataError
from .wire import canonical_json_bytes

RECORDS_NAME = "records.bin"
INDEX_NAME = "index.json"

_LEN = struct.Struct("<Q")


class ScoreCache:
    """Append-only content-addressed store of backend responses."""

    def __init__(self, directory: str | Path, *, create: bool = True):
        self.directory = Path(directory)
        if create:
            self.directory.mkdir(parents=True, exist_ok=True)
        elif not self.directory.is_dir():
            raise DataError(f"cache directory {self.directory} does not exist")
        self._records = self.directory / RECORDS_NAME
        self._index_path = self.directory / INDEX_NAME
        self._lock = threading.Lock()
        self._index: dict[str, int] = {}
        if self._records.exists():
            self._load_index()

    # --- index maintenance ---

    def _load_index(self) -> None:
        if self._index_path.exists():
            try:
                raw = json.loads(self._index_path.read_text(encoding="utf-8"))
                size = self._records.stat().st_size
                if all(0 <= off < size for off in raw.values()):
                    self._index = {str(k): int(v) for k, v in raw.items()}
                    return
            except (json.JSONDecodeError, OSError, ValueError):
                pass  # fall through to a rebuild
        self._rebuild_index()

    def _rebuild_index(self) -> None:
        index: dict[str, int] = {}
        with open(self._records, "rb") as fh:
            offset = 0
            while True:
                header = fh.read(32 + _LEN.size)
                if not header:
                    break
                if len(header) < 32 + _LEN.size:
                    raise DataError(f"truncated cache record at offset {offset}")
                digest = header[:32]
                (length,) = _LEN.unpack(header[32:])
                body = fh.read(length)
                if len(body) < length:
                    raise DataError(f"truncated cache record at offset {offset}")
                index[digest.hex()] = offset
                offset += 32 + _LEN.size + length
        self._index = index
        self._write_index()

    def _write_index(self) -> None:
        tmp = self._index_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self._index, sort_keys=True), encoding="utf-8")
        tmp.replace(self._index_path)

    # --- read/write ---

    def __contains__(self, request_hash: str) -> bool:
        return request_hash in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get_bytes(self, request_hash: str) -> bytes | None:
        offset = self._index.get(request_hash)
        if offset is None:
            return None
        with self._lock, open(self._records, "rb") as fh:
            fh.seek(offset)
            header = fh.read(32 + _LEN.size)
            (length,) = _LEN.unpack(header[32:])
            return fh.read(length)

    def get(self, request_hash: str):
        """Cached response body as a JSON value, or None."""
        raw = self.get_bytes(request_hash)
        if raw is None:
            return None
        return json.loads(raw.decode("utf-8"))

    def put(self, request_hash: str, response_body) -> None:
        """Record a response. Identical re-puts are no-ops; conflicting
        re-puts raise CacheConflict."""
        payload = canonical_json_bytes(response_body)
        digest = bytes.fromhex(request_hash)
        if len(digest) != 32:
            raise DataError(f"request hash must be 32 bytes hex, got {request_hash!r}")
        with self._lock:
            existing_off = self._index.get(request_hash)
            if existing_off is not None:
                with open(self._records, "rb") as fh:
                    fh.seek(existing_off)
                    header = fh.read(32 + _LEN.size)
                    (length,) = _LEN.unpack(header[32:])
                    existing = fh.read(length)
                if existing == payload:
                    return
                raise CacheConflict(request_hash)
            with open(self._records, "ab") as fh:
                offset = fh.tell()
                fh.write(digest)
                fh.write(_LEN.pack(len(payload)))
                fh.write(payload)
            self._index[request_hash] = offset
            self._write_index()

    def stats(self) -> dict:
        size = self._records.stat().st_size if self._records.exists() else 0
        return {
            "directory": str(self.directory),
            "entries": len(self._index),
            "bytes": size,
        }

"""Append-only, partitioned, replayable log of raw event payloads.

This is the system's immutable source of truth. Payload bytes are stored
verbatim and replayed byte-identically; there is no update or delete API.

On-disk layout, one directory per partition (partitions are UTC ingestion
hours, ``YYYYMMDDHH``, so lexicographic order is chronological):

    <root>/<partition_id>/<seq>.log        length-prefixed record frames
    <root>/<partition_id>/manifest.json    per-segment record_count,
                                           byte_length, checksum

Frame format (little endian):

    u64 record_id | u64 ingestion_ts | u32 payload_len | u16 schema_version
    | payload bytes | u32 crc32(header + payload)

The per-frame CRC means a torn write (crash mid-append) is detected and
dropped at the segment tail instead of surfacing as garbage. The manifest is
updated after the data is fsynced and before the append is acknowledged, so
an acked record is always visible to replay; a frame that made it to disk
without a manifest update is recovered on the next writable open.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Mapping

from filelock import FileLock, Timeout

from .errors import CorruptSegment, StoreFull, StoreUnavailable

SCHEMA_VERSION = 1
DEFAULT_ROLL_BYTES = 8 * 1024 * 1024

_HEADER = struct.Struct("<QQIH")  # record_id, ingestion_ts, payload_len, schema_version
_CRC = struct.Struct("<I")
_FRAME_OVERHEAD = _HEADER.size + _CRC.size

_MANIFEST = "manifest.json"
_WRITER_LOCK = ".writer.lock"


def partition_for(ingestion_ts_ms: int, scheme: str = "hourly") -> str:
    """Partition key for a server timestamp (epoch ms, UTC)."""
    dt = datetime.fromtimestamp(ingestion_ts_ms / 1000.0, tz=timezone.utc)
    if scheme == "hourly":
        return dt.strftime("%Y%m%d%H")
    if scheme == "daily":
        return dt.strftime("%Y%m%d")
    raise ValueError(f"unknown partition scheme: {scheme!r}")


@dataclass(frozen=True)
class RawRecord:
    """One collected event, byte-exact as received."""

    partition_id: str
    record_id: int
    ingestion_ts: int
    schema_version: int
    payload: bytes


def _encode_frame(record_id: int, ingestion_ts: int, payload: bytes) -> bytes:
    header = _HEADER.pack(record_id, ingestion_ts, len(payload), SCHEMA_VERSION)
    crc = zlib.crc32(header + payload) & 0xFFFFFFFF
    return header + payload + _CRC.pack(crc)


def _decode_frames(buf: bytes, expected_id: int, where: str):
    """Parse frames from a segment buffer.

    Returns (records, valid_byte_length, torn_tail). A malformed frame at the
    very end of the buffer is reported as a torn tail (crash artifact); a
    malformed frame followed by more bytes means the segment is corrupt.
    """
    records = []
    offset = 0
    n = len(buf)
    while offset < n:
        if n - offset < _HEADER.size:
            return records, offset, True
        record_id, ingestion_ts, payload_len, schema_version = _HEADER.unpack_from(buf, offset)
        end = offset + _HEADER.size + payload_len + _CRC.size
        if end > n:
            return records, offset, True
        payload = buf[offset + _HEADER.size : offset + _HEADER.size + payload_len]
        (crc,) = _CRC.unpack_from(buf, end - _CRC.size)
        if zlib.crc32(buf[offset : end - _CRC.size]) & 0xFFFFFFFF != crc:
            if end == n:
                return records, offset, True
            raise CorruptSegment(f"bad frame checksum in {where}", offset=offset)
        if record_id != expected_id:
            raise CorruptSegment(
                f"record id gap in {where}", expected=expected_id, found=record_id
            )
        records.append((record_id, ingestion_ts, schema_version, payload))
        expected_id += 1
        offset = end
    return records, offset, False


def _atomic_write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(".tmp")
    data = json.dumps(obj, sort_keys=True).encode()
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


class _Partition:
    """Writer-side state for one partition. Guarded by its own lock."""

    def __init__(self, root: Path, partition_id: str):
        self.partition_id = partition_id
        self.dir = root / partition_id
        self.lock = threading.Lock()
        self.segments: list[dict] = []
        self.next_seq = 0
        self.next_record_id = 0
        self.last_ingestion_ts = 0
        self._fh = None
        self._hasher = hashlib.sha256()
        self._dirty = False

    # -- manifest ------------------------------------------------------------

    def manifest_path(self) -> Path:
        return self.dir / _MANIFEST

    def load(self) -> None:
        mpath = self.manifest_path()
        if mpath.exists():
            manifest = json.loads(mpath.read_bytes())
            self.segments = manifest["segments"]
            self.next_seq = manifest["next_seq"]
        self.next_record_id = sum(s["record_count"] for s in self.segments)
        self.last_ingestion_ts = 0

    def write_manifest(self) -> None:
        _atomic_write_json(
            self.manifest_path(),
            {"schema_version": SCHEMA_VERSION, "next_seq": self.next_seq, "segments": self.segments},
        )
        self._dirty = False

    def total_bytes(self) -> int:
        return sum(s["byte_length"] for s in self.segments)

    # -- recovery ------------------------------------------------------------

    def recover(self) -> None:
        """Reconcile manifest with segment files after a possible crash.

        Truncates a torn tail frame, adopts frames that were written but not
        yet recorded in the manifest, and garbage-collects files left behind
        by an interrupted compaction.
        """
        self.dir.mkdir(parents=True, exist_ok=True)
        self.load()
        if not self.segments:
            self._start_segment()
            self.write_manifest()
        known = {s["name"] for s in self.segments}
        for path in self.dir.iterdir():
            if path.name in known or path.name == _MANIFEST:
                continue
            if path.suffix in (".log", ".tmp"):
                path.unlink()

        # Sealed segments must match their manifest entries exactly.
        expected = 0
        for seg in self.segments[:-1]:
            expected = self._verify_sealed(seg, expected)

        active = self.segments[-1]
        apath = self.dir / active["name"]
        buf = apath.read_bytes() if apath.exists() else b""
        records, valid_len, torn = _decode_frames(buf, expected, str(apath))
        if torn:
            with open(apath, "r+b") as f:
                f.truncate(valid_len)
                f.flush()
                os.fsync(f.fileno())
        active["record_count"] = len(records)
        active["byte_length"] = valid_len
        self._hasher = hashlib.sha256(buf[:valid_len])
        active["checksum"] = self._hasher.hexdigest()
        if records:
            self.last_ingestion_ts = max(self.last_ingestion_ts, records[-1][1])
        self.next_record_id = expected + len(records)
        self.write_manifest()

    def _verify_sealed(self, seg: dict, expected_first_id: int) -> int:
        path = self.dir / seg["name"]
        buf = path.read_bytes()
        if len(buf) != seg["byte_length"]:
            raise CorruptSegment(f"sealed segment length mismatch: {path}")
        if hashlib.sha256(buf).hexdigest() != seg["checksum"]:
            raise CorruptSegment(f"sealed segment checksum mismatch: {path}")
        records, _, torn = _decode_frames(buf, expected_first_id, str(path))
        if torn or len(records) != seg["record_count"]:
            raise CorruptSegment(f"sealed segment frame damage: {path}")
        if records:
            self.last_ingestion_ts = max(self.last_ingestion_ts, records[-1][1])
        return expected_first_id + len(records)

    # -- writing -------------------------------------------------------------

    def _start_segment(self) -> None:
        name = f"{self.next_seq:06d}.log"
        self.next_seq += 1
        (self.dir / name).touch()
        self.segments.append(
            {
                "name": name,
                "record_count": 0,
                "byte_length": 0,
                "checksum": hashlib.sha256(b"").hexdigest(),
                "sealed": False,
            }
        )
        self._hasher = hashlib.sha256()
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def _roll_if_needed(self, roll_bytes: int) -> None:
        active = self.segments[-1]
        if active["byte_length"] >= roll_bytes:
            active["sealed"] = True
            self._start_segment()

    def append(self, payload: bytes, ingestion_ts: int, roll_bytes: int) -> int:
        # Clamp so ingestion_ts stays non-decreasing even if the clock steps back.
        ingestion_ts = max(ingestion_ts, self.last_ingestion_ts)
        self.last_ingestion_ts = ingestion_ts
        self._roll_if_needed(roll_bytes)
        active = self.segments[-1]
        if self._fh is None:
            self._fh = open(self.dir / active["name"], "ab")
        record_id = self.next_record_id
        frame = _encode_frame(record_id, ingestion_ts, payload)
        self._fh.write(frame)
        self._hasher.update(frame)
        active["record_count"] += 1
        active["byte_length"] += len(frame)
        active["checksum"] = self._hasher.hexdigest()
        self.next_record_id += 1
        self._dirty = True
        return record_id

    def commit(self) -> None:
        """fsync pending frames and publish the manifest."""
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())
        if self._dirty:
            self.write_manifest()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class RawStore:
    """Partitioned append-only log.

    One writable instance per root at a time (an OS-level lock file enforces
    this); any number of read-only instances may replay concurrently.
    """

    def __init__(
        self,
        root: str | Path,
        writable: bool = False,
        scheme: str = "hourly",
        roll_bytes: int = DEFAULT_ROLL_BYTES,
        max_bytes: int | None = None,
    ):
        self.root = Path(root)
        self.scheme = scheme
        self.roll_bytes = roll_bytes
        self.max_bytes = max_bytes
        self.writable = writable
        self._partitions: dict[str, _Partition] = {}
        self._map_lock = threading.Lock()
        self._writer_lock = None
        self._bytes_stored = 0
        if writable:
            self.root.mkdir(parents=True, exist_ok=True)
            self._writer_lock = FileLock(str(self.root / _WRITER_LOCK))
            try:
                self._writer_lock.acquire(timeout=0)
            except Timeout:
                raise StoreUnavailable("another writer holds the store lock", root=str(self.root))
            for pdir in sorted(self.root.iterdir()):
                if pdir.is_dir():
                    self._open_partition(pdir.name)
            self._bytes_stored = sum(p.total_bytes() for p in self._partitions.values())

    # -- partitions ------------------------------------------------------------

    def _open_partition(self, partition_id: str) -> _Partition:
        part = _Partition(self.root, partition_id)
        part.recover()
        self._partitions[partition_id] = part
        return part

    def _partition(self, partition_id: str) -> _Partition:
        with self._map_lock:
            part = self._partitions.get(partition_id)
            if part is None:
                part = self._open_partition(partition_id)
            return part

    def partition_ids(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def total_bytes(self) -> int:
        total = 0
        for pid in self.partition_ids():
            mpath = self.root / pid / _MANIFEST
            if mpath.exists():
                manifest = json.loads(mpath.read_bytes())
                total += sum(s["byte_length"] for s in manifest["segments"])
        return total

    # -- appends ---------------------------------------------------------------

    def _require_writable(self) -> None:
        if not self.writable:
            raise StoreUnavailable("store opened read-only")

    def _check_budget(self, incoming: int) -> None:
        if self.max_bytes is not None and self._bytes_stored + incoming > self.max_bytes:
            raise StoreFull("disk budget exceeded", budget=self.max_bytes)

    def append(self, payload: bytes, ingestion_ts: int, sync: bool = True) -> tuple[str, int]:
        """Append one payload; returns (partition_id, record_id).

        With ``sync=True`` (the default) the record is durable before this
        returns. ``sync=False`` defers the barrier to ``commit_all`` so batch
        callers pay for one fsync instead of one per record.
        """
        self._require_writable()
        if not payload:
            raise ValueError("payload must be non-empty")
        self._check_budget(len(payload) + _FRAME_OVERHEAD)
        pid = partition_for(ingestion_ts, self.scheme)
        part = self._partition(pid)
        with part.lock:
            record_id = part.append(payload, ingestion_ts, self.roll_bytes)
            self._bytes_stored += len(payload) + _FRAME_OVERHEAD
            if sync:
                part.commit()
        return pid, record_id

    def append_batch(self, payloads: list[bytes], ingestion_ts: int) -> list[tuple[str, int]]:
        """Append many payloads with a single durability barrier at the end."""
        acks = []
        try:
            for payload in payloads:
                acks.append(self.append(payload, ingestion_ts, sync=False))
        finally:
            self.commit_all()
        return acks

    def commit_all(self) -> None:
        """Durability barrier for everything appended with ``sync=False``."""
        with self._map_lock:
            parts = list(self._partitions.values())
        for part in parts:
            with part.lock:
                part.commit()

    # -- replay ------------------------------------------------------------------

    def replay(
        self,
        start_partition: str | None = None,
        end_partition: str | None = None,
        from_record: int = 0,
    ) -> Iterator[RawRecord]:
        """Stream records in (partition_id, record_id) order.

        ``from_record`` skips records below that offset in the first partition
        of the range. Payloads are byte-identical to what was appended.
        """
        if start_partition is not None and end_partition is not None:
            if start_partition > end_partition:
                raise ValueError("start partition after end partition")
        first = True
        for pid in self.partition_ids():
            if start_partition is not None and pid < start_partition:
                continue
            if end_partition is not None and pid > end_partition:
                continue
            start = from_record if first else 0
            first = False
            yield from self._replay_partition(pid, start)

    def replay_since(self, watermarks: Mapping[str, int]) -> Iterator[RawRecord]:
        """Records not yet covered by ``watermarks`` (partition -> consumed count)."""
        for pid in self.partition_ids():
            yield from self._replay_partition(pid, watermarks.get(pid, 0))

    def current_watermarks(self) -> dict[str, int]:
        marks = {}
        for pid in self.partition_ids():
            mpath = self.root / pid / _MANIFEST
            if mpath.exists():
                manifest = json.loads(mpath.read_bytes())
                marks[pid] = sum(s["record_count"] for s in manifest["segments"])
        return marks

    def _replay_partition(self, partition_id: str, from_record: int) -> Iterator[RawRecord]:
        pdir = self.root / partition_id
        mpath = pdir / _MANIFEST
        if not mpath.exists():
            return
        manifest = json.loads(mpath.read_bytes())
        expected = 0
        for seg in manifest["segments"]:
            spath = pdir / seg["name"]
            buf = spath.read_bytes() if spath.exists() else b""
            covered = buf[: seg["byte_length"]]
            if len(covered) < seg["byte_length"]:
                raise CorruptSegment(f"segment shorter than manifest: {spath}")
            if hashlib.sha256(covered).hexdigest() != seg["checksum"]:
                raise CorruptSegment(f"segment checksum mismatch: {spath}")
            records, _, torn = _decode_frames(covered, expected, str(spath))
            if torn or len(records) != seg["record_count"]:
                raise CorruptSegment(f"segment frame damage: {spath}")
            for record_id, ingestion_ts, schema_version, payload in records:
                if record_id >= from_record:
                    yield RawRecord(partition_id, record_id, ingestion_ts, schema_version, payload)
            expected += seg["record_count"]

    # -- compaction ---------------------------------------------------------------

    def compact_segments(self) -> dict:
        """Merge sealed segments per partition. Replay output is bit-identical
        before and after: frames are self-contained, so merging is pure
        concatenation committed via an atomic manifest swap.
        """
        self._require_writable()
        stats = {"partitions": 0, "segments_before": 0, "segments_after": 0}
        for pid in self.partition_ids():
            part = self._partition(pid)
            with part.lock:
                sealed = [s for s in part.segments if s["sealed"]]
                stats["segments_before"] += len(part.segments)
                if len(sealed) < 2:
                    stats["segments_after"] += len(part.segments)
                    continue
                buf = b"".join((part.dir / s["name"]).read_bytes() for s in sealed)
                merged_name = f"{part.next_seq:06d}.log"
                part.next_seq += 1
                tmp = part.dir / (merged_name + ".tmp")
                with open(tmp, "wb") as f:
                    f.write(buf)
                    f.flush()
                    os.fsync(f.fileno())
                os.replace(tmp, part.dir / merged_name)
                merged = {
                    "name": merged_name,
                    "record_count": sum(s["record_count"] for s in sealed),
                    "byte_length": len(buf),
                    "checksum": hashlib.sha256(buf).hexdigest(),
                    "sealed": True,
                }
                old_names = [s["name"] for s in sealed]
                part.segments = [merged] + [s for s in part.segments if not s["sealed"]]
                part.write_manifest()
                for name in old_names:
                    (part.dir / name).unlink(missing_ok=True)
                stats["partitions"] += 1
                stats["segments_after"] += len(part.segments)
        return stats

    # -- lifecycle ------------------------------------------------------------------

    def close(self) -> None:
        for part in self._partitions.values():
            with part.lock:
                part.commit()
                part.close()
        if self._writer_lock is not None:
            self._writer_lock.release()
            self._writer_lock = None
            self.writable = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

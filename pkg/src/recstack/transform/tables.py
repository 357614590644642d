"""Derived tables on disk: newline-delimited JSON rows plus a manifest.

Rows are serialized canonically (sorted keys, no extra whitespace) so a
table's content hash is a pure function of its row sequence. Readers only
ever see complete tables: data and manifest are swapped in via atomic
renames, manifest last.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from ..errors import StaleInput


def dump_row(row: dict) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"))


@dataclass
class TableManifest:
    table: str
    row_count: int
    content_hash: str
    node_version: int
    input_watermarks: dict = field(default_factory=dict)
    updated_at: int = 0

    def to_dict(self) -> dict:
        return {
            "table": self.table,
            "row_count": self.row_count,
            "content_hash": self.content_hash,
            "node_version": self.node_version,
            "input_watermarks": self.input_watermarks,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableManifest":
        return cls(
            table=d["table"],
            row_count=d["row_count"],
            content_hash=d["content_hash"],
            node_version=d["node_version"],
            input_watermarks=d.get("input_watermarks", {}),
            updated_at=d.get("updated_at", 0),
        )


class TableStore:
    """Directory of tables: <name>.ndjson + <name>.manifest.json."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def data_path(self, table: str) -> Path:
        return self.root / f"{table}.ndjson"

    def manifest_path(self, table: str) -> Path:
        return self.root / f"{table}.manifest.json"

    def exists(self, table: str) -> bool:
        return self.manifest_path(table).exists()

    def table_names(self) -> list[str]:
        return sorted(p.name[: -len(".manifest.json")] for p in self.root.glob("*.manifest.json"))

    def read_manifest(self, table: str) -> TableManifest:
        path = self.manifest_path(table)
        if not path.exists():
            raise StaleInput(f"no manifest for table {table!r}")
        return TableManifest.from_dict(json.loads(path.read_bytes()))

    def read_rows(self, table: str) -> Iterator[dict]:
        path = self.data_path(table)
        if not path.exists():
            raise StaleInput(f"no data for table {table!r}")
        with open(path, "rb") as f:
            for line in f:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def write(
        self,
        table: str,
        rows: Iterable[dict],
        node_version: int,
        input_watermarks: dict | None = None,
    ) -> TableManifest:
        """Atomically replace a table's data and manifest."""
        lines = [dump_row(r) for r in rows]
        data = ("\n".join(lines) + "\n").encode() if lines else b""
        content_hash = hashlib.sha256(data).hexdigest()
        tmp = self.data_path(table).with_suffix(".ndjson.tmp")
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.data_path(table))
        manifest = TableManifest(
            table=table,
            row_count=len(lines),
            content_hash=content_hash,
            node_version=node_version,
            input_watermarks=dict(input_watermarks or {}),
            updated_at=int(time.time() * 1000),
        )
        mtmp = self.manifest_path(table).with_suffix(".manifest.json.tmp")
        mtmp.write_bytes(json.dumps(manifest.to_dict(), sort_keys=True).encode())
        os.replace(mtmp, self.manifest_path(table))
        return manifest

    def verify(self, table: str) -> bool:
        manifest = self.read_manifest(table)
        data = self.data_path(table).read_bytes()
        return hashlib.sha256(data).hexdigest() == manifest.content_hash

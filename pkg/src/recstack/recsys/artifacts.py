"""Content-addressed model artifacts.

A packaged model is a directory named by the sha256 of its canonically
serialized model file, next to the evaluation report, checklist results
and lineage. The same model trained from the same data always lands on
the same version id; loading re-verifies the hash so silent corruption
cannot ship.

Layout: <root>/<version>/{model.json,eval.json,checklist.json,lineage.json}
and <root>/LATEST holding the most recently packaged version id.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

from ..errors import CorruptArtifact, PackageBlocked, UnknownVersion
from .checklist import all_pass
from .evaluate import EvalReport
from .markov import MarkovNextItem

MODEL_FILE = "model.json"
LATEST_FILE = "LATEST"


@dataclass(frozen=True)
class ArtifactInfo:
    version: str
    path: Path


def serialize_model(model: MarkovNextItem) -> bytes:
    """Canonical bytes: stable key order, sorted sparse triples."""
    model._require_fitted()
    doc = {
        "alpha": model.alpha,
        "vocab": list(model.vocab_),
        "counts": sorted(
            [i, j, c] for i, row in model.counts_.items() for j, c in row.items()
        ),
        "popularity": sorted(model.popularity_.items()),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def deserialize_model(data: bytes) -> MarkovNextItem:
    try:
        doc = json.loads(data)
        model = MarkovNextItem(alpha=doc["alpha"])
        model.vocab_ = tuple(doc["vocab"])
        counts: dict[str, dict[str, int]] = {}
        for i, j, c in doc["counts"]:
            counts.setdefault(i, {})[j] = c
        model.counts_ = counts
        model.row_totals_ = {i: sum(row.values()) for i, row in counts.items()}
        model.popularity_ = {sku: n for sku, n in doc["popularity"]}
        model.n_pairs_ = sum(model.row_totals_.values())
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptArtifact(f"model file does not parse: {exc}") from exc
    return model


def model_version(model_bytes: bytes) -> str:
    return hashlib.sha256(model_bytes).hexdigest()


def _write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def package(
    root: str | Path,
    model: MarkovNextItem,
    eval_report: EvalReport,
    checklist: list[dict],
    lineage: dict,
) -> ArtifactInfo:
    if not all_pass(checklist):
        failed = [c["name"] for c in checklist if c["status"] != "pass"]
        raise PackageBlocked(f"checklist failures: {', '.join(failed)}")
    root = Path(root)
    model_bytes = serialize_model(model)
    version = model_version(model_bytes)
    vdir = root / version
    vdir.mkdir(parents=True, exist_ok=True)
    _write(vdir / MODEL_FILE, model_bytes)
    _write(vdir / "eval.json", json.dumps(eval_report.to_dict(), indent=2, sort_keys=True).encode())
    _write(vdir / "checklist.json", json.dumps(checklist, indent=2, sort_keys=True).encode())
    meta = dict(lineage)
    meta["created_at"] = int(time.time() * 1000)
    _write(vdir / "lineage.json", json.dumps(meta, indent=2, sort_keys=True).encode())
    _write(root / LATEST_FILE, (version + "\n").encode())
    return ArtifactInfo(version=version, path=vdir)


def resolve_version(root: str | Path, version: str = "latest") -> str:
    root = Path(root)
    if version == "latest":
        latest = root / LATEST_FILE
        if not latest.exists():
            raise UnknownVersion("no packaged model yet")
        version = latest.read_text().strip()
    if not (root / version / MODEL_FILE).exists():
        raise UnknownVersion(f"no artifact for version {version!r}")
    return version


def load_artifact(root: str | Path, version: str = "latest") -> tuple[MarkovNextItem, dict]:
    """Load and hash-verify one artifact; returns (model, metadata)."""
    root = Path(root)
    version = resolve_version(root, version)
    vdir = root / version
    model_bytes = (vdir / MODEL_FILE).read_bytes()
    if model_version(model_bytes) != version:
        raise CorruptArtifact(f"hash mismatch for version {version}")
    model = deserialize_model(model_bytes)
    meta = {"version": version, "path": vdir}
    for name in ("eval", "checklist", "lineage"):
        path = vdir / f"{name}.json"
        meta[name] = json.loads(path.read_bytes()) if path.exists() else None
    return model, meta


def list_versions(root: str | Path) -> list[str]:
    root = Path(root)
    if not root.exists():
        return []
    return sorted(p.name for p in root.iterdir() if p.is_dir() and (p / MODEL_FILE).exists())

"""HTTP collection endpoint for client events.

Ingest is deliberately dumb (ELT): a body only has to parse as a JSON
object to be accepted, and the stored payload is the received bytes,
verbatim. Semantic validation (event types, required fields) happens in
the transform stage, where bad events land in a rejects table instead of
being bounced at the door.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import MalformedPayload, StoreFull, StoreUnavailable
from .rawstore import RawStore


def _now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class CollectAck:
    record_id: int
    partition_id: str


class Collector:
    """Validates syntax, assigns the server timestamp, appends verbatim."""

    def __init__(self, store: RawStore):
        self.store = store

    @staticmethod
    def _check_parseable(body: bytes) -> None:
        try:
            doc = json.loads(body)
        except (ValueError, UnicodeDecodeError):
            raise MalformedPayload("body is not valid JSON")
        if not isinstance(doc, dict):
            raise MalformedPayload("body must be a key-value document")

    def collect(self, body: bytes, received_at: int | None = None) -> CollectAck:
        """Append one event; the ack is returned only after a durable write."""
        self._check_parseable(body)
        ts = _now_ms() if received_at is None else received_at
        try:
            partition_id, record_id = self.store.append(body, ts, sync=True)
        except StoreFull as exc:
            raise StoreUnavailable(str(exc))
        return CollectAck(record_id=record_id, partition_id=partition_id)

    def batch_collect(self, bodies: list[bytes], received_at: int | None = None) -> list[dict]:
        """Append each parseable body in list order; one fsync for the batch.

        Returns one outcome dict per body. A store failure aborts the
        remainder: outcomes collected so far are attached to the raised
        StoreUnavailable, and records already appended stay appended.
        """
        ts = _now_ms() if received_at is None else received_at
        results: list[dict] = []
        try:
            for body in bodies:
                try:
                    self._check_parseable(body)
                except MalformedPayload as exc:
                    results.append({"ok": False, "error": exc.code, "detail": str(exc)})
                    continue
                try:
                    partition_id, record_id = self.store.append(body, ts, sync=False)
                except (StoreFull, StoreUnavailable) as exc:
                    err = StoreUnavailable(str(exc))
                    err.partial_results = results
                    raise err
                results.append({"ok": True, "record_id": record_id, "partition_id": partition_id})
        finally:
            self.store.commit_all()
        return results


def create_ingest_app(collector: Collector) -> FastAPI:
    app = FastAPI(title="recstack ingest", docs_url=None, redoc_url=None)

    @app.post("/collect")
    async def collect(request: Request):
        body = await request.body()
        try:
            ack = collector.collect(body, _now_ms())
        except MalformedPayload as exc:
            return JSONResponse({"error": exc.code, "detail": str(exc)}, status_code=400)
        except StoreUnavailable as exc:
            return JSONResponse({"error": exc.code, "detail": str(exc)}, status_code=503)
        return {"record_id": ack.record_id, "partition_id": ack.partition_id}

    @app.post("/collect/batch")
    async def collect_batch(request: Request):
        body = await request.body()
        bodies = [line for line in body.split(b"\n") if line.strip()]
        try:
            results = collector.batch_collect(bodies, _now_ms())
        except StoreUnavailable as exc:
            partial = getattr(exc, "partial_results", [])
            return JSONResponse(
                {"error": exc.code, "detail": str(exc), "results": partial}, status_code=503
            )
        return {"results": results}

    @app.get("/health")
    async def health():
        return {"status": "ok", "partitions": len(collector.store.partition_ids())}

    return app

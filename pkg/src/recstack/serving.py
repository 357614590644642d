"""Versioned model server with atomic hot swap.

Pull-based: the server loads artifacts from the artifact root on demand
(stage, then activate). Loading re-verifies the content hash and re-runs
the behavioral checklist, so a corrupt or misbehaving artifact can be
staged by nobody. Activation replaces a single reference; a request reads
that reference once, so every response is served by exactly one model
version and carries its id.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .errors import BadRequest, ChecklistFail, NoModel, NothingStaged, RecstackError
from .recsys import behavioral_checklist, load_artifact
from .recsys.checklist import all_pass
from .recsys.markov import MarkovNextItem


@dataclass(frozen=True)
class LoadedModel:
    version: str
    model: MarkovNextItem


class ServingService:
    def __init__(self, artifact_root: str | Path):
        self.artifact_root = Path(artifact_root)
        self._active: LoadedModel | None = None
        self._staged: LoadedModel | None = None

    def load(self, version: str = "latest") -> str:
        """Stage one artifact: hash-verify, deserialize, re-run the checklist."""
        model, meta = load_artifact(self.artifact_root, version)
        checks = behavioral_checklist(model)
        if not all_pass(checks):
            failed = [c["name"] for c in checks if c["status"] != "pass"]
            raise ChecklistFail(f"artifact {meta['version']} fails checks: {', '.join(failed)}")
        self._staged = LoadedModel(version=meta["version"], model=model)
        return self._staged.version

    def activate(self) -> str:
        if self._staged is None:
            raise NothingStaged("load a version before activating")
        self._active = self._staged  # single reference swap: atomic for readers
        self._staged = None
        return self._active.version

    def serve(self, sku: str | None, k: int) -> dict:
        active = self._active
        if not sku:
            raise BadRequest("missing context sku")
        if k < 1:
            raise BadRequest(f"k must be >= 1, got {k}")
        if active is None:
            raise NoModel("no active model")
        return {
            "items": active.model.recommend(sku, k),
            "model_version": active.version,
            "served_at": int(time.time() * 1000),
        }

    def status(self) -> dict:
        return {
            "status": "ok",
            "active_version": self._active.version if self._active else None,
            "staged_version": self._staged.version if self._staged else None,
        }


_HTTP_STATUS = {
    "BAD_REQUEST": 400,
    "NO_MODEL": 503,
    "UNKNOWN_VERSION": 404,
    "CORRUPT_ARTIFACT": 409,
    "CHECKLIST_FAIL": 409,
    "NOTHING_STAGED": 409,
}


def create_serving_app(service: ServingService) -> FastAPI:
    app = FastAPI(title="recstack-serving")

    @app.exception_handler(RecstackError)
    async def on_error(request, exc: RecstackError):
        status = _HTTP_STATUS.get(exc.code, 500)
        return JSONResponse(status_code=status, content={"error": exc.code, "detail": str(exc)})

    @app.get("/recommend")
    def recommend(sku: str | None = None, k: int = 10):
        return service.serve(sku, k)

    @app.post("/admin/load")
    def admin_load(body: dict):
        version = service.load(body.get("version", "latest"))
        return {"staged_version": version}

    @app.post("/admin/activate")
    def admin_activate():
        return {"active_version": service.activate()}

    @app.get("/health")
    def health():
        return service.status()

    return app

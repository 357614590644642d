"""REST surface over the scheduler; this is the API the console consumes."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..errors import RecstackError
from .flowspec import FlowSpec
from .scheduler import Orchestrator

_HTTP_STATUS = {
    "UNKNOWN_FLOW": 404,
    "UNKNOWN_RUN": 404,
    "RUN_NOT_TERMINAL": 409,
    "RUN_NOT_FAILED": 409,
    "RUN_NOT_ACTIVE": 409,
    "INVALID_SPEC": 400,
}


def create_orchestrator_app(orch: Orchestrator) -> FastAPI:
    app = FastAPI(title="recstack-orchestrator")

    @app.exception_handler(RecstackError)
    async def on_error(request, exc: RecstackError):
        status = _HTTP_STATUS.get(exc.code, 500)
        return JSONResponse(status_code=status, content={"error": exc.code, "detail": str(exc)})

    @app.post("/flows")
    def register_flow(body: dict):
        name = orch.register(FlowSpec.from_dict(body))
        return {"flow": name, "versions": orch.flows()[name]["versions"]}

    @app.get("/flows")
    def list_flows():
        return {"flows": orch.flows()}

    @app.post("/flows/{flow}/runs")
    def start_run(flow: str, body: dict | None = None):
        run_id = orch.run_flow(flow, (body or {}).get("params"))
        return {"run_id": run_id}

    @app.get("/runs")
    def list_runs(status: str | None = None, page: int = 1, page_size: int = 20):
        return orch.list_runs(status=status, page=page, page_size=page_size)

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return orch.get_run(run_id)

    @app.post("/runs/{run_id}/retry")
    def retry_run(run_id: str):
        return {"run_id": orch.retry_run(run_id)}

    @app.post("/runs/{run_id}/cancel")
    def cancel_run(run_id: str):
        orch.cancel_run(run_id)
        return {"run_id": run_id, "status": "cancelling"}

    @app.get("/health")
    def health():
        return {"status": "ok", "flows": len(orch.flows())}

    return app

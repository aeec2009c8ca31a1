from contextlib import asynccontextmanager
from typing import Any, Dict, Optional

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ValidationError

from designlab.config import Config
from designlab.db import find_runs_by_hash, get_run, init_db, list_runs
from designlab.errors import BudgetExceeded, DesignLabError, UnknownNameError
from designlab.models import CertifyRequest, RunSummary
from designlab.services import bound_schemas, evaluate_bound, run_certification


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan: make sure the run ledger exists."""
    init_db()
    yield


app = FastAPI(title=Config.TITLE, version=Config.VERSION, lifespan=lifespan)


def _raise_http(exc: Exception):
    if isinstance(exc, UnknownNameError):
        raise HTTPException(status_code=404, detail=str(exc))
    if isinstance(exc, BudgetExceeded):
        raise HTTPException(status_code=413, detail=str(exc))
    raise HTTPException(status_code=422, detail=str(exc))


def _model_response(model: BaseModel) -> Response:
    # pydantic keeps infinities as strings; the stdlib encoder would reject them
    return Response(content=model.model_dump_json(), media_type="application/json")


@app.get("/api/bounds")
async def api_bounds():
    """List the bound evaluators and the JSON schema of their parameters."""
    return JSONResponse(content=bound_schemas())


@app.post("/api/bound/{name}")
async def api_bound(name: str, params: Dict[str, Any] = Body(default_factory=dict)):
    """Evaluate one named bound."""
    try:
        result = evaluate_bound(name, params)
    except (DesignLabError, ValidationError) as exc:
        _raise_http(exc)
    return _model_response(result)


@app.post("/api/certify")
async def api_certify(request: CertifyRequest):
    """Certify an ensemble as an ε-approximate unitary k-design."""
    try:
        report, _ = await run_in_threadpool(run_certification, request)
    except (DesignLabError, ValidationError) as exc:
        _raise_http(exc)
    return _model_response(report)


@app.get("/api/runs")
async def api_runs(
    command: Optional[str] = Query(None, description="Only runs of this command"),
    config_hash: Optional[str] = Query(None, description="Only runs of this config"),
    limit: int = Query(50, ge=1, le=500, description="Max results"),
):
    """Ledger rows, newest first (or oldest first when filtering by config hash)."""
    if config_hash is not None:
        rows = find_runs_by_hash(config_hash)[:limit]
    else:
        rows = list_runs(command=command, limit=limit)
    return JSONResponse(
        content=[RunSummary.model_validate(row).model_dump() for row in rows],
    )


@app.get("/api/runs/{run_id}")
async def api_run(run_id: int):
    row = get_run(run_id)
    if row is None:
        raise HTTPException(status_code=404, detail="Run not found")
    return JSONResponse(content=RunSummary.model_validate(row).model_dump())


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("designlab.main:app", host="127.0.0.1", port=8000, reload=True)

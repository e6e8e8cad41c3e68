from fastapi import APIRouter, Depends

from dependencies import http_error, parse_or_reject, resolve_request_workers
from harness import render_report, render_summary, run_oracle
from schemas import ExperimentRequest, ReportResponse
from settings import Settings, get_settings

router = APIRouter(prefix="/api/v1", tags=["oracle"])


@router.post("/oracle/exact", response_model=ReportResponse)
def exact(request: ExperimentRequest, settings: Settings = Depends(get_settings)):
    spec = parse_or_reject(request.config)
    budget = spec.oracle.budget or settings.oracle_budget
    try:
        bundle = run_oracle(spec, workers=resolve_request_workers(request, settings), budget=budget)
    except Exception as e:
        raise http_error(e)
    _, digest = render_report(bundle)
    return ReportResponse(content_digest=digest, summary=render_summary(bundle), report=bundle.report, runs=len(bundle.runs))

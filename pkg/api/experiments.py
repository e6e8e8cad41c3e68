from fastapi import APIRouter, Depends

from dependencies import http_error, parse_or_reject, resolve_request_workers
from execution import registered_executors
from harness import render_report, render_summary, run_experiment, simulate
from population import spec_digest
from schemas import (
    ExecutorList,
    ExperimentRequest,
    ReportResponse,
    SimulationRequest,
    SimulationSummary,
    ValidationResponse,
)
from settings import Settings, get_settings

router = APIRouter(prefix="/api/v1", tags=["experiments"])


@router.get("/executors", response_model=ExecutorList)
def list_executors():
    return ExecutorList(executors=registered_executors())


@router.post("/experiments/validate", response_model=ValidationResponse)
def validate_experiment(request: ExperimentRequest):
    spec = parse_or_reject(request.config)
    return ValidationResponse(valid=True, name=spec.name, S=spec.S, design=spec.design, spec_digest=spec_digest(spec))


@router.post("/experiments/run", response_model=ReportResponse)
def run(request: ExperimentRequest, settings: Settings = Depends(get_settings)):
    spec = parse_or_reject(request.config)
    try:
        bundle = run_experiment(spec, workers=resolve_request_workers(request, settings))
    except Exception as e:
        raise http_error(e)
    _, digest = render_report(bundle)
    return ReportResponse(content_digest=digest, summary=render_summary(bundle), report=bundle.report, runs=len(bundle.runs))


@router.post("/experiments/simulate", response_model=SimulationSummary)
def run_simulation(request: SimulationRequest, settings: Settings = Depends(get_settings)):
    spec = parse_or_reject(request.config)
    try:
        return simulate(spec, replications=request.replications,
                        workers=resolve_request_workers(request, settings), progress=False)
    except Exception as e:
        raise http_error(e)

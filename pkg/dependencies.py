# dependencies.py
from fastapi import HTTPException, status

from exceptions import (
    BudgetExceededError,
    ConfigError,
    ContractError,
    HarnessError,
    SizingError,
    SpecValidationError,
)
from harness import parse_experiment_config
from schemas import ExperimentRequest, ExperimentSpec
from settings import Settings


def http_error(exc: Exception) -> HTTPException:
    """Map harness failures onto status codes"""
    if isinstance(exc, SpecValidationError):
        detail = [{"path": v.path, "message": v.message} for v in exc.report.violations]
        return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=detail)
    if isinstance(exc, ConfigError):
        return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc))
    if isinstance(exc, (SizingError, ContractError, BudgetExceededError)):
        return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))
    if isinstance(exc, HarnessError):
        return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(exc))
    return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=f"Experiment failed: {exc}")


def parse_or_reject(config: str) -> ExperimentSpec:
    try:
        return parse_experiment_config(config)
    except HarnessError as exc:
        raise http_error(exc)


def resolve_request_workers(request: ExperimentRequest, settings: Settings) -> int:
    if request.workers is not None:
        return request.workers
    return settings.workers or 1

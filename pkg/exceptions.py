# exceptions.py
from typing import List, Optional, Tuple


class HarnessError(Exception):
    """Base class for every failure the harness raises on purpose"""


class SpecValidationError(HarnessError):
    def __init__(self, report):
        self.report = report
        lines = [f"{v.path}: {v.message}" for v in report.violations]
        super().__init__("invalid population spec:\n  " + "\n  ".join(lines))


class ConfigError(HarnessError):
    """Experiment file could not be parsed or validated"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")


class SizingError(HarnessError):
    pass


class ContractError(HarnessError):
    pass


class UnknownExecutorError(HarnessError):
    pass


class UnknownMethodValueError(HarnessError):
    pass


class BudgetExceededError(HarnessError):
    pass


class RunFailure(HarnessError):
    """An executor failed mid-run; the manifest lists what completed"""

    def __init__(
        self,
        message: str,
        manifest_path: Optional[str] = None,
        completed: Optional[List[Tuple[int, str]]] = None,
        failed: Optional[Tuple[int, str]] = None,
    ):
        self.manifest_path = manifest_path
        self.completed = completed or []
        self.failed = failed
        super().__init__(message)

"""Exception hierarchy shared by the numerical modules and the CLI."""

from __future__ import annotations

from typing import Any


class LevyFBSDEError(Exception):
    """Base class; ``kind`` and ``location`` feed the CLI's structured error record."""

    kind = "error"
    exit_code = 3

    def __init__(self, message: str, location: Any = None, **details: Any):
        super().__init__(message)
        self.message = message
        self.location = location
        self.details = details

    def to_record(self) -> dict:
        record = {"kind": self.kind, "location": self.location, "message": self.message}
        if self.details:
            record["details"] = self.details
        return record


class ConfigError(LevyFBSDEError):
    kind = "ConfigError"
    exit_code = 2


class DegenerateDriver(LevyFBSDEError):
    kind = "DegenerateDriver"
    exit_code = 2


class IndexOutOfRange(LevyFBSDEError, IndexError):
    kind = "IndexOutOfRange"


class NonFinite(LevyFBSDEError):
    kind = "NonFinite"


class RankDeficientRegression(LevyFBSDEError):
    kind = "RankDeficientRegression"


class NoConvergence(LevyFBSDEError):
    kind = "NoConvergence"

    def __init__(self, message: str, residuals: list[float], **details: Any):
        super().__init__(message, location="picard", residuals=list(residuals), **details)
        self.residuals = list(residuals)


class SingularSigma(LevyFBSDEError):
    kind = "SingularSigma"

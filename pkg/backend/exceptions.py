"""
Exceptions
Error hierarchy shared by the backend modules
"""

from typing import Any, Dict, List, Optional


class FissidError(Exception):
    """Base class for every error raised by the toolkit"""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ParameterError(FissidError, ValueError):
    """Invalid physical parameter, box or knob value"""


class NuclearDataError(FissidError, ValueError):
    """Inconsistent or unreadable nuclear data"""


class SimulationError(FissidError):
    """The branching simulation cannot run with the requested input"""


class EstimationError(FissidError):
    """Moment or covariance estimation is not defined for the given data"""


class SurrogateError(FissidError):
    """Gaussian-process training, prediction or serialization failure"""


class InferenceError(FissidError):
    """Posterior evaluation or MCMC sampling failure"""


class DesignError(FissidError):
    """Sequential design failure (CSQ, weights, matching loop)"""


class ConfigError(FissidError):
    """Configuration validation failure listing every problem found"""

    def __init__(self, problems: List[str], path: Optional[str] = None):
        self.problems = list(problems)
        header = f"Invalid configuration{f' in {path}' if path else ''}"
        message = header + ":\n" + "\n".join(f"  - {problem}" for problem in self.problems)
        super().__init__(message, {})

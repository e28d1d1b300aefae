"""Exception hierarchy shared by every module.

Each error carries a short ``kind`` used by the CLI for its
``ERROR:<kind>:`` prefix and exit code mapping.
"""


class SourceDetectionError(Exception):
    kind = "error"
    exit_code = 2


class ParseError(SourceDetectionError, ValueError):
    kind = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInputError(SourceDetectionError, ValueError):
    kind = "empty-input"


class NoInfectedError(SourceDetectionError, ValueError):
    kind = "no-infected"


class DisconnectedEvidenceError(SourceDetectionError, ValueError):
    kind = "disconnected-evidence"


class NotATreeError(SourceDetectionError, ValueError):
    kind = "not-a-tree"


class InvalidTraceError(SourceDetectionError, ValueError):
    kind = "invalid-trace"


class TooLargeError(SourceDetectionError, ValueError):
    kind = "too-large"
    exit_code = 3


class DivergenceError(SourceDetectionError, ValueError):
    kind = "divergence"


class SupercriticalityRequiredError(SourceDetectionError, ValueError):
    kind = "supercriticality-required"


class InfiniteBoundError(SourceDetectionError, ValueError):
    kind = "infinite-bound"


class InfeasibleScenarioError(SourceDetectionError, RuntimeError):
    kind = "infeasible-scenario"
    exit_code = 3


class ConfigError(SourceDetectionError, ValueError):
    kind = "config"
    exit_code = 1

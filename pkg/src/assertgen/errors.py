"""Error types shared across the pipeline.

Every error carries a short machine-readable ``code`` so the orchestrator
and the CLI can map failures onto entry statuses and exit codes without
string-matching exception messages.
"""


class AssertGenError(Exception):
    """Base class for all pipeline errors."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class NoAssertsError(AssertGenError):
    code = "no-asserts"


class NoFocalError(AssertGenError):
    code = "no-focal"


class NoSampleError(AssertGenError):
    code = "no-sample"


class OversizeError(AssertGenError):
    """Raised for both sample-oversize and target-oversize conditions."""

    code = "oversize"

    def __init__(self, which: str):
        self.code = which
        super().__init__(which)


class MalformedResponseError(AssertGenError):
    """Model response could not be parsed; carries the raw text."""

    code = "malformed-response"

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class BackendUnavailableError(AssertGenError):
    code = "backend-unavailable"


class ReplayMissError(AssertGenError):
    code = "replay-miss"


class RunnerMissingError(AssertGenError):
    code = "runner-missing"


class ConfigError(AssertGenError):
    code = "config-error"

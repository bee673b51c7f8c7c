"""Error types shared by the evaluators, audits and the CLI exit codes."""


class PreconditionError(ValueError):
    """A stated hypothesis of the evaluated statement fails (CLI exit 2)."""

    def __init__(self, message: str, checks=None):
        super().__init__(message)
        self.checks = list(checks or [])


class ConsistencyError(ValueError):
    """Audit grid could never satisfy the counting property (CLI exit 3)."""

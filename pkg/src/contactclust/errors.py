"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class ContactClustError(Exception):
    """Base class for all package errors."""


class InputError(ContactClustError, ValueError):
    """Malformed or inconsistent input (shapes, labels, orderings)."""


class DegenerateInputError(InputError):
    """Input is well formed but numerically degenerate (zero population, constant column, ...)."""


class NumericalError(ContactClustError, ArithmeticError):
    """A numerical routine failed (ODE step, eigen-solver)."""


class ValidationError(InputError):
    """Several validation problems collected before failing.

    All problems found during ingestion are reported together rather than
    stopping at the first one.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__(f"{len(self.problems)} validation error(s):\n  " + "\n  ".join(self.problems))

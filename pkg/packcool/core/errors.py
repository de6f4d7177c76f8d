# core/errors.py

from typing import Optional


class PackCoolError(Exception):
    """Base class for every error raised by packcool."""


class InvalidArgumentError(PackCoolError, ValueError):
    pass


class InvalidStateError(PackCoolError, RuntimeError):
    pass


class ConfigError(PackCoolError, ValueError):
    pass


class CheckpointFormatError(PackCoolError, ValueError):
    pass


class NumericalBlowupError(PackCoolError, FloatingPointError):
    """
    Raised when the solver produces a non-finite state.
    `step` is the environment step index inside the episode; the training loop
    re-raises with run context attached.
    """
    def __init__(self, message: str, step: int, context: Optional[str] = None):
        self.message = message
        self.step = step
        self.context = context
        detail = f"{message} (step={step})"
        if context:
            detail = f"{detail} [{context}]"
        super().__init__(detail)

    def __reduce__(self):
        return type(self), (self.message, self.step, self.context)

    def with_context(self, context: str) -> "NumericalBlowupError":
        return NumericalBlowupError(self.message, self.step, context)

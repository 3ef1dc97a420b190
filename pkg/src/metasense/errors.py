"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration. Message names the field."""


class ShapeError(ValueError):
    """Array shapes do not match the declared contract."""


class InfeasibleError(ValueError):
    """An optimization instance has no feasible solution."""


class TrainingError(RuntimeError):
    """Training diverged or otherwise failed; message names the epoch."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage

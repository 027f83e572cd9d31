"""Exception hierarchy. Every error the simulator raises derives from JrcError."""


class JrcError(Exception):
    pass


class SignalError(JrcError, ValueError):
    pass


class AliasingError(SignalError):
    pass


class ConfigError(JrcError, ValueError):
    pass


class ChannelError(JrcError, ValueError):
    pass


class DemodulationError(JrcError):
    """Phase unwrapping became unreliable (excessive noise or wrong PMI)."""


class SyncError(JrcError):
    pass


class RadarError(JrcError):
    pass


class FusionError(JrcError):
    pass


class StageError(JrcError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

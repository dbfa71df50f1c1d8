class RetroplayError(Exception):
    """Base class; the CLI turns these into one-line error records."""

    kind = "error"


class ParameterError(RetroplayError, ValueError):
    kind = "parameter"


class InputError(RetroplayError, ValueError):
    kind = "input"


class CapacityError(RetroplayError):
    kind = "capacity"


class StructureError(RetroplayError):
    kind = "structure"


class TrainingError(RetroplayError, ArithmeticError):
    kind = "training"


class ConfigError(RetroplayError, ValueError):
    kind = "config"

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key

from typing import Optional


class GpuletschedError(Exception):
    """
    base class of every error raised on purpose by gpuletsched
    """


class ConfigurationError(GpuletschedError):
    pass


class ProfileParseError(GpuletschedError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:

        self.line: Optional[int] = line

        if line is not None:

            message = f"line {line}: {message}"

        super().__init__(message)


class ProfileDataError(GpuletschedError):
    def __init__(self, message: str, model: str, batch: int, partition: int) -> None:

        self.model: str = model
        self.batch: int = batch
        self.partition: int = partition

        super().__init__(f"{message} (model={model}, b={batch}, p={partition})")


class GridError(GpuletschedError):
    pass


class CapacityError(GpuletschedError):
    pass


class FitError(GpuletschedError):
    pass


class StateError(GpuletschedError):
    pass


class SharabilityError(GpuletschedError):
    pass


class ResourceBudgetError(GpuletschedError):
    pass

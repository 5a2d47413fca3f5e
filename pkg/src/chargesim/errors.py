"""Exception types shared across the simulator."""


class ChargesimError(Exception):
    """Base class for all errors raised by this package."""

    def to_json(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}


class ConfigError(ChargesimError):
    """Invalid scenario configuration or malformed input file."""


class DataError(ChargesimError):
    """Time series or parameter data that violates a precondition."""


class BatteryBoundsError(ChargesimError):
    """Battery state left its safe envelope (voltage or SoC)."""


class PowerFlowError(ChargesimError):
    """Power flow did not converge or the feeder is malformed."""

    def __init__(self, message: str, worst_bus: str | None = None):
        super().__init__(message)
        self.worst_bus = worst_bus


class InfeasibleProblem(ChargesimError):
    """Controller optimization has no feasible solution."""

    def __init__(self, message: str, step_index: int | None = None,
                 violated: list | None = None):
        super().__init__(message)
        self.step_index = step_index
        self.violated = violated or []


class ScenarioError(ChargesimError):
    """Failure inside the orchestration loop, tagged with the step index."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index

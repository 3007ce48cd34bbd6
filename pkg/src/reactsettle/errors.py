"""Exception hierarchy shared by the simulator modules."""
from __future__ import annotations


class SimulationError(RuntimeError):
    """Base class for aborts raised while stepping a simulation."""

    def __init__(self, message: str, *, time: float | None = None, stage: str | None = None):
        self.time = time
        self.stage = stage
        super().__init__(message)

    def with_context(self, time: float, stage: str) -> "SimulationError":
        return type(self)(self.args[0], time=time, stage=stage)

    def __str__(self) -> str:
        base = super().__str__()
        ctx = []
        if self.stage is not None:
            ctx.append(f"stage={self.stage}")
        if self.time is not None:
            ctx.append(f"t={self.time:.6g} s")
        return f"{base} ({', '.join(ctx)})" if ctx else base


class CflViolation(SimulationError):
    """The time step is too large, e.g. the surface would cross more than one cell."""


class EmptyTank(SimulationError):
    """The surface would leave the admissible range of the tank."""


class DensityBreach(SimulationError):
    """A solids concentration reached the solids density."""


class ConfigError(ValueError):
    """Invalid scenario configuration."""

"""Fault types raised by the model, controller and simulator.

Every fault carries an optional simulation time and the offending state so a
halted run can report exactly where it left the admissible region.
"""

from __future__ import annotations


class SimulationFault(RuntimeError):
    """Base class for all faults that halt a simulation."""

    code = "fault"

    def __init__(self, message: str, *, t: float | None = None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state

    def at(self, t: float, state=None) -> "SimulationFault":
        """Attach time (and state) if not already set; returns self for re-raise."""
        if self.t is None:
            self.t = t
        if self.state is None and state is not None:
            self.state = state
        return self

    def __str__(self) -> str:
        msg = super().__str__()
        if self.t is not None:
            msg = f"{msg} (t={self.t:.6g} s)"
        return msg


class DynamicsFault(SimulationFault):
    """Inertia matrix singular or ill-conditioned."""

    code = "dynamics"


class DomainFault(DynamicsFault):
    """A swing or bar angle left the open interval (-pi/2, pi/2)."""

    code = "domain"


class BarrierDomainFault(SimulationFault):
    """Inter-drone error reached the barrier pole, e_y**2 >= rho."""

    code = "barrier"


class ActuationFault(SimulationFault):
    """Commanded thrust has no positive vertical component."""

    code = "actuation"


class ConfigurationFault(ValueError):
    """Scenario or initial geometry is inconsistent; raised before simulating."""

    code = "config"

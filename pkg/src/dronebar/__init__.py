"""Two-drone cable-suspended bar transport: model, controller, simulator and audits."""

from .control import Gains, Setpoint
from .dynamics import GeneralizedState, PhysicalParams
from .errors import (
    ActuationFault,
    BarrierDomainFault,
    ConfigurationFault,
    DomainFault,
    DynamicsFault,
    SimulationFault,
)

__version__ = "0.1.0"

__all__ = [
    "ActuationFault",
    "BarrierDomainFault",
    "ConfigurationFault",
    "DomainFault",
    "DynamicsFault",
    "Gains",
    "GeneralizedState",
    "PhysicalParams",
    "Setpoint",
    "SimulationFault",
    "__version__",
]

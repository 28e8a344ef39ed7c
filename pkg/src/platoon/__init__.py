"""Motion planning for tight multi-lane vehicle platoons."""

from .dynamics import ControlInput, Limits, VehicleParams, VehicleState, step
from .formation import PlatoonConfiguration, RoadGeometry, build_reference, expand
from .geometry import OrientedPolytope, footprint, polytope_distance
from .planner import FleetTrajectory, ManeuverInfeasible, PlannerConfig, plan_maneuver

__version__ = "0.1.0"

__all__ = [
    "ControlInput",
    "FleetTrajectory",
    "Limits",
    "ManeuverInfeasible",
    "OrientedPolytope",
    "PlannerConfig",
    "PlatoonConfiguration",
    "RoadGeometry",
    "VehicleParams",
    "VehicleState",
    "build_reference",
    "expand",
    "footprint",
    "plan_maneuver",
    "polytope_distance",
    "step",
]

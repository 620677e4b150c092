"""Fixed-step rigid-body simulation with LCP contact and friction."""

from .bodies import (
    BallJoint,
    Box,
    Contact,
    ContactImpulse,
    FrictionEvent,
    FrictionState,
    HalfSpace,
    RigidBody,
    SimulationError,
    SolverSettings,
    Sphere,
    WorldError,
    WorldState,
    validate_world,
)
from .collision import detect_contacts
from .solver import classify_friction, classify_pair, solve_contacts
from .stepper import ImplicitSpring, StepDiagnostics, step

__all__ = [
    "BallJoint",
    "Box",
    "Contact",
    "ContactImpulse",
    "FrictionEvent",
    "FrictionState",
    "HalfSpace",
    "ImplicitSpring",
    "RigidBody",
    "SimulationError",
    "SolverSettings",
    "Sphere",
    "StepDiagnostics",
    "WorldError",
    "WorldState",
    "classify_friction",
    "classify_pair",
    "detect_contacts",
    "solve_contacts",
    "step",
    "validate_world",
]

from .fk import (
    BackboneShape,
    RodState,
    forward_kinematics,
    solve_initial_state,
    tip_equilibrium_residual,
    tip_position,
)
from .shooting import shooting_fk

__all__ = [
    "BackboneShape",
    "RodState",
    "forward_kinematics",
    "solve_initial_state",
    "tip_equilibrium_residual",
    "tip_position",
    "shooting_fk",
]

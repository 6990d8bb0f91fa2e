"""Randers metrics from Zermelo data, Finsler geodesics and submersions,
reachability of horizontal geodesic fields, and Jacobi triples."""

from .errors import ConfigError, DomainError, FinslerError, NumericError, PreconditionError
from .minkowski import (
    RandersDatum,
    cartan_tensor,
    fundamental_tensor,
    legendre,
    randers_norm,
)
from .scene import SCENARIOS, Scene, curve_length, eval_scene, scenario, wrap
from .geodesic import (
    PhaseState,
    Trajectory,
    flag_curvature,
    geodesic_accel,
    integrate_geodesic,
    liouville_volume_check,
    zermelo_geodesic,
)
from .submersion import horizontal_lift_geodesic, horizontal_lift_vector, is_horizontal, submersion_ball_check
from .control import (
    ControlSystem,
    ReachGrid,
    VectorField,
    Word,
    apply_word,
    attainable_set,
    compare_grid,
    lie_rank,
    orbit_set,
    lifted_fan_system,
)
from .jacobi import (
    JacobiField,
    JacobiTriple,
    Subspace,
    a_tensor,
    catalog,
    classify_subspace,
    omega,
    riccati_operator,
    riccati_residual,
    singular_instants,
    solve_jacobi,
    transverse_triple,
    vertical_bundle,
    wilking_decompose,
)

__version__ = "0.1.0"

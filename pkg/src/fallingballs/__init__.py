"""Two point masses falling onto a floor: section dynamics, periodic orbits and diagnostics."""

from .core import (
    AmbiguousRegion,
    InvalidStateError,
    ParameterError,
    SectionPoint,
    alpha,
    big_f,
    corner_points,
    dt_dm,
    fixed_point,
    fixed_point_period,
    in_phase_space,
    involution,
    inverse_map,
    jacobian_dt,
    map_t,
    region_of,
    roof_tau,
    tau_partials,
)
from .eventsim import flow_evolve, lift_to_flow, next_event, poincare_return, simulate
from .symbolic import (
    Itinerary,
    classify_intersection_shape,
    estimate_symbolic_metric,
    full_shift_interval,
    itinerary_of,
    separation,
    trace_singularity,
    verify_quadrangular,
)
from .orbits import PeriodicOrbit, find_orbit, flow_period, multipliers, orbit_dm, pn_itinerary
from .analysis import (
    angle_contraction_check,
    c0_convergence,
    c1_convergence,
    continued_fraction,
    correlation_diagnostic,
    dratio_limit_dm,
    holder_direction_check,
    lyapunov_exponent,
    ratio_limit,
    ratio_limit_general,
)

__version__ = "0.1.0"

"""Shared numerical defaults.  The CLI config file may override any of these."""

# event-time gap below which a point counts as lying on a singularity curve
EPS_BOUNDARY = 1e-11

# central finite-difference steps
FD_STEP_SPACE = 1e-6
FD_STEP_MASS = 1e-6

# Newton solver for periodic orbits
NEWTON_TOL = 1e-12
NEWTON_STEP_TOL = 1e-14
NEWTON_MAX_ITER = 60
NEWTON_MAX_HALVINGS = 20
ORBIT_RESIDUAL_OK = 1e-10

# largest P_n solved by default (period n^2 + 2n)
PN_MAX = 8

# bisection tolerance when tracing singularity curves
TRACE_TOL = 1e-10

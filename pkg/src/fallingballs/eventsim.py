"""Event-driven simulation of two point masses bouncing on a floor.

Free flight is parabolic (g = 1), so states are only ever evaluated at
event times: floor bounces of the lower ball and elastic ball-ball
collisions.  This module does not use any of the closed-form section
formulas and serves as the physical oracle for them.
"""
from __future__ import annotations

import csv
import math
from typing import NamedTuple

from . import constants as C
from .core import InvalidStateError, SectionPoint, check_mass

FLOOR = "floor"
COLLISION = "collision"
SECTION = "section"

# offsets this close to a return time are snapped onto the section
SNAP = 1e-12


class FlowState(NamedTuple):
    x1: float
    v1: float
    x2: float
    v2: float
    t: float = 0.0


class Event(NamedTuple):
    kind: str
    time: float
    state: FlowState
    ambiguous: bool = False


class Return(NamedTuple):
    point: SectionPoint
    time: float
    bumps: int
    ambiguous: bool


class SuspensionPoint(NamedTuple):
    point: SectionPoint
    offset: float
    ambiguous: bool = False


def energy(s, m):
    return 0.5 * m * s.v1**2 + 0.5 * (1 - m) * s.v2**2 + m * s.x1 + (1 - m) * s.x2


def section_coordinates(s, m):
    return SectionPoint(0.5 * m * s.v1**2, s.v2 - s.v1)


def lift_to_flow(p, m):
    """Full state of a section point: lower ball on the floor moving up."""
    check_mass(m)
    h, z = p
    if not 0 < h < 0.5:
        raise InvalidStateError(f"h={h} outside (0, 1/2)")
    v1 = math.sqrt(2.0 * h / m)
    v2 = z + v1
    x2 = (0.5 - h - 0.5 * (1 - m) * v2 * v2) / (1 - m)
    if x2 <= 0:
        raise InvalidStateError("upper ball would be below the floor")
    return FlowState(0.0, v1, x2, v2, 0.0)


def _floor_time(x1, v1):
    # positive root of x1 + v1 t - t^2/2 = 0, written without cancellation
    s = math.sqrt(v1 * v1 + 2.0 * x1)
    if v1 >= 0:
        return v1 + s, s
    return 2.0 * x1 / (s - v1), s


def next_event(s, m, eps=None):
    """Advance to the next floor bounce or ball-ball collision and apply it."""
    eps = C.EPS_BOUNDARY if eps is None else eps
    t_floor, speed = _floor_time(s.x1, s.v1)
    closing = s.v1 - s.v2
    t_coll = (s.x2 - s.x1) / closing if closing > 0 else math.inf
    if not math.isfinite(t_floor) or t_floor < 0:
        raise RuntimeError(f"no future event from {s}")
    ambiguous = abs(t_floor - t_coll) < eps
    if t_coll < t_floor:
        dt = t_coll
        x = s.x1 + s.v1 * dt - 0.5 * dt * dt
        u1, u2 = s.v1 - dt, s.v2 - dt
        w1 = (2 * m - 1) * u1 + 2 * (1 - m) * u2
        w2 = 2 * m * u1 - (2 * m - 1) * u2
        return Event(COLLISION, s.t + dt, FlowState(x, w1, x, w2, s.t + dt), ambiguous)
    dt = t_floor
    x2 = s.x2 + s.v2 * dt - 0.5 * dt * dt
    return Event(FLOOR, s.t + dt, FlowState(0.0, speed, x2, s.v2 - dt, s.t + dt), ambiguous)


def _run_to_section(p, m, eps, log=None):
    s = lift_to_flow(p, m)
    ev = next_event(s, m, eps)
    if ev.kind != COLLISION:
        raise InvalidStateError(f"{p}: lower ball returns to the floor before the collision")
    ambiguous = ev.ambiguous
    if log is not None:
        log.append(ev)
    ev = next_event(ev.state, m, eps)
    bumps = 0
    while True:
        if ev.kind != FLOOR:
            raise RuntimeError("two consecutive ball-ball collisions")
        ahead = next_event(ev.state, m, eps)
        ambiguous = ambiguous or ahead.ambiguous
        if ahead.kind == COLLISION:
            if log is not None:
                log.append(ev._replace(kind=SECTION))
            return ev.state, bumps, ambiguous
        if log is not None:
            log.append(ev)
        bumps += 1
        ev = ahead


def poincare_return(p, m, eps=None):
    """Simulate from a section point to the next section crossing.

    ``bumps`` counts floor bounces between the collision and the return.
    ``ambiguous`` is set when a floor bounce and a collision were closer
    than ``eps`` in time, i.e. the orbit passes a singularity curve.
    """
    s, bumps, ambiguous = _run_to_section(p, m, eps)
    return Return(section_coordinates(s, m), s.t, bumps, ambiguous)


def flow_evolve(p, s, t, m, eps=None):
    """Suspension flow: advance (p, s) by time t using simulated returns."""
    if t < 0:
        raise ValueError("flow_evolve only runs forward in time")
    first = poincare_return(p, m, eps)
    if not 0 <= s < first.time + SNAP:
        raise ValueError(f"offset {s} outside [0, tau(p)) = [0, {first.time})")
    remaining = s + t
    ambiguous = False
    r = first
    while remaining >= r.time - SNAP:
        ambiguous = ambiguous or r.ambiguous
        remaining = max(remaining - r.time, 0.0)
        p = r.point
        r = poincare_return(p, m, eps)
    return SuspensionPoint(p, remaining, ambiguous)


def simulate(p, m, returns, eps=None):
    """Event log for ``returns`` consecutive Poincare returns starting at p.

    The log starts with the initial section state; section crossings are
    tagged ``SECTION`` instead of ``FLOOR``.
    """
    s0 = lift_to_flow(p, m)
    log = [Event(SECTION, 0.0, s0)]
    t0 = 0.0
    for _ in range(returns):
        part = []
        s, _, _ = _run_to_section(p, m, eps, log=part)
        for ev in part:
            st = ev.state._replace(t=ev.state.t + t0)
            log.append(ev._replace(time=st.t, state=st))
        t0 += s.t
        p = section_coordinates(s, m)
    return log


def write_trajectory_csv(events, m, fh):
    """Write an event log as CSV rows (t, x1, v1, x2, v2, kind, energy)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x1", "v1", "x2", "v2", "kind", "energy"])
    for ev in events:
        s = ev.state
        w.writerow([f"{v:.17g}" for v in (s.t, s.x1, s.v1, s.x2, s.v2)] + [ev.kind, f"{energy(s, m):.17g}"])

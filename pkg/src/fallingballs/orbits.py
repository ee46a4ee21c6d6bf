"""Periodic orbits with prescribed itineraries, their multipliers and m-derivatives.

Orbits are found by multi-point shooting: the unknowns are all k points of
the cycle and the Newton matrix is block-cyclic with single-step Jacobians,
so nothing of the size of the k-fold multiplier is ever formed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .core import (
    AmbiguousRegion,
    InvalidStateError,
    SectionPoint,
    fixed_point,
    in_phase_space,
    jacobian,
    map_dm,
    region_of,
    return_map,
    roof,
    roof_partials,
)
from .eventsim import poincare_return
from .symbolic import Itinerary, _cell_mask


class OrbitNotFound(RuntimeError):
    """Newton failed from every seed."""


class WrongBranch(OrbitNotFound):
    """Converged cycle does not follow the requested itinerary."""


class SingularSystem(ArithmeticError):
    """1 is (numerically) an eigenvalue of the k-fold derivative."""


@dataclass
class Multipliers:
    lam: float
    mu: float
    lam_steps: np.ndarray
    mu_steps: np.ndarray
    unstable: np.ndarray
    stable: np.ndarray

    @property
    def eigvecs(self):
        return [(u, s) for u, s in zip(self.unstable, self.stable)]

    def as_tuple(self):
        return self.lam, self.mu


@dataclass
class PeriodicOrbit:
    points: np.ndarray
    itinerary: Itinerary
    m: float
    residual: float
    iterations: int = 0
    _mult: Multipliers | None = field(default=None, repr=False)

    @property
    def period(self):
        return len(self.points)

    @property
    def symbols(self):
        return tuple(self.itinerary[i] for i in range(self.period))

    def point(self, i):
        return SectionPoint(*self.points[i % self.period])

    @property
    def flow_period(self):
        return flow_period(self)

    @property
    def multipliers(self):
        if self._mult is None:
            self._mult = multipliers(self)
        return self._mult.as_tuple()


@dataclass
class OrbitDerivative:
    dpoints_dm: np.ndarray
    dtau_dm: float
    a_coeffs: np.ndarray | None = None
    b_coeffs: np.ndarray | None = None


class ReplayReport(dict):
    """Event-simulation replay of a cycle; a dict with attribute access."""

    __getattr__ = dict.__getitem__


# -- itineraries -------------------------------------------------------------

def pn_itinerary(n):
    """Periodic word of P_n: 2n zeros then n^2 ones, position -n starts the zeros."""
    if n < 1:
        raise ValueError("n >= 1 required")
    return Itinerary(tuple([0] * (2 * n) + [1] * (n * n)), n, True)


# -- Newton ------------------------------------------------------------------

def _residual(x, sym, m):
    h, z = x[:, 0], x[:, 1]
    with np.errstate(invalid="ignore"):
        img = return_map(SectionPoint(h, z), m, sym)
    return np.column_stack(img) - np.roll(x, -1, axis=0)


def _safe_residual(x, sym, m):
    try:
        r = _residual(x, sym, m)
    except InvalidStateError:
        return None
    return r if np.all(np.isfinite(r)) else None


def _block_matrix(x, sym, m):
    k = len(x)
    J = np.zeros((2 * k, 2 * k))
    A = jacobian(SectionPoint(x[:, 0], x[:, 1]), m, sym)
    for i in range(k):
        j = (i + 1) % k
        J[2 * i:2 * i + 2, 2 * i:2 * i + 2] += A[i]
        J[2 * i:2 * i + 2, 2 * j:2 * j + 2] -= np.eye(2)
    return J


def _newton(x, sym, m):
    r = _safe_residual(x, sym, m)
    if r is None:
        return None, math.inf, 0
    norm = np.abs(r).max()
    for it in range(1, C.NEWTON_MAX_ITER + 1):
        if norm < C.NEWTON_TOL:
            return x, norm, it - 1
        J = _block_matrix(x, sym, m)
        try:
            step = np.linalg.solve(J, -r.ravel()).reshape(-1, 2)
        except np.linalg.LinAlgError:
            return None, norm, it
        t = 1.0
        for _ in range(C.NEWTON_MAX_HALVINGS + 1):
            trial = x + t * step
            rt = _safe_residual(trial, sym, m)
            if rt is not None and np.abs(rt).max() < norm:
                break
            t *= 0.5
        else:
            return None, norm, it
        x, r = trial, rt
        norm = np.abs(r).max()
        if t * np.abs(step).max() < C.NEWTON_STEP_TOL:
            return x, norm, it
    return (x if norm < C.ORBIT_RESIDUAL_OK else None), norm, C.NEWTON_MAX_ITER


def _fixed_point_seed(sym, m):
    return np.array([tuple(fixed_point(int(s), m)[0]) for s in sym])


def _centroid_seed(sym, m, grid=300):
    """Centroids of R_{s_i} n T(R_{s_{i-1}}) on a grid."""
    zlo = -(math.sqrt(1 / m) + math.sqrt(1 / (1 - m)))
    H, Z = np.meshgrid(np.linspace(1e-4, 0.5 - 1e-4, grid), np.linspace(zlo, -1e-4, grid), indexing="ij")
    cache = {}
    out = []
    for i, s in enumerate(sym):
        key = (int(s), int(sym[i - 1]))
        if key not in cache:
            mask = _cell_mask(key[0], key[1], m, H, Z)
            if not mask.any():
                return None
            cache[key] = (H[mask].mean(), Z[mask].mean())
        out.append(cache[key])
    return np.array(out)


def _follows(x, sym, m):
    try:
        return all(region_of(SectionPoint(*p), m) == s for p, s in zip(x, sym))
    except (AmbiguousRegion, InvalidStateError):
        return False


def find_orbit(itin, m, seed=None):
    """Periodic orbit with itinerary ``itin`` (periodic), by multi-point shooting Newton.

    ``seed`` may be an array of k points (continuation); otherwise fixed
    points of the symbols are tried first and centroids of the cells
    R_{s_i} n T(R_{s_{i-1}}) second.
    """
    if not itin.periodic:
        raise ValueError("find_orbit needs a periodic itinerary")
    k = len(itin)
    sym = np.array([itin[i] for i in range(k)])
    seeds = []
    if seed is not None:
        seeds.append(lambda: np.asarray(seed, dtype=float).reshape(k, 2))
    seeds += [lambda: _fixed_point_seed(sym, m), lambda: _centroid_seed(sym, m)]
    best = math.inf
    wrong = False
    for make in seeds:
        x0 = make()
        if x0 is None:
            continue
        x, res, it = _newton(x0, sym, m)
        if x is None:
            best = min(best, res)
            continue
        if res >= C.ORBIT_RESIDUAL_OK:
            best = min(best, res)
            continue
        if not _follows(x, sym, m):
            wrong = True
            continue
        return PeriodicOrbit(x, itin, m, float(res), it)
    if wrong:
        raise WrongBranch(f"cycle found for m={m} does not follow {sym.tolist()}")
    raise OrbitNotFound(f"Newton failed for m={m}, period {k}; best residual {best:.3g}")


def find_pn(n, m, seed=None):
    return find_orbit(pn_itinerary(n), m, seed)


# -- orbit data --------------------------------------------------------------

def _sym(orbit):
    return np.array(orbit.symbols)


def _jacobians(orbit):
    x = orbit.points
    return jacobian(SectionPoint(x[:, 0], x[:, 1]), orbit.m, _sym(orbit))


def flow_period(orbit):
    """Birkhoff sum of the roof function over one cycle."""
    x = orbit.points
    return float(np.sum(roof(SectionPoint(x[:, 0], x[:, 1]), orbit.m, _sym(orbit))))


def _orient(v):
    v = v / np.hypot(*v)
    return v if v[0] > 0 or (v[0] == 0 and v[1] > 0) else -v


def _invariant_directions(A, forward, min_steps=200, tol=1e-15):
    """Invariant unit vectors along the cycle by power iteration.

    forward=True gives the unstable field (iterate A_i), False the stable
    field (iterate A_i^{-1} backwards).  Returns the field and the signed
    per-step factors f_i with A_i v_i = f_i v_{i+1}.
    """
    k = len(A)
    v = _orient(np.array([1.0, -1.0]) if forward else np.array([1.0, 1.0]))
    steps = 0
    last = None
    while True:
        field_ = np.empty((k, 2))
        if forward:
            for i in range(k):
                field_[i] = v
                v = _orient(A[i] @ v)
        else:
            for i in range(k - 1, -1, -1):
                v = _orient(np.linalg.solve(A[i], v))
                field_[i] = v
        steps += k
        if last is not None and steps >= min_steps and np.abs(field_ - last).max() < tol:
            break
        if steps > 50 * min_steps + 50 * k:
            break
        last = field_
    nxt = np.roll(field_, -1, axis=0)
    img = np.einsum("kij,kj->ki", A, field_)
    factors = np.einsum("ki,ki->k", img, nxt)
    return field_, factors


def _signed_product(f):
    # product of many factors without intermediate overflow
    sign = -1.0 if np.count_nonzero(f < 0) % 2 else 1.0
    logs = float(np.sum(np.log(np.abs(f))))
    return sign * (math.exp(logs) if logs < 709.0 else math.inf)


def multipliers(orbit):
    """Total multipliers and per-step factors along the cycle.

    Unstable (u_i) and stable (s_i) directions are oriented with dh > 0; the
    per-step factors satisfy DT(x_i) u_i = lam_i u_{i+1} and
    DT(x_i) s_i = mu_i s_{i+1}.
    """
    A = _jacobians(orbit)
    u, lam = _invariant_directions(A, True)
    s, mu = _invariant_directions(A, False)
    lam_total = _signed_product(lam)
    mu_total = _signed_product(mu)
    if abs(abs(lam_total) - 1.0) < 1e-6:
        warnings.warn("near-parabolic cycle: multipliers close to the unit circle", RuntimeWarning)
    return Multipliers(lam_total, mu_total, lam, mu, u, s)


def total_derivative(orbit, start=0):
    """DT^k at points[start] as an ordered product (small k only)."""
    A = _jacobians(orbit)
    k = len(A)
    M = np.eye(2)
    for i in range(k):
        M = A[(start + i) % k] @ M
    return M


def _coefficients(orbit, mult):
    x = orbit.points
    g = map_dm(SectionPoint(x[:, 0], x[:, 1]), orbit.m, _sym(orbit))
    s1 = np.roll(mult.stable, -1, axis=0)
    u1 = np.roll(mult.unstable, -1, axis=0)
    basis = np.stack([s1, u1], axis=-1)
    cd = np.linalg.solve(basis, g[..., None])[..., 0]
    return cd[:, 0], cd[:, 1]


def _dm_eigen(orbit, mult):
    c, d = _coefficients(orbit, mult)
    mu, lam = mult.mu_steps, mult.lam_steps
    k = len(c)
    # stable coordinate: forward recursion alpha_{i+1} = mu_i alpha_i + c_i
    acc, prod_mu = 0.0, 1.0
    for i in range(k):
        acc = mu[i] * acc + c[i]
        prod_mu *= mu[i]
    if abs(1.0 - prod_mu) < 1e-14:
        raise SingularSystem("stable multiplier equals 1")
    alpha = np.empty(k)
    alpha[0] = acc / (1.0 - prod_mu)
    for i in range(k - 1):
        alpha[i + 1] = mu[i] * alpha[i] + c[i]
    # unstable coordinate: backward recursion beta_i = (beta_{i+1} - d_i) / lam_i
    acc, inv_lam = 0.0, 1.0
    for i in range(k - 1, -1, -1):
        acc = (acc - d[i]) / lam[i]
        inv_lam /= lam[i]
    if abs(1.0 - inv_lam) < 1e-14:
        raise SingularSystem("unstable multiplier equals 1")
    beta = np.empty(k)
    beta[0] = acc / (1.0 - inv_lam)
    beta_k = beta[0]
    for i in range(k - 1, 0, -1):
        beta_k = (beta_k - d[i]) / lam[i]
        beta[i] = beta_k
    dp = alpha[:, None] * mult.stable + beta[:, None] * mult.unstable
    # series terms for the first point: a_i = c_i prod_{j>i} mu_j / (1 - M),
    # b_i = d_i / prod_{j<=i} lam_j / (1/L - 1); they sum to alpha_0, beta_0
    tail_mu = np.append(np.cumprod(mu[::-1])[::-1][1:], 1.0)
    a = c * tail_mu / (1.0 - prod_mu)
    b = d / np.cumprod(lam) / (inv_lam - 1.0)
    return dp, a, b


def _dm_linear(orbit):
    x = orbit.points
    g = map_dm(SectionPoint(x[:, 0], x[:, 1]), orbit.m, _sym(orbit))
    J = _block_matrix(x, _sym(orbit), orbit.m)
    try:
        return np.linalg.solve(J, -g.ravel()).reshape(-1, 2)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def orbit_dm(orbit, method="eigen"):
    """d/dm of the orbit points and of the flow period.

    ``method="eigen"`` decomposes dT/dm in the stable/unstable basis and
    sums the two geometric recursions in their stable directions;
    ``method="linear"`` solves the block-cyclic linearised system.
    """
    a = b = None
    if method == "eigen":
        dp, a, b = _dm_eigen(orbit, multipliers(orbit))
    elif method == "linear":
        dp = _dm_linear(orbit)
    else:
        raise ValueError(f"unknown method {method!r}")
    x = orbit.points
    th, tz, tm = roof_partials(SectionPoint(x[:, 0], x[:, 1]), orbit.m, _sym(orbit))
    dtau = float(np.sum(th * dp[:, 0] + tz * dp[:, 1] + tm))
    return OrbitDerivative(dp, dtau, a, b)


def orbit_dm_fd(itin, m, delta=None, orbit=None):
    """Central finite differences in m, re-solving the orbit with continuation."""
    delta = C.FD_STEP_MASS if delta is None else delta
    orbit = orbit or find_orbit(itin, m)
    hi = find_orbit(itin, m + delta, seed=orbit.points)
    lo = find_orbit(itin, m - delta, seed=orbit.points)
    dp = (hi.points - lo.points) / (2 * delta)
    return OrbitDerivative(dp, (flow_period(hi) - flow_period(lo)) / (2 * delta))


# -- replay and serialisation ------------------------------------------------

def replay_orbit(orbit, eps=None):
    """Run each cycle step through the event simulation.

    Deviations compare the simulated return of points[i] with points[i+1]
    and with the closed-form roof value; ``cumulative`` sums them over the
    cycle.
    """
    k, m = orbit.period, orbit.m
    sym = _sym(orbit)
    point_dev = np.empty(k)
    time_dev = np.empty(k)
    bumps_ok = True
    ambiguous = False
    total = 0.0
    for i in range(k):
        p = orbit.point(i)
        r = poincare_return(p, m, eps)
        q = orbit.point(i + 1)
        point_dev[i] = max(abs(r.point.h - q.h), abs(r.point.z - q.z))
        time_dev[i] = abs(r.time - float(roof(p, m, sym[i])))
        bumps_ok &= r.bumps == sym[i]
        ambiguous |= r.ambiguous
        total += r.time
    return ReplayReport(
        max_point_dev=float(point_dev.max()),
        max_time_dev=float(time_dev.max()),
        cumulative=float(point_dev.sum() + time_dev.sum()),
        bumps_match=bool(bumps_ok),
        ambiguous=bool(ambiguous),
        cycle_time=total,
        period_dev=abs(total - flow_period(orbit)),
    )


def orbit_to_dict(orbit, deriv=None):
    lam, mu = orbit.multipliers
    return {
        "m": orbit.m,
        "period_discrete": orbit.period,
        "itinerary": {"symbols": list(orbit.itinerary.symbols), "offset": orbit.itinerary.offset},
        "points": orbit.points.tolist(),
        "flow_period": flow_period(orbit),
        "multipliers": [lam, mu],
        "residual": orbit.residual,
        "dtau_dm": None if deriv is None else deriv.dtau_dm,
    }


def orbit_from_dict(d):
    it = d["itinerary"]
    itin = Itinerary(tuple(it["symbols"]), it["offset"], True)
    return PeriodicOrbit(np.array(d["points"], dtype=float), itin, float(d["m"]), float(d["residual"]))


def in_section(orbit):
    x = orbit.points
    return bool(np.all(in_phase_space(SectionPoint(x[:, 0], x[:, 1]), orbit.m)))

"""Closed-form return map, roof function and derivatives for two falling balls.

Normalisation: gravitational acceleration g = 1, total energy 1/2, masses
m (lower ball) and 1 - m (upper ball), with 1/2 < m < 1.

Section coordinates are ``h`` (energy of the lower ball as it leaves the
floor) and ``z = v2 - v1``.  The low-level formulas (``return_map``,
``roof``, ``jacobian`` ...) take an explicit branch index ``n`` and accept
scalars or numpy arrays; the high-level wrappers (``map_t``, ``roof_tau``
...) resolve the branch with :func:`region_of` and only take scalars.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import constants as C


class ParameterError(ValueError):
    """Mass or index outside the domain of a formula."""


class InvalidStateError(ValueError):
    """Point outside the section (F <= 0, negative height, ...)."""


class AmbiguousRegion(ArithmeticError):
    """Point within ``EPS_BOUNDARY`` (event-time gap) of a singularity curve r_n.

    ``candidates`` holds the two branch indices (n, n + 1).  Wrappers that
    evaluate the dynamics attach the one-sided images as ``branches``,
    a dict mapping branch index to value.
    """

    def __init__(self, candidates, gap, branches=None):
        self.candidates = tuple(candidates)
        self.gap = gap
        self.branches = dict(branches or {})
        super().__init__(
            f"point within {gap:.3g} of singularity between R_{candidates[0]} and R_{candidates[1]}"
        )


class SectionPoint(NamedTuple):
    """Point of the Poincare section; fields may also hold equal-shape arrays."""

    h: float
    z: float


class Corners(NamedTuple):
    Bx: SectionPoint
    X: SectionPoint
    Ix: SectionPoint
    Ibx: SectionPoint


def check_mass(m):
    if not 0.5 < m < 1.0:
        raise ParameterError(f"mass parameter m={m!r} outside (1/2, 1)")


def alpha(m):
    """1 - 3m + 2m^2; non-positive on [1/2, 1]."""
    if not 0.5 <= m <= 1.0:
        raise ParameterError(f"mass parameter m={m!r} outside [1/2, 1]")
    return 1.0 - 3.0 * m + 2.0 * m * m


def _hz(p):
    h, z = p
    return np.asarray(h, dtype=float), np.asarray(z, dtype=float)


def _point(h, z):
    if np.ndim(h) == 0:
        return SectionPoint(float(h), float(z))
    return SectionPoint(h, z)


def big_f(p, m, check=True):
    """F = 1 - h/m + alpha z^2, i.e. (energy of the lower ball after the collision)/m."""
    h, z = _hz(p)
    f = 1.0 - h / m + alpha(m) * z * z
    if check and np.any(f <= 0):
        raise InvalidStateError("F <= 0: point is not in the section")
    return f[()] if f.ndim == 0 else f


def in_phase_space(p, m):
    """True where all three strict inequalities defining the section hold."""
    h, z = _hz(p)
    with np.errstate(invalid="ignore", divide="ignore"):
        v1 = np.sqrt(np.where(h > 0, 2.0 * h / m, 0.0))
        c1 = (h > 0) & (h < 0.5)
        c2 = 0.5 - h > 0.5 * (1.0 - m) * (z + v1) ** 2
        c3 = m * (1.0 - m) * z * (2.0 * v1 - z) - 2.0 * h + m < 0
    ok = c1 & c2 & c3
    return bool(ok) if ok.ndim == 0 else ok


def section_z_bounds(h, m):
    """Open z-interval of the section slice at fixed ``h`` (empty if lo >= hi)."""
    v1 = math.sqrt(2.0 * h / m)
    r = math.sqrt(max(1.0 - 2.0 * h, 0.0) / (1.0 - m))
    lo, hi = -v1 - r, -v1 + r
    disc = v1 * v1 + (m - 2.0 * h) / (m * (1.0 - m))
    if disc >= 0:
        hi = min(hi, v1 - math.sqrt(disc))
    return lo, hi


def sample_phase_space(m, size, rng):
    """Uniform (Lebesgue) sample of the section by rejection from a bounding box."""
    check_mass(m)
    zlo = -(math.sqrt(1.0 / m) + math.sqrt(1.0 / (1.0 - m)))
    hs, zs = [], []
    count = 0
    while count < size:
        batch = max(2 * (size - count), 1024)
        h = rng.uniform(0.0, 0.5, batch)
        z = rng.uniform(zlo, 0.0, batch)
        ok = in_phase_space(SectionPoint(h, z), m)
        hs.append(h[ok])
        zs.append(z[ok])
        count += int(ok.sum())
    return SectionPoint(np.concatenate(hs)[:size], np.concatenate(zs)[:size])


# -- branch classification -------------------------------------------------

def bump_coordinate(p, m):
    """Real number whose floor is the bump count n; r_n is its level set n + 1.

    After the ball-ball collision the lower ball bounces with floor speed
    w = sqrt(2F) and the upper ball, in free flight, would reach the floor
    at time (W - w - z)/(2w) measured in lower-ball bounce periods past the
    first landing, where W is the upper ball's floor speed.
    """
    h, z = _hz(p)
    f = big_f(p, m)
    w = np.sqrt(2.0 * f)
    upper = (1.0 - 2.0 * m * f) / (1.0 - m)
    if np.any(upper <= 0):
        raise InvalidStateError("upper ball energy <= 0")
    big_w = np.sqrt(upper)
    psi = (big_w - w - z) / (2.0 * w)
    return psi[()] if np.ndim(psi) == 0 else psi


def region_index(p, m):
    """Vectorised bump count n (no singularity check)."""
    n = np.floor(bump_coordinate(p, m)).astype(int)
    return int(n) if n.ndim == 0 else n


def singularity_gap(p, m):
    """Event-time gap between the point's dynamics and the nearest curve r_n."""
    psi = bump_coordinate(p, m)
    w = np.sqrt(2.0 * big_f(p, m))
    k = np.maximum(np.rint(psi), 1.0)
    return 2.0 * w * np.abs(psi - k)


def region_of(p, m, eps=None):
    """Index n with p in R_n; raises :class:`AmbiguousRegion` inside the band."""
    eps = C.EPS_BOUNDARY if eps is None else eps
    check_mass(m)
    if not in_phase_space(p, m):
        raise InvalidStateError(f"{p} is not in the section for m={m}")
    psi = float(bump_coordinate(p, m))
    n = math.floor(psi)
    k = max(round(psi), 1)
    gap = 2.0 * math.sqrt(2.0 * float(big_f(p, m))) * abs(psi - k)
    if gap < eps:
        raise AmbiguousRegion((k - 1, k), gap)
    return n


# -- branch formulas (vectorised) ------------------------------------------

def return_map(p, m, n):
    h, z = _hz(p)
    f = big_f(p, m)
    return _point(m * f, -(2 * n + 2) * np.sqrt(2.0 * f) - z)


def roof(p, m, n):
    h, z = _hz(p)
    f = big_f(p, m)
    return (2 * n + 1) * np.sqrt(2.0 * f) + np.sqrt(2.0 * h / m) - 2.0 * (m - 1.0) * z


def jacobian(p, m, n):
    """DT on branch n; shape (2, 2) or (..., 2, 2)."""
    h, z = _hz(p)
    a = alpha(m)
    sf = np.sqrt(big_f(p, m))
    out = np.empty(np.shape(h) + (2, 2))
    out[..., 0, 0] = -1.0
    out[..., 0, 1] = 2.0 * m * a * z
    out[..., 1, 0] = math.sqrt(2.0) * (n + 1) / (m * sf)
    out[..., 1, 1] = -1.0 - (2 * n + 2) * math.sqrt(2.0) * a * z / sf
    return out


def map_dm(p, m, n):
    """Partial derivative of T in m at fixed (h, z) and fixed branch."""
    h, z = _hz(p)
    f = big_f(p, m)
    first = 1.0 + z * z * (1.0 - 6.0 * m + 6.0 * m * m)
    second = -(2 * n + 2) / np.sqrt(2.0 * f) * (h / m**2 + z * z * (4.0 * m - 3.0))
    return np.stack([first, second], axis=-1)


def roof_partials(p, m, n):
    """(d tau/dh, d tau/dz, d tau/dm) on branch n."""
    h, z = _hz(p)
    if np.any(h <= 0):
        raise InvalidStateError("h <= 0: roof function not differentiable")
    a = alpha(m)
    s2f = np.sqrt(2.0 * big_f(p, m))
    dh = 1.0 / np.sqrt(2.0 * m * h) - (2 * n + 1) / (m * s2f)
    dz = 2.0 * (1.0 - m) + (2 * n + 1) * 2.0 * a * z / s2f
    dm = (2 * n + 1) / s2f * (h / m**2 + (4.0 * m - 3.0) * z * z) - np.sqrt(h / (2.0 * m**3)) - 2.0 * z
    return dh, dz, dm


# -- scalar wrappers with branch resolution ---------------------------------

def _resolve(p, m, n, fn):
    if n is not None:
        return fn(p, m, n)
    try:
        n = region_of(p, m)
    except AmbiguousRegion as exc:
        exc.branches = {k: fn(p, m, k) for k in exc.candidates}
        raise
    return fn(p, m, n)


def map_t(p, m, n=None):
    """Return map T.  Near r_n raises AmbiguousRegion carrying both one-sided images."""
    return _resolve(p, m, n, return_map)


def roof_tau(p, m, n=None):
    """Roof function (return time to the section)."""
    return float(_resolve(p, m, n, roof))


def jacobian_dt(p, m, n=None):
    return _resolve(p, m, n, jacobian)


def tau_partials(p, m, n=None):
    return tuple(float(v) for v in _resolve(p, m, n, roof_partials))


def dt_dm(p, m, n=None):
    return _resolve(p, m, n, map_dm)


def involution(p, m):
    """Time-reversal involution I(h, z) = (mF, z)."""
    h, z = _hz(p)
    return _point(m * big_f(p, m), z)


def inverse_map(p, m):
    """T^{-1} = I o T o I."""
    q = involution(p, m)
    return involution(map_t(q, m), m)


# -- fixed points and corner points -----------------------------------------

def fixed_point(n, m):
    """Candidate fixed point F_n(m) and whether it is physical (in R_n)."""
    check_mass(m)
    d = 1.0 - alpha(m) * (n + 1) ** 2
    if d <= 0:
        raise ParameterError(f"F_{n} undefined for m={m}")
    p = SectionPoint(m / (2.0 * d), -(n + 1) / math.sqrt(d))
    physical = in_phase_space(p, m)
    if physical:
        try:
            physical = region_of(p, m) == n
        except AmbiguousRegion:
            physical = False
    return p, physical


def fixed_point_period(n, m):
    """Closed-form roof value at F_n: 2m(n+1)/sqrt(1 - alpha (n+1)^2)."""
    return 2.0 * m * (n + 1) / math.sqrt(1.0 - alpha(m) * (n + 1) ** 2)


def corner_points(n, m):
    """Endpoints of r_n (Bx, X) and of I(r_n) (Ix, Ibx)."""
    if n < 0:
        raise ParameterError("corner points need n >= 0")
    d_b = 2.0 * (1.0 - m) * n * (n + 2) + 2.0
    d_x = 2.0 * (n + 2) ** 2 - 2.0 * m * (n + 1) * (n + 3)
    r_b = 1.0 - (m - 1.0) * n * (n + 2)
    r_x = (n + 2) ** 2 - m * (n + 1) * (n + 3)
    if min(d_b, d_x, r_b, r_x) <= 0:
        raise ParameterError(f"degenerate corner formulas for n={n}, m={m}")
    bz = -(n + 2) / math.sqrt(r_b)
    xz = -(n + 1) / math.sqrt(r_x)
    return Corners(
        Bx=SectionPoint(m * (-2.0 * m * (n + 2) + 2 * n + 3) ** 2 / d_b, bz),
        X=SectionPoint(m * (3 + 2 * n - 2.0 * m * (n + 1)) ** 2 / d_x, xz),
        Ix=SectionPoint(m / d_x, xz),
        Ibx=SectionPoint(m / d_b, bz),
    )


# -- domain helpers ----------------------------------------------------------

def in_core_domain(p, m):
    """Membership in (R_0 u R_1) n (T(R_0) u T(R_1)), vectorised."""
    ok = in_phase_space(p, m)
    out = np.zeros(np.shape(ok), dtype=bool)
    h, z = _hz(p)
    if not np.any(ok):
        return bool(out) if out.ndim == 0 else out
    hs, zs = np.atleast_1d(h)[np.atleast_1d(ok)], np.atleast_1d(z)[np.atleast_1d(ok)]
    q = SectionPoint(hs, zs)
    n_fwd = region_index(q, m)
    inv = involution(q, m)
    n_bwd = np.full_like(n_fwd, -1)
    inside = in_phase_space(inv, m)
    n_bwd[inside] = region_index(SectionPoint(inv.h[inside], inv.z[inside]), m)
    flat = np.atleast_1d(out)
    flat[np.atleast_1d(ok)] = (n_fwd <= 1) & (n_bwd >= 0) & (n_bwd <= 1)
    return bool(flat[0]) if out.ndim == 0 else flat


def in_unstable_cone(v):
    """Unstable cone in (h, z) coordinates: strictly decreasing directions."""
    v = np.asarray(v, dtype=float)
    return v[..., 0] * v[..., 1] < 0


def roof_gradient_sup(m, samples, rng):
    """Sampled sup of |grad_{h,z} tau| over the core domain (estimate of G_inf)."""
    pts = sample_phase_space(m, samples, rng)
    keep = in_core_domain(pts, m)
    q = SectionPoint(pts.h[keep], pts.z[keep])
    n = region_index(q, m)
    dh, dz, _ = roof_partials(q, m, n)
    return float(np.max(np.hypot(dh, dz)))

"""Grid, averaged cross-sectional areas, volume map and surface tracking.

Depth z points downwards from the top of the tank (z=0) to the bottom (z=B).
Cell j (1..N) is [(j-1)h, jh]; an extra underflow cell N+1 lies below z=B
where the area is continued as A(B).  Above the top the area is continued as
A(0) (only used for the averaged area A_{1/2}).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CflViolation, EmptyTank

ALPHA_MIN = 1e-12
# accumulated round-off when a stage fills the tank exactly to the brim
OVERFLOW_TOL = 1e-9


class AreaProfile:
    """Piecewise-linear cross-sectional area A(z) with constant extension."""

    def __init__(self, z: np.ndarray, a: np.ndarray):
        z = np.asarray(z, dtype=float)
        a = np.asarray(a, dtype=float)
        if z.ndim != 1 or z.shape != a.shape or z.size < 1:
            raise ValueError("area table needs matching 1-D z and A arrays")
        if np.any(np.diff(z) <= 0):
            raise ValueError("area table depths must be strictly increasing")
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("cross-sectional areas must be positive")
        self.z = z
        self.a = a
        # cumulative integral at breakpoints (trapezoid is exact for linear pieces)
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * np.diff(z))])

    @classmethod
    def constant(cls, area: float) -> "AreaProfile":
        return cls(np.array([0.0]), np.array([float(area)]))

    def __call__(self, z):
        return np.interp(z, self.z, self.a)

    def integral(self, z):
        """Exact primitive I(z) = int_{z_0}^{z} A with constant extension outside the table."""
        z = np.asarray(z, dtype=float)
        zt, at, cum = self.z, self.a, self._cum
        if zt.size == 1:
            return at[0] * (z - zt[0])
        i = np.clip(np.searchsorted(zt, z, side="right") - 1, 0, zt.size - 2)
        dz = z - zt[i]
        slope = (at[i + 1] - at[i]) / (zt[i + 1] - zt[i])
        inside = cum[i] + at[i] * dz + 0.5 * slope * dz * dz
        below = at[0] * (z - zt[0])
        above = cum[-1] + at[-1] * (z - zt[-1])
        return np.where(z < zt[0], below, np.where(z > zt[-1], above, inside))

    def mean(self, z0, z1):
        return (self.integral(z1) - self.integral(z0)) / (np.asarray(z1) - np.asarray(z0))

    def min_on(self, z0: float, z1: float) -> float:
        pts = [z0, z1] + [z for z in self.z if z0 < z < z1]
        return float(np.min(self(np.array(pts))))


@dataclass(frozen=True)
class Geometry:
    B: float
    N: int
    h: float
    profile: AreaProfile
    A_cell: np.ndarray    # index j = 0..N+1, entry 0 unused (the effluent row)
    A_face: np.ndarray    # index j = 0..N, entry j is A_{j+1/2}
    V_below: np.ndarray   # index j = 0..N, volume below boundary z_{j+1/2}
    M1: float
    M2: float
    M3: float
    A_min: float

    @property
    def total_volume(self) -> float:
        return float(self.V_below[0])

    def cell_centres(self) -> np.ndarray:
        return (np.arange(1, self.N + 1) - 0.5) * self.h

    def volume_below(self, jbar: int, alpha: float) -> float:
        return float(self.V_below[jbar] + alpha * self.A_cell[jbar] * self.h)


def build_geometry(B: float, N: int, profile: AreaProfile | float) -> Geometry:
    if not B > 0:
        raise ValueError("depth B must be positive")
    if int(N) != N or N < 2:
        raise ValueError("need at least 2 cells")
    N = int(N)
    if not isinstance(profile, AreaProfile):
        profile = AreaProfile.constant(float(profile))
    if profile.min_on(0.0, B) <= 0:
        raise ValueError("area must be positive on [0, B]")
    h = B / N
    bounds = h * np.arange(N + 2)          # z_{j+1/2}, j = 0..N+1
    I_b = profile.integral(bounds)
    A_cell = np.empty(N + 2)
    A_cell[0] = np.nan
    A_cell[1:] = np.diff(I_b) / h
    # face averages over [z_j, z_{j+1}] with z_j = (j - 1/2) h
    mids = h * (np.arange(N + 2) - 0.5)
    A_face = np.diff(profile.integral(mids)) / h
    V_below = np.empty(N + 1)
    V_below[:] = I_b[N] - I_b[: N + 1]
    inner = A_cell[1:N + 1]
    M1 = float(max(np.max(A_face[1:] / inner), np.max(A_face[:-1] / inner)))
    M2 = float(np.max((A_face[1:] + A_face[:-1]) / inner))
    M3 = float(np.max(inner[:-1] / inner[1:]))
    return Geometry(B=float(B), N=N, h=h, profile=profile, A_cell=A_cell, A_face=A_face,
                    V_below=V_below, M1=M1, M2=M2, M3=M3, A_min=float(np.min(A_face)))


@dataclass(frozen=True)
class SurfaceTracker:
    zbar: float
    jbar: int
    alpha: float

    @classmethod
    def from_cell(cls, jbar: int, alpha: float, geom: Geometry) -> "SurfaceTracker":
        return cls(zbar=float(geom.h * (jbar - alpha)), jbar=int(jbar), alpha=float(alpha))


def surface_cell(zbar: float, geom: Geometry) -> tuple[int, float]:
    """Surface cell index and fill fraction; boundaries map to alpha = 1 in the cell below."""
    if not 0.0 <= zbar <= geom.B:
        raise ValueError("surface outside the tank")
    h = geom.h
    k = int(np.floor(zbar / h + 1e-12))
    if abs(zbar - k * h) <= 1e-12 * max(h, 1.0):
        if k >= geom.N:
            raise EmptyTank("surface at the bottom of the tank")
        return k + 1, 1.0
    jbar = max(1, int(np.ceil(zbar / h)))
    alpha = (jbar * h - zbar) / h
    if alpha < ALPHA_MIN:
        return jbar + 1, 1.0
    return jbar, min(alpha, 1.0)


def make_tracker(zbar: float, geom: Geometry) -> SurfaceTracker:
    jbar, alpha = surface_cell(zbar, geom)
    return SurfaceTracker.from_cell(jbar, alpha, geom)


def tracker_from_volume(volume: float, geom: Geometry) -> SurfaceTracker:
    """Locate the surface holding the given mixture volume below it."""
    Vb = geom.V_below
    if volume > Vb[0] * (1 + OVERFLOW_TOL):
        raise EmptyTank("volume exceeds the tank")
    if volume <= 0:
        raise EmptyTank("tank drained")
    volume = min(volume, Vb[0])
    # smallest jbar with V_below[jbar] < volume  (Vb is decreasing)
    jbar = int(np.searchsorted(-Vb, -volume, side="right"))
    jbar = max(jbar, 1)
    alpha = (volume - Vb[jbar]) / (geom.A_cell[jbar] * geom.h)
    if alpha < ALPHA_MIN:
        jbar, alpha = jbar + 1, 1.0
    if jbar >= geom.N:
        raise EmptyTank("surface reached the bottom cell")
    return SurfaceTracker.from_cell(jbar, min(alpha, 1.0), geom)


def advance_surface(tr: SurfaceTracker, Qbar: float, Qu: float, tau: float, geom: Geometry) -> SurfaceTracker:
    """Move the surface by the volume change (Qbar - Qu) tau, at most one cell."""
    h = geom.h
    A = geom.A_cell
    j = tr.jbar
    dV = (Qbar - Qu) * tau
    if dV == 0.0:
        return tr
    v = tr.alpha * A[j] * h + dV   # volume between the surface and z_{j+1/2}
    cap = A[j] * h
    if v > cap:
        rest = v - cap
        if j == 1:
            if rest <= OVERFLOW_TOL * geom.total_volume:
                return SurfaceTracker.from_cell(1, 1.0, geom)
            raise EmptyTank("tank overflows")
        alpha = rest / (A[j - 1] * h)
        if alpha > 1.0:
            raise CflViolation("surface would rise more than one cell in one step")
        if alpha < ALPHA_MIN:
            return SurfaceTracker.from_cell(j, 1.0, geom)
        return SurfaceTracker.from_cell(j - 1, alpha, geom)
    if v > 0.0:
        alpha = v / cap
        if alpha < ALPHA_MIN:
            j, alpha = j + 1, 1.0
        if j >= geom.N:
            raise EmptyTank("surface reached the bottom cell")
        return SurfaceTracker.from_cell(j, alpha, geom)
    # surface drops into the cell below
    if j + 1 >= geom.N:
        raise EmptyTank("surface reached the bottom cell")
    rest = A[j + 1] * h + v
    if rest <= 0.0:
        raise CflViolation("surface would drop more than one cell in one step")
    alpha = rest / (A[j + 1] * h)
    if alpha < ALPHA_MIN:
        raise CflViolation("surface would drop more than one cell in one step")
    return SurfaceTracker.from_cell(j + 1, alpha, geom)

"""Hindered settling, effective stress and compression functions.

All concentrations are in kg/m^3, velocities in m/s.  The hindered settling
velocity is the power law ``v0 / (1 + (X/x_breve)**eta)`` cut off to zero at
the maximal packing concentration ``x_hat`` so that the relative velocity
vanishes there.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

TABLE_POINTS = 4096


@dataclass(frozen=True)
class SettlingParams:
    v0: float = 1.76e-3
    x_breve: float = 3.87
    eta_exp: float = 3.58
    x_c: float = 5.0
    alpha_comp: float = 0.2
    rho_s: float = 1050.0
    rho_f: float = 998.0
    g: float = 9.81
    x_hat: float = 30.0
    eps_r: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.v0 > 0:
            problems.append("v0 must be positive")
        if not self.x_breve > 0:
            problems.append("x_breve must be positive")
        if not self.eta_exp > 0:
            problems.append("eta_exp must be positive")
        if not 0 < self.x_c < self.x_hat < self.rho_s:
            problems.append("need 0 < x_c < x_hat < rho_s")
        if not self.rho_f < self.rho_s:
            problems.append("need rho_f < rho_s")
        if not self.alpha_comp >= 0:
            problems.append("alpha_comp must be non-negative")
        if not 0 < self.eps_r < self.x_hat:
            problems.append("need 0 < eps_r < x_hat")
        if not self.g > 0:
            problems.append("g must be positive")
        if problems:
            raise ValueError("invalid settling parameters: " + "; ".join(problems))

    @property
    def delta_rho(self) -> float:
        return self.rho_s - self.rho_f


def _vhs_raw(x, p: SettlingParams):
    return p.v0 / (1.0 + (x / p.x_breve) ** p.eta_exp)


def _d_raw(x, p: SettlingParams):
    # d without the cut-offs; only meaningful on (x_c, x_hat]
    return _vhs_raw(x, p) * p.rho_s * p.alpha_comp / (p.g * x * p.delta_rho)


def hindered_settling_velocity(x, p: SettlingParams):
    """Hindered settling velocity, zero for ``x >= x_hat`` and ``v0`` for ``x <= 0``."""
    x = np.asarray(x, dtype=float)
    xp = np.clip(x, 0.0, None)
    v = np.where(x < p.x_hat, _vhs_raw(xp, p), 0.0)
    return v if v.ndim else float(v)


def hindered_settling_slope(x, p: SettlingParams):
    """Derivative of the hindered settling velocity on [0, x_hat)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    u = (x / p.x_breve) ** p.eta_exp
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.where(x > 0, p.eta_exp * u / np.where(x > 0, x, 1.0), 0.0)
    out = -p.v0 * du / (1.0 + u) ** 2
    out = np.where(x < p.x_hat, out, 0.0)
    return out if out.ndim else float(out)


def effective_stress_derivative(x, p: SettlingParams):
    """sigma_e'(x): zero up to and including x_c, alpha_comp above."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > p.x_c, p.alpha_comp, 0.0)
    return out if out.ndim else float(out)


def diffusion_coefficient(x, p: SettlingParams):
    """Degenerate diffusion d(x); vanishes outside (x_c, x_hat)."""
    x = np.asarray(x, dtype=float)
    inside = (x > p.x_c) & (x < p.x_hat)
    xs = np.where(inside, x, p.x_c + 1.0)
    out = np.where(inside, _d_raw(xs, p), 0.0)
    return out if out.ndim else float(out)


class CompressionTable:
    """Tabulated primitive D(x) = integral of d from x_c to x.

    Node values come from adaptive quadrature; between nodes D is evaluated by
    cubic Hermite interpolation using the exact d at the nodes, which keeps the
    lookup within ~1e-14 relative of the quadrature reference.
    """

    def __init__(self, p: SettlingParams, points: int = TABLE_POINTS):
        self.params = p
        self.points = points
        self.x0 = p.x_c
        self.dx = (p.x_hat - p.x_c) / (points - 1)
        nodes = p.x_c + self.dx * np.arange(points)
        nodes[-1] = p.x_hat
        self.nodes = nodes
        # one-sided derivatives at both ends (d jumps at x_c and x_hat)
        self.slopes = _d_raw(nodes, p)
        values = np.zeros(points)
        if p.alpha_comp > 0:
            pieces = [
                quad(_d_raw, a, b, args=(p,), epsabs=0.0, epsrel=1e-13, limit=200)[0]
                for a, b in zip(nodes[:-1], nodes[1:])
            ]
            values[1:] = np.cumsum(pieces)
        self.values = values
        self.d_hat = float(values[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = (x - self.x0) / self.dx
        i = np.clip(np.floor(t), 0, self.points - 2).astype(np.intp)
        s = np.clip(t - i, 0.0, 1.0)
        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        dx = self.dx
        val = (h00 * self.values[i] + h10 * dx * self.slopes[i]
               + h01 * self.values[i + 1] + h11 * dx * self.slopes[i + 1])
        out = np.where(x <= self.x0, 0.0, np.where(x >= self.params.x_hat, self.d_hat, val))
        return out if out.ndim else float(out)


@functools.lru_cache(maxsize=32)
def compression_table(p: SettlingParams) -> CompressionTable:
    return CompressionTable(p)


def compression_primitive(x, p: SettlingParams):
    """D(x); zero up to x_c, constant from x_hat on."""
    return compression_table(p)(x)


@dataclass(frozen=True)
class SettlingBounds:
    """Sup-norms over [0, x_hat] used by the time-step restriction."""

    vhs_zero: float
    vhs_slope_sup: float
    d_sup: float
    d_hat: float


@functools.lru_cache(maxsize=32)
def settling_bounds(p: SettlingParams, samples: int = 200001) -> SettlingBounds:
    xs = np.linspace(0.0, p.x_hat, samples)
    # include the analytic maximiser of |v_hs'| when it lies inside the range
    ratio = (p.eta_exp - 1.0) / (p.eta_exp + 1.0)
    extra = [p.x_breve * ratio ** (1.0 / p.eta_exp)] if ratio > 0 else []
    xs = np.concatenate([xs, [x for x in extra if x < p.x_hat]])
    slope = float(np.max(np.abs(hindered_settling_slope(xs, p))))
    dx = np.linspace(p.x_c, p.x_hat, samples)
    d_sup = float(np.max(_d_raw(dx, p))) if p.alpha_comp > 0 else 0.0
    return SettlingBounds(
        vhs_zero=p.v0,
        vhs_slope_sup=slope,
        d_sup=d_sup,
        d_hat=compression_table(p).d_hat,
    )


class SettlingLaw:
    """Fast evaluators bundled for the stepping kernel."""

    def __init__(self, p: SettlingParams):
        self.params = p
        self.table = compression_table(p)
        self.bounds = settling_bounds(p)
        self._v0 = p.v0
        self._inv_xb = 1.0 / p.x_breve
        self._eta = p.eta_exp
        self._x_hat = p.x_hat

    def vhs(self, x: np.ndarray) -> np.ndarray:
        xp = np.maximum(x, 0.0)
        v = self._v0 / (1.0 + (xp * self._inv_xb) ** self._eta)
        v[x >= self._x_hat] = 0.0
        return v

    def D(self, x: np.ndarray) -> np.ndarray:
        return self.table(x)

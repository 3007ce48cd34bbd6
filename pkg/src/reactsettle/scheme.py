"""Explicit moving-boundary finite-volume scheme.

State rows: 0 is the effluent pipe cell, 1..N the tank cells, N+1 the
underflow cell.  Cells strictly above the surface cell hold exact zeros; the
surface cell stores its mass as a concentration over the full cell volume.

Each step first moves the surface, then classifies the step:

    a  fill-type, surface drops across a boundary
    b  fill-type, surface stays in its cell
    c  fill-type, surface rises across a boundary
    d  extraction, surface stays in its cell
    e  extraction, surface drops across a boundary

The surface cell and the cell below are pooled into one trapezoid mass which
is then redistributed with the case weights omega.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constitutive import SettlingLaw, SettlingParams
from .errors import CflViolation, DensityBreach
from .geometry import Geometry, SurfaceTracker, advance_surface
from .reactions import ReactionModel

CASES = ("a", "b", "c", "d", "e")


@dataclass
class Flows:
    """Volumetric flows (m^3/s) and feed concentrations, constant over a step."""

    Q_f: float = 0.0
    Q_u: float = 0.0
    Q_e: float = 0.0
    C_f: np.ndarray = field(default_factory=lambda: np.zeros(6))
    S_f: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        if min(self.Q_f, self.Q_u, self.Q_e) < 0:
            raise ValueError("flows must be non-negative")
        if self.Q_f > 0 and self.Q_e > 0:
            raise ValueError("cannot fill and extract simultaneously")
        self.C_f = np.asarray(self.C_f, dtype=float)
        self.S_f = np.asarray(self.S_f, dtype=float)

    @property
    def extraction(self) -> bool:
        return self.Q_e > 0

    @property
    def Qbar(self) -> float:
        return -self.Q_e if self.extraction else self.Q_f


@dataclass
class TankState:
    C: np.ndarray
    S: np.ndarray
    surface: SurfaceTracker
    t: float = 0.0

    @property
    def N(self) -> int:
        return self.C.shape[0] - 2

    @property
    def C_e(self) -> np.ndarray:
        return self.C[0]

    @property
    def S_e(self) -> np.ndarray:
        return self.S[0]

    @property
    def C_u(self) -> np.ndarray:
        return self.C[-1]

    @property
    def S_u(self) -> np.ndarray:
        return self.S[-1]

    def copy(self) -> "TankState":
        return TankState(self.C.copy(), self.S.copy(), self.surface, self.t)

    @classmethod
    def empty(cls, N: int, surface: SurfaceTracker, k_C: int = 6, k_S: int = 6) -> "TankState":
        return cls(np.zeros((N + 2, k_C)), np.zeros((N + 2, k_S)), surface, 0.0)


class SchemeContext:
    """Everything a step needs besides the state: grid, physics and reactions."""

    def __init__(self, geom: Geometry, settling: SettlingParams, model: ReactionModel):
        self.geom = geom
        self.settling = settling
        self.law = SettlingLaw(settling)
        self.model = model
        self.rho = settling.rho_s
        # underflow face has gamma = 0 (outside the mixture)
        self.gamma = np.ones(geom.N + 1)
        self.gamma[geom.N] = 0.0
        self.Ah = geom.A_cell * geom.h
        self.area_ratio = np.empty(geom.N + 2)   # A_{j+1}/A_j
        self.area_ratio[1:-1] = geom.A_cell[2:] / geom.A_cell[1:-1]
        self.area_ratio[[0, -1]] = np.nan


@dataclass
class FluxSet:
    first: int            # first computed face index j (face j+1/2)
    J: np.ndarray         # per face j = 0..N
    vX: np.ndarray
    FX: np.ndarray
    PhiC: np.ndarray      # (N+1, k_C)
    PhiS: np.ndarray      # (N+1, k_S)
    PhiC_e: np.ndarray | None = None
    PhiS_e: np.ndarray | None = None


@dataclass
class MassLedger:
    """Per-component masses (kg) for one step; 12 entries, particulates first."""

    before: np.ndarray
    after: np.ndarray
    feed: np.ndarray
    top: np.ndarray        # surface extraction into the pipe cell (<= 0 leaves the tank)
    bottom: np.ndarray     # flux into the underflow cell
    reaction: np.ndarray
    source: np.ndarray     # external sources such as aeration
    underflow_out: np.ndarray
    effluent_out: np.ndarray

    def expected_change(self) -> np.ndarray:
        return self.feed + self.top - self.bottom + self.reaction + self.source

    def closure(self) -> np.ndarray:
        """Relative closure error of the tank balance per component."""
        err = self.after - self.before - self.expected_change()
        scale = np.maximum.reduce([np.abs(self.before), np.abs(self.after), np.abs(self.feed),
                                   np.abs(self.top), np.abs(self.bottom), np.abs(self.reaction),
                                   np.abs(self.source)])
        return np.where(scale > 0, np.abs(err) / np.where(scale > 0, scale, 1.0), 0.0)

    @classmethod
    def zeros(cls, k: int = 12) -> "MassLedger":
        z = np.zeros(k)
        return cls(*(z.copy() for _ in range(9)))

    def accumulate(self, other: "MassLedger") -> None:
        self.after = other.after.copy()
        for name in ("feed", "top", "bottom", "reaction", "source", "underflow_out", "effluent_out"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class StepInfo:
    case: str
    jbar_old: int
    alpha_old: float
    jbar_new: int
    alpha_new: float
    omega: np.ndarray      # weights for rows jbar_old-1, jbar_old, jbar_old+1
    ledger: MassLedger


def tank_mass(state: TankState, geom: Geometry) -> np.ndarray:
    """Mass (kg) of each of the 12 components held in tank cells 1..N."""
    w = geom.A_cell[1:-1] * geom.h
    return np.concatenate([w @ state.C[1:-1], w @ state.S[1:-1]])


def derived_fields(state: TankState, params: SettlingParams) -> tuple[np.ndarray, np.ndarray]:
    """Total solids X and water W per row."""
    X = state.C.sum(axis=1)
    W = params.rho_f * (1.0 - X / params.rho_s) - state.S.sum(axis=1)
    return X, W


def interface_fluxes(state: TankState, flows: Flows, ctx: SchemeContext) -> FluxSet:
    """Numerical fluxes on faces jbar+1/2 .. N+1/2; zero above."""
    geom = ctx.geom
    N = geom.N
    jb = state.surface.jbar
    C, S = state.C, state.S
    X = C.sum(axis=1)
    if np.max(X[jb:N + 1]) >= ctx.rho:
        raise DensityBreach("solids concentration reached the solids density")
    lo = jb
    Af = geom.A_face[lo:N + 1]
    q = flows.Q_u / Af
    Xl = X[lo:N + 1]
    Xr = X[lo + 1:N + 2]
    Xr = Xr.copy()
    Xr[-1] = 0.0  # underflow cell never feeds back (gamma = 0, q >= 0)
    Dv = ctx.law.D(X[lo:N + 1])
    J = np.zeros(N + 1)
    Jl = np.zeros(N + 1 - lo)
    Jl[:-1] = (Dv[1:] - Dv[:-1]) / geom.h
    v = np.zeros(N + 1 - lo)
    v[:-1] = ctx.law.vhs(X[lo + 1:N + 1])
    vX_l = q + ctx.gamma[lo:] * (v - Jl)
    vm = np.minimum(vX_l, 0.0)
    vp = np.maximum(vX_l, 0.0)
    FX_l = vm * Xr + vp * Xl
    PhiC = np.zeros((N + 1, C.shape[1]))
    PhiS = np.zeros((N + 1, S.shape[1]))
    PhiC[lo:] = Af[:, None] * (vm[:, None] * C[lo + 1:N + 2] + vp[:, None] * C[lo:N + 1])
    g = ctx.rho * q - FX_l
    gm = np.minimum(g, 0.0) / (ctx.rho - Xr)
    gp = np.maximum(g, 0.0) / (ctx.rho - Xl)
    PhiS[lo:] = Af[:, None] * (gm[:, None] * S[lo + 1:N + 2] + gp[:, None] * S[lo:N + 1])
    J[lo:] = Jl
    vX = np.zeros(N + 1)
    vX[lo:] = vX_l
    FX = np.zeros(N + 1)
    FX[lo:] = FX_l
    return FluxSet(first=lo, J=J, vX=vX, FX=FX, PhiC=PhiC, PhiS=PhiS)


def extraction_fluxes(state: TankState, Q_e: float, ctx: SchemeContext) -> tuple[np.ndarray, np.ndarray]:
    """Non-positive fluxes just below the surface into the effluent pipe."""
    geom = ctx.geom
    j = state.surface.jbar + 1
    Cj, Sj = state.C[j], state.S[j]
    Xj = float(Cj.sum())
    if Xj >= ctx.rho:
        raise DensityBreach("solids concentration reached the solids density")
    arr = np.array([Xj])
    w = float(ctx.law.vhs(arr)[0]) - float(ctx.law.D(arr)[0]) / geom.h
    Af = geom.A_face[state.surface.jbar]
    c = min(Af * w - Q_e, 0.0)
    s = min(-Af * Xj / (ctx.rho - Xj) * w - Q_e, 0.0)
    return c * Cj, s * Sj


def _weights(case: str, jb: int, alpha_new: float, A: np.ndarray) -> np.ndarray:
    if case in ("a", "e"):
        return np.array([0.0, 0.0, A[jb] / A[jb + 1]])
    if case in ("b", "d"):
        eta = A[jb] / (alpha_new * A[jb] + A[jb + 1])
        return np.array([0.0, alpha_new * eta, eta])
    theta = A[jb] / (alpha_new * A[jb - 1] + A[jb] + A[jb + 1])
    return np.array([alpha_new * theta, theta, theta])


def classify(jb_old: int, jb_new: int, extraction: bool) -> str:
    d = jb_new - jb_old
    if extraction:
        if d == 0:
            return "d"
        if d == 1:
            return "e"
        raise CflViolation("surface rose or jumped during extraction")
    if d == 1:
        return "a"
    if d == 0:
        return "b"
    if d == -1:
        return "c"
    raise CflViolation("surface moved more than one cell")


def _surface_reaction(C: np.ndarray, S: np.ndarray, jb: int, alpha: float, ctx: SchemeContext):
    """alpha R(C_jb/alpha, S_jb/alpha) + (A_{jb+1}/A_jb) R(C_{jb+1}, S_{jb+1})."""
    Cs = np.stack([C[jb] / alpha, C[jb + 1]])
    Ss = np.stack([S[jb] / alpha, S[jb + 1]])
    RC, RS = ctx.model.increments(Cs, Ss)
    r = ctx.area_ratio[jb]
    return alpha * RC[0] + r * RC[1], alpha * RS[0] + r * RS[1]


def _step(state: TankState, flows: Flows, ctx: SchemeContext, tau: float, inline_reactions: bool):
    geom = ctx.geom
    N = geom.N
    A = geom.A_cell
    h = geom.h
    tr = state.surface
    jb, alpha = tr.jbar, tr.alpha
    new_tr = advance_surface(tr, flows.Qbar, flows.Q_u, tau, geom)
    case = classify(jb, new_tr.jbar, flows.extraction)

    C, S = state.C, state.S
    fx = interface_fluxes(state, flows, ctx)
    lam = tau / ctx.Ah
    before = tank_mass(state, geom)

    Cn = np.zeros_like(C)
    Sn = np.zeros_like(S)

    # bulk cells jb+2..N
    b0 = jb + 2
    if b0 <= N:
        dC = fx.PhiC[b0:N + 1] - fx.PhiC[b0 - 1:N]
        dS = fx.PhiS[b0:N + 1] - fx.PhiS[b0 - 1:N]
        Cn[b0:N + 1] = C[b0:N + 1] - lam[b0:N + 1, None] * dC
        Sn[b0:N + 1] = S[b0:N + 1] - lam[b0:N + 1, None] * dS

    # pooled trapezoid
    if flows.extraction:
        srcC, srcS = extraction_fluxes(state, flows.Q_e, ctx)
    else:
        srcC, srcS = flows.Q_f * flows.C_f, flows.Q_f * flows.S_f
    r = ctx.area_ratio[jb]
    upsC = C[jb] + r * C[jb + 1] + lam[jb] * (srcC - fx.PhiC[jb + 1])
    upsS = S[jb] + r * S[jb + 1] + lam[jb] * (srcS - fx.PhiS[jb + 1])

    k = 2 * C.shape[1]
    reaction = np.zeros(k)
    if inline_reactions:
        RsC, RsS = _surface_reaction(C, S, jb, alpha, ctx)
        upsC = upsC + tau * RsC
        upsS = upsS + tau * RsS
        if b0 <= N:
            RC, RS = ctx.model.increments(C[b0:N + 1], S[b0:N + 1])
            Cn[b0:N + 1] += tau * RC
            Sn[b0:N + 1] += tau * RS
            w = A[b0:N + 1] * h
            reaction += tau * np.concatenate([w @ RC, w @ RS])
        reaction += tau * h * A[jb] * np.concatenate([RsC, RsS])

    omega = _weights(case, jb, new_tr.alpha, A)
    for off, wgt in zip((-1, 0, 1), omega):
        if wgt != 0.0:
            Cn[jb + off] = wgt * upsC
            Sn[jb + off] = wgt * upsS

    # underflow accumulator
    lu = lam[N + 1]
    Cn[N + 1] = C[N + 1] + lu * (fx.PhiC[N] - flows.Q_u * C[N + 1])
    Sn[N + 1] = S[N + 1] + lu * (fx.PhiS[N] - flows.Q_u * S[N + 1])

    # effluent pipe cell
    zero = np.zeros(k)
    if flows.extraction:
        l1 = lam[1]
        Cn[0] = C[0] - l1 * (flows.Q_e * C[0] + srcC)
        Sn[0] = S[0] - l1 * (flows.Q_e * S[0] + srcS)
        top = tau * np.concatenate([srcC, srcS])
        feed = zero
        eff_out = tau * flows.Q_e * np.concatenate([C[0], S[0]])
    else:
        top = zero
        feed = tau * np.concatenate([srcC, srcS])
        eff_out = zero

    out = TankState(Cn, Sn, new_tr, state.t + tau)
    ledger = MassLedger(
        before=before,
        after=tank_mass(out, geom),
        feed=feed,
        top=top,
        bottom=tau * np.concatenate([fx.PhiC[N], fx.PhiS[N]]),
        reaction=reaction,
        source=zero.copy(),
        underflow_out=tau * flows.Q_u * np.concatenate([C[N + 1], S[N + 1]]),
        effluent_out=eff_out,
    )
    info = StepInfo(case, jb, alpha, new_tr.jbar, new_tr.alpha, omega, ledger)
    return out, info


def transport_step(state: TankState, flows: Flows, ctx: SchemeContext, tau: float):
    """Reaction-free step; returns the checked state and step diagnostics."""
    return _step(state, flows, ctx, tau, inline_reactions=False)


def reaction_step(checked: TankState, info: StepInfo, ctx: SchemeContext, tau: float) -> TankState:
    """Second half of the split step; returns a new state."""
    geom = ctx.geom
    N = geom.N
    A = geom.A_cell
    h = geom.h
    jb, alpha = info.jbar_old, info.alpha_old
    C, S = checked.C.copy(), checked.S.copy()
    b0 = jb + 2
    reaction = np.zeros(2 * C.shape[1])
    if b0 <= N:
        RC, RS = ctx.model.increments(checked.C[b0:N + 1], checked.S[b0:N + 1])
        C[b0:N + 1] += tau * RC
        S[b0:N + 1] += tau * RS
        w = A[b0:N + 1] * h
        reaction += tau * np.concatenate([w @ RC, w @ RS])
    RsC, RsS = _surface_reaction(checked.C, checked.S, jb, alpha, ctx)
    for off, wgt in zip((-1, 0, 1), info.omega):
        if wgt != 0.0:
            C[jb + off] += wgt * tau * RsC
            S[jb + off] += wgt * tau * RsS
    reaction += tau * h * A[jb] * np.concatenate([RsC, RsS])
    out = TankState(C, S, checked.surface, checked.t)
    info.ledger.reaction = info.ledger.reaction + reaction
    info.ledger.after = tank_mass(out, geom)
    return out


def split_step(state: TankState, flows: Flows, ctx: SchemeContext, tau: float):
    checked, info = transport_step(state, flows, ctx, tau)
    return reaction_step(checked, info, ctx, tau), info


def full_step_unsplit(state: TankState, flows: Flows, ctx: SchemeContext, tau: float):
    """Step with reaction terms evaluated at time-n values inside the update."""
    return _step(state, flows, ctx, tau, inline_reactions=True)


# --- time-step restriction -------------------------------------------------

@dataclass(frozen=True)
class CflInputs:
    M1: float
    M2: float
    M3: float
    A_min: float
    Q_norm: float
    vhs_slope_sup: float
    vhs_zero: float
    d_sup: float
    D_hat: float
    x_hat: float
    rho_s: float
    M_C: float
    M_S: float
    M_tilde: float
    eps: float


@dataclass(frozen=True)
class CflResult:
    tau: float
    terms: dict
    dominant: str


def cfl_inputs(geom: Geometry, settling: SettlingParams, model: ReactionModel, Q_norm: float) -> CflInputs:
    b = SettlingLaw(settling).bounds
    M_C, M_S, M_t = model.bounds()
    return CflInputs(M1=geom.M1, M2=geom.M2, M3=geom.M3, A_min=geom.A_min, Q_norm=float(Q_norm),
                     vhs_slope_sup=b.vhs_slope_sup, vhs_zero=b.vhs_zero, d_sup=b.d_sup,
                     D_hat=b.d_hat, x_hat=settling.x_hat, rho_s=settling.rho_s,
                     M_C=M_C, M_S=M_S, M_tilde=M_t, eps=settling.eps_r)


def cfl_terms(inp: CflInputs, h: float) -> dict:
    if not inp.x_hat < inp.rho_s:
        raise ValueError("x_hat must be below the solids density")
    if not h > 0 or not inp.A_min > 0:
        raise ValueError("h and A_min must be positive")
    xh, rho = inp.x_hat, inp.rho_s
    flow = inp.Q_norm / (inp.A_min * h)
    b1_flow = flow
    b1_settle = inp.M1 / h * (inp.vhs_slope_sup * xh + inp.vhs_zero)
    b1_comp = 2 * inp.M2 / h ** 2 * (inp.d_sup * xh + inp.D_hat)
    b2_flow = max(inp.M1, 1.0) * (rho + xh) / (rho - xh) * flow
    b2_settle = xh * inp.M1 / (rho - xh) * 2 * inp.vhs_zero / h
    b2_comp = xh * inp.M2 / (rho - xh) * inp.D_hat / h ** 2
    return {
        "beta1": b1_flow + b1_settle + b1_comp,
        "beta1_flow": b1_flow,
        "beta1_settling": b1_settle,
        "beta1_compression": b1_comp,
        "beta2": b2_flow + b2_settle + b2_comp,
        "beta2_flow": b2_flow,
        "beta2_settling": b2_settle,
        "beta2_compression": b2_comp,
        "reaction_C": inp.M_C * (1 + inp.M3),
        "reaction_S": inp.M_S,
        "reaction_X": inp.M_tilde / inp.eps,
        "surface": inp.Q_norm / (inp.A_min * h),
    }


def cfl_max_dt(inp: CflInputs, h: float) -> CflResult:
    """Largest admissible step and the term that limits it."""
    t = cfl_terms(inp, h)
    keys = ("beta1", "beta2", "reaction_C", "reaction_S", "reaction_X", "surface")
    worst = max(keys, key=lambda k_: t[k_])
    if t[worst] <= 0:
        return CflResult(np.inf, t, "none")
    dominant = worst
    if worst in ("beta1", "beta2"):
        parts = [k_ for k_ in t if k_.startswith(worst + "_")]
        dominant = max(parts, key=lambda k_: t[k_])
    return CflResult(1.0 / t[worst], t, dominant)

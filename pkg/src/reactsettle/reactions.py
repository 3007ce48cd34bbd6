"""Reaction models: the modified ASM1 (no alkalinity) and a zero model.

State ordering follows the ASM1 variable list:

    C = (X_I, X_S, X_BH, X_BA, X_P, X_ND)
    S = (S_I, S_S, S_O, S_NO, S_NH, S_ND)

Concentrations are in kg/m^3 and rates in 1/s.  Kinetic constants are given in
the customary g/m^3 and 1/d units and converted once in ``Asm1Params.to_si``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

PARTICULATES = ("X_I", "X_S", "X_BH", "X_BA", "X_P", "X_ND")
SOLUBLES = ("S_I", "S_S", "S_O", "S_NO", "S_NH", "S_ND")
N_PROCESSES = 8

SECONDS_PER_DAY = 86400.0
KG_PER_G = 1e-3

# index shortcuts
XI, XS, XBH, XBA, XP, XND = range(6)
SI, SS, SO, SNO, SNH, SND = range(6)


@dataclass(frozen=True)
class Asm1Params:
    """Stoichiometric and kinetic constants in g/m^3 and day units."""

    Y_A: float = 0.24
    Y_H: float = 0.57
    f_P: float = 0.1
    i_XB: float = 0.07
    i_XP: float = 0.06
    mu_H: float = 4.0
    K_S: float = 20.0
    K_OH: float = 0.25
    K_NO: float = 0.5
    b_H: float = 0.5
    eta_g: float = 0.8
    eta_h: float = 0.35
    k_h: float = 1.5
    K_X: float = 0.02
    mu_A: float = 0.879
    K_NH_bar: float = 0.007
    K_NH: float = 1.0
    b_A: float = 0.132
    K_OA: float = 0.5
    k_a: float = 0.08

    def __post_init__(self):
        for name in ("K_S", "K_OH", "K_NO", "K_X", "K_NH_bar", "K_NH", "K_OA"):
            if not getattr(self, name) > 0:
                raise ValueError(f"half-saturation constant {name} must be positive")
        for name in ("Y_A", "Y_H", "f_P"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("mu_H", "b_H", "k_h", "mu_A", "b_A", "k_a", "eta_g", "eta_h", "i_XB", "i_XP"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_dict(cls, values: dict) -> "Asm1Params":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown ASM1 parameters: {sorted(unknown)}")
        return cls(**values)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_si(self) -> "Asm1Si":
        """Convert to kg/m^3 and seconds.  This is the only unit conversion site."""
        day = SECONDS_PER_DAY
        g = KG_PER_G
        return Asm1Si(
            Y_A=self.Y_A, Y_H=self.Y_H, f_P=self.f_P, i_XB=self.i_XB, i_XP=self.i_XP,
            mu_H=self.mu_H / day, K_S=self.K_S * g, K_OH=self.K_OH * g, K_NO=self.K_NO * g,
            b_H=self.b_H / day, eta_g=self.eta_g, eta_h=self.eta_h, k_h=self.k_h / day,
            K_X=self.K_X, mu_A=self.mu_A / day, K_NH_bar=self.K_NH_bar * g,
            K_NH=self.K_NH * g, b_A=self.b_A / day, K_OA=self.K_OA * g,
            # m^3/(g d) -> m^3/(kg s)
            k_a=self.k_a / g / day,
        )


@dataclass(frozen=True)
class Asm1Si:
    """ASM1 constants in SI-like units (kg/m^3, 1/s, m^3/(kg s))."""

    Y_A: float
    Y_H: float
    f_P: float
    i_XB: float
    i_XP: float
    mu_H: float
    K_S: float
    K_OH: float
    K_NO: float
    b_H: float
    eta_g: float
    eta_h: float
    k_h: float
    K_X: float
    mu_A: float
    K_NH_bar: float
    K_NH: float
    b_A: float
    K_OA: float
    k_a: float


def stoichiometry(p: Asm1Params | Asm1Si) -> tuple[np.ndarray, np.ndarray]:
    """Return (sigma_C, sigma_S), shapes (6, 8)."""
    fP, iXB, iXP, YH, YA = p.f_P, p.i_XB, p.i_XP, p.Y_H, p.Y_A
    n_dec = iXB - fP * iXP
    sigma_C = np.array([
        [0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 1 - fP, 1 - fP, 0, -1, 0],
        [1, 1, 0, -1, 0, 0, 0, 0],
        [0, 0, 1, 0, -1, 0, 0, 0],
        [0, 0, 0, fP, fP, 0, 0, 0],
        [0, 0, 0, n_dec, n_dec, 0, 0, -1],
    ], dtype=float)
    sigma_S = np.array([
        [0, 0, 0, 0, 0, 0, 0, 0],
        [-1 / YH, -1 / YH, 0, 0, 0, 0, 1, 0],
        [-(1 - YH) / YH, 0, -(4.57 - YA) / YA, 0, 0, 0, 0, 0],
        [0, -(1 - YH) / (2.86 * YH), 1 / YA, 0, 0, 0, 0, 0],
        [-iXB, -iXB, -iXB - 1 / YA, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 0, -1, 0, 1],
    ], dtype=float)
    return sigma_C, sigma_S


def _monod(s, k):
    return s / (k + s)


def rate_vector(C, S, p: Asm1Si) -> np.ndarray:
    """Process rates r(C, S) in kg/(m^3 s).

    Accepts single 6-vectors or stacks of shape (n, 6); negative inputs are
    treated as zero.
    """
    C = np.maximum(np.asarray(C, dtype=float), 0.0)
    S = np.maximum(np.asarray(S, dtype=float), 0.0)
    xs, xbh, xba, xnd = C[..., XS], C[..., XBH], C[..., XBA], C[..., XND]
    ss, so, sno, snh, snd = S[..., SS], S[..., SO], S[..., SNO], S[..., SNH], S[..., SND]

    m_o = _monod(so, p.K_OH)
    i_o = p.K_OH / (p.K_OH + so)
    m_no = _monod(sno, p.K_NO)
    m_s = _monod(ss, p.K_S)
    hydro = m_o + p.eta_h * i_o * m_no

    # guarded hydrolysis kinetics; zero where the guards say so
    den = p.K_X * xbh + xs
    safe = np.where(den > 0, den, 1.0)
    mu7 = np.where((xs > 0) & (xbh > 0), xs * xbh / safe, 0.0)
    mu8 = np.where(xbh > 0, xbh * xnd / safe, 0.0)

    r = np.empty(np.shape(xs) + (N_PROCESSES,))
    het = p.mu_H * _monod(snh, p.K_NH_bar) * m_s * xbh
    r[..., 0] = het * m_o
    r[..., 1] = het * i_o * m_no * p.eta_g
    r[..., 2] = p.mu_A * _monod(snh, p.K_NH) * _monod(so, p.K_OA) * xba
    r[..., 3] = p.b_H * xbh
    r[..., 4] = p.b_A * xba
    r[..., 5] = p.k_a * snd * xbh
    r[..., 6] = p.k_h * mu7 * hydro
    r[..., 7] = p.k_h * mu8 * hydro
    return r


class ReactionModel:
    """Interface for reaction terms R_C = sigma_C r, R_S = sigma_S r."""

    k_C = 6
    k_S = 6
    is_zero = False

    def __init__(self, x_hat: float, eps_r: float):
        if not 0 < eps_r < x_hat:
            raise ValueError("need 0 < eps_r < x_hat")
        self.x_hat = float(x_hat)
        self.eps_r = float(eps_r)
        self.cutoff = self.x_hat - self.eps_r

    def increments(self, C: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def bounds(self) -> tuple[float, float, float]:
        raise NotImplementedError


class ZeroReactions(ReactionModel):
    is_zero = True

    def increments(self, C, S):
        return np.zeros(np.shape(C)), np.zeros(np.shape(S))

    def bounds(self):
        return 0.0, 0.0, 0.0


class ModifiedAsm1(ReactionModel):
    """ASM1 without alkalinity, with the extra ammonium Monod factor."""

    def __init__(self, params: Asm1Params | None = None, *, x_hat: float = 30.0, eps_r: float = 1.0):
        super().__init__(x_hat, eps_r)
        self.params = params or Asm1Params()
        self.si = self.params.to_si()
        self.sigma_C, self.sigma_S = stoichiometry(self.si)
        self._sCt = np.ascontiguousarray(self.sigma_C.T)
        self._sSt = np.ascontiguousarray(self.sigma_S.T)

    def rates(self, C, S) -> np.ndarray:
        return rate_vector(C, S, self.si)

    def increments(self, C, S):
        C = np.asarray(C, dtype=float)
        r = rate_vector(C, S, self.si)
        RC = r @ self._sCt
        RS = r @ self._sSt
        # hard cutoff: no net solids production near maximal packing
        dead = C.sum(axis=-1) >= self.cutoff
        if np.any(dead):
            RC = np.where(dead[..., None], 0.0, RC)
        return RC, RS

    def process_caps(self) -> np.ndarray:
        """Upper bounds of each process rate over the invariant region."""
        p, xh = self.si, self.x_hat
        # every Monod factor is at most one; the hydrolysis switch is at most 1 + eta_h
        sw = 1.0 + p.eta_h
        return np.array([
            p.mu_H * xh,
            p.mu_H * p.eta_g * xh,
            p.mu_A * xh,
            p.b_H * xh,
            p.b_A * xh,
            # S_ND is bounded only through its reaction structure; k_a S_ND X_BH
            # enters the bounds via rbar = k_a X_BH, never as a standalone cap
            np.inf,
            p.k_h * sw * xh / p.K_X,
            p.k_h * sw * xh / p.K_X,
        ])

    def rbar_caps(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds on rbar^(l) for each (component, process) with negative stoichiometry.

        Returned as (k_C x 8, k_S x 8) arrays, zero where the coefficient is
        non-negative.
        """
        p, xh = self.si, self.x_hat
        sw = 1.0 + p.eta_h
        cC = np.zeros_like(self.sigma_C)
        cS = np.zeros_like(self.sigma_S)
        # particulates: r4 = b_H X_BH, r5 = b_A X_BA, r7 = k_h mu7 (..) <= k_h sw/K_X * X_S,
        # r8 <= k_h sw / K_X * X_ND
        cC[XBH, 3] = p.b_H
        cC[XBA, 4] = p.b_A
        cC[XS, 6] = p.k_h * sw / p.K_X
        cC[XND, 7] = p.k_h * sw / p.K_X
        # solubles, each rate divided by the consumed component
        cS[SS, 0] = p.mu_H * xh / p.K_S
        cS[SS, 1] = p.mu_H * p.eta_g * xh / p.K_S
        cS[SO, 0] = p.mu_H * xh / p.K_OH
        cS[SO, 2] = p.mu_A * xh / p.K_OA
        cS[SNO, 1] = p.mu_H * p.eta_g * xh / p.K_NO
        cS[SNH, 0] = p.mu_H * xh / p.K_NH_bar
        cS[SNH, 1] = p.mu_H * p.eta_g * xh / p.K_NH_bar
        cS[SNH, 2] = p.mu_A * xh / p.K_NH
        cS[SND, 5] = p.k_a * xh
        cC[self.sigma_C >= 0] = 0.0
        cS[self.sigma_S >= 0] = 0.0
        return cC, cS

    def bounds(self):
        cC, cS = self.rbar_caps()
        M_C = float(np.max(np.sum(np.abs(self.sigma_C) * cC, axis=1)))
        M_S = float(np.max(np.sum(np.abs(self.sigma_S) * cS, axis=1)))
        col = self.sigma_C.sum(axis=0)
        caps = self.process_caps()
        pos = col > 0
        M_tilde = float(np.sum(col[pos] * caps[pos]))
        return M_C, M_S, M_tilde


def reaction_increments(C, S, model: ReactionModel) -> tuple[np.ndarray, np.ndarray]:
    """(R_C, R_S) = (sigma_C r, sigma_S r) with the near-packing cutoff on R_C."""
    return model.increments(C, S)


def reaction_bounds(model: ReactionModel) -> tuple[float, float, float]:
    """(M_C, M_S, M_tilde) for the time-step restriction."""
    return model.bounds()


def build_model(kind: str, *, x_hat: float, eps_r: float, overrides: dict | None = None) -> ReactionModel:
    if kind == "zero":
        return ZeroReactions(x_hat, eps_r)
    if kind == "asm1":
        return ModifiedAsm1(Asm1Params.from_dict(overrides or {}), x_hat=x_hat, eps_r=eps_r)
    raise ValueError(f"unknown reaction model {kind!r}")

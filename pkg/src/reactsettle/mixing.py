"""Completely mixed (react-stage) dynamics on the volume below the surface."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTank
from .geometry import Geometry, SurfaceTracker, tracker_from_volume
from .reactions import ReactionModel
from .scheme import Flows, TankState


@dataclass
class MixedState:
    C: np.ndarray
    S: np.ndarray
    volume: float
    surface: SurfaceTracker
    t: float = 0.0


def average_below_surface(state: TankState, geom: Geometry) -> MixedState:
    """Volume-weighted averages; the surface cell contributes its stored mass."""
    tr = state.surface
    vol = geom.volume_below(tr.jbar, tr.alpha)
    if not vol > 0:
        raise EmptyTank("no mixture below the surface")
    w = geom.A_cell[1:-1] * geom.h
    C = (w @ state.C[1:-1]) / vol
    S = (w @ state.S[1:-1]) / vol
    return MixedState(C, S, vol, tr, state.t)


def redistribute(m: MixedState, geom: Geometry, template: TankState | None = None) -> TankState:
    """Zero above the surface, alpha * average in the surface cell, average below.

    Pipe and underflow rows are copied from ``template`` when given.
    """
    N = geom.N
    tr = m.surface
    kC, kS = m.C.size, m.S.size
    C = np.zeros((N + 2, kC))
    S = np.zeros((N + 2, kS))
    if template is not None:
        C[0], S[0] = template.C[0], template.S[0]
        C[-1], S[-1] = template.C[-1], template.S[-1]
    C[tr.jbar] = tr.alpha * m.C
    S[tr.jbar] = tr.alpha * m.S
    C[tr.jbar + 1:N + 1] = m.C
    S[tr.jbar + 1:N + 1] = m.S
    return TankState(C, S, tr, m.t)


def ode_time_step(model: ReactionModel, flows: Flows, v_min: float, M3: float, safety: float = 0.5) -> float:
    """Step bound for explicit Euler on the mixed system (reaction and dilution terms)."""
    M_C, M_S, M_t = model.bounds()
    q_out = flows.Q_u + flows.Q_e
    rate = max(M_C * (1 + M3), M_S, M_t / model.eps_r, (abs(flows.Q_u - flows.Qbar) + flows.Q_f) / v_min,
               q_out / v_min)
    return np.inf if rate <= 0 else safety / rate


def mixed_ode_step(m: MixedState, flows: Flows, model: ReactionModel, tau: float,
                   geom: Geometry) -> tuple[MixedState, dict]:
    """One explicit Euler step in conservative (mass, volume) form.

    Mass balance: d(V C)/dt = Q_f C_f - (Q_u + Q_e) C + V R, dV/dt = Qbar - Q_u.
    Returns the new state and the per-component mass terms of the step.
    """
    RC, RS = model.increments(m.C, m.S)
    q_out = flows.Q_u + flows.Q_e
    v_new = m.volume + tau * (flows.Qbar - flows.Q_u)
    if not v_new > 0:
        raise EmptyTank("tank would empty during the mixed stage")
    feed_C = tau * flows.Q_f * flows.C_f
    feed_S = tau * flows.Q_f * flows.S_f
    out_C = tau * q_out * m.C
    out_S = tau * q_out * m.S
    rx_C = tau * m.volume * RC
    rx_S = tau * m.volume * RS
    # (V C + dM) / V' written so that dM = 0, V' = V returns C exactly
    dv = v_new - m.volume
    C = m.C + (feed_C - out_C + rx_C - dv * m.C) / v_new
    S = m.S + (feed_S - out_S + rx_S - dv * m.S) / v_new
    tr = tracker_from_volume(v_new, geom) if dv != 0 else m.surface
    new = MixedState(C, S, v_new, tr, m.t + tau)
    terms = {
        "feed": np.concatenate([feed_C, feed_S]),
        "reaction": np.concatenate([rx_C, rx_S]),
        "underflow_out": np.concatenate([tau * flows.Q_u * m.C, tau * flows.Q_u * m.S]),
        "effluent_out": np.concatenate([tau * flows.Q_e * m.C, tau * flows.Q_e * m.S]),
    }
    return new, terms


def mixed_mass(m: MixedState) -> np.ndarray:
    return m.volume * np.concatenate([m.C, m.S])

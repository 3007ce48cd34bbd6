"""SBR cycle driver: stage switching, recording and mass auditing."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .constitutive import SettlingParams
from .errors import SimulationError
from .geometry import AreaProfile, Geometry, build_geometry, make_tracker
from .mixing import (MixedState, average_below_surface, mixed_mass, mixed_ode_step,
                     ode_time_step, redistribute)
from .reactions import PARTICULATES, SOLUBLES, ReactionModel, build_model
from .scheme import (CASES, CflResult, Flows, MassLedger, SchemeContext, TankState,
                     cfl_inputs, cfl_max_dt, full_step_unsplit, split_step, tank_mass)

HOUR = 3600.0
COMPONENTS = PARTICULATES + SOLUBLES
STAGE_KINDS = ("fill", "react", "settle", "draw", "idle")


@dataclass(frozen=True)
class Segment:
    """Initial concentrations on [z_from, z_to] (m)."""

    z_from: float
    z_to: float
    C: tuple
    S: tuple


@dataclass(frozen=True)
class Stage:
    """One stage in configuration units: hours, m^3/h, kg/m^3."""

    name: str
    kind: str
    t_start_h: float
    t_end_h: float
    Q_f_m3h: float = 0.0
    Q_u_m3h: float = 0.0
    Q_e_m3h: float = 0.0
    X_f: float = 0.0
    C_f_fractions: tuple = (0.0,) * 6
    S_f: tuple = (0.0,) * 6
    regime: str = "pde"
    aeration_S_O: float | None = None

    @property
    def t_start(self) -> float:
        return self.t_start_h * HOUR

    @property
    def t_end(self) -> float:
        return self.t_end_h * HOUR

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def flows(self) -> Flows:
        return Flows(Q_f=self.Q_f_m3h / HOUR, Q_u=self.Q_u_m3h / HOUR, Q_e=self.Q_e_m3h / HOUR,
                     C_f=self.X_f * np.asarray(self.C_f_fractions, dtype=float),
                     S_f=np.asarray(self.S_f, dtype=float))


@dataclass(frozen=True)
class Scenario:
    depth: float
    cells: int
    area: AreaProfile | float
    settling: SettlingParams
    reaction_model: str
    reaction_params: dict
    surface0: float
    segments: tuple
    stages: tuple
    snapshot_every: float = 10.0
    series_every: float = 1.0
    area_table: tuple | None = None

    def with_cells(self, cells: int) -> "Scenario":
        return replace(self, cells=int(cells))

    def with_reactions(self, model: str) -> "Scenario":
        return replace(self, reaction_model=model)

    def time_compressed(self, factor: float) -> "Scenario":
        """Divide stage times by ``factor`` and multiply flows by it (volumes unchanged)."""
        stages = tuple(replace(st, t_start_h=st.t_start_h / factor, t_end_h=st.t_end_h / factor,
                               Q_f_m3h=st.Q_f_m3h * factor, Q_u_m3h=st.Q_u_m3h * factor,
                               Q_e_m3h=st.Q_e_m3h * factor)
                       for st in self.stages)
        return replace(self, stages=stages, snapshot_every=self.snapshot_every / factor,
                       series_every=self.series_every / factor)

    def profile(self) -> AreaProfile:
        if self.area_table is not None:
            z, a = zip(*self.area_table)
            return AreaProfile(np.array(z), np.array(a))
        return AreaProfile.constant(float(self.area))

    def geometry(self) -> Geometry:
        return build_geometry(self.depth, self.cells, self.profile())

    def model(self) -> ReactionModel:
        return build_model(self.reaction_model, x_hat=self.settling.x_hat,
                           eps_r=self.settling.eps_r, overrides=dict(self.reaction_params))

    def q_norm(self) -> float:
        """Global flow bound max{|Q_u - Q_f|, Q_u + Q_e} in m^3/s."""
        vals = [0.0]
        for st in self.stages:
            f = st.flows()
            vals += [abs(f.Q_u - f.Q_f), f.Q_u + f.Q_e]
        return max(vals)


def initial_state(sc: Scenario, geom: Geometry) -> TankState:
    """Cell averages of the piecewise-constant initial profile below the surface."""
    tr = make_tracker(sc.surface0, geom)
    state = TankState.empty(geom.N, tr)
    h = geom.h
    prof = geom.profile
    for j in range(1, geom.N + 1):
        top = max((j - 1) * h, sc.surface0)
        bot = j * h
        if bot <= top:
            continue
        for seg in sc.segments:
            a = max(top, seg.z_from)
            b = min(bot, seg.z_to)
            if b > a:
                w = float(prof.integral(b) - prof.integral(a)) / (geom.A_cell[j] * h)
                state.C[j] += w * np.asarray(seg.C, dtype=float)
                state.S[j] += w * np.asarray(seg.S, dtype=float)
    return state


@dataclass
class Snapshot:
    t: float
    zbar: float
    C: np.ndarray   # (N, 6) tank cells
    S: np.ndarray


@dataclass
class StageAudit:
    name: str
    kind: str
    regime: str
    steps: int
    tau: float
    ledger: MassLedger
    max_step_closure: float = 0.0

    def closure(self) -> np.ndarray:
        return self.ledger.closure()

    def as_dict(self) -> dict:
        lg = self.ledger
        return {
            "name": self.name, "kind": self.kind, "regime": self.regime, "steps": self.steps,
            "tau_s": self.tau, "max_step_closure": self.max_step_closure,
            "stage_closure": dict(zip(COMPONENTS, map(float, self.closure()))),
            "mass_before_kg": dict(zip(COMPONENTS, map(float, lg.before))),
            "mass_after_kg": dict(zip(COMPONENTS, map(float, lg.after))),
            "feed_kg": dict(zip(COMPONENTS, map(float, lg.feed))),
            "to_effluent_pipe_kg": dict(zip(COMPONENTS, map(float, -lg.top))),
            "to_underflow_kg": dict(zip(COMPONENTS, map(float, lg.bottom))),
            "reaction_kg": dict(zip(COMPONENTS, map(float, lg.reaction))),
            "aeration_kg": dict(zip(COMPONENTS, map(float, lg.source))),
        }


@dataclass
class RunRecord:
    variant: str
    geometry: Geometry
    snapshots: list
    series_t: np.ndarray
    series: np.ndarray          # (n, 24): C_e, S_e, C_u, S_u
    audits: list
    case_counts: dict
    tau: float
    cfl: CflResult
    wall_seconds: float
    final: TankState
    settling: SettlingParams

    def snapshot_at(self, t: float, tol: float = 1e-6) -> Snapshot:
        for s in self.snapshots:
            if abs(s.t - t) <= tol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")

    def audit_dict(self) -> dict:
        return {
            "variant": self.variant,
            "cells": self.geometry.N,
            "tau_s": self.tau,
            "cfl": {
                "tau_max_s": self.cfl.tau,
                "dominant_term": self.cfl.dominant,
                "terms_per_s": {k: float(v) for k, v in self.cfl.terms.items()},
                "margin": {a.name: (1.0 - a.tau / self.cfl.tau) if a.regime == "pde" else None
                           for a in self.audits},
            },
            "case_counts": dict(self.case_counts),
            "stages": [a.as_dict() for a in self.audits],
            "wall_seconds": self.wall_seconds,
        }


def _flows_for_ode(stage: Stage) -> Flows:
    return stage.flows()


class _Recorder:
    def __init__(self, sc: Scenario, geom: Geometry):
        self.geom = geom
        self.snap_dt = sc.snapshot_every
        self.series_dt = sc.series_every
        self.next_snap = 0.0
        self.next_series = 0.0
        self.snapshots: list[Snapshot] = []
        self.series_t: list[float] = []
        self.series: list[np.ndarray] = []

    def snap(self, state: TankState, force: bool = False):
        if force or state.t >= self.next_snap - 1e-9:
            if not self.snapshots or abs(self.snapshots[-1].t - state.t) > 1e-9:
                self.snapshots.append(Snapshot(float(state.t), state.surface.zbar,
                                               state.C[1:-1].copy(), state.S[1:-1].copy()))
            while self.next_snap <= state.t + 1e-9:
                self.next_snap += self.snap_dt

    def boundary(self, t: float, flows: Flows, C_e, S_e, C_u, S_u, force: bool = False):
        if force or t >= self.next_series - 1e-9:
            if self.series_t and abs(self.series_t[-1] - t) <= 1e-9:
                return
            # concentrations of an absent stream are reported as zero
            e = 1.0 if flows.Q_e > 0 else 0.0
            u = 1.0 if flows.Q_u > 0 else 0.0
            self.series_t.append(float(t))
            self.series.append(np.concatenate([e * C_e, e * S_e, u * C_u, u * S_u]))
            while self.next_series <= t + 1e-9:
                self.next_series += self.series_dt


def _steps(duration: float, tau: float) -> tuple[int, float]:
    n = max(1, math.ceil(duration / tau * (1 - 1e-12)))
    return n, duration / n


def run(sc: Scenario, variant: str = "split") -> RunRecord:
    """Simulate the scenario with the split or unsplit scheme."""
    if variant not in ("split", "unsplit"):
        raise ValueError("variant must be 'split' or 'unsplit'")
    wall0 = time.perf_counter()
    geom = sc.geometry()
    model = sc.model()
    ctx = SchemeContext(geom, sc.settling, model)
    cfl = cfl_max_dt(cfl_inputs(geom, sc.settling, model, sc.q_norm()), geom.h)
    tau = cfl.tau
    stepper = split_step if variant == "split" else full_step_unsplit
    state = initial_state(sc, geom)
    state.t = sc.stages[0].t_start if sc.stages else 0.0
    rec = _Recorder(sc, geom)
    rec.next_snap = state.t
    rec.next_series = state.t
    counts = {c: 0 for c in CASES}
    audits: list[StageAudit] = []

    for stage in sc.stages:
        flows = stage.flows()
        rec.snap(state, force=True)
        rec.boundary(state.t, flows, state.C_e, state.S_e, state.C_u, state.S_u, force=True)
        try:
            if stage.regime == "pde":
                state, audit = _run_pde_stage(stage, flows, state, ctx, tau, stepper, rec, counts)
            else:
                state, audit = _run_ode_stage(stage, flows, state, ctx, rec)
        except SimulationError as err:
            raise err.with_context(err.time if err.time is not None else state.t, stage.name) from err
        audits.append(audit)

    rec.snap(state, force=True)
    last = sc.stages[-1].flows() if sc.stages else Flows()
    rec.boundary(state.t, last, state.C_e, state.S_e, state.C_u, state.S_u, force=True)
    return RunRecord(
        variant=variant, geometry=geom, snapshots=rec.snapshots,
        series_t=np.array(rec.series_t), series=np.array(rec.series), audits=audits,
        case_counts=counts, tau=tau, cfl=cfl, wall_seconds=time.perf_counter() - wall0,
        final=state, settling=sc.settling,
    )


def _run_pde_stage(stage, flows, state, ctx, tau, stepper, rec, counts):
    n, tau_s = _steps(stage.duration, tau)
    t0 = stage.t_start
    geom = ctx.geom
    total = MassLedger.zeros()
    total.before = tank_mass(state, geom)
    worst = 0.0
    for i in range(n):
        try:
            state, info = stepper(state, flows, ctx, tau_s)
        except SimulationError as err:
            raise err.with_context(t0 + i * tau_s, stage.name) from err
        state.t = t0 + (i + 1) * tau_s
        counts[info.case] += 1
        total.accumulate(info.ledger)
        c = float(np.max(info.ledger.closure()))
        if c > worst:
            worst = c
        rec.snap(state)
        rec.boundary(state.t, flows, state.C_e, state.S_e, state.C_u, state.S_u)
    if n == 0:
        total.after = total.before.copy()
    audit = StageAudit(stage.name, stage.kind, "pde", n, tau_s, total, worst)
    return state, audit


def _run_ode_stage(stage, flows, state, ctx, rec):
    geom = ctx.geom
    model = ctx.model
    mixed = average_below_surface(state, geom)
    v_end = mixed.volume + stage.duration * (flows.Qbar - flows.Q_u)
    v_min = min(mixed.volume, v_end)
    if not v_min > 0:
        raise SimulationError("tank would empty during the mixed stage", time=state.t, stage=stage.name)
    # without reactions or flows the bound is infinite; keep the recording cadence
    tau_ode = min(ode_time_step(model, flows, v_min, geom.M3), rec.series_dt or np.inf)
    n, tau_s = _steps(stage.duration, tau_ode)
    total = MassLedger.zeros()
    total.before = mixed_mass(mixed)
    worst = 0.0
    t0 = stage.t_start
    template = state
    pipe_C = np.zeros_like(state.C[0])
    pipe_S = np.zeros_like(state.S[0])
    for i in range(n):
        before = mixed_mass(mixed)
        mixed, terms = mixed_ode_step(mixed, flows, model, tau_s, geom)
        mixed.t = t0 + (i + 1) * tau_s
        source = np.zeros_like(before)
        if stage.aeration_S_O is not None:
            so = 2  # S_O index among solubles
            k = len(mixed.C) + so
            gain = mixed.volume * (stage.aeration_S_O - mixed.S[so])
            mixed.S[so] = stage.aeration_S_O
            source[k] = gain
        lg = MassLedger(before=before, after=mixed_mass(mixed), feed=terms["feed"],
                        top=-terms["effluent_out"], bottom=terms["underflow_out"],
                        reaction=terms["reaction"], source=source,
                        underflow_out=terms["underflow_out"], effluent_out=terms["effluent_out"])
        total.accumulate(lg)
        worst = max(worst, float(np.max(lg.closure())))
        if rec.snap_dt and mixed.t >= rec.next_snap - 1e-9 or rec.series_dt and mixed.t >= rec.next_series - 1e-9:
            view = redistribute(mixed, geom, template)
            rec.snap(view)
            C_u = mixed.C if flows.Q_u > 0 else template.C[-1]
            S_u = mixed.S if flows.Q_u > 0 else template.S[-1]
            C_e = mixed.C if flows.Q_e > 0 else pipe_C
            S_e = mixed.S if flows.Q_e > 0 else pipe_S
            rec.boundary(mixed.t, flows, C_e, S_e, C_u, S_u)
    new = redistribute(mixed, geom, template)
    if flows.Q_u > 0:
        new.C[-1], new.S[-1] = mixed.C, mixed.S
    if flows.Q_e > 0:
        new.C[0], new.S[0] = mixed.C, mixed.S
    else:
        new.C[0], new.S[0] = pipe_C, pipe_S
    new.t = t0 + n * tau_s
    audit = StageAudit(stage.name, stage.kind, "ode", n, tau_s, total, worst)
    return new, audit


# --- diagnostics -------------------------------------------------------------

def mass_balance_audit(record: RunRecord) -> list[dict]:
    """Per stage and component: relative closure of the tank balance."""
    out = []
    for a in record.audits:
        out.append({
            "stage": a.name,
            "regime": a.regime,
            "closure": dict(zip(COMPONENTS, map(float, a.closure()))),
            "max_step_closure": a.max_step_closure,
        })
    return out


def _l1(values: np.ndarray, h: float) -> np.ndarray:
    return h * np.sum(np.abs(values), axis=0)


def relative_difference(run_a: RunRecord, run_b: RunRecord, t: float, *, skipped: list | None = None) -> float:
    """Sum over components of ||a - b||_L1 / ||b||_L1 at time t."""
    if run_a.geometry.N != run_b.geometry.N or run_a.geometry.B != run_b.geometry.B:
        raise ValueError("runs use different grids")
    h = run_a.geometry.h
    sa, sb = run_a.snapshot_at(t), run_b.snapshot_at(t)
    a = np.hstack([sa.C, sa.S])
    b = np.hstack([sb.C, sb.S])
    num = _l1(a - b, h)
    den = _l1(b, h)
    total = 0.0
    for k, name in enumerate(COMPONENTS):
        if den[k] > 0:
            total += num[k] / den[k]
        elif skipped is not None:
            skipped.append(name)
    return float(total)


def restrict(profile: np.ndarray, factor: int) -> np.ndarray:
    """Average groups of ``factor`` consecutive cells (constant-area grids)."""
    n = profile.shape[0]
    if n % factor:
        raise ValueError("grid sizes are not nested")
    return profile.reshape(n // factor, factor, *profile.shape[1:]).mean(axis=1)


def self_difference(coarse: RunRecord, fine: RunRecord, t: float) -> float:
    """L1 distance (summed over components) between a run and a finer run restricted to it."""
    f = fine.geometry.N // coarse.geometry.N
    if f * coarse.geometry.N != fine.geometry.N:
        raise ValueError("grid sizes are not nested")
    sc, sf = coarse.snapshot_at(t), fine.snapshot_at(t)
    a = np.hstack([sc.C, sc.S])
    b = restrict(np.hstack([sf.C, sf.S]), f)
    return float(np.sum(_l1(a - b, coarse.geometry.h)))

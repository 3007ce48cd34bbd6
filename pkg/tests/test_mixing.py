import numpy as np
import pytest

from omega import DEFAULTS, random_state, zero_model
from reactsettle.geometry import SurfaceTracker, build_geometry, make_tracker
from reactsettle.mixing import (MixedState, average_below_surface, mixed_mass, mixed_ode_step,
                                ode_time_step, redistribute)
from reactsettle.reactions import ModifiedAsm1
from reactsettle.scheme import Flows, TankState

C0 = np.array([0.8889, 0.0295, 1.4503, 0.0904, 0.7371, 0.0025])
S0 = np.array([0.0400, 0.0026, 0.0, 0.0333, 0.0004, 0.0009])
FEED_C = 5.0 * np.array([0.1273, 0.5091, 0.3055, 3.1819e-6, 0.0, 0.0582])
FEED_S = np.array([0.04, 0.064, 0.0, 0.001, 0.0125, 0.0101])
GEOM = build_geometry(3.0, 100, 395.0)


def _state(geom, jbar, C, S):
    st = TankState.empty(geom.N, SurfaceTracker.from_cell(jbar, 1.0, geom))
    st.C[jbar:geom.N + 1] = C
    st.S[jbar:geom.N + 1] = S
    return st


def test_average_of_uniform_state():
    m = average_below_surface(_state(GEOM, 34, C0, S0), GEOM)
    assert np.allclose(m.C, C0, rtol=1e-14)
    assert np.allclose(m.S, S0, rtol=1e-14)


def test_average_of_zero_state():
    m = average_below_surface(_state(GEOM, 10, np.zeros(6), np.zeros(6)), GEOM)
    assert not m.C.any() and not m.S.any()


def test_average_two_cells():
    g = build_geometry(1.0, 2, 7.0)
    st = TankState.empty(2, SurfaceTracker.from_cell(1, 1.0, g))
    st.C[1, 0] = 1.0
    st.C[2, 0] = 3.0
    assert average_below_surface(st, g).C[0] == pytest.approx(2.0, rel=1e-15)


def test_redistribute_surface_cell():
    tr = make_tracker(2.0, GEOM)
    m = MixedState(np.ones(6), np.ones(6), GEOM.volume_below(tr.jbar, tr.alpha), tr)
    st = redistribute(m, GEOM)
    assert st.C[67, 0] == pytest.approx(1 / 3, rel=1e-12)
    assert np.all(st.C[68:101] == 1.0)
    assert not st.C[1:67].any()
    on_boundary = make_tracker(GEOM.h * 10, GEOM)
    st = redistribute(MixedState(np.ones(6), np.ones(6), 1.0, on_boundary), GEOM)
    assert st.C[on_boundary.jbar, 0] == 1.0


def test_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(200):
        jbar = int(rng.integers(1, GEOM.N - 1))
        st = random_state(rng, GEOM, jbar, float(rng.uniform(1e-3, 1)), DEFAULTS.x_hat)
        m = average_below_surface(st, GEOM)
        back = average_below_surface(redistribute(m, GEOM, st), GEOM)
        assert np.allclose(back.C, m.C, rtol=1e-12, atol=0)
        assert np.allclose(back.S, m.S, rtol=1e-12, atol=0)
        assert back.volume == pytest.approx(m.volume, rel=1e-14)


def test_ode_identity_without_flows_or_reactions():
    tr = make_tracker(1.0, GEOM)
    m = MixedState(C0.copy(), S0.copy(), GEOM.volume_below(tr.jbar, tr.alpha), tr)
    new, _ = mixed_ode_step(m, Flows(), zero_model(), 5.0, GEOM)
    assert np.array_equal(new.C, C0) and np.array_equal(new.S, S0)
    assert new.volume == m.volume


def test_fill_at_feed_concentration_is_a_fixed_point():
    tr = make_tracker(2.0, GEOM)
    m = MixedState(FEED_C.copy(), FEED_S.copy(), GEOM.volume_below(tr.jbar, tr.alpha), tr)
    flows = Flows(Q_f=790 / 3600, C_f=FEED_C, S_f=FEED_S)
    for _ in range(10):
        m, _ = mixed_ode_step(m, flows, zero_model(), 1.0, GEOM)
    assert np.allclose(m.C, FEED_C, rtol=1e-14)
    assert np.allclose(m.S, FEED_S, rtol=1e-14)


def test_post_fill_reaction_signs():
    C = (395 * C0 + 790 * FEED_C) / 1185
    S = (395 * S0 + 790 * FEED_S) / 1185
    tr = make_tracker(0.0, GEOM)
    m = MixedState(C, S, GEOM.total_volume, tr)
    model = ModifiedAsm1()
    tau = ode_time_step(model, Flows(), GEOM.A_min, GEOM.M3)
    new, terms = mixed_ode_step(m, Flows(), model, tau, GEOM)
    assert new.S[1] < S[1]
    assert new.S[4] > S[4]
    assert np.allclose(mixed_mass(new) - mixed_mass(m), terms["reaction"], rtol=0, atol=1e-10)


def test_ode_step_bound():
    model = ModifiedAsm1()
    tau = ode_time_step(model, Flows(Q_u=0.1), 100.0, 1.0)
    assert tau == pytest.approx(0.5 / model.bounds()[1])
    assert ode_time_step(zero_model(), Flows(), 100.0, 1.0) == np.inf

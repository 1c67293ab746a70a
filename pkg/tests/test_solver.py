import math

import numpy as np
import pytest
import sympy as sp
from scipy.integrate import solve_ivp

from oracles import dense_step
from taxis_cascade import grid as G
from taxis_cascade import kinetics as K
from taxis_cascade import solver as S
from taxis_cascade.errors import BlowUpError, DomainError, PositivityError


def pp_spec(alpha=3.0, beta=3.0):
    return K.KineticSpec.from_laws(K.PurePower(1.0, 1.0, alpha),
                                   K.PurePower(1.0, 1.0, beta))


def make_params(mu=0.0, epsilon=0.0, amplitude=0.0, decay_lambda=0.0, spec=None):
    return S.ModelParams(
        mu=mu, epsilon=epsilon,
        resupply=K.ResupplySpec(profile="constant", amplitude=amplitude,
                                decay_lambda=decay_lambda),
        kinetics=spec or pp_spec())


def test_params_validation():
    with pytest.raises(DomainError):
        make_params(mu=-0.1)
    with pytest.raises(DomainError):
        make_params(epsilon=1.0)


def test_step_homogeneous_equilibrium_u_and_ode_v():
    g = G.Grid(8, 8)
    st = S.State(np.ones(g.shape), np.full(g.shape, 2.0), np.zeros(g.shape))
    dt = 0.01
    new, stats = S.step(st, make_params(), dt, g)
    assert np.max(np.abs(new.u - 1.0)) < 1e-12       # f(1) = 0, no taxis
    v_expect = 2.0 + dt * (1.0 - 8.0)                # explicit growth update
    assert np.max(np.abs(new.v - v_expect)) < 1e-12
    assert np.all(new.w == 0.0)
    assert stats.clamps == 0


def test_step_w_implicit_decay():
    g = G.Grid(8, 8)
    mu = 0.7
    # laws with f(0) = g(0) = 0 keep the populations at zero
    spec = K.KineticSpec.from_laws(K.PurePower(1.0, 0.0, 3.0),
                                   K.PurePower(1.0, 0.0, 3.0))
    st = S.State(np.zeros(g.shape), np.zeros(g.shape), np.full(g.shape, 0.5))
    new, _ = S.step(st, make_params(mu=mu, spec=spec), 0.02, g)
    assert np.max(np.abs(new.u)) == 0.0
    assert np.max(np.abs(new.w - 0.5 / (1.0 + 0.02 * mu))) < 1e-12


def test_step_matches_dense_oracle():
    g = G.Grid(8, 8, 1.2, 0.9)
    rng = np.random.default_rng(17)
    control = S.StepControl(lin_tol=1e-13)
    for eps, mu, amp in ((0.0, 0.0, 0.0), (0.2, 0.6, 0.3)):
        params = make_params(mu=mu, epsilon=eps, amplitude=amp)
        st = S.State(rng.random(g.shape) + 0.1, rng.random(g.shape) + 0.1,
                     rng.random(g.shape), t=0.3)
        dt = 2e-3
        new, _ = S.step(st, params, dt, g, control)
        u1, v1, w1 = dense_step(st, params, dt, g)
        assert np.max(np.abs(new.u - u1)) < 1e-10
        assert np.max(np.abs(new.v - v1)) < 1e-10
        assert np.max(np.abs(new.w - w1)) < 1e-10


def test_step_matches_dense_oracle_with_sources():
    g = G.Grid(8, 8)
    mms = S.shipped_mms()
    params = make_params(mu=0.3)
    st = mms.state(g, 0.0)
    dt = 1e-3
    new, _ = S.step(st, params, dt, g, S.StepControl(lin_tol=1e-13), mms=mms)
    u1, v1, w1 = dense_step(st, params, dt, g, mms=mms)
    assert np.max(np.abs(new.u - u1)) < 1e-10
    assert np.max(np.abs(new.w - w1)) < 1e-10
    # one manufactured step: local defect is dt*(O(dt) + O(h^2) truncation)
    ue, ve, we = mms.fields(g, dt)
    budget = dt * (5.0 * dt + 50.0 * g.hx**2)
    assert np.max(np.abs(new.u - ue)) < budget


def test_discrete_mass_law():
    # taxis and diffusion are conservative: mass moves only through growth
    g = G.Grid(12, 10)
    rng = np.random.default_rng(23)
    params = make_params(mu=0.2, epsilon=1e-3, amplitude=0.1)
    st = S.State(rng.random(g.shape) + 0.2, rng.random(g.shape) + 0.2,
                 rng.random(g.shape) * 0.5)
    dt = 1e-3
    new, _ = S.step(st, params, dt, g)
    ks = params.kinetics
    defect_u = abs(G.integrate(new.u, g) - G.integrate(st.u, g)
                   - dt * G.integrate(ks.law_f(st.u), g))
    defect_v = abs(G.integrate(new.v, g) - G.integrate(st.v, g)
                   - dt * G.integrate(ks.law_g(st.v), g))
    tol = S.StepControl().lin_tol * g.volume
    assert defect_u <= tol
    assert defect_v <= tol


def test_consumption_monotone_in_epsilon():
    rng = np.random.default_rng(29)
    u, v, w = rng.random((3, 6, 6)) * 3.0
    prev = None
    for eps in (0.0, 1e-3, 1e-2, 0.1, 0.5, 0.99):
        term = S.consumption_term(u, v, w, eps)
        if prev is not None:
            assert np.all(term <= prev + 1e-15)
        prev = term


def test_positivity_over_many_steps():
    g = G.Grid(16, 16)
    X, Y = g.cell_centers()
    u = 0.1 + 1.5 * np.exp(-((X - 0.4) ** 2 + (Y - 0.4) ** 2) / 0.02)
    v = 0.1 + 1.0 * np.exp(-((X - 0.7) ** 2 + (Y - 0.6) ** 2) / 0.02)
    w = 0.5 + 0.4 * np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.05)
    params = make_params(mu=0.1, epsilon=1e-3, amplitude=0.1)
    control = S.StepControl(dt_max=0.02, safety=0.2)
    st = S.State(u, v, w)
    clamps = 0
    for _ in range(200):
        dt = S.suggest_dt(st, params, g, control)
        st, stats = S.step(st, params, dt, g, control)
        clamps += stats.clamps
    assert clamps == 0
    assert min(st.u.min(), st.v.min(), st.w.min()) >= 0.0


def test_clamp_window():
    phi = np.array([[0.5, -5e-13], [1.0, 2.0]])
    out, count = S._clamp_nonnegative(phi.copy(), "u")
    assert count == 1 and out[0, 1] == 0.0
    with pytest.raises(PositivityError):
        S._clamp_nonnegative(np.array([[0.1, -1e-11]]), "u")


def test_blowup_watchdog():
    g = G.Grid(8, 8)
    st = S.State(np.full(g.shape, 9e7), np.ones(g.shape), np.zeros(g.shape))
    # growth of a field already near the ceiling trips the watchdog
    spec = K.KineticSpec.from_laws(K.Logistic(a=50.0, b=1e-30, alpha=2.0),
                                   K.PurePower(1.0, 1.0, 3.0),
                                   alpha=2.0, K_f=1e-30, L_f=1.0, k_f=1.0, l_f=1.0)
    params = make_params(spec=spec)
    with pytest.raises(BlowUpError):
        S.step(st, params, 0.5, g)


def test_suggest_dt_zero_state_flat_laws():
    g = G.Grid(8, 8)
    params = make_params()
    control = S.StepControl(dt_max=0.5, safety=0.3)
    st = S.State(np.zeros(g.shape), np.zeros(g.shape), np.zeros(g.shape))
    assert S.suggest_dt(st, params, g, control) == pytest.approx(0.3 * 0.5, rel=1e-9)


def test_suggest_dt_advective_bound():
    g = G.Grid(10, 10)  # h = 0.1
    X, _ = g.cell_centers()
    control = S.StepControl(dt_max=1e6, safety=0.25)
    params = make_params()
    st = S.State(np.zeros(g.shape), np.zeros(g.shape), 10.0 * X)
    dt = S.suggest_dt(st, params, g, control)
    assert dt == pytest.approx(0.25 * 0.1 / 10.0, rel=1e-6)
    st2 = S.State(np.zeros(g.shape), np.zeros(g.shape), 20.0 * X)
    assert S.suggest_dt(st2, params, g, control) == pytest.approx(dt / 2.0, rel=1e-6)


def test_suggest_dt_reaction_bound():
    g = G.Grid(8, 8)
    control = S.StepControl(dt_max=1e6, safety=1.0)
    params = make_params()
    st = S.State(np.full(g.shape, 2.0), np.full(g.shape, 1.0), np.zeros(g.shape))
    # |f'(2)| = 12, |g'(1)| = 3
    assert S.suggest_dt(st, params, g, control) == pytest.approx(1.0 / 16.0, rel=1e-5)


def test_homogeneous_reduction_against_ode_oracle():
    g = G.Grid(6, 8)
    params = make_params(mu=0.4, epsilon=0.05, amplitude=0.2)

    def rhs(t, y):
        u, v, w = y
        cons = (u + v) * w / (1.0 + 0.05 * (u + v) * w)
        return [1.0 - u**3, 1.0 - v**3, -cons - 0.4 * w + 0.2]

    sol = solve_ivp(rhs, (0.0, 1.0), [2.0, 0.5, 1.0], method="Radau",
                    rtol=1e-11, atol=1e-13)
    exact = sol.y[:, -1]

    def integrate(dt):
        st = S.State(np.full(g.shape, 2.0), np.full(g.shape, 0.5),
                     np.full(g.shape, 1.0))
        n = int(round(1.0 / dt))
        for _ in range(n):
            st, _ = S.step(st, params, dt, g)
        return np.array([st.u[0, 0], st.v[0, 0], st.w[0, 0]])

    err1 = np.max(np.abs(integrate(2e-3) - exact))
    err2 = np.max(np.abs(integrate(1e-3) - exact))
    assert err1 < 0.02                      # first-order accuracy at dt = 2e-3
    assert 1.5 < err1 / err2 < 2.5          # empirical O(dt)


# --- manufactured sources against a symbolic oracle ------------------------


def test_mms_sources_match_sympy():
    x, y, t = sp.symbols("x y t", real=True)
    u = 2 + sp.cos(sp.pi * x) * sp.cos(sp.pi * y) * sp.exp(-t)
    v = 1 + sp.Rational(1, 2) * sp.exp(-t)
    w = sp.Rational(3, 10) + sp.Rational(1, 5) * sp.exp(-t)
    mu = sp.Rational(3, 10)
    f = lambda s: 1 - s**3
    g_law = lambda s: 1 - s**3

    def lap(e):
        return sp.diff(e, x, 2) + sp.diff(e, y, 2)

    s_u = (sp.diff(u, t) - lap(u)
           + sp.diff(u * sp.diff(w, x), x) + sp.diff(u * sp.diff(w, y), y)
           - f(u))
    s_v = (sp.diff(v, t) - lap(v)
           + sp.diff(v * sp.diff(u, x), x) + sp.diff(v * sp.diff(u, y), y)
           - g_law(v))
    s_w = sp.diff(w, t) - lap(w) + (u + v) * w + mu * w  # eps = 0, r = 0
    fn_u = sp.lambdify((x, y, t), sp.simplify(s_u), "numpy")
    fn_v = sp.lambdify((x, y, t), sp.simplify(s_v), "numpy")
    fn_w = sp.lambdify((x, y, t), sp.simplify(s_w), "numpy")

    grid = G.Grid(16, 16)
    mms = S.shipped_mms()
    params = make_params(mu=0.3)
    rng = np.random.default_rng(31)
    for tv in (0.0, 0.37, 1.21):
        got_u, got_v, got_w = S.mms_source(mms, params, grid, tv)
        X, Y = grid.cell_centers()
        idx = rng.integers(0, grid.nx * grid.ny, size=20)
        jj, ii = np.unravel_index(idx, grid.shape)
        for j, i in zip(jj, ii):
            assert got_u[j, i] == pytest.approx(float(fn_u(X[j, i], Y[j, i], tv)), abs=1e-12)
            assert got_v[j, i] == pytest.approx(float(fn_v(X[j, i], Y[j, i], tv)), abs=1e-12)
            assert got_w[j, i] == pytest.approx(float(fn_w(X[j, i], Y[j, i], tv)), abs=1e-12)


def test_mms_constant_equilibrium_has_zero_sources():
    grid = G.Grid(8, 8)
    mms = S.MmsSpec(u=S.MmsComponent(base=1.0), v=S.MmsComponent(base=1.0),
                    w=S.MmsComponent(base=0.0))
    params = make_params()  # f(1) = g(1) = 0, w = 0, mu = 0, r = 0
    for tv in (0.0, 0.5):
        for s in S.mms_source(mms, params, grid, tv):
            assert np.max(np.abs(s)) < 1e-14


def test_mms_time_frozen_sources_are_time_independent():
    grid = G.Grid(8, 8)
    mms = S.MmsSpec(u=S.MmsComponent(base=2.0, cos_amp=0.5, cos_rate=0.0),
                    v=S.MmsComponent(base=1.0), w=S.MmsComponent(base=0.2))
    params = make_params(mu=0.1)
    s0 = S.mms_source(mms, params, grid, 0.0)
    s1 = S.mms_source(mms, params, grid, 0.8)
    for a, b in zip(s0, s1):
        assert np.array_equal(a, b)


def test_mms_rejects_negative_rates():
    with pytest.raises(Exception):
        S.MmsComponent(base=1.0, cos_amp=1.0, cos_rate=-1.0)

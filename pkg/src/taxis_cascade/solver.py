"""IMEX time integration of the taxis cascade with positivity preservation.

One step advances the cascade in order u -> v -> w: diffusion is implicit
(backward Euler, CG solve of I - dt*Lap), taxis and growth are explicit, and
the v-taxis potential is the freshly solved u.  The nutrient consumption is
semi-implicit through a nonnegative diagonal, so w inherits nonnegativity
from the M-matrix solve whatever dt is.  Entries in [-1e-12, 0) are clamped
to zero and counted; anything lower is a hard positivity error.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as _fft

from taxis_cascade import grid as gridmod
from taxis_cascade import kinetics as kin
from taxis_cascade import monitors as mon
from taxis_cascade.errors import (
    BlowUpError,
    DomainError,
    LinearSolveError,
    PositivityError,
    StructuralError,
)

CLAMP_FLOOR = -1e-12
BLOWUP_LIMIT = 1e8
TINY_GRADIENT = 1e-30


@dataclass(frozen=True)
class ModelParams:
    mu: float
    epsilon: float
    resupply: kin.ResupplySpec
    kinetics: kin.KineticSpec

    def __post_init__(self):
        if self.mu < 0:
            raise DomainError(f"mu must be nonnegative, got {self.mu}")
        if not (0.0 <= self.epsilon < 1.0):
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    t: float = 0.0
    step_index: int = 0

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.w.copy(), self.t, self.step_index)


@dataclass(frozen=True)
class StepControl:
    dt_max: float = 0.02
    safety: float = 0.2
    lin_tol: float = 1e-10
    max_iter: int = 2000

    def __post_init__(self):
        if not (self.dt_max > 0 and 0 < self.safety <= 1 and self.lin_tol > 0
                and self.max_iter > 0):
            raise DomainError("step control values must be positive, safety <= 1")


@dataclass
class StepStats:
    clamps: int = 0
    cg_iterations: tuple[int, int, int] = (0, 0, 0)


def consumption_term(u, v, w, epsilon):
    """Nutrient uptake (u+v) w / (1 + eps (u+v) w); pointwise nonincreasing in eps."""
    s = (u + v) * w
    return s / (1.0 + epsilon * s)


@lru_cache(maxsize=32)
def _neumann_eigenvalues(g: gridmod.Grid) -> np.ndarray:
    """Eigenvalue table of -Lap_h in the half-sample cosine basis, shape (ny, nx)."""
    lam_x = (2.0 / g.hx**2) * (1.0 - np.cos(np.pi * np.arange(g.nx) / g.nx))
    lam_y = (2.0 / g.hy**2) * (1.0 - np.cos(np.pi * np.arange(g.ny) / g.ny))
    table = lam_y[:, None] + lam_x[None, :]
    table.setflags(write=False)
    return table


class _SpectralHelmholtz:
    """Exact inverse of c*I - dt*Lap in the Neumann (half-sample cosine) basis.

    The mirror-ghost five-point Laplacian is diagonalized by the type-II DCT
    per axis with eigenvalues -(2/h^2)(1 - cos(pi k / n)); used as the PCG
    preconditioner (exact for the constant-diagonal solves, mean-diagonal
    approximation for the consumption-augmented nutrient solve).
    """

    def __init__(self, g: gridmod.Grid, dt: float, diag_const: float):
        self.denom = diag_const + dt * _neumann_eigenvalues(g)

    def solve(self, b: np.ndarray) -> np.ndarray:
        coeffs = _fft.dctn(b, type=2, norm="ortho")
        return _fft.idctn(coeffs / self.denom, type=2, norm="ortho")


def _pcg(apply_a, precond, b, x0, rtol, max_iter, label, mean_correct=False):
    """Preconditioned conjugate gradients, warm-started from x0.

    Converges to a relative residual of rtol; with the exact spectral
    preconditioner this takes a single iteration, the nutrient solve takes a
    few more because its diagonal varies across cells.

    mean_correct applies when A maps constants to constants (the population
    diffusion operator): shifting the iterate by the residual mean zeroes the
    residual's cell sum, so the discrete mass law holds to rounding rather
    than to the solve tolerance, and strictly shrinks the residual norm.
    """
    def finish(x, r, it):
        if mean_correct:
            x = x + float(np.mean(r))
        return x, it

    bnorm = math.sqrt(float(np.vdot(b, b)))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    target = rtol * bnorm
    x = x0.copy()
    r = b - apply_a(x)
    if math.sqrt(float(np.vdot(r, r))) <= target:
        return finish(x, r, 0)
    z = precond.solve(r)
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        alpha = rz / float(np.vdot(p, ap))
        x += alpha * p
        r -= alpha * ap
        if math.sqrt(float(np.vdot(r, r))) <= target:
            return finish(x, r, it)
        z = precond.solve(r)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    rnorm = math.sqrt(float(np.vdot(r, r)))
    raise LinearSolveError(
        f"{label}: PCG stalled at relative residual "
        f"{rnorm / bnorm:.3e} after {max_iter} iterations"
    )


def _clamp_nonnegative(phi, name):
    """Zero out dust in [-1e-12, 0); anything below is a positivity error."""
    fmin = float(np.min(phi))
    if fmin >= 0.0:
        return phi, 0
    if fmin < CLAMP_FLOOR:
        idx = np.unravel_index(int(np.argmin(phi)), phi.shape)
        raise PositivityError(name, tuple(int(i) for i in idx), fmin)
    mask = phi < 0.0
    count = int(np.count_nonzero(mask))
    phi[mask] = 0.0
    return phi, count


def _watchdog(phi, name, t):
    if not np.all(np.isfinite(phi)):
        raise BlowUpError(f"{name} lost finiteness at t={t:.6g}")
    m = float(np.max(np.abs(phi)))
    if m > BLOWUP_LIMIT:
        raise BlowUpError(f"|{name}| reached {m:.3e} (> {BLOWUP_LIMIT:.0e}) at t={t:.6g}")


def step(state: State, params: ModelParams, dt: float, g: gridmod.Grid,
         control: StepControl = StepControl(), mms: "MmsSpec | None" = None
         ) -> tuple[State, StepStats]:
    """One IMEX step of size dt; returns the new state and step statistics."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    g.check_conforms(state.u, state.v, state.w)
    ks = params.kinetics
    t_new = state.t + dt
    if mms is not None:
        s_u, s_v, s_w = mms.sources(params, g, t_new)

    def diffuse(x):
        return x - dt * gridmod.laplacian(x, g)

    precond_uv = _SpectralHelmholtz(g, dt, 1.0)
    rhs_u = state.u + dt * (-gridmod.taxis_divergence(state.u, state.w, g)
                            + ks.law_f(state.u))
    if mms is not None:
        rhs_u = rhs_u + dt * s_u
    u_new, it_u = _pcg(diffuse, precond_uv, rhs_u, state.u, control.lin_tol,
                       control.max_iter, "u-solve", mean_correct=True)
    u_new, clamp_u = _clamp_nonnegative(u_new, "u")
    _watchdog(u_new, "u", t_new)

    rhs_v = state.v + dt * (-gridmod.taxis_divergence(state.v, u_new, g)
                            + ks.law_g(state.v))
    if mms is not None:
        rhs_v = rhs_v + dt * s_v
    v_new, it_v = _pcg(diffuse, precond_uv, rhs_v, state.v, control.lin_tol,
                       control.max_iter, "v-solve", mean_correct=True)
    v_new, clamp_v = _clamp_nonnegative(v_new, "v")
    _watchdog(v_new, "v", t_new)

    sigma = u_new + v_new
    consumption_diag = sigma / (1.0 + params.epsilon * sigma * state.w)
    diag = 1.0 + dt * (params.mu + consumption_diag)

    def helmholtz_w(x):
        return diag * x - dt * gridmod.laplacian(x, g)

    precond_w = _SpectralHelmholtz(g, dt, float(np.mean(diag)))
    rhs_w = state.w + dt * params.resupply.field(g, t_new)
    if mms is not None:
        rhs_w = rhs_w + dt * s_w
    w_new, it_w = _pcg(helmholtz_w, precond_w, rhs_w, state.w, control.lin_tol,
                       control.max_iter, "w-solve")
    w_new, clamp_w = _clamp_nonnegative(w_new, "w")
    _watchdog(w_new, "w", t_new)

    new_state = State(u=u_new, v=v_new, w=w_new, t=t_new, step_index=state.step_index + 1)
    stats = StepStats(clamps=clamp_u + clamp_v + clamp_w,
                      cg_iterations=(it_u, it_v, it_w))
    return new_state, stats


def _slope_estimate(law, s: float) -> float:
    """|law'(s)| by differencing, one-sided near the s >= 0 boundary."""
    h = 1e-6 * max(1.0, abs(s))
    if s - h < 0.0:
        return abs(float(law(s + h)) - float(law(max(s, 0.0)))) / h
    return abs(float(law(s + h)) - float(law(s - h))) / (2.0 * h)


def suggest_dt(state: State, params: ModelParams, g: gridmod.Grid,
               control: StepControl) -> float:
    """Advective and reaction-limited step size.

    dt = safety * min(dt_max, h_min / (max|grad w| + max|grad u|),
                      1 / (1 + |f'| + |g'|)) with the slopes estimated at the
    current field maxima.  Returns safety * dt_max for the flat zero state.
    """
    grad_sum = (gridmod.max_face_gradient(state.w, g)
                + gridmod.max_face_gradient(state.u, g))
    advective = g.h_min / (grad_sum + TINY_GRADIENT)
    slope_f = _slope_estimate(params.kinetics.law_f, float(np.max(state.u)))
    slope_g = _slope_estimate(params.kinetics.law_g, float(np.max(state.v)))
    reactive = 1.0 / (1.0 + slope_f + slope_g)
    return control.safety * min(control.dt_max, advective, reactive)


# --- manufactured solutions ----------------------------------------------


@dataclass(frozen=True)
class MmsComponent:
    """base + cos_amp cos(pi x/Lx) cos(pi y/Ly) e^(-cos_rate t) + flat_amp e^(-flat_rate t)."""

    base: float
    cos_amp: float = 0.0
    cos_rate: float = 0.0
    flat_amp: float = 0.0
    flat_rate: float = 0.0

    def __post_init__(self):
        if self.cos_rate < 0 or self.flat_rate < 0:
            raise StructuralError("manufactured decay rates must be nonnegative")

    def describe(self) -> str:
        return (f"{self.base!r} {self.cos_amp!r} {self.cos_rate!r} "
                f"{self.flat_amp!r} {self.flat_rate!r}")


@lru_cache(maxsize=16)
def _mms_trig(g: gridmod.Grid):
    """Cached first-cosine-mode arrays of the manufactured family on g."""
    kx = math.pi / g.Lx
    ky = math.pi / g.Ly
    X, Y = g.cell_centers()
    bundle = {
        "kx": kx, "ky": ky,
        "coscos": np.cos(kx * X) * np.cos(ky * Y),
        "sincos": np.sin(kx * X) * np.cos(ky * Y),
        "cossin": np.cos(kx * X) * np.sin(ky * Y),
    }
    for v in bundle.values():
        if isinstance(v, np.ndarray):
            v.setflags(write=False)
    return bundle


class _MmsFields:
    """Closed-form value/derivative bundle of one component at one time."""

    def __init__(self, comp: MmsComponent, g: gridmod.Grid, t: float):
        trig = _mms_trig(g)
        kx, ky = trig["kx"], trig["ky"]
        spatial = trig["coscos"]
        ec = math.exp(-comp.cos_rate * t) * comp.cos_amp
        ef = math.exp(-comp.flat_rate * t) * comp.flat_amp
        self.value = comp.base + ec * spatial + ef
        self.ddt = -comp.cos_rate * ec * spatial - comp.flat_rate * ef
        self.lap = -(kx**2 + ky**2) * ec * spatial
        self.gx = -ec * kx * trig["sincos"]
        self.gy = -ec * ky * trig["cossin"]


@dataclass(frozen=True)
class MmsSpec:
    """Cosine-based manufactured triple with zero normal derivative on the boundary."""

    u: MmsComponent
    v: MmsComponent
    w: MmsComponent

    def fields(self, g: gridmod.Grid, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (_MmsFields(self.u, g, t).value,
                _MmsFields(self.v, g, t).value,
                _MmsFields(self.w, g, t).value)

    def state(self, g: gridmod.Grid, t: float = 0.0) -> State:
        u, v, w = self.fields(g, t)
        return State(u, v, w, t=t)

    def sources(self, params: ModelParams, g: gridmod.Grid, t: float):
        """Residual sources making the triple an exact solution of the system."""
        fu = _MmsFields(self.u, g, t)
        fv = _MmsFields(self.v, g, t)
        fw = _MmsFields(self.w, g, t)
        ks = params.kinetics
        # div(c grad p) = grad c . grad p + c lap p, all in closed form
        s_u = (fu.ddt - fu.lap
               + (fu.gx * fw.gx + fu.gy * fw.gy + fu.value * fw.lap)
               - ks.law_f(fu.value))
        s_v = (fv.ddt - fv.lap
               + (fv.gx * fu.gx + fv.gy * fu.gy + fv.value * fu.lap)
               - ks.law_g(fv.value))
        s_w = (fw.ddt - fw.lap
               + consumption_term(fu.value, fv.value, fw.value, params.epsilon)
               + params.mu * fw.value
               - params.resupply.field(g, t))
        return s_u, s_v, s_w


def mms_source(mms: MmsSpec, params: ModelParams, g: gridmod.Grid, t: float):
    return mms.sources(params, g, t)


def shipped_mms() -> MmsSpec:
    """The verification triple: cosine forager, spatially flat decaying v and w."""
    return MmsSpec(
        u=MmsComponent(base=2.0, cos_amp=1.0, cos_rate=1.0),
        v=MmsComponent(base=1.0, flat_amp=0.5, flat_rate=1.0),
        w=MmsComponent(base=0.3, flat_amp=0.2, flat_rate=1.0),
    )


# --- the run driver -------------------------------------------------------


@dataclass
class RunSetup:
    grid: gridmod.Grid
    params: ModelParams
    initial: kin.InitialData
    control: StepControl = StepControl()
    t_end: float = 1.0
    monitor_cadence: float = 0.25
    monitor_delta: float = 1e-2
    monitor_q: float = 2.0
    snapshot_every: float = 0.0  # 0 disables intermediate snapshots
    out_dir: Path | None = None
    config_text: str = ""
    label: str = "run"
    mms: MmsSpec | None = None
    fixed_dt: float | None = None
    force: bool = False


@dataclass
class CheckStats:
    min_margin: float = math.inf
    violations: int = 0
    worst_t: float = math.nan
    count: int = 0

    def update(self, entry: mon.MonitorEntry):
        self.count += 1
        if entry.margin < self.min_margin:
            self.min_margin = entry.margin
            self.worst_t = entry.t
        if not entry.passed:
            self.violations += 1


@dataclass
class RunResult:
    setup: RunSetup
    gate1: kin.GateResult
    gate2: kin.GateResult
    series: dict
    cadence: dict
    report: mon.MonitorReport
    consts: mon.BoundConstants
    functional_params: mon.FunctionalParams
    final_state: State
    completed: bool
    failure: str = ""
    decay: mon.DecayDetection | None = None
    regularity: mon.RegularityReport | None = None
    step_checks: dict = field(default_factory=dict)
    total_clamps: int = 0
    steps: int = 0
    wall_time: float = 0.0

    @property
    def out_dir(self):
        return self.setup.out_dir


def git_blob_hash(text: str) -> str:
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class _EventClock:
    """Merged forced-time grid (cadence, snapshots, t_end) with exact landings."""

    def __init__(self, cadence: float, snap: float, t_end: float):
        self.cadence = cadence
        self.snap = snap
        self.t_end = t_end
        self.k_cad = 0
        self.k_snap = 0

    def next_cadence(self) -> float:
        if self.cadence <= 0:
            return math.inf
        return (self.k_cad + 1) * self.cadence

    def next_snapshot(self) -> float:
        if self.snap <= 0:
            return math.inf
        return (self.k_snap + 1) * self.snap

    def clip(self, t: float, dt: float) -> tuple[float, float, bool, bool]:
        """Clip dt to the next event; returns (dt, t_new, cadence_hit, snap_hit)."""
        nc, ns = self.next_cadence(), self.next_snapshot()
        target = min(nc, ns, self.t_end)
        eps = 1e-9 * max(1.0, abs(target))
        if t + dt >= target - eps:
            dt = target - t
            t_new = target
        else:
            t_new = t + dt
        cad_hit = abs(t_new - nc) <= eps
        snap_hit = abs(t_new - ns) <= eps
        if cad_hit:
            self.k_cad += 1
        if snap_hit:
            self.k_snap += 1
        return dt, t_new, cad_hit, snap_hit or t_new >= self.t_end - eps


def _write_snapshot(out_dir: Path, state: State, g: gridmod.Grid):
    for name, phi in (("u", state.u), ("v", state.v), ("w", state.w)):
        gridmod.write_field(out_dir / f"{name}_{state.step_index:08d}.fld", phi, g, state.t)


def run(setup: RunSetup) -> RunResult:
    """Integrate to t_end, evaluating every monitor; write outputs if configured.

    Watchdog failures do not raise: the partial series, report and a failure
    record are returned (and written) instead.
    """
    g = setup.grid
    params = setup.params
    ks = params.kinetics
    control = setup.control
    setup.initial.validate(g)
    t0 = time.perf_counter()

    gate1 = kin.global_existence_gate(ks)
    gate2 = kin.eventual_regularity_gate(ks, params)
    hypotheses_note = "" if gate1.passed else "hypotheses unmet"

    consts = mon.BoundConstants.from_setup(
        g, ks, params.resupply, params.mu, setup.initial.u0, setup.initial.v0,
        setup.initial.w0)
    fparams = mon.pick_theta_delta(setup.monitor_q)

    state = State(setup.initial.u0.astype(float).copy(),
                  setup.initial.v0.astype(float).copy(),
                  setup.initial.w0.astype(float).copy())
    report = mon.MonitorReport()
    step_checks: dict[str, CheckStats] = {}
    series: dict[str, list] = {k: [] for k in (
        "t", "dt", "mass_u", "mass_v", "mass_w", "linf_u", "linf_v", "linf_w",
        "clamps", "int_u_alpha", "int_v_beta", "int_f_u", "int_g_v",
        "int_abs_g_v", "int_consumption", "r_linf", "wbar", "log_grad_v",
        "cum_log_grad")}
    cadence: dict[str, list] = {k: [] for k in (
        "t", "linf_u", "linf_v", "maxgrad_u", "maxgrad_v", "seminorm_u_w24",
        "weighted_functional")}

    out_dir = Path(setup.out_dir) if setup.out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    wbar = gridmod.norm_linf(setup.initial.w0)

    def record_step(dt, clamps):
        gv = ks.law_g(state.v)
        series["t"].append(state.t)
        series["dt"].append(dt)
        series["mass_u"].append(gridmod.integrate(state.u, g))
        series["mass_v"].append(gridmod.integrate(state.v, g))
        series["mass_w"].append(gridmod.integrate(state.w, g))
        series["linf_u"].append(gridmod.norm_linf(state.u))
        series["linf_v"].append(gridmod.norm_linf(state.v))
        series["linf_w"].append(gridmod.norm_linf(state.w))
        series["clamps"].append(clamps)
        series["int_u_alpha"].append(gridmod.integrate(state.u**ks.alpha, g))
        series["int_v_beta"].append(gridmod.integrate(state.v**ks.beta, g))
        series["int_f_u"].append(gridmod.integrate(ks.law_f(state.u), g))
        series["int_g_v"].append(gridmod.integrate(gv, g))
        series["int_abs_g_v"].append(gridmod.integrate(np.abs(gv), g))
        series["int_consumption"].append(
            gridmod.integrate(consumption_term(state.u, state.v, state.w,
                                               params.epsilon), g))
        series["r_linf"].append(params.resupply.linf(state.t))
        series["wbar"].append(wbar)
        lg = mon.log_gradient_integrand(state.v, g)
        series["log_grad_v"].append(lg)
        if len(series["t"]) == 1:
            series["cum_log_grad"].append(0.0)
        else:
            prev_t = series["t"][-2]
            prev_lg = series["log_grad_v"][-2]
            series["cum_log_grad"].append(
                series["cum_log_grad"][-1] + 0.5 * (state.t - prev_t) * (lg + prev_lg))

    # against a source-augmented (manufactured) system the a-priori bounds
    # do not apply; record series and snapshots only
    checks_active = setup.mms is None

    def stepwise_checks(dt):
        if not checks_active:
            return []
        entries = mon.check_mass(state.t, series["mass_u"][-1], series["mass_v"][-1],
                                 consts, dt)
        entries += mon.check_w_supersolution(state.t, series["linf_w"][-1], wbar,
                                             consts, params.mu, dt)
        for e in entries:
            if hypotheses_note:
                e.note = (e.note + " " + hypotheses_note).strip()
            step_checks.setdefault(e.check, CheckStats()).update(e)
        return entries

    def cadence_checks(dt, entries):
        if not checks_active:
            return
        report.extend(entries)
        report.extend(mon.check_window_integrals(
            state.t, series["t"], series["int_u_alpha"], series["int_v_beta"],
            consts, dt))
        report.append(mon.check_v_mass_identity(
            state.t, series["t"], series["int_g_v"], series["int_abs_g_v"],
            series["mass_v"], dt_scale=max(series["dt"])))
        report.append(mon.check_log_gradient_energy(
            state.t, series["t"], series["cum_log_grad"]))
        cadence["t"].append(state.t)
        cadence["linf_u"].append(series["linf_u"][-1])
        cadence["linf_v"].append(series["linf_v"][-1])
        cadence["maxgrad_u"].append(gridmod.max_face_gradient(state.u, g))
        cadence["maxgrad_v"].append(gridmod.max_face_gradient(state.v, g))
        cadence["seminorm_u_w24"].append(gridmod.seminorm_w2p(state.u, g, 4))
        wf = mon.weighted_functional(state.u, state.w, fparams, g)
        if wf is None:
            cadence["weighted_functional"].append(math.nan)
            report.append(mon.MonitorEntry.report_only(
                state.t, "weighted_functional", math.nan, note="pre-decay, skipped"))
        else:
            cadence["weighted_functional"].append(wf)
            report.append(mon.MonitorEntry.report_only(
                state.t, "weighted_functional", wf))

    completed = True
    failure = ""
    total_clamps = 0
    record_step(0.0, 0)
    cadence_checks(0.0, stepwise_checks(0.0))
    if out_dir is not None:
        _write_snapshot(out_dir, state, g)

    clock = _EventClock(setup.monitor_cadence, setup.snapshot_every, setup.t_end)
    try:
        while state.t < setup.t_end - 1e-12 * max(1.0, setup.t_end):
            if setup.fixed_dt is not None:
                dt = setup.fixed_dt
            else:
                dt = suggest_dt(state, params, g, control)
            dt, t_new, cad_hit, snap_hit = clock.clip(state.t, dt)
            state, stats = step(state, params, dt, g, control, mms=setup.mms)
            state.t = t_new
            total_clamps += stats.clamps
            # advance the nutrient supersolution with the analytic resupply sup
            r_prev = series["r_linf"][-1]
            wbar = mon.supersolution_step(wbar, params.mu, r_prev,
                                          params.resupply.linf(t_new), dt)
            record_step(dt, stats.clamps)
            entries = stepwise_checks(dt)
            if cad_hit or t_new >= setup.t_end - 1e-12:
                cadence_checks(dt, entries)
            if out_dir is not None and snap_hit:
                _write_snapshot(out_dir, state, g)
    except (PositivityError, LinearSolveError, BlowUpError) as exc:
        completed = False
        failure = f"{type(exc).__name__}: {exc}"

    series_np = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    cadence_np = {k: np.asarray(v, dtype=float) for k, v in cadence.items()}

    decay = None
    regularity = None
    if completed and checks_active:
        decay = mon.detect_w_decay(series_np["t"], series_np["linf_w"],
                                   series_np["mass_w"], series_np["int_consumption"],
                                   setup.monitor_delta, gate_ok=gate2.passed)
        report.append(mon.MonitorEntry.report_only(
            state.t, "w_decay_detect",
            decay.t_detect if decay.detected else math.nan,
            note=(decay.note or "report-only")))
        if decay.detected:
            report.append(mon.MonitorEntry.report_only(
                state.t, "w_tail_mass", decay.tail_w_integral, note=decay.note or "report-only"))
            report.append(mon.MonitorEntry.report_only(
                state.t, "w_tail_consumption", decay.tail_consumption,
                note=decay.note or "report-only"))
            tail_series = {
                "linf_u": cadence_np["linf_u"],
                "linf_v": cadence_np["linf_v"],
                "maxgrad_u": cadence_np["maxgrad_u"],
                "maxgrad_v": cadence_np["maxgrad_v"],
                "seminorm_u_w24": cadence_np["seminorm_u_w24"],
                "weighted_functional": cadence_np["weighted_functional"],
            }
            regularity = mon.eventual_regularity_report(
                cadence_np["t"], tail_series, decay.t_detect)
            report.append(mon.MonitorEntry.report_only(
                state.t, "eventual_regularity",
                1.0 if regularity.regularized else 0.0,
                note=(regularity.note or "report-only")))

    result = RunResult(
        setup=setup, gate1=gate1, gate2=gate2, series=series_np,
        cadence=cadence_np, report=report, consts=consts,
        functional_params=fparams, final_state=state, completed=completed,
        failure=failure, decay=decay, regularity=regularity,
        step_checks=step_checks, total_clamps=total_clamps,
        steps=state.step_index, wall_time=time.perf_counter() - t0)
    if out_dir is not None:
        _write_outputs(result, out_dir)
    return result


def _fmt(x) -> str:
    return repr(float(x))


def _write_outputs(result: RunResult, out_dir: Path):
    series = result.series
    cols = ["t", "dt", "mass_u", "mass_v", "mass_w", "linf_u", "linf_v",
            "linf_w", "clamps"]
    lines = [",".join(cols)]
    n = len(series["t"])
    for i in range(n):
        row = [_fmt(series[c][i]) if c != "clamps" else str(int(series["clamps"][i]))
               for c in cols]
        lines.append(",".join(row))
    (out_dir / "timeseries.csv").write_text("\n".join(lines) + "\n")

    (out_dir / "monitors.csv").write_text(
        "\n".join(result.report.csv_rows()) + "\n")

    manifest = [
        "# taxis-cascade run",
        f"# label: {result.setup.label}",
        f"# config-hash: {git_blob_hash(result.setup.config_text)}",
        f"# status: {'completed' if result.completed else 'failed'}",
        f"# steps: {result.steps}",
        f"# clamps: {result.total_clamps}",
    ]
    if result.failure:
        manifest.append(f"# failure: {result.failure}")
    manifest.append(result.setup.config_text.rstrip("\n"))
    (out_dir / "manifest.txt").write_text("\n".join(manifest) + "\n")

"""Generalized-solution identities evaluated on recorded trajectories.

A trajectory is a directory of FLD1 snapshot triples plus the manifest that
produced them.  The evaluators quadrature the space-time identities of the
solution concept against a small basis of smooth, compactly supported test
functions: midpoint in space on the cell centers, trapezoid in time on the
snapshot times, field gradients by face differences, test-function
derivatives in closed form.

A finite basis can falsify the inequalities but never certify them; the
five shipped functions are chosen to exercise every term, including the
initial-trace contributions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from taxis_cascade import grid as gridmod
from taxis_cascade.config import parse_config
from taxis_cascade.errors import DomainError, StructuralError


# --- smooth bump building blocks -----------------------------------------


def _bump(z):
    """exp(1 - 1/(1 - z^2)) inside |z| < 1, zero outside; C-infinity."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi**2))
    return out


def _bump_dz(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi**2)) * (-2.0 * zi / (1.0 - zi**2) ** 2)
    return out


def _mollifier_piece(z):
    """exp(-1/z) for z > 0 else 0; building block of the smooth step."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0.0
    out[pos] = np.exp(-1.0 / z[pos])
    return out


def _mollifier_piece_dz(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0.0
    out[pos] = np.exp(-1.0 / z[pos]) / z[pos] ** 2
    return out


@dataclass(frozen=True)
class SpatialBump:
    """Radial bump of unit height centered at (cx, cy) with radius r."""

    cx: float
    cy: float
    r: float

    def value(self, x, y):
        rho = np.sqrt((np.asarray(x) - self.cx) ** 2 + (np.asarray(y) - self.cy) ** 2) / self.r
        return _bump(rho)

    def grad(self, x, y):
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        rho = np.sqrt(dx**2 + dy**2) / self.r
        d = _bump_dz(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(rho > 0.0, d / (rho * self.r**2), 0.0)
        return scale * dx, scale * dy


@dataclass(frozen=True)
class SpatialConstant:
    def value(self, x, y):
        return np.ones_like(np.asarray(x, dtype=float))

    def grad(self, x, y):
        z = np.zeros_like(np.asarray(x, dtype=float))
        return z, z.copy()


@dataclass(frozen=True)
class TemporalBump:
    """Bump supported on (t0, t1), zero at and outside the endpoints."""

    t0: float
    t1: float

    def _map(self, t):
        mid = 0.5 * (self.t0 + self.t1)
        half = 0.5 * (self.t1 - self.t0)
        return (np.asarray(t, dtype=float) - mid) / half, half

    def value(self, t):
        z, _ = self._map(t)
        return _bump(z)

    def dvalue(self, t):
        z, half = self._map(t)
        return _bump_dz(z) / half


@dataclass(frozen=True)
class TemporalPlateau:
    """Identically 1 on [0, a], smooth monotone descent to 0 at b.

    Uses the classic two-mollifier partition so all derivatives vanish at
    both junctions; exercises the phi(.,0) initial-trace terms.
    """

    a: float
    b: float

    def _pieces(self, t):
        z = (np.asarray(t, dtype=float) - self.a) / (self.b - self.a)
        return z, _mollifier_piece(z), _mollifier_piece(1.0 - z)

    def value(self, t):
        z, p, q = self._pieces(t)
        out = np.where(z <= 0.0, 1.0, 0.0)
        mid = (z > 0.0) & (z < 1.0)
        denom = p + q
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(mid, q / np.where(denom > 0, denom, 1.0), 0.0)
        return np.where(mid, frac, out)

    def dvalue(self, t):
        z, p, q = self._pieces(t)
        dp = _mollifier_piece_dz(z)
        dq = -_mollifier_piece_dz(1.0 - z)
        mid = (z > 0.0) & (z < 1.0)
        denom = (p + q) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(mid, (dq * p - q * dp) / np.where(denom > 0, denom, 1.0), 0.0)
        return val / (self.b - self.a)


@dataclass(frozen=True)
class TestFunction:
    """Separable space-time test function with closed-form derivatives."""

    name: str
    spatial: object
    temporal: object

    def phi(self, x, y, t: float):
        return self.spatial.value(x, y) * float(self.temporal.value(t))

    def phi_t(self, x, y, t: float):
        return self.spatial.value(x, y) * float(self.temporal.dvalue(t))

    def grad_phi(self, x, y, t: float):
        gx, gy = self.spatial.grad(x, y)
        f = float(self.temporal.value(t))
        return gx * f, gy * f


def default_basis(t_end: float) -> list[TestFunction]:
    """Five functions: one spatial constant and four off-center bumps.

    Two temporal placements: plateaus live on the initial trace, interior
    bumps probe the bulk evolution.
    """
    T = t_end
    return [
        TestFunction("const_x_plateau", SpatialConstant(),
                     TemporalPlateau(0.15 * T, 0.75 * T)),
        TestFunction("bump_a_x_bump", SpatialBump(0.3, 0.3, 0.25),
                     TemporalBump(0.2 * T, 0.6 * T)),
        TestFunction("bump_b_x_plateau", SpatialBump(0.7, 0.4, 0.3),
                     TemporalPlateau(0.1 * T, 0.55 * T)),
        TestFunction("bump_c_x_bump", SpatialBump(0.4, 0.7, 0.3),
                     TemporalBump(0.35 * T, 0.9 * T)),
        TestFunction("bump_d_x_plateau", SpatialBump(0.65, 0.65, 0.2),
                     TemporalPlateau(0.3 * T, 0.95 * T)),
    ]


# --- trajectories ---------------------------------------------------------


@dataclass(eq=False)
class TrajectoryHandle:
    """Ordered FLD1 snapshot triples with the run's grid and model context.

    Snapshot fields are loaded lazily and cached; identities assume the
    first snapshot carries the initial datum.
    """

    grid: gridmod.Grid
    times: list[float]
    paths: list[tuple[Path, Path, Path]]
    params: object = None       # solver.ModelParams
    mms: object = None          # solver.MmsSpec or None

    def __post_init__(self):
        if len(self.times) != len(self.paths):
            raise StructuralError("times and snapshot paths disagree")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise StructuralError("snapshot times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def t_end(self) -> float:
        return self.times[-1]

    @lru_cache(maxsize=4096)
    def load(self, i: int):
        triple = []
        for p in self.paths[i]:
            phi, g, t = gridmod.read_field(p)
            if g != self.grid:
                raise StructuralError(f"{p}: grid mismatch")
            triple.append(phi)
        return tuple(triple)

    def sources_at(self, t: float):
        if self.mms is None:
            return None
        return self.mms.sources(self.params, self.grid, t)


_SNAP_RE = re.compile(r"^u_(\d+)\.fld$")


def load_trajectory(run_dir) -> TrajectoryHandle:
    """Build a handle from a run directory (snapshots + manifest)."""
    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.txt"
    if not manifest.exists():
        raise StructuralError(f"{run_dir}: no manifest.txt")
    cfg = parse_config(manifest.read_text(), label=run_dir.name)
    g = cfg.build_grid()
    from taxis_cascade import solver  # local import to keep layering flat

    params = solver.ModelParams(mu=cfg.mu, epsilon=cfg.epsilon,
                                resupply=cfg.build_resupply(),
                                kinetics=cfg.build_kinetics())
    entries = []
    for p in sorted(run_dir.glob("u_*.fld")):
        m = _SNAP_RE.match(p.name)
        if not m:
            continue
        idx = m.group(1)
        vp = run_dir / f"v_{idx}.fld"
        wp = run_dir / f"w_{idx}.fld"
        if not (vp.exists() and wp.exists()):
            raise StructuralError(f"{run_dir}: incomplete snapshot triple {idx}")
        _, _, t = gridmod.read_field(p)
        entries.append((t, (p, vp, wp)))
    if not entries:
        raise StructuralError(f"{run_dir}: no snapshots found")
    entries.sort(key=lambda e: e[0])
    return TrajectoryHandle(grid=g, times=[e[0] for e in entries],
                            paths=[e[1] for e in entries], params=params,
                            mms=cfg.build_mms())


# --- quadrature helpers ----------------------------------------------------


def _time_weights(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * np.diff(times)
    w[1:] += 0.5 * np.diff(times)
    return w


class _FaceGeometry:
    """Cached face-midpoint coordinates and test-function samples."""

    def __init__(self, g: gridmod.Grid):
        self.g = g
        X, Y = g.cell_centers()
        self.X, self.Y = X, Y
        # x-face midpoints between horizontally adjacent centers
        self.fx_x = 0.5 * (X[:, 1:] + X[:, :-1])
        self.fx_y = 0.5 * (Y[:, 1:] + Y[:, :-1])
        # y-face midpoints
        self.fy_x = 0.5 * (X[1:, :] + X[:-1, :])
        self.fy_y = 0.5 * (Y[1:, :] + Y[:-1, :])


def _check_support(fn: TestFunction, traj: TrajectoryHandle):
    """Disjoint temporal support is fine (all integrals vanish); support that
    overlaps the recorded range but sticks out of it is a structural error."""
    t0, t1 = traj.times[0], traj.times[-1]
    tm = fn.temporal
    if isinstance(tm, TemporalBump):
        lo, hi = tm.t0, tm.t1
    else:
        lo, hi = 0.0, tm.b
    if hi <= t0 + 1e-12 or lo >= t1 - 1e-12:
        return
    if lo < t0 - 1e-9 or hi > t1 + 1e-9:
        raise StructuralError(
            f"test function {fn.name} supported on [{lo:.3g}, {hi:.3g}] exceeds "
            f"trajectory range [{t0:.3g}, {t1:.3g}]")


def _face_diff(phi, g):
    return (phi[:, 1:] - phi[:, :-1]) / g.hx, (phi[1:, :] - phi[:-1, :]) / g.hy


def _face_mean(phi):
    return 0.5 * (phi[:, 1:] + phi[:, :-1]), 0.5 * (phi[1:, :] + phi[:-1, :])


class _SpatialSamples:
    """Time-independent spatial samples of one test function on one grid."""

    def __init__(self, fn: TestFunction, geo: _FaceGeometry):
        self.cells = fn.spatial.value(geo.X, geo.Y)
        self.gx_on_xfaces = fn.spatial.grad(geo.fx_x, geo.fx_y)[0]
        self.gy_on_yfaces = fn.spatial.grad(geo.fy_x, geo.fy_y)[1]
        self.on_xfaces = fn.spatial.value(geo.fx_x, geo.fx_y)
        self.on_yfaces = fn.spatial.value(geo.fy_x, geo.fy_y)


def residual_u(traj: TrajectoryHandle, fn: TestFunction) -> float:
    """Signed space-time residual of the forager identity against phi."""
    _check_support(fn, traj)
    g = traj.grid
    geo = _FaceGeometry(g)
    sp = _SpatialSamples(fn, geo)
    vol = g.cell_volume
    ks = traj.params.kinetics
    weights = _time_weights(traj.times)
    total = 0.0
    for i, t in enumerate(traj.times):
        tf = float(fn.temporal.value(t))
        tdf = float(fn.temporal.dvalue(t))
        if tf == 0.0 and tdf == 0.0:
            continue
        u, _, w = traj.load(i)
        ux, uy = _face_diff(u, g)
        wx, wy = _face_diff(w, g)
        ufx, ufy = _face_mean(u)
        fu = ks.law_f(u)
        src = traj.sources_at(t)
        if src is not None:
            fu = fu + src[0]
        inst = (
            -np.sum(u * sp.cells) * tdf
            + (np.sum(ux * sp.gx_on_xfaces) + np.sum(uy * sp.gy_on_yfaces)) * tf
            - (np.sum(ufx * wx * sp.gx_on_xfaces)
               + np.sum(ufy * wy * sp.gy_on_yfaces)) * tf
            - np.sum(fu * sp.cells) * tf
        )
        total += weights[i] * inst * vol
    u0, _, _ = traj.load(0)
    total -= np.sum(u0 * sp.cells) * float(fn.temporal.value(traj.times[0])) * vol
    return float(total)


def residual_w(traj: TrajectoryHandle, fn: TestFunction) -> float:
    """Signed residual of the nutrient identity.

    The consumption enters unregularized as (u+v) w regardless of the
    epsilon the trajectory was produced with; for regularized runs the
    residual therefore reports the regularization defect.
    """
    _check_support(fn, traj)
    g = traj.grid
    geo = _FaceGeometry(g)
    sp = _SpatialSamples(fn, geo)
    vol = g.cell_volume
    params = traj.params
    weights = _time_weights(traj.times)
    total = 0.0
    for i, t in enumerate(traj.times):
        tf = float(fn.temporal.value(t))
        tdf = float(fn.temporal.dvalue(t))
        if tf == 0.0 and tdf == 0.0:
            continue
        u, v, w = traj.load(i)
        wx, wy = _face_diff(w, g)
        r_cells = params.resupply.field(g, t)
        src = traj.sources_at(t)
        if src is not None:
            r_cells = r_cells + src[2]
        inst = (
            -np.sum(w * sp.cells) * tdf
            + (np.sum(wx * sp.gx_on_xfaces) + np.sum(wy * sp.gy_on_yfaces)) * tf
            + np.sum((u + v) * w * sp.cells) * tf
            + params.mu * np.sum(w * sp.cells) * tf
            - np.sum(r_cells * sp.cells) * tf
        )
        total += weights[i] * inst * vol
    _, _, w0 = traj.load(0)
    total -= np.sum(w0 * sp.cells) * float(fn.temporal.value(traj.times[0])) * vol
    return float(total)


def defect_v(traj: TrajectoryHandle, fn: TestFunction) -> float:
    """LHS minus RHS of the logarithmic exploiter inequality (>= 0 expected)."""
    _check_support(fn, traj)
    g = traj.grid
    geo = _FaceGeometry(g)
    sp = _SpatialSamples(fn, geo)
    vol = g.cell_volume
    ks = traj.params.kinetics
    weights = _time_weights(traj.times)
    if np.any(sp.cells < 0):
        raise DomainError("the exploiter inequality needs a nonnegative test function")
    lhs = 0.0
    rhs = 0.0
    for i, t in enumerate(traj.times):
        tf = float(fn.temporal.value(t))
        tdf = float(fn.temporal.dvalue(t))
        if tf == 0.0 and tdf == 0.0:
            continue
        u, v, _ = traj.load(i)
        ell = np.log1p(v)
        lx, ly = _face_diff(ell, g)
        ux, uy = _face_diff(u, g)
        rfx, rfy = _face_mean(v / (v + 1.0))
        gv = ks.law_g(v)
        src = traj.sources_at(t)
        if src is not None:
            gv = gv + src[1]
        lhs += weights[i] * (-np.sum(ell * sp.cells) * tdf) * vol
        rhs += weights[i] * vol * (
            (np.sum(lx**2 * sp.on_xfaces) + np.sum(ly**2 * sp.on_yfaces)) * tf
            - (np.sum(lx * sp.gx_on_xfaces) + np.sum(ly * sp.gy_on_yfaces)) * tf
            - (np.sum(rfx * lx * ux * sp.on_xfaces)
               + np.sum(rfy * ly * uy * sp.on_yfaces)) * tf
            + (np.sum(rfx * ux * sp.gx_on_xfaces)
               + np.sum(rfy * uy * sp.gy_on_yfaces)) * tf
            + np.sum(gv / (v + 1.0) * sp.cells) * tf
        )
    _, v0, _ = traj.load(0)
    lhs -= np.sum(np.log1p(v0) * sp.cells) * float(fn.temporal.value(traj.times[0])) * vol
    return float(lhs - rhs)


def defect_budget(traj: TrajectoryHandle, fn: TestFunction) -> float:
    """Heuristic discretization budget for defect_v on this trajectory.

    Scales with the mesh width plus mean snapshot spacing times the natural
    size of the inequality's right-hand integrals; shrinks at first order
    under simultaneous refinement.
    """
    g = traj.grid
    vol = g.cell_volume
    weights = _time_weights(traj.times)
    scale = 0.0
    for i, t in enumerate(traj.times):
        tf = float(fn.temporal.value(t))
        if tf == 0.0:
            continue
        u, v, _ = traj.load(i)
        ell = np.log1p(v)
        lx, ly = _face_diff(ell, g)
        ux, uy = _face_diff(u, g)
        gv = np.abs(traj.params.kinetics.law_g(v) / (v + 1.0))
        inst = (np.sum(lx**2) + np.sum(ly**2) + np.sum(ux**2) + np.sum(uy**2)
                + np.sum(gv)) * vol
        scale += weights[i] * inst * tf
    dts = np.diff(traj.times)
    h_scale = max(g.hx, g.hy) + (float(np.mean(dts)) if dts.size else 0.0)
    return float(0.5 * h_scale * (1.0 + scale))


def identity_budget(traj: TrajectoryHandle, fn: TestFunction) -> float:
    """Discretization budget for the u/w identity residuals.

    Same shape as defect_budget: (h + mean snapshot spacing) times the
    natural magnitude of the identities' integrals.
    """
    g = traj.grid
    vol = g.cell_volume
    params = traj.params
    ks = params.kinetics
    weights = _time_weights(traj.times)
    scale = 0.0
    for i, t in enumerate(traj.times):
        tf = float(fn.temporal.value(t))
        if tf == 0.0:
            continue
        u, v, w = traj.load(i)
        ux, uy = _face_diff(u, g)
        wx, wy = _face_diff(w, g)
        inst = (np.sum(ux**2) + np.sum(uy**2) + np.sum(wx**2) + np.sum(wy**2)
                + np.sum(np.abs(ks.law_f(u))) + np.sum((u + v) * w)
                + np.sum(params.resupply.field(g, t))) * vol
        scale += weights[i] * inst * tf
    dts = np.diff(traj.times)
    h_scale = max(g.hx, g.hy) + (float(np.mean(dts)) if dts.size else 0.0)
    return float(0.5 * h_scale * (1.0 + scale))


def check_mass_inequality(traj: TrajectoryHandle, tol: float = 1e-3):
    """Per-snapshot slack of the exploiter mass inequality (>= -tol passes)."""
    g = traj.grid
    ks = traj.params.kinetics
    masses = []
    int_g = []
    for i, t in enumerate(traj.times):
        _, v, _ = traj.load(i)
        masses.append(gridmod.integrate(v, g))
        gv = ks.law_g(v)
        src = traj.sources_at(t)
        if src is not None:
            gv = gv + src[1]
        int_g.append(gridmod.integrate(gv, g))
    times = np.asarray(traj.times)
    rows = []
    for i, t in enumerate(times):
        rhs = masses[0] + float(np.trapezoid(int_g[: i + 1], times[: i + 1]))
        slack = rhs - masses[i]
        rows.append((float(t), float(slack), slack >= -tol))
    return rows

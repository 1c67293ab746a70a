"""Runtime checks for every explicit bound, identity and decay statement.

Each check produces a MonitorEntry with the measured value, the bound it is
held against, the margin (bound - value) and a pass flag.  Checks whose
constants are non-constructive are report-only: they log the value and never
fail.  Discrete tolerances follow the scheme order: 1e-6 absolute plus a
10*dt relative-scale slack unless a check states otherwise.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from taxis_cascade import grid as gridmod
from taxis_cascade.errors import DomainError

REL_TOL = 1e-6
DT_SLACK = 10.0
CEILING_DUST = 1e-8  # rounding allowance for exact-in-exact-arithmetic ceilings


@dataclass
class MonitorEntry:
    t: float
    check: str
    value: float
    bound: float
    margin: float
    passed: bool
    window: tuple[float, float] | None = None
    note: str = ""

    @classmethod
    def compare(cls, t, check, value, bound, tol=0.0, window=None, note=""):
        margin = bound - value
        return cls(t=t, check=check, value=value, bound=bound, margin=margin,
                   passed=margin >= -tol, window=window, note=note)

    @classmethod
    def report_only(cls, t, check, value, window=None, note="report-only"):
        return cls(t=t, check=check, value=value, bound=math.nan, margin=math.nan,
                   passed=True, window=window, note=note)


class MonitorReport:
    """Accumulated monitor entries for one run."""

    def __init__(self):
        self.entries: list[MonitorEntry] = []

    def extend(self, entries):
        self.entries.extend(entries)

    def append(self, entry):
        self.entries.append(entry)

    def failures(self) -> list[MonitorEntry]:
        return [e for e in self.entries if not e.passed]

    def all_passed(self) -> bool:
        return not self.failures()

    def by_check(self, name: str) -> list[MonitorEntry]:
        return [e for e in self.entries if e.check == name]

    def csv_rows(self):
        yield "t,check_name,value,bound,margin,pass"
        for e in self.entries:
            yield (f"{e.t!r},{e.check},{e.value!r},{e.bound!r},{e.margin!r},"
                   f"{'true' if e.passed else 'false'}")


def mass_ode_star(alpha: float, K: float, L: float, omega_vol: float, y0: float) -> float:
    """Ceiling of y' + (K/|Omega|^(a-1)) y^a <= L |Omega|: max(y0, |Omega| (L/K)^(1/a))."""
    if not (alpha > 1 and K > 0 and L >= 0 and omega_vol > 0 and y0 >= 0):
        raise DomainError("mass_ode_star needs alpha>1, K>0, L>=0, |Omega|>0, y0>=0")
    return max(y0, omega_vol * (L / K) ** (1.0 / alpha))


def comparison_ode_bound(y0: float, a: float, C: float) -> float:
    """Ceiling for y' + a y <= h with unit-window integrals of h at most C."""
    if a <= 0:
        raise DomainError(f"comparison bound needs a > 0, got {a}")
    if C <= 0 or y0 < 0:
        raise DomainError("comparison bound needs C > 0 and y0 >= 0")
    return y0 + C / (1.0 - math.exp(-a))


@dataclass(frozen=True)
class BoundConstants:
    """Explicit a-priori constants computed from the initial data."""

    u_star: float
    v_star: float
    w_star: float  # +inf when mu == 0
    window_alpha_bound: float
    window_beta_bound: float

    @classmethod
    def from_setup(cls, g, kin, resupply, mu, u0, v0, w0) -> "BoundConstants":
        vol = g.volume
        u_star = mass_ode_star(kin.alpha, kin.K_f, kin.L_f, vol, gridmod.integrate(u0, g))
        v_star = mass_ode_star(kin.beta, kin.K_g, kin.L_g, vol, gridmod.integrate(v0, g))
        if mu > 0:
            w_star = gridmod.norm_linf(w0) + resupply.r_star / mu
        else:
            w_star = math.inf
        return cls(
            u_star=u_star,
            v_star=v_star,
            w_star=w_star,
            window_alpha_bound=kin.L_f * vol / kin.K_f + u_star / kin.K_f,
            window_beta_bound=kin.L_g * vol / kin.K_g + v_star / kin.K_g,
        )


def check_mass(t, mass_u, mass_v, consts: BoundConstants, dt: float) -> list[MonitorEntry]:
    """Population masses against their ODE-comparison ceilings."""
    out = []
    for name, value, star in (("mass_u", mass_u, consts.u_star),
                              ("mass_v", mass_v, consts.v_star)):
        tol = star * (REL_TOL + DT_SLACK * dt)
        out.append(MonitorEntry.compare(t, name, value, star, tol=tol))
    return out


def supersolution_step(wbar: float, mu: float, r_prev: float, r_new: float, dt: float) -> float:
    """Advance the spatially-flat supersolution by one step.

    Exact exponential decay of the homogeneous part plus a trapezoidal
    convolution of the resupply sup-norm history.
    """
    decay = math.exp(-mu * dt)
    return wbar * decay + 0.5 * dt * (r_prev * decay + r_new)


def check_w_supersolution(t, linf_w, wbar, consts: BoundConstants, mu, dt) -> list[MonitorEntry]:
    out = [MonitorEntry.compare(t, "w_supersolution", linf_w, wbar,
                                tol=REL_TOL + DT_SLACK * dt)]
    if mu > 0:
        out.append(MonitorEntry.compare(t, "w_ceiling", linf_w, consts.w_star,
                                        tol=CEILING_DUST))
    return out


def _window_trapz(times, values, t_lo, t_hi):
    """Trapezoid of a sampled series over [t_lo, t_hi]; sample times bracket it."""
    i0 = bisect_left(times, t_lo - 1e-12)
    i1 = bisect_left(times, t_hi - 1e-12)
    ts = times[i0:i1 + 1]
    ys = values[i0:i1 + 1]
    if len(ts) < 2:
        return math.nan
    return float(np.trapezoid(ys, ts))


def check_window_integrals(t, times, int_u_alpha, int_v_beta,
                           consts: BoundConstants, dt: float) -> list[MonitorEntry]:
    """Space-time integrals of u^alpha and v^beta over the window [t-1, t]."""
    out = []
    window = (t - 1.0, t)
    for name, series, bound in (("window_u_alpha", int_u_alpha, consts.window_alpha_bound),
                                ("window_v_beta", int_v_beta, consts.window_beta_bound)):
        value = math.nan
        if t >= 1.0 and times[0] <= t - 1.0 + 1e-12:
            value = _window_trapz(times, series, t - 1.0, t)
        if math.isnan(value):
            out.append(MonitorEntry.report_only(t, name, math.nan, window=window,
                                                note="insufficient window"))
            continue
        tol = bound * (REL_TOL + DT_SLACK * dt)
        out.append(MonitorEntry.compare(t, name, value, bound, tol=tol, window=window))
    return out


def v_mass_residual(times, int_g_series, int_abs_g_series, mass_v_series) -> tuple[float, float]:
    """Signed and relative defect of mass_v(t) = mass_v(0) + int_0^t int g(v).

    The relative defect is normalized by max|int g| seen times the elapsed
    time (floored at one unit), the first-order accumulation scale.
    """
    elapsed = times[-1] - times[0]
    lhs = mass_v_series[-1] - mass_v_series[0]
    rhs = float(np.trapezoid(int_g_series, times))
    c_max = float(np.max(int_abs_g_series))
    denom = max(c_max * max(elapsed, 1.0), 1e-300)
    signed = lhs - rhs
    return signed, abs(signed) / denom


def check_v_mass_identity(t, times, int_g_series, int_abs_g_series,
                          mass_v_series, dt_scale: float) -> MonitorEntry:
    """Pass when |defect| stays under the C*dt*t accumulation envelope."""
    signed, rel = v_mass_residual(times, int_g_series, int_abs_g_series, mass_v_series)
    c_max = float(np.max(int_abs_g_series))
    elapsed = max(times[-1] - times[0], 1.0)
    bound = c_max * dt_scale * elapsed
    entry = MonitorEntry.compare(t, "v_mass_identity", abs(signed), bound)
    entry.note = f"relative={rel!r}"
    return entry


def log_gradient_integrand(v: np.ndarray, g) -> float:
    """Face-quadrature of |grad v|^2 / (v+1)^2 over the domain at one instant."""
    gx = (v[:, 1:] - v[:, :-1]) / g.hx
    gy = (v[1:, :] - v[:-1, :]) / g.hy
    mx = 1.0 + 0.5 * (v[:, 1:] + v[:, :-1])
    my = 1.0 + 0.5 * (v[1:, :] + v[:-1, :])
    total = np.sum((gx / mx) ** 2) + np.sum((gy / my) ** 2)
    return float(total) * g.cell_volume


def check_log_gradient_energy(t, times, cumulative_series) -> MonitorEntry:
    """Report-only: cumulative log-gradient energy with a linear-growth fit."""
    value = cumulative_series[-1]
    entry = MonitorEntry.report_only(t, "log_gradient_energy", value)
    if len(times) >= 3 and times[-1] > times[0]:
        a, b = _linear_fit(times, cumulative_series)
        entry.note = f"report-only fit a={a:.6g} b={b:.6g}"
    return entry


def _linear_fit(ts, ys):
    coeffs = np.polyfit(np.asarray(ts, dtype=float), np.asarray(ys, dtype=float), 1)
    return float(coeffs[1]), float(coeffs[0])  # intercept, slope


def least_squares_slope(ts, ys) -> float:
    if len(ts) < 2:
        return 0.0
    return _linear_fit(ts, ys)[1]


@dataclass(frozen=True)
class DecayDetection:
    detected: bool
    t_detect: float  # nan when not detected
    tail_w_integral: float
    tail_consumption: float
    note: str = ""


def detect_w_decay(times, linf_w, int_w_series, int_consumption_series,
                   delta: float, gate_ok: bool = True) -> DecayDetection:
    """Earliest recorded time after which ||w||_inf stays below delta.

    Also reports the space-time tails of w and of the consumption term past
    that time.  Without the eventual-regularity gate the result is marked
    "hypotheses unmet" but still computed.
    """
    times = np.asarray(times, dtype=float)
    linf_w = np.asarray(linf_w, dtype=float)
    note = "" if gate_ok else "hypotheses unmet"
    above = np.nonzero(linf_w >= delta)[0]
    if above.size == 0:
        idx = 0
    elif above[-1] == len(times) - 1:
        return DecayDetection(False, math.nan, math.nan, math.nan, note=note or "no decay")
    else:
        idx = int(above[-1]) + 1
    t_detect = float(times[idx])
    tail_w = float(np.trapezoid(np.asarray(int_w_series)[idx:], times[idx:]))
    tail_c = float(np.trapezoid(np.asarray(int_consumption_series)[idx:], times[idx:]))
    return DecayDetection(True, t_detect, tail_w, tail_c, note=note)


@dataclass(frozen=True)
class FunctionalParams:
    """Exponents (q, theta, delta) of the weighted tail functional.

    Construction enforces the three smallness constraints that make the
    functional's differential inequality absorb its gradient terms:
    4(q + 2q(q-1) + q(q-1)^2) theta < 2(q-1), delta < min(1, theta, 1/(4q)),
    and the quotient inequality below strictly under q(q-1).
    """

    q: float
    theta: float
    delta: float

    def __post_init__(self):
        if not self.q > 1:
            raise DomainError(f"q must exceed 1, got {self.q}")
        m = self.margins()
        bad = [k for k, v in m.items() if v <= 0]
        if bad:
            raise DomainError(f"functional parameters violate: {', '.join(bad)}")

    def margins(self) -> dict:
        q, th, de = self.q, self.theta, self.delta
        theta_ceiling = 2.0 * (q - 1.0) - 4.0 * (q + 2.0 * q * (q - 1.0) + q * (q - 1.0) ** 2) * th
        delta_ceiling = min(1.0, th, 1.0 / (4.0 * q)) - de
        denom = 4.0 * (th * (th + 1.0) - 2.0 * q * th * de)
        if denom <= 0:
            quotient = math.inf
        else:
            quotient = (2.0 * q * th + 2.0 * q * (q - 1.0) * de) ** 2 / denom
        return {
            "theta_smallness": theta_ceiling,
            "delta_smallness": delta_ceiling,
            "quotient_inequality": q * (q - 1.0) - quotient,
            "delta_below_half_inverse_q": 1.0 / (2.0 * q) - de,
        }


def pick_theta_delta(q: float) -> FunctionalParams:
    """Half-the-ceiling choice: theta = (q-1)/(4 q^3), delta = min(1, theta, 1/(4q))/2."""
    if q <= 1:
        raise DomainError(f"q must exceed 1, got {q}")
    theta = 2.0 * (q - 1.0) / (8.0 * (q + 2.0 * q * (q - 1.0) + q * (q - 1.0) ** 2))
    delta = 0.5 * min(1.0, theta, 1.0 / (4.0 * q))
    return FunctionalParams(q=q, theta=theta, delta=delta)


def weighted_functional(u: np.ndarray, w: np.ndarray, fp: FunctionalParams, g) -> float | None:
    """Integral of u^q / (2 delta - w)^theta; None before w has decayed below delta."""
    if gridmod.norm_linf(w) >= fp.delta:
        return None
    return float(np.sum(u**fp.q / (2.0 * fp.delta - w) ** fp.theta)) * g.cell_volume


@dataclass(frozen=True)
class RegularityReport:
    regularized: bool
    t_start: float
    slopes: dict
    sup_values: dict
    note: str = ""


def eventual_regularity_report(cadence_times, series: dict, t_detect: float,
                               tol_slope: float = 1e-3) -> RegularityReport:
    """Least-squares growth slopes of the tail norms past t_detect + 1.

    The verdict is "regularized" when every tracked series grows at most
    tol_slope per unit time over the tail.  Series with missing entries
    (e.g. the weighted functional before arming) contribute their armed part.
    """
    t_start = t_detect + 1.0
    ts = np.asarray(cadence_times, dtype=float)
    keep = ts >= t_start
    if np.count_nonzero(keep) < 3:
        return RegularityReport(False, t_start, {}, {}, note="tail too short")
    slopes = {}
    sups = {}
    for name, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        mask = keep & np.isfinite(ys)
        if np.count_nonzero(mask) < 3:
            slopes[name] = math.nan
            sups[name] = math.nan
            continue
        slopes[name] = least_squares_slope(ts[mask], ys[mask])
        sups[name] = float(np.max(ys[mask]))
    finite = [s for s in slopes.values() if not math.isnan(s)]
    ok = bool(finite) and all(s <= tol_slope for s in finite)
    return RegularityReport(ok, t_start, slopes, sups)

"""Growth laws with degradation envelopes, nutrient resupply, parameter gates.

Both population growth laws must be sandwiched between power-law envelopes

    -k s^a - l  <=  law(s)  <=  -K s^a + L        (s >= 0)

with a > 1, K, k > 0 and L, l >= 0, and must be nonnegative at s = 0.  The
global-existence gate requires a > 1 + sqrt(2) for the forager exponent and
min(alpha, beta) > (alpha + 1)/(alpha - 1); the eventual-regularity gate
additionally needs beta > 1 + sqrt(2), positive nutrient decay and a
time-integrable resupply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from taxis_cascade import grid as gridmod
from taxis_cascade.errors import DomainError, StructuralError

ALPHA_CRITICAL = 1.0 + math.sqrt(2.0)
KNIFE_EDGE = 1e-9


def _require_nonneg(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise DomainError("growth laws are only defined for s >= 0")
    return arr


@dataclass(frozen=True)
class EnvelopeConstants:
    """Constants (k, l, K, L, exponent) of one degradation envelope."""

    k: float
    l: float
    K: float
    L: float
    exponent: float

    def __post_init__(self):
        if not (self.exponent > 1):
            raise DomainError(f"envelope exponent must exceed 1, got {self.exponent}")
        if not (self.K > 0 and self.k > 0):
            raise DomainError("leading envelope constants K, k must be positive")
        if self.L < 0 or self.l < 0:
            raise DomainError("offset envelope constants L, l must be nonnegative")


class GrowthLaw:
    """Base class; subclasses evaluate law(s) and ship default envelopes."""

    name = "growth"

    def __call__(self, s):
        raise NotImplementedError

    def default_envelope(self) -> EnvelopeConstants:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class PurePower(GrowthLaw):
    """law(s) = L - K s^alpha; the upper envelope is the law itself."""

    K: float = 1.0
    L: float = 1.0
    alpha: float = 3.0
    name = "purepower"

    def __call__(self, s):
        s = _require_nonneg(s)
        return self.L - self.K * s**self.alpha

    def default_envelope(self) -> EnvelopeConstants:
        return EnvelopeConstants(k=self.K, l=0.0, K=self.K, L=self.L, exponent=self.alpha)

    def describe(self) -> str:
        return f"purepower({self.K!r}, {self.L!r}, {self.alpha!r})"


@dataclass(frozen=True)
class Allee(GrowthLaw):
    """Bistable law s(1-s)(s-2): extinction below 1, saturation at 2.

    Default envelope constants (k=2, l=3, K=1/2, L=9, exponent 3) were picked
    by scanning the polynomial differences: min of 0.5 s^3 - 3 s^2 + 2 s is
    about -8.354, so the upper offset must be at least 8.36.
    """

    name = "allee"

    def __call__(self, s):
        s = _require_nonneg(s)
        return s * (1.0 - s) * (s - 2.0)

    def default_envelope(self) -> EnvelopeConstants:
        return EnvelopeConstants(k=2.0, l=3.0, K=0.5, L=9.0, exponent=3.0)

    def describe(self) -> str:
        return "allee"


@dataclass(frozen=True)
class Logistic(GrowthLaw):
    """Generalized logistic law a s - b s^alpha."""

    a: float = 1.0
    b: float = 1.0
    alpha: float = 2.0
    name = "logistic"

    def __post_init__(self):
        if self.a < 0 or self.b <= 0 or self.alpha <= 1:
            raise DomainError("logistic law needs a >= 0, b > 0, alpha > 1")

    def __call__(self, s):
        s = _require_nonneg(s)
        return self.a * s - self.b * s**self.alpha

    def default_envelope(self) -> EnvelopeConstants:
        # upper: a s - (b/2) s^alpha peaks at s* = (2a/(b alpha))^(1/(alpha-1))
        s_star = (2.0 * self.a / (self.b * self.alpha)) ** (1.0 / (self.alpha - 1.0))
        L = self.a * s_star * (self.alpha - 1.0) / self.alpha
        return EnvelopeConstants(k=self.b, l=0.0, K=self.b / 2.0, L=L, exponent=self.alpha)

    def describe(self) -> str:
        return f"logistic({self.a!r}, {self.b!r}, {self.alpha!r})"


@dataclass(frozen=True)
class KineticSpec:
    """The pair of growth laws together with their declared envelopes."""

    law_f: GrowthLaw
    law_g: GrowthLaw
    alpha: float
    beta: float
    k_f: float
    K_f: float
    l_f: float
    L_f: float
    k_g: float
    K_g: float
    l_g: float
    L_g: float

    def __post_init__(self):
        for nm, val in (("alpha", self.alpha), ("beta", self.beta)):
            if not (val > 1):
                raise DomainError(f"{nm} must exceed 1, got {val}")
        for nm, val in (("K_f", self.K_f), ("k_f", self.k_f), ("K_g", self.K_g), ("k_g", self.k_g)):
            if not (val > 0):
                raise DomainError(f"{nm} must be positive, got {val}")
        for nm, val in (("L_f", self.L_f), ("l_f", self.l_f), ("L_g", self.L_g), ("l_g", self.l_g)):
            if val < 0:
                raise DomainError(f"{nm} must be nonnegative, got {val}")
        if float(self.law_f(0.0)) < 0:
            raise DomainError("law_f(0) must be nonnegative")
        if float(self.law_g(0.0)) < 0:
            raise DomainError("law_g(0) must be nonnegative")

    @property
    def rho(self) -> float:
        return min(self.alpha, self.beta)

    @classmethod
    def from_laws(cls, law_f: GrowthLaw, law_g: GrowthLaw, **overrides) -> "KineticSpec":
        """Build a spec from the laws' default envelopes, with optional overrides."""
        ef = law_f.default_envelope()
        eg = law_g.default_envelope()
        kw = dict(
            law_f=law_f,
            law_g=law_g,
            alpha=ef.exponent,
            beta=eg.exponent,
            k_f=ef.k,
            K_f=ef.K,
            l_f=ef.l,
            L_f=ef.L,
            k_g=eg.k,
            K_g=eg.K,
            l_g=eg.l,
            L_g=eg.L,
        )
        kw.update(overrides)
        return cls(**kw)


def eval_f(spec: KineticSpec, s):
    return spec.law_f(s)


def eval_g(spec: KineticSpec, s):
    return spec.law_g(s)


@dataclass(frozen=True)
class EnvelopeReport:
    holds: bool
    worst_margin: float
    worst_point: float
    worst_check: str


def _envelope_margins(law, k, l, K, L, exponent, sample):
    """Normalized slack of both envelope inequalities at each sample point.

    Margins are divided by (1 + s^exponent) so the 60-point geometric sample
    reports on one scale; the entries at the largest point double as the
    asymptotic-ratio check.
    """
    vals = law(sample)
    scale = 1.0 + sample**exponent
    lower = (vals - (-k * sample**exponent - l)) / scale
    upper = ((-K * sample**exponent + L) - vals) / scale
    return lower, upper


def envelope_sample() -> np.ndarray:
    """Zero plus 59 geometrically spaced points from 1e-3 to 1e6."""
    return np.concatenate(([0.0], np.geomspace(1e-3, 1e6, 59)))


def validate_envelope(spec: KineticSpec, tol: float = 1e-12) -> EnvelopeReport:
    """Check both envelope sandwiches on the geometric sample.

    Failure is a report outcome, never an exception; the worst (most
    negative) normalized slack and where it occurred are returned.
    """
    sample = envelope_sample()
    worst = math.inf
    worst_point = 0.0
    worst_check = ""
    cases = (
        ("f", spec.law_f, spec.k_f, spec.l_f, spec.K_f, spec.L_f, spec.alpha),
        ("g", spec.law_g, spec.k_g, spec.l_g, spec.K_g, spec.L_g, spec.beta),
    )
    for name, law, k, l, K, L, exponent in cases:
        lower, upper = _envelope_margins(law, k, l, K, L, exponent, sample)
        for side, margins in (("lower", lower), ("upper", upper)):
            i = int(np.argmin(margins))
            if margins[i] < worst:
                worst = float(margins[i])
                worst_point = float(sample[i])
                worst_check = f"{name}:{side}"
    return EnvelopeReport(holds=worst >= -tol, worst_margin=worst,
                          worst_point=worst_point, worst_check=worst_check)


@dataclass(frozen=True)
class GateResult:
    passed: bool
    checks: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    knife_edge: bool = False

    def failed_checks(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]


def global_existence_gate(spec: KineticSpec) -> GateResult:
    """Global-existence hypotheses on the exponents (open, zero-tolerance)."""
    alpha_margin = spec.alpha - ALPHA_CRITICAL
    min_margin = min(spec.alpha, spec.beta) - (spec.alpha + 1.0) / (spec.alpha - 1.0)
    checks = {"alpha_supercritical": alpha_margin > 0, "min_condition": min_margin > 0}
    margins = {"alpha_supercritical": alpha_margin, "min_condition": min_margin}
    knife = any(abs(m) < KNIFE_EDGE for m in margins.values())
    return GateResult(passed=all(checks.values()), checks=checks, margins=margins,
                      knife_edge=knife)


def eventual_regularity_gate(spec: KineticSpec, params) -> GateResult:
    """Eventual-regularity hypotheses: the existence gate plus beta, mu > 0, finite r**."""
    g1 = global_existence_gate(spec)
    beta_margin = spec.beta - ALPHA_CRITICAL
    checks = dict(g1.checks)
    margins = dict(g1.margins)
    checks["beta_supercritical"] = beta_margin > 0
    margins["beta_supercritical"] = beta_margin
    checks["mu_positive"] = params.mu > 0
    margins["mu_positive"] = params.mu
    r2 = params.resupply.r_double_star
    checks["resupply_integrable"] = math.isfinite(r2)
    margins["resupply_integrable"] = r2
    knife = g1.knife_edge or abs(beta_margin) < KNIFE_EDGE
    return GateResult(passed=all(checks.values()), checks=checks, margins=margins,
                      knife_edge=knife)


@dataclass(frozen=True)
class ResupplySpec:
    """Nutrient resupply r(x, t) = spatial profile times temporal factor.

    Profiles: a nonnegative constant, or a Gaussian bump.  Temporal factor is
    either constant 1 or exp(-decay_lambda * t).  The derived quantities are
    the all-time sup of the spatial max (r_star) and its time integral
    (r_double_star, +inf for the non-decaying factor when the profile is not
    identically zero).
    """

    profile: str = "constant"  # "constant" | "gaussian"
    amplitude: float = 0.0
    center: tuple[float, float] = (0.5, 0.5)
    width: float = 0.1
    decay_lambda: float = 0.0

    def __post_init__(self):
        if self.profile not in ("constant", "gaussian"):
            raise StructuralError(f"unknown resupply profile {self.profile!r}")
        if self.amplitude < 0:
            raise DomainError("resupply amplitude must be nonnegative")
        if self.profile == "gaussian" and not (self.width > 0):
            raise DomainError("gaussian resupply needs positive width")
        if self.decay_lambda < 0:
            raise DomainError("decay_lambda must be nonnegative")

    @property
    def spatial_max(self) -> float:
        return self.amplitude

    @property
    def r_star(self) -> float:
        return self.spatial_max

    @property
    def r_double_star(self) -> float:
        if self.amplitude == 0.0:
            return 0.0
        if self.decay_lambda > 0:
            return self.spatial_max / self.decay_lambda
        return math.inf

    def factor(self, t: float) -> float:
        if t < 0:
            raise DomainError(f"resupply undefined for t < 0 (got {t})")
        if self.decay_lambda > 0:
            return math.exp(-self.decay_lambda * t)
        return 1.0

    def eval(self, x, y, t: float):
        fac = self.factor(t)
        if self.profile == "constant":
            return self.amplitude * fac * np.ones_like(np.asarray(x, dtype=float))
        cx, cy = self.center
        rr = (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2
        return self.amplitude * fac * np.exp(-rr / (2.0 * self.width**2))

    def field(self, g: gridmod.Grid, t: float) -> np.ndarray:
        X, Y = g.cell_centers()
        return np.asarray(self.eval(X, Y, t), dtype=float)

    def linf(self, t: float) -> float:
        """Analytic sup over the whole domain at time t (dominates cell samples)."""
        return self.spatial_max * self.factor(t)


def eval_r(resupply: ResupplySpec, x, y, t: float):
    return resupply.eval(x, y, t)


@dataclass(frozen=True)
class InitialData:
    u0: np.ndarray
    v0: np.ndarray
    w0: np.ndarray

    def validate(self, g: gridmod.Grid) -> None:
        g.check_conforms(self.u0, self.v0, self.w0)
        for name, f0 in (("u0", self.u0), ("v0", self.v0), ("w0", self.w0)):
            if np.any(f0 < 0):
                raise DomainError(f"{name} must be nonnegative")
            if not np.all(np.isfinite(f0)):
                raise DomainError(f"{name} has non-finite entries")
        if gridmod.integrate(self.u0, g) <= 0:
            raise DomainError("u0 must have positive mass")
        if gridmod.integrate(self.v0, g) <= 0:
            raise DomainError("v0 must have positive mass")

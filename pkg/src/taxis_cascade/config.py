"""INI-style run configuration: parsing, canonical formatting, assembly.

Sections: [grid], [time], [model], [kinetics], [resupply], [initial],
[monitors], [output], and optionally [mms] for manufactured runs.  Values
with arguments use call syntax, e.g. ``gaussian(0.4, 0.4, 0.18, 0.7, 0.3)``.
Key case is preserved (k_f and K_f are distinct constants).
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from taxis_cascade import grid as gridmod
from taxis_cascade import kinetics as kin
from taxis_cascade import solver
from taxis_cascade.errors import StructuralError

_CALL_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def _parse_call(text: str, where: str) -> tuple[str, list[float]]:
    m = _CALL_RE.match(text)
    if not m:
        raise StructuralError(f"{where}: cannot parse {text!r}")
    name = m.group(1).lower()
    args = []
    if m.group(2) is not None and m.group(2).strip():
        for tok in m.group(2).split(","):
            try:
                args.append(float(tok))
            except ValueError as exc:
                raise StructuralError(f"{where}: bad number {tok!r} in {text!r}") from exc
    return name, args


def _format_call(name: str, args) -> str:
    if not args:
        return name
    return f"{name}({', '.join(repr(float(a)) for a in args)})"


ENVELOPE_KEYS = ("k_f", "K_f", "l_f", "L_f", "k_g", "K_g", "l_g", "L_g")


@dataclass
class Config:
    # [grid]
    nx: int = 40
    ny: int = 40
    Lx: float = 1.0
    Ly: float = 1.0
    # [time]
    t_end: float = 1.0
    dt_max: float = 0.02
    safety: float = 0.2
    lin_tol: float = 1e-10
    fixed_dt: float | None = None
    # [model]
    mu: float = 0.0
    epsilon: float = 0.0
    # [kinetics]
    f_law: str = "purepower(1.0, 1.0, 3.0)"
    g_law: str = "purepower(1.0, 1.0, 3.0)"
    alpha: float | None = None
    beta: float | None = None
    k_f: float | None = None
    K_f: float | None = None
    l_f: float | None = None
    L_f: float | None = None
    k_g: float | None = None
    K_g: float | None = None
    l_g: float | None = None
    L_g: float | None = None
    # [resupply]
    profile: str = "constant"
    amplitude: float = 0.0
    center: tuple[float, float] = (0.5, 0.5)
    width: float = 0.1
    decay_lambda: float = 0.0
    # [initial]
    init_u: str = "constant(1.0)"
    init_v: str = "constant(1.0)"
    init_w: str = "constant(0.0)"
    seed: int | None = None
    # [monitors]
    cadence: float = 0.25
    delta: float = 1e-2
    q: float = 2.0
    # [output]
    out_dir: str | None = None
    snapshot_every: float = 0.0
    # [mms]
    mms_u: str | None = None
    mms_v: str | None = None
    mms_w: str | None = None
    label: str = "run"

    # -- assembly ----------------------------------------------------------

    def build_law(self, text: str, where: str) -> kin.GrowthLaw:
        name, args = _parse_call(text, where)
        if name == "purepower":
            if len(args) != 3:
                raise StructuralError(f"{where}: purepower needs (K, L, alpha)")
            return kin.PurePower(K=args[0], L=args[1], alpha=args[2])
        if name == "allee":
            if args:
                raise StructuralError(f"{where}: allee takes no arguments")
            return kin.Allee()
        if name == "logistic":
            if len(args) != 3:
                raise StructuralError(f"{where}: logistic needs (a, b, alpha)")
            return kin.Logistic(a=args[0], b=args[1], alpha=args[2])
        raise StructuralError(f"{where}: unknown growth law {name!r}")

    def build_kinetics(self) -> kin.KineticSpec:
        law_f = self.build_law(self.f_law, "kinetics.f_law")
        law_g = self.build_law(self.g_law, "kinetics.g_law")
        overrides = {}
        if self.alpha is not None:
            overrides["alpha"] = self.alpha
        if self.beta is not None:
            overrides["beta"] = self.beta
        for key in ENVELOPE_KEYS:
            val = getattr(self, key)
            if val is not None:
                overrides[key] = val
        return kin.KineticSpec.from_laws(law_f, law_g, **overrides)

    def build_resupply(self) -> kin.ResupplySpec:
        return kin.ResupplySpec(profile=self.profile, amplitude=self.amplitude,
                                center=self.center, width=self.width,
                                decay_lambda=self.decay_lambda)

    def build_grid(self) -> gridmod.Grid:
        return gridmod.Grid(self.nx, self.ny, self.Lx, self.Ly)

    def _build_field(self, recipe: str, g: gridmod.Grid, rng, where: str) -> np.ndarray:
        name, args = _parse_call(recipe, where)
        X, Y = g.cell_centers()
        if name == "constant":
            if len(args) != 1:
                raise StructuralError(f"{where}: constant needs (value)")
            return np.full(g.shape, args[0])
        if name == "gaussian":
            if len(args) != 5:
                raise StructuralError(
                    f"{where}: gaussian needs (cx, cy, width, amplitude, floor)")
            cx, cy, width, amp, floor = args
            rr = (X - cx) ** 2 + (Y - cy) ** 2
            return floor + amp * np.exp(-rr / (2.0 * width**2))
        if name == "random":
            if len(args) != 2:
                raise StructuralError(f"{where}: random needs (lo, hi)")
            if rng is None:
                raise StructuralError(f"{where}: random recipe requires [initial] seed")
            lo, hi = args
            return lo + (hi - lo) * rng.random(g.shape)
        if name == "mms":
            raise StructuralError(f"{where}: 'mms' recipe needs an [mms] section")
        raise StructuralError(f"{where}: unknown recipe {name!r}")

    def build_initial(self, g: gridmod.Grid) -> kin.InitialData:
        mms = self.build_mms()
        if mms is not None:
            u0, v0, w0 = mms.fields(g, 0.0)
            data = kin.InitialData(u0=u0, v0=v0, w0=w0)
            data.validate(g)
            return data
        rng = np.random.default_rng(self.seed) if self.seed is not None else None
        data = kin.InitialData(
            u0=self._build_field(self.init_u, g, rng, "initial.u"),
            v0=self._build_field(self.init_v, g, rng, "initial.v"),
            w0=self._build_field(self.init_w, g, rng, "initial.w"),
        )
        data.validate(g)
        return data

    def build_mms(self) -> solver.MmsSpec | None:
        specs = (self.mms_u, self.mms_v, self.mms_w)
        if all(s is None for s in specs):
            return None
        if any(s is None for s in specs):
            raise StructuralError("[mms] needs all of u, v, w")
        comps = []
        for name, text in zip("uvw", specs):
            toks = text.split()
            if len(toks) != 5:
                raise StructuralError(
                    f"mms.{name}: need 5 numbers (base cos_amp cos_rate flat_amp flat_rate)")
            comps.append(solver.MmsComponent(*(float(t) for t in toks)))
        return solver.MmsSpec(u=comps[0], v=comps[1], w=comps[2])

    def build_setup(self, out_dir=None) -> solver.RunSetup:
        g = self.build_grid()
        ks = self.build_kinetics()
        params = solver.ModelParams(mu=self.mu, epsilon=self.epsilon,
                                    resupply=self.build_resupply(), kinetics=ks)
        control = solver.StepControl(dt_max=self.dt_max, safety=self.safety,
                                     lin_tol=self.lin_tol)
        if out_dir is None and self.out_dir is not None:
            out_dir = Path(self.out_dir)
        return solver.RunSetup(
            grid=g, params=params, initial=self.build_initial(g), control=control,
            t_end=self.t_end, monitor_cadence=self.cadence,
            monitor_delta=self.delta, monitor_q=self.q,
            snapshot_every=self.snapshot_every, out_dir=out_dir,
            config_text=format_config(self), label=self.label,
            mms=self.build_mms(), fixed_dt=self.fixed_dt)

    def resolved(self) -> "Config":
        """Fill alpha/beta and envelope constants from the laws' defaults."""
        ks = self.build_kinetics()
        return replace(self, alpha=ks.alpha, beta=ks.beta, k_f=ks.k_f, K_f=ks.K_f,
                       l_f=ks.l_f, L_f=ks.L_f, k_g=ks.k_g, K_g=ks.K_g,
                       l_g=ks.l_g, L_g=ks.L_g)


def format_config(cfg: Config) -> str:
    """Canonical INI text; parsing it back reproduces cfg.resolved()."""
    r = cfg.resolved()
    out = io.StringIO()

    def sec(name, pairs):
        out.write(f"[{name}]\n")
        for k, v in pairs:
            if v is None:
                continue
            out.write(f"{k} = {v}\n")
        out.write("\n")

    sec("grid", [("nx", r.nx), ("ny", r.ny), ("Lx", repr(r.Lx)), ("Ly", repr(r.Ly))])
    time_pairs = [("t_end", repr(r.t_end)), ("dt_max", repr(r.dt_max)),
                  ("safety", repr(r.safety)), ("lin_tol", repr(r.lin_tol))]
    if r.fixed_dt is not None:
        time_pairs.append(("fixed_dt", repr(r.fixed_dt)))
    sec("time", time_pairs)
    sec("model", [("mu", repr(r.mu)), ("epsilon", repr(r.epsilon))])
    sec("kinetics", [("f_law", r.f_law), ("g_law", r.g_law),
                     ("alpha", repr(r.alpha)), ("beta", repr(r.beta))]
        + [(k, repr(getattr(r, k))) for k in ENVELOPE_KEYS])
    resupply_pairs = [("profile", r.profile), ("amplitude", repr(r.amplitude)),
                      ("decay_lambda", repr(r.decay_lambda))]
    if r.profile == "gaussian":
        resupply_pairs[1:1] = [("center", f"{r.center[0]!r} {r.center[1]!r}"),
                               ("width", repr(r.width))]
    sec("resupply", resupply_pairs)
    init_pairs = [("u", r.init_u), ("v", r.init_v), ("w", r.init_w)]
    if r.seed is not None:
        init_pairs.append(("seed", r.seed))
    sec("initial", init_pairs)
    sec("monitors", [("cadence", repr(r.cadence)), ("delta", repr(r.delta)),
                     ("q", repr(r.q))])
    out_pairs = [("snapshot_every", repr(r.snapshot_every))]
    if r.out_dir is not None:
        out_pairs.insert(0, ("dir", r.out_dir))
    sec("output", out_pairs)
    if r.mms_u is not None:
        sec("mms", [("u", r.mms_u), ("v", r.mms_v), ("w", r.mms_w)])
    return out.getvalue()


def _get(parser, section, key, conv, default, errors):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        errors.append(f"[{section}] {key} = {raw!r}")
        return default


def _pair(raw: str) -> tuple[float, float]:
    toks = raw.replace(",", " ").split()
    if len(toks) != 2:
        raise ValueError(raw)
    return (float(toks[0]), float(toks[1]))


def parse_config(text: str, label: str = "run") -> Config:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep k_f / K_f distinct
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise StructuralError(f"config parse error: {exc}") from exc
    errors: list[str] = []
    cfg = Config(label=label)
    cfg.nx = _get(parser, "grid", "nx", int, cfg.nx, errors)
    cfg.ny = _get(parser, "grid", "ny", int, cfg.ny, errors)
    cfg.Lx = _get(parser, "grid", "Lx", float, cfg.Lx, errors)
    cfg.Ly = _get(parser, "grid", "Ly", float, cfg.Ly, errors)
    cfg.t_end = _get(parser, "time", "t_end", float, cfg.t_end, errors)
    cfg.dt_max = _get(parser, "time", "dt_max", float, cfg.dt_max, errors)
    cfg.safety = _get(parser, "time", "safety", float, cfg.safety, errors)
    cfg.lin_tol = _get(parser, "time", "lin_tol", float, cfg.lin_tol, errors)
    cfg.fixed_dt = _get(parser, "time", "fixed_dt", float, None, errors)
    cfg.mu = _get(parser, "model", "mu", float, cfg.mu, errors)
    cfg.epsilon = _get(parser, "model", "epsilon", float, cfg.epsilon, errors)
    cfg.f_law = _get(parser, "kinetics", "f_law", str, cfg.f_law, errors)
    cfg.g_law = _get(parser, "kinetics", "g_law", str, cfg.g_law, errors)
    cfg.alpha = _get(parser, "kinetics", "alpha", float, None, errors)
    cfg.beta = _get(parser, "kinetics", "beta", float, None, errors)
    for key in ENVELOPE_KEYS:
        setattr(cfg, key, _get(parser, "kinetics", key, float, None, errors))
    cfg.profile = _get(parser, "resupply", "profile", str, cfg.profile, errors)
    cfg.amplitude = _get(parser, "resupply", "amplitude", float, cfg.amplitude, errors)
    cfg.center = _get(parser, "resupply", "center", _pair, cfg.center, errors)
    cfg.width = _get(parser, "resupply", "width", float, cfg.width, errors)
    cfg.decay_lambda = _get(parser, "resupply", "decay_lambda", float,
                            cfg.decay_lambda, errors)
    cfg.init_u = _get(parser, "initial", "u", str, cfg.init_u, errors)
    cfg.init_v = _get(parser, "initial", "v", str, cfg.init_v, errors)
    cfg.init_w = _get(parser, "initial", "w", str, cfg.init_w, errors)
    cfg.seed = _get(parser, "initial", "seed", int, None, errors)
    cfg.cadence = _get(parser, "monitors", "cadence", float, cfg.cadence, errors)
    cfg.delta = _get(parser, "monitors", "delta", float, cfg.delta, errors)
    cfg.q = _get(parser, "monitors", "q", float, cfg.q, errors)
    cfg.out_dir = _get(parser, "output", "dir", str, None, errors)
    cfg.snapshot_every = _get(parser, "output", "snapshot_every", float,
                              cfg.snapshot_every, errors)
    cfg.mms_u = _get(parser, "mms", "u", str, None, errors)
    cfg.mms_v = _get(parser, "mms", "v", str, None, errors)
    cfg.mms_w = _get(parser, "mms", "w", str, None, errors)
    if errors:
        raise StructuralError("bad config values: " + "; ".join(errors))
    return cfg


def load_config(path, label: str | None = None) -> Config:
    path = Path(path)
    return parse_config(path.read_text(), label=label or path.stem)

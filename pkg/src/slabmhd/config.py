"""Scenario configuration: TOML parsing, validation, presets.

The file is a flat, typed key tree; unknown keys are rejected and every
validation failure names the offending field.  Presets cover the standard
scenarios: a flat constant-field equilibrium, a single capillary standing
wave, a Rayleigh-Taylor-stable cellular flow, a non-collinear magnetic pair
(and its collinear control), plus a fully zero state.
"""

import hashlib
import sys
from dataclasses import dataclass, field as dfield

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import fourier, surface as surf
from .errors import ParseError, ValidationError

PRESETS = ("zero", "equilibrium", "capillary-mode", "rt-stable",
           "noncollinear", "collinear-control")
CURRENT_LAWS = ("zero", "constant", "ramp", "sine")


@dataclass
class GeometryConfig:
    n_u: int = 16
    n_v: int = 16
    n_z: int = 17
    z0: float = 0.0
    delta0: float = 0.3
    c0: float = 0.2
    sigma_nu: float = 2.0
    a: float = 10.0


@dataclass
class JhatConfig:
    law: str = "zero"
    rate: float = 0.0
    modes: list = dfield(default_factory=list)  # [ku, kv, amplitude, phase]


@dataclass
class PhysicsConfig:
    alpha: float = 1.0
    preset: str = "zero"
    amplitude: float = 0.0
    mode: tuple = (1, 0)
    h0: tuple = (0.0, 0.0)
    hhat0: tuple = (0.0, 0.0)
    flow_amp: float = 0.0
    perturb: float = 0.0
    v_flux0: tuple = (0.0, 0.0)
    h_flux0: tuple = (0.0, 0.0)
    jhat: JhatConfig = dfield(default_factory=JhatConfig)


@dataclass
class StepperSection:
    dt: float = 0.05
    t_end: float = 1.0
    scheme: str = "rk4"
    filter: bool = False
    filter_strength: float = 36.0
    filter_order: int = 8


@dataclass
class DiagnosticsSection:
    cadence: int = 1
    sobolev_cadence: int = 0
    sobolev_levels: tuple = (0, 1)
    k_index: int = 3
    rt_pressure: str = "q"
    syrovatskij: bool = False
    identity_residuals: bool = False


@dataclass
class OutputSection:
    out_dir: str = "out"
    checkpoint_cadence: int = 0
    figures: bool = True


@dataclass
class NumericsSection:
    tol_ell: float = 1e-10
    tol_dn: float = 1e-8
    tol_eig: float = 1e-9
    tol_div: float = 1e-8
    tol_bc: float = 1e-8
    tol_newton: float = 1e-11
    newton_max_iter: int = 25
    a_min: float = 1.0


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    geometry: GeometryConfig = dfield(default_factory=GeometryConfig)
    physics: PhysicsConfig = dfield(default_factory=PhysicsConfig)
    stepper: StepperSection = dfield(default_factory=StepperSection)
    diagnostics: DiagnosticsSection = dfield(default_factory=DiagnosticsSection)
    output: OutputSection = dfield(default_factory=OutputSection)
    numerics: NumericsSection = dfield(default_factory=NumericsSection)
    source_text: str = ""

    def hash(self):
        return hashlib.sha256(canonical_text(self).encode()).hexdigest()[:16]


def canonical_text(cfg):
    """Deterministic flat rendering of the scenario-defining values.

    The output section (paths, figure toggles) is disposition, not identity,
    and stays out of the hash.
    """
    parts = [f"name={cfg.name}", f"seed={cfg.seed}"]
    for section in ("geometry", "physics", "stepper", "diagnostics",
                    "numerics"):
        obj = getattr(cfg, section)
        for key in sorted(vars(obj)):
            val = getattr(obj, key)
            if isinstance(val, JhatConfig):
                val = sorted(vars(val).items())
            parts.append(f"{section}.{key}={val!r}")
    return "\n".join(parts)


_SCHEMA = {
    "meta": {"name", "seed"},
    "geometry": set(vars(GeometryConfig()).keys()),
    "physics": set(vars(PhysicsConfig()).keys()) | {"jhat"},
    "stepper": set(vars(StepperSection()).keys()),
    "diagnostics": set(vars(DiagnosticsSection()).keys()),
    "output": set(vars(OutputSection()).keys()),
    "numerics": set(vars(NumericsSection()).keys()),
}


def _require(cond, field, message):
    if not cond:
        raise ValidationError(field, message)


def _apply(obj, data, section):
    allowed = _SCHEMA[section]
    for key, val in data.items():
        if key not in allowed:
            raise ValidationError(f"{section}.{key}", "unknown key")
        if key == "jhat":
            continue
        cur = getattr(obj, key)
        if isinstance(cur, tuple):
            val = tuple(val)
        setattr(obj, key, val)


def loads_config(text, name="<string>"):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{name}: {exc}") from exc
    cfg = ScenarioConfig(source_text=text)
    for section in data:
        if section not in _SCHEMA:
            raise ValidationError(section, "unknown section")
    meta = data.get("meta", {})
    for key in meta:
        if key not in _SCHEMA["meta"]:
            raise ValidationError(f"meta.{key}", "unknown key")
    cfg.name = str(meta.get("name", cfg.name))
    cfg.seed = int(meta.get("seed", cfg.seed))
    if "geometry" in data:
        _apply(cfg.geometry, data["geometry"], "geometry")
    if "physics" in data:
        _apply(cfg.physics, data["physics"], "physics")
        if "jhat" in data["physics"]:
            jd = data["physics"]["jhat"]
            for key in jd:
                if key not in {"law", "rate", "modes"}:
                    raise ValidationError(f"physics.jhat.{key}", "unknown key")
            cfg.physics.jhat = JhatConfig(
                law=jd.get("law", "zero"), rate=float(jd.get("rate", 0.0)),
                modes=[list(m) for m in jd.get("modes", [])])
    if "stepper" in data:
        _apply(cfg.stepper, data["stepper"], "stepper")
    if "diagnostics" in data:
        _apply(cfg.diagnostics, data["diagnostics"], "diagnostics")
    if "output" in data:
        _apply(cfg.output, data["output"], "output")
    if "numerics" in data:
        _apply(cfg.numerics, data["numerics"], "numerics")
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    return loads_config(text, name=str(path))


def validate(cfg):
    g = cfg.geometry
    _require(g.n_u >= 4 and g.n_u % 2 == 0, "geometry.n_u", "even and >= 4")
    _require(g.n_v >= 4 and g.n_v % 2 == 0, "geometry.n_v", "even and >= 4")
    _require(g.n_z >= 5, "geometry.n_z", "need at least 5 vertical points")
    _require(-1.0 < g.z0 < 1.0, "geometry.z0", "inside the slab (-1, 1)")
    _require(g.delta0 > 0, "geometry.delta0", "positive")
    _require(g.c0 > 0, "geometry.c0", "positive")
    _require(min(1 - g.z0, 1 + g.z0) >= 2 * g.c0, "geometry.c0",
             "reference surface must keep distance 2*c0 from the walls")
    _require(g.a > 0, "geometry.a", "positive")
    p = cfg.physics
    _require(0.0 <= p.alpha <= 1.0, "physics.alpha", "alpha must lie in [0, 1]")
    _require(p.preset in PRESETS, "physics.preset",
             f"one of {', '.join(PRESETS)}")
    _require(len(p.mode) == 2, "physics.mode", "two integers")
    _require(p.jhat.law in CURRENT_LAWS, "physics.jhat.law",
             f"one of {', '.join(CURRENT_LAWS)}")
    for m in p.jhat.modes:
        _require(len(m) == 4, "physics.jhat.modes",
                 "entries are [ku, kv, amplitude, phase]")
        _require(int(m[0]) != 0 or int(m[1]) != 0, "physics.jhat.modes",
                 "mode (0,0) belongs in hhat0")
    s = cfg.stepper
    _require(s.dt > 0, "stepper.dt", "positive")
    _require(s.t_end >= 0, "stepper.t_end", "nonnegative")
    _require(s.scheme == "rk4", "stepper.scheme", "only 'rk4' is available")
    d = cfg.diagnostics
    _require(d.cadence >= 1, "diagnostics.cadence", ">= 1")
    _require(d.rt_pressure in ("q", "total"), "diagnostics.rt_pressure",
             "'q' or 'total'")
    _require(d.k_index >= 2, "diagnostics.k_index", ">= 2")
    n = cfg.numerics
    for key in vars(n):
        if key.startswith("tol"):
            _require(getattr(n, key) > 0, f"numerics.{key}", "positive")
    return cfg


# ---------------------------------------------------------------------------
# Initial-condition presets
# ---------------------------------------------------------------------------

def reference_surface(cfg):
    g = cfg.geometry
    return surf.ReferenceSurface(g.n_u, g.n_v, g.z0, delta0=g.delta0,
                                 c0=g.c0, sigma_nu=g.sigma_nu)


def current_from_config(cfg):
    """Wall current J = nhat- x hhat for the constant part, plus optional
    divergence-free tangential modes."""
    from .fields import SurfaceCurrentInput

    g = cfg.geometry
    p = cfg.physics
    base = np.zeros((g.n_u, g.n_v, 2))
    a, b = p.hhat0
    base[..., 0] += b
    base[..., 1] += -a
    U, V = fourier.grid(g.n_u, g.n_v)
    for ku, kv, amp, phase in p.jhat.modes:
        ku, kv = int(ku), int(kv)
        kn = np.hypot(ku, kv)
        prof = amp * np.cos(ku * U + kv * V + phase)
        base[..., 0] += prof * (-kv / kn)
        base[..., 1] += prof * (ku / kn)
    law = p.jhat.law
    if law == "zero" and np.max(np.abs(base)) > 0:
        law = "constant"
    if np.max(np.abs(base)) == 0.0:
        law = "zero"
    return SurfaceCurrentInput(base=base, law=law, rate=p.jhat.rate)


def _gamma_mode(ref, amplitude, mode):
    ku, kv = int(mode[0]), int(mode[1])
    return surf.HeightField.from_function(
        ref, lambda U, V: amplitude * np.cos(ku * U + kv * V))


def _cellular_velocity(ref, n_z, amp):
    """Divergence-free cell flow, zero normal trace on the top wall:
    v = amp * (cosh(z-1) cos u, 0, sinh(z-1) sin u)."""
    from . import harmonic

    geom = surf.build_geometry(ref, surf.HeightField.zero(ref))
    grid, _ = harmonic.bulk_grid(geom, "plus", n_z)
    U, _ = fourier.grid(ref.n_u, ref.n_v)
    z = grid.Z
    v = np.zeros(z.shape + (3,))
    v[..., 0] = amp * np.cosh(z - 1.0) * np.cos(U[..., None])
    v[..., 2] = amp * np.sinh(z - 1.0) * np.sin(U[..., None])
    return v


def initial_condition(cfg):
    """Build (state, current) for the configured preset."""
    from . import evolution

    ref = reference_surface(cfg)
    g = cfg.geometry
    p = cfg.physics
    n_z = g.n_z
    shape = (g.n_u, g.n_v, n_z, 3)
    v = np.zeros(shape)
    h = np.zeros(shape)
    gamma = surf.HeightField.zero(ref)
    current = current_from_config(cfg)

    if p.preset in ("capillary-mode",):
        gamma = _gamma_mode(ref, p.amplitude, p.mode)
    elif p.preset == "equilibrium":
        h[..., 0] = p.h0[0]
        h[..., 1] = p.h0[1]
    elif p.preset == "rt-stable":
        if p.amplitude:
            gamma = _gamma_mode(ref, p.amplitude, p.mode)
        v = _cellular_velocity(ref, n_z, p.flow_amp)
    elif p.preset in ("noncollinear", "collinear-control"):
        if p.amplitude:
            gamma = _gamma_mode(ref, p.amplitude, p.mode)
        h[..., 0] = p.h0[0]
        h[..., 1] = p.h0[1]
    if p.perturb > 0.0:
        rng = np.random.default_rng(cfg.seed)
        noise = fourier.random_band_limited(g.n_u, g.n_v, max(2, g.n_u // 6),
                                            rng, amplitude=p.perturb)
        gamma = surf.HeightField(gamma.values + noise)

    state = evolution.initial_state(ref, gamma, v, h, n_z=n_z,
                                    v_flux=np.asarray(p.v_flux0) * fourier.TORUS_AREA
                                    if any(p.v_flux0) else None,
                                    h_flux=np.asarray(p.h_flux0) * fourier.TORUS_AREA
                                    if any(p.h_flux0) else None)
    return ref, state, current


def stepper_config(cfg):
    from .evolution import StepperConfig

    s = cfg.stepper
    n = cfg.numerics
    return StepperConfig(dt=s.dt, t_end=s.t_end, alpha=cfg.physics.alpha,
                         scheme=s.scheme, filter_enabled=s.filter,
                         filter_strength=s.filter_strength,
                         filter_order=s.filter_order, n_z=cfg.geometry.n_z,
                         tol_ell=n.tol_ell, tol_div=n.tol_div, tol_bc=n.tol_bc)

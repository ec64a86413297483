"""Experiment configuration: YAML documents parsed into typed dataclasses.

A configuration is a nested mapping. Unknown keys are rejected (strict mode)
with the offending ``section.key`` named, so typos fail loudly. Defaults are
applied here so downstream code never guesses. The full key set:

    model:        kind (required), dim, params
    state:        hbar (required), center, gamma_scale
    grid:         lo, hi, points          (position grid, one entry per axis)
    propagator:   theta_mode, theta_scale, steps_per_unit, max_refinements
    quadrature:   coverage_target, density, pad, max_radius
    time:         t, sample_times
    reference:    kind (auto | exact_quadratic | split_step), split_steps_per_unit
    ehrenfest:    threshold, horizon, dt
    phase_b:      gamma_scale, theta_mode, theta_scale   (second propagator for
                  difference studies; omitted fields inherit the primary ones)
    kernel:       x_centers, y_lo, y_hi, y_spacing, bin_width
    output:       dir, save_wavefunctions
    hbar_ladder:  decreasing list of hbar values (scaling / difference / crossing runs)
    seed:         integer seed for the optional node jitter
    jitter:       jitter amplitude in units of the node spacing (0 disables)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..errors import ConfigError
from ..hamiltonians import make_model

REFERENCE_KINDS = ("auto", "exact_quadratic", "split_step")
THETA_MODES = ("frozen", "constant", "thawed")


@dataclass(frozen=True)
class ModelCfg:
    kind: str
    dim: int = 1
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StateCfg:
    hbar: float
    center: tuple = ()
    gamma_scale: float = 1.0


@dataclass(frozen=True)
class GridCfg:
    lo: tuple
    hi: tuple
    points: tuple


@dataclass(frozen=True)
class PropagatorCfg:
    theta_mode: str = "frozen"
    theta_scale: Optional[float] = None
    steps_per_unit: int = 1000
    max_refinements: int = 4


@dataclass(frozen=True)
class QuadratureCfg:
    coverage_target: float = 1.0 - 1e-8
    density: float = 6.0
    pad: float = 2.0
    max_radius: float = 40.0


@dataclass(frozen=True)
class TimeCfg:
    t: float = 1.0
    sample_times: Optional[tuple] = None


@dataclass(frozen=True)
class ReferenceCfg:
    kind: str = "auto"
    split_steps_per_unit: int = 2000


@dataclass(frozen=True)
class EhrenfestCfg:
    threshold: float = 0.1
    horizon: float = 8.0
    dt: float = 0.5


@dataclass(frozen=True)
class PhaseBCfg:
    gamma_scale: Optional[float] = None
    theta_mode: Optional[str] = None
    theta_scale: Optional[float] = None


@dataclass(frozen=True)
class KernelCfg:
    x_centers: tuple = ()
    y_lo: tuple = ()
    y_hi: tuple = ()
    y_spacing: float = 0.1
    bin_width: float = 1.0


@dataclass(frozen=True)
class OutputCfg:
    dir: str = "out"
    save_wavefunctions: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelCfg
    state: StateCfg
    grid: GridCfg
    propagator: PropagatorCfg = PropagatorCfg()
    quadrature: QuadratureCfg = QuadratureCfg()
    time: TimeCfg = TimeCfg()
    reference: ReferenceCfg = ReferenceCfg()
    ehrenfest: EhrenfestCfg = EhrenfestCfg()
    phase_b: PhaseBCfg = PhaseBCfg()
    kernel: KernelCfg = KernelCfg()
    output: OutputCfg = OutputCfg()
    hbar_ladder: Optional[tuple] = None
    seed: int = 0
    jitter: float = 0.0


def _require_mapping(obj, where: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(obj).__name__}")
    return dict(obj)


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]!r} (allowed: {', '.join(sorted(allowed))})")


def _number(section: dict, key: str, default, where: str, *, minimum=None,
            maximum=None, strict_min=False, strict_max=False):
    value = section.get(key, default)
    if value is None and default is None and key not in section:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}.{key} must be finite, got {value!r}")
    if minimum is not None:
        if strict_min and not value > minimum:
            raise ConfigError(f"{where}.{key} must be > {minimum}, got {value}")
        if not strict_min and not value >= minimum:
            raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    if maximum is not None:
        if strict_max and not value < maximum:
            raise ConfigError(f"{where}.{key} must be < {maximum}, got {value}")
        if not strict_max and not value <= maximum:
            raise ConfigError(f"{where}.{key} must be <= {maximum}, got {value}")
    return value


def _integer(section: dict, key: str, default, where: str, *, minimum=None):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    return int(value)


def _float_list(section: dict, key: str, default, where: str, length=None):
    value = section.get(key, default)
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{where}.{key} must be a non-empty list of numbers")
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{where}.{key} must contain only numbers, got {item!r}")
        out.append(float(item))
    if length is not None and len(out) != length:
        raise ConfigError(f"{where}.{key} must have {length} entries, got {len(out)}")
    return tuple(out)


def _choice(section: dict, key: str, default, where: str, choices):
    value = section.get(key, default)
    if value is None and default is None:
        return None
    if value not in choices:
        raise ConfigError(f"{where}.{key} must be one of {', '.join(choices)}; got {value!r}")
    return value


def _parse_model(section: dict) -> ModelCfg:
    _reject_unknown(section, ("kind", "dim", "params"), "model")
    if "kind" not in section:
        raise ConfigError("model.kind is required")
    kind = section["kind"]
    if not isinstance(kind, str):
        raise ConfigError(f"model.kind must be a string, got {kind!r}")
    dim = _integer(section, "dim", 1, "model", minimum=1)
    params = _require_mapping(section.get("params"), "model.params")
    try:
        make_model(kind, dim=dim, **params)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    return ModelCfg(kind=kind, dim=dim, params=params)


def _parse_state(section: dict, dim: int) -> StateCfg:
    _reject_unknown(section, ("hbar", "center", "gamma_scale"), "state")
    if "hbar" not in section:
        raise ConfigError("state.hbar is required")
    hbar = _number(section, "hbar", None, "state", minimum=0.0, strict_min=True)
    center = _float_list(section, "center", tuple(0.0 for _ in range(2 * dim)),
                         "state", length=2 * dim)
    gamma_scale = _number(section, "gamma_scale", 1.0, "state", minimum=0.0, strict_min=True)
    return StateCfg(hbar=hbar, center=center, gamma_scale=gamma_scale)


def _parse_grid(section: dict, dim: int) -> GridCfg:
    _reject_unknown(section, ("lo", "hi", "points"), "grid")
    two_pi = 2.0 * math.pi
    lo = _float_list(section, "lo", tuple(-two_pi for _ in range(dim)), "grid", length=dim)
    hi = _float_list(section, "hi", tuple(two_pi for _ in range(dim)), "grid", length=dim)
    points_default = tuple(4096 for _ in range(dim))
    points = section.get("points", points_default)
    if not isinstance(points, (list, tuple)):
        points = (points,)
    if len(points) != dim:
        raise ConfigError(f"grid.points must have {dim} entries, got {len(points)}")
    cleaned = []
    for n in points:
        if isinstance(n, bool) or not isinstance(n, int) or n < 2:
            raise ConfigError(f"grid.points entries must be integers >= 2, got {n!r}")
        cleaned.append(int(n))
    for a, b in zip(lo, hi):
        if not a < b:
            raise ConfigError(f"grid.lo must be < grid.hi axiswise, got {a} >= {b}")
    return GridCfg(lo=lo, hi=hi, points=tuple(cleaned))


def _parse_propagator(section: dict) -> PropagatorCfg:
    allowed = ("theta_mode", "theta_scale", "steps_per_unit", "max_refinements")
    _reject_unknown(section, allowed, "propagator")
    mode = _choice(section, "theta_mode", "frozen", "propagator", THETA_MODES)
    theta_scale = _number(section, "theta_scale", None, "propagator",
                          minimum=0.0, strict_min=True)
    if mode == "constant" and theta_scale is None:
        raise ConfigError("propagator.theta_scale is required when theta_mode is 'constant'")
    if mode != "constant" and theta_scale is not None:
        raise ConfigError("propagator.theta_scale is only meaningful when theta_mode is 'constant'")
    steps = _integer(section, "steps_per_unit", 1000, "propagator", minimum=1)
    refinements = _integer(section, "max_refinements", 4, "propagator", minimum=0)
    return PropagatorCfg(theta_mode=mode, theta_scale=theta_scale,
                         steps_per_unit=steps, max_refinements=refinements)


def _parse_quadrature(section: dict) -> QuadratureCfg:
    allowed = ("coverage_target", "density", "pad", "max_radius")
    _reject_unknown(section, allowed, "quadrature")
    coverage = _number(section, "coverage_target", 1.0 - 1e-8, "quadrature",
                       minimum=0.0, maximum=1.0, strict_min=True, strict_max=True)
    density = _number(section, "density", 6.0, "quadrature", minimum=0.0, strict_min=True)
    pad = _number(section, "pad", 2.0, "quadrature", minimum=0.0)
    radius = _number(section, "max_radius", 40.0, "quadrature", minimum=0.0, strict_min=True)
    return QuadratureCfg(coverage_target=coverage, density=density, pad=pad, max_radius=radius)


def _parse_time(section: dict) -> TimeCfg:
    _reject_unknown(section, ("t", "sample_times"), "time")
    t = _number(section, "t", 1.0, "time")
    if t == 0.0:
        raise ConfigError("time.t must be nonzero")
    samples = _float_list(section, "sample_times", None, "time")
    if samples is not None:
        if any(s <= 0.0 for s in samples):
            raise ConfigError("time.sample_times must be positive")
        if any(b <= a for a, b in zip(samples, samples[1:])):
            raise ConfigError("time.sample_times must be strictly increasing")
        if samples[-1] > abs(t) + 1e-12:
            raise ConfigError(f"time.sample_times must stay within the horizon |t|={abs(t)}")
    return TimeCfg(t=t, sample_times=samples)


def _parse_reference(section: dict) -> ReferenceCfg:
    _reject_unknown(section, ("kind", "split_steps_per_unit"), "reference")
    kind = _choice(section, "kind", "auto", "reference", REFERENCE_KINDS)
    steps = _integer(section, "split_steps_per_unit", 2000, "reference", minimum=1)
    return ReferenceCfg(kind=kind, split_steps_per_unit=steps)


def _parse_ehrenfest(section: dict) -> EhrenfestCfg:
    _reject_unknown(section, ("threshold", "horizon", "dt"), "ehrenfest")
    threshold = _number(section, "threshold", 0.1, "ehrenfest", minimum=0.0, strict_min=True)
    horizon = _number(section, "horizon", 8.0, "ehrenfest", minimum=0.0, strict_min=True)
    dt = _number(section, "dt", 0.5, "ehrenfest", minimum=0.0, strict_min=True)
    if dt > horizon:
        raise ConfigError(f"ehrenfest.dt must be <= ehrenfest.horizon, got {dt} > {horizon}")
    return EhrenfestCfg(threshold=threshold, horizon=horizon, dt=dt)


def _parse_phase_b(section: dict) -> PhaseBCfg:
    _reject_unknown(section, ("gamma_scale", "theta_mode", "theta_scale"), "phase_b")
    gamma_scale = _number(section, "gamma_scale", None, "phase_b", minimum=0.0, strict_min=True)
    mode = _choice(section, "theta_mode", None, "phase_b", THETA_MODES)
    theta_scale = _number(section, "theta_scale", None, "phase_b", minimum=0.0, strict_min=True)
    if theta_scale is not None and mode != "constant":
        raise ConfigError("phase_b.theta_scale requires phase_b.theta_mode 'constant'")
    if mode == "constant" and theta_scale is None:
        raise ConfigError("phase_b.theta_scale is required when phase_b.theta_mode is 'constant'")
    return PhaseBCfg(gamma_scale=gamma_scale, theta_mode=mode, theta_scale=theta_scale)


def _parse_kernel(section: dict, dim: int) -> KernelCfg:
    allowed = ("x_centers", "y_lo", "y_hi", "y_spacing", "bin_width")
    _reject_unknown(section, allowed, "kernel")
    centers_raw = section.get("x_centers", ())
    centers = []
    if centers_raw:
        if not isinstance(centers_raw, (list, tuple)):
            raise ConfigError("kernel.x_centers must be a list of phase-space points")
        for i, entry in enumerate(centers_raw):
            centers.append(_float_list({"c": entry}, "c", None,
                                       f"kernel.x_centers[{i}]", length=2 * dim))
    y_lo = _float_list(section, "y_lo", tuple(-4.0 for _ in range(2 * dim)),
                       "kernel", length=2 * dim)
    y_hi = _float_list(section, "y_hi", tuple(4.0 for _ in range(2 * dim)),
                       "kernel", length=2 * dim)
    for a, b in zip(y_lo, y_hi):
        if not a < b:
            raise ConfigError(f"kernel.y_lo must be < kernel.y_hi axiswise, got {a} >= {b}")
    spacing = _number(section, "y_spacing", 0.1, "kernel", minimum=0.0, strict_min=True)
    bin_width = _number(section, "bin_width", 1.0, "kernel", minimum=0.0, strict_min=True)
    return KernelCfg(x_centers=tuple(centers), y_lo=y_lo, y_hi=y_hi,
                     y_spacing=spacing, bin_width=bin_width)


def _parse_output(section: dict) -> OutputCfg:
    _reject_unknown(section, ("dir", "save_wavefunctions"), "output")
    out_dir = section.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError(f"output.dir must be a non-empty string, got {out_dir!r}")
    save = section.get("save_wavefunctions", False)
    if not isinstance(save, bool):
        raise ConfigError(f"output.save_wavefunctions must be true or false, got {save!r}")
    return OutputCfg(dir=out_dir, save_wavefunctions=save)


def _parse_ladder(document: dict) -> Optional[tuple]:
    ladder = _float_list(document, "hbar_ladder", None, "<top level>")
    if ladder is None:
        return None
    if len(ladder) < 3:
        raise ConfigError(f"hbar_ladder needs at least 3 entries for a slope fit, got {len(ladder)}")
    if any(h <= 0.0 for h in ladder):
        raise ConfigError("hbar_ladder entries must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("hbar_ladder must be strictly decreasing")
    return ladder


TOP_LEVEL_KEYS = ("model", "state", "grid", "propagator", "quadrature", "time",
                  "reference", "ehrenfest", "phase_b", "kernel", "output",
                  "hbar_ladder", "seed", "jitter")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML configuration document."""
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration is not valid YAML: {exc}") from exc
    document = _require_mapping(document, "<top level>")
    _reject_unknown(document, TOP_LEVEL_KEYS, "<top level>")

    model = _parse_model(_require_mapping(document.get("model"), "model"))
    state = _parse_state(_require_mapping(document.get("state"), "state"), model.dim)
    grid = _parse_grid(_require_mapping(document.get("grid"), "grid"), model.dim)
    return ExperimentConfig(
        model=model,
        state=state,
        grid=grid,
        propagator=_parse_propagator(_require_mapping(document.get("propagator"), "propagator")),
        quadrature=_parse_quadrature(_require_mapping(document.get("quadrature"), "quadrature")),
        time=_parse_time(_require_mapping(document.get("time"), "time")),
        reference=_parse_reference(_require_mapping(document.get("reference"), "reference")),
        ehrenfest=_parse_ehrenfest(_require_mapping(document.get("ehrenfest"), "ehrenfest")),
        phase_b=_parse_phase_b(_require_mapping(document.get("phase_b"), "phase_b")),
        kernel=_parse_kernel(_require_mapping(document.get("kernel"), "kernel"), model.dim),
        output=_parse_output(_require_mapping(document.get("output"), "output")),
        hbar_ladder=_parse_ladder(document),
        seed=_integer(document, "seed", 0, "<top level>", minimum=0),
        jitter=_number(document, "jitter", 0.0, "<top level>", minimum=0.0),
    )


def load_config_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())

"""Experiment runners: propagation jobs, error ladders, crossing sweeps, kernel reports.

Each runner takes a parsed ExperimentConfig, executes its jobs (optionally in a
worker pool), writes CSV tables plus a JSON summary into an output directory,
and returns the summary as a dict. All reductions run in a fixed order and all
seeds are explicit, so identical configs produce identical output bytes; the
only exceptions are the runtime_seconds columns and fields, which record wall
time.

CSV schemas (first column is always the schema_version tag):

    hkprop-errors-1        hbar, t, l2_error, hk_norm, runtime_seconds, node_count
    hkprop-crossings-1     hbar, t_star, status
    hkprop-decay-1         bin_lower, bin_upper, max_abs_ktilde, count
    hkprop-kernel-peaks-1  x_index, x_*, peak_y_*, flow_*, peak_distance, peak_abs

Distances and bin edges in the kernel reports are in units of sqrt(hbar).
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import platform
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from .. import __version__
from ..classical_flow import integrate_ensemble
from ..coherent import (PhaseGrid, build_quadrature, coherent_state, grid_for_box,
                        l2_difference, siegel_iI, wavefunction_to_csv)
from ..errors import ConfigError, HKError
from ..hamiltonians import estimate_delta, make_model
from ..hk_core import (HKConfig, QuadratureSpec, fb_kernel_diagnostic, hk_propagate,
                       hk_propagate_batch)
from ..reference import _require_quadratic, exact_quadratic_apply, split_step_propagate
from .config import ExperimentConfig

SCHEMA_ERRORS = "hkprop-errors-1"
SCHEMA_CROSSINGS = "hkprop-crossings-1"
SCHEMA_DECAY = "hkprop-decay-1"
SCHEMA_PEAKS = "hkprop-kernel-peaks-1"

CROSS_CHECK_BOUND = 1e-6
FLOOR_FACTOR = 10.0


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class ErrorRow:
    hbar: float
    t: float
    l2_error: float
    hk_norm: float
    runtime_seconds: float
    node_count: int


@dataclass(frozen=True)
class ErrorTable:
    """Rows of measured errors, keyed uniquely by (hbar, t)."""

    rows: tuple

    def __post_init__(self):
        keys = [(row.hbar, row.t) for row in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("error table rows must be keyed uniquely by (hbar, t)")
        if any(row.l2_error < 0 or row.hk_norm < 0 for row in self.rows):
            raise ValueError("errors and norms must be nonnegative")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["schema_version", "hbar", "t", "l2_error", "hk_norm",
                             "runtime_seconds", "node_count"])
            for row in self.rows:
                writer.writerow([SCHEMA_ERRORS, _fmt(row.hbar), _fmt(row.t),
                                 _fmt(row.l2_error), _fmt(row.hk_norm),
                                 _fmt(row.runtime_seconds), str(row.node_count)])


def _model_for(cfg: ExperimentConfig, control: bool = False):
    if control:
        return make_model("harmonic", dim=cfg.model.dim)
    return make_model(cfg.model.kind, dim=cfg.model.dim, **cfg.model.params)


def _grid_for(cfg: ExperimentConfig):
    return grid_for_box(cfg.grid.lo, cfg.grid.hi, cfg.grid.points)


def _hk_config(cfg: ExperimentConfig, variant: str = "a") -> HKConfig:
    d = cfg.model.dim
    gamma_scale = cfg.state.gamma_scale
    mode = cfg.propagator.theta_mode
    theta_scale = cfg.propagator.theta_scale
    if variant == "b":
        if cfg.phase_b.gamma_scale is not None:
            gamma_scale = cfg.phase_b.gamma_scale
        if cfg.phase_b.theta_mode is not None:
            mode = cfg.phase_b.theta_mode
        if cfg.phase_b.theta_scale is not None:
            theta_scale = cfg.phase_b.theta_scale
    theta = siegel_iI(d, theta_scale) if mode == "constant" else None
    quad = QuadratureSpec(coverage_target=cfg.quadrature.coverage_target,
                          density=cfg.quadrature.density,
                          pad=cfg.quadrature.pad,
                          max_radius=cfg.quadrature.max_radius)
    return HKConfig(gamma=siegel_iI(d, gamma_scale), theta_mode=mode, theta=theta,
                    quadrature=quad, steps_per_unit=cfg.propagator.steps_per_unit,
                    max_refinements=cfg.propagator.max_refinements)


def _is_quadratic(model) -> bool:
    try:
        _require_quadratic(model)
        return True
    except ValueError:
        return False


def _resolve_reference(cfg: ExperimentConfig, model) -> str:
    if cfg.reference.kind == "auto":
        return "exact_quadratic" if _is_quadratic(model) else "split_step"
    if cfg.reference.kind == "exact_quadratic" and not _is_quadratic(model):
        raise ConfigError(f"reference.kind 'exact_quadratic' needs a quadratic model, "
                          f"got {model.kind!r}")
    return cfg.reference.kind


def _split_steps(cfg: ExperimentConfig, span: float) -> int:
    return max(1, int(round(cfg.reference.split_steps_per_unit * abs(span))))


def reference_cross_check(cfg: ExperimentConfig) -> dict:
    """Compare the two reference solvers on a harmonic oscillator, once per run.

    Both solvers are exact for quadratic Hamiltonians up to their own
    discretization, so disagreement beyond CROSS_CHECK_BOUND means one of them
    is broken and the run must not be trusted.
    """
    model = make_model("harmonic")
    grid = grid_for_box([-2.0 * math.pi], [2.0 * math.pi], 2048)
    psi0 = coherent_state([0.0, 1.0], siegel_iI(1), 0.1, grid)
    exact = exact_quadratic_apply(model, psi0, 1.0)
    split = split_step_propagate(model, psi0, 1.0, steps=_split_steps(cfg, 1.0))
    diff = l2_difference(exact, split)
    if diff > CROSS_CHECK_BOUND:
        raise HKError(f"reference solvers disagree on the harmonic oscillator: "
                      f"L2 difference {diff:.3e} > {CROSS_CHECK_BOUND:.0e}")
    return {"model": "harmonic", "hbar": 0.1, "t": 1.0,
            "l2_difference": float(diff), "bound": CROSS_CHECK_BOUND}


def _jittered_quadrature(psi0, hk_cfg: HKConfig, cfg: ExperimentConfig,
                         job_index: int) -> Optional[PhaseGrid]:
    """Optional Monte-Carlo node jitter: perturb each quadrature node by a
    seeded uniform offset of up to cfg.jitter times the node spacing."""
    if cfg.jitter == 0.0:
        return None
    q = cfg.quadrature
    zgrid = build_quadrature(psi0, hk_cfg.gamma, coverage_target=q.coverage_target,
                             density=q.density, pad=q.pad, max_radius=q.max_radius)
    spacing = 2.0 * np.asarray(zgrid.half_widths) / np.asarray(zgrid.shape)
    rng = np.random.default_rng([cfg.seed, job_index])
    nodes = zgrid.nodes + rng.uniform(-1.0, 1.0, zgrid.nodes.shape) * cfg.jitter * spacing
    return PhaseGrid(nodes=nodes, weights=zgrid.weights, coverage=zgrid.coverage,
                     coverage_target=zgrid.coverage_target, center=zgrid.center,
                     half_widths=zgrid.half_widths, shape=zgrid.shape)


def _sample_times(cfg: ExperimentConfig) -> tuple:
    if cfg.time.sample_times is not None:
        return cfg.time.sample_times
    return (cfg.time.t,)


def _reference_states(cfg, model, ref_kind, psi0, times):
    """Reference solution at each sample time, with per-time wall cost.

    The split-operator reference is marched forward segment by segment so a
    shared prefix is never recomputed; the exact quadratic reference is closed
    form and evaluated per time.
    """
    states, costs = [], []
    if ref_kind == "exact_quadratic":
        for t in times:
            tic = time.perf_counter()
            states.append(exact_quadratic_apply(model, psi0, t))
            costs.append(time.perf_counter() - tic)
        return states, costs
    current, reached = psi0, 0.0
    for t in times:
        tic = time.perf_counter()
        span = t - reached
        current = split_step_propagate(model, current, span, steps=_split_steps(cfg, span))
        reached = t
        states.append(current)
        costs.append(time.perf_counter() - tic)
    return states, costs


def _error_ladder_job(args) -> dict:
    """One (hbar, model) cell of a scaling study: HK vs reference at each
    sample time. `control` swaps in the harmonic oscillator at identical
    settings to measure the pure-quadrature error floor."""
    cfg, hbar, job_index, control = args
    model = _model_for(cfg, control=control)
    ref_kind = "exact_quadratic" if control else _resolve_reference(cfg, model)
    grid = _grid_for(cfg)
    hk_cfg = _hk_config(cfg)
    psi0 = coherent_state(cfg.state.center, hk_cfg.gamma, hbar, grid)
    zgrid = _jittered_quadrature(psi0, hk_cfg, cfg, job_index)
    times = _sample_times(cfg)

    tic = time.perf_counter()
    hk_states = [hk_propagate(model, psi0, t, hk_cfg, zgrid=zgrid) for t in times]
    hk_cost = (time.perf_counter() - tic) / len(times)
    ref_states, ref_costs = _reference_states(cfg, model, ref_kind, psi0, times)

    rows = []
    for state, ref, t, ref_cost in zip(hk_states, ref_states, times, ref_costs):
        rows.append(ErrorRow(hbar=hbar, t=t, l2_error=l2_difference(state, ref),
                             hk_norm=state.l2_norm(), runtime_seconds=hk_cost + ref_cost,
                             node_count=int(state.info["nodes"])))
    return {"hbar": hbar, "control": control, "rows": rows, "ref_kind": ref_kind}


def _phase_difference_job(args) -> dict:
    """One hbar cell of a difference study: two propagator variants that
    differ only in their width phase choices, applied to the same state."""
    cfg, hbar, job_index, control = args
    model = _model_for(cfg, control=control)
    grid = _grid_for(cfg)
    cfg_a, cfg_b = _hk_config(cfg, "a"), _hk_config(cfg, "b")
    psi_a = coherent_state(cfg.state.center, cfg_a.gamma, hbar, grid)
    times = _sample_times(cfg)

    tic = time.perf_counter()
    out_a = [hk_propagate(model, psi_a, t, cfg_a) for t in times]
    out_b = [hk_propagate(model, psi_a, t, cfg_b) for t in times]
    cost = (time.perf_counter() - tic) / len(times)

    rows = []
    for a, b, t in zip(out_a, out_b, times):
        rows.append(ErrorRow(hbar=hbar, t=t, l2_error=l2_difference(a, b),
                             hk_norm=a.l2_norm(), runtime_seconds=cost,
                             node_count=int(a.info["nodes"])))
    return {"hbar": hbar, "control": control, "rows": rows, "ref_kind": "pairwise"}


def _ehrenfest_job(args) -> dict:
    """One hbar cell of a crossing sweep: HK errors on the dt grid until the
    first threshold crossing (the reference march stops there)."""
    cfg, hbar, job_index, _control = args
    model = _model_for(cfg)
    ref_kind = _resolve_reference(cfg, model)
    grid = _grid_for(cfg)
    hk_cfg = _hk_config(cfg)
    psi0 = coherent_state(cfg.state.center, hk_cfg.gamma, hbar, grid)
    zgrid = _jittered_quadrature(psi0, hk_cfg, cfg, job_index)

    eh = cfg.ehrenfest
    count = int(math.floor(eh.horizon / eh.dt + 1e-9))
    times = [eh.dt * k for k in range(1, count + 1)]

    tic = time.perf_counter()
    hk_states = hk_propagate_batch(model, psi0, times, hk_cfg, zgrid=zgrid)
    hk_cost = (time.perf_counter() - tic) / len(times)

    rows, t_star = [], None
    current, reached = psi0, 0.0
    for state, t in zip(hk_states, times):
        tic = time.perf_counter()
        if ref_kind == "exact_quadratic":
            ref = exact_quadratic_apply(model, psi0, t)
        else:
            span = t - reached
            current = split_step_propagate(model, current, span,
                                           steps=_split_steps(cfg, span))
            ref = current
            reached = t
        ref_cost = time.perf_counter() - tic
        err = l2_difference(state, ref)
        rows.append(ErrorRow(hbar=hbar, t=t, l2_error=err, hk_norm=state.l2_norm(),
                             runtime_seconds=hk_cost + ref_cost,
                             node_count=int(state.info["nodes"])))
        if err > eh.threshold:
            t_star = t
            break
    return {"hbar": hbar, "rows": rows, "t_star": t_star, "ref_kind": ref_kind}


def _run_jobs(job_fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(workers, len(jobs))) as pool:
            return pool.map(job_fn, jobs)
    return [job_fn(job) for job in jobs]


def _fit_slope(points):
    """Unweighted least squares of log error against log hbar."""
    hs = np.log([p[0] for p in points])
    es = np.log([p[1] for p in points])
    slope, intercept = np.polyfit(hs, es, 1)
    residuals = es - (slope * hs + intercept)
    return float(slope), float(intercept), [float(r) for r in residuals]


def _versions() -> dict:
    return {"hkprop": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def _write_summary(out_dir: Optional[Path], summary: dict) -> None:
    if out_dir is None:
        return
    path = Path(out_dir) / "summary.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _prepare_out(out_dir) -> Optional[Path]:
    if out_dir is None:
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_summary(command: str, cfg: ExperimentConfig) -> dict:
    return {"command": command, "config": asdict(cfg), "versions": _versions()}


def _ladder_study(command: str, job_fn, cfg: ExperimentConfig, workers: int,
                  out_dir) -> dict:
    """Shared skeleton of the scaling and difference studies: one main job and
    one harmonic-control job per ladder point, a floor-excluded slope fit at
    the final sample time, CSV plus JSON emission."""
    if cfg.hbar_ladder is None:
        raise ConfigError(f"{command} requires hbar_ladder")
    out = _prepare_out(out_dir)
    started = time.perf_counter()
    cross = reference_cross_check(cfg)

    ladder = cfg.hbar_ladder
    jobs = [(cfg, h, i, False) for i, h in enumerate(ladder)]
    jobs += [(cfg, h, len(ladder) + i, True) for i, h in enumerate(ladder)]
    results = _run_jobs(job_fn, jobs, workers)
    main = {r["hbar"]: r for r in results if not r["control"]}
    control = {r["hbar"]: r for r in results if r["control"]}

    rows = tuple(row for h in ladder for row in main[h]["rows"])
    table = ErrorTable(rows)
    if out is not None:
        table.to_csv(out / "errors.csv")

    t_fit = _sample_times(cfg)[-1]
    points, point_meta = [], []
    for h in ladder:
        err = next(r.l2_error for r in main[h]["rows"] if r.t == t_fit)
        floor = next(r.l2_error for r in control[h]["rows"] if r.t == t_fit)
        at_floor = err <= FLOOR_FACTOR * floor
        point_meta.append({"hbar": h, "error": float(err), "control_error": float(floor),
                           "flag": "quadrature-floor" if at_floor else ""})
        if not at_floor:
            points.append((h, err))

    errors_at_fit = [m["error"] for m in point_meta]
    monotone = all(b < a for a, b in zip(errors_at_fit, errors_at_fit[1:]))
    if len(points) >= 2:
        slope, intercept, residuals = _fit_slope(points)
        fit = {"slope": slope, "intercept": intercept, "residuals": residuals,
               "points_used": len(points), "flag": ""}
    else:
        fit = {"slope": None, "intercept": None, "residuals": [],
               "points_used": len(points), "flag": "quadrature-floor"}

    summary = _base_summary(command, cfg)
    summary.update({
        "reference_kind": main[ladder[0]]["ref_kind"],
        "reference_cross_check": cross,
        "fit": fit,
        "fit_time": float(t_fit),
        "points": point_meta,
        "monotone_decreasing": bool(monotone),
        "tables": {"errors": "errors.csv"},
        "runtime_seconds": time.perf_counter() - started,
    })
    _write_summary(out, summary)
    return summary


def run_scaling_study(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> dict:
    """HK error against the reference across the hbar ladder, with a floor
    flagged slope fit; the error of the leading-order propagator must shrink
    linearly in hbar once above the quadrature floor."""
    return _ladder_study("scaling", _error_ladder_job, cfg, workers, out_dir)


def run_phase_invariance(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> dict:
    """Pairwise output difference between two width phase choices across the
    hbar ladder; leading-order outputs agree to first order, so the difference
    itself shrinks linearly in hbar."""
    return _ladder_study("phase-invariance", _phase_difference_job, cfg, workers, out_dir)


def run_propagate(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> dict:
    """Single propagation job at state.hbar: HK vs reference at each sample
    time, with optional wavefunction dumps."""
    out = _prepare_out(out_dir)
    started = time.perf_counter()
    cross = reference_cross_check(cfg)
    result = _error_ladder_job((cfg, cfg.state.hbar, 0, False))
    table = ErrorTable(tuple(result["rows"]))
    dumped = {}
    if out is not None:
        table.to_csv(out / "errors.csv")
        if cfg.output.save_wavefunctions:
            model = _model_for(cfg)
            hk_cfg = _hk_config(cfg)
            grid = _grid_for(cfg)
            psi0 = coherent_state(cfg.state.center, hk_cfg.gamma, cfg.state.hbar, grid)
            zgrid = _jittered_quadrature(psi0, hk_cfg, cfg, 0)
            times = _sample_times(cfg)
            refs, _ = _reference_states(cfg, model, result["ref_kind"], psi0, times)
            for k, t in enumerate(times):
                hk_path, ref_path = f"hk_{k:03d}.csv", f"ref_{k:03d}.csv"
                wavefunction_to_csv(hk_propagate(model, psi0, t, hk_cfg, zgrid=zgrid),
                                    out / hk_path)
                wavefunction_to_csv(refs[k], out / ref_path)
                dumped[_fmt(t)] = {"hk": hk_path, "reference": ref_path}

    summary = _base_summary("propagate", cfg)
    summary.update({
        "reference_kind": result["ref_kind"],
        "reference_cross_check": cross,
        "rows": [{"hbar": r.hbar, "t": r.t, "l2_error": r.l2_error,
                  "hk_norm": r.hk_norm, "node_count": r.node_count}
                 for r in result["rows"]],
        "wavefunction_files": dumped,
        "tables": {"errors": "errors.csv"},
        "runtime_seconds": time.perf_counter() - started,
    })
    _write_summary(out, summary)
    return summary


def run_ehrenfest(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> dict:
    """Threshold crossing sweep: for each ladder hbar, march HK and reference
    on the dt grid until the L2 error first exceeds the threshold; report the
    crossing times, whether they are nondecreasing as hbar shrinks, and the
    least-squares coefficient c in t* ~ c log(1/hbar)."""
    if cfg.hbar_ladder is None:
        raise ConfigError("ehrenfest requires hbar_ladder")
    spu_dt = cfg.propagator.steps_per_unit * cfg.ehrenfest.dt
    if abs(spu_dt - round(spu_dt)) > 1e-9 or round(spu_dt) < 1:
        raise ConfigError("ehrenfest.dt times propagator.steps_per_unit must be a "
                          f"positive integer, got {spu_dt}")
    out = _prepare_out(out_dir)
    started = time.perf_counter()
    cross = reference_cross_check(cfg)

    model = _model_for(cfg)
    center = np.asarray(cfg.state.center, dtype=float)
    probe_box = [(c - 3.0, c + 3.0) for c in center]
    bound = estimate_delta(model, probe_box, n=41)
    if bound.delta <= 0.0:
        raise ConfigError("ehrenfest requires a model with positive flow growth "
                          f"rate; estimated delta={bound.delta}")

    ladder = cfg.hbar_ladder
    jobs = [(cfg, h, i, False) for i, h in enumerate(ladder)]
    results = _run_jobs(_ehrenfest_job, jobs, workers)
    by_hbar = {r["hbar"]: r for r in results}

    rows = tuple(row for h in ladder for row in by_hbar[h]["rows"])
    table = ErrorTable(rows)
    crossings = []
    for h in ladder:
        t_star = by_hbar[h]["t_star"]
        status = "crossed" if t_star is not None else "no crossing within horizon"
        crossings.append({"hbar": h, "t_star": t_star, "status": status})
    if out is not None:
        table.to_csv(out / "errors.csv")
        with open(out / "crossings.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["schema_version", "hbar", "t_star", "status"])
            for entry in crossings:
                t_star = "" if entry["t_star"] is None else _fmt(entry["t_star"])
                writer.writerow([SCHEMA_CROSSINGS, _fmt(entry["hbar"]), t_star,
                                 entry["status"]])

    # Monotonicity treats "no crossing" as beyond the horizon (t* = +inf).
    stars = [math.inf if c["t_star"] is None else c["t_star"] for c in crossings]
    nondecreasing = all(b >= a for a, b in zip(stars, stars[1:]))
    crossed = [(h, c["t_star"]) for h, c in zip(ladder, crossings)
               if c["t_star"] is not None]
    if len(crossed) >= 2:
        xs = np.log([1.0 / h for h, _ in crossed])
        ys = np.array([t for _, t in crossed])
        c_fit, intercept = np.polyfit(xs, ys, 1)
        growth = {"c_fit": float(c_fit), "intercept": float(intercept),
                  "points_used": len(crossed)}
    else:
        growth = {"c_fit": None, "intercept": None, "points_used": len(crossed)}
    growth["delta_estimate"] = float(bound.delta)
    growth["nondecreasing"] = bool(nondecreasing)

    summary = _base_summary("ehrenfest", cfg)
    summary.update({
        "reference_kind": by_hbar[ladder[0]]["ref_kind"],
        "reference_cross_check": cross,
        "crossings": crossings,
        "growth": growth,
        "tables": {"errors": "errors.csv", "crossings": "crossings.csv"},
        "runtime_seconds": time.perf_counter() - started,
    })
    _write_summary(out, summary)
    return summary


def _kernel_y_nodes(cfg: ExperimentConfig):
    """Cell-centered phase-space grid over the configured Y box."""
    axes = []
    spacing = cfg.kernel.y_spacing
    for lo, hi in zip(cfg.kernel.y_lo, cfg.kernel.y_hi):
        count = max(1, int(math.floor((hi - lo) / spacing + 1e-9)))
        axes.append(lo + spacing * (np.arange(count) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.full(nodes.shape[0], spacing ** nodes.shape[1])
    return nodes, weights


def run_inspect_kernel(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> dict:
    """Sample the propagator's phase-space kernel at the configured X centers
    against a dense Y box, bin |K~| by distance from the classical image of X,
    and emit the decay table plus per-X peak locations. For a semiclassical
    propagator the peak must sit on the classical flow graph."""
    if not cfg.kernel.x_centers:
        raise ConfigError("inspect-kernel requires kernel.x_centers")
    out = _prepare_out(out_dir)
    started = time.perf_counter()

    model = _model_for(cfg)
    grid = _grid_for(cfg)
    hk_cfg = _hk_config(cfg)
    hbar = cfg.state.hbar
    t = cfg.time.t
    steps = max(1, int(round(cfg.propagator.steps_per_unit * abs(t))))

    def apply(psi):
        return hk_propagate(model, psi, t, hk_cfg)

    def flow_map(Z):
        return integrate_ensemble(model, np.atleast_2d(Z), 0.0, t, steps).Z[-1]

    X_nodes = np.asarray(cfg.kernel.x_centers, dtype=float)
    Y_nodes, y_weights = _kernel_y_nodes(cfg)
    report = fb_kernel_diagnostic(apply, flow_map, X_nodes, Y_nodes, hbar, grid,
                                  gamma=hk_cfg.gamma, bin_width=cfg.kernel.bin_width)

    images = flow_map(X_nodes)
    peak_rows = []
    sqrt_h = math.sqrt(hbar)
    for i in range(X_nodes.shape[0]):
        j = int(report.peak_y_index[i])
        peak_rows.append({
            "x_index": i,
            "x": [float(v) for v in X_nodes[i]],
            "peak_y": [float(v) for v in Y_nodes[j]],
            "flow_image": [float(v) for v in images[i]],
            "peak_distance": float(report.dists[i, j]),
            "peak_abs": float(report.kernel_abs[i, j]),
        })

    warnings_list = []
    for i, image in enumerate(images):
        margin_lo = (image - np.asarray(cfg.kernel.y_lo)) / sqrt_h
        margin_hi = (np.asarray(cfg.kernel.y_hi) - image) / sqrt_h
        if min(margin_lo.min(), margin_hi.min()) < 5.0:
            warnings_list.append(f"Y box covers less than 5 sqrt(hbar) around the "
                                 f"flow image of x_centers[{i}]")

    # Off-graph weight fraction: squared kernel mass at distance >= 5 sqrt(hbar).
    k2 = report.kernel_abs ** 2
    off = report.dists >= 5.0
    off_mass = float(np.sum(k2 * off * y_weights) / np.sum(k2 * y_weights))

    if out is not None:
        with open(out / "decay.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["schema_version", "bin_lower", "bin_upper",
                             "max_abs_ktilde", "count"])
            for k in range(report.max_abs.shape[0]):
                writer.writerow([SCHEMA_DECAY, _fmt(report.bin_edges[k]),
                                 _fmt(report.bin_edges[k + 1]), _fmt(report.max_abs[k]),
                                 str(int(report.counts[k]))])
        with open(out / "peaks.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            d2 = X_nodes.shape[1]
            header = (["schema_version", "x_index"]
                      + [f"x_{k}" for k in range(d2)]
                      + [f"peak_y_{k}" for k in range(d2)]
                      + [f"flow_{k}" for k in range(d2)]
                      + ["peak_distance", "peak_abs"])
            writer.writerow(header)
            for entry in peak_rows:
                writer.writerow([SCHEMA_PEAKS, str(entry["x_index"])]
                                + [_fmt(v) for v in entry["x"]]
                                + [_fmt(v) for v in entry["peak_y"]]
                                + [_fmt(v) for v in entry["flow_image"]]
                                + [_fmt(entry["peak_distance"]), _fmt(entry["peak_abs"])])

    max_peak_distance = max(e["peak_distance"] for e in peak_rows)
    bin_w = cfg.kernel.bin_width
    summary = _base_summary("inspect-kernel", cfg)
    summary.update({
        "bin_width_sqrt_hbar": bin_w,
        "monotone_decay": bool(report.monotone_decay()),
        "peaks": peak_rows,
        "peak_tracks_flow": bool(max_peak_distance <= bin_w),
        "max_peak_distance_sqrt_hbar": float(max_peak_distance),
        "off_graph_mass_fraction": off_mass,
        "warnings": warnings_list,
        "tables": {"decay": "decay.csv", "peaks": "peaks.csv"},
        "runtime_seconds": time.perf_counter() - started,
    })
    _write_summary(out, summary)
    return summary

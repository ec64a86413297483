"""Experiment harness: config parsing, runners, CSV contracts, CLI."""

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hkprop.harness as hns
from hkprop.errors import ConfigError, HKError
from hkprop.harness.experiments import ErrorRow, ErrorTable, _fit_slope

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
model: {kind: harmonic}
state: {hbar: 0.2, center: [0.0, 0.5]}
"""

PROPAGATE = """
model: {kind: harmonic}
state: {hbar: 0.2, center: [0.0, 0.5]}
grid: {lo: [-8.0], hi: [8.0], points: 512}
propagator: {steps_per_unit: 200}
time: {t: 0.5}
output: {save_wavefunctions: true}
"""

SCALING = """
model: {kind: pendulum}
state: {hbar: 0.2, center: [0.0, 0.9]}
grid: {lo: [-8.0], hi: [8.0], points: 512}
propagator: {steps_per_unit: 200}
reference: {split_steps_per_unit: 1200}
time: {t: 0.5}
hbar_ladder: [0.2, 0.15, 0.1]
"""

EHRENFEST = """
model: {kind: harmonic}
state: {hbar: 0.2, center: [0.0, 1.0]}
grid: {lo: [-8.0], hi: [8.0], points: 512}
propagator: {steps_per_unit: 200}
time: {t: 2.0}
hbar_ladder: [0.2, 0.1, 0.05]
ehrenfest: {threshold: 0.5, horizon: 2.0, dt: 0.5}
"""

KERNEL = """
model: {kind: harmonic}
state: {hbar: 0.2, center: [0.8, 0.0]}
grid: {lo: [-7.5], hi: [7.5], points: 512}
propagator: {steps_per_unit: 200}
time: {t: 1.5707963267948966}
kernel:
  x_centers: [[0.8, 0.0]]
  y_lo: [-2.5, -2.5]
  y_hi: [2.5, 2.5]
  y_spacing: 0.25
"""


def _strip_runtime(text: str) -> str:
    rows = [line.split(",") for line in text.strip().splitlines()]
    assert rows[0][5] == "runtime_seconds"
    return "\n".join(",".join(r[:5] + r[6:]) for r in rows)


def test_minimal_config_defaults():
    cfg = hns.parse_config(MINIMAL)
    assert cfg.model.kind == "harmonic"
    assert cfg.state.hbar == 0.2
    assert cfg.grid.points == (4096,)
    assert cfg.grid.lo == (-2.0 * math.pi,)
    assert cfg.propagator.theta_mode == "frozen"
    assert cfg.propagator.steps_per_unit == 1000
    assert cfg.time.t == 1.0
    assert cfg.reference.kind == "auto"
    assert cfg.hbar_ladder is None
    assert cfg.seed == 0
    assert cfg.jitter == 0.0


@pytest.mark.parametrize("snippet,needle", [
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\nbogus: 1", "bogus"),
    ("model: {kind: harmonic, vibe: 3}\nstate: {hbar: 0.2}", "vibe"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2, sparkle: 1}", "sparkle"),
    ("model: {kind: harmonic}\nstate: {hbar: -0.1}", "hbar"),
    ("model: {kind: warped}\nstate: {hbar: 0.2}", "warped"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\nhbar_ladder: [0.1, 0.2]",
     "ladder"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\n"
     "propagator: {theta_scale: 2.0}", "theta_scale"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\ntime: {t: 0.0}", "time.t"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\n"
     "time: {t: 1.0, sample_times: [0.5, 0.4]}", "sample_times"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\n"
     "ehrenfest: {threshold: 0.0}", "threshold"),
    ("model: {kind: harmonic}\nstate: {hbar: 0.2}\ngrid: {points: 1}",
     "points"),
])
def test_bad_configs_are_rejected(snippet, needle):
    with pytest.raises(ConfigError) as err:
        hns.parse_config(snippet)
    assert needle in str(err.value)


@settings(max_examples=20, deadline=None)
@given(name=st.text(alphabet="abcdefghij_", min_size=1, max_size=12))
def test_unknown_top_level_keys_always_rejected(name):
    known = {"model", "state", "grid", "propagator", "quadrature", "time",
             "reference", "ehrenfest", "phase_b", "kernel", "output",
             "hbar_ladder", "seed", "jitter"}
    if name in known:
        return
    with pytest.raises(ConfigError):
        hns.parse_config(MINIMAL + f"\n{name}: 1\n")


def test_committed_configs_parse():
    paths = sorted(CONFIG_DIR.glob("*.yaml"))
    assert len(paths) >= 5
    for path in paths:
        cfg = hns.load_config_file(path)
        assert cfg.state.hbar > 0


def test_phase_b_inherits_when_unset():
    cfg = hns.parse_config(MINIMAL + "phase_b: {gamma_scale: 2.0}\n")
    assert cfg.phase_b.gamma_scale == 2.0
    assert cfg.phase_b.theta_mode is None


def test_error_table_contracts(tmp_path):
    rows = (
        ErrorRow(hbar=0.1, t=1.0, l2_error=0.5, hk_norm=1.0,
                 runtime_seconds=2.0, node_count=10),
        ErrorRow(hbar=0.05, t=1.0, l2_error=0.25, hk_norm=1.0,
                 runtime_seconds=2.0, node_count=20),
    )
    table = ErrorTable(rows)
    path = tmp_path / "errors.csv"
    table.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ("schema_version,hbar,t,l2_error,hk_norm,"
                        "runtime_seconds,node_count")
    assert lines[1].startswith("hkprop-errors-1,")
    assert len(lines) == 3

    with pytest.raises(ValueError):
        ErrorTable(rows + (rows[0],))  # duplicate (hbar, t)
    with pytest.raises(ValueError):
        ErrorTable((ErrorRow(hbar=0.1, t=1.0, l2_error=-1.0, hk_norm=1.0,
                             runtime_seconds=0.0, node_count=1),))


def test_fit_slope_recovers_exact_power_law():
    points = [(h, 0.7 * h) for h in (0.2, 0.1, 0.05, 0.025)]
    slope, intercept, residuals = _fit_slope(points)
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert math.exp(intercept) == pytest.approx(0.7, rel=1e-12)
    assert max(abs(r) for r in residuals) <= 1e-12


def test_reference_cross_check_passes():
    cfg = hns.parse_config(MINIMAL)
    result = hns.reference_cross_check(cfg)
    assert result["l2_difference"] <= 1e-6


def test_propagate_run_is_deterministic(tmp_path):
    cfg = hns.parse_config(PROPAGATE)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    summary_a = hns.run_propagate(cfg, out_dir=out_a)
    summary_b = hns.run_propagate(cfg, out_dir=out_b)

    text_a = (out_a / "errors.csv").read_text()
    text_b = (out_b / "errors.csv").read_text()
    assert _strip_runtime(text_a) == _strip_runtime(text_b)
    assert summary_a["rows"][0]["l2_error"] == summary_b["rows"][0]["l2_error"]
    assert summary_a["rows"][0]["l2_error"] <= 1e-6  # harmonic is exact

    dump = out_a / "hk_000.csv"
    assert dump.exists() and (out_a / "ref_000.csv").exists()
    import hkprop as hk
    psi = hk.wavefunction_from_csv(dump)
    assert psi.hbar == 0.2

    with open(out_a / "summary.json", encoding="utf-8") as fh:
        blob = json.load(fh)
    assert blob["command"] == "propagate"
    assert blob["reference_cross_check"]["l2_difference"] <= 1e-6


def test_scaling_study_worker_invariance(tmp_path):
    cfg = hns.parse_config(SCALING)
    out_one = tmp_path / "w1"
    out_two = tmp_path / "w2"
    s1 = hns.run_scaling_study(cfg, workers=1, out_dir=out_one)
    s2 = hns.run_scaling_study(cfg, workers=2, out_dir=out_two)
    assert _strip_runtime((out_one / "errors.csv").read_text()) == \
        _strip_runtime((out_two / "errors.csv").read_text())
    assert s1["points"] == s2["points"]
    assert s1["monotone_decreasing"] == s2["monotone_decreasing"]


def test_scaling_requires_ladder(tmp_path):
    cfg = hns.parse_config(MINIMAL)
    with pytest.raises(ConfigError):
        hns.run_scaling_study(cfg, out_dir=tmp_path)


def test_ehrenfest_no_crossing_below_threshold(tmp_path):
    cfg = hns.parse_config(EHRENFEST)
    summary = hns.run_ehrenfest(cfg, out_dir=tmp_path)
    assert [c["status"] for c in summary["crossings"]] == \
        ["no crossing within horizon"] * 3
    assert all(c["t_star"] is None for c in summary["crossings"])
    assert summary["growth"]["nondecreasing"] is True
    assert summary["growth"]["c_fit"] is None
    assert summary["growth"]["delta_estimate"] == pytest.approx(1.0, rel=1e-3)

    lines = (tmp_path / "crossings.csv").read_text().strip().splitlines()
    assert lines[0] == "schema_version,hbar,t_star,status"
    assert lines[1].split(",")[0] == "hkprop-crossings-1"
    assert len(lines) == 4


def test_ehrenfest_rejects_incommensurate_sampling():
    # 0.333 * 200 steps per unit is not an integer step count per segment
    cfg = hns.parse_config(EHRENFEST.replace("dt: 0.5", "dt: 0.333"))
    with pytest.raises(ConfigError):
        hns.run_ehrenfest(cfg)


def test_inspect_kernel_tracks_the_flow(tmp_path):
    cfg = hns.parse_config(KERNEL)
    summary = hns.run_inspect_kernel(cfg, out_dir=tmp_path)
    assert summary["monotone_decay"] is True
    assert summary["peak_tracks_flow"] is True
    assert summary["max_peak_distance_sqrt_hbar"] <= 1.0
    assert summary["off_graph_mass_fraction"] <= 1e-3

    decay = (tmp_path / "decay.csv").read_text().strip().splitlines()
    assert decay[0].split(",")[0] == "schema_version"
    assert decay[1].split(",")[0] == "hkprop-decay-1"
    peaks = (tmp_path / "peaks.csv").read_text().strip().splitlines()
    assert peaks[1].split(",")[0] == "hkprop-kernel-peaks-1"


def test_inspect_kernel_requires_centers(tmp_path):
    cfg = hns.parse_config(MINIMAL)
    with pytest.raises(ConfigError):
        hns.run_inspect_kernel(cfg, out_dir=tmp_path)


def test_cli_propagate_round_trip(tmp_path, capsys):
    config_path = tmp_path / "propagate.yaml"
    config_path.write_text(PROPAGATE)
    out = tmp_path / "out"
    code = hns.main(["propagate", "--config", str(config_path),
                     "--out", str(out), "--seed", "7"])
    assert code == 0
    printed = capsys.readouterr().out
    assert "propagate" in printed
    with open(out / "summary.json", encoding="utf-8") as fh:
        blob = json.load(fh)
    assert blob["config"]["seed"] == 7


def test_cli_reports_config_errors(tmp_path, capsys):
    config_path = tmp_path / "bad.yaml"
    config_path.write_text("model: {kind: nonsense}\nstate: {hbar: 0.1}\n")
    code = hns.main(["propagate", "--config", str(config_path),
                     "--out", str(tmp_path / "out")])
    assert code == 2
    assert "nonsense" in capsys.readouterr().err


def test_cli_scaling_without_ladder_fails(tmp_path, capsys):
    config_path = tmp_path / "min.yaml"
    config_path.write_text(MINIMAL)
    code = hns.main(["scaling", "--config", str(config_path),
                     "--out", str(tmp_path / "out")])
    assert code == 2
    assert "ladder" in capsys.readouterr().err

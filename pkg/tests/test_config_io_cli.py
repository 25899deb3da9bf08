import time

import numpy as np
import pytest

from pff.app import run_config
from pff.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, main
from pff.config import PRESETS, load_config, preset_config
from pff.errors import ConfigurationError
from pff.io import HISTORY_HEADER, read_history_csv, read_vtk_counts, write_fields_vtk, write_history_csv
from pff.presets import boundary_conditions, build_problem
from pff.solver import StepRecord


def _elastic_rectangle(steps=3):
    cfg = preset_config("rectangle")
    cfg.geometry.nx = cfg.geometry.ny = 4
    cfg.material.Gc = 1e12
    cfg.solver.max_steps = steps
    cfg.solver.stop_load_ratio = 0.0
    cfg.output.vtk_every = 1
    return cfg


# presets


def test_sent_preset_values():
    cfg = load_config('[geometry]\npreset = "SENT"\n')
    m, s = cfg.material, cfg.solver
    assert m.lame_lambda == pytest.approx(121154.0)  # 121.154 GPa in MPa
    assert m.shear_mu == pytest.approx(80769.0)
    assert m.Gc == pytest.approx(2.7)  # 2700 N/m in N/mm
    assert m.length_l == pytest.approx(0.02)
    assert cfg.amr.phi_threshold == 0.2
    assert s.dtau_max == pytest.approx(0.025)
    assert m.split == "nosplit"
    assert s.stepsize == pytest.approx(1e-4)
    assert m.degradation == "quadratic"


def test_tbt_preset_values():
    cfg = preset_config("TBT")
    g, m, s = cfg.geometry, cfg.material, cfg.solver
    assert (m.lame_lambda, m.shear_mu, m.Gc, m.length_l) == (0.0, 50.0, 1.0, 0.25)
    assert s.dtau_max == pytest.approx(0.0125)
    assert s.stepsize == pytest.approx(1e-2)
    assert m.split == "nosplit"
    assert (g.length, g.width_fixed, g.width_loaded) == (5.0, 0.75, 2.0)
    assert (g.nx, g.ny) == (40, 8)


def test_sens_preset_values_and_boundary():
    cfg = preset_config("sens")
    assert cfg.material.split == "rankine"
    assert cfg.amr.phi_threshold == 0.1
    assert cfg.solver.stepsize == pytest.approx(5e-4)
    assert cfg.solver.dtau_max == pytest.approx(0.025)
    bcs = {(b.tag, b.component): b.kind for b in boundary_conditions(cfg)}
    assert bcs[("bottom", "x")] == bcs[("bottom", "y")] == "fixed"
    assert bcs[("left", "y")] == bcs[("right", "y")] == "fixed"
    assert bcs[("top", "x")] == "driven"
    assert ("left", "x") not in bcs and ("right", "x") not in bcs


def test_eh_preset_values():
    cfg = preset_config("eh")
    g = cfg.geometry
    assert (g.hole_radius, g.hole_x, g.hole_y) == (0.2, 0.6, 0.0)
    assert cfg.amr.phi_threshold == 0.2
    assert cfg.solver.dtau_max == pytest.approx(0.05)
    assert cfg.solver.stepsize == pytest.approx(1e-4)
    assert cfg.material.Gc == pytest.approx(2.7)
    assert cfg.material.split == "rankine"


def test_sent_boundary():
    bcs = {(b.tag, b.component): b.kind for b in boundary_conditions(preset_config("sent"))}
    assert bcs == {("bottom", "x"): "fixed", ("bottom", "y"): "fixed", ("top", "y"): "driven", ("top", "x"): "fixed"}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_runs_three_steps_quickly(name):
    cfg = preset_config(name)
    cfg.solver.max_steps = 3
    t0 = time.perf_counter()
    result = run_config(cfg)
    assert time.perf_counter() - t0 < 10.0
    assert result.status == "completed"
    assert len(result.history) == 3
    assert all(r.mode == "displacement" for r in result.history)


# parsing and validation


def test_units_are_converted():
    text = """
[material]
lame_lambda = 121.154 GPa
shear_mu = 80769 MPa
Gc = 2700 N/m
length_l = 20 um
[solver]
stepsize = 0.1 um
dtau_max = 25 mJ
"""
    cfg = load_config(text, preset="sent")
    m = cfg.material
    assert m.lame_lambda == pytest.approx(121154.0)
    assert m.shear_mu == pytest.approx(80769.0)
    assert m.Gc == pytest.approx(2.7)
    assert m.length_l == pytest.approx(0.02)
    assert cfg.solver.stepsize == pytest.approx(1e-4)
    assert cfg.solver.dtau_max == pytest.approx(25.0)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[material]\nbogus = 1\n", "unknown key material.bogus"),
        ("[plotting]\nx = 1\n", "unknown section [plotting]"),
        ("[material]\nGc = 2700 Pa\n", "material.Gc expects a toughness"),
        ("[material]\nGc = 1 furlong\n", "unknown unit"),
        ("[material]\nGc = lots\n", "expects a number"),
        ("[geometry]\nnx = 3.5\n", "expects an integer"),
        ("[amr]\nenabled = maybe\n", "expects a boolean"),
        ("[material]\nGc = -1\n", "material.Gc: must be > 0"),
        ("[material]\ncubic_s = 1.5\n", "material.cubic_s: must be in (0, 1]"),
        ("[amr]\nphi_threshold = 1\n", "amr.phi_threshold"),
        ("[solver]\ntype = explicit\n", "solver.type"),
        ("[geometry]\npreset = cantilever\n", "unknown preset"),
    ],
)
def test_config_errors_name_the_key(text, fragment):
    with pytest.raises(ConfigurationError, match=None) as info:
        load_config(text)
    assert fragment in str(info.value)


def test_parse_error_reports_line():
    with pytest.raises(ConfigurationError, match="line 4"):
        load_config("[geometry]\npreset = sent\n[material]\nthis is not a key value pair\n")
    with pytest.raises(ConfigurationError, match="line 1"):
        load_config("stray = 1\n")


def test_override_applies_and_validates():
    cfg = preset_config("sent")
    cfg.set("solver.type", "staggered")
    cfg.set("material.Gc", "1000 N/m")
    assert cfg.solver.type == "staggered"
    assert cfg.material.Gc == pytest.approx(1.0)
    with pytest.raises(ConfigurationError, match="section.key"):
        cfg.set("Gc", "1")
    with pytest.raises(ConfigurationError, match="solver.optiter"):
        cfg.set("solver.optiter", "0")


def test_no_relax_solver_type_disables_relaxation():
    cfg = preset_config("tbt")
    assert build_problem(cfg).controller.relax
    cfg.solver.type = "monolithic-no-relax"
    assert not build_problem(cfg).controller.relax


# CSV output


def test_empty_history_is_header_only(tmp_path):
    path = tmp_path / "h.csv"
    write_history_csv([], path)
    assert path.read_bytes() == (",".join(HISTORY_HEADER) + "\n").encode()


def test_history_row_format(tmp_path):
    rec = StepRecord(1, 0.1, 2.5, 0.0, 3, 1.0, 0.0, "displacement", 42)
    path = tmp_path / "h.csv"
    write_history_csv([rec], path)
    lines = path.read_text().split("\n")
    assert lines[0] == "step,lambda_mm,load_N,delta_G,iterations,beta,delta_tau,mode,ndof"
    assert lines[1] == "1,0.1,2.5,0.0,3,1.0,0.0,displacement,42"
    assert lines[2] == ""


def test_history_write_error_has_path(tmp_path):
    target = tmp_path / "missing" / "h.csv"
    with pytest.raises(OSError, match="missing"):
        write_history_csv([], target)


def test_elastic_run_is_proportional(tmp_path):
    result = run_config(_elastic_rectangle(), tmp_path)
    h = read_history_csv(tmp_path / "history.csv")
    assert len(h["step"]) == 3
    ratio = h["load_N"] / h["lambda_mm"]
    assert np.all(np.abs(ratio / ratio[0] - 1.0) <= 1e-8)
    assert np.all(np.diff(h["lambda_mm"]) > 0)
    assert result.status == "completed"


def test_csv_is_deterministic(tmp_path):
    cfg = preset_config("tbt")
    cfg.solver.max_steps = 5
    run_config(cfg, tmp_path / "a")
    run_config(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()


# VTK output


def test_vtk_counts_and_zero_phase(tmp_path):
    run_config(_elastic_rectangle(), tmp_path)
    path = tmp_path / "step_0003.vtk"
    counts = read_vtk_counts(path)
    cfg = _elastic_rectangle()
    mesh = build_problem(cfg).mesh
    assert counts == {"points": mesh.n_nodes, "cells": len(mesh.active_ids)}
    lines = path.read_text().splitlines()
    start = lines.index("SCALARS phi double 1") + 2
    phi = np.array(lines[start : start + mesh.n_nodes], dtype=float)
    assert phi.shape == (mesh.n_nodes,)
    assert np.all(phi >= 0.0) and np.all(phi < 1e-9)


def test_vtk_refined_mesh_geometry_only(tmp_path):
    mesh = build_problem(preset_config("sent")).mesh
    write_fields_vtk(mesh, None, tmp_path / "m.vtk")
    counts = read_vtk_counts(tmp_path / "m.vtk")
    assert counts == {"points": mesh.n_nodes, "cells": len(mesh.active_ids)}
    text = (tmp_path / "m.vtk").read_text()
    assert "SCALARS level int 1" in text and "POINT_DATA" not in text


# command line


def test_cli_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--preset", "tbt", "--set", "solver.max_steps=12", "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "history.csv").exists()
    assert (out / "step_0010.vtk").exists() and (out / "step_0012.vtk").exists()
    assert len(read_history_csv(out / "history.csv")["step"]) == 12


def test_cli_staggered_plumbing(tmp_path):
    out = tmp_path / "out"
    code = main(
        ["run", "--preset", "tbt", "--set", "solver.type=staggered", "--set", "solver.max_steps=4", "--out", str(out)]
    )
    assert code == EXIT_OK
    h = read_history_csv(out / "history.csv")
    assert len(h["step"]) == 4
    assert set(h["mode"]) == {"displacement"}


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[geometry]\npreset = rectangle\nnx = 2\nny = 2\n[solver]\nmax_steps = 2\n[output]\nwrite_vtk = no\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert not list(out.glob("*.vtk"))
    assert len(read_history_csv(out / "history.csv")["step"]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--config", "missing.cfg"],
        ["run", "--preset", "sent", "--set", "solver.bogus=1"],
        ["run", "--preset", "sent", "--set", "novalue"],
        ["run"],
    ],
)
def test_cli_config_errors(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_cli_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PFF_THREADS", "many")
    assert main(["run", "--preset", "rectangle", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_abort_flushes_history(tmp_path, capsys):
    out = tmp_path / "out"
    argv = ["run", "--preset", "rectangle", "--set", "geometry.nx=2", "--set", "geometry.ny=2",
            "--set", "solver.max_iter=1", "--set", "solver.tol=1e-30", "--out", str(out)]
    assert main(argv) == EXIT_ABORT
    assert "aborted" in capsys.readouterr().err
    assert (out / "history.csv").read_text().startswith("step,lambda_mm")


def test_cli_thread_limit(tmp_path, monkeypatch):
    monkeypatch.setenv("PFF_THREADS", "1")
    argv = ["run", "--preset", "rectangle", "--set", "solver.max_steps=2", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK


def test_component_constraints_surface_as_config_errors():
    cfg = preset_config("rectangle")
    cfg.material.degradation = "rational"
    cfg.material.rational_p = 1.0
    with pytest.raises(ConfigurationError, match="p"):
        build_problem(cfg)

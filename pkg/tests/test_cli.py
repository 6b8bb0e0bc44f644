"""Configuration parsing, cost-model/order arithmetic, and the command-line
subcommands (run / converge / bench / mesh-dump) end to end on small meshes."""

import json

import numpy as np
import pytest

from axlandau.cli import (
    ConfigError,
    CostModelFit,
    cmd_bench,
    cmd_converge,
    cmd_mesh_dump,
    cmd_run,
    fit_cost_model,
    load_config,
    main,
    observed_orders,
    parse_grids,
    richardson_errors,
)


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


BASE_CONFIG = {
    "domain": {"L": 2.0},
    "mesh": {"type": "cartesian", "nr": 4, "nz": 8},
    "species": [
        {"name": "e", "mass": 1.0, "charge": -1.0, "temperature": 0.2, "shift": -0.5},
    ],
    "dt": 0.1,
    "t_end": 0.2,
    "max_newton": 2,
    "vtk_every": 2,
}


# ---------------------------------------------------------------------------
# load_config
# ---------------------------------------------------------------------------


def test_load_config_defaults_and_overrides(tmp_path):
    cfg = load_config(write_config(tmp_path, BASE_CONFIG))
    assert cfg.L == 2.0 and cfg.mesh_type == "cartesian"
    assert (cfg.nr, cfg.nz) == (4, 8)
    assert cfg.dt == 0.1 and cfg.t_end == 0.2 and cfg.max_newton == 2
    assert cfg.newton_tol == 1e-10  # default
    assert cfg.species[0].name == "e" and cfg.species[0].shift == -0.5


def test_load_config_adaptive_mesh(tmp_path):
    data = dict(BASE_CONFIG, mesh={"type": "adaptive", "levels": 3, "base": [4, 8]})
    cfg = load_config(write_config(tmp_path, data))
    assert cfg.mesh_type == "adaptive" and cfg.levels == 3 and cfg.base == (4, 8)
    mesh = cfg.build_mesh()
    assert mesh.n_cells > 32


def test_load_config_syntax_error_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"species": [\n  {nope}\n]}')
    with pytest.raises(ConfigError, match=r"line 2"):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.json")


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.update(extra=1), "unknown keys"),
        (lambda d: d.pop("species"), "species"),
        (lambda d: d.update(species=[]), "nonempty"),
        (lambda d: d["species"][0].pop("mass"), "missing required key 'mass'"),
        (lambda d: d["species"][0].update(color="red"), "unknown keys"),
        (lambda d: d["species"][0].update(temperature=-1.0), "temperature"),
        (lambda d: d.update(dt=-0.1), "out of range"),
        (lambda d: d.update(dt="soon"), "not a valid float"),
        (lambda d: d.update(max_newton=0), "out of range"),
        (lambda d: d.update(domain={"L": -2.0}), "must be positive"),
        (lambda d: d.update(mesh={"type": "hex"}), "mesh.type"),
        (lambda d: d.update(mesh={"type": "adaptive", "base": [4]}), "mesh.base"),
    ],
)
def test_load_config_rejections(tmp_path, mutate, message):
    data = json.loads(json.dumps(BASE_CONFIG))  # deep copy
    mutate(data)
    with pytest.raises(ConfigError, match=message):
        load_config(write_config(tmp_path, data))


def test_config_roundtrip_through_to_dict(tmp_path):
    cfg = load_config(write_config(tmp_path, BASE_CONFIG))
    again = write_config(tmp_path, cfg.to_dict(), name="roundtrip.json")
    cfg2 = load_config(again)
    assert cfg2.to_dict() == cfg.to_dict()


# ---------------------------------------------------------------------------
# order / fit arithmetic
# ---------------------------------------------------------------------------


def test_richardson_errors_exact_for_pure_quartic_model():
    # q_k = q + C 16^-k: the two-finest extrapolation recovers q exactly
    q, C = -0.47, 3e-3
    flux = np.array([[q + C * 16.0**-k] for k in range(4)])
    e = richardson_errors(flux)
    np.testing.assert_allclose(e[:, 0], C * 16.0 ** -np.arange(4), rtol=1e-9)


def test_observed_orders_quartic_and_cubic_models():
    q, C = 1.3, 2e-2
    quartic = np.array([[q + C * 16.0**-k] for k in range(4)])
    d, p, aggregate = observed_orders(quartic)
    np.testing.assert_allclose(p, 4.0, atol=1e-8)
    assert aggregate == pytest.approx(4.0, abs=1e-8)

    cubic = np.array([[q + C * 8.0**-k] for k in range(4)])
    d, p, aggregate = observed_orders(cubic)
    # successive-difference orders are exact even without the reference; the
    # aggregate dips slightly below 3 because the quartic-weighted reference
    # leaves a small residual in the finest error
    np.testing.assert_allclose(p, 3.0, atol=1e-8)
    assert 2.8 < aggregate < 3.5


def test_fit_cost_model_exact_three_point():
    fit = fit_cost_model([1, 2, 3], [0.21, 0.28, 0.38])
    assert fit.a == pytest.approx(0.17, abs=1e-12)
    assert fit.b == pytest.approx(0.025, abs=1e-12)
    assert fit.c == pytest.approx(0.015, abs=1e-12)
    assert fit(2) == pytest.approx(0.28, abs=1e-12)


def test_fit_cost_model_least_squares_path():
    truth = CostModelFit(a=0.5, b=0.03, c=0.01)
    s = [1, 2, 3, 5]
    fit = fit_cost_model(s, [truth(v) for v in s])
    assert (fit.a, fit.b, fit.c) == pytest.approx((0.5, 0.03, 0.01), abs=1e-10)
    with pytest.raises(ValueError):
        fit_cost_model([1, 2], [0.1, 0.2])


def test_parse_grids():
    assert parse_grids("8x16,16x32") == [(8, 16), (16, 32)]
    assert parse_grids(" 8X16 ") == [(8, 16)]
    with pytest.raises(ConfigError, match="bad grid spec"):
        parse_grids("8y16")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def test_cmd_run_time_series_and_snapshots(tmp_path):
    cfg = load_config(write_config(tmp_path, BASE_CONFIG))
    out = tmp_path / "out"
    csv_path = cmd_run(cfg, out)
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    embedded = json.loads(lines[0][len("# config: "):])
    assert embedded["mesh"] == {"type": "cartesian", "nr": 4, "nz": 8}
    assert lines[1] == "t,n_e,pz_e,E_e,qz_e,pz_drift,E_drift,entropy"
    data = [line.split(",") for line in lines[2:]]
    assert len(data) == 3  # t = 0, 0.1, 0.2
    times = [float(row[0]) for row in data]
    np.testing.assert_allclose(times, [0.0, 0.1, 0.2], atol=1e-12)
    for row in data:
        vals = np.array([float(v) for v in row])
        assert np.isfinite(vals).all()
        # single-species self-collisions keep momentum/energy roughly put even
        # at this test's very loose Newton cap (tight bounds are the job of
        # the conservation acceptance tests)
        assert abs(float(row[5])) < 1e-4 and abs(float(row[6])) < 1e-4
    assert (out / "fields_0000.vtk").exists()
    assert (out / "fields_0002.vtk").exists()  # vtk_every=2 covers the final step
    assert not (out / "fields_0001.vtk").exists()


def test_cmd_run_t_end_zero_writes_single_row(tmp_path):
    cfg = load_config(write_config(tmp_path, dict(BASE_CONFIG, t_end=0.0)))
    out = tmp_path / "out0"
    csv_path = cmd_run(cfg, out)
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 3  # header comment, column names, t=0 row
    assert (out / "fields_0000.vtk").exists()


def test_cmd_converge_csv_structure(tmp_path):
    data = dict(BASE_CONFIG, t_end=0.05, dt=0.05)
    data["species"] = [
        {"name": "e", "mass": 1.0, "charge": -1.0, "temperature": 0.2, "shift": -1.0},
        {"name": "i", "mass": 4.0, "charge": 1.0, "temperature": 0.1},
    ]
    cfg = load_config(write_config(tmp_path, data))
    out = tmp_path / "conv"
    grids = [(4, 8), (8, 16), (16, 32)]
    aggregate = cmd_converge(cfg, out, grids=grids)
    assert np.isfinite(aggregate)
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1] == "# grids: 4x8;8x16;16x32"
    assert lines[2].startswith("# aggregate_p: ")
    cols = lines[3].split(",")
    assert cols == ["t", "qz_4x8", "qz_8x16", "qz_16x32",
                    "d1", "d2", "p1", "e1", "e2", "e3"]
    rows = [line.split(",") for line in lines[4:]]
    assert len(rows) == 2  # t = 0 and t = 0.05
    assert float(lines[2].split(":")[1]) == pytest.approx(aggregate, abs=5e-6)


def test_cmd_converge_requires_three_grids(tmp_path):
    cfg = load_config(write_config(tmp_path, BASE_CONFIG))
    with pytest.raises(ConfigError, match="at least 3"):
        cmd_converge(cfg, tmp_path / "x", grids=[(4, 8), (8, 16)])


def test_cmd_bench_report_structure(tmp_path):
    data = dict(BASE_CONFIG)
    data["mesh"] = {"type": "adaptive", "levels": 2, "base": [4, 8]}
    data["bench_reps"] = 1
    cfg = load_config(write_config(tmp_path, data))
    out = tmp_path / "bench"
    report = cmd_bench(cfg, out)
    results = report["results"]
    assert [r["S"] for r in results] == [1, 2, 3]
    for r in results:
        assert r["total"] > 0 and r["kernel"] > 0 and r["model_gflops"] > 0
        assert r["coverage"] > 0.9  # component timers account for the step
    fit = report["fit"]
    for r in results:
        assert fit(r["S"]) == pytest.approx(r["total"], rel=1e-9)
    lines = (out / "bench.csv").read_text().splitlines()
    header_keys = {line.split(":")[0][2:] for line in lines if line.startswith("# ")}
    assert {"fit_a", "fit_b", "fit_c", "s0_share", "n2_ratio", "flop_model"} <= header_keys
    assert any(line.startswith("S,cells,N,") for line in lines)


def test_cmd_mesh_dump(tmp_path, capsys):
    data = dict(BASE_CONFIG, mesh={"type": "adaptive", "levels": 3, "base": [4, 8]})
    cfg = load_config(write_config(tmp_path, data))
    path = cmd_mesh_dump(cfg, tmp_path / "dump")
    assert path.name == "mesh.vtk"
    assert path.exists()
    assert "leaf cells" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# entry point and exit codes
# ---------------------------------------------------------------------------


def test_main_run_exit_zero(tmp_path):
    cfg_path = write_config(tmp_path, dict(BASE_CONFIG, t_end=0.0))
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "r")]) == 0


def test_main_converge_with_grid_flag(tmp_path, capsys):
    data = dict(BASE_CONFIG, t_end=0.05, dt=0.05)
    cfg_path = write_config(tmp_path, data)
    code = main(["converge", "--config", str(cfg_path),
                 "--out", str(tmp_path / "c"), "--grids", "4x8,8x16,16x32"])
    assert code == 0
    assert "aggregate observed order" in capsys.readouterr().out


def test_main_config_errors_exit_two(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path)]) == 2
    cfg_path = write_config(tmp_path, BASE_CONFIG)
    assert main(["converge", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--grids", "4x8,8x16"]) == 2
    assert main(["bench", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--species", "1,2"]) == 2
    assert main(["bench", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--species", "one,2,3"]) == 2
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--workers", "0"]) == 2
    capsys.readouterr()


def test_main_solver_failure_exits_three(tmp_path, capsys, monkeypatch):
    # the implicit step is hard to break with a physical configuration (the
    # frozen-coefficient update stays bounded for any dt), so inject the
    # failure to pin the StepFailure -> exit-code-3 contract
    from axlandau.solver import StepFailure

    def boom(*args, **kwargs):
        raise StepFailure(1, "injected failure")

    monkeypatch.setattr("axlandau.cli.advance", boom)
    cfg_path = write_config(tmp_path, BASE_CONFIG)
    code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "b")])
    assert code == 3
    err = capsys.readouterr().err
    assert "solver failure" in err and "step 1" in err

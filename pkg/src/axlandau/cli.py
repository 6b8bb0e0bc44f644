"""Batch command-line front-end.

Subcommands:

* ``run``       relaxation run: moments time series CSV + periodic VTK dumps
* ``converge``  nested-grid Cartesian convergence study of the thermal flux
* ``bench``     single-step performance protocol, cost-model fit, flop report
* ``mesh-dump`` write the configured mesh (+ initial fields) as VTK

Configuration is one JSON file (see `load_config` for the grammar); every
CSV artifact embeds the resolved configuration as a header comment.  Exit
codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_collision
from .fem import build_reference_element, mass_matrix, sample_state
from .kernel import flop_count, fused_sweep
from .mesh import (
    DomainSpec,
    adapt_for_species,
    cartesian_mesh,
    mesh_stats,
    write_vtk,
)
from .physics import (
    Species,
    collision_params,
    entropy,
    maxwellian_init,
    moments,
)
from .solver import StepConfig, StepFailure, advance, residual

__all__ = [
    "ConfigError",
    "RunConfig",
    "CostModelFit",
    "load_config",
    "fit_cost_model",
    "cmd_run",
    "cmd_converge",
    "cmd_bench",
    "cmd_mesh_dump",
    "main",
]

DEFAULT_GRIDS = ((8, 16), (16, 32), (32, 64), (64, 128))


class ConfigError(Exception):
    """Invalid configuration file or command-line arguments."""


@dataclass
class RunConfig:
    """Resolved run configuration (see `load_config` for the JSON grammar)."""

    L: float = 2.0
    mesh_type: str = "cartesian"  # "cartesian" | "adaptive"
    nr: int = 8
    nz: int = 16
    levels: int = 2
    base: tuple = (4, 8)
    species: list = field(default_factory=list)
    ln_lambda: float = 10.0
    dt: float = 0.1
    t_end: float = 1.0
    newton_tol: float = 1e-10
    max_newton: int = 6
    vtk_every: int = 0
    bench_reps: int = 3
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "domain": {"L": self.L},
            "mesh": (
                {"type": "cartesian", "nr": self.nr, "nz": self.nz}
                if self.mesh_type == "cartesian"
                else {"type": "adaptive", "levels": self.levels, "base": list(self.base)}
            ),
            "species": [
                {
                    "name": s.name,
                    "mass": s.mass,
                    "charge": s.charge,
                    "temperature": s.temperature,
                    "shift": s.shift,
                }
                for s in self.species
            ],
            "ln_lambda": self.ln_lambda,
            "dt": self.dt,
            "t_end": self.t_end,
            "newton_tol": self.newton_tol,
            "max_newton": self.max_newton,
            "vtk_every": self.vtk_every,
            "bench_reps": self.bench_reps,
            "workers": self.workers,
        }

    def step_config(self) -> StepConfig:
        return StepConfig(dt=self.dt, newton_tol=self.newton_tol,
                          max_newton=self.max_newton, workers=self.workers)

    def build_mesh(self):
        domain = DomainSpec(L=self.L)
        if self.mesh_type == "cartesian":
            return cartesian_mesh(domain, self.nr, self.nz)
        return adapt_for_species(domain, self.species, self.levels, base=self.base)


_SPECIES_KEYS = {"name", "mass", "charge", "temperature", "shift"}
_TOP_KEYS = {
    "domain", "mesh", "species", "ln_lambda", "dt", "t_end",
    "newton_tol", "max_newton", "vtk_every", "bench_reps", "workers",
}


def _require(cond, where, what):
    if not cond:
        raise ConfigError(f"{where}: {what}")


def load_config(path) -> RunConfig:
    """Parse and validate a JSON configuration file.

    Grammar (all keys optional except `species`)::

        {
          "domain":  {"L": 2.0},
          "mesh":    {"type": "cartesian", "nr": 8, "nz": 16}
                     or {"type": "adaptive", "levels": 2, "base": [4, 8]},
          "species": [{"name": "e", "mass": 1.0, "charge": -1.0,
                       "temperature": 0.2, "shift": 0.0}, ...],
          "ln_lambda": 10.0, "dt": 0.1, "t_end": 1.0,
          "newton_tol": 1e-10, "max_newton": 6,
          "vtk_every": 0, "bench_reps": 3, "workers": 1
        }

    Syntax errors are reported with line/column; semantic errors with the
    offending key path.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}: JSON syntax error at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from err
    _require(isinstance(raw, dict), str(path), "top level must be an object")
    unknown = set(raw) - _TOP_KEYS
    _require(not unknown, str(path), f"unknown keys {sorted(unknown)}")

    cfg = RunConfig()
    dom = raw.get("domain", {})
    _require(isinstance(dom, dict), "domain", "must be an object")
    cfg.L = float(dom.get("L", cfg.L))
    _require(cfg.L > 0, "domain.L", "must be positive")

    mesh = raw.get("mesh", {})
    _require(isinstance(mesh, dict), "mesh", "must be an object")
    cfg.mesh_type = mesh.get("type", "cartesian")
    _require(cfg.mesh_type in ("cartesian", "adaptive"), "mesh.type",
             "must be 'cartesian' or 'adaptive'")
    if cfg.mesh_type == "cartesian":
        cfg.nr = int(mesh.get("nr", cfg.nr))
        cfg.nz = int(mesh.get("nz", cfg.nz))
        _require(cfg.nr >= 1 and cfg.nz >= 1, "mesh", "nr and nz must be >= 1")
    else:
        cfg.levels = int(mesh.get("levels", cfg.levels))
        _require(cfg.levels >= 0, "mesh.levels", "must be >= 0")
        base = mesh.get("base", list(cfg.base))
        _require(
            isinstance(base, (list, tuple)) and len(base) == 2,
            "mesh.base", "must be [nr, nz]",
        )
        cfg.base = (int(base[0]), int(base[1]))

    sp_raw = raw.get("species")
    _require(isinstance(sp_raw, list) and len(sp_raw) >= 1, "species",
             "must be a nonempty list")
    cfg.species = []
    for i, item in enumerate(sp_raw):
        where = f"species[{i}]"
        _require(isinstance(item, dict), where, "must be an object")
        unknown = set(item) - _SPECIES_KEYS
        _require(not unknown, where, f"unknown keys {sorted(unknown)}")
        for key in ("mass", "charge", "temperature"):
            _require(key in item, where, f"missing required key '{key}'")
        try:
            cfg.species.append(
                Species(
                    name=str(item.get("name", f"s{i}")),
                    mass=float(item["mass"]),
                    charge=float(item["charge"]),
                    temperature=float(item["temperature"]),
                    shift=float(item.get("shift", 0.0)),
                )
            )
        except ValueError as err:
            raise ConfigError(f"{where}: {err}") from err

    for key, cast, check in (
        ("ln_lambda", float, lambda v: v > 0),
        ("dt", float, lambda v: v > 0),
        ("t_end", float, lambda v: v >= 0),
        ("newton_tol", float, lambda v: v > 0),
        ("max_newton", int, lambda v: v >= 1),
        ("vtk_every", int, lambda v: v >= 0),
        ("bench_reps", int, lambda v: v >= 1),
        ("workers", int, lambda v: v >= 1),
    ):
        if key in raw:
            try:
                value = cast(raw[key])
            except (TypeError, ValueError) as err:
                raise ConfigError(f"{key}: not a valid {cast.__name__}") from err
            _require(check(value), key, "out of range")
            setattr(cfg, key, value)
    return cfg


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _csv_header(cfg: RunConfig, extra: dict | None = None) -> list:
    lines = [f"# config: {json.dumps(cfg.to_dict())}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {v}")
    return lines


def _momentum_scale(moms, species) -> float:
    """Thermal momentum scale sqrt(2 E_tot sum(m n)) used to normalize drift."""
    mt = sum(s.mass * n for s, n in zip(species, moms.n))
    return float(np.sqrt(max(2.0 * moms.total_E * mt, 1e-300)))


def cmd_run(cfg: RunConfig, out: Path) -> Path:
    """Relaxation run: write moments.csv and fields_XXXX.vtk snapshots."""
    out.mkdir(parents=True, exist_ok=True)
    mesh = cfg.build_mesh()
    ref = build_reference_element()
    state = maxwellian_init(mesh, ref, cfg.species)
    params = collision_params(cfg.species, ln_lambda=cfg.ln_lambda)

    names = [s.name for s in cfg.species]
    cols = ["t"]
    for tag in ("n", "pz", "E", "qz"):
        cols += [f"{tag}_{nm}" for nm in names]
    cols += ["pz_drift", "E_drift", "entropy"]

    moms0 = moments(mesh, ref, state, cfg.species)
    pz0, E0 = moms0.total_pz, moms0.total_E
    pscale = _momentum_scale(moms0, cfg.species)

    def dump_fields(tag: int, st):
        nodal = mesh.prolongation @ st.coeffs.T
        fields = {f"f_{nm}": nodal[:, a] for a, nm in enumerate(names)}
        write_vtk(mesh, out / f"fields_{tag:04d}.vtk", point_data=fields)

    def row(t, moms, H):
        vals = [t, *moms.n, *moms.p_z, *moms.E, *moms.q_z,
                (moms.total_pz - pz0) / pscale,
                (moms.total_E - E0) / abs(E0) if E0 != 0 else moms.total_E,
                H]
        return ",".join(f"{v:.12g}" for v in vals)

    rows = [row(0.0, moms0, entropy(mesh, ref, state))]
    dump_fields(0, state)

    def on_step(step, t, st, moms, info):
        rows.append(row(t, moms, info["entropy"]))
        if cfg.vtk_every > 0 and step % cfg.vtk_every == 0:
            dump_fields(step, st)

    traj = advance(mesh, ref, cfg.species, state, cfg.t_end, cfg.step_config(),
                   params=params, callback=on_step)
    n_steps = len(traj) - 1
    if n_steps > 0 and not (cfg.vtk_every > 0 and n_steps % cfg.vtk_every == 0):
        dump_fields(n_steps, traj[-1][1])

    csv_path = out / "moments.csv"
    csv_path.write_text(
        "\n".join(_csv_header(cfg) + [",".join(cols)] + rows) + "\n"
    )
    return csv_path


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------


def parse_grids(text: str) -> list:
    grids = []
    for part in text.split(","):
        try:
            nr, nz = part.strip().lower().split("x")
            grids.append((int(nr), int(nz)))
        except ValueError as err:
            raise ConfigError(f"bad grid spec {part!r}; expected like '8x16'") from err
    return grids


def observed_orders(flux: np.ndarray):
    """Per-sample differences and orders from a (n_grids, n_times) flux table.

    d[k] = |q_k - q_{k+1}| at matched times; p[k] = log2(d[k]/d[k+1]); the
    aggregate order comes from the extrapolated-reference errors (see
    `richardson_errors`): least-squares slope of log2(mean_t e_k) against
    the refinement index (each grid halves h, so slope = -order).
    """
    d = np.abs(np.diff(flux, axis=0))  # (n_grids-1, n_times)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.log2(d[:-1] / d[1:])
    e = richardson_errors(flux)
    ebar = e.mean(axis=1)
    k = np.arange(len(ebar))
    slope = np.polyfit(k, np.log2(ebar), 1)[0]
    return d, p, float(-slope)


def richardson_errors(flux: np.ndarray) -> np.ndarray:
    """Errors against the Richardson-extrapolated reference flux.

    With grid spacing halved each refinement and the design order 4, the
    two finest grids give the reference q* = (16 q_fine - q_coarse) / 15;
    e_k = |q_k - q*| per time sample.  An analytic flux does not exist for
    these runs, so the extrapolated reference stands in for it.
    """
    qstar = (16.0 * flux[-1] - flux[-2]) / 15.0
    return np.abs(flux - qstar[None, :])


def cmd_converge(cfg: RunConfig, out: Path, grids=None) -> float:
    """Nested-grid study of the total z thermal flux at matched times.

    Runs the same time integration (identical dt, so samples align without
    interpolation) on each Cartesian grid and reports Richardson difference
    ratios; returns the aggregate observed order.
    """
    grids = list(grids) if grids is not None else list(DEFAULT_GRIDS)
    if len(grids) < 3:
        raise ConfigError("converge needs at least 3 nested grids")
    out.mkdir(parents=True, exist_ok=True)
    ref = build_reference_element()
    domain = DomainSpec(L=cfg.L)
    scfg = cfg.step_config()
    qz = []
    times = None
    for nr, nz in grids:
        mesh = cartesian_mesh(domain, nr, nz)
        state = maxwellian_init(mesh, ref, cfg.species)
        params = collision_params(cfg.species, ln_lambda=cfg.ln_lambda)
        traj = advance(mesh, ref, cfg.species, state, cfg.t_end, scfg, params=params)
        times = np.array([t for t, _, _ in traj])
        qz.append([m.total_qz for _, _, m in traj])
    flux = np.array(qz)  # (n_grids, n_times)

    # order statistics over the evolved samples only (the t=0 column measures
    # interpolation of the initial condition, not the solver)
    evolved = flux[:, 1:] if flux.shape[1] > 1 else flux
    d, p, aggregate = observed_orders(evolved)

    cols = ["t"] + [f"qz_{nr}x{nz}" for nr, nz in grids]
    cols += [f"d{k+1}" for k in range(len(grids) - 1)]
    cols += [f"p{k+1}" for k in range(len(grids) - 2)]
    cols += [f"e{k+1}" for k in range(len(grids))]
    rows = []
    d_full = np.abs(np.diff(flux, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        p_full = np.log2(d_full[:-1] / d_full[1:])
    e_full = richardson_errors(flux)
    for j, t in enumerate(times):
        vals = [t, *flux[:, j], *d_full[:, j], *p_full[:, j], *e_full[:, j]]
        rows.append(",".join(f"{v:.12g}" for v in vals))
    path = out / "convergence.csv"
    path.write_text(
        "\n".join(
            _csv_header(cfg, {"grids": ";".join(f"{a}x{b}" for a, b in grids),
                              "aggregate_p": f"{aggregate:.6g}"})
            + [",".join(cols)]
            + rows
        )
        + "\n"
    )
    return aggregate


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostModelFit:
    """Quadratic species cost model time(S) = a + b S + c S^2 (seconds)."""

    a: float
    b: float
    c: float

    def __call__(self, S) -> float:
        return self.a + self.b * S + self.c * S * S


def fit_cost_model(s_values, times) -> CostModelFit:
    """Fit t(S) = a + bS + cS^2; exact (3x3 solve) for three samples."""
    s = np.asarray(s_values, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(s) < 3:
        raise ValueError("cost-model fit needs at least 3 species counts")
    V = np.vander(s, 3, increasing=True)  # columns 1, S, S^2
    if len(s) == 3:
        a, b, c = np.linalg.solve(V, t)
    else:
        (a, b, c), *_ = np.linalg.lstsq(V, t, rcond=None)
    return CostModelFit(a=float(a), b=float(b), c=float(c))


def _bench_species(cfg: RunConfig, S: int) -> list:
    """S-species bench set: the configured first species plus equal-mass,
    equal-temperature partners of opposite charge."""
    lead = cfg.species[0]
    out = [lead]
    for i in range(1, S):
        out.append(Species(name=f"i{i}", mass=lead.mass, charge=-lead.charge,
                           temperature=lead.temperature, shift=0.0))
    return out


def _timed_step(mesh, ref, M, species, cfg: RunConfig):
    """One Crank-Nicolson step at the bench operating point (one Newton
    iteration: two operator assemblies, one linear solve), with component
    timers.  Returns (timers dict, N)."""
    state = maxwellian_init(mesh, ref, species)
    params = collision_params(species, ln_lambda=cfg.ln_lambda)
    dt = cfg.dt
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    data_old = sample_state(mesh, ref, state)
    t_sample = time.perf_counter() - t0
    C_old = assemble_collision(mesh, ref, data_old, params, workers=cfg.workers)

    t0 = time.perf_counter()
    data_g = sample_state(mesh, ref, state)
    t_sample += time.perf_counter() - t0
    C_g = assemble_collision(mesh, ref, data_g, params, workers=cfg.workers)

    R = residual(state, state, C_g, C_old, M, dt)
    t0 = time.perf_counter()
    for a in range(len(species)):
        A = (M - 0.5 * dt * C_g.blocks[a]).tocsc()
        state.coeffs[a] = state.coeffs[a] + spla.splu(A).solve(-R[a])
    t_solve = time.perf_counter() - t0

    total = time.perf_counter() - t_start
    timers = {
        "total": total,
        "sample": t_sample,
        "kernel": C_old.timings["kernel"] + C_g.timings["kernel"],
        "fe_transform": C_old.timings["fe_transform"] + C_g.timings["fe_transform"],
        "scatter": C_old.timings["scatter"] + C_g.timings["scatter"],
        "solve": t_solve,
    }
    return timers, data_old.N


def _n2_scaling_check(cfg: RunConfig, ref) -> dict:
    """Kernel-only wall time on two Cartesian meshes with N2 = 2 N1."""
    domain = DomainSpec(L=cfg.L)
    lead = [cfg.species[0]]
    res = {}
    for tag, (nr, nz) in (("1", (16, 32)), ("2", (32, 32))):
        mesh = cartesian_mesh(domain, nr, nz)
        state = maxwellian_init(mesh, ref, lead)
        params = collision_params(lead, ln_lambda=cfg.ln_lambda)
        data = sample_state(mesh, ref, state)
        fused_sweep(data.r[:8], data.z[:8], data, params)  # warm the JIT
        best = np.inf
        for _ in range(cfg.bench_reps):
            t0 = time.perf_counter()
            fused_sweep(data.r, data.z, data, params, eps_d=1e-14 * cfg.L)
            best = min(best, time.perf_counter() - t0)
        res[f"N{tag}"] = data.N
        res[f"t{tag}"] = best
    res["ratio"] = res["t2"] / res["t1"]
    return res


def cmd_bench(cfg: RunConfig, out: Path, s_list=(1, 2, 3)) -> dict:
    """Performance protocol: per-component timings across species counts,
    the quadratic cost-model fit, model flop rates, and the N^2 check."""
    if len(s_list) < 3:
        raise ConfigError("bench needs at least 3 species counts for the fit")
    out.mkdir(parents=True, exist_ok=True)
    ref = build_reference_element()
    mesh = adapt_for_species(DomainSpec(L=cfg.L), [cfg.species[0]], cfg.levels,
                             base=cfg.base)
    M = mass_matrix(mesh, ref)

    results = []
    for S in sorted(s_list):
        species = _bench_species(cfg, S)
        _timed_step(mesh, ref, M, species, cfg)  # warm-up (JIT, caches)
        best = None
        for _ in range(cfg.bench_reps):
            timers, N = _timed_step(mesh, ref, M, species, cfg)
            if best is None or timers["total"] < best[0]["total"]:
                best = (timers, N)
        timers, N = best
        flops = flop_count(N, S, outer_evals=2 * N)
        results.append({
            "S": S, "cells": mesh.n_cells, "N": N, **timers,
            "model_flops": flops,
            "model_gflops": flops / timers["kernel"] / 1e9,
            "coverage": (timers["sample"] + timers["kernel"] + timers["fe_transform"]
                         + timers["scatter"] + timers["solve"]) / timers["total"],
        })

    fit = fit_cost_model([r["S"] for r in results], [r["total"] for r in results])
    t_mid = next((r["total"] for r in results if r["S"] == 2), results[len(results) // 2]["total"])
    s0_share = fit.a / t_mid
    n2 = _n2_scaling_check(cfg, ref)

    cols = ["S", "cells", "N", "total", "sample", "kernel", "fe_transform",
            "scatter", "solve", "coverage", "model_flops", "model_gflops"]
    rows = [",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols)
            for r in results]
    extra = {
        "fit_a": f"{fit.a:.6g}", "fit_b": f"{fit.b:.6g}", "fit_c": f"{fit.c:.6g}",
        "s0_share": f"{s0_share:.6g}",
        "n2_N1": n2["N1"], "n2_N2": n2["N2"],
        "n2_t1": f"{n2['t1']:.6g}", "n2_t2": f"{n2['t2']:.6g}",
        "n2_ratio": f"{n2['ratio']:.6g}",
        "flop_model": "165 + 20*S^2 per point pair; rate = model_flops / kernel time",
    }
    (out / "bench.csv").write_text(
        "\n".join(_csv_header(cfg, extra) + [",".join(cols)] + rows) + "\n"
    )
    return {"fit": fit, "s0_share": s0_share, "n2": n2, "results": results}


# ---------------------------------------------------------------------------
# mesh-dump
# ---------------------------------------------------------------------------


def cmd_mesh_dump(cfg: RunConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    mesh = cfg.build_mesh()
    ref = build_reference_element()
    state = maxwellian_init(mesh, ref, cfg.species)
    nodal = mesh.prolongation @ state.coeffs.T
    fields = {f"f_{s.name}": nodal[:, a] for a, s in enumerate(cfg.species)}
    path = out / "mesh.vtk"
    write_vtk(mesh, path, point_data=fields)
    print(mesh_stats(mesh))
    return path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axlandau",
        description="Axisymmetric multi-species Landau collision solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("run", "time integration with moment/field outputs"),
        ("converge", "nested-grid convergence study"),
        ("bench", "single-step performance benchmark"),
        ("mesh-dump", "write the configured mesh as VTK"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="assembly worker threads (overrides config)")
        if name == "converge":
            p.add_argument("--grids", default=None,
                           help="comma-separated nested grids, e.g. 8x16,16x32,32x64")
        if name == "bench":
            p.add_argument("--species", default="1,2,3",
                           help="comma-separated species counts to time")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
        out = Path(args.out)
        if args.command == "run":
            cmd_run(cfg, out)
        elif args.command == "converge":
            grids = parse_grids(args.grids) if args.grids else None
            aggregate = cmd_converge(cfg, out, grids)
            print(f"aggregate observed order: {aggregate:.3f}")
        elif args.command == "bench":
            try:
                s_list = tuple(int(s) for s in args.species.split(","))
            except ValueError as err:
                raise ConfigError(f"bad --species list {args.species!r}") from err
            report = cmd_bench(cfg, out, s_list)
            fit = report["fit"]
            print(f"fit: a={fit.a:.4g} b={fit.b:.4g} c={fit.c:.4g}  "
                  f"S0 share={report['s0_share']:.1%}  "
                  f"N^2 ratio={report['n2']['ratio']:.2f}")
        elif args.command == "mesh-dump":
            cmd_mesh_dump(cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except StepFailure as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Experiment runners behind the CLI: exact, kinetic, memory, audit, sweep.

All outputs are CSV with a `#`-prefixed schema header and 17-significant-
digit floats; a JSON manifest (command, config hash, git describe, wall
time, output list) is written atomically last.  Reruns with identical
config + seed produce byte-identical CSV bodies.
"""

from __future__ import annotations

import json
import os
import subprocess
import time

import numpy as np

from . import __version__, collision, fock, hierarchy, kinetic
from ._kernels import backend as kernel_backend
from .config import ExperimentConfig
from .lattice import DispersionSpec, PotentialSpec, build_grid
from .quasifree import SampleSpec, quasifreeness_residual

SCHEMA_PREFIX = "qboltz"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, schema: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema: {SCHEMA_PREFIX}.{schema}.v1\n")
        fh.write(f"# columns: {','.join(columns)}\n")
        for row in rows:
            fh.write(",".join(fmt(x) if not isinstance(x, str) else x for x in row))
            fh.write("\n")


def write_nu_csv(path, schema: str, tag_columns, tagged_matrices) -> None:
    """CSV export of correlation matrices: tag..., row, col, re, im."""
    rows = []
    for tags, nu in tagged_matrices:
        mat = np.asarray(nu)
        for r in range(mat.shape[0]):
            for c in range(mat.shape[1]):
                rows.append((*tags, r, c, mat[r, c].real, mat[r, c].imag))
    write_csv(path, schema, [*tag_columns, "row", "col", "re", "im"], rows)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


class RunContext:
    def __init__(self, cfg: ExperimentConfig, command: str, out_dir: str):
        self.cfg = cfg
        self.command = command
        self.out_dir = out_dir
        self.outputs: list[str] = []
        self.t0 = time.monotonic()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def finish(self, status: str = "ok") -> str:
        manifest = {
            "command": self.command,
            "status": status,
            "config_path": self.cfg.path,
            "config_hash": self.cfg.config_hash(),
            "config_echo": self.cfg.echo(),
            "git_describe": _git_describe(),
            "package_version": __version__,
            "kernel_backend": kernel_backend(),
            "outputs": self.outputs,
            "wall_time_s": time.monotonic() - self.t0,
        }
        path = os.path.join(self.out_dir, "manifest.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
        return path


def build_engine(cfg: ExperimentConfig):
    """Construct grid/dispersion/potential plus collision tables from config."""
    grid, disp, pot = build_grid(
        cfg["grid.d"],
        cfg["grid.L"],
        DispersionSpec(cfg["dispersion.model"], cfg["dispersion.gamma"]),
        PotentialSpec(
            cfg["potential.kind"], cfg["potential.range"], cfg["potential.strength"]
        ),
        mode_cap=cfg["grid.mode_cap"],
    )
    eta = cfg["eta"]
    if eta == "auto":
        eta = collision.default_eta(grid, disp)
    moll = collision.MollifierSpec(cfg["mollifier.kind"], eta)
    table = collision.build_quadruple_table(grid, disp, moll, mode=cfg["kernel.mode"])
    kv = collision.kernel_table(table, pot)
    full_table = collision.build_quadruple_table(grid, disp, None, mode=cfg["kernel.mode"])
    kv_full = collision.kernel_table(full_table, pot)
    return {
        "grid": grid,
        "dispersion": disp,
        "potential": pot,
        "eta": eta,
        "mollifier": moll,
        "table": table,
        "kernel": kv,
        "full_table": full_table,
        "full_kernel": kv_full,
    }


def initial_occupations(cfg: ExperimentConfig, eng) -> np.ndarray:
    grid, disp = eng["grid"], eng["dispersion"]
    kind = cfg["initial.kind"]
    if kind == "slater":
        f = np.zeros(grid.n_modes)
        f[list(cfg["initial.modes"])] = 1.0
        return f
    if kind == "fermi-dirac":
        return kinetic.fermi_dirac_profile(grid, disp, cfg["initial.beta"], cfg["initial.mu"]).values
    return np.asarray(cfg["initial.values"], dtype=float)


def _memory_dt(cfg: ExperimentConfig, lam: float) -> float:
    dt = cfg["memory.dt"]
    return 0.05 / lam**2 if dt == "auto" else float(dt)


def _exact_state_and_h(cfg: ExperimentConfig, eng, lam: float):
    grid, disp, pot = eng["grid"], eng["dispersion"], eng["potential"]
    modes = list(cfg["initial.modes"])
    sector = fock.build_sector(grid.n_modes, len(modes))
    psi0 = fock.slater_state(sector, modes)
    H = fock.build_hamiltonian(grid, disp, pot, sector, lam)
    return psi0, H


def run_exact(cfg: ExperimentConfig, ctx: RunContext):
    eng = build_engine(cfg)
    T_end = cfg["scaling.T"]
    n_samples = cfg["exact.samples"]
    rows = []
    finals = []
    for lam in cfg["lambda"]:
        psi0, H = _exact_state_and_h(cfg, eng, lam)
        for j in range(n_samples + 1):
            T = T_end * j / n_samples
            t = T / lam**2 if lam > 0 else 0.0
            psi_t = fock.evolve(H, psi0, t)
            occ = fock.two_point_matrix(psi_t).occupations()
            for k, f in enumerate(occ):
                rows.append((lam, T, t, k, f))
        finals.append(((lam,), fock.two_point_matrix(psi_t).nu))
    write_csv(
        ctx.path("exact_occupations.csv"),
        "exact.occupations",
        ["lambda", "T", "t", "mode", "f"],
        rows,
    )
    write_nu_csv(ctx.path("exact_nu_final.csv"), "exact.nu", ["lambda"], finals)


def run_kinetic(cfg: ExperimentConfig, ctx: RunContext):
    eng = build_engine(cfg)
    grid, disp = eng["grid"], eng["dispersion"]
    stats = cfg["solver.statistics"]
    F = kinetic.OccupationFunction(grid, initial_occupations(cfg, eng), stats)
    dt = cfg["solver.dt"]
    config = kinetic.SolverConfig(
        t_end=cfg["solver.t_end"],
        dt=None if dt == "auto" else float(dt),
        method=cfg["solver.method"],
        monitor_every=cfg["solver.monitor_every"],
    )
    n_out = max(1, cfg["exact.samples"])
    seg = config.t_end / n_out
    occ_rows = [(0.0, k, v) for k, v in enumerate(F.values)]
    log_rows = []
    T_abs = 0.0
    for _ in range(n_out):
        seg_cfg = kinetic.SolverConfig(
            t_end=seg,
            dt=config.dt,
            method=config.method,
            monitor_every=config.monitor_every,
        )
        F, log = kinetic.integrate(F, eng["table"], eng["kernel"], seg_cfg)
        for row in log.rows():
            if row[0] == 0.0 and T_abs > 0.0:
                continue
            log_rows.append((row[0] + T_abs, *row[1:]))
        T_abs += seg
        occ_rows.extend((T_abs, k, v) for k, v in enumerate(F.values))
        if log.events:
            break
    write_csv(
        ctx.path("kinetic_occupations.csv"),
        "kinetic.occupations",
        ["T", "mode", "F"],
        occ_rows,
    )
    write_csv(
        ctx.path("kinetic_runlog.csv"),
        "kinetic.runlog",
        ["T", "mass", "energy", "entropy", "min_f", "max_f", "q_inf"],
        log_rows,
    )
    counts, mass = eng["table"].row_stats()
    write_csv(
        ctx.path("table_stats.csv"),
        "collision.table_stats",
        ["k1", "count", "weight_mass"],
        [(k, int(c), m) for k, (c, m) in enumerate(zip(counts, mass))],
    )


def run_memory(cfg: ExperimentConfig, ctx: RunContext):
    eng = build_engine(cfg)
    grid = eng["grid"]
    f0 = initial_occupations(cfg, eng)
    rows = []
    f_last = f0
    for lam in cfg["lambda"]:
        if lam == 0.0:
            continue
        t_end = cfg["scaling.T"] / lam**2
        dt = _memory_dt(cfg, lam)
        times, hist = hierarchy.solve_memory_equation(
            f0, lam, t_end, dt, eng["full_table"], eng["full_kernel"]
        )
        for j, t in enumerate(times):
            for k in range(grid.n_modes):
                rows.append((lam, t, lam**2 * t, k, hist[j, k]))
        f_last = hist[-1]
    write_csv(
        ctx.path("memory_occupations.csv"),
        "memory.occupations",
        ["lambda", "t", "T", "mode", "f"],
        rows,
    )
    # energy-resolved collision density on the final snapshot, for the
    # beta-symmetry audits (beta(E, p) must be even in E)
    e = eng["dispersion"].energies
    span = 2.0 * float(e.max() - e.min()) + 4.0 * eng["eta"]
    beta_rows = []
    for E in np.linspace(-span, span, 41):
        for p in range(grid.n_modes):
            b = hierarchy.collision_density(
                float(E), p, f_last, eng["full_table"], eng["full_kernel"], eng["mollifier"]
            )
            beta_rows.append((E, p, b))
    write_csv(ctx.path("memory_beta.csv"), "memory.beta", ["E", "p", "beta"], beta_rows)


def run_audit(cfg: ExperimentConfig, ctx: RunContext):
    eng = build_engine(cfg)
    spec = SampleSpec(n_tuples=cfg["audit.samples"], seed=cfg["seed"])
    rows = []
    for lam in cfg["lambda"]:
        psi0, H = _exact_state_and_h(cfg, eng, lam)
        for t in cfg["audit.times"]:
            psi_t = fock.evolve(H, psi0, t)
            report = quasifreeness_residual(psi_t, spec)
            for tuple_id, r in enumerate(report.rows):
                rows.append((t, lam, tuple_id, r.kind, r.abs_err))
    write_csv(
        ctx.path("audit_residuals.csv"),
        "audit.residuals",
        ["t", "lambda", "tuple_id", "kind", "abs_err"],
        rows,
    )


def sweep_errors(cfg: ExperimentConfig, eng) -> tuple[list, list]:
    """Per-lambda sup-norm distances between exact, Boltzmann and memory
    occupations at kinetic time scaling.T; shared by `sweep` and tests."""
    grid = eng["grid"]
    T_end = cfg["scaling.T"]
    f0 = initial_occupations(cfg, eng)
    F = kinetic.OccupationFunction(grid, f0.copy(), "fermion")
    dt = cfg["solver.dt"]
    kin_cfg = kinetic.SolverConfig(
        t_end=T_end,
        dt=None if dt == "auto" else float(dt),
        method=cfg["solver.method"],
        monitor_every=10,
    )
    F_end, _log = kinetic.integrate(F, eng["table"], eng["kernel"], kin_cfg)
    err_rows = []
    occ_rows = [("boltzmann", 0.0, k, v) for k, v in enumerate(F_end.values)]
    for lam in sorted(cfg["lambda"], reverse=True):
        t_end = T_end / lam**2
        psi0, H = _exact_state_and_h(cfg, eng, lam)
        psi_t = fock.evolve(H, psi0, t_end)
        f_exact = fock.two_point_matrix(psi_t).occupations()
        times, hist = hierarchy.solve_memory_equation(
            f0, lam, t_end, _memory_dt(cfg, lam), eng["full_table"], eng["full_kernel"]
        )
        f_mem = hist[-1]
        err_rows.append(
            (
                lam,
                float(np.max(np.abs(f_exact - F_end.values))),
                float(np.max(np.abs(f_mem - F_end.values))),
                float(np.max(np.abs(f_exact - f_mem))),
            )
        )
        occ_rows.extend(("exact", lam, k, v) for k, v in enumerate(f_exact))
        occ_rows.extend(("memory", lam, k, v) for k, v in enumerate(f_mem))
    return err_rows, occ_rows


def run_sweep(cfg: ExperimentConfig, ctx: RunContext):
    eng = build_engine(cfg)
    err_rows, occ_rows = sweep_errors(cfg, eng)
    write_csv(
        ctx.path("sweep_errors.csv"),
        "sweep.errors",
        ["lambda", "err_exact_boltzmann", "err_memory_boltzmann", "err_exact_memory"],
        err_rows,
    )
    write_csv(
        ctx.path("sweep_occupations.csv"),
        "sweep.occupations",
        ["source", "lambda", "mode", "f"],
        occ_rows,
    )


RUNNERS = {
    "exact": run_exact,
    "kinetic": run_kinetic,
    "memory": run_memory,
    "audit": run_audit,
    "sweep": run_sweep,
}

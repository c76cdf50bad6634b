"""CLI front end: configuration ingestion, parameter sweeps, the figure
regression battery, and persistent CSV/JSON outputs.

Every command writes plot-ready CSV data plus a JSON manifest; nothing
here renders plots.  Outputs are deterministic: identical config and
seed give byte-identical data files (full 17-digit round-trip floats,
fixed row order), and a dataset manifest re-ingests to the exact sweep
spec that produced it.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__ as _VERSION
from . import analytics, fermi as fermi_mod
from .dynamics import PropagatorConfig, run_cycle
from .errors import ConfigError, QstatworkError
from .protocols import (
    EngineParams,
    ExternalSystem,
    GapDirection,
    Impulse,
    SmoothPlateau,
    Statistics,
    harmonic_system,
)

ANALYTIC_CELL_CAP = 10 ** 5
NUMERICAL_CELL_CAP = 10 ** 3


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _write_csv(path, columns, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(path, payload):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

_ENGINE_KEYS = {
    "N", "Omega0", "Delta", "v", "T", "beta_c", "beta_h",
    "beta_c_E0", "beta_h_EH", "statistics", "gap_direction",
}
_COUPLING_KEYS = {"kind", "g", "t1_frac", "delta_t", "alpha_over_T"}
_SYSTEM_KEYS = {"kind", "omega_T", "omega", "dim"}
_FERMI_KEYS = {"N", "omega_trap", "beta_com_omega", "level_count"}
_SWEEP_KEYS = {"axes", "method", "out", "seed", "task"}

_ENGINE_DEFAULTS = {
    "N": 2, "Omega0": 1.0, "Delta": 0.0, "v": 0.1, "T": 20.0,
    "beta_c_E0": 2.0, "beta_h_EH": 0.25, "statistics": "bose",
    "gap_direction": "increasing",
}
_COUPLING_DEFAULTS = {"kind": "impulse", "g": 0.01, "t1_frac": 0.35,
                      "delta_t": 0.9, "alpha_over_T": 2142.0}
_SYSTEM_DEFAULTS = {"kind": "harmonic", "omega_T": 2 * math.pi * 0.05, "dim": 12}
_FERMI_DEFAULTS = {"N": 2, "omega_trap": 1.0, "beta_com_omega": 4.0}


def _check_keys(section: str, given: dict, allowed: set):
    for key in given:
        if key not in allowed:
            raise ConfigError(
                f"unknown field '{section}.{key}'; allowed: {sorted(allowed)}"
            )


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    validate_config(doc)
    return doc


def validate_config(doc: dict):
    for section in doc:
        if section not in ("engine", "coupling", "system", "sweep", "fermi"):
            raise ConfigError(f"unknown config section '{section}'")
    _check_keys("engine", doc.get("engine", {}), _ENGINE_KEYS)
    _check_keys("coupling", doc.get("coupling", {}), _COUPLING_KEYS)
    _check_keys("system", doc.get("system", {}), _SYSTEM_KEYS)
    _check_keys("fermi", doc.get("fermi", {}), _FERMI_KEYS)
    _check_keys("sweep", doc.get("sweep", {}), _SWEEP_KEYS)


def build_engine(cfg: dict) -> EngineParams:
    merged = dict(_ENGINE_DEFAULTS)
    merged.update(cfg)
    _check_keys("engine", merged, _ENGINE_KEYS)
    omega0, delta = float(merged["Omega0"]), float(merged["Delta"])
    v, T = float(merged["v"]), float(merged["T"])
    half = abs(v) * T / 2
    if GapDirection(merged["gap_direction"]) is GapDirection.INCREASING:
        omega_h = omega0 + half
    else:
        omega_h = omega0 - half
    if "beta_c" in cfg:
        beta_c = float(cfg["beta_c"])
    else:
        beta_c = float(merged["beta_c_E0"]) / math.hypot(omega0, delta)
    if "beta_h" in cfg:
        beta_h = float(cfg["beta_h"])
    else:
        beta_h = float(merged["beta_h_EH"]) / math.hypot(omega_h, delta)
    return EngineParams(
        N=int(merged["N"]), Omega0=omega0, Delta=delta, v=v, T=T,
        beta_c=beta_c, beta_h=beta_h,
        statistics=Statistics(merged["statistics"]),
        gap_direction=GapDirection(merged["gap_direction"]),
    )


def build_schedule(cfg: dict, T: float):
    merged = dict(_COUPLING_DEFAULTS)
    merged.update(cfg)
    _check_keys("coupling", merged, _COUPLING_KEYS)
    kind = merged["kind"]
    if kind == "impulse":
        return Impulse(g=float(merged["g"]), t1=float(merged["t1_frac"]) * T / 2, T=T)
    if kind == "plateau":
        return SmoothPlateau(
            g=float(merged["g"]), delta_t=float(merged["delta_t"]),
            alpha=float(merged["alpha_over_T"]) / T, T=T,
        )
    raise ConfigError(f"unknown coupling.kind '{kind}' (impulse or plateau)")


def build_system(cfg: dict, T: float) -> ExternalSystem:
    merged = dict(_SYSTEM_DEFAULTS)
    merged.update(cfg)
    _check_keys("system", merged, _SYSTEM_KEYS)
    if merged["kind"] != "harmonic":
        raise ConfigError("only system.kind = 'harmonic' is built in; construct "
                          "generic systems through the API")
    omega = float(merged["omega"]) if "omega" in cfg else float(merged["omega_T"]) / T
    return harmonic_system(omega, int(merged["dim"]))


def build_fermi(cfg: dict, engine: EngineParams) -> fermi_mod.FermiEnsemble:
    merged = dict(_FERMI_DEFAULTS)
    merged.update(cfg)
    _check_keys("fermi", merged, _FERMI_KEYS)
    omega_trap = float(merged["omega_trap"])
    return fermi_mod.FermiEnsemble(
        N=int(merged["N"]),
        omega_trap=omega_trap,
        beta_com=float(merged["beta_com_omega"]) / omega_trap,
        engine=engine,
        level_count=merged.get("level_count"),
    )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

_AXIS_SECTIONS = {"engine": _ENGINE_KEYS, "coupling": _COUPLING_KEYS,
                  "system": _SYSTEM_KEYS, "fermi": _FERMI_KEYS}


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian sweep: named axes over config fields plus fixed sections."""

    axes: tuple              # ((param, (values...)), ...)
    fixed: dict              # engine/coupling/system/fermi sections
    method: str = "analytic"
    out: str = "out-sweep"
    seed: int = 0
    task: str = "work"       # work | fermi

    def __post_init__(self):
        if self.method not in ("analytic", "numerical", "both"):
            raise ConfigError(f"unknown sweep method '{self.method}'")
        if self.task not in ("work", "fermi"):
            raise ConfigError(f"unknown sweep task '{self.task}'")
        axes = []
        for param, values in self.axes:
            section, _, fld = param.partition(".")
            if section not in _AXIS_SECTIONS or fld not in _AXIS_SECTIONS[section]:
                raise ConfigError(f"axis parameter '{param}' does not name a "
                                  "known engine/coupling/system/fermi field")
            axes.append((param, tuple(values)))
        object.__setattr__(self, "axes", tuple(axes))
        validate_config({k: v for k, v in self.fixed.items()})
        n = self.n_cells
        cap = ANALYTIC_CELL_CAP if self.method == "analytic" else NUMERICAL_CELL_CAP
        if n > cap:
            raise ConfigError(f"sweep has {n} cells, above the {self.method} cap {cap}")

    @property
    def n_cells(self) -> int:
        n = 1
        for _, values in self.axes:
            n *= len(values)
        return n

    def to_dict(self) -> dict:
        return {
            "axes": [{"param": p, "values": list(v)} for p, v in self.axes],
            "fixed": self.fixed,
            "method": self.method,
            "out": self.out,
            "seed": self.seed,
            "task": self.task,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return cls(
            axes=tuple((a["param"], tuple(a["values"])) for a in d.get("axes", [])),
            fixed=d.get("fixed", {}),
            method=d.get("method", "analytic"),
            out=d.get("out", "out-sweep"),
            seed=int(d.get("seed", 0)),
            task=d.get("task", "work"),
        )

    @classmethod
    def from_manifest(cls, manifest: dict) -> "SweepSpec":
        return cls.from_dict(manifest["spec"])


def _cell_config(spec: SweepSpec, values) -> dict:
    cfg = {k: dict(v) for k, v in spec.fixed.items()}
    for (param, _), value in zip(spec.axes, values):
        section, _, fld = param.partition(".")
        cfg.setdefault(section, {})[fld] = value
    return cfg


def _eval_work_cell(cfg: dict, method: str) -> dict:
    engine = build_engine(cfg.get("engine", {}))
    schedule = build_schedule(cfg.get("coupling", {}), engine.T)
    system = build_system(cfg.get("system", {}), engine.T)
    out = {}
    if method in ("analytic", "both"):
        ratio, rec_b, rec_d = analytics.enhancement(engine, schedule, system)
        one = replace(engine, N=1)
        w1 = (analytics.impulse_work if isinstance(schedule, Impulse)
              else analytics.general_work)(one, schedule, system, Statistics.BOSE).avg_work
        out.update(
            work_indist=rec_b.avg_work,
            work_dist=rec_d.avg_work,
            enhancement=ratio,
            sqrt_work_ratio=math.sqrt(rec_b.avg_work / w1) if w1 > 0 else math.nan,
        )
    if method in ("numerical", "both"):
        rb = run_cycle(engine, schedule, system, statistics=Statistics.BOSE)
        rd = run_cycle(engine, schedule, system, statistics=Statistics.DISTINGUISHABLE)
        out.update(
            work_indist_numeric=rb.work.avg_work,
            work_dist_numeric=rd.work.avg_work,
            enhancement_numeric=rb.work.avg_work / rd.work.avg_work,
        )
    return out


def _eval_fermi_cell(cfg: dict, method: str) -> dict:
    engine = build_engine(cfg.get("engine", {}))
    ens = build_fermi(cfg.get("fermi", {}), engine)
    lam = fermi_mod.f_N(ens)
    return {
        "lambda": lam,
        "lambda_asymptotic": fermi_mod.parity_asymptote(ens.N, ens.beta_omega),
        "method": "enumeration",
    }


def run_sweep(spec: SweepSpec, threads: int = 1, out_dir: str = None) -> dict:
    """Evaluate every cell, write <out>/data.csv and <out>/manifest.json.

    Cells evaluate independently (thread pool, deterministic row-major
    assembly); failed cells are tagged per row and count toward the exit
    status (> 1% failed is an error).
    """
    out_dir = out_dir or spec.out
    t_start = time.time()
    grids = [values for _, values in spec.axes]
    cells = list(np.ndindex(*[len(g) for g in grids])) if grids else [()]

    def eval_cell(idx):
        values = [grids[k][i] for k, i in enumerate(idx)]
        cfg = _cell_config(spec, values)
        try:
            if spec.task == "fermi":
                data = _eval_fermi_cell(cfg, spec.method)
            else:
                data = _eval_work_cell(cfg, spec.method)
            return values, data, "ok"
        except QstatworkError as exc:
            return values, {}, f"error:{type(exc).__name__}"
        except (ValueError, ArithmeticError) as exc:
            return values, {}, f"error:{type(exc).__name__}"

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(eval_cell, cells))
    else:
        results = [eval_cell(c) for c in cells]

    value_cols = []
    for _, data, status in results:
        if status == "ok":
            value_cols = list(data.keys())
            break
    columns = [p for p, _ in spec.axes] + value_cols + ["status"]
    rows = []
    n_failed = 0
    for values, data, status in results:
        if status != "ok":
            n_failed += 1
        rows.append(list(values) + [data.get(c, math.nan) for c in value_cols] + [status])
    _write_csv(os.path.join(out_dir, "data.csv"), columns, rows)
    manifest = {
        "spec": spec.to_dict(),
        "tool_version": _VERSION,
        "seed": spec.seed,
        "n_cells": len(cells),
        "n_failed": n_failed,
        "wall_time_s": time.time() - t_start,
    }
    _write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


# ---------------------------------------------------------------------------
# figure targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FigureTarget:
    id: str
    description: str
    preset: dict


def _fig2_engine(N, delta_frac, statistics=Statistics.BOSE):
    return build_engine({
        "N": N, "Omega0": 1.0, "Delta": delta_frac, "v": 0.1, "T": 20.0,
        "beta_c_E0": 2.0, "beta_h_EH": 0.25, "statistics": statistics.value,
    })


def _figure_fig2a(threads: int):
    T = 20.0
    system = harmonic_system(2 * math.pi * 0.05 / T, 10)
    schedule = Impulse(g=0.01, t1=0.35 * T / 2, T=T)
    rows, failures = [], []
    for delta_frac in (0.0, 1.4, 4.2):
        for N in range(1, 9):
            engine = _fig2_engine(N, delta_frac)
            ratio, _, _ = analytics.enhancement(engine, schedule, system)
            rb = run_cycle(engine, schedule, system, statistics=Statistics.BOSE)
            rd = run_cycle(engine, schedule, system, statistics=Statistics.DISTINGUISHABLE)
            ratio_num = rb.work.avg_work / rd.work.avg_work
            rows.append([N, delta_frac, ratio, ratio_num])
            if ratio < 1 - 1e-12:
                failures.append(f"analytic ratio {ratio} < 1 at N={N}, delta={delta_frac}")
            if N == 1 and abs(ratio - 1) > 1e-12:
                failures.append(f"N=1 ratio {ratio} != 1 at delta={delta_frac}")
            if abs(ratio_num - ratio) > 0.02 * ratio:
                failures.append(
                    f"numeric ratio {ratio_num} deviates from analytic {ratio} "
                    f"beyond 2% at N={N}, delta={delta_frac}"
                )
    return ["N", "delta_over_omega0", "E_ratio_analytic", "E_ratio_numeric"], rows, failures


def _r_squared(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - np.sum(res ** 2) / ss_tot if ss_tot > 0 else 1.0


def _figure_fig2b(threads: int):
    x_grid = np.linspace(0.25, 4.0, 16)
    rows, failures = [], []
    for x in x_grid:
        for N in range(1, 41):
            ratio = analytics.delta0_second_moment(N, float(x))
            rows.append([N, float(x), math.sqrt(ratio)])
    for x in x_grid:
        ns = [N for N in range(1, 41) if N * x <= 1.0]
        if len(ns) < 3:
            continue
        vals = [math.sqrt(analytics.delta0_second_moment(N, float(x))) for N in ns]
        r2 = _r_squared(ns, vals)
        if r2 <= 0.99:
            failures.append(f"sqrt-work fit R^2 = {r2:.4f} <= 0.99 at beta_c_E0 = {x}")
    return ["N", "beta_c_E0", "sqrt_work_ratio"], rows, failures


def _fig3_data(n_max: int = 6, dim: int = 16):
    T = 20.0
    system = harmonic_system(2 * math.pi * 0.05 / T, dim)
    schedule = SmoothPlateau(g=0.5, delta_t=0.9, alpha=2142.0 / T, T=T)
    data = []
    for N in range(1, n_max + 1):
        engine = _fig2_engine(N, 0.0)
        wb = run_cycle(engine, schedule, system, statistics=Statistics.BOSE).work.avg_work
        wd = run_cycle(engine, schedule, system, statistics=Statistics.DISTINGUISHABLE).work.avg_work
        data.append((N, wb, wd))
    return data


def _figure_fig3a(threads: int):
    data = _fig3_data()
    w1 = data[0][1]
    rows = [[N, wb, math.sqrt(wb / w1)] for N, wb, _ in data]
    failures = []
    ratios = [r[2] for r in rows]
    if not all(b > a for a, b in zip(ratios, ratios[1:])):
        failures.append(f"sqrt-work ratio not monotone increasing: {ratios}")
    return ["N", "work_indist_numeric", "sqrt_work_ratio"], rows, failures


def _figure_fig3b(threads: int):
    data = _fig3_data()
    rows = [[N, wb / wd] for N, wb, wd in data]
    failures = [
        f"numeric enhancement {r[1]} <= 1 at N={r[0]}" for r in rows[1:] if r[1] <= 1.0
    ]
    return ["N", "E_ratio_numeric"], rows, failures


def _figure_fig4(parity: str):
    engine = build_engine({
        "N": 1, "Omega0": 0.0, "Delta": 1.0, "v": 0.5, "T": 20.0,
        "beta_c_E0": 1.0, "beta_h_EH": 0.125,
    })
    n_values = (2, 4) if parity == "even" else (3, 5)
    bw_grid = np.arange(2.5, 6.01, 0.25)
    rows = fermi_mod.lambda_table(n_values, bw_grid, engine)
    failures = []
    for N, bw, lam, asym, _ in rows:
        if bw < 4.0:
            continue
        if parity == "even":
            rel = abs(lam / (8 * math.exp(-bw)) - 1)
            if rel >= 0.1:
                failures.append(f"even parity gap {rel:.3f} >= 0.1 at N={N}, bw={bw}")
        else:
            rel = abs((lam - 1) / (8 * math.exp(-2 * bw)) - 1)
            if rel >= 0.2:
                failures.append(f"odd parity gap {rel:.3f} >= 0.2 at N={N}, bw={bw}")
    return ["N", "beta_com_omega", "lambda", "lambda_asymptotic", "method"], rows, failures


def _figure_figs1(threads: int):
    base = _fig2_engine(2, 0.0)
    deltas = np.linspace(0.0, 4.0, 9)
    omts = np.linspace(0.1, 10 * math.pi, 24)
    n_values = (2, 6, 12, 20)
    region = analytics.enhancement_region(base, deltas, omts, n_values)
    rows = [[d, wt, N, enh] for d, wt, N, enh in region.rows()]
    failures = []
    idx2 = region.N_values.index(2)
    if not region.enhanced[idx2].all():
        failures.append("N=2 plane is not entirely enhanced")
    if not region.enhanced[:, 0, :].all():
        failures.append("Delta/Omega0 = 0 column is not entirely enhanced")
    idx20 = region.N_values.index(20)
    beyond_pi = region.omega_T > math.pi
    if region.enhanced[idx20][:, beyond_pi].all():
        failures.append("no non-enhanced cell found for N=20 at omega T > pi")
    return ["delta_over_omega0", "omegaT", "N", "enhanced"], rows, failures


FIGURES = {
    "fig2a": FigureTarget("fig2a", "impulse enhancement vs N for three gap mixes",
                          {"g": 0.01, "t1_frac": 0.35, "beta_c_E0": 2.0, "beta_h_EH": 0.25,
                           "delta_over_omega0": [0.0, 1.4, 4.2], "N": "1..8"}),
    "fig2b": FigureTarget("fig2b", "sqrt of work ratio over (N, beta_c E_0), Delta = 0",
                          {"beta_c_E0": "0.25..4", "N": "1..40"}),
    "fig3a": FigureTarget("fig3a", "nonperturbative work scaling, indistinguishable",
                          {"g": 0.5, "delta_t": 0.9, "alpha_over_T": 2142.0, "N": "1..6"}),
    "fig3b": FigureTarget("fig3b", "nonperturbative enhancement scaling",
                          {"g": 0.5, "delta_t": 0.9, "alpha_over_T": 2142.0, "N": "1..6"}),
    "fig4even": FigureTarget("fig4even", "fermionic parity law, even N",
                             {"Delta": 1.0, "beta_c_E0": 1.0, "beta_h_EH": 0.125}),
    "fig4odd": FigureTarget("fig4odd", "fermionic parity law, odd N",
                            {"Delta": 1.0, "beta_c_E0": 1.0, "beta_h_EH": 0.125}),
    "figS1": FigureTarget("figS1", "binary enhancement region map",
                          {"g": 0.01, "delta_t": 0.9, "alpha_over_T": 2142.0}),
}

_FIGURE_RUNNERS = {
    "fig2a": _figure_fig2a,
    "fig2b": _figure_fig2b,
    "fig3a": _figure_fig3a,
    "fig3b": _figure_fig3b,
    "fig4even": lambda threads: _figure_fig4("even"),
    "fig4odd": lambda threads: _figure_fig4("odd"),
    "figS1": _figure_figs1,
}


def run_figure(fig_id: str, out_dir: str, threads: int = 1) -> list:
    """Regenerate one figure's data CSV and run its assertions.

    Returns the list of assertion failures (empty on success).
    """
    if fig_id not in _FIGURE_RUNNERS:
        raise ConfigError(f"unknown figure id '{fig_id}'; choose from {sorted(FIGURES)}")
    t0 = time.time()
    columns, rows, failures = _FIGURE_RUNNERS[fig_id](threads)
    _write_csv(os.path.join(out_dir, "data.csv"), columns, rows)
    _write_manifest(os.path.join(out_dir, "manifest.json"), {
        "figure": fig_id,
        "description": FIGURES[fig_id].description,
        "preset": FIGURES[fig_id].preset,
        "tool_version": _VERSION,
        "n_rows": len(rows),
        "failures": failures,
        "wall_time_s": time.time() - t0,
    })
    return failures


# ---------------------------------------------------------------------------
# verify battery
# ---------------------------------------------------------------------------

def run_verify(seed: int = 0, fast: bool = False) -> list:
    """Cross-check battery: (name, passed, detail) per check."""
    rng = np.random.default_rng(seed)
    checks = []

    def direct_f(N, x):
        m = np.arange(N + 1) - N / 2
        w = np.exp(-2 * x * (m - m[0]))
        return float((m * m * w).sum() / w.sum())

    def direct_h(N, x):
        m = np.arange(N + 1) - N / 2
        w = np.exp(-2 * x * (m - m[0]))
        return float((m * w).sum() / w.sum())

    worst = 0.0
    for N in range(1, 61):
        for x in (1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 50.0):
            worst = max(worst, abs(analytics.moment_f(N, x) - direct_f(N, x)),
                        abs(analytics.moment_h(N, x) - direct_h(N, x)))
    checks.append(("moment-oracles", worst < 1e-12, f"max |closed - direct| = {worst:.2e}"))


    try:
        grid = np.geomspace(1e-3, 50.0, 10 if fast else 40)
        rep = analytics.verify_inequalities(20 if fast else 60, grid)
        draws = rng.uniform(0.01, 10.0, size=50 if fast else 10 ** 4)
        for x in draws[: 200 if fast else draws.size]:
            analytics.verify_inequalities(12, [float(x), float(x) * 1.7])
        checks.append(("inequality-battery", True,
                       f"worst margins {{{', '.join(f'{k}: {v[0]:.2e}' for k, v in rep.margins.items())}}}"))
    except QstatworkError as exc:
        checks.append(("inequality-battery", False, str(exc)))

    ok, detail = _verify_delta0_dominance(rng, n_draws=10 if fast else 50)
    checks.append(("delta0-dominance", ok, detail))

    engine = build_engine({"N": 1, "Omega0": 0.0, "Delta": 1.0, "v": 0.5, "T": 20.0,
                           "beta_c_E0": 1.0, "beta_h_EH": 0.125})
    worst_even = worst_odd = 0.0
    for N in (2, 3, 4, 5):
        for bw in (4.0, 5.0, 6.0):
            ens = fermi_mod.FermiEnsemble(N=N, omega_trap=1.0, beta_com=bw, engine=engine)
            lam = fermi_mod.f_N(ens)
            if N % 2 == 0:
                worst_even = max(worst_even, abs(lam / (8 * math.exp(-bw)) - 1))
            else:
                worst_odd = max(worst_odd, abs((lam - 1) / (8 * math.exp(-2 * bw)) - 1))
        ens_inf = fermi_mod.FermiEnsemble(N=N, omega_trap=1.0, beta_com=math.inf, engine=engine)
        if fermi_mod.f_N(ens_inf) != float(N % 2):
            checks.append(("fermi-zero-T", False, f"f_{N} at T=0 is not {N % 2}"))
            break
    else:
        checks.append(("fermi-parity", worst_even < 0.1 and worst_odd < 0.2,
                       f"even gap {worst_even:.3f} (<0.1), odd gap {worst_odd:.3f} (<0.2)"))

    if not fast:
        T = 20.0
        system = harmonic_system(2 * math.pi * 0.05 / T, 10)
        schedule = Impulse(g=0.01, t1=0.35 * T / 2, T=T)
        worst_rel = 0.0
        for N in (1, 2, 4):
            engine = _fig2_engine(N, 1.4)
            ratio, _, _ = analytics.enhancement(engine, schedule, system)
            rb = run_cycle(engine, schedule, system, statistics=Statistics.BOSE)
            rd = run_cycle(engine, schedule, system, statistics=Statistics.DISTINGUISHABLE)
            worst_rel = max(worst_rel, abs(rb.work.avg_work / rd.work.avg_work - ratio) / ratio)
        checks.append(("impulse-numeric-vs-analytic", worst_rel < 0.02,
                       f"worst relative gap {worst_rel:.2e} (< 2e-2)"))
    return checks


def random_smooth_case(rng: np.random.Generator):
    """One randomized Delta = 0 configuration for the dominance check."""
    T = float(rng.uniform(10.0, 30.0))
    n = int(rng.integers(1, 13))
    omega0 = float(rng.uniform(0.5, 2.0))
    v = float(rng.uniform(0.02, 0.2))
    beta_c = float(rng.uniform(0.2, 3.0)) / omega0
    beta_h = beta_c * float(rng.uniform(0.05, 0.8))
    engine = EngineParams(N=n, Omega0=omega0, Delta=0.0, v=v, T=T,
                          beta_c=beta_c, beta_h=beta_h)
    if rng.random() < 0.5:
        schedule = SmoothPlateau(
            g=float(rng.uniform(0.002, 0.05)),
            delta_t=float(rng.uniform(0.5, 0.92)),
            alpha=float(rng.uniform(300.0, 3000.0)) / T,
            T=T,
        )
    else:
        tt = np.linspace(0.0, T, 257)
        env = np.sin(math.pi * tt / T) ** 2 * np.sin(2 * math.pi * tt / T) ** 2
        bumps = env * (1 + 0.5 * np.sin(2 * math.pi * rng.integers(1, 4) * tt / T + rng.uniform(0, math.pi)))
        schedule = _sampled(tt, float(rng.uniform(0.002, 0.05)) * bumps / max(float((getattr(np, 'trapezoid', None) or np.trapz)(bumps, tt)), 1e-12))
    dim = int(rng.integers(3, 7))
    energies = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 3.0, size=dim - 1))])
    v_s = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    v_s = (v_s + v_s.conj().T) / 2
    system = ExternalSystem(energies=energies, V_S=v_s)
    return engine, schedule, system


def _sampled(tt, vals):
    from .protocols import Sampled

    return Sampled(times=tt, values=vals)


def _verify_delta0_dominance(rng, n_draws: int):
    worst = math.inf
    for _ in range(n_draws):
        engine, schedule, system = random_smooth_case(rng)
        for i in range(1, system.dim):
            if abs(system.matrix[i, 0]) < 1e-14:
                continue
            p_b = analytics.general_probability(engine, schedule, system, Statistics.BOSE, i)
            p_d = analytics.general_probability(engine, schedule, system, Statistics.DISTINGUISHABLE, i)
            margin = p_b - p_d
            scale = max(p_b, p_d, 1e-300)
            worst = min(worst, margin / scale)
            if margin < -1e-12 * scale:
                return False, f"p_indist < p_dist by {margin:.3e} (N={engine.N})"
    return True, f"worst normalized margin {worst:.3e} over {n_draws} draws"


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", help="JSON config document")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (QSTAT_THREADS fallback, default 1)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--method", choices=["analytic", "numerical", "both"],
                     default=None)


def _threads_of(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("QSTAT_THREADS")
    return max(1, int(env)) if env else 1


def _merged_config(args, overrides: dict) -> dict:
    cfg = load_config(args.config) if args.config else {}
    for section, vals in overrides.items():
        sec = dict(cfg.get(section, {}))
        sec.update({k: v for k, v in vals.items() if v is not None})
        if sec:
            cfg[section] = sec
    validate_config(cfg)
    return cfg


def _engine_overrides(args) -> dict:
    return {
        "N": args.N, "Omega0": args.omega0, "Delta": args.delta, "v": args.v,
        "T": args.T, "beta_c": args.beta_c, "beta_h": args.beta_h,
        "beta_c_E0": args.beta_c_e0, "beta_h_EH": args.beta_h_eh,
        "statistics": args.statistics,
    }


def _add_engine_flags(sub):
    sub.add_argument("--N", type=int)
    sub.add_argument("--omega0", type=float)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--v", type=float)
    sub.add_argument("--T", type=float)
    sub.add_argument("--beta-c", dest="beta_c", type=float)
    sub.add_argument("--beta-h", dest="beta_h", type=float)
    sub.add_argument("--beta-c-e0", dest="beta_c_e0", type=float)
    sub.add_argument("--beta-h-eh", dest="beta_h_eh", type=float)
    sub.add_argument("--statistics", choices=["bose", "distinguishable"])
    sub.add_argument("--coupling", dest="coupling_kind", choices=["impulse", "plateau"])
    sub.add_argument("--g", type=float)
    sub.add_argument("--t1-frac", dest="t1_frac", type=float)
    sub.add_argument("--delta-t", dest="delta_t", type=float)
    sub.add_argument("--alpha-over-t", dest="alpha_over_T", type=float)
    sub.add_argument("--omega-t", dest="omega_T", type=float)
    sub.add_argument("--dim", type=int)


def _coupling_overrides(args) -> dict:
    return {"kind": args.coupling_kind, "g": args.g, "t1_frac": args.t1_frac,
            "delta_t": args.delta_t, "alpha_over_T": args.alpha_over_T}


def _system_overrides(args) -> dict:
    return {"omega_T": args.omega_T, "dim": args.dim}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qstatwork",
        description="Collective work of N quantum Otto engines outcoupled to "
                    "an external system: closed-form and exact-numerical paths.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_an = subs.add_parser("analytic", help="closed-form work and enhancement")
    _add_common(p_an)
    _add_engine_flags(p_an)

    p_ev = subs.add_parser("evolve", help="exact numerical cycle")
    _add_common(p_ev)
    _add_engine_flags(p_ev)
    p_ev.add_argument("--stepper", choices=["split-midpoint", "expm-midpoint", "magnus2"])
    p_ev.add_argument("--dt", type=float)
    p_ev.add_argument("--product-mode", choices=["auto", "full", "blocked"])
    p_ev.add_argument("--trace", help="write per-step trace CSV to this path")

    p_fe = subs.add_parser("fermi", help="fermionic parity-law lambda tables")
    _add_common(p_fe)
    p_fe.add_argument("--n-values", type=int, nargs="+", default=[2, 3, 4, 5])
    p_fe.add_argument("--bw-min", type=float, default=2.5)
    p_fe.add_argument("--bw-max", type=float, default=6.0)
    p_fe.add_argument("--bw-points", type=int, default=15)

    p_rg = subs.add_parser("region", help="binary enhancement-region map")
    _add_common(p_rg)
    p_rg.add_argument("--n-values", type=int, nargs="+", default=[2, 6, 12, 20])
    p_rg.add_argument("--delta-max", type=float, default=4.0)
    p_rg.add_argument("--delta-points", type=int, default=9)
    p_rg.add_argument("--omegat-min", type=float, default=0.1)
    p_rg.add_argument("--omegat-max", type=float, default=10 * math.pi)
    p_rg.add_argument("--omegat-points", type=int, default=24)

    p_fig = subs.add_parser("figure", help="regenerate a figure dataset and assert it")
    _add_common(p_fig)
    p_fig.add_argument("id", choices=sorted(FIGURES))

    p_vf = subs.add_parser("verify", help="full oracle/inequality property battery")
    _add_common(p_vf)
    p_vf.add_argument("--fast", action="store_true", help="reduced grids")

    p_sw = subs.add_parser("sweep", help="run a sweep from a config document")
    _add_common(p_sw)
    return parser


def cli_main(argv=None) -> int:
    """Entry point; returns 0 on success, 1 on assertion/run failure, 2 on
    usage or configuration errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QstatworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    threads = _threads_of(args)
    out_dir = args.out or f"out-{args.command}"
    if args.command == "analytic":
        cfg = _merged_config(args, {
            "engine": _engine_overrides(args),
            "coupling": _coupling_overrides(args),
            "system": _system_overrides(args),
        })
        engine = build_engine(cfg.get("engine", {}))
        schedule = build_schedule(cfg.get("coupling", {}), engine.T)
        system = build_system(cfg.get("system", {}), engine.T)
        ratio, rec_b, rec_d = analytics.enhancement(engine, schedule, system)
        print(json.dumps({
            "indistinguishable": rec_b.to_dict(),
            "distinguishable": rec_d.to_dict(),
            "enhancement_ratio": ratio,
        }, indent=2))
        return 0

    if args.command == "evolve":
        cfg = _merged_config(args, {
            "engine": _engine_overrides(args),
            "coupling": _coupling_overrides(args),
            "system": _system_overrides(args),
        })
        engine = build_engine(cfg.get("engine", {}))
        schedule = build_schedule(cfg.get("coupling", {}), engine.T)
        system = build_system(cfg.get("system", {}), engine.T)
        pconf = PropagatorConfig(
            stepper=args.stepper or "split-midpoint",
            dt=args.dt,
            product_mode=args.product_mode or "auto",
            collect_trace=bool(args.trace),
        )
        result = run_cycle(engine, schedule, system, config=pconf)
        if args.trace:
            trace = result.diagnostics.get("trace", [])
            _write_csv(args.trace, ["t", "tr_rho", "leakage", "system_energy"], trace)
            result.diagnostics.pop("trace", None)
        print(json.dumps(result.to_dict(), indent=2))
        return 0

    if args.command == "fermi":
        cfg = _merged_config(args, {})
        engine = build_engine(cfg.get("engine", {
            "N": 1, "Omega0": 0.0, "Delta": 1.0, "v": 0.5, "T": 20.0,
            "beta_c_E0": 1.0, "beta_h_EH": 0.125,
        }))
        bw = np.linspace(args.bw_min, args.bw_max, args.bw_points)
        rows = fermi_mod.lambda_table(args.n_values, bw, engine)
        _write_csv(os.path.join(out_dir, "data.csv"),
                   ["N", "beta_com_omega", "lambda", "lambda_asymptotic", "method"], rows)
        _write_manifest(os.path.join(out_dir, "manifest.json"), {
            "command": "fermi", "n_values": list(args.n_values),
            "beta_com_omega": [float(b) for b in bw], "tool_version": _VERSION,
        })
        print(f"wrote {len(rows)} rows to {out_dir}/data.csv")
        return 0

    if args.command == "region":
        base = _fig2_engine(2, 0.0)
        deltas = np.linspace(0.0, args.delta_max, args.delta_points)
        omts = np.linspace(args.omegat_min, args.omegat_max, args.omegat_points)
        region = analytics.enhancement_region(base, deltas, omts, args.n_values)
        rows = [[d, wt, N, enh] for d, wt, N, enh in region.rows()]
        _write_csv(os.path.join(out_dir, "data.csv"),
                   ["delta_over_omega0", "omegaT", "N", "enhanced"], rows)
        _write_manifest(os.path.join(out_dir, "manifest.json"), {
            "command": "region", "n_values": list(args.n_values),
            "tool_version": _VERSION,
        })
        print(f"wrote {len(rows)} rows to {out_dir}/data.csv")
        return 0

    if args.command == "figure":
        failures = run_figure(args.id, out_dir, threads)
        for f in failures:
            print(f"FAIL [{args.id}] {f}")
        if not failures:
            print(f"PASS [{args.id}] data in {out_dir}/data.csv")
        return 1 if failures else 0

    if args.command == "verify":
        checks = run_verify(seed=args.seed, fast=args.fast)
        any_fail = False
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'} [{name}] {detail}")
            any_fail |= not ok
        return 1 if any_fail else 0

    if args.command == "sweep":
        if not args.config:
            raise ConfigError("sweep requires --config with a sweep section")
        cfg = load_config(args.config)
        sweep_cfg = cfg.get("sweep", {})
        spec = SweepSpec(
            axes=tuple((a["param"], tuple(a["values"]))
                       for a in sweep_cfg.get("axes", [])),
            fixed={k: v for k, v in cfg.items() if k in ("engine", "coupling", "system", "fermi")},
            method=args.method or sweep_cfg.get("method", "analytic"),
            out=args.out or sweep_cfg.get("out", "out-sweep"),
            seed=args.seed if args.seed is not None else int(sweep_cfg.get("seed", 0)),
            task=sweep_cfg.get("task", "work"),
        )
        manifest = run_sweep(spec, threads=threads, out_dir=args.out)
        frac = manifest["n_failed"] / max(1, manifest["n_cells"])
        print(f"{manifest['n_cells']} cells, {manifest['n_failed']} failed")
        return 1 if frac > 0.01 else 0

    raise ConfigError(f"unhandled command {args.command}")


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

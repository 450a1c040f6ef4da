"""Experiment dispatch, CSV outputs and the run manifest.

Every experiment writes its tables into the output directory, then a
manifest.json holding the config echo, the per-check summary and a sha256 for
each emitted file. The manifest is written last and atomically, so its
presence marks a finished run.
"""
from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import RunConfig
from .domain import BubbleParams, UniformGrid, make_bubble
from .errors import FraclapError
from .io import atomic_write_text, sha256_file, write_coeffs, write_extension_field, write_grid_function, write_rows

MANIFEST = "manifest.json"


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    detail: str = ""
    asserted: bool = True

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "asserted": bool(self.asserted),
                "value": _jsonable(self.value), "detail": self.detail}


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_time: float
    checks: list
    files: list
    results: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    threads: int = 1

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks if c["asserted"])

    @property
    def failed_checks(self) -> list:
        return [c["name"] for c in self.checks if c["asserted"] and not c["passed"]]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "wall_time_s": self.wall_time,
            "threads": self.threads,
            "passed": self.passed,
            "checks": self.checks,
            "results": _jsonable(self.results),
            "warnings": self.warnings,
            "files": self.files,
        }


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


class _Context:
    def __init__(self, cfg: RunConfig, out: Path, threads: int, dump_fields: bool):
        self.cfg = cfg
        self.p = cfg.parameters
        self.out = out
        self.threads = threads
        self.dump_fields = dump_fields
        self.files: list = []
        self.checks: list = []
        self.results: dict = {}

    def table(self, name: str, columns, rows) -> None:
        write_rows(self.out / name, columns, rows)
        self.files.append(name)

    def emit(self, name: str, writer: Callable, obj) -> None:
        writer(self.out / name, obj)
        self.files.append(name)

    def check(self, name: str, passed: bool, value=None, detail: str = "", asserted: bool = True) -> None:
        self.checks.append(Check(name, bool(passed), value, detail, asserted))


def _bubble(n: int, p: dict, g: UniformGrid):
    return make_bubble(BubbleParams(n, p["bubble_m"], p["eps"], p["delta"]), g)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


# -- experiments ---------------------------------------------------------------------------------


def _forms(ctx: _Context) -> None:
    from .fourier import INTEGER, FormOrder, gagliardo_form, q_dirichlet
    from .gap import oriented_gap
    from .navier import SineBasis, expand, q_navier

    p = ctx.p
    n = p["n"]
    g = UniformGrid.cube(n, p["half_width"], p["points"])
    u = _bubble(n, p, g)
    c = expand(u, SineBasis(g.domain, p["J"]))
    rows = []
    for m in p["m_values"]:
        ord = FormOrder.from_m(m)
        qd = q_dirichlet(u, ord, p["pad_factor"])
        qn = q_navier(c, m)
        gag = gagliardo_form(u, m) if m < 1 else float("nan")
        if ord.parity == INTEGER:
            gap = qn - qd
            tol = 1e-4 if m == 1 else 1e-3
            ctx.check(f"integer_equality_m{m:g}", _rel(qn, qd) <= tol, _rel(qn, qd), f"tolerance {tol:g}")
        else:
            gap = oriented_gap(ord, qd, qn)
            ctx.check(f"parity_m{m:g}", gap >= -1e-6 * qd, gap, "oriented gap >= -1e-6 QD")
        rows.append([m, qd, qn, gap, _rel(qn, qd), gag])
    ctx.table("forms.csv", ("m", "QD", "QN", "gap", "rel_diff", "gagliardo"), rows)
    if ctx.dump_fields:
        ctx.emit("u.csv", write_grid_function, u)


def _gap_sweep(ctx: _Context) -> None:
    from .gap import CSV_COLUMNS, gap_rate_report, gap_sweep_domain, sweep_findings

    p = ctx.p
    n = p["n"]
    g = UniformGrid.cube(n, min(p["half_widths"]), p["points"])
    u = _bubble(n, p, g)
    r = 2 * p["delta"] if p["r"] is None else p["r"]
    rows = []
    for m in p["m_values"]:
        reps = gap_sweep_domain(u, m, p["half_widths"], r, p["pad_factor"], ctx.threads)
        rows.extend(rep.row() for rep in reps)
        f = sweep_findings(reps)
        ctx.check(f"parity_m{m:g}", f["parity_ok"], detail="oriented gap >= -1e-6 QD")
        ctx.check(f"sandwich_m{m:g}", f["sandwich_ok"], f["envelope"], "0 <= gap <= envelope bound")
        ctx.check(f"bound_ratio_spread_m{m:g}", not f["bound_violation"], f["ratio_spread"], "max/min <= 10")
        rate = gap_rate_report(reps)
        ctx.check(f"gap_slope_m{m:g}", rate["consistent"], rate["slope"],
                  f"slope <= {rate['threshold']:g}", asserted=False)
        ctx.results[f"m{m:g}"] = {**f, **rate}
    ctx.table("gap_sweep.csv", CSV_COLUMNS, rows)
    if ctx.dump_fields:
        ctx.emit("u.csv", write_grid_function, u)


def _bn_problem(p: dict):
    from .ground_state import BNProblem

    return BNProblem.build(p["variant"], p["n"], p["m"], p["s"], lam=p["lambda"], lambda_frac=p["lambda_frac"],
                           half_width=p["half_width"], J=p["J"], points=p["points"])


def _bn_minimize(ctx: _Context) -> None:
    from .ground_state import SCAN_COLUMNS, minimize
    from .navier import synthesize

    p = ctx.p
    prob = _bn_problem(p)
    rep = minimize(prob, restarts=p["restarts"], seed=ctx.cfg.seed, max_iter=p["max_iter"],
                   tol_residual=p["tol_residual"], threads=ctx.threads)
    row = [prob.n, prob.m, prob.s, prob.lam, prob.variant, rep.value, rep.sobolev_ref, rep.below_sobolev,
           rep.el_residual, rep.iterations]
    ctx.table("bn_minimize.csv", SCAN_COLUMNS, [row])
    ctx.table("restarts.csv", ("restart", "value"), [[i, v] for i, v in enumerate(rep.restart_values)])
    ctx.emit("minimizer_coeffs.csv", write_coeffs, rep.minimizer)
    ctx.check("converged", rep.converged, rep.iterations)
    ctx.check("el_residual", rep.el_residual <= p["tol_residual"], rep.el_residual, f"<= {p['tol_residual']:g}")
    ctx.check("below_sobolev", rep.below_sobolev, rep.value,
              f"value < {rep.sobolev_ref:.6g} - 3 * {rep.tolerance:.3g}", asserted=False)
    ctx.check("at_most_sobolev", rep.value <= rep.sobolev_ref * 1.005, rep.value / rep.sobolev_ref,
              "value <= S_m + 0.5%", asserted=False)
    ctx.results.update({"value": rep.value, "sobolev_ref": rep.sobolev_ref, "sobolev_uncertainty": rep.tolerance,
                        "below_sobolev": rep.below_sobolev, "lambda": prob.lam, "concentration": rep.concentration,
                        "seed_index": rep.seed_index})
    if ctx.dump_fields:
        ctx.emit("minimizer.csv", write_grid_function, synthesize(rep.minimizer, prob.grid))


def _bubble_curve(ctx: _Context) -> None:
    from .ground_state import bubble_curve, sobolev_reference

    p = ctx.p
    prob = _bn_problem(p)
    curve = bubble_curve(prob, p["eps_grid"], p["delta"])
    ref = sobolev_reference(prob.n, prob.m)
    rows = [[e, q, ref.value, q < ref.value - 3 * ref.uncertainty] for e, q in curve]
    ctx.table("bubble_curve.csv", ("eps", "quotient", "sobolev_ref", "below_sobolev"), rows)
    ctx.check("finite", all(math.isfinite(q) for _, q in curve))
    best = min(q for _, q in curve)
    ctx.check("dips_below_sobolev", best < ref.value - 3 * ref.uncertainty, best, asserted=False)
    ctx.results.update({"lambda": prob.lam, "min_quotient": best, "sobolev_ref": ref.value})


def _cylinder_check(ctx: _Context) -> None:
    from .extension import (
        CylinderGrid,
        calibrated_c2,
        cylinder_navier,
        cylinder_navier_field,
        energy_direct,
        poisson_direct,
        poisson_dual,
        q_dirichlet_dual,
    )
    from .domain import laplacian_power_k
    from .fourier import q_dirichlet
    from .navier import SineBasis, expand, q_navier

    p = ctx.p
    sigma = p["sigma"]
    g = UniformGrid.cube(1, 1.0, p["points"])
    u = _bubble(1, p, g)
    grid = CylinderGrid.graded(g, sigma, p["M"])
    c2 = calibrated_c2(grid)
    w = poisson_direct(u, sigma, grid)
    qd = q_dirichlet(u, sigma, p["pad_factor"])
    qn = q_navier(expand(u, SineBasis(g.domain, p["points"] // 2)), sigma)
    md = p["dual_m"]
    grid_d = CylinderGrid.graded(g, 2.0 - md, p["M"])
    rows = [
        ("direct", c2 * energy_direct(w), qd, 0.01),
        ("navier", cylinder_navier(u, sigma, grid, c2), qn, 0.02),
        ("dual", q_dirichlet_dual(u, md, grid_d, check=False), q_dirichlet(u, md, p["pad_factor"]), 0.05),
    ]
    out = []
    for name, val, ref, tol in rows:
        err = _rel(val, ref)
        ctx.check(f"{name}_identity", err <= tol, err, f"relative error <= {tol:g}")
        out.append([name, val, ref, err, tol, err <= tol])
    ctx.table("cylinder_check.csv", ("quantity", "value", "reference", "rel_error", "tolerance", "passed"), out)
    ctx.results["c2"] = c2
    if ctx.dump_fields:
        ctx.emit("direct_field.csv", write_extension_field, w)
        ctx.emit("navier_field.csv", write_extension_field, cylinder_navier_field(u, sigma, grid))
        ctx.emit("dual_field.csv", write_extension_field, poisson_dual(laplacian_power_k(u, 1), 2.0 - md, grid_d))


def _calibrate(ctx: _Context) -> None:
    from .extension import CylinderGrid, default_witnesses, energy_direct, poisson_direct
    from .fourier import q_dirichlet

    p = ctx.p
    sigma = p["sigma"]
    g = UniformGrid.cube(1, 1.0, p["points"])
    grid = CylinderGrid.graded(g, sigma, p["M"])
    rows = []
    for i, u in enumerate(default_witnesses(g)):
        e = energy_direct(poisson_direct(u, sigma, grid))
        qd = q_dirichlet(u, sigma, p["pad_factor"])
        rows.append([i, qd, e, qd / e])
    ratios = np.array([r[3] for r in rows])
    cv = float(ratios.std() / ratios.mean())
    ctx.table("calibrate.csv", ("witness", "QD", "energy", "ratio"), rows)
    ctx.check("coefficient_of_variation", cv <= p["max_cv"], cv, f"<= {p['max_cv']:g}")
    ctx.results.update({"c2": float(ratios.mean()), "cv": cv})


def _critical_scan(ctx: _Context) -> None:
    from .ground_state import SCAN_COLUMNS, critical_scan

    p = ctx.p
    rows = critical_scan(p["n"], p["m_grid"], p["s_grid"], p["lambda_frac"], p["variant"], J=p["J"],
                         restarts=p["restarts"], seed=ctx.cfg.seed, max_iter=p["max_iter"], threads=ctx.threads)
    cols = SCAN_COLUMNS + ("noncritical", "status")
    ctx.table("critical_scan.csv", cols, [[row[k] for k in cols] for row in rows])
    failed = [f"m={r['m']:g},s={r['s']:g}" for r in rows if r["status"].startswith("failed")]
    ctx.check("all_cells_converged", not failed, len(failed), ", ".join(failed))
    ran = [r for r in rows if r["status"] == "ok"]
    ctx.results.update({
        "cells": len(rows),
        "ran": len(ran),
        "below_sobolev_noncritical": sum(1 for r in ran if r["noncritical"] and r["below_sobolev"]),
        "below_sobolev_critical": sum(1 for r in ran if not r["noncritical"] and r["below_sobolev"]),
    })


EXPERIMENTS: dict = {
    "forms": _forms,
    "gap-sweep": _gap_sweep,
    "bn-minimize": _bn_minimize,
    "bubble-curve": _bubble_curve,
    "cylinder-check": _cylinder_check,
    "calibrate": _calibrate,
    "critical-scan": _critical_scan,
}


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else FRACLAP_THREADS, else 1."""
    if threads is None:
        env = os.environ.get("FRACLAP_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return int(threads)


def run(cfg: RunConfig, threads: Optional[int] = None, dump_fields: bool = False) -> RunManifest:
    """Run the configured experiment; numerical failures are recorded, not raised."""
    threads = resolve_threads(threads)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg, out, threads, dump_fields)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            EXPERIMENTS[cfg.experiment](ctx)
        except FraclapError as exc:
            ctx.check("experiment", False, type(exc).__name__, str(exc))
    wall = time.perf_counter() - t0
    seen = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    files = [{"name": name, "sha256": sha256_file(out / name), "bytes": (out / name).stat().st_size}
             for name in ctx.files]
    manifest = RunManifest(cfg.to_dict(), __version__, wall, [c.to_dict() for c in ctx.checks], files,
                           ctx.results, seen, threads)
    atomic_write_text(out / MANIFEST, json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest


def verify_manifest(out_dir) -> bool:
    """True when every file listed in the manifest still has its recorded hash."""
    out = Path(out_dir)
    doc = json.loads((out / MANIFEST).read_text())
    return all(sha256_file(out / f["name"]) == f["sha256"] for f in doc["files"])

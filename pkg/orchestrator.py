"""
Orchestrator Module - Scenario Pipeline

Runs the stages a scenario declares, in order, against one ResultStore:
  constants -> iso -> weight -> minimize1d -> predict -> dynamics -> plots
Each stage writes a record (and usually a table); later stages read what
earlier ones stored. A failing stage leaves a failure record, the partial
store and its summary behind, then raises StageError.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from dynamics import DiskGeometry, StripGeometry, slow_motion_experiment
from gamma2 import (
    TIE_TOL,
    MinimizerGeometry,
    predict_F2,
    predict_F2_parts,
    quarter_disk_geometry,
    select_minimizer,
    strip_geometry,
)
from isoperimetry import (
    ALPHA_TOL,
    PixelDomain,
    Rectangle,
    geometric_offsets,
    iso_bruteforce,
    iso_profile_bruteforce,
    iso_profile_rectangle,
    level_set_alpha_check,
    one_sided_derivatives,
)
from plots import emit_plots
from potential import make_potential, validate_potential
from report import ValidationReport, analyze_checks, generate_check_summary
from results import ResultStore, rows_from_columns
from transition_profile import compute_constants, shift_integral, solve_profile, weighted_moment
from weight import (
    DOMINATION_TOL,
    MASS_SPLIT_TOL,
    WeightFunction,
    build_eta,
    build_touching_iso,
    smooth_touching_iso,
    solve_V,
    validate_eta,
)
from weighted1d import (
    diagnostic_window,
    extract_lambda_limit,
    extrapolate_gap,
    rescaled_profile_distance,
    run_ladder,
    solve_tau0,
    gap_limit_rhs,
)

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-6
TANH_TOL = 1e-8
KEYSTONE_TOL = 1e-6
DERIVATIVE_STEP = 1e-3


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ScenarioContext:
    name: str
    config: Dict[str, Any]
    store: ResultStore
    rng: np.random.Generator
    threads: int = 1
    objects: Dict[str, Any] = field(default_factory=dict)

    @cached_property
    def potential(self):
        return make_potential(self.config["potential"])

    @cached_property
    def profile(self):
        return solve_profile(self.potential)

    @cached_property
    def constants(self):
        return compute_constants(self.profile)

    @property
    def geometry(self) -> Dict[str, Any]:
        return self.config.get("geometry", {})

    @property
    def vm(self) -> float:
        return float(self.geometry.get("vm", 0.5))

    @property
    def n(self) -> int:
        return int(self.geometry.get("n", 2))

    def rectangle(self) -> Rectangle:
        dom = self.config.get("domain", {})
        return Rectangle(float(dom.get("width", 1.0)), float(dom.get("height", 1.0)))

    def need(self, key: str, stage: str) -> Any:
        if key not in self.objects:
            raise KeyError(f"'{key}' is produced by the {stage} stage; list it earlier in stages")
        return self.objects[key]


StageFn = Callable[[ScenarioContext], Optional[Dict[str, Any]]]
STAGES: Dict[str, StageFn] = {}


def stage(name: str):
    def register(fn: StageFn) -> StageFn:
        STAGES[name] = fn
        return fn
    return register


# ============ STAGES ============

@stage("constants")
def run_constants(ctx: ScenarioContext) -> Dict[str, Any]:
    p, prof, k = ctx.potential, ctx.profile, ctx.constants

    identities = ValidationReport(subject="profile identities")
    taus = ctx.rng.uniform(-2.0, 2.0, 5)
    shift_err = max(abs(shift_integral(prof, t) - (k.I0 - t * p.width)) for t in taus)
    moment_err = max(abs(weighted_moment(prof, t) - (k.c_sym + t * k.c_W)) for t in taus)
    identities.add("shift_integral", shift_err <= IDENTITY_TOL, value=shift_err, tol=IDENTITY_TOL)
    identities.add("weighted_moment", moment_err <= IDENTITY_TOL, value=moment_err, tol=IDENTITY_TOL)

    t = np.linspace(-8.0, 8.0, 161)
    reference = np.tanh(t) if p.name == "quartic" else [None] * t.size
    if p.name == "quartic":
        sup = float(np.max(np.abs(prof(t) - np.tanh(t))))
        identities.add("tanh_profile", sup <= TANH_TOL, value=sup, tol=TANH_TOL)
    ctx.store.write_table("profile", rows_from_columns(t=t, z=prof(t), tanh=reference))

    logger.info(f"[Solved] {p.name}: c_W={k.c_W:.12g} c_sym={k.c_sym:.3g} I0={k.I0:.12g}")
    return {
        "potential": p.describe(),
        "validation": validate_potential(p).to_dict(),
        "identities": identities.to_dict(),
        "constants": k.to_dict(),
        "T": prof.T,
        "taus": taus,
        "tol": {"identities": IDENTITY_TOL, "tanh": TANH_TOL},
    }


@stage("iso")
def run_iso(ctx: ScenarioContext) -> Dict[str, Any]:
    dom = ctx.config.get("domain", {"kind": "rectangle"})
    if dom.get("kind", "rectangle") == "pixel":
        return _iso_pixel(ctx, PixelDomain.rectangle(int(dom["rows"]), int(dom["cols"])))

    rect = ctx.rectangle()
    v0 = ctx.vm * rect.area
    vols = np.unique(np.concatenate([
        np.linspace(0.005, 0.995, 199) * rect.area,
        geometric_offsets(v0, base=DERIVATIVE_STEP),
    ]))
    profile = iso_profile_rectangle(rect, vols)
    d_minus, d_plus = one_sided_derivatives(profile, v0)
    rows = [dict(row, **rect.branches(row["vol"])) for row in profile.rows()]
    ctx.store.write_table("iso_profile", rows)
    logger.info(f"[Solved] iso profile at v={v0:.6g}: I={profile.value_at(v0):.10g} "
                f"D-={d_minus:.6g} D+={d_plus:.6g}")
    return {
        "domain": {"kind": "rectangle", "width": rect.width, "height": rect.height},
        "vol": v0,
        "value_at_vm": profile.value_at(v0),
        "branch_at_vm": rect.branch(v0),
        "D_minus": d_minus,
        "D_plus": d_plus,
        "samples": len(vols),
        # the rectangle profile is closed form; D-/D+ come from extrapolated difference quotients
        "tol": {"value": 0.0, "derivative_step": DERIVATIVE_STEP},
    }


def _iso_pixel(ctx: ScenarioContext, omega: PixelDomain) -> Dict[str, Any]:
    profile = iso_profile_bruteforce(omega, threads=ctx.threads)
    ctx.store.write_table("iso_profile", profile.rows())

    # sublevel sets of fields near the discrete minimizer stay near it
    report = ValidationReport(subject="level sets")
    h2 = omega.h ** 2
    k = max(1, min(omega.n_cells - 1, round(ctx.vm * omega.n_cells)))
    value, E0 = iso_bruteforce(omega, k * h2, threads=ctx.threads)
    a, b = ctx.potential.a, ctx.potential.b
    samples = int(ctx.config.get("alpha_samples", 200))
    violations = 0
    for _ in range(samples):
        delta = float(ctx.rng.uniform(0.0, 0.3))
        noise = ctx.rng.normal(size=omega.shape) * omega.mask
        if not noise.any():
            continue
        noise *= (b - a) * delta / (np.abs(noise).sum() * h2)
        check = level_set_alpha_check(np.where(E0.mask, a, b) + noise, E0, delta, a, b)
        violations += check.status == "fail"
    report.add("alpha_bound", violations == 0, value=violations, tol=ALPHA_TOL,
               detail=f"{samples} random fields")
    return {
        "domain": {"kind": "pixel", "rows": omega.shape[0], "cols": omega.shape[1]},
        "cells": omega.n_cells,
        "minimizer_cells": k,
        "minimizer_perimeter": value,
        "level_sets": report.to_dict(),
        "tol": {"alpha": ALPHA_TOL},
    }


@stage("weight")
def run_weight(ctx: ScenarioContext) -> Dict[str, Any]:
    w = ctx.config["weight"]
    geom, vm, n = ctx.geometry, ctx.vm, ctx.n
    source = w.get("source", "flat")
    iso = None
    if source == "flat":
        eta = WeightFunction.flat(vm)
    else:
        if source == "smooth":
            iso = smooth_touching_iso(float(geom["perimeter"]), (n - 1) * float(geom["kappa"]), vm, n,
                                      w.get("C0"), float(w.get("r", 0.05)))
        elif source == "touching":
            found = ctx.store.require("iso")
            table = ctx.store.read_table("iso_profile")
            area = ctx.rectangle().area
            reference = (np.array([r["vol"] for r in table]) / area,
                         np.array([r["value"] for r in table]))
            P0 = float(w.get("P0", found["value_at_vm"]))
            iso = build_touching_iso(
                P0,
                float(w.get("s_minus", found["D_minus"])),
                float(w.get("s_plus", found["D_plus"])),
                float(w.get("C0", P0)),
                float(w.get("r", 0.05)),
                reference, vm, n,
            )
        else:
            raise ValueError(f"unknown weight.source '{source}'")
        eta = build_eta(iso, solve_V(iso))

    if iso is not None:
        v = np.linspace(0.002, 0.998, 250)
        reference = ([None] * v.size if iso.ref_vols is None
                     else np.interp(v, iso.ref_vols, iso.ref_values))
        ctx.store.write_table("touching", rows_from_columns(v=v, touching=iso(v), reference=reference))

    ctx.objects["eta"] = eta
    return {
        "source": source,
        "vm": vm,
        "A": eta.A,
        "B": eta.B,
        "eta0": eta.eta0,
        "eta_minus": eta.eta_minus,
        "eta_plus": eta.eta_plus,
        "K": None if iso is None else iso.K,
        "constants": eta.constants,
        "validation": validate_eta(eta).to_dict(),
        "tol": {"domination": DOMINATION_TOL, "mass_split": MASS_SPLIT_TOL},
    }


@stage("minimize1d")
def run_minimize1d(ctx: ScenarioContext) -> Dict[str, Any]:
    eta = ctx.need("eta", "weight")
    p, prof, k = ctx.potential, ctx.profile, ctx.constants
    options = dict(ctx.config.get("weighted1d", {}))
    results = run_ladder(eta, p, prof, ctx.config["ladder"], c_w=k.c_W, **options)

    limit = extract_lambda_limit(results, eta, p, c_w=k.c_W)
    tau0 = solve_tau0(eta, p, prof, limit.value)
    rhs = gap_limit_rhs(eta, p, prof, limit.value, tau0)
    gap = extrapolate_gap(results)
    room = 0.9 * min(eta.t0 - eta.A, eta.B - eta.t0)
    distances = [rescaled_profile_distance(r, prof, tau0, window=min(diagnostic_window(r.eps, prof), room / r.eps))
                 for r in results]

    report = ValidationReport(subject="weighted minimizers")
    tol = options.get("tol", 1e-9)
    report.add("residual", all(r.residual <= tol for r in results),
               value=max(r.residual for r in results), tol=tol)
    locality = options.get("locality") or 0.1 * p.width
    report.add("locality", all(r.local_ok for r in results),
               value=max(r.local_distance for r in results), tol=locality)
    report.add("lambda_bracket", limit.inside, value=limit.value, tol=0.0, detail=f"bracket {limit.bracket}")
    slack = max(0.05 * abs(rhs), 1e-3 * k.c_W)
    report.add("gap_lower_bound", gap >= rhs - slack, value=gap, tol=slack, detail=f"rhs {rhs:.8g}")

    rows = [dict(r.to_dict(), rhs=rhs, distance=d) for r, d in zip(results, distances)]
    ctx.store.write_table("gap_ladder", rows)
    t = np.linspace(eta.A, eta.B, 401)
    snapshots = []
    for r in results:
        snapshots.extend(rows_from_columns(eps=[r.eps] * t.size, t=t, v=r.field.at(t)))
    ctx.store.write_table("snapshots", snapshots)

    logger.info(f"[Solved] ladder {ctx.config['ladder']}: lambda0={limit.value:.8g} "
                f"gap={gap:.8g} rhs={rhs:.8g}")
    return {
        "ladder": [r.to_dict() for r in results],
        "lambda": limit.to_dict(),
        "tau0": tau0,
        "rhs": rhs,
        "gap_extrapolated": gap,
        "distances": distances,
        "validation": report.to_dict(),
        "tol": {"newton": tol, "locality": locality, "gap": slack},
    }


def _candidates(ctx: ScenarioContext) -> List[MinimizerGeometry]:
    geom, n, vm = ctx.geometry, ctx.n, ctx.vm
    specs = geom.get("candidates")
    if not specs:
        return [MinimizerGeometry(float(geom["kappa"]), float(geom["perimeter"]), n, vm, "configured")]
    rect = ctx.rectangle()
    out = []
    for spec in specs:
        kind = spec["kind"]
        if kind == "quarter_disk":
            out.append(quarter_disk_geometry(vm * rect.area, n))
        elif kind == "strip":
            out.append(strip_geometry(rect, vm * rect.area, n))
        else:
            out.append(MinimizerGeometry(float(spec["kappa"]), float(spec["perimeter"]), int(spec.get("n", n)),
                                         spec.get("vm", vm), spec.get("label", kind)))
    return out


@stage("predict")
def run_predict(ctx: ScenarioContext) -> Dict[str, Any]:
    p, prof, k = ctx.potential, ctx.profile, ctx.constants
    candidates = _candidates(ctx)
    selection = select_minimizer(candidates, p, prof, k)

    rows = []
    for rank, i in enumerate(selection.ranking):
        quad, lin = predict_F2_parts(candidates[i], p, prof, k)
        rows.append({
            "rank": rank,
            "index": i,
            "label": candidates[i].label,
            "kappa": candidates[i].kappa,
            "perimeter": candidates[i].perimeter,
            "F2": selection.values[i],
            "quadratic": quad,
            "linear": lin,
        })
    ctx.store.write_table("predict_ranking", rows)

    data = {
        "selection": selection.to_dict(),
        "candidates": [g.to_dict() for g in candidates],
        "winner": candidates[selection.index].label,
        "F2": selection.values[selection.index],
        "tol": {"tie": TIE_TOL},
    }

    # the weighted 1D limit must reproduce the closed form for weights built from the geometry
    source = ctx.config.get("weight", {}).get("source")
    if "eta" in ctx.objects and source in ("flat", "smooth"):
        eta = ctx.objects["eta"]
        winner = candidates[selection.index]
        lam0 = 2.0 * k.c_W * (winner.n - 1) * winner.kappa / p.width
        rhs = gap_limit_rhs(eta, p, prof, lam0, solve_tau0(eta, p, prof, lam0))
        report = ValidationReport(subject="closed form vs weighted limit")
        err = abs(rhs - predict_F2(winner, p, prof, k))
        report.add("keystone", err <= KEYSTONE_TOL, value=err, tol=KEYSTONE_TOL)
        data.update(keystone=report.to_dict(), rhs=rhs)
        data["tol"]["keystone"] = KEYSTONE_TOL
    return data


@stage("dynamics")
def run_dynamics(ctx: ScenarioContext) -> Dict[str, Any]:
    d = dict(ctx.config["dynamics"])
    shape = d.pop("geometry")
    if shape["kind"] == "disk":
        E0 = DiskGeometry.with_area(float(shape["area"]))
    elif shape["kind"] == "strip":
        E0 = StripGeometry(float(shape["thickness"]))
    else:
        raise ValueError(f"unknown dynamics.geometry.kind '{shape['kind']}'")

    ladder = d.pop("ladder")
    out = slow_motion_experiment(E0, ctx.potential, ctx.profile, ladder, threads=ctx.threads, **d)

    drift = []
    for eps in sorted(out.runs, reverse=True):
        drift.extend(dict(row, eps=eps) for row in out.runs[eps].rows())
    ctx.store.write_table("drift", drift, columns=["eps", "t", "l1", "dual", "mass", "energy", "lambda"])
    ctx.store.write_table("dynamics_ladder", out.rows())
    return out.to_dict()


@stage("plots")
def run_plots(ctx: ScenarioContext) -> None:
    emit_plots(ctx.store)


# ============ ORCHESTRATION ============

class Orchestrator:
    def __init__(self, threads: int = 1):
        self.threads = threads

    def run_scenario(self, config: Dict[str, Any], out: Optional[Union[str, Path]] = None) -> ResultStore:
        """
        Execute config["stages"] in order. `config` is one merged scenario block
        as returned by cli.load_config.
        """
        name = config.get("name", "scenario")
        seed = config.get("seed", 0)
        root = Path(out) if out is not None else Path(config.get("out", "runs")) / name
        store = ResultStore(root)
        run_id = store.begin_run(config)
        ctx = ScenarioContext(name, config, store, np.random.default_rng(seed), self.threads)

        try:
            for stage_name in config["stages"]:
                if stage_name not in STAGES:
                    raise StageError(stage_name, KeyError(f"unknown stage (choose from {sorted(STAGES)})"))
                logger.info(f"[Stage] {name}: {stage_name}")
                try:
                    data = STAGES[stage_name](ctx)
                except Exception as exc:
                    logger.error(f"[Failed] {name}: {stage_name}: {exc}")
                    store.save_record(stage_name, {}, status="failed", error=f"{type(exc).__name__}: {exc}")
                    raise StageError(stage_name, exc) from exc
                if data is not None:
                    store.save_record(stage_name, data)
        finally:
            analysis = analyze_checks(store.records(run_id))
            summary = generate_check_summary(analysis, title=f"Scenario {name} (run {run_id})")
            store.write_text("SUMMARY.md", summary)
            store.write_manifest(config, seed, extra={"score": analysis["score"]})
        return store


def run_scenario(config: Dict[str, Any], out: Optional[Union[str, Path]] = None,
                 threads: int = 1) -> ResultStore:
    return Orchestrator(threads).run_scenario(config, out)

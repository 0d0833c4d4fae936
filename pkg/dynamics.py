"""
Dynamics Module

Mass-preserving Allen-Cahn and Cahn-Hilliard flows on a rectangle with
homogeneous Neumann conditions, used to measure slow motion near a
perimeter minimizer E0:
- cell-centered grid, five-point Laplacian diagonalized by the cosine transform
- stabilized semi-implicit steppers (exact discrete mass)
- L1 and (H^1)' drift from the two-phase state u_E0 over t <= M/eps
- checkpoints as flat binary arrays with a JSON header
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.fft import dctn, idctn
from scipy.optimize import brentq

from potential import Potential, extend_outside_box, max_curvature
from report import ValidationReport
from transition_profile import Profile, compute_cw

logger = logging.getLogger(__name__)

SUPERSAMPLE = 8
ENERGY_TOL = 1e-10
MASS_TOL = {"ac": 1e-10, "ch": 1e-12}


class DynamicsError(RuntimeError):
    """Raised for unstable steps, non-finite states and inconsistent initial data."""


# ============ FIELDS AND GEOMETRY ============

@dataclass
class Field2D:
    u: np.ndarray
    h: float
    bc: str = "neumann"
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim != 2:
            raise DynamicsError(f"field must be two-dimensional, got shape {self.u.shape}")
        if not np.all(np.isfinite(self.u)):
            raise DynamicsError("field has non-finite values")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    @property
    def area(self) -> float:
        return self.u.size * self.h * self.h

    def mass(self) -> float:
        return float(self.u.sum() * self.h * self.h)

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        x = (np.arange(nx) + 0.5) * self.h
        y = (np.arange(ny) + 0.5) * self.h
        return np.meshgrid(x, y)

    def with_values(self, u) -> "Field2D":
        return Field2D(u, self.h, self.bc)


@dataclass(frozen=True)
class DiskGeometry:
    radius: float
    center: Tuple[float, float] = (0.5, 0.5)

    @classmethod
    def with_area(cls, area: float, center: Tuple[float, float] = (0.5, 0.5)) -> "DiskGeometry":
        return cls(math.sqrt(area / math.pi), center)

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    @property
    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    def signed_distance(self, x, y):
        return np.hypot(x - self.center[0], y - self.center[1]) - self.radius


@dataclass(frozen=True)
class StripGeometry:
    """{x < thickness} across a domain of the given height."""
    thickness: float
    height: float = 1.0

    @property
    def area(self) -> float:
        return self.thickness * self.height

    @property
    def perimeter(self) -> float:
        return self.height

    def signed_distance(self, x, y):
        return x - self.thickness + 0.0 * y


Geometry = Union[DiskGeometry, StripGeometry]


# ============ CONFIGURATION ============

@dataclass
class SimConfig:
    eps: float
    potential: Potential
    M: float = 1.0
    flow: str = "ac"
    dt: Optional[float] = None
    cells_per_eps: float = 2.0
    length: Tuple[float, float] = (1.0, 1.0)
    conserve_mass: bool = True
    dt_factor: float = 0.5
    box: Optional[Tuple[float, float]] = None
    record_every: int = 10

    def __post_init__(self):
        if self.flow not in ("ac", "ch"):
            raise DynamicsError(f"flow must be 'ac' or 'ch', got {self.flow!r}")
        if self.eps <= 0 or self.M < 0:
            raise DynamicsError(f"need eps > 0 and M >= 0, got eps={self.eps}, M={self.M}")
        if self.dt is not None and self.dt > self.dt_rule * (1 + 1e-12):
            raise DynamicsError(f"dt={self.dt:g} violates the stability rule dt <= {self.dt_rule:g}")

    @cached_property
    def box_bounds(self) -> Tuple[float, float]:
        p = self.potential
        return self.box if self.box is not None else (p.a - 0.2 * p.width, p.b + 0.2 * p.width)

    @cached_property
    def boxed(self) -> Potential:
        return extend_outside_box(self.potential, self.box_bounds)

    @cached_property
    def curvature_bound(self) -> float:
        return max_curvature(self.potential, self.box_bounds)

    @property
    def stabilization(self) -> float:
        L = self.curvature_bound
        return 0.5 * L if self.flow == "ac" else L

    @property
    def h(self) -> float:
        return self.length[0] / self.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        target = self.eps / self.cells_per_eps
        nx = max(4, int(round(self.length[0] / target)))
        ny = max(4, int(round(self.length[1] / (self.length[0] / nx))))
        return ny, nx

    @property
    def dt_rule(self) -> float:
        if self.flow == "ac":
            return min(self.h ** 2 / (8.0 * self.eps ** 2), 0.1 / self.curvature_bound)
        return self.dt_factor * self.eps

    @property
    def horizon(self) -> float:
        return self.M / self.eps

    def schedule(self) -> Tuple[int, float]:
        """(steps, dt) reaching the horizon exactly with dt at most the rule."""
        dt = self.dt if self.dt is not None else self.dt_rule
        if self.horizon == 0.0:
            return 0, dt
        steps = int(math.ceil(self.horizon / dt - 1e-12))
        return steps, self.horizon / steps


# ============ DISCRETE OPERATORS ============

@lru_cache(maxsize=16)
def _laplacian_symbol(ny: int, nx: int, h: float) -> np.ndarray:
    """Eigenvalues of the Neumann five-point Laplacian on a cell-centered grid."""
    ky = (2.0 - 2.0 * np.cos(np.pi * np.arange(ny) / ny)) / h ** 2
    kx = (2.0 - 2.0 * np.cos(np.pi * np.arange(nx) / nx)) / h ** 2
    return -(ky[:, None] + kx[None, :])


def _gradient_energy(u: np.ndarray) -> float:
    """sum |grad_h u|^2 h^2 (the h factors cancel); no flux through the boundary."""
    return float((np.diff(u, axis=0) ** 2).sum() + (np.diff(u, axis=1) ** 2).sum())


def lyapunov_energy(u: Field2D, eps: float, p: Potential) -> float:
    """sum (W(u) + eps^2/2 |grad u|^2) h^2, decreased by both flows."""
    return float(p.W(u.u).sum() * u.h ** 2 + 0.5 * eps ** 2 * _gradient_energy(u.u))


def phase_energy(u: Field2D, eps: float, p: Potential) -> float:
    """F_eps(u) = sum (W(u) + eps^2 |grad u|^2) h^2."""
    return float(p.W(u.u).sum() * u.h ** 2 + eps ** 2 * _gradient_energy(u.u))


def h1_dual_norm(f: Field2D) -> float:
    """sqrt(sum f phi h^2) with (-Lap + 1) phi = f under Neumann conditions."""
    lap = _laplacian_symbol(*f.shape, f.h)
    phi = idctn(dctn(f.u, type=2, norm="ortho") / (1.0 - lap), type=2, norm="ortho")
    pairing = float((f.u * phi).sum() * f.h ** 2)
    if pairing < -1e-14:
        raise DynamicsError(f"negative dual pairing {pairing:g}")
    return math.sqrt(max(pairing, 0.0))


def l1_distance(u: Field2D, v: Field2D) -> float:
    """
    L1 distance of the piecewise-constant field u to v. When v is a two-phase
    field carrying its inside fractions, the distance is exact for the sharp set.
    """
    if "inside" in v.info:
        frac, a, b = v.info["inside"], v.info["a"], v.info["b"]
        return float((frac * np.abs(u.u - a) + (1.0 - frac) * np.abs(u.u - b)).sum() * u.h ** 2)
    return float(np.abs(u.u - v.u).sum() * u.h ** 2)


# ============ STEPPERS ============

def step_ac(u: Field2D, cfg: SimConfig, dt: Optional[float] = None) -> Field2D:
    """
    (1 + dt S - dt eps^2 Lap) u+ = (1 + dt S) u - dt (W'(u) - eps lambda),
    eps lambda = mean W'(u), so the zero mode (the mass) is untouched.
    """
    dt = cfg.schedule()[1] if dt is None else dt
    S = cfg.stabilization
    dw = cfg.boxed.dW(u.u)
    forcing = dw - dw.mean() if cfg.conserve_mass else dw
    rhs = (1.0 + dt * S) * u.u - dt * forcing
    lap = _laplacian_symbol(*u.shape, u.h)
    new = idctn(dctn(rhs, type=2, norm="ortho") / (1.0 + dt * S - dt * cfg.eps ** 2 * lap),
                type=2, norm="ortho")
    return Field2D(new, u.h, u.bc)


def step_ch(u: Field2D, cfg: SimConfig, dt: Optional[float] = None) -> Field2D:
    """
    (1 - dt S Lap + dt eps^2 Lap^2) u+ = (1 - dt S Lap) u + dt Lap W'(u).
    """
    dt = cfg.schedule()[1] if dt is None else dt
    S = cfg.stabilization
    lap = _laplacian_symbol(*u.shape, u.h)
    u_hat = dctn(u.u, type=2, norm="ortho")
    dw_hat = dctn(cfg.boxed.dW(u.u), type=2, norm="ortho")
    hat = ((1.0 - dt * S * lap) * u_hat + dt * lap * dw_hat) / (
        1.0 - dt * S * lap + dt * cfg.eps ** 2 * lap ** 2)
    new = idctn(hat, type=2, norm="ortho")
    return Field2D(new, u.h, u.bc)


# ============ INITIAL DATA ============

def two_phase_field(E0: Geometry, cfg: SimConfig) -> Field2D:
    """Cell averages of u_E0 = a on E0, b outside (supersampled)."""
    p = cfg.potential
    ny, nx = cfg.shape
    h = cfg.h
    offsets = ((np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5) * h
    x = (np.arange(nx) + 0.5) * h
    y = (np.arange(ny) + 0.5) * h
    X = x[None, :, None, None] + offsets[None, None, None, :]
    Y = y[:, None, None, None] + offsets[None, None, :, None]
    inside = (E0.signed_distance(X, Y) < 0.0).mean(axis=(2, 3))
    return Field2D(p.a * inside + p.b * (1.0 - inside), h, info={"inside": inside, "a": p.a, "b": p.b})


def well_prepared_init(E0: Geometry, cfg: SimConfig, prof: Profile, m: Optional[float] = None,
                       tau_shift: Optional[float] = None) -> Field2D:
    """
    u0 = z(d(x)/eps - tau) + const with d the signed distance to the boundary
    of E0 (negative inside). tau matches the mass when not given; the constant
    removes what is left.
    """
    p = cfg.potential
    base = Field2D(np.zeros(cfg.shape), cfg.h)
    X, Y = base.centers()
    d = E0.signed_distance(X, Y) / cfg.eps
    area = base.area
    m = p.a * E0.area + p.b * (area - E0.area) if m is None else m
    mass = lambda tau: float(prof(d - tau).sum() * cfg.h ** 2) - m

    if tau_shift is None:
        tau_shift = brentq(mass, -10.0, 10.0, xtol=1e-13) if mass(-10.0) * mass(10.0) < 0 else 0.0
    u = prof(d - tau_shift)
    correction = (m - float(u.sum() * cfg.h ** 2)) / area
    if abs(correction) > 0.1 * p.width:
        raise DynamicsError(f"mass correction {correction:.3g} exceeds (b-a)/10: geometry and mass disagree")
    field_ = Field2D(u + correction, cfg.h)

    first_order = 2.0 * compute_cw(p) * E0.perimeter
    measured = phase_energy(field_, cfg.eps, p) / cfg.eps
    field_.info = {
        "tau_shift": float(tau_shift),
        "mass_correction": float(correction),
        "mass_residual": abs(field_.mass() - m),
        "energy_over_eps": measured,
        "first_order": first_order,
        "energy_gap": measured - first_order,
        "C": (measured - first_order) / cfg.eps,
    }
    logger.info(f"[Captured] initial data eps={cfg.eps:g}: F/eps={measured:.6g} "
                f"vs 2c_W P={first_order:.6g} (C={field_.info['C']:.3g})")
    return field_


# ============ CHECKPOINTS ============

def save_checkpoint(path: Union[str, Path], u: Field2D, t: float, eps: float,
                    step: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u.u.astype("<f8").tofile(path.with_suffix(".bin"))
    header = {"ny": u.shape[0], "nx": u.shape[1], "h": u.h, "eps": eps, "t": t,
              "step": step, "dtype": "<f8", "bc": u.bc}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
    logger.debug(f"[Saved] checkpoint {path.with_suffix('.bin')}")
    return path.with_suffix(".bin")


def load_checkpoint(path: Union[str, Path]) -> Tuple[Field2D, Dict[str, Any]]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    values = np.fromfile(path.with_suffix(".bin"), dtype=header["dtype"])
    if values.size != header["ny"] * header["nx"]:
        raise DynamicsError(f"checkpoint {path} holds {values.size} values, header says "
                            f"{header['ny']}x{header['nx']}")
    return Field2D(values.reshape(header["ny"], header["nx"]), header["h"], header["bc"]), header


# ============ RUNS ============

@dataclass
class FlowResult:
    eps: float
    flow: str
    t: List[float]
    mass: List[float]
    energy: List[float]
    l1: List[float]
    dual: List[float]
    lam: List[float]
    final: Field2D
    steps: int
    dt: float
    energy_increase: float

    @property
    def sup_l1(self) -> float:
        return max(self.l1) if self.l1 else math.nan

    @property
    def sup_dual(self) -> float:
        return max(self.dual) if self.dual else math.nan

    @property
    def mass_drift(self) -> float:
        return max(abs(x - self.mass[0]) for x in self.mass)

    def rows(self) -> List[Dict[str, float]]:
        return [
            {"t": t, "mass": m, "energy": e, "l1": a, "dual": b, "lambda": lam}
            for t, m, e, a, b, lam in zip(self.t, self.mass, self.energy, self.l1, self.dual, self.lam)
        ]

    def summary(self) -> Dict[str, Any]:
        return {
            "eps": self.eps,
            "flow": self.flow,
            "steps": self.steps,
            "dt": self.dt,
            "sup_l1": self.sup_l1,
            "sup_dual": self.sup_dual,
            "mass_drift": self.mass_drift,
            "energy_increase": self.energy_increase,
            "mass_tol": MASS_TOL[self.flow],
            "energy_tol": ENERGY_TOL,
        }


def run_flow(u0: Field2D, cfg: SimConfig, reference: Optional[Field2D] = None,
             checkpoint_dir: Optional[Union[str, Path]] = None,
             checkpoint_every: int = 0) -> FlowResult:
    """Integrate to T = M/eps, recording every `cfg.record_every` steps and at the end."""
    steps, dt = cfg.schedule()
    stepper = step_ac if cfg.flow == "ac" else step_ch
    p = cfg.boxed
    series: Dict[str, List[float]] = {k: [] for k in ("t", "mass", "energy", "l1", "dual", "lam")}
    energy_increase = 0.0

    def record(u: Field2D, t: float):
        series["t"].append(t)
        series["mass"].append(u.mass())
        series["energy"].append(lyapunov_energy(u, cfg.eps, p))
        if reference is not None:
            series["l1"].append(l1_distance(u, reference))
            series["dual"].append(h1_dual_norm(u.with_values(u.u - reference.u)))
        series["lam"].append(float(p.dW(u.u).mean()) / cfg.eps if cfg.conserve_mass else 0.0)

    u = u0
    energy = lyapunov_energy(u, cfg.eps, p)
    record(u, 0.0)
    for n in range(1, steps + 1):
        try:
            u = stepper(u, cfg, dt)
        except DynamicsError as exc:
            raise DynamicsError(f"{cfg.flow} eps={cfg.eps:g}: {exc} (step {n})") from exc
        new_energy = lyapunov_energy(u, cfg.eps, p)
        energy_increase = max(energy_increase, new_energy - energy)
        energy = new_energy
        if n % cfg.record_every == 0 or n == steps:
            record(u, n * dt)
        if checkpoint_dir is not None and checkpoint_every and n % checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"{cfg.flow}_eps{cfg.eps:g}_step{n:07d}", u, n * dt,
                            cfg.eps, n)

    result = FlowResult(cfg.eps, cfg.flow, series["t"], series["mass"], series["energy"],
                        series["l1"], series["dual"], series["lam"], u, steps, dt, energy_increase)
    logger.info(f"[Solved] {cfg.flow} eps={cfg.eps:g}: {steps} steps, sup L1={result.sup_l1:.4g}, "
                f"mass drift={result.mass_drift:.1e}")
    return result


@dataclass
class SlowMotionReport:
    flow: str
    runs: Dict[float, FlowResult]
    ratios: List[float]
    report: ValidationReport

    def rows(self) -> List[Dict[str, Any]]:
        return [self.runs[eps].summary() for eps in sorted(self.runs, reverse=True)]

    def to_dict(self) -> Dict[str, Any]:
        return {"flow": self.flow, "rows": self.rows(), "ratios": self.ratios,
                "report": self.report.to_dict(),
                "tol": {"mass": MASS_TOL[self.flow], "energy": ENERGY_TOL}}


def slow_motion_experiment(E0: Geometry, potential: Potential, prof: Profile, ladder: Sequence[float],
                           M: float = 1.0, flow: str = "ac", threads: int = 1,
                           min_ratio: float = 1.5, **cfg_kw) -> SlowMotionReport:
    """
    Run the flow from well-prepared data for every eps of the ladder and compare
    the sup-in-time drift (L1 for AC, (H^1)' for CH) between consecutive points.
    """
    def one(eps: float) -> FlowResult:
        cfg = SimConfig(eps=eps, potential=potential, M=M, flow=flow, **cfg_kw)
        u0 = well_prepared_init(E0, cfg, prof)
        return run_flow(u0, cfg, reference=two_phase_field(E0, cfg))

    ladder = sorted(ladder, reverse=True)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = dict(zip(ladder, pool.map(one, ladder)))
    else:
        runs = {eps: one(eps) for eps in ladder}

    metric = (lambda r: r.sup_l1) if flow == "ac" else (lambda r: r.sup_dual)
    drifts = [metric(runs[eps]) for eps in ladder]
    ratios = [drifts[i] / drifts[i + 1] if drifts[i + 1] > 0 else math.inf
              for i in range(len(drifts) - 1)]

    report = ValidationReport(f"slow motion ({flow})")
    threshold = min_ratio if flow == "ac" else 1.0
    report.add("drift_decreasing", all(r >= threshold for r in ratios), ratios,
               f"ratio per halving >= {threshold:g}", tol=threshold)
    mass_tol = MASS_TOL[flow]
    worst_mass = max(r.mass_drift for r in runs.values())
    report.add("mass_conserved", worst_mass <= mass_tol, worst_mass, tol=mass_tol)
    worst_energy = max(r.energy_increase for r in runs.values())
    report.add("energy_nonincreasing", worst_energy <= ENERGY_TOL, worst_energy, tol=ENERGY_TOL)
    report.measured.update({"ladder": ladder, "drift": drifts})
    logger.info(f"[Check] slow motion {flow}: drift {['%.3g' % d for d in drifts]}, "
                f"passed={report.passed}")
    return SlowMotionReport(flow, runs, ratios, report)


def refinement_check(E0: Geometry, potential: Potential, prof: Profile, eps: float,
                     M: float = 1.0, flow: str = "ac", tol: float = 0.1, **cfg_kw) -> ValidationReport:
    """Doubling the cells across the layer changes the sup drift by less than `tol`."""
    drifts = []
    for cells in (2.0, 4.0):
        cfg = SimConfig(eps=eps, potential=potential, M=M, flow=flow, cells_per_eps=cells, **cfg_kw)
        res = run_flow(well_prepared_init(E0, cfg, prof), cfg, reference=two_phase_field(E0, cfg))
        drifts.append(res.sup_l1 if flow == "ac" else res.sup_dual)
    change = abs(drifts[1] - drifts[0]) / max(abs(drifts[1]), 1e-300)
    report = ValidationReport(f"grid refinement ({flow}, eps={eps:g})")
    report.add("resolution", change < tol, change, "relative change", tol=tol)
    report.measured["drift"] = drifts
    return report

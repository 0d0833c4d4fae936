"""
Gamma2 Module

Closed-form second-order limit F2 of a first-order minimizer u described by
its interface geometry (mean curvature kappa, perimeter P, dimension n):

  q = 1:  F2 = 2 c_W^2 (n-1)^2 kappa^2 / (W''(a)(b-a)^2)
               + 2 (c_sym + c_W tau_u)(n-1) kappa P
  q < 1:  F2 = 2 (c_sym + c_W tau_u)(n-1) kappa P

and the ranking of first-order minimizers by F2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from isoperimetry import AnalyticSet, Rectangle
from potential import Potential
from transition_profile import (
    Constants,
    Profile,
    compute_constants,
    solve_tau_q1,
    solve_tau_qlt1,
)

logger = logging.getLogger(__name__)

PERIMETER_TOL = 1e-8
TIE_TOL = 1e-12


class Gamma2Error(ValueError):
    """Raised for inadmissible geometries or a formula applied to the wrong q."""


@dataclass(frozen=True)
class MinimizerGeometry:
    kappa: float
    perimeter: float
    n: int = 2
    vm: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if not self.perimeter > 0:
            raise Gamma2Error(f"perimeter must be positive, got {self.perimeter}")
        if self.n < 2:
            raise Gamma2Error(f"dimension must be at least 2, got {self.n}")
        if self.vm is not None and not 0.0 < self.vm < 1.0:
            raise Gamma2Error(f"volume fraction must lie in (0, 1), got {self.vm}")

    def mass(self, p: Potential) -> float:
        """m with vm = (b - m)/(b - a)."""
        if self.vm is None:
            raise Gamma2Error(f"geometry {self.label or '?'} carries no volume fraction")
        return p.b - self.vm * p.width

    @classmethod
    def from_mass(cls, kappa: float, perimeter: float, m: float, p: Potential, n: int = 2,
                  label: str = "") -> "MinimizerGeometry":
        return cls(kappa, perimeter, n, (p.b - m) / p.width, label)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def iso_derivative_relation(kappa: float, n: int) -> float:
    """I'(vm) = (n-1) kappa for every minimizer at volume vm."""
    return (n - 1) * kappa


def quarter_disk_geometry(vol: float, n: int = 2) -> MinimizerGeometry:
    """Quarter disk of area vol in a corner: kappa = 1/r, P = pi r / 2."""
    if vol <= 0:
        raise Gamma2Error(f"volume must be positive, got {vol}")
    r = math.sqrt(4.0 * vol / math.pi)
    return MinimizerGeometry(1.0 / r, math.pi * r / 2.0, n, vol if vol < 1 else None, "quarter_disk")


def strip_geometry(rect: Rectangle, vol: Optional[float] = None, n: int = 2) -> MinimizerGeometry:
    """Straight cut across the shorter side: kappa = 0."""
    vm = None if vol is None else vol / rect.area
    return MinimizerGeometry(0.0, rect.short_side, n, vm, "strip")


def geometry_from_set(E: AnalyticSet, n: int = 2) -> MinimizerGeometry:
    return MinimizerGeometry(E.curvature, E.perimeter, n, E.volume / E.rect.area, f"{E.kind}:{E.place}")


def _constants(prof: Profile, constants: Optional[Constants]) -> Constants:
    return compute_constants(prof) if constants is None else constants


def predict_F2_parts(geom: MinimizerGeometry, p: Potential, prof: Profile,
                     constants: Optional[Constants] = None) -> Tuple[float, float]:
    """
    (quadratic, linear) parts in kappa of F2. Substituting tau_u, the q = 1 value is
    -2 c_W^2 (n-1)^2 kappa^2 / (W''(a)(b-a)^2) + 2 (c_sym + c_W I0/(b-a))(n-1) kappa P.
    """
    k = _constants(prof, constants)
    slope = iso_derivative_relation(geom.kappa, geom.n)
    linear = 2.0 * (k.c_sym + k.c_W * k.I0 / p.width) * slope * geom.perimeter
    if p.q < 1:
        return 0.0, linear
    quadratic = -2.0 * (k.c_W * slope / p.width) ** 2 / k.d2W_a
    return quadratic, linear


def predict_F2_q1(geom: MinimizerGeometry, p: Potential, prof: Profile,
                  constants: Optional[Constants] = None) -> float:
    if p.q != 1:
        raise Gamma2Error(f"predict_F2_q1 needs q = 1, got q = {p.q}")
    k = _constants(prof, constants)
    slope = iso_derivative_relation(geom.kappa, geom.n)
    tau = solve_tau_q1(geom.perimeter, geom.kappa, geom.n, p, prof, cross_check=False)
    first = 2.0 * (k.c_W * slope / p.width) ** 2 / k.d2W_a
    second = 2.0 * (k.c_sym + k.c_W * tau) * slope * geom.perimeter
    return float(first + second)


def predict_F2_qlt1(geom: MinimizerGeometry, p: Potential, prof: Profile,
                    constants: Optional[Constants] = None) -> float:
    if p.q >= 1:
        raise Gamma2Error(f"predict_F2_qlt1 needs q < 1, got q = {p.q}")
    k = _constants(prof, constants)
    tau = solve_tau_qlt1(prof)
    return float(2.0 * (k.c_sym + k.c_W * tau) * iso_derivative_relation(geom.kappa, geom.n)
                 * geom.perimeter)


def predict_F2(geom: MinimizerGeometry, p: Potential, prof: Profile,
               constants: Optional[Constants] = None) -> float:
    if p.q == 1:
        return predict_F2_q1(geom, p, prof, constants)
    if p.q < 1:
        return predict_F2_qlt1(geom, p, prof, constants)
    raise Gamma2Error(f"no second-order formula for q = {p.q}")


@dataclass
class Selection:
    index: int
    values: List[float]
    ranking: List[int]
    tied: List[int]

    def to_dict(self) -> Dict[str, object]:
        return {
            "index": self.index,
            "values": self.values,
            "ranking": self.ranking,
            "tied": self.tied,
            "tol": TIE_TOL,
        }


def select_minimizer(candidates: Sequence[MinimizerGeometry], p: Potential, prof: Profile,
                     constants: Optional[Constants] = None) -> Selection:
    """
    Rank first-order minimizers (equal perimeter) by F2. The winner is the lowest
    index among candidates within TIE_TOL of the minimum.
    """
    if not candidates:
        raise Gamma2Error("no candidate minimizers given")
    perimeters = [g.perimeter for g in candidates]
    if max(perimeters) - min(perimeters) > PERIMETER_TOL * max(perimeters):
        raise Gamma2Error(f"candidates are not all first-order minimizers: perimeters {perimeters}")

    k = _constants(prof, constants)
    values = [predict_F2(g, p, prof, k) for g in candidates]
    best = min(values)
    scale = TIE_TOL * max(1.0, abs(best))
    tied = [i for i, v in enumerate(values) if v - best <= scale]
    ranking = sorted(range(len(values)), key=lambda i: (values[i], i))
    if len(tied) > 1:
        logger.info(f"[Check] F2 tie between candidates {tied}; keeping {tied[0]}")
    logger.info(f"[Solved] selected candidate {tied[0]} "
                f"({candidates[tied[0]].label or 'unnamed'}) with F2={values[tied[0]]:.10g}")
    return Selection(tied[0], values, ranking, tied)

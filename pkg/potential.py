"""
Potential Module

Double-well potentials W with wells a < b, central critical point c,
well exponent q and well limit l:
- built-ins: quartic, asymmetric (arctan-modulated), degenerate (q < 1)
- validation of the standing hypotheses on a sampling grid
- helpers used elsewhere: reflection, growth check, extension outside a box
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from report import ValidationReport

logger = logging.getLogger(__name__)

Evaluator = Callable[[Any], Any]


class PotentialError(ValueError):
    """Raised for inadmissible potential parameters."""


@dataclass(frozen=True)
class Potential:
    name: str
    W: Evaluator
    dW: Evaluator
    d2W: Evaluator
    a: float
    b: float
    c: float
    q: float = 1.0
    ell_a: float = 8.0
    ell_b: float = 8.0
    symmetric: bool = False
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def ell(self) -> float:
        """Well limit at a (equal to ell_b when the hypotheses hold exactly)."""
        return self.ell_a

    @property
    def width(self) -> float:
        return self.b - self.a

    def sqrtW(self, s):
        return np.sqrt(np.maximum(self.W(s), 0.0))

    def d2W_well(self, well: str = "a") -> float:
        """W''(a) or W''(b); only finite for q = 1."""
        if self.q < 1:
            return math.inf
        return float(self.d2W(self.a if well == "a" else self.b))

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "q": self.q,
            "ell_a": self.ell_a,
            "ell_b": self.ell_b,
            "symmetric": self.symmetric,
            "params": dict(self.params),
        }


# ============ BUILT-IN POTENTIALS ============

def make_quartic() -> Potential:
    """W(s) = (s^2 - 1)^2."""
    return Potential(
        name="quartic",
        W=lambda s: (np.asarray(s, dtype=float) ** 2 - 1.0) ** 2,
        dW=lambda s: 4.0 * np.asarray(s, dtype=float) * (np.asarray(s, dtype=float) ** 2 - 1.0),
        d2W=lambda s: 12.0 * np.asarray(s, dtype=float) ** 2 - 4.0,
        a=-1.0, b=1.0, c=0.0, q=1.0, ell_a=8.0, ell_b=8.0,
        symmetric=True,
    )


def make_asymmetric(beta: float) -> Potential:
    """W(s) = (s^2 - 1)^2 (1 + beta*arctan(s)), |beta| < 2/pi."""
    beta = float(beta)
    if not abs(beta) < 2.0 / math.pi:
        raise PotentialError(
            f"beta={beta} makes 1 + beta*arctan(s) vanish; need |beta| < 2/pi"
        )

    def W(s):
        s = np.asarray(s, dtype=float)
        return (s * s - 1.0) ** 2 * (1.0 + beta * np.arctan(s))

    def dW(s):
        s = np.asarray(s, dtype=float)
        g = s * s - 1.0
        return 4.0 * s * g * (1.0 + beta * np.arctan(s)) + g * g * beta / (1.0 + s * s)

    def d2W(s):
        s = np.asarray(s, dtype=float)
        g = s * s - 1.0
        m = 1.0 + beta * np.arctan(s)
        return ((12.0 * s * s - 4.0) * m
                + 8.0 * s * g * beta / (1.0 + s * s)
                - 2.0 * s * g * g * beta / (1.0 + s * s) ** 2)

    if beta == 0.0:
        c = 0.0
    else:
        c = float(brentq(dW, -0.99, 0.99, xtol=1e-14, rtol=4 * np.finfo(float).eps))

    return Potential(
        name="asymmetric",
        W=W, dW=dW, d2W=d2W,
        a=-1.0, b=1.0, c=c, q=1.0,
        ell_a=8.0 * (1.0 - beta * math.pi / 4.0),
        ell_b=8.0 * (1.0 + beta * math.pi / 4.0),
        symmetric=(beta == 0.0),
        params={"beta": beta},
    )


def make_degenerate(q: float) -> Potential:
    """W(s) = |s^2 - 1|^(q+1), q in (0,1): compact transition layers."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise PotentialError(f"degenerate potential needs q in (0,1), got {q}")
    p = q + 1.0

    def W(s):
        s = np.asarray(s, dtype=float)
        return np.abs(s * s - 1.0) ** p

    def dW(s):
        s = np.asarray(s, dtype=float)
        g = s * s - 1.0
        return p * np.abs(g) ** q * np.sign(g) * 2.0 * s

    def d2W(s):
        s = np.asarray(s, dtype=float)
        g = s * s - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = p * q * np.abs(g) ** (q - 1.0) * 4.0 * s * s + 2.0 * p * np.abs(g) ** q * np.sign(g)
        return np.where(g == 0.0, np.inf, out)

    ell = q * p * 2.0 ** p
    return Potential(
        name="degenerate",
        W=W, dW=dW, d2W=d2W,
        a=-1.0, b=1.0, c=0.0, q=q, ell_a=ell, ell_b=ell,
        symmetric=True,
        params={"q": q},
    )


POTENTIAL_BUILDERS = {
    "quartic": lambda cfg: make_quartic(),
    "asymmetric": lambda cfg: make_asymmetric(cfg.get("beta", 0.5)),
    "degenerate": lambda cfg: make_degenerate(cfg.get("q", 0.5)),
}


def make_potential(cfg: Dict[str, Any]) -> Potential:
    """Build a potential from a config block {'kind': ..., 'beta': ..., 'q': ...}."""
    kind = cfg.get("kind", "quartic")
    if kind not in POTENTIAL_BUILDERS:
        raise PotentialError(f"unknown potential.kind '{kind}' (choose from {sorted(POTENTIAL_BUILDERS)})")
    return POTENTIAL_BUILDERS[kind](cfg)


# ============ DERIVED POTENTIALS ============

def reflect(p: Potential) -> Potential:
    """W~(s) = W(a + b - s): swaps the roles of the wells."""
    shift = p.a + p.b
    return replace(
        p,
        name=f"{p.name}-reflected",
        W=lambda s: p.W(shift - np.asarray(s, dtype=float)),
        dW=lambda s: -p.dW(shift - np.asarray(s, dtype=float)),
        d2W=lambda s: p.d2W(shift - np.asarray(s, dtype=float)),
        c=shift - p.c,
        ell_a=p.ell_b,
        ell_b=p.ell_a,
    )


def extend_outside_box(p: Potential, box: Optional[Tuple[float, float]] = None) -> Potential:
    """
    Replace W outside `box` by its second-order Taylor polynomial at the box edge.
    Default box: [a - 0.2(b-a), b + 0.2(b-a)].
    """
    lo, hi = box if box is not None else (p.a - 0.2 * p.width, p.b + 0.2 * p.width)
    w_lo, dw_lo, d2w_lo = float(p.W(lo)), float(p.dW(lo)), float(p.d2W(lo))
    w_hi, dw_hi, d2w_hi = float(p.W(hi)), float(p.dW(hi)), float(p.d2W(hi))

    def W(s):
        s = np.asarray(s, dtype=float)
        inner = p.W(np.clip(s, lo, hi))
        below = w_lo + dw_lo * (s - lo) + 0.5 * d2w_lo * (s - lo) ** 2
        above = w_hi + dw_hi * (s - hi) + 0.5 * d2w_hi * (s - hi) ** 2
        return np.where(s < lo, below, np.where(s > hi, above, inner))

    def dW(s):
        s = np.asarray(s, dtype=float)
        inner = p.dW(np.clip(s, lo, hi))
        return np.where(s < lo, dw_lo + d2w_lo * (s - lo),
                        np.where(s > hi, dw_hi + d2w_hi * (s - hi), inner))

    def d2W(s):
        s = np.asarray(s, dtype=float)
        inner = p.d2W(np.clip(s, lo, hi))
        return np.where(s < lo, d2w_lo, np.where(s > hi, d2w_hi, inner))

    params = dict(p.params)
    params.update({"box_lo": lo, "box_hi": hi})
    return replace(p, name=f"{p.name}-boxed", W=W, dW=dW, d2W=d2W, params=params)


def max_curvature(p: Potential, box: Tuple[float, float], samples: int = 2001) -> float:
    """max |W''| over a box (wells excluded for q < 1)."""
    s = np.linspace(box[0], box[1], samples)
    with np.errstate(all="ignore"):
        vals = np.abs(p.d2W(s))
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else math.inf


def growth_exponent_check(p: Potential, exponent: float, radius: float = 50.0,
                          samples: int = 20001) -> Tuple[float, bool]:
    """Smallest C1 with |W'(s)| <= C1|s|^p + C1 on [-radius, radius]."""
    s = np.linspace(-radius, radius, samples)
    with np.errstate(all="ignore"):
        ratio = np.abs(p.dW(s)) / (np.abs(s) ** exponent + 1.0)
    finite = bool(np.all(np.isfinite(ratio)))
    c1 = float(np.nanmax(ratio)) if finite else math.inf
    return c1, finite


# ============ VALIDATION ============

def _richardson10(values) -> float:
    """Extrapolate a sequence computed at h = 10^-k with O(h) error."""
    v = list(values)
    return v[-1] + (v[-1] - v[-2]) / 9.0


def _find_roots(f: Evaluator, grid: np.ndarray) -> list:
    vals = f(grid)
    roots = []
    for i in range(len(grid) - 1):
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(grid[i]))
        elif fa * fb < 0.0:
            roots.append(float(brentq(f, grid[i], grid[i + 1], xtol=1e-12)))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    deduped = []
    for r in sorted(roots):
        if not deduped or abs(r - deduped[-1]) > 1e-8:
            deduped.append(r)
    return deduped


def validate_potential(p: Potential, interval: Optional[Tuple[float, float]] = None,
                       n_grid: int = 10_000, rel_tol: float = 1e-4) -> ValidationReport:
    """
    Check the double-well hypotheses on a sampling grid.

    Never raises: every check that errors out is reported as failed.
    """
    report = ValidationReport(subject=p.name)
    lo, hi = interval if interval is not None else (p.a - 2.0, p.b + 2.0)
    grid = np.linspace(lo, hi, n_grid)
    report.measured["interval"] = (lo, hi)

    with np.errstate(all="ignore"):
        try:
            w = np.asarray(p.W(grid), dtype=float)
            dw = np.asarray(p.dW(grid), dtype=float)
        except Exception as exc:
            logger.warning(f"[Validation] {p.name}: evaluator failed ({exc})")
            report.add("finite", False, detail=f"evaluator raised {exc!r}")
            return report

    finite = bool(np.all(np.isfinite(w)) and np.all(np.isfinite(dw)))
    report.add("finite", finite, detail="" if finite else "non-finite W or W' on grid")
    if not finite:
        return report

    # 1. Two zeros exactly at the wells
    try:
        wa, wb = float(p.W(p.a)), float(p.W(p.b))
        spacing = (hi - lo) / (n_grid - 1)
        away = (np.abs(grid - p.a) > 0.5 * spacing) & (np.abs(grid - p.b) > 0.5 * spacing)
        positive = bool(np.all(w[away] > 0.0))
        nonneg = bool(np.all(w >= 0.0))
        ok = abs(wa) <= 1e-12 and abs(wb) <= 1e-12 and positive and nonneg
        report.add("two_zeros", ok, value=(wa, wb), tol=1e-12,
                   detail="" if ok else "W must vanish at a, b and be positive elsewhere")
    except Exception as exc:
        report.add("two_zeros", False, detail=repr(exc))

    # 2. W' has exactly three zeros a < c < b with sign pattern -,+,-,+ and W''(c) < 0
    try:
        roots = _find_roots(p.dW, grid)
        expected = [p.a, p.c, p.b]
        ok = len(roots) == 3 and all(abs(r - e) <= 1e-8 for r, e in zip(roots, expected))
        if ok:
            probes = [(lo + p.a) / 2, (p.a + p.c) / 2, (p.c + p.b) / 2, (p.b + hi) / 2]
            signs = [float(np.sign(p.dW(x))) for x in probes]
            ok = signs == [-1.0, 1.0, -1.0, 1.0]
        d2c = float(p.d2W(p.c))
        report.add("three_critical_points", ok, value=roots, tol=1e-8,
                   detail="" if ok else f"W' zeros at {roots}")
        report.add("central_maximum", d2c < 0.0, value=d2c, tol=0.0)
    except Exception as exc:
        report.add("three_critical_points", False, detail=repr(exc))

    # 3. Exponent q and well limits l at both wells, from both sides
    try:
        hs = [10.0 ** (-k) for k in range(2, 7)]
        q_est = []
        for well in (p.a, p.b):
            side = 1.0 if well == p.a else -1.0
            slopes = [math.log(float(p.W(well + side * h)) / float(p.W(well + side * h / 10.0)))
                      / math.log(10.0) - 1.0 for h in hs]
            q_est.append(_richardson10(slopes))
        q_meas = float(np.mean(q_est))
        report.measured["q"] = q_meas
        report.add("exponent_q", abs(q_meas - p.q) <= 1e-6 * max(1.0, p.q), value=q_meas,
                   tol=1e-6 * max(1.0, p.q))

        limits = {}
        for label, well, declared in (("a", p.a, p.ell_a), ("b", p.b, p.ell_b)):
            for side in (+1.0, -1.0):
                ratios = [float(p.d2W(well + side * h)) / h ** (p.q - 1.0) for h in hs]
                limits[(label, side)] = _richardson10(ratios)
            inner = limits[(label, 1.0 if label == "a" else -1.0)]
            outer = limits[(label, -1.0 if label == "a" else 1.0)]
            report.measured[f"ell_{label}"] = inner
            ok = (abs(inner - declared) <= rel_tol * declared
                  and abs(outer - declared) <= rel_tol * declared)
            report.add(f"well_limit_{label}", ok, value=(inner, outer), tol=rel_tol * declared,
                       detail="" if ok else f"declared {declared}")
        la, lb = report.measured["ell_a"], report.measured["ell_b"]
        report.add("equal_well_limits", abs(la - lb) <= rel_tol * max(la, lb), value=(la, lb),
                   tol=rel_tol * max(la, lb),
                   advisory=True)
    except Exception as exc:
        report.add("well_limit", False, detail=repr(exc))

    # 4. liminf |W'| > 0 at infinity (sampled)
    try:
        far = np.concatenate([np.linspace(p.b + 1.0, p.b + 50.0, 500),
                              np.linspace(p.a - 50.0, p.a - 1.0, 500)])
        floor = float(np.min(np.abs(p.dW(far))))
        report.add("coercive_slope", floor > 1e-3, value=floor, tol=1e-3)
    except Exception as exc:
        report.add("coercive_slope", False, detail=repr(exc))

    status = "passed" if report.passed else f"failed {report.failures()}"
    logger.info(f"[Validation] {p.name}: {status}")
    return report

"""
Weighted 1D Module

Mass-constrained minimization of
    G_eps(v) = int_A^B (W(v) + eps^2 |v'|^2) eta dt,   int v eta = m
with P1 elements and a bordered Newton solve for (v, lambda), plus the
quantities compared along an eps-ladder:
- second-order gap (G_eps/eps - 2 c_W eta(t0)) / eps
- lambda_eps and its limit, checked against the one-sided slope bracket
- tau_0 and the liminf right-hand side built from eta'(t0-), eta'(t0+)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from potential import Potential
from transition_profile import (
    Profile,
    compute_cw,
    compute_I0,
    central_zero_shifted,
    tau_bisection,
    weighted_moment,
)
from weight import WeightFunction

logger = logging.getLogger(__name__)

GAUSS_X = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
GAUSS_W = np.array([5.0, 8.0, 5.0]) / 9.0


class SolverError(RuntimeError):
    """Raised when Newton fails or a diagnostic window leaves the grid."""


# ============ DISCRETIZATION ============

def _half_grid(length: float, hmin: float, core_len: float, growth: float, cap: float) -> np.ndarray:
    core_len = min(core_len, length)
    n = max(1, int(math.ceil(core_len / hmin - 1e-9)))
    pts = list(np.linspace(0.0, core_len, n + 1))
    x, h = core_len, core_len / n
    while x < length:
        h = min(h * growth, cap)
        x = length if (x + h >= length or length - (x + h) < 0.5 * h) else x + h
        pts.append(x)
    return np.asarray(pts)


def build_grid(eta: WeightFunction, eps: float, rho: float = 400.0, core: float = 12.0,
               growth: float = 1.05, cap: float = 5e-3) -> np.ndarray:
    """
    Uniform spacing eps/rho on |t - t0| <= core*eps, geometric growth (capped)
    out to A and B. The two halves are built the same way, so the grid is
    mirror-symmetric about t0 wherever (A, B) is.
    """
    hmin = eps / rho
    right = _half_grid(eta.B - eta.t0, hmin, core * eps, growth, cap)
    left = _half_grid(eta.t0 - eta.A, hmin, core * eps, growth, cap)
    return np.concatenate([eta.t0 - left[:0:-1], eta.t0 + right])


def element_weights(eta: WeightFunction, t: np.ndarray) -> np.ndarray:
    """H_e = int over each element of eta (antiderivative when known, else 3-point Gauss)."""
    if eta.cumulative is not None:
        return np.diff(np.asarray(eta.cumulative(t), dtype=float))
    mid, half = 0.5 * (t[1:] + t[:-1]), 0.5 * np.diff(t)
    pts = mid[:, None] + half[:, None] * GAUSS_X[None, :]
    return half * (np.asarray(eta.eta(pts), dtype=float) @ GAUSS_W)


@dataclass
class WeightedField:
    t: np.ndarray
    v: np.ndarray
    eta: WeightFunction
    H: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.t.shape != self.v.shape or np.any(np.diff(self.t) <= 0):
            raise SolverError("grid must be strictly increasing and match the values")
        if self.H is None:
            self.H = element_weights(self.eta, self.t)
        if self.w is None:
            w = np.zeros_like(self.t)
            w[:-1] += 0.5 * self.H
            w[1:] += 0.5 * self.H
            self.w = w

    def mass(self) -> float:
        return float(self.w @ self.v)

    def with_values(self, v) -> "WeightedField":
        return WeightedField(self.t, v, self.eta, self.H, self.w)

    def at(self, t):
        return np.interp(t, self.t, self.v)


def energy_G(field: WeightedField, eps: float, p: Potential) -> float:
    """eps^2 sum H_e (dv/h)^2 + sum w_i W(v_i)."""
    slope = np.diff(field.v) / np.diff(field.t)
    return float(eps * eps * (field.H @ (slope * slope)) + field.w @ p.W(field.v))


def gamma_limit_value(t, v, eta: WeightFunction, p: Potential, c_w: Optional[float] = None) -> float:
    """2 c_W eta(jump) for a two-valued field a|b with exactly one jump."""
    v = np.asarray(v, dtype=float)
    at_a = np.isclose(v, p.a)
    at_b = np.isclose(v, p.b)
    if not np.all(at_a | at_b):
        raise SolverError("field is not two-valued in {a, b}")
    jumps = np.flatnonzero(at_b[1:] != at_b[:-1])
    if len(jumps) != 1:
        raise SolverError(f"expected a single jump, found {len(jumps)}")
    location = float(np.asarray(t)[jumps[0] + 1])
    c_w = compute_cw(p) if c_w is None else c_w
    return 2.0 * c_w * float(eta.eta(location))


# ============ NEWTON ============

@dataclass
class MinimizerResult:
    field: WeightedField
    lam: float
    eps: float
    energy: float
    first_order: float
    gap: float
    residual: float
    mass_residual: float
    tau: float
    c_eps: float
    iterations: int
    local_distance: float
    local_ok: bool
    rho: float
    energy_raw: float
    lam_raw: float
    history: List[float] = field(default_factory=list)
    tol: float = 1e-9

    def to_dict(self) -> Dict[str, object]:
        return {
            "eps": self.eps,
            "lambda": self.lam,
            "lambda_raw": self.lam_raw,
            "energy": self.energy,
            "energy_raw": self.energy_raw,
            "first_order": self.first_order,
            "gap": self.gap,
            "residual": self.residual,
            "mass_residual": self.mass_residual,
            "tau": self.tau,
            "c_eps": self.c_eps,
            "iterations": self.iterations,
            "local_distance": self.local_distance,
            "local_ok": self.local_ok,
            "rho": self.rho,
            "nodes": int(self.field.t.size),
            "tol": self.tol,
        }


def _gradient(field: WeightedField, v: np.ndarray, eps: float, p: Potential) -> np.ndarray:
    k = 2.0 * eps * eps * field.H / np.diff(field.t) ** 2
    flux = k * np.diff(v)
    g = field.w * p.dW(v)
    g[:-1] -= flux
    g[1:] += flux
    return g


def _bordered_jacobian(field: WeightedField, v: np.ndarray, eps: float, p: Potential):
    k = 2.0 * eps * eps * field.H / np.diff(field.t) ** 2
    main = field.w * p.d2W(v)
    main[:-1] += k
    main[1:] += k
    hess = sparse.diags([-k, main, -k], [-1, 0, 1], format="csc")
    col = sparse.csc_matrix((eps * field.w)[:, None])
    row = sparse.csc_matrix(field.w[None, :])
    return sparse.bmat([[hess, col], [row, None]], format="csc")


def _fit_mass(shape: Callable, field: WeightedField, m: float) -> np.ndarray:
    """Translate `shape` so the discrete mass equals m, then fix the rest by a constant."""
    f = lambda s: field.w @ shape(field.t - s) - m
    span = field.t[-1] - field.t[0]
    lo, hi = -0.05 * span, 0.05 * span
    while f(lo) * f(hi) > 0 and hi < span:
        lo, hi = 2 * lo, 2 * hi
    s = brentq(f, lo, hi, xtol=1e-14) if f(lo) * f(hi) <= 0 else 0.0
    v = shape(field.t - s)
    return v + (m - field.w @ v) / field.w.sum()


def _newton(field: WeightedField, eps: float, p: Potential, m: float, lam: Optional[float],
            tol: float, max_iter: int) -> Tuple[np.ndarray, float, int, List[float]]:
    v = field.v.copy()
    w = field.w
    g = _gradient(field, v, eps, p)
    if lam is None:
        lam = -float(w @ g) / (eps * float(w @ w))
    history = []
    energy = energy_G(field.with_values(v), eps, p)
    for it in range(1, max_iter + 1):
        R = g + eps * lam * w
        res = float(np.max(np.abs(R / w)))
        history.append(res)
        logger.debug(f"[Newton] eps={eps:g} iter={it - 1} residual={res:.3e} lambda={lam:.10g}")
        if res <= tol:
            return v, lam, it - 1, history
        J = _bordered_jacobian(field, v, eps, p)
        rhs = -np.concatenate([R, [w @ v - m]])
        step = spsolve(J, rhs)
        if not np.all(np.isfinite(step)):
            raise SolverError(f"singular Newton system at eps={eps:g} (residual {res:.3e})")
        dv, dlam = step[:-1], step[-1]
        alpha = 1.0
        while True:
            trial = v + alpha * dv
            e_trial = energy_G(field.with_values(trial), eps, p)
            if e_trial <= energy + 1e-12 * abs(energy):
                break
            alpha *= 0.5
            if alpha < 2.0 ** -30:
                if res <= 1e3 * tol:
                    return v, lam, it - 1, history
                raise SolverError(
                    f"Newton line search failed at eps={eps:g}: residual {res:.3e} after {it} iterations"
                )
        v, lam, energy = trial, lam + alpha * dlam, e_trial
        g = _gradient(field, v, eps, p)
    R = g + eps * lam * w
    res = float(np.max(np.abs(R / w)))
    if res > tol:
        raise SolverError(f"Newton did not converge at eps={eps:g}: residual {res:.3e}")
    return v, lam, max_iter, history + [res]


def _crossing(field: WeightedField, level: float) -> float:
    d = field.v - level
    idx = np.flatnonzero(np.sign(d[:-1]) != np.sign(d[1:]))
    if not idx.size:
        raise SolverError(f"minimizer never crosses {level:g}")
    # the crossing nearest t0
    i = idx[np.argmin(np.abs(field.t[idx] - field.eta.t0))]
    t1, t2, d1, d2 = field.t[i], field.t[i + 1], d[i], d[i + 1]
    return float(t1 - d1 * (t2 - t1) / (d2 - d1))


def _solve_on_grid(eta: WeightFunction, eps: float, p: Potential, m: float, shape: Callable,
                   rho: float, grid_kw: Dict, tol: float, max_iter: int, lam0: Optional[float]):
    t = build_grid(eta, eps, rho=rho, **grid_kw)
    field = WeightedField(t, np.zeros_like(t), eta)
    field = field.with_values(_fit_mass(shape, field, m))
    v, lam, iters, history = _newton(field, eps, p, m, lam0, tol, max_iter)
    return field.with_values(v), lam, iters, history


def minimize_Geps(eta: WeightFunction, eps: float, p: Potential, m: Optional[float] = None,
                  init: Optional[Callable] = None, prof: Optional[Profile] = None,
                  locality: Optional[float] = None, rho: float = 400.0, mesh_richardson: bool = True,
                  tol: float = 1e-9, max_iter: int = 60, lam0: Optional[float] = None,
                  c_w: Optional[float] = None, **grid_kw) -> MinimizerResult:
    """
    Newton solve of the discrete Euler-Lagrange system with the mass row.

    With mesh_richardson the problem is solved at spacings eps/(rho/2) and
    eps/rho and the energy and multiplier are extrapolated in h^2; the
    returned field is the fine one.
    """
    m = eta.mass(p) if m is None else m
    c_w = compute_cw(p) if c_w is None else c_w
    if init is None:
        if prof is None:
            raise SolverError("minimize_Geps needs an initial state or a profile")
        init = lambda t: prof((t - eta.t0) / eps)

    levels = [rho / 2.0, rho] if mesh_richardson else [rho]
    shape, lam_guess = init, lam0
    solved = []
    history: List[float] = []
    iters = 0
    for level in levels:
        field, lam, it, hist = _solve_on_grid(eta, eps, p, m, shape, level, grid_kw, tol,
                                              max_iter, lam_guess)
        solved.append((field, lam, energy_G(field, eps, p)))
        history += hist
        iters += it
        shape = lambda t, f=field: f.at(t)
        lam_guess = lam

    field, lam_raw, energy_raw = solved[-1]
    if mesh_richardson:
        (_, lam_c, e_c), (_, lam_f, e_f) = solved
        energy = (4.0 * e_f - e_c) / 3.0
        lam = (4.0 * lam_f - lam_c) / 3.0
    else:
        energy, lam = energy_raw, lam_raw

    R = _gradient(field, field.v, eps, p) + eps * lam_raw * field.w
    residual = float(np.max(np.abs(R / field.w)))
    mass_residual = abs(field.mass() - m)
    c_eps = central_zero_shifted(p, eps * lam_raw)
    tau = (_crossing(field, c_eps) - eta.t0) / eps

    v0 = np.where(field.t < eta.t0, p.a, p.b)
    local_distance = float(field.w @ np.abs(field.v - v0))
    locality = 0.1 * p.width if locality is None else locality
    local_ok = local_distance <= locality
    if not local_ok:
        logger.warning(f"[Check] eps={eps:g}: minimizer left the locality ball "
                       f"({local_distance:.3e} > {locality:.3e})")

    first_order = energy / eps
    gap = (first_order - 2.0 * c_w * eta.eta0) / eps
    logger.info(f"[Solved] eps={eps:g}: lambda={lam:.8g} gap={gap:.8g} residual={residual:.2e} "
                f"mass={mass_residual:.1e} nodes={field.t.size}")
    return MinimizerResult(
        field=field, lam=float(lam), eps=float(eps), energy=float(energy),
        first_order=float(first_order), gap=float(gap), residual=residual,
        mass_residual=float(mass_residual), tau=float(tau), c_eps=float(c_eps),
        iterations=iters, local_distance=local_distance, local_ok=bool(local_ok),
        rho=float(rho), energy_raw=float(energy_raw), lam_raw=float(lam_raw), history=history, tol=tol,
    )


def run_ladder(eta: WeightFunction, p: Potential, prof: Profile, ladder: Sequence[float],
               **kwargs) -> List[MinimizerResult]:
    """Minimize for eps from large to small, warm-starting from the rescaled previous minimizer."""
    results: List[MinimizerResult] = []
    c_w = kwargs.pop("c_w", None) or compute_cw(p)
    for eps in sorted(ladder, reverse=True):
        if results:
            prev = results[-1]
            ratio = prev.eps / eps
            init = lambda t, f=prev.field, r=ratio: f.at(eta.t0 + (t - eta.t0) * r)
            res = minimize_Geps(eta, eps, p, init=init, lam0=prev.lam_raw, c_w=c_w, **kwargs)
        else:
            res = minimize_Geps(eta, eps, p, prof=prof, c_w=c_w, **kwargs)
        results.append(res)
    return results


# ============ LIMITS ============

def richardson_extrapolate(eps: Sequence[float], values: Sequence[float],
                           order: Optional[int] = None) -> float:
    """Value at eps = 0 of the polynomial of degree `order` through the smallest-eps points."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    order = len(eps) - 1 if order is None else order
    if len(eps) < order + 1:
        raise ValueError(f"need {order + 1} points for order {order}, got {len(eps)}")
    keep = np.argsort(eps)[: order + 1]
    poly = np.polynomial.Polynomial.fit(eps[keep], values[keep], order)
    return float(poly(0.0))


def extrapolate_gap(results: Sequence[MinimizerResult], order: Optional[int] = None) -> float:
    return richardson_extrapolate([r.eps for r in results], [r.gap for r in results], order)


@dataclass
class LambdaLimit:
    value: float
    extrapolated: bool
    bracket: Tuple[float, float]
    inside: bool
    raw: List[float]

    def to_dict(self) -> Dict[str, object]:
        return {
            "lambda0": self.value,
            "extrapolated": self.extrapolated,
            "bracket": list(self.bracket),
            "inside": self.inside,
            "raw": self.raw,
        }


def lambda_bracket(eta: WeightFunction, p: Potential, c_w: float) -> Tuple[float, float]:
    scale = 2.0 * c_w / (p.width * eta.eta0)
    return scale * eta.eta_plus, scale * eta.eta_minus


def extract_lambda_limit(results: Sequence[MinimizerResult], eta: WeightFunction, p: Potential,
                         c_w: Optional[float] = None, margin: float = 1e-2,
                         order: Optional[int] = None) -> LambdaLimit:
    if len(results) < 3:
        raise ValueError(f"need at least 3 ladder points, got {len(results)}")
    c_w = compute_cw(p) if c_w is None else c_w
    ordered = sorted(results, key=lambda r: r.eps, reverse=True)
    lams = [r.lam for r in ordered]
    steps = np.diff(lams)
    tiny = 1e-12 * max(1.0, max(abs(x) for x in lams))
    monotone = bool(np.all(steps >= -tiny) or np.all(steps <= tiny))
    if monotone:
        value = richardson_extrapolate([r.eps for r in ordered], lams, order)
    else:
        logger.warning("[Check] lambda sequence is not monotone; extrapolation skipped")
        value = lams[-1]
    lo, hi = lambda_bracket(eta, p, c_w)
    inside = lo - margin <= value <= hi + margin
    return LambdaLimit(float(value), monotone, (lo, hi), bool(inside), [float(x) for x in lams])


def diagnostic_window(eps: float, prof: Profile) -> float:
    """l_eps = C |log eps| with C = 3 / (slowest tail rate)."""
    tails = prof.tails or {}
    if "rate_a" in tails:
        rate = min(tails["rate_a"], tails["rate_b"])
        return 3.0 / rate * abs(math.log(eps))
    return max(-tails.get("t_sat_a", prof.T), tails.get("t_sat_b", prof.T))


def rescaled_profile_distance(result: MinimizerResult, prof: Profile, tau0: float,
                              window: Optional[float] = None, n: int = 2001) -> float:
    """sup over |s| <= l of |v_eps(t0 + eps s) - z(s - tau0)|."""
    l = diagnostic_window(result.eps, prof) if window is None else window
    t0 = result.field.eta.t0
    lo, hi = t0 - result.eps * l, t0 + result.eps * l
    if lo < result.field.t[0] or hi > result.field.t[-1]:
        raise SolverError(f"window l={l:g} exceeds the grid at eps={result.eps:g}")
    s = np.linspace(-l, l, n) if l > 0 else np.zeros(1)
    w = result.field.at(t0 + result.eps * s)
    return float(np.max(np.abs(w - prof(s - tau0))))


def layer_bump(result: MinimizerResult, width: float = 3.0) -> np.ndarray:
    """Gaussian of width `width`*eps on the grid, centred on the layer t0 + tau*eps."""
    field = result.field
    center = field.eta.t0 + result.tau * result.eps
    return np.exp(-(((field.t - center) / (width * result.eps)) ** 2))


def multiplier_consistency(result: MinimizerResult, p: Potential,
                           phi: Optional[np.ndarray] = None) -> float:
    """lambda from the Euler-Lagrange quotient tested against phi (default: bump at the layer)."""
    field = result.field
    if phi is None:
        phi = layer_bump(result)
    g = _gradient(field, field.v, result.eps, p)
    return float(-(g @ phi) / (result.eps * (field.w @ phi)))


# ============ LIMIT FORMULAS ============

def solve_tau0(eta: WeightFunction, p: Potential, prof: Profile, lam0: float,
               cross_check: bool = True) -> float:
    """
    eta(t0) int (z(s - tau0) - sgn) ds = (lam0 / W''(a)) int eta, i.e.
    tau0 = (I0 - lam0 int eta / (W''(a) eta(t0))) / (b - a). For q < 1, W''(a) is
    infinite and the right side vanishes.
    """
    total = float(eta.integral(eta.A, eta.B))
    target = lam0 * total / (p.d2W_well("a") * eta.eta0)
    tau0 = (compute_I0(prof) - target) / p.width
    if cross_check:
        tau_b = tau_bisection(prof, target)
        if abs(tau_b - tau0) > 1e-10:
            logger.warning(f"[Check] tau0 closed form {tau0:.12g} vs bisection {tau_b:.12g}")
    return float(tau0)


def gap_limit_rhs(eta: WeightFunction, p: Potential, prof: Profile, lam0: float, tau0: float) -> float:
    """
    2 eta'(t0-) int_{s<0} W(z(s - tau0)) s ds + 2 eta'(t0+) int_{s>0} ...
    + lam0^2 / (2 W''(a)) int eta   (last term 0 when q < 1).
    """
    minus = weighted_moment(prof, tau0, "minus")
    plus = weighted_moment(prof, tau0, "plus")
    value = 2.0 * eta.eta_minus * minus + 2.0 * eta.eta_plus * plus
    if p.q >= 1:
        value += lam0 * lam0 / (2.0 * p.d2W_well("a")) * float(eta.integral(eta.A, eta.B))
    return float(value)


def second_order_gap(result: MinimizerResult) -> float:
    return result.gap

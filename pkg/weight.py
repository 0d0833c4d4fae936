"""
Weight Module

Touching isoperimetric surrogate I and the weight eta = I o V:
- TouchingIso: kink cone at v_m, power tails C0 v^((n-1)/n), C1 blends
- solve_V: dV/dt = I(V), V(0) = v_m, with endpoints A < 0 < B
- build_eta / WeightFunction.flat: weights for the 1D problem
- validate_eta: the five weight hypotheses with fitted constants
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline

from report import ValidationReport

logger = logging.getLogger(__name__)

K_CAP = 1e6
DOMINATION_TOL = 1e-12
MASS_SPLIT_TOL = 1e-10


class WeightError(ValueError):
    """Raised when a touching function or weight cannot be built."""


# ============ TOUCHING ISOPERIMETRIC FUNCTION ============

@dataclass(frozen=True, eq=False)
class TouchingIso:
    P0: float
    s_minus: float
    s_plus: float
    vm: float
    K: float = 0.0
    C0: float = 1.0
    r: float = 0.05
    n: int = 2
    tails: bool = True
    ref_vols: Optional[np.ndarray] = None
    ref_values: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, c: float, vm: float) -> "TouchingIso":
        """I = c on (0, 1), tails disabled (test stub)."""
        return cls(P0=c, s_minus=0.0, s_plus=0.0, vm=vm, tails=False)

    @property
    def gamma(self) -> float:
        return (self.n - 1) / self.n

    @cached_property
    def omega(self) -> float:
        """Half-width of the cone window; keeps the cone above P0/2."""
        if not self.tails:
            return math.inf
        w = 0.5 * min(self.vm - self.r, 1.0 - self.r - self.vm)
        steep = max(abs(self.s_minus), abs(self.s_plus))
        if steep > 0:
            w = min(w, 0.25 * self.P0 / steep)
        if self.K > 0:
            w = min(w, math.sqrt(0.25 * self.P0 / self.K))
        return w

    def _cone(self, d):
        slope = np.where(d < 0, self.s_minus, self.s_plus)
        return self.P0 + slope * d - self.K * d * d

    def _cone_slope(self, d):
        return np.where(d < 0, self.s_minus, self.s_plus) - 2.0 * self.K * d

    @cached_property
    def _blends(self) -> Tuple[CubicHermiteSpline, CubicHermiteSpline]:
        """Hermite cubics in log I between the tails and the cone."""
        g, r, w = self.gamma, self.r, self.omega
        y_tail = math.log(self.C0 * r ** g)
        x1, x2 = self.vm - w, self.vm + w
        c1, c2 = float(self._cone(-w)), float(self._cone(w))
        left = CubicHermiteSpline([r, x1], [y_tail, math.log(c1)],
                                  [g / r, float(self._cone_slope(-w)) / c1])
        right = CubicHermiteSpline([x2, 1.0 - r], [math.log(c2), y_tail],
                                   [float(self._cone_slope(w)) / c2, -g / r])
        return left, right

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        d = v - self.vm
        out = self._cone(d)
        if not self.tails:
            return out
        left, right = self._blends
        w, r, g = self.omega, self.r, self.gamma
        out = np.where(d < -w, np.exp(left(np.clip(v, r, self.vm - w))), out)
        out = np.where(d > w, np.exp(right(np.clip(v, self.vm + w, 1 - r))), out)
        out = np.where(v <= r, self.C0 * np.clip(v, 0.0, None) ** g, out)
        out = np.where(v >= 1 - r, self.C0 * np.clip(1.0 - v, 0.0, None) ** g, out)
        return out

    def derivative(self, v):
        """I'(v); at v_m the right derivative."""
        v = np.asarray(v, dtype=float)
        d = v - self.vm
        out = self._cone_slope(d)
        if not self.tails:
            return out
        left, right = self._blends
        w, r, g = self.omega, self.r, self.gamma
        vl = np.clip(v, r, self.vm - w)
        vr = np.clip(v, self.vm + w, 1 - r)
        out = np.where(d < -w, np.exp(left(vl)) * left(vl, 1), out)
        out = np.where(d > w, np.exp(right(vr)) * right(vr, 1), out)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v <= r, g * self.C0 * np.clip(v, 1e-300, None) ** (g - 1), out)
            out = np.where(v >= 1 - r, -g * self.C0 * np.clip(1 - v, 1e-300, None) ** (g - 1), out)
        return out

    def dominated(self) -> bool:
        """I <= reference at every reference sample."""
        if self.ref_vols is None:
            return True
        return bool(np.all(self(self.ref_vols) <= self.ref_values + DOMINATION_TOL))

    def with_K(self, K: float) -> "TouchingIso":
        return TouchingIso(self.P0, self.s_minus, self.s_plus, self.vm, K, self.C0, self.r,
                           self.n, self.tails, self.ref_vols, self.ref_values)


def build_touching_iso(P0: float, s_minus: float, s_plus: float, C0: float, r: float,
                       reference: Optional[Tuple[Sequence[float], Sequence[float]]],
                       vm: float, n: int = 2) -> TouchingIso:
    """
    Kink cone P0 + s(v - v_m) - K(v - v_m)^2 with K raised (0, 1, 2, 4, ...)
    until the reference samples dominate it.
    """
    if s_minus < s_plus:
        raise WeightError(f"need s- >= s+, got {s_minus} < {s_plus}")
    if P0 <= 0:
        raise WeightError(f"anchor value must be positive, got {P0}")
    if not 0 < r < vm < 1 - r:
        raise WeightError(f"need 0 < r < v_m < 1 - r, got r={r}, v_m={vm}")

    ref_vols = ref_values = None
    if reference is not None:
        ref_vols = np.asarray(reference[0], dtype=float)
        ref_values = np.asarray(reference[1], dtype=float)
        order = np.argsort(ref_vols)
        ref_vols, ref_values = ref_vols[order], ref_values[order]
        if float(np.interp(vm, ref_vols, ref_values)) < P0 - 1e-9:
            raise WeightError("anchor not a minimizer value: reference dips below P0 at v_m")

    iso = TouchingIso(P0, s_minus, s_plus, vm, 0.0, C0, r, n, True, ref_vols, ref_values)
    K = 0.0
    while not iso.dominated():
        K = 1.0 if K == 0.0 else 2.0 * K
        if K > K_CAP:
            raise WeightError(f"domination not reached with K <= {K_CAP:g}")
        iso = iso.with_K(K)

    check = iso(np.linspace(1e-6, 1 - 1e-6, 4001))
    if not np.all(check > 0):
        raise WeightError("touching function is not positive on (0, 1)")
    density = 0 if ref_vols is None else len(ref_vols)
    logger.info(f"[Solved] touching iso: P0={P0:g} s-={s_minus:.6g} s+={s_plus:.6g} K={K:g} "
                f"({density} reference samples)")
    return iso


def smooth_touching_iso(P0: float, slope: float, vm: float, n: int = 2,
                        C0: Optional[float] = None, r: float = 0.05) -> TouchingIso:
    """Equal one-sided slopes; no reference, so K = 0."""
    return build_touching_iso(P0, slope, slope, P0 if C0 is None else C0, r, None, vm, n)


# ============ V ============

@dataclass(frozen=True, eq=False)
class VSolution:
    iso: TouchingIso
    A: float
    B: float
    t_lo: float
    t_hi: float
    left: Callable
    right: Callable

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        iso = self.iso
        tl = np.clip(t, self.t_lo, 0.0)
        tr = np.clip(t, 0.0, self.t_hi)
        out = np.where(t < 0, self.left(tl.ravel())[0].reshape(t.shape),
                       self.right(tr.ravel())[0].reshape(t.shape))
        if iso.tails:
            k = 1.0 / (1.0 - iso.gamma)
            c = iso.C0 * (1.0 - iso.gamma)
            low = (c * np.clip(t - self.A, 0.0, None)) ** k
            high = 1.0 - (c * np.clip(self.B - t, 0.0, None)) ** k
            out = np.where(t < self.t_lo, low, np.where(t > self.t_hi, high, out))
        return np.clip(np.where(t <= self.A, 0.0, np.where(t >= self.B, 1.0, out)), 0.0, 1.0)

    def t_of(self, v: float) -> float:
        """t with V(t) = v, by quadrature of 1/I."""
        iso = self.iso
        g = iso.gamma
        if iso.tails and v <= iso.r:
            return self.A + v ** (1 - g) / (iso.C0 * (1 - g))
        if iso.tails and v >= 1 - iso.r:
            return self.B - (1 - v) ** (1 - g) / (iso.C0 * (1 - g))
        return _inverse_integral(iso, iso.vm, v)


def _breakpoints(iso: TouchingIso, lo: float, hi: float):
    pts = [iso.vm]
    if iso.tails:
        pts += [iso.vm - iso.omega, iso.vm + iso.omega]
    return sorted(p for p in pts if min(lo, hi) < p < max(lo, hi)) or None


def _inverse_integral(iso: TouchingIso, lo: float, hi: float) -> float:
    """int_lo^hi dv / I(v)."""
    if lo == hi:
        return 0.0
    val, _ = quad(lambda v: 1.0 / float(iso(v)), lo, hi, points=_breakpoints(iso, lo, hi),
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(val)


def solve_V(iso: TouchingIso, vm: Optional[float] = None) -> VSolution:
    """
    Integrate dV/dt = I(V), V(0) = v_m, both ways. With tails, the closed form
    V = ((1-g) C0 (t - A))^(1/(1-g)) takes over below t(r) (mirrored at B).
    """
    vm = iso.vm if vm is None else vm
    if not math.isclose(vm, iso.vm):
        raise WeightError(f"v_m={vm} differs from the touching function's {iso.vm}")
    g = iso.gamma
    if g >= 1:
        raise WeightError(f"endpoint exponent {g} makes 1/I non-integrable")
    if iso.tails:
        tail = iso.r ** (1 - g) / (iso.C0 * (1 - g))
        t_lo = -_inverse_integral(iso, iso.r, vm)
        t_hi = _inverse_integral(iso, vm, 1 - iso.r)
        A, B = t_lo - tail, t_hi + tail
    else:
        if not np.all(iso(np.linspace(0.0, 1.0, 1001)) > 0):
            raise WeightError("I must be positive on [0, 1] when tails are disabled")
        t_lo = A = -_inverse_integral(iso, 0.0, vm)
        t_hi = B = _inverse_integral(iso, vm, 1.0)

    rhs = lambda _t, y: iso(np.clip(y, 0.0, 1.0))
    sols = []
    for end in (t_lo, t_hi):
        sol = solve_ivp(rhs, (0.0, end), [vm], method="DOP853", dense_output=True,
                        rtol=1e-12, atol=1e-14)
        if not sol.success:
            raise WeightError(f"V integration failed toward t={end:g}: {sol.message}")
        sols.append(sol.sol)
    logger.info(f"[Solved] V: A={A:.10g} B={B:.10g}")
    return VSolution(iso=iso, A=A, B=B, t_lo=t_lo, t_hi=t_hi, left=sols[0], right=sols[1])


# ============ WEIGHT ============

@dataclass(frozen=True, eq=False)
class WeightFunction:
    A: float
    B: float
    eta: Callable
    eta_minus: float
    eta_plus: float
    vm: float
    n: int = 2
    t0: float = 0.0
    endpoint_exponent: Optional[float] = None
    deta: Optional[Callable] = None
    cumulative: Optional[Callable] = None
    source: str = "custom"
    constants: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def flat(cls, vm: float) -> "WeightFunction":
        """eta = 1 on (-v_m, 1 - v_m)."""
        A, B = -vm, 1.0 - vm
        return cls(
            A=A, B=B,
            eta=lambda t: np.where((np.asarray(t) > A) & (np.asarray(t) < B), 1.0, 0.0),
            eta_minus=0.0, eta_plus=0.0, vm=vm, endpoint_exponent=0.0,
            deta=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            cumulative=lambda t: np.clip(np.asarray(t, dtype=float), A, B) - A,
            source="flat",
        )

    @property
    def exponent(self) -> float:
        if self.endpoint_exponent is not None:
            return self.endpoint_exponent
        return (self.n - 1) / self.n

    @property
    def eta0(self) -> float:
        return float(self.eta(self.t0))

    def integral(self, lo, hi):
        """int_lo^hi eta (vectorised when an antiderivative is known)."""
        if self.cumulative is not None:
            return self.cumulative(hi) - self.cumulative(lo)
        lo_arr, hi_arr = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        out = np.empty(lo_arr.shape)
        for idx in np.ndindex(lo_arr.shape):
            a, b = float(lo_arr[idx]), float(hi_arr[idx])
            pts = [self.t0] if a < self.t0 < b else None
            out[idx] = quad(lambda t: float(self.eta(t)), a, b, points=pts, limit=200)[0]
        return out if out.ndim else float(out)

    def mass(self, p) -> float:
        """m = a v_m + b (1 - v_m), the mass of the single-jump state."""
        return p.a * self.vm + p.b * (1.0 - self.vm)

    @cached_property
    def grid(self) -> np.ndarray:
        s = np.linspace(0.0, 1.0, 4001)
        t = self.A + (self.B - self.A) * 0.5 * (1.0 - np.cos(np.pi * s))
        return np.unique(np.concatenate([t, [self.t0]]))

    def derivative(self, t):
        if self.deta is not None:
            return self.deta(t)
        vals = self.eta(self.grid)
        return np.interp(t, self.grid, np.gradient(vals, self.grid))


def build_eta(iso: TouchingIso, V: VSolution) -> WeightFunction:
    """eta = I o V on (A, B); t0 = 0; eta'(0+-) by the chain rule."""
    A, B = V.A, V.B

    def eta(t):
        t = np.asarray(t, dtype=float)
        return np.where((t > A) & (t < B), iso(V(t)), 0.0)

    def deta(t):
        v = V(t)
        return np.where((np.asarray(t) > A) & (np.asarray(t) < B), iso.derivative(v) * iso(v), 0.0)

    exponent = (iso.n - 1) if iso.tails else 0.0
    t_star = min(V.t_lo - A, B - V.t_hi) if iso.tails else 0.05 * (B - A)
    w = WeightFunction(
        A=A, B=B, eta=eta,
        eta_minus=iso.s_minus * iso.P0,
        eta_plus=iso.s_plus * iso.P0,
        vm=iso.vm, n=iso.n, t0=0.0,
        endpoint_exponent=float(exponent),
        deta=deta, cumulative=V,
        source="touching" if iso.s_minus != iso.s_plus else "smooth",
        constants={"t_star": float(t_star)},
    )
    w.constants.update(_endpoint_constants(w))
    logger.info(f"[Solved] eta: [{A:.6g}, {B:.6g}], eta(0)={w.eta0:.6g}, "
                f"eta'-={w.eta_minus:.6g}, eta'+={w.eta_plus:.6g}")
    return w


# ============ VALIDATION ============

def _endpoint_fit(w: WeightFunction, side: str):
    """Log-log slope and bounds of eta against the distance to an endpoint."""
    t_star = w.constants.get("t_star", 0.05 * (w.B - w.A))
    dist = np.geomspace(1e-6 * t_star, t_star, 60)
    t = w.A + dist if side == "A" else w.B - dist
    vals = np.asarray(w.eta(t), dtype=float)
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        return math.nan, math.nan, math.nan
    slope = float(np.polyfit(np.log(dist), np.log(vals), 1)[0])
    ratio = vals / dist ** w.exponent
    return slope, float(ratio.min()), float(ratio.max())


def _endpoint_constants(w: WeightFunction) -> Dict[str, float]:
    _, d1, d2 = _endpoint_fit(w, "A")
    _, d3, d4 = _endpoint_fit(w, "B")
    return {"d1": d1, "d2": d2, "d3": d3, "d4": d4}


def _one_sided_fd(f, t0: float, side: int, h: float = 1e-4) -> float:
    f0 = float(f(t0))
    q = lambda s: side * (float(f(t0 + side * s)) - f0) / s
    return 2.0 * q(h / 2) - q(h)


def validate_eta(w: WeightFunction, slope_tol: float = 0.05) -> ValidationReport:
    """Check the five weight hypotheses on the sample grid; never raises."""
    report = ValidationReport(subject=f"eta ({w.source})")
    t = w.grid[(w.grid > w.A) & (w.grid < w.B)]
    vals = np.asarray(w.eta(t), dtype=float)

    positive = bool(np.all(np.isfinite(vals)) and np.all(vals > 0))
    fd_minus = _one_sided_fd(w.eta, w.t0, -1)
    fd_plus = _one_sided_fd(w.eta, w.t0, +1)
    tol = lambda g: 1e-6 * (1.0 + abs(g))
    c1_ok = abs(fd_minus - w.eta_minus) <= tol(w.eta_minus) and abs(fd_plus - w.eta_plus) <= tol(w.eta_plus)
    report.add("eta1", positive and c1_ok, value=(fd_minus, fd_plus),
               tol=tol(max(abs(w.eta_minus), abs(w.eta_plus))),
               detail="" if c1_ok else "one-sided difference quotients disagree with eta'(t0)")

    for name, side, keys in (("eta2", "A", ("d1", "d2")), ("eta3", "B", ("d3", "d4"))):
        slope, lo, hi = _endpoint_fit(w, side)
        ok = math.isfinite(slope) and abs(slope - w.exponent) <= slope_tol and lo > 0
        report.add(name, ok, value=slope, tol=slope_tol,
                   detail=f"fitted exponent {slope:.4g} vs {w.exponent:.4g}")
        if w.exponent > 0:
            # power-law bound with the exponent (n-1)/n; reported, never gating
            stated = (w.n - 1) / w.n
            report.add(f"{name}_stated_exponent", math.isfinite(slope) and abs(slope - stated) <= slope_tol,
                       value=slope, tol=slope_tol, advisory=True,
                       detail=f"fitted exponent {slope:.4g} vs (n-1)/n = {stated:.4g}")
        report.measured[keys[0]], report.measured[keys[1]] = lo, hi

    with np.errstate(divide="ignore", invalid="ignore"):
        d5 = float(np.max(np.abs(w.derivative(t)) * np.minimum(w.B - t, t - w.A) / vals))
    kink = w.eta_minus >= w.eta_plus
    report.add("eta4", math.isfinite(d5) and kink, value=d5, tol=0.0,
               detail="" if kink else f"eta'- = {w.eta_minus:.6g} < eta'+ = {w.eta_plus:.6g}")

    left = float(w.integral(w.A, w.t0))
    total = float(w.integral(w.A, w.B))
    report.add("eta5", abs(left - w.vm) <= MASS_SPLIT_TOL and abs(total - 1.0) <= MASS_SPLIT_TOL,
               value=(left, total), tol=MASS_SPLIT_TOL)
    report.measured.update({"d5": d5, "t_star": w.constants.get("t_star"),
                            "eta_t0": w.eta0, "exponent": w.exponent})
    logger.info(f"[Validation] eta ({w.source}): {'passed' if report.passed else report.failures()}")
    return report

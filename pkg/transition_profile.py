"""
Transition Profile Module

Heteroclinic profile z' = sqrt(W(z)), z(0) = c, and the constants built on it:
- c_W  = int_a^b sqrt(W)
- c_sym = int W(z(t)) t dt
- I_0  = int (z - sgn_{a,b})
- layer shifts tau_u for q = 1 and q < 1
- the central zero of W' + mu
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np
from scipy.integrate import quad, simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from potential import Potential

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-13


class ProfileError(RuntimeError):
    """Raised when the profile cannot be computed or lacks a tail model."""


@dataclass(frozen=True, eq=False)
class Profile:
    potential: Potential
    t: np.ndarray
    z: np.ndarray
    spline: CubicHermiteSpline
    T: float
    tails: Optional[Dict[str, float]]
    shift: float = 0.0

    def _base(self, u):
        p = self.potential
        u = np.asarray(u, dtype=float)
        inside = np.clip(u, -self.T, self.T)
        out = np.asarray(self.spline(inside), dtype=float)
        tails = self.tails or {}
        if p.q >= 1 and tails:
            with np.errstate(over="ignore"):
                right = p.b - tails["amp_b"] * np.exp(-tails["rate_b"] * u)
                left = p.a + tails["amp_a"] * np.exp(tails["rate_a"] * u)
            out = np.where(u > self.T, right, np.where(u < -self.T, left, out))
        else:
            out = np.where(u > self.T, p.b, np.where(u < -self.T, p.a, out))
        return out

    def __call__(self, t):
        return self._base(np.asarray(t, dtype=float) - self.shift)

    def derivative(self, t):
        return self.potential.sqrtW(self(t))

    def shifted(self, s: float) -> "Profile":
        """Profile of z(. - s)."""
        return replace(self, shift=self.shift + float(s))


@dataclass(frozen=True)
class Constants:
    c_W: float
    c_sym: float
    I0: float
    d2W_a: float
    d2W_b: float
    rate_a: Optional[float] = None
    rate_b: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {
            "c_W": self.c_W,
            "c_sym": self.c_sym,
            "I0": self.I0,
            "d2W_a": self.d2W_a,
            "d2W_b": self.d2W_b,
            "rate_a": self.rate_a,
            "rate_b": self.rate_b,
            "tol": 1e-10,
        }


# ============ PROFILE ============

def _saturation_time(p: Potential, well: str) -> float:
    """int_c^b ds/sqrt(W) (or -int_a^c), via u = |well - s|^((1-q)/2)."""
    k = 2.0 / (1.0 - p.q)
    if well == "b":
        top = (p.b - p.c) ** (1.0 / k)
        f = lambda u: k * u ** (k - 1.0) / p.sqrtW(p.b - u ** k)
        sign = 1.0
    else:
        top = (p.c - p.a) ** (1.0 / k)
        f = lambda u: k * u ** (k - 1.0) / p.sqrtW(p.a + u ** k)
        sign = -1.0
    val, _ = quad(f, 0.0, top, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return sign * val


def _tail_model(p: Potential) -> Dict[str, float]:
    """Exact exponential asymptotics of z at both wells (q = 1)."""
    rate_b = math.sqrt(float(p.d2W(p.b)) / 2.0)
    rate_a = math.sqrt(float(p.d2W(p.a)) / 2.0)
    jb, _ = quad(lambda s: 1.0 / p.sqrtW(s) - 1.0 / (rate_b * (p.b - s)), p.c, p.b,
                 epsabs=QUAD_TOL, limit=200)
    ja, _ = quad(lambda s: 1.0 / p.sqrtW(s) - 1.0 / (rate_a * (s - p.a)), p.a, p.c,
                 epsabs=QUAD_TOL, limit=200)
    return {
        "rate_a": rate_a,
        "rate_b": rate_b,
        "amp_a": (p.c - p.a) * math.exp(rate_a * ja),
        "amp_b": (p.b - p.c) * math.exp(rate_b * jb),
    }


def solve_profile(p: Potential, T: Optional[float] = None, tol: float = 1e-12,
                  h: float = 1e-3) -> Profile:
    """
    Integrate z' = sqrt(W(z)) from z(0) = c in both directions.

    q = 1: grid on [-T, T] (T = 20 by default) plus exponential tails.
    q < 1: the profile saturates at t_sat; the grid covers both saturation times.
    """

    def rhs(_t, y):
        return p.sqrtW(np.clip(y, p.a, p.b))

    if p.q >= 1:
        T = 20.0 if T is None else float(T)
        tails = _tail_model(p)
        t_sat = None
    else:
        t_sat = (_saturation_time(p, "a"), _saturation_time(p, "b"))
        T = max(-t_sat[0], t_sat[1]) + 1.0 if T is None else float(T)
        tails = {"t_sat_a": t_sat[0], "t_sat_b": t_sat[1]}

    n_half = int(math.ceil(T / h))
    t_pos = np.linspace(0.0, T, n_half + 1)
    halves = []
    for direction in (1.0, -1.0):
        span = direction * t_pos
        stop = T if t_sat is None else min(T, abs(t_sat[1] if direction > 0 else t_sat[0]))
        mask = np.abs(span) <= stop
        sol = solve_ivp(rhs, (0.0, direction * stop), [p.c], method="DOP853",
                        t_eval=span[mask], rtol=tol, atol=tol * 1e-2)
        if not sol.success:
            well = "b" if direction > 0 else "a"
            raise ProfileError(
                f"profile integration stalled toward well {well}: sqrt(W) too flat "
                f"for tol={tol} ({sol.message})"
            )
        z = np.full(span.shape, p.b if direction > 0 else p.a)
        z[mask] = sol.y[0]
        halves.append(z)

    t = np.concatenate([-t_pos[:0:-1], t_pos])
    z = np.concatenate([halves[1][:0:-1], halves[0]])
    z = np.maximum.accumulate(np.clip(z, p.a, p.b))
    spline = CubicHermiteSpline(t, z, p.sqrtW(z))
    prof = Profile(potential=p, t=t, z=z, spline=spline, T=T, tails=tails)
    logger.info(f"[Solved] profile {p.name}: T={T:g}, {len(t)} samples, tails={tails}")
    return prof


# ============ CONSTANTS ============

def compute_cw(p: Potential) -> float:
    """c_W = int_a^b sqrt(W(s)) ds."""
    val, _ = quad(p.sqrtW, p.a, p.b, points=[p.c], epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return float(val)


def compute_I0(prof: Profile) -> float:
    """
    I_0 = int (z - sgn_{a,b}) dt through dt = dz/sqrt(W(z)):
    int_a^c (s-a)/sqrt(W) ds - int_c^b (b-s)/sqrt(W) ds, minus shift*(b-a).
    """
    p = prof.potential
    left, _ = quad(lambda s: (s - p.a) / p.sqrtW(s), p.a, p.c, epsabs=QUAD_TOL, limit=200)
    right, _ = quad(lambda s: (p.b - s) / p.sqrtW(s), p.c, p.b, epsabs=QUAD_TOL, limit=200)
    return float(left - right - prof.shift * p.width)


def _require_tails(prof: Profile) -> Dict[str, float]:
    if not prof.tails:
        raise ProfileError("profile has no tail model; re-solve with solve_profile")
    return prof.tails


def compute_csym(prof: Profile) -> float:
    """c_sym = int W(z(t)) t dt: grid Simpson plus closed-form exponential tails."""
    tails = _require_tails(prof)
    p = prof.potential
    wz = p.W(prof.z)
    t = prof.t + prof.shift
    value = simpson(wz * t, x=t)
    if p.q >= 1:
        T = prof.T
        ra, rb = tails["rate_a"], tails["rate_b"]
        kb = (rb * tails["amp_b"]) ** 2 * math.exp(-2.0 * rb * T)
        ka = (ra * tails["amp_a"]) ** 2 * math.exp(-2.0 * ra * T)
        s = prof.shift
        value += kb * ((T + s) / (2.0 * rb) + 1.0 / (4.0 * rb * rb))
        value -= ka * ((T - s) / (2.0 * ra) + 1.0 / (4.0 * ra * ra))
    return float(value)


def compute_constants(prof: Profile) -> Constants:
    p = prof.potential
    tails = prof.tails or {}
    consts = Constants(
        c_W=compute_cw(p),
        c_sym=compute_csym(prof),
        I0=compute_I0(prof),
        d2W_a=p.d2W_well("a"),
        d2W_b=p.d2W_well("b"),
        rate_a=tails.get("rate_a"),
        rate_b=tails.get("rate_b"),
    )
    logger.info(f"[Captured] constants {p.name}: c_W={consts.c_W:.12g} c_sym={consts.c_sym:.3e} "
                f"I0={consts.I0:.3e}")
    return consts


def profile_energy(prof: Profile) -> float:
    """int (W(z) + z'^2) dt on the sample grid (equals 2 c_W up to tails)."""
    p = prof.potential
    dz = prof.spline(prof.t, 1)
    return float(simpson(p.W(prof.z) + dz * dz, x=prof.t))


# ============ SHIFT INTEGRALS ============

def _lower_integral(prof: Profile, x: float) -> float:
    """int_{-inf}^x (z_base(u) - a) du."""
    p, tails = prof.potential, prof.tails
    T = prof.T
    if not -T <= x <= T:
        raise ProfileError(f"shift {x:g} outside the profile window [-{T:g}, {T:g}]")
    tail = tails["amp_a"] * math.exp(-tails["rate_a"] * T) / tails["rate_a"] if p.q >= 1 else 0.0
    return float(tail + prof.spline.integrate(-T, x) - p.a * (x + T))


def _upper_integral(prof: Profile, x: float) -> float:
    """int_x^inf (z_base(u) - b) du."""
    p, tails = prof.potential, prof.tails
    T = prof.T
    if not -T <= x <= T:
        raise ProfileError(f"shift {x:g} outside the profile window [-{T:g}, {T:g}]")
    tail = -tails["amp_b"] * math.exp(-tails["rate_b"] * T) / tails["rate_b"] if p.q >= 1 else 0.0
    return float(prof.spline.integrate(x, T) - p.b * (T - x) + tail)


def shift_integral(prof: Profile, tau: float) -> float:
    """int (z(t - tau) - sgn_{a,b}(t)) dt, with sgn jumping from a to b at t = 0."""
    _require_tails(prof)
    x = -(float(tau) + prof.shift)
    return _lower_integral(prof, x) + _upper_integral(prof, x)


def weighted_moment(prof: Profile, tau: float, side: str = "both", n: int = 40001) -> float:
    """
    int sqrt(W(z(s-tau))) z'(s-tau) s ds over s < 0 ("minus"), s > 0 ("plus") or both.
    Since z' = sqrt(W(z)) the integrand is W(z(s-tau)) s.
    """
    if side == "both":
        return weighted_moment(prof, tau, "minus", n) + weighted_moment(prof, tau, "plus", n)
    tails = _require_tails(prof)
    p = prof.potential
    st = float(tau) + prof.shift
    T = prof.T
    cut = float(np.clip(-st, -T, T))
    if side == "minus":
        u = np.linspace(-T, cut, n)
    elif side == "plus":
        u = np.linspace(cut, T, n)
    else:
        raise ValueError(f"side must be 'minus', 'plus' or 'both', got {side!r}")
    integrand = p.W(prof._base(u)) * (u + st)
    value = float(simpson(integrand, x=u))
    if p.q >= 1:
        if side == "minus":
            r, amp = tails["rate_a"], tails["amp_a"]
            k = (r * amp) ** 2 * math.exp(-2.0 * r * T)
            value += k * ((st - T) / (2.0 * r) - 1.0 / (4.0 * r * r))
        else:
            r, amp = tails["rate_b"], tails["amp_b"]
            k = (r * amp) ** 2 * math.exp(-2.0 * r * T)
            value += k * ((st + T) / (2.0 * r) + 1.0 / (4.0 * r * r))
    return value


def tau_bisection(prof: Profile, target: float, xtol: float = 1e-13) -> float:
    """Root of shift_integral(prof, tau) = target by bracketing (independent oracle)."""
    f = lambda tau: shift_integral(prof, tau) - target
    lo, hi = -1.0, 1.0
    limit = 0.9 * prof.T - abs(prof.shift)
    while f(lo) * f(hi) > 0.0:
        lo, hi = 2.0 * lo, 2.0 * hi
        if hi > limit:
            raise ProfileError(f"no shift in [-{limit:g}, {limit:g}] reaches {target:g}")
    return float(brentq(f, lo, hi, xtol=xtol))


def solve_tau_q1(P: float, kappa: float, n: int, p: Potential, prof: Profile,
                 cross_check: bool = True) -> float:
    """
    tau_u with P * int (z(t - tau) - sgn) dt = 2 c_W (n-1) kappa / (W''(a)(b-a)).
    Closed form through the shift identity, cross-checked by bisection.
    """
    if p.q < 1:
        raise ProfileError("solve_tau_q1 needs q = 1; use solve_tau_qlt1")
    if P <= 0:
        raise ValueError(f"perimeter P must be positive, got {P}")
    c_w = compute_cw(p)
    rhs = 2.0 * c_w * (n - 1) * kappa / (p.d2W_well("a") * p.width)
    tau = (compute_I0(prof) - rhs / P) / p.width
    if cross_check:
        tau_b = tau_bisection(prof, rhs / P)
        if abs(tau_b - tau) > 1e-8:
            logger.warning(f"[Check] tau closed form {tau:.12g} vs bisection {tau_b:.12g}")
    return float(tau)


def solve_tau_qlt1(prof: Profile) -> float:
    """tau_u with int (z(t - tau) - sgn) dt = 0, i.e. I_0/(b-a)."""
    return float(compute_I0(prof) / prof.potential.width)


def central_zero_shifted(p: Potential, mu: float) -> float:
    """Root of W'(s) + mu nearest c (the shifted central zero c_eps for mu = eps*lambda)."""
    f = lambda s: float(p.dW(s)) + mu
    quarter = p.width / 4.0
    brackets = [(p.c - quarter, p.c + quarter), (p.a + 1e-12 * p.width, p.b - 1e-12 * p.width)]
    for lo, hi in brackets:
        lo, hi = max(lo, p.a), min(hi, p.b)
        if f(lo) * f(hi) < 0.0:
            return float(brentq(f, lo, hi, xtol=1e-12))
        if f(p.c) == 0.0:
            return float(p.c)
    raise ProfileError(f"multiplier too large: W' + {mu:g} has no sign change in (a, b)")

"""
Isoperimetry Module

Relative isoperimetric functions of planar domains of unit area:
- pixel domains: relative perimeter, alpha distance, exhaustive oracle
  (global and alpha-constrained), annealing heuristic for plots
- analytic rectangles: quarter-disk / strip / complement branches and the
  local profile restricted to an alpha-ball around a known set
- diagnostics: one-sided derivatives, semi-concavity, level-set alpha check,
  erosion and the eroded isoperimetric bound, curvature limit sweep
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from report import ValidationReport

logger = logging.getLogger(__name__)

MAX_BRUTE_CELLS = 24
ALPHA_TOL = 1e-12
CHUNK = 1 << 20


class IsoperimetryError(ValueError):
    """Raised for unattainable volumes, oversized domains and empty erosions."""


# ============ PIXEL DOMAINS ============

@dataclass(frozen=True, eq=False)
class PixelDomain:
    mask: np.ndarray
    h: float

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        if mask.ndim != 2 or not mask.any():
            raise IsoperimetryError("domain mask must be a non-empty 2D array")

    @classmethod
    def rectangle(cls, rows: int, cols: int) -> "PixelDomain":
        return cls.from_mask(np.ones((rows, cols), dtype=bool))

    @classmethod
    def from_mask(cls, mask) -> "PixelDomain":
        """Domain of unit measure: h = 1/sqrt(#cells). Mask must be 4-connected."""
        mask = np.asarray(mask, dtype=bool)
        dom = cls(mask=mask, h=1.0 / math.sqrt(int(mask.sum())))
        if not dom.is_connected:
            raise IsoperimetryError("domain mask is not 4-connected")
        return dom

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    @property
    def measure(self) -> float:
        return self.n_cells * self.h * self.h

    @property
    def is_connected(self) -> bool:
        _, count = ndimage.label(self.mask)
        return count == 1

    @cached_property
    def cells(self) -> np.ndarray:
        """Flat (row-major) indices of the domain cells; bit i of a subset mask is cells[i]."""
        return np.flatnonzero(self.mask)

    @cached_property
    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Interior neighbour pairs as bit positions (i, j) into `cells`."""
        rows, cols = self.shape
        order = np.full(rows * cols, -1, dtype=np.int64)
        order[self.cells] = np.arange(self.n_cells)
        order = order.reshape(rows, cols)
        pairs = []
        for left, right in ((order[:, :-1], order[:, 1:]), (order[:-1, :], order[1:, :])):
            both = (left >= 0) & (right >= 0)
            pairs.append((left[both], right[both]))
        i = np.concatenate([p[0] for p in pairs])
        j = np.concatenate([p[1] for p in pairs])
        return i, j

    def region(self, cells_mask) -> "RegionSpec":
        return RegionSpec(self, np.asarray(cells_mask, dtype=bool))

    def region_from_bits(self, bits: int) -> "RegionSpec":
        mask = np.zeros(self.mask.size, dtype=bool)
        chosen = [i for i in range(self.n_cells) if (bits >> i) & 1]
        mask[self.cells[chosen]] = True
        return RegionSpec(self, mask.reshape(self.shape))


@dataclass(frozen=True, eq=False)
class RegionSpec:
    domain: PixelDomain
    mask: np.ndarray

    def __post_init__(self):
        if self.mask.shape != self.domain.shape:
            raise IsoperimetryError(f"region shape {self.mask.shape} != domain {self.domain.shape}")
        if np.any(self.mask & ~self.domain.mask):
            raise IsoperimetryError("region is not a subset of the domain")

    @property
    def measure(self) -> float:
        return int(self.mask.sum()) * self.domain.h ** 2

    def complement(self) -> "RegionSpec":
        return RegionSpec(self.domain, self.domain.mask & ~self.mask)

    def bits(self) -> int:
        flat = self.mask.ravel()[self.domain.cells]
        return int(sum(1 << int(i) for i in np.flatnonzero(flat)))


def perimeter_rel(E: RegionSpec, omega: Optional[PixelDomain] = None) -> float:
    """h times the number of interior edges separating E from its complement in the domain."""
    omega = omega or E.domain
    inside, e = omega.mask, E.mask
    horizontal = inside[:, :-1] & inside[:, 1:] & (e[:, :-1] != e[:, 1:])
    vertical = inside[:-1, :] & inside[1:, :] & (e[:-1, :] != e[1:, :])
    return float(omega.h * (int(horizontal.sum()) + int(vertical.sum())))


def alpha(E1: RegionSpec, E2: RegionSpec) -> float:
    """min(|E1 \\ E2|, |E2 \\ E1|)."""
    h2 = E1.domain.h ** 2
    return float(min(int((E1.mask & ~E2.mask).sum()), int((E2.mask & ~E1.mask).sum())) * h2)


def random_region(domain: PixelDomain, k: int, rng: np.random.Generator) -> RegionSpec:
    """Uniformly random subset of k cells."""
    mask = np.zeros(domain.mask.size, dtype=bool)
    mask[rng.choice(domain.cells, size=k, replace=False)] = True
    return domain.region(mask.reshape(domain.shape))


# ============ EXHAUSTIVE ORACLE ============

def _popcount(x: np.ndarray) -> np.ndarray:
    x = x - ((x >> np.uint32(1)) & np.uint32(0x55555555))
    x = (x & np.uint32(0x33333333)) + ((x >> np.uint32(2)) & np.uint32(0x33333333))
    x = (x + (x >> np.uint32(4))) & np.uint32(0x0F0F0F0F)
    return (x * np.uint32(0x01010101)) >> np.uint32(24)


def _attainable_cells(domain: PixelDomain, vol: float) -> int:
    h2 = domain.h ** 2
    k = vol / h2
    nearest = int(round(k))
    if abs(k - nearest) > 1e-9 * max(1.0, k) or not 0 <= nearest <= domain.n_cells:
        lo = max(0, math.floor(k))
        hi = min(domain.n_cells, math.ceil(k))
        raise IsoperimetryError(
            f"volume {vol:g} is not attainable on this grid; nearest attainable: "
            f"{lo * h2:.6g}, {hi * h2:.6g} (multiples of h^2={h2:.6g})"
        )
    return nearest


def _scan_chunk(start: int, stop: int, k: int, ei, ej, m0: Optional[int],
                delta_cells: float) -> Optional[Tuple[int, int]]:
    masks = np.arange(start, stop, dtype=np.uint32)
    masks = masks[_popcount(masks) == k]
    if m0 is not None and masks.size:
        base = np.uint32(m0)
        d1 = _popcount(masks & ~base)
        d2 = _popcount(base & ~masks)
        masks = masks[np.minimum(d1, d2) <= delta_cells]
    if not masks.size:
        return None
    count = np.zeros(masks.shape, dtype=np.uint32)
    for i, j in zip(ei, ej):
        count += ((masks >> np.uint32(i)) ^ (masks >> np.uint32(j))) & np.uint32(1)
    best = int(np.argmin(count))
    return int(count[best]), int(masks[best])


def iso_bruteforce(omega: PixelDomain, vol: float,
                   constraint: Optional[Tuple[RegionSpec, float]] = None,
                   threads: int = 1) -> Tuple[float, Optional[RegionSpec]]:
    """
    Exact discrete minimum of perimeter_rel over all subsets of measure `vol`
    (optionally with alpha(E0, E) <= delta). Ties go to the smallest bitmask.
    An empty feasible set gives (inf, None).
    """
    n = omega.n_cells
    if n > MAX_BRUTE_CELLS:
        raise IsoperimetryError(
            f"{n} cells exceed the exhaustive limit of {MAX_BRUTE_CELLS}; use iso_anneal"
        )
    k = _attainable_cells(omega, vol)
    ei, ej = omega.edges
    m0, delta_cells = None, 0.0
    if constraint is not None:
        E0, delta = constraint
        m0 = E0.bits()
        delta_cells = (delta + ALPHA_TOL) / omega.h ** 2

    total = 1 << n
    ranges = [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]
    scan = lambda r: _scan_chunk(r[0], r[1], k, ei, ej, m0, delta_cells)
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            found = list(pool.map(scan, ranges))
    else:
        found = [scan(r) for r in ranges]
    found = [f for f in found if f is not None]
    if not found:
        return math.inf, None
    edges, bits = min(found)
    return float(edges * omega.h), omega.region_from_bits(bits)


def iso_profile_bruteforce(omega: PixelDomain,
                           constraint: Optional[Tuple[RegionSpec, float]] = None,
                           threads: int = 1) -> "IsoProfile":
    """All attainable volumes k h^2, 0 < k < N."""
    h2 = omega.h ** 2
    vols = np.arange(1, omega.n_cells) * h2
    values = [iso_bruteforce(omega, v, constraint, threads)[0] for v in vols]
    return IsoProfile(vols=vols, values=np.asarray(values), provenance="brute-force")


def iso_anneal(omega: PixelDomain, vol: float, rng: np.random.Generator,
               steps: int = 20_000, t_start: float = 2.0, t_end: float = 0.02
               ) -> Tuple[float, RegionSpec]:
    """Simulated annealing over swap moves. Heuristic, for plots only."""
    k = _attainable_cells(omega, vol)
    current = random_region(omega, k, rng).mask.copy()
    cost = perimeter_rel(omega.region(current))
    best, best_cost = current.copy(), cost
    cells = omega.cells
    for step in range(steps):
        temp = t_start * (t_end / t_start) ** (step / max(steps - 1, 1))
        flat = current.ravel()
        ins = cells[flat[cells]]
        outs = cells[~flat[cells]]
        if not ins.size or not outs.size:
            break
        i, o = rng.choice(ins), rng.choice(outs)
        flat[i], flat[o] = False, True
        trial = perimeter_rel(omega.region(current))
        if trial <= cost or rng.random() < math.exp(-(trial - cost) / (temp * omega.h)):
            cost = trial
            if cost < best_cost:
                best, best_cost = current.copy(), cost
        else:
            flat[i], flat[o] = True, False
    return best_cost, omega.region(best)


# ============ ANALYTIC RECTANGLES ============

@dataclass(frozen=True)
class Rectangle:
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise IsoperimetryError(f"rectangle sides must be positive, got {self.width}, {self.height}")

    @classmethod
    def unit_area(cls, w: float) -> "Rectangle":
        return cls(w, 1.0 / w)

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def short_side(self) -> float:
        return min(self.width, self.height)

    def branches(self, vol: float) -> Dict[str, float]:
        """Perimeter of each competitor family at `vol` (inf where it does not fit)."""
        if not 0.0 < vol < self.area:
            raise IsoperimetryError(f"volume {vol:g} outside (0, {self.area:g})")
        quarter = lambda v: math.sqrt(math.pi * v) if math.sqrt(4 * v / math.pi) <= self.short_side else math.inf
        return {
            "quarter_disk": quarter(vol),
            "strip": self.short_side,
            "co_quarter_disk": quarter(self.area - vol),
        }

    def iso(self, vol: float) -> float:
        return min(self.branches(vol).values())

    def branch(self, vol: float) -> str:
        values = self.branches(vol)
        return min(values, key=values.get)

    def eroded(self, tau: float) -> "Rectangle":
        if tau < 0:
            raise IsoperimetryError(f"erosion depth must be nonnegative, got {tau}")
        w, h = self.width - 2 * tau, self.height - 2 * tau
        if w <= 0 or h <= 0:
            raise IsoperimetryError(f"erosion by {tau:g} leaves an empty domain")
        return Rectangle(w, h)


def iso_analytic_rectangle(w: float, vol: float) -> float:
    """I_Omega(vol) for the rectangle of sides w and 1/w."""
    if not 0.0 < vol < 1.0:
        raise IsoperimetryError(f"volume must lie in (0, 1), got {vol}")
    return Rectangle.unit_area(w).iso(vol)


SIDES = ("left", "right", "bottom", "top")
CORNERS = ("ll", "lr", "ul", "ur")


@dataclass(frozen=True)
class AnalyticSet:
    rect: Rectangle
    kind: str          # strip | quarter_disk | co_quarter_disk
    place: str         # side for strips, corner for disks
    volume: float

    @property
    def radius(self) -> float:
        inner = self.volume if self.kind == "quarter_disk" else self.rect.area - self.volume
        return math.sqrt(4.0 * inner / math.pi)

    @property
    def thickness(self) -> float:
        across = self.rect.height if self.place in ("left", "right") else self.rect.width
        return self.volume / across

    @property
    def perimeter(self) -> float:
        if self.kind == "strip":
            return self.rect.height if self.place in ("left", "right") else self.rect.width
        return math.pi * self.radius / 2.0

    @property
    def curvature(self) -> float:
        """Curvature of the interface, positive when E is convex there."""
        if self.kind == "strip":
            return 0.0
        return (1.0 if self.kind == "quarter_disk" else -1.0) / self.radius

    @property
    def feasible(self) -> bool:
        if not 0.0 < self.volume < self.rect.area:
            return False
        if self.kind == "strip":
            depth = self.rect.width if self.place in ("left", "right") else self.rect.height
            return self.thickness < depth
        return self.radius <= self.rect.short_side

    def _corner(self) -> Tuple[float, float]:
        x = 0.0 if self.place[1] == "l" else self.rect.width
        y = 0.0 if self.place[0] == "l" else self.rect.height
        return x, y

    def contains(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.kind == "strip":
            t = self.thickness
            return {
                "left": x < t,
                "right": x > self.rect.width - t,
                "bottom": y < t,
                "top": y > self.rect.height - t,
            }[self.place]
        cx, cy = self._corner()
        disk = (x - cx) ** 2 + (y - cy) ** 2 < self.radius ** 2
        return disk if self.kind == "quarter_disk" else ~disk

    def with_volume(self, vol: float) -> "AnalyticSet":
        return AnalyticSet(self.rect, self.kind, self.place, vol)

    @classmethod
    def placements(cls, rect: Rectangle, vol: float) -> List["AnalyticSet"]:
        """Every feasible competitor of volume `vol`."""
        out = [cls(rect, "strip", side, vol) for side in SIDES]
        out += [cls(rect, kind, corner, vol) for kind in ("quarter_disk", "co_quarter_disk")
                for corner in CORNERS]
        return [s for s in out if s.feasible]


@lru_cache(maxsize=8)
def _raster_grid(width: float, height: float, res: int):
    nx, ny = max(1, int(math.ceil(width * res))), max(1, int(math.ceil(height * res)))
    x = (np.arange(nx) + 0.5) * (width / nx)
    y = (np.arange(ny) + 0.5) * (height / ny)
    X, Y = np.meshgrid(x, y)
    return X, Y, (width / nx) * (height / ny)


def alpha_analytic(E1: AnalyticSet, E2: AnalyticSet, res: int = 512) -> float:
    """alpha distance by rasterisation at `res` points per unit length (nested sets give 0)."""
    X, Y, cell = _raster_grid(E1.rect.width, E1.rect.height, res)
    m1, m2 = E1.contains(X, Y), E2.contains(X, Y)
    return float(min(int((m1 & ~m2).sum()), int((m2 & ~m1).sum())) * cell)


def local_iso_rectangle(rect: Rectangle, E0: AnalyticSet, delta: float, vol: float,
                        res: int = 512) -> float:
    """min perimeter over placements of volume `vol` with alpha(E0, E) <= delta."""
    best = math.inf
    for cand in AnalyticSet.placements(rect, vol):
        if cand.perimeter >= best:
            continue
        if alpha_analytic(E0, cand, res) <= delta + ALPHA_TOL:
            best = cand.perimeter
    return best


# ============ PROFILES AND DERIVATIVES ============

@dataclass
class IsoProfile:
    vols: np.ndarray
    values: np.ndarray
    provenance: str = "analytic"
    branches: Optional[List[str]] = None
    derivatives: Dict[float, Tuple[float, float]] = field(default_factory=dict)
    semiconcavity: Optional[float] = None

    def value_at(self, vol: float) -> float:
        idx = np.flatnonzero(np.abs(self.vols - vol) <= 1e-12)
        if not idx.size:
            raise IsoperimetryError(f"profile has no sample at {vol:g}")
        return float(self.values[idx[0]])

    def rows(self) -> List[Dict[str, object]]:
        out = []
        for i, (v, val) in enumerate(zip(self.vols, self.values)):
            d = self.derivatives.get(float(v), (None, None))
            out.append({
                "vol": float(v),
                "value": float(val),
                "branch": self.branches[i] if self.branches else self.provenance,
                "D_minus": d[0],
                "D_plus": d[1],
            })
        return out


def geometric_offsets(v0: float, base: float = 1e-3, levels: int = 3) -> np.ndarray:
    """v0 and v0 +- base*2^-k, k = 0..levels-1, sorted."""
    offs = base * 0.5 ** np.arange(levels)
    return np.sort(np.concatenate([[v0], v0 - offs, v0 + offs]))


def iso_profile_rectangle(rect: Rectangle, vols: Iterable[float]) -> IsoProfile:
    vols = np.asarray(list(vols), dtype=float)
    return IsoProfile(
        vols=vols,
        values=np.array([rect.iso(v) for v in vols]),
        provenance="analytic",
        branches=[rect.branch(v) for v in vols],
    )


def iso_profile_local(rect: Rectangle, E0: AnalyticSet, delta: float, vols: Iterable[float],
                      res: int = 512) -> IsoProfile:
    vols = np.asarray(list(vols), dtype=float)
    values = np.array([local_iso_rectangle(rect, E0, delta, v, res) for v in vols])
    return IsoProfile(vols=vols, values=values, provenance=f"local(delta={delta:g})")


def iso_profile_from_function(func: Callable[[float], float], vols: Iterable[float],
                              provenance: str = "function") -> IsoProfile:
    vols = np.asarray(list(vols), dtype=float)
    return IsoProfile(vols=vols, values=np.array([func(v) for v in vols]), provenance=provenance)


def _one_side(vols, values, v0, f0, side) -> float:
    mask = vols > v0 if side > 0 else vols < v0
    offs = np.abs(vols[mask] - v0)
    if offs.size < 2:
        raise IsoperimetryError(f"need two samples {'above' if side > 0 else 'below'} {v0:g}")
    order = np.argsort(offs)[:2]
    h1, h2 = offs[order]
    q1, q2 = (side * (values[mask][order] - f0)) / np.array([h1, h2])
    # linear-in-h error removed
    return float((h2 * q1 - h1 * q2) / (h2 - h1))


def one_sided_derivatives(profile: IsoProfile, v0: float) -> Tuple[float, float]:
    """Richardson-extrapolated (D-, D+) at v0 from the two closest samples on each side."""
    vols = np.asarray(profile.vols, dtype=float)
    values = np.asarray(profile.values, dtype=float)
    f0 = profile.value_at(v0)
    d_minus = _one_side(vols, values, v0, f0, -1)
    d_plus = _one_side(vols, values, v0, f0, +1)
    if d_minus < d_plus - 1e-8:
        logger.warning(f"[Check] D-={d_minus:.6g} < D+={d_plus:.6g} at {v0:g}")
    profile.derivatives[float(v0)] = (d_minus, d_plus)
    return d_minus, d_plus


def semiconcavity_estimate(profile: IsoProfile, J: Tuple[float, float]) -> float:
    """Least C >= 0 with every second divided difference on J at most C."""
    vols = np.asarray(profile.vols, dtype=float)
    inside = (vols >= J[0]) & (vols <= J[1])
    v = vols[inside]
    f = np.asarray(profile.values, dtype=float)[inside]
    if v.size < 5:
        raise IsoperimetryError(f"need at least 5 samples in {J}, got {v.size}")
    order = np.argsort(v)
    v, f = v[order], f[order]
    h = np.diff(v)
    slopes = np.diff(f) / h
    second = 2.0 * np.diff(slopes) / (h[:-1] + h[1:])
    c = max(0.0, float(np.max(second)))
    profile.semiconcavity = c
    return c


# ============ LEVEL SETS ============

@dataclass
class LevelSetCheck:
    status: str            # pass | fail | hypothesis not met
    l1_distance: float
    bound: float
    worst_alpha: float = 0.0
    worst_threshold: Optional[float] = None

    def __bool__(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> Dict[str, object]:
        return {
            "status": self.status,
            "l1_distance": self.l1_distance,
            "bound": self.bound,
            "worst_alpha": self.worst_alpha,
            "worst_threshold": self.worst_threshold,
        }


def level_set_alpha_check(u: np.ndarray, E0: RegionSpec, delta: float, a: float, b: float
                          ) -> LevelSetCheck:
    """
    If ||u - u_E0||_1 <= (b-a) delta, check alpha(E0, {u <= s}) <= delta for
    every threshold s. Sublevel sets only change at values of u, so those
    (plus one threshold below and above the range) cover the sweep exactly.
    """
    dom = E0.domain
    h2 = dom.h ** 2
    inside = dom.mask
    u_e0 = np.where(E0.mask, a, b)
    l1 = float(np.abs(u - u_e0)[inside].sum() * h2)
    bound = (b - a) * delta
    if l1 > bound + ALPHA_TOL:
        return LevelSetCheck("hypothesis not met", l1, bound)

    vals = u[inside]
    in_e0 = E0.mask[inside]
    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]
    cum_e0 = np.cumsum(in_e0[order])
    # last index of each distinct value: sublevel set {u <= s}
    last = np.flatnonzero(np.r_[sorted_vals[1:] != sorted_vals[:-1], True])
    size = last + 1
    common = cum_e0[last]
    e0_total = int(in_e0.sum())
    alphas = np.minimum(size - common, e0_total - common) * h2
    # s below min u: empty sublevel set, alpha = 0
    worst = int(np.argmax(alphas))
    worst_alpha = float(alphas[worst])
    status = "pass" if worst_alpha <= delta + ALPHA_TOL else "fail"
    return LevelSetCheck(status, l1, bound, worst_alpha, float(sorted_vals[last[worst]]))


# ============ EROSION ============

def erode(omega, tau: float):
    """Cells (or sub-rectangle) at distance > tau from the complement."""
    if isinstance(omega, Rectangle):
        return omega.eroded(tau)
    if tau < 0:
        raise IsoperimetryError(f"erosion depth must be nonnegative, got {tau}")
    padded = np.pad(omega.mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    keep = omega.mask & ((dist - 0.5) * omega.h > tau)
    if not keep.any():
        raise IsoperimetryError(f"erosion by {tau:g} leaves an empty domain")
    return PixelDomain(mask=keep, h=omega.h)


def eroded_iso_bound_check(U: Rectangle, tau: float, samples: Sequence[float],
                           C1: float = 1.0, n: int = 2) -> ValidationReport:
    """Largest C2 with I_{U_tau}(v) >= C2 v^((n-1)/n) on samples in (C1 tau, |U_tau|/2]."""
    eroded = U.eroded(tau)
    gamma = (n - 1) / n
    window = [v for v in samples if C1 * tau < v <= eroded.area / 2.0]
    report = ValidationReport(subject=f"eroded bound tau={tau:g}")
    if not window:
        report.add("window_nonempty", False, value=0, detail="no sample inside (C1 tau, |U_tau|/2]")
        return report
    ratios = [eroded.iso(v) / v ** gamma for v in window]
    c2 = float(min(ratios))
    report.measured.update({"C2": c2, "window": (min(window), max(window)), "excluded":
                            len(samples) - len(window)})
    report.add("positive_constant", c2 > 0.0, value=c2, tol=0.0)
    logger.info(f"[Check] eroded bound tau={tau:g}: C2={c2:.6g} on {len(window)} samples")
    return report


# ============ CURVATURE LIMIT ============

def curvature_limit_sweep(rect: Rectangle, E0: AnalyticSet, kappa_known: float,
                          deltas: Sequence[float], n: int = 2, base: float = 1e-3,
                          tol: float = 1e-3, res: int = 512) -> ValidationReport:
    """One-sided derivatives of the local profile at |E0| as delta shrinks."""
    vm = E0.volume
    vols = geometric_offsets(vm, base=base, levels=2)
    target = (n - 1) * kappa_known
    rows = []
    for delta in sorted(deltas, reverse=True):
        prof = iso_profile_local(rect, E0, delta, vols, res)
        d_minus, d_plus = one_sided_derivatives(prof, vm)
        rows.append({"delta": float(delta), "D_minus": d_minus, "D_plus": d_plus})
        logger.debug(f"[Check] delta={delta:g}: D-={d_minus:.6g} D+={d_plus:.6g}")
    report = ValidationReport(subject=f"curvature limit {E0.kind}@{E0.place}")
    report.measured.update({"target": target, "sweep": rows})
    last = rows[-1]
    report.add("limit_minus", abs(last["D_minus"] - target) <= tol, value=last["D_minus"], tol=tol)
    report.add("limit_plus", abs(last["D_plus"] - target) <= tol, value=last["D_plus"], tol=tol)
    report.add("kink_order", all(r["D_minus"] >= r["D_plus"] - 1e-8 for r in rows),
               value=min(r["D_minus"] - r["D_plus"] for r in rows), tol=1e-8)
    return report

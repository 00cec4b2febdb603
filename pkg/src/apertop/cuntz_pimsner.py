"""One-dimensional structure: ordering, the integer degree cocycle, unique
factorization into elementary steps, and bimodule inner-product checks.

Elementary steps live in the displacement window (r, 2R]: with open
discreteness balls and closed density balls an (r,R)-Delone set in d = 1 has
gaps in [2r, 2R], so (r, 2R] is the faithful implementable version of the
nominal (r, R) step interval; uniqueness of the factorization is certified
by exhaustive search rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delone import DeloneSet, DeloneError


@dataclass
class OrderedLattice:
    base: DeloneSet
    sites: np.ndarray  # ascending, contains 0
    origin_index: int
    step_lo: float
    step_hi: float

    def __len__(self):
        return len(self.sites)

    def site(self, n: int) -> float:
        """y_n with y_0 = 0."""
        i = self.origin_index + n
        if i < 0 or i >= len(self.sites):
            raise DeloneError(f"degree {n} outside the sampled window")
        return float(self.sites[i])

    def gaps(self) -> np.ndarray:
        return np.diff(self.sites)


def order_lattice(ds: DeloneSet) -> OrderedLattice:
    """Index the sites of a d=1 sample as y_n, y_0 = 0, verifying the gap bounds."""
    if ds.dimension != 1:
        raise DeloneError("ordering requires d = 1")
    sites = np.sort(ds.points[:, 0])
    origin = int(np.argmin(np.abs(sites)))
    if abs(sites[origin]) > ds.patch_tol + 1e-9:
        raise DeloneError("0 is not a site of the sample")
    lo, hi = ds.r, 2 * ds.R
    gaps = np.diff(sites)
    bad = np.nonzero((gaps <= lo) | (gaps > hi + 1e-9))[0]
    if bad.size:
        k = int(bad[0])
        raise DeloneError(
            f"gap {gaps[k]:.6f} between y={sites[k]:.6f} and y={sites[k+1]:.6f} "
            f"violates ({lo:.6f}, {hi:.6f}]"
        )
    return OrderedLattice(base=ds, sites=sites, origin_index=origin, step_lo=lo, step_hi=hi)


def degree(ol: OrderedLattice, x: float) -> int:
    """The integer n with y_n = x."""
    i = int(np.argmin(np.abs(ol.sites - x)))
    if abs(ol.sites[i] - x) > ol.base.patch_tol + 1e-9:
        raise DeloneError(f"{x} is not a site")
    return i - ol.origin_index


def factorize(ol: OrderedLattice, x: float) -> list:
    """Decompose the translation to x into elementary steps, certifying uniqueness.

    Steps are the consecutive gaps from 0 to x (mirrored for x < 0); the
    certificate enumerates every step sequence within the displacement window
    that reaches x and checks that exactly one exists.
    """
    n = degree(ol, x)
    if n == 0:
        return []
    lo_i, hi_i = sorted((ol.origin_index, ol.origin_index + n))
    seg = ol.sites[lo_i:hi_i + 1]
    steps = list(np.diff(seg))
    if n < 0:
        steps = [-s for s in reversed(steps)]
    assert abs(sum(steps) - x) < 1e-9
    count = _count_step_paths(ol, x)
    if count != 1:
        raise DeloneError(f"factorization not unique: {count} step paths reach {x}")
    return steps


def _count_step_paths(ol: OrderedLattice, x: float) -> int:
    sign = 1.0 if x > 0 else -1.0
    target = abs(x)
    sites = ol.sites if sign > 0 else -ol.sites[::-1]
    start = float(0.0)
    tol = 1e-9
    stack = [start]
    count = 0
    while stack:
        pos = stack.pop()
        if abs(pos - target) < tol:
            count += 1
            continue
        if pos > target + tol:
            continue
        nxt = sites[(sites > pos + ol.step_lo) & (sites <= pos + ol.step_hi + tol)]
        stack.extend(float(v) for v in nxt)
    return count


def degree_additivity_defects(ol: OrderedLattice) -> int:
    """Max |deg(x) + deg_x(y) - deg(x + y)| over composable pairs in the window.

    deg_x is the degree in the sample recentred at x; exact integers, so any
    nonzero value falsifies additivity.
    """
    worst = 0
    sites = ol.sites
    for x in sites:
        nx = degree(ol, x)
        rec = sites - x  # the recentred sample
        order = np.sort(rec)
        oi = int(np.argmin(np.abs(order)))
        for y in rec:
            if x + y < sites[0] - 1e-9 or x + y > sites[-1] + 1e-9:
                continue
            ny = int(np.argmin(np.abs(order - y))) - oi
            nxy = degree(ol, x + y)
            worst = max(worst, abs(nx + ny - nxy))
    return worst


# ---------------------------------------------------------------------------
# bimodule inner products

# Kernels are callables k(site, displacement) where `site` identifies the
# transversal point (the sample recentred at that site) and the displacement
# lies in the elementary window; transversal functions are callables g(site).


def _successor(ol: OrderedLattice, i: int) -> int:
    if i + 1 >= len(ol.sites):
        raise DeloneError("site has no successor in the window")
    return i + 1


def right_inner(ol: OrderedLattice, f1, f2) -> dict:
    """(f1 | f2)(omega_s) = conj(f1) f2 evaluated on the step arriving at s."""
    out = {}
    for i in range(1, len(ol.sites)):
        s = float(ol.sites[i])
        t = float(ol.sites[i - 1])
        g = s - t
        out[s] = np.conj(f1(t, g)) * f2(t, g)
    return out


def left_inner(ol: OrderedLattice, f1, f2) -> dict:
    """{C(Omega)}(f1 | f2)(omega_s) = f1 conj(f2) on the step leaving s."""
    out = {}
    for i in range(len(ol.sites) - 1):
        s = float(ol.sites[i])
        g = float(ol.sites[i + 1]) - s
        out[s] = f1(s, g) * np.conj(f2(s, g))
    return out


def imprimitivity_defect(ol: OrderedLattice, f1, f2, f3) -> float:
    """max | left(f1|f2).f3 - f1.(f2|f3) | over sampled elementary elements."""
    li = left_inner(ol, f1, f2)
    ri = right_inner(ol, f2, f3)
    worst = 0.0
    for i in range(len(ol.sites) - 1):
        s = float(ol.sites[i])
        nxt = float(ol.sites[i + 1])
        g = nxt - s
        lhs = li[s] * f3(s, g)
        if nxt not in ri:
            continue
        rhs = f1(s, g) * ri[nxt]
        worst = max(worst, abs(lhs - rhs))
    return worst


def adjoint_compat_defect(ol: OrderedLattice, f1, f2) -> float:
    """max | (f1|f2)* - (f2|f1) | pointwise over sampled transversal points."""
    a = right_inner(ol, f1, f2)
    b = right_inner(ol, f2, f1)
    return max(abs(np.conj(a[s]) - b[s]) for s in a)

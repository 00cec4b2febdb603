"""Finite samples of (r,R)-Delone point sets and their local patches.

A sample carries its declared uniform-discreteness radius ``r`` (open balls
of radius r hold at most one point, i.e. pairwise distances >= 2r) and
relative-density radius ``R`` (every closed ball of radius R centered in the
R-eroded window holds at least one point).  Both are certificates checked by
:func:`verify_delone`, not tight geometric constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

PHI = (1.0 + np.sqrt(5.0)) / 2.0


class DeloneError(ValueError):
    """Raised when a construction or precondition on a Delone sample fails."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned window [lo_1,hi_1] x ... x [lo_d,hi_d]."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise DeloneError("box bounds dimension mismatch")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise DeloneError("window too small")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))

    @property
    def dimension(self):
        return len(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def contains(self, x, slack: float = 1e-9) -> bool:
        return bool(
            np.all(np.asarray(x) >= np.asarray(self.lo) - slack)
            and np.all(np.asarray(x) <= np.asarray(self.hi) + slack)
        )

    def eroded(self, margin: float) -> "Box":
        lo = tuple(l + margin for l in self.lo)
        hi = tuple(h - margin for h in self.hi)
        if any(h <= l for l, h in zip(lo, hi)):
            raise DeloneError(f"window too small to erode by {margin}")
        return Box(lo, hi)

    def shifted(self, a) -> "Box":
        a = np.asarray(a, float)
        return Box(tuple(np.asarray(self.lo) - a), tuple(np.asarray(self.hi) - a))

    def ball_inside(self, center, radius: float, slack: float = 1e-9) -> bool:
        c = np.asarray(center, float)
        return bool(
            np.all(c - radius >= np.asarray(self.lo) - slack)
            and np.all(c + radius <= np.asarray(self.hi) + slack)
        )


@dataclass(frozen=True)
class DeloneSet:
    """Finite sample of an (r,R)-Delone set restricted to an axis-aligned window."""

    dimension: int
    points: np.ndarray
    r: float
    R: float
    window: Box
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, float))
        if pts.shape[0] == 0:
            raise DeloneError("empty point set")
        if pts.shape[1] != self.dimension:
            raise DeloneError("point dimension mismatch")
        # canonical lexicographic order makes every downstream build deterministic
        order = np.lexsort(pts.T[::-1])
        object.__setattr__(self, "points", pts[order])
        if self.r <= 0 or self.R <= 0:
            raise DeloneError("radii must be positive")

    def __len__(self):
        return self.points.shape[0]

    @property
    def patch_tol(self) -> float:
        # dedup grid for patch keys: 1e-9 x window diameter (exact for integer lattices)
        return 1e-9 * self.window.diameter

    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def index_of(self, x, tol: float = None) -> int:
        tol = self.patch_tol if tol is None else tol
        d, i = self.tree().query(np.asarray(x, float))
        if d > max(tol, 1e-9):
            raise DeloneError(f"site {x} not in set")
        return int(i)


@dataclass(frozen=True)
class Patch:
    """Pattern (set - x) within a closed ball B(0; radius), canonicalized for hashing."""

    radius: float
    relative_points: np.ndarray
    canonical_key: tuple

    @staticmethod
    def from_points(rel: np.ndarray, radius: float, tol: float) -> "Patch":
        rel = np.atleast_2d(np.asarray(rel, float))
        if tol <= 0:
            tol = 1e-12
        keyed = np.round(rel / tol).astype(np.int64)
        order = np.lexsort(keyed.T[::-1])
        rel = rel[order]
        keyed = keyed[order]
        key = tuple(map(tuple, keyed))
        return Patch(radius=float(radius), relative_points=rel, canonical_key=key)

    def __eq__(self, other):
        return isinstance(other, Patch) and self.canonical_key == other.canonical_key

    def __hash__(self):
        return hash(self.canonical_key)

    def __len__(self):
        return self.relative_points.shape[0]

    def restricted(self, radius: float, tol: float) -> "Patch":
        rel = self.relative_points
        keep = np.linalg.norm(rel, axis=1) <= radius + tol
        return Patch.from_points(rel[keep], radius, tol)


# ---------------------------------------------------------------------------
# generators


def generate_periodic(d: int, spacing: float, window: Box) -> DeloneSet:
    """Scaled integer lattice inside the window, r = spacing/2, R = spacing*sqrt(d)/2."""
    if d not in (1, 2, 3):
        raise DeloneError("d must be 1, 2 or 3")
    if spacing <= 0:
        raise DeloneError("spacing must be positive")
    axes = []
    for k in range(d):
        n0 = int(np.ceil(window.lo[k] / spacing - 1e-9))
        n1 = int(np.floor(window.hi[k] / spacing + 1e-9))
        if n1 < n0:
            raise DeloneError("window too small")
        axes.append(np.arange(n0, n1 + 1) * spacing)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return DeloneSet(
        dimension=d,
        points=pts,
        r=spacing / 2.0,
        R=spacing * np.sqrt(d) / 2.0,
        window=window,
        provenance={"generator": "periodic", "spacing": spacing},
    )


def _fibonacci_points(lo: float, hi: float, offset: float) -> np.ndarray:
    # cut-and-project Z^2 -> R with slope 1/phi, scaled so the two gaps are 1 and phi
    st = 1.0 / np.sqrt(2.0 + PHI)  # sin(theta), tan(theta) = 1/phi
    ct = PHI * st
    scale = 1.0 / st
    amin = int(np.floor(lo / scale / ct)) - 3
    amax = int(np.ceil(hi / scale / ct)) + 3
    out = []
    for a in range(amin, amax + 1):
        blo = int(np.floor((offset + a * st) / ct)) - 1
        bhi = int(np.ceil((offset + a * st + ct + st) / ct)) + 1
        for b in range(blo, bhi + 1):
            perp = -a * st + b * ct - offset
            if 0.0 <= perp < ct + st:
                pos = (a * ct + b * st) * scale
                if lo - 1e-9 <= pos <= hi + 1e-9:
                    out.append(pos)
    return np.array(sorted(out))[:, None]


def _ammann_beenker_points(window: Box, offset) -> np.ndarray:
    # cut-and-project Z^4 -> R^2; acceptance domain is the perp projection of the unit 4-cube
    par = np.array([[np.cos(k * np.pi / 4), np.sin(k * np.pi / 4)] for k in range(4)])
    per = np.array([[np.cos(3 * k * np.pi / 4), np.sin(3 * k * np.pi / 4)] for k in range(4)])
    corners = np.array(
        [[i, j, k, l] for i in (0, 1) for j in (0, 1) for k in (0, 1) for l in (0, 1)], float
    )
    octagon = corners @ per
    octagon -= octagon.mean(axis=0)
    from scipy.spatial import ConvexHull

    eqs = ConvexHull(octagon).equations
    # bound integer coordinates through the inverse of the (par|per) block map
    M = np.hstack([par, per]).T  # maps v in R^4 to (par, per) in R^4
    Minv = np.linalg.inv(M)
    par_bound = np.array([max(abs(window.lo[k]), abs(window.hi[k])) for k in range(2)])
    per_bound = np.max(np.linalg.norm(octagon, axis=1)) + np.linalg.norm(offset) + 1.0
    bound = np.abs(Minv) @ np.concatenate([par_bound + 1.0, [per_bound, per_bound]])
    ranges = [np.arange(-int(np.ceil(b)), int(np.ceil(b)) + 1) for b in bound]
    off = np.asarray(offset, float)
    pts = []
    bb, cc, dd = np.meshgrid(ranges[1], ranges[2], ranges[3], indexing="ij")
    rest = np.stack([bb.ravel(), cc.ravel(), dd.ravel()], axis=1).astype(float)
    for a in ranges[0]:
        v = np.hstack([np.full((rest.shape[0], 1), float(a)), rest])
        perp = v @ per - off
        inside = np.all(perp @ eqs[:, :2].T + eqs[:, 2] <= 1e-12, axis=1)
        if not np.any(inside):
            continue
        q = v[inside] @ par
        keep = np.all((q >= np.array(window.lo) - 1e-9) & (q <= np.array(window.hi) + 1e-9), axis=1)
        pts.append(q[keep])
    if not pts:
        raise DeloneError("window too small")
    return np.vstack(pts)


def generate_cut_and_project(scheme: str, window: Box, offset=None) -> DeloneSet:
    """Quasicrystal vertex sets: 'fibonacci' (d=1) or 'ammann_beenker' (d=2).

    (r, R) are measured from the sample: r = half the minimal pairwise
    distance, R = the covering radius estimated on a grid of pitch r/2.
    """
    if scheme == "fibonacci":
        if window.dimension != 1:
            raise DeloneError("fibonacci requires a 1-d window")
        off = 0.1234567 if offset is None else float(offset)
        pts = _fibonacci_points(window.lo[0], window.hi[0], off)
    elif scheme == "ammann_beenker":
        if window.dimension != 2:
            raise DeloneError("ammann_beenker requires a 2-d window")
        off = (0.12345, 0.05678) if offset is None else tuple(offset)
        pts = _ammann_beenker_points(window, off)
    else:
        raise DeloneError(f"unsupported cut-and-project scheme {scheme!r}")
    if pts.shape[0] < 2:
        raise DeloneError("window too small")
    r, R = _measure_constants(pts, window)
    return DeloneSet(
        dimension=window.dimension,
        points=pts,
        r=r,
        R=R,
        window=window,
        provenance={"generator": scheme, "offset": off},
    )


def _measure_constants(pts: np.ndarray, window: Box):
    tree = cKDTree(pts)
    dmin = tree.query(pts, k=2)[0][:, 1].min()
    r = dmin / 2.0
    pitch = max(r / 2.0, 1e-3)
    try:
        probe = _cover_grid(window.eroded(dmin), pitch)
        R = float(tree.query(probe)[0].max()) + pitch  # pitch slack certifies the grid bound
    except DeloneError:
        R = dmin
    return float(r), R


def _cover_grid(box: Box, pitch: float) -> np.ndarray:
    axes = [
        np.linspace(box.lo[k], box.hi[k], max(2, int(np.ceil((box.hi[k] - box.lo[k]) / pitch)) + 1))
        for k in range(box.dimension)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def generate_amorphous(d: int, r: float, target_R: float, window: Box, seed: int) -> DeloneSet:
    """Random sequential insertion at min distance 2r, then hole filling to density R."""
    if target_R <= 2 * r:
        raise DeloneError("infeasible: target_R must exceed 2r")
    rng = np.random.default_rng(seed)
    lo = np.array(window.lo)
    hi = np.array(window.hi)
    vol = np.prod(hi - lo)
    n_attempts = int(20 * vol / (2 * r) ** d) + 100
    pts = []
    tree = None
    for _ in range(n_attempts):
        cand = lo + rng.random(d) * (hi - lo)
        if tree is None or tree.query(cand)[0] >= 2 * r:
            pts.append(cand)
            tree = cKDTree(np.array(pts))
    # hole filling: insert at the worst-covered grid point until every site of the
    # eroded window is within target_R - pitch margin of a point
    pitch = r / 2.0
    grid = _cover_grid(window.eroded(target_R), pitch)
    slack = pitch * np.sqrt(d) / 2.0
    for _ in range(10 * len(grid)):
        tree = cKDTree(np.array(pts))
        dists = tree.query(grid)[0]
        worst = int(np.argmax(dists))
        if dists[worst] <= target_R - slack:
            break
        cand = grid[worst]
        if tree.query(cand)[0] < 2 * r:
            raise DeloneError(
                f"infeasible amorphous sample: hole at {cand} cannot be filled "
                f"(nearest point {tree.query(cand)[0]:.4f} < 2r = {2*r:.4f})"
            )
        pts.append(cand)
    else:
        raise DeloneError("hole filling did not converge")
    return DeloneSet(
        dimension=d,
        points=np.array(pts),
        r=r,
        R=target_R,
        window=window,
        provenance={"generator": "amorphous", "seed": seed, "r": r, "target_R": target_R},
    )


def perturb(ds: DeloneSet, amplitude: float, seed: int) -> DeloneSet:
    """Displace each point by a random vector of norm <= amplitude.

    Moves that would violate pairwise distance 2(r - amplitude) or leave the
    window are reverted.  The output is certified with (r - amplitude,
    R + amplitude).
    """
    if amplitude < 0 or amplitude >= ds.r / 2:
        raise DeloneError("amplitude must lie in [0, r/2)")
    if amplitude == 0:
        return DeloneSet(
            ds.dimension, ds.points.copy(), ds.r, ds.R, ds.window,
            {**ds.provenance, "perturb": {"amplitude": 0.0, "seed": seed}},
        )
    rng = np.random.default_rng(seed)
    d = ds.dimension
    direction = rng.normal(size=(len(ds), d))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    radius = amplitude * rng.random(len(ds)) ** (1.0 / d)
    moves = direction * radius[:, None]
    new_pts = ds.points.copy()
    r_new = ds.r - amplitude
    for i in range(len(ds)):
        cand = ds.points[i] + moves[i]
        if not ds.window.contains(cand, slack=0):
            continue
        others = np.delete(new_pts, i, axis=0)
        if np.min(np.linalg.norm(others - cand, axis=1)) >= 2 * r_new:
            new_pts[i] = cand
    return DeloneSet(
        dimension=d,
        points=new_pts,
        r=r_new,
        R=ds.R + amplitude,
        window=ds.window,
        provenance={**ds.provenance, "perturb": {"amplitude": amplitude, "seed": seed}},
    )


# ---------------------------------------------------------------------------
# verification and patches


@dataclass(frozen=True)
class DeloneReport:
    discrete_ok: bool
    dense_ok: bool
    worst_gap_center: tuple
    min_pairwise: float

    @property
    def ok(self) -> bool:
        return self.discrete_ok and self.dense_ok


def verify_delone(ds: DeloneSet) -> DeloneReport:
    """Check the declared (r, R) certificates on the sample.

    Density is checked on a grid of pitch r/2 over the R-eroded window; the
    check is a certified approximation sound up to the grid pitch.
    """
    tree = ds.tree()
    if len(ds) >= 2:
        min_pair = float(tree.query(ds.points, k=2)[0][:, 1].min())
    else:
        min_pair = np.inf
    discrete_ok = min_pair >= 2 * ds.r - 1e-9
    try:
        grid = _cover_grid(ds.window.eroded(ds.R), ds.r / 2.0)
        dists = tree.query(grid)[0]
        worst = int(np.argmax(dists))
        dense_ok = bool(dists[worst] <= ds.R + 1e-9)
        worst_center = tuple(grid[worst])
    except DeloneError:
        # window thinner than 2R: nothing to check
        dense_ok = True
        worst_center = tuple(np.asarray(ds.window.lo))
    return DeloneReport(
        discrete_ok=bool(discrete_ok),
        dense_ok=dense_ok,
        worst_gap_center=worst_center,
        min_pairwise=min_pair,
    )


def patch_at(ds: DeloneSet, x, radius: float) -> Patch:
    """Pattern (points - x) within the closed ball B(0; radius); x must be a site."""
    x = np.asarray(x, float)
    ds.index_of(x)
    if not ds.window.ball_inside(x, radius):
        raise DeloneError("insufficient sample: patch ball exits window")
    rel = ds.points - x
    keep = np.linalg.norm(rel, axis=1) <= radius + ds.patch_tol
    return Patch.from_points(rel[keep], radius, ds.patch_tol)


def eligible_centers(ds: DeloneSet, radius: float) -> np.ndarray:
    """Indices of sites whose radius-ball lies inside the window."""
    lo = np.array(ds.window.lo) + radius - 1e-9
    hi = np.array(ds.window.hi) - radius + 1e-9
    ok = np.all((ds.points >= lo) & (ds.points <= hi), axis=1)
    return np.nonzero(ok)[0]


def enumerate_patches(ds: DeloneSet, radius: float):
    """Deduplicated radius-patches with multiplicities over all eligible centers."""
    classes = {}
    for i in eligible_centers(ds, radius):
        p = patch_at(ds, ds.points[i], radius)
        if p.canonical_key in classes:
            classes[p.canonical_key][1] += 1
        else:
            classes[p.canonical_key] = [p, 1]
    return [(p, m) for p, m in classes.values()]


def translate(ds: DeloneSet, a) -> DeloneSet:
    """Recenter the sample at the site a (output contains the zero vector)."""
    a = np.asarray(a, float)
    ds.index_of(a)  # raises if a is not a site
    return DeloneSet(
        dimension=ds.dimension,
        points=ds.points - a,
        r=ds.r,
        R=ds.R,
        window=ds.window.shifted(a),
        provenance={**ds.provenance, "translated_by": tuple(a)},
    )


# ---------------------------------------------------------------------------
# serialization


def to_json_dict(ds: DeloneSet) -> dict:
    return {
        "dimension": ds.dimension,
        "r": ds.r,
        "R": ds.R,
        "window": [[lo, hi] for lo, hi in zip(ds.window.lo, ds.window.hi)],
        "points": ds.points.tolist(),
        "provenance": ds.provenance,
    }


def from_json_dict(obj: dict) -> DeloneSet:
    window = Box(tuple(b[0] for b in obj["window"]), tuple(b[1] for b in obj["window"]))
    return DeloneSet(
        dimension=int(obj["dimension"]),
        points=np.asarray(obj["points"], float),
        r=float(obj["r"]),
        R=float(obj["R"]),
        window=window,
        provenance=obj.get("provenance", {}),
    )


def save_lattice(ds: DeloneSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_dict(ds), fh, indent=1, sort_keys=True)


def load_lattice(path) -> DeloneSet:
    with open(path, encoding="utf-8") as fh:
        return from_json_dict(json.load(fh))


def save_csv(ds: DeloneSet, path) -> None:
    np.savetxt(path, ds.points, delimiter=",", header=",".join(f"x{k+1}" for k in range(ds.dimension)))

"""Rooted pattern tree of an FLC sample, ultrametric, choice functions and
the two-copy spectral operator on its vertices.

Witness sites stand in for boundary points: the witness x represents the
boundary point of the sample recentered at x, and results that exhaust the
available depth are flagged saturated rather than silently truncated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .delone import DeloneSet, DeloneError, Patch, eligible_centers, patch_at
from .operators import OperatorSample


@dataclass(frozen=True)
class TreeVertex:
    level: int
    patch: Patch
    witnesses: tuple  # site coordinates realizing the pattern, lexicographically sorted

    @property
    def key(self):
        return (self.level, self.patch.canonical_key)


@dataclass
class PatternTree:
    base: DeloneSet
    R: float
    depth: int
    levels: list  # levels[n] = list of TreeVertex
    edges: set  # (parent key, child key)
    center_indices: np.ndarray

    @property
    def vertices(self):
        return [v for lvl in self.levels for v in lvl]

    def level_sizes(self):
        return [len(lvl) for lvl in self.levels]

    def vertex_at(self, level: int, patch: Patch) -> TreeVertex:
        for v in self.levels[level]:
            if v.patch == patch:
                return v
        raise DeloneError("patch is not a vertex at this level")

    def parent_count(self, v: TreeVertex) -> int:
        return sum(1 for (p, c) in self.edges if c == v.key)


def default_depth(ds: DeloneSet, R: float = None, min_centers: int = 20) -> int:
    """Largest depth with at least min_centers eligible pattern centers."""
    R = ds.R if R is None else R
    depth = 0
    while len(eligible_centers(ds, (depth + 1) * R)) >= min_centers:
        depth += 1
    return depth


def build_tree(ds: DeloneSet, depth: int, R: float = None) -> PatternTree:
    """Vertices are the patch classes at radii 0, R, ..., depth*R among centers
    whose deepest ball fits in the window; edges join each pattern to its
    radius-restriction at the previous level."""
    R = ds.R if R is None else R
    centers = eligible_centers(ds, depth * R if depth > 0 else ds.patch_tol + 1e-9)
    if len(centers) == 0:
        raise DeloneError("window too small for the requested tree depth")
    levels = [dict() for _ in range(depth + 1)]
    edges = set()
    for ci in centers:
        x = ds.points[ci]
        prev_key = None
        for n in range(depth + 1):
            radius = n * R
            p = patch_at(ds, x, radius) if n > 0 else Patch.from_points(
                np.zeros((1, ds.dimension)), 0.0, ds.patch_tol
            )
            key = (n, p.canonical_key)
            if key not in levels[n]:
                levels[n][key] = [p, []]
            levels[n][key][1].append(tuple(x))
            if prev_key is not None:
                edges.add((prev_key, key))
            prev_key = key
    out_levels = []
    for n in range(depth + 1):
        verts = []
        for key in sorted(levels[n].keys(), key=lambda k: k[1]):
            p, wits = levels[n][key]
            verts.append(TreeVertex(level=n, patch=p, witnesses=tuple(sorted(set(wits)))))
        out_levels.append(verts)
    tree = PatternTree(
        base=ds, R=R, depth=depth, levels=out_levels, edges=edges, center_indices=centers
    )
    for n in range(1, depth + 1):
        for v in tree.levels[n]:
            if tree.parent_count(v) != 1:
                raise DeloneError(
                    f"vertex at level {n} has {tree.parent_count(v)} parents; "
                    "pattern restriction is not well defined on this sample"
                )
    return tree


@dataclass(frozen=True)
class UltrametricValue:
    value: float
    shared_level: int
    saturated: bool


def ultrametric(ds: DeloneSet, a, b, depth: int, R: float = None) -> UltrametricValue:
    """rho(a, b) = exp(-n* R) with n* the deepest level at which the patterns
    at a and b agree; saturated when they agree through the requested depth."""
    R = ds.R if R is None else R
    n_star = 0
    for n in range(1, depth + 1):
        pa = patch_at(ds, a, n * R)
        pb = patch_at(ds, b, n * R)
        if pa == pb:
            n_star = n
        else:
            break
    return UltrametricValue(
        value=float(np.exp(-n_star * R)),
        shared_level=n_star,
        saturated=(n_star == depth),
    )


@dataclass
class ChoicePair:
    """tau_plus / tau_minus witness choices per vertex, tau(v) in the cylinder C_v."""

    tau_plus: dict  # vertex key -> site tuple
    tau_minus: dict
    seed: int
    degenerate: set = field(default_factory=set)  # keys where tau_minus == tau_plus

    def plus(self, v: TreeVertex):
        return np.asarray(self.tau_plus[v.key], float)

    def minus(self, v: TreeVertex):
        return np.asarray(self.tau_minus[v.key], float)


def choice_pair(tree: PatternTree, seed: int = 0) -> ChoicePair:
    """tau_plus takes the lexicographically smallest witness; tau_minus a
    seed-determined distinct witness, falling back (flagged) on single-witness vertices."""
    rng = np.random.default_rng(seed)
    plus, minus, degenerate = {}, {}, set()
    for v in tree.vertices:
        wits = list(v.witnesses)
        plus[v.key] = wits[0]
        if len(wits) > 1:
            minus[v.key] = wits[1 + int(rng.integers(0, len(wits) - 1))]
        else:
            minus[v.key] = wits[0]
            degenerate.add(v.key)
    return ChoicePair(tau_plus=plus, tau_minus=minus, seed=seed, degenerate=degenerate)


def in_cylinder(tree: PatternTree, v: TreeVertex, site) -> bool:
    """Whether the sample recentred at `site` realizes the pattern of v."""
    if v.level == 0:
        return True
    p = patch_at(tree.base, site, v.level * tree.R)
    return p == v.patch


def zeta_sequence(kind: str, R: float):
    if kind == "log":
        return lambda n: float(np.log1p(n))
    if kind == "exp":
        return lambda n: float(np.exp(n * R))
    raise ValueError("zeta must be 'log' or 'exp'")


def pb_operator(tree: PatternTree, zeta: str = "log") -> OperatorSample:
    """Off-diagonal operator on l^2(V) (x) C^2: D(phi+, phi-)(v) = zeta_|v| (phi-, phi+)(v).

    Spectrum: +/- zeta_n, each with multiplicity equal to the level size |V_n|.
    """
    zf = zeta_sequence(zeta, tree.R)
    verts = tree.vertices
    n = len(verts)
    D = np.zeros((2 * n, 2 * n), complex)
    for i, v in enumerate(verts):
        z = zf(v.level)
        D[2 * i, 2 * i + 1] = z
        D[2 * i + 1, 2 * i] = z
    sites = np.array([tuple(v.witnesses[0]) for v in verts], float)
    return OperatorSample(sites=sites, matrix=D, window=tree.base.window, bulk_margin=0.0, q=2)


def commutator_norm(tree: PatternTree, pair: ChoicePair, f, zeta: str = "log") -> float:
    """sup_v zeta_|v| |f(tau+(v)) - f(tau-(v))|, the PB commutator norm surrogate."""
    zf = zeta_sequence(zeta, tree.R)
    worst = 0.0
    for v in tree.vertices:
        diff = abs(f(pair.plus(v)) - f(pair.minus(v)))
        worst = max(worst, zf(v.level) * diff)
    return float(worst)


def cylinder_indicator(tree: PatternTree, v: TreeVertex):
    """Indicator of C_v as a function on witness sites."""

    def f(site):
        return 1.0 if in_cylinder(tree, v, site) else 0.0

    return f


def quasi_hom_pairing(tree: PatternTree, pair: ChoicePair, p: Patch, level: int) -> int:
    """Finite pairing sum_{|v| <= level} [chi_p(tau+(v)) - chi_p(tau-(v))] for the
    cylinder of the vertex p at the given level."""
    if level > tree.depth:
        raise DeloneError("level exceeds tree depth")
    pv = tree.vertex_at(level, p)  # raises if p is not a vertex at this level
    chi = cylinder_indicator(tree, pv)
    total = 0
    for v in tree.vertices:
        if v.level > level:
            continue
        total += int(chi(pair.plus(v))) - int(chi(pair.minus(v)))
    return total


def cylinder_diameters(tree: PatternTree, pair_samples: int = 64, seed: int = 0) -> list:
    """Per level: max sampled ultrametric distance between witnesses of one vertex.

    Bounded by exp(-n R) by construction; used to check the spectral-triple
    hypothesis zeta_n <= C / diam numerically.
    """
    rng = np.random.default_rng(seed)
    out = []
    for n in range(tree.depth + 1):
        worst = 0.0
        for v in tree.levels[n]:
            wits = list(v.witnesses)
            if len(wits) < 2:
                continue
            for _ in range(min(pair_samples, len(wits) * (len(wits) - 1) // 2)):
                i, j = rng.integers(0, len(wits), 2)
                if i == j:
                    continue
                rho = ultrametric(tree.base, wits[i], wits[j], tree.depth, tree.R)
                worst = max(worst, rho.value)
        out.append(worst)
    return out


# ---------------------------------------------------------------------------
# export


def tree_to_json(tree: PatternTree) -> dict:
    return {
        "R": tree.R,
        "depth": tree.depth,
        "levels": [
            [
                {
                    "key": list(map(list, v.patch.canonical_key)),
                    "witnesses": [list(w) for w in v.witnesses],
                    "size": len(v.patch),
                }
                for v in lvl
            ]
            for lvl in tree.levels
        ],
        "edges": sorted(
            [[p[0], str(p[1]), c[0], str(c[1])] for (p, c) in tree.edges]
        ),
        "level_sizes": tree.level_sizes(),
    }


def tree_to_dot(tree: PatternTree) -> str:
    lines = ["digraph pattern_tree {"]
    names = {}
    for n, lvl in enumerate(tree.levels):
        for k, v in enumerate(lvl):
            names[v.key] = f"v{n}_{k}"
            lines.append(f'  {names[v.key]} [label="L{n}#{k} ({len(v.patch)} pts)"];')
    for p, c in sorted(tree.edges, key=str):
        lines.append(f"  {names[p]} -> {names[c]};")
    lines.append("}")
    return "\n".join(lines)


def save_tree(tree: PatternTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree_to_json(tree), fh, indent=1, sort_keys=True)

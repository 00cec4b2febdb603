"""Finite-volume twisted convolution operators on a Delone sample.

The representation convention: the matrix entry at (row x, column y) carries
the magnetic phase exp(-i <x, B y>) and the covariant amplitude evaluated on
the source patch at x with displacement y - x.  With B skew-symmetric this is
the symmetric-gauge Peierls phase; the flux through a unit plaquette of Z^2
equals 2*B_12 (the defining triangle has half the plaquette area).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delone import DeloneSet, DeloneError, Patch, patch_at


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class MagneticCocycle:
    """Constant magnetic twist sigma(x, y) = exp(-i <x, B y>) for skew-symmetric B."""

    B: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, float))
        if B.shape[0] != B.shape[1]:
            raise OperatorError("B must be square")
        if np.linalg.norm(B + B.T) > 1e-12 * (1 + np.linalg.norm(B)):
            raise OperatorError("B must be skew-symmetric")
        object.__setattr__(self, "B", B)

    @property
    def dimension(self):
        return self.B.shape[0]

    @staticmethod
    def zero(d: int) -> "MagneticCocycle":
        return MagneticCocycle(np.zeros((d, d)))

    @staticmethod
    def from_flux(d: int, flux: float) -> "MagneticCocycle":
        """Cocycle whose flux through a unit plaquette in the (1,2)-plane is `flux`."""
        if d < 2:
            return MagneticCocycle.zero(max(d, 1))
        B = np.zeros((d, d))
        B[0, 1] = flux / 2.0
        B[1, 0] = -flux / 2.0
        return MagneticCocycle(B)


def sigma(cocycle: MagneticCocycle, x, y) -> complex:
    """Unit-modulus twist exp(-i x^T B y)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return complex(np.exp(-1j * (x @ cocycle.B @ y)))


def sigma_phases(cocycle: MagneticCocycle, pts: np.ndarray) -> np.ndarray:
    """Matrix of sigma(x, y) over all site pairs (rows x, columns y)."""
    return np.exp(-1j * (pts @ cocycle.B @ pts.T))


def check_2cocycle(cocycle: MagneticCocycle, samples) -> float:
    """Max defect of sigma(x,y)sigma(x+y,z) - sigma(x,y+z)sigma(y,z) over triples."""
    worst = 0.0
    for x, y, z in samples:
        lhs = sigma(cocycle, x, y) * sigma(cocycle, np.add(x, y), z)
        rhs = sigma(cocycle, x, np.add(y, z)) * sigma(cocycle, y, z)
        worst = max(worst, abs(lhs - rhs))
    return worst


@dataclass
class OperatorSample:
    """Dense finite-volume operator: ordered site list plus an (N q) x (N q) matrix."""

    sites: np.ndarray
    matrix: np.ndarray
    window: object
    bulk_margin: float = 0.0
    q: int = 1

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, float))
        self.matrix = np.asarray(self.matrix, complex)
        n = self.sites.shape[0] * self.q
        if self.matrix.shape != (n, n):
            raise OperatorError(f"matrix shape {self.matrix.shape} != ({n},{n})")

    @property
    def n_sites(self):
        return self.sites.shape[0]

    @property
    def dimension(self):
        return self.sites.shape[1]

    def copy_with(self, matrix, bulk_margin=None) -> "OperatorSample":
        return OperatorSample(
            sites=self.sites,
            matrix=matrix,
            window=self.window,
            bulk_margin=self.bulk_margin if bulk_margin is None else bulk_margin,
            q=self.q,
        )

    def site_coords(self, j: int) -> np.ndarray:
        """Coordinate j of every basis vector (each site replicated q times)."""
        return np.repeat(self.sites[:, j], self.q)

    def bulk_indices(self, margin: float = None) -> np.ndarray:
        m = self.bulk_margin if margin is None else margin
        lo = np.array(self.window.lo) + m
        hi = np.array(self.window.hi) - m
        ok = np.all((self.sites >= lo - 1e-9) & (self.sites <= hi + 1e-9), axis=1)
        sites = np.nonzero(ok)[0]
        if sites.size == 0:
            raise OperatorError("empty bulk window")
        return (sites[:, None] * self.q + np.arange(self.q)[None, :]).ravel()

    def hermiticity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))

    def identity_like(self) -> "OperatorSample":
        return self.copy_with(np.eye(self.matrix.shape[0], dtype=complex))


@dataclass(frozen=True)
class CovariantKernel:
    """Hop rule (source patch, displacement) -> q x q block, cut off at range rho_hop.

    Hermitian symmetry (amplitude(P_x, y-x) equal to the conjugate transpose of
    amplitude(P_y, x-y)) is required so that the twisted representation is
    Hermitian; `represent` verifies it on the sample before building.
    """

    amplitude: object  # callable (Patch, displacement) -> (q,q) complex array
    rho_hop: float
    rho_pat: float
    q: int = 1
    name: str = "custom"

    def block(self, patch: Patch, disp) -> np.ndarray:
        a = np.asarray(self.amplitude(patch, np.asarray(disp, float)), complex)
        if a.shape != (self.q, self.q):
            a = a.reshape(self.q, self.q)
        return a


def identity_kernel(q: int = 1) -> CovariantKernel:
    def amp(patch, disp):
        if np.linalg.norm(disp) < 1e-12:
            return np.eye(q, dtype=complex)
        return np.zeros((q, q), complex)

    return CovariantKernel(amplitude=amp, rho_hop=1e-12, rho_pat=1e-12, q=q, name="identity")


def represent(
    ds: DeloneSet,
    kernel: CovariantKernel,
    cocycle: MagneticCocycle,
    check_hermitian: bool = True,
) -> OperatorSample:
    """Finite-volume matrix of the twisted covariant operator on the sample.

    Sites closer than rho_pat to the window boundary get window-clipped
    patches; invariants downstream exclude them through bulk_margin.
    """
    pts = ds.points
    n = len(ds)
    q = kernel.q
    tree = ds.tree()
    patches = []
    for i in range(n):
        radius = kernel.rho_pat
        if not ds.window.ball_inside(pts[i], radius):
            # boundary-affected: clip the patch ball to the window
            rel = pts - pts[i]
            keep = np.linalg.norm(rel, axis=1) <= radius + ds.patch_tol
            patches.append(Patch.from_points(rel[keep], radius, ds.patch_tol))
        else:
            patches.append(patch_at(ds, pts[i], radius))
    H = np.zeros((n * q, n * q), complex)
    pairs = tree.query_pairs(kernel.rho_hop + 1e-9, output_type="ndarray")
    self_pairs = np.stack([np.arange(n), np.arange(n)], axis=1)
    all_pairs = np.vstack([pairs, pairs[:, ::-1], self_pairs]) if len(pairs) else self_pairs
    for i, j in all_pairs:
        disp = pts[j] - pts[i]
        blk = kernel.block(patches[i], disp)
        if not np.any(blk):
            continue
        ph = sigma(cocycle, pts[i], pts[j])
        H[i * q:(i + 1) * q, j * q:(j + 1) * q] = ph * blk
    op = OperatorSample(
        sites=pts, matrix=H, window=ds.window,
        bulk_margin=2 * kernel.rho_hop + 2 * ds.R, q=q,
    )
    if check_hermitian:
        defect = op.hermiticity_defect()
        if defect > 1e-10 * max(1.0, np.linalg.norm(H)):
            raise OperatorError(
                f"kernel violates Hermitian symmetry: representation defect {defect:.2e}"
            )
    return op


def convolve(a: OperatorSample, b: OperatorSample) -> OperatorSample:
    """Twisted convolution realized as the matrix product in the representation."""
    if a.n_sites != b.n_sites or a.q != b.q or not np.allclose(a.sites, b.sites):
        raise OperatorError("site mismatch")
    return a.copy_with(a.matrix @ b.matrix, bulk_margin=a.bulk_margin + b.bulk_margin)


def adjoint(a: OperatorSample) -> OperatorSample:
    return a.copy_with(a.matrix.conj().T)


def position_operators(a: OperatorSample, origin=None):
    """Diagonal position operators X_j (site coordinate minus origin, replicated over q)."""
    d = a.dimension
    origin = np.zeros(d) if origin is None else np.asarray(origin, float)
    out = []
    for j in range(d):
        diag = a.site_coords(j) - origin[j]
        out.append(a.copy_with(np.diag(diag.astype(complex))))
    return out


def derivation(a: OperatorSample, j: int, origin=None) -> OperatorSample:
    """Commutator [X_j, A]: entrywise (x_j - y_j) A_{xy}; diagonal identically zero."""
    xj = a.site_coords(j)
    return a.copy_with((xj[:, None] - xj[None, :]) * a.matrix)


# ---------------------------------------------------------------------------
# s-covers and frames


@dataclass
class FramePartition:
    """Partition-of-unity weights {chi_y} on a frame grid, subordinate to eps-balls.

    chi_y(x)^2 sums to one at every point of the covered region; profiles are
    compactly supported bumps on B(y; eps) with eps < r/2, so each V_y meets
    every source fiber in at most one groupoid element.
    """

    centers: np.ndarray
    eps: float
    pitch: float
    dimension: int

    def raw_bump(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        d2 = ((x[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        b = 1.0 - d2 / self.eps**2
        return np.maximum(b, 0.0)

    def weights(self, x) -> np.ndarray:
        """chi_y(x) for each frame center y; rows indexed by the points x."""
        b = self.raw_bump(x)
        norms = (b**2).sum(axis=1)
        if np.any(norms <= 0):
            raise OperatorError("frame balls do not cover the requested points")
        return b / np.sqrt(norms)[:, None]

    def gram(self, x1, x2) -> np.ndarray:
        """Sum_y chi_y(x1) chi_y(x2) between two point families."""
        return self.weights(x1) @ self.weights(x2).T


def s_cover_frame(ds: DeloneSet, eps: float, pitch: float) -> FramePartition:
    """Frame grid pitch*Z^d covering the window, with bump partition of unity.

    eps < r suffices for s-injectivity on the sample (two sites in one
    eps-ball would be closer than 2r); eps < r/2 is the uniform bound used
    by the product-operator estimates.
    """
    if not (0 < eps < ds.r):
        raise OperatorError("eps must lie in (0, r)")
    if pitch * np.sqrt(ds.dimension) / 2.0 >= eps:
        raise OperatorError("pitch too coarse: balls B(y; eps) do not cover")
    margin = eps + pitch
    axes = [
        np.arange(
            np.floor((ds.window.lo[k] - margin) / pitch),
            np.ceil((ds.window.hi[k] + margin) / pitch) + 1,
        )
        * pitch
        for k in range(ds.dimension)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    return FramePartition(centers=centers, eps=eps, pitch=pitch, dimension=ds.dimension)


def partition_defect(frame: FramePartition, points) -> float:
    w = frame.weights(points)
    return float(np.max(np.abs((w**2).sum(axis=1) - 1.0)))


def reconstruction_residual(frame: FramePartition, op: OperatorSample) -> float:
    """Residual ||u_n f - f|| of the frame reconstruction on a finite kernel.

    In the finite representation u_n acts entrywise through the partition of
    unity evaluated at the displacement of each occupied entry, so the
    residual vanishes exactly where sum_y chi_y^2 = 1.
    """
    if op.q != 1:
        raise OperatorError("reconstruction check implemented for q = 1 kernels")
    occ = np.argwhere(np.abs(op.matrix) > 0)
    if occ.size == 0:
        return 0.0
    disp = op.sites[occ[:, 1]] - op.sites[occ[:, 0]]
    w = frame.weights(disp)
    factors = (w**2).sum(axis=1)
    vals = op.matrix[occ[:, 0], occ[:, 1]]
    return float(np.linalg.norm((factors - 1.0) * vals))


def s_injectivity_check(frame: FramePartition, ds: DeloneSet) -> int:
    """Max number of groupoid elements inside one V_y per source fiber.

    Exhaustive over source sites b: counts sites whose displacement from b
    falls in a single ball B(y; eps).  Must be <= 1 whenever eps < r/2.
    """
    tree = ds.tree()
    worst = 0
    for b in ds.points:
        counts = tree.query_ball_point(frame.centers + b, frame.eps, return_length=True)
        worst = max(worst, int(np.max(counts)))
    return worst

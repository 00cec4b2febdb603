"""Model Hamiltonians on Delone samples, spectral gaps and symmetry scaffolding.

Gap detection on a finite open sample must cope with boundary modes: a
topologically nontrivial bulk gap is traversed by edge states, so gaps are
located among *bulk-supported* eigenvalues (eigenvector weight inside the
bulk window above threshold), while projections keep every state below the
Fermi level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .delone import DeloneSet, DeloneError
from .operators import (
    CovariantKernel,
    MagneticCocycle,
    OperatorSample,
    OperatorError,
    represent,
)

AMP_FLOOR = 1e-8  # exponential-hopping truncation
GAP_FLOOR_REL = 1e-6  # minimal declared gap, relative to spectral width

PAULI = {
    "x": np.array([[0, 1], [1, 0]], complex),
    "y": np.array([[0, -1j], [1j, 0]], complex),
    "z": np.array([[1, 0], [0, -1]], complex),
}


class GaplessError(ValueError):
    pass


# ---------------------------------------------------------------------------
# model builders


def exp_hopping(
    ds: DeloneSet, beta: float, cocycle: MagneticCocycle, cutoff: float = None
) -> OperatorSample:
    """Exponentially decaying hopping with magnetic twist: e^{-i<x,By>} e^{-beta|x-y|}."""
    if beta <= 0:
        raise OperatorError("beta must be positive")
    if cutoff is None:
        cutoff = np.log(1.0 / AMP_FLOOR) / beta
    if cutoff < 2 * ds.r:
        warnings.warn("cutoff below the minimal hop distance: operator is diagonal zero")

    def amp(patch, disp):
        dist = np.linalg.norm(disp)
        if dist < 1e-12 or dist > cutoff:
            return np.zeros((1, 1), complex)
        return np.array([[np.exp(-beta * dist)]], complex)

    kern = CovariantKernel(amplitude=amp, rho_hop=cutoff, rho_pat=cutoff, q=1, name="exp_hopping")
    return represent(ds, kern, cocycle)


def nn_hofstadter(ds: DeloneSet, t: float, flux: float, nn_radius: float) -> OperatorSample:
    """Sharp-cutoff hopping with Peierls phases; flux is per unit plaquette of Z^2."""
    cocycle = MagneticCocycle.from_flux(ds.dimension, flux)

    def amp(patch, disp):
        dist = np.linalg.norm(disp)
        if dist < 1e-12 or dist > nn_radius:
            return np.zeros((1, 1), complex)
        return np.array([[t]], complex)

    kern = CovariantKernel(amplitude=amp, rho_hop=nn_radius, rho_pat=nn_radius, q=1, name="nn_hofstadter")
    return represent(ds, kern, cocycle)


def with_internal(model: OperatorSample, onsite, hop) -> OperatorSample:
    """Tensor-extend a q=1 model by internal blocks.

    `hop` is a q x q matrix applied to every hopping entry in the
    lexicographically increasing direction (conjugate transpose the other
    way), or a callable displacement -> q x q block for direction-dependent
    models.  `onsite` is a Hermitian q x q block added at every site.
    """
    if model.q != 1:
        raise OperatorError("with_internal expects a q = 1 base model")
    onsite = np.asarray(onsite, complex)
    q = onsite.shape[0]
    if onsite.shape != (q, q) or np.linalg.norm(onsite - onsite.conj().T) > 1e-12:
        raise OperatorError("onsite block must be Hermitian")
    n = model.n_sites
    H = np.zeros((n * q, n * q), complex)
    pts = model.sites
    for i in range(n):
        H[i * q:(i + 1) * q, i * q:(i + 1) * q] = onsite + model.matrix[i, i] * np.eye(q)
    rows, cols = np.nonzero(model.matrix)
    for i, j in zip(rows, cols):
        if i == j:
            continue
        disp = pts[j] - pts[i]
        if callable(hop):
            blk = np.asarray(hop(disp), complex)
        else:
            hop_m = np.asarray(hop, complex)
            forward = tuple(pts[i]) < tuple(pts[j])
            blk = hop_m if forward else hop_m.conj().T
        if blk.shape != (q, q):
            raise OperatorError("hop block dimension mismatch")
        H[i * q:(i + 1) * q, j * q:(j + 1) * q] = model.matrix[i, j] * blk
    return OperatorSample(
        sites=pts, matrix=H, window=model.window, bulk_margin=model.bulk_margin, q=q
    )


def ssh_chain(n_cells: int, v: float, w: float, periodic: bool = False) -> OperatorSample:
    """SSH chain: cells on Z with internal (A, B), intra-cell hop v, inter-cell hop w.

    The periodic variant closes the ring (no boundary zero modes), which keeps
    the flattened Hamiltonian exactly chiral-off-diagonal unitary.
    """
    from .delone import Box, generate_periodic

    window = Box((-0.5,), (n_cells - 0.5,))
    ds = generate_periodic(1, 1.0, window)
    H = np.zeros((2 * n_cells, 2 * n_cells), complex)
    for c in range(n_cells):
        H[2 * c, 2 * c + 1] = v
        H[2 * c + 1, 2 * c] = v
        if c + 1 < n_cells or periodic:
            m = (c + 1) % n_cells
            H[2 * c + 1, 2 * m] = w
            H[2 * m, 2 * c + 1] = w
    return OperatorSample(sites=ds.points, matrix=H, window=window, bulk_margin=2.0, q=2)


def kitaev_chain(
    n_cells: int, mu: float, t: float, delta: float, periodic: bool = False
) -> OperatorSample:
    """Kitaev wire in BdG form, q = 2 particle-hole blocks per site."""
    from .delone import Box, generate_periodic

    window = Box((-0.5,), (n_cells - 0.5,))
    ds = generate_periodic(1, 1.0, window)
    tz, ty = PAULI["z"], PAULI["y"]
    ons = -mu * tz
    hop = -t * tz + 1j * delta * ty  # block from cell c to c+1
    H = np.zeros((2 * n_cells, 2 * n_cells), complex)
    for c in range(n_cells):
        H[2 * c:2 * c + 2, 2 * c:2 * c + 2] = ons
        if c + 1 < n_cells or periodic:
            m = (c + 1) % n_cells
            H[2 * m:2 * m + 2, 2 * c:2 * c + 2] = hop
            H[2 * c:2 * c + 2, 2 * m:2 * m + 2] = hop.conj().T
    return OperatorSample(sites=ds.points, matrix=H, window=window, bulk_margin=2.0, q=2)


def qwz_model(ds: DeloneSet, m: float, nn_radius: float = 1.1) -> OperatorSample:
    """QWZ-like two-band model on a 2-d sample; gap closes at m in {0, 2, 4}."""

    def hop(disp):
        e = disp / np.linalg.norm(disp)
        sig = e[0] * PAULI["x"] + e[1] * PAULI["y"]
        return 0.5 * (PAULI["z"] - 1j * sig)

    base = nn_hofstadter(ds, 1.0, 0.0, nn_radius)
    return with_internal(base, (m - 2.0) * PAULI["z"], hop)


# ---------------------------------------------------------------------------
# spectra, gaps, projections


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    operator: OperatorSample
    gap: tuple = None  # (E_minus, E_plus)
    fermi_level: float = None
    bulk_weights: np.ndarray = None
    gapless: bool = False

    def reconstruction_defect(self) -> float:
        H = self.operator.matrix
        rec = (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T
        return float(np.linalg.norm(H - rec) / max(np.linalg.norm(H), 1e-30))


def diagonalize(op: OperatorSample) -> SpectralData:
    defect = op.hermiticity_defect()
    if defect > 1e-9 * max(1.0, np.linalg.norm(op.matrix)):
        raise OperatorError(f"operator not Hermitian: defect {defect:.2e}")
    w, v = np.linalg.eigh(op.matrix)
    return SpectralData(eigenvalues=w, eigenvectors=v, operator=op)


def bulk_state_weights(sd: SpectralData, margin: float = None) -> np.ndarray:
    try:
        idx = sd.operator.bulk_indices(margin)
    except OperatorError:
        return np.ones(len(sd.eigenvalues))
    mask = np.zeros(sd.operator.matrix.shape[0])
    mask[idx] = 1.0
    return (np.abs(sd.eigenvectors) ** 2 * mask[:, None]).sum(axis=0)


def spectral_gap(
    op: OperatorSample,
    e_hint: float,
    gap_floor: float = None,
    filter_edge: bool = True,
    margin: float = None,
) -> SpectralData:
    """Locate the spectral gap around e_hint and fix the Fermi level at its midpoint.

    With filter_edge, gaps are measured among eigenvalues whose eigenvectors
    carry at least half the uniform share of weight in the bulk window;
    in-gap boundary modes of an open topological sample are thereby ignored
    when declaring the gap, but remain part of the Fermi projection.
    """
    sd = diagonalize(op)
    w = sd.eigenvalues
    width = max(float(w[-1] - w[0]), 1e-30)
    if gap_floor is None:
        gap_floor = GAP_FLOOR_REL * width
    if filter_edge:
        bw = bulk_state_weights(sd, margin)
        sd.bulk_weights = bw
        n_all = sd.operator.matrix.shape[0]
        frac = len(sd.operator.bulk_indices(margin)) / n_all if n_all else 1.0
        keep = bw >= 0.5 * frac
        wf = w[keep] if np.any(keep) else w
    else:
        wf = w
    diffs = np.diff(wf)
    cand = [
        (wf[k], wf[k + 1]) for k in range(len(wf) - 1) if diffs[k] > gap_floor
    ]
    if not cand:
        sd.gapless = True
        return sd
    inside = [g for g in cand if g[0] < e_hint < g[1]]
    if inside:
        gap = max(inside, key=lambda g: g[1] - g[0])
    else:
        gap = min(cand, key=lambda g: min(abs(e_hint - g[0]), abs(e_hint - g[1])))
    sd.gap = gap
    sd.fermi_level = 0.5 * (gap[0] + gap[1])
    return sd


def fermi_projection(sd: SpectralData) -> OperatorSample:
    """Spectral projection onto eigenvalues below the Fermi level."""
    if sd.gapless or sd.fermi_level is None:
        raise GaplessError("no spectral gap: Fermi projection undefined")
    occ = sd.eigenvectors[:, sd.eigenvalues < sd.fermi_level]
    P = occ @ occ.conj().T
    return sd.operator.copy_with(P)


def smooth_gap_function(gap):
    """Cubic smoothstep: 0 below the gap, 1 above, C^1 across the edges."""
    lo, hi = float(gap[0]), float(gap[1])
    if hi <= lo:
        raise GaplessError("empty gap interval")

    def f(E):
        t = np.clip((np.asarray(E, float) - lo) / (hi - lo), 0.0, 1.0)
        return 3.0 * t**2 - 2.0 * t**3

    return f


# ---------------------------------------------------------------------------
# symmetries


@dataclass(frozen=True)
class SymmetryOperator:
    """Internal-space symmetry: chiral (unitary), time_reversal / particle_hole (antiunitary)."""

    kind: str
    matrix: np.ndarray
    antilinear: bool

    def __post_init__(self):
        m = np.asarray(self.matrix, complex)
        object.__setattr__(self, "matrix", m)
        if self.kind == "chiral":
            if self.antilinear:
                raise OperatorError("chiral symmetry is linear")
            if np.linalg.norm(m - m.conj().T) > 1e-12 or np.linalg.norm(m @ m - np.eye(len(m))) > 1e-12:
                raise OperatorError("chiral operator must be a self-adjoint unitary")

    def global_matrix(self, n_sites: int) -> np.ndarray:
        return np.kron(np.eye(n_sites), self.matrix)

    def apply(self, op: OperatorSample) -> np.ndarray:
        S = self.global_matrix(op.n_sites)
        H = op.matrix.conj() if self.antilinear else op.matrix
        return S @ H @ np.linalg.inv(S)

    def commutation_defect(self, op: OperatorSample, anticommute: bool) -> float:
        transformed = self.apply(op)
        target = -op.matrix if anticommute else op.matrix
        return float(np.linalg.norm(transformed - target) / max(np.linalg.norm(op.matrix), 1e-30))


def chiral_ssh_symmetry() -> SymmetryOperator:
    return SymmetryOperator(kind="chiral", matrix=PAULI["z"], antilinear=False)


def fermi_unitary(op: OperatorSample, r_c: SymmetryOperator, zero_tol: float = None) -> OperatorSample:
    """Off-diagonal unitary block of sign(H) in the chiral eigenbasis.

    Requires R_C H R_C = -H and 0 strictly outside the spectrum; the block
    maps the R_C = +1 internal sector to the R_C = -1 sector, both labelled
    by the same site positions.
    """
    defect = r_c.commutation_defect(op, anticommute=True)
    if defect > 1e-10:
        raise OperatorError(f"chiral symmetry violated: relative defect {defect:.2e}")
    sd = diagonalize(op)
    width = max(float(sd.eigenvalues[-1] - sd.eigenvalues[0]), 1e-30)
    if zero_tol is None:
        zero_tol = 1e-8 * width
    if np.min(np.abs(sd.eigenvalues)) < zero_tol:
        raise GaplessError("zero in spectrum: Fermi unitary undefined")
    sign = (sd.eigenvectors * np.sign(sd.eigenvalues)) @ sd.eigenvectors.conj().T
    evals, evecs = np.linalg.eigh(r_c.matrix)
    plus = evecs[:, evals > 0]
    minus = evecs[:, evals < 0]
    if plus.shape[1] != minus.shape[1]:
        raise OperatorError("chiral sectors of unequal dimension")
    n = op.n_sites
    Pp = np.kron(np.eye(n), plus)
    Pm = np.kron(np.eye(n), minus)
    U = Pm.conj().T @ sign @ Pp
    out = OperatorSample(
        sites=op.sites, matrix=U, window=op.window, bulk_margin=op.bulk_margin, q=plus.shape[1]
    )
    u_defect = np.linalg.norm(U @ U.conj().T - np.eye(U.shape[0]))
    if u_defect > 1e-8:
        raise OperatorError(f"Fermi unitary defect {u_defect:.2e}")
    return out

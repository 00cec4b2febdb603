"""Bulk index pairings at finite volume.

Even pairings use C_{2n} = (-2 pi i)^n / n!, odd pairings use
C~_{2n+1} = 2 (2 pi i)^n n! / (2n+1)!; both constants are kept verbatim and
any constant offset against the integer-valued Fredholm oracles is reported
as a ratio, never renormalized (for d = 1 the shift gives raw = 2 against
oracle index -1, ratio -2).

Finite-volume Fredholm oracles: the compression of a unitary phase to the
range of a projection is a square matrix, so kernel and cokernel dimensions
are equal and the naive count difference degenerates.  Each near-zero
singular pair is therefore classified by where its kernel-side / cokernel-
side vector is supported: the genuine index mode is localized at the defect
(the phase origin x0, or the cut), its partner is an artifact pinned to the
window boundary and is not counted.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .delone import DeloneSet, DeloneError
from .hamiltonians import SymmetryOperator, diagonalize
from .operators import OperatorSample, OperatorError, derivation

ROUND_TOL = 0.2
KERNEL_TOL_REL = 1e-6


class UnresolvedIndexError(RuntimeError):
    """Kernel parity cannot be resolved at this sample size."""


@dataclass
class InvariantReport:
    raw: complex
    rounded: int
    deviation: float
    method: str
    bulk_margin: float
    runtime: float
    extras: dict = field(default_factory=dict)

    @property
    def resolved(self) -> bool:
        return self.deviation <= ROUND_TOL

    def to_dict(self) -> dict:
        return {
            "raw_re": float(np.real(self.raw)),
            "raw_im": float(np.imag(self.raw)),
            "rounded": int(self.rounded),
            "deviation": float(self.deviation),
            "method": self.method,
            "bulk_margin": float(self.bulk_margin),
            "runtime": float(self.runtime),
            "extras": {k: _plain(v) for k, v in self.extras.items()},
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def chern_constant(d: int) -> complex:
    if d % 2:
        raise ValueError("even constant requested for odd d")
    n = d // 2
    return (-2j * np.pi) ** n / math.factorial(n)


def winding_constant(d: int) -> complex:
    if d % 2 == 0:
        raise ValueError("odd constant requested for even d")
    n = (d - 1) // 2
    return 2.0 * (2j * np.pi) ** n * math.factorial(n) / math.factorial(d)


def trace_per_unit_volume(a: OperatorSample, margin: float = None) -> complex:
    """Site-normalized trace over the bulk window (eroded by bulk_margin)."""
    idx = a.bulk_indices(margin)
    return complex(np.sum(np.diag(a.matrix)[idx]) / (len(idx) // a.q))


def _bulk_site_trace(matrix: np.ndarray, op: OperatorSample, margin) -> complex:
    idx = op.bulk_indices(margin)
    return complex(np.sum(np.diag(matrix)[idx]) / (len(idx) // op.q))


def chern_even(p: OperatorSample, dirs, margin: float = None) -> InvariantReport:
    """Antisymmetrized even pairing C_d sum_rho sign Tr(p prod d_rho(j) p)."""
    dirs = list(dirs)
    if len(dirs) % 2:
        raise ValueError("chern_even needs an even number of directions")
    t0 = time.perf_counter()
    dP = {j: derivation(p, j).matrix for j in set(dirs)}
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(len(dirs))):
        sign = _perm_sign(perm)
        prod = p.matrix.copy()
        for k in perm:
            prod = prod @ dP[dirs[k]]
        total += sign * _bulk_site_trace(prod, p, margin)
    raw = chern_constant(len(dirs)) * total
    rounded = int(np.rint(np.real(raw)))
    return InvariantReport(
        raw=complex(raw),
        rounded=rounded,
        deviation=float(abs(raw - rounded)),
        method="chern_even",
        bulk_margin=p.bulk_margin if margin is None else margin,
        runtime=time.perf_counter() - t0,
        extras={"dirs": dirs, "imag_residue": float(abs(np.imag(raw)))},
    )


def winding_odd(
    u: OperatorSample, dirs, margin: float = None, oracle: bool = True
) -> InvariantReport:
    """Odd pairing C~_d sum_rho sign Tr(prod u* d_rho(j) u), with Fredholm oracle for d=1."""
    dirs = list(dirs)
    if len(dirs) % 2 == 0:
        raise ValueError("winding_odd needs an odd number of directions")
    defect = np.linalg.norm(u.matrix @ u.matrix.conj().T - np.eye(u.matrix.shape[0]))
    if defect > 1e-8:
        raise OperatorError(f"unitarity defect {defect:.2e}")
    t0 = time.perf_counter()
    dU = {j: derivation(u, j).matrix for j in set(dirs)}
    ustar = u.matrix.conj().T
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(len(dirs))):
        sign = _perm_sign(perm)
        prod = np.eye(u.matrix.shape[0], dtype=complex)
        for k in perm:
            prod = prod @ ustar @ dU[dirs[k]]
        total += sign * _bulk_site_trace(prod, u, margin)
    raw = winding_constant(len(dirs)) * total
    rounded = int(np.rint(np.real(raw)))
    report = InvariantReport(
        raw=complex(raw),
        rounded=rounded,
        deviation=float(abs(raw - rounded)),
        method="winding_odd",
        bulk_margin=u.bulk_margin if margin is None else margin,
        runtime=time.perf_counter() - t0,
        extras={"dirs": dirs},
    )
    if oracle and len(dirs) == 1:
        j = dirs[0]
        coords = u.site_coords(j)
        cut = _off_site_value(coords, 0.5 * (coords.min() + coords.max()))
        idx = fredholm_odd(u, j, cut)
        report.extras["oracle_index"] = idx
        if idx != 0:
            report.extras["ratio_raw_over_oracle"] = float(np.real(raw) / idx)
    return report


def weak_invariant(op: OperatorSample, dir_subset, margin: float = None) -> InvariantReport:
    """Weak pairing: the same formulas restricted to a direction subset J."""
    J = list(dir_subset)
    if len(J) % 2 == 0:
        report = chern_even(op, J, margin)
    else:
        report = winding_odd(op, J, margin, oracle=False)
    report.method = "weak_" + report.method
    return report


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, clen = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            clen += 1
        if clen % 2 == 0:
            sign = -sign
    return sign


def _off_site_value(coords: np.ndarray, target: float) -> float:
    vals = np.unique(np.round(coords, 9))
    c = target
    for _ in range(100):
        if np.min(np.abs(vals - c)) > 1e-3:
            return float(c)
        c += 0.0371
    raise ValueError("could not place a cut away from site coordinates")


# ---------------------------------------------------------------------------
# Fredholm oracles


def _projection_range(p: OperatorSample) -> np.ndarray:
    w, v = np.linalg.eigh(p.matrix)
    idem = float(np.max(np.abs(w * (1 - w))))
    if idem > 1e-6:
        raise OperatorError(f"not a projection: idempotency defect {idem:.2e}")
    return v[:, w > 0.5]


def _signed_kernel_count(
    A: np.ndarray,
    basis: np.ndarray,
    defect_dist: np.ndarray,
    kernel_tol: float = None,
) -> int:
    """Signed count of near-zero singular pairs, resolved by defect localization.

    basis maps the compression space back to the site basis; defect_dist is
    the distance of each site-basis vector from the defect (phase origin or
    cut).  Kernel-side genuine modes count +1, cokernel-side -1; pairs pinned
    to the window boundary are truncation artifacts and are dropped.
    """
    if A.size == 0:
        return 0
    U, s, Vh = np.linalg.svd(A)
    smax = max(float(s[0]) if len(s) else 1.0, 1e-30)
    tol = KERNEL_TOL_REL * smax if kernel_tol is None else kernel_tol
    horizon = 0.45 * float(np.max(defect_dist))
    index = 0
    for i in range(len(s)):
        if s[i] >= max(tol, 1e-3 * smax):
            continue
        ker_vec = basis @ Vh[i].conj()
        cok_vec = basis @ U[:, i]
        dk = float((np.abs(ker_vec) ** 2 * defect_dist).sum())
        dc = float((np.abs(cok_vec) ** 2 * defect_dist).sum())
        if dk < min(0.6 * dc, horizon):
            index += 1
        elif dc < min(0.6 * dk, horizon):
            index -= 1
        elif dk < horizon and dc < horizon:
            raise UnresolvedIndexError(
                "kernel pair localization ambiguous; enlarge the sample"
            )
        # both pinned at the boundary: artifact pair, not counted
    return index


def dirac_phase(p: OperatorSample, origin) -> np.ndarray:
    """Unit-modulus d=2 Dirac phase ((x1-a) + i(x2-b)) / |x - origin| per basis vector."""
    if p.dimension != 2:
        raise OperatorError("Dirac phase implemented for d = 2")
    a, b = origin
    z = (p.site_coords(0) - a) + 1j * (p.site_coords(1) - b)
    dist = np.abs(z)
    if np.min(dist) < 1e-6:
        raise OperatorError("origin too close to a lattice site")
    return z / dist


def fredholm_even(p: OperatorSample, origin, kernel_tol: float = None) -> int:
    """Index of P F_+ P on ran P for the d=2 Dirac phase about `origin`."""
    F = dirac_phase(p, origin)
    occ = _projection_range(p)
    A = occ.conj().T @ (F[:, None] * occ)
    a, b = origin
    dist = np.abs((p.site_coords(0) - a) + 1j * (p.site_coords(1) - b))
    return _signed_kernel_count(A, occ, dist, kernel_tol)


def fredholm_odd(u: OperatorSample, direction: int, cut: float, kernel_tol: float = None) -> int:
    """Index of Pi u Pi + (1 - Pi) with Pi the half-line indicator x_dir >= cut."""
    coords = u.site_coords(direction)
    if np.min(np.abs(coords - cut)) < 1e-9:
        raise OperatorError("cut hits a site coordinate")
    pi = (coords >= cut).astype(float)
    T = pi[:, None] * u.matrix * pi[None, :] + np.diag(1.0 - pi)
    dist = np.abs(coords - cut)
    return _signed_kernel_count(T, np.eye(T.shape[0]), dist, kernel_tol)


# ---------------------------------------------------------------------------
# Z2 kernel parity


def sign_position_compression(p: OperatorSample, direction: int, origin: float):
    """Compression of sgn(x_dir - origin) to ran P, plus the range basis."""
    coords = p.site_coords(direction)
    if np.min(np.abs(coords - origin)) < 1e-9:
        raise OperatorError("origin hits a site coordinate")
    F = np.sign(coords - origin)
    occ = _projection_range(p)
    return occ.conj().T @ (F[:, None] * occ), occ


def z2_index(
    compressed,
    symmetry: SymmetryOperator = None,
    hamiltonian: OperatorSample = None,
    anticommute: bool = True,
    kernel_tol: float = None,
) -> int:
    """Kernel dimension mod 2 of a compressed symmetric operator.

    Counts singular values below kernel_tol (complex count; real and
    quaternionic multiplicities per the symmetry class are a documented
    reduction).  Singular values falling in the band (tol, 10 tol) mean the
    parity is not resolved at this sample size and raise.
    """
    A = compressed.matrix if isinstance(compressed, OperatorSample) else np.asarray(compressed)
    if symmetry is not None and hamiltonian is not None:
        defect = symmetry.commutation_defect(hamiltonian, anticommute=anticommute)
        if defect > 1e-8:
            raise OperatorError(f"symmetry defect {defect:.2e} on the Hamiltonian")
    s = np.linalg.svd(A, compute_uv=False)
    smax = max(float(s[0]) if len(s) else 1.0, 1e-30)
    tol = KERNEL_TOL_REL * smax if kernel_tol is None else kernel_tol
    tol = max(tol, 1e-3 * smax)
    n_zero = int(np.sum(s < tol))
    band = np.sum((s >= tol) & (s < 10 * tol))
    if band:
        raise UnresolvedIndexError(
            f"{band} singular values in the unresolved band; enlarge the sample"
        )
    return n_zero % 2


# ---------------------------------------------------------------------------
# Sobolev norms and the residue trace


def sobolev_norm(a: OperatorSample, order: int, power: int, margin: float = None) -> float:
    """Finite-volume ||a||_{order, power} = sum_{|alpha| <= order} Tr(|d^alpha a|^p)^{1/p}."""
    if power < 1:
        raise ValueError("power must be >= 1")
    total = 0.0
    d = a.dimension
    for degree in range(order + 1):
        for alpha in itertools.combinations_with_replacement(range(d), degree):
            m = a.matrix
            for j in alpha:
                xj = a.site_coords(j)
                m = (xj[:, None] - xj[None, :]) * m
            # |M|^p through the singular decomposition
            u, s, vh = np.linalg.svd(m)
            abs_p = (vh.conj().T * s**power) @ vh
            tr = np.real(_bulk_site_trace(abs_p, a, margin))
            total += max(tr, 0.0) ** (1.0 / power)
    return float(total)


def residue_check(ds: DeloneSet, s_values) -> dict:
    """Residue of sum_x (1 + |x|^2)^{-s/2} at s = d against Vol(S^{d-1}).

    Restricted to unit-density periodic samples; the window sum is completed
    by a continuum integral tail beyond the inscribed radius and (s-d) times
    the total is extrapolated linearly to s = d.
    """
    prov = ds.provenance or {}
    if prov.get("generator") != "periodic" or abs(prov.get("spacing", 0) - 1.0) > 1e-12:
        raise DeloneError("residue check requires the unit-density periodic sample")
    d = ds.dimension
    s_values = sorted(float(s) for s in s_values)
    if s_values[0] <= d:
        raise ValueError("all s values must exceed d")
    vol = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}[d]
    lo = np.abs(np.array(ds.window.lo))
    hi = np.abs(np.array(ds.window.hi))
    rw = float(np.min(np.concatenate([lo, hi])))
    if rw < 5:
        raise DeloneError("window too small for the residue extrapolation")
    r2 = (ds.points**2).sum(axis=1)
    r2 = r2[r2 <= rw * rw]
    table = []
    for s in s_values:
        core = float(np.sum((1.0 + r2) ** (-s / 2)))
        tail, _ = integrate.quad(lambda r: r ** (d - 1) * (1 + r * r) ** (-s / 2), rw, np.inf)
        table.append((s, (s - d) * (core + vol * tail)))
    (s1, v1), (s2, v2) = table[0], table[1]
    extrapolated = v1 + (v1 - v2) * (d - s1) / (s1 - s2)
    return {
        "dimension": d,
        "table": table,
        "extrapolated": float(extrapolated),
        "target": float(vol),
        "relative_error": float(abs(extrapolated - vol) / vol),
    }

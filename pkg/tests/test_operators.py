import numpy as np
import pytest

from apertop.delone import Box, generate_periodic, generate_cut_and_project, translate
from apertop.operators import (
    CovariantKernel,
    MagneticCocycle,
    OperatorError,
    OperatorSample,
    adjoint,
    check_2cocycle,
    convolve,
    derivation,
    identity_kernel,
    partition_defect,
    position_operators,
    reconstruction_residual,
    represent,
    s_cover_frame,
    s_injectivity_check,
    sigma,
    sigma_phases,
)


def square(half, d=2):
    return Box((-half,) * d, (half,) * d)


def nn_kernel(t=1.0, radius=1.1):
    def amp(patch, disp):
        dist = np.linalg.norm(disp)
        if dist < 1e-12 or dist > radius:
            return np.zeros((1, 1), complex)
        return np.array([[t]], complex)

    return CovariantKernel(amplitude=amp, rho_hop=radius, rho_pat=radius, q=1)


class TestSigma:
    def test_zero_field(self):
        B = MagneticCocycle.zero(2)
        for _ in range(5):
            x, y = np.random.randn(2), np.random.randn(2)
            assert sigma(B, x, y) == 1.0

    def test_constant_field_value(self):
        phi = 0.7311
        B = MagneticCocycle(np.array([[0, phi], [-phi, 0]]))
        val = sigma(B, (1, 0), (0, 1))
        assert np.isclose(val, np.exp(-1j * phi))

    def test_normalisation(self):
        B = MagneticCocycle(np.array([[0, 0.3], [-0.3, 0]]))
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=2)
            assert abs(sigma(B, x, -x) - 1.0) < 1e-14

    def test_modulus_one(self):
        B = MagneticCocycle.from_flux(2, 2.1)
        rng = np.random.default_rng(1)
        for _ in range(20):
            assert abs(abs(sigma(B, rng.normal(size=2), rng.normal(size=2))) - 1) < 1e-14


class TestCocycleCondition:
    def test_zero_field_defect(self):
        B = MagneticCocycle.zero(2)
        rng = np.random.default_rng(0)
        triples = [tuple(rng.normal(size=(3, 2))) for _ in range(100)]
        assert check_2cocycle(B, triples) == 0.0

    def test_skew_defect_tiny(self):
        B = MagneticCocycle(np.array([[0, 1.234], [-1.234, 0]]))
        rng = np.random.default_rng(7)
        triples = [tuple(rng.normal(size=(3, 2))) for _ in range(1000)]
        assert check_2cocycle(B, triples) < 1e-12

    def test_non_skew_rejected(self):
        with pytest.raises(OperatorError, match="skew"):
            MagneticCocycle(np.array([[0, 1.0], [-0.5, 0]]))


class TestRepresent:
    def test_identity_kernel(self):
        ds = generate_periodic(2, 1.0, square(3))
        op = represent(ds, identity_kernel(), MagneticCocycle.zero(2))
        assert np.allclose(op.matrix, np.eye(len(ds)))

    def test_fluxless_nn_is_adjacency(self):
        ds = generate_periodic(2, 1.0, square(3))
        op = represent(ds, nn_kernel(), MagneticCocycle.zero(2))
        pts = ds.points
        adj = (np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2) < 1.1) & ~np.eye(
            len(ds), dtype=bool
        )
        assert np.allclose(op.matrix, adj.astype(complex))

    def test_hofstadter_hermitian_symmetric_spectrum(self):
        ds = generate_periodic(2, 1.0, square(5))
        op = represent(ds, nn_kernel(), MagneticCocycle.from_flux(2, 2 * np.pi / 4))
        assert op.hermiticity_defect() < 1e-12
        w = np.linalg.eigvalsh(op.matrix)
        assert np.allclose(w, -w[::-1], atol=1e-9)  # bipartite symmetry

    def test_nonhermitian_kernel_rejected(self):
        def amp(patch, disp):
            d = np.linalg.norm(disp)
            if d < 1e-12 or d > 1.1:
                return np.zeros((1, 1), complex)
            return np.array([[1.0 if disp[0] >= 0 else 2.0]], complex)

        bad = CovariantKernel(amplitude=amp, rho_hop=1.1, rho_pat=1.1, q=1)
        ds = generate_periodic(2, 1.0, square(3))
        with pytest.raises(OperatorError, match="Hermitian"):
            represent(ds, bad, MagneticCocycle.zero(2))

    def test_magnetic_translation_covariance(self):
        ds = generate_periodic(2, 1.0, square(4))
        B = MagneticCocycle.from_flux(2, 2 * np.pi / 5)
        a = np.array([1.0, 0.0])
        h1 = represent(ds, nn_kernel(), B)
        h2 = represent(translate(ds, a), nn_kernel(), B)
        phases = np.exp(-1j * (ds.points @ B.B @ a) * -1.0)  # exp(-i <a, B x>) = exp(+i <x, B a>)
        U = np.diag(phases)
        assert np.linalg.norm(h2.matrix - U @ h1.matrix @ U.conj().T) < 1e-10


class TestAlgebra:
    def setup_method(self):
        ds = generate_periodic(2, 1.0, square(3))
        self.B = MagneticCocycle.from_flux(2, 2 * np.pi / 3)
        self.A = represent(ds, nn_kernel(), self.B)
        self.C = represent(ds, nn_kernel(0.5, 1.5), self.B)

    def test_identity_neutral(self):
        out = convolve(self.A, self.A.identity_like())
        assert np.allclose(out.matrix, self.A.matrix)

    def test_involution(self):
        lhs = adjoint(convolve(self.A, self.C)).matrix
        rhs = convolve(adjoint(self.C), adjoint(self.A)).matrix
        assert np.linalg.norm(lhs - rhs) < 1e-10

    def test_associativity(self):
        abc1 = convolve(convolve(self.A, self.C), self.A).matrix
        abc2 = convolve(self.A, convolve(self.C, self.A)).matrix
        assert np.linalg.norm(abc1 - abc2) < 1e-10

    def test_site_mismatch(self):
        other = generate_periodic(2, 1.0, square(2))
        with pytest.raises(OperatorError):
            convolve(self.A, represent(other, nn_kernel(), self.B))


class TestPositionAndDerivation:
    def test_position_diagonals(self):
        ds = generate_periodic(2, 1.0, square(2))
        op = represent(ds, nn_kernel(), MagneticCocycle.zero(2))
        X = position_operators(op)
        vals = np.unique(np.real(np.diag(X[0].matrix)))
        assert set(vals) == {-2.0, -1.0, 0.0, 1.0, 2.0}
        comm = X[0].matrix @ X[1].matrix - X[1].matrix @ X[0].matrix
        assert np.linalg.norm(comm) == 0.0

    def test_position_square_spectrum(self):
        ds = generate_periodic(2, 1.0, square(2))
        op = represent(ds, identity_kernel(), MagneticCocycle.zero(2))
        X = position_operators(op)
        r2 = np.real(np.diag(X[0].matrix @ X[0].matrix + X[1].matrix @ X[1].matrix))
        expect = (ds.points**2).sum(axis=1)
        assert np.allclose(np.sort(r2), np.sort(expect))

    def test_diagonal_killed(self):
        ds = generate_periodic(2, 1.0, square(3))
        op = represent(ds, identity_kernel(), MagneticCocycle.zero(2))
        assert np.linalg.norm(derivation(op, 0).matrix) == 0.0

    def test_leibniz(self):
        ds = generate_periodic(2, 1.0, square(3))
        B = MagneticCocycle.from_flux(2, 1.1)
        A = represent(ds, nn_kernel(), B)
        C = represent(ds, nn_kernel(0.7, 1.5), B)
        lhs = derivation(convolve(A, C), 0).matrix
        rhs = convolve(derivation(A, 0), C).matrix + convolve(A, derivation(C, 0)).matrix
        assert np.linalg.norm(lhs - rhs) < 1e-10

    def test_shift_derivation(self):
        n = 9
        sites = np.arange(n, dtype=float)[:, None]
        U = np.zeros((n, n), complex)
        for y in range(n - 1):
            U[y + 1, y] = 1.0
        op = OperatorSample(sites=sites, matrix=U, window=Box((0,), (n - 1,)), q=1)
        assert np.allclose(derivation(op, 0).matrix, U)

    def test_derivation_traceless(self):
        ds = generate_periodic(2, 1.0, square(3))
        A = represent(ds, nn_kernel(), MagneticCocycle.from_flux(2, 0.9))
        dA = derivation(A, 1)
        assert np.trace(dA.matrix) == 0.0
        assert np.linalg.norm(np.diag(dA.matrix)) == 0.0


class TestFrame:
    def test_partition_of_unity_at_sites(self):
        ds = generate_periodic(2, 1.0, square(4))
        frame = s_cover_frame(ds, eps=0.4, pitch=0.5)
        assert partition_defect(frame, ds.points) < 1e-12

    def test_reconstruction_exact(self):
        ds = generate_periodic(2, 1.0, square(4))
        frame = s_cover_frame(ds, eps=0.4, pitch=0.5)
        op = represent(ds, nn_kernel(), MagneticCocycle.from_flux(2, 0.8))
        assert reconstruction_residual(frame, op) < 1e-12

    def test_s_injectivity(self):
        ds = generate_cut_and_project("fibonacci", Box((0,), (40,)))
        frame = s_cover_frame(ds, eps=0.2, pitch=0.25)
        assert s_injectivity_check(frame, ds) <= 1

    def test_eps_too_large(self):
        ds = generate_periodic(2, 1.0, square(3))
        with pytest.raises(OperatorError):
            s_cover_frame(ds, eps=0.6, pitch=0.5)

    def test_pitch_must_cover(self):
        ds = generate_periodic(2, 1.0, square(3))
        with pytest.raises(OperatorError, match="cover"):
            s_cover_frame(ds, eps=0.1, pitch=0.5)


def test_sigma_phases_matrix():
    ds = generate_periodic(2, 1.0, square(2))
    B = MagneticCocycle.from_flux(2, 1.3)
    M = sigma_phases(B, ds.points)
    i, j = 3, 17
    assert np.isclose(M[i, j], sigma(B, ds.points[i], ds.points[j]))

import numpy as np
import pytest

from apertop.delone import (
    PHI,
    Box,
    DeloneError,
    DeloneSet,
    enumerate_patches,
    generate_amorphous,
    generate_cut_and_project,
    generate_periodic,
    patch_at,
    perturb,
    translate,
    verify_delone,
    from_json_dict,
    to_json_dict,
)


def square(half, d=2):
    return Box((-half,) * d, (half,) * d)


class TestGeneratePeriodic:
    def test_z2_unit(self):
        ds = generate_periodic(2, 1.0, square(2))
        assert len(ds) == 25
        assert ds.r == 0.5
        assert np.isclose(ds.R, np.sqrt(2) / 2)

    def test_z1_window(self):
        ds = generate_periodic(1, 1.0, Box((0,), (4,)))
        assert sorted(ds.points[:, 0]) == [0, 1, 2, 3, 4]

    def test_spacing_two(self):
        ds = generate_periodic(2, 2.0, square(4))
        assert len(ds) == 25
        d = ds.tree().query(ds.points, k=2)[0][:, 1]
        assert np.isclose(d.min(), 2.0)

    def test_empty_window(self):
        with pytest.raises(DeloneError, match="window too small"):
            generate_periodic(2, 10.0, Box((0.2, 0.2), (0.4, 0.4)))


class TestCutAndProject:
    def test_fibonacci_gaps(self):
        ds = generate_cut_and_project("fibonacci", Box((0,), (100,)))
        gaps = np.diff(np.sort(ds.points[:, 0]))
        values = sorted(set(np.round(gaps, 9)))
        assert len(values) == 2
        assert np.isclose(values[0], 1.0)
        assert np.isclose(values[1], PHI)

    def test_fibonacci_gap_ratio(self):
        ds = generate_cut_and_project("fibonacci", Box((0,), (10000,)))
        gaps = np.diff(np.sort(ds.points[:, 0]))
        n_long = np.sum(np.isclose(gaps, PHI))
        n_short = np.sum(np.isclose(gaps, 1.0))
        assert abs(n_long / n_short - PHI) < 5e-3

    def test_ammann_beenker_verifies(self):
        ds = generate_cut_and_project("ammann_beenker", square(20))
        assert np.isclose(2 * ds.r, 2 * np.sin(np.pi / 8), atol=1e-9)
        rep = verify_delone(ds)
        assert rep.discrete_ok and rep.dense_ok

    def test_bad_scheme(self):
        with pytest.raises(DeloneError):
            generate_cut_and_project("penrose", square(5))
        with pytest.raises(DeloneError):
            generate_cut_and_project("fibonacci", square(5, d=2))


class TestAmorphous:
    def test_verifies(self):
        ds = generate_amorphous(2, 0.4, 1.5, square(10), seed=7)
        rep = verify_delone(ds)
        assert rep.discrete_ok and rep.dense_ok

    def test_deterministic(self):
        a = generate_amorphous(2, 0.4, 1.5, square(8), seed=3)
        b = generate_amorphous(2, 0.4, 1.5, square(8), seed=3)
        assert np.array_equal(a.points, b.points)

    def test_infeasible(self):
        with pytest.raises(DeloneError, match="infeasible"):
            generate_amorphous(2, 0.4, 0.5, square(8), seed=0)


class TestPerturb:
    def test_zero_amplitude_identity(self):
        ds = generate_periodic(2, 1.0, square(4))
        assert np.array_equal(perturb(ds, 0.0, 5).points, ds.points)

    def test_min_distance_preserved(self):
        ds = generate_periodic(2, 1.0, square(6))
        out = perturb(ds, 0.1, seed=2)
        dmin = out.tree().query(out.points, k=2)[0][:, 1].min()
        assert dmin >= 0.8 - 1e-12

    def test_amplitude_too_large(self):
        ds = generate_periodic(2, 1.0, square(4))
        with pytest.raises(DeloneError):
            perturb(ds, ds.r, seed=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_certified_constants(self, seed):
        ds = generate_periodic(2, 1.0, square(6))
        out = perturb(ds, 0.1, seed=seed)
        rep = verify_delone(out)
        assert rep.discrete_ok and rep.dense_ok


class TestVerify:
    def test_z2_passes(self):
        ds = generate_periodic(2, 1.0, square(4))
        rep = verify_delone(ds)
        assert rep.discrete_ok and rep.dense_ok

    def test_r_too_large(self):
        base = generate_periodic(2, 1.0, square(4))
        ds = DeloneSet(2, base.points, r=0.6, R=base.R, window=base.window)
        assert not verify_delone(ds).discrete_ok

    def test_hole_detected(self):
        base = generate_periodic(2, 1.0, square(4))
        pts = base.points[~np.all(base.points == 0, axis=1)]
        ds = DeloneSet(2, pts, r=0.5, R=0.71, window=base.window)
        rep = verify_delone(ds)
        assert not rep.dense_ok
        assert np.linalg.norm(rep.worst_gap_center) < 0.5


class TestPatches:
    def test_cross_patch(self):
        ds = generate_periodic(2, 1.0, square(4))
        p = patch_at(ds, (0, 0), 1.1)
        assert len(p) == 5

    def test_singleton_patch(self):
        ds = generate_periodic(2, 1.0, square(4))
        assert len(patch_at(ds, (0, 0), 0.5)) == 1

    def test_fibonacci_patch_matches_slice(self):
        ds = generate_cut_and_project("fibonacci", Box((-30,), (30,)))
        x = ds.points[len(ds) // 2]
        p = patch_at(ds, x, 2.0)
        brute = ds.points[np.abs(ds.points[:, 0] - x[0]) <= 2.0 + 1e-9] - x
        assert np.allclose(np.sort(p.relative_points[:, 0]), np.sort(brute[:, 0]))

    def test_ball_exits_window(self):
        ds = generate_periodic(2, 1.0, square(4))
        with pytest.raises(DeloneError, match="insufficient sample"):
            patch_at(ds, (4, 4), 1.0)

    def test_z2_single_class(self):
        ds = generate_periodic(2, 1.0, square(6))
        for radius in (0.5, 1.1, 2.3):
            classes = enumerate_patches(ds, radius)
            assert len(classes) == 1

    def test_multiplicities_sum(self):
        ds = generate_cut_and_project("fibonacci", Box((0,), (200,)))
        classes = enumerate_patches(ds, 1.2)
        from apertop.delone import eligible_centers

        assert sum(m for _, m in classes) == len(eligible_centers(ds, 1.2))

    def test_amorphous_generic_all_distinct(self):
        ds = generate_amorphous(2, 0.4, 1.5, square(8), seed=11)
        classes = enumerate_patches(ds, 3 * 0.4)
        from apertop.delone import eligible_centers

        n_centers = len(eligible_centers(ds, 1.2))
        assert len(classes) > 0.9 * n_centers  # generic non-FLC behavior

    def test_patch_equality_is_equivalence(self):
        ds = generate_cut_and_project("fibonacci", Box((0,), (300,)))
        classes = [p for p, _ in enumerate_patches(ds, 2.0)]
        for p in classes:
            assert p == p
        for i, p in enumerate(classes):
            for j, q in enumerate(classes):
                assert (p == q) == (i == j)


class TestTranslate:
    def test_z2_shift(self):
        ds = generate_periodic(2, 1.0, square(4))
        out = translate(ds, (1, 0))
        assert any(np.all(out.points == 0, axis=1))
        assert out.window.lo == (-5.0, -4.0)

    def test_fibonacci_origin_occupied(self):
        ds = generate_cut_and_project("fibonacci", Box((0,), (50,)))
        a = ds.points[np.argmin(np.abs(ds.points[:, 0] - 10))]
        out = translate(ds, a)
        assert np.min(np.abs(out.points)) < 1e-9

    def test_composition(self):
        ds = generate_periodic(2, 1.0, square(6))
        one = translate(translate(ds, (1, 0)), (0, 1))
        two = translate(ds, (1, 1))
        assert np.allclose(one.points, two.points)
        assert one.window.lo == two.window.lo

    def test_not_a_site(self):
        ds = generate_periodic(2, 1.0, square(4))
        with pytest.raises(DeloneError):
            translate(ds, (0.5, 0.5))


def test_json_roundtrip(tmp_path):
    ds = generate_cut_and_project("fibonacci", Box((0,), (30,)))
    again = from_json_dict(to_json_dict(ds))
    assert np.allclose(again.points, ds.points)
    assert again.r == ds.r and again.R == ds.R

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from molxtal.elements import BONDI_RADII, MASSES, atomic_masses
from molxtal.molecule import (
    DegenerateInertiaError,
    Molecule,
    XYZParseError,
    compute_volume,
    from_xyz,
    is_standardized,
    standardize,
    to_xyz,
)

WATER = "3\nwater\nO 0 0 0.1173\nH 0 0.7572 -0.4692\nH 0 -0.7572 -0.4692\n"


def inertia(coords, masses):
    c = coords - coords.mean(axis=0)
    return np.einsum("i,ij->", masses, c * c) * np.eye(3) - np.einsum("i,ij,ik->jk", masses, c, c)


def test_water_mass_is_sum_of_atomic_masses():
    mol = from_xyz(WATER)
    assert mol.n_atoms == 3
    assert mol.mass == pytest.approx(2 * 1.008 + 15.999, abs=1e-9)
    assert mol.mass == pytest.approx(18.015, abs=1e-3)


def test_single_atom_radius_and_centroid():
    mol = from_xyz("1\n\nHe 0 0 0\n")
    assert mol.radius == 0.0
    np.testing.assert_array_equal(mol.centroid, 0.0)


@pytest.mark.parametrize(
    "text, line",
    [
        ("2\n\nH 0 0 0\nH 0 0 1\nH 0 0 2\n", None),
        ("x\n\nH 0 0 0\n", 1),
        ("1\n\nQq 0 0 0\n", 3),
        ("2\n\nH 0 0 0\nH 0 zero 1\n", 4),
    ],
)
def test_malformed_xyz_reports_line(text, line):
    with pytest.raises(XYZParseError) as err:
        from_xyz(text)
    if line is not None:
        assert f"line {line}" in str(err.value)


def test_xyz_round_trip_and_charges():
    mol = from_xyz(WATER)
    again = from_xyz(to_xyz(mol))
    np.testing.assert_allclose(again.positions, mol.positions, atol=1e-9)
    charged = from_xyz(
        "2\nProperties=species:S:1:pos:R:3:charge:R:1\nNa 0 0 0 1.0\nCl 2.8 0 0 -1.0\n"
    )
    np.testing.assert_array_equal(charged.partial_charges, [1.0, -1.0])


def test_rejects_bad_atomic_numbers():
    with pytest.raises(ValueError):
        Molecule([0], [[0, 0, 0]])
    with pytest.raises(ValueError):
        Molecule([104], [[0, 0, 0]])


def test_single_carbon_volume_matches_sphere():
    mol = Molecule([6], [[0, 0, 0]])
    exact = 4.0 / 3.0 * np.pi * BONDI_RADII[6] ** 3
    assert exact == pytest.approx(20.58, abs=0.01)
    assert compute_volume(mol, 100_000, seed=0) == pytest.approx(exact, rel=0.02)


def test_overlapping_and_disjoint_atoms():
    one = compute_volume(Molecule([6], [[0, 0, 0]]))
    same = compute_volume(Molecule([6, 6], [[0, 0, 0], [0, 0, 0]]))
    apart = compute_volume(Molecule([6, 6], [[0, 0, 0], [10, 0, 0]]))
    assert same == pytest.approx(one, rel=0.02)
    assert apart == pytest.approx(2 * one, rel=0.02)


def test_volume_is_deterministic_for_fixed_seed(benzene):
    a = compute_volume(benzene, 20_000, seed=7)
    assert a == compute_volume(benzene, 20_000, seed=7)
    assert a != compute_volume(benzene, 20_000, seed=8)


def test_volume_needs_enough_samples():
    with pytest.raises(ValueError):
        compute_volume(Molecule([6], [[0, 0, 0]]), n_samples=10)


def test_volume_grows_with_radii(benzene):
    base = benzene.vdw_radii
    v0 = compute_volume(benzene, 50_000, seed=3, radii=base)
    v1 = compute_volume(benzene, 50_000, seed=3, radii=base * 1.05)
    assert v1 > v0


def test_volume_is_rigid_invariant(benzene):
    rot = Rotation.from_rotvec([0.3, -1.1, 0.7]).as_matrix()
    moved = benzene.with_positions(benzene.positions @ rot.T + [4.0, -2.0, 9.0])
    assert compute_volume(moved, 50_000, seed=5) == pytest.approx(compute_volume(benzene, 50_000, seed=5), rel=1e-12)


def test_standard_pose_properties(asym):
    np.testing.assert_allclose(asym.centroid, 0.0, atol=1e-9)
    tensor = inertia(asym.positions, asym.masses)
    off = tensor - np.diag(np.diag(tensor))
    assert np.abs(off).max() < 1e-6 * np.abs(tensor).max()
    # principal moments in descending order along x, y, z
    d = np.diag(tensor)
    assert d[0] >= d[1] >= d[2]


def test_standardized_molecule_is_fixed_point(asym):
    again, pose = standardize(asym)
    np.testing.assert_allclose(pose.rotation_to_standard, np.eye(3), atol=1e-9)
    assert pose.handedness == 1
    np.testing.assert_allclose(again.positions, asym.positions, atol=1e-12)
    assert is_standardized(asym)


def test_recovers_known_rotation(asym):
    rot = Rotation.from_rotvec([0.4, 2.0, -0.9]).as_matrix()
    moved = asym.with_positions(asym.positions @ rot.T + [1.0, 2.0, 3.0])
    std, pose = standardize(moved)
    np.testing.assert_allclose(pose.rotation_to_standard, rot.T, atol=1e-6)
    np.testing.assert_allclose(std.positions, asym.positions, atol=1e-6)


def test_pose_rotation_is_proper_and_mirror_sets_handedness(asym):
    mirrored = asym.with_positions(asym.positions * [1, 1, -1])
    std, pose = standardize(mirrored)
    r = pose.rotation_to_standard
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
    assert np.linalg.det(r) == pytest.approx(1.0)
    assert pose.handedness == -1
    np.testing.assert_allclose(std.positions, asym.positions, atol=1e-9)


def test_planar_three_atom_molecule():
    mol = Molecule([8, 1, 1], [[0, 0, 0.1173], [0, 0.7572, -0.4692], [0, -0.7572, -0.4692]])
    std, pose = standardize(mol)
    r = pose.rotation_to_standard
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
    # the largest principal moment belongs to the plane normal, which goes on x
    np.testing.assert_allclose(std.positions[:, 0], 0.0, atol=1e-9)


def test_benzene_degenerate_in_plane_axes(benzene):
    np.testing.assert_allclose(benzene.positions[:, 0], 0.0, atol=1e-9)
    assert is_standardized(benzene)


@pytest.mark.parametrize("coords", [[[0, 0, 0]], [[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [1, 1, 1], [2, 2, 2]]])
def test_degenerate_inertia(coords):
    with pytest.raises(DegenerateInertiaError):
        standardize(Molecule([6] * len(coords), coords))


rotvecs = st.tuples(*[st.floats(-3.0, 3.0)] * 3)
shifts = st.tuples(*[st.floats(-20.0, 20.0)] * 3)


@settings(max_examples=60, deadline=None)
@given(rotvecs, shifts)
def test_standardize_rigid_invariance(asym, v, t):
    rot = Rotation.from_rotvec(v).as_matrix()
    moved = asym.with_positions(asym.positions @ rot.T + np.array(t))
    std = standardize(moved)[0]
    np.testing.assert_allclose(std.positions, asym.positions, atol=1e-6)
    assert np.allclose(standardize(std)[1].rotation_to_standard, np.eye(3), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-3, 3)] * 3), min_size=4, max_size=10), rotvecs)
def test_standardize_idempotent_on_random_molecules(points, v):
    pts = np.array(points)
    if np.linalg.matrix_rank(pts - pts.mean(0), tol=0.3) < 3:
        return
    mol = Molecule([6] * len(pts), pts)
    try:
        std = standardize(mol)[0]
    except DegenerateInertiaError:
        return
    again, pose = standardize(std)
    np.testing.assert_allclose(again.positions, std.positions, atol=1e-7)
    assert pose.handedness == 1


def test_masses_table_spot_values():
    np.testing.assert_allclose(atomic_masses([1, 6, 8]), [1.008, 12.011, 15.999])
    assert len(MASSES) == 103

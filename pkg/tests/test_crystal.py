import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_pairs
from molxtal.crystal import (
    CrystalParameters,
    ExtractionError,
    InsufficientSupercellError,
    LatticeConstraintError,
    PathologicalCellError,
    UnitCell,
    build_cluster,
    build_unit_cell,
    canonicalize,
    construct_radial_graph,
    extract_parameters,
    pose_aunit,
    unit_cell_from_p1,
)
from molxtal.lattice import CellParameters, cart_to_frac
from molxtal.molecule import Molecule
from molxtal.search import sample_random_crystal
from molxtal.symmetry import get_space_group, supported_space_groups

ALL = supported_space_groups()


def params(values, h=1, sg=1):
    return CrystalParameters.from_array(values, h, sg)


def cubic(a, centroid=(0, 0, 0), rotvec=(0, 0, 0), h=1, sg=1):
    return params([a, a, a, np.pi / 2, np.pi / 2, np.pi / 2, *centroid, *rotvec], h, sg)


def single_atom_cell(lengths, angles=(90, 90, 90), z=2):
    box = CellParameters.from_degrees(*lengths, *angles)
    from molxtal.lattice import cell_to_box

    return UnitCell(box=cell_to_box(box), atomic_numbers=[z], coords=np.zeros((1, 1, 3)))


# pose ------------------------------------------------------------------------

def test_identity_pose(asym):
    np.testing.assert_allclose(pose_aunit(asym, cubic(20.0)), asym.positions, atol=1e-12)


def test_half_turn_about_x():
    mol = Molecule([6, 6, 6, 6], [[0, 1, 0], [0, -1, 0], [2, 0, 0], [-2, 0, 0]])
    posed = pose_aunit(mol, cubic(20.0, rotvec=(np.pi, 0, 0)))
    np.testing.assert_allclose(posed[0], [0, -1, 0], atol=1e-12)


def test_inverted_pose(asym):
    posed = pose_aunit(asym, cubic(20.0, centroid=(0.5, 0.5, 0.5), h=-1))
    np.testing.assert_allclose(posed - 10.0, -asym.positions, atol=1e-12)


# unit cell -------------------------------------------------------------------

def test_p1_cell_is_the_posed_molecule(asym):
    p = cubic(20.0, centroid=(0.3, 0.4, 0.5), rotvec=(0.1, 0.2, 0.3))
    cell = build_unit_cell(asym, p)
    assert cell.z == 1
    np.testing.assert_allclose(cell.coords[0], pose_aunit(asym, p), atol=1e-12)


def test_p21_second_image_centroid(asym):
    p = params([8, 9, 10, np.pi / 2, 1.8, np.pi / 2, 0.1, 0.1, 0.1, 0, 0, 0], sg=4)
    cell = build_unit_cell(asym, p)
    frac = cart_to_frac(cell.box, cell.centroids)
    np.testing.assert_allclose(frac, [[0.1, 0.1, 0.1], [0.9, 0.6, 0.9]], atol=1e-12)


def test_pna21_has_four_distinct_images(asym):
    p = params([9, 11, 7, np.pi / 2] * 1 + [np.pi / 2, np.pi / 2, 0.2, 0.3, 0.1, 0.5, -0.2, 1.0], sg=33)
    cell = build_unit_cell(asym, p)
    assert cell.coords.shape == (4, asym.n_atoms, 3)
    c = cell.centroids
    d = np.linalg.norm(c[:, None] - c[None], axis=-1) + np.eye(4) * 99
    assert d.min() > 0.5


def test_overlapping_images_raise(asym):
    p = params([8, 9, 10, np.pi / 2, np.pi / 2, np.pi / 2, 0.0, 0.0, 0.0, 0, 0, 0], sg=2)
    with pytest.raises(PathologicalCellError):
        build_unit_cell(asym, p)


def test_lattice_constraints_enforced():
    with pytest.raises(LatticeConstraintError):
        params([8, 9, 10, 1.5, 1.8, np.pi / 2, 0.1, 0.1, 0.1, 0, 0, 0], sg=14)
    with pytest.raises(LatticeConstraintError):
        params([8, 9, 10, np.pi / 2, 1.8, np.pi / 2, 0.1, 0.1, 0.1, 0, 0, 0], sg=19)


def test_rotation_vector_canonicalized():
    p = cubic(10.0, rotvec=(0, 0, 1.5 * np.pi))
    np.testing.assert_allclose(p.aunit_orientation, [0, 0, -0.5 * np.pi], atol=1e-12)
    assert np.linalg.norm(p.aunit_orientation) <= np.pi


def wrapped_frac(cell, k):
    return cart_to_frac(cell.box, cell.coords[k])


@pytest.mark.parametrize("number", ALL)
def test_images_obey_symmetry(asym, number, rng):
    sg = get_space_group(number)
    p = sample_random_crystal(asym, sg, 0.3, rng)
    cell = build_unit_cell(asym, p)
    f0 = wrapped_frac(cell, 0)
    for k, op in enumerate(sg.ops):
        expected = f0 @ op.W.T + op.t
        diff = wrapped_frac(cell, k) - expected
        # one common lattice shift per molecule
        shift = np.round(diff[0])
        np.testing.assert_allclose(diff, np.broadcast_to(shift, diff.shape), atol=1e-9)
        assert np.all((cart_to_frac(cell.box, cell.centroids[k]) >= -1e-12))
        assert np.all((cart_to_frac(cell.box, cell.centroids[k]) < 1 + 1e-12))


def test_integer_centroid_shift_gives_same_cell(asym, rng):
    p = sample_random_crystal(asym, 14, 0.3, rng)
    moved = p.replace(aunit_centroid=p.aunit_centroid + [1, -2, 3])
    np.testing.assert_allclose(build_unit_cell(asym, moved).coords, build_unit_cell(asym, p).coords, atol=1e-9)


# extraction ------------------------------------------------------------------

@pytest.mark.parametrize("number", ALL)
def test_extraction_round_trip(asym, number, rng):
    for _ in range(10):
        p = sample_random_crystal(asym, number, 0.3, rng)
        q = extract_parameters(build_unit_cell(asym, p), molecule=asym)
        assert q.handedness == p.handedness
        np.testing.assert_allclose(q.as_array(), p.as_array(), atol=1e-6)


def test_canonicalize_moves_centroid_into_asymmetric_unit(asym, rng):
    p = sample_random_crystal(asym, 61, 0.3, rng)
    sg = p.space_group
    outside = p.replace(aunit_centroid=np.mod(sg.ops[5].W @ p.aunit_centroid + sg.ops[5].t, 1))
    q = canonicalize(outside)
    assert sg.in_aunit(q.aunit_centroid)
    np.testing.assert_allclose(
        np.sort(build_unit_cell(asym, q).centroids, axis=0),
        np.sort(build_unit_cell(asym, outside).centroids, axis=0),
        atol=1e-9,
    )


def test_p1_extraction_centroid(asym):
    p = cubic(15.0, centroid=(0.25, 0.5, 0.75), rotvec=(0.3, -0.2, 0.1))
    cell = build_unit_cell(asym, p)
    q = extract_parameters(cell, molecule=asym)
    np.testing.assert_allclose(q.aunit_centroid, cart_to_frac(cell.box, cell.centroids[0]), atol=1e-12)


def test_distorted_molecule_fails_extraction(asym, rng):
    p = sample_random_crystal(asym, 14, 0.3, rng)
    cell = build_unit_cell(asym, p)
    coords = cell.coords.copy()
    coords[0, 1] += [0.1, 0.0, 0.0]
    bad = UnitCell(cell.box, cell.atomic_numbers, coords, space_group=cell.space_group)
    with pytest.raises(ExtractionError):
        extract_parameters(bad, molecule=asym)


def test_cell_from_p1_atoms(asym, rng):
    p = sample_random_crystal(asym, 33, 0.25, rng)
    cell = build_unit_cell(asym, p)
    frac = np.mod(cell.frac_coords.reshape(-1, 3), 1.0)
    numbers = np.tile(cell.atomic_numbers, cell.z)
    perm = rng.permutation(len(numbers))
    # molecules come back whole even when their atoms are scrambled and wrapped
    grouped = unit_cell_from_p1(cell.box, numbers, frac, space_group=33)
    assert grouped.z == 4
    q = extract_parameters(grouped, molecule=asym)
    np.testing.assert_allclose(q.as_array(), p.as_array(), atol=1e-6)
    # scrambled atom order no longer matches the template
    with pytest.raises(ExtractionError):
        extract_parameters(unit_cell_from_p1(cell.box, numbers[perm], frac[perm], space_group=33), molecule=asym)


# clusters --------------------------------------------------------------------

def test_cutoff_below_nearest_contact_leaves_only_canonical():
    cluster = build_cluster(single_atom_cell((10, 10, 10)), cutoff=5.0)
    assert cluster.n_molecules == 1
    assert len(cluster.edges) == 0


def test_cubic_single_atom_neighbours():
    # lattice vectors with |v| <= 10 in a 10 A cubic cell: the six face neighbours
    cluster = build_cluster(single_atom_cell((10, 10, 10)), cutoff=10.0)
    n = range(-2, 3)
    expected = sum(1 for v in itertools.product(n, n, n) if 0 < 10 * np.linalg.norm(v) <= 10.0)
    assert expected == 6
    assert cluster.n_molecules == 1 + expected
    np.testing.assert_allclose(cluster.edges.distance, 10.0)


def test_two_sided_contact_in_p1():
    cluster = build_cluster(single_atom_cell((3, 20, 20)), cutoff=6.0)
    graph = construct_radial_graph(cluster, 6.0)
    np.testing.assert_allclose(np.sort(graph.distance), [3, 3, 6, 6])
    assert len(construct_radial_graph(cluster, 4.0)) == 2


def test_isolated_molecule(asym):
    cell = build_unit_cell(asym, cubic(60.0, centroid=(0.5, 0.5, 0.5)))
    cluster = build_cluster(cell, 10.0)
    assert cluster.n_molecules == 1 and len(cluster.edges) == 0


def test_graph_cutoff_cannot_exceed_cluster_cutoff():
    cluster = build_cluster(single_atom_cell((4, 4, 4)), cutoff=5.0)
    with pytest.raises(ValueError):
        construct_radial_graph(cluster, 6.0)


def test_supercell_too_small():
    with pytest.raises(InsufficientSupercellError):
        build_cluster(single_atom_cell((4, 4, 4)), cutoff=10.0, supercell_extent=3)
    assert build_cluster(single_atom_cell((4, 4, 4)), cutoff=10.0, supercell_extent=7).n_molecules > 1


def test_cluster_invariants(asym, rng):
    p = sample_random_crystal(asym, 14, 0.6, rng)
    cluster = build_cluster(build_unit_cell(asym, p), 6.0)
    canon = cluster.canonical_mask
    g = cluster.edges
    assert np.all(canon[g.i]) and not np.any(canon[g.j])
    assert np.all(g.distance <= 6.0)
    for m in range(1, cluster.n_molecules):
        pos = cluster.positions[cluster.mol_index == m]
        d = np.linalg.norm(pos[:, None] - cluster.positions[canon][None], axis=-1)
        assert d.min() <= 6.0


def test_edges_match_brute_force(asym, rng):
    p = sample_random_crystal(asym, 33, 0.7, rng)
    cluster = build_cluster(build_unit_cell(asym, p), 10.0)
    canon = np.nonzero(cluster.canonical_mask)[0]
    env = np.nonzero(~cluster.canonical_mask)[0]
    assert cluster.n_atoms >= 200
    bf = brute_force_pairs(cluster.positions[canon], cluster.positions[env], 10.0)
    got = sorted(zip(cluster.edges.i.tolist(), cluster.edges.j.tolist()))
    assert got == sorted((int(canon[i]), int(env[j])) for i, j, _ in bf)
    bf_d = {(int(canon[i]), int(env[j])): d for i, j, d in bf}
    for i, j, d in zip(cluster.edges.i, cluster.edges.j, cluster.edges.distance):
        assert d == pytest.approx(bf_d[(int(i), int(j))], abs=1e-12)


def brute_force_cluster_centroids(cell, cutoff, reach=4):
    """Centroids of every image in a (2*reach+1)^3 block within cutoff of the canonical molecule."""
    canon = cell.coords[0]
    out = []
    for k in range(cell.z):
        for n in itertools.product(range(-reach, reach + 1), repeat=3):
            if k == 0 and n == (0, 0, 0):
                continue
            pos = cell.coords[k] + np.array(n) @ cell.box
            d = np.sqrt(((pos[:, None] - canon[None]) ** 2).sum(-1)).min()
            if d <= cutoff:
                out.append(pos.mean(0))
    return np.array(sorted(map(tuple, np.round(out, 6))))


@pytest.mark.parametrize("number", [1, 2, 14, 61])
def test_cluster_complete_against_exhaustive_expansion(asym, number, rng):
    p = sample_random_crystal(asym, number, 0.5, rng)
    cell = build_unit_cell(asym, p)
    cluster = build_cluster(cell, 6.0)
    got = np.array(
        sorted(
            map(tuple, np.round([cluster.positions[cluster.mol_index == m].mean(0) for m in range(1, cluster.n_molecules)], 6))
        )
    )
    np.testing.assert_allclose(got, brute_force_cluster_centroids(cell, 6.0), atol=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(ALL))
def test_round_trip_property(asym, seed, number):
    p = sample_random_crystal(asym, number, 0.3, np.random.default_rng(seed))
    q = extract_parameters(build_unit_cell(asym, p), molecule=asym)
    np.testing.assert_allclose(q.as_array(), p.as_array(), atol=1e-6)

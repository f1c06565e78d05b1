"""Rigid Z'=1 molecular crystals: parameters, unit cells and analysis clusters.

A crystal is described by 12 numbers, the cell (a, b, c, alpha, beta, gamma),
the fractional centroid (u, v, w) of the asymmetric-unit molecule and a
rotation vector applied to the standardized molecule, plus a discrete
handedness and the space group. The posed molecule is

    x = R(theta) @ (h * x_std) + box.T @ (u, v, w)

and symmetry images are rigid copies: the centroid goes through the
operation in fractional space, the body through the operation's Cartesian
matrix ``M W M^-1`` (M = box.T). Images are shifted by whole lattice vectors
so their centroids fall in [0, 1)^3; molecules are never split.
"""

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import elements
from .lattice import CellParameters, box_to_cell, cart_to_frac, cell_heights, cell_to_box, packing_coefficient
from .molecule import Molecule, is_standardized, standardize
from .rotations import canonical_rotvec, matrix_to_rotvec, nearest_proper_rotation, rotvec_to_matrix
from .symmetry import get_space_group

ANGLE_CONSTRAINT_TOL = 1e-6
MIN_CENTROID_SEPARATION = 0.5
EXTRACTION_TOL = 1e-3


class PathologicalCellError(ValueError):
    pass


class InsufficientSupercellError(ValueError):
    pass


class ExtractionError(ValueError):
    pass


class LatticeConstraintError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CrystalParameters:
    cell: CellParameters
    aunit_centroid: np.ndarray
    aunit_orientation: np.ndarray
    handedness: int
    space_group: object
    z_prime: int = 1

    def __post_init__(self):
        sg = get_space_group(self.space_group)
        object.__setattr__(self, "space_group", sg)
        if self.z_prime != 1:
            raise ValueError("only Z' = 1 crystals are supported")
        if self.handedness not in (1, -1):
            raise ValueError("handedness must be +1 or -1")
        object.__setattr__(self, "handedness", int(self.handedness))
        cen = np.array(self.aunit_centroid, dtype=float).reshape(3)
        rot = canonical_rotvec(np.array(self.aunit_orientation, dtype=float).reshape(3))
        for a in (cen, rot):
            a.setflags(write=False)
        object.__setattr__(self, "aunit_centroid", cen)
        object.__setattr__(self, "aunit_orientation", rot)
        fixed = sg.fixed_angles
        if np.any(np.abs(self.cell.angles[fixed] - np.pi / 2) > ANGLE_CONSTRAINT_TOL):
            raise LatticeConstraintError(
                f"{sg.symbol} ({sg.crystal_system}) requires angles {np.array(['alpha', 'beta', 'gamma'])[fixed].tolist()} = 90 deg"
            )

    @classmethod
    def from_array(cls, values, handedness, space_group):
        v = np.asarray(values, dtype=float).reshape(12)
        return cls(CellParameters(v[:3], v[3:6]), v[6:9], v[9:12], handedness, space_group)

    def as_array(self):
        return np.concatenate([self.cell.lengths, self.cell.angles, self.aunit_centroid, self.aunit_orientation])

    @cached_property
    def box(self):
        return cell_to_box(self.cell)

    @property
    def orientation_matrix(self):
        return rotvec_to_matrix(self.aunit_orientation)

    def replace(self, **changes):
        kw = dict(
            cell=self.cell,
            aunit_centroid=self.aunit_centroid,
            aunit_orientation=self.aunit_orientation,
            handedness=self.handedness,
            space_group=self.space_group,
        )
        kw.update(changes)
        return CrystalParameters(**kw)

    def __repr__(self):
        return (
            f"CrystalParameters({self.space_group.symbol}, {self.cell!r}, "
            f"centroid={np.round(self.aunit_centroid, 5).tolist()}, "
            f"rotvec={np.round(self.aunit_orientation, 5).tolist()}, handedness={self.handedness:+d})"
        )


def cartesian_ops(box, sg):
    """Cartesian matrices M W M^-1 of the operations' rotation parts, shape (Z, 3, 3)."""
    m = np.asarray(box).T
    return m @ sg.rotations @ np.linalg.inv(m)


def canonicalize(params):
    """Equivalent parameters with the centroid inside the asymmetric unit.

    Lattice translations are removed first; if the centroid is still outside
    the asymmetric-unit box, the symmetry image that lies inside it becomes
    the new reference molecule. Improper operations flip the handedness.
    """
    sg = params.space_group
    t = np.mod(params.aunit_centroid, 1.0)
    t[t >= 1.0] = 0.0
    ext = sg.aunit_extent
    images = np.mod(sg.rotations @ t + sg.translations, 1.0)
    images[images >= 1.0] = 0.0
    inside = np.all((images >= 0) & (images < ext), axis=1)
    if inside.any():
        k = int(np.argmax(inside))
    else:
        # rounding at a box face: take the image closest to the box
        k = int(np.argmin(np.maximum(0, images - ext).sum(axis=1)))
    if k == 0:
        return params.replace(aunit_centroid=t)
    c = cartesian_ops(params.box, sg)[k]
    det = sg.ops[k].determinant
    rot = nearest_proper_rotation(det * c) @ params.orientation_matrix
    return params.replace(
        aunit_centroid=images[k],
        aunit_orientation=matrix_to_rotvec(rot),
        handedness=params.handedness * det,
    )


def pose_aunit(mol, params):
    """Cartesian coordinates of the asymmetric-unit molecule."""
    r = params.orientation_matrix
    return (params.handedness * mol.positions) @ r.T + params.aunit_centroid @ params.box


@dataclass(frozen=True, eq=False)
class UnitCell:
    """Z whole molecules of one species in a periodic box.

    ``coords[k]`` holds the atoms of molecule k in the order of
    ``atomic_numbers``; molecule 0 is the canonical (asymmetric-unit) one.
    """

    box: np.ndarray
    atomic_numbers: np.ndarray
    coords: np.ndarray
    space_group: object = None
    parameters: CrystalParameters = None
    molecule: Molecule = None
    op_index: np.ndarray = None
    shifts: np.ndarray = None
    partial_charges: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "box", np.asarray(self.box, float))
        object.__setattr__(self, "coords", np.asarray(self.coords, float))
        object.__setattr__(self, "atomic_numbers", np.asarray(self.atomic_numbers, int))
        if self.partial_charges is None:
            object.__setattr__(self, "partial_charges", np.zeros(self.atomic_numbers.size))

    @property
    def z(self):
        return self.coords.shape[0]

    @property
    def n_atoms_per_molecule(self):
        return self.atomic_numbers.size

    @property
    def centroids(self):
        return self.coords.mean(axis=1)

    @property
    def volume(self):
        return float(abs(np.linalg.det(self.box)))

    @property
    def frac_coords(self):
        return cart_to_frac(self.box, self.coords.reshape(-1, 3))

    @property
    def all_atomic_numbers(self):
        return np.tile(self.atomic_numbers, self.z)

    @cached_property
    def molecule_volume(self):
        mol = self.molecule
        if mol is None:
            mol = Molecule(self.atomic_numbers, self.coords[0], self.partial_charges)
        return mol.volume

    @property
    def packing_coefficient(self):
        return packing_coefficient(self.molecule_volume, self.z, self.volume)


def image_transforms(box, sg, centroid, rotation, handedness):
    """Per-operation linear parts ``A`` (Z, 3, 3) and unwrapped centroids ``f`` (Z, 3).

    Atom j of image k sits at ``A[k] @ s_j + box.T @ (f[k] + shift)``.
    """
    a = cartesian_ops(box, sg) @ rotation * handedness
    f = np.einsum("kij,j->ki", sg.rotations, centroid) + sg.translations
    return a, f


def build_unit_cell(mol, params, check=True):
    """Expand the asymmetric unit into Z rigid symmetry images."""
    if check and not is_standardized(mol):
        raise ValueError("build_unit_cell expects a molecule in standard pose (centroid at origin)")
    sg = params.space_group
    box = params.box
    a, f = image_transforms(box, sg, params.aunit_centroid, params.orientation_matrix, params.handedness)
    shifts = -np.floor(f).astype(int)
    centers = (f + shifts) @ box
    coords = np.einsum("kij,nj->kni", a, mol.positions) + centers[:, None, :]
    cell = UnitCell(
        box=box,
        atomic_numbers=mol.atomic_numbers,
        coords=coords,
        space_group=sg,
        parameters=params,
        molecule=mol,
        op_index=np.arange(sg.z),
        shifts=shifts,
        partial_charges=mol.partial_charges,
    )
    if check and sg.z > 1:
        d = _min_image_centroid_distance(box, f + shifts)
        if d < MIN_CENTROID_SEPARATION:
            raise PathologicalCellError(
                f"symmetry images overlap: centroid separation {d:.3g} A < {MIN_CENTROID_SEPARATION} A"
            )
    return cell


def _min_image_centroid_distance(box, frac):
    diff = frac[:, None, :] - frac[None, :, :]
    diff -= np.round(diff)
    iu = np.triu_indices(len(frac), 1)
    diff = diff[iu]
    shifts = np.array(list(itertools.product((-1, 0, 1), repeat=3)))
    cart = (diff[:, None, :] + shifts[None]) @ box
    return float(np.linalg.norm(cart, axis=-1).min())


@dataclass(frozen=True, eq=False)
class RadialGraph:
    """Canonical-to-environment atom pairs; ``i`` indexes canonical atoms."""

    i: np.ndarray
    j: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return self.i.size


@dataclass(frozen=True, eq=False)
class CrystalCluster:
    """Whole molecules around the canonical one, carved from a supercell.

    Per-molecule ``image_op`` and ``image_shift`` record which symmetry
    operation and total lattice translation produced each copy.
    """

    atomic_numbers: np.ndarray
    positions: np.ndarray
    mol_index: np.ndarray
    partial_charges: np.ndarray
    cutoff: float
    box: np.ndarray
    image_op: np.ndarray
    image_shift: np.ndarray
    n_atoms_per_molecule: int
    canonical_molecule_index: int = 0
    edges: RadialGraph = field(default=None)
    unit_cell: UnitCell = None

    @property
    def n_molecules(self):
        return int(self.mol_index.max()) + 1 if self.mol_index.size else 0

    @property
    def canonical_mask(self):
        return self.mol_index == self.canonical_molecule_index

    @property
    def n_atoms(self):
        return self.atomic_numbers.size


def supercell_half_extent(box, radius, cutoff):
    """Translations per axis that guarantee every molecule within reach is found."""
    reach = 2.0 * radius + cutoff
    return np.floor(reach / cell_heights(box) + 1.0).astype(int)


def build_cluster(cell, cutoff, supercell_extent=None):
    """Carve all whole molecules with any atom within ``cutoff`` of the canonical one.

    ``supercell_extent`` N covers lattice translations -N//2..N//2 along each
    axis; by default the smallest extent that guarantees completeness is used.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    box = cell.box
    rel = cell.coords - cell.centroids[:, None, :]
    radius = float(np.linalg.norm(rel, axis=-1).max())
    need = supercell_half_extent(box, radius, cutoff)
    if supercell_extent is None:
        half = need
    else:
        half = np.full(3, int(supercell_extent) // 2)
        if np.any(half < need):
            raise InsufficientSupercellError(
                f"supercell extent {supercell_extent} is too small for cutoff {cutoff} A "
                f"(needs {int(2 * need.max() + 1)} along the shortest cell height)"
            )
    cen_frac = cart_to_frac(box, cell.centroids)
    ops = cell.op_index if cell.op_index is not None else np.arange(cell.z)
    shifts = cell.shifts if cell.shifts is not None else np.zeros((cell.z, 3), int)
    mol_k, mol_shift, env_pos = _carve(box, rel, cen_frac, radius, cutoff, half)

    n = cell.n_atoms_per_molecule
    positions = np.concatenate([cell.coords[0][None], env_pos]).reshape(-1, 3)
    mol_ids = np.concatenate([[0], mol_k])
    translations = np.concatenate([np.zeros((1, 3), int), mol_shift])
    cluster = CrystalCluster(
        atomic_numbers=np.tile(cell.atomic_numbers, len(mol_ids)),
        positions=positions,
        mol_index=np.repeat(np.arange(len(mol_ids)), n),
        partial_charges=np.tile(cell.partial_charges, len(mol_ids)),
        cutoff=float(cutoff),
        box=box,
        image_op=ops[mol_ids],
        image_shift=shifts[mol_ids] + translations,
        n_atoms_per_molecule=n,
        unit_cell=cell,
    )
    return _with_edges(cluster, construct_radial_graph(cluster, cutoff))


def _with_edges(cluster, edges):
    object.__setattr__(cluster, "edges", edges)
    return cluster


def _carve(box, rel, cen_frac, radius, cutoff, half):
    """Environment molecules (unit-cell index, translation, atom coords)."""
    grid = np.array(
        list(itertools.product(*(range(-h, h + 1) for h in half))), dtype=int
    )
    z = len(cen_frac)
    cand = cen_frac[:, None, :] + grid[None, :, :]
    cand_cart = cand @ box
    origin = cen_frac[0] @ box
    d = np.linalg.norm(cand_cart - origin, axis=-1)
    keep = d <= 2.0 * radius + cutoff
    is_self = np.all(grid == 0, axis=1)
    keep[0, is_self] = False
    k_idx, g_idx = np.nonzero(keep)
    if k_idx.size == 0:
        n = rel.shape[1]
        return np.zeros(0, int), np.zeros((0, 3), int), np.zeros((0, n, 3))
    pos = rel[k_idx] + cand_cart[k_idx, g_idx][:, None, :]
    canon = rel[0] + origin
    tree = cKDTree(canon)
    dist, _ = tree.query(pos.reshape(-1, 3), distance_upper_bound=np.nextafter(cutoff, np.inf))
    close = (dist.reshape(pos.shape[:2]) <= cutoff).any(axis=1)
    return k_idx[close], grid[g_idx[close]], pos[close]


def construct_radial_graph(cluster, cutoff=None):
    """All canonical/environment atom pairs within ``cutoff``, sorted by (i, j)."""
    cutoff = cluster.cutoff if cutoff is None else float(cutoff)
    if cutoff > cluster.cutoff + 1e-12:
        raise ValueError(f"graph cutoff {cutoff} exceeds the cluster cutoff {cluster.cutoff}; edges would be missing")
    canon = np.nonzero(cluster.canonical_mask)[0]
    env = np.nonzero(~cluster.canonical_mask)[0]
    if env.size == 0:
        empty = np.zeros(0, int)
        return RadialGraph(empty, empty, np.zeros(0))
    pairs = cKDTree(cluster.positions[canon]).sparse_distance_matrix(
        cKDTree(cluster.positions[env]), cutoff, output_type="ndarray"
    )
    i = canon[pairs["i"]]
    j = env[pairs["j"]]
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    # recompute directly so the distances do not depend on tree internals
    dist = np.linalg.norm(cluster.positions[i] - cluster.positions[j], axis=1)
    return RadialGraph(i, j, dist)


def extract_parameters(cell, molecule=None, space_group=None, tol=EXTRACTION_TOL):
    """Recover crystal parameters from Z rigid molecule images.

    ``molecule`` is the standardized template (defaults to the cell's own
    template, else the standardized first image). Atom order in every image
    must match the template.
    """
    sg = get_space_group(space_group if space_group is not None else cell.space_group)
    if cell.z != sg.z:
        raise ExtractionError(f"{sg.symbol} needs {sg.z} molecules per cell, found {cell.z}")
    template = molecule if molecule is not None else cell.molecule
    if template is None:
        template = standardize(Molecule(cell.atomic_numbers, cell.coords[0], cell.partial_charges))[0]
    if not np.array_equal(template.atomic_numbers, cell.atomic_numbers):
        raise ExtractionError("template and cell atoms differ in type or order")
    box = cell.box
    cen = cell.centroids
    frac = cart_to_frac(box, cen)
    wrapped = np.mod(frac, 1.0)
    wrapped[wrapped >= 1.0] = 0.0
    inside = [k for k in range(cell.z) if sg.in_aunit(wrapped[k], tol=1e-9)]
    if not inside:
        raise ExtractionError("no molecule centroid lies in the asymmetric unit")
    k = inside[0]
    body = cell.coords[k] - cen[k]
    x = template.positions - template.centroid
    best = None
    for h in (1, -1):
        rot, rmsd = _kabsch(h * x, body)
        if best is None or rmsd < best[2] - 1e-9:
            best = (h, rot, rmsd)
    h, rot, rmsd = best
    if rmsd > tol:
        raise ExtractionError(f"molecule does not match the rigid template (RMSD {rmsd:.3g} A > {tol} A)")

    cellp = box_to_cell(box)
    angles = cellp.angles.copy()
    fixed = sg.fixed_angles
    if np.all(np.abs(angles[fixed] - np.pi / 2) < 1e-4):
        angles[fixed] = np.pi / 2
    params = CrystalParameters(
        CellParameters(cellp.lengths, angles), wrapped[k], matrix_to_rotvec(rot), h, sg
    )
    rebuilt = build_unit_cell(template, params, check=False)
    dev = _image_mismatch(box, rebuilt.coords, cell.coords)
    if dev > tol:
        raise ExtractionError(f"molecule images are inconsistent with {sg.symbol} (deviation {dev:.3g} A)")
    return params


def _kabsch(x, y):
    """Proper rotation R minimizing |x @ R.T - y|, and the resulting RMSD."""
    u, _, vt = np.linalg.svd(x.T @ y)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    rot = (u @ np.diag([1.0, 1.0, d]) @ vt).T
    rmsd = float(np.sqrt(np.mean(np.sum((x @ rot.T - y) ** 2, axis=1))))
    return rot, rmsd


def _image_mismatch(box, built, given):
    """Largest atom deviation after matching each built image to a given one mod lattice."""
    worst = 0.0
    given_frac = cart_to_frac(box, given.mean(axis=1))
    for mol in built:
        cf = cart_to_frac(box, mol.mean(axis=0))
        shift = np.round(given_frac - cf)
        dev = np.linalg.norm(given - (mol[None] + (shift @ box)[:, None, :]), axis=-1).max(axis=1)
        worst = max(worst, float(dev.min()))
    return worst


# covalent radii (Cordero et al. 2008), used only to split P1 cells into molecules
_COVALENT = {
    1: 0.31, 2: 0.28, 3: 1.28, 4: 0.96, 5: 0.84, 6: 0.76, 7: 0.71, 8: 0.66, 9: 0.57, 10: 0.58,
    11: 1.66, 12: 1.41, 13: 1.21, 14: 1.11, 15: 1.07, 16: 1.05, 17: 1.02, 18: 1.06, 19: 2.03,
    20: 1.76, 26: 1.32, 29: 1.32, 30: 1.22, 33: 1.19, 34: 1.20, 35: 1.20, 36: 1.16, 53: 1.39, 54: 1.40,
}
BOND_TOLERANCE = 0.45


def find_molecules(box, atomic_numbers, frac):
    """Group P1 atoms into whole molecules by covalent connectivity.

    Returns a list of (atom indices, unwrapped Cartesian coordinates), ordered
    by smallest atom index, each molecule shifted so its centroid lies in the
    cell.
    """
    numbers = np.asarray(atomic_numbers, int)
    frac = np.asarray(frac, float)
    n = numbers.size
    radii = np.array([_COVALENT.get(int(z), 1.5) for z in numbers])
    shifts = np.array(list(itertools.product((-1, 0, 1), repeat=3)))
    diff = frac[None, :, :] - frac[:, None, :]
    diff -= np.round(diff)
    cart = (diff[:, :, None, :] + shifts[None, None]) @ box
    dist = np.linalg.norm(cart, axis=-1)
    best = dist.argmin(axis=-1)
    dmin = np.take_along_axis(dist, best[..., None], axis=-1)[..., 0]
    bonded = dmin < radii[:, None] + radii[None, :] + BOND_TOLERANCE
    np.fill_diagonal(bonded, False)

    seen = np.zeros(n, bool)
    pos = np.zeros((n, 3))
    groups = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        pos[start] = frac[start] @ box
        members, queue = [start], [start]
        while queue:
            i = queue.pop(0)
            for j in np.nonzero(bonded[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    pos[j] = pos[i] + cart[i, j, best[i, j]]
                    members.append(j)
                    queue.append(j)
        members = sorted(members)
        coords = pos[members]
        cf = cart_to_frac(box, coords.mean(axis=0))
        coords = coords - np.floor(cf) @ box
        groups.append((np.array(members), coords))
    return groups


def unit_cell_from_p1(box, atomic_numbers, frac, space_group=None, partial_charges=None):
    """Build a UnitCell from explicit P1 atoms (e.g. read from a CIF)."""
    groups = find_molecules(box, atomic_numbers, frac)
    numbers = np.asarray(atomic_numbers, int)
    first = numbers[groups[0][0]]
    for idx, _ in groups:
        if not np.array_equal(numbers[idx], first):
            raise ExtractionError("cell contains more than one molecular species or atom ordering (Z' > 1 is unsupported)")
    coords = np.stack([c for _, c in groups])
    charges = None if partial_charges is None else np.asarray(partial_charges, float)[groups[0][0]]
    sg = get_space_group(space_group) if space_group is not None else None
    return UnitCell(box=np.asarray(box, float), atomic_numbers=first, coords=coords, space_group=sg, partial_charges=charges)


def vdw_sigma(numbers_i, numbers_j):
    return elements.vdw_radii(numbers_i) + elements.vdw_radii(numbers_j)

"""Rigid molecules: XYZ input, derived geometry and the standard pose.

The standard pose puts the center of geometry at the origin and the principal
axes of the (mass-weighted) inertia tensor along x, y, z in order of
decreasing moment. Axis signs are fixed by the atoms themselves: walking
through the atoms from the farthest to the nearest (distance rounded to 1e-6 A,
ties by atom index), each axis points towards the first atom with a
non-vanishing component along it. Inside a degenerate eigenspace the axes are
the normalized projections of those atoms instead of arbitrary eigenvectors.
An axis no atom can orient (the normal of a planar molecule) completes a
right-handed frame. When the atom-fixed frame is left-handed the molecule is
chiral with respect to it: the pose records ``handedness = -1`` and the
standardized coordinates are the mirror image, so that both enantiomers share
one standardized geometry.
"""

import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import elements

DEFAULT_VOLUME_SAMPLES = 100_000
DEFAULT_VOLUME_SEED = 0

_DISTANCE_DECIMALS = 6
_AXIS_TOL = 1e-6
_DEGENERACY_RTOL = 1e-6


class XYZParseError(ValueError):
    pass


class DegenerateInertiaError(ValueError):
    pass


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Molecule:
    """An immutable rigid molecule.

    Attributes
    ----------
    atomic_numbers : (n,) int array
    positions : (n, 3) float array, Angstrom
    partial_charges : (n,) float array, elementary charges (default zero)
    """

    atomic_numbers: np.ndarray
    positions: np.ndarray
    partial_charges: np.ndarray = field(default=None)

    def __post_init__(self):
        numbers = _readonly(self.atomic_numbers, int).reshape(-1)
        positions = _readonly(self.positions, float)
        if numbers.size < 1:
            raise ValueError("a molecule needs at least one atom")
        if positions.shape != (numbers.size, 3):
            raise ValueError(f"positions must have shape ({numbers.size}, 3), got {positions.shape}")
        if numbers.min() < 1 or numbers.max() > elements.MAX_ATOMIC_NUMBER:
            raise ValueError("atomic numbers must lie in [1, 103]")
        if not np.all(np.isfinite(positions)):
            raise ValueError("atom positions must be finite")
        charges = self.partial_charges
        charges = np.zeros(numbers.size) if charges is None else charges
        charges = _readonly(charges, float).reshape(-1)
        if charges.size != numbers.size:
            raise ValueError("one partial charge per atom is required")
        object.__setattr__(self, "atomic_numbers", numbers)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "partial_charges", charges)

    def __len__(self):
        return self.atomic_numbers.size

    @property
    def n_atoms(self):
        return self.atomic_numbers.size

    @property
    def symbols(self):
        return [elements.symbol(z) for z in self.atomic_numbers]

    @property
    def centroid(self):
        return self.positions.mean(axis=0)

    @cached_property
    def vdw_radii(self):
        return elements.vdw_radii(self.atomic_numbers)

    @cached_property
    def masses(self):
        return elements.atomic_masses(self.atomic_numbers)

    @cached_property
    def mass(self):
        return float(self.masses.sum())

    @cached_property
    def radius(self):
        return float(np.linalg.norm(self.positions - self.centroid, axis=1).max())

    @cached_property
    def volume(self):
        return compute_volume(self)

    def with_positions(self, positions):
        return Molecule(self.atomic_numbers, positions, self.partial_charges)


def _looks_like_path(source):
    if isinstance(source, os.PathLike):
        return True
    return isinstance(source, str) and "\n" not in source


def from_xyz(source):
    """Read a molecule from an XYZ file path or XYZ-formatted text.

    Extended-XYZ comment lines with a ``Properties=`` entry may declare a
    ``charge`` column holding partial charges.
    """
    text = Path(source).read_text() if _looks_like_path(source) else source
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise XYZParseError("line 1: missing atom count")
    try:
        n_atoms = int(lines[0].split()[0])
    except ValueError:
        raise XYZParseError(f"line 1: malformed atom count {lines[0].strip()!r}") from None
    if n_atoms < 1:
        raise XYZParseError("line 1: atom count must be positive")
    comment = lines[1] if len(lines) > 1 else ""
    charge_col = _charge_column(comment)

    rows = lines[2:]
    body = [(i + 3, ln) for i, ln in enumerate(rows) if ln.strip()]
    if len(body) != n_atoms:
        raise XYZParseError(f"atom count line says {n_atoms} atoms but {len(body)} atom rows follow")

    numbers, positions, charges = [], [], []
    for lineno, line in body:
        parts = line.split()
        if len(parts) < 4:
            raise XYZParseError(f"line {lineno}: expected 'El x y z', got {line.strip()!r}")
        try:
            z = int(parts[0]) if parts[0].isdigit() else elements.atomic_number(parts[0])
        except KeyError:
            raise XYZParseError(f"line {lineno}: unknown element symbol {parts[0]!r}") from None
        try:
            positions.append([float(p) for p in parts[1:4]])
        except ValueError:
            raise XYZParseError(f"line {lineno}: non-numeric coordinate in {line.strip()!r}") from None
        if charge_col is not None:
            try:
                charges.append(float(parts[charge_col]))
            except (ValueError, IndexError):
                raise XYZParseError(f"line {lineno}: missing or non-numeric charge") from None
        numbers.append(z)
    try:
        return Molecule(numbers, positions, charges if charge_col is not None else None)
    except ValueError as exc:
        raise XYZParseError(str(exc)) from None


def _charge_column(comment):
    """Column index of a ``charge`` property in an extended-XYZ comment."""
    for token in comment.split():
        if not token.lower().startswith("properties="):
            continue
        fields = token.split("=", 1)[1].split(":")
        col = 0
        for name, _kind, width in zip(fields[::3], fields[1::3], fields[2::3]):
            if name.lower() == "charge":
                return col
            col += int(width)
    return None


def to_xyz(mol, comment=""):
    lines = [str(mol.n_atoms), comment]
    for sym, (x, y, z) in zip(mol.symbols, mol.positions):
        lines.append(f"{sym:<2s} {x:16.10f} {y:16.10f} {z:16.10f}")
    return "\n".join(lines) + "\n"


def compute_volume(mol, n_samples=DEFAULT_VOLUME_SAMPLES, seed=DEFAULT_VOLUME_SEED, radii=None):
    """Monte Carlo volume of the union of van der Waals spheres (A^3).

    Points are drawn in the molecule's standard frame when it has one, so the
    estimate does not depend on how the input is oriented.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    radii = mol.vdw_radii if radii is None else np.broadcast_to(np.asarray(radii, float), (mol.n_atoms,))
    try:
        coords = standardize(mol)[0].positions
    except DegenerateInertiaError:
        coords = mol.positions - mol.centroid
    lo = (coords - radii[:, None]).min(axis=0)
    hi = (coords + radii[:, None]).max(axis=0)
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = 20_000
    r2 = radii**2
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        pts = lo + rng.random((m, 3)) * (hi - lo)
        inside = np.zeros(m, dtype=bool)
        for c, rr in zip(coords, r2):
            d = pts - c
            inside |= np.einsum("ij,ij->i", d, d) <= rr
        hits += int(inside.sum())
    return float(np.prod(hi - lo) * hits / n_samples)


@dataclass(frozen=True)
class StandardPose:
    """Proper rotation and inversion taking a centered molecule to its standard pose.

    ``standard = handedness * rotation_to_standard @ (x - centroid)``
    """

    rotation_to_standard: np.ndarray
    handedness: int


def _atom_order(coords):
    dist = np.round(np.linalg.norm(coords, axis=1), _DISTANCE_DECIMALS)
    return np.lexsort((np.arange(len(coords)), -dist))


def _orient(axis, coords, order):
    """Flip ``axis`` towards the first atom (in ``order``) it can resolve."""
    for i in order:
        d = float(coords[i] @ axis)
        if abs(d) > _AXIS_TOL:
            return axis if d > 0 else -axis, True
    return axis, False


def standardize(mol):
    """Return the molecule in standard pose, and the pose that maps it there."""
    x = mol.positions - mol.centroid
    if mol.n_atoms < 3 or np.linalg.svd(x, compute_uv=False)[1] < 1e-6:
        raise DegenerateInertiaError("principal axes are undefined for single-atom or collinear molecules")

    m = mol.masses
    inertia = np.eye(3) * np.sum(m * np.einsum("ij,ij->i", x, x)) - (x * m[:, None]).T @ x
    evals, evecs = np.linalg.eigh(inertia)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    order = _atom_order(x)

    # group (near-)degenerate moments
    groups, start = [], 0
    scale = max(abs(evals[0]), 1e-12)
    for i in range(1, 4):
        if i == 3 or abs(evals[i] - evals[i - 1]) > _DEGENERACY_RTOL * scale:
            groups.append(list(range(start, i)))
            start = i

    axes, resolved = [], []
    for g in groups:
        basis = evecs[:, g]
        chosen = []
        for _ in range(len(g) - 1):
            proj = basis @ (basis.T @ x.T)
            for c in chosen:
                proj -= np.outer(c, c @ proj)
            norms = np.linalg.norm(proj, axis=0)
            pick = next((i for i in order if norms[i] > _AXIS_TOL), None)
            if pick is None:
                break
            chosen.append(proj[:, pick] / norms[pick])
        # remaining direction(s) of the eigenspace
        rest = basis - sum((np.outer(c, c @ basis) for c in chosen), np.zeros_like(basis))
        u = np.linalg.svd(rest)[0]
        for j in range(len(g) - len(chosen)):
            chosen.append(u[:, j])
        for axis in chosen:
            axis, ok = _orient(axis, x, order)
            axes.append(axis)
            resolved.append(ok)

    frame = np.column_stack(axes)
    free = [i for i, ok in enumerate(resolved) if not ok]
    if len(free) == 1:
        # only the normal of a planar molecule is left unoriented
        i = free[0]
        frame[:, i] = np.cross(frame[:, (i + 1) % 3], frame[:, (i + 2) % 3])
    handedness = 1 if np.linalg.det(frame) > 0 else -1
    rotation = handedness * frame.T
    std = Molecule(mol.atomic_numbers, x @ frame, mol.partial_charges)
    return std, StandardPose(rotation, handedness)


def is_standardized(mol, atol=1e-6):
    """True if the molecule's center of geometry sits at the origin."""
    return bool(np.all(np.abs(mol.centroid) < atol))

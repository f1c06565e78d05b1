"""Cell parameters, box vectors and fractional/Cartesian conversion.

Box vectors are stored row-wise as a lower-triangular matrix: a along x, b in
the xy plane, so ``cart = frac @ box``.
"""

import warnings
from dataclasses import dataclass

import numpy as np


class DegenerateCellError(ValueError):
    pass


def volume_discriminant(angles):
    ca, cb, cg = np.cos(angles)
    return 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg


@dataclass(frozen=True, eq=False)
class CellParameters:
    """Cell lengths (Angstrom) and angles alpha, beta, gamma (radians)."""

    lengths: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        lengths = np.array(self.lengths, dtype=float).reshape(3)
        angles = np.array(self.angles, dtype=float).reshape(3)
        lengths.setflags(write=False)
        angles.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "angles", angles)
        validate_cell(lengths, angles)

    @classmethod
    def from_degrees(cls, a, b, c, alpha, beta, gamma):
        return cls((a, b, c), np.radians([alpha, beta, gamma]))

    @property
    def volume(self):
        return float(np.prod(self.lengths) * np.sqrt(volume_discriminant(self.angles)))

    def as_array(self):
        return np.concatenate([self.lengths, self.angles])

    def __repr__(self):
        a, b, c = self.lengths
        al, be, ga = np.degrees(self.angles)
        return f"CellParameters({a:.4f}, {b:.4f}, {c:.4f}, {al:.3f}deg, {be:.3f}deg, {ga:.3f}deg)"


def is_valid_cell(lengths, angles):
    lengths = np.asarray(lengths, float)
    angles = np.asarray(angles, float)
    return bool(
        np.all(np.isfinite(lengths))
        and np.all(lengths > 0)
        and np.all(angles > 0)
        and np.all(angles < np.pi)
        and volume_discriminant(angles) > 0
    )


def validate_cell(lengths, angles):
    if not is_valid_cell(lengths, angles):
        raise DegenerateCellError(
            f"invalid cell: lengths {np.asarray(lengths).tolist()}, "
            f"angles {np.degrees(np.asarray(angles, float)).round(4).tolist()} deg"
        )


def _as_cell(cell):
    if isinstance(cell, CellParameters):
        return cell.lengths, cell.angles
    arr = np.asarray(cell, dtype=float).reshape(6)
    return arr[:3], arr[3:]


def cell_to_box(cell):
    """Box vectors (rows a, b, c) for a cell given as CellParameters or 6 values."""
    lengths, angles = _as_cell(cell)
    validate_cell(lengths, angles)
    return _box(lengths, angles)


def _box(lengths, angles):
    a, b, c = lengths
    ca, cb, cg = np.cos(angles)
    sg = np.sin(angles[2])
    vol = a * b * c * np.sqrt(volume_discriminant(angles))
    return np.array(
        [
            [a, 0.0, 0.0],
            [b * cg, b * sg, 0.0],
            [c * cb, c * (ca - cb * cg) / sg, vol / (a * b * sg)],
        ]
    )


def box_derivatives(lengths, angles):
    """d(box)/d(a, b, c, alpha, beta, gamma) as an array of shape (6, 3, 3)."""
    a, b, c = lengths
    al, be, ga = angles
    ca, cb, cg = np.cos(angles)
    sa, sb, sg = np.sin(angles)
    d = np.sqrt(volume_discriminant(angles))
    dd_da = sa * (ca - cb * cg) / d
    dd_db = sb * (cb - ca * cg) / d
    dd_dg = sg * (cg - ca * cb) / d

    out = np.zeros((6, 3, 3))
    out[0, 0, 0] = 1.0
    out[1, 1] = (cg, sg, 0.0)
    out[2, 2] = (cb, (ca - cb * cg) / sg, d / sg)
    out[3, 2] = (0.0, -c * sa / sg, c * dd_da / sg)
    out[4, 2] = (-c * sb, c * sb * cg / sg, c * dd_db / sg)
    out[5, 1] = (-b * sg, b * cg, 0.0)
    out[5, 2] = (0.0, c * (cb - ca * cg) / (sg * sg), c * (dd_dg * sg - d * cg) / (sg * sg))
    return out


def volume_gradient(lengths, angles):
    """d(cell volume)/d(a, b, c, alpha, beta, gamma)."""
    a, b, c = lengths
    ca, cb, cg = np.cos(angles)
    sa, sb, sg = np.sin(angles)
    d = np.sqrt(volume_discriminant(angles))
    abc = a * b * c
    return np.array(
        [
            b * c * d,
            a * c * d,
            a * b * d,
            abc * sa * (ca - cb * cg) / d,
            abc * sb * (cb - ca * cg) / d,
            abc * sg * (cg - ca * cb) / d,
        ]
    )


def box_to_cell(box):
    box = np.asarray(box, dtype=float)
    if box.shape != (3, 3):
        raise DegenerateCellError("box must be a 3x3 matrix")
    if np.any(np.diag(box) <= 0):
        raise DegenerateCellError("box diagonal must be strictly positive")
    lengths = np.linalg.norm(box, axis=1)
    a, b, c = box
    angles = np.array(
        [
            np.arccos(np.clip(b @ c / (lengths[1] * lengths[2]), -1, 1)),
            np.arccos(np.clip(a @ c / (lengths[0] * lengths[2]), -1, 1)),
            np.arccos(np.clip(a @ b / (lengths[0] * lengths[1]), -1, 1)),
        ]
    )
    return CellParameters(lengths, angles)


def frac_to_cart(box, frac):
    return np.asarray(frac, dtype=float) @ np.asarray(box, dtype=float)


def cart_to_frac(box, cart):
    box = np.asarray(box, dtype=float)
    cart = np.asarray(cart, dtype=float)
    return np.linalg.solve(box.T, cart.reshape(-1, 3).T).T.reshape(cart.shape)


def cell_heights(box):
    """Perpendicular distances between opposite cell faces."""
    box = np.asarray(box, dtype=float)
    vol = abs(np.linalg.det(box))
    a, b, c = box
    return vol / np.linalg.norm([np.cross(b, c), np.cross(c, a), np.cross(a, b)], axis=1)


def packing_coefficient(mol_volume, z, cell_volume):
    """Fraction of the cell occupied by molecules: V_mol * Z / V_cell."""
    if mol_volume <= 0 or z <= 0 or cell_volume <= 0:
        raise ValueError("molecule volume, Z and cell volume must all be positive")
    return mol_volume * z / cell_volume


def check_reduced(cell, warn=True):
    """Loose reduced-cell test (a <= b <= c, angles all acute or all obtuse).

    Only reports; cells are never modified.
    """
    lengths, angles = _as_cell(cell)
    ok = bool(lengths[0] <= lengths[1] <= lengths[2])
    cosines = np.cos(angles)
    ok &= bool(np.all(cosines >= -1e-12) or np.all(cosines <= 1e-12))
    if not ok and warn:
        warnings.warn("cell does not satisfy the reduced-cell conditions", stacklevel=2)
    return ok

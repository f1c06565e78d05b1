"""Space-group tables for the supported groups.

Operations act on column vectors of fractional coordinates, x' = W x + t. The
table lives in ``data/space_groups.json`` and can be extended there; every
entry is checked for group closure and asymmetric-unit tiling by the test
suite.
"""

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

_TERM = re.compile(r"([+-]?)(x|y|z|\d+/\d+|\d+)")


class UnsupportedSpaceGroupError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass(frozen=True)
class SymOp:
    rotation: tuple  # 3x3 integer matrix, row-major
    translation: tuple  # 3 Fractions in [0, 1)

    @classmethod
    def from_xyz(cls, text):
        rows, shifts = [], []
        parts = text.replace(" ", "").lower().split(",")
        if len(parts) != 3:
            raise ValueError(f"symmetry operation needs three components: {text!r}")
        for part in parts:
            row, shift = [0, 0, 0], Fraction(0)
            pos = 0
            for m in _TERM.finditer(part):
                if m.start() != pos:
                    raise ValueError(f"cannot parse symmetry operation {text!r}")
                pos = m.end()
                sign = -1 if m.group(1) == "-" else 1
                tok = m.group(2)
                if tok in "xyz":
                    row["xyz".index(tok)] += sign
                else:
                    shift += sign * Fraction(tok)
            if pos != len(part):
                raise ValueError(f"cannot parse symmetry operation {text!r}")
            rows.append(tuple(row))
            shifts.append(shift % 1)
        return cls(tuple(rows), tuple(shifts))

    @property
    def W(self):
        return np.array(self.rotation, dtype=float)

    @property
    def t(self):
        return np.array([float(s) for s in self.translation])

    @property
    def determinant(self):
        return int(round(np.linalg.det(self.W)))

    def compose(self, other):
        """self after other, translation reduced modulo 1."""
        a = np.array(self.rotation, dtype=object)
        b = np.array(other.rotation, dtype=object)
        rot = a.dot(b)
        shift = a.dot(np.array(other.translation, dtype=object)) + np.array(self.translation, dtype=object)
        return SymOp(tuple(tuple(int(v) for v in r) for r in rot), tuple(Fraction(s) % 1 for s in shift))

    def as_xyz(self):
        comps = []
        for row, shift in zip(self.rotation, self.translation):
            s = ""
            for coef, var in zip(row, "xyz"):
                if coef:
                    s += ("-" if coef < 0 else ("+" if s else "")) + (str(abs(coef)) if abs(coef) != 1 else "") + var
            if shift:
                s += f"+{shift}"
            comps.append(s)
        return ",".join(comps)


@dataclass(frozen=True, eq=False)
class SpaceGroup:
    number: int
    symbol: str
    crystal_system: str
    ops: tuple
    aunit_box: tuple  # Fractions

    @property
    def multiplicity_Z(self):
        return len(self.ops)

    @property
    def z(self):
        return len(self.ops)

    @property
    def rotations(self):
        """(Z, 3, 3) float array of the operations' rotation parts."""
        return np.array([op.rotation for op in self.ops], dtype=float)

    @property
    def translations(self):
        return np.array([[float(s) for s in op.translation] for op in self.ops])

    @property
    def aunit_extent(self):
        return np.array([float(f) for f in self.aunit_box])

    @property
    def fixed_angles(self):
        """Cell angles pinned to 90 degrees by the lattice, as a boolean mask."""
        if self.crystal_system == "monoclinic":
            return np.array([True, False, True])
        if self.crystal_system == "orthorhombic":
            return np.array([True, True, True])
        return np.array([False, False, False])

    def constrain_angles(self, angles):
        angles = np.array(angles, dtype=float)
        angles[self.fixed_angles] = np.pi / 2
        return angles

    def in_aunit(self, frac, tol=0.0):
        frac = np.asarray(frac, float)
        return bool(np.all(frac >= -tol) and np.all(frac < self.aunit_extent + tol))

    def __repr__(self):
        return f"SpaceGroup({self.number}, {self.symbol!r}, Z={self.z})"


def _key(name):
    return re.sub(r"[\s_]", "", str(name)).lower()


@lru_cache(maxsize=None)
def _table():
    raw = json.loads(resources.files("molxtal.data").joinpath("space_groups.json").read_text())
    groups = {}
    for g in raw["groups"]:
        sg = SpaceGroup(
            number=int(g["number"]),
            symbol=g["symbol"],
            crystal_system=g["crystal_system"],
            ops=tuple(SymOp.from_xyz(s) for s in g["ops"]),
            aunit_box=tuple(Fraction(f) for f in g["aunit_box"]),
        )
        groups[sg.number] = sg
    return groups


def supported_space_groups():
    return sorted(_table())


def get_space_group(ident):
    """Look up a supported group by number (int or digit string) or H-M symbol."""
    if isinstance(ident, SpaceGroup):
        return ident
    table = _table()
    if isinstance(ident, (int, np.integer)) or (isinstance(ident, str) and ident.strip().isdigit()):
        number = int(ident)
        if number in table:
            return table[number]
    else:
        key = _key(ident)
        for sg in table.values():
            if _key(sg.symbol) == key:
                return sg
    listing = ", ".join(f"{sg.number} ({sg.symbol})" for sg in table.values())
    raise UnsupportedSpaceGroupError(f"unsupported space group {ident!r}; supported: {listing}")


def apply_ops(sg, frac_coords):
    """Images x' = W x + t of fractional coordinates under every operation.

    Returns an array of shape (Z, ..., 3); no wrapping into the cell.
    """
    frac = np.asarray(frac_coords, dtype=float)
    return np.einsum("kij,...j->k...i", sg.rotations, frac) + sg.translations.reshape(
        (sg.z,) + (1,) * (frac.ndim - 1) + (3,)
    )

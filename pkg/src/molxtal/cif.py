"""CIF subset reader/writer and extended-XYZ cluster dump."""

import re
from pathlib import Path

import numpy as np

from .crystal import unit_cell_from_p1
from .elements import atomic_number, symbol
from .lattice import box_to_cell, cell_to_box
from .symmetry import SymOp

DEDUPE_TOL = 1e-4


class CifError(ValueError):
    pass


# writing ------------------------------------------------------------------

def write_cif(cell, path=None, name="molxtal"):
    """P1-expanded CIF text for a UnitCell; written to ``path`` if given."""
    params = box_to_cell(cell.box)
    lengths, deg = params.lengths, np.degrees(params.angles)
    numbers = np.tile(cell.atomic_numbers, cell.z)
    frac = cell.frac_coords.reshape(-1, 3)
    lines = [
        f"data_{name}",
        "_symmetry_space_group_name_H-M 'P 1'",
        "_symmetry_Int_Tables_number 1",
        f"_cell_length_a {lengths[0]:.10f}",
        f"_cell_length_b {lengths[1]:.10f}",
        f"_cell_length_c {lengths[2]:.10f}",
        f"_cell_angle_alpha {deg[0]:.10f}",
        f"_cell_angle_beta {deg[1]:.10f}",
        f"_cell_angle_gamma {deg[2]:.10f}",
        f"_cell_volume {cell.volume:.10f}",
        "",
        "loop_",
        "_symmetry_equiv_pos_as_xyz",
        "'x, y, z'",
        "",
        "loop_",
        "_atom_site_label",
        "_atom_site_type_symbol",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
        "_atom_site_occupancy",
    ]
    counts = {}
    for z, f in zip(numbers, frac):
        el = symbol(int(z))
        counts[el] = counts.get(el, 0) + 1
        lines.append(f"{el}{counts[el]} {el} {f[0]:.12f} {f[1]:.12f} {f[2]:.12f} 1")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# reading ------------------------------------------------------------------

_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?:\(\d+\))?$")


def _tokens(text):
    """Yield CIF tokens, handling quotes, comments and ;-delimited text fields."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith(";"):
            buf = [line[1:]]
            i += 1
            while i < len(lines) and not lines[i].startswith(";"):
                buf.append(lines[i])
                i += 1
            if i == len(lines):
                raise CifError("unterminated ';' text field")
            yield "\n".join(buf).strip()
            i += 1
            continue
        pos = 0
        n = len(line)
        while pos < n:
            ch = line[pos]
            if ch.isspace():
                pos += 1
            elif ch == "#":
                break
            elif ch in "'\"":
                # a quote closes only when followed by whitespace or end of line
                end = pos + 1
                while end < n and not (line[end] == ch and (end + 1 == n or line[end + 1].isspace())):
                    end += 1
                if end >= n:
                    raise CifError(f"line {i + 1}: unterminated quoted string")
                yield line[pos + 1 : end]
                pos = end + 1
            else:
                end = pos
                while end < n and not line[end].isspace():
                    end += 1
                yield line[pos:end]
                pos = end
        i += 1


def parse_cif(text):
    """First data block as ``(items, loops)``; tags are lower-cased."""
    items, loops = {}, []
    toks = list(_tokens(text))
    i = 0
    seen_block = False
    while i < len(toks):
        tok = toks[i]
        low = tok.lower()
        if low.startswith("data_"):
            if seen_block:
                break
            seen_block = True
            i += 1
        elif low == "loop_":
            i += 1
            tags = []
            while i < len(toks) and toks[i].startswith("_"):
                tags.append(toks[i].lower())
                i += 1
            values = []
            while i < len(toks) and not toks[i].startswith("_") and toks[i].lower() not in ("loop_",) \
                    and not toks[i].lower().startswith("data_"):
                values.append(toks[i])
                i += 1
            if not tags or len(values) % len(tags):
                raise CifError(f"loop over {tags} has {len(values)} values, not a multiple of {len(tags)}")
            rows = [values[k : k + len(tags)] for k in range(0, len(values), len(tags))]
            loops.append({t: [r[j] for r in rows] for j, t in enumerate(tags)})
        elif tok.startswith("_"):
            if i + 1 >= len(toks):
                raise CifError(f"tag {tok} has no value")
            items[low] = toks[i + 1]
            i += 2
        else:
            raise CifError(f"unexpected token {tok!r}")
    return items, loops


def cif_number(value):
    """Numeric CIF value, dropping a standard uncertainty like ``1.234(5)``."""
    m = _NUMBER.match(value.strip())
    if not m:
        raise CifError(f"not a number: {value!r}")
    return float(m.group(1))


def _loop_with(loops, *tags):
    for loop in loops:
        if all(t in loop for t in tags):
            return loop
    return None


def _symbol_from(type_symbol, label):
    raw = type_symbol if type_symbol not in (None, "?", ".") else label
    m = re.match(r"([A-Za-z]{1,2})", raw)
    if not m:
        raise CifError(f"cannot determine element from {raw!r}")
    s = m.group(1)
    for cand in (s[:1].upper() + s[1:].lower(), s[:1].upper()):
        try:
            return atomic_number(cand)
        except KeyError:
            continue
    raise CifError(f"unknown element {raw!r}")


def read_cif(source):
    """Cell box, atomic numbers and P1-expanded fractional coordinates.

    ``source`` is a path or CIF text. Disordered or partially occupied sites
    are rejected.
    """
    text = Path(source).read_text() if _is_path(source) else str(source)
    items, loops = parse_cif(text)
    try:
        lengths = [cif_number(items[f"_cell_length_{k}"]) for k in "abc"]
        angles = [cif_number(items[f"_cell_angle_{k}"]) for k in ("alpha", "beta", "gamma")]
    except KeyError as exc:
        raise CifError(f"missing cell parameter {exc.args[0]}") from None
    box = cell_to_box(np.concatenate([lengths, np.radians(angles)]))

    sites = _loop_with(loops, "_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z")
    if sites is None:
        raise CifError("no _atom_site_fract_x/y/z loop")
    n = len(sites["_atom_site_fract_x"])
    for k in range(n):
        occ = sites.get("_atom_site_occupancy", ["1"] * n)[k]
        if occ not in ("?", ".") and cif_number(occ) < 1.0 - 1e-6:
            raise CifError(f"site {k + 1} has partial occupancy {occ}; disordered structures are unsupported")
        for tag in ("_atom_site_disorder_group", "_atom_site_disorder_assembly"):
            if tag in sites and sites[tag][k] not in ("?", "."):
                raise CifError(f"site {k + 1} belongs to a disorder group; disordered structures are unsupported")
    labels = sites.get("_atom_site_label", [None] * n)
    types = sites.get("_atom_site_type_symbol", [None] * n)
    numbers = np.array([_symbol_from(types[k], labels[k] or "") for k in range(n)], int)
    frac = np.array(
        [[cif_number(sites[f"_atom_site_fract_{c}"][k]) for c in "xyz"] for k in range(n)], float
    )

    ops_loop = None
    for tag in ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"):
        ops_loop = _loop_with(loops, tag)
        if ops_loop is not None:
            ops = [SymOp.from_xyz(s) for s in ops_loop[tag]]
            break
        if tag in items:
            ops = [SymOp.from_xyz(items[tag])]
            break
    else:
        ops = [SymOp.from_xyz("x,y,z")]
    return box, *expand_sites(numbers, frac, ops)


def expand_sites(numbers, frac, ops, tol=DEDUPE_TOL):
    """Apply symmetry operations, wrap into [0, 1) and drop duplicate sites."""
    out_z, out_f = [], []
    for op in ops:
        img = frac @ op.W.T + op.t
        img -= np.floor(img)
        for z, f in zip(numbers, img):
            dup = False
            for z2, f2 in zip(out_z, out_f):
                d = f - f2
                d -= np.round(d)
                if z == z2 and np.all(np.abs(d) < tol):
                    dup = True
                    break
            if not dup:
                out_z.append(int(z))
                out_f.append(f)
    return np.array(out_z, int), np.array(out_f, float).reshape(-1, 3)


def read_unit_cell(source, space_group=None):
    box, numbers, frac = read_cif(source)
    return unit_cell_from_p1(box, numbers, frac, space_group=space_group)


def _is_path(source):
    if isinstance(source, Path):
        return True
    return isinstance(source, str) and "\n" not in source and Path(source).exists()


# clusters -----------------------------------------------------------------

def cluster_to_extxyz(cluster, path=None):
    """Extended-XYZ text with species, positions and molecule index per atom."""
    lines = [
        str(len(cluster.atomic_numbers)),
        f'Properties=species:S:1:pos:R:3:mol:I:1 cutoff={cluster.cutoff:.6f} pbc="F F F"',
    ]
    for z, p, m in zip(cluster.atomic_numbers, cluster.positions, cluster.mol_index):
        lines.append(f"{symbol(int(z))} {p[0]:.8f} {p[1]:.8f} {p[2]:.8f} {int(m)}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


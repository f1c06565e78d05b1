"""Pose benzene in P2_1/c, write a CIF and score the packing.

    python demos/build_and_score.py [out.cif]
"""

import sys
from pathlib import Path

import numpy as np

from molxtal.cif import write_cif
from molxtal.crystal import CrystalParameters, build_cluster, build_unit_cell, canonicalize
from molxtal.molecule import from_xyz, standardize
from molxtal.potentials import compute_energies

HERE = Path(__file__).resolve().parent
benzene, _ = standardize(from_xyz(HERE.parent / "tests" / "data" / "benzene.xyz"))

# a b c alpha beta gamma u v w and a rotation vector, taken from a relaxed search sample
values = [5.742, 7.505, 12.747, *np.radians([90, 48.097, 90]), 0.822, 0.165, 0.11, 1.832, -0.54, -1.301]
params = canonicalize(CrystalParameters.from_array(values, -1, "P2_1/c"))
cell = build_unit_cell(benzene, params)

print(params)
print(f"Z = {cell.z}, V = {cell.volume:.1f} A^3, Cp = {cell.packing_coefficient:.3f}")
for name, e in compute_energies(build_cluster(cell, 10.0), ["lj", "silu"]).items():
    print(f"{name:>5} energy {e: .4f}")

if len(sys.argv) > 1:
    write_cif(cell, sys.argv[1])
    print("wrote", sys.argv[1])

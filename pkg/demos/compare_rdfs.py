"""RDF distance between two perturbations of one crystal.

Small cell strains should give small distances; the distance to the
unperturbed structure grows with the strain.
"""

from pathlib import Path

import numpy as np

from molxtal.crystal import CrystalParameters, build_cluster, build_unit_cell
from molxtal.molecule import from_xyz, standardize
from molxtal.rdf import RDF_RANGE, compute_rdf, emd_total

HERE = Path(__file__).resolve().parent
mol, _ = standardize(from_xyz(HERE.parent / "tests" / "data" / "benzene.xyz"))
base = np.array([7.4, 9.4, 6.9, *np.radians([90, 111, 90]), 0.1, 0.2, 0.15, 0.4, -0.3, 0.9])


def profile(x):
    cell = build_unit_cell(mol, CrystalParameters.from_array(x, 1, 14))
    return compute_rdf(build_cluster(cell, RDF_RANGE))


ref = profile(base)
for strain in (0.0, 0.01, 0.02, 0.05, 0.1):
    x = base.copy()
    x[:3] *= 1 + strain
    print(f"strain {strain:4.2f}  distance {emd_total(ref, profile(x)):.5f}")

"""A short two-stage search for benzene in P2_1/c.

Samples random crystals at Cp 0.7, relaxes them with the soft SiLU
potential, then polishes with Lennard-Jones. Results land in
search_out/ as JSONL plus a CSV summary.
"""

from pathlib import Path

import numpy as np

from molxtal.config import SearchConfig
from molxtal.molecule import from_xyz, standardize
from molxtal.search import run_search

HERE = Path(__file__).resolve().parent
mol, _ = standardize(from_xyz(HERE.parent / "tests" / "data" / "benzene.xyz"))

config = SearchConfig(space_groups=[14], num_samples=20, seed=0, init_target_cp=0.7,
                      output_path="search_out/benzene.jsonl")
records = sorted(run_search(config, mol), key=lambda r: r.lj_energy)

print(" idx    LJ energy     Cp  min r/sigma")
for r in records[:5]:
    print(f"{r.index:4d} {r.lj_energy:12.3f} {r.packing_coefficient:6.3f} {r.min_contact_ratio:8.3f}")
print("median LJ", np.median([r.lj_energy for r in records]))

"""Element-pair radial distribution functions and their earth mover's distance.

Profiles histogram the distances from canonical-molecule atoms to
environment atoms over [0, 6) A. Each unordered element pair (Zi, Zj) counts
canonical-i to environment-j and canonical-j to environment-i contacts once,
divided by the shell volume 4 pi r^2 dr at the bin center and by the number
of canonical atoms of either type.
"""

import json
from dataclasses import dataclass

import numpy as np

RDF_RANGE = 6.0
DEFAULT_BINS = 100


@dataclass(frozen=True, eq=False)
class RdfProfile:
    element_pairs: list
    bin_edges: np.ndarray
    values: np.ndarray  # (n_pairs, n_bins)
    n_canonical_atoms: int = 0

    @property
    def n_bins(self):
        return self.bin_edges.size - 1

    def pair(self, zi, zj):
        key = (min(zi, zj), max(zi, zj))
        try:
            return self.values[self.element_pairs.index(key)]
        except ValueError:
            return np.zeros(self.n_bins)

    def to_json(self):
        from .elements import symbol

        return json.dumps(
            {
                "pairs": [f"{symbol(a)}-{symbol(b)}" for a, b in self.element_pairs],
                "element_pairs": [list(p) for p in self.element_pairs],
                "bin_edges": self.bin_edges.tolist(),
                "values": self.values.tolist(),
                "n_canonical_atoms": self.n_canonical_atoms,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            [tuple(p) for p in d["element_pairs"]],
            np.asarray(d["bin_edges"], float),
            np.asarray(d["values"], float),
            int(d.get("n_canonical_atoms", 0)),
        )


def compute_rdf(cluster, n_bins=DEFAULT_BINS):
    if cluster.cutoff < RDF_RANGE - 1e-12:
        raise ValueError(f"RDF needs a cluster built with cutoff >= {RDF_RANGE} A (got {cluster.cutoff})")
    edges = np.linspace(0.0, RDF_RANGE, n_bins + 1)
    dr = RDF_RANGE / n_bins
    centers = 0.5 * (edges[:-1] + edges[1:])
    shell = 4.0 * np.pi * centers**2 * dr

    species = np.unique(cluster.atomic_numbers)
    pairs = [(int(a), int(b)) for ai, a in enumerate(species) for b in species[ai:]]
    canon_z = cluster.atomic_numbers[cluster.canonical_mask]

    graph = cluster.edges
    sel = graph.distance < RDF_RANGE
    r = graph.distance[sel]
    zi = cluster.atomic_numbers[graph.i[sel]]
    zj = cluster.atomic_numbers[graph.j[sel]]
    lo, hi = np.minimum(zi, zj), np.maximum(zi, zj)
    bins = np.minimum((r / dr).astype(int), n_bins - 1)

    values = np.zeros((len(pairs), n_bins))
    for p, (a, b) in enumerate(pairs):
        mask = (lo == a) & (hi == b)
        counts = np.bincount(bins[mask], minlength=n_bins).astype(float)
        norm = np.count_nonzero((canon_z == a) | (canon_z == b))
        if norm:
            values[p] = counts / shell / norm
    return RdfProfile(pairs, edges, values, int(canon_z.size))


def emd_pair(rdf1, rdf2, n_bins=None):
    """1-D earth mover's distance between binned profiles on [0, 6] A:
    (6 / N^2) * sum_k |cumsum(rdf1)_k - cumsum(rdf2)_k|."""
    rdf1 = np.asarray(rdf1, dtype=float)
    rdf2 = np.asarray(rdf2, dtype=float)
    if rdf1.shape[-1] != rdf2.shape[-1]:
        raise ValueError(f"bin counts differ: {rdf1.shape[-1]} vs {rdf2.shape[-1]}")
    n = rdf1.shape[-1] if n_bins is None else n_bins
    if n != rdf1.shape[-1]:
        raise ValueError(f"histograms have {rdf1.shape[-1]} bins, expected {n}")
    return RDF_RANGE / n**2 * np.abs(np.cumsum(rdf1, axis=-1) - np.cumsum(rdf2, axis=-1)).sum(axis=-1)


def emd_total(profile1, profile2, per_atom=False):
    """Mass-weighted mean of pair EMDs over the union of element pairs.

    With ``per_atom`` the result is divided by the canonical atom count of
    ``profile1``.
    """
    if profile1.n_bins != profile2.n_bins:
        raise ValueError("profiles use different binning")
    union = sorted(set(profile1.element_pairs) | set(profile2.element_pairs))
    if not union:
        return 0.0
    a = np.array([profile1.pair(*p) for p in union])
    b = np.array([profile2.pair(*p) for p in union])
    w = 0.5 * (a.sum(axis=1) + b.sum(axis=1))
    total = float(np.sum(w * emd_pair(a, b)) / len(union))
    if per_atom:
        total /= max(profile1.n_canonical_atoms, 1)
    return total

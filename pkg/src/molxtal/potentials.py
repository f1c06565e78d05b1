"""Intermolecular pair potentials over a crystal cluster's radial graph.

Energies are in arbitrary units. Pair sigma is the sum of the two atoms'
van der Waals radii. All pair functions are vectorized over ``r`` and can
return the radial derivative alongside the energy.
"""

from dataclasses import dataclass

import numpy as np

from . import elements

SILU_PREFACTOR = 7.0 / 25.0
COULOMB_CONSTANT = 332.0637  # kcal/mol * A / e^2
DIVERGENCE_DISTANCE = 1e-3

DEFAULT_CUTOFFS = {"lj": 10.0, "silu": 6.0, "es": 10.0}


class DivergentEnergyError(FloatingPointError):
    pass


@dataclass(frozen=True)
class PotentialParams:
    kind: str = "lj"
    R: float = 1.0
    epsilon: float = 1.0
    cutoff: float = None
    es_screening_length: float = 2.0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in DEFAULT_CUTOFFS:
            raise ValueError(f"unknown potential {self.kind!r}; expected one of {sorted(DEFAULT_CUTOFFS)}")
        object.__setattr__(self, "kind", kind)
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", DEFAULT_CUTOFFS[kind])
        if self.R <= 0 or self.epsilon <= 0 or self.cutoff <= 0 or self.es_screening_length <= 0:
            raise ValueError("R, epsilon, cutoff and screening length must be positive")


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu_energy(r, sigma, R=1.0, derivative=False):
    """Soft repulsion with an LJ-like well: (7/25) * SiLU(-4R(r - sigma R))."""
    x = np.asarray(-4.0 * R * (np.asarray(r, float) - np.asarray(sigma, float) * R), dtype=float)
    s = _sigmoid(np.atleast_1d(x)).reshape(x.shape)
    e = SILU_PREFACTOR * x * s
    if not derivative:
        return e
    return e, SILU_PREFACTOR * s * (1.0 + x * (1.0 - s)) * (-4.0 * R)


def lj_energy(r, sigma, epsilon=1.0, derivative=False):
    """epsilon * ((sigma/r)^12 - 2 (sigma/r)^6), minimum -epsilon at r = sigma."""
    r = np.asarray(r, dtype=float)
    if np.any(r < DIVERGENCE_DISTANCE):
        raise DivergentEnergyError(f"Lennard-Jones energy diverges for r < {DIVERGENCE_DISTANCE} A")
    s6 = (np.asarray(sigma, float) / r) ** 6
    e = epsilon * (s6 * s6 - 2.0 * s6)
    if not derivative:
        return e
    return e, epsilon * (-12.0 * s6 * s6 + 12.0 * s6) / r


def es_energy(r, q_i, q_j, screening_length=2.0, derivative=False):
    """Screened Coulomb k q_i q_j exp(-r/lambda) / r."""
    r = np.asarray(r, dtype=float)
    if np.any(r < DIVERGENCE_DISTANCE):
        raise DivergentEnergyError(f"electrostatic energy diverges for r < {DIVERGENCE_DISTANCE} A")
    qq = COULOMB_CONSTANT * np.asarray(q_i, float) * np.asarray(q_j, float)
    damp = np.exp(-r / screening_length)
    e = qq * damp / r
    if not derivative:
        return e
    return e, -e * (1.0 / r + 1.0 / screening_length)


def pair_energy(kind, r, z_i, z_j, q_i=None, q_j=None, params=None, derivative=False):
    params = params or PotentialParams(kind)
    if kind == "lj":
        return lj_energy(r, elements.vdw_radii(z_i) + elements.vdw_radii(z_j), params.epsilon, derivative)
    if kind == "silu":
        return silu_energy(r, elements.vdw_radii(z_i) + elements.vdw_radii(z_j), params.R, derivative)
    return es_energy(r, q_i, q_j, params.es_screening_length, derivative)


def crystal_energy(cluster, params):
    """Sum of pair energies over canonical/environment edges within the cutoff."""
    if isinstance(params, str):
        params = PotentialParams(params)
    edges = cluster.edges
    if params.cutoff > cluster.cutoff + 1e-12:
        raise ValueError(f"potential cutoff {params.cutoff} exceeds the cluster cutoff {cluster.cutoff}")
    sel = edges.distance <= params.cutoff
    i, j, r = edges.i[sel], edges.j[sel], edges.distance[sel]
    if r.size == 0:
        return 0.0
    zi, zj = cluster.atomic_numbers[i], cluster.atomic_numbers[j]
    qi, qj = cluster.partial_charges[i], cluster.partial_charges[j]
    e = pair_energy(params.kind, r, zi, zj, qi, qj, params)
    # edges arrive sorted by (i, j): a fixed summation order
    return float(np.sum(e))


def compute_energies(cluster, computes=("lj", "es", "silu"), cutoffs=None):
    """Energies for several potentials at their default (or given) cutoffs."""
    cutoffs = cutoffs or {}
    out = {}
    for kind in computes:
        cutoff = min(cutoffs.get(kind, DEFAULT_CUTOFFS[kind]), cluster.cutoff)
        out[kind] = crystal_energy(cluster, PotentialParams(kind, cutoff=cutoff))
    return out

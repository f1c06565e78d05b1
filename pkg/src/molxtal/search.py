"""Random crystal sampling and multi-stage gradient optimization.

The stage loss of a crystal with parameter vector
``x = (a, b, c, alpha, beta, gamma, u, v, w, theta_x, theta_y, theta_z)`` is

    L = E_pot + lambda_cp * (Cp - Cp*)^2 + lambda_len * sum_i softplus(l_i - l_max)

where E_pot is the SiLU or LJ energy of the canonical molecule with its
environment, Cp the packing coefficient and l_max = 2 (mol radius + cutoff).

Gradients are propagated by hand. Every atom of a cluster copy produced by
operation k and lattice shift n sits at ``A_k s + M (W_k T + t_k + n)`` with
``A_k = M W_k M^-1 R(theta) h`` and ``M = box.T``, so dE/dx is first reduced
to per-operation matrices dE/dA_k and to dE/dM, then pushed through the
Rodrigues Jacobian and the analytic box derivatives. Within one evaluation
the set of images and edges (the topology) is fixed; it is rebuilt at every
optimizer step.
"""

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import potentials
from .config import OptStage, SearchConfig
from .crystal import CrystalParameters, _carve, build_cluster, build_unit_cell, canonicalize, supercell_half_extent
from .lattice import _box, box_derivatives, is_valid_cell, volume_discriminant, volume_gradient
from .molecule import is_standardized, standardize
from .rotations import random_rotvec, rotvec_jacobian, rotvec_to_matrix
from .symmetry import get_space_group

log = logging.getLogger(__name__)

ANGLE_RANGE = np.radians([60.0, 120.0])
LENGTH_RATIO_RANGE = (1.0 / 3.0, 3.0)
MAX_SAMPLING_DRAWS = 1000
MIN_LENGTH = 1.0
ANGLE_BOUNDS = np.radians([15.0, 165.0])
RPROP_ETAS = (0.5, 1.2)
RPROP_STEP_BOUNDS = (1e-6, 0.1)
CONVERGENCE_WINDOW = 10
SGD_ANNEAL_FLOOR = 0.1


class SamplingError(RuntimeError):
    pass


class SearchError(RuntimeError):
    pass


def sample_random_crystal(mol, sg, target_cp, rng):
    """Random crystal parameters scaled so the packing coefficient equals ``target_cp``."""
    sg = get_space_group(sg)
    if not 0 < target_cp < 1:
        raise ValueError("target packing coefficient must lie in (0, 1)")
    for _ in range(MAX_SAMPLING_DRAWS):
        angles = sg.constrain_angles(rng.uniform(*ANGLE_RANGE, size=3))
        lengths = np.exp(rng.uniform(*np.log(LENGTH_RATIO_RANGE), size=3))
        if is_valid_cell(lengths, angles):
            break
    else:
        raise SamplingError(f"no valid cell after {MAX_SAMPLING_DRAWS} draws")
    centroid = rng.random(3) * sg.aunit_extent
    rotvec = random_rotvec(rng)
    handedness = 1 if rng.random() < 0.5 else -1
    volume = mol.volume * sg.z / target_cp
    lengths = lengths * (volume / (np.prod(lengths) * np.sqrt(volume_discriminant(angles)))) ** (1.0 / 3.0)
    return CrystalParameters.from_array(np.concatenate([lengths, angles, centroid, rotvec]), handedness, sg)


@dataclass
class Topology:
    """Frozen cluster layout: environment images and canonical/environment atom pairs."""

    wrap0: np.ndarray  # lattice shift of the canonical molecule
    image_op: np.ndarray  # (m,)
    image_shift: np.ndarray  # (m, 3) total lattice shift of each environment copy
    edge_a: np.ndarray  # canonical atom index
    edge_m: np.ndarray  # environment image index
    edge_b: np.ndarray  # atom index within that image


class StageLoss:
    """Loss and gradient for one molecule, space group and stage."""

    def __init__(self, mol, sg, stage):
        if not is_standardized(mol):
            raise ValueError("StageLoss expects a standardized molecule")
        self.mol = mol
        self.sg = get_space_group(sg)
        self.stage = stage
        self.kind = stage.optim_target
        self.cutoff = float(stage.cutoff)
        self.s = np.asarray(mol.positions, float)
        self.n = mol.n_atoms
        self.radius = float(np.linalg.norm(self.s, axis=1).max())
        self.vmol = mol.volume
        self.length_cap = 2.0 * (self.radius + self.cutoff)
        r = mol.vdw_radii
        self.sigma = r[:, None] + r[None, :]
        self.W = self.sg.rotations
        self.t = self.sg.translations
        self.free = np.concatenate([np.ones(3, bool), ~self.sg.fixed_angles, np.ones(6, bool)])

    # geometry -----------------------------------------------------------
    def _frame(self, x, h):
        box = _box(x[:3], x[3:6])
        rot = rotvec_to_matrix(x[9:12])
        m = box.T
        minv = np.linalg.inv(m)
        cops = m @ self.W @ minv
        a = cops @ rot * h
        f = np.einsum("kij,j->ki", self.W, x[6:9]) + self.t
        return box, rot, minv, cops, a, f

    def topology(self, x, h):
        box, _, _, _, a, f = self._frame(np.asarray(x, float), h)
        wrap = -np.floor(f).astype(int)
        body = np.einsum("kij,nj->kni", a, self.s)
        half = supercell_half_extent(box, self.radius, self.cutoff)
        k, grid, pos = _carve(box, body, f + wrap, self.radius, self.cutoff, half)
        shift = wrap[k] + grid
        canon = body[0] + (f[0] + wrap[0]) @ box
        if k.size:
            pairs = cKDTree(canon).sparse_distance_matrix(
                cKDTree(pos.reshape(-1, 3)), self.cutoff, output_type="ndarray"
            )
            ea, eg = pairs["i"].astype(int), pairs["j"].astype(int)
            order = np.lexsort((eg, ea))
            ea, eg = ea[order], eg[order]
        else:
            ea = eg = np.zeros(0, int)
        return Topology(wrap[0], k, shift, ea, eg // self.n, eg % self.n)

    # loss ---------------------------------------------------------------
    def pair_terms(self, x, h, topo):
        """Edge distances, separation vectors and the pieces needed downstream."""
        box, rot, minv, cops, a, f = self._frame(x, h)
        body = np.einsum("kij,nj->kni", a, self.s)
        f0 = f[0] + topo.wrap0
        fm = f[topo.image_op] + topo.image_shift
        xa = body[0][topo.edge_a] + f0 @ box
        ops_e = topo.image_op[topo.edge_m]
        xb = body[ops_e, topo.edge_b] + fm[topo.edge_m] @ box
        d = xa - xb
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        return dict(box=box, rot=rot, minv=minv, cops=cops, f0=f0, fm=fm, ops_e=ops_e, d=d, r=r)

    def energy_terms(self, r, topo, derivative):
        sig = self.sigma[topo.edge_a, topo.edge_b]
        if self.kind == "silu":
            return potentials.silu_energy(r, sig, derivative=derivative)
        return potentials.lj_energy(r, sig, derivative=derivative)

    def __call__(self, x, h, topo=None):
        return self.value_and_grad(x, h, topo, grad=False)[0]

    def value_and_grad(self, x, h, topo=None, grad=True):
        """Stage loss (and its gradient w.r.t. all 12 parameters).

        Returns ``(inf, None)`` when the LJ energy diverges and ``(nan, None)``
        for an invalid cell.
        """
        x = np.asarray(x, float)
        if volume_discriminant(x[3:6]) <= 0 or np.any(x[:3] <= 0):
            return np.nan, None
        if topo is None:
            topo = self.topology(x, h)
        p = self.pair_terms(x, h, topo)
        box, r = p["box"], p["r"]
        try:
            if r.size:
                e, de = self.energy_terms(r, topo, derivative=True)
            else:
                e = de = np.zeros(0)
        except potentials.DivergentEnergyError:
            return np.inf, None

        lengths = x[:3]
        volume = float(np.prod(np.diag(box)))
        cp = self.vmol * self.sg.z / volume
        dcp = cp - self.stage.target_packing_coeff
        excess = lengths - self.length_cap
        loss = (
            float(np.sum(e))
            + self.stage.density_weight * dcp * dcp
            + self.stage.aux_length_weight * float(np.sum(np.logaddexp(0.0, excess)))
        )
        if not grad:
            return loss, None

        g = np.zeros(12)
        vgrad = volume_gradient(lengths, x[3:6])
        g[:6] += 2.0 * self.stage.density_weight * dcp * (-cp / volume) * vgrad
        g[:3] += self.stage.aux_length_weight / (1.0 + np.exp(-excess))
        if r.size == 0:
            return loss, g

        # dE/dx_a = u, dE/dx_b = -u for each edge
        u = (de / np.where(r > 0, r, 1.0))[:, None] * p["d"]
        z = self.sg.z
        ops_e = p["ops_e"]
        g_a = np.zeros((z, 3, 3))
        g_a[0] = u.T @ self.s[topo.edge_a]
        su = np.zeros((z, 3))
        for k in range(z):
            sel = ops_e == k
            if sel.any():
                us = u[sel]
                g_a[k] -= us.T @ self.s[topo.edge_b[sel]]
                su[k] = us.sum(axis=0)
        m = box.T
        minv, cops, rot = p["minv"], p["cops"], p["rot"]
        # centroid translations
        f_e = p["fm"][topo.edge_m]
        d_m = u.T @ (p["f0"][None, :] - f_e)
        g_t = m.T @ u.sum(axis=0) - np.einsum("kji,kj->i", self.W, su @ box.T)
        # orientation through A_k = C_k R h
        d_r = h * np.einsum("kji,kjl->il", cops, g_a)
        jac = rotvec_jacobian(x[9:12])
        g_theta = np.einsum("il,nil->n", d_r, jac)
        # box dependence of C_k = M W_k M^-1
        gamma = h * g_a @ rot.T
        w_minv = self.W @ minv
        d_m += np.einsum("kij,klj->il", gamma, w_minv)
        d_m -= np.einsum("kji,kjl,ml->im", cops, gamma, minv)
        dbox = box_derivatives(lengths, x[3:6])
        g[:6] += np.einsum("jqp,pq->j", dbox, d_m)
        g[6:9] += g_t
        g[9:12] += g_theta
        return loss, g

    def analyze(self, x, h):
        """Energy, packing coefficient and closest contact relative to sigma."""
        x = np.asarray(x, float)
        topo = self.topology(x, h)
        p = self.pair_terms(x, h, topo)
        r = p["r"]
        volume = float(np.prod(np.diag(p["box"])))
        cp = self.vmol * self.sg.z / volume
        if r.size == 0:
            return 0.0, cp, np.inf
        try:
            e = float(np.sum(self.energy_terms(r, topo, derivative=False)))
        except potentials.DivergentEnergyError:
            e = np.inf
        ratio = float(np.min(r / self.sigma[topo.edge_a, topo.edge_b]))
        return e, cp, ratio


def finite_difference_gradient(loss, x, h, step=1e-5, topo=None):
    """Central differences of ``loss`` at fixed topology."""
    x = np.asarray(x, float)
    topo = loss.topology(x, h) if topo is None else topo
    out = np.zeros(12)
    for i in range(12):
        e = np.zeros(12)
        e[i] = step
        out[i] = (loss(x + e, h, topo) - loss(x - e, h, topo)) / (2.0 * step)
    return out


def gradient(mol, params, stage):
    """Analytic gradient of the stage loss w.r.t. the 12 crystal parameters."""
    loss = StageLoss(mol, params.space_group, stage)
    value, g = loss.value_and_grad(params.as_array(), params.handedness)
    if g is None or not np.all(np.isfinite(g)):
        raise FloatingPointError("stage loss or gradient is not finite")
    return g


def stage_loss(mol, params, stage):
    return StageLoss(mol, params.space_group, stage)(params.as_array(), params.handedness)


@dataclass
class StageResult:
    x: np.ndarray
    handedness: int
    loss: float
    initial_loss: float
    steps: int
    converged: bool
    status: str = "ok"
    history: list = field(default_factory=list)


def _project(loss, x_new, x_old, h):
    """Clamp to the feasible region and move the centroid back into the asymmetric unit."""
    x = x_new.copy()
    x[:3] = np.maximum(x[:3], MIN_LENGTH)
    x[3:6] = loss.sg.constrain_angles(np.clip(x[3:6], *ANGLE_BOUNDS))
    if not is_valid_cell(x[:3], x[3:6]):
        return x_old.copy(), h, False
    params = canonicalize(CrystalParameters.from_array(x, h, loss.sg))
    jumped = params.handedness != h or not np.allclose(params.aunit_centroid, x[6:9], atol=0, rtol=0)
    return params.as_array(), params.handedness, jumped


def optimize_sample(loss, x0, h0, stage=None):
    """Run one stage on a single crystal; never raises for numerical trouble."""
    stage = stage or loss.stage
    x = np.asarray(x0, float).copy()
    h = int(h0)
    history = []
    step = np.full(12, float(stage.init_lr))
    prev = np.zeros(12)
    lo, hi = RPROP_STEP_BOUNDS
    eta_minus, eta_plus = RPROP_ETAS
    converged = False
    status = "ok"
    t = 0
    for t in range(stage.max_num_steps + 1):
        value, g = loss.value_and_grad(x, h)
        history.append(value)
        if not np.isfinite(value) or g is None or not np.all(np.isfinite(g)):
            status = "diverged"
            break
        if t >= CONVERGENCE_WINDOW:
            old = history[t - CONVERGENCE_WINDOW]
            if abs(value - old) / max(abs(value), 1.0) < stage.convergence_eps:
                converged = True
                break
        if t == stage.max_num_steps:
            break
        g = g * loss.free
        norm = np.linalg.norm(g)
        if norm > stage.grad_norm_clip:
            g *= stage.grad_norm_clip / norm
        if stage.optimizer == "rprop":
            agree = g * prev
            step = np.where(agree > 0, step * eta_plus, np.where(agree < 0, step * eta_minus, step))
            step = np.clip(step, lo, hi)
            g = np.where(agree < 0, 0.0, g)
            delta = -np.sign(g) * step
            prev = g
        else:
            lr = stage.init_lr
            if stage.anneal_lr:
                lr *= SGD_ANNEAL_FLOOR ** (t / stage.max_num_steps)
            delta = -lr * g
        x_new, h_new, jumped = _project(loss, x + delta, x, h)
        if jumped:
            prev = np.zeros(12)
        x, h = x_new, h_new
    steps = t
    final = history[-1]
    return StageResult(x, h, float(final), float(history[0]), steps, converged, status, history)


def optimize_stage(mol, crystals, stage):
    """Optimize a batch of crystals (same molecule and space group) independently."""
    if not crystals:
        return []
    sg = crystals[0].space_group
    if any(c.space_group.number != sg.number for c in crystals):
        raise ValueError("all crystals in a batch must share one space group")
    loss = StageLoss(mol, sg, stage)
    results = [optimize_sample(loss, c.as_array(), c.handedness, stage) for c in crystals]
    if all(r.status != "ok" for r in results):
        raise SearchError("every sample diverged")
    return results


@dataclass
class SearchRecord:
    index: int
    space_group: int
    handedness: int
    parameters: list
    initial_parameters: list
    initial_silu_energy: float
    stage_losses: list
    stage_steps: list
    stage_converged: list
    lj_energy: float
    silu_energy: float
    packing_coefficient: float
    min_contact_ratio: float
    converged: bool
    status: str

    def to_json(self):
        return json.dumps(_jsonable(asdict(self)), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _analysis_losses(mol, sg):
    silu = StageLoss(mol, sg, OptStage(optim_target="silu"))
    lj = StageLoss(mol, sg, OptStage(optim_target="lj", optimizer="sgd"))
    return silu, lj


def _run_one(args):
    index, mol, sg_number, stages, target_cp, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    sg = get_space_group(sg_number)
    silu, lj = _analysis_losses(mol, sg)
    try:
        params = sample_random_crystal(mol, sg, target_cp, rng)
    except SamplingError as exc:
        return SearchRecord(index, sg.number, 0, [], [], np.nan, [], [], [], np.nan, np.nan, np.nan, np.nan,
                            False, f"error: {exc}")
    x, h = params.as_array(), params.handedness
    x_init = x.copy()
    e_silu0 = silu.analyze(x, h)[0]
    losses, steps, conv = [], [], []
    status = "ok"
    for stage in stages:
        res = optimize_sample(StageLoss(mol, sg, stage), x, h, stage)
        losses.append(res.loss)
        steps.append(res.steps)
        conv.append(res.converged)
        if res.status != "ok":
            status = res.status
            break
        x, h = res.x, res.handedness
    e_lj, cp, ratio = lj.analyze(x, h)
    e_silu = silu.analyze(x, h)[0]
    if not np.isfinite(e_lj):
        status = "diverged"
    return SearchRecord(
        index=index,
        space_group=sg.number,
        handedness=h,
        parameters=x.tolist(),
        initial_parameters=x_init.tolist(),
        initial_silu_energy=e_silu0,
        stage_losses=losses,
        stage_steps=steps,
        stage_converged=conv,
        lj_energy=e_lj,
        silu_energy=e_silu,
        packing_coefficient=cp,
        min_contact_ratio=ratio,
        converged=bool(conv and conv[-1] and status == "ok"),
        status=status,
    )


def run_search(config, mol, workers=None):
    """Sample ``config.num_samples`` crystals and push each through every stage.

    Samples cycle through ``config.space_groups``. Every sample draws from its
    own child of the master seed, so results do not depend on scheduling.
    """
    if not isinstance(config, SearchConfig):
        raise TypeError("config must be a SearchConfig")
    if not is_standardized(mol):
        mol = standardize(mol)[0]
    mol.volume  # compute once before the molecule is shipped to workers
    sgs = [get_space_group(s).number for s in config.space_groups]
    seeds = np.random.SeedSequence(config.seed).spawn(config.num_samples)
    jobs = [
        (i, mol, sgs[i % len(sgs)], config.stages, config.init_target_cp, seeds[i])
        for i in range(config.num_samples)
    ]
    workers = config.workers if workers is None else workers
    records = []
    for start in range(0, len(jobs), config.batch_size):
        batch = jobs[start : start + config.batch_size]
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records.extend(pool.map(_run_one, batch))
        else:
            records.extend(_run_one(j) for j in batch)
        log.info("search: %d/%d samples done", len(records), len(jobs))
    failed = sum(r.status != "ok" for r in records)
    if failed == len(records):
        raise SearchError("every sample failed")
    if failed:
        log.warning("search: %d of %d samples flagged (%.1f%%)", failed, len(records), 100.0 * failed / len(records))
    if config.output_path:
        write_records(records, config.output_path)
    return records


CSV_FIELDS = ("index", "space_group", "lj_energy", "silu_energy", "packing_coefficient", "min_contact_ratio",
              "converged", "status")


def records_to_jsonl(records):
    return "".join(r.to_json() + "\n" for r in records)


def records_to_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_records(records, path):
    """Write records as JSON lines at ``path`` and a CSV summary next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_jsonl(records))
    path.with_suffix(".csv").write_text(records_to_csv(records))
    return path, path.with_suffix(".csv")


def read_records(path):
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            for key in ("lj_energy", "silu_energy", "packing_coefficient", "min_contact_ratio",
                        "initial_silu_energy"):
                if isinstance(d[key], str):
                    d[key] = float(d[key])
            out.append(SearchRecord(**d))
    return out

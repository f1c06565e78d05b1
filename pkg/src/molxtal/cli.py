"""Command-line interface: ``molxtal {mol-info,build,score,rdf-dist,search}``.

Exit codes: 0 success, 1 I/O error, 2 invalid input, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import potentials
from .cif import CifError, cluster_to_extxyz, read_unit_cell, write_cif
from .config import ConfigError, load_config
from .crystal import CrystalParameters, build_cluster, build_unit_cell, canonicalize
from .lattice import DegenerateCellError
from .molecule import DEFAULT_VOLUME_SAMPLES, Molecule, StandardPose, compute_volume, from_xyz, standardize
from .rdf import DEFAULT_BINS, RDF_RANGE, compute_rdf, emd_total
from .search import SearchError, run_search

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("molxtal")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _existing(path):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}", EXIT_IO)
    return p


def _emit(report, as_json, out=None):
    text = json.dumps(report, indent=2, sort_keys=True) if as_json else _table(report)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _table(report, indent=""):
    lines = []
    for key, value in report.items():
        if isinstance(value, dict):
            lines.append(f"{indent}{key}:")
            lines.append(_table(value, indent + "  "))
        else:
            lines.append(f"{indent}{key:<24}{value}")
    return "\n".join(lines)


def _load_molecule(path):
    mol = from_xyz(_existing(path))
    if mol.n_atoms == 1:
        # every orientation of a lone atom is the same; center it and move on
        std = Molecule(mol.atomic_numbers, np.zeros((1, 3)), mol.partial_charges)
        return mol, std, StandardPose(np.eye(3), 1)
    std, pose = standardize(mol)
    return mol, std, pose


# subcommands ----------------------------------------------------------------

def cmd_mol_info(args):
    mol, std, pose = _load_molecule(args.xyz)
    volume = compute_volume(std, n_samples=args.volume_samples, seed=args.seed)
    report = {
        "n_atoms": mol.n_atoms,
        "formula": _formula(mol),
        "mass": mol.mass,
        "radius": std.radius,
        "volume": volume,
        "volume_samples": args.volume_samples,
        "seed": args.seed,
        "handedness": pose.handedness,
        "rotation_to_standard": np.asarray(pose.rotation_to_standard).tolist(),
    }
    _emit(report, args.json)


def _formula(mol):
    counts = {}
    for s in mol.symbols:
        counts[s] = counts.get(s, 0) + 1
    order = sorted(counts, key=lambda s: (s not in ("C", "H"), s != "C", s))
    return "".join(f"{s}{counts[s] if counts[s] > 1 else ''}" for s in order)


def _read_params(args):
    if args.params is not None:
        values = args.params
    elif args.params_file is not None:
        doc = json.loads(_existing(args.params_file).read_text())
        values = doc["parameters"] if isinstance(doc, dict) else doc
        if isinstance(doc, dict) and "handedness" in doc and args.handedness is None:
            args.handedness = doc["handedness"]
    else:
        raise CliError("crystal parameters required: --params or --params-file", EXIT_INVALID)
    values = [float(v) for v in values]
    if len(values) != 12:
        raise CliError(f"expected 12 crystal parameters, got {len(values)}", EXIT_INVALID)
    if args.degrees:
        values[3:6] = np.radians(values[3:6]).tolist()
    return values


def _crystal_from_args(args):
    _, std, _ = _load_molecule(args.xyz)
    values = _read_params(args)
    h = 1 if args.handedness is None else int(args.handedness)
    params = canonicalize(CrystalParameters.from_array(values, h, args.sg))
    return std, params, build_unit_cell(std, params)


def cmd_build(args):
    _, params, cell = _crystal_from_args(args)
    text = write_cif(cell, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.cluster_xyz:
        cluster_to_extxyz(build_cluster(cell, args.cutoff), args.cluster_xyz)
    log.info("built %s cell with %d atoms", params.space_group.symbol, cell.z * cell.n_atoms_per_molecule)


def _structure(args, path=None):
    if path is not None:
        return read_unit_cell(_existing(path))
    return _crystal_from_args(args)[2]


def cmd_score(args):
    cell = _structure(args, args.cif)
    computes = [c.strip().lower() for c in args.computes.split(",") if c.strip()]
    for c in computes:
        if c not in potentials.DEFAULT_CUTOFFS:
            raise CliError(f"unknown potential {c!r}; choose from lj, es, silu", EXIT_INVALID)
    cutoff = args.cutoff if args.cutoff is not None else max(potentials.DEFAULT_CUTOFFS[c] for c in computes)
    cutoffs = {c: cutoff for c in computes} if args.cutoff is not None else None
    cluster = build_cluster(cell, cutoff)
    energies = potentials.compute_energies(cluster, computes, cutoffs)
    report = {
        "energies": energies,
        "packing_coefficient": cell.packing_coefficient,
        "cell_volume": cell.volume,
        "z": cell.z,
        "cluster": {
            "cutoff": cluster.cutoff,
            "n_molecules": cluster.n_molecules,
            "n_atoms": int(cluster.n_atoms),
            "n_edges": len(cluster.edges),
        },
    }
    _emit(report, True, args.out)


def cmd_rdf_dist(args):
    cells = [read_unit_cell(_existing(p)) for p in (args.a, args.b)]
    profiles = [compute_rdf(build_cluster(c, RDF_RANGE), n_bins=args.bins) for c in cells]
    d = emd_total(profiles[0], profiles[1], per_atom=args.per_atom)
    if args.json:
        print(json.dumps({"distance": d, "bins": args.bins, "per_atom": args.per_atom}, sort_keys=True))
    else:
        print(repr(d))


def cmd_search(args):
    config = load_config(_existing(args.config))
    if args.num_samples is not None:
        config.num_samples = args.num_samples
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_path = args.out
    mol_path = args.mol or config.mol_path
    if mol_path is None:
        raise CliError("no molecule given: use --mol or set mol_path in the config", EXIT_INVALID)
    _, std, _ = _load_molecule(mol_path)
    records = run_search(config, std, workers=args.threads if args.threads else config.workers)
    ok = sum(r.status == "ok" for r in records)
    log.info("search finished: %d/%d samples ok", ok, len(records))
    if config.output_path is None:
        for r in records:
            print(r.to_json())


# parser ---------------------------------------------------------------------

def _add_crystal_args(p, required=True):
    p.add_argument("xyz", nargs=None if required else "?", help="molecule XYZ file")
    p.add_argument("--sg", default=1, help="space group number or Hermann-Mauguin symbol (default 1)")
    p.add_argument("--params", type=float, nargs=12, metavar="P",
                   help="a b c alpha beta gamma u v w rx ry rz (angles in radians unless --degrees)")
    p.add_argument("--params-file", help="JSON list of 12 values or {parameters, handedness}")
    p.add_argument("--handedness", type=int, choices=(1, -1), default=None)
    p.add_argument("--degrees", action="store_true", help="cell angles given in degrees")


def build_parser():
    parser = argparse.ArgumentParser(prog="molxtal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mol-info", help="mass, radius, volume and standard pose of a molecule")
    p.add_argument("xyz")
    p.add_argument("--volume-samples", type=int, default=DEFAULT_VOLUME_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_mol_info)

    p = sub.add_parser("build", help="build a crystal and write a P1 CIF")
    _add_crystal_args(p)
    p.add_argument("--out", "-o", help="CIF path (default stdout)")
    p.add_argument("--cluster-xyz", help="also dump the cluster as extended XYZ")
    p.add_argument("--cutoff", type=float, default=10.0, help="cluster cutoff for --cluster-xyz")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("score", help="intermolecular energies and packing of a crystal")
    _add_crystal_args(p, required=False)
    p.add_argument("--cif", help="score this CIF instead of XYZ + parameters")
    p.add_argument("--computes", default="lj,es,silu", help="comma-separated subset of lj,es,silu")
    p.add_argument("--cutoff", type=float, default=None, help="override every potential cutoff (A)")
    p.add_argument("--out", "-o", help="JSON report path (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rdf-dist", help="RDF earth mover's distance between two CIFs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--per-atom", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rdf_dist)

    p = sub.add_parser("search", help="random sampling plus staged optimization")
    p.add_argument("--config", required=True, help="YAML search config")
    p.add_argument("--mol", help="molecule XYZ (overrides mol_path in the config)")
    p.add_argument("--out", "-o", help="JSONL output path; a CSV summary is written alongside")
    p.add_argument("--num-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default from config)")
    p.set_defaults(func=cmd_search)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "score" and args.cif is None and args.xyz is None:
        parser.error("score needs an XYZ file with parameters, or --cif")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, SearchError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, ConfigError, CifError, DegenerateCellError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"invalid input: {msg}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

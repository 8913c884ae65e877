"""Command-line front end.

Subcommands: spectrum, green, cover, nbvar, variance, lift, verify.
Common flags can also come from a JSON config file (--config); explicit
flags override the file.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import DEFAULTS
from .cover import CoverCache, solve_cover
from .edges import PotentialSpec, ZERO_POTENTIAL
from .graphs import (bst_census, build_graph, random_n_lift, read_edge_file,
                     spectral_gap, write_edge_file, complete_graph, petersen_graph)
from .lab import ExperimentConfig, Observable, variance_experiment
from .nonback import nb_variance
from .quantum import dirichlet_distance, qgraph
from .spectrum import eigenvalues_in, finite_green
from .verify import run_verify


def _fmt(x):
    return f"{x:.17g}"


def _load_graph(spec):
    if spec in ("k4", "K4"):
        return complete_graph(4)
    if spec == "petersen":
        return petersen_graph()
    return read_edge_file(spec)


def _observable(spec, ne):
    if spec == "halfedges":
        return Observable.half_edges(ne)
    kind, _, rest = spec.partition(":")
    if kind == "const":
        return Observable.constant(ne, float(rest or 1.0))
    if kind == "edges":
        return Observable.indicator(ne, [int(t) for t in rest.split(",") if t])
    if kind == "cos":
        coeffs = tuple(float(t) for t in rest.split(","))
        return Observable(spec, tuple(coeffs for _ in range(ne)))
    raise SystemExit(f"unknown observable spec: {spec}")


def _build_q(args):
    g = _load_graph(args.graph)
    pot = ZERO_POTENTIAL
    if args.potential:
        pot = PotentialSpec(tuple(float(t) for t in args.potential.split(",")))
    lengths = 1.0
    if args.lengths:
        lengths = [float(t) for t in args.lengths.split(",")]
    return g, qgraph(g, lengths, pot, args.alpha)


def _opts(args):
    o = DEFAULTS
    if args.mesh:
        o = o.with_(mesh=args.mesh)
    if args.tol:
        o = o.with_(residual_tol=args.tol)
    return o


def _add_common(p):
    p.add_argument("--graph", default="k4", help="edge-list file or k4/petersen")
    p.add_argument("--lengths", default="", help="comma list of edge lengths")
    p.add_argument("--potential", default="", help="cosine coefficients a0,a1,...")
    p.add_argument("--alpha", type=float, default=0.0, help="vertex coupling")
    p.add_argument("--interval", type=float, nargs=2, default=[2.5, 5.5])
    p.add_argument("--eta0", type=float, nargs="+", default=[0.05])
    p.add_argument("--folds", type=int, nargs="+", default=[1, 2, 4])
    p.add_argument("--seed", type=int, nargs="+", default=[1])
    p.add_argument("--observable", default="halfedges")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--mesh", type=int, default=0)
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", default="", help="JSON file mirroring the flags")


def _apply_config(args, parser):
    if not args.config:
        return args
    with open(args.config) as fh:
        data = json.load(fh)
    defaults = {a.dest: a.default for a in parser._actions}
    for key, val in data.items():
        if hasattr(args, key) and getattr(args, key) == defaults.get(key):
            setattr(args, key, val)
    return args


def main(argv=None):
    parser = argparse.ArgumentParser(prog="qglab")
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name in ("spectrum", "green", "cover", "nbvar", "variance", "lift", "verify"):
        p = sub.add_parser(name)
        _add_common(p)
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    os.makedirs(args.out, exist_ok=True)
    opts = _opts(args)

    if args.cmd == "verify":
        rows, runtime = run_verify(os.path.join(args.out, "verify.csv"), opts)
        bad = [r for r in rows if not r.passed]
        for r in rows:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.graph:18s} {r.identity:32s} "
                  f"{r.residual:.3e} (tol {r.tolerance:.1e})")
        print(f"{len(rows) - len(bad)}/{len(rows)} identities passed in {runtime:.1f}s")
        return 1 if bad else 0

    g, Q = _build_q(args)

    if args.cmd == "spectrum":
        ss = eigenvalues_in(Q, tuple(args.interval), opts)
        path = os.path.join(args.out, "spectrum.csv")
        with open(path, "w", newline="") as fh:
            fh.write("j,lambda,at_dirichlet\n")
            for j, p in enumerate(ss.pairs):
                fh.write(f"{j},{_fmt(p.lam)},{int(p.at_dirichlet)}\n")
        for lam, mult in ss.excluded:
            print(f"# excluded vertex-vanishing multiplet at lambda={_fmt(lam)} (x{mult})")
        print(f"{len(ss)} eigenvalues in {args.interval} -> {path}")
        return 0

    if args.cmd == "green":
        gamma = complex(0.5 * (args.interval[0] + args.interval[1]), args.eta0[0])
        gmat = np.column_stack([finite_green(Q, gamma, w, opts)[0]
                                for w in range(g.nv)])
        path = os.path.join(args.out, "green.csv")
        with open(path, "w", newline="") as fh:
            fh.write("v,w,re,im\n")
            for v in range(g.nv):
                for w in range(g.nv):
                    fh.write(f"{v},{w},{_fmt(gmat[v, w].real)},{_fmt(gmat[v, w].imag)}\n")
        print(f"finite Green at gamma={gamma} -> {path}")
        return 0

    if args.cmd == "cover":
        gamma = complex(0.5 * (args.interval[0] + args.interval[1]), args.eta0[0])
        cg = solve_cover(Q, gamma, opts)
        path = os.path.join(args.out, "cover.csv")
        with open(path, "w", newline="") as fh:
            fh.write("b,zeta_re,zeta_im,rplus_im,rminus_im\n")
            for b in range(g.nb):
                fh.write(f"{b},{_fmt(cg.zeta[b].real)},{_fmt(cg.zeta[b].imag)},"
                         f"{_fmt(cg.rp_o[b].imag)},{_fmt(cg.rm_t[b].imag)}\n")
        print(f"cover data at gamma={gamma}: residual {cg.residual:.2e} "
              f"in {cg.iterations} sweeps -> {path}")
        return 0

    if args.cmd == "nbvar":
        ss = eigenvalues_in(Q, tuple(args.interval), opts)
        cache = CoverCache(Q, args.eta0[0], opts)
        f = _observable(args.observable, g.ne)
        K = np.array([f.edge_coeffs[b >> 1][0] for b in range(g.nb)], dtype=complex)
        mean, terms = nb_variance(Q, ss, cache.at, K, 1, opts)
        print(f"non-backtracking variance over {len(terms)} eigenvalues: {_fmt(mean)}")
        return 0

    if args.cmd == "lift":
        lift = random_n_lift(g, args.folds[0], args.seed[0])
        path = os.path.join(args.out, f"lift_{args.folds[0]}_{args.seed[0]}.txt")
        write_edge_file(lift.graph, path,
                        header=f"{args.folds[0]}-lift of {args.graph}, seed {args.seed[0]}")
        print(f"beta={spectral_gap(lift.graph):.4f} census={bst_census(lift.graph)} -> {path}")
        return 0

    if args.cmd == "variance":
        pot = None
        if args.potential:
            pot = PotentialSpec(tuple(float(t) for t in args.potential.split(",")))
        lengths = 1.0
        if args.lengths:
            lengths = [float(t) for t in args.lengths.split(",")]
        cfg = ExperimentConfig(
            base_graph=g, base_lengths=lengths, base_potentials=pot,
            base_alpha=args.alpha, folds=tuple(args.folds), seeds=tuple(args.seed),
            eta0s=tuple(args.eta0),
            observables=(_observable(args.observable, g.ne),),
            interval=tuple(args.interval), opts=opts)
        reports = variance_experiment(cfg, out_dir=args.out, threads=args.threads)
        for r in reports:
            tag = r.error or f"cesaro={_fmt(r.cesaro)} over {r.n_terms} terms"
            print(f"fold={r.fold} seed={r.seed} eta0={r.eta0} obs={r.observable}: {tag}")
        print(f"wrote {args.out}/report.csv and {args.out}/summary.json")
        return 0

    raise SystemExit(f"unhandled command {args.cmd}")


if __name__ == "__main__":
    sys.exit(main())

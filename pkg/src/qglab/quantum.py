"""Quantum graph data: a combinatorial graph with edge lengths, symmetric
edge potentials and delta vertex couplings, plus the per-edge basis cache
used by every solver.

Edges sharing the same (length, potential) pair form a "class"; solution
bases only depend on the class, so scans over many energies touch each
class once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .config import DEFAULTS
from .edges import PotentialSpec, ZERO_POTENTIAL, cs_boundary, solve_basis
from .graphs import CombGraph, Lift


class DataError(ValueError):
    """A quantum-graph datum violates the standing boundedness hypotheses."""


@dataclass
class QGraph:
    graph: CombGraph
    lengths: np.ndarray              # (E,)
    potentials: tuple                # (E,) PotentialSpec
    alpha: np.ndarray                # (V,)
    _classes: list = field(default_factory=list, repr=False)
    _class_of_edge: np.ndarray = None
    _basis_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        keys = {}
        self._class_of_edge = np.empty(self.graph.ne, dtype=int)
        for e in range(self.graph.ne):
            key = (float(self.lengths[e]), self.potentials[e].coeffs)
            if key not in keys:
                keys[key] = len(self._classes)
                self._classes.append((float(self.lengths[e]), self.potentials[e]))
            self._class_of_edge[e] = keys[key]

    # -- data hypothesis -------------------------------------------------
    def check_data(self, m=0.05, M=20.0, D=64):
        g = self.graph
        if g.degree.min() < 3 or g.degree.max() > D:
            raise DataError("degree outside [3, D]")
        if self.lengths.min() < m or self.lengths.max() > M:
            raise DataError("edge length outside [m, M]")
        if np.abs(self.alpha).max() > M:
            raise DataError("coupling constant above M")
        for L, W in zip(self.lengths, self.potentials):
            if max(W.sup_norm(), W.lipschitz(L)) > M:
                raise DataError("potential norm above M")
        return True

    # -- conveniences ----------------------------------------------------
    @property
    def n_classes(self):
        return len(self._classes)

    def edge_class(self, e):
        return int(self._class_of_edge[e])

    def bond_class(self, b):
        return int(self._class_of_edge[b >> 1])

    def bond_length(self, b):
        return float(self.lengths[b >> 1])

    def total_length(self):
        return float(self.lengths.sum())

    def class_ids_of_bonds(self):
        return self._class_of_edge[np.arange(self.graph.nb) >> 1]

    def basis(self, edge, gamma, mesh=None, opts=DEFAULTS):
        """Cached EdgeBasis for the class of ``edge`` at ``gamma``."""
        mesh = opts.mesh if mesh is None else mesh
        cid = self.edge_class(edge)
        key = (cid, complex(gamma), int(mesh))
        basis = self._basis_cache.get(key)
        if basis is None:
            L, W = self._classes[cid]
            basis = solve_basis(L, W, gamma, mesh,
                                wronskian_tol=opts.wronskian_tol,
                                max_refine=opts.max_refine)
            self._basis_cache[key] = basis
        return basis

    def bond_basis(self, b, gamma, mesh=None, opts=DEFAULTS):
        return self.basis(b >> 1, gamma, mesh, opts)

    def class_boundary(self, gammas, opts=DEFAULTS):
        """(C, C', S, S') at x=L per class, shape (n_classes, n_energies)."""
        gam = np.atleast_1d(np.asarray(gammas, dtype=complex))
        out = [np.empty((self.n_classes, len(gam)), dtype=complex) for _ in range(4)]
        for cid, (L, W) in enumerate(self._classes):
            vals = cs_boundary(L, W, gam, opts.mesh,
                               wronskian_tol=opts.wronskian_tol,
                               max_refine=opts.max_refine)
            for a, v in zip(out, vals):
                a[cid] = v
        return out

    def bond_boundary(self, gamma, opts=DEFAULTS):
        """Per-bond boundary arrays (CL, CpL, SL, SpL) at one energy."""
        C, Cp, S, Sp = self.class_boundary([gamma], opts)
        cls = self.class_ids_of_bonds()
        return C[cls, 0], Cp[cls, 0], S[cls, 0], Sp[cls, 0]


def qgraph(graph, lengths=1.0, potentials=ZERO_POTENTIAL, alpha=0.0):
    """Assemble a QGraph, broadcasting scalar data over edges/vertices."""
    L = np.broadcast_to(np.asarray(lengths, dtype=float), (graph.ne,)).copy()
    if isinstance(potentials, PotentialSpec):
        pots = tuple(potentials for _ in range(graph.ne))
    else:
        pots = tuple(potentials)
        if len(pots) != graph.ne:
            raise ValueError("need one potential per edge")
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (graph.nv,)).copy()
    if L.min() <= 0:
        raise DataError("edge lengths must be positive")
    return QGraph(graph=graph, lengths=L, potentials=pots, alpha=a)


def lift_qgraph(lift: Lift, base_q: QGraph):
    """Pull the base data back through the covering projection."""
    if base_q.graph is not lift.base:
        raise ValueError("base data does not belong to the lift's base graph")
    edge_map = lift.bond_map[0::2] >> 1      # lift edge -> base edge
    return qgraph(lift.graph,
                  lengths=base_q.lengths[edge_map],
                  potentials=tuple(base_q.potentials[e] for e in edge_map),
                  alpha=base_q.alpha[lift.vertex_map])


def dirichlet_values(Q, interval, grid=2048, opts=DEFAULTS):
    """Real energies in ``interval`` where some edge has S_lambda(L) = 0."""
    a, b = interval
    lams = np.linspace(a, b, grid)
    _, _, S, _ = Q.class_boundary(lams, opts)
    zeros = []
    from scipy.optimize import brentq
    for cid in range(Q.n_classes):
        s = S[cid].real
        sign = np.sign(s)
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            f = lambda lam: Q.class_boundary([lam], opts)[2][cid, 0].real
            zeros.append(float(brentq(f, lams[i], lams[i + 1], xtol=1e-12)))
    return sorted(zeros)


def dirichlet_distance(Q, interval, grid=2048, opts=DEFAULTS):
    """min over edges and lambda in ``interval`` of |S_lambda(L_b)|.

    Grid scan refined by bounded local minimization; a zero result is a
    valid report that the window meets the Dirichlet set.
    """
    a, b = interval
    lams = np.linspace(a, b, grid)
    _, _, S, _ = Q.class_boundary(lams, opts)
    best = np.inf
    argmin = (a, 0)
    for cid in range(Q.n_classes):
        absS = np.abs(S[cid])
        i = int(absS.argmin())
        lo = lams[max(i - 1, 0)]
        hi = lams[min(i + 1, grid - 1)]
        f = lambda lam: abs(Q.class_boundary([lam], opts)[2][cid, 0])
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        val = min(float(res.fun), float(absS[i]))
        if val < best:
            best = val
            argmin = (float(res.x), cid)
    return best, argmin[0], argmin[1]

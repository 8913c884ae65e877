"""Direct mesh discretization of the metric-graph operator.

This is the independent cross-check for the vertex-reduction solvers: a
lumped P1 discretization of -d^2/dx^2 + W with the delta couplings folded
into the vertex rows.  Eigenvalues come from a sparse shift-invert solve,
Green values from a sparse LU factorization at complex energy.

Also builds a truncated universal-cover tree around a bond and solves the
same discretization there, which is the oracle for the covering-tree Green
recursion.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def _assemble(nv, edge_list, lengths, potentials, alpha, ppe):
    """Stiffness K and lumped mass M for the metric graph.

    edge_list: (E, 2) vertex pairs.  Vertices own nodes 0..nv-1; edge e
    owns ppe-1 interior nodes starting at nv + e*(ppe-1).
    """
    ne = len(edge_list)
    nint = ppe - 1
    ndof = nv + ne * nint
    rows, cols, vals = [], [], []
    mass = np.zeros(ndof)
    kdiag = np.zeros(ndof)
    mass[:nv] = 0.0
    kdiag[:nv] = np.asarray(alpha, dtype=float)[:nv] if np.ndim(alpha) else alpha

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    for e, (u, v) in enumerate(edge_list):
        L = lengths[e]
        h = L / ppe
        W = potentials[e]
        xs = np.linspace(0.0, L, ppe + 1)
        wv = W.values(xs, L) if hasattr(W, "values") else np.zeros(ppe + 1)
        nodes = [u] + [nv + e * nint + i for i in range(nint)] + [v]
        for i in range(ppe):
            a, b = nodes[i], nodes[i + 1]
            add(a, b, -1.0 / h)
            add(b, a, -1.0 / h)
            kdiag[a] += 1.0 / h
            kdiag[b] += 1.0 / h
            mass[a] += h / 2.0
            mass[b] += h / 2.0
        for i in range(1, ppe):
            kdiag[nodes[i]] += wv[i] * h
        kdiag[u] += wv[0] * h / 2.0
        kdiag[v] += wv[ppe] * h / 2.0

    for i in range(ndof):
        add(i, i, kdiag[i])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(ndof, ndof))
    M = sp.diags(mass).tocsr()
    return K, M


def assemble_qgraph(Q, ppe):
    return _assemble(Q.graph.nv, Q.graph.edges, Q.lengths, Q.potentials, Q.alpha, ppe)


def fd_eigenvalues(Q, interval, ppe=2000, k=40):
    """Eigenvalues of the mesh operator inside ``interval`` (all types,
    including eigenfunctions that vanish on every vertex)."""
    a, b = interval
    K, M = assemble_qgraph(Q, ppe)
    sigma = 0.5 * (a + b)
    k = min(k, K.shape[0] - 2)
    vals = spla.eigsh(K, k=k, M=M, sigma=sigma, return_eigenvectors=False)
    vals = np.sort(vals)
    inside = vals[(vals > a) & (vals <= b)]
    # widen until the ends of the window are safely covered
    if len(vals) and (vals[0] > a or vals[-1] < b):
        extra = spla.eigsh(K, k=min(2 * k, K.shape[0] - 2), M=M, sigma=sigma,
                           return_eigenvectors=False)
        extra = np.sort(extra)
        inside = extra[(extra > a) & (extra <= b)]
    return inside


def fd_green_vertices(Q, gamma, w, ppe=400):
    """Vertex values of the resolvent column (H - gamma)^{-1} delta_w."""
    K, M = assemble_qgraph(Q, ppe)
    A = (K.astype(complex) - complex(gamma) * M.astype(complex)).tocsc()
    lu = spla.splu(A)
    rhs = np.zeros(K.shape[0], dtype=complex)
    rhs[w] = 1.0
    sol = lu.solve(rhs)
    return sol[:Q.graph.nv]


def truncated_cover(Q, bond, depth):
    """Truncated universal cover around ``bond``: tree vertex list, edge
    list and the base edge of each tree edge.

    Tree vertices 0 and 1 are the two endpoints of the lifted root bond.
    The tree extends ``depth`` combinatorial steps beyond each endpoint.
    """
    g = Q.graph
    tree_edges = [(0, 1)]
    tree_edge_base = [bond >> 1]
    base_vertex = {0: int(g.origin[bond]), 1: int(g.terminus[bond])}
    # (tree vertex, base bond arrived along, distance from its root endpoint)
    queue = [(0, bond ^ 1, 0), (1, bond, 0)]
    nxt = 2
    while queue:
        tv, arrived, dist = queue.pop(0)
        if dist >= depth:
            continue
        v = base_vertex[tv]
        for b in g.out_bonds[v]:
            if b == (arrived ^ 1):
                continue
            tw = nxt
            nxt += 1
            base_vertex[tw] = int(g.terminus[b])
            tree_edges.append((tv, tw))
            tree_edge_base.append(b >> 1)
            queue.append((tw, int(b), dist + 1))
    return base_vertex, tree_edges, tree_edge_base


def _tree_green_once(Q, bond, gamma, depth, ppe, points):
    """One truncated solve: (g_oo, g_ot, g_tt, g(x,x) at the given relative
    points of the root edge).  Leaves carry the outgoing free impedance of
    their missing branches, psi' = (alpha - (d-1) i sqrt(gamma)) psi, which
    absorbs most of the flux that would otherwise reflect."""
    base_vertex, tree_edges, tree_edge_base = truncated_cover(Q, bond, depth)
    nv = len(base_vertex)
    lengths = np.array([Q.lengths[e] for e in tree_edge_base])
    pots = [Q.potentials[e] for e in tree_edge_base]
    alpha = np.array([Q.alpha[base_vertex[tv]] for tv in range(nv)])
    K, M = _assemble(nv, tree_edges, lengths, pots, alpha, ppe)
    A = (K.astype(complex) - complex(gamma) * M.astype(complex)).tolil()
    tdeg = np.zeros(nv, dtype=int)
    for u, v in tree_edges:
        tdeg[u] += 1
        tdeg[v] += 1
    s = np.sqrt(complex(gamma))
    g = Q.graph
    for tv in range(nv):
        if tdeg[tv] == 1 and tv > 1:
            missing = g.degree[base_vertex[tv]] - 1
            A[tv, tv] += -missing * 1j * s
    lu = spla.splu(A.tocsc())

    def col(node):
        rhs = np.zeros(K.shape[0], dtype=complex)
        rhs[node] = 1.0
        return lu.solve(rhs)

    c0 = col(0)
    g_oo, g_ot = c0[0], c0[1]
    g_tt = col(1)[1]
    diag = {}
    for t in points:
        i = int(round(t * ppe))
        node = 0 if i == 0 else (1 if i == ppe else nv + i - 1)
        diag[t] = col(node)[node]
    return g_oo, g_ot, g_tt, diag


def truncated_cover_green(Q, bond, gamma, depth=6, ppe=100, points=(0.5,)):
    """Green data on a bond of the universal cover by direct mesh solves on
    truncated trees.

    The single dominant error mode of the truncation is geometric in the
    depth, so three successive depths are combined by Aitken extrapolation.
    Returns (g_oo, g_ot, g_tt, {point: g(x,x)}) with points as fractions
    of the edge length.
    """
    if depth < 3:
        raise ValueError("need depth >= 3 for the extrapolation")
    runs = [_tree_green_once(Q, bond, gamma, d, ppe, points)
            for d in (depth - 2, depth - 1, depth)]

    def aitken(a, b, c):
        den = c - 2 * b + a
        if abs(den) < 1e-14 * max(abs(c), 1.0):
            return c
        return c - (c - b) ** 2 / den

    g_oo = aitken(*(r[0] for r in runs))
    g_ot = aitken(*(r[1] for r in runs))
    g_tt = aitken(*(r[2] for r in runs))
    diag = {t: aitken(*(r[3][t] for r in runs)) for t in points}
    return g_oo, g_ot, g_tt, diag

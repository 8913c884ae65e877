"""Combinatorial graphs with a directed-bond calculus, random N-lifts, and
the geometric checks (spectral gap, injectivity radii) used to screen test
families.

Bonds are stored as the integers 0..2|E|-1 with ``rev(2i) = 2i+1``, so
reversal is a bit flip and bond ``b`` belongs to edge ``b >> 1``.  Bond
``2i`` points from the smaller to the larger endpoint of edge ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Raised when an edge list violates the simple-graph requirements."""


@dataclass(frozen=True)
class CombGraph:
    nv: int
    edges: np.ndarray       # (E, 2) vertex pairs, each listed (min, max)
    origin: np.ndarray      # (2E,) origin vertex of each bond
    terminus: np.ndarray    # (2E,)
    degree: np.ndarray      # (V,)
    out_bonds: tuple        # per-vertex arrays of bonds b with o_b = v

    @property
    def ne(self):
        return len(self.edges)

    @property
    def nb(self):
        return 2 * len(self.edges)

    @staticmethod
    def rev(b):
        return b ^ 1

    def successors(self, b):
        """Outgoing bonds from t_b, excluding the reversal of b."""
        out = self.out_bonds[self.terminus[b]]
        return out[out != (b ^ 1)]

    def predecessors(self, b):
        """Incoming bonds to o_b, excluding the reversal of b."""
        return np.array([p ^ 1 for p in self.out_bonds[self.origin[b]] if (p ^ 1) != (b ^ 1)],
                        dtype=int)

    def adjacency(self):
        a = np.zeros((self.nv, self.nv))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def bfs_distances(self, v):
        dist = np.full(self.nv, -1, dtype=int)
        dist[v] = 0
        frontier = [v]
        while frontier:
            nxt = []
            for u in frontier:
                for b in self.out_bonds[u]:
                    w = self.terminus[b]
                    if dist[w] < 0:
                        dist[w] = dist[u] + 1
                        nxt.append(w)
            frontier = nxt
        return dist


def build_graph(pairs, *, require_connected=True, data_check=False, dmax=None):
    """Build a CombGraph from an iterable of vertex pairs.

    Rejects self-loops, duplicate edges and (by default) disconnected
    graphs.  With ``data_check`` the degree window 3 <= d(v) <= dmax is
    enforced as well.
    """
    raw = [(int(u), int(v)) for u, v in pairs]
    for u, v in raw:
        if u == v:
            raise GraphError(f"self-loop at vertex {u}")
        if u < 0 or v < 0:
            raise GraphError("negative vertex index")
    edges = np.array([(min(u, v), max(u, v)) for u, v in raw], dtype=int)
    if len(edges) == 0:
        raise GraphError("empty edge list")
    seen = set()
    for u, v in edges:
        if (u, v) in seen:
            raise GraphError(f"duplicate edge ({u}, {v})")
        seen.add((u, v))
    nv = int(edges.max()) + 1

    origin = np.empty(2 * len(edges), dtype=int)
    terminus = np.empty_like(origin)
    origin[0::2] = edges[:, 0]
    terminus[0::2] = edges[:, 1]
    origin[1::2] = edges[:, 1]
    terminus[1::2] = edges[:, 0]
    degree = np.bincount(origin, minlength=nv)

    order = np.argsort(origin, kind="stable")
    out_bonds = tuple(order[origin[order] == v] for v in range(nv))

    g = CombGraph(nv=nv, edges=edges, origin=origin, terminus=terminus,
                  degree=degree, out_bonds=out_bonds)

    if require_connected and not _connected(g):
        raise GraphError("graph is not connected")
    if data_check:
        if degree.min() < 3:
            raise GraphError(f"degree {degree.min()} below 3 at vertex {int(degree.argmin())}")
        if dmax is not None and degree.max() > dmax:
            raise GraphError(f"degree {degree.max()} above bound {dmax}")
    return g


def _connected(g):
    return bool((g.bfs_distances(0) >= 0).all()) and g.nv == int(g.edges.max()) + 1


def read_edge_file(path):
    """Edge list, one ``u v`` pair per line; '#' starts a comment."""
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            u, v = line.split()
            pairs.append((int(u), int(v)))
    return build_graph(pairs)


def write_edge_file(g, path, header=None):
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def nb_paths(g, k):
    """All non-backtracking bond paths of length k, lexicographic order."""
    if k < 1:
        raise ValueError("path length must be >= 1")
    paths = [(b,) for b in range(g.nb)]
    for _ in range(k - 1):
        paths = [p + (int(b2),) for p in paths for b2 in g.successors(p[-1])]
    return paths


def nb_path_count(g, k):
    """|B_k| without enumeration: each bond has d(t_b)-1 continuations."""
    counts = np.ones(g.nb)
    for _ in range(k - 1):
        counts = np.array([counts[g.successors(b)].sum() for b in range(g.nb)])
    return int(counts.sum())


@dataclass(frozen=True)
class Lift:
    """An n-fold cover together with its covering projection."""
    graph: CombGraph
    base: CombGraph
    n: int
    seed: int
    vertex_map: np.ndarray   # lift vertex -> base vertex
    bond_map: np.ndarray     # lift bond -> base bond
    attempts: int = 1


def random_n_lift(base, n, seed, *, max_attempts=64):
    """Random connected n-lift: one uniform permutation per base edge.

    Lift vertex (v, s) gets index v*n + s; the permutations are drawn with
    a seeded 64-bit generator, and the seed travels with the result so the
    sample can be reproduced.  Resamples until connected, up to
    ``max_attempts``.
    """
    if n < 1:
        raise ValueError("fold must be >= 1")
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):
        pairs = []
        for (u, v) in base.edges:
            sigma = rng.permutation(n)
            for s in range(n):
                pairs.append((u * n + s, v * n + int(sigma[s])))
        try:
            g = build_graph(pairs, require_connected=True)
        except GraphError:
            continue
        vertex_map = np.arange(base.nv * n) // n
        bond_map = np.empty(2 * base.ne * n, dtype=int)
        # pairs were generated edge-major, sheets inner; u*n+s < v*n+sigma(s)
        # always holds for u < v, so lift bond parity matches base parity.
        for i in range(base.ne):
            for s in range(n):
                j = i * n + s
                bond_map[2 * j] = 2 * i
                bond_map[2 * j + 1] = 2 * i + 1
        return Lift(graph=g, base=base, n=n, seed=seed,
                    vertex_map=vertex_map, bond_map=bond_map, attempts=attempt)
    raise GraphError(f"no connected {n}-lift in {max_attempts} attempts (seed {seed})")


def injectivity_radius(g, v, cap=None):
    """Largest rho such that the ball B(v, rho) is a tree.

    The ball is the induced subgraph on vertices within graph distance rho.
    Capped at the eccentricity of v (beyond that the ball stops growing),
    so on a tree the cap itself is returned.
    """
    dist = g.bfs_distances(v)
    ecc = int(dist.max())
    if cap is None:
        cap = ecc
    cap = min(cap, ecc)
    edge_depth = np.maximum(dist[g.edges[:, 0]], dist[g.edges[:, 1]])
    for rho in range(cap + 1):
        nv_in = int((dist <= rho).sum())
        ne_in = int((edge_depth <= rho).sum())
        if ne_in != nv_in - 1:
            return rho - 1 if rho > 0 else 0
    return cap


def bst_census(g, radii=(1, 2, 3)):
    """Fraction of vertices whose injectivity radius reaches each r."""
    rho = np.array([injectivity_radius(g, v) for v in range(g.nv)])
    return {int(r): float((rho >= r).mean()) for r in radii}


def spectral_gap(g):
    """Gap beta of the degree-normalized adjacency P = D^{-1} A.

    spec(P) \\ {1} must lie in [-1+beta, 1-beta]; computed from the
    symmetric similarity D^{-1/2} A D^{-1/2}.  Bipartite graphs report 0.
    """
    a = g.adjacency()
    dinv = 1.0 / np.sqrt(g.degree.astype(float))
    sym = a * dinv[:, None] * dinv[None, :]
    mu = np.linalg.eigvalsh(sym)
    # connected => the eigenvalue 1 is simple and sits at mu[-1]
    beta = 1.0 - max(abs(mu[0]), abs(mu[-2]))
    return float(max(beta, 0.0))


# small stock graphs used across the tests and demos

def complete_graph(n):
    return build_graph([(i, j) for i in range(n) for j in range(i + 1, n)])


def petersen_graph():
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return build_graph(outer + spokes + inner)


def cycle_graph(n):
    return build_graph([(i, (i + 1) % n) for i in range(n)])

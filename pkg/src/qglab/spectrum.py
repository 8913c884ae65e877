"""Eigenvalues and eigenfunctions of the metric-graph operator via the
vertex secular system, plus the finite-graph Green function.

For symmetric edge potentials an eigenfunction is determined on each edge
by its vertex values,

    psi_b(x) = [S(L-x) psi(o_b) + S(x) psi(t_b)] / S(L),

and the delta conditions collapse to the |V| x |V| symmetric system
A(lam) psi = 0 with

    A[v, v] = alpha_v + sum_{o_b = v} C(L_b)/S(L_b),
    A[v, w] = -1/S(L_b)          for the edge b from v to w.

Eigenvalues are located by tracking the sorted eigenvalue branches of
A(lam) over a sqrt(lam) grid and bisecting their sign changes; energies
where some S_lam(L_b) = 0 ("Dirichlet values") are isolated points where
the reduction degenerates, and get a dedicated constrained probe instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .config import DEFAULTS
from .quantum import QGraph, dirichlet_values


class SpectrumError(RuntimeError):
    pass


@dataclass
class EigenPair:
    lam: float
    vertex: np.ndarray          # psi at the vertices, L2-normalized
    deriv: np.ndarray           # psi_b'(0) per bond, same normalization
    at_dirichlet: bool = False
    norm_constant: float = 1.0  # scale applied to the raw kernel vector


@dataclass
class SpectrumSet:
    Q: QGraph
    window: tuple
    pairs: list                  # sorted by lam
    excluded: list               # (lam, multiplicity) of vertex-vanishing modes
    margin: float = 0.0

    def __len__(self):
        return len(self.pairs)

    @property
    def lams(self):
        return np.array([p.lam for p in self.pairs])

    def total_count(self):
        return len(self.pairs) + sum(m for _, m in self.excluded)


def secular_matrix(Q, gamma, opts=DEFAULTS, margin=1e-12):
    """A(gamma) as above; requires |S_gamma(L_b)| above ``margin``."""
    CL, _, SL, _ = Q.bond_boundary(gamma, opts)
    if np.abs(SL).min() <= margin:
        raise SpectrumError(f"Dirichlet margin violated at gamma={gamma}")
    return _assemble_secular(Q, CL, SL)


def _assemble_secular(Q, CL, SL):
    g = Q.graph
    A = np.zeros((g.nv, g.nv), dtype=complex)
    cs = CL / SL
    np.add.at(A, (g.origin, g.origin), cs)
    A[g.origin, g.terminus] = -1.0 / SL
    A[np.arange(g.nv), np.arange(g.nv)] += Q.alpha
    return A


def _secular_batch(Q, lams, opts):
    """Real symmetric A(lam) for a batch of real energies: (m, V, V)."""
    C, _, S, _ = Q.class_boundary(lams, opts)
    cls = Q.class_ids_of_bonds()
    CL = C[cls].real            # (2E, m)
    SL = S[cls].real
    g = Q.graph
    m = len(lams)
    A = np.zeros((m, g.nv, g.nv))
    D = np.zeros((m, g.nv))
    np.add.at(D, (slice(None), g.origin), (CL / SL).T)
    idx = np.arange(g.nv)
    A[:, idx, idx] = D + Q.alpha[None, :]
    A[:, g.origin, g.terminus] = (-1.0 / SL).T
    return A


def _branches(Q, lams, opts):
    A = _secular_batch(Q, np.asarray(lams, dtype=float), opts)
    return np.linalg.eigvalsh(A)


def _branch_value(Q, lam, k, opts):
    return _branches(Q, [lam], opts)[0, k]


def _crossing_cells(lams, branches):
    """(cell index, branch index) pairs where a sorted branch changes sign."""
    sign = np.sign(branches)
    sign[sign == 0] = 1.0
    hits = set()
    for k in range(branches.shape[1]):
        for i in np.nonzero(sign[:-1, k] * sign[1:, k] < 0)[0]:
            hits.add((int(i), int(k)))
        for i in np.nonzero(np.abs(branches[:, k]) < 1e-13)[0]:
            if i + 1 < len(lams):
                hits.add((int(i), int(k)))
            if i > 0:
                hits.discard((int(i - 1), int(k)))
    return sorted(hits)


def _scan_roots(Q, lo, hi, opts):
    """Eigenvalues (with per-root branch index) in a Dirichlet-free window."""
    length = Q.total_length()
    t_lo, t_hi = np.sqrt(lo), np.sqrt(hi)
    dt = np.pi / (opts.scan_factor * length * max(np.sqrt(hi), 1.0))
    npts = max(int(np.ceil((t_hi - t_lo) / dt)) + 1, 9)

    def roots_at(n):
        t = np.linspace(t_lo, t_hi, n)
        lams = t * t
        branches = _branches(Q, lams, opts)
        found = []
        for i, k in _crossing_cells(lams, branches):
            a, b = lams[i], lams[i + 1]
            fa, fb = branches[i, k], branches[i + 1, k]
            if abs(fa) < 1e-13:
                found.append(float(a))
                continue
            root = brentq(lambda lam: _branch_value(Q, lam, k, opts), a, b,
                          xtol=opts.bisect_tol, rtol=1e-15)
            found.append(float(root))
        return sorted(found)

    prev = roots_at(npts)
    for _ in range(opts.refine_passes):
        npts = 2 * npts - 1
        cur = roots_at(npts)
        if len(cur) == len(prev):
            return cur
        prev = cur
    raise SpectrumError("scan grid kept revealing extra crossings; window too wild")


def _cluster(roots, tol):
    clusters = []
    for lam in sorted(roots):
        if clusters and lam - clusters[-1][-1] <= tol * max(1.0, abs(lam)):
            clusters[-1].append(lam)
        else:
            clusters.append([lam])
    return [(float(np.mean(c)), len(c)) for c in clusters]


def _kernel_vectors(Q, lam, mult, opts):
    A = _secular_batch(Q, np.array([lam]), opts)[0]
    vals, vecs = np.linalg.eigh(A)
    order = np.argsort(np.abs(vals))
    picked = vecs[:, order[:mult]]
    scale = max(1.0, np.abs(A).max())
    if np.abs(vals[order[:mult]]).max() > 1e-5 * scale:
        raise SpectrumError(f"kernel defect too large at lam={lam}")
    return picked, float(np.abs(vals[order[:mult]]).max())


def _canonical_sign(vec):
    for x in vec:
        if abs(x) > 1e-10:
            return vec if x > 0 else -vec
    return vec


def _dirichlet_probe(Q, lamD, opts):
    """Constrained kernel at an energy where some edges are Dirichlet.

    On a Dirichlet edge b the edge solution is psi(o_b) C(x) + c S(x) with
    the derivative parameter c free and the matching constraint
    psi(t_b) = C(L_b) psi(o_b); the delta conditions close the system.
    Returns vertex-supported eigenpairs and the count of modes that vanish
    on every vertex (reported, not returned as pairs).
    """
    g = Q.graph
    CL_, CpL_, SL_, _ = Q.bond_boundary(lamD, opts)
    CL, CpL, SL = CL_.real, CpL_.real, SL_.real
    zed = [e for e in range(g.ne) if abs(SL[2 * e]) < 1e-7]
    if not zed:
        return [], 0
    zpos = {e: i for i, e in enumerate(zed)}
    nz = len(zed)
    nvar = g.nv + nz
    rows = []

    for e in zed:
        b = 2 * e
        row = np.zeros(nvar)
        row[g.terminus[b]] += 1.0
        row[g.origin[b]] -= CL[b]
        rows.append(row)

    for v in range(g.nv):
        row = np.zeros(nvar)
        row[v] -= Q.alpha[v]
        for b in g.out_bonds[v]:
            e = b >> 1
            if e in zpos:
                if b % 2 == 0:
                    row[g.nv + zpos[e]] += 1.0
                else:
                    # reversed orientation: psi'(0) = -psi(o_b0) C'(L) - c C(L)
                    b0 = 2 * e
                    row[g.origin[b0]] -= CpL[b]
                    row[g.nv + zpos[e]] -= CL[b]
            else:
                row[g.terminus[b]] += 1.0 / SL[b]
                row[g.origin[b]] -= CL[b] / SL[b]
        rows.append(row)

    Mx = np.array(rows)
    u_, s_, vt = np.linalg.svd(Mx)
    smax = s_.max() if len(s_) else 1.0
    null = vt[np.abs(np.concatenate([s_, np.zeros(nvar - len(s_))])) < 1e-8 * max(smax, 1.0)]
    if len(null) == 0:
        return [], 0
    null = null.T                       # (nvar, dim)
    ublock = null[:g.nv]
    uu, su, vvt = np.linalg.svd(ublock, full_matrices=False)
    # null vectors are unit norm, so the vertex block's singular values are
    # absolute: anything below 1e-8 is a vertex-vanishing combination
    rank = int((su > 1e-8).sum()) if len(su) else 0
    pure = null.shape[1] - rank
    pairs = []
    for r in range(rank):
        vec = null @ vvt[r]
        u = vec[:g.nv]
        c = vec[g.nv:]
        d = np.zeros(g.nb)
        for b in range(g.nb):
            e = b >> 1
            if e in zpos:
                if b % 2 == 0:
                    d[b] = c[zpos[e]]
                else:
                    d[b] = -u[g.origin[2 * e]] * CpL[b] - c[zpos[e]] * CL[b]
            else:
                d[b] = (u[g.terminus[b]] - CL[b] * u[g.origin[b]]) / SL[b]
        pairs.append(EigenPair(lam=float(lamD), vertex=u, deriv=d, at_dirichlet=True))
    return pairs, pure


def _edge_norm_quadrature(Q, pair, opts):
    total = 0.0
    g = Q.graph
    for e in range(g.ne):
        b = 2 * e
        basis = Q.bond_basis(b, pair.lam, opts=opts)
        psi = pair.vertex[g.origin[b]] * basis.C.real + pair.deriv[b] * basis.S.real
        total += float(simpson(psi ** 2, dx=basis.L / basis.n))
    return total


def _gram_sigma(Q, pairs, opts):
    """L2 Gram matrix of same-energy eigenfunctions from the overlap
    integrals of S (valid away from Dirichlet values)."""
    lam = pairs[0].lam
    g = Q.graph
    n = len(pairs)
    gram = np.zeros((n, n))
    for e in range(g.ne):
        b = 2 * e
        basis = Q.bond_basis(b, lam, opts=opts)
        s1 = basis.sigma1().real
        s2 = basis.sigma2().real
        sl = basis.SL.real
        o, t = g.origin[b], g.terminus[b]
        for i in range(n):
            for j in range(n):
                ui, uj = pairs[i].vertex, pairs[j].vertex
                gram[i, j] += ((ui[o] * uj[o] + ui[t] * uj[t]) * s1
                               + (ui[o] * uj[t] + ui[t] * uj[o]) * s2) / sl ** 2
    return gram


def normalize(Q, ss, opts=DEFAULTS):
    """Scale every eigenfunction to unit L2 norm; orthonormalize degenerate
    clusters symmetrically (Loewdin) for determinism."""
    i = 0
    pairs = ss.pairs
    while i < len(pairs):
        j = i + 1
        while j < len(pairs) and abs(pairs[j].lam - pairs[i].lam) <= opts.cluster_tol * max(1.0, abs(pairs[i].lam)):
            j += 1
        cluster = pairs[i:j]
        if any(p.at_dirichlet for p in cluster):
            gram = np.zeros((len(cluster), len(cluster)))
            for a in range(len(cluster)):
                gram[a, a] = _edge_norm_quadrature(Q, cluster[a], opts)
                for b in range(a + 1, len(cluster)):
                    mixed = EigenPair(lam=cluster[a].lam,
                                      vertex=cluster[a].vertex + cluster[b].vertex,
                                      deriv=cluster[a].deriv + cluster[b].deriv,
                                      at_dirichlet=True)
                    gram[a, b] = gram[b, a] = 0.5 * (_edge_norm_quadrature(Q, mixed, opts)
                                                     - gram[a, a]
                                                     - _edge_norm_quadrature(Q, cluster[b], opts))
        else:
            gram = _gram_sigma(Q, cluster, opts)
        w, U = np.linalg.eigh(gram)
        if w.min() <= 0:
            raise SpectrumError(f"degenerate cluster at lam={cluster[0].lam} has singular Gram")
        T = U @ np.diag(1.0 / np.sqrt(w)) @ U.T      # symmetric orthonormalization
        verts = np.stack([p.vertex for p in cluster])
        ders = np.stack([p.deriv for p in cluster])
        new_v = T.T @ verts
        new_d = T.T @ ders
        for a, p in enumerate(cluster):
            v = new_v[a]
            d = new_d[a]
            sgn = 1.0
            for x in v:
                if abs(x) > 1e-10:
                    sgn = 1.0 if x > 0 else -1.0
                    break
            p.vertex = sgn * v
            p.deriv = sgn * d
            p.norm_constant = float(np.linalg.norm(T.T[a]))
        i = j
    return ss


def eigenvalues_in(Q, interval, opts=DEFAULTS, normalized=True):
    """SpectrumSet over a real window.

    The window is split at Dirichlet values of the edge data; each free
    piece is scanned by branch tracking and bisection, and each Dirichlet
    value gets the constrained probe.  Eigenfunctions that vanish on every
    vertex are excluded from the set and counted in ``excluded``.
    """
    a, b = float(interval[0]), float(interval[1])
    if b <= a:
        raise ValueError("empty window")
    a = max(a, 1e-9)
    dvals = [d for d in dirichlet_values(Q, (a - 1e-6, b + 1e-6), opts=opts) if a <= d <= b]
    guard = opts.dirichlet_guard
    cuts = [a] + sorted(dvals) + [b]
    roots = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        lo2 = lo + (guard if lo in dvals else 0.0)
        hi2 = hi - (guard if hi in dvals else 0.0)
        if hi2 > lo2:
            roots.extend(_scan_roots(Q, lo2, hi2, opts))

    pairs = []
    for lam, mult in _cluster(roots, opts.cluster_tol):
        vecs, defect = _kernel_vectors(Q, lam, mult, opts)
        CL_, _, SL_, _ = Q.bond_boundary(lam, opts)
        CL, SL = CL_.real, SL_.real
        g = Q.graph
        for m in range(mult):
            u = _canonical_sign(vecs[:, m])
            d = (u[g.terminus] - CL * u[g.origin]) / SL
            pairs.append(EigenPair(lam=lam, vertex=u, deriv=d))

    excluded = []
    for lamD in dvals:
        dpairs, pure = _dirichlet_probe(Q, lamD, opts)
        pairs.extend(dpairs)
        if pure:
            excluded.append((float(lamD), int(pure)))

    pairs.sort(key=lambda p: (p.lam, tuple(np.round(p.vertex, 12))))
    ss = SpectrumSet(Q=Q, window=(a, b), pairs=pairs, excluded=excluded)
    if normalized and pairs:
        normalize(Q, ss, opts)
    return ss


def eigenfunction_eval(Q, ss, j, bond, x, opts=DEFAULTS):
    """psi_j at points x on ``bond`` (local coordinate from o_b)."""
    pair = ss.pairs[j]
    g = Q.graph
    basis = Q.bond_basis(bond, pair.lam, opts=opts)
    x = np.asarray(x, dtype=float)
    idx = np.rint(x / basis.L * basis.n).astype(int)
    on_mesh = np.abs(idx * basis.L / basis.n - x) < 1e-12 * max(basis.L, 1.0)
    C = basis.C.real
    S = basis.S.real
    if bool(np.all(on_mesh)):
        Cx, Sx = C[idx], S[idx]
    else:
        from scipy.interpolate import CubicSpline
        Cx = CubicSpline(basis.x, C)(x)
        Sx = CubicSpline(basis.x, S)(x)
    return pair.vertex[g.origin[bond]] * Cx + pair.deriv[bond] * Sx


def delta_residuals(Q, ss):
    """Per-vertex defect of the delta condition for each eigenfunction."""
    g = Q.graph
    out = []
    for pair in ss.pairs:
        r = np.zeros(g.nv)
        np.add.at(r, g.origin, pair.deriv)
        r -= Q.alpha * pair.vertex
        out.append(np.abs(r))
    return out


def finite_green(Q, gamma, w, opts=DEFAULTS, margin=1e-10):
    """Green column g^gamma(., w) on the vertices: solves A(gamma) g = e_w.

    The sign convention is pinned by Im g(w, w) > 0; the solve is negated
    (and flagged) if the raw convention lands on the other sign.
    """
    if gamma.imag <= 0:
        raise ValueError("finite_green needs Im(gamma) > 0")
    A = secular_matrix(Q, gamma, opts, margin=margin)
    rhs = np.zeros(Q.graph.nv, dtype=complex)
    rhs[w] = 1.0
    cond = np.linalg.cond(A)
    if cond > 1e14:
        raise SpectrumError(f"secular system too ill-conditioned: cond={cond:.2e}")
    g = np.linalg.solve(A, rhs)
    flipped = False
    if g[w].imag < 0:
        g = -g
        flipped = True
    residual = float(np.linalg.norm(A @ (-g if flipped else g) - rhs))
    return g, {"residual": residual, "sign_flipped": flipped, "cond": float(cond)}

"""Non-backtracking calculus on the directed bonds: eigenfunction fields,
the averaging operator that leaves their quadratic forms invariant, the
Green-weighted sub-stochastic transfer operators and the path measures
they act on.

Functions on length-k bond paths are numpy arrays over bonds for k = 1 and
dicts keyed by path tuples for k >= 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULTS
from .cover import CoverGreen, _succ_sums, _vertex_sums
from .graphs import nb_paths


class NbError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# basic bond operators

def apply_iota(values):
    """Edge reversal on bond arrays."""
    idx = np.arange(len(values)) ^ 1
    return values[idx]


def apply_B(g, values):
    """(B f)(b) = sum of f over outgoing bonds of t_b, reversal excluded."""
    return _succ_sums(g, np.asarray(values))


def apply_B_star(g, values):
    """B* = iota B iota."""
    return apply_iota(apply_B(g, apply_iota(np.asarray(values))))


def project_F(g, values):
    """Orthogonal projection onto functions that depend only on the origin."""
    u = _vertex_sums(g, np.asarray(values))
    return u[g.origin] / g.degree[g.origin]


def transfer_S(g, values):
    """Classical non-backtracking transfer operator with weights 1/q(t_b)."""
    q = g.degree - 1
    return apply_B(g, np.asarray(values)) / q[g.terminus]


def dense_B(g):
    mat = np.zeros((g.nb, g.nb))
    for b in range(g.nb):
        mat[b, g.successors(b)] = 1.0
    return mat


# ---------------------------------------------------------------------------
# path-indexed vectors

def kb_apply(g, K, f, k):
    """(K_B f)(b1) = sum over path extensions of K(b1..bk) f(bk)."""
    f = np.asarray(f)
    out = np.zeros(g.nb, dtype=complex)
    if k == 1:
        return np.asarray(K) * f
    for p, val in K.items():
        out[p[0]] += val * f[p[-1]]
    return out


def nb_inner(g, fstar, K, f, k):
    """<f*, K_B f> = sum over paths of conj(f*(b1)) K(b1..bk) f(bk);
    the pairing is antilinear on the left."""
    if k == 1:
        return complex(np.sum(np.conj(fstar) * np.asarray(K) * f))
    return complex(sum(np.conj(fstar[p[0]]) * val * f[p[-1]] for p, val in K.items()))


# ---------------------------------------------------------------------------
# non-backtracking eigenfunction fields

@dataclass
class NbField:
    j: int
    lam: float
    gamma: complex
    f: np.ndarray
    fstar: np.ndarray
    O: np.ndarray          # per-bond error of the eigen-relation
    psi_o: np.ndarray
    psi_t: np.ndarray


def _o_error(Q, cg, lam, opts):
    """Per-bond mismatch between the closed system evaluated at the real
    eigenvalue and at the complex energy of the cover data."""
    g = Q.graph
    CLr_, _, SLr_, SpLr_ = Q.bond_boundary(lam, opts)
    CLr, SLr, SpLr = CLr_.real, SLr_.real, SpLr_.real
    z = cg.zeta
    term_succ = _succ_sums(g, (CLr - z) / SLr - (cg.CL - z) / cg.SL)
    return (term_succ + SpLr / SLr - cg.SpL / cg.SL
            + 1.0 / (z * cg.SL) - 1.0 / (z * SLr))


def build_nb_field(Q, ss, cg, j, opts=DEFAULTS):
    """Directed-bond field of eigenfunction j using the cover data at
    gamma_j = lam_j + i eta0."""
    pair = ss.pairs[j]
    if pair.at_dirichlet:
        raise NbError("bond fields are undefined at a Dirichlet energy")
    if abs(cg.gamma.real - pair.lam) > 1e-6:
        raise NbError("cover data does not match the eigenvalue")
    if np.iscomplexobj(pair.vertex):
        raise NbError("vertex values must be real")
    g = Q.graph
    _, _, SLr_, _ = Q.bond_boundary(pair.lam, opts)
    SLr = SLr_.real
    psi_o = pair.vertex[g.origin]
    psi_t = pair.vertex[g.terminus]
    rev = np.arange(g.nb) ^ 1
    denom = 1.0 - cg.zeta * cg.zeta[rev]
    if np.abs(denom).min() < 1e-14:
        raise NbError("1 - zeta(b) zeta(rev b) vanished; cover data inconsistent")
    f = (psi_t - cg.zeta * psi_o) / SLr
    fstar = (psi_o - cg.zeta[rev] * psi_t) / SLr
    O = _o_error(Q, cg, pair.lam, opts)
    return NbField(j=j, lam=pair.lam, gamma=cg.gamma, f=f, fstar=fstar, O=O,
                   psi_o=psi_o, psi_t=psi_t)


def recover_vertex_values(field, cg):
    """Invert the field construction back to (psi(o_b), psi(t_b))."""
    g = cg.graph
    rev = np.arange(g.nb) ^ 1
    _, _, SLr_, _ = cg.Q.bond_boundary(field.lam)
    SLr = SLr_.real
    denom = 1.0 - cg.zeta * cg.zeta[rev]
    psi_o = SLr / denom * (field.fstar + cg.zeta[rev] * field.f)
    psi_t = SLr / denom * (field.f + cg.zeta * field.fstar)
    return psi_o, psi_t


def eigen_relation_residual(g, field, cg):
    """(B f)(b) - f(b)/zeta(b) - psi(t_b) O(b), which vanishes exactly when
    the cover data solves its closed system."""
    return apply_B(g, field.f) - field.f / cg.zeta - field.psi_t * field.O


# ---------------------------------------------------------------------------
# the spectral averaging operator on path observables

def apply_R_nr(g, cg, K, k, n, r):
    """Average a path observable into one on (n+k)-paths: a conjugated
    reversed-zeta prefix of length n-r, then K, then a zeta suffix of
    length r."""
    if not (0 <= r <= n):
        raise ValueError("need 0 <= r <= n")
    if n == 0:
        return K if k > 1 else np.asarray(K)
    z = cg.zeta
    out = {}
    for p in nb_paths(g, n + k):
        mid = p[n - r:n - r + k]
        val = K[mid] if k > 1 else K[mid[0]]
        if val == 0:
            continue
        pref = np.prod([np.conj(z[p[i] ^ 1]) for i in range(1, n - r + 1)]) if n > r else 1.0
        suff = np.prod([z[p[i]] for i in range(n - r + k - 1, n + k - 1)]) if r > 0 else 1.0
        out[p] = pref * val * suff
    return out


def rinv_terms(g, cg, field, K, k, n, r):
    """The two error sums in the averaged quadratic form:

    <f*, (R_{n,r} K)_B f> = <f*, K_B f>
        + sum_{l=1..r}   <f*, (R_{n-l, r-l} K)_B (zeta O_psi)>
        + sum_{l'=1..n-r} <iota zeta iota O_psi, (R_{n-r-l', 0} K)_B f>.
    """
    z = cg.zeta
    o_psi = field.psi_t * field.O
    iz_io = z[np.arange(g.nb) ^ 1] * apply_iota(o_psi)
    t1 = 0.0 + 0.0j
    for ell in range(1, r + 1):
        Kl = apply_R_nr(g, cg, K, k, n - ell, r - ell)
        t1 += nb_inner(g, field.fstar, Kl, z * o_psi, n - ell + k if n - ell > 0 else k)
    t2 = 0.0 + 0.0j
    for ellp in range(1, n - r + 1):
        Kl = apply_R_nr(g, cg, K, k, n - r - ellp, 0)
        t2 += nb_inner(g, iz_io, Kl, field.f, n - r - ellp + k if n - r - ellp > 0 else k)
    return t1, t2


# ---------------------------------------------------------------------------
# Green-weighted transfer operators

def s_gamma(g, cg, K):
    """(S K)(b) = |zeta(b)|^2/Im R+(o_b) * sum_{b+} Im R+(o_{b+}) K(b+)."""
    w = cg.rp_o.imag
    return np.abs(cg.zeta) ** 2 / w * _succ_sums(g, w * np.asarray(K, dtype=complex))


def s_gamma_star(g, cg, K):
    w = cg.rm_t.imag
    rev = np.arange(g.nb) ^ 1
    vals = w * np.asarray(K, dtype=complex)
    t_sums = _vertex_sums(g, vals[rev])       # sums over bonds ending at v
    pred = t_sums[g.origin] - vals[rev]
    return np.abs(cg.zeta[rev]) ** 2 / w * pred


def s_u(g, cg, K, k=1):
    """Phase-twisted version: multiply s_gamma by u(b) = conj(zeta)/zeta."""
    if k == 1:
        return cg.u_phase() * s_gamma(g, cg, K)
    w = cg.rp_o.imag
    u = cg.u_phase()
    z2 = np.abs(cg.zeta) ** 2
    out = {}
    for p, val in K.items():
        if val == 0:
            continue
        b2k = p[:-1]          # (b2 .. bk)
        bk = b2k[-1]
        for b1 in g.predecessors(p[0]):
            q = (int(b1),) + b2k
            out[q] = out.get(q, 0.0) + z2[bk] / w[bk] * u[bk] * w[p[-1]] * val
    return out


def a_gamma_k2(g, cg, K):
    """Conjugated form of s_u on 2-paths:
    (A K)(b1,b2) = sum_{b3} conj(zeta(rev b2) zeta(b2))/Im R+(o_b2)
                   * Im R+(o_b3) K(b2,b3)."""
    w = cg.rp_o.imag
    z = cg.zeta
    out = {}
    for (b2, b3), val in K.items():
        for b1 in g.predecessors(b2):
            q = (int(b1), b2)
            out[q] = out.get(q, 0.0) + (np.conj(z[b2 ^ 1] * z[b2]) / w[b2]
                                        * w[b3] * val)
    return out


def z_gamma(g, cg, K, k, inverse=False):
    """Multiplication that conjugates the phase-twisted operator into its
    plain Green-weighted form; implemented for k = 1 and k = 2."""
    if k == 1:
        factor = np.conj(cg.g_vertex[g.origin]) / np.conj(cg.zeta[np.arange(g.nb) ^ 1])
        return np.asarray(K) / factor if inverse else np.asarray(K) * factor
    if k == 2:
        out = {}
        for p, val in K.items():
            factor = np.conj(cg.g_vertex[g.origin[p[1]]])
            out[p] = val / factor if inverse else val * factor
        return out
    raise NotImplementedError("z_gamma is provided for k in {1, 2}")


# ---------------------------------------------------------------------------
# path measures

@dataclass
class NbMeasure:
    k: int
    weights: object        # array for k = 1, dict for k >= 2
    total: float

    def nu(self):
        if self.k == 1:
            return self.weights / self.total
        return {p: v / self.total for p, v in self.weights.items()}


def mu_k(g, cg, k, form=1):
    """Path measure built from the Green weights; ``form`` switches between
    the reversed-zeta and forward-zeta product expressions (they agree)."""
    z = cg.zeta
    rev = np.arange(g.nb) ^ 1
    imr_m = cg.rm_t.imag
    imr_p = cg.rp_o.imag
    if k == 1:
        if form == 1:
            w = imr_m * np.abs(cg.g_vertex[g.origin]) ** 2 * imr_p / np.abs(z[rev]) ** 2
        else:
            w = imr_m * np.abs(cg.g_vertex[g.terminus]) ** 2 * imr_p / np.abs(z) ** 2
        return NbMeasure(k=1, weights=w, total=float(w.sum()))
    weights = {}
    for p in nb_paths(g, k):
        b1, bk = p[0], p[-1]
        if form == 1:
            prod = np.prod([abs(z[b ^ 1]) ** 2 for b in p])
            w = (imr_m[b1] / abs(z[b1 ^ 1]) ** 2 * prod
                 * abs(cg.g_vertex[g.origin[bk]]) ** 2 * imr_p[bk] / abs(z[bk ^ 1]) ** 2)
        else:
            prod = np.prod([abs(z[b]) ** 2 for b in p])
            w = (imr_m[b1] / abs(z[b1]) ** 2 * abs(cg.g_vertex[g.terminus[b1]]) ** 2
                 * prod * imr_p[bk] / abs(z[bk]) ** 2)
        weights[p] = float(w)
    return NbMeasure(k=k, weights=weights, total=float(sum(weights.values())))


def mu_marginal_defects(g, cg, k):
    """Entrywise slack of the two sub-stochastic marginal inequalities of
    mu_k against mu_{k-1}; negative entries would be violations."""
    mk = mu_k(g, cg, k)
    mk1 = mu_k(g, cg, k - 1)
    fwd = {}
    bwd = {}
    if k == 2:
        get1 = lambda p: mk1.weights[p[0]]
    else:
        get1 = lambda p: mk1.weights[p]
    for p, w in mk.weights.items():
        fwd[p[:-1]] = fwd.get(p[:-1], 0.0) + w
        bwd[p[1:]] = bwd.get(p[1:], 0.0) + w
    d_fwd = [get1(p) - s for p, s in fwd.items()]
    d_bwd = [get1(p) - s for p, s in bwd.items()]
    return np.array(d_fwd), np.array(d_bwd)


def lp_norm_nu(K, nu, p, k=1):
    if k == 1:
        w = np.asarray(nu)
        a = np.abs(np.asarray(K))
    else:
        keys = list(nu.keys())
        w = np.array([nu[q] for q in keys])
        a = np.array([abs(K.get(q, 0.0)) for q in keys])
    if np.isinf(p):
        return float(a[w > 0].max()) if (w > 0).any() else 0.0
    return float((w * a ** p).sum() ** (1.0 / p))


# ---------------------------------------------------------------------------
# the quantum variance on bond observables

def nb_variance(Q, ss, cover_at, K, k, opts=DEFAULTS):
    """Cesaro mean over the window of |<f_j*, K_B f_j>|.

    ``cover_at`` maps an eigenvalue to converged cover data at
    lam + i eta0 (see CoverCache).  Returns (mean, per-eigenvalue terms).
    """
    if len(ss) == 0:
        raise NbError("empty eigenvalue window")
    g = Q.graph
    terms = []
    for j, pair in enumerate(ss.pairs):
        cg = cover_at(pair.lam)
        field = build_nb_field(Q, ss, cg, j, opts)
        terms.append(abs(nb_inner(g, field.fstar, K, field.f, k)))
    return float(np.mean(terms)), terms

"""Experiment layer: observables on the metric graph, the Green-weighted
averages they are compared against, the vertex discretization of matrix
elements, the reduction operators of the variance calculus, and the lift
ladder experiment with its CSV/JSON output.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .config import DEFAULTS
from .cover import CoverCache, edge_green_profile, im_g_on_edge, path_green, path_green_pair
from .graphs import bst_census, nb_paths, random_n_lift, spectral_gap
from .nonback import nb_inner
from .quantum import dirichlet_distance, lift_qgraph, qgraph
from .spectrum import eigenvalues_in


# ---------------------------------------------------------------------------
# observables

@dataclass(frozen=True)
class Observable:
    """Edge-wise scalar observable, |f| <= 1.

    Per-edge cosine profiles f_e(x) = sum_k coeffs[k] cos(2 pi k x / L_e);
    indicators and constants are the k = 0 special case.  Cosine profiles
    are symmetric under edge reversal, so the observable is well defined
    on the metric graph without orientation bookkeeping.
    """
    name: str
    edge_coeffs: tuple      # one coefficient tuple per edge

    def values(self, e, x, L):
        out = np.zeros_like(np.asarray(x, dtype=float))
        for k, a in enumerate(self.edge_coeffs[e]):
            if a == 0.0:
                continue
            out = out + a * np.cos(2.0 * np.pi * k * np.asarray(x) / L)
        return out

    @staticmethod
    def constant(ne, c=1.0, name=None):
        return Observable(name or f"const:{c}", tuple((float(c),) for _ in range(ne)))

    @staticmethod
    def indicator(ne, edges, name=None):
        sel = set(int(e) for e in edges)
        # '+' separator keeps the name safe as a CSV field
        return Observable(name or "edges:" + "+".join(str(e) for e in sorted(sel)),
                          tuple(((1.0,) if e in sel else (0.0,)) for e in range(ne)))

    @staticmethod
    def half_edges(ne):
        return Observable("halfedges", tuple(((1.0,) if e < ne // 2 else (0.0,))
                                             for e in range(ne)))

    def lifted(self, lift):
        edge_map = lift.bond_map[0::2] >> 1
        return Observable(self.name, tuple(self.edge_coeffs[e] for e in edge_map))


@dataclass(frozen=True)
class PathKernel:
    """Integral kernel supported on length-k non-backtracking paths:
    per path a constant times separable cosine profiles on the first and
    last edge.  entries: {path: (coeff, prof_first, prof_last)} with
    profiles as cosine coefficient tuples (None means the constant 1)."""
    k: int
    entries: dict

    def conjugate_symmetric(self):
        out = {}
        for p, (c, u, w) in self.entries.items():
            out[p] = (c, u, w)
            rp = tuple(b ^ 1 for b in reversed(p))
            out[rp] = (np.conj(c), w, u)
        return PathKernel(self.k, out)


def _profile(coeffs, x, L):
    if coeffs is None:
        return np.ones_like(x)
    out = np.zeros_like(np.asarray(x, dtype=float))
    for k, a in enumerate(coeffs):
        out = out + a * np.cos(2.0 * np.pi * k * np.asarray(x) / L)
    return out


# ---------------------------------------------------------------------------
# matrix elements and Green-weighted averages

def matrix_element(Q, ss, j, f, opts=DEFAULTS):
    """<psi_j, f psi_j> by per-edge Simpson quadrature."""
    g = Q.graph
    pair = ss.pairs[j]
    total = 0.0
    for e in range(g.ne):
        b = 2 * e
        basis = Q.bond_basis(b, pair.lam, opts=opts)
        psi = pair.vertex[g.origin[b]] * basis.C.real + pair.deriv[b] * basis.S.real
        fv = f.values(e, basis.x, basis.L)
        total += float(simpson(fv * psi * psi, dx=basis.L / basis.n))
    return total


def bracket_f(Q, cg, f, opts=DEFAULTS):
    """Green-weighted average of a scalar observable:
    int f Im g(x,x) / int Im g(x,x) over the metric graph."""
    num = 0.0
    den = 0.0
    for e in range(Q.graph.ne):
        b = 2 * e
        basis, diag = edge_green_profile(cg, b, opts)
        im = diag.imag
        fv = f.values(e, basis.x, basis.L)
        h = basis.L / basis.n
        num += float(simpson(fv * im, dx=h))
        den += float(simpson(im, dx=h))
    if den <= 0:
        raise RuntimeError("nonpositive spectral-density mass; cover data unusable")
    return num / den


def _edge_profile_integrals(Q, cg, bond, coeffs, opts):
    """(int prof * S(L-x) dx, int prof * S(x) dx)/S(L) on ``bond`` at the
    cover energy."""
    basis = Q.bond_basis(bond, cg.gamma, opts=opts)
    prof = _profile(coeffs, basis.x, basis.L)
    h = basis.L / basis.n
    io = complex(simpson(prof * basis.S[::-1], dx=h)) / basis.SL
    it = complex(simpson(prof * basis.S, dx=h)) / basis.SL
    return io, it


def bracket_K(Q, cg, kernel, opts=DEFAULTS):
    """Green-weighted average of a path kernel against Im g(x, y).

    k >= 2 uses the bilinear vertex expansion on the first and last edge
    with the path products in between; k = 1 (same edge) adds the interval
    source term S(x /\\ y) S(L - x \\/ y)/S(L).
    """
    den = 0.0
    for e in range(Q.graph.ne):
        den += im_g_on_edge(cg, 2 * e, opts).integral
    num = 0.0 + 0.0j
    g = Q.graph
    if kernel.k == 0:
        # multiplication operators: entries map an edge index to a profile
        for e, (c, uprof, _) in kernel.entries.items():
            basis, diag = edge_green_profile(cg, 2 * e, opts)
            u = _profile(uprof, basis.x, basis.L)
            num += c * float(simpson(u * diag.imag, dx=basis.L / basis.n))
        return num / den
    for p, (c, uprof, wprof) in kernel.entries.items():
        b1, bk = p[0], p[-1]
        if kernel.k == 1:
            basis = Q.bond_basis(b1, cg.gamma, opts=opts)
            L, h = basis.L, basis.L / basis.n
            u = _profile(uprof, basis.x, L)
            w = _profile(wprof, basis.x, L)
            S = basis.S
            Sr = S[::-1]
            goo = cg.g_vertex[g.origin[b1]]
            gtt = cg.g_vertex[g.terminus[b1]]
            got = goo * cg.zeta[b1]
            # separable part
            iu = np.array([complex(simpson(u * Sr, dx=h)), complex(simpson(u * S, dx=h))]) / basis.SL
            iw = np.array([complex(simpson(w * Sr, dx=h)), complex(simpson(w * S, dx=h))]) / basis.SL
            gmat = np.array([[goo, got], [got, gtt]])
            val = iu @ gmat @ iw
            # interval source term S(x/\y) S(L - x\/y)/S(L), double Simpson
            n = basis.n
            xs = basis.x
            inner = np.empty(n + 1, dtype=complex)
            for i in range(n + 1):
                kern = np.where(xs <= xs[i], S * Sr[i], S[i] * Sr) / basis.SL
                inner[i] = simpson(w * kern, dx=h)
            val += complex(simpson(u * inner, dx=h))
        else:
            iu = _edge_profile_integrals(Q, cg, b1, uprof, opts)
            iw = _edge_profile_integrals(Q, cg, bk, wprof, opts)
            val = (iu[0] * iw[1] * path_green(cg, p)
                   + iu[0] * iw[0] * path_green_pair(cg, p, 0, len(p) - 2)
                   + iu[1] * iw[1] * path_green_pair(cg, p, 1, len(p) - 1)
                   + iu[1] * iw[0] * path_green_pair(cg, p, 1, len(p) - 2))
        # the kernel coefficient multiplies the imaginary part of the
        # Green pairing; profiles are real so that part is val.imag
        num += c * val.imag
    return num / den


# ---------------------------------------------------------------------------
# vertex discretization of a scalar observable

def discrete_observables(Q, f, lam, opts=DEFAULTS):
    """The four quadrature observables that turn 2 <psi, f psi> into a
    vertex/bond quadratic form:

      K(v) = sum_{o_b = v} int f S(L-x)^2 / S(L)^2
      J(v) = sum_{t_b = v} int f S(x)^2 / S(L)^2
      M1(b) = int f S(L-x) S(x) / S(L)^2 = M2(rev b)
    """
    g = Q.graph
    Kv = np.zeros(g.nv)
    Jv = np.zeros(g.nv)
    M1 = np.zeros(g.nb)
    for b in range(g.nb):
        e = b >> 1
        basis = Q.bond_basis(b, lam, opts=opts)
        S = basis.S.real
        Sr = S[::-1]
        if b % 2 == 0:
            fv = f.values(e, basis.x, basis.L)
        else:
            fv = f.values(e, basis.L - basis.x, basis.L)
        h = basis.L / basis.n
        sl2 = basis.SL.real ** 2
        Kv[g.origin[b]] += float(simpson(fv * Sr * Sr, dx=h)) / sl2
        Jv[g.terminus[b]] += float(simpson(fv * S * S, dx=h)) / sl2
        M1[b] = float(simpson(fv * Sr * S, dx=h)) / sl2
    M2 = M1[np.arange(g.nb) ^ 1]
    return Kv, Jv, M1, M2


def vertex_form(g, psi, K0=None, M1=None):
    """<psi, (K0)_G psi> + <psi, (M1)_G psi> for K0 on vertices and M1 on
    bonds (either may be None)."""
    total = 0.0
    if K0 is not None:
        total += float(np.sum(psi * np.asarray(K0) * psi))
    if M1 is not None:
        total += float(np.sum(psi[g.origin] * np.asarray(M1) * psi[g.terminus]))
    return total


# ---------------------------------------------------------------------------
# Green-weighted path averages and the reduction operators

def bracket_discrete(Q, cg, K, k):
    """<K>^gamma: path observable averaged against Im g(o_{b1}, t_{bk}),
    normalized by the vertex diagonal mass."""
    g = Q.graph
    den = float(cg.g_vertex.imag.sum())
    if k == 0:
        return complex(np.sum(np.asarray(K) * cg.g_vertex.imag)) / den
    if k == 1:
        z = np.array([path_green(cg, (b,)).imag for b in range(g.nb)])
        return complex(np.sum(np.asarray(K) * z)) / den
    return complex(sum(val * path_green(cg, p).imag for p, val in K.items())) / den


def op_U(cg, K):
    """(U K)(b) = (1 + conj(zeta(rev b)) zeta(b)) K(b) / S_lam(L_b)^2."""
    g = cg.graph
    rev = np.arange(g.nb) ^ 1
    _, _, SLr_, _ = cg.Q.bond_boundary(cg.gamma.real)
    SLr = SLr_.real
    return (1.0 + np.conj(cg.zeta[rev]) * cg.zeta) * np.asarray(K) / SLr ** 2


def op_T1(cg, K):
    """Inverse of op_U: (T K)(b) = S_lam^2 K(b)/(1 + conj(zeta(rev b)) zeta(b))."""
    g = cg.graph
    rev = np.arange(g.nb) ^ 1
    _, _, SLr_, _ = cg.Q.bond_boundary(cg.gamma.real)
    SLr = SLr_.real
    return SLr ** 2 * np.asarray(K) / (1.0 + np.conj(cg.zeta[rev]) * cg.zeta)


def op_O1(cg, K):
    """Bond-to-vertex remainder of the field pairing:
    (O K)(v) = -sum_{t_b=v} conj(zeta(rev b)) K(b)/S_lam^2
               -sum_{o_b=v} zeta(b) K(b)/S_lam^2."""
    g = cg.graph
    rev = np.arange(g.nb) ^ 1
    _, _, SLr_, _ = cg.Q.bond_boundary(cg.gamma.real)
    SLr = SLr_.real
    out = np.zeros(g.nv, dtype=complex)
    np.add.at(out, g.terminus, -np.conj(cg.zeta[rev]) * np.asarray(K) / SLr ** 2)
    np.add.at(out, g.origin, -cg.zeta * np.asarray(K) / SLr ** 2)
    return out


def op_T_k(cg, K, k):
    """(T_k K)(b1..bk) = S_lam(L_b1) S_lam(L_bk) K(b1..bk)."""
    _, _, SLr_, _ = cg.Q.bond_boundary(cg.gamma.real)
    SLr = SLr_.real
    return {p: SLr[p[0]] * SLr[p[-1]] * v for p, v in K.items()}


def op_O_k(cg, K, k):
    """One-bond contraction of a k-path observable onto (k-1)-paths:
    the k-path (b0, q) feeds -conj(zeta(rev b0)) K into q, and (q, b_k)
    feeds -K zeta(b_k) into q.  Returns a bond array when k = 2."""
    g = cg.graph
    z = cg.zeta
    out = {}
    for p, v in K.items():
        q = p[1:]
        out[q] = out.get(q, 0.0) - np.conj(z[p[0] ^ 1]) * v
        q = p[:-1]
        out[q] = out.get(q, 0.0) - v * z[p[-1]]
    if k == 2:
        arr = np.zeros(g.nb, dtype=complex)
        for q, v in out.items():
            arr[q[0]] = v
        return arr
    return out


def op_P_k(cg, K, k):
    """Two-bond contraction: conj(zeta(rev b1)) K zeta(b_k) summed over the
    outer bonds; lands on (k-2)-paths, i.e. on vertices when k = 2."""
    g = cg.graph
    z = cg.zeta
    if k == 2:
        out = np.zeros(g.nv, dtype=complex)
        for (b1, b2), v in K.items():
            out[g.terminus[b1]] += np.conj(z[b1 ^ 1]) * v * z[b2]
        return out
    if k == 3:
        out = np.zeros(g.nb, dtype=complex)
        for p, v in K.items():
            out[p[1]] += np.conj(z[p[0] ^ 1]) * v * z[p[-1]]
        return out
    out = {}
    for p, v in K.items():
        q = p[1:-1]
        out[q] = out.get(q, 0.0) + np.conj(z[p[0] ^ 1]) * v * z[p[-1]]
    return out


def n_gamma(cg):
    """Vertex weights N(v) = Im g(v, v)."""
    return cg.g_vertex.imag


def p_gamma_apply(Q, cg, J):
    """(P_gamma J)(v) = (1/N(v)) sum_{w ~ v} N(w) J(w)/d(w)."""
    g = Q.graph
    N = n_gamma(cg)
    vals = (N * np.asarray(J, dtype=complex) / g.degree)[g.terminus]
    out = np.zeros(g.nv, dtype=complex)
    np.add.at(out, g.origin, vals)
    return out / N


def s_T_apply(Q, cg, J, T):
    """(1/T) sum_{s=0}^{T-1} (T-s) P_gamma^s J."""
    acc = np.zeros(Q.graph.nv, dtype=complex)
    cur = np.asarray(J, dtype=complex)
    for s in range(T):
        acc += (T - s) * cur
        cur = p_gamma_apply(Q, cg, cur)
    return acc / T


def s_T_tilde_apply(Q, cg, J, T):
    """(1/T) sum_{s=1}^{T} P_gamma^s J."""
    acc = np.zeros(Q.graph.nv, dtype=complex)
    cur = np.asarray(J, dtype=complex)
    for _ in range(T):
        cur = p_gamma_apply(Q, cg, cur)
        acc += cur
    return acc / T


def l_gamma_apply(Q, cg, J, opts=DEFAULTS):
    """Bond observable feeding the non-backtracking variance in the
    vertex-to-bond reduction:

    (L J)(b) = S_lam^2 |g(t_b,t_b)|^2 (1 + conj(zeta(b)) zeta(rev b))
               / (Re S_gamma(L_b) |zeta(b)|^2)
               * (J(t_b)/N(o_b) - J(o_b)/N(t_b))."""
    g = Q.graph
    rev = np.arange(g.nb) ^ 1
    _, _, SLr_, _ = Q.bond_boundary(cg.gamma.real, opts)
    SLr = SLr_.real
    N = n_gamma(cg)
    J = np.asarray(J, dtype=complex)
    front = (SLr ** 2 * np.abs(cg.g_vertex[g.terminus]) ** 2
             * (1.0 + np.conj(cg.zeta) * cg.zeta[rev])
             / (cg.SL.real * np.abs(cg.zeta) ** 2))
    return front * (J[g.terminus] / N[g.origin] - J[g.origin] / N[g.terminus])


def e_gamma_apply(Q, cg, J, opts=DEFAULTS):
    """Vertex error operator carrying the Im S_gamma(L_b) = O(eta) factor."""
    g = Q.graph
    N = n_gamma(cg)
    J = np.asarray(J, dtype=complex)
    w = cg.SL.imag * cg.g_vertex[g.terminus].real / cg.SL.real
    vals = w * (J[g.terminus] / N[g.origin] - J[g.origin] / N[g.terminus])
    out = np.zeros(g.nv, dtype=complex)
    np.add.at(out, g.origin, vals)
    return out


def reduction_operators(Q, cg, J, T, opts=DEFAULTS):
    """Images of a vertex observable under the full reduction family."""
    return {
        "P": p_gamma_apply(Q, cg, J),
        "S_T": s_T_apply(Q, cg, J, T),
        "S_T_tilde": s_T_tilde_apply(Q, cg, J, T),
        "L": l_gamma_apply(Q, cg, J, opts),
        "E": e_gamma_apply(Q, cg, J, opts),
    }


# ---------------------------------------------------------------------------
# the lift-ladder experiment

@dataclass
class VarianceReport:
    fold: int
    seed: int
    eta0: float
    observable: str
    window: tuple
    lams: list
    matrix_elements: list
    brackets: list
    terms: list
    cesaro: float
    n_terms: int
    beta: float
    census: dict
    runtime: float
    error: str = ""


@dataclass
class ExperimentConfig:
    base_graph: object
    base_lengths: object = 1.0
    base_potentials: object = None
    base_alpha: object = 0.0
    folds: tuple = (1, 2, 4, 8)
    seeds: tuple = (1, 2, 3)
    eta0s: tuple = (0.05,)
    observables: tuple = ()          # Observable on the BASE graph, lifted per fold
    interval: tuple = (2.5, 5.5)
    opts: object = DEFAULTS
    margin_min: float = 1e-3


def _run_cell(cfg, fold, seed):
    """One (fold, seed) cell: lift, screen, spectrum, then per (eta0,
    observable) the variance terms."""
    from .edges import ZERO_POTENTIAL
    t0 = time.time()
    base_q = qgraph(cfg.base_graph, cfg.base_lengths,
                    cfg.base_potentials or ZERO_POTENTIAL, cfg.base_alpha)
    lift = random_n_lift(cfg.base_graph, fold, seed)
    Q = lift_qgraph(lift, base_q)
    beta = spectral_gap(lift.graph)
    census = bst_census(lift.graph)
    dmin, _, _ = dirichlet_distance(Q, cfg.interval, grid=512, opts=cfg.opts)
    reports = []
    if dmin < cfg.margin_min:
        for eta0 in cfg.eta0s:
            for f in cfg.observables:
                reports.append(VarianceReport(
                    fold=fold, seed=seed, eta0=eta0, observable=f.name,
                    window=cfg.interval, lams=[], matrix_elements=[], brackets=[],
                    terms=[], cesaro=float("nan"), n_terms=0, beta=beta,
                    census=census, runtime=time.time() - t0,
                    error=f"window too close to Dirichlet set (distance {dmin:.2e})"))
        return reports
    ss = eigenvalues_in(Q, cfg.interval, cfg.opts)
    for eta0 in cfg.eta0s:
        cache = CoverCache(Q, eta0, cfg.opts)
        for f in cfg.observables:
            t1 = time.time()
            flift = f.lifted(lift)
            lams, mels, brs, terms = [], [], [], []
            err = ""
            try:
                for j, pair in enumerate(ss.pairs):
                    cg = cache.at(pair.lam)
                    mel = matrix_element(Q, ss, j, flift, cfg.opts)
                    br = bracket_f(Q, cg, flift, cfg.opts)
                    lams.append(pair.lam)
                    mels.append(mel)
                    brs.append(br)
                    terms.append(abs(mel - br))
                cesaro = float(np.mean(terms)) if terms else float("nan")
            except Exception as exc:   # noqa: BLE001 - a cell failure must not kill the run
                cesaro = float("nan")
                err = f"{type(exc).__name__}: {exc}"
            reports.append(VarianceReport(
                fold=fold, seed=seed, eta0=eta0, observable=f.name,
                window=cfg.interval, lams=lams, matrix_elements=mels,
                brackets=brs, terms=terms, cesaro=cesaro, n_terms=len(terms),
                beta=beta, census=census, runtime=time.time() - t1, error=err))
    return reports


def variance_experiment(cfg, out_dir=None, threads=1):
    """Run the full (fold x seed x eta0 x observable) grid; returns the
    reports and optionally writes report.csv / summary.json."""
    cells = [(fold, seed) for fold in cfg.folds for seed in cfg.seeds]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_cell_entry, [(cfg, f, s) for f, s in cells]))
    else:
        chunks = [_run_cell(cfg, f, s) for f, s in cells]
    reports = [r for chunk in chunks for r in chunk]
    reports.sort(key=lambda r: (r.fold, r.seed, r.eta0, r.observable))
    if out_dir is not None:
        write_report_csv(reports, f"{out_dir}/report.csv")
        write_summary_json(reports, f"{out_dir}/summary.json")
    return reports


def _cell_entry(args):
    cfg, fold, seed = args
    return _run_cell(cfg, fold, seed)


def _fmt(x):
    return f"{x:.17g}"


def write_report_csv(reports, path):
    cols = ["kind", "fold", "seed", "eta0", "observable", "j", "lambda",
            "matrix_element", "bracket", "term", "cesaro", "n_terms"]
    lines = [",".join(cols)]
    for r in reports:
        for j, (lam, mel, br, term) in enumerate(zip(r.lams, r.matrix_elements,
                                                     r.brackets, r.terms)):
            lines.append(",".join(["term", str(r.fold), str(r.seed), _fmt(r.eta0),
                                   r.observable, str(j), _fmt(lam), _fmt(mel),
                                   _fmt(br), _fmt(term), "", ""]))
        lines.append(",".join(["summary", str(r.fold), str(r.seed), _fmt(r.eta0),
                               r.observable, "", "", "", "",
                               "", _fmt(r.cesaro), str(r.n_terms)]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(reports, path):
    payload = []
    for r in reports:
        payload.append({
            "fold": r.fold, "seed": r.seed, "eta0": r.eta0,
            "observable": r.observable, "window": list(r.window),
            "cesaro": r.cesaro, "n_terms": r.n_terms, "beta": r.beta,
            "bst_census": r.census, "runtime_s": r.runtime, "error": r.error,
        })
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)

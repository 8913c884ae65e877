"""Cauchy solution bases of -psi'' + W psi = gamma psi on a single edge.

``C`` and ``S`` are the solutions with (C, C')(0) = (1, 0) and
(S, S')(0) = (0, 1); for W = 0 they are cos(sqrt(gamma) x) and
sin(sqrt(gamma) x)/sqrt(gamma).  Potentials are finite cosine series
W(x) = sum_k a_k cos(2 pi k x / L), which are symmetric about the edge
midpoint by construction; that symmetry is what makes S'(L) = C(L) and the
reflection relations

    S(L) C(x) - C(L) S(x) = S(L - x)
    S'(L) C(x) - C'(L) S(x) = C(L - x)

hold, and the whole vertex calculus downstream relies on them.

All integrators work on a batch of energies at once: ``gammas`` may be a
scalar or a 1-d array, and grids come back with shape (n+1, n_energies).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.integrate import simpson


class IntegrationError(RuntimeError):
    """Wronskian defect stayed above tolerance after all step refinements."""


@dataclass(frozen=True)
class PotentialSpec:
    """W(x) = sum_k coeffs[k] * cos(2 pi k x / L); symmetric by construction."""
    coeffs: tuple = ()

    @property
    def is_zero(self):
        return all(c == 0.0 for c in self.coeffs)

    def values(self, x, L):
        w = np.zeros_like(np.asarray(x, dtype=float))
        for k, a in enumerate(self.coeffs):
            if a == 0.0:
                continue
            w = w + a * np.cos(2.0 * np.pi * k * np.asarray(x) / L)
        return w

    def sup_norm(self):
        return float(sum(abs(a) for a in self.coeffs))

    def lipschitz(self, L):
        return float(sum(abs(a) * 2.0 * np.pi * k / L for k, a in enumerate(self.coeffs)))


ZERO_POTENTIAL = PotentialSpec(())


def _closed_grids(L, gammas, n):
    """Exact grids for W = 0, with a series fallback near gamma = 0."""
    gam = np.atleast_1d(np.asarray(gammas, dtype=complex))
    x = np.linspace(0.0, L, n + 1)
    xx = x[:, None]
    small = np.abs(gam) * L * L < 1e-3
    s = np.sqrt(gam)
    with np.errstate(invalid="ignore", divide="ignore"):
        C = np.cos(s[None, :] * xx)
        S = np.sin(s[None, :] * xx) / s[None, :]
    if small.any():
        z = gam[small][None, :] * xx * xx        # gamma x^2
        Cs = np.zeros_like(z)
        Ss = np.zeros_like(z)
        for m in range(8):
            Cs += (-z) ** m / factorial(2 * m)
            Ss += (-z) ** m / factorial(2 * m + 1)
        C[:, small] = Cs
        S[:, small] = xx * Ss
    Cp = -gam[None, :] * S
    Sp = C.copy()
    return x, C, Cp, S, Sp


def _rk4_grids(L, potential, gammas, n, keep_grid=True):
    """Fixed-step RK4 on the first-order system for (C, C', S, S')."""
    gam = np.atleast_1d(np.asarray(gammas, dtype=complex))
    m = len(gam)
    h = L / n
    # stage abscissae 0, h/2, h, ... : 2n+1 potential samples cover them all
    wfine = potential.values(np.linspace(0.0, L, 2 * n + 1), L)
    C = np.ones(m, dtype=complex)
    Cp = np.zeros(m, dtype=complex)
    S = np.zeros(m, dtype=complex)
    Sp = np.ones(m, dtype=complex)
    if keep_grid:
        gC = np.empty((n + 1, m), dtype=complex)
        gCp = np.empty_like(gC)
        gS = np.empty_like(gC)
        gSp = np.empty_like(gC)
        gC[0], gCp[0], gS[0], gSp[0] = C, Cp, S, Sp

    def deriv(c, cp, s, sp, w):
        q = w - gam
        return cp, q * c, sp, q * s

    for i in range(n):
        w0, w1, w2 = wfine[2 * i], wfine[2 * i + 1], wfine[2 * i + 2]
        k1 = deriv(C, Cp, S, Sp, w0)
        k2 = deriv(C + 0.5 * h * k1[0], Cp + 0.5 * h * k1[1],
                   S + 0.5 * h * k1[2], Sp + 0.5 * h * k1[3], w1)
        k3 = deriv(C + 0.5 * h * k2[0], Cp + 0.5 * h * k2[1],
                   S + 0.5 * h * k2[2], Sp + 0.5 * h * k2[3], w1)
        k4 = deriv(C + h * k3[0], Cp + h * k3[1], S + h * k3[2], Sp + h * k3[3], w2)
        C = C + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Cp = Cp + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        S = S + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        Sp = Sp + (h / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        if keep_grid:
            gC[i + 1], gCp[i + 1], gS[i + 1], gSp[i + 1] = C, Cp, S, Sp

    if keep_grid:
        return np.linspace(0.0, L, n + 1), gC, gCp, gS, gSp
    return C, Cp, S, Sp


@dataclass
class EdgeBasis:
    """Solution basis on one edge at one energy, sampled on a uniform mesh."""
    gamma: complex
    L: float
    x: np.ndarray
    C: np.ndarray
    Cp: np.ndarray
    S: np.ndarray
    Sp: np.ndarray

    @property
    def n(self):
        return len(self.x) - 1

    @property
    def CL(self):
        return self.C[-1]

    @property
    def CpL(self):
        return self.Cp[-1]

    @property
    def SL(self):
        return self.S[-1]

    @property
    def SpL(self):
        return self.Sp[-1]

    def wronskian_defect(self):
        return float(np.abs(self.C * self.Sp - self.Cp * self.S - 1.0).max())

    def sigma1(self):
        """integral of |S|^2 over the edge (Simpson on the mesh)."""
        return complex(simpson(np.abs(self.S) ** 2, dx=self.L / self.n))

    def sigma2(self):
        """integral of S(L-x) conj(S(x)) over the edge."""
        return complex(simpson(self.S[::-1] * np.conj(self.S), dx=self.L / self.n))

    def simpson(self, values):
        return simpson(values, dx=self.L / self.n, axis=0)


def solve_basis(L, potential, gamma, mesh=512, *, wronskian_tol=1e-10, max_refine=4):
    """Solution basis with the step refined until the Wronskian defect at
    every mesh point is below tolerance.

    W = 0 uses the closed forms (series near gamma = 0); otherwise a
    fixed-step RK4 integration of the 2x2 first-order system.
    """
    if mesh < 16:
        raise ValueError("mesh must be >= 16 points")
    n = int(mesh) + (int(mesh) % 2)
    if potential.is_zero:
        x, C, Cp, S, Sp = _closed_grids(L, gamma, n)
        return EdgeBasis(complex(gamma), float(L), x, C[:, 0], Cp[:, 0], S[:, 0], Sp[:, 0])
    for _ in range(max_refine + 1):
        x, C, Cp, S, Sp = _rk4_grids(L, potential, gamma, n)
        basis = EdgeBasis(complex(gamma), float(L), x, C[:, 0], Cp[:, 0], S[:, 0], Sp[:, 0])
        if basis.wronskian_defect() <= wronskian_tol:
            return basis
        n *= 2
    raise IntegrationError(
        f"Wronskian defect {basis.wronskian_defect():.3e} above {wronskian_tol:.1e} at n={n // 2}")


def cs_boundary(L, potential, gammas, mesh=512, *, wronskian_tol=1e-10, max_refine=4):
    """Boundary data (C, C', S, S') at x = L for a batch of energies."""
    gam = np.atleast_1d(np.asarray(gammas, dtype=complex))
    if potential.is_zero:
        _, C, Cp, S, Sp = _closed_grids(L, gam, 2)
        return C[-1], Cp[-1], S[-1], Sp[-1]
    n = int(mesh) + (int(mesh) % 2)
    for _ in range(max_refine + 1):
        C, Cp, S, Sp = _rk4_grids(L, potential, gam, n, keep_grid=False)
        defect = np.abs(C * Sp - Cp * S - 1.0).max()
        if defect <= wronskian_tol:
            return C, Cp, S, Sp
        n *= 2
    raise IntegrationError(f"boundary Wronskian defect {defect:.3e} at n={n // 2}")

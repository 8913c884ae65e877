"""Numerical knobs shared by the solvers.

Every tolerance that the test suite pins lives here so a call site can
override one knob without rebuilding the rest.
"""
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Options:
    # edge ODE integration
    mesh: int = 512                 # intervals per edge (even, >= 16)
    wronskian_tol: float = 1e-10
    max_refine: int = 4             # step halvings before giving up

    # covering-tree fixed point
    damping: float = 0.5
    damping_floor: float = 0.05
    update_tol: float = 1e-13
    residual_tol: float = 1e-11
    max_sweeps: int = 60000
    eta_min: float = 1e-3           # smallest Im(gamma) accepted
    restarts: int = 3

    # eigenvalue scan
    scan_factor: int = 8            # grid step pi/(scan_factor * total_length * sqrt(lam_max))
    bisect_tol: float = 1e-10       # in lambda
    refine_passes: int = 3
    dirichlet_guard: float = 1e-6   # half-width (in lambda) skipped around Dirichlet values
    cluster_tol: float = 1e-9       # eigenvalues closer than this merge into one multiplet
    kernel_tol: float = 1e-6

    # cover-solution caching for per-eigenvalue energies
    lambda_quantum: float = 1e-6

    def with_(self, **kw):
        return replace(self, **kw)


DEFAULTS = Options()

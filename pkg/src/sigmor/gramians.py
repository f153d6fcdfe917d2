"""Time-limited reachability and observability Gramians.

P integrates the solution of the matrix ODE

    dZ/dt = A0 Z + Z A0^T + sum_i A_i Z A_i^T,   Z(0) = S0 S0^T,

over [0, T]; Q does the same for the adjoint equation seeded with C^T C.
For the nilpotent signature generators the matrix exponential behind Z is
a finite polynomial, so P and Q have exact finite series in powers of the
Lyapunov operator; the ODE route provides an independent cross-check.
Eigenvectors of P with small eigenvalues are state directions the system
barely reaches, eigenvectors of Q with small eigenvalues barely influence
the output; both statements come with exp(||u||^2_{L2}) energy bounds
that the check operations verify by simulation.

The n^2 x n^2 Kronecker form of the Lyapunov operator is never
materialized; everything works on n x n matrices.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .bilinear import (DIVERGENCE_LIMIT, BilinearSystem, Trajectory,
                       integration_order, output, simulate)
from .errors import DivergenceError, NonNilpotentSystemError, UnlearnedSystemError
from .grids import grid_step

# Residual tolerance (relative to the largest series term) for declaring
# the Lyapunov series terminated.
_SERIES_TOL = 1e-10

# Multiplicative slack for the energy-bound flags, plus an absolute floor
# so structurally-zero eigendirections (rhs exactly 0) pass on roundoff.
BOUND_RTOL = 1e-6
BOUND_ABS_SLACK = 1e-10


@dataclass
class GramianPair:
    """Reachability P and observability Q on [0, horizon]."""

    P: np.ndarray
    Q: np.ndarray
    horizon: float
    method: str  # "series" or "ode"


def _symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def lyapunov_apply(A: list, X: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """L(X) = A0 X + X A0^T + sum_i A_i X A_i^T, or its adjoint
    L*(X) = A0^T X + X A0 + sum_i A_i^T X A_i."""
    X = np.asarray(X, dtype=float)
    n = A[0].shape[0]
    if X.shape != (n, n):
        raise ValueError(f"X has shape {X.shape}, expected {(n, n)}")
    mats = [Ai.T if adjoint else Ai for Ai in A]
    A0 = mats[0]
    out = A0 @ X
    out = out + (A0 @ X.T).T
    for Ai in mats[1:]:
        out = out + Ai @ (Ai @ X.T).T
    return np.asarray(out)


def gramian_series(sys: BilinearSystem, N: int, T: float) -> GramianPair:
    """Exact finite-series Gramians for generators nilpotent of order N+1.

    P = sum_{j=0}^{2N} T^{j+1}/(j+1)! L^j(S0 S0^T) and likewise Q with
    the adjoint operator seeded with C^T C. Each operator application is
    symmetrized to suppress floating-point drift. Fails if the series
    has not terminated after 2N+1 terms.
    """
    if sys.C is None:
        raise UnlearnedSystemError(
            "observability Gramian needs an output matrix C")
    seeds = (_symmetrize(sys.S0 @ sys.S0.T), _symmetrize(sys.C.T @ sys.C))
    results = []
    for seed, adjoint in zip(seeds, (False, True)):
        term = seed
        total = T * term
        peak = float(np.linalg.norm(term))
        for j in range(1, 2 * N + 1):
            term = _symmetrize(lyapunov_apply(sys.A, term, adjoint=adjoint))
            peak = max(peak, float(np.linalg.norm(term)))
            total = total + (T**(j + 1) / math.factorial(j + 1)) * term
        tail = lyapunov_apply(sys.A, term, adjoint=adjoint)
        if float(np.linalg.norm(tail)) > _SERIES_TOL * max(peak, 1e-300):
            raise NonNilpotentSystemError(
                f"Lyapunov series term {2 * N + 1} has norm "
                f"{np.linalg.norm(tail):.3e}; generators are not nilpotent "
                f"of order {N + 1}")
        results.append(_symmetrize(total))
    return GramianPair(P=results[0], Q=results[1], horizon=float(T),
                       method="series")


def gramian_ode(sys: BilinearSystem, T: float, steps: int) -> GramianPair:
    """Gramians by RK4 integration of the matrix ODEs for Z and Z*, with
    the time integral accumulated by the trapezoid rule on the same grid."""
    if sys.C is None:
        raise UnlearnedSystemError(
            "observability Gramian needs an output matrix C")
    if steps < 100:
        raise ValueError(f"need at least 100 steps, got {steps}")
    h = float(T) / steps
    results = []
    for seed, adjoint in zip(
            (_symmetrize(sys.S0 @ sys.S0.T), _symmetrize(sys.C.T @ sys.C)),
            (False, True)):
        Z = seed
        acc = 0.5 * Z
        for step in range(steps):
            k1 = lyapunov_apply(sys.A, Z, adjoint)
            k2 = lyapunov_apply(sys.A, Z + 0.5 * h * k1, adjoint)
            k3 = lyapunov_apply(sys.A, Z + 0.5 * h * k2, adjoint)
            k4 = lyapunov_apply(sys.A, Z + h * k3, adjoint)
            Z = _symmetrize(Z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            peak = float(np.max(np.abs(Z)))
            if not peak <= DIVERGENCE_LIMIT:
                raise DivergenceError(step + 1, (step + 1) * h, peak)
            acc = acc + (0.5 * Z if step == steps - 1 else Z)
        results.append(_symmetrize(h * acc))
    return GramianPair(P=results[0], Q=results[1], horizon=float(T),
                       method="ode")


@dataclass
class EnergyBoundReport:
    """One evaluation of a Gramian energy inequality."""

    lhs: float
    rhs: float
    eigenvalue: float
    satisfied: bool


def _flag(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1.0 + BOUND_RTOL) + BOUND_ABS_SLACK


def reachability_energy_check(sys: BilinearSystem, u, eigvec: np.ndarray,
                              eigval: float,
                              substeps: int = 1) -> EnergyBoundReport:
    """Check int_0^T <S(t), p>^2 dt <= lambda exp(||u||^2_{L2}) ||v||^2
    for an eigenpair (lambda, p) of the reachability Gramian.

    The left side is simulated and integrated by trapezoid; the right
    side is closed form.
    """
    traj = simulate(sys, u, substeps=substeps)
    dt = grid_step(traj.grid)
    proj = traj.values @ np.asarray(eigvec, dtype=float)
    lhs = float(np.trapezoid(proj**2, dx=dt))
    rhs = float(eigval) * math.exp(u.l2_norm_sq()) * float(sys.v @ sys.v)
    return EnergyBoundReport(lhs=lhs, rhs=rhs, eigenvalue=float(eigval),
                             satisfied=_flag(lhs, rhs))


def observability_energy_check(sys: BilinearSystem, u, eigvec: np.ndarray,
                               eigval: float, t0: float,
                               substeps: int = 1) -> EnergyBoundReport:
    """Check int_{t0}^T ||C Phi(t, t0) q||^2 dt <= mu exp(||u||^2_{L2})
    for an eigenpair (mu, q) of the observability Gramian.

    C Phi(t, t0) q is realized by restarting the simulation at t0 from
    the state q (t0 snaps to the nearest grid point); the fundamental
    solution is never formed. The right side uses the control's L2 norm
    over the whole horizon.
    """
    if sys.C is None:
        raise UnlearnedSystemError("observability check needs C")
    grid = np.asarray(u.grid, dtype=float)
    if not 0.0 <= t0 < grid[-1]:
        raise ValueError(f"restart time {t0} outside [0, T)")
    j0 = int(np.argmin(np.abs(grid - t0)))
    if j0 >= grid.shape[0] - 1:
        raise ValueError(f"restart time {t0} too close to the horizon")
    tail = ControlView(grid[j0:], u.samples[j0:], u.kind)
    traj = simulate(sys, tail, substeps=substeps,
                    initial=np.asarray(eigvec, dtype=float))
    out = output(sys, traj)
    dt = grid_step(grid)
    lhs = float(np.trapezoid(np.sum(out.values**2, axis=1), dx=dt))
    rhs = float(eigval) * math.exp(u.l2_norm_sq())
    return EnergyBoundReport(lhs=lhs, rhs=rhs, eigenvalue=float(eigval),
                             satisfied=_flag(lhs, rhs))


@dataclass
class ControlView:
    """Duck-typed slice of a control signal (for restarted simulations)."""

    grid: np.ndarray
    samples: np.ndarray
    kind: str


def symmetric_spectrum(M: np.ndarray) -> tuple:
    """(eigenvalues ascending, orthonormal eigenvectors) of a symmetric
    matrix; thin wrapper so the eigensolver contract lives in one place."""
    vals, vecs = np.linalg.eigh(_symmetrize(np.asarray(M, dtype=float)))
    return vals, vecs


def check_gramian_pair(pair: GramianPair, rtol: float = 1e-12,
                       psd_tol: float = 1e-10) -> None:
    """Validate symmetry and numerical positive semidefiniteness."""
    for name, M in (("P", pair.P), ("Q", pair.Q)):
        scale = max(float(np.linalg.norm(M)), 1e-300)
        if np.linalg.norm(M - M.T) > rtol * scale:
            raise ValueError(f"{name} is not symmetric to tolerance")
        spectrum_floor = float(np.min(np.linalg.eigvalsh(_symmetrize(M))))
        if spectrum_floor < -psd_tol * float(np.linalg.norm(M, 2) + 1e-300):
            raise ValueError(
                f"{name} has eigenvalue {spectrum_floor:.3e}; not numerically PSD")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_gramian_csv(M: np.ndarray, path) -> None:
    """Dense CSV rows of a Gramian."""
    with open(path, "w") as fh:
        for row in np.atleast_2d(M):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_spectrum_csv(values: np.ndarray, path) -> None:
    """Two-column CSV (1-based index, eigenvalue)."""
    with open(path, "w") as fh:
        fh.write("index,value\n")
        for i, x in enumerate(np.asarray(values, dtype=float), start=1):
            fh.write(f"{i},{_fmt(x)}\n")

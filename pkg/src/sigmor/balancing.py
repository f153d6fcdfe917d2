"""Balancing transformation, Hankel values, reduced-order models.

Given the time-limited Gramians P and Q, the transform

    T = Sigma^{1/2} V^T L_P^+,    T_inv = L_P V Sigma^{-1/2},

with L_P a spectral square-root factor of P and L_P^T Q L_P = V Sigma^2 V^T,
makes both Gramians equal to diag(sigma). The signature Gramians are
numerically rank-deficient, so L_P keeps only eigenvalues above a relative
threshold and the transform rows are formed only for Hankel values above
the same relative threshold; all identities are asserted on that retained
subspace. Truncating the balanced state to its leading r components gives
the reduced model coefficients as leading blocks of T A_i T_inv, T S0 and
C T_inv.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .bilinear import BilinearSystem
from .errors import RankDeficiencyWarning

# Eigenvalues of P (and squared Hankel values) below this relative
# threshold are treated as numerically zero.
RANK_RTOL = 1e-12

_SYMMETRY_RTOL = 1e-10


@dataclass
class BalancingTransform:
    """Balancing rows for the numerically definite subspace.

    T_mat is (r_eff, n), T_inv is (n, r_eff) with T_mat @ T_inv = I.
    sigma holds all computed Hankel values (descending, clamped at 0),
    including the tail below the retention threshold.
    """

    T_mat: np.ndarray
    T_inv: np.ndarray
    sigma: np.ndarray

    @property
    def effective_rank(self) -> int:
        return self.T_mat.shape[0]


@dataclass
class BalancedReduction:
    """A balancing transform together with one truncated model."""

    T_mat: np.ndarray
    T_inv: np.ndarray
    sigma: np.ndarray
    r: int
    reduced: BilinearSystem


def _require_symmetric(name: str, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(float(np.linalg.norm(M)), 1e-300)
    if float(np.linalg.norm(M - M.T)) > _SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def balance(P: np.ndarray, Q: np.ndarray,
            rank_rtol: float = RANK_RTOL) -> BalancingTransform:
    """Simultaneous diagonalization of a symmetric PSD Gramian pair.

    L_P comes from the spectral square root of P with eigenvalues below
    rank_rtol * lambda_max clipped to zero; V and Sigma^2 from the
    symmetric eigendecomposition of L_P^T Q L_P. T_inv is formed
    analytically as L_P V Sigma^{-1/2} rather than by inversion. The
    squared retained Hankel values are eigenvalues of P Q.
    """
    P = _require_symmetric("P", P)
    Q = _require_symmetric("Q", Q)
    if P.shape != Q.shape:
        raise ValueError(f"P and Q differ in size: {P.shape} vs {Q.shape}")
    n = P.shape[0]

    lam, U = np.linalg.eigh(P)
    lam = lam[::-1].copy()
    U = U[:, ::-1].copy()
    lam_max = max(float(lam[0]), 0.0)
    kp = int(np.sum(lam > rank_rtol * lam_max)) if lam_max > 0 else 0
    if kp == 0:
        warnings.warn("P is numerically zero; empty balancing transform",
                      RankDeficiencyWarning)
        return BalancingTransform(T_mat=np.zeros((0, n)),
                                  T_inv=np.zeros((n, 0)),
                                  sigma=np.zeros(0))
    root = np.sqrt(lam[:kp])
    L_P = U[:, :kp] * root           # n x kp spectral square-root factor
    L_P_pinv = (U[:, :kp] / root).T  # kp x n

    M = L_P.T @ Q @ L_P
    s2, V = np.linalg.eigh(0.5 * (M + M.T))
    s2 = np.maximum(s2[::-1], 0.0)
    V = V[:, ::-1]
    sigma = np.sqrt(s2)

    keep = int(np.sum(s2 > rank_rtol * s2[0])) if s2[0] > 0 else 0
    if keep == 0:
        warnings.warn("P Q is numerically zero; empty balancing transform",
                      RankDeficiencyWarning)
        return BalancingTransform(T_mat=np.zeros((0, n)),
                                  T_inv=np.zeros((n, 0)), sigma=sigma)
    if keep < n:
        warnings.warn(
            f"rank-deficient Gramian pair: effective rank {keep} of {n}",
            RankDeficiencyWarning)
    root_sigma = np.sqrt(sigma[:keep])
    T_mat = (root_sigma[:, None] * V[:, :keep].T) @ L_P_pinv
    T_inv = (L_P @ V[:, :keep]) / root_sigma
    return BalancingTransform(T_mat=T_mat, T_inv=T_inv, sigma=sigma)


def reduce(sys: BilinearSystem, bal: BalancingTransform, r: int) -> BilinearSystem:
    """Truncate the balanced system to its leading r components.

    The reduced coefficients are the leading blocks of the
    similarity-transformed system: A_i -> (T A_i T_inv)[:r, :r],
    S0 -> (T S0)[:r], C -> (C T_inv)[:, :r].
    """
    if not 1 <= r <= bal.effective_rank:
        raise ValueError(
            f"requested order {r} exceeds the effective rank "
            f"{bal.effective_rank} of the balanced Gramians")
    Tr = bal.T_mat[:r]
    Ti = bal.T_inv[:, :r]
    A_red = [Tr @ (Ai.toarray() if sparse.issparse(Ai) else Ai) @ Ti
             for Ai in sys.A]
    C_red = None if sys.C is None else sys.C @ Ti
    return BilinearSystem(A=A_red, S0=Tr @ sys.S0, v=sys.v.copy(), C=C_red)


def balance_and_reduce(sys: BilinearSystem, P: np.ndarray, Q: np.ndarray,
                       r: int) -> BalancedReduction:
    bal = balance(P, Q)
    reduced = reduce(sys, bal, r)
    return BalancedReduction(T_mat=bal.T_mat, T_inv=bal.T_inv,
                             sigma=bal.sigma, r=r, reduced=reduced)


def hankel_report(sigma: np.ndarray) -> list:
    """Rows (1-based index, sigma_i, sigma_i / sigma_1)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0:
        raise ValueError("empty Hankel value vector")
    top = sigma[0] if sigma[0] > 0 else 1.0
    return [(i + 1, float(s), float(s / top)) for i, s in enumerate(sigma)]


def write_hankel_csv(sigma: np.ndarray, path) -> None:
    rows = hankel_report(sigma)
    with open(path, "w") as fh:
        fh.write("index,sigma,sigma_rel\n")
        for i, s, rel in rows:
            fh.write(f"{i},{s:.17g},{rel:.17g}\n")

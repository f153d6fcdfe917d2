"""Truncated signatures of time-augmented control integrals.

The signature of the path Uhat(t) = (t, U(t)) with U the running integral
of a control u collects all iterated integrals

    int ... int_{0 < s_1 < ... < s_k < t} dUhat_{w_1}(s_1) ... dUhat_{w_k}(s_k)

indexed by words w over channels {0, ..., m_ch - 1}, channel 0 being time.
Entries are stacked level-major, lexicographic within a level, which makes
the level-k -> level-(k+1) transition a Kronecker append and the whole
truncated signature the solution of a bilinear system with sparse
nilpotent generator matrices.

Two independent evaluation routes are provided: `compute_signature`
(time-stepping of the bilinear system) and `quadrature_oracle_signature`
(direct nested quadrature of one word), used to cross-check each other.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .bilinear import BilinearSystem, Trajectory, simulate
from .errors import OracleConvergenceError

# Above this the generator matrices no longer fit sensible memory.
_MAX_DIMENSION = 2**31 - 1

ORACLE_MAX_LEVEL = 4
ORACLE_RTOL = 1e-9
# Tolerance for the Richardson-extrapolated refinement sequence; the
# extrapolation removes the h^2 trapezoid term so small entries are
# resolved in relative rather than absolute terms.
_ORACLE_EXTRAP_RTOL = 1e-12
_ORACLE_MAX_REFINEMENTS = 8


def signature_dimension(m_ch: int, N: int) -> int:
    """Length sum_{k=0}^{N} m_ch^k of the truncated signature vector."""
    if m_ch < 1:
        raise ValueError(f"channel count must be >= 1, got {m_ch}")
    if N < 0:
        raise ValueError(f"truncation order must be >= 0, got {N}")
    n = sum(m_ch**k for k in range(N + 1))
    if n > _MAX_DIMENSION:
        raise OverflowError(
            f"signature dimension {n} for (m_ch={m_ch}, N={N}) is too large")
    return n


def level_offset(m_ch: int, level: int) -> int:
    """Flat offset of the first level-`level` word."""
    return signature_dimension(m_ch, level - 1) if level > 0 else 0


@dataclass(frozen=True)
class WordIndex:
    """One iterated-integral entry: its level, letters and flat position."""

    level: int
    letters: tuple
    flat_offset: int


def words(m_ch: int, N: int) -> list:
    """All words up to level N, level-major and lexicographic within level."""
    out = []
    offset = 0
    for k in range(N + 1):
        for letters in itertools.product(range(m_ch), repeat=k):
            out.append(WordIndex(level=k, letters=letters, flat_offset=offset))
            offset += 1
    return out


def word_offset(letters, m_ch: int) -> int:
    """Flat position of a single word given by its letter sequence."""
    letters = tuple(letters)
    k = len(letters)
    idx = 0
    for letter in letters:
        if not 0 <= letter < m_ch:
            raise ValueError(f"letter {letter} outside 0..{m_ch - 1}")
        idx = idx * m_ch + letter
    return level_offset(m_ch, k) + idx


def build_generator_matrices(m_ch: int, N: int, dtype=float) -> list:
    """The m_ch sparse generator matrices of the truncated-signature system.

    A_i moves the level-k block to the level-(k+1) block by appending
    letter i: entry (off_{k+1} + j*m_ch + i, off_k + j) = 1 for every
    level-k word index j. Row 0 is zero, columns past the level-(N-1)
    blocks are zero, and any product of N+1 generators vanishes.
    """
    if m_ch < 1:
        raise ValueError(f"channel count must be >= 1, got {m_ch}")
    if N < 1:
        raise ValueError(f"truncation order must be >= 1, got {N}")
    n = signature_dimension(m_ch, N)
    mats = []
    for i in range(m_ch):
        rows = []
        cols = []
        for k in range(N):
            off_k = level_offset(m_ch, k)
            off_next = level_offset(m_ch, k + 1)
            j = np.arange(m_ch**k, dtype=np.int64)
            cols.append(off_k + j)
            rows.append(off_next + j * m_ch + i)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.ones(len(rows), dtype=dtype)
        mats.append(sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    return mats


@dataclass
class SignatureVector:
    """A truncated signature value; data[0] is always exactly 1."""

    m_ch: int
    N: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        n = signature_dimension(self.m_ch, self.N)
        if self.data.shape != (n,):
            raise ValueError(
                f"signature data has shape {self.data.shape}, expected ({n},)")
        if self.data[0] != 1.0:
            raise ValueError("zeroth signature entry must be exactly 1")

    @classmethod
    def trivial(cls, m_ch: int, N: int) -> "SignatureVector":
        data = np.zeros(signature_dimension(m_ch, N))
        data[0] = 1.0
        return cls(m_ch, N, data)

    def level_block(self, k: int) -> np.ndarray:
        off = level_offset(self.m_ch, k)
        return self.data[off:off + self.m_ch**k]


@dataclass
class SignatureSystem(BilinearSystem):
    """The universal bilinear system solved by the truncated signature.

    Channel 0 of the generators is the time channel and enters as the
    drift; channels 1..m_ch-1 couple to the control inputs. The initial
    state is the first unit vector.
    """

    m_ch: int = 0
    N: int = 0


def signature_system(m_ch: int, N: int, C: np.ndarray | None = None) -> SignatureSystem:
    n = signature_dimension(m_ch, N)
    s0 = np.zeros((n, 1))
    s0[0, 0] = 1.0
    return SignatureSystem(A=build_generator_matrices(m_ch, N),
                           S0=s0, v=np.ones(1), C=C, m_ch=m_ch, N=N)


@dataclass
class SignatureTrajectory(Trajectory):
    """Trajectory of truncated signatures S(t_j) = S^N_{0,t_j}(Uhat)."""

    m_ch: int = 0
    N: int = 0

    def at(self, index: int) -> SignatureVector:
        return SignatureVector(self.m_ch, self.N, self.values[index])


def compute_signature(u, N: int, substeps: int = 1) -> SignatureTrajectory:
    """Signature trajectory of the time-augmented running integral of u.

    Integrates the generator bilinear system from the first unit vector
    with the scheme matching the control kind (RK4 for smooth sampled
    controls, left-point Euler for white-noise realizations), so the
    level-1 block reproduces (t, running quadrature of u) exactly.
    """
    m_ch = u.samples.shape[1] + 1
    sys = signature_system(m_ch, N)
    traj = simulate(sys, u, substeps=substeps)
    return SignatureTrajectory(grid=traj.grid, values=traj.values,
                               m_ch=m_ch, N=N)


def signature_batch(sys: SignatureSystem, grid, u_batch,
                    order: int = 4, substeps: int = 1) -> np.ndarray:
    """Batched variant used by the learning pipeline; see simulate_batch."""
    from .bilinear import simulate_batch
    return simulate_batch(sys, grid, u_batch, order=order, substeps=substeps)


def chen_concatenate(Sa: SignatureVector, Sb: SignatureVector) -> SignatureVector:
    """Concatenation product: level-k of the result is
    sum_j (level-j of Sa) kron (level-(k-j) of Sb)."""
    if (Sa.m_ch, Sa.N) != (Sb.m_ch, Sb.N):
        raise ValueError(
            f"incompatible signatures: ({Sa.m_ch}, {Sa.N}) vs ({Sb.m_ch}, {Sb.N})")
    m_ch, N = Sa.m_ch, Sa.N
    out = np.zeros_like(Sa.data)
    for k in range(N + 1):
        block = np.zeros(m_ch**k)
        for j in range(k + 1):
            block += np.kron(Sa.level_block(j), Sb.level_block(k - j))
        off = level_offset(m_ch, k)
        out[off:off + m_ch**k] = block
    return SignatureVector(m_ch, N, out)


def _cumulative_trapezoid(y: np.ndarray, dr: float) -> np.ndarray:
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * dr * (y[1:] + y[:-1]), out=out[1:])
    return out


def quadrature_oracle_signature(u, word, T: float) -> float:
    """One signature entry by direct nested quadrature, independent of the
    ODE route.

    The control is understood as the piecewise-linear interpolant of its
    samples; the nested integral over the simplex 0 < s_1 < ... < s_k < T
    is evaluated by composite-trapezoid recursion on successively
    refined subdivisions of the sample grid until two refinements agree
    to a relative tolerance.
    """
    letters = word.letters if isinstance(word, WordIndex) else tuple(word)
    if len(letters) > ORACLE_MAX_LEVEL:
        raise ValueError(
            f"oracle supports words up to level {ORACLE_MAX_LEVEL}, "
            f"got level {len(letters)}")
    m = u.samples.shape[1]
    if any(not 0 <= c <= m for c in letters):
        raise ValueError(f"word letters must lie in 0..{m}")
    grid = np.asarray(u.grid, dtype=float)
    if not 0.0 < T <= grid[-1] * (1 + 1e-12):
        raise ValueError(f"horizon {T} outside the control's grid")
    T = min(float(T), float(grid[-1]))
    if len(letters) == 0:
        return 1.0

    base_cells = max(int(round((len(grid) - 1) * T / grid[-1])), 8)
    previous = None
    extrapolated_prev = None
    for refine in range(_ORACLE_MAX_REFINEMENTS):
        cells = base_cells * 2**refine
        s = np.linspace(0.0, T, cells + 1)
        dr = s[1] - s[0]
        g = np.ones_like(s)
        for letter in letters:
            weight = 1.0 if letter == 0 else np.interp(s, grid, u.samples[:, letter - 1])
            g = _cumulative_trapezoid(g * weight, dr)
        value = float(g[-1])
        if previous is not None:
            # halving the step divides the trapezoid error by 4, so this
            # cancels the leading error term of the refinement sequence
            extrapolated = value + (value - previous) / 3.0
            plain_ok = abs(value - previous) <= ORACLE_RTOL * max(1.0, abs(value))
            if extrapolated_prev is not None and plain_ok and \
                    abs(extrapolated - extrapolated_prev) <= \
                    _ORACLE_EXTRAP_RTOL * max(1.0, abs(extrapolated)):
                return extrapolated
            extrapolated_prev = extrapolated
        previous = value
    raise OracleConvergenceError(
        f"iterated integral for word {letters} did not converge after "
        f"{_ORACLE_MAX_REFINEMENTS} refinements (last value {previous:.6e})")

"""Bilinear control systems and their simulation.

A system is

    dS/dt = A[0] S + sum_{i=1}^{m} A[i] S u_i(t),   S(0) = S0 @ v,
    y(t)  = C S(t),

with the drift matrix stored as channel 0 of `A`. The same container holds
the sparse high-dimensional systems produced by the signature construction
and the small dense reduced-order models; the time stepper dispatches on
the storage type. Integration is fixed-step: classical RK4 with the
control interpolated linearly inside each grid cell for smooth controls,
left-point Euler for piecewise-constant white-noise controls.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import _kernels
from .errors import UnlearnedSystemError
from .grids import grid_step, grids_match

# Abort integration once any state entry exceeds this magnitude; the
# systems here are unstable by construction and bad configurations must
# fail loudly rather than overflow silently.
DIVERGENCE_LIMIT = 1e12

_TRANSFORM_RTOL = 1e-10


def integration_order(kind: str) -> int:
    """Scheme order for a control kind: 1 (left-point Euler) for
    white-noise realizations, 4 (RK4) otherwise."""
    return 1 if kind == "white_noise" else 4


@dataclass
class Trajectory:
    """Samples of a vector-valued function of time on a uniform grid.

    values has one row per grid point; columns are state/output entries.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        grid_step(self.grid)
        if self.values.shape[0] != self.grid.shape[0]:
            raise ValueError(
                f"values have {self.values.shape[0]} rows but the grid has "
                f"{self.grid.shape[0]} points")

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class BilinearSystem:
    """Bilinear system with an initial-state subspace.

    A: list of m+1 square matrices (dense ndarray or scipy sparse), A[0]
       is the drift channel.
    S0: (dim, k) matrix whose columns span the initial-state subspace.
    v: (k,) coefficient vector; the initial state is S0 @ v.
    C: optional (p, dim) output matrix.
    """

    A: list
    S0: np.ndarray
    v: np.ndarray
    C: np.ndarray | None = None
    _kernel_args: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.A:
            raise ValueError("need at least the drift matrix A[0]")
        n = self.A[0].shape[0]
        for i, Ai in enumerate(self.A):
            if Ai.shape != (n, n):
                raise ValueError(f"A[{i}] has shape {Ai.shape}, expected {(n, n)}")
        self.S0 = np.atleast_2d(np.asarray(self.S0, dtype=float))
        if self.S0.shape[0] == 1 and n > 1:
            self.S0 = self.S0.T
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if self.S0.shape != (n, self.v.shape[0]):
            raise ValueError(
                f"S0 has shape {self.S0.shape}, expected ({n}, {self.v.shape[0]})")
        if self.C is not None:
            self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
            if self.C.shape[1] != n:
                raise ValueError(
                    f"C has {self.C.shape[1]} columns, expected {n}")

    @property
    def dim(self) -> int:
        return self.A[0].shape[0]

    @property
    def n_inputs(self) -> int:
        return len(self.A) - 1

    @property
    def n_outputs(self) -> int:
        if self.C is None:
            raise UnlearnedSystemError("system has no output matrix C")
        return self.C.shape[0]

    def initial_state(self) -> np.ndarray:
        return self.S0 @ self.v

    def with_output(self, C: np.ndarray) -> "BilinearSystem":
        return replace(self, C=C, _kernel_args=None)


def _kernel_form(sys: BilinearSystem):
    """Cache the representation the stepping kernel consumes."""
    if sys._kernel_args is None:
        if all(sparse.issparse(Ai) for Ai in sys.A):
            mats = [sparse.csr_matrix(Ai) for Ai in sys.A]
            indptr = np.vstack([M.indptr.astype(np.int64) for M in mats])
            indices = np.concatenate(
                [M.indices.astype(np.int64) for M in mats])
            data = np.concatenate([M.data.astype(float) for M in mats])
            sys._kernel_args = ("csr", (indptr, indices, data, sys.dim))
        else:
            stack = np.stack([
                Ai.toarray() if sparse.issparse(Ai) else np.asarray(Ai, dtype=float)
                for Ai in sys.A])
            sys._kernel_args = ("dense", (np.ascontiguousarray(stack),))
    return sys._kernel_args


def simulate_batch(sys: BilinearSystem, grid: np.ndarray, u_batch: np.ndarray,
                   order: int = 4, substeps: int = 1,
                   initial: np.ndarray | None = None) -> np.ndarray:
    """Advance K copies of the system under K controls at once.

    u_batch has shape (L, m, K); returns states of shape (L, n, K). All
    copies start from the system's initial state unless `initial` (n, K)
    is given.
    """
    dt = grid_step(grid)
    L, m, K = u_batch.shape
    if L != grid.shape[0]:
        raise ValueError("control sample count does not match the grid")
    if m != sys.n_inputs:
        raise ValueError(
            f"control has {m} channels, system expects {sys.n_inputs}")
    if initial is None:
        initial = np.repeat(sys.initial_state()[:, None], K, axis=1)
    kind, args = _kernel_form(sys)
    fn = _kernels.simulate_csr if kind == "csr" else _kernels.simulate_dense
    return fn(*args, initial, u_batch, dt, int(substeps), int(order),
              DIVERGENCE_LIMIT)


def simulate(sys: BilinearSystem, u, substeps: int = 1,
             initial: np.ndarray | None = None) -> Trajectory:
    """State trajectory of the system under a single control signal.

    `u` is any object with grid / samples / kind attributes (see
    dynamics.ControlSignal). The scheme follows the control kind.
    """
    samples = np.asarray(u.samples, dtype=float)
    u_batch = samples.T[None].transpose(2, 1, 0)  # (L, m, 1)
    init = None if initial is None else np.asarray(initial, dtype=float)[:, None]
    states = simulate_batch(sys, u.grid, u_batch,
                            order=integration_order(u.kind),
                            substeps=substeps, initial=init)
    return Trajectory(u.grid, states[:, :, 0])


def output(sys: BilinearSystem, state_traj: Trajectory) -> Trajectory:
    """Apply the output matrix row-wise to a state trajectory."""
    if sys.C is None:
        raise UnlearnedSystemError(
            "cannot form outputs: system has no output matrix C")
    if state_traj.width != sys.dim:
        raise ValueError(
            f"trajectory width {state_traj.width} does not match system "
            f"dimension {sys.dim}")
    return Trajectory(state_traj.grid, state_traj.values @ sys.C.T)


def transform(sys: BilinearSystem, T_mat: np.ndarray,
              T_inv: np.ndarray) -> BilinearSystem:
    """Similarity transform: A_i -> T A_i T^-1, S0 -> T S0, C -> C T^-1.

    Outputs are preserved. Rejects pairs whose product deviates from the
    identity by more than a small relative residual.
    """
    T_mat = np.asarray(T_mat, dtype=float)
    T_inv = np.asarray(T_inv, dtype=float)
    n = sys.dim
    if T_mat.shape != (n, n) or T_inv.shape != (n, n):
        raise ValueError("transform matrices must be square of system size")
    residual = np.linalg.norm(T_mat @ T_inv - np.eye(n)) / np.sqrt(n)
    if residual > _TRANSFORM_RTOL:
        raise ValueError(
            f"T @ T_inv deviates from identity by {residual:.3e} "
            f"(tolerance {_TRANSFORM_RTOL:.0e}); transform too ill-conditioned")
    A_new = [T_mat @ (Ai.toarray() if sparse.issparse(Ai) else Ai) @ T_inv
             for Ai in sys.A]
    C_new = None if sys.C is None else sys.C @ T_inv
    return BilinearSystem(A=A_new, S0=T_mat @ sys.S0, v=sys.v.copy(), C=C_new)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_system(sys: BilinearSystem, path) -> None:
    """Write a system to the plain-text container.

    Layout: a version line; a header `dim <n> inputs <m> initcols <k>
    outputs <p|none>`; per matrix a block `A <i> <dense|coo> <nnz>`
    followed by `row col value` triplets; then `S0` (n rows of k values),
    `v` (one line) and, when present, `C` (p rows of n values). Floats are
    written with 17 significant digits so the round trip is lossless.
    """
    lines = ["sigmor-bilinear v1"]
    p = "none" if sys.C is None else str(sys.C.shape[0])
    lines.append(f"dim {sys.dim} inputs {sys.n_inputs} "
                 f"initcols {sys.v.shape[0]} outputs {p}")
    for i, Ai in enumerate(sys.A):
        if sparse.issparse(Ai):
            coo = sparse.coo_matrix(Ai)
            order = np.lexsort((coo.col, coo.row))
            rows, cols, vals = coo.row[order], coo.col[order], coo.data[order]
            storage = "coo"
        else:
            rows, cols = np.nonzero(Ai)
            vals = np.asarray(Ai)[rows, cols]
            storage = "dense"
        lines.append(f"A {i} {storage} {len(vals)}")
        for r, c, x in zip(rows, cols, vals):
            lines.append(f"{r} {c} {_fmt(x)}")
    lines.append("S0")
    for row in sys.S0:
        lines.append(" ".join(_fmt(x) for x in row))
    lines.append("v")
    lines.append(" ".join(_fmt(x) for x in sys.v))
    if sys.C is not None:
        lines.append("C")
        for row in sys.C:
            lines.append(" ".join(_fmt(x) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_system(path) -> BilinearSystem:
    """Read a system written by save_system."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "sigmor-bilinear v1":
        raise ValueError(f"{path}: not a sigmor bilinear system file")
    header = lines[1].split()
    n = int(header[1])
    m = int(header[3])
    k = int(header[5])
    p = None if header[7] == "none" else int(header[7])
    pos = 2
    A = []
    for i in range(m + 1):
        tag, idx, storage, nnz = lines[pos].split()
        if tag != "A" or int(idx) != i:
            raise ValueError(f"{path}: malformed matrix block at line {pos + 1}")
        nnz = int(nnz)
        pos += 1
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for j in range(nnz):
            r, c, x = lines[pos + j].split()
            rows[j], cols[j], vals[j] = int(r), int(c), float(x)
        pos += nnz
        mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        A.append(mat if storage == "coo" else mat.toarray())
    if lines[pos] != "S0":
        raise ValueError(f"{path}: expected S0 block at line {pos + 1}")
    pos += 1
    S0 = np.array([[float(x) for x in lines[pos + r].split()] for r in range(n)])
    pos += n
    if lines[pos] != "v":
        raise ValueError(f"{path}: expected v block at line {pos + 1}")
    v = np.array([float(x) for x in lines[pos + 1].split()])
    pos += 2
    C = None
    if p is not None:
        if lines[pos] != "C":
            raise ValueError(f"{path}: expected C block at line {pos + 1}")
        pos += 1
        C = np.array([[float(x) for x in lines[pos + r].split()]
                      for r in range(p)])
    if S0.shape != (n, k):
        raise ValueError(f"{path}: S0 block has shape {S0.shape}, "
                         f"expected {(n, k)}")
    return BilinearSystem(A=A, S0=S0, v=v, C=C)


# ---------------------------------------------------------------------------
# trajectory CSV
# ---------------------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path, value_prefix: str = "v") -> None:
    """Column text: column 0 is time, the rest are value entries."""
    header = "t," + ",".join(f"{value_prefix}{i}" for i in range(traj.width))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(traj.grid, traj.values):
            fh.write(_fmt(t) + "," + ",".join(_fmt(x) for x in row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 0], data[:, 1:])


def trajectories_close(a: Trajectory, b: Trajectory, tol: float) -> bool:
    if not grids_match(a.grid, b.grid):
        return False
    return bool(np.max(np.abs(a.values - b.values)) <= tol)

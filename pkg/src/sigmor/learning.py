"""Learning the output matrix and the error functionals.

The output matrix C is the least-squares map from truncated-signature
features to observed truth outputs, stacked over every grid point of
every training control:

    min_C  sum_{k,i} || y(t_i; u^(k)) - C S(t_i; u^(k)) ||^2  (+ ridge)

solved through a rank-revealing orthogonal factorization with column
pivoting (never the normal equations; signature features are highly
correlated and squaring the condition number is fatal). Large problems
stream through a blocked QR: blocks fold into a running triangular
factor in deterministic index order, which is algebraically the QR of
the full stacked matrix.

Model quality is measured by the L2-in-time, RMS-over-controls distance
between output families; the pipeline evaluation reports the
bilinearization error, the reduction error and the total error.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bilinear import (BilinearSystem, Trajectory, integration_order, output,
                       simulate_batch)
from .dynamics import NonlinearSystem, nonlinear_output, simulate_nonlinear_batch
from .errors import RankDeficiencyWarning
from .grids import grid_step, grids_match
from .signature import SignatureSystem, signature_system

_DEFAULT_CHUNK = 64

# Relative singular-value cutoff for rank detection in the pivoted
# factorization; well above QR roundoff, well below informative signal.
_RANK_COND = 1e-12

# Slack for the internal triangle-inequality sanity assertion.
_TRIANGLE_SLACK = 1e-10


# ---------------------------------------------------------------------------
# batched output computation
# ---------------------------------------------------------------------------

def _common_grid_and_kind(controls):
    grid = controls[0].grid
    kind = controls[0].kind
    for u in controls[1:]:
        if not grids_match(grid, u.grid):
            raise ValueError("controls must share one grid")
        if u.kind != kind:
            raise ValueError("controls must share one kind (one scheme)")
    return grid, kind


def _stack_controls(controls):
    # (L, m, K) from K signals of (L, m) samples
    return np.stack([u.samples for u in controls], axis=2)


def _chunks(count: int, chunk_size: int):
    return [slice(lo, min(lo + chunk_size, count))
            for lo in range(0, count, chunk_size)]


def _run_chunks(fn, slices, threads: int):
    """Evaluate fn over chunk slices, results in index order."""
    if threads <= 1 or len(slices) <= 1:
        return [fn(sl) for sl in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))


def truth_output_batch(truth: NonlinearSystem, controls, substeps=None,
                       chunk_size: int = _DEFAULT_CHUNK,
                       threads: int = 1) -> list:
    """Output trajectories of the truth system for a family of controls."""
    grid, kind = _common_grid_and_kind(controls)
    order = integration_order(kind)
    u_all = _stack_controls(controls)

    def run(sl):
        return simulate_nonlinear_batch(truth, grid, u_all[:, :, sl],
                                        order=order, substeps=substeps,
                                        record="output")
    blocks = _run_chunks(run, _chunks(len(controls), chunk_size), threads)
    out = np.concatenate(blocks, axis=2)
    return [Trajectory(grid, out[:, :, k]) for k in range(len(controls))]


def bilinear_state_batch(sys: BilinearSystem, controls, substeps: int = 1,
                         chunk_size: int = _DEFAULT_CHUNK,
                         threads: int = 1) -> np.ndarray:
    """States (L, n, K) of a bilinear system for a family of controls."""
    grid, kind = _common_grid_and_kind(controls)
    order = integration_order(kind)
    u_all = _stack_controls(controls)

    def run(sl):
        return simulate_batch(sys, grid, u_all[:, :, sl], order=order,
                              substeps=substeps)
    blocks = _run_chunks(run, _chunks(len(controls), chunk_size), threads)
    return np.concatenate(blocks, axis=2)


def bilinear_output_batch(sys: BilinearSystem, controls, substeps: int = 1,
                          chunk_size: int = _DEFAULT_CHUNK,
                          threads: int = 1) -> list:
    """Output trajectories of a bilinear system for a family of controls."""
    if sys.C is None:
        from .errors import UnlearnedSystemError
        raise UnlearnedSystemError("system has no output matrix C")
    grid, _ = _common_grid_and_kind(controls)
    states = bilinear_state_batch(sys, controls, substeps=substeps,
                                  chunk_size=chunk_size, threads=threads)
    return [Trajectory(grid, states[:, :, k] @ sys.C.T)
            for k in range(len(controls))]


# ---------------------------------------------------------------------------
# dataset assembly and the regression
# ---------------------------------------------------------------------------

@dataclass
class RegressionDataset:
    """Stacked (signature feature, truth output) samples.

    Row order is control-major, time within control; feature column 0
    is the zeroth signature level and therefore identically 1.
    """

    features: np.ndarray
    targets: np.ndarray
    control_index: np.ndarray
    time_index: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets disagree on row count")
        if self.features.shape[0] != self.control_index.shape[0] or \
                self.features.shape[0] != self.time_index.shape[0]:
            raise ValueError("row provenance has wrong length")
        if not np.all(self.features[:, 0] == 1.0):
            raise ValueError("feature column 0 must be identically 1")

    @property
    def rows(self) -> int:
        return self.features.shape[0]


def assemble_dataset(controls, truth: NonlinearSystem, N: int, grid=None,
                     substeps_truth=None, chunk_size: int = _DEFAULT_CHUNK,
                     threads: int = 1) -> RegressionDataset:
    """Simulate truth outputs and signature features for every control and
    stack one regression row per grid point."""
    common_grid, _ = _common_grid_and_kind(controls)
    if grid is not None and not grids_match(common_grid, grid):
        raise ValueError("controls are not sampled on the requested grid")
    m = controls[0].m
    sig_sys = signature_system(m + 1, N)
    L = common_grid.shape[0]
    K = len(controls)

    targets_list = truth_output_batch(truth, controls, substeps=substeps_truth,
                                      chunk_size=chunk_size, threads=threads)
    states = bilinear_state_batch(sig_sys, controls, chunk_size=chunk_size,
                                  threads=threads)  # (L, n, K)

    features = np.concatenate([states[:, :, k] for k in range(K)], axis=0)
    targets = np.concatenate([t.values for t in targets_list], axis=0)
    control_index = np.repeat(np.arange(K), L)
    time_index = np.tile(np.arange(L), K)
    return RegressionDataset(features=features, targets=targets,
                             control_index=control_index,
                             time_index=time_index)


@dataclass
class FitResult:
    """Least-squares solution with its data-misfit residual."""

    C: np.ndarray
    residual: float
    rank: int
    rows: int


class LstsqAccumulator:
    """Streaming QR reduction of a tall least-squares problem.

    Blocks (F, Y) fold into a triangular factor R and reduced right-hand
    side G = Q^T Y; folding in index order is algebraically the QR of the
    full stacked matrix, so solve() matches the direct factorization
    while memory stays at one block.
    """

    def __init__(self, n_features: int, n_targets: int):
        self.n = n_features
        self.p = n_targets
        self.R = None
        self.G = None
        self.y_sq = 0.0
        self.rows = 0

    def add(self, F: np.ndarray, Y: np.ndarray) -> None:
        F = np.asarray(F, dtype=float)
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if F.shape[1] != self.n or Y.shape[1] != self.p:
            raise ValueError("block has wrong width")
        if F.shape[0] != Y.shape[0]:
            raise ValueError("block features/targets disagree on row count")
        self.y_sq += float(np.sum(Y**2))
        self.rows += F.shape[0]
        if self.R is None:
            stack_f, stack_y = F, Y
        else:
            stack_f = np.vstack([self.R, F])
            stack_y = np.vstack([self.G, Y])
        Q, self.R = scipy.linalg.qr(stack_f, mode="economic")
        self.G = Q.T @ stack_y

    def solve(self, ridge_lambda: float = 0.0) -> FitResult:
        if self.R is None:
            raise ValueError("no data accumulated")
        if ridge_lambda < 0:
            raise ValueError(f"ridge parameter must be >= 0, got {ridge_lambda}")
        if ridge_lambda > 0:
            R_aug = np.vstack([self.R, np.sqrt(ridge_lambda) * np.eye(self.n)])
            G_aug = np.vstack([self.G, np.zeros((self.n, self.p))])
        else:
            R_aug, G_aug = self.R, self.G
        X, _, rank, _ = scipy.linalg.lstsq(R_aug, G_aug, cond=_RANK_COND,
                                           lapack_driver="gelsy")
        X = X.reshape(self.n, self.p)
        if ridge_lambda == 0.0 and rank < self.n:
            warnings.warn(
                f"rank-deficient features: effective rank {rank} of {self.n}; "
                f"returning the minimum-norm solution", RankDeficiencyWarning)
        misfit_sq = float(np.sum((self.G - self.R @ X)**2))
        misfit_sq += max(self.y_sq - float(np.sum(self.G**2)), 0.0)
        return FitResult(C=X.T, residual=float(np.sqrt(misfit_sq)),
                         rank=int(rank), rows=self.rows)


def fit_C(data: RegressionDataset, ridge_lambda: float = 0.0) -> FitResult:
    """Solve the signature regression for C (p x n).

    Minimizes the stacked squared misfit plus ridge_lambda * ||C||_F^2 via
    a rank-revealing pivoted orthogonal factorization; rank-deficient
    unpenalized problems return the minimum-norm solution with a warning.
    """
    if data.rows < 1:
        raise ValueError("need at least one sample row")
    acc = LstsqAccumulator(data.features.shape[1], data.targets.shape[1])
    acc.add(data.features, data.targets)
    return acc.solve(ridge_lambda)


# ---------------------------------------------------------------------------
# error functionals
# ---------------------------------------------------------------------------

def error_l2(outputs_a, outputs_b) -> float:
    """sqrt( (1/K) sum_k int_0^T ||a_k(t) - b_k(t)||^2 dt ), trapezoid in
    time, over two matched output families."""
    if len(outputs_a) != len(outputs_b):
        raise ValueError("output families differ in length")
    if not outputs_a:
        raise ValueError("empty output families")
    total = 0.0
    for a, b in zip(outputs_a, outputs_b):
        if not grids_match(a.grid, b.grid):
            raise ValueError("output trajectories on different grids")
        dt = grid_step(a.grid)
        diff = a.values - b.values
        total += float(np.trapezoid(np.sum(diff**2, axis=1), dx=dt))
    return float(np.sqrt(total / len(outputs_a)))


@dataclass
class ErrorReport:
    """The three pipeline errors for one reduced order."""

    E_sig: float
    E_MOR: float
    E_red_sig: float


def _truth_outputs(truth, controls, substeps, chunk_size, threads):
    if isinstance(truth, BilinearSystem):
        return bilinear_output_batch(truth, controls, chunk_size=chunk_size,
                                     threads=threads)
    return truth_output_batch(truth, controls, substeps=substeps,
                              chunk_size=chunk_size, threads=threads)


def evaluate_pipeline(sys_full: BilinearSystem, sys_reduced: BilinearSystem,
                      truth, test_controls, substeps_truth=None,
                      chunk_size: int = _DEFAULT_CHUNK,
                      threads: int = 1) -> ErrorReport:
    """Bilinearization, reduction and total error over a test family.

    truth may be a NonlinearSystem or (for self-comparison checks) another
    BilinearSystem.
    """
    y = _truth_outputs(truth, test_controls, substeps_truth, chunk_size, threads)
    y_sig = bilinear_output_batch(sys_full, test_controls,
                                  chunk_size=chunk_size, threads=threads)
    y_red = bilinear_output_batch(sys_reduced, test_controls,
                                  chunk_size=chunk_size, threads=threads)
    report = ErrorReport(E_sig=error_l2(y, y_sig),
                         E_MOR=error_l2(y_sig, y_red),
                         E_red_sig=error_l2(y, y_red))
    assert report.E_red_sig <= report.E_sig + report.E_MOR + _TRIANGLE_SLACK, \
        "triangle inequality violated across error functionals"
    return report


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_c_matrix_csv(C: np.ndarray, N: int, m: int, path) -> None:
    """Header row n,p,N,m followed by the p dense rows of C."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p, n = C.shape
    with open(path, "w") as fh:
        fh.write(f"{n},{p},{N},{m}\n")
        for row in C:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_c_matrix_csv(path):
    """Returns (C, N, m) from a file written by write_c_matrix_csv."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        n, p, N, m = (int(x) for x in header)
        C = np.array([[float(x) for x in fh.readline().strip().split(",")]
                      for _ in range(p)])
    if C.shape != (p, n):
        raise ValueError(f"{path}: C block has shape {C.shape}, expected {(p, n)}")
    return C, N, m


def write_error_report_csv(rows, path) -> None:
    """Rows (r, E_sig, E_MOR, E_red_sig), one line per reduced order."""
    with open(path, "w") as fh:
        fh.write("r,E_sig,E_MOR,E_red_sig\n")
        for r, e_sig, e_mor, e_red in rows:
            fh.write(f"{r},{_fmt(e_sig)},{_fmt(e_mor)},{_fmt(e_red)}\n")

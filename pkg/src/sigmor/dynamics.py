"""Ground-truth nonlinear systems and control-signal families.

The benchmark system is a finite-difference semi-discretization of a
controlled reaction-diffusion equation on (0, 1) with Dirichlet
boundaries; a cubic-drift example with one-sided Lipschitz vector fields
is provided for the well-posedness property suite. Controls are sampled
on uniform grids: a sinusoidal test family, piecewise-constant
white-noise realizations for training, and custom samples.

The diffusion stencil makes the truth systems stiff, so the fixed-step
explicit integrator sub-divides each grid cell; the substep count is a
deterministic function of the grid step and the system's linear spectral
bound (not an adaptive controller).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse

from .bilinear import DIVERGENCE_LIMIT, Trajectory, integration_order
from .errors import DivergenceError
from .grids import grid_step

# Stability margins |h * lambda| for the explicit schemes (real axis).
_RK4_MARGIN = 2.5
_EULER_MARGIN = 1.5


@dataclass
class ControlSignal:
    """A control sampled on a uniform grid.

    samples has one row per grid point. White-noise signals are
    piecewise constant on grid cells: row j holds the value on
    [t_j, t_{j+1}) and the final row repeats the last cell value.
    """

    grid: np.ndarray
    samples: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        grid_step(self.grid)
        if self.samples.shape[0] != self.grid.shape[0]:
            raise ValueError(
                f"samples have {self.samples.shape[0]} rows but the grid has "
                f"{self.grid.shape[0]} points")
        if self.kind not in ("test_sinusoid", "white_noise", "custom"):
            raise ValueError(f"unknown control kind {self.kind!r}")

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    def l2_norm_sq(self) -> float:
        """int_0^T ||u(t)||^2 dt, exact for the signal's interpolation
        convention (left sums for piecewise-constant white noise,
        trapezoid for everything else)."""
        dt = grid_step(self.grid)
        sq = np.sum(self.samples**2, axis=1)
        if self.kind == "white_noise":
            return float(np.sum(sq[:-1]) * dt)
        return float(np.trapezoid(sq, dx=dt))


def test_control(k: int, grid: np.ndarray) -> ControlSignal:
    """Two-channel sinusoid (cos kt, sin kt); ||u(t)|| = 1 for all t."""
    if k < 1:
        raise ValueError(f"test-control index must be >= 1, got {k}")
    grid = np.asarray(grid, dtype=float)
    samples = np.column_stack([np.cos(k * grid), np.sin(k * grid)])
    return ControlSignal(grid, samples, kind="test_sinusoid", params={"k": k})


def training_control(seed, c_w: float, grid: np.ndarray, m: int) -> ControlSignal:
    """Scaled white-noise realization c_w * dW/dt, piecewise constant per
    grid cell.

    Increments dW_j ~ Normal(0, dt I_m) come from a counter-based Philox
    stream keyed by `seed` (an int or tuple of ints), so the same seed
    always reproduces the same path and distinct controls can be drawn
    in parallel.
    """
    if c_w < 0:
        raise ValueError(f"noise scale must be >= 0, got {c_w}")
    grid = np.asarray(grid, dtype=float)
    dt = grid_step(grid)
    steps = grid.shape[0] - 1
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    dw = rng.normal(0.0, np.sqrt(dt), size=(steps, m))
    samples = np.empty((steps + 1, m))
    samples[:steps] = c_w * dw / dt
    samples[steps] = samples[steps - 1] if steps else 0.0
    return ControlSignal(grid, samples, kind="white_noise",
                         params={"seed": seed, "c_w": c_w})


@dataclass
class NonlinearSystem:
    """State equation dx/dt = f0(x) + sum_i f_i(x) u_i(t) with output c(x).

    The callables accept states of shape (d,) or batched (d, K) and
    return arrays broadcastable to the same shape; the output map returns
    (p,) or (p, K). jac_bound is a spectral bound of the linearization
    used to pick stable substep counts.
    """

    d: int
    drift: Callable
    input_maps: tuple
    output_map: Callable
    x0: np.ndarray
    p: int = 1
    jac_bound: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.d < 1:
            raise ValueError(f"state dimension must be >= 1, got {self.d}")
        if self.x0.shape != (self.d,):
            raise ValueError(
                f"x0 has shape {self.x0.shape}, expected ({self.d},)")

    @property
    def m(self) -> int:
        return len(self.input_maps)


def laplacian_stencil(d: int) -> sparse.csr_matrix:
    """(1/h^2) tridiag(1, -2, 1) with h = 1/(d+1), Dirichlet boundaries."""
    h = 1.0 / (d + 1)
    main = np.full(d, -2.0)
    off = np.ones(d - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def make_reaction_diffusion(d: int) -> NonlinearSystem:
    """Semi-discretized controlled reaction-diffusion benchmark.

    Grid zeta_j = j/(d+1); drift A x + x - x^o3 with A the Dirichlet
    Laplacian stencil; two inputs, a constant profile exp(zeta) and the
    pointwise square x^o2; initial state 0.5 sin(zeta); scalar output
    exp(mean(x)).
    """
    if d < 2:
        raise ValueError(f"reaction-diffusion needs d >= 2, got {d}")
    h = 1.0 / (d + 1)
    zeta = h * np.arange(1, d + 1)
    lap = laplacian_stencil(d)
    profile = np.exp(zeta)

    def drift(x):
        return lap @ x + x - x**3

    def f1(x):
        return profile[:, None] if x.ndim == 2 else profile

    def f2(x):
        return x**2

    def out(x):
        return np.exp(np.mean(x, axis=0, keepdims=True))

    return NonlinearSystem(
        d=d, drift=drift, input_maps=(f1, f2), output_map=out,
        x0=0.5 * np.sin(zeta), p=1, jac_bound=4.0 / h**2 + 8.0,
        name="reaction_diffusion")


def make_cubic_example(d: int, A_mat: np.ndarray) -> NonlinearSystem:
    """Single-input cubic-drift system f0 = A x - x^o3, f = x^o2.

    Satisfies the one-sided Lipschitz inequality with constant
    2 lambda_max((A + A^T)/2); used by the well-posedness property suite.
    The output is the full state.
    """
    A_mat = np.asarray(A_mat, dtype=float)
    if A_mat.shape != (d, d):
        raise ValueError(f"A_mat has shape {A_mat.shape}, expected {(d, d)}")

    def drift(x):
        return A_mat @ x - x**3

    def f(x):
        return x**2

    def out(x):
        return x

    bound = float(np.linalg.norm(A_mat, 2)) + 8.0
    return NonlinearSystem(d=d, drift=drift, input_maps=(f,), output_map=out,
                           x0=np.zeros(d), p=d, jac_bound=bound,
                           name="cubic_example")


def default_substeps(sys: NonlinearSystem, dt: float, order: int) -> int:
    """Smallest substep count keeping |h_sub * jac_bound| inside the
    scheme's stability margin."""
    margin = _EULER_MARGIN if order == 1 else _RK4_MARGIN
    return max(1, int(np.ceil(dt * sys.jac_bound / margin)))


def simulate_nonlinear_batch(sys: NonlinearSystem, grid: np.ndarray,
                             u_batch: np.ndarray, order: int = 4,
                             substeps: int | None = None,
                             record: str = "state",
                             initial: np.ndarray | None = None) -> np.ndarray:
    """Advance K copies of the truth system under K controls.

    u_batch is (L, m, K); returns (L, d, K) states or, with
    record="output", (L, p, K) outputs sampled at grid points.
    """
    dt = grid_step(grid)
    L, m, K = u_batch.shape
    if L != grid.shape[0]:
        raise ValueError("control sample count does not match the grid")
    if m != sys.m:
        raise ValueError(f"control has {m} channels, system expects {sys.m}")
    if substeps is None:
        substeps = default_substeps(sys, dt, order)
    hs = dt / substeps

    def rhs(x, w):
        deriv = sys.drift(x)
        for i, f_i in enumerate(sys.input_maps):
            deriv = deriv + f_i(x) * w[i]
        return deriv

    state = (np.repeat(sys.x0[:, None], K, axis=1) if initial is None
             else np.array(initial, dtype=float))
    if record == "output":
        traj = np.empty((L, sys.p, K))
        traj[0] = sys.output_map(state)
    else:
        traj = np.empty((L, sys.d, K))
        traj[0] = state
    for j in range(L - 1):
        u_left = u_batch[j]
        u_right = u_batch[j + 1]
        if order == 1:
            for _ in range(substeps):
                state = state + hs * rhs(state, u_left)
        else:
            for q in range(substeps):
                th0 = q / substeps
                th1 = (q + 0.5) / substeps
                th2 = (q + 1) / substeps
                w0 = (1.0 - th0) * u_left + th0 * u_right
                w1 = (1.0 - th1) * u_left + th1 * u_right
                w2 = (1.0 - th2) * u_left + th2 * u_right
                k1 = rhs(state, w0)
                k2 = rhs(state + 0.5 * hs * k1, w1)
                k3 = rhs(state + 0.5 * hs * k2, w1)
                k4 = rhs(state + hs * k3, w2)
                state = state + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        peak = float(np.max(np.abs(state)))
        if not peak <= DIVERGENCE_LIMIT:
            raise DivergenceError(j + 1, grid[j + 1], peak)
        traj[j + 1] = sys.output_map(state) if record == "output" else state
    return traj


def simulate_nonlinear(sys: NonlinearSystem, u: ControlSignal,
                       substeps: int | None = None) -> Trajectory:
    """State trajectory of the truth system under one control."""
    u_batch = u.samples[:, :, None]
    states = simulate_nonlinear_batch(sys, u.grid, u_batch,
                                      order=integration_order(u.kind),
                                      substeps=substeps)
    return Trajectory(u.grid, states[:, :, 0])


def nonlinear_output(sys: NonlinearSystem, state_traj: Trajectory) -> Trajectory:
    """Apply the output map row-wise to a state trajectory."""
    out = sys.output_map(state_traj.values.T)
    return Trajectory(state_traj.grid, np.atleast_2d(out).T)


def control_distance_l2(u: ControlSignal, v: ControlSignal) -> float:
    """||u - v||_{L^2([0,T])} under the signals' interpolation convention."""
    if u.samples.shape != v.samples.shape:
        raise ValueError("controls must share grid and channel count")
    dt = grid_step(u.grid)
    sq = np.sum((u.samples - v.samples)**2, axis=1)
    if u.kind == "white_noise" or v.kind == "white_noise":
        return float(np.sqrt(np.sum(sq[:-1]) * dt))
    return float(np.sqrt(np.trapezoid(sq, dx=dt)))


def lipschitz_probe(sys: NonlinearSystem, u: ControlSignal, v: ControlSignal,
                    substeps: int | None = None) -> float:
    """sup_t ||x(t;u) - x(t;v)|| / ||u - v||_{L^2} for one control pair.

    The ratio stays bounded over families of bounded controls; no
    theoretical constant is computed.
    """
    dist = control_distance_l2(u, v)
    if dist == 0.0:
        raise ValueError("controls must differ (||u - v|| > 0)")
    xu = simulate_nonlinear(sys, u, substeps=substeps)
    xv = simulate_nonlinear(sys, v, substeps=substeps)
    gap = np.max(np.linalg.norm(xu.values - xv.values, axis=1))
    return float(gap / dist)

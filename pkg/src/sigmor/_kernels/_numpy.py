"""Pure-numpy time-stepping kernels (fallback backend).

Both kernels advance a batch of bilinear systems

    dS/dt = A[0] S + sum_i A[i+1] S u_i(t)

over a uniform grid with step `dt`, recording the state at every grid
point. `order` selects the scheme: 4 for classical Runge-Kutta with the
control interpolated linearly inside each grid cell, 1 for left-point
Euler with the control held at the left sample (the convention for
piecewise-constant white-noise controls). `substeps` sub-intervals are
taken per grid cell; states are stored at grid points only.

Shapes: s0 is (n, K) for a batch of K initial states, u is (L, m, K)
control samples, the returned trajectory is (L, n, K).
"""

import numpy as np

from ..errors import DivergenceError

BACKEND_NAME = "python"


def _check_divergence(state, step, time, limit):
    peak = float(np.max(np.abs(state))) if state.size else 0.0
    if not peak <= limit:  # also catches NaN
        raise DivergenceError(step, time, peak)


def _dense_rhs(A, state, w):
    deriv = A[0] @ state
    for i in range(1, A.shape[0]):
        deriv += (A[i] @ state) * w[i - 1]
    return deriv


def simulate_dense(A, s0, u, dt, substeps, order, divergence_limit):
    A = np.ascontiguousarray(A, dtype=float)
    mats = [A[i] for i in range(A.shape[0])]
    return _simulate(mats, s0, u, dt, substeps, order, divergence_limit)


def simulate_csr(indptr, indices, data, n, s0, u, dt, substeps, order,
                 divergence_limit):
    from scipy.sparse import csr_matrix

    offsets = np.concatenate([[0], np.cumsum(indptr[:, -1])])
    mats = []
    for ch in range(indptr.shape[0]):
        lo, hi = offsets[ch], offsets[ch + 1]
        mats.append(csr_matrix((data[lo:hi], indices[lo:hi], indptr[ch]),
                               shape=(n, n)))
    return _simulate(mats, s0, u, dt, substeps, order, divergence_limit)


def _simulate(mats, s0, u, dt, substeps, order, divergence_limit):
    n, K = s0.shape
    L = u.shape[0]
    m = u.shape[1]
    if len(mats) != m + 1:
        raise ValueError(f"expected {m + 1} matrices, got {len(mats)}")

    def rhs(state, w):
        deriv = mats[0] @ state
        for i in range(m):
            deriv += (mats[i + 1] @ state) * w[i]
        return deriv

    traj = np.empty((L, n, K))
    state = np.array(s0, dtype=float)
    traj[0] = state
    hs = dt / substeps
    for j in range(L - 1):
        u_left = u[j]
        u_right = u[j + 1]
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
        _check_divergence(state, j + 1, (j + 1) * dt, divergence_limit)
        traj[j + 1] = state
    return traj

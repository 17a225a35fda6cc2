"""Entropic optimal transport between two batches of latent vectors.

The coupling is computed at batch granularity: rows of the two latent
matrices are the transported atoms, weighted uniformly (1/n and 1/m). The
cost is the pairwise Euclidean distance matrix normalized by its maximum
entry, so costs always live in [0, 1] and are invariant to a common positive
rescaling of both inputs.

The Sinkhorn solver runs entirely in the log domain (dual potentials with
log-sum-exp updates), which keeps small regularization strengths usable
without underflow. Plans returned here are treated as constants by the
training graph; gradients flow through the transport products, not through
the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from parrot.errors import NumericsError, ShapeError


@dataclass
class CostMatrix:
    """Pairwise normalized-distance matrix between two row batches."""

    values: np.ndarray  # (n, m), entries in [0, 1]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass
class TransportPlan:
    """Nonnegative coupling with uniform marginals 1/n (rows) and 1/m (cols)."""

    gamma: np.ndarray
    epsilon: float
    iterations_used: int
    converged: bool

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    @property
    def m(self) -> int:
        return self.gamma.shape[1]

    def marginal_violation(self) -> float:
        """Largest absolute deviation of any row/column sum from its target."""
        row_err = np.abs(self.gamma.sum(axis=1) - 1.0 / self.n).max()
        col_err = np.abs(self.gamma.sum(axis=0) - 1.0 / self.m).max()
        return float(max(row_err, col_err))


def cost_matrix(batch_a: np.ndarray, batch_b: np.ndarray) -> CostMatrix:
    """Normalized Euclidean distances between every row pair of two batches.

    Entry (i, j) is ||a_i - b_j|| divided by the maximum such distance. If
    all rows coincide the matrix is all zeros (the max-normalization is
    skipped rather than dividing by zero).
    """
    a = np.asarray(batch_a, dtype=np.float64)
    b = np.asarray(batch_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("cost_matrix expects 2-D batches")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ShapeError("cost_matrix: empty batch")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"cost_matrix: feature dims differ ({a.shape[1]} vs {b.shape[1]})"
        )
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericsError("cost_matrix: non-finite input")

    # squared distances via the Gram expansion, clipped against tiny negatives
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    dist = np.sqrt(sq)
    peak = dist.max()
    if peak > 0.0:
        dist /= peak
    return CostMatrix(dist)


def uniform_plan(n: int, m: int, epsilon: float) -> TransportPlan:
    """The independence coupling (1/n) x (1/m); entropy maximizer at zero cost."""
    gamma = np.full((n, m), 1.0 / (n * m))
    return TransportPlan(gamma=gamma, epsilon=epsilon, iterations_used=0, converged=True)


def _logsumexp(arr: np.ndarray, axis: int) -> np.ndarray:
    peak = arr.max(axis=axis, keepdims=True)
    out = peak + np.log(np.exp(arr - peak).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def sinkhorn(cost: CostMatrix | np.ndarray, epsilon: float = 0.1,
             max_iters: int = 100, tol: float = 1e-6) -> TransportPlan:
    """Entropically regularized coupling between uniform marginals.

    Alternates the two dual-potential updates in the log domain and stops as
    soon as the worst row/column marginal deviation drops below `tol`, or
    after `max_iters` sweeps (the `converged` flag records which). An
    all-zero cost matrix short-circuits to the exact uniform product plan.
    """
    if epsilon <= 0.0:
        raise NumericsError(f"sinkhorn: epsilon must be > 0, got {epsilon}")
    c = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0 or c.shape[1] == 0:
        raise ShapeError(f"sinkhorn: cost must be a nonempty matrix, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise NumericsError("sinkhorn: non-finite cost matrix")

    n, m = c.shape
    if not c.any():
        return uniform_plan(n, m, epsilon)

    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    kernel = -c / epsilon
    u = np.zeros(n)
    v = np.zeros(m)

    gamma = None
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        u = log_a - _logsumexp(kernel + v[None, :], axis=1)
        v = log_b - _logsumexp(kernel + u[:, None], axis=0)
        gamma = np.exp(kernel + u[:, None] + v[None, :])
        err = max(
            np.abs(gamma.sum(axis=1) - 1.0 / n).max(),
            np.abs(gamma.sum(axis=0) - 1.0 / m).max(),
        )
        if err < tol:
            converged = True
            break
    if gamma is None:  # max_iters == 0
        gamma = np.exp(kernel + u[:, None] + v[None, :])
        iterations = 0

    return TransportPlan(
        gamma=gamma, epsilon=epsilon, iterations_used=iterations, converged=converged
    )


def transport(plan: TransportPlan, batch_a: np.ndarray, batch_b: np.ndarray):
    """Map each batch toward the other's distribution through the plan.

    Returns (plan @ batch_a, plan.T @ batch_b) as plain arrays. For the
    batch-coupling use the plan is square (n = m = batch size) and both
    products keep the batch shape.
    """
    a = np.asarray(batch_a, dtype=np.float64)
    b = np.asarray(batch_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("transport expects 2-D batches")
    if plan.gamma.shape[1] != a.shape[0]:
        raise ShapeError(
            f"transport: plan has {plan.gamma.shape[1]} columns but batch_a has "
            f"{a.shape[0]} rows"
        )
    if plan.gamma.shape[0] != b.shape[0]:
        raise ShapeError(
            f"transport: plan has {plan.gamma.shape[0]} rows but batch_b has "
            f"{b.shape[0]} rows"
        )
    a_mapped = plan.gamma @ a
    b_mapped = plan.gamma.T @ b
    if not (np.all(np.isfinite(a_mapped)) and np.all(np.isfinite(b_mapped))):
        raise NumericsError("transport produced non-finite values")
    return a_mapped, b_mapped

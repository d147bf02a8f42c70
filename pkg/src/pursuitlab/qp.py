"""Operator-splitting ADMM solver for box-constrained sparse QPs.

Solves

    minimize    0.5 x' P x + q' x
    subject to  l <= A x <= u

by alternating a regularized KKT solve with projection onto [l, u],
using over-relaxation and an adaptive penalty. Equality rows are simply
rows with l == u. Bounds may be +-inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_RHO = 0.1
DEFAULT_SIGMA = 1e-6
OVER_RELAXATION = 1.6
RHO_RESCALE = 10.0
RHO_CHECK_INTERVAL = 25
RHO_LIMITS = (1e-6, 1e6)
RHO_EQUALITY_BOOST = 1e3


@dataclass
class QPProblem:
    """Sparse QP data. ``P`` must be symmetric PSD and ``l <= u`` elementwise."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.P = sp.csc_matrix(self.P)
        self.A = sp.csc_matrix(self.A)
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.l = np.asarray(self.l, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()
        n = self.q.shape[0]
        m = self.l.shape[0]
        if self.P.shape != (n, n):
            raise ValueError("P must be n x n")
        if (abs(self.P - self.P.T) > 1e-12).nnz:
            raise ValueError("P must be symmetric")
        if self.A.shape != (m, n):
            raise ValueError("A shape inconsistent with q and bounds")
        if self.u.shape[0] != m:
            raise ValueError("l and u must have equal length")
        if np.any(self.l > self.u):
            raise ValueError("requires l <= u elementwise")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.l.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass
class ADMMResult:
    x: np.ndarray
    y: np.ndarray  # dual multipliers for the l <= Ax <= u rows
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool


def _rho_vector(qp: QPProblem, rho: float) -> np.ndarray:
    """Per-row penalty: equality rows (l == u) get a stiffer weight."""
    rho_vec = np.full(qp.m, rho)
    rho_vec[qp.l == qp.u] = rho * RHO_EQUALITY_BOOST
    return rho_vec


def _kkt_factor(qp: QPProblem, rho_vec: np.ndarray, sigma: float):
    kkt = sp.bmat(
        [[qp.P + sigma * sp.eye(qp.n), qp.A.T],
         [qp.A, -sp.diags(1.0 / rho_vec)]],
        format="csc",
    )
    return spla.splu(kkt)


def admm_solve(qp: QPProblem, tol_primal: float = 1e-6, tol_dual: float = 1e-6,
               max_iter: int = 4000, rho: float = DEFAULT_RHO,
               sigma: float = DEFAULT_SIGMA, x0=None, y0=None) -> ADMMResult:
    """Solve ``qp``; returns residuals so callers can verify convergence.

    Non-convergence at ``max_iter`` is not an error: the result carries
    ``converged=False`` plus the residuals and the caller decides.
    ``x0``/``y0`` warm-start the iteration.
    """
    n, m = qp.n, qp.m
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float).copy()
    z = np.clip(qp.A @ x, qp.l, qp.u)

    rho_vec = _rho_vector(qp, rho)
    solve = _kkt_factor(qp, rho_vec, sigma)
    alpha = OVER_RELAXATION
    rhs = np.empty(n + m)

    primal = np.inf
    dual = np.inf
    for iteration in range(1, max_iter + 1):
        rhs[:n] = sigma * x - qp.q
        rhs[n:] = z - y / rho_vec
        sol = solve.solve(rhs)
        x_tilde = sol[:n]
        z_tilde = z + (sol[n:] - y) / rho_vec

        x = alpha * x_tilde + (1.0 - alpha) * x
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * z
        z_new = np.clip(z_relaxed + y / rho_vec, qp.l, qp.u)
        y = y + rho_vec * (z_relaxed - z_new)
        z = z_new

        primal = float(np.linalg.norm(qp.A @ x - z, np.inf)) if m else 0.0
        dual = float(np.linalg.norm(qp.P @ x + qp.q + qp.A.T @ y, np.inf))
        if primal < tol_primal and dual < tol_dual:
            return ADMMResult(x, y, primal, dual, iteration, True)

        if iteration % RHO_CHECK_INTERVAL == 0:
            new_rho = rho
            if primal > RHO_RESCALE * dual:
                new_rho = rho * RHO_RESCALE
            elif dual > RHO_RESCALE * primal:
                new_rho = rho / RHO_RESCALE
            new_rho = min(max(new_rho, RHO_LIMITS[0]), RHO_LIMITS[1])
            if new_rho != rho:
                rho = new_rho
                rho_vec = _rho_vector(qp, rho)
                solve = _kkt_factor(qp, rho_vec, sigma)

    return ADMMResult(x, y, primal, dual, max_iter, False)

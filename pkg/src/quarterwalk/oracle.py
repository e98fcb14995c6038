"""Brute-force references: truncated stationary solve and seeded simulation.

Both act on the folded chain: a jump that would leave the quadrant is
clipped to the axis. The truncated solve also clips at the upper edge T.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ModelError, NoConvergence
from .model import MOVES, TransitionKernel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TruncatedSolution:
    T: int
    pi_hat: np.ndarray
    residual: float
    tail_mass_estimate: float  # mass on the outer ring n1 = T or n2 = T
    method: str

    def tail_mass(self, level):
        """Mass on states with n1 + n2 > level."""
        n1, n2 = np.indices(self.pi_hat.shape)
        return float(self.pi_hat[n1 + n2 > level].sum())

    def mean_queues(self):
        n1, n2 = np.indices(self.pi_hat.shape)
        return float((n1 * self.pi_hat).sum()), float((n2 * self.pi_hat).sum())


def transition_matrix(kernel: TransitionKernel, T: int) -> sp.csr_matrix:
    """Row-stochastic sparse matrix of the folded chain on {0..T}^2."""
    side = T + 1
    n = side * side
    i1, i2 = np.divmod(np.arange(n), side)
    r1, r2 = np.minimum(i1, kernel.N1), np.minimum(i2, kernel.N2)
    laws = kernel.table[r1, r2]  # (n, 3, 3)
    rows, cols, vals = [], [], []
    for di, dj in MOVES:
        v = laws[:, di + 1, dj + 1]
        keep = v > 0.0
        t1 = np.clip(i1[keep] + di, 0, T)
        t2 = np.clip(i2[keep] + dj, 0, T)
        rows.append(np.flatnonzero(keep))
        cols.append(t1 * side + t2)
        vals.append(v[keep])
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    P.sum_duplicates()
    return P


def _balance_residual(P, x):
    return float(np.abs(P.T @ x - x).max())


def truncated_stationary(kernel: TransitionKernel, T: int, tol: float = 1e-12,
                         max_iter: int = 10**6) -> TruncatedSolution:
    """Stationary vector of the folded chain on {0..T}^2.

    Direct sparse LU of (P^T - I) with the origin equation replaced by
    pi(0,0) = 1, then renormalised; a few steps of iterative refinement;
    power iteration if the direct route does not reach ``tol``.
    """
    if T < max(kernel.N1, kernel.N2) + 2:
        raise ModelError(f"truncation T={T} too small for thresholds ({kernel.N1}, {kernel.N2})")
    side = T + 1
    n = side * side
    P = transition_matrix(kernel, T)
    G = (P.T - sp.identity(n, format="csr")).tocsr()
    # replace row 0 by the unit row e_0
    G = sp.vstack([sp.csr_matrix(([1.0], ([0], [0])), shape=(1, n)), G[1:]]).tocsc()
    method = "sparse-lu"
    x = None
    try:
        lu = spla.splu(G, permc_spec="MMD_AT_PLUS_A")
        b = np.zeros(n)
        b[0] = 1.0
        x = lu.solve(b)
        for _ in range(3):
            r = b - G @ x
            if np.abs(r).max() < 1e-15 * max(1.0, np.abs(x).max()):
                break
            x = x + lu.solve(r)
        s = x.sum()
        x = x / s if np.isfinite(s) and s != 0 else None
    except RuntimeError as exc:  # singular factor
        log.warning("sparse LU failed (%s); falling back to power iteration", exc)
        x = None
    if x is None or not np.all(np.isfinite(x)) or _balance_residual(P, x) > tol:
        method = "power"
        x = _power_iteration(P, tol, max_iter, start=x)
    res = _balance_residual(P, x)
    grid = x.reshape(side, side)
    edge = float(grid[T, :].sum() + grid[:, T].sum() - grid[T, T])
    return TruncatedSolution(T, grid, res, edge, method)


def _power_iteration(P, tol, max_iter, start=None):
    n = P.shape[0]
    x = np.full(n, 1.0 / n) if start is None or not np.all(np.isfinite(start)) else np.abs(start)
    x /= x.sum()
    PT = P.T.tocsr()
    res = np.inf
    for it in range(1, max_iter + 1):
        y = PT @ x
        y /= y.sum()
        if it % 50 == 0:
            res = float(np.abs(y - x).max())
            if res < tol:
                return y
        x = y
    raise NoConvergence(max_iter, res, "power iteration")


# ------------------------------------------------------------ simulation


@dataclass(frozen=True)
class SimulationResult:
    steps: int
    seed: int
    window: int
    counts: np.ndarray  # (window+1, window+1) visit counts
    overflow: int  # visits outside the window
    drift: tuple  # mean one-step increments (Q1, Q2, Q1+Q2)
    drift_se: tuple  # batch-means standard errors
    final_state: tuple

    @property
    def empirical(self):
        return self.counts / self.steps

    @property
    def overflow_mass(self):
        return self.overflow / self.steps


@numba.njit(cache=True)
def _run_chunk(cum, N1, N2, u, state, counts, W, incr):
    n1, n2 = state[0], state[1]
    over = 0
    for k in range(u.shape[0]):
        if n1 <= W and n2 <= W:
            counts[n1, n2] += 1
        else:
            over += 1
        r1 = n1 if n1 < N1 else N1
        r2 = n2 if n2 < N2 else N2
        c = cum[r1, r2]
        m = 0
        while m < 8 and u[k] >= c[m]:
            m += 1
        m1 = n1 + m // 3 - 1
        m2 = n2 + m % 3 - 1
        if m1 < 0:
            m1 = 0
        if m2 < 0:
            m2 = 0
        incr[k, 0] = m1 - n1
        incr[k, 1] = m2 - n2
        n1, n2 = m1, m2
    state[0], state[1] = n1, n2
    return over


def simulate(kernel: TransitionKernel, steps: int, seed: int, window: int = 40,
             batches: int = 100, chunk: int = 1 << 20) -> SimulationResult:
    """Folded-chain trajectory from the origin driven by a Philox stream.

    Visits are counted before each move, so ``counts`` covers times
    0..steps-1. Drift standard errors come from ``batches`` equal batches.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    cum = np.cumsum(kernel.table.reshape(kernel.N1 + 1, kernel.N2 + 1, 9), axis=2)
    cum[..., -1] = np.inf
    state = np.zeros(2, dtype=np.int64)
    counts = np.zeros((window + 1, window + 1), dtype=np.int64)
    over = 0
    bsize = max(1, steps // batches)
    nb = steps // bsize
    bsum = np.zeros((nb + 1, 2))
    done = 0
    while done < steps:
        m = min(chunk, steps - done)
        u = rng.random(m)
        incr = np.empty((m, 2), dtype=np.int64)
        over += _run_chunk(cum, kernel.N1, kernel.N2, u, state, counts, window, incr)
        idx = np.minimum((done + np.arange(m)) // bsize, nb)
        np.add.at(bsum, idx, incr)
        done += m
    full = bsum[:nb] / bsize
    full = np.column_stack([full, full.sum(axis=1)])
    mean = tuple(float(v) for v in (bsum.sum(axis=0)[0] / steps, bsum.sum(axis=0)[1] / steps,
                                    bsum.sum() / steps))
    if nb > 1:
        se = tuple(float(v) for v in full.std(axis=0, ddof=1) / np.sqrt(nb))
    else:
        se = (float("nan"),) * 3
    return SimulationResult(steps, seed, window, counts, int(over), mean, se, (int(state[0]), int(state[1])))


# -------------------------------------------------------------- compare


@dataclass(frozen=True)
class ComparisonReport:
    window: int
    max_abs: float
    total_variation: float
    argmax: tuple

    def to_dict(self):
        return {"window": self.window, "max_abs": self.max_abs,
                "total_variation": self.total_variation, "argmax": list(self.argmax)}


def compare(a: np.ndarray, b: np.ndarray, window: int) -> ComparisonReport:
    """Max-abs and total-variation distance on {n1 + n2 <= window}."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    side = window + 1
    if min(a.shape + b.shape) < side:
        raise ValueError(f"both grids must cover the window n1+n2<={window}")
    a, b = a[:side, :side], b[:side, :side]
    n1, n2 = np.indices((side, side))
    mask = n1 + n2 <= window
    d = np.where(mask, np.abs(a - b), 0.0)
    k = np.unravel_index(int(np.argmax(d)), d.shape)
    return ComparisonReport(window, float(d.max()), float(0.5 * d.sum()), (int(k[0]), int(k[1])))

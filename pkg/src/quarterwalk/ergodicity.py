"""Induced one-dimensional chains, drifts and the ergodicity classification.

When queue 1 sits above its threshold, queue 2 moves as a birth-death chain
whose law at level n2 is the S1/S3 law at (N1, n2). Its stationary law psi
weights the horizontal drifts gamma_k to give the effective drift h1 of
queue 1; h2 is the mirror image with phi.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NotPositiveRecurrent
from .model import TransitionKernel

EQ_TOL = 1e-10


class Classification(str, Enum):
    ERGODIC = "Ergodic"
    TRANSIENT = "Transient"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class InducedChain:
    """Birth-death chain: levels 0..cutoff-1 stored, homogeneous from cutoff on."""

    axis: int
    up: np.ndarray  # length cutoff + 1, last entry is the tail value
    down: np.ndarray
    stay: np.ndarray

    @property
    def cutoff(self):
        return len(self.up) - 1

    def at(self, n):
        k = min(n, self.cutoff)
        return self.up[k], self.down[k], self.stay[k]

    def transition_matrix(self, size):
        """Dense truncated matrix on 0..size-1 (upper edge reflecting)."""
        P = np.zeros((size, size))
        for n in range(size):
            u, d, _ = self.at(n)
            if n + 1 < size:
                P[n, n + 1] = u
            if n > 0:
                P[n, n - 1] = d
            P[n, n] = 1.0 - P[n].sum()
        return P


@dataclass(frozen=True)
class InducedStationary:
    probs: np.ndarray  # psi_0..psi_cutoff
    ratio: float  # geometric ratio beyond the cutoff

    def head(self, n):
        """psi_0..psi_{n-1}, continuing the geometric tail as needed."""
        m = len(self.probs)
        if n <= m:
            return self.probs[:n].copy()
        extra = self.probs[-1] * self.ratio ** np.arange(1, n - m + 1)
        return np.concatenate([self.probs, extra])

    def total_mass(self):
        return float(self.probs[:-1].sum() + self.probs[-1] / (1.0 - self.ratio))


@dataclass(frozen=True)
class DriftProfile:
    gamma: np.ndarray  # horizontal drift at (N1, n2), n2 < N2
    gamma_sat: float  # saturated horizontal drift (E_x)
    delta: np.ndarray  # vertical drift at (n1, N2), n1 < N1
    delta_sat: float  # saturated vertical drift (E_y)

    @property
    def Ex(self):
        return self.gamma_sat

    @property
    def Ey(self):
        return self.delta_sat


def _mean_moves(law):
    """Mean (horizontal, vertical) displacement of 3x3 laws (leading axes kept)."""
    steps = np.array([-1.0, 0.0, 1.0])
    return np.einsum("...ij,i->...", law, steps), np.einsum("...ij,j->...", law, steps)


def drifts(kernel: TransitionKernel) -> DriftProfile:
    t = kernel.table
    gx, _ = _mean_moves(t[kernel.N1, :])
    _, dy = _mean_moves(t[:, kernel.N2])
    return DriftProfile(gx[: kernel.N2].copy(), float(gx[kernel.N2]), dy[: kernel.N1].copy(), float(dy[kernel.N1]))


def induced_chain(kernel: TransitionKernel, axis: int) -> InducedChain:
    """axis=2: queue 2 while queue 1 is saturated; axis=1: the mirror."""
    if axis == 2:
        laws = kernel.table[kernel.N1, :]  # (N2+1, 3, 3), index n2
        up = laws[:, :, 2].sum(axis=1)
        down = laws[:, :, 0].sum(axis=1)
    elif axis == 1:
        laws = kernel.table[:, kernel.N2]
        up = laws[:, 2, :].sum(axis=1)
        down = laws[:, 0, :].sum(axis=1)
    else:
        raise ValueError("axis must be 1 or 2")
    return InducedChain(axis, up.copy(), down.copy(), 1.0 - up - down)


def induced_stationary(chain: InducedChain) -> InducedStationary:
    """Closed-form product solution with an exact geometric tail."""
    u, d = chain.up, chain.down
    m = chain.cutoff
    if not u[m] < d[m]:
        raise NotPositiveRecurrent(f"induced chain on axis {chain.axis}: tail up {u[m]:.6g} >= down {d[m]:.6g}")
    w = np.ones(m + 1)
    for n in range(1, m + 1):
        if d[n] <= 0.0:
            raise NotPositiveRecurrent(f"induced chain on axis {chain.axis} cannot move down from level {n}")
        w[n] = w[n - 1] * u[n - 1] / d[n]
    r = u[m] / d[m]
    total = w[:-1].sum() + w[-1] / (1.0 - r)
    return InducedStationary(w / total, float(r))


def stability_margins(kernel: TransitionKernel):
    """Effective drifts (h1, h2) of the saturated queues.

    h1 = sum_{k<N2} gamma_k psi_k + E_x (1 - sum_{k<N2} psi_k), and h2 is the
    mirror. A margin whose induced chain is not positive recurrent is nan.
    """
    dp = drifts(kernel)
    out = []
    for axis, loc, sat in ((2, dp.gamma, dp.gamma_sat), (1, dp.delta, dp.delta_sat)):
        try:
            st = induced_stationary(induced_chain(kernel, axis))
        except NotPositiveRecurrent:
            out.append(float("nan"))
            continue
        head = st.probs[: len(loc)]
        out.append(float(np.dot(loc, head) + sat * (1.0 - head.sum())))
    return tuple(out)


@dataclass(frozen=True)
class ClassificationReport:
    verdict: Classification
    case: int
    h1: float
    h2: float
    Ex: float
    Ey: float
    flags: tuple = ()

    def to_dict(self):
        return {"classification": self.verdict.value, "case": self.case, "h1": self.h1, "h2": self.h2,
                "Ex": self.Ex, "Ey": self.Ey, "flags": list(self.flags)}


def _sign(v, tol):
    if abs(v) <= tol:
        return 0
    return 1 if v > 0 else -1


def classify_report(kernel: TransitionKernel, tol: float = EQ_TOL) -> ClassificationReport:
    dp = drifts(kernel)
    h1, h2 = stability_margins(kernel)
    sx, sy = _sign(dp.Ex, tol), _sign(dp.Ey, tol)
    flags = []
    B, E, T = Classification.BOUNDARY, Classification.ERGODIC, Classification.TRANSIENT

    def rep(v, case):
        return ClassificationReport(v, case, h1, h2, dp.Ex, dp.Ey, tuple(flags))

    if sx >= 0 and sy >= 0:
        if sx == 0 and sy == 0:
            # Zero saturated drift in both coordinates: null behaviour, not decidable here.
            flags.append("both saturated drifts at equality")
            return rep(B, 4)
        return rep(T, 4)
    if sx < 0 and sy < 0:
        s1, s2 = _sign(h1, tol), _sign(h2, tol)
        if s1 > 0 or s2 > 0:
            return rep(T, 1)
        if s1 < 0 and s2 < 0:
            return rep(E, 1)
        flags.append("margin at equality")
        return rep(B, 1)
    # exactly one saturated drift is nonnegative
    case, h, strict = (2, h1, sx > 0) if sx >= 0 else (3, h2, sy > 0)
    s = _sign(h, tol)
    if s < 0:
        return rep(E, case)
    if s > 0:
        return rep(T, case)
    flags.append("margin at equality")
    return rep(T if strict else B, case)


def classify(kernel: TransitionKernel, tol: float = EQ_TOL) -> Classification:
    return classify_report(kernel, tol).verdict

"""Partially homogeneous nearest-neighbour walks on the quarter plane.

A kernel stores one 3x3 jump law per *representative* state. The state space
is split by two thresholds into

    S0: n1 < N1, n2 < N2       (every state stored)
    S1: n1 >= N1, n2 < N2      (represented by (N1, n2))
    S2: n1 < N1, n2 >= N2      (represented by (n1, N2))
    S3: n1 >= N1, n2 >= N2     (represented by (N1, N2))

so the whole law fits in a ``(N1+1, N2+1, 3, 3)`` array indexed by the
clipped state ``(min(n1, N1), min(n2, N2))``. Jump arrays are indexed
``p[i + 1, j + 1]`` for a move of ``(i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order

from .errors import ModelError

S0, S1, S2, S3 = "S0", "S1", "S2", "S3"

PROB_TOL = 1e-12

MOVES = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]


@dataclass(frozen=True)
class RegionSplit:
    """Thresholds (N1, N2) defining the four regions."""

    N1: int
    N2: int

    def __post_init__(self):
        if int(self.N1) != self.N1 or int(self.N2) != self.N2:
            raise ModelError("thresholds must be integers")
        if self.N1 < 1 or self.N2 < 1:
            raise ModelError(f"thresholds must be >= 1, got N1={self.N1}, N2={self.N2}")

    @property
    def shape(self):
        return (self.N1 + 1, self.N2 + 1)

    def representative(self, n1, n2):
        return min(n1, self.N1), min(n2, self.N2)


def region_of(split: RegionSplit, state) -> str:
    n1, n2 = state
    if n1 < 0 or n2 < 0:
        raise ModelError(f"state {state} lies outside the quarter plane")
    hi1, hi2 = n1 >= split.N1, n2 >= split.N2
    if hi1 and hi2:
        return S3
    if hi1:
        return S1
    if hi2:
        return S2
    return S0


@dataclass(frozen=True)
class TransitionKernel:
    """Jump laws on the representative grid.

    ``table[n1, n2]`` is the 3x3 law at the clipped state (n1, n2).
    """

    split: RegionSplit
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        want = self.split.shape + (3, 3)
        if t.shape != want:
            raise ModelError(f"kernel table has shape {t.shape}, expected {want}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def from_regions(cls, split, s0, s1, s2, s3):
        """Build from the four region tables (S0 grid, S1 by n2, S2 by n1, S3)."""
        t = np.zeros(split.shape + (3, 3))
        t[: split.N1, : split.N2] = np.asarray(s0, float).reshape(split.N1, split.N2, 3, 3)
        t[split.N1, : split.N2] = np.asarray(s1, float).reshape(split.N2, 3, 3)
        t[: split.N1, split.N2] = np.asarray(s2, float).reshape(split.N1, 3, 3)
        t[split.N1, split.N2] = np.asarray(s3, float).reshape(3, 3)
        return cls(split, t)

    @classmethod
    def homogeneous(cls, split, p):
        """Same law everywhere (useful for tests)."""
        t = np.broadcast_to(np.asarray(p, float), split.shape + (3, 3)).copy()
        return cls(split, t)

    @property
    def N1(self):
        return self.split.N1

    @property
    def N2(self):
        return self.split.N2

    @property
    def s0(self):
        return self.table[: self.N1, : self.N2]

    @property
    def s1(self):
        return self.table[self.N1, : self.N2]

    @property
    def s2(self):
        return self.table[: self.N1, self.N2]

    @property
    def s3(self):
        return self.table[self.N1, self.N2]

    def p(self, i, j, n1, n2):
        """p_{i,j}(n1, n2) for any state of the quarter plane."""
        r1, r2 = self.split.representative(n1, n2)
        return float(self.table[r1, r2, i + 1, j + 1])

    def swapped(self):
        """Kernel with the two coordinates exchanged."""
        t = np.transpose(self.table, (1, 0, 3, 2))
        return TransitionKernel(RegionSplit(self.N2, self.N1), t)

    def with_s3(self, s3):
        t = self.table.copy()
        t[self.N1, self.N2] = np.asarray(s3, float)
        return TransitionKernel(self.split, t)


def jump_distribution(kernel: TransitionKernel, state) -> np.ndarray:
    """The 3x3 law at ``state`` (copy), via partial homogeneity."""
    n1, n2 = state
    region_of(kernel.split, state)
    return kernel.table[kernel.split.representative(n1, n2)].copy()


# ---------------------------------------------------------------- ALOHA


@dataclass(frozen=True)
class AlohaParams:
    """Per-user arrival (lam) and transmission (a) probabilities.

    Each table has shape ``(N1+1, N2+1)`` on the representative grid.
    """

    split: RegionSplit
    lam1: np.ndarray = field(repr=False)
    lam2: np.ndarray = field(repr=False)
    a1: np.ndarray = field(repr=False)
    a2: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("lam1", "lam2", "a1", "a2"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != self.split.shape:
                raise ModelError(f"{name} has shape {v.shape}, expected {self.split.shape}")
            if np.any(~np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
                raise ModelError(f"{name} has values outside [0, 1]")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.a1[0, :] != 0.0):
            raise ModelError("a1 must vanish when queue 1 is empty")
        if np.any(self.a2[:, 0] != 0.0):
            raise ModelError("a2 must vanish when queue 2 is empty")

    def swapped(self):
        return AlohaParams(RegionSplit(self.split.N2, self.split.N1),
                           self.lam2.T, self.lam1.T, self.a2.T, self.a1.T)


def aloha_jump_laws(lam1, lam2, a1, a2):
    """Vectorised ALOHA jump laws; inputs broadcast, output has trailing (3, 3)."""
    lam1, lam2, a1, a2 = np.broadcast_arrays(*(np.asarray(v, float) for v in (lam1, lam2, a1, a2)))
    nl1, nl2, na1, na2 = 1 - lam1, 1 - lam2, 1 - a1, 1 - a2
    c = na1 * na2 + a1 * a2
    d10, d01, d11, d00 = lam1 * nl2, lam2 * nl1, lam1 * lam2, nl1 * nl2
    s1 = a1 * na2  # only user 1 transmits (success)
    s2 = a2 * na1  # only user 2 transmits (success)
    p = np.zeros(lam1.shape + (3, 3))
    p[..., 2, 1] = c * d10 + s2 * d11
    p[..., 1, 2] = c * d01 + s1 * d11
    p[..., 2, 2] = c * d11
    p[..., 0, 2] = s1 * d01
    p[..., 2, 0] = s2 * d10
    p[..., 0, 1] = s1 * d00
    p[..., 1, 0] = s2 * d00
    p[..., 1, 1] = c * d00 + s2 * d01 + s1 * d10
    return p


def aloha_kernel(params: AlohaParams) -> TransitionKernel:
    return TransitionKernel(params.split, aloha_jump_laws(params.lam1, params.lam2, params.a1, params.a2))


def _state_grid(split):
    n1, n2 = np.meshgrid(np.arange(split.N1 + 1), np.arange(split.N2 + 1), indexing="ij")
    return n1.astype(float), n2.astype(float)


def _share(nk, tot):
    return np.divide(nk, tot, out=np.zeros_like(nk), where=tot > 0)


def aloha_family(lam, a, N1=2, N2=2) -> AlohaParams:
    """Load-adaptive family: a_k(n) = a n_k/(n1+n2), lam_k(n) = lam 2^-(n1+n2).

    The saturated region uses the plain values (lam, a) for both users.
    """
    split = RegionSplit(N1, N2)
    n1, n2 = _state_grid(split)
    tot = n1 + n2
    ak1, ak2 = a * _share(n1, tot), a * _share(n2, tot)
    lk = lam * 2.0 ** (-tot)
    for t in (ak1, ak2, lk):
        t[N1, N2] = 0.0
    ak1[N1, N2] = ak2[N1, N2] = a
    lk[N1, N2] = lam
    return AlohaParams(split, lk, lk.copy(), ak1, ak2)


def aloha_stability_example(lam1_sat, lam2_sat, base1=0.2, base2=0.5, w1=0.8, w2=0.6, N1=2, N2=2):
    """Asymmetric example: lam_k(n) = base_k^{n_k} off the saturated region,
    a_k(n) = w_k n_k/(n1+n2) everywhere, lam_k = lam_k_sat in the saturated region.
    """
    split = RegionSplit(N1, N2)
    n1, n2 = _state_grid(split)
    tot = n1 + n2
    l1, l2 = base1 ** n1, base2 ** n2
    l1[N1, N2], l2[N1, N2] = lam1_sat, lam2_sat
    return AlohaParams(split, l1, l2, w1 * _share(n1, tot), w2 * _share(n2, tot))


# ------------------------------------------------------------ validation


@dataclass
class ValidationReport:
    mode: str
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {"mode": self.mode, "ok": self.ok, "violations": list(self.violations), "notes": list(self.notes)}


def _label(split, n1, n2):
    return f"{region_of(split, (n1, n2))}({n1},{n2})"


def folded_successors(kernel, n1, n2, T=None):
    """Yield (target, prob) with [.]^+ folding, and clipping at T if given."""
    law = kernel.table[kernel.split.representative(n1, n2)]
    for i, j in MOVES:
        pr = law[i + 1, j + 1]
        if pr <= 0.0:
            continue
        m1, m2 = max(n1 + i, 0), max(n2 + j, 0)
        if T is not None:
            m1, m2 = min(m1, T), min(m2, T)
        yield (m1, m2), pr


def check_irreducible(kernel, size=None):
    """States reachable from the origin on a truncated grid that cannot return.

    Returns the list of such states (empty means the class of the origin is
    closed and communicating on the grid).
    """
    T = size or 2 * max(kernel.N1, kernel.N2) + 6
    n = (T + 1) ** 2
    rows, cols = [], []
    for a in range(T + 1):
        for b in range(T + 1):
            for (c, d), _ in folded_successors(kernel, a, b, T):
                rows.append(a * (T + 1) + b)
                cols.append(c * (T + 1) + d)
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    fwd = set(breadth_first_order(g, 0, directed=True, return_predecessors=False).tolist())
    back = set(breadth_first_order(g.T.tocsr(), 0, directed=True, return_predecessors=False).tolist())
    return sorted(divmod(s, T + 1) for s in fwd - back)


def validate(kernel: TransitionKernel, mode: str = "oracle") -> ValidationReport:
    """Check a kernel; ``mode`` is ``"oracle"`` or ``"analytic"``."""
    if mode not in ("oracle", "analytic"):
        raise ValueError(f"unknown validation mode {mode!r}")
    rep = ValidationReport(mode)
    split = kernel.split
    t = kernel.table
    for n1 in range(split.N1 + 1):
        for n2 in range(split.N2 + 1):
            law = t[n1, n2]
            where = _label(split, n1, n2)
            if not np.all(np.isfinite(law)):
                rep.violations.append(f"non-finite entries at {where}")
                continue
            if law.min() < -PROB_TOL or law.max() > 1 + PROB_TOL:
                rep.violations.append(f"probability outside [0,1] at {where}")
            if abs(law.sum() - 1.0) > PROB_TOL:
                rep.violations.append(f"not stochastic at {where}: sum={law.sum():.15g}")
    if mode == "analytic":
        if kernel.s3[0, 0] != 0.0:
            rep.violations.append("Psi(0,0)>0: saturated law has a south-west jump")
        for n2 in range(split.N2 + 1):
            if np.any(t[0, n2, 0, :] != 0.0):
                rep.violations.append(f"boundary admissibility: westward mass at {_label(split, 0, n2)}")
        for n1 in range(split.N1 + 1):
            if np.any(t[n1, 0, :, 0] != 0.0):
                rep.violations.append(f"boundary admissibility: southward mass at {_label(split, n1, 0)}")
    if not rep.violations:
        stuck = check_irreducible(kernel)
        if stuck:
            rep.violations.append(f"reducible: {len(stuck)} states reachable from the origin cannot return, e.g. {stuck[0]}")
    return rep

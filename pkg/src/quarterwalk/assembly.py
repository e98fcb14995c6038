"""Functional-equation building blocks, affine in the unknown probabilities.

Unknowns are the (N1+1)(N2+1) probabilities pi(n1, n2), n1 <= N1, n2 <= N2,
plus one real constant K from the boundary-value solve. Everything that
depends on them is carried as a :class:`LinearForm`.

Row relations in the region n1 >= N1, n2 < N2, with g_n the generating
function of row n (powers x^{n1-N1}):

    -f1(n-1) g_{n-1} + f2(n) g_n - f3(n+1) g_{n+1} = b_n,

solved as g_n = e_n g0 + t_n. The saturated generating function g(x, y)
then satisfies R g = A g0 + B h0 + C.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DivisorZero
from .model import TransitionKernel

DIVISOR_TOL = 1e-300


# ------------------------------------------------------------ unknowns


@dataclass(frozen=True)
class UnknownLayout:
    N1: int
    N2: int

    @property
    def n_grid(self):
        return (self.N1 + 1) * (self.N2 + 1)

    @property
    def size(self):
        """Number of unknowns (grid plus K)."""
        return self.n_grid + 1

    def index(self, n1, n2):
        if not (0 <= n1 <= self.N1 and 0 <= n2 <= self.N2):
            raise IndexError(f"({n1}, {n2}) is outside the unknown grid")
        return n1 * (self.N2 + 1) + n2

    def state(self, idx):
        if idx == self.n_grid:
            return "K"
        return divmod(idx, self.N2 + 1)

    @property
    def K(self):
        return self.n_grid

    def labels(self):
        return [f"pi({a},{b})" for a in range(self.N1 + 1) for b in range(self.N2 + 1)] + ["K"]

    def hash(self):
        return hashlib.sha256(",".join(self.labels()).encode()).hexdigest()[:16]

    def grid(self, vec):
        """Reshape the probability part of an unknown vector to (N1+1, N2+1)."""
        return np.asarray(vec)[: self.n_grid].reshape(self.N1 + 1, self.N2 + 1)


class LinearForm:
    """Array of affine forms: ``v[..., 0]`` is the constant, ``v[..., 1:]`` the
    coefficients of the unknowns. Leading axes index evaluation points."""

    __slots__ = ("v",)
    __array_priority__ = 100

    def __init__(self, v):
        self.v = np.asarray(v, dtype=complex)

    @classmethod
    def zeros(cls, n_unknowns, shape=()):
        return cls(np.zeros(tuple(shape) + (n_unknowns + 1,), dtype=complex))

    @classmethod
    def constant(cls, value, n_unknowns):
        value = np.asarray(value, dtype=complex)
        v = np.zeros(value.shape + (n_unknowns + 1,), dtype=complex)
        v[..., 0] = value
        return cls(v)

    @classmethod
    def unknown(cls, idx, n_unknowns, coef=1.0, shape=()):
        f = cls.zeros(n_unknowns, shape)
        f.v[..., idx + 1] = coef
        return f

    @property
    def n_unknowns(self):
        return self.v.shape[-1] - 1

    @property
    def shape(self):
        return self.v.shape[:-1]

    @property
    def const(self):
        return self.v[..., 0]

    @property
    def coeffs(self):
        return self.v[..., 1:]

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return LinearForm(self.v[key + (slice(None),)])

    @staticmethod
    def _lift(other):
        return np.asarray(other)[..., None]

    def __add__(self, other):
        if isinstance(other, LinearForm):
            return LinearForm(self.v + other.v)
        out = self.v.copy() if np.ndim(other) == 0 else np.broadcast_to(self.v, np.broadcast_shapes(self.v.shape, np.shape(other) + (1,))).copy()
        out[..., 0] += other
        return LinearForm(out)

    __radd__ = __add__

    def __neg__(self):
        return LinearForm(-self.v)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, LinearForm):
            raise TypeError("product of two affine forms is not affine")
        return LinearForm(self.v * self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return LinearForm(self.v / self._lift(other))

    @property
    def real(self):
        return LinearForm(self.v.real.astype(complex))

    @property
    def imag(self):
        return LinearForm(self.v.imag.astype(complex))

    def conj(self):
        return LinearForm(self.v.conj())

    def mean(self, axis=-1):
        ax = axis if axis >= 0 else axis - 1
        return LinearForm(self.v.mean(axis=ax))

    def sum(self, axis=-1):
        ax = axis if axis >= 0 else axis - 1
        return LinearForm(self.v.sum(axis=ax))

    def evaluate(self, u):
        """Value at the unknown vector ``u`` (length n_unknowns)."""
        return self.v[..., 0] + self.v[..., 1:] @ np.asarray(u, dtype=complex)

    def is_constant(self):
        return not np.any(self.coeffs)

    def __repr__(self):
        return f"LinearForm(shape={self.shape}, n_unknowns={self.n_unknowns})"


def stack_forms(forms, axis=0):
    ax = axis if axis >= 0 else axis - 1
    return LinearForm(np.stack([f.v for f in forms], axis=ax))


# ------------------------------------------------------ f polynomials


def _law(kernel, n1, n2):
    return kernel.table[min(n1, kernel.N1), min(n2, kernel.N2)]


def f_polys(kernel: TransitionKernel, level: int, x):
    """(f1, f2, f3) at the representative state (N1, level)."""
    p = _law(kernel, kernel.N1, level)
    x = np.asarray(x, dtype=complex)
    f1 = x * x * p[2, 2] + x * p[1, 2] + p[0, 2]
    f2 = x * (1 - p[1, 1]) - x * x * p[2, 1] - p[0, 1]
    f3 = p[0, 0] + x * p[1, 0] + x * x * p[2, 0]
    return f1, f2, f3


def ftilde_polys(kernel: TransitionKernel, level: int, y):
    """Mirror (f1~, f2~, f3~) at the representative state (level, N2)."""
    p = _law(kernel, level, kernel.N2)
    y = np.asarray(y, dtype=complex)
    f1 = y * y * p[2, 2] + y * p[2, 1] + p[2, 0]
    f2 = y * (1 - p[1, 1]) - y * y * p[1, 2] - p[1, 0]
    f3 = y * y * p[0, 2] + y * p[0, 1] + p[0, 0]
    return f1, f2, f3


def _pi(layout, n1, n2, coef, shape):
    """coef * pi(n1, n2) as a form, zero if a coordinate is negative."""
    if n1 < 0 or n2 < 0:
        return LinearForm.zeros(layout.size, shape)
    return LinearForm.unknown(layout.index(n1, n2), layout.size, coef, shape)


def b_form(kernel: TransitionKernel, n2: int, x, layout=None) -> LinearForm:
    """Inhomogeneous term of row n2 (0 <= n2 < N2) as a form in the unknowns."""
    layout = layout or UnknownLayout(kernel.N1, kernel.N2)
    N1 = kernel.N1
    x = np.asarray(x, dtype=complex)
    sh = x.shape

    def p(i, j, a, b):
        return _law(kernel, a, b)[i + 1, j + 1] if a >= 0 and b >= 0 else 0.0

    inflow = (_pi(layout, N1 - 1, n2 - 1, p(1, 1, N1 - 1, n2 - 1), sh)
              + _pi(layout, N1 - 1, n2 + 1, p(1, -1, N1 - 1, n2 + 1), sh)
              + _pi(layout, N1 - 1, n2, p(1, 0, N1 - 1, n2), sh))
    outflow = (_pi(layout, N1, n2 - 1, p(-1, 1, N1, n2 - 1), sh)
               + _pi(layout, N1, n2, p(-1, 0, N1, n2), sh)
               + _pi(layout, N1, n2 + 1, p(-1, -1, N1, n2 + 1), sh))
    return inflow * x - outflow


def u_form(kernel: TransitionKernel, n1: int, y, layout=None) -> LinearForm:
    """Mirror inhomogeneous term of column n1 (0 <= n1 < N1)."""
    layout = layout or UnknownLayout(kernel.N1, kernel.N2)
    N2 = kernel.N2
    y = np.asarray(y, dtype=complex)
    sh = y.shape

    def p(i, j, a, b):
        return _law(kernel, a, b)[i + 1, j + 1] if a >= 0 and b >= 0 else 0.0

    inflow = (_pi(layout, n1 - 1, N2 - 1, p(1, 1, n1 - 1, N2 - 1), sh)
              + _pi(layout, n1 + 1, N2 - 1, p(-1, 1, n1 + 1, N2 - 1), sh)
              + _pi(layout, n1, N2 - 1, p(0, 1, n1, N2 - 1), sh))
    outflow = (_pi(layout, n1 - 1, N2, p(1, -1, n1 - 1, N2), sh)
               + _pi(layout, n1, N2, p(0, -1, n1, N2), sh)
               + _pi(layout, n1 + 1, N2, p(-1, -1, n1 + 1, N2), sh))
    return inflow * y - outflow


# ---------------------------------------------------------- recursions


@dataclass
class RecursionTables:
    """e[n], t[n] for n = 0..top; ``scaled`` means tables hold x^n e_n, x^n t_n."""

    point: np.ndarray
    e: np.ndarray  # (top+1, *shape)
    t: LinearForm  # shape (top+1, *shape)
    scaled: bool = False

    def g(self, g0):
        """g_n = e_n g0 + t_n for all levels, given g0 (values or form)."""
        if isinstance(g0, LinearForm):
            return LinearForm(self.e[..., None] * g0.v[None]) + self.t
        return self.t + self.e * np.asarray(g0)


def _run_recursion(fpolys, bform, divisor, levels, x, layout, scaled):
    x = np.asarray(x, dtype=complex)
    sh = x.shape
    e = np.zeros((levels + 1,) + sh, dtype=complex)
    t = LinearForm.zeros(layout.size, (levels + 1,) + sh)
    e[0] = 1.0
    prev_e = np.zeros(sh, dtype=complex)
    prev_t = LinearForm.zeros(layout.size, sh)
    for n in range(1, levels + 1):
        f1m, _, _ = fpolys(n - 2) if n >= 2 else (np.zeros(sh), None, None)
        _, f2m, _ = fpolys(n - 1)
        div = divisor(n)
        bad = np.abs(div) <= DIVISOR_TOL
        if np.any(bad):
            raise DivisorZero(n, f"recursion divisor vanishes at level {n} for x={x[bad].ravel()[0]}")
        shift = x if scaled else 1.0
        bscale = x ** (n - 1) if scaled else 1.0
        e[n] = (f2m * e[n - 1] - shift * f1m * prev_e) / div
        tn = (t[n - 1] * f2m - prev_t * (shift * f1m) - bform(n - 1) * bscale) / div
        t.v[n] = tn.v
        prev_e, prev_t = e[n - 1], t[n - 1]
    return e, t


def recursions(kernel: TransitionKernel, x, variant: str = "general", layout=None) -> RecursionTables:
    """Tables e_n, t_n for n = 0..N2 at points x.

    ``variant="psi0"`` returns the scaled tables x^n e_n, x^n t_n obtained
    by dividing by p_{0,-1} + x p_{1,-1}; it needs no south-west jumps in
    the S1/S3 laws and stays finite at x = 0.
    """
    layout = layout or UnknownLayout(kernel.N1, kernel.N2)
    x = np.asarray(x, dtype=complex)
    if variant == "general":
        def divisor(n):
            return f_polys(kernel, n, x)[2]
        scaled = False
    elif variant == "psi0":
        for n in range(1, kernel.N2 + 1):
            if _law(kernel, kernel.N1, n)[0, 0] != 0.0:
                raise ValueError(f"psi0 variant needs p_(-1,-1)(N1,{n}) = 0")

        def divisor(n):
            p = _law(kernel, kernel.N1, n)
            return p[1, 0] + x * p[2, 0]
        scaled = True
    else:
        raise ValueError(f"unknown variant {variant!r}")
    e, t = _run_recursion(lambda n: f_polys(kernel, n, x), lambda n: b_form(kernel, n, x, layout),
                          divisor, kernel.N2, x, layout, scaled)
    return RecursionTables(x, e, t, scaled)


def recursions_tilde(kernel: TransitionKernel, y, variant: str = "general", layout=None) -> RecursionTables:
    """Mirror tables e~_n, t~_n for n = 0..N1 at points y."""
    layout = layout or UnknownLayout(kernel.N1, kernel.N2)
    y = np.asarray(y, dtype=complex)
    if variant == "general":
        def divisor(n):
            return ftilde_polys(kernel, n, y)[2]
        scaled = False
    elif variant == "psi0":
        for n in range(1, kernel.N1 + 1):
            if _law(kernel, n, kernel.N2)[0, 0] != 0.0:
                raise ValueError(f"psi0 variant needs p_(-1,-1)({n},N2) = 0")

        def divisor(n):
            p = _law(kernel, n, kernel.N2)
            return p[0, 1] + y * p[0, 2]
        scaled = True
    else:
        raise ValueError(f"unknown variant {variant!r}")
    e, t = _run_recursion(lambda n: ftilde_polys(kernel, n, y), lambda n: u_form(kernel, n, y, layout),
                          divisor, kernel.N1, y, layout, scaled)
    return RecursionTables(y, e, t, scaled)


def divisor_roots(kernel: TransitionKernel, axis: int = 1):
    """Zeros of all recursion divisors (f3 or f3~), excluding the origin."""
    out = []
    top = kernel.N2 if axis == 1 else kernel.N1
    for n in range(1, top + 1):
        p = _law(kernel, kernel.N1, n) if axis == 1 else _law(kernel, n, kernel.N2)
        coefs = [p[0, 0], p[1, 0], p[2, 0]] if axis == 1 else [p[0, 0], p[0, 1], p[0, 2]]
        co = np.trim_zeros(np.array(coefs, float), "b")
        if len(co) > 1:
            out.extend(np.polynomial.polynomial.polyroots(co).tolist())
    return np.array([r for r in out if abs(r) > 1e-14], dtype=complex)


# ------------------------------------------------------------ matrices


def matrix_K(kernel: TransitionKernel, x):
    """Lower-triangular N2 x N2 system K(x) l = c1 g0 + b for l = (g1..gN2)."""
    N2 = kernel.N2
    K = np.zeros((N2, N2), dtype=complex)
    for i in range(1, N2 + 1):
        K[i - 1, i - 1] = -f_polys(kernel, i, x)[2]
        if i >= 2:
            K[i - 1, i - 2] = f_polys(kernel, i - 1, x)[1]
        if i >= 3:
            K[i - 1, i - 3] = -f_polys(kernel, i - 2, x)[0]
    return K


def vector_c1(kernel, x):
    c = np.zeros(kernel.N2, dtype=complex)
    f1, f2, _ = f_polys(kernel, 0, x)
    c[0] = -f2
    if kernel.N2 >= 2:
        c[1] = f1
    return c


def matrix_M(kernel: TransitionKernel, y):
    """Mirror system M(y) j = c2 h0 + u for j = (h1..hN1)."""
    N1 = kernel.N1
    M = np.zeros((N1, N1), dtype=complex)
    for i in range(1, N1 + 1):
        M[i - 1, i - 1] = -ftilde_polys(kernel, i, y)[2]
        if i >= 2:
            M[i - 1, i - 2] = ftilde_polys(kernel, i - 1, y)[1]
        if i >= 3:
            M[i - 1, i - 3] = -ftilde_polys(kernel, i - 2, y)[0]
    return M


def vector_c2(kernel, y):
    c = np.zeros(kernel.N1, dtype=complex)
    f1, f2, _ = ftilde_polys(kernel, 0, y)
    c[0] = -f2
    if kernel.N1 >= 2:
        c[1] = f1
    return c


# ----------------------------------------------------------------- ABC


@dataclass
class ABC:
    A: np.ndarray
    B: np.ndarray
    C: LinearForm


def corner_form(kernel: TransitionKernel, x, y, layout=None) -> LinearForm:
    """Corner terms of C linking the threshold row and column."""
    layout = layout or UnknownLayout(kernel.N1, kernel.N2)
    N1, N2 = kernel.N1, kernel.N2
    x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
    sh = x.shape
    p = lambda i, j, a, b: _law(kernel, a, b)[i + 1, j + 1]  # noqa: E731
    out = _pi(layout, N1 - 1, N2 - 1, p(1, 1, N1 - 1, N2 - 1), sh) * (x * y)
    out = out - _pi(layout, N1 - 1, N2, p(1, -1, N1 - 1, N2), sh) * x
    out = out - _pi(layout, N1, N2 - 1, p(-1, 1, N1, N2 - 1), sh) * y
    out = out + _pi(layout, N1, N2, p(-1, -1, N1, N2), sh)
    return out


def abc_from_tables(kernel, x, y, tx: RecursionTables, ty: RecursionTables, layout=None) -> ABC:
    layout = layout or UnknownLayout(kernel.N1, kernel.N2)
    N1, N2 = kernel.N1, kernel.N2
    x, y = np.asarray(x, dtype=complex), np.asarray(y, dtype=complex)
    f1, _, _ = f_polys(kernel, N2 - 1, x)
    _, _, f3 = f_polys(kernel, N2, x)
    g1, _, _ = ftilde_polys(kernel, N1 - 1, y)
    _, _, g3 = ftilde_polys(kernel, N1, y)
    A = y * f1 * tx.e[N2 - 1] - f3 * tx.e[N2]
    B = x * g1 * ty.e[N1 - 1] - g3 * ty.e[N1]
    C = (corner_form(kernel, x, y, layout)
         + tx.t[N2 - 1] * (y * f1) - tx.t[N2] * f3
         + ty.t[N1 - 1] * (x * g1) - ty.t[N1] * g3)
    return ABC(A, B, C)


def abc(kernel: TransitionKernel, x, y, layout=None) -> ABC:
    """A(x, y), B(x, y) and the form C(x, y) of R g = A g0 + B h0 + C."""
    tx = recursions(kernel, x, "general", layout)
    ty = recursions_tilde(kernel, y, "general", layout)
    return abc_from_tables(kernel, x, y, tx, ty, layout)

"""Algebra of the kernel R(x, y) = xy - Psi(x, y) of the saturated region.

Psi(x, y) = sum_{i,j} p_{i,j} x^{i+1} y^{j+1}. R is quadratic in each
variable:

    R = ahat(x) y^2 + bhat(x) y + chat(x) = a(y) x^2 + b(y) x + c(y).

The discriminant D_X(y) = b^2 - 4ac is a quartic whose real roots
y1 <= y2 < y3 <= y4 are the branch points of the two-valued X(y). For y on
the slit [y1, y2] the two roots X(y) are complex conjugates and trace the
closed contour M; the same holds for L with the roles of x and y swapped.

Polynomial coefficient arrays are stored in ascending order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ContourError, DegenerateDiscriminant, ZeroCountMismatch

ROOT_SEP_TOL = 1e-10


def _pv(coefs, t):
    """Evaluate an ascending-order polynomial at t (any shape, complex ok)."""
    t = np.asarray(t)
    out = np.zeros(t.shape, dtype=np.result_type(t, float))
    for c in coefs[::-1]:
        out = out * t + c
    return out


@dataclass(frozen=True)
class KernelPolynomials:
    """Coefficient polynomials of R built from a 3x3 saturated law."""

    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(3, 3)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def q(self, i, j):
        return float(self.p[i + 1, j + 1])

    # quadratic in y with coefficients depending on x
    @property
    def hat_a(self):
        q = self.q
        return np.array([-q(-1, 1), -q(0, 1), -q(1, 1)])

    @property
    def hat_b(self):
        q = self.q
        return np.array([-q(-1, 0), 1.0 - q(0, 0), -q(1, 0)])

    @property
    def hat_c(self):
        q = self.q
        return np.array([-q(-1, -1), -q(0, -1), -q(1, -1)])

    # quadratic in x with coefficients depending on y
    @property
    def a(self):
        q = self.q
        return np.array([-q(1, -1), -q(1, 0), -q(1, 1)])

    @property
    def b(self):
        q = self.q
        return np.array([-q(0, -1), 1.0 - q(0, 0), -q(0, 1)])

    @property
    def c(self):
        q = self.q
        return np.array([-q(-1, -1), -q(-1, 0), -q(-1, 1)])

    def psi(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        out = 0.0
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                out = out + self.p[i + 1, j + 1] * x ** (i + 1) * y ** (j + 1)
        return out

    def R(self, x, y):
        return np.asarray(x) * np.asarray(y) - self.psi(x, y)

    def R_via_y(self, x, y):
        return _pv(self.hat_a, x) * y**2 + _pv(self.hat_b, x) * y + _pv(self.hat_c, x)

    def R_via_x(self, x, y):
        return _pv(self.a, y) * x**2 + _pv(self.b, y) * x + _pv(self.c, y)

    def D_X(self, y):
        """Discriminant of R as a quadratic in x."""
        a, b, c = _pv(self.a, y), _pv(self.b, y), _pv(self.c, y)
        return b * b - 4 * a * c

    def D_Y(self, x):
        a, b, c = _pv(self.hat_a, x), _pv(self.hat_b, x), _pv(self.hat_c, x)
        return b * b - 4 * a * c

    def DX_coeffs(self):
        return P.polysub(P.polymul(self.b, self.b), 4 * P.polymul(self.a, self.c))

    def DY_coeffs(self):
        return P.polysub(P.polymul(self.hat_b, self.hat_b), 4 * P.polymul(self.hat_a, self.hat_c))

    def swapped(self):
        return KernelPolynomials(self.p.T)

    @property
    def Ex(self):
        return float(self.p[2].sum() - self.p[0].sum())

    @property
    def Ey(self):
        return float(self.p[:, 2].sum() - self.p[:, 0].sum())

    @property
    def gamma(self):
        """Horizontal drift without the south-west term (Ex when p_{-1,-1}=0)."""
        q = self.q
        return q(1, 0) + q(1, 1) + q(1, -1) - q(-1, 1) - q(-1, 0)


def kernel_coeffs(kernel) -> KernelPolynomials:
    """Polynomials of the saturated-region law of a TransitionKernel."""
    return KernelPolynomials(kernel.s3)


# --------------------------------------------------------- branch points


@dataclass(frozen=True)
class BranchPointSet:
    axis: str  # "x": roots of D_Y (branch points of Y(x)); "y": roots of D_X
    points: np.ndarray  # b1 <= b2 < b3 <= b4, b4 may be +inf
    coeffs: np.ndarray = field(repr=False)

    def D(self, t):
        return _pv(self.coeffs, t)

    @property
    def inner(self):
        return float(self.points[0]), float(self.points[1])

    @property
    def outer(self):
        return float(self.points[2]), float(self.points[3])


def _polish(coefs, r, iters=6):
    d = P.polyder(coefs)
    for _ in range(iters):
        f, fp = _pv(coefs, r), _pv(d, r)
        step = np.where(fp != 0, f / np.where(fp != 0, fp, 1), 0)
        r = r - step
    return r


def branch_points(kp: KernelPolynomials, axis: str = "y") -> BranchPointSet:
    """Real branch points of X(y) (axis="y") or Y(x) (axis="x").

    Companion-matrix roots, Newton polish, then a certificate: every root is
    real and D changes sign across it.
    """
    coefs = kp.DX_coeffs() if axis == "y" else kp.DY_coeffs()
    scale = np.abs(coefs).max()
    trimmed = coefs.copy()
    while len(trimmed) > 1 and abs(trimmed[-1]) <= 1e-15 * scale:
        trimmed = trimmed[:-1]
    deg = len(trimmed) - 1
    if deg < 3:
        raise DegenerateDiscriminant(f"discriminant in {axis} has degree {deg}")
    roots = P.polyroots(trimmed)
    if np.any(np.abs(roots.imag) > 1e-7 * np.maximum(1.0, np.abs(roots.real))):
        raise DegenerateDiscriminant(f"non-real branch points in {axis}: {roots}")
    roots = np.sort(_polish(trimmed, roots.real.astype(float)))
    if deg == 3:
        roots = np.append(roots, np.inf)
    gaps = np.diff(roots[np.isfinite(roots)])
    if np.any(gaps < ROOT_SEP_TOL):
        raise DegenerateDiscriminant(f"coalescing branch points in {axis}: {roots}")
    return BranchPointSet(axis, roots, trimmed)


# ------------------------------------------------------------- branches


def _quad_roots(a, b, c):
    """Both roots (minus, plus) of a t^2 + b t + c with the principal sqrt."""
    a, b, c = (np.asarray(v, dtype=complex) for v in (a, b, c))
    s = np.sqrt(b * b - 4 * a * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = a == 0
        r_minus = np.where(lin, -c / np.where(b == 0, 1, b), (-b - s) / np.where(lin, 1, 2 * a))
        r_plus = np.where(lin, np.inf, (-b + s) / np.where(lin, 1, 2 * a))
    return r_minus, r_plus


def _order(rm, rp):
    small_is_minus = np.abs(rm) <= np.abs(rp)
    return np.where(small_is_minus, rm, rp), np.where(small_is_minus, rp, rm)


def branch_X(kp: KernelPolynomials, y):
    """(X0(y), X1(y)): roots of R(., y) ordered by modulus, X- on ties."""
    y = np.asarray(y, dtype=complex)
    return _order(*_quad_roots(_pv(kp.a, y), _pv(kp.b, y), _pv(kp.c, y)))


def branch_Y(kp: KernelPolynomials, x):
    x = np.asarray(x, dtype=complex)
    return _order(*_quad_roots(_pv(kp.hat_a, x), _pv(kp.hat_b, x), _pv(kp.hat_c, x)))


def branch_X0(kp, y):
    return branch_X(kp, y)[0]


def branch_Y0(kp, x):
    return branch_Y(kp, x)[0]


def on_slit(bp: BranchPointSet, t, tol=1e-14):
    """True where t lies on one of the real slits (evaluation is an edge limit)."""
    t = np.asarray(t, dtype=complex)
    re, im = t.real, np.abs(t.imag)
    b = bp.points
    return (im <= tol) & (((re >= b[0]) & (re <= b[1])) | ((re >= b[2]) & (re <= b[3])))


# --------------------------------------------------------------- contour


@dataclass(frozen=True)
class ContourData:
    """Closed symmetric contour M (or L) with its polar table.

    ``phi`` is a uniform grid on [0, 2pi); ``rho`` the radius; ``y`` the slit
    parameter producing each sample; ``extreme`` = (right, left) real points.
    """

    which: str
    kp: KernelPolynomials = field(repr=False)
    slit: tuple
    phi: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    extreme: tuple

    @property
    def points(self):
        # signed angles make x[-k] = conj(x[k]) hold exactly on the grid
        n = len(self.phi)
        k = np.arange(n)
        ang = 2 * np.pi * np.where(k <= n // 2, k, k - n) / n
        if not np.allclose(np.mod(ang, 2 * np.pi), self.phi, atol=1e-12):
            ang = self.phi
        sin = np.sin(ang)
        sin[(2 * k) % n == 0] = 0.0  # real axis points
        return self.rho * (np.cos(ang) + 1j * sin)

    def modulus_relation(self, delta):
        return modulus_relation(self.kp, self.slit, delta)[0]

    def radius(self, angles):
        return polar_solve(self.kp, self.slit, self.extreme, angles)[0]

    def polar(self, angles):
        """(rho, y) at arbitrary angles."""
        return polar_solve(self.kp, self.slit, self.extreme, angles)

    def inside(self, x, margin=0.0):
        """Strictly inside the contour, by the polar description."""
        x = np.asarray(x, dtype=complex)
        return np.abs(x) < (1.0 - margin) * self.radius(np.angle(x))


def _slit_root(kp, slit, delta):
    """Root y in the slit of b(y) + 2 delta a(y) = 0 (Re X(y) = delta)."""
    q = kp.q
    delta = np.asarray(delta, float)
    A2 = -(q(0, 1) + 2 * delta * q(1, 1))
    A1 = (1 - q(0, 0)) - 2 * delta * q(1, 0)
    A0 = -(q(0, -1) + 2 * delta * q(1, -1))
    disc = np.maximum(A1 * A1 - 4 * A2 * A0, 0.0)
    sq = np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        # stable quadratic formula
        qq = -0.5 * (A1 + np.copysign(sq, A1))
        r1 = np.where(A2 != 0, qq / np.where(A2 != 0, A2, 1), np.nan)
        r2 = np.where(qq != 0, A0 / np.where(qq != 0, qq, 1), np.nan)
        lin = -A0 / np.where(A1 != 0, A1, 1)
    y1, y2 = slit
    w = 1e-9 * max(1.0, abs(y2 - y1))
    in1 = (r1 >= y1 - w) & (r1 <= y2 + w)
    in2 = (r2 >= y1 - w) & (r2 <= y2 + w)
    r = np.where(in1, r1, np.where(in2, r2, np.where(A2 == 0, lin, np.nan)))
    return np.clip(r, y1, y2)


def modulus_relation(kp, slit, delta):
    """m(delta) = |x|^2 for x on M with Re x = delta; also returns y."""
    y = _slit_root(kp, slit, delta)
    return _pv(kp.c, y) / _pv(kp.a, y), y


def polar_solve(kp, slit, extreme, angles, iters=200):
    """Radius of M at the given angles by bisection on delta - cos(phi) sqrt(m(delta))."""
    angles = np.asarray(angles, float)
    cs = np.cos(angles)
    lo = np.full(angles.shape, extreme[1])
    hi = np.full(angles.shape, extreme[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        m, _ = modulus_relation(kp, slit, mid)
        f = mid - cs * np.sqrt(np.maximum(m, 0.0))
        pos = f > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    delta = 0.5 * (lo + hi)
    m, y = modulus_relation(kp, slit, delta)
    return np.sqrt(m), y


def contour(kp: KernelPolynomials, which: str = "M", grid_size: int = 512) -> ContourData:
    """Polar table of M (x-plane) or L (y-plane, via the swapped kernel)."""
    if which == "L":
        c = contour(kp.swapped(), "M", grid_size)
        return ContourData("L", kp, c.slit, c.phi, c.rho, c.y, c.extreme)
    if which != "M":
        raise ValueError("which must be 'M' or 'L'")
    bp = branch_points(kp, "y")
    y1, y2 = bp.inner
    a1, c1 = _pv(kp.a, y1), _pv(kp.c, y1)
    a2, c2 = _pv(kp.a, y2), _pv(kp.c, y2)
    if not (c2 / a2 > 0 and c1 / a1 > 0):
        raise ContourError("extreme points are not real")
    beta0, beta1 = float(np.sqrt(c2 / a2)), -float(np.sqrt(c1 / a1))
    # the orientation of the extreme points follows from Re X at the slit ends
    re2 = -_pv(kp.b, y2) / (2 * a2)
    re1 = -_pv(kp.b, y1) / (2 * a1)
    if not (re2 > 0 > re1):
        raise ContourError(f"contour does not surround the origin (Re X(y1)={re1:.3g}, Re X(y2)={re2:.3g})")
    phi = 2 * np.pi * np.arange(grid_size) / grid_size
    rho, y = polar_solve(kp, (y1, y2), (beta0, beta1), phi)
    # exact conjugate symmetry on the grid
    rev = (-np.arange(grid_size)) % grid_size
    rho = 0.5 * (rho + rho[rev])
    y = 0.5 * (y + y[rev])
    return ContourData("M", kp, (y1, y2), phi, rho, y, (beta0, beta1))


# ------------------------------------------------- general-case zeros


@dataclass(frozen=True)
class GeneralZeroTrace:
    s: np.ndarray
    zeros: np.ndarray  # (len(s), 2): the two zeros with |g| <= 1, traced branch first
    winding: np.ndarray  # argument-principle count per sample
    radius: np.ndarray  # counting radius per sample

    @property
    def S1(self):
        return self.zeros[:, 0] * self.s

    @property
    def S2(self):
        return self.zeros[:, 0] / self.s


def _g_poly(kp, s):
    """Ascending coefficients in g of R(g s, g/s) for one s."""
    q = kp.q
    return np.array([
        -q(-1, -1),
        -(q(-1, 0) / s + q(0, -1) * s),
        1.0 - (q(0, 0) + q(1, -1) * s * s + q(-1, 1) / (s * s)),
        -(q(1, 0) * s + q(0, 1) / s),
        -q(1, 1),
    ], dtype=complex)


def _winding(coefs, r, n=512):
    t = r * np.exp(2j * np.pi * np.arange(n + 1) / n)
    v = _pv(coefs, t)
    return int(np.rint(np.sum(np.diff(np.unwrap(np.angle(v)))) / (2 * np.pi)))


def general_zeros(kp: KernelPolynomials, s_grid) -> GeneralZeroTrace:
    """Zeros of g^2 = Psi(g s, g/s) in |g| <= 1 for each s on the unit circle.

    Zeros are polynomial roots; their count is certified by the argument
    principle on a circle between the second and third smallest moduli.
    The first column is the branch continued from g(1) = 1.
    """
    s_grid = np.asarray(s_grid, dtype=complex)
    zeros = np.zeros((len(s_grid), 2), dtype=complex)
    wind = np.zeros(len(s_grid), dtype=int)
    rad = np.zeros(len(s_grid))
    for k, s in enumerate(s_grid):
        co = _g_poly(kp, s)
        tr = co.copy()
        while abs(tr[-1]) == 0:
            tr = tr[:-1]
        r = P.polyroots(tr)
        r = r[np.argsort(np.abs(r))]
        inside = r[np.abs(r) <= 1 + 1e-12]
        if len(inside) != 2:
            raise ZeroCountMismatch(f"{len(inside)} zeros in the closed unit disc at s={s}")
        m3 = abs(r[2]) if len(r) > 2 else 2.0 * abs(r[1]) + 1.0
        rr = 0.5 * (abs(r[1]) + m3)
        w = _winding(co, rr)
        if w != 2:
            raise ZeroCountMismatch(f"argument principle gives {w} zeros at s={s}")
        zeros[k] = inside
        wind[k] = w
        rad[k] = rr
    # continue the branch through g(1) = 1 along the grid order
    start = int(np.argmin(np.abs(s_grid - 1)))
    order = np.r_[start:len(s_grid), 0:start]
    prev = 1.0 + 0j
    for k in order:
        z = zeros[k]
        if abs(z[1] - prev) < abs(z[0] - prev):
            zeros[k] = z[::-1]
        prev = zeros[k, 0]
    return GeneralZeroTrace(s_grid, zeros, wind, rad)

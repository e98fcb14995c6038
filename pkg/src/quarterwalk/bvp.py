"""Boundary-value machinery on the contour M.

On M the functional equation reduces to Re(i U(x) f(x)) = w(x), with
f = prod(x - xi) g0 analytic inside M. The interior of M is mapped onto the
unit disc by gamma0 (Theodorsen's equation) and the problem is solved there
in closed form. All analytic functions on the disc are carried as Taylor
coefficient arrays obtained by FFT of boundary values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from . import assembly as asm
from .errors import BVanishes, ContourError, NoConvergence, PoleCountMismatch, UnsupportedIndex, UVanishes
from .kernel import ContourData, KernelPolynomials, branch_points, branch_X0, branch_Y0

log = logging.getLogger(__name__)


# ---------------------------------------------------------- spectral tools


def conjugate_periodic(f):
    """Periodic conjugate function (Hilbert transform on the circle) via FFT."""
    n = len(f)
    F = np.fft.fft(f)
    k = np.fft.fftfreq(n, 1.0 / n)
    H = -1j * np.sign(k)
    if n % 2 == 0:
        H[n // 2] = 0.0
    return np.fft.ifft(F * H).real


def analytic_coeffs(values, axis=0):
    """Taylor coefficients of the analytic function whose real part on |z|=1
    has the given samples (constant term real, no imaginary constant)."""
    n = values.shape[axis]
    F = np.fft.fft(values, axis=axis) / n
    F = np.moveaxis(F, axis, 0)
    m = n // 2
    c = np.zeros((m,) + F.shape[1:], dtype=complex)
    c[0] = F[0].real if np.isrealobj(values) else F[0]
    c[1:] = 2 * F[1:m]
    return np.moveaxis(c, 0, axis)


def series_eval(c, z):
    """Evaluate a power series with coefficients c (first axis) at z.

    Output shape: z.shape + c.shape[1:].
    """
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape + c.shape[1:], dtype=complex)
    zz = z.reshape(z.shape + (1,) * (c.ndim - 1))
    for ck in c[::-1]:
        out = out * zz + ck
    return out


def series_deriv(c):
    k = np.arange(1, len(c)).reshape((-1,) + (1,) * (c.ndim - 1))
    return c[1:] * k


# ------------------------------------------------------------ Theodorsen


@dataclass
class ConformalPair:
    """gamma0: unit disc -> interior of M, gamma0(z) = z exp(F(z))."""

    contour: ContourData = field(repr=False)
    phi: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)  # boundary correspondence theta(phi)
    coeffs: np.ndarray = field(repr=False)  # Taylor coefficients of F
    iterations: int
    residual: float

    @property
    def n(self):
        return len(self.phi)

    def boundary(self):
        """Exact boundary images gamma0(e^{i phi_j}) and matching slit parameters."""
        rho, y = self.contour.polar(self.theta)
        return rho * np.exp(1j * self.theta), y

    def F(self, z):
        return series_eval(self.coeffs, z)

    def forward(self, z):
        z = np.asarray(z, dtype=complex)
        return z * np.exp(self.F(z))

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return np.exp(self.F(z)) * (1 + z * series_eval(series_deriv(self.coeffs), z))

    def inverse(self, x, tol=1e-14, max_iter=60):
        """gamma(x) by Newton iteration from a polar initial guess."""
        x = np.asarray(x, dtype=complex)
        ang = np.angle(x)
        rho = self.contour.radius(ang)
        # angle on the disc: invert theta(phi) by interpolation
        th_ext = np.concatenate([self.theta - 2 * np.pi, self.theta, self.theta + 2 * np.pi])
        ph_ext = np.concatenate([self.phi - 2 * np.pi, self.phi, self.phi + 2 * np.pi])
        a0 = np.interp(np.mod(ang, 2 * np.pi), th_ext, ph_ext)
        z = np.minimum(np.abs(x) / rho, 0.999) * np.exp(1j * a0)
        for _ in range(max_iter):
            f = self.forward(z) - x
            step = f / self.derivative(z)
            z = z - step
            big = np.abs(z) > 1 + 1e-12
            if np.any(big):
                z = np.where(big, z / np.abs(z), z)
            if np.all(np.abs(step) < tol * np.maximum(1, np.abs(z))):
                break
        return z


def theodorsen(contour: ContourData, tol: float = 1e-12, max_iter: int = 500,
               damping: float = 0.5, n: int | None = None) -> ConformalPair:
    """Solve theta = phi + H[log rho(theta)] by damped fixed-point iteration.

    The correction v = theta - phi is kept odd, which encodes the conjugate
    symmetry of the map. Raises NoConvergence if the update stays above tol.
    """
    n = n or len(contour.phi)
    phi = 2 * np.pi * np.arange(n) / n
    rev = (-np.arange(n)) % n
    v = np.zeros(n)
    res = np.inf
    for it in range(1, max_iter + 1):
        L = np.log(contour.radius(phi + v))
        v_new = conjugate_periodic(L)
        v_new = 0.5 * (v_new - v_new[rev])
        res = float(np.abs(v_new - v).max())
        v = v + damping * (v_new - v) if it > 1 else v_new
        if res < tol:
            break
    else:
        raise NoConvergence(max_iter, res, "Theodorsen iteration")
    theta = phi + v
    L = np.log(contour.radius(theta))
    return ConformalPair(contour, phi, theta, analytic_coeffs(L), it, res)


# ------------------------------------------------------------------ poles


def _lune_paths(contour, n=2048):
    """Closed polar paths bounding {x : 1 < |x|, x inside the contour}."""
    th = np.linspace(-np.pi, np.pi, n, endpoint=False)
    rho = contour.radius(th)
    outside = rho > 1.0
    if not outside.any():
        return []
    if outside.all():
        t = np.linspace(0, 2 * np.pi, n + 1)
        return [("annulus", contour.radius(t) * np.exp(1j * t), np.exp(1j * t))]
    paths = []
    idx = np.flatnonzero(outside)
    # split runs of consecutive angles (cyclically)
    runs, start = [], idx[0]
    for a, b in zip(idx[:-1], idx[1:]):
        if b != a + 1:
            runs.append((start, a))
            start = b
    runs.append((start, idx[-1]))
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == n - 1:
        runs[0] = (runs[-1][0] - n, runs[0][1])
        runs.pop()
    for a, b in runs:
        ta, tb = th[0] + (a - 1) * 2 * np.pi / n, th[0] + (b + 1) * 2 * np.pi / n
        t = np.linspace(ta, tb, 2 * (b - a) + 64)
        r = np.maximum(contour.radius(t), 1.0)
        outer = r * np.exp(1j * t)
        inner = np.exp(1j * t[::-1])
        paths.append(("lune", np.concatenate([outer, inner, outer[:1]]), None))
    return paths


def _A_on_pairs(kernel, kp, x):
    y = branch_Y0(kp, x)
    tx = asm.recursions(kernel, x)
    f1 = asm.f_polys(kernel, kernel.N2 - 1, x)[0]
    f3 = asm.f_polys(kernel, kernel.N2, x)[2]
    return y * f1 * tx.e[kernel.N2 - 1] - f3 * tx.e[kernel.N2]


def _pole_function(kernel, kp):
    """A(x, Y0(x)), with the removable zero at x = 1 divided out when present."""
    one = np.array([1.0 + 0j])
    scale = max(1.0, float(np.abs(_A_on_pairs(kernel, kp, np.array([1.2 + 0j]))[0])))
    if abs(_A_on_pairs(kernel, kp, one)[0]) < 1e-10 * scale:
        def fn(x):
            x = np.asarray(x, dtype=complex)
            d = x - 1.0
            near = np.abs(d) < 1e-7
            h = 1e-6
            safe = np.where(near, 1.0 + h, x)
            out = _A_on_pairs(kernel, kp, safe) / np.where(near, h, d)
            if np.any(near):
                # derivative at 1 by a central difference
                dA = (_A_on_pairs(kernel, kp, np.array([1 + h + 0j]))[0]
                      - _A_on_pairs(kernel, kp, np.array([1 - h + 0j]))[0]) / (2 * h)
                out = np.where(near, dA, out)
            return out
        return fn
    return lambda x: _A_on_pairs(kernel, kp, np.asarray(x, dtype=complex))


def _winding(v):
    ang = np.unwrap(np.angle(v))
    return int(np.rint((ang[-1] - ang[0]) / (2 * np.pi)))


def detect_poles(kernel, kp: KernelPolynomials, contour: ContourData):
    """Zeros of A(x, Y0(x)) in the lune between the unit circle and M.

    The count is certified by the argument principle on the lune boundary;
    individual zeros are located from a polar grid and polished by Newton.
    """
    bpx = branch_points(kp, "x")
    if bpx.points[2] < contour.extreme[0]:
        raise ContourError("outer x-slit enters the interior of M")
    fn = _pole_function(kernel, kp)
    count = 0
    for kind, path, inner in _lune_paths(contour):
        vals = fn(path)
        if np.any(np.abs(vals) < 1e-14):
            raise PoleCountMismatch("A(x, Y0(x)) vanishes on the lune boundary")
        w = _winding(vals)
        if kind == "annulus":
            w -= _winding(fn(inner))
        count += w
    if count == 0:
        return np.zeros(0, dtype=complex)
    # locate: grid search on the lune then Newton with numerical derivative
    th = np.linspace(-np.pi, np.pi, 721)
    rr = np.linspace(0, 1, 60)[1:-1]
    rho = contour.radius(th)
    R = 1 + np.outer(rr, np.maximum(rho - 1, 0))
    X = (R * np.exp(1j * th)).ravel()
    X = X[np.abs(X) > 1]
    vals = np.abs(fn(X))
    cand = X[np.argsort(vals)[: 40 * count]]
    found = []
    for x in cand:
        for _ in range(50):
            h = 1e-7 * max(1, abs(x))
            f = fn(np.array([x]))[0]
            d = (fn(np.array([x + h]))[0] - fn(np.array([x - h]))[0]) / (2 * h)
            if d == 0:
                break
            x = x - f / d
        if abs(fn(np.array([x]))[0]) < 1e-10 and abs(x) > 1 and contour.inside(x):
            if all(abs(x - f0) > 1e-6 for f0 in found):
                found.append(complex(x))
        if len(found) == count:
            break
    if len(found) != count:
        raise PoleCountMismatch(f"argument principle counts {count} zeros, located {len(found)}")
    return np.array(found)


# --------------------------------------------------------------- RH data


@dataclass
class RHProblem:
    x: np.ndarray  # boundary points on M
    y: np.ndarray  # matching slit parameters, y = Y0(x)
    U: np.ndarray
    w: asm.LinearForm
    poles: np.ndarray
    winding: int  # winding number of U along M
    B: np.ndarray = field(repr=False)
    C: asm.LinearForm = field(repr=False)

    @property
    def chi(self):
        """Index: minus the argument variation of U over pi."""
        return -2 * self.winding


def _pole_factor(poles, x):
    out = np.ones(np.shape(x), dtype=complex)
    for xi in poles:
        out = out * (x - xi)
    return out


def build_rh(kernel, kp, cmap: ConformalPair, poles=(), layout=None) -> RHProblem:
    layout = layout or asm.UnknownLayout(kernel.N1, kernel.N2)
    x, y = cmap.boundary()
    poles = np.asarray(poles, dtype=complex)
    r = asm.abc(kernel, x, y.astype(complex), layout)
    scale = max(np.abs(r.A).max(), np.abs(r.B).max(), 1e-300)
    if np.any(np.abs(r.B) < 1e-12 * scale):
        j = int(np.argmin(np.abs(r.B)))
        raise BVanishes(f"B(x, Y0(x)) vanishes on M near x={x[j]:.6g}")
    if np.any(np.abs(r.A) < 1e-12 * scale):
        j = int(np.argmin(np.abs(r.A)))
        raise UVanishes(f"U vanishes on M near x={x[j]:.6g}")
    U = r.A / (_pole_factor(poles, x) * r.B)
    w = (r.C / r.B).imag
    ang = np.unwrap(np.angle(np.r_[U, U[:1]]))
    wind = int(np.rint((ang[-1] - ang[0]) / (2 * np.pi)))
    return RHProblem(x, y, U, w, poles, wind, r.B, r.C)


# ------------------------------------------------------------ RH solution


@dataclass
class BoundaryEvaluators:
    """g0 and h0 as forms in the unknowns (including the constant K).

    On the disc, f(gamma0(z)) = V(z) exp(-i F(z)), where V is stored as a
    Taylor series of forms (already divided by z^n for positive winding).
    """

    kernel: object = field(repr=False)
    kp: KernelPolynomials = field(repr=False)
    cmap: ConformalPair = field(repr=False)
    problem: RHProblem = field(repr=False)
    layout: asm.UnknownLayout
    F_coeffs: np.ndarray = field(repr=False)  # analytic F with Re F = arg(iU) - n arg t
    V_coeffs: np.ndarray = field(repr=False)  # (terms, n_unknowns + 1)
    k_free: bool = True  # whether iK enters V (winding zero)
    constraints: asm.LinearForm | None = field(repr=False, default=None)
    inside_margin: float = 0.02
    continuation_used: bool = False

    @property
    def winding(self):
        return self.problem.winding

    @property
    def chi(self):
        return self.problem.chi

    @property
    def poles(self):
        return self.problem.poles

    def F(self, z):
        return series_eval(self.F_coeffs, z)

    def sigma(self, z):
        """Phase regularizer: f = V exp(i sigma) on the disc."""
        return -self.F(z)

    def T_disc(self, z):
        """f(gamma0(z)) as a form."""
        z = np.asarray(z, dtype=complex)
        V = series_eval(self.V_coeffs, z)
        if self.k_free:
            V[..., self.layout.K + 1] += 1j
        return asm.LinearForm(V * np.exp(-1j * self.F(z))[..., None])

    def g0_interior(self, x, z=None):
        x = np.asarray(x, dtype=complex)
        if z is None:
            z = self.cmap.inverse(x)
        return self.T_disc(z) / _pole_factor(self.problem.poles, x)

    def is_interior(self, x):
        return self.cmap.contour.inside(x, self.inside_margin)

    def g0(self, x):
        """g0 inside M, continued to the rest of the closed unit disc."""
        x = np.asarray(x, dtype=complex)
        out = asm.LinearForm.zeros(self.layout.size, x.shape)
        inside = self.is_interior(x)
        if inside.any():
            out.v[inside] = self.g0_interior(x[inside]).v
        if (~inside).any():
            self.continuation_used = True
            out.v[~inside] = self._g0_continued(x[~inside]).v
        return out

    def _g0_continued(self, x):
        y = branch_Y0(self.kp, x)
        h = self.h0(y)
        r = asm.abc(self.kernel, x, y, self.layout)
        if np.any(np.abs(r.A) < 1e-14):
            raise UVanishes("A vanishes at a continuation point")
        return -(h * r.B + r.C) / r.A

    def h0(self, y):
        """h0(y) = -(A g0(X0(y)) + C)/B evaluated at (X0(y), y)."""
        y = np.asarray(y, dtype=complex)
        xp = branch_X0(self.kp, y)
        # X0 lands on M itself for y on the slit, so accept the closed interior
        ok = np.abs(xp) <= self.cmap.contour.radius(np.angle(xp)) * (1 + 1e-9)
        if not ok.all():
            raise ContourError("X0(y) left the interior of M while evaluating h0")
        g = self.g0_interior(xp)
        r = asm.abc(self.kernel, xp, y, self.layout)
        if np.any(np.abs(r.B) < 1e-14):
            raise BVanishes("B vanishes while evaluating h0")
        return -(g * r.A + r.C) / r.B


def rh_solve(kernel, kp, cmap: ConformalPair, problem: RHProblem, layout=None) -> BoundaryEvaluators:
    """Closed-form solution of Re(i U f) = w on the unit circle.

    With a = iU(gamma0(t)) of winding n >= 0, write arg a = n arg t + Re F on
    the circle (F analytic, Im F its conjugate). Then V = t^n e^{iF} f has
    Re V = w / (|a| e^{Im F}) =: d, so V is the Schwarz integral of d plus
    iK. For n > 0, V must vanish to order n at 0, which forces K = 0 and
    gives 2n - 1 real conditions on the unknowns (returned as constraints).
    """
    layout = layout or asm.UnknownLayout(kernel.N1, kernel.N2)
    n = problem.winding
    if n < 0:
        raise UnsupportedIndex(f"index chi={problem.chi} > 0 is not supported")
    a = 1j * problem.U
    per = np.unwrap(np.angle(a)) - n * cmap.phi
    per = per - 2 * np.pi * np.round(per[0] / (2 * np.pi))
    Fc = analytic_coeffs(per)
    d = problem.w / (np.abs(a) * np.exp(conjugate_periodic(per)))
    Vc = analytic_coeffs(d.v.real, axis=0).astype(complex)
    if n == 0:
        return BoundaryEvaluators(kernel, kp, cmap, problem, layout, Fc, Vc, True, None)
    rows = [Vc[0].real]
    for k in range(1, n):
        rows += [Vc[k].real, Vc[k].imag]
    kfix = np.zeros(layout.size + 1)
    kfix[layout.K + 1] = 1.0
    rows.append(kfix)
    cons = asm.LinearForm(np.array(rows, dtype=complex))
    return BoundaryEvaluators(kernel, kp, cmap, problem, layout, Fc, Vc[n:], False, cons)


def h0_from_g0(evals: BoundaryEvaluators, y):
    return evals.h0(y)


def _build(kernel, kp, n, tol, layout):
    from .kernel import contour as build_contour

    c = build_contour(kp, "M", n)
    cmap = theodorsen(c, tol=tol)
    poles = detect_poles(kernel, kp, c)
    prob = build_rh(kernel, kp, cmap, poles, layout)
    return rh_solve(kernel, kp, cmap, prob, layout)


@dataclass(frozen=True)
class RefinementReport:
    grid_sizes: tuple
    changes: tuple
    converged: bool


def solve_boundary(kernel, contour_points=512, theodorsen_tol=1e-10, layout=None,
                   refine_tol=1e-12, max_points=16384):
    """Contour, map, poles, RH data and solution, refined by grid doubling.

    The circle grid is doubled until g0 at fixed interior probe points (and
    any constraint rows) change by less than ``refine_tol`` relative to their
    size. Returns (evaluators, RefinementReport).
    """
    from .kernel import kernel_coeffs

    kp = kernel_coeffs(kernel)
    layout = layout or asm.UnknownLayout(kernel.N1, kernel.N2)
    n = contour_points
    ev = _build(kernel, kp, n, theodorsen_tol, layout)
    probe = ev.cmap.forward(0.6 * np.exp(2j * np.pi * np.arange(8) / 8))
    sizes, changes = [n], []

    def snapshot(e):
        parts = [e.g0_interior(probe).v.ravel()]
        if e.constraints is not None:
            parts.append(e.constraints.v.ravel())
        return np.concatenate(parts)

    prev = snapshot(ev)
    while 2 * n <= max_points:
        n *= 2
        nxt = _build(kernel, kp, n, theodorsen_tol, layout)
        sizes.append(n)
        if nxt.winding != ev.winding:
            ev, prev = nxt, snapshot(nxt)
            changes.append(float("inf"))
            continue
        cur = snapshot(nxt)
        ch = float(np.abs(cur - prev).max() / max(np.abs(cur).max(), 1e-300))
        changes.append(ch)
        ev, prev = nxt, cur
        if ch < refine_tol:
            return ev, RefinementReport(tuple(sizes), tuple(changes), True)
    log.warning("RH grid refinement stopped at %d points (last change %.3g)", n, changes[-1] if changes else np.nan)
    return ev, RefinementReport(tuple(sizes), tuple(changes), False)

"""End-to-end analytic solve.

The unknown boundary probabilities (and the constant K of the boundary
problem) are fixed by one overdetermined real linear system built from the
interior balance equations, analyticity of g_n and h_n at the origin, the
solvability constraints of the boundary problem, and normalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from . import bvp
from .ergodicity import Classification, classify_report
from .errors import ContourError, ModelError, NegativeMass, NotErgodic, ResidualTooLarge, UnsupportedCase
from .kernel import branch_points, kernel_coeffs
from .model import validate

log = logging.getLogger(__name__)

NEG_TOL = 1e-8
RESIDUAL_TOL = 1e-6
NULL_ROW_TOL = 1e-10
RANK_TOL = 1e-9
EDGE_NOISE = 1e-14  # absolute roundoff level of grid values from the FFT evaluation


@dataclass(frozen=True)
class SolveConfig:
    contour_points: int = 512
    theodorsen_tol: float = 1e-10
    refine_tol: float = 1e-12
    max_contour_points: int = 16384
    derivative_radius_cap: float = 0.4
    circle_points: int = 64
    window: int = 60
    torus_points: int = 256

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Row:
    form: asm.LinearForm  # scalar form; the equation is form == 0
    tag: str


@dataclass
class AssembledSystem:
    rows: list
    layout: asm.UnknownLayout

    def matrix(self):
        """Real (A, b) with A u = b."""
        V = np.array([r.form.v for r in self.rows])
        return V[:, 1:].real, -V[:, 0].real

    @property
    def tags(self):
        return [r.tag for r in self.rows]


# ----------------------------------------------------------------- rows


def balance_rows(kernel, layout=None):
    """Global balance at every interior state n1 < N1, n2 < N2."""
    layout = layout or asm.UnknownLayout(kernel.N1, kernel.N2)
    rows = []
    for n1 in range(kernel.N1):
        for n2 in range(kernel.N2):
            f = asm.LinearForm.unknown(layout.index(n1, n2), layout.size, -1.0)
            for i in (-1, 0, 1):
                for j in (-1, 0, 1):
                    m1, m2 = n1 - i, n2 - j
                    if m1 < 0 or m2 < 0:
                        continue
                    p = kernel.table[min(m1, kernel.N1), min(m2, kernel.N2), i + 1, j + 1]
                    if p:
                        f.v[layout.index(m1, m2) + 1] += p
            rows.append(Row(f, f"balance({n1},{n2})"))
    return rows


def _circle(r, m):
    return r * np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)


def derivative_radius(kernel, evals, cap=0.4, axis=1):
    """0.5 * min(1, nearest nonzero divisor zero), kept inside the domain
    where the boundary function is evaluated without continuation."""
    roots = asm.divisor_roots(kernel, axis)
    near = min([1.0] + [abs(r) for r in roots])
    r = 0.5 * near
    if axis == 1:
        c = evals.cmap.contour
        r = min(r, 0.9 * (1 - evals.inside_margin) * float(c.rho.min()))
    else:
        y1 = branch_points(evals.kp, "y").points[0]
        r = min(r, 0.5 * abs(y1))
    r = min(r, cap)
    if r <= 1e-3:
        raise ContourError(f"derivative radius infeasible on axis {axis} (r={r:.3g})")
    return r


def _laurent_rows(G, pts, tag_fmt, layout, diag_index):
    """For each level n: coefficient 0 equals pi, negative coefficients vanish."""
    rows = []
    for n in range(G.shape[0]):
        c0 = G[n].mean()
        c0 = c0 - asm.LinearForm.unknown(diag_index(n), layout.size)
        rows.append(Row(c0.real, tag_fmt(n, 0)))
        for m in range(1, n + 1):
            cm = (G[n] * pts ** m).mean()
            if np.abs(cm.v).max() > 0:
                rows.append(Row(cm.real, tag_fmt(n, -m)))
    return rows


def derivative_rows(kernel, evals, layout=None, radius=None, points=64, cap=0.4):
    """Rows from analyticity of g_n and h_n at the origin.

    The Laurent coefficients of e_n g0 + t_n on a small circle must be zero
    at negative powers and equal pi(N1, n) at power zero; mirrored for h.
    """
    layout = layout or evals.layout
    N1, N2 = kernel.N1, kernel.N2
    rx = radius or derivative_radius(kernel, evals, cap, 1)
    ry = radius or derivative_radius(kernel, evals, cap, 2)
    xs = _circle(rx, points)
    ys = _circle(ry, points)
    G = asm.recursions(kernel, xs, layout=layout).g(evals.g0(xs))
    H = asm.recursions_tilde(kernel, ys, layout=layout).g(evals.h0(ys))
    rows = _laurent_rows(G, xs, lambda n, k: f"derivative(x,{n},{k})", layout, lambda n: layout.index(N1, n))
    rows += _laurent_rows(H, ys, lambda n, k: f"derivative(y,{n},{k})", layout, lambda n: layout.index(n, N2))
    return rows, (rx, ry)


def analyticity_rows(evals, layout=None, points=512, terms=12, rank_tol=1e-6):
    """Rows stating that h0 has no poles in the unit y-disc.

    h0 = -(A g0(X0) + C)/B picks up a pole wherever B(X0(y), y) vanishes
    inside the disc unless the numerator vanishes there too. The negative
    Laurent coefficients of h0 on a circle between the slit and |y| = 1
    must therefore be zero; the block is compressed to its numerically
    independent combinations. Returns (rows, radius).
    """
    layout = layout or evals.layout
    y2 = branch_points(evals.kp, "y").points[1]
    r = 1.0 - 0.1 * (1.0 - y2)
    ys = _circle(r, points)
    H = evals.h0(ys)
    block = []
    for m in range(1, terms + 1):
        c = (H * ys ** m).mean()
        block += [c.v.real, c.v.imag]
    block = np.array(block)
    U, s, _ = np.linalg.svd(block, full_matrices=False)
    if s[0] == 0:
        return [], r
    kept = U[:, s > rank_tol * s[0]].T @ block
    return [Row(asm.LinearForm(v.astype(complex)).real, f"analyticity(y,{k})") for k, v in enumerate(kept)], r


def _value_at_one_h(evals, kp):
    """h0(1) as the mean over a small circle around y = 1."""
    bp = branch_points(kp, "y")
    eps = 0.25 * min(1.0 - bp.points[1], bp.points[2] - 1.0, 0.2)
    for _ in range(20):
        ys = 1.0 + _circle(eps, 32)
        try:
            return evals.h0(ys).mean(axis=0)
        except ContourError:
            eps *= 0.5
    raise ContourError("cannot evaluate h0 near y = 1")


def boundary_at_one(kernel, evals):
    """(g0(1), h0(1)) as forms."""
    kp = evals.kp
    one = np.array([1.0 + 0j])
    if not evals.is_interior(one)[0]:
        raise ContourError("x = 1 is not interior to M; values at 1 are unavailable")
    g1 = evals.g0_interior(one)[0]
    h1 = _value_at_one_h(evals, kp)
    return g1, h1


def _drift_axis(kernel):
    rep = classify_report(kernel)
    return 1 if rep.Ex <= rep.Ey else 2


def normalization_row(kernel, evals, layout=None):
    """Total mass equals one, with the corner mass g(1,1) from a drift identity.

    In stationarity the mean horizontal displacement vanishes, so
    Ex g(1,1) = -(mass-weighted drift over the remaining states); the
    vertical identity is used instead when Ey is the more negative drift.
    """
    layout = layout or evals.layout
    N1, N2 = kernel.N1, kernel.N2
    one = np.array([1.0 + 0j])
    g1, h1 = boundary_at_one(kernel, evals)
    tx = asm.recursions(kernel, one, layout=layout)
    ty = asm.recursions_tilde(kernel, one, layout=layout)
    G = tx.g(g1[None])[:, 0]  # g_n(1), n = 0..N2
    H = ty.g(h1[None])[:, 0]
    steps = np.array([-1.0, 0.0, 1.0])
    axis = _drift_axis(kernel)
    mu = (np.einsum("...ij,i->...", kernel.table, steps) if axis == 1
          else np.einsum("...ij,j->...", kernel.table, steps))
    mass = asm.LinearForm.zeros(layout.size)
    drift = asm.LinearForm.zeros(layout.size)
    for n1 in range(N1):
        for n2 in range(N2):
            u = asm.LinearForm.unknown(layout.index(n1, n2), layout.size)
            mass = mass + u
            drift = drift + u * mu[n1, n2]
    for n in range(N2):
        mass = mass + G[n]
        drift = drift + G[n] * mu[N1, n]
    for n in range(N1):
        mass = mass + H[n]
        drift = drift + H[n] * mu[n, N2]
    g11 = -drift / mu[N1, N2]
    row = (mass + g11 - 1.0).real
    return Row(row, f"normalization(drift-axis-{axis})"), g11, (G, H, g1, h1)


def assemble(kernel, evals, config=SolveConfig()):
    layout = evals.layout
    rows = balance_rows(kernel, layout)
    drows, radii = derivative_rows(kernel, evals, layout, points=config.circle_points,
                                   cap=config.derivative_radius_cap)
    rows += drows
    nrow, g11, _ = normalization_row(kernel, evals, layout)
    rows.append(nrow)
    if evals.constraints is not None:
        for r in range(evals.constraints.shape[0]):
            rows.append(Row(evals.constraints[r].real, f"solvability({r})"))
    for r in rows:
        if not np.all(np.isfinite(r.form.v)):
            raise ContourError(f"non-finite coefficients in row {r.tag}")
    return AssembledSystem(rows, layout), radii, g11


# -------------------------------------------------------------- solution


@dataclass
class StationarySolution:
    kernel: object = field(repr=False)
    evals: bvp.BoundaryEvaluators = field(repr=False)
    layout: asm.UnknownLayout
    u: np.ndarray  # resolved unknowns (border grid, then K)
    residual: float
    raw_min: float
    radii: tuple
    refinement: bvp.RefinementReport
    g11: float
    config: SolveConfig
    _grid: np.ndarray | None = field(default=None, repr=False)

    @property
    def K(self):
        return float(self.u[self.layout.K])

    @property
    def border(self):
        return self.layout.grid(self.u)

    @property
    def chi(self):
        return self.evals.chi

    @property
    def continuation_used(self):
        return self.evals.continuation_used

    def g0(self, x):
        return self.evals.g0(np.asarray(x, dtype=complex)).evaluate(self.u)

    def h0(self, y):
        return self.evals.h0(np.asarray(y, dtype=complex)).evaluate(self.u)

    def g(self, x, y):
        """Corner generating function from the functional equation."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
        r = asm.abc(self.kernel, x, y, self.layout)
        num = r.A * self.g0(x) + r.B * self.h0(y) + r.C.evaluate(self.u)
        return num / kernel_coeffs(self.kernel).R(x, y)

    @property
    def grid(self):
        """pi on {0..W}^2 (W = config.window)."""
        if self._grid is None:
            self._grid = _evaluate_grid(self, self.config.window)
        return self._grid

    def to_dict(self):
        return {
            "chi": self.chi,
            "K": self.K,
            "residual": self.residual,
            "min_raw_mass": self.raw_min,
            "border": self.border.tolist(),
            "derivative_radii": list(self.radii),
            "rh_grid_sizes": list(self.refinement.grid_sizes),
            "rh_grid_changes": list(self.refinement.changes),
            "rh_grid_converged": self.refinement.converged,
            "poles": [[float(p.real), float(p.imag)] for p in self.evals.poles],
            "corner_mass": self.g11,
            "continuation_used": self.continuation_used,
        }


def _scaled(system):
    """Row-scaled (matrix, rhs, kept mask) without numerically null rows."""
    A, b = system.matrix()
    scale = np.maximum(np.abs(A).max(axis=1), np.abs(b))
    # rows that vanish identically up to roundoff carry no information
    keep = scale > NULL_ROW_TOL * np.median(scale)
    dropped = [t for t, k in zip(system.tags, keep) if not k]
    if dropped:
        log.info("dropping numerically null rows: %s", ", ".join(dropped))
    return A[keep] / scale[keep, None], b[keep] / scale[keep], keep


def _rank_deficient(As):
    s = np.linalg.svd(As, compute_uv=False)
    return len(s) < As.shape[1] or s[-1] < RANK_TOL * s[0]


def solve_stationary(kernel, config: SolveConfig = SolveConfig()) -> StationarySolution:
    rep = validate(kernel, "analytic")
    if not rep.ok:
        if any("Psi(0,0)" in v for v in rep.violations):
            raise UnsupportedCase("analytic solve needs Psi(0,0) = 0 (no south-west jumps in the corner region)")
        raise ModelError("; ".join(rep.violations))
    cls = classify_report(kernel)
    if cls.verdict != Classification.ERGODIC:
        raise NotErgodic(f"model is {cls.verdict.value}, analytic solve needs an ergodic model")
    evals, refinement = bvp.solve_boundary(kernel, config.contour_points, config.theodorsen_tol,
                                           refine_tol=config.refine_tol, max_points=config.max_contour_points)
    system, radii, g11form = assemble(kernel, evals, config)
    As, bs, keep = _scaled(system)
    if _rank_deficient(As):
        # a zero of B(X0(y), y) inside the disc costs one solvability row and
        # leaves a null direction; analyticity of h0 there supplies it
        extra, _ = analyticity_rows(evals, system.layout)
        log.info("base system is rank deficient; adding %d analyticity rows", len(extra))
        system = AssembledSystem(system.rows + extra, system.layout)
        As, bs, keep = _scaled(system)
        if _rank_deficient(As):
            raise ResidualTooLarge("linear system for the boundary unknowns is underdetermined")
    A, b = system.matrix()
    u, *_ = np.linalg.lstsq(As, bs, rcond=None)
    residual = float(np.abs(A @ u - b).max())
    if residual > RESIDUAL_TOL:
        worst = system.tags[int(np.argmax(np.abs(A @ u - b)))]
        raise ResidualTooLarge(f"least-squares residual {residual:.3g} (worst row {worst})")
    grid = u[: system.layout.n_grid]
    raw_min = float(grid.min())
    if raw_min < -NEG_TOL:
        raise NegativeMass(f"resolved probability {raw_min:.3g} below -{NEG_TOL}")
    if raw_min < 0:
        log.warning("clamping resolved probabilities down to %.3g to zero", raw_min)
        u[: system.layout.n_grid] = np.maximum(grid, 0.0)
    g11 = float(g11form.evaluate(u).real)
    return StationarySolution(kernel, evals, system.layout, u, residual, raw_min, radii, refinement, g11, config)


# ------------------------------------------------------------ evaluation


def _series_coeffs(values, m):
    """Taylor coefficients 0..m-1 of a function sampled on a half-offset unit circle."""
    n = values.shape[-1]
    shift = np.exp(-1j * np.pi * np.arange(n) / n)
    c = np.fft.fft(values, axis=-1) / n * shift
    return c[..., :m]


def _evaluate_grid(sol: StationarySolution, W):
    kern, lay = sol.kernel, sol.layout
    N1, N2 = kern.N1, kern.N2
    P = max(sol.config.torus_points, 4 * (W + 1))
    pts = np.exp(2j * np.pi * (np.arange(P) + 0.5) / P)
    out = np.zeros((W + 1, W + 1))
    border = sol.border
    out[: min(N1, W + 1), : min(N2, W + 1)] = border[: min(N1, W + 1), : min(N2, W + 1)]
    # rows n2 = 0..N2 for n1 >= N1
    g0 = sol.evals.g0(pts)
    G = asm.recursions(kern, pts, layout=lay).g(g0).evaluate(sol.u)  # (N2+1, P)
    cg = _series_coeffs(G, W + 1 - N1).real if W >= N1 else None
    # columns n1 = 0..N1 for n2 >= N2
    h0 = sol.evals.h0(pts)
    H = asm.recursions_tilde(kern, pts, layout=lay).g(h0).evaluate(sol.u)  # (N1+1, P)
    ch = _series_coeffs(H, W + 1 - N2).real if W >= N2 else None
    if cg is not None:
        for n in range(min(N2, W) + 1):
            out[N1:, n] = cg[n]
    if ch is not None:
        for n in range(min(N1, W) + 1):
            out[n, N2:] = ch[n]
    # corner region beyond the threshold row and column
    if W > N1 and W > N2:
        X, Y = np.meshgrid(pts, pts, indexing="ij")
        gx = g0.evaluate(sol.u)
        hy = h0.evaluate(sol.u)
        r = asm.abc(kern, X, Y, lay)
        num = r.A * gx[:, None] + r.B * hy[None, :] + r.C.evaluate(sol.u)
        g = num / kernel_coeffs(kern).R(X, Y)
        shift = np.exp(-1j * np.pi * np.arange(P) / P)
        c = np.fft.fft2(g) / P**2 * shift[:, None] * shift[None, :]
        out[N1 + 1:, N2 + 1:] = c[1: W + 1 - N1, 1: W + 1 - N2].real
    return out


def evaluate_pi(sol: StationarySolution, n1: int, n2: int) -> float:
    """Stationary probability of (n1, n2)."""
    if n1 < 0 or n2 < 0:
        raise ValueError("states are nonnegative")
    N1, N2 = sol.kernel.N1, sol.kernel.N2
    if n1 <= N1 and n2 <= N2:
        return float(sol.border[n1, n2])
    if max(n1, n2) <= sol.config.window:
        return float(sol.grid[n1, n2])
    return float(_evaluate_grid(sol, max(n1, n2))[n1, n2])


@dataclass(frozen=True)
class Metrics:
    EQ1: float
    EQ2: float
    total: float
    mass_in_window: float
    tail_bound: float
    window: int

    def to_dict(self):
        return dict(self.__dict__)


def metrics(sol: StationarySolution, window: int | None = None, tail_tol: float = 1e-8,
            max_window: int = 400) -> Metrics:
    """Mean queue lengths from windowed sums, widening the window until the
    estimated mass outside it (and its first moment) falls below tail_tol."""
    W = window or sol.config.window
    while True:
        grid = sol.grid if W == sol.config.window else _evaluate_grid(sol, W)
        n1, n2 = np.indices(grid.shape)
        mass = float(grid.sum())
        tail = abs(1.0 - mass)
        # moment tail: mass beyond W is spread over levels > W, bounded by a geometric fit
        edge = float(grid[-1, :].sum() + grid[:, -1].sum())
        prev = float(grid[-2, :].sum() + grid[:, -2].sum())
        if abs(edge) <= EDGE_NOISE:
            # the edge is at the roundoff floor, so its decay ratio is meaningless
            moment_tail = (W + 1) * EDGE_NOISE
        else:
            ratio = min(edge / prev, 0.999) if prev > 0 else 0.0
            moment_tail = (W + 1) * edge * ratio / (1 - ratio) ** 2 if ratio > 0 else 0.0
        bound = tail + moment_tail
        if bound < tail_tol or W >= max_window:
            break
        W = min(2 * W, max_window)
    if bound >= tail_tol:
        from .errors import NumericalError
        raise NumericalError(f"tail bound {bound:.3g} not reached within window {W}")
    e1 = float((n1 * grid).sum())
    e2 = float((n2 * grid).sum())
    return Metrics(e1, e2, e1 + e2, mass, bound, W)


# ----------------------------------------------------------- diagnostics


def boundary_residual(sol: StationarySolution, contour_points=512):
    """max |Re(i U f) - w| over the contour's own polar samples."""
    from .kernel import contour as build_contour

    c = build_contour(sol.evals.kp, "M", contour_points)
    x, y = c.points, c.y.astype(complex)
    r = asm.abc(sol.kernel, x, y, sol.layout)
    poles = sol.evals.poles
    pf = np.ones_like(x)
    for xi in poles:
        pf = pf * (x - xi)
    U = r.A / (pf * r.B)
    w = (r.C / r.B).imag.evaluate(sol.u).real
    z = sol.evals.cmap.inverse(x)
    f = sol.evals.T_disc(z).evaluate(sol.u)
    return float(np.abs((1j * U * f).real - w).max())


def functional_equation_residual(sol: StationarySolution, x, y):
    """|R g - A g0 - B h0 - C| with g resummed from the evaluated corner series."""
    kern = sol.kernel
    N1, N2 = kern.N1, kern.N2
    W = sol.config.window
    grid = sol.grid
    x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
    k1 = np.arange(W + 1 - N1)
    k2 = np.arange(W + 1 - N2)
    c = grid[N1:, N2:]
    g = np.einsum("ij,...i,...j->...", c, x[..., None] ** k1, y[..., None] ** k2)
    r = asm.abc(kern, x, y, sol.layout)
    rhs = r.A * sol.g0(x) + r.B * sol.h0(y) + r.C.evaluate(sol.u)
    return np.abs(kernel_coeffs(kern).R(x, y) * g - rhs)


def normalization_crosscheck(sol: StationarySolution, radii=(0.9, 0.95, 0.975)):
    """Corner mass g(1,1) by radial Richardson extrapolation of g(r, r).

    Returns (extrapolated value, value from the drift identity). A quadratic
    in (1 - r) through the three samples is evaluated at r = 1.
    """
    r = np.asarray(radii, float)
    vals = sol.g(r, r).real
    coef = np.polynomial.polynomial.polyfit(1.0 - r, vals, len(r) - 1)
    return float(coef[0]), sol.g11

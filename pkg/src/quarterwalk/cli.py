"""Command-line front end.

Every subcommand writes one JSON document (or CSV table) that embeds the
tool version, the model hash and the full option set, so identical inputs
give byte-identical outputs. Exit codes: 0 ok, 2 invalid model,
3 numerical failure, 4 unsupported case, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ModelError, NumericalError, UnsupportedCase

log = logging.getLogger("quarterwalk")

EXIT_OK, EXIT_OTHER, EXIT_MODEL, EXIT_NUMERIC, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4


# ---------------------------------------------------------------- output


def _plain(obj):
    """Convert numpy scalars/arrays to JSON-ready values; non-finite -> None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def dumps(doc) -> str:
    return json.dumps(_plain(doc), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _config(args):
    skip = {"func", "log_level"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _meta(args, kernel=None):
    from .modelio import kernel_hash

    m = {"tool": "quarterwalk", "version": __version__, "command": args.command, "config": _config(args)}
    if kernel is not None:
        m["model_hash"] = kernel_hash(kernel)
    return m


def _emit(args, doc, columns=None, rows=None):
    if getattr(args, "format", "json") == "csv" and columns is not None:
        _write(csv_text(columns, rows), args.out)
    else:
        _write(dumps(doc), args.out)


def _grid_arg(text):
    """'lo:hi:n' -> n evenly spaced values (inclusive)."""
    try:
        lo, hi, n = text.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
    except ValueError:
        raise ModelError(f"expected a grid lo:hi:n, got {text!r}") from None


def _window_grid(grid, W):
    g = np.asarray(grid)[: W + 1, : W + 1]
    return g.tolist()


def _load(args):
    from .modelio import load_model

    return load_model(args.model)


# ----------------------------------------------------------- subcommands


def cmd_validate(args):
    from .model import validate

    _, kernel = _load(args)
    reps = {mode: validate(kernel, mode).to_dict() for mode in ("oracle", "analytic")}
    doc = {"meta": _meta(args, kernel), "reports": reps, "ok": reps[args.mode]["ok"]}
    _write(dumps(doc), args.out)
    return EXIT_OK if doc["ok"] else EXIT_MODEL


def _stability_row(kernel):
    from .ergodicity import classify_report

    return classify_report(kernel).to_dict()


STABILITY_COLUMNS = ["lam1", "lam2", "classification", "case", "h1", "h2", "Ex", "Ey"]


def _stability_point(p):
    from .model import aloha_kernel, aloha_stability_example

    l1, l2 = p
    row = _stability_row(aloha_kernel(aloha_stability_example(l1, l2)))
    row.update(lam1=l1, lam2=l2)
    return row


def _pmap(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def cmd_stability(args):
    if args.model:
        _, kernel = _load(args)
        args.lam1 = args.lam2 = None
        doc = {"meta": _meta(args, kernel), "stability": _stability_row(kernel)}
        row = dict(doc["stability"])
        _emit(args, doc, ["classification", "case", "h1", "h2", "Ex", "Ey"], [row])
        return EXIT_OK
    pts = [(a, b) for a in _grid_arg(args.lam1) for b in _grid_arg(args.lam2)]
    rows = _pmap(_stability_point, pts, args.workers)
    _emit(args, {"meta": _meta(args), "rows": rows}, STABILITY_COLUMNS, rows)
    return EXIT_OK


def _solve_config(args):
    from .pipeline import SolveConfig

    return SolveConfig(contour_points=args.contour_points, theodorsen_tol=args.theodorsen_tol,
                       derivative_radius_cap=args.derivative_radius_cap,
                       window=max(args.window, 60))


def cmd_solve(args):
    from .ergodicity import classify_report
    from .pipeline import metrics, solve_stationary

    _, kernel = _load(args)
    sol = solve_stationary(kernel, _solve_config(args))
    m = metrics(sol)
    doc = {"meta": _meta(args, kernel), "classification": classify_report(kernel).to_dict(),
           "solution": sol.to_dict(), "metrics": m.to_dict(), "mean_total": m.total,
           "window": args.window, "pi": _window_grid(sol.grid, args.window)}
    rows = [{"n1": i, "n2": j, "pi": sol.grid[i, j]}
            for i in range(args.window + 1) for j in range(args.window + 1 - i)]
    _emit(args, doc, ["n1", "n2", "pi"], rows)
    return EXIT_OK


def cmd_oracle(args):
    from .oracle import truncated_stationary

    _, kernel = _load(args)
    sol = truncated_stationary(kernel, args.truncation, tol=args.tol)
    q1, q2 = sol.mean_queues()
    doc = {"meta": _meta(args, kernel), "truncation": sol.T, "method": sol.method, "residual": sol.residual,
           "edge_mass": sol.tail_mass_estimate, "mean_queues": [q1, q2], "mean_total": q1 + q2,
           "window": args.window, "pi": _window_grid(sol.pi_hat, args.window)}
    rows = [{"n1": i, "n2": j, "pi": sol.pi_hat[i, j]}
            for i in range(args.window + 1) for j in range(args.window + 1 - i)]
    _emit(args, doc, ["n1", "n2", "pi"], rows)
    return EXIT_OK


def cmd_simulate(args):
    from .oracle import simulate

    _, kernel = _load(args)
    res = simulate(kernel, args.steps, args.seed, window=args.window)
    doc = {"meta": _meta(args, kernel), "steps": res.steps, "seed": res.seed, "drift": list(res.drift),
           "drift_se": list(res.drift_se), "overflow_mass": res.overflow_mass,
           "final_state": list(res.final_state), "window": args.window, "pi": res.empirical.tolist()}
    rows = [{"n1": i, "n2": j, "pi": res.empirical[i, j]}
            for i in range(args.window + 1) for j in range(args.window + 1 - i)]
    _emit(args, doc, ["n1", "n2", "pi"], rows)
    return EXIT_OK


def cmd_compare(args):
    from .oracle import compare

    docs = []
    for path in (args.first, args.second):
        try:
            docs.append(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelError(f"cannot read result file {path}: {exc}") from None
    for d, path in zip(docs, (args.first, args.second)):
        if "pi" not in d:
            raise ModelError(f"{path} holds no 'pi' grid")
    rep = compare(np.array(docs[0]["pi"], float), np.array(docs[1]["pi"], float), args.window).to_dict()
    if "mean_total" in docs[0] and "mean_total" in docs[1]:
        a, b = docs[0]["mean_total"], docs[1]["mean_total"]
        rep["mean_total"] = [a, b]
        rep["mean_total_rel_diff"] = abs(a - b) / max(abs(b), 1e-300)
    hashes = [d.get("meta", {}).get("model_hash") for d in docs]
    rep["same_model"] = hashes[0] is not None and hashes[0] == hashes[1]
    _write(dumps({"meta": _meta(args), "comparison": rep}), args.out)
    return EXIT_OK


def cmd_contour(args):
    from .kernel import contour, kernel_coeffs

    _, kernel = _load(args)
    c = contour(kernel_coeffs(kernel), args.which, args.contour_points)
    x = c.points
    idx = list(range(len(x))) + [0]  # closed polyline
    rows = [{"index": k, "phi": float(c.phi[k]), "re": float(x[k].real), "im": float(x[k].imag),
             "rho": float(c.rho[k]), "slit_param": float(c.y[k])} for k in idx]
    doc = {"meta": _meta(args, kernel), "which": c.which, "extreme": list(c.extreme), "slit": list(c.slit),
           "points": rows}
    _emit(args, doc, ["index", "phi", "re", "im", "rho", "slit_param"], rows)
    return EXIT_OK


SWEEP_COLUMNS = ["lam", "a", "classification", "h1", "h2", "EQ1", "EQ2", "total", "chi", "status"]


def _sweep_point(p):
    from .ergodicity import classify_report
    from .model import aloha_family, aloha_kernel
    from .pipeline import SolveConfig, metrics, solve_stationary

    lam, a, cfg = p
    kernel = aloha_kernel(aloha_family(lam, a))
    rep = classify_report(kernel)
    row = {"lam": lam, "a": a, "classification": rep.verdict.value, "h1": rep.h1, "h2": rep.h2}
    if rep.verdict.value != "Ergodic":
        row["status"] = "skipped"
        return row
    try:
        sol = solve_stationary(kernel, SolveConfig(**cfg))
        m = metrics(sol)
        row.update(EQ1=m.EQ1, EQ2=m.EQ2, total=m.total, chi=sol.chi, status="ok")
    except (NumericalError, UnsupportedCase) as exc:
        row["status"] = f"failed: {type(exc).__name__}"
    return row


def cmd_sweep(args):
    if args.family == "stability":
        pts = [(a, b) for a in _grid_arg(args.lam1) for b in _grid_arg(args.lam2)]
        rows = _pmap(_stability_point, pts, args.workers)
        _emit(args, {"meta": _meta(args), "rows": rows}, STABILITY_COLUMNS, rows)
        return EXIT_OK
    cfg = _solve_config(args).to_dict()
    pts = [(lam, a, cfg) for a in _grid_arg(args.a) for lam in _grid_arg(args.lam)]
    rows = _pmap(_sweep_point, pts, args.workers)
    _emit(args, {"meta": _meta(args), "rows": rows}, SWEEP_COLUMNS, rows)
    return EXIT_OK


def cmd_generate_aloha(args):
    from .model import aloha_family, aloha_kernel
    from .modelio import to_document

    params = aloha_family(args.lam, args.a, args.N1, args.N2)
    doc = to_document(params)
    doc["description"] = f"load-adaptive ALOHA family, lam={args.lam!r}, a={args.a!r}"
    _ = aloha_kernel(params)
    _write(json.dumps(doc, indent=1, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_dump(args):
    from . import bvp
    from .kernel import branch_points, kernel_coeffs

    _, kernel = _load(args)
    ev, refinement = bvp.solve_boundary(kernel, args.contour_points, args.theodorsen_tol)
    prob = ev.problem
    step = max(1, len(prob.U) // args.samples)
    zero = np.zeros(ev.layout.size)
    kp = kernel_coeffs(kernel)
    z = np.exp(1j * ev.cmap.phi[::step])
    doc = {
        "meta": _meta(args, kernel),
        "chi": prob.chi, "winding": prob.winding,
        "poles": [[p.real, p.imag] for p in prob.poles],
        "branch_points_x": branch_points(kp, "x").points.tolist(),
        "branch_points_y": branch_points(kp, "y").points.tolist(),
        "theodorsen": {"iterations": ev.cmap.iterations, "residual": ev.cmap.residual, "grid": ev.cmap.n},
        "refinement": {"grid_sizes": list(refinement.grid_sizes), "changes": list(refinement.changes),
                       "converged": refinement.converged},
        "samples": [{"x": [x.real, x.imag], "U": [u.real, u.imag], "w0": float(w.real), "sigma": [s.real, s.imag]}
                    for x, u, w, s in zip(prob.x[::step], prob.U[::step], prob.w.evaluate(zero)[::step],
                                          ev.sigma(z))],
    }
    _write(dumps(doc), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="quarterwalk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True, fmt=False):
        if model:
            sp.add_argument("--model", required=True, help="model JSON file")
        sp.add_argument("--out", default="-", help="output file (default stdout)")
        if fmt:
            sp.add_argument("--format", choices=("json", "csv"), default="json")

    def solve_opts(sp):
        sp.add_argument("--contour-points", type=int, default=512)
        sp.add_argument("--theodorsen-tol", type=float, default=1e-10)
        sp.add_argument("--derivative-radius-cap", type=float, default=0.4)
        sp.add_argument("--window", type=int, default=20)

    sp = sub.add_parser("validate", help="check a model file")
    common(sp)
    sp.add_argument("--mode", choices=("oracle", "analytic"), default="analytic")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("stability", help="ergodicity classification")
    common(sp, model=False, fmt=True)
    sp.add_argument("--model", help="model JSON file; omit to sweep the asymmetric example")
    sp.add_argument("--lam1", default="0.02:0.5:25", help="saturated arrival grid lo:hi:n for user 1")
    sp.add_argument("--lam2", default="0.02:0.5:25", help="saturated arrival grid lo:hi:n for user 2")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("solve", help="analytic stationary distribution")
    common(sp, fmt=True)
    solve_opts(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("oracle", help="truncated brute-force stationary distribution")
    common(sp, fmt=True)
    sp.add_argument("--truncation", type=int, default=400)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--window", type=int, default=20)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("simulate", help="seeded Monte Carlo trajectory")
    common(sp, fmt=True)
    sp.add_argument("--steps", type=int, default=10**6)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--window", type=int, default=20)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="distance between two result files")
    common(sp, model=False)
    sp.add_argument("first")
    sp.add_argument("second")
    sp.add_argument("--window", type=int, default=10)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("contour", help="sample the contour M or L")
    common(sp, fmt=True)
    sp.add_argument("--which", choices=("M", "L"), default="M")
    sp.add_argument("--contour-points", type=int, default=512)
    sp.set_defaults(func=cmd_contour)

    sp = sub.add_parser("sweep", help="parameter sweeps over the ALOHA families")
    common(sp, model=False, fmt=True)
    sp.add_argument("--family", choices=("aloha", "stability"), default="aloha")
    sp.add_argument("--lam", default="0.05:0.45:5", help="arrival grid lo:hi:n")
    sp.add_argument("--a", default="0.3:0.9:4", help="transmission grid lo:hi:n")
    sp.add_argument("--lam1", default="0.02:0.5:25")
    sp.add_argument("--lam2", default="0.02:0.5:25")
    sp.add_argument("--workers", type=int, default=1)
    solve_opts(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("generate-aloha", help="write a load-adaptive ALOHA model file")
    common(sp, model=False)
    sp.add_argument("--lam", type=float, required=True)
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--N1", type=int, default=2)
    sp.add_argument("--N2", type=int, default=2)
    sp.set_defaults(func=cmd_generate_aloha)

    sp = sub.add_parser("dump", help="boundary-problem diagnostics")
    common(sp)
    sp.add_argument("--contour-points", type=int, default=512)
    sp.add_argument("--theodorsen-tol", type=float, default=1e-10)
    sp.add_argument("--samples", type=int, default=64)
    sp.set_defaults(func=cmd_dump)
    return p


def _error(exc, code):
    doc = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stdout.write(dumps(doc))
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which is reserved for invalid models
        return EXIT_OK if exc.code in (0, None) else EXIT_OTHER
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ModelError as exc:
        return _error(exc, EXIT_MODEL)
    except UnsupportedCase as exc:
        return _error(exc, EXIT_UNSUPPORTED)
    except NumericalError as exc:
        return _error(exc, EXIT_NUMERIC)
    except (OSError, ValueError) as exc:
        return _error(exc, EXIT_OTHER)


if __name__ == "__main__":
    sys.exit(main())

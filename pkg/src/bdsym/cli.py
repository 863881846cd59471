"""Command-line front end.

Every command writes CSV (17 significant digits, ``\\n`` line endings) to
``--out`` or to standard output.  Commands that produce several files take
``--out`` as the main file and derive sibling names from it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fpt, kernels, sim, twod
from ._io import csv_text, write_text
from .rates import Boundary, Family, ModelError, PlaneModel, Preset, RateModel, build_preset, check_symmetry

# panel -> (curve kind, mu or alpha) plus the fixed k and n lists
FIGURES = {
    "1a": ("fpt-constant", 0.5), "1b": ("fpt-constant", 1.0),
    "2a": ("taboo-constant", 0.5), "2b": ("taboo-constant", 1.0),
    "3a": ("fpt-ehrenfest", 0.5), "3b": ("fpt-ehrenfest", 1.0),
    "4a": ("taboo-ehrenfest", 0.5), "4b": ("taboo-ehrenfest", 1.0),
}
FIGURE_S = 10
FIGURE_KS = (6, 7, 8, 9)
FIGURE_TABOO_K = 9
FIGURE_TABOO_NS = {"taboo-constant": (7, 8, 9), "taboo-ehrenfest": (6, 7, 8, 9)}


class UsageError(Exception):
    """Bad or inconsistent arguments (exit status 2)."""


# -- parser -----------------------------------------------------------------------

def _add_model(p):
    p.add_argument("--preset", choices=[x.value for x in Preset if x is not Preset.CUSTOM])
    p.add_argument("--model", metavar="JSON", help="rate model document")
    p.add_argument("--N", type=int)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", metavar="RATE",
                   help="birth rate (two values lambda1 lambda2 for the plane model)")
    p.add_argument("--mu", type=float, nargs="+", metavar="RATE",
                   help="death rate (two values mu1 mu2 for the plane model)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--window", type=int, nargs=2, metavar=("L", "R"))


def _add_grid(p, tmin=0.0, tmax=10.0, steps=101):
    p.add_argument("--t", type=float, nargs="+", help="explicit time points (overrides the grid)")
    p.add_argument("--tmin", type=float, default=tmin)
    p.add_argument("--tmax", type=float, default=tmax)
    p.add_argument("--steps", type=int, default=steps, help="number of grid points")


def _add_common(p):
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdsym", description="Symmetric birth-death processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prob", help="transition probabilities p_{k,n}(t)")
    _add_model(p)
    _add_grid(p)
    _add_common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, nargs="+", help="states to report (default: all)")
    p.add_argument("--method", choices=("auto", "closed", "uniformization"), default="auto")

    p = sub.add_parser("fpt", help="first-passage-time density from k to s")
    _add_model(p)
    _add_grid(p)
    _add_common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", type=int, help="target state (default: the symmetry state)")

    p = sub.add_parser("avoid", help="taboo probabilities avoiding r")
    _add_model(p)
    _add_grid(p)
    _add_common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--r", type=int, help="taboo state (default: the symmetry state)")

    p = sub.add_parser("twod", help="crossing of the line x2 = x1 + r in the plane")
    _add_model(p)
    _add_grid(p, tmin=0.01)
    _add_common(p)
    p.add_argument("--k", type=int, nargs=2, required=True, metavar=("K1", "K2"))
    p.add_argument("--r", type=int, default=0)

    p = sub.add_parser("simulate", help="Monte Carlo estimates")
    _add_model(p)
    _add_grid(p, tmin=0.0, steps=5)
    _add_common(p)
    p.add_argument("--k", type=int, nargs="+", required=True, help="start state (two values in the plane)")
    p.add_argument("--n", type=int, nargs="+", help="states to report at the recording times")
    p.add_argument("--s", type=int, help="first-passage target")
    p.add_argument("--r", type=int, help="taboo state, or line offset in the plane")
    p.add_argument("--replications", type=int, default=10_000)
    p.add_argument("--bins", type=int, default=50, help="histogram bins for hitting times")

    p = sub.add_parser("validate", help="run the acceptance suite")
    p.add_argument("--only", type=int, nargs="+", metavar="N", help="run these criteria only")
    p.add_argument("--out", help="also write the report to this file")

    p = sub.add_parser("figure", help="curves of the figure panels")
    p.add_argument("panel", choices=sorted(FIGURES))
    _add_grid(p, tmin=0.0, tmax=10.0, steps=501)
    p.add_argument("--out")
    return parser


# -- argument helpers ------------------------------------------------------------------

def _times(args) -> np.ndarray:
    if args.t:
        t = np.asarray(args.t, dtype=float)
    else:
        if args.steps < 2:
            raise UsageError("--steps must be at least 2")
        if not args.tmax > args.tmin:
            raise UsageError("--tmax must exceed --tmin")
        t = np.linspace(args.tmin, args.tmax, args.steps)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise UsageError("times must be finite and nonnegative")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise UsageError("times must be strictly increasing")
    return t


def _single(values, name):
    if values is None:
        return None
    if len(values) != 1:
        raise UsageError(f"{name} takes one value for one-dimensional models")
    return values[0]


def _model(args) -> RateModel:
    if args.model and args.preset:
        raise UsageError("give either --preset or --model, not both")
    if args.model:
        try:
            return RateModel.from_json(Path(args.model).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read model file: {exc}") from None
    if not args.preset:
        raise UsageError("a model is required: --preset or --model")
    return build_preset(args.preset, N=args.N, lam=_single(args.lam, "--lambda"),
                        mu=_single(args.mu, "--mu"), alpha=args.alpha, c=args.c,
                        window=args.window)


def _plane(args) -> PlaneModel:
    if args.preset or args.model:
        raise UsageError("the plane model takes --lambda L1 L2 --mu M1 M2")
    if not args.lam or not args.mu or len(args.lam) != 2 or len(args.mu) != 2:
        raise UsageError("the plane model needs --lambda L1 L2 and --mu M1 M2")
    return PlaneModel(args.lam[0], args.lam[1], args.mu[0], args.mu[1])


def _is_plane(args) -> bool:
    return bool(args.lam and len(args.lam) == 2 and not args.preset and not args.model)


def _symmetry_state(model: RateModel, requested):
    """The state through which the symmetry formulas apply, or None."""
    if model.boundary is Boundary.BILATERAL:
        centre = 0 if model.center == 0 else None
    else:
        centre = model.N // 2 if model.N % 2 == 0 else None
    if centre is None or not check_symmetry(model).satisfied:
        return None
    if requested is not None and requested != centre:
        return None
    return centre


def _emit(args, text: str, meta: dict | None = None):
    if args.out:
        write_text(args.out, text)
        if meta is not None:
            write_text(_sibling(args.out, ".meta.json"), json.dumps(meta, sort_keys=True, indent=1) + "\n")
    else:
        sys.stdout.write(text)


def _sibling(path, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


# -- commands ----------------------------------------------------------------------------

def cmd_prob(args):
    model = _model(args)
    times = _times(args)
    tol = args.tol if args.tol is not None else kernels.DEFAULT_TOL
    method = {"uniformization": "numeric"}.get(args.method, args.method)
    if method == "numeric":
        grid = kernels.uniformize(model, args.k, times, tol)
        if args.n:
            cols = np.column_stack([grid.column(n) for n in args.n])
            grid = kernels.ProbabilityGrid(args.k, np.asarray(args.n), times, cols, grid.method,
                                           grid.window, grid.tail_bound)
    else:
        grid = kernels.transition_grid(model, args.k, times, states=args.n, tol=tol, method=method)
    _emit(args, grid.to_csv())


def cmd_fpt(args):
    model = _model(args)
    times = _times(args)
    tol = args.tol if args.tol is not None else 1e-6
    centre = _symmetry_state(model, args.s)
    k = args.k
    if centre is not None:
        if model.boundary is Boundary.ABSORBING:
            dens = fpt.fpt_symmetric_absorbing(model, k, times)
        elif model.boundary is Boundary.REFLECTING and k < centre:
            dens = fpt.fpt_symmetric_reflecting(model, k, times)
        elif model.family is Family.CATASTROPHE:
            dens = fpt.fpt_catastrophe(model, k, times)
        elif model.family is Family.BILATERAL:
            dens = fpt.fpt_bilateral(model, k, times)
        else:
            dens = None
    else:
        dens = None
    if dens is None:
        if args.s is None:
            raise UsageError("--s is required when the symmetry formulas do not apply")
        dens = fpt.fpt_renewal(model, k, args.s, times, tol=tol)
    meta = {"command": "fpt", "method": dens.method, "k": k, "s": dens.s, "direction": dens.direction}
    _emit(args, dens.to_csv(), meta)
    print(f"method={dens.method} direction={dens.direction}", file=sys.stderr)


def cmd_avoid(args):
    model = _model(args)
    times = _times(args)
    tol = args.tol if args.tol is not None else 1e-6
    centre = _symmetry_state(model, args.r)
    k, ns = args.k, args.n
    grid = None
    if centre is not None:
        if model.boundary is Boundary.ABSORBING:
            grid = fpt.taboo_symmetric_absorbing(model, k, ns, times)
        elif model.boundary is Boundary.REFLECTING:
            grid = fpt.taboo_reflecting(model, k, ns, times)
        else:
            grid = fpt.taboo_bilateral(model, k, ns, times)
    if grid is None:
        if args.r is None:
            raise UsageError("--r is required when the symmetry formulas do not apply")
        cols = np.column_stack([fpt.taboo_renewal(model, k, n, args.r, times, tol=tol) for n in ns])
        side = "below" if k < args.r else "above"
        grid = fpt.TabooGrid(k, args.r, np.asarray(ns), times, np.clip(cols, 0.0, None), side, "renewal")
    _emit(args, grid.to_csv(), {"command": "avoid", "method": grid.method, "k": k, "r": int(grid.r)})
    print(f"method={grid.method}", file=sys.stderr)


def cmd_twod(args):
    model = _plane(args)
    times = _times(args)
    res = twod.line_crossing(model, tuple(args.k), args.r, times)
    if not args.out:
        sys.stdout.write(res.h_csv())
        sys.stdout.write(res.pi.to_json() + "\n")
        return
    write_text(args.out, res.h_csv())
    write_text(_sibling(args.out, "_g.csv"), res.g_csv())
    write_text(_sibling(args.out, "_pi.json"), res.pi.to_json() + "\n")


def cmd_simulate(args):
    if args.replications < 1:
        raise UsageError("--replications must be positive")
    plane = _is_plane(args)
    model = _plane(args) if plane else _model(args)
    if plane != (len(args.k) == 2) or len(args.k) not in (1, 2):
        raise UsageError("--k takes one state, or two coordinates for the plane model")
    start = tuple(args.k) if plane else args.k[0]
    times = _times(args)
    horizon = float(times.max())
    if horizon <= 0:
        raise UsageError("--tmax must be positive")
    cfg = sim.SimConfig(
        model, start, horizon, args.replications, seed=args.seed,
        times=tuple(float(t) for t in times if t > 0),
        states=tuple(args.n) if args.n else None,
        target=None if plane else args.s,
        taboo=None if plane else args.r,
        line=args.r if plane else None,
    )
    res = sim.run(cfg)
    _emit(args, res.to_csv())
    if args.out and (cfg.target is not None or cfg.line is not None):
        edges = np.linspace(0.0, horizon, args.bins + 1)
        write_text(_sibling(args.out, "_hist.csv"), res.hitting_histogram(edges))


def cmd_validate(args):
    from .validation import run_all

    verdicts = run_all(args.only)
    lines = [v.line() for v in verdicts]
    failed = [v for v in verdicts if not v.passed]
    lines.append(f"{len(verdicts) - len(failed)}/{len(verdicts)} criteria passed")
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.out:
        write_text(args.out, report)
    return 1 if failed else 0


def figure_csv(panel: str, times) -> str:
    """Long-format CSV of one figure panel: ``t,k,value`` or ``t,state,value``."""
    kind, value = FIGURES[panel]
    times = np.asarray(times, dtype=float)
    N = 2 * FIGURE_S
    if kind.startswith("fpt"):
        curves = {}
        for k in FIGURE_KS:
            if kind == "fpt-constant":
                curves[k] = fpt.fpt_constant_closed(N, 1.0, value, k, times).values
            else:
                curves[k] = fpt.fpt_ehrenfest_closed(FIGURE_S, value, k, times).values
        rows = ((t, k, curves[k][j]) for j, t in enumerate(times) for k in FIGURE_KS)
        return csv_text(("t", "k", "value"), rows)
    ns = FIGURE_TABOO_NS[kind]
    curves = {}
    for n in ns:
        if kind == "taboo-constant":
            curves[n] = fpt.taboo_constant_closed(N, 1.0, value, FIGURE_TABOO_K, n, times)
        else:
            curves[n] = fpt.taboo_ehrenfest_closed(FIGURE_S, value, FIGURE_TABOO_K, n, times)
    rows = ((t, n, max(curves[n][j], 0.0)) for j, t in enumerate(times) for n in ns)
    return csv_text(("t", "state", "value"), rows)


def cmd_figure(args):
    _emit(args, figure_csv(args.panel, _times(args)))


COMMANDS = {
    "prob": cmd_prob, "fpt": cmd_fpt, "avoid": cmd_avoid, "twod": cmd_twod,
    "simulate": cmd_simulate, "validate": cmd_validate, "figure": cmd_figure,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = COMMANDS[args.command](args)
    except (UsageError, ModelError, ValueError) as exc:
        print(f"bdsym {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError) as exc:
        print(f"bdsym {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())

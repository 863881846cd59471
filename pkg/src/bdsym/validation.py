"""The acceptance suite: ten numbered criteria, each a pure function returning a verdict.

Each check compares a result against an independent route (closed form,
uniformization, renewal solver, tridiagonal solve or simulation) at a fixed
tolerance.  ``run_all`` is used both by ``bdsym validate`` and by the tests.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _quad, fpt, kernels, sim, twod
from .rates import Family, PlaneModel, RateModel, build_preset, check_symmetry, weights

FIG_TIMES = np.linspace(0.01, 10.0, 1000)


@dataclass(frozen=True)
class Verdict:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {tag}  {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _mirror_residual(model: RateModel, times, grids) -> float:
    """max |p_{N-k,N-n}(t) - (x_n / x_k) p_{k,n}(t)| over interior k, n."""
    N = model.N
    x = weights(model)
    worst = 0.0
    for k in range(1, N):
        direct, mirror = grids[k], grids[N - k]
        for n in range(1, N):
            lhs = mirror[:, N - n]
            rhs = x.ratio(n, k) * direct[:, n]
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def _closed_grids(model, times):
    return {k: kernels.transition_grid(model, k, times, states=np.arange(1, model.N), method="closed").values
            for k in range(1, model.N)}


def _padded(values):
    # closed grids cover states 1..N-1; pad so column index equals the state
    out = np.zeros((values.shape[0], values.shape[1] + 2))
    out[:, 1:-1] = values
    return out


def criterion_1() -> tuple[bool, str]:
    model = build_preset("constant-absorbing", N=20, lam=1.0, mu=0.5)
    times = [0.1, 0.5, 1.0, 2.0, 5.0]
    closed = {k: _padded(v) for k, v in _closed_grids(model, times).items()}
    unif = {k: kernels.uniformize(model, k, times, tol=1e-9).values for k in range(1, model.N)}
    r_closed = _mirror_residual(model, times, closed)
    r_unif = _mirror_residual(model, times, unif)
    ok = r_closed <= 1e-10 and r_unif <= 1e-7
    return ok, f"closed-form residual {r_closed:.2e} (<= 1e-10), uniformization residual {r_unif:.2e} (<= 1e-7)"


def criterion_2(replications: int = 100_000, seed: int = 20240601) -> tuple[bool, str]:
    model = build_preset("constant-absorbing", N=20, lam=1.0, mu=0.5)
    k = 10
    times = (0.5, 1.0, 2.0, 5.0)
    ns = np.arange(1, model.N)
    closed = kernels.transition_grid(model, k, times, states=ns, method="closed").values
    unif_grid = kernels.uniformize(model, k, times, tol=1e-12)
    unif = np.column_stack([unif_grid.column(int(n)) for n in ns])
    gap = float(np.max(np.abs(closed - unif)))
    res = sim.run(sim.SimConfig(model, k, max(times), replications, seed=seed, times=times))
    inside = total = 0
    for j in range(len(times)):
        freq = np.bincount(res.at_times[:, j], minlength=model.N + 1)[ns] / replications
        p = closed[j]
        se = np.sqrt(p * (1.0 - p) / replications)
        inside += int(np.sum(np.abs(freq - p) <= 4.0 * se))
        total += ns.size
    share = inside / total
    ok = gap <= 1e-8 and share >= 0.95
    return ok, (f"closed vs uniformization {gap:.2e} (<= 1e-8); simulation within 4 SE at "
                f"{inside}/{total} = {share:.1%} of points (>= 95%)")


def criterion_3() -> tuple[bool, str]:
    worst = 0.0
    for mu in (0.5, 1.0):
        model = build_preset("constant-absorbing", N=20, lam=1.0, mu=mu)
        for k in (6, 7, 8, 9):
            a = fpt.fpt_renewal(model, k, 10, FIG_TIMES, tol=1e-7).values
            b = fpt.fpt_symmetric_absorbing(model, k, FIG_TIMES).values
            c = fpt.fpt_constant_closed(20, 1.0, mu, k, FIG_TIMES).values
            worst = max(worst, float(np.max(np.abs(a - b))), float(np.max(np.abs(a - c))),
                        float(np.max(np.abs(b - c))))
    return worst <= 1e-6, f"largest pairwise sup-norm gap {worst:.2e} (<= 1e-6) over 8 parameter sets"


def criterion_4() -> tuple[bool, str]:
    model = build_preset("constant-absorbing", N=20, lam=1.0, mu=1.0)
    worst = 0.0
    for k in range(1, 10):
        exact = fpt.hitting_probability(model, k, 10)
        body, tail = fpt.eventual_mass(lambda t: fpt.fpt_constant_closed(20, 1.0, 1.0, k, t).values, 150.0)
        worst = max(worst, abs(body + tail - k / 10), abs(exact - k / 10))
    return worst <= 1e-3, f"largest |mass - k/10| {worst:.2e} (<= 1e-3) for k = 1..9"


def criterion_5() -> tuple[bool, str]:
    model = build_preset("constant-absorbing", N=20, lam=1.0, mu=0.5)
    s = 10
    lam, mu = float(model.lam[s - 1]), float(model.mu[s - 1])
    t_min = 1e-4
    g = fpt.fpt_symmetric_absorbing(model, s - 1, [t_min]).values[0]
    slope = (g - lam) / t_min
    expected = -lam * (lam + mu)
    rel = abs(slope - expected) / abs(expected)
    ts = np.geomspace(1e-4, 1e-2, 50)
    g3 = fpt.fpt_symmetric_absorbing(model, s - 3, ts).values
    bound = float(np.prod(model.lam[s - 3:s]))  # twice the leading t^2 coefficient
    ratio = float(np.max(g3 / ts**2))
    ok = rel <= 0.02 and ratio <= bound and np.all(g3 > 0)
    return ok, (f"slope {slope:.5f} vs {expected:.5f} (rel {rel:.2%} <= 2%); "
                f"max g/t^2 = {ratio:.4f} <= C = {bound:.4f}")


def criterion_6() -> tuple[bool, str]:
    worst = 0.0
    for alpha in (0.5, 1.0):
        model = build_preset("ehrenfest", N=20, alpha=alpha)
        for k in (6, 7, 8, 9):
            a = fpt.fpt_symmetric_reflecting(model, k, FIG_TIMES).values
            b = fpt.fpt_ehrenfest_closed(10, alpha, k, FIG_TIMES).values
            worst = max(worst, float(np.max(np.abs(a - b))))
        ns = [6, 7, 8, 9]
        grid = fpt.taboo_reflecting(model, 9, ns, FIG_TIMES)
        for n in ns:
            ref = fpt.taboo_ehrenfest_closed(10, alpha, 9, n, FIG_TIMES)
            worst = max(worst, float(np.max(np.abs(grid.column(n) - ref))))
    model = build_preset("ehrenfest", N=20, alpha=1.0)
    limit = kernels.transition_grid(model, 9, [1e9]).values[0]
    binom = np.array([math.comb(20, n) for n in range(21)], dtype=float) / 2.0**20
    stat = float(np.max(np.abs(limit - binom)))
    ok = worst <= 1e-10 and stat <= 1e-12
    return ok, f"symmetry route vs series {worst:.2e} (<= 1e-10); stationary gap {stat:.2e} (<= 1e-12)"


def criterion_7() -> tuple[bool, str]:
    times = np.linspace(0.05, 5.0, 100)
    worst = 0.0
    for alpha in (0.5, 1.0):
        model = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=alpha)
        for k in (1, 2, 3):
            a = fpt.fpt_catastrophe(model, k, times).values
            b = fpt.catastrophe_series(1.0, alpha, k, times).values
            worst = max(worst, float(np.max(np.abs(a - b))))
    zero = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=0.0)
    plain = build_preset("constant-bilateral", lam=1.0, mu=1.0)
    reduction = 0.0
    for k in (1, 2, 3):
        a = fpt.fpt_catastrophe(zero, k, times).values
        b = fpt.fpt_bilateral(plain, k, times).values
        reduction = max(reduction, float(np.max(np.abs(a - b))))
    ok = worst <= 1e-8 and reduction <= 1e-12
    return ok, f"currents vs series {worst:.2e} (<= 1e-8); alpha = 0 reduction {reduction:.2e} (<= 1e-12)"


def criterion_8(replications: int = 100_000, seed: int = 8) -> tuple[bool, str]:
    model = PlaneModel(2.0, 1.0, 1.0, 2.0)
    xi = model.xi
    times = np.array([0.1, 0.7, 1.5, 4.0])
    mirror = 0.0
    for r in (-1, 0, 2):
        for k in ((0, 0), (1, -2), (-3, 1)):
            mk = twod.mirror(k, r)
            for n in ((1, 0), (0, 3), (-2, -1), (4, 2)):
                mn = twod.mirror(n, r)
                lhs = twod.p2d(model, mk, mn, times)
                rhs = xi ** (n[1] - k[1] - n[0] + k[0]) * twod.p2d(model, k, n, times)
                mirror = max(mirror, float(np.max(np.abs(lhs - rhs))))
    k, r = (0, -1), 0
    ts = np.linspace(0.05, 10.0, 200)
    sites = twod.diagonal_band(model, k, r, float(ts.max()))
    summed = twod.fpt2d_subdensity(model, k, r, sites, ts).sum(axis=1)
    d = abs(k[1] - k[0] - r)
    projected = d / ts * twod.projected_diagonal_probability(model, k, r, ts)
    diag_gap = float(np.max(np.abs(summed - projected)))
    pi = twod.crossing_probability(model, k, r).pi
    body, tail = twod.crossing_probability_numeric(model, k, r)
    integral_gap = abs(body + tail - pi)
    horizon = 100.0
    res = sim.run(sim.SimConfig(model, k, horizon, replications, seed=seed, line=r))
    freq = float(np.mean(res.hit_time <= horizon))
    # the simulation misses crossings after the horizon; compare with the mass by then
    by_horizon = _crossed_by(model, k, r, horizon)
    se = math.sqrt(by_horizon * (1.0 - by_horizon) / replications)
    mc_gap = abs(freq - by_horizon)
    ok = (mirror <= 1e-10 and diag_gap <= 1e-10 and pi == 0.5 and integral_gap <= 1e-3
          and mc_gap <= 4.0 * se)
    return ok, (f"mirror residual {mirror:.2e}, diagonal-sum identity {diag_gap:.2e} (both <= 1e-10); pi = {pi}; "
                f"integral gap {integral_gap:.2e} (<= 1e-3); simulation {freq:.5f} vs {by_horizon:.5f} "
                f"(|gap| {mc_gap:.2e} <= 4 SE = {4 * se:.2e}; mass beyond T = {pi - by_horizon:.1e})")


def _crossed_by(model, k, r, horizon) -> float:
    return _quad.integrate(lambda s: twod.fpt2d_total(model, k, r, s), twod.t_min(model), horizon, 200)


def criterion_9() -> tuple[bool, str]:
    lam = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
    mu = np.array([0.0, 2.0, 1.0, 1.0, 0.0])
    model = RateModel.absorbing(lam, mu)
    report = check_symmetry(model, Family.ABSORBING)
    times = [0.1, 0.5, 1.0, 2.0, 5.0]
    grids = {k: kernels.uniformize(model, k, times, tol=1e-12).values for k in range(1, model.N)}
    resid = _mirror_residual(model, times, grids)
    ok = (not report.satisfied) and resid > 1e-3
    return ok, (f"rate check satisfied={report.satisfied} (residual {report.worst_residual:.2e}); "
                f"probability-level residual {resid:.2e} (> 1e-3)")


DETERMINISM_COMMANDS = (
    ["prob", "--preset", "constant-absorbing", "--N", "20", "--lambda", "1", "--mu", "0.5",
     "--k", "10", "--tmin", "0", "--tmax", "5", "--steps", "11"],
    ["prob", "--preset", "sigmoidal", "--lambda", "2", "--mu", "1", "--c", "1",
     "--k", "2", "--tmin", "0", "--tmax", "2", "--steps", "5"],
    ["fpt", "--preset", "constant-absorbing", "--N", "20", "--lambda", "1", "--mu", "1",
     "--k", "7", "--s", "10", "--tmin", "0.01", "--tmax", "10", "--steps", "200"],
    ["avoid", "--preset", "ehrenfest", "--N", "20", "--alpha", "1", "--k", "9",
     "--n", "6", "7", "8", "9", "--tmin", "0.01", "--tmax", "5", "--steps", "50"],
    ["twod", "--lambda", "2", "1", "--mu", "1", "2", "--k", "0", "-1", "--r", "0",
     "--tmin", "0.05", "--tmax", "5", "--steps", "40"],
    ["simulate", "--preset", "constant-absorbing", "--N", "20", "--lambda", "1", "--mu", "0.5",
     "--k", "10", "--s", "15", "--r", "5", "--tmax", "5", "--steps", "3", "--replications", "20000",
     "--seed", "11"],
    ["simulate", "--lambda", "2", "1", "--mu", "1", "2", "--k", "0", "-1", "--r", "0",
     "--tmax", "20", "--steps", "2", "--replications", "10000", "--seed", "5"],
    ["figure", "2a", "--steps", "100"],
)


def _run_cli(argv, out_dir: Path, threads: int) -> dict[str, bytes]:
    from . import cli

    old = os.environ.get("BD_SYM_THREADS")
    os.environ["BD_SYM_THREADS"] = str(threads)
    try:
        code = cli.main(list(argv) + ["--out", str(out_dir / "out.csv")])
    finally:
        if old is None:
            del os.environ["BD_SYM_THREADS"]
        else:
            os.environ["BD_SYM_THREADS"] = old
    if code != 0:
        raise RuntimeError(f"command {' '.join(argv)} exited with {code}")
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


def criterion_10() -> tuple[bool, str]:
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, argv in enumerate(DETERMINISM_COMMANDS):
            outputs = []
            for run_id, threads in enumerate((1, 1, 8)):
                d = Path(tmp) / f"c{i}_{run_id}"
                d.mkdir()
                outputs.append(_run_cli(argv, d, threads))
            if not (outputs[0] == outputs[1] == outputs[2]):
                differing.append(argv[0])
    ok = not differing
    detail = f"{len(DETERMINISM_COMMANDS)} commands, 2 runs at 1 thread + 1 run at 8 threads"
    return ok, detail + ("; byte-identical" if ok else f"; differing: {', '.join(differing)}")


CRITERIA = {
    1: ("quasi-symmetry of transition probabilities", criterion_1),
    2: ("closed form, uniformization and simulation agree", criterion_2),
    3: ("three first-passage routes agree", criterion_3),
    4: ("gambler's-ruin mass of the upward density", criterion_4),
    5: ("small-time law of the first-passage density", criterion_5),
    6: ("reflecting/Ehrenfest formulas and stationary limit", criterion_6),
    7: ("catastrophe density and its alpha -> 0 limit", criterion_7),
    8: ("two-dimensional symmetry, crossing density and crossing probability", criterion_8),
    9: ("negative control fails the symmetry test", criterion_9),
    10: ("byte-identical CSV output across runs and thread counts", criterion_10),
}


def run_criterion(number: int) -> Verdict:
    title, fn = CRITERIA[number]
    start = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure with its message as the detail
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return Verdict(number, title, bool(ok), detail, time.perf_counter() - start)


def run_all(numbers=None) -> list[Verdict]:
    return [run_criterion(n) for n in (numbers or sorted(CRITERIA))]

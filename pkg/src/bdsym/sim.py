"""Exact event-driven Monte Carlo for the one- and two-dimensional models.

Every random number is a pure function of (seed, replication, counter), so a
replication produces the same path whether it runs alone, in a vectorised
batch or on another thread.  Event ``i`` of a path consumes counters ``2i``
(holding time) and ``2i + 1`` (jump choice).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._io import csv_text
from .rates import Boundary, ModelError, PlaneModel, RateModel

CHUNK = 4096
MAX_THREADS = 8

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))


def _mix(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finaliser; uint64 arithmetic wraps modulo 2**64
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed: int, reps) -> np.ndarray:
    """Per-replication keys derived from the seed and the replication index."""
    reps = np.atleast_1d(np.asarray(reps, dtype=np.uint64))
    base = _mix(np.array([seed % 2**64], dtype=np.uint64))
    with np.errstate(over="ignore"):
        return _mix(base ^ _mix(reps * _GOLDEN + _GOLDEN))


def uniforms(keys: np.ndarray, counter) -> np.ndarray:
    """Uniform variates on the open interval (0, 1)."""
    c = np.atleast_1d(np.asarray(counter, dtype=np.uint64))
    with np.errstate(over="ignore"):
        bits = _mix(keys + (c + np.uint64(1)) * _GOLDEN) >> _S11
    return (bits.astype(np.float64) + 0.5) * 2.0 ** -53


@dataclass(frozen=True)
class Stream:
    """Random stream of one replication."""

    seed: int
    rep: int

    def key(self) -> np.ndarray:
        return stream_keys(self.seed, [self.rep])

    def uniform(self, counter: int) -> float:
        return float(uniforms(self.key(), counter)[0])


# -- model dynamics ----------------------------------------------------------

def _rates(model: RateModel, n: np.ndarray):
    try:
        return model.birth(n), model.death(n), model.catastrophe(n)
    except ModelError as exc:
        raise ModelError(f"a path left the region where the rates are defined: {exc}") from None


def _terminal(model: RateModel, n: np.ndarray) -> np.ndarray:
    if model.boundary is Boundary.ABSORBING:
        return (n == 0) | (n == model.N)
    return np.zeros(n.shape, dtype=bool)


def _step1d(model, n, up_u, total, lam, mu):
    x = up_u * total
    return np.where(x < lam, n + 1, np.where(x < lam + mu, n - 1, 0))


_MOVES = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])


def _plane_rates(model: PlaneModel) -> np.ndarray:
    return np.array([model.lam1, model.lam2, model.mu1, model.mu2], dtype=float)


def simulate_path(model, start, T: float, stream: Stream) -> list[tuple]:
    """Event list [(time, state), ...] of one replication up to time T.

    The start state is not listed.  Absorbing states end the path early.
    """
    if T <= 0:
        raise ValueError("the horizon must be positive")
    key = stream.key()
    events = []
    t = 0.0
    i = 0
    if isinstance(model, PlaneModel):
        rates = _plane_rates(model)
        cum = np.cumsum(rates)
        pos = np.array(start, dtype=np.int64)
        while True:
            t = t - float(np.log(uniforms(key, 2 * i))[0]) / cum[-1]
            if t > T:
                return events
            j = int(np.searchsorted(cum, uniforms(key, 2 * i + 1)[0] * cum[-1], side="right"))
            pos = pos + _MOVES[min(j, 3)]
            events.append((t, (int(pos[0]), int(pos[1]))))
            i += 1
    n = np.array([int(start)])
    while not _terminal(model, n)[0]:
        lam, mu, alpha = _rates(model, n)
        total = lam + mu + alpha
        if total[0] <= 0:
            raise ModelError(f"zero exit rate at non-absorbing state {int(n[0])}")
        t = t + float(-np.log(uniforms(key, 2 * i))[0] / total[0])
        if t > T:
            break
        n = _step1d(model, n, uniforms(key, 2 * i + 1), total, lam, mu)
        events.append((t, int(n[0])))
        i += 1
    return events


# -- configuration and estimates ------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """What to simulate and which observables to record.

    ``times`` records the state at fixed times; ``target`` records the first
    hitting time of a state; ``taboo`` marks paths that visit the given state;
    ``line`` records the first crossing of x2 = x1 + line by a plane model.
    ``states`` restricts the transition estimates to these states; by default
    every state seen at a recording time is reported.
    """

    model: RateModel | PlaneModel
    start: int | tuple[int, int]
    horizon: float
    replications: int
    seed: int = 0
    times: tuple[float, ...] = ()
    states: tuple[int, ...] | None = None
    target: int | None = None
    taboo: int | None = None
    line: int | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("at least one replication is required")
        if not self.horizon > 0:
            raise ValueError("the horizon must be positive")
        if any(t < 0 or t > self.horizon for t in self.times):
            raise ValueError("recording times must lie in [0, horizon]")
        if list(self.times) != sorted(set(self.times)):
            raise ValueError("recording times must be strictly increasing")
        plane = isinstance(self.model, PlaneModel)
        if plane and (self.target is not None or self.taboo is not None):
            raise ValueError("target and taboo observables are one-dimensional")
        if not plane and self.line is not None:
            raise ValueError("line crossing needs a plane model")


@dataclass(frozen=True)
class EmpiricalEstimate:
    observable: str
    estimate: float
    stderr: float
    R: int


@dataclass
class SimResult:
    """Raw per-replication records plus the derived estimates."""

    config: SimConfig
    at_times: np.ndarray  # (R, len(times)) state, or (R, len(times), 2) in the plane
    hit_time: np.ndarray  # first hitting time of target or line, inf if none
    hit_site: np.ndarray  # x1 where the line was first reached (plane only)
    taboo_time: np.ndarray  # first visit to the taboo state, inf if none
    estimates: list[EmpiricalEstimate] = field(default_factory=list)

    def to_csv(self) -> str:
        rows = ((e.observable, e.estimate, e.stderr, e.R) for e in self.estimates)
        return csv_text(("observable", "estimate", "stderr", "R"), rows)

    def hitting_histogram(self, edges) -> str:
        return histogram_csv(self.hit_time, edges)


def histogram_csv(samples, edges) -> str:
    """Counts per bin; samples outside the edges are ignored."""
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(np.asarray(samples)[np.isfinite(samples)], bins=edges)
    return csv_text(("bin_lo", "bin_hi", "count"), zip(edges[:-1], edges[1:], counts))


def _binomial(name: str, hits: int, R: int) -> EmpiricalEstimate:
    p = hits / R
    return EmpiricalEstimate(name, p, math.sqrt(p * (1.0 - p) / R), R)


# -- vectorised engines ---------------------------------------------------------

def _run_chunk(config: SimConfig, reps: np.ndarray) -> dict[str, np.ndarray]:
    if isinstance(config.model, PlaneModel):
        return _run_plane(config, reps)
    return _run_line(config, reps)


def _record(rec, times, clock, new_clock, value, live):
    for j, tau in enumerate(times):
        mask = live & (clock <= tau) & (new_clock > tau)
        rec[mask, j] = value[mask]


def _run_line(config: SimConfig, reps: np.ndarray) -> dict[str, np.ndarray]:
    model, T = config.model, config.horizon
    times = np.asarray(config.times, dtype=float)
    keys = stream_keys(config.seed, reps)
    size = reps.size
    n = np.full(size, int(config.start), dtype=np.int64)
    clock = np.zeros(size)
    rec = np.zeros((size, times.size), dtype=np.int64)
    hit = np.full(size, np.inf)
    taboo = np.full(size, np.inf)
    if config.target is not None:
        hit[n == config.target] = 0.0
    if config.taboo is not None:
        taboo[n == config.taboo] = 0.0
    # stop a path once every requested observable is settled
    needs_path = times.size > 0 or config.taboo is not None
    live = np.ones(size, dtype=bool)
    step = 0
    while True:
        if not needs_path and config.target is not None:
            live &= ~np.isfinite(hit)
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        cur = n[idx]
        stuck = _terminal(model, cur)
        lam, mu, alpha = _rates(model, cur)
        total = lam + mu + alpha
        if np.any((total <= 0) & ~stuck):
            bad = int(cur[(total <= 0) & ~stuck][0])
            raise ModelError(f"zero exit rate at non-absorbing state {bad}")
        k = keys[idx]
        with np.errstate(divide="ignore"):
            hold = np.where(stuck, np.inf, -np.log(uniforms(k, 2 * step)) / np.where(stuck, 1.0, total))
        new_clock = clock[idx] + hold
        sub_rec = rec[idx]
        _record(sub_rec, times, clock[idx], new_clock, cur, np.ones(idx.size, dtype=bool))
        rec[idx] = sub_rec
        moving = new_clock <= T
        nxt = _step1d(model, cur, uniforms(k, 2 * step + 1), np.where(stuck, 1.0, total), lam, mu)
        mv = idx[moving]
        n[mv] = nxt[moving]
        clock[mv] = new_clock[moving]
        if config.target is not None:
            first = mv[(n[mv] == config.target) & ~np.isfinite(hit[mv])]
            hit[first] = clock[first]
        if config.taboo is not None:
            first = mv[(n[mv] == config.taboo) & ~np.isfinite(taboo[mv])]
            taboo[first] = clock[first]
        live[idx[~moving]] = False
        step += 1
    return {"at_times": rec, "hit_time": hit, "hit_site": np.zeros(size, dtype=np.int64),
            "taboo_time": taboo}


def _run_plane(config: SimConfig, reps: np.ndarray) -> dict[str, np.ndarray]:
    model, T = config.model, config.horizon
    times = np.asarray(config.times, dtype=float)
    rates = _plane_rates(model)
    cum = np.cumsum(rates)
    keys = stream_keys(config.seed, reps)
    size = reps.size
    pos = np.tile(np.asarray(config.start, dtype=np.int64), (size, 1))
    clock = np.zeros(size)
    rec = np.zeros((size, times.size, 2), dtype=np.int64)
    hit = np.full(size, np.inf)
    site = np.zeros(size, dtype=np.int64)
    r = config.line
    if r is not None:
        on = pos[:, 1] - pos[:, 0] == r
        hit[on] = 0.0
        site[on] = pos[on, 0]
    live = np.ones(size, dtype=bool)
    step = 0
    while True:
        if times.size == 0 and r is not None:
            live &= ~np.isfinite(hit)
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        k = keys[idx]
        new_clock = clock[idx] - np.log(uniforms(k, 2 * step)) / cum[-1]
        for j, tau in enumerate(times):
            mask = (clock[idx] <= tau) & (new_clock > tau)
            rec[idx[mask], j] = pos[idx[mask]]
        moving = new_clock <= T
        choice = np.minimum(np.searchsorted(cum, uniforms(k, 2 * step + 1) * cum[-1], side="right"), 3)
        mv = idx[moving]
        pos[mv] += _MOVES[choice[moving]]
        clock[mv] = new_clock[moving]
        if r is not None:
            first = mv[(pos[mv, 1] - pos[mv, 0] == r) & ~np.isfinite(hit[mv])]
            hit[first] = clock[first]
            site[first] = pos[first, 0]
        live[idx[~moving]] = False
        step += 1
    return {"at_times": rec, "hit_time": hit, "hit_site": site,
            "taboo_time": np.full(size, np.inf)}


def thread_count() -> int:
    """Worker threads, capped by the BD_SYM_THREADS environment variable."""
    env = os.environ.get("BD_SYM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"BD_SYM_THREADS must be an integer, got {env!r}") from None
    return max(1, min(os.cpu_count() or 1, MAX_THREADS))


def run(config: SimConfig, threads: int | None = None) -> SimResult:
    """Simulate all replications; chunks are merged in replication order."""
    reps = np.arange(config.replications, dtype=np.uint64)
    chunks = [reps[i:i + CHUNK] for i in range(0, reps.size, CHUNK)]
    threads = thread_count() if threads is None else max(1, threads)
    if threads == 1 or len(chunks) == 1:
        parts = [_run_chunk(config, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(config, c), chunks))
    merged = {name: np.concatenate([p[name] for p in parts]) for name in parts[0]}
    result = SimResult(config, **merged)
    result.estimates = _estimates(result)
    return result


def estimate(config: SimConfig, threads: int | None = None) -> list[EmpiricalEstimate]:
    """Aggregate the requested observables over all replications."""
    return run(config, threads).estimates


def _estimates(res: SimResult) -> list[EmpiricalEstimate]:
    cfg = res.config
    R = cfg.replications
    out = []
    plane = isinstance(cfg.model, PlaneModel)
    avoided = ~np.isfinite(res.taboo_time) if cfg.taboo is not None else None
    for j, tau in enumerate(cfg.times):
        if plane:
            col = res.at_times[:, j, :]
            pts = sorted(set(map(tuple, col.tolist())))
            for p in pts:
                hits = int(np.sum((col[:, 0] == p[0]) & (col[:, 1] == p[1])))
                out.append(_binomial(f"p(t={tau:.17g};n={p[0]}:{p[1]})", hits, R))
            continue
        col = res.at_times[:, j]
        states = cfg.states if cfg.states is not None else np.unique(col).tolist()
        for s in states:
            out.append(_binomial(f"p(t={tau:.17g};n={int(s)})", int(np.sum(col == s)), R))
        if avoided is not None:
            ok = res.taboo_time > tau
            for s in states:
                if s == cfg.taboo:
                    continue
                hits = int(np.sum(ok & (col == s)))
                out.append(_binomial(f"taboo(t={tau:.17g};n={int(s)};r={cfg.taboo})", hits, R))
    T = cfg.horizon
    if cfg.target is not None:
        out.append(_binomial(f"hit(s={cfg.target};T={T:.17g})", int(np.sum(res.hit_time <= T)), R))
    if cfg.taboo is not None:
        out.append(_binomial(f"avoid(r={cfg.taboo};T={T:.17g})", int(np.sum(~np.isfinite(res.taboo_time))), R))
    if cfg.line is not None:
        out.append(_binomial(f"cross(r={cfg.line};T={T:.17g})", int(np.sum(res.hit_time <= T)), R))
    return out

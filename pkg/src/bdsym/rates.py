"""Rate models for birth-death processes and their spatial symmetry conditions.

A :class:`RateModel` stores birth, death and (optionally) catastrophe rates
over an explicit support: ``{0..N}`` for truncated processes and a window
``[L, R]`` for bilateral ones.  Bilateral presets know their closed-form rate
laws, so they can be re-materialised on any window; custom bilateral models
are only defined on the window they were built with.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np


class Boundary(enum.Enum):
    ABSORBING = "absorbing"
    REFLECTING = "reflecting"
    BILATERAL = "bilateral"


class Family(enum.Enum):
    ABSORBING = "absorbing"
    REFLECTING = "reflecting"
    BILATERAL = "bilateral"
    CATASTROPHE = "catastrophe"
    TWOD = "twod"


class Preset(enum.Enum):
    CONSTANT_ABSORBING = "constant-absorbing"
    EHRENFEST = "ehrenfest"
    QUADRATIC_EHRENFEST = "quadratic-ehrenfest"
    SIGMOIDAL = "sigmoidal"
    ALTERNATING_A = "alternating-a"
    ALTERNATING_B = "alternating-b"
    CONSTANT_BILATERAL = "constant-bilateral"
    CONSTANT_CATASTROPHE = "constant-catastrophe"
    CUSTOM = "custom"


DEFAULT_WINDOW = (-20, 20)
SYMMETRY_TOL = 1e-12


class ModelError(ValueError):
    """Raised for rate models that violate their boundary conventions."""


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RateModel:
    """Birth/death/catastrophe rates over a declared state space.

    ``lam[i]``, ``mu[i]`` and ``alpha[i]`` are the rates of state
    ``states[i]``.  For truncated models ``states`` is ``0..N``; for bilateral
    models it is the window ``L..R``.  ``alpha`` is ``None`` unless the model
    has catastrophes; its entry at state 0 is stored as 0 and never used.
    """

    boundary: Boundary
    lam: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray | None = None
    window: tuple[int, int] | None = None
    preset: Preset = Preset.CUSTOM
    params: Mapping[str, float] = field(default_factory=dict)
    # Bilateral models are mirror-symmetric about this point (0 or 1/2).
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lam", _readonly(self.lam))
        object.__setattr__(self, "mu", _readonly(self.mu))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", _readonly(self.alpha))
        object.__setattr__(self, "params", dict(self.params))
        self._validate()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def absorbing(cls, lam, mu) -> "RateModel":
        return cls(Boundary.ABSORBING, lam, mu)

    @classmethod
    def reflecting(cls, lam, mu) -> "RateModel":
        return cls(Boundary.REFLECTING, lam, mu)

    @classmethod
    def bilateral(cls, lam, mu, window, alpha=None) -> "RateModel":
        return cls(Boundary.BILATERAL, lam, mu, alpha=alpha, window=tuple(window))

    def _validate(self):
        lam, mu = self.lam, self.mu
        if lam.shape != mu.shape or lam.ndim != 1:
            raise ModelError("lambda and mu must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(mu))):
            raise ModelError("rates must be finite")
        if np.any(lam < 0) or np.any(mu < 0):
            raise ModelError("rates must be nonnegative")
        if self.boundary is Boundary.BILATERAL:
            if self.window is None:
                raise ModelError("bilateral models need a window")
            lo, hi = self.window
            if hi - lo + 1 != lam.size or lo > 0 or hi < 0:
                raise ModelError("window must contain 0 and match the rate arrays")
            if np.any(lam <= 0) or np.any(mu <= 0):
                raise ModelError("bilateral rates must be positive")
            if self.alpha is not None:
                a = self.alpha
                if a.shape != lam.shape or np.any(a < 0) or not np.all(np.isfinite(a)):
                    raise ModelError("catastrophe rates must be finite and nonnegative")
                if a[-lo] != 0:
                    raise ModelError("catastrophe rate is not defined at state 0")
            return
        if self.alpha is not None:
            raise ModelError("catastrophes are only supported on bilateral models")
        N = lam.size - 1
        if N <= 1:
            raise ModelError("truncated models need N > 1")
        if np.any(lam[1:N] <= 0) or np.any(mu[1:N] <= 0):
            raise ModelError("interior rates must be positive")
        if self.boundary is Boundary.ABSORBING:
            if lam[0] or mu[0] or lam[N] or mu[N]:
                raise ModelError("absorbing endpoints need zero exit rates")
        else:
            if mu[0] or lam[N]:
                raise ModelError("reflecting endpoints need mu_0 = lambda_N = 0")
            if lam[0] <= 0 or mu[N] <= 0:
                raise ModelError("reflecting endpoints need lambda_0, mu_N > 0")

    # -- descriptors ----------------------------------------------------------

    @property
    def family(self) -> Family:
        if self.boundary is Boundary.ABSORBING:
            return Family.ABSORBING
        if self.boundary is Boundary.REFLECTING:
            return Family.REFLECTING
        return Family.CATASTROPHE if self.alpha is not None else Family.BILATERAL

    @property
    def N(self) -> int | None:
        return None if self.boundary is Boundary.BILATERAL else self.lam.size - 1

    @property
    def states(self) -> np.ndarray:
        if self.boundary is Boundary.BILATERAL:
            lo, hi = self.window
            return np.arange(lo, hi + 1)
        return np.arange(self.lam.size)

    @property
    def max_exit_rate(self) -> float:
        total = self.lam + self.mu
        if self.alpha is not None:
            total = total + self.alpha
        return float(total.max())

    def _index(self, n) -> np.ndarray:
        n = np.asarray(n)
        offset = self.window[0] if self.boundary is Boundary.BILATERAL else 0
        idx = n - offset
        if np.any(idx < 0) or np.any(idx >= self.lam.size):
            raise ModelError(f"state outside the model support {self.support()}")
        return idx

    def support(self) -> tuple[int, int]:
        s = self.states
        return int(s[0]), int(s[-1])

    def birth(self, n) -> np.ndarray:
        if self._has_law() and not self._inside(n):
            return _preset_rates(self.preset, self.params, np.asarray(n))[0]
        return self.lam[self._index(n)]

    def death(self, n) -> np.ndarray:
        if self._has_law() and not self._inside(n):
            return _preset_rates(self.preset, self.params, np.asarray(n))[1]
        return self.mu[self._index(n)]

    def catastrophe(self, n) -> np.ndarray:
        n = np.asarray(n)
        if self.alpha is None:
            return np.zeros(n.shape)
        if self._has_law() and not self._inside(n):
            return _preset_rates(self.preset, self.params, n)[2]
        return self.alpha[self._index(n)]

    def _has_law(self) -> bool:
        return self.boundary is Boundary.BILATERAL and self.preset is not Preset.CUSTOM

    def _inside(self, n) -> bool:
        lo, hi = self.support()
        n = np.asarray(n)
        return bool(np.all((n >= lo) & (n <= hi)))

    def with_window(self, window) -> "RateModel":
        """Re-materialise a bilateral preset on another window."""
        if self.boundary is not Boundary.BILATERAL:
            raise ModelError("only bilateral models carry a window")
        lo, hi = int(window[0]), int(window[1])
        if (lo, hi) == self.window:
            return self
        if self.preset is Preset.CUSTOM:
            cur_lo, cur_hi = self.window
            if lo < cur_lo or hi > cur_hi:
                raise ModelError(
                    f"custom bilateral model is defined on {self.window}; "
                    f"window {(lo, hi)} requested"
                )
            sl = slice(lo - cur_lo, hi - cur_lo + 1)
            alpha = None if self.alpha is None else self.alpha[sl]
            return RateModel(Boundary.BILATERAL, self.lam[sl], self.mu[sl], alpha,
                             (lo, hi), self.preset, self.params, self.center)
        return build_preset(self.preset, window=(lo, hi), **self.params)

    def scaled(self, factor: float) -> "RateModel":
        """All rates multiplied by ``factor`` (a pure time change)."""
        alpha = None if self.alpha is None else self.alpha * factor
        return RateModel(self.boundary, self.lam * factor, self.mu * factor, alpha,
                         self.window, Preset.CUSTOM, {}, self.center)

    # -- serialisation --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "N": self.N,
            "window": list(self.window) if self.window else None,
            "preset": self.preset.value,
            "params": dict(self.params),
            "lambda": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "alpha": None if self.alpha is None else self.alpha.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RateModel":
        preset = Preset(doc.get("preset", "custom"))
        window = tuple(doc["window"]) if doc.get("window") else None
        if preset is not Preset.CUSTOM:
            params = dict(doc.get("params") or {})
            if window is not None:
                params["window"] = window
            if doc.get("N") is not None:
                params["N"] = doc["N"]
            return build_preset(preset, **params)
        family = Family(doc["family"])
        if family is Family.ABSORBING:
            return cls.absorbing(doc["lambda"], doc["mu"])
        if family is Family.REFLECTING:
            return cls.reflecting(doc["lambda"], doc["mu"])
        if family in (Family.BILATERAL, Family.CATASTROPHE):
            alpha = doc.get("alpha")
            if family is Family.CATASTROPHE and alpha is None:
                raise ModelError("catastrophe model without alpha rates")
            return cls.bilateral(doc["lambda"], doc["mu"], window, alpha=alpha)
        raise ModelError(f"family {family.value} has no one-dimensional rate model")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RateModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PlaneModel:
    """Constant-rate two-dimensional birth-death process on the integer lattice."""

    lam1: float
    lam2: float
    mu1: float
    mu2: float

    def __post_init__(self):
        for name in ("lam1", "lam2", "mu1", "mu2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be positive and finite")

    @property
    def xi(self) -> float:
        return self.lam1 / self.lam2

    def is_symmetric(self, tol: float = SYMMETRY_TOL) -> bool:
        return check_symmetry(self, Family.TWOD, tol).satisfied


@dataclass(frozen=True)
class SymmetryWeights:
    x: np.ndarray

    def ratio(self, n, k) -> np.ndarray:
        """``x_n / x_k``."""
        return self.x[n] / self.x[k]


@dataclass(frozen=True)
class SymmetryReport:
    family: Family
    satisfied: bool
    worst_residual: float
    violating_index: int | None = None
    tol: float = SYMMETRY_TOL

    def __str__(self) -> str:
        state = "satisfied" if self.satisfied else f"violated at {self.violating_index}"
        return f"{self.family.value} symmetry {state} (residual {self.worst_residual:.3e})"


# -- presets ------------------------------------------------------------------


def _sigmoid_log_ratio(n, lam, mu, c, shift):
    # log((1 + c r^(n+shift)) / (1 + c r^n)) with r = mu/lam, overflow safe
    if c == 0:
        return np.zeros(np.shape(n))
    L = math.log(mu / lam)
    lc = math.log(c)
    n = np.asarray(n, dtype=float)
    return np.logaddexp(0.0, lc + (n + shift) * L) - np.logaddexp(0.0, lc + n * L)


def _preset_rates(preset: Preset, params: Mapping[str, float], n: np.ndarray):
    """Rate laws of the bilateral presets evaluated at arbitrary states."""
    n = np.asarray(n)
    lam = params.get("lam")
    mu = params.get("mu")
    zeros = np.zeros(n.shape)
    if preset is Preset.CONSTANT_BILATERAL:
        return np.full(n.shape, lam), np.full(n.shape, mu), zeros
    if preset is Preset.CONSTANT_CATASTROPHE:
        alpha = np.where(n == 0, 0.0, params["alpha"])
        return np.full(n.shape, lam), np.full(n.shape, mu), alpha
    if preset is Preset.SIGMOIDAL:
        c = params["c"]
        birth = lam * np.exp(_sigmoid_log_ratio(n, lam, mu, c, 1))
        death = mu * np.exp(_sigmoid_log_ratio(n, lam, mu, c, -1))
        return birth, death, zeros
    even = (n % 2) == 0
    if preset is Preset.ALTERNATING_A:
        return np.where(even, lam, mu), np.where(even, mu, lam), zeros
    if preset is Preset.ALTERNATING_B:
        return np.where(even, lam, mu), np.where(even, lam, mu), zeros
    raise ModelError(f"{preset.value} has no bilateral rate law")


def _positive(name, value, allow_zero=False):
    if value is None:
        raise ModelError(f"preset parameter {name} is required")
    value = float(value)
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        raise ModelError(f"preset parameter {name} must be positive, got {value}")
    return value


def build_preset(tag, *, N=None, lam=None, mu=None, alpha=None, c=None, window=None) -> RateModel:
    """Construct one of the named rate models.

    Truncated presets take ``N``; bilateral presets take a ``window``
    (default ``(-20, 20)``).  ``alpha`` is the Ehrenfest time scale for the
    two Ehrenfest presets and the catastrophe rate for ``constant-catastrophe``
    (where ``alpha = 0`` is allowed as the catastrophe-free limit).
    """
    preset = Preset(tag)
    if preset in (Preset.CONSTANT_ABSORBING, Preset.EHRENFEST, Preset.QUADRATIC_EHRENFEST):
        if N is None or int(N) != N or int(N) <= 1:
            raise ModelError(f"truncated presets need an integer N > 1, got {N}")
        N = int(N)
        n = np.arange(N + 1, dtype=float)
        if preset is Preset.CONSTANT_ABSORBING:
            lam, mu = _positive("lam", lam), _positive("mu", mu)
            birth = np.full(N + 1, lam)
            death = np.full(N + 1, mu)
            birth[[0, N]] = 0.0
            death[[0, N]] = 0.0
            return RateModel(Boundary.ABSORBING, birth, death, preset=preset,
                             params={"N": N, "lam": lam, "mu": mu})
        alpha = _positive("alpha", alpha)
        power = 1 if preset is Preset.EHRENFEST else 2
        return RateModel(Boundary.REFLECTING, alpha * (N - n) ** power, alpha * n ** power,
                         preset=preset, params={"N": N, "alpha": alpha})

    if preset is Preset.CUSTOM:
        raise ModelError("custom models are built with RateModel.absorbing/reflecting/bilateral")

    lo, hi = (int(w) for w in (window if window is not None else DEFAULT_WINDOW))
    if lo > 0 or hi < 0:
        raise ModelError("window must contain 0")
    params: dict[str, float] = {"lam": _positive("lam", lam), "mu": _positive("mu", mu)}
    if preset is Preset.SIGMOIDAL:
        params["c"] = _positive("c", 1.0 if c is None else c, allow_zero=True)
    if preset is Preset.CONSTANT_CATASTROPHE:
        params["alpha"] = _positive("alpha", alpha, allow_zero=True)
    states = np.arange(lo, hi + 1)
    birth, death, cat = _preset_rates(preset, params, states)
    center = 0.5 if preset is Preset.ALTERNATING_A else 0.0
    return RateModel(Boundary.BILATERAL, birth, death,
                     cat if preset is Preset.CONSTANT_CATASTROPHE else None,
                     (lo, hi), preset, params, center)


# -- symmetry -----------------------------------------------------------------


def weights(model: RateModel) -> SymmetryWeights:
    """Quasi-symmetry weights of a truncated model with absorbing endpoints."""
    if model.boundary is not Boundary.ABSORBING:
        raise ModelError("symmetry weights are defined for absorbing models only")
    lam, mu, N = model.lam, model.mu, model.N
    x = np.empty(N + 1)
    x[0] = 1.0
    for n in range(1, N):
        x[n] = mu[n] / lam[N - n] * x[n - 1]
    x[N] = mu[1] / lam[N - 1] * x[N - 1]
    x.setflags(write=False)
    return SymmetryWeights(x)


def _residuals(lhs, rhs) -> np.ndarray:
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    diff = np.abs(lhs - rhs)
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    return np.where(scale > 1.0, diff / np.where(scale > 1.0, scale, 1.0), diff)


def _report(family, index, resid, tol) -> SymmetryReport:
    if resid.size == 0:
        return SymmetryReport(family, True, 0.0, None, tol)
    i = int(np.argmax(resid))
    worst = float(resid[i])
    ok = worst <= tol
    return SymmetryReport(family, ok, worst, None if ok else int(index[i]), tol)


def check_symmetry(model, family: Family | str | None = None, tol: float = SYMMETRY_TOL) -> SymmetryReport:
    """Check the rate-level symmetry condition of ``family`` on ``model``."""
    if isinstance(model, PlaneModel):
        family = Family(family) if family is not None else Family.TWOD
        if family is not Family.TWOD:
            raise ModelError("plane models only support the twod family")
        r = _residuals([model.lam1 / model.lam2], [model.mu2 / model.mu1])
        return _report(family, np.array([0]), r, tol)

    family = Family(family) if family is not None else model.family
    if family is Family.TWOD:
        raise ModelError("twod symmetry needs a PlaneModel")
    if family is Family.CATASTROPHE and model.alpha is None:
        raise ModelError("model has no catastrophe rates")
    expected = {
        Family.ABSORBING: Boundary.ABSORBING,
        Family.REFLECTING: Boundary.REFLECTING,
        Family.BILATERAL: Boundary.BILATERAL,
        Family.CATASTROPHE: Boundary.BILATERAL,
    }[family]
    if model.boundary is not expected:
        raise ModelError(f"{family.value} check requested for a {model.boundary.value} model")

    lam, mu = model.lam, model.mu
    if family is Family.ABSORBING:
        N = model.N
        n1 = np.arange(1, N - 1)
        prod = _residuals(lam[n1] * mu[n1 + 1], lam[N - n1 - 1] * mu[N - n1])
        n2 = np.arange(1, N)
        tot = _residuals(lam[n2] + mu[n2], lam[N - n2] + mu[N - n2])
        return _report(family, np.concatenate([n1, n2]), np.concatenate([prod, tot]), tol)
    if family is Family.REFLECTING:
        N = model.N
        n = np.arange(N + 1)
        return _report(family, n, _residuals(lam[n], mu[N - n]), tol)

    # mirror n -> 2c - n over the part of the window where both sides exist
    lo, hi = model.window
    twice = int(round(2 * model.center))
    n = np.arange(lo, hi + 1)
    n = n[(twice - n >= lo) & (twice - n <= hi)]
    resid = _residuals(model.birth(n), model.death(twice - n))
    index = n
    if family is Family.CATASTROPHE:
        m = n[n != 0]
        resid = np.concatenate([resid, _residuals(model.catastrophe(m), model.catastrophe(twice - m))])
        index = np.concatenate([n, m])
    return _report(family, index, resid, tol)

"""Seeded finite-state base systems driving the fibered dynamics.

The abstract ergodic base is realised as a two-sided stationary chain over a
finite state set.  Every state along a path is a pure function of
(system, seed, index): uniforms come from a counter-based RNG keyed by
(seed, block), positive indices are grown forward with the transition law and
negative indices backward with its time reversal.  Shifting the base map by k
is therefore just an index translation, and extending a window then
restricting it reproduces the original window bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, InsufficientReturns, WindowExhausted

_BLOCK = 4096
_STOCHASTIC_TOL = 1e-12
DEFAULT_MAX_RADIUS = 2 ** 16


@dataclass(frozen=True)
class DriverSystem:
    """Finite-state base law: i.i.d. weights or an irreducible row-stochastic matrix."""

    states: tuple[str, ...]
    kind: str  # "iid" | "markov"
    weights: np.ndarray | None = None
    matrix: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.states:
            raise ConfigError("empty driver state set")
        if len(set(self.states)) != len(self.states):
            raise ConfigError("duplicate driver state labels")
        if self.kind == "iid":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(self.states),):
                raise ConfigError("iid weights must have one entry per state")
            _check_distribution(w, "iid weights")
            object.__setattr__(self, "weights", w)
        elif self.kind == "markov":
            m = np.asarray(self.matrix, dtype=float)
            n = len(self.states)
            if m.shape != (n, n):
                raise ConfigError("markov matrix must be square over the states")
            for i in range(n):
                _check_distribution(m[i], f"markov row {i}")
            if not _irreducible(m):
                raise ConfigError("markov law is not irreducible")
            object.__setattr__(self, "matrix", m)
        else:
            raise ConfigError(f"unknown driver law kind {self.kind!r}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index_of(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise ConfigError(f"unknown driver state {label!r}") from None

    def stationary(self) -> np.ndarray:
        """Stationary vector of the law (the weights themselves for i.i.d.)."""
        if self.kind == "iid":
            return self.weights.copy()
        m = self.matrix
        n = m.shape[0]
        a = np.vstack([m.T - np.eye(n), np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        pi = np.maximum(pi, 0.0)
        return pi / pi.sum()

    def reversal(self) -> np.ndarray:
        """Backward kernel R[s, s'] = P(previous = s' | current = s)."""
        if self.kind == "iid":
            return np.tile(self.weights, (self.n_states, 1))
        pi = self.stationary()
        r = (self.matrix * pi[:, None]).T / pi[:, None]
        return r / r.sum(axis=1, keepdims=True)


def _check_distribution(w: np.ndarray, what: str) -> None:
    if np.any(w < 0):
        raise ConfigError(f"{what} has negative entries")
    if abs(w.sum() - 1.0) > _STOCHASTIC_TOL:
        raise ConfigError(f"{what} does not sum to 1 (got {w.sum()!r})")


def _irreducible(m: np.ndarray) -> bool:
    n, labels = connected_components(csr_matrix(m > 0), directed=True, connection="strong")
    return n == 1


class _PathCore:
    """Shared lazy two-sided state buffer for one (system, seed)."""

    __slots__ = ("system", "seed", "max_radius", "_neg", "_pos", "_ublocks", "_rev")

    def __init__(self, system: DriverSystem, seed: int, max_radius: int):
        self.system = system
        self.seed = int(seed)
        self.max_radius = int(max_radius)
        self._pos: list[int] = []  # states at global indices 0, 1, ...
        self._neg: list[int] = []  # states at global indices -1, -2, ...
        self._ublocks: dict[int, np.ndarray] = {}
        self._rev: np.ndarray | None = None
        self._seed_origin()

    def _uniform(self, g: int) -> float:
        block, off = divmod(g, _BLOCK)
        u = self._ublocks.get(block)
        if u is None:
            ss = np.random.SeedSequence(entropy=(self.seed & (2 ** 64 - 1), block & (2 ** 64 - 1), 1 if block < 0 else 0))
            u = np.random.Generator(np.random.Philox(ss)).random(_BLOCK)
            self._ublocks[block] = u
        return float(u[off])

    def _draw(self, dist: np.ndarray, g: int) -> int:
        return int(np.searchsorted(np.cumsum(dist), self._uniform(g), side="right").clip(0, len(dist) - 1))

    def _seed_origin(self) -> None:
        sys = self.system
        init = sys.weights if sys.kind == "iid" else sys.stationary()
        self._pos.append(self._draw(init, 0))

    def state(self, g: int) -> int:
        if abs(g) > self.max_radius:
            raise WindowExhausted(
                f"index {g} beyond configured maximum window radius {self.max_radius}"
            )
        sys = self.system
        if g >= 0:
            while len(self._pos) <= g:
                i = len(self._pos)
                if sys.kind == "iid":
                    self._pos.append(self._draw(sys.weights, i))
                else:
                    self._pos.append(self._draw(sys.matrix[self._pos[i - 1]], i))
            return self._pos[g]
        if sys.kind != "iid" and self._rev is None:
            self._rev = sys.reversal()
        rev = self._rev
        while len(self._neg) < -g:
            i = -(len(self._neg) + 1)  # next global index to materialize
            if sys.kind == "iid":
                self._neg.append(self._draw(sys.weights, i))
            else:
                cur = self._neg[-i - 2] if i < -1 else self._pos[0]  # state at i + 1
                self._neg.append(self._draw(rev[cur], i))
        return self._neg[-g - 1]


@dataclass
class DriverPath:
    """One sampled base realization; index 0 is the reference point, index n its n-th shift."""

    core: _PathCore
    origin: int = 0
    radius: int = 0
    word_cache: dict = field(default_factory=dict, repr=False)

    @property
    def system(self) -> DriverSystem:
        return self.core.system

    @property
    def seed(self) -> int:
        return self.core.seed

    @property
    def max_radius(self) -> int:
        return self.core.max_radius

    def state(self, i: int) -> int:
        """Driver state index at path index i (lazily sampled)."""
        return self.core.state(self.origin + i)

    def state_label(self, i: int) -> str:
        return self.system.states[self.state(i)]

    def states(self, lo: int, hi: int) -> tuple[int, ...]:
        """States at indices lo..hi inclusive."""
        return tuple(self.state(i) for i in range(lo, hi + 1))

    def window(self) -> tuple[int, ...]:
        return self.states(-self.radius, self.radius)


def sample_path(
    system: DriverSystem,
    radius: int,
    seed: int | None = None,
    max_radius: int = DEFAULT_MAX_RADIUS,
) -> DriverPath:
    """Sample a two-sided driver window of length 2*radius + 1, deterministic in the seed."""
    if radius < 1:
        raise ConfigError("radius must be >= 1")
    if radius > max_radius:
        raise ConfigError(f"radius {radius} exceeds maximum window radius {max_radius}")
    core = _PathCore(system, system.seed if seed is None else seed, max_radius)
    path = DriverPath(core=core, origin=0, radius=radius)
    path.window()  # materialize eagerly so the nominal window is concrete
    return path


def shift_path(path: DriverPath, k: int) -> DriverPath:
    """Translate the base point by k: the result at index j reads the input at index j + k."""
    if abs(path.origin + k) > path.max_radius:
        raise WindowExhausted(f"shift by {k} leaves the configured maximum radius")
    return DriverPath(core=path.core, origin=path.origin + k, radius=path.radius)


@dataclass(frozen=True)
class EventSpec:
    """Predicate on a bounded window of driver states around an index."""

    radius: int
    fn: Callable[[tuple[int, ...]], bool]
    name: str = "event"

    def evaluate(self, path: DriverPath, i: int) -> bool:
        return bool(self.fn(path.states(i - self.radius, i + self.radius)))

    @staticmethod
    def always(name: str = "always") -> "EventSpec":
        return EventSpec(radius=0, fn=lambda w: True, name=name)

    @staticmethod
    def state_in(system: DriverSystem, labels: Iterable[str], name: str = "") -> "EventSpec":
        idx = frozenset(system.index_of(s) for s in labels)
        return EventSpec(radius=0, fn=lambda w, _idx=idx: w[0] in _idx,
                         name=name or f"state_in({sorted(labels)})")


def return_times(
    path: DriverPath,
    event: EventSpec,
    count: int,
    direction: str = "forward",
) -> tuple[int, ...]:
    """Strictly increasing entrance times n >= 1 of the event at the n-th (or -n-th) shift."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    if direction not in ("forward", "backward"):
        raise ConfigError(f"unknown direction {direction!r}")
    sign = 1 if direction == "forward" else -1
    out: list[int] = []
    n = 1
    limit = path.max_radius - event.radius - abs(path.origin)
    while len(out) < count:
        if n > limit:
            raise InsufficientReturns(
                f"only {len(out)} of {count} returns of {event.name} within radius {limit}"
            )
        if event.evaluate(path, sign * n):
            out.append(n)
        n += 1
    return tuple(out)


def event_frequency(path: DriverPath, event: EventSpec, span: int) -> float:
    """Empirical frequency of the event over indices 1..span (a Monte Carlo pre-check)."""
    hits = sum(event.evaluate(path, i) for i in range(1, span + 1))
    return hits / span

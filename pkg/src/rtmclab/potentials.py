"""Hoelder potential families on fibered shifts.

Potentials are finitely supported: constant on cylinders of a declared depth p,
with value tables either keyed by driver state (config-built) or by path fiber
(derived, e.g. after normalization).  The distortion data of the Birkhoff-sum
estimate -- per-fiber Hoelder constants kappa and the products
B = exp sum kappa(theta^-k omega) r^k -- is computed with a certified geometric
tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .driver import DriverPath
from .errors import AdmissibilityError, ConfigError, InvariantViolation
from .shifts import FiberStructure, Point, Word, admissible_words


@dataclass(frozen=True, eq=False)
class Potential:
    """Real function constant on depth-p cylinders, with declared Hoelder data."""

    depth: int  # p
    r: float
    index: int  # Hoelder index: V_k <= kappa r^k is promised for k >= index
    tables: tuple[dict, ...] | None = None  # per driver state: word -> value
    kappa: tuple[float, ...] | None = None  # per driver state
    fiber_tables: dict | None = None  # per path fiber: word -> value
    fiber_kappa: dict | None = None
    fiber_range: tuple[int, int] | None = None  # inclusive fiber validity range

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("potential depth must be >= 1")
        if not 0 < self.r < 1:
            raise ConfigError("Hoelder parameter r must lie in (0, 1)")
        if self.index < 1:
            raise ConfigError("Hoelder index must be >= 1")
        if (self.tables is None) == (self.fiber_tables is None):
            raise ConfigError("exactly one of tables / fiber_tables must be given")
        if self.tables is not None and self.kappa is None:
            raise ConfigError("state-keyed potentials must declare kappa per state")

    @property
    def state_keyed(self) -> bool:
        return self.tables is not None

    def table_at(self, path: DriverPath, fiber: int) -> dict:
        if self.state_keyed:
            return self.tables[path.state(fiber)]
        if self.fiber_range and not self.fiber_range[0] <= fiber <= self.fiber_range[1]:
            raise AdmissibilityError(
                f"fiber {fiber} outside the derived potential's range {self.fiber_range}"
            )
        return self.fiber_tables[fiber]

    def value(self, path: DriverPath, fiber: int, prefix: tuple[int, ...]) -> float:
        table = self.table_at(path, fiber)
        try:
            return table[prefix[: self.depth]]
        except KeyError:
            raise AdmissibilityError(
                f"prefix {prefix[: self.depth]} has no value at fiber {fiber}"
            ) from None

    def kappa_at(self, path: DriverPath, fiber: int) -> float:
        if self.state_keyed:
            return self.kappa[path.state(fiber)]
        return self.fiber_kappa[fiber]

    def kappa_bound(self) -> float:
        """Upper bound on kappa over all fibers (for tail certificates)."""
        vals = self.kappa if self.state_keyed else tuple(self.fiber_kappa.values())
        return max(vals) if vals else 0.0


def constant_potential(fibers: FiberStructure, c: float, r: float = 0.5) -> Potential:
    """Depth-1 potential with the same value on every letter."""
    tables = tuple({(a,): float(c) for a in letters} for letters in fibers.alphabets)
    return Potential(depth=1, r=r, index=1, tables=tables,
                     kappa=(0.0,) * len(tables))


def table_potential(
    tables_by_state: Sequence[Mapping[tuple[int, ...], float]],
    depth: int,
    r: float,
    index: int = 2,
    kappa: Sequence[float] | None = None,
) -> Potential:
    tabs = tuple({tuple(k): float(v) for k, v in t.items()} for t in tables_by_state)
    kap = tuple(float(k) for k in kappa) if kappa is not None else (0.0,) * len(tabs)
    return Potential(depth=depth, r=r, index=index, tables=tabs, kappa=kap)


def log_matrix_potential(
    fibers: FiberStructure,
    weights_by_state: Sequence[np.ndarray],
    r: float = 0.49,
) -> Potential:
    """phi(x) = log p[x0, x1] from nonnegative matrices whose signum is the fiber pattern."""
    tables = []
    for s, (letters, pattern) in enumerate(zip(fibers.alphabets, fibers.matrices)):
        p = np.asarray(weights_by_state[s], dtype=float)
        if p.shape != pattern.shape:
            raise ConfigError(
                f"weight matrix for state {s} must match the fiber pattern shape {pattern.shape}"
            )
        if np.any((p > 0) != pattern):
            raise ConfigError(f"weight matrix signum for state {s} differs from the fiber pattern")
        table = {}
        for i, a in enumerate(letters):
            for j, b in enumerate(fibers.universe):
                if pattern[i, j]:
                    table[(a, b)] = math.log(p[i, j])
        tables.append(table)
    # constant on 2-cylinders: kappa = 0, B = 1
    return Potential(depth=2, r=r, index=2, tables=tuple(tables),
                     kappa=(0.0,) * len(tables))


def evaluate(phi: Potential, x: Point) -> float:
    """Table value of the potential at the point's fiber on its first p letters."""
    return phi.value(x.path, x.anchor, x.prefix(phi.depth))


def birkhoff_sum(phi: Potential, x: Point, n: int) -> float:
    """S_n phi(x) = sum_{i<n} phi(T^i x); the empty sum is 0."""
    if n < 0:
        raise ConfigError("Birkhoff sum length must be >= 0")
    total = 0.0
    for i in range(n):
        total += phi.value(x.path, x.anchor + i, x.prefix(i + phi.depth)[i:])
    return total


def word_birkhoff(phi: Potential, path: DriverPath, anchor: int,
                  letters: tuple[int, ...], n: int) -> float:
    """Birkhoff sum read directly off a letter block (needs len >= n + depth - 1)."""
    if len(letters) < n + phi.depth - 1:
        raise AdmissibilityError("letter block too short for the requested Birkhoff sum")
    return sum(
        phi.value(path, anchor + i, letters[i: i + phi.depth]) for i in range(n)
    )


def variation(
    f,
    n: int,
    fibers: FiberStructure | None = None,
    path: DriverPath | None = None,
    fiber: int = 0,
) -> float:
    """n-th variation: the largest spread of f over a common depth-n cylinder.

    Accepts a Potential (pass fibers/path/fiber) or anything carrying
    (values, depth, anchor) like a cylinder function.
    """
    if n < 1:
        raise ConfigError("variation depth must be >= 1")
    if isinstance(f, Potential):
        if f.depth <= n:
            return 0.0
        table = f.table_at(path, fiber)
        words = admissible_words(fibers, path, fiber, f.depth)
        values = {w: table[w] for w in words}
        depth = f.depth
    else:
        if f.depth <= n:
            return 0.0
        values = f.values
        depth = f.depth
    groups: dict[tuple, list[float]] = {}
    for w, v in values.items():
        groups.setdefault(w[:n], []).append(v)
    return max((max(g) - min(g) for g in groups.values()), default=0.0)


def fitted_kappa(
    phi: Potential, fibers: FiberStructure, path: DriverPath, fiber: int
) -> float:
    """Minimal kappa at one fiber: max over k >= index of V_k / r^k (exact, finite table)."""
    best = 0.0
    for k in range(phi.index, phi.depth):
        vk = variation(phi, k, fibers, path, fiber)
        best = max(best, vk / phi.r ** k)
    return best


@dataclass(frozen=True)
class DistortionConstants:
    """Truncated distortion product with its certified geometric tail."""

    fiber: int
    value: float  # B at the fiber, tail bound included
    horizon: int
    tail_bound: float  # additive bound on the kappa series tail

    def __post_init__(self):
        if self.value < 1.0:
            raise ConfigError("distortion constant below 1")


def distortion_constant(
    phi: Potential,
    path: DriverPath,
    fiber: int,
    horizon: int = 128,
    kappa_max: float | None = None,
) -> DistortionConstants:
    """B at a fiber: exp of the truncated kappa series plus a geometric tail bound."""
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    r = phi.r
    km = phi.kappa_bound() if kappa_max is None else kappa_max
    series = 0.0
    cutoff = horizon + 1
    for i in range(1, horizon + 1):
        try:
            series += phi.kappa_at(path, fiber - i) * r ** i
        except KeyError:
            # below the derived potential's range: bound the rest by kappa_max
            cutoff = i
            break
    tail = km * r ** cutoff / (1.0 - r)
    return DistortionConstants(fiber=fiber, value=math.exp(series + tail),
                               horizon=horizon, tail_bound=tail)


def distortion_check(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    a: Word,
    n: int,
    samples: int = 1000,
    seed: int = 0,
    horizon: int = 128,
) -> tuple[float, float]:
    """Bound r^(m-n) log B against the empirical Birkhoff-sum spread over pairs in [a].

    Returns (bound, empirical_max); raises InvariantViolation when the declared
    kappa fails to cover the observed distortion.
    """
    m = len(a.letters)
    if not 0 <= n <= m - phi.index + 1:
        raise ConfigError(f"need 0 <= n <= m - index + 1 = {m - phi.index + 1}, got {n}")
    if not a.is_admissible(fibers, path):
        raise AdmissibilityError(f"word {a.letters} not admissible at fiber {a.anchor}")
    bound = phi.r ** (m - n) * math.log(
        distortion_constant(phi, path, a.anchor + n, horizon=horizon).value
    )
    if n == 0:
        return bound, 0.0
    extra = max(phi.depth - 1, 3)
    refinements = _refine(fibers, path, a, extra)
    rng = np.random.default_rng(seed)
    if len(refinements) > samples:
        idx = rng.choice(len(refinements), size=samples, replace=False)
        refinements = [refinements[i] for i in idx]
    sums = [
        word_birkhoff(phi, path, a.anchor, letters, n)
        for letters in refinements
    ]
    empirical = max(sums) - min(sums) if sums else 0.0
    if empirical > bound + 1e-12:
        raise InvariantViolation(
            f"distortion {empirical} exceeds the declared bound {bound}: "
            "the potential misdeclares its kappa"
        )
    return bound, empirical


def _refine(
    fibers: FiberStructure, path: DriverPath, a: Word, extra: int
) -> list[tuple[int, ...]]:
    """All admissible extensions of the word by `extra` letters."""
    out = [a.letters]
    for j in range(extra):
        pos = a.anchor + len(a.letters) + j - 1
        out = [w + (b,) for w in out for b in fibers.successors(path, pos, w[-1])]
    return out


def summability_value(
    phi: Potential, fibers: FiberStructure, path: DriverPath, span: int
) -> float:
    """Empirical mean of |log L_{theta^-1 omega}(1)| along the path (finiteness probe)."""
    total = 0.0
    for i in range(span):
        table = phi.table_at(path, i)
        words = admissible_words(fibers, path, i, max(phi.depth, 2))
        sums: dict[tuple, float] = {}
        for w in words:
            key = w[1:]
            sums[key] = sums.get(key, 0.0) + math.exp(phi.value(path, i, w))
        total += max(abs(math.log(v)) for v in sums.values())
    return total / span

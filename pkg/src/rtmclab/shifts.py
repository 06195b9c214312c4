"""Fibered shift spaces over a driver path.

Each driver state carries an alphabet and a 0/1 transition matrix into the
global letter universe; a word is admissible when consecutive letters are
allowed by the matrices of consecutive fiber states.  Points are finite heads
extended with the letter-wise lexicographically minimal admissible tail, which
makes equality and the shift metric d_r(x, y) = r^(first disagreement)
exactly computable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .driver import DriverPath, DriverSystem, EventSpec
from .errors import AdmissibilityError, ConfigError, DepthOverflow

_MAX_MATERIALIZED = 8192


@dataclass(frozen=True)
class BipStructure:
    """Finite mediator set and the base events carrying big images / big preimages."""

    letters: frozenset[int]
    omega_bp: EventSpec
    omega_bi: EventSpec


@dataclass(frozen=True, eq=False)
class FiberStructure:
    """Per driver state: alphabet and transition row pattern into the letter universe."""

    alphabets: tuple[tuple[int, ...], ...]  # per state index, sorted letters
    matrices: tuple[np.ndarray, ...]  # per state index, bool (|alphabet| x |universe|)
    universe: tuple[int, ...]
    bip: BipStructure | None = None
    _row: tuple[dict, ...] = field(default=(), repr=False)
    _col: dict = field(default_factory=dict, repr=False)

    @staticmethod
    def build(
        system: DriverSystem,
        alphabets: Mapping[str, Sequence[int]],
        matrices: Mapping[str, Sequence[Sequence[int]]],
        bip: BipStructure | None = None,
    ) -> "FiberStructure":
        """Assemble from per-state-label tables; matrix columns follow the sorted universe."""
        per_state_alpha = []
        for label in system.states:
            if label not in alphabets:
                raise ConfigError(f"no alphabet declared for driver state {label!r}")
            letters = tuple(sorted(int(a) for a in alphabets[label]))
            if not letters:
                raise ConfigError(f"empty alphabet for driver state {label!r}")
            if len(set(letters)) != len(letters):
                raise ConfigError(f"duplicate letters for driver state {label!r}")
            per_state_alpha.append(letters)
        universe = tuple(sorted(set().union(*map(set, per_state_alpha))))
        col = {a: j for j, a in enumerate(universe)}
        mats = []
        for label, letters in zip(system.states, per_state_alpha):
            m = np.asarray(matrices[label], dtype=bool)
            if m.shape != (len(letters), len(universe)):
                raise ConfigError(
                    f"matrix for state {label!r} must be |alphabet| x |universe| "
                    f"= ({len(letters)}, {len(universe)}), got {m.shape}"
                )
            mats.append(m.copy())
        rows = tuple({a: i for i, a in enumerate(letters)} for letters in per_state_alpha)
        fs = FiberStructure(
            alphabets=tuple(per_state_alpha),
            matrices=tuple(mats),
            universe=universe,
            bip=bip,
        )
        object.__setattr__(fs, "_row", rows)
        object.__setattr__(fs, "_col", col)
        return fs

    # -- admissibility primitives ---------------------------------------------------

    def alphabet(self, path: DriverPath, i: int) -> tuple[int, ...]:
        """Letters available at fiber i."""
        return self.alphabets[path.state(i)]

    def admits(self, path: DriverPath, i: int, a: int, b: int) -> bool:
        """Whether the pair a (fiber i) -> b (fiber i+1) is admissible."""
        s, s_next = path.state(i), path.state(i + 1)
        row = self._row[s].get(a)
        if row is None:
            return False
        return b in self._row[s_next] and bool(self.matrices[s][row, self._col[b]])

    def successors(self, path: DriverPath, i: int, a: int) -> tuple[int, ...]:
        """Admissible letters at fiber i+1 following letter a at fiber i (sorted)."""
        s, s_next = path.state(i), path.state(i + 1)
        row = self._row[s].get(a)
        if row is None:
            raise AdmissibilityError(f"letter {a} not in the fiber-{i} alphabet")
        mask = self.matrices[s][row]
        return tuple(b for b in self.alphabets[s_next] if mask[self._col[b]])

    def predecessors(self, path: DriverPath, i: int, b: int) -> tuple[int, ...]:
        """Letters at fiber i-1 that may precede letter b at fiber i (sorted)."""
        s_prev = path.state(i - 1)
        cj = self._col[b]
        mat = self.matrices[s_prev]
        return tuple(a for a in self.alphabets[s_prev] if mat[self._row[s_prev][a], cj])

    def validate_rows_columns(self, system: DriverSystem) -> list[str]:
        """Row/column positivity along every positive-probability driver transition."""
        problems = []
        for s in range(system.n_states):
            for s_next in _possible_next(system, s):
                sub = self.matrices[s][:, [self._col[a] for a in self.alphabets[s_next]]]
                for i, letter in enumerate(self.alphabets[s]):
                    if not sub[i].any():
                        problems.append(
                            f"letter {letter} of state {system.states[s]} has no successor "
                            f"in state {system.states[s_next]} (zero row)"
                        )
                for j, letter in enumerate(self.alphabets[s_next]):
                    if not sub[:, j].any():
                        problems.append(
                            f"letter {letter} of state {system.states[s_next]} has no "
                            f"predecessor in state {system.states[s]} (zero column)"
                        )
        return problems

    def validate_bip(self, system: DriverSystem) -> list[str]:
        """Structural b.i.p. checks on the declared events (state-determined radius 0)."""
        if self.bip is None:
            return ["no b.i.p. structure declared"]
        problems = []
        mediators = self.bip.letters
        for s_cur in range(system.n_states):
            marked_bp = self.bip.omega_bp.fn((s_cur,))
            marked_bi = self.bip.omega_bi.fn((s_cur,))
            if not (marked_bp or marked_bi):
                continue
            for s_prev in _possible_prev(system, s_cur):
                mat = self.matrices[s_prev]
                if marked_bp:
                    med_rows = [self._row[s_prev][b] for b in mediators if b in self._row[s_prev]]
                    for a in self.alphabets[s_cur]:
                        if not any(mat[r, self._col[a]] for r in med_rows):
                            problems.append(
                                f"bp state {system.states[s_cur]}: letter {a} has no mediator "
                                f"predecessor from state {system.states[s_prev]}"
                            )
                if marked_bi:
                    med_cols = [self._col[b] for b in mediators if b in self._row[s_cur]]
                    for a in self.alphabets[s_prev]:
                        if not any(mat[self._row[s_prev][a], c] for c in med_cols):
                            problems.append(
                                f"bi state {system.states[s_cur]}: letter {a} of state "
                                f"{system.states[s_prev]} has no mediator successor"
                            )
        return problems


def _possible_next(system: DriverSystem, s: int) -> list[int]:
    if system.kind == "iid":
        return [t for t in range(system.n_states) if system.weights[t] > 0]
    return [t for t in range(system.n_states) if system.matrix[s, t] > 0]


def _possible_prev(system: DriverSystem, s: int) -> list[int]:
    if system.kind == "iid":
        return [t for t in range(system.n_states) if system.weights[t] > 0]
    return [t for t in range(system.n_states) if system.matrix[t, s] > 0]


@dataclass(frozen=True)
class Word:
    """A finite admissible letter block anchored at a path index."""

    anchor: int
    letters: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.letters)

    def is_admissible(self, fibers: FiberStructure, path: DriverPath) -> bool:
        if not self.letters:
            return False
        if self.letters[0] not in fibers.alphabet(path, self.anchor):
            return False
        return all(
            fibers.admits(path, self.anchor + i, self.letters[i], self.letters[i + 1])
            for i in range(len(self.letters) - 1)
        )


def admissible_words(
    fibers: FiberStructure, path: DriverPath, start: int, n: int
) -> tuple[tuple[int, ...], ...]:
    """All admissible length-n letter blocks from fiber `start`, lexicographically sorted."""
    if n < 1:
        raise ConfigError("word length must be >= 1")
    key = (id(fibers), start, n)
    cached = path.word_cache.get(key)
    if cached is not None:
        return cached
    if n == 1:
        out = tuple((a,) for a in fibers.alphabet(path, start))
    else:
        prefixes = admissible_words(fibers, path, start, n - 1)
        out = tuple(
            p + (b,)
            for p in prefixes
            for b in fibers.successors(path, start + n - 2, p[-1])
        )
    path.word_cache[key] = out
    return out


class Point:
    """Head word plus the canonical (letter-wise minimal) admissible tail."""

    __slots__ = ("fibers", "path", "anchor", "_letters")

    def __init__(self, fibers: FiberStructure, path: DriverPath, anchor: int,
                 head: Sequence[int]):
        if not head:
            raise AdmissibilityError("a point needs at least one head letter")
        self.fibers = fibers
        self.path = path
        self.anchor = anchor
        self._letters = list(head)

    def letter(self, i: int) -> int:
        if i >= _MAX_MATERIALIZED:
            raise DepthOverflow(f"point materialization beyond {_MAX_MATERIALIZED} letters")
        while len(self._letters) <= i:
            j = len(self._letters)
            nxt = self.fibers.successors(self.path, self.anchor + j - 1, self._letters[-1])
            if not nxt:
                raise AdmissibilityError(
                    f"letter {self._letters[-1]} at fiber {self.anchor + j - 1} has no successor"
                )
            self._letters.append(nxt[0])
        return self._letters[i]

    def prefix(self, n: int) -> tuple[int, ...]:
        self.letter(n - 1)
        return tuple(self._letters[:n])

    @property
    def head_length(self) -> int:
        return len(self._letters)

    def shifted(self, k: int) -> "Point":
        """The k-fold shift image: drop k leading letters, move the anchor up by k."""
        if k == 0:
            return self
        self.letter(k)  # ensure a nonempty head survives
        return Point(self.fibers, self.path, self.anchor + k, self._letters[k:])

    def __repr__(self) -> str:  # pragma: no cover
        return f"Point(anchor={self.anchor}, head={tuple(self._letters)})"


def canonical_representative(
    word: Word | tuple[int, ...],
    fibers: FiberStructure,
    path: DriverPath,
    depth: int = 0,
    anchor: int = 0,
) -> Point:
    """The point whose head is the word and whose tail is lexicographically minimal."""
    if isinstance(word, Word):
        anchor, letters = word.anchor, word.letters
    else:
        letters = tuple(word)
    w = Word(anchor, letters)
    if not w.is_admissible(fibers, path):
        raise AdmissibilityError(f"word {letters} not admissible at fiber {anchor}")
    pt = Point(fibers, path, anchor, letters)
    if depth > len(letters):
        pt.letter(depth - 1)
    return pt


def shift_metric(x: Point, y: Point, r: float) -> float:
    """d_r(x, y) = r^(first index of disagreement); 0 for equal points."""
    if x.anchor != y.anchor:
        raise AdmissibilityError("shift_metric needs points on the same fiber")
    if not 0 < r < 1:
        raise ConfigError("metric parameter r must lie in (0, 1)")
    span = max(x.head_length, y.head_length)
    for i in range(span):
        if x.letter(i) != y.letter(i):
            return r ** i
    # identical through both heads: the canonical tails continue identically
    return 0.0


@dataclass(frozen=True)
class MetricSpec:
    """Adjusted-metric data: Hoelder parameter, diagonal scale beta, per-fiber alpha."""

    r: float
    beta: float
    alpha: Callable[[int], float]

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ConfigError("r must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")

    @staticmethod
    def from_values(r: float, beta: float, alphas: Mapping[int, float]) -> "MetricSpec":
        return MetricSpec(r=r, beta=beta, alpha=lambda i, _a=dict(alphas): _a[i])

    @staticmethod
    def constant(r: float, beta: float, alpha: float) -> "MetricSpec":
        return MetricSpec(r=r, beta=beta, alpha=lambda i, _a=float(alpha): _a)


def adjusted_metric(x: Point, y: Point, spec: MetricSpec, fiber: int) -> float:
    """min{1, alpha_fiber * d_r(x, y)} -- the capped rescaling of the shift metric."""
    alpha = spec.alpha(fiber)
    if alpha < 1:
        raise ConfigError(f"alpha at fiber {fiber} is {alpha} < 1")
    return min(1.0, alpha * shift_metric(x, y, spec.r))


def adjusted_from_raw(d: float, alpha: float) -> float:
    if alpha < 1:
        raise ConfigError(f"alpha {alpha} < 1")
    return min(1.0, alpha * d)

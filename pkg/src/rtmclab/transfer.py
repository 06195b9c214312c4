"""Transfer operators on cylinder functions and their dual action on atomic measures.

The operator with potential phi maps functions on fiber j to functions on
fiber j+1 by summing branch weights e^phi over one-letter extensions; its dual
pulls probability measures one fiber backward.  Because functions are constant
on depth-m cylinders and measures are atomic at canonical representatives,
both actions are exact finite sums, and the adjoint identity holds to float
accumulation error.

The eigenproblem solver recovers the eigenvalue cocycle from the masses of
successive dual steps, the eigenfunction from backward-started forward sweeps,
and certifies convergence by the agreement of two independently started runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .driver import DriverPath, EventSpec
from .errors import (
    AdmissibilityError,
    ConfigError,
    ConvergenceError,
    DepthOverflow,
    InvariantViolation,
)
from .potentials import Potential, birkhoff_sum, fitted_kappa, word_birkhoff
from .shifts import FiberStructure, canonical_representative, admissible_words

DEFAULT_DEPTH_CAP = 16


# ---------------------------------------------------------------------------
# cylinder functions


@dataclass(eq=False)
class CylinderFunction:
    """Real function on one fiber, constant on depth-m cylinders."""

    fibers: FiberStructure
    path: DriverPath
    anchor: int
    depth: int
    values: dict

    def __post_init__(self):
        words = admissible_words(self.fibers, self.path, self.anchor, self.depth)
        if set(self.values) != set(words):
            raise AdmissibilityError(
                f"cylinder function keys at fiber {self.anchor} are not exactly "
                f"the admissible depth-{self.depth} words"
            )

    @staticmethod
    def constant(fibers, path, anchor: int, c: float, depth: int = 1) -> "CylinderFunction":
        words = admissible_words(fibers, path, anchor, depth)
        return CylinderFunction(fibers, path, anchor, depth, {w: float(c) for w in words})

    @staticmethod
    def indicator(fibers, path, anchor: int, word: tuple[int, ...],
                  depth: int | None = None) -> "CylinderFunction":
        """Indicator of the cylinder [word], represented at depth >= len(word)."""
        word = tuple(word)
        depth = max(len(word), depth or 1)
        words = admissible_words(fibers, path, anchor, depth)
        return CylinderFunction(
            fibers, path, anchor, depth,
            {w: (1.0 if w[: len(word)] == word else 0.0) for w in words},
        )

    def value_at(self, prefix: tuple[int, ...]) -> float:
        try:
            return self.values[tuple(prefix[: self.depth])]
        except KeyError:
            raise AdmissibilityError(f"no value for prefix {prefix[: self.depth]}") from None

    def sup(self) -> float:
        return max(self.values.values())

    def inf(self) -> float:
        return min(self.values.values())

    def sup_norm(self) -> float:
        return max(abs(v) for v in self.values.values())

    def map(self, fn: Callable[[float], float]) -> "CylinderFunction":
        return CylinderFunction(self.fibers, self.path, self.anchor, self.depth,
                                {w: fn(v) for w, v in self.values.items()})

    def shift_scale(self, a: float = 1.0, b: float = 0.0) -> "CylinderFunction":
        return self.map(lambda v: a * v + b)

    def refine(self, depth: int) -> "CylinderFunction":
        if depth < self.depth:
            raise ConfigError("refine only increases depth")
        if depth == self.depth:
            return self
        words = admissible_words(self.fibers, self.path, self.anchor, depth)
        return CylinderFunction(self.fibers, self.path, self.anchor, depth,
                                {w: self.values[w[: self.depth]] for w in words})

    def binary(self, other: "CylinderFunction", op) -> "CylinderFunction":
        if other.anchor != self.anchor:
            raise AdmissibilityError("cylinder functions on different fibers")
        d = max(self.depth, other.depth)
        a, b = self.refine(d), other.refine(d)
        return CylinderFunction(self.fibers, self.path, self.anchor, d,
                                {w: op(a.values[w], b.values[w]) for w in a.values})

    def mul(self, other: "CylinderFunction") -> "CylinderFunction":
        return self.binary(other, lambda x, y: x * y)

    def sub(self, other: "CylinderFunction") -> "CylinderFunction":
        return self.binary(other, lambda x, y: x - y)

    def div(self, other: "CylinderFunction") -> "CylinderFunction":
        return self.binary(other, lambda x, y: x / y)

    def lipschitz(self, r: float, alpha: float | None = None) -> float:
        """Exact Lipschitz constant over the fiber under d_r (alpha=None) or the capped metric.

        Uses prefix grouping: for each split depth j the worst spread within a
        common depth-j prefix, divided by the metric value at disagreement j.
        """
        best = 0.0
        for j in range(self.depth):
            scale = r ** j if alpha is None else min(1.0, alpha * r ** j)
            groups: dict[tuple, list[float]] = {}
            for w, v in self.values.items():
                groups.setdefault(w[:j], []).append(v)
            spread = max((max(g) - min(g)) for g in groups.values())
            if spread > 0:
                best = max(best, spread / scale)
        return best


def random_lipschitz(fibers, path, anchor: int, depth: int, rng,
                     r: float, alpha: float | None = None) -> CylinderFunction:
    """Random cylinder function rescaled to Lipschitz constant 1 (under the chosen metric)."""
    words = admissible_words(fibers, path, anchor, depth)
    f = CylinderFunction(fibers, path, anchor, depth,
                         {w: float(rng.normal()) for w in words})
    d = f.lipschitz(r, alpha)
    return f.shift_scale(1.0 / d) if d > 0 else f


# ---------------------------------------------------------------------------
# atomic measures


@dataclass(eq=False)
class AtomicMeasure:
    """Probability measure as weighted atoms at canonical depth-m representatives."""

    fibers: FiberStructure
    path: DriverPath
    anchor: int
    depth: int
    weights: dict
    probability: bool = True

    def __post_init__(self):
        if any(v < -1e-15 for v in self.weights.values()):
            raise ConfigError("negative atom weight")
        if self.probability and abs(self.mass() - 1.0) > 1e-10:
            raise ConfigError(f"atom weights sum to {self.mass()!r}, not 1")

    @staticmethod
    def uniform(fibers, path, anchor: int, depth: int) -> "AtomicMeasure":
        words = admissible_words(fibers, path, anchor, depth)
        w = 1.0 / len(words)
        return AtomicMeasure(fibers, path, anchor, depth, {v: w for v in words})

    @staticmethod
    def dirac(fibers, path, anchor: int, word: tuple[int, ...]) -> "AtomicMeasure":
        word = tuple(word)
        rep = canonical_representative(word, fibers, path, anchor=anchor)  # validates
        return AtomicMeasure(fibers, path, anchor, len(word), {word: 1.0})

    @staticmethod
    def random(fibers, path, anchor: int, depth: int, rng) -> "AtomicMeasure":
        words = admissible_words(fibers, path, anchor, depth)
        raw = rng.random(len(words)) + 1e-3
        raw /= raw.sum()
        return AtomicMeasure(fibers, path, anchor, depth,
                             {w: float(x) for w, x in zip(words, raw)})

    def mass(self) -> float:
        return sum(self.weights.values())

    def normalize(self) -> "AtomicMeasure":
        m = self.mass()
        return AtomicMeasure(self.fibers, self.path, self.anchor, self.depth,
                             {w: v / m for w, v in self.weights.items()})

    def integrate(self, f: CylinderFunction) -> float:
        """Exact integral of a cylinder function against the atoms."""
        if f.anchor != self.anchor:
            raise AdmissibilityError("function and measure on different fibers")
        total = 0.0
        for w, m in self.weights.items():
            if f.depth <= len(w):
                total += m * f.values[w[: f.depth]]
            else:
                rep = canonical_representative(w, self.fibers, self.path, anchor=self.anchor)
                total += m * f.values[rep.prefix(f.depth)]
        return total

    def marginal(self, depth: int) -> dict:
        """Masses of the depth-`depth` cylinders (depth <= atom depth)."""
        if depth > self.depth:
            raise ConfigError("marginal depth exceeds atom depth")
        out: dict = {}
        for w, m in self.weights.items():
            k = w[:depth]
            out[k] = out.get(k, 0.0) + m
        return out

    def coarsen(self, depth: int) -> "AtomicMeasure":
        """Sum refinement weights onto depth-`depth` canonical representatives."""
        if depth >= self.depth:
            return self
        return AtomicMeasure(self.fibers, self.path, self.anchor, depth,
                             self.marginal(depth), probability=self.probability)

    def cylinder_mass(self, word: tuple[int, ...]) -> float:
        word = tuple(word)
        return sum(m for w, m in self.weights.items() if w[: len(word)] == word)


# ---------------------------------------------------------------------------
# the operator and its dual


def transfer_apply(phi: Potential, f: CylinderFunction) -> CylinderFunction:
    """One operator step: (L f)(x) = sum over letters a with a x admissible of e^phi(ax) f(ax)."""
    fibers, path, j = f.fibers, f.path, f.anchor
    out_depth = max(f.depth - 1, phi.depth - 1, 1)
    out = {}
    for w in admissible_words(fibers, path, j + 1, out_depth):
        total = 0.0
        for a in fibers.predecessors(path, j + 1, w[0]):
            full = (a,) + w  # length 1 + out_depth covers both table depths
            total += math.exp(phi.value(path, j, full)) * f.values[full[: f.depth]]
        out[w] = total
    return CylinderFunction(fibers, path, j + 1, out_depth, out)


def transfer_power(phi: Potential, f: CylinderFunction, n: int,
                   method: str = "iterate") -> CylinderFunction:
    """n-fold operator: iterated one-steps or the direct inverse-branch sum."""
    if n < 0:
        raise ConfigError("power must be >= 0")
    if n == 0:
        return f
    if method == "iterate":
        g = f
        for _ in range(n):
            g = transfer_apply(phi, g)
        return g
    if method != "direct":
        raise ConfigError(f"unknown method {method!r}")
    fibers, path, j = f.fibers, f.path, f.anchor
    out_depth = max(f.depth - n, phi.depth - 1, 1)
    out = {}
    for w in admissible_words(fibers, path, j + n, out_depth):
        total = 0.0
        for v in admissible_words(fibers, path, j, n):
            if not fibers.admits(path, j + n - 1, v[-1], w[0]):
                continue
            full = v + w  # length n + out_depth covers the Birkhoff block and f's depth
            total += math.exp(word_birkhoff(phi, path, j, full, n)) * f.values[full[: f.depth]]
        out[w] = total
    return CylinderFunction(fibers, path, j + n, out_depth, out)


def dual_apply(phi: Potential, mu: AtomicMeasure, n: int = 1,
               max_depth: int = DEFAULT_DEPTH_CAP + 16) -> AtomicMeasure:
    """Dual pull-back: the atom at word w spawns atoms at aw weighted by e^phi at the new atom.

    Output lives n fibers below the input at depth + n; the adjoint identity
    against depth-(m+n) cylinder indicators is exact by construction.
    """
    if n < 0:
        raise ConfigError("dual power must be >= 0")
    out = mu
    for _ in range(n):
        if out.depth + 1 > max_depth:
            raise DepthOverflow(f"dual pull-back beyond depth cap {max_depth}")
        fibers, path, j = out.fibers, out.path, out.anchor
        nxt: dict = {}
        for w, m in out.weights.items():
            for a in fibers.predecessors(path, j, w[0]):
                full = (a,) + w
                look = full
                if len(look) < phi.depth:
                    rep = canonical_representative(full, fibers, path, anchor=j - 1)
                    look = rep.prefix(phi.depth)
                nxt[full] = nxt.get(full, 0.0) + math.exp(phi.value(path, j - 1, look)) * m
        out = AtomicMeasure(fibers, path, j - 1, out.depth + 1, nxt, probability=False)
    return out


# ---------------------------------------------------------------------------
# the eigenproblem


@dataclass(eq=False)
class RpfTriple:
    """Eigenvalue cocycle, eigenfunction family and conformal family on a fiber window."""

    fibers: FiberStructure
    path: DriverPath
    lo: int
    hi: int  # inclusive; lambdas cover [lo, hi-1]
    log_lambda: dict
    h: dict  # fiber -> CylinderFunction
    mu: dict  # fiber -> AtomicMeasure (probability)
    tolerance: float
    diagnostics: dict = field(default_factory=dict)

    def lam(self, j: int) -> float:
        return math.exp(self.log_lambda[j])

    def log_cocycle(self, j: int, n: int) -> float:
        """log Lambda_n starting at fiber j."""
        return sum(self.log_lambda[j + i] for i in range(n))

    def residual(self, phi: Potential, j: int) -> float:
        """||L h_j - lambda_j h_{j+1}||_inf / ||h_{j+1}||_inf."""
        lh = transfer_apply(phi, self.h[j])
        target = self.h[j + 1].refine(lh.depth) if self.h[j + 1].depth < lh.depth else self.h[j + 1]
        lh = lh.refine(target.depth)
        gap = max(abs(lh.values[w] - self.lam(j) * target.values[w]) for w in lh.values)
        return gap / target.sup_norm()

    def check(self, phi: Potential) -> None:
        for j in range(self.lo, self.hi + 1):
            if self.h[j].inf() <= 0:
                raise InvariantViolation(f"eigenfunction not strictly positive at fiber {j}")
            if abs(self.mu[j].integrate(self.h[j]) - 1.0) > 1e-8:
                raise InvariantViolation(f"int h dmu != 1 at fiber {j}")
        for j in range(self.lo, self.hi):
            if self.residual(phi, j) > self.tolerance:
                raise InvariantViolation(f"eigen residual at fiber {j} above tolerance")

    def to_json(self) -> str:
        payload = {
            "lo": self.lo,
            "hi": self.hi,
            "tolerance": self.tolerance,
            "log_lambda": {str(k): v for k, v in sorted(self.log_lambda.items())},
            "h": {
                str(j): {",".join(map(str, w)): v for w, v in sorted(f.values.items())}
                for j, f in sorted(self.h.items())
            },
            "mu": {
                str(j): {",".join(map(str, w)): v for w, v in sorted(m.weights.items())}
                for j, m in sorted(self.mu.items())
            },
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str, fibers: FiberStructure, path: DriverPath,
                  tolerance: float = 1e-8) -> "RpfTriple":
        raw = json.loads(text)

        def parse_word(s: str) -> tuple[int, ...]:
            return tuple(int(t) for t in s.split(","))

        h = {
            int(j): CylinderFunction(
                fibers, path, int(j), len(parse_word(next(iter(tab)))),
                {parse_word(w): v for w, v in tab.items()},
            )
            for j, tab in raw["h"].items()
        }
        mu = {
            int(j): AtomicMeasure(
                fibers, path, int(j), len(parse_word(next(iter(tab)))),
                {parse_word(w): v for w, v in tab.items()},
            )
            for j, tab in raw["mu"].items()
        }
        return RpfTriple(
            fibers=fibers, path=path, lo=raw["lo"], hi=raw["hi"],
            log_lambda={int(k): v for k, v in raw["log_lambda"].items()},
            h=h, mu=mu, tolerance=raw.get("tolerance", tolerance),
        )


def _event_true_at_or_below(path: DriverPath, event: EventSpec, j: int, floor: int) -> int:
    for i in range(j, floor - 1, -1):
        if event.evaluate(path, i):
            return i
    raise ConvergenceError(f"no return of {event.name} in [{floor}, {j}]")


def rpf_solve(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    depth: int = 8,
    horizon: int = 128,
    event: EventSpec | None = None,
    window: tuple[int, int] = (0, 0),
    tol: float = 1e-8,
    seed: int = 0,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> RpfTriple:
    """Solve L h = lambda h-shifted and L* mu-shifted = lambda mu on a fiber window.

    The conformal family comes from a dual pull-back sweep started `horizon`
    fibers above the window (each step renormalized; the pre-normalization mass
    is the eigenvalue estimate), the eigenfunction from a forward sweep started
    `horizon` fibers below.  Convergence is certified by agreement with second
    sweeps started earlier (and, for the eigenfunction, from a random positive
    initial function); disagreement raises with the gap curves attached.
    """
    if depth > depth_cap:
        raise DepthOverflow(f"working depth {depth} beyond cap {depth_cap}")
    if depth < max(phi.depth - 1, 1):
        # coarsening a pulled-back measure below the potential locality would
        # corrupt the next pull's branch weights
        raise ConfigError(f"working depth must be >= {max(phi.depth - 1, 1)}")
    event = event or EventSpec.always()
    lo, hi = window
    if lo > hi:
        raise ConfigError("window must satisfy lo <= hi")
    rng = np.random.default_rng(seed)

    h_start1 = _event_true_at_or_below(path, event, lo - horizon, lo - 4 * horizon)
    h_start2 = _event_true_at_or_below(path, event, h_start1 - max(1, horizon // 4),
                                       h_start1 - 4 * horizon)
    mu_top1 = hi + horizon
    mu_top2 = hi + horizon + max(1, horizon // 4)

    def mu_sweep(top: int, start: AtomicMeasure):
        lams, mus = {}, {}
        cur = start
        for j in range(top - 1, h_start2 - 1, -1):
            pulled = dual_apply(phi, cur, 1, max_depth=depth + 1)
            mass = pulled.mass()
            lams[j] = math.log(mass)
            cur = AtomicMeasure(fibers, path, j, pulled.depth,
                                {w: v / mass for w, v in pulled.weights.items()}).coarsen(depth)
            mus[j] = cur
        return lams, mus

    lam1, mus1 = mu_sweep(mu_top1, AtomicMeasure.uniform(fibers, path, mu_top1, depth))
    lam2, mus2 = mu_sweep(mu_top2, AtomicMeasure.random(fibers, path, mu_top2, depth, rng))

    mu_gaps = {}
    for j in range(lo, hi + 1):
        a, b = mus1[j].weights, mus2[j].weights
        mu_gaps[j] = max(abs(a[w] - b.get(w, 0.0)) for w in a)

    def h_sweep(start: int, init: CylinderFunction):
        hs = {start: init}
        cur = init
        for j in range(start, hi):
            nxt = transfer_apply(phi, cur)
            cur = nxt.shift_scale(math.exp(-lam1[j]))
            hs[j + 1] = cur
        return hs

    d_h = max(phi.depth - 1, 1)
    hs1 = h_sweep(h_start1, CylinderFunction.constant(fibers, path, h_start1, 1.0, d_h))
    init2 = CylinderFunction(
        fibers, path, h_start2, d_h,
        {w: float(math.exp(rng.normal())) for w in admissible_words(fibers, path, h_start2, d_h)},
    )
    hs2 = h_sweep(h_start2, init2)

    h_gaps = {}
    for j in range(lo, hi + 1):
        c1 = mus1[j].integrate(hs1[j])
        c2 = mus1[j].integrate(hs2[j])
        a = hs1[j].shift_scale(1.0 / c1)
        b = hs2[j].shift_scale(1.0 / c2)
        h_gaps[j] = a.sub(b).sup_norm() / a.sup_norm()

    diagnostics = {
        "h_gap": h_gaps,
        "mu_gap": mu_gaps,
        "h_starts": (h_start1, h_start2),
        "mu_tops": (mu_top1, mu_top2),
        "lambda_gap": {j: abs(lam1[j] - lam2[j]) for j in range(lo, hi)},
    }
    worst = max(max(h_gaps.values()), max(mu_gaps.values()))
    if worst > tol:
        err = ConvergenceError(
            f"rpf solve did not stabilize within horizon {horizon}: worst gap {worst:g}"
        )
        err.diagnostics = diagnostics
        raise err

    h, mu = {}, {}
    for j in range(lo, hi + 1):
        c = mus1[j].integrate(hs1[j])
        h[j] = hs1[j].shift_scale(1.0 / c)
        mu[j] = mus1[j]
    triple = RpfTriple(
        fibers=fibers, path=path, lo=lo, hi=hi,
        log_lambda={j: lam1[j] for j in range(lo, hi)},
        h=h, mu=mu, tolerance=tol, diagnostics=diagnostics,
    )
    triple.check(phi)
    return triple


def invariant_measures(triple: RpfTriple) -> dict:
    """The shift-invariant family of the normalized operator: d nu = h d mu, per fiber."""
    out = {}
    for j in range(triple.lo, triple.hi + 1):
        mu, h = triple.mu[j], triple.h[j]
        weights = {}
        for w, m in mu.weights.items():
            rep = canonical_representative(w, triple.fibers, triple.path, anchor=j)
            weights[w] = m * h.value_at(rep.prefix(max(h.depth, len(w))))
        total = sum(weights.values())
        out[j] = AtomicMeasure(triple.fibers, triple.path, j, mu.depth,
                               {w: v / total for w, v in weights.items()})
    return out


def normalize_potential(phi: Potential, triple: RpfTriple) -> Potential:
    """Absorb the eigendata: phi + log h - log h(shift .) - log lambda, fiber-keyed.

    The resulting operator preserves constants; locality depth grows to
    max(p, h-depth + 1).
    """
    lo, hi = triple.lo, triple.hi
    fibers, path = triple.fibers, triple.path
    d_h = max(f.depth for f in triple.h.values())
    p_new = max(phi.depth, d_h + 1)
    tables, kappas = {}, {}
    for j in range(lo, hi):
        if triple.h[j].inf() <= 0:
            raise InvariantViolation(f"nonpositive eigenfunction at fiber {j}")
        tab = {}
        for w in admissible_words(fibers, path, j, p_new):
            tab[w] = (
                phi.value(path, j, w)
                + math.log(triple.h[j].value_at(w))
                - math.log(triple.h[j + 1].value_at(w[1:]))
                - triple.log_lambda[j]
            )
        tables[j] = tab
    out = Potential(depth=p_new, r=phi.r, index=phi.index,
                    fiber_tables=tables, fiber_kappa={}, fiber_range=(lo, hi - 1))
    for j in range(lo, hi):
        out.fiber_kappa[j] = fitted_kappa(out, fibers, path, j)
    for j in range(lo, hi - 1):
        one = CylinderFunction.constant(fibers, path, j, 1.0, max(p_new - 1, 1))
        gap = transfer_apply(out, one).shift_scale(1.0, -1.0).sup_norm()
        if gap > 1e-8:
            raise InvariantViolation(
                f"normalized operator fails L(1)=1 at fiber {j}: gap {gap:g}"
            )
    return out


# ---------------------------------------------------------------------------
# pressure, Gibbs property, ratio convergence


@dataclass
class PressureEstimate:
    letter: int
    curve: list  # (n, (1/n) log Z_n) at usable return times
    estimate: float  # tail increment (telescoped Cesaro) estimate
    lambda_route: float | None  # mean log lambda over the tail, when a triple is given
    returns_used: int


def gurevich_pressure(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    a: int,
    horizon: int,
    triple: RpfTriple | None = None,
) -> PressureEstimate:
    """Growth rate of the weighted preimage counts of the letter cylinder [a].

    Tracks L^n(indicator of [a]) with running renormalization and reads the
    value at the canonical representative of [a] at each return of the letter.
    """
    if a not in fibers.alphabet(path, 0):
        raise AdmissibilityError(f"letter {a} not available at fiber 0")
    f = CylinderFunction.indicator(fibers, path, 0, (a,))
    log_scale = 0.0
    curve = []
    log_z = {}
    for n in range(1, horizon + 1):
        f = transfer_apply(phi, f)
        peak = f.sup_norm()
        if peak == 0.0:
            raise ConvergenceError(f"the cylinder [{a}] dies out after {n} steps")
        log_scale += math.log(peak)
        f = f.shift_scale(1.0 / peak)
        if a in fibers.alphabet(path, n):
            xi = canonical_representative((a,), fibers, path, anchor=n)
            val = f.value_at(xi.prefix(f.depth))
            if val > 0:
                log_z[n] = log_scale + math.log(val)
                curve.append((n, log_z[n] / n))
    if len(log_z) < 2:
        raise ConvergenceError("too few returns of the letter within the horizon")
    ns = sorted(log_z)
    mid = ns[len(ns) // 2]
    last = ns[-1]
    if last == mid:
        mid = ns[0]
    estimate = (log_z[last] - log_z[mid]) / (last - mid)
    lam_route = None
    if triple is not None:
        span = range(max(triple.lo, 0), min(triple.hi, last))
        if len(span) > 0:
            lam_route = sum(triple.log_lambda[j] for j in span) / len(span)
    return PressureEstimate(letter=a, curve=curve, estimate=estimate,
                            lambda_route=lam_route, returns_used=len(log_z))


@dataclass
class GibbsReport:
    rows: list  # (fiber, word, ratio, lower, upper)
    violations: list
    band: dict  # fiber -> dict with E, E_cyl, B, slack, F
    samples: int

    @property
    def ok(self) -> bool:
        return not self.violations


def gibbs_check(
    triple: RpfTriple,
    phi: Potential,
    depth: int,
    samples: int = 1000,
    seed: int = 0,
) -> GibbsReport:
    """Sampled cylinder masses against the distortion band at big-image fibers.

    For a word a of length k ending at a big-image fiber j, the ratio
    mu([a]) Lambda_k / e^(S_k phi at a point of [a]) lies in [E_cyl/D, D] with
    D = B_(j-1)^r * exp(V_1 of phi at fiber j-1) and E_cyl the least mediator
    cylinder mass: the integral of e^(S_k) over the image of [a] is squeezed
    between inf and sup over the cylinder, the first k-1 terms are distortion
    controlled, and the last term contributes its first variation.  The check
    certifies the symmetric band [1/F, F], F = D / E_cyl; the mediator image
    mass E and the slack factor D are reported alongside.
    """
    from .potentials import distortion_constant, variation

    fibers, path = triple.fibers, triple.path
    if fibers.bip is None:
        raise ConfigError("no b.i.p. structure declared")
    if depth > min(m.depth for m in triple.mu.values()):
        raise ConfigError("gibbs_check depth exceeds the measures' working depth")
    rng = np.random.default_rng(seed)
    bi_fibers = [
        j for j in range(triple.lo + depth, triple.hi + 1)
        if fibers.bip.omega_bi.evaluate(path, j)
    ]
    if not bi_fibers:
        raise ConvergenceError("no big-image fibers in the triple window")
    band = {}
    for j in bi_fibers:
        mediators = [b for b in fibers.bip.letters if b in fibers.alphabet(path, j - 1)]
        if not mediators:
            raise InvariantViolation(f"no mediator letters available at fiber {j - 1}")
        depth1 = triple.mu[j].marginal(1)
        e_image = min(
            sum(depth1.get((c,), 0.0) for c in fibers.successors(path, j - 1, b))
            for b in mediators
        )
        e_cyl = min(
            depth1.get((b,), 0.0)
            for b in fibers.bip.letters
            if b in fibers.alphabet(path, j)
        )
        if e_image <= 0 or e_cyl <= 0:
            raise InvariantViolation(f"mediator mass vanishes at fiber {j}")
        b_prev = distortion_constant(phi, path, j - 1).value
        v1 = variation(phi, 1, fibers, path, j - 1)
        slack = b_prev ** phi.r * math.exp(v1)
        band[j] = {
            "E": e_image,
            "E_cyl": e_cyl,
            "B": distortion_constant(phi, path, j).value,
            "slack": slack,
            "F": slack / e_cyl,
        }
    rows, violations = [], []
    for _ in range(samples):
        j = bi_fibers[rng.integers(len(bi_fibers))]
        k = int(rng.integers(1, depth + 1))
        words = admissible_words(fibers, path, j - k, k)
        w = words[rng.integers(len(words))]
        mass = triple.mu[j - k].cylinder_mass(w)
        if mass == 0.0:
            continue
        rep = canonical_representative(w, fibers, path, anchor=j - k)
        s_k = birkhoff_sum(phi, rep, k)
        ratio = mass * math.exp(triple.log_cocycle(j - k, k) - s_k)
        f_j = band[j]["F"]
        lower, upper = 1.0 / f_j, f_j
        rows.append((j, w, ratio, lower, upper))
        if not lower * (1 - 1e-9) <= ratio <= upper * (1 + 1e-9):
            violations.append((j, w, ratio, lower, upper))
    return GibbsReport(rows=rows, violations=violations, band=band, samples=len(rows))


def eigenvalue_ratio_curve(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    horizon: int,
    triple: RpfTriple,
) -> list:
    """Consecutive-iterate eigenvalue recovery: sup |L^{n+1}(1)/L^n(1 at next fiber) - lambda_0|."""
    lam0 = triple.lam(0)
    up = CylinderFunction.constant(fibers, path, 0, 1.0, max(phi.depth - 1, 1))
    down = CylinderFunction.constant(fibers, path, 1, 1.0, max(phi.depth - 1, 1))
    scale_up = scale_down = 0.0
    curve = []
    up = transfer_apply(phi, up)  # L^1_0(1) at fiber 1
    for n in range(1, horizon + 1):
        up = transfer_apply(phi, up)
        down = transfer_apply(phi, down)
        su, sd = up.sup_norm(), down.sup_norm()
        scale_up += math.log(su)
        scale_down += math.log(sd)
        up, down = up.shift_scale(1 / su), down.shift_scale(1 / sd)
        ratio = up.div(down).shift_scale(math.exp(scale_up - scale_down))
        gap = ratio.shift_scale(1.0, -lam0).sup_norm()
        curve.append((n, gap))
    return curve

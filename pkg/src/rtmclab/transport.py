"""Optimal transport on fibered shifts and the contraction machinery.

Wasserstein distances between atomic measures are solved as exact finite
transportation programs (HiGHS), certified by complementary slackness against
the dual; the Kantorovich-Rubinstein side is an independent second program.

On top sit the coupling constants: per-fiber distortion products B and scales
alpha = B/beta, metric-settling exponents n, big-preimage passage lengths m
with their mediator word families, worst-case passage weights C, the
contraction factors t = max(beta, 1 - (1 - r^n alpha) C'/B'), the certified
event (B_omega <= B, C_omega >= C) with its envelope rate 1 - C/2B, and the
forward/backward return-time sequences along which the dual operator
contracts.  The explicit near-diagonal coupling is built literally and its
cost checked against both the LP optimum and the certified factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .driver import DriverPath
from .errors import (
    AdmissibilityError,
    ConfigError,
    ConvergenceError,
    InvariantViolation,
)
from .fitting import fit_rate
from .potentials import Potential, distortion_constant, word_birkhoff
from .shifts import FiberStructure, Point, admissible_words, canonical_representative, shift_metric
from .transfer import (
    AtomicMeasure,
    CylinderFunction,
    RpfTriple,
    dual_apply,
    random_lipschitz,
    transfer_apply,
    transfer_power,
)

LP_CAP = 4096
_LP_TOL = 1e-9
# degenerate cost matrices (few distinct metric values) need tighter pivoting
# tolerances than the HiGHS defaults to keep plans nonnegative to 1e-10
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True)
class Metric:
    """Distance used by the transport programs: raw d_r or the capped alpha-rescaling."""

    kind: str  # "raw" | "adjusted"
    r: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("raw", "adjusted"):
            raise ConfigError(f"unknown metric kind {self.kind!r}")
        if self.kind == "adjusted" and self.alpha < 1.0:
            raise ConfigError("adjusted metric needs alpha >= 1")

    def dist(self, x: Point, y: Point) -> float:
        d = shift_metric(x, y, self.r)
        return d if self.kind == "raw" else min(1.0, self.alpha * d)


@dataclass(eq=False)
class TransportPlan:
    """A feasible transport with its cost, dual certificate and resolution bound."""

    source_labels: list
    target_labels: list
    plan: np.ndarray
    cost: float
    dual_source: np.ndarray | None = None
    dual_target: np.ndarray | None = None
    dual_gap: float | None = None
    resolution: float = 0.0  # metric radius of one atom: alpha * r^depth

    def check_marginals(self, mu_w: np.ndarray, nu_w: np.ndarray, tol: float = 1e-10) -> None:
        if np.max(np.abs(self.plan.sum(axis=1) - mu_w)) > tol:
            raise InvariantViolation("transport plan row sums differ from the source weights")
        if np.max(np.abs(self.plan.sum(axis=0) - nu_w)) > tol:
            raise InvariantViolation("transport plan column sums differ from the target weights")
        if self.plan.min() < -tol:
            raise InvariantViolation("negative transport mass")


def _atoms(mu: AtomicMeasure) -> tuple[list, np.ndarray, list]:
    words = sorted(mu.weights)
    weights = np.array([mu.weights[w] for w in words])
    points = [
        canonical_representative(w, mu.fibers, mu.path, anchor=mu.anchor) for w in words
    ]
    return words, weights, points


def wasserstein(
    mu: AtomicMeasure,
    nu: AtomicMeasure,
    metric: Metric,
    lp_cap: int = LP_CAP,
) -> tuple[float, TransportPlan]:
    """Exact optimum of the transportation program between two atomic measures.

    Optimality is certified against the equality duals: dual feasibility
    u_i + v_j <= c_ij, complementary slackness on the support, and a primal-dual
    gap below 1e-9 (scaled).
    """
    if mu.anchor != nu.anchor:
        raise AdmissibilityError("measures on different fibers")
    if abs(mu.mass() - nu.mass()) > 1e-10:
        raise ConfigError(f"unequal total masses {mu.mass()} vs {nu.mass()}")
    sw, swt, sp = _atoms(mu)
    tw, twt, tp = _atoms(nu)
    n, m = len(sw), len(tw)
    if n > lp_cap or m > lp_cap:
        raise ConfigError(f"atom count {max(n, m)} beyond the LP cap {lp_cap}")
    cost_mat = np.empty((n, m))
    for i, x in enumerate(sp):
        for j, y in enumerate(tp):
            cost_mat[i, j] = metric.dist(x, y)

    rows, cols, data = [], [], []
    for i in range(n):
        for j in range(m):
            k = i * m + j
            rows += [i, n + j]
            cols += [k, k]
            data += [1.0, 1.0]
    a_eq = sparse.csc_matrix((data, (rows, cols)), shape=(n + m, n * m))
    b_eq = np.concatenate([swt, twt])
    res = linprog(cost_mat.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise ConvergenceError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    value = float(res.fun)

    u = np.asarray(res.eqlin.marginals[:n])
    v = np.asarray(res.eqlin.marginals[n:])
    scale = max(1.0, np.abs(cost_mat).max())
    slack = cost_mat - u[:, None] - v[None, :]
    if slack.min() < -_LP_TOL * scale:
        raise InvariantViolation("dual infeasibility in the transport certificate")
    support_gap = float(np.max(np.abs(slack)[plan > _LP_TOL])) if (plan > _LP_TOL).any() else 0.0
    dual_value = float(u @ swt + v @ twt)
    gap = abs(value - dual_value)
    if max(gap, support_gap) > 1e-7 * scale:
        raise InvariantViolation("complementary slackness fails on the computed plan")
    depth = min(mu.depth, nu.depth)
    out = TransportPlan(
        source_labels=sw, target_labels=tw, plan=plan, cost=value,
        dual_source=u, dual_target=v, dual_gap=gap,
        resolution=metric.alpha * metric.r ** depth if metric.kind == "adjusted"
        else metric.r ** depth,
    )
    out.check_marginals(swt, twt)
    return value, out


def lipschitz_dual(
    mu: AtomicMeasure,
    nu: AtomicMeasure,
    metric: Metric,
    lp_cap: int = LP_CAP,
) -> tuple[float, CylinderFunction]:
    """Kantorovich-Rubinstein program: maximize int f dmu - int f dnu over 1-Lipschitz f.

    Solved as an independent LP on the union of supports; the witness is
    extended to a cylinder function by the minimal 1-Lipschitz extension.
    """
    if mu.anchor != nu.anchor:
        raise AdmissibilityError("measures on different fibers")
    depth = max(mu.depth, nu.depth)
    net: dict = {}
    reps: dict = {}
    for measure, sign in ((mu, 1.0), (nu, -1.0)):
        for w, m in measure.weights.items():
            rep = canonical_representative(w, measure.fibers, measure.path,
                                           anchor=measure.anchor)
            key = rep.prefix(depth)
            net[key] = net.get(key, 0.0) + sign * m
            reps[key] = rep
    keys = sorted(net)
    pts = [reps[k] for k in keys]
    k = len(keys)
    if k > lp_cap:
        raise ConfigError(f"atom count {k} beyond the LP cap {lp_cap}")
    c_obj = -np.array([net[key] for key in keys])
    rows, cols, data, ub = [], [], [], []
    row = 0
    for i in range(k):
        for j in range(i + 1, k):
            d = metric.dist(pts[i], pts[j])
            for a, b in ((i, j), (j, i)):
                rows += [row, row]
                cols += [a, b]
                data += [1.0, -1.0]
                ub.append(d)
                row += 1
    bounds = [(0.0, 0.0)] + [(None, None)] * (k - 1)  # pin one value, the rest free
    if row:
        a_ub = sparse.csc_matrix((data, (rows, cols)), shape=(row, k))
        res = linprog(c_obj, A_ub=a_ub, b_ub=np.array(ub), bounds=bounds,
                      method="highs", options=_LP_OPTIONS)
    else:
        res = linprog(c_obj, bounds=bounds, method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise ConvergenceError(f"dual LP failed: {res.message}")
    value = -float(res.fun)
    f_on_atoms = dict(zip(keys, res.x))
    fibers, path, anchor = mu.fibers, mu.path, mu.anchor
    values = {}
    for w in admissible_words(fibers, path, anchor, depth):
        if w in f_on_atoms:
            values[w] = float(f_on_atoms[w])
        else:
            x = canonical_representative(w, fibers, path, anchor=anchor)
            values[w] = min(
                f_on_atoms[key] + metric.dist(x, reps[key]) for key in keys
            )
    witness = CylinderFunction(fibers, path, anchor, depth, values)
    return value, witness


# ---------------------------------------------------------------------------
# contraction constants


@dataclass(eq=False)
class ContractionCertificate:
    """Everything the coupling argument needs, per fiber and globally."""

    fibers: FiberStructure
    path: DriverPath
    phi: Potential  # normalized potential
    beta: float
    r: float
    lo: int
    hi: int
    B: dict = field(default_factory=dict)  # fiber -> distortion value
    alpha: dict = field(default_factory=dict)
    n_step: dict = field(default_factory=dict)  # settling exponent (minimal admissible)
    m_step: dict = field(default_factory=dict)  # passage length at a passage-start fiber
    u_words: dict = field(default_factory=dict)  # fiber -> {first letter -> passage word}
    o_letter: dict = field(default_factory=dict)
    C: dict = field(default_factory=dict)  # fiber -> worst passage weight
    C_slack: dict = field(default_factory=dict)  # reported distortion slack (exact tables: 1)
    s_fiber: dict = field(default_factory=dict)
    t_fiber: dict = field(default_factory=dict)
    block: dict = field(default_factory=dict)  # fiber -> n + m (lemma block length)
    # certified-event data
    B_threshold: float | None = None
    C_threshold: float | None = None
    event_member: dict = field(default_factory=dict)
    t: float | None = None  # envelope rate 1 - C/(2B)
    t_observed: float | None = None
    c: float | None = None  # 2B
    l_seq: tuple = ()
    k_seq: tuple = ()
    sequence_mode: str = ""
    passage_failures: dict = field(default_factory=dict)

    def metric_at(self, fiber: int) -> Metric:
        return Metric("adjusted", self.r, self.alpha[fiber])

    def require_event(self) -> None:
        if self.t is None:
            raise ConfigError("certificate has no certified event; call certify_event first")


def k_factor(triple: RpfTriple, B: dict, fiber: int) -> float:
    """Lipschitz transfer factor 2 ||1/h|| max(||h|| ||1/h|| - 1, B - 1, 1)."""
    h = triple.h[fiber]
    inv_sup = 1.0 / h.inf()
    return 2.0 * inv_sup * max(h.sup() * inv_sup - 1.0, B[fiber] - 1.0, 1.0)


def _passage(
    fibers: FiberStructure,
    path: DriverPath,
    phi: Potential,
    q: int,
    o: int,
    max_scan: int,
) -> tuple[int, dict, float]:
    """Passage data at fiber q: length m, mediator word family, worst weight C.

    m is the least n >= 1 with the big-preimage event at fiber q+n such that
    every letter of fiber q+n has an admissible predecessor chain
    o -> ... -> j in the mediator set; words are chosen lexicographically
    minimal; C is the exact minimum of e^(S_m) over the family and the
    depth-(p-1) representatives.
    """
    bip = fibers.bip
    if bip is None:
        raise ConfigError("no b.i.p. structure declared")
    mediators = bip.letters
    reach = {o}
    if o not in fibers.alphabet(path, q):
        raise AdmissibilityError(f"marked letter {o} not in the fiber-{q} alphabet")
    reach_by_level = [reach]
    m = None
    for n in range(1, max_scan + 1):
        reach = {b for a in reach for b in fibers.successors(path, q + n - 1, a)}
        reach_by_level.append(reach)
        if not bip.omega_bp.evaluate(path, q + n):
            continue
        final = reach_by_level[n - 1] & mediators
        if all(
            any(fibers.admits(path, q + n - 1, j, x0) for j in final)
            for x0 in fibers.alphabet(path, q + n)
        ):
            m = n
            break
    if m is None:
        raise ConvergenceError(
            f"no big-preimage passage from fiber {q} within {max_scan} steps"
        )
    words = {}
    for x0 in fibers.alphabet(path, q + m):
        allowed = [
            {j for j in reach_by_level[m - 1] & mediators
             if fibers.admits(path, q + m - 1, j, x0)}
        ]
        for t in range(m - 2, -1, -1):
            allowed.insert(0, {
                a for a in reach_by_level[t]
                if any(fibers.admits(path, q + t, a, b) for b in allowed[0])
            })
        word = [o]
        for t in range(1, m):
            word.append(min(
                b for b in allowed[t] if fibers.admits(path, q + t - 1, word[-1], b)
            ))
        words[x0] = tuple(word)
    c_min = math.inf
    tail_depth = max(phi.depth - 1, 1)
    for z in admissible_words(fibers, path, q + m, tail_depth):
        u = words[z[0]]
        c_min = min(c_min, math.exp(word_birkhoff(phi, path, q, u + z, m)))
    return m, words, c_min


def contraction_constants(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    beta: float,
    window: tuple[int, int],
    o_letter: dict | None = None,
    b_horizon: int = 128,
    max_scan: int = 64,
) -> ContractionCertificate:
    """All per-fiber coupling constants for a normalized potential on a window."""
    if not 0 < beta < 1:
        raise ConfigError("beta must lie in (0, 1)")
    lo, hi = window
    r = phi.r
    cert = ContractionCertificate(fibers=fibers, path=path, phi=phi, beta=beta,
                                  r=r, lo=lo, hi=hi)
    for k in range(lo, hi + 1):
        cert.B[k] = distortion_constant(phi, path, k, horizon=b_horizon).value
        cert.alpha[k] = cert.B[k] / beta
        cert.n_step[k] = int(math.floor(-math.log(cert.alpha[k]) / math.log(r))) + 1
        cert.o_letter[k] = (
            o_letter[k] if o_letter and k in o_letter else min(fibers.alphabet(path, k))
        )
    for q in range(lo, hi + 1):
        try:
            m, words, c_min = _passage(fibers, path, phi, q, cert.o_letter[q], max_scan)
        except (ConvergenceError, AdmissibilityError) as exc:
            cert.passage_failures[q] = str(exc)
            continue
        cert.m_step[q] = m
        cert.u_words[q] = words
        cert.C[q] = c_min
        cert.C_slack[q] = 1.0  # tables are depth-exact, the inf is attained
    for k in range(lo, hi + 1):
        q = k + cert.n_step[k]
        if q in cert.m_step and q in cert.B:
            s = 1.0 - (1.0 - r ** cert.n_step[k] * cert.alpha[k]) * cert.C[q] / cert.B[q]
            cert.s_fiber[k] = s
            cert.t_fiber[k] = max(beta, s)
            cert.block[k] = cert.n_step[k] + cert.m_step[q]
            if not 0.0 < cert.t_fiber[k] < 1.0:
                raise InvariantViolation(f"contraction factor at fiber {k} outside (0,1)")
    return cert


def certify_event(cert: ContractionCertificate, B: float, C: float) -> ContractionCertificate:
    """Mark the event (B_omega <= B, C_omega >= C) and set the envelope rate 1 - C/(2B)."""
    if C <= 0 or B < 1:
        raise ConfigError("need C > 0 and B >= 1")
    member = {}
    for k in cert.C:
        member[k] = cert.B[k] <= B + 1e-12 and cert.C[k] >= C - 1e-12
    if not any(member.values()):
        raise ConvergenceError("the certified event is empty on this window")
    cert.B_threshold, cert.C_threshold = B, C
    cert.event_member = member
    cert.t = 1.0 - C / (2.0 * B)
    cert.c = 2.0 * B
    return cert


def _markov_n(cert: ContractionCertificate, k: int) -> int:
    """First certified-event return past the strengthened settling bound."""
    bound = int(math.floor(-math.log(2.0 * cert.alpha[k]) / math.log(cert.r))) + 1
    n = max(1, bound)
    while True:
        if k + n > cert.hi:
            raise ConvergenceError(f"no certified-event return above fiber {k} in the window")
        if cert.event_member.get(k + n, False):
            return n
        n += 1


def return_sequences(
    cert: ContractionCertificate,
    count: int,
    mode: str = "markov",
) -> ContractionCertificate:
    """Forward and backward certified return sequences.

    markov mode follows the general construction (settle to the certified event
    past the strengthened bound, then pass); matrix mode follows the simplified
    full-shift-style construction along big-preimage returns (both sequences
    reduce to 2, 4, 6, ... on a full shift).
    """
    cert.require_event()
    path = cert.path
    t_obs = cert.beta
    if mode == "markov":
        # the seed l_0 = first certified return carries no completed block; the
        # enumerated points l_1, l_2, ... each add one settle-then-pass block
        ls = []
        l_prev = _markov_n(cert, 0)
        for _ in range(count):
            start = l_prev + cert.m_step[l_prev]  # passage first, then settle
            n = _markov_n(cert, start)
            l_new = start + n
            q = l_new  # next passage start lies in the certified event
            s_block = 1.0 - (1.0 - cert.r ** n * cert.alpha[start]) * cert.C[q] / cert.B[q]
            t_obs = max(t_obs, s_block)
            ls.append(l_new)
            l_prev = l_new
        # backward: pass-end points of certified passage starts
        pass_end = {}
        for j in range(cert.lo, cert.hi + 1):
            if cert.event_member.get(j, False) and j in cert.m_step:
                pass_end.setdefault(j + cert.m_step[j], []).append(j)

        def tilde_m(j: int) -> int:
            cands = [j - q for q in pass_end.get(j, [])]
            if not cands:
                raise ConvergenceError(f"fiber {j} is not a passage end")
            return min(cands)

        def tilde_n(j: int) -> int:
            n = 1
            while True:
                if j - n < cert.lo:
                    raise ConvergenceError("backward sequence leaves the window")
                tgt = j - n
                if tgt in pass_end:
                    bound = int(math.floor(
                        -math.log(2.0 * cert.alpha[tgt]) / math.log(cert.r))) + 1
                    if n >= max(1, bound):
                        return n
                n += 1

        def k_increment(k_prev: int) -> int:
            nn = tilde_n(-k_prev)
            k_star = k_prev + nn
            mm = tilde_m(-k_star)
            k_new = k_star + mm
            q = -k_new  # passage start in the certified event
            s_block = 1.0 - (1.0 - cert.r ** nn * cert.alpha[-k_star]) * cert.C[q] / cert.B[q]
            return k_new, s_block

        ks = []
        k_prev, _ = k_increment(0)  # seed k_0: bare pass + top settle, no block yet
        for _ in range(count):
            k_new, s_block = k_increment(k_prev)
            t_obs = max(t_obs, s_block)
            ks.append(k_new)
            k_prev = k_new
    elif mode == "matrix":
        bp = cert.fibers.bip.omega_bp

        def fwd(j: int) -> int:
            n = 2
            while not bp.evaluate(path, j + n):
                n += 1
                if j + n > cert.hi:
                    raise ConvergenceError("no forward big-preimage return in the window")
            return n

        def bwd(j: int) -> int:
            n = 2
            while not bp.evaluate(path, j - n):
                n += 1
                if j - n < cert.lo:
                    raise ConvergenceError("no backward big-preimage return in the window")
            return n

        ls, ks = [], []
        cur = 0
        for _ in range(count):
            cur += fwd(cur)
            ls.append(cur)
        cur = 0
        for _ in range(count):
            cur += bwd(-cur)
            ks.append(cur)
        t_obs = max((cert.t_fiber[k] for k in cert.t_fiber), default=cert.beta)
    else:
        raise ConfigError(f"unknown sequence mode {mode!r}")
    if any(b <= a for a, b in zip(ls, ls[1:])) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvariantViolation("return sequences must be strictly increasing")
    if cert.t is not None and t_obs > cert.t + 1e-12:
        raise InvariantViolation(
            f"observed block factor {t_obs} above the envelope rate {cert.t}"
        )
    cert.t_observed = t_obs
    cert.l_seq, cert.k_seq = tuple(ls), tuple(ks)
    cert.sequence_mode = mode
    return cert


# ---------------------------------------------------------------------------
# the explicit coupling


def build_coupling(
    x: Point,
    y: Point,
    phi: Potential,
    cert: ContractionCertificate,
    fiber: int,
) -> TransportPlan:
    """The near-diagonal coupling of the pulled-back Dirac pair over one block.

    Branches split as (settling word, passage word); mass
    inf e^(S over settling + mediator passage) rides the diagonal pairs that
    share the settling word and enter the marked letter; the remainder couples
    independently.  Guarantees: diagonal mass >= C/B at the passage fiber, cost
    under the block-bottom metric <= s, and exact marginals.
    """
    k = fiber
    if k not in cert.block:
        raise ConfigError(f"no complete block at fiber {k}")
    n = cert.n_step[k]
    q = k + n
    m = cert.m_step[q]
    l = n + m
    if x.anchor != k + l or y.anchor != k + l:
        raise AdmissibilityError(f"points must live at the block end fiber {k + l}")
    fibers, path = cert.fibers, cert.path
    o = cert.o_letter[q]
    u_map = cert.u_words[q]
    tail_depth = max(phi.depth - 1, 1)

    def branches(pt: Point) -> tuple[list, np.ndarray, list]:
        head = pt.prefix(max(tail_depth, pt.head_length))  # keep the full known head
        vs = [
            v for v in admissible_words(fibers, path, k, l)
            if fibers.admits(path, k + l - 1, v[-1], head[0])
        ]
        weights = np.array([
            math.exp(word_birkhoff(phi, path, k, (v + head)[: l + phi.depth - 1], l))
            for v in vs
        ])
        atoms = [Point(fibers, path, k, v + head) for v in vs]
        return vs, weights, atoms

    xv, xw, xatoms = branches(x)
    yv, yw, yatoms = branches(y)
    xi = {v: i for i, v in enumerate(xv)}
    yi = {v: i for i, v in enumerate(yv)}

    settle = [
        v1 for v1 in admissible_words(fibers, path, k, n)
        if fibers.admits(path, k + n - 1, v1[-1], o)
    ]
    q_diag = {}
    for v1 in settle:
        worst = math.inf
        for z in admissible_words(fibers, path, q + m, tail_depth):
            u = u_map[z[0]]
            worst = min(worst, math.exp(word_birkhoff(phi, path, k, v1 + u + z, l)))
        q_diag[v1] = worst

    plan = np.zeros((len(xv), len(yv)))
    x_res, y_res = xw.copy(), yw.copy()
    diag_mass = 0.0
    for v1, qv in q_diag.items():
        bx = v1 + u_map[x.letter(0)]
        by = v1 + u_map[y.letter(0)]
        i, j = xi[bx], yi[by]
        plan[i, j] += qv
        x_res[i] -= qv
        y_res[j] -= qv
        diag_mass += qv
    if x_res.min() < -1e-12 or y_res.min() < -1e-12:
        raise InvariantViolation("diagonal coupling mass exceeds a branch weight")
    rest = 1.0 - diag_mass
    if rest > 1e-14:
        plan += np.outer(np.clip(x_res, 0, None), np.clip(y_res, 0, None)) / rest

    metric = cert.metric_at(k)
    cost = 0.0
    for i, xa in enumerate(xatoms):
        for j, ya in enumerate(yatoms):
            if plan[i, j] > 0:
                cost += plan[i, j] * metric.dist(xa, ya)
    out = TransportPlan(source_labels=xv, target_labels=yv, plan=plan, cost=cost,
                        resolution=0.0)
    out.check_marginals(xw, yw, tol=1e-10)
    if diag_mass < cert.C[q] / cert.B[q] - 1e-12:
        raise InvariantViolation("diagonal mass below the certified C/B bound")
    if k in cert.s_fiber and cost > cert.s_fiber[k] + 1e-12:
        raise InvariantViolation(
            f"coupling cost {cost} above the certified factor {cert.s_fiber[k]}"
        )
    return out


# ---------------------------------------------------------------------------
# lemma and decay verification


@dataclass
class LemmaReport:
    rows: list  # (part, fiber, observed, input size, allowed ratio)
    max_ratio: dict  # parts i/iii: worst ratio; parts ii/iv: worst signed slack vs t
    trials: int
    skipped: int


def verify_main_lemma(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    cert: ContractionCertificate,
    trials: int = 100,
    seed: int = 0,
    depth: int = 3,
    test_fibers: list | None = None,
) -> LemmaReport:
    """Empirical certification of the four contraction statements.

    (i) Lipschitz non-expansion over the settling steps, (ii) contraction by t
    over a full block, (iii) Wasserstein non-expansion, (iv) Wasserstein
    contraction by t.  Any violation raises immediately.
    """
    usable = test_fibers or sorted(
        k for k in cert.block
        if cert.lo <= k and k + cert.block[k] <= cert.hi
    )
    if not usable:
        raise ConfigError("no fibers with a complete block inside the window")
    rng = np.random.default_rng(seed)
    rows = []  # (part, fiber, observed, input size, allowed ratio)
    worst = {"i": 0.0, "ii": 0.0, "iii": 0.0, "iv": 0.0}
    skipped = 0
    for _ in range(trials):
        k = usable[rng.integers(len(usable))]
        n = cert.n_step[k]
        block = cert.block[k]
        t_k = cert.t_fiber[k]
        # (i)/(ii): Lipschitz decay through the operator
        f = random_lipschitz(fibers, path, k, depth, rng, phi.r, cert.alpha[k])
        d0 = f.lipschitz(phi.r, cert.alpha[k])
        if d0 == 0.0:
            skipped += 1
            continue
        d_n = transfer_power(phi, f, n).lipschitz(phi.r, cert.alpha[k + n])
        rows.append(("i", k, d_n, d0, 1.0))
        worst["i"] = max(worst["i"], d_n / d0)
        d_b = transfer_power(phi, f, block).lipschitz(phi.r, cert.alpha[k + block])
        rows.append(("ii", k, d_b, d0, t_k))
        worst["ii"] = max(worst["ii"], d_b / d0 - t_k)  # signed slack, <= 0 when obeyed
        # (iii)/(iv): Wasserstein decay through the dual
        mu_n = AtomicMeasure.random(fibers, path, k + n, depth, rng)
        nu_n = AtomicMeasure.random(fibers, path, k + n, depth, rng)
        w_top, _ = wasserstein(mu_n, nu_n, cert.metric_at(k + n))
        if w_top > 0:
            w_bot, _ = wasserstein(
                dual_apply(phi, mu_n, n).normalize(),
                dual_apply(phi, nu_n, n).normalize(),
                cert.metric_at(k),
            )
            rows.append(("iii", k, w_bot, w_top, 1.0))
            worst["iii"] = max(worst["iii"], w_bot / w_top)
        mu_b = AtomicMeasure.random(fibers, path, k + block, depth, rng)
        nu_b = AtomicMeasure.random(fibers, path, k + block, depth, rng)
        w_top_b, _ = wasserstein(mu_b, nu_b, cert.metric_at(k + block))
        if w_top_b > 0:
            w_bot_b, _ = wasserstein(
                dual_apply(phi, mu_b, block).normalize(),
                dual_apply(phi, nu_b, block).normalize(),
                cert.metric_at(k),
            )
            rows.append(("iv", k, w_bot_b, w_top_b, t_k))
            worst["iv"] = max(worst["iv"], w_bot_b / w_top_b - t_k)
    tol = 1e-12
    for part, fiber, observed, size, allowed in rows:
        if observed > allowed * size + tol:
            raise InvariantViolation(
                f"lemma part ({part}) at fiber {fiber}: {observed} above {allowed} x {size}"
            )
    return LemmaReport(rows=rows, max_ratio=worst, trials=trials, skipped=skipped)


@dataclass
class DecayReport:
    curve: list  # (n, gap) for all n
    forward_rows: list  # (i, l_i, gap, bound)
    backward_rows: list  # (i, k_i, gap, bound)
    fit_all: dict | None
    fit_forward: dict | None
    rate_flag: bool  # forward fitted rate <= t + slack
    empirical_s: float | None


def verify_decay(
    phi: Potential,
    fibers: FiberStructure,
    path: DriverPath,
    cert: ContractionCertificate,
    nu: dict,
    f: CylinderFunction | None = None,
    horizon: int = 60,
    seed: int = 0,
    rate_slack: float = 0.05,
) -> DecayReport:
    """Sup-norm decay of the normalized iterates against the certified envelopes.

    `nu` is the invariant measure family of the normalized operator (per fiber).
    Checks gap(l_i) <= 2c t^i D(f) forward and the 4 B t^i analogue backward,
    reports exponential fits along the subsequence and over all n.
    """
    cert.require_event()
    if horizon < 6:
        raise ConfigError("horizon too short to fit a rate (>= 6 points required)")
    rng = np.random.default_rng(seed)
    if f is None:
        f = random_lipschitz(fibers, path, 0, max(phi.depth - 1, 1), rng, phi.r)
    mean0 = nu[0].integrate(f)
    d0 = f.lipschitz(phi.r)
    curve = []
    g = f
    sup_prev = math.inf
    for n in range(1, horizon + 1):
        g = transfer_apply(phi, g)
        gap = g.shift_scale(1.0, -mean0).sup_norm()
        if gap > sup_prev + 1e-12:
            raise InvariantViolation(f"sup-norm gap increased at step {n}")
        sup_prev = gap
        curve.append((n, gap))
    gaps = dict(curve)
    forward_rows = []
    for i, l_i in enumerate(cert.l_seq, start=1):
        if l_i > horizon:
            break
        bound = 2.0 * cert.c * cert.t ** i * d0
        forward_rows.append((i, l_i, gaps[l_i], bound))
        if gaps[l_i] > bound + 1e-12:
            raise InvariantViolation(
                f"forward decay envelope fails at l_{i} = {l_i}: {gaps[l_i]} > {bound}"
            )
    backward_rows = []
    b0 = cert.B[0]
    for i, k_i in enumerate(cert.k_seq, start=1):
        if -k_i < cert.lo or -k_i not in nu:
            break
        fb = random_lipschitz(fibers, path, -k_i, max(phi.depth - 1, 1), rng, phi.r)
        d_b = fb.lipschitz(phi.r)
        mean_b = nu[-k_i].integrate(fb)
        g_b = transfer_power(phi, fb, k_i)
        gap_b = g_b.shift_scale(1.0, -mean_b).sup_norm()
        bound = 4.0 * b0 * cert.t ** i * d_b
        backward_rows.append((i, k_i, gap_b, bound))
        if gap_b > bound + 1e-12:
            raise InvariantViolation(
                f"backward decay envelope fails at k_{i} = {k_i}: {gap_b} > {bound}"
            )
    fit_all = fit_forward = None
    empirical_s = None
    rate_flag = True
    try:
        fit_all = fit_rate([n for n, _ in curve], [g for _, g in curve])
        empirical_s = fit_all["rate"]
    except ConvergenceError:
        pass
    try:
        fit_forward = fit_rate(
            [i for i, _, _, _ in forward_rows], [g for _, _, g, _ in forward_rows]
        )
        rate_flag = math.log(fit_forward["rate"]) <= math.log(cert.t) + rate_slack
    except ConvergenceError:
        pass
    return DecayReport(curve=curve, forward_rows=forward_rows,
                       backward_rows=backward_rows, fit_all=fit_all,
                       fit_forward=fit_forward, rate_flag=rate_flag,
                       empirical_s=empirical_s)

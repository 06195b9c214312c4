"""Decay of correlations, psi-mixing coefficients and the equilibrium identity.

All three run on a solved eigen-triple: correlations through the exact
push-pull identity int f (g o T^n) dnu = int L^n(f) g dnu-shifted, the mixing
coefficients as exact maxima over the finite cylinder algebra (the supremum
over unions reduces to single cylinders by the mediant inequality), and the
equilibrium gap from cylinder-sum entropy along returns of a marked base event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .driver import DriverPath, EventSpec
from .errors import ConfigError, ConvergenceError, InvariantViolation
from .fitting import fit_rate
from .potentials import Potential
from .shifts import FiberStructure, admissible_words
from .transfer import (
    AtomicMeasure,
    CylinderFunction,
    RpfTriple,
    dual_apply,
    gurevich_pressure,
    invariant_measures,
    normalize_potential,
    transfer_apply,
    transfer_power,
)
from .transport import ContractionCertificate


def pattern_function(fibers: FiberStructure, path: DriverPath, values: dict,
                     depth: int, default: float | None = None):
    """A per-fiber cylinder function from one word-value table."""

    def at(fiber: int) -> CylinderFunction:
        words = admissible_words(fibers, path, fiber, depth)
        table = {}
        for w in words:
            if w in values:
                table[w] = float(values[w])
            elif default is not None:
                table[w] = float(default)
            else:
                raise ConfigError(f"pattern has no value for word {w}")
        return CylinderFunction(fibers, path, fiber, depth, table)

    return at


def refined_invariant(nu: dict, phi: Potential, fiber: int, depth: int) -> AtomicMeasure:
    """The invariant measure at a fiber refined to at least `depth` via exact pull-back.

    Pulls `depth` fresh letters onto a start measure coarsened to the potential
    locality: a pulled weight reads only the first p-1 letters of the old atom
    and the target marginals read only the fresh prefix, so the coarsening is
    exact for everything the caller can see.
    """
    base = nu[fiber]
    if base.depth >= depth:
        return base
    if fiber + depth not in nu:
        raise ConfigError(f"need the invariant measure at fiber {fiber + depth} to refine")
    start = nu[fiber + depth].coarsen(max(phi.depth - 1, 1))
    pulled = dual_apply(phi, start, depth, max_depth=depth + phi.depth)
    return pulled.normalize()


@dataclass
class CorrelationReport:
    curve: list  # (n, correlation) -- exact, via the push-pull identity
    forward_rows: list  # (i, l_i, |corr|, envelope)
    backward_rows: list  # (i, k_i, |corr|, envelope)
    direct_check: list  # (n, identity value, direct integral) for small n
    fit: dict | None


def correlation_decay(
    f_at,
    g_at,
    phi: Potential,
    nu: dict,
    fibers: FiberStructure,
    path: DriverPath,
    horizon: int,
    cert: ContractionCertificate | None = None,
    direct_upto: int = 3,
) -> CorrelationReport:
    """Exact correlation curve of two observable families under the invariant measures.

    f_at/g_at map a fiber index to a cylinder function; f is centered fiberwise.
    The curve is int L^n(f) g dnu at the target fiber; for n <= direct_upto the
    same number is recomputed by direct integration over refined cylinders.
    """
    f0 = f_at(0)
    f0 = f0.shift_scale(1.0, -nu[0].integrate(f0))
    curve = []
    g_run = f0
    for n in range(1, horizon + 1):
        g_run = transfer_apply(phi, g_run)
        gn = g_at(n)
        curve.append((n, nu[n].integrate(g_run.mul(gn))))
    direct_check = []
    for n in range(1, min(direct_upto, horizon) + 1):
        gn = g_at(n)
        need = n + gn.depth
        refined = refined_invariant(nu, phi, 0, max(need, f0.depth))
        total = 0.0
        for w, m in refined.weights.items():
            total += m * f0.value_at(w) * gn.value_at(w[n:])
        direct_check.append((n, curve[n - 1][1], total))
        if abs(total - curve[n - 1][1]) > 1e-10:
            raise InvariantViolation(
                f"push-pull identity differs from direct integration at lag {n}"
            )
    forward_rows, backward_rows = [], []
    if cert is not None:
        cert.require_event()
        gaps = dict(curve)
        d0 = f0.lipschitz(phi.r)
        for i, l_i in enumerate(cert.l_seq, start=1):
            if l_i > horizon:
                break
            g_abs = g_at(l_i).map(abs)
            envelope = 2.0 * cert.c * cert.t ** i * d0 * nu[l_i].integrate(g_abs)
            forward_rows.append((i, l_i, abs(gaps[l_i]), envelope))
            if abs(gaps[l_i]) > envelope + 1e-12:
                raise InvariantViolation(f"forward correlation envelope fails at l_{i}")
        b0 = None
        for i, k_i in enumerate(cert.k_seq, start=1):
            if -k_i not in nu or -k_i < cert.lo:
                break
            fb = f_at(-k_i)
            fb = fb.shift_scale(1.0, -nu[-k_i].integrate(fb))
            pushed = transfer_power(phi, fb, k_i)
            g0_abs = g_at(0).map(abs)
            corr_b = nu[0].integrate(pushed.mul(g_at(0)))
            from .potentials import distortion_constant

            if b0 is None:
                b0 = distortion_constant(phi, path, 0).value
            envelope = 4.0 * b0 * cert.t ** i * fb.lipschitz(phi.r) * nu[0].integrate(g0_abs)
            backward_rows.append((i, k_i, abs(corr_b), envelope))
            if abs(corr_b) > envelope + 1e-12:
                raise InvariantViolation(f"backward correlation envelope fails at k_{i}")
    fit = None
    try:
        fit = fit_rate([n for n, _ in curve], [abs(v) for _, v in curve])
    except ConvergenceError:
        pass
    return CorrelationReport(curve=curve, forward_rows=forward_rows,
                             backward_rows=backward_rows, direct_check=direct_check,
                             fit=fit)


@dataclass
class MixingReport:
    grid: list  # (n, psi_n) over the restricted cylinder algebra
    algebra_depth: int
    word_depth: int
    fitted_rate: float | None
    envelope_rows: list  # (i, l_i, psi, C t^i)
    C_derived: float | None
    K_hat: int | None
    t_tilde: float | None
    C_tilde: float | None
    upgrade_rows: list  # (n, psi_n, C_tilde t_tilde^n) for n >= K_hat
    note: str = "supremum restricted to the depth-d cylinder algebra"


def psi_mixing(
    phi: Potential,
    nu: dict,
    fibers: FiberStructure,
    path: DriverPath,
    depth: int,
    horizon: int,
    cert: ContractionCertificate | None = None,
) -> MixingReport:
    """Exact mixing coefficients over the depth-restricted cylinder algebra.

    psi_n maximizes (joint - product)/product over past words (length <= depth)
    and future cylinder sets; unions never beat single cylinders (mediant
    inequality), so the supremum over the algebra is the single-cylinder max.
    When a certificate is given, psi at the forward return times is checked
    against C t^i with C = 2 c B^2 / (least image mass), and the all-n upgrade
    with the empirical block-length bound K is reported.
    """
    if depth < 1:
        raise ConfigError("word depth must be >= 1")
    if horizon < 6:
        raise ConfigError("horizon too short to fit a rate (>= 6 points required)")
    past: list = []
    for k in range(1, depth + 1):
        if -k not in nu:
            raise ConfigError(f"invariant measure missing at fiber {-k}")
        for a in admissible_words(fibers, path, -k, k):
            mass = nu[-k].cylinder_mass(a)
            if mass <= 0:
                continue
            past.append((k, a, mass, transfer_power(phi, CylinderFunction.indicator(
                fibers, path, -k, a), k)))
    if not past:
        raise ConvergenceError("no past cylinders with positive mass")
    grid = []
    min_image = math.inf
    for k, a, mass, _g in past:
        image = sum(
            nu[0].marginal(1).get((c,), 0.0)
            for c in fibers.successors(path, -1, a[-1])
        )
        min_image = min(min_image, image)
    state = [(k, a, mass, g) for k, a, mass, g in past]
    for n in range(1, horizon + 1):
        best = 0.0
        nxt = []
        for k, a, mass, g in state:
            g = transfer_apply(phi, g)
            nxt.append((k, a, mass, g))
            d_eff = max(depth, g.depth)
            refined = nu[n] if nu[n].depth >= d_eff else None
            if refined is None:
                raise ConfigError("working depth of the invariant measures too small")
            joint: dict = {}
            marg: dict = {}
            for w, m in refined.weights.items():
                key = w[:depth]
                joint[key] = joint.get(key, 0.0) + m * g.value_at(w)
                marg[key] = marg.get(key, 0.0) + m
            for key, m_w in marg.items():
                if m_w <= 0:
                    continue
                best = max(best, joint[key] / (mass * m_w) - 1.0)
        state = nxt
        grid.append((n, best))
    fitted = None
    try:
        fitted = fit_rate([n for n, _ in grid], [v for _, v in grid])["rate"]
    except ConvergenceError:
        pass
    envelope_rows, upgrade_rows = [], []
    c_derived = k_hat = t_tilde = c_tilde = None
    if cert is not None:
        cert.require_event()
        from .potentials import distortion_constant

        b0 = distortion_constant(phi, path, 0).value
        c_derived = 2.0 * cert.c * b0 ** 2 / min_image
        psis = dict(grid)
        for i, l_i in enumerate(cert.l_seq, start=1):
            if l_i > horizon:
                break
            bound = c_derived * cert.t ** i
            envelope_rows.append((i, l_i, psis[l_i], bound))
            if psis[l_i] > bound + 1e-12:
                raise InvariantViolation(f"psi envelope fails at l_{i} = {l_i}")
        blocks = [
            cert.m_step[j] + cert.n_step[j + cert.m_step[j]]
            for j in cert.m_step
            if j + cert.m_step[j] in cert.n_step
        ]
        if blocks:
            k_hat = max(blocks)
            t_tilde = cert.t ** (1.0 / k_hat)
            c_tilde = c_derived / cert.t
            for n, v in grid:
                if n >= k_hat:
                    upgrade_rows.append((n, v, c_tilde * t_tilde ** n))
    return MixingReport(grid=grid, algebra_depth=depth, word_depth=depth,
                        fitted_rate=fitted, envelope_rows=envelope_rows,
                        C_derived=c_derived, K_hat=k_hat, t_tilde=t_tilde,
                        C_tilde=c_tilde, upgrade_rows=upgrade_rows)


@dataclass
class EquilibriumReport:
    entropy_curve: list  # (n, H_n / n) at event returns
    entropy_estimate: float  # increment estimator over the last return gap
    entropy_bar: float  # |last increment - previous increment|
    potential_integral: float
    pressure: float  # log-eigenvalue route
    pressure_bar: float  # |log-eigenvalue route - preimage-growth route|
    gap: float
    comparison: dict | None  # variational inequality against a declared kernel


def equilibrium_gap(
    phi: Potential,
    triple: RpfTriple,
    depth: int,
    event: EventSpec | None = None,
    pressure_letter: int | None = None,
    pressure_horizon: int = 400,
    comparison_kernel=None,
) -> EquilibriumReport:
    """|entropy + int phi dnu - pressure| with the three error components.

    Entropy uses cylinder sums of the invariant measure dnu = h dmu at event
    returns, estimated by increments between consecutive returns (exact on
    Markov instances); the potential integral is an exact table sum; pressure
    comes from the mean log eigenvalue, cross-checked against the
    preimage-growth estimator.
    """
    fibers, path = triple.fibers, triple.path
    event = event or EventSpec.always()
    tilde = normalize_potential(phi, triple)
    nu = invariant_measures(triple)
    returns = [n for n in range(2, depth + 1) if event.evaluate(path, n)]
    if len(returns) < 2:
        raise ConvergenceError("need at least two event returns within the depth")
    curve = []
    h_vals = {}
    for n in returns:
        refined = refined_invariant(nu, tilde, 0, n)
        masses = refined.marginal(n)
        h_n = -sum(m * math.log(m) for m in masses.values() if m > 0)
        h_vals[n] = h_n
        curve.append((n, h_n / n))
    n2, n1 = returns[-1], returns[-2]
    est = (h_vals[n2] - h_vals[n1]) / (n2 - n1)
    if len(returns) >= 3:
        n0 = returns[-3]
        prev = (h_vals[n1] - h_vals[n0]) / (n1 - n0)
        bar = abs(est - prev)
    else:
        bar = abs(est - h_vals[n2] / n2)
    # match the remaining terms to the increment's fiber range [n1, n2): the
    # cylinder sums telescope against sum(log lambda - int phi dnu) over the
    # same fibers, with corrections that cancel in the increment
    def phi_cf(j: int) -> CylinderFunction:
        return CylinderFunction(
            fibers, path, j, phi.depth,
            {w: phi.value(path, j, w) for w in admissible_words(fibers, path, j, phi.depth)},
        )

    integral = sum(nu[j].integrate(phi_cf(j)) for j in range(n1, n2)) / (n2 - n1)
    pressure = sum(triple.log_lambda[j] for j in range(n1, n2)) / (n2 - n1)
    letter = pressure_letter if pressure_letter is not None else min(fibers.alphabet(path, 0))
    try:
        growth = gurevich_pressure(phi, fibers, path, letter, pressure_horizon).estimate
        pressure_bar = abs(pressure - growth)
    except ConvergenceError:
        pressure_bar = math.nan
    gap = abs(est + integral - pressure)
    comparison = None
    if comparison_kernel is not None:
        comparison = _markov_comparison(phi, fibers, path, comparison_kernel,
                                        est + integral, pressure)
    return EquilibriumReport(entropy_curve=curve, entropy_estimate=est,
                             entropy_bar=bar, potential_integral=integral,
                             pressure=pressure, pressure_bar=pressure_bar,
                             gap=gap, comparison=comparison)


def _markov_comparison(phi, fibers, path, kernel, achieved, pressure) -> dict:
    """Entropy + integral of a declared invariant Markov kernel (stationary case)."""
    if phi.state_keyed and len(set(path.state(i) for i in range(-8, 8))) != 1:
        raise ConfigError("comparison kernels need a stationary (single-state) instance")
    if phi.depth > 2:
        raise ConfigError("comparison kernels support potentials of depth <= 2")
    q = np.asarray(kernel, dtype=float)
    letters = fibers.alphabet(path, 0)
    if q.shape != (len(letters), len(letters)):
        raise ConfigError("comparison kernel must be square over the fiber alphabet")
    if np.any(q < 0) or np.max(np.abs(q.sum(axis=1) - 1.0)) > 1e-10:
        raise ConfigError("comparison kernel must be row-stochastic")
    pattern = np.array([
        [1.0 if q[i, j] > 0 else 0.0 for j in range(len(letters))]
        for i in range(len(letters))
    ])
    for i, a in enumerate(letters):
        for j, b in enumerate(letters):
            if q[i, j] > 0 and not fibers.admits(path, 0, a, b):
                raise ConfigError("comparison kernel charges an inadmissible transition")
    vals, vecs = np.linalg.eig(q.T)
    k = int(np.argmax(vals.real))
    pi = np.abs(vecs[:, k].real)
    pi /= pi.sum()
    entropy = -sum(
        pi[i] * q[i, j] * math.log(q[i, j])
        for i in range(len(letters)) for j in range(len(letters)) if q[i, j] > 0
    )
    if phi.depth == 1:
        integral = sum(pi[i] * phi.value(path, 0, (a,)) for i, a in enumerate(letters))
    else:
        integral = sum(
            pi[i] * q[i, j] * phi.value(path, 0, (a, b))
            for i, a in enumerate(letters) for j, b in enumerate(letters) if q[i, j] > 0
        )
    value = entropy + integral
    return {
        "kernel_value": value,
        "achieved_value": achieved,
        "pressure": pressure,
        "inequality_ok": value <= pressure + 1e-8,
    }

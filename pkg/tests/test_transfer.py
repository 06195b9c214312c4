import itertools
import math

import numpy as np
import pytest

from rtmclab.driver import DriverSystem, EventSpec, sample_path
from rtmclab.errors import ConvergenceError, InvariantViolation
from rtmclab.potentials import (
    Potential,
    constant_potential,
    distortion_constant,
    log_matrix_potential,
    table_potential,
)
from rtmclab.shifts import admissible_words, canonical_representative
from rtmclab.transfer import (
    AtomicMeasure,
    CylinderFunction,
    RpfTriple,
    dual_apply,
    eigenvalue_ratio_curve,
    gibbs_check,
    gurevich_pressure,
    normalize_potential,
    random_lipschitz,
    rpf_solve,
    transfer_apply,
    transfer_power,
)

from conftest import (
    full_shift,
    golden_mean_shift,
    stationary_system,
    two_state_iid,
)

RADIUS = 2048


@pytest.fixture(scope="module")
def full2():
    system = stationary_system()
    path = sample_path(system, radius=RADIUS, seed=1, max_radius=2 ** 16)
    return full_shift(system, 2), path


@pytest.fixture(scope="module")
def gm():
    system = stationary_system()
    path = sample_path(system, radius=RADIUS, seed=1, max_radius=2 ** 16)
    return golden_mean_shift(system), path


def positive_matrix_potential(fibers, mat, r=0.49):
    return log_matrix_potential(fibers, [np.asarray(mat, dtype=float)], r=r)


def brute_preimage_sum(phi, fibers, path, f, x_word, n):
    """Oracle: direct sum over enumerated admissible preimage words."""
    total = 0.0
    for v in admissible_words(fibers, path, f.anchor, n):
        if not fibers.admits(path, f.anchor + n - 1, v[-1], x_word[0]):
            continue
        y = canonical_representative(v + tuple(x_word), fibers, path, anchor=f.anchor)
        from rtmclab.potentials import birkhoff_sum

        total += math.exp(birkhoff_sum(phi, y, n)) * f.value_at(y.prefix(max(f.depth, n + 2)))
    return total


class TestTransferApply:
    def test_normalized_constant(self, full2):
        fibers, path = full2
        phi = constant_potential(fibers, -math.log(2))
        one = CylinderFunction.constant(fibers, path, 0, 1.0)
        out = transfer_apply(phi, one)
        assert all(v == pytest.approx(1.0, abs=1e-15) for v in out.values.values())

    def test_column_stochastic_preserves_one(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.3, 0.6], [0.7, 0.4]])
        one = CylinderFunction.constant(fibers, path, 0, 1.0)
        out = transfer_apply(phi, one)
        assert all(v == pytest.approx(1.0, abs=1e-14) for v in out.values.values())

    def test_matches_bruteforce_preimage_sum(self, full2):
        fibers, path = full2
        rng = np.random.default_rng(5)
        words2 = admissible_words(fibers, path, 0, 2)
        phi = table_potential([{w: float(rng.normal()) for w in words2}], depth=2, r=0.5)
        f = CylinderFunction.indicator(fibers, path, 0, (1,))
        out = transfer_apply(phi, f)
        for w in out.values:
            assert out.values[w] == pytest.approx(
                brute_preimage_sum(phi, fibers, path, f, w, 1), rel=1e-12
            )

    def test_linear_and_positive(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.5, 0.2], [0.5, 0.8]])
        rng = np.random.default_rng(0)
        f = random_lipschitz(fibers, path, 0, 3, rng, r=0.5)
        g = random_lipschitz(fibers, path, 0, 3, rng, r=0.5)
        combo = f.binary(g, lambda a, b: 2.0 * a - 0.5 * b)
        lhs = transfer_apply(phi, combo)
        rhs = transfer_apply(phi, f).binary(transfer_apply(phi, g),
                                            lambda a, b: 2.0 * a - 0.5 * b)
        assert lhs.sub(rhs).sup_norm() < 1e-13
        pos = f.map(abs)
        assert transfer_apply(phi, pos).inf() >= 0.0


class TestTransferPower:
    def test_identity_at_zero(self, full2):
        fibers, path = full2
        phi = constant_potential(fibers, 0.0)
        f = CylinderFunction.indicator(fibers, path, 0, (2,))
        assert transfer_power(phi, f, 0) is f

    def test_four_term_hand_sum(self, full2):
        # L^2 with phi = -log 2 applied to f(x) = x_0 on alphabet {1, 2}: each of the
        # four preimage words contributes its first letter / 4, so the result is 1.5
        fibers, path = full2
        phi = constant_potential(fibers, -math.log(2))
        f = CylinderFunction(fibers, path, 0, 1, {(1,): 1.0, (2,): 2.0})
        out = transfer_power(phi, f, 2)
        assert all(v == pytest.approx(1.5, abs=1e-14) for v in out.values.values())

    def test_iterate_equals_direct(self, gm):
        fibers, path = gm
        rng = np.random.default_rng(11)
        words2 = admissible_words(fibers, path, 0, 2)
        phi = table_potential([{w: float(rng.normal(scale=0.3)) for w in words2}],
                              depth=2, r=0.5)
        f = random_lipschitz(fibers, path, 0, 3, rng, r=0.5)
        for n in (1, 2, 3, 4):
            a = transfer_power(phi, f, n, method="iterate")
            b = transfer_power(phi, f, n, method="direct")
            assert a.sub(b).sup_norm() < 1e-12

    def test_sup_norm_contraction_when_normalized(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.4, 0.1], [0.6, 0.9]])
        rng = np.random.default_rng(2)
        f = random_lipschitz(fibers, path, 0, 3, rng, r=0.49)
        sup0 = f.sup_norm()
        g = f
        for n in range(1, 6):
            g = transfer_apply(phi, g)
            assert g.sup_norm() <= sup0 + 1e-12

    def test_hoelder_constant_bound(self, full2):
        # image Hoelder constant <= kappa_f r^n + sup|f| (B - 1) for normalized operators
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.4, 0.1], [0.6, 0.9]], r=0.5)
        rng = np.random.default_rng(9)
        for n in (1, 2, 3):
            f = random_lipschitz(fibers, path, 0, 4, rng, r=0.5)
            g = transfer_power(phi, f, n)
            b = distortion_constant(phi, path, n).value
            kappa_f = max(
                (v / 0.5 ** k)
                for k in range(n + 1, f.depth)
                for v in [spread_at(f, k)]
            ) if f.depth > n + 1 else 0.0
            bound = kappa_f * 0.5 ** n + f.sup_norm() * (b - 1.0)
            assert spread_at(g, 1) / 0.5 <= bound + 1e-12


def spread_at(f, k):
    groups = {}
    for w, v in f.values.items():
        groups.setdefault(w[:k], []).append(v)
    return max(max(g) - min(g) for g in groups.values())


class TestDualApply:
    def test_mass_preserved_when_normalized(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.25, 0.5], [0.75, 0.5]])
        mu = AtomicMeasure.uniform(fibers, path, 3, 2)
        out = dual_apply(phi, mu, 2)
        assert out.mass() == pytest.approx(1.0, abs=1e-12)

    def test_dirac_two_preimages(self, full2):
        fibers, path = full2
        phi = constant_potential(fibers, -math.log(2))
        mu = AtomicMeasure.dirac(fibers, path, 1, (1, 2))
        out = dual_apply(phi, mu, 1)
        assert set(out.weights) == {(1, 1, 2), (2, 1, 2)}
        assert all(v == pytest.approx(0.5, abs=1e-15) for v in out.weights.values())

    def test_adjoint_identity(self, gm):
        # both sides computed independently on random functions
        fibers, path = gm
        rng = np.random.default_rng(3)
        words2 = admissible_words(fibers, path, 0, 2)
        phi = table_potential([{w: float(rng.normal(scale=0.5)) for w in words2}],
                              depth=2, r=0.5)
        n = 2
        mu = AtomicMeasure.random(fibers, path, n, 2, rng)
        pulled = dual_apply(phi, mu, n)
        for _ in range(20):
            f = random_lipschitz(fibers, path, 0, 3, rng, r=0.5)
            lhs = pulled.integrate(f)
            rhs = mu.integrate(transfer_power(phi, f, n))
            assert lhs == pytest.approx(rhs, abs=1e-12, rel=1e-12)

    def test_adjoint_exact_on_cylinder_indicators(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.3, 0.2], [0.7, 0.8]])
        mu = AtomicMeasure.uniform(fibers, path, 2, 2)
        pulled = dual_apply(phi, mu, 2)
        for word in admissible_words(fibers, path, 0, 4):
            ind = CylinderFunction.indicator(fibers, path, 0, word)
            lhs = pulled.integrate(ind)
            rhs = mu.integrate(transfer_power(phi, ind, 2))
            assert lhs == pytest.approx(rhs, abs=1e-13)


def eigen_oracle(mat):
    """Dense eigensolver oracle: Perron root, left and right positive eigenvectors."""
    mat = np.asarray(mat, dtype=float)
    vals, right = np.linalg.eig(mat)
    k = int(np.argmax(vals.real))
    lam = float(vals[k].real)
    r = np.abs(right[:, k].real)
    vals_l, left = np.linalg.eig(mat.T)
    kl = int(np.argmax(vals_l.real))
    l = np.abs(left[:, kl].real)
    return lam, l, r


class TestRpfSolve:
    def test_iid_product_case(self):
        system = two_state_iid(p=0.4, seed=8)
        path = sample_path(system, radius=RADIUS, seed=8, max_radius=2 ** 16)
        fibers = full_shift(system, 2)
        # phi(x) = log p_s(x0), already normalized: lambda = 1, h = 1, mu = product
        tables = ({(1,): math.log(0.3), (2,): math.log(0.7)},
                  {(1,): math.log(0.6), (2,): math.log(0.4)})
        phi = Potential(depth=1, r=0.5, index=1, tables=tables, kappa=(0.0, 0.0))
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=60, window=(0, 6))
        for j in range(0, 6):
            assert triple.lam(j) == pytest.approx(1.0, abs=1e-10)
            assert triple.h[j].sup() == pytest.approx(1.0, abs=1e-9)
            assert triple.h[j].inf() == pytest.approx(1.0, abs=1e-9)
        p1 = 0.3 if path.state(2) == 0 else 0.6
        assert triple.mu[2].marginal(1)[(1,)] == pytest.approx(p1, abs=1e-9)

    def test_stationary_matrix_matches_eigen_oracle(self, full2):
        fibers, path = full2
        mat = np.array([[0.6, 0.3], [0.4, 0.7]]) * 1.7  # positive, not normalized
        phi = positive_matrix_potential(fibers, mat)
        triple = rpf_solve(phi, fibers, path, depth=5, horizon=80, window=(0, 4))
        lam, left, right = eigen_oracle(mat)
        assert triple.lam(0) == pytest.approx(lam, rel=1e-10)
        # h is the left eigenvector (as a letter function), mu the right one
        h_vec = np.array([triple.h[0].values[(a,) + tail]
                          for a, tail in [(1, ()), (2, ())]]) \
            if triple.h[0].depth == 1 else None
        h_vals = np.array([triple.h[0].value_at((1,)), triple.h[0].value_at((2,))])
        assert h_vals[0] / h_vals[1] == pytest.approx(left[0] / left[1], rel=1e-9)
        m1 = triple.mu[0].marginal(1)
        mu_vals = np.array([m1[(1,)], m1[(2,)]])
        assert mu_vals[0] / mu_vals[1] == pytest.approx(right[0] / right[1], rel=1e-9)

    def test_residual_postcondition(self, gm):
        fibers, path = gm
        phi = positive_matrix_potential(fibers, [[0.5, 0.8], [1.2, 0.0]])
        triple = rpf_solve(phi, fibers, path, depth=5, horizon=80, window=(0, 4))
        for j in range(0, 4):
            assert triple.residual(phi, j) <= 1e-8

    def test_nonconvergence_reported(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.6, 0.3], [0.4, 0.7]])
        with pytest.raises(ConvergenceError) as exc:
            rpf_solve(phi, fibers, path, depth=4, horizon=2, window=(0, 2), tol=1e-14)
        assert hasattr(exc.value, "diagnostics")

    def test_json_roundtrip(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.6, 0.3], [0.4, 0.7]])
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=60, window=(0, 3))
        back = RpfTriple.from_json(triple.to_json(), fibers, path)
        assert back.lam(1) == pytest.approx(triple.lam(1), abs=0)
        assert back.h[2].values == triple.h[2].values
        back.check(phi)


class TestNormalizePotential:
    def test_fixed_point_when_already_normalized(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.25, 0.5], [0.75, 0.5]])
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=60, window=(0, 4))
        tilde = normalize_potential(phi, triple)
        for j in range(0, 3):
            for w in tilde.fiber_tables[j]:
                assert tilde.value(path, j, w) == pytest.approx(
                    phi.value(path, j, w), abs=1e-9
                )

    def test_matrix_normalization_formula(self, full2):
        # entries h_i A_ij / (lambda h_j) after normalization
        fibers, path = full2
        mat = np.array([[0.6, 0.3], [0.4, 0.7]]) * 2.3
        phi = positive_matrix_potential(fibers, mat)
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=80, window=(0, 4))
        tilde = normalize_potential(phi, triple)
        lam = triple.lam(0)
        h = [triple.h[0].value_at((1,)), triple.h[0].value_at((2,))]
        for (i, j), val in [((1, 1), None), ((1, 2), None), ((2, 1), None), ((2, 2), None)]:
            expected = mat[i - 1, j - 1] * h[i - 1] / (lam * h[j - 1])
            assert math.exp(tilde.value(path, 0, (i, j))) == pytest.approx(expected, rel=1e-9)

    def test_normalized_identity_against_unnormalized(self, full2):
        # Lambda_n h(shift) Ltilde^n(f) = L^n(f h), both sides independent
        fibers, path = full2
        mat = np.array([[0.6, 0.3], [0.4, 0.7]]) * 1.4
        phi = positive_matrix_potential(fibers, mat)
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=80, window=(0, 6))
        tilde = normalize_potential(phi, triple)
        rng = np.random.default_rng(4)
        f = random_lipschitz(fibers, path, 0, 3, rng, r=0.49)
        n = 3
        lhs = transfer_power(tilde, f, n)
        lhs = lhs.mul(triple.h[n]).shift_scale(math.exp(triple.log_cocycle(0, n)))
        rhs = transfer_power(phi, f.mul(triple.h[0]), n)
        assert lhs.sub(rhs).sup_norm() <= 1e-10 * max(1.0, rhs.sup_norm())


class TestPressure:
    def test_full_shift_log_n(self):
        for n_letters, horizon in [(2, 200), (3, 120)]:
            system = stationary_system()
            path = sample_path(system, radius=1024, seed=2, max_radius=2 ** 16)
            fibers = full_shift(system, n_letters)
            phi = constant_potential(fibers, 0.0)
            est = gurevich_pressure(phi, fibers, path, a=1, horizon=horizon)
            assert est.estimate == pytest.approx(math.log(n_letters), abs=1e-9)

    def test_golden_mean_log_golden_ratio(self, gm):
        fibers, path = gm
        phi = constant_potential(fibers, 0.0)
        est = gurevich_pressure(phi, fibers, path, a=1, horizon=200)
        golden = (1 + math.sqrt(5)) / 2
        oracle = eigen_oracle([[1.0, 1.0], [1.0, 0.0]])[0]
        assert oracle == pytest.approx(golden, rel=1e-12)
        assert est.estimate == pytest.approx(math.log(golden), abs=1e-6)

    def test_normalized_pressure_zero(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.25, 0.5], [0.75, 0.5]])
        est = gurevich_pressure(phi, fibers, path, a=1, horizon=150)
        assert abs(est.estimate) < 1e-3

    def test_lambda_route_comparison(self, full2):
        fibers, path = full2
        mat = np.array([[0.6, 0.3], [0.4, 0.7]]) * 1.6
        phi = positive_matrix_potential(fibers, mat)
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=80, window=(0, 30))
        est = gurevich_pressure(phi, fibers, path, a=1, horizon=100, triple=triple)
        lam = eigen_oracle(mat)[0]
        assert est.estimate == pytest.approx(math.log(lam), abs=1e-6)
        assert est.lambda_route == pytest.approx(math.log(lam), abs=1e-8)


class TestGibbs:
    def test_product_measure_ratio_one(self):
        system = two_state_iid(p=0.5, seed=12)
        path = sample_path(system, radius=RADIUS, seed=12, max_radius=2 ** 16)
        fibers = full_shift(system, 2)
        tables = ({(1,): math.log(0.3), (2,): math.log(0.7)},
                  {(1,): math.log(0.6), (2,): math.log(0.4)})
        phi = Potential(depth=1, r=0.5, index=1, tables=tables, kappa=(0.0, 0.0))
        triple = rpf_solve(phi, fibers, path, depth=5, horizon=60, window=(0, 8))
        report = gibbs_check(triple, phi, depth=4, samples=300, seed=1)
        assert report.ok
        for _, _, ratio, _, _ in report.rows:
            assert ratio == pytest.approx(1.0, abs=1e-8)

    def test_markov_band(self, full2):
        fibers, path = full2
        phi = positive_matrix_potential(fibers, [[0.3, 0.6], [0.7, 0.4]])
        triple = rpf_solve(phi, fibers, path, depth=6, horizon=80, window=(0, 10))
        report = gibbs_check(triple, phi, depth=5, samples=500, seed=3)
        assert report.ok
        assert all(math.isfinite(r[2]) and r[2] > 0 for r in report.rows)

    def test_markov_ratio_matches_closed_form(self, full2):
        # oracle: conformal cylinder masses of the 2-letter chain in closed form
        fibers, path = full2
        mat = np.array([[0.3, 0.6], [0.7, 0.4]])
        phi = positive_matrix_potential(fibers, mat)
        triple = rpf_solve(phi, fibers, path, depth=6, horizon=120, window=(0, 10))
        mu_vec = np.linalg.solve(
            np.array([[0.3 - 1.0, 0.6], [1.0, 1.0]]), np.array([0.0, 1.0])
        )  # A mu = mu, sum = 1
        for word in [(1,), (2,), (1, 2), (2, 1, 1)]:
            k = len(word)
            # mass([a]) = e^{S_{k-1}} * sum_c p[a_last, c] mu_c
            tail = sum(mat[word[-1] - 1, c - 1] * mu_vec[c - 1] for c in (1, 2)
                       if mat[word[-1] - 1, c - 1] > 0)
            s = sum(math.log(mat[word[i] - 1, word[i + 1] - 1]) for i in range(k - 1))
            expected = math.exp(s) * tail
            assert triple.mu[0].cylinder_mass(word) == pytest.approx(expected, abs=1e-10)


class TestRatioConvergence:
    def test_ratio_gap_decays(self, full2):
        fibers, path = full2
        mat = np.array([[0.9, 0.2], [0.3, 0.8]])  # column sums differ, decay visible
        phi = positive_matrix_potential(fibers, mat)
        triple = rpf_solve(phi, fibers, path, depth=4, horizon=80, window=(0, 4))
        curve = eigenvalue_ratio_curve(phi, fibers, path, horizon=45, triple=triple)
        gaps = [g for _, g in curve]
        assert gaps[0] > 1e-4  # genuinely not converged at the start
        assert gaps[-1] < 1e-10
        assert gaps[-1] <= gaps[2]

import math

import numpy as np
import pytest

from rtmclab.nonstationary import NonstationarySpec, invariant_sequence_check


def uniform_full_shift_entry(n_letters):
    letters = list(range(1, n_letters + 1))
    table = {}
    for a in letters:
        for b in letters:
            table[(a, b)] = -math.log(n_letters)
    return letters, [[1] * n_letters for _ in range(n_letters)], table


def column_stochastic_entry(mat):
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    letters = list(range(1, n + 1))
    pattern = [[1 if mat[i, j] > 0 else 0 for j in range(n)] for i in range(n)]
    table = {
        (i + 1, j + 1): math.log(mat[i, j])
        for i in range(n) for j in range(n) if mat[i, j] > 0
    }
    return letters, pattern, table


class TestInvariantSequence:
    def test_stationary_embedding(self):
        letters, pattern, table = column_stochastic_entry([[0.3, 0.6], [0.7, 0.4]])
        spec = NonstationarySpec(alphabets=[letters], matrices=[pattern],
                                 tables=[table], depth=2, r=0.2)
        report = invariant_sequence_check(spec, horizon=60, depth=5, checkpoints=4)
        assert report.ok
        assert report.lambda_gap <= 1e-10
        assert report.mu_two_start_gap <= 1e-8
        for j, p, gap, bound in report.checkpoints:
            assert gap <= bound + 1e-10

    def test_alternating_full_shifts_uniform(self):
        e2 = uniform_full_shift_entry(2)
        e3 = uniform_full_shift_entry(3)
        # both entries live over the union universe {1, 2, 3}
        m2 = [[1, 1, 0], [1, 1, 0]]
        m3 = [[1, 1, 1], [1, 1, 1], [1, 1, 1]]
        # alternating: 2-letter fiber feeds the 3-letter fiber and back; the
        # operator sums over current-fiber preimage letters, hence -log|W_k|
        t2 = {(a, b): -math.log(2) for a in (1, 2) for b in (1, 2, 3)}
        t3 = {(a, b): -math.log(3) for a in (1, 2, 3) for b in (1, 2)}
        m2 = [[1, 1, 1], [1, 1, 1]]
        spec = NonstationarySpec(alphabets=[[1, 2], [1, 2, 3]],
                                 matrices=[m2, m3[:3]], tables=[t2, t3],
                                 depth=2, r=0.2)
        report = invariant_sequence_check(spec, horizon=40, depth=4, checkpoints=3)
        assert report.ok
        # uniform potentials keep the pulled-back measures uniform, gap exactly 0
        for j, p, gap, bound in report.checkpoints:
            assert gap <= bound

    def test_random_period_ten(self):
        rng = np.random.default_rng(12)
        alphabets, matrices, tables = [], [], []
        for _ in range(10):
            raw = rng.uniform(0.2, 1.0, size=(2, 2))
            mat = raw / raw.sum(axis=0, keepdims=True)  # column-stochastic
            letters, pattern, table = column_stochastic_entry(mat)
            alphabets.append(letters)
            matrices.append(pattern)
            tables.append(table)
        spec = NonstationarySpec(alphabets=alphabets, matrices=matrices,
                                 tables=tables, depth=2, r=0.2)
        report = invariant_sequence_check(spec, horizon=60, depth=5, checkpoints=4)
        assert report.ok
        gaps = [g for _, _, g, _ in report.checkpoints]
        assert all(b <= a + 1e-14 for a, b in zip(gaps, gaps[1:]))
        for j, p, gap, bound in report.checkpoints:
            assert gap <= bound + 1e-10

    def test_unnormalized_clause_reported(self):
        letters, pattern, table = column_stochastic_entry([[0.3, 0.6], [0.7, 0.4]])
        bad = {k: v + 0.1 for k, v in table.items()}
        spec = NonstationarySpec(alphabets=[letters], matrices=[pattern],
                                 tables=[bad], depth=2, r=0.2)
        report = invariant_sequence_check(spec, horizon=20)
        assert not report.ok
        assert any("not normalized" in msg for msg in report.precondition_failures)

    def test_zero_column_clause_reported(self):
        # letter 2 unreachable: column positivity clause fires
        letters = [1, 2]
        pattern = [[1, 0], [1, 0]]
        table = {(1, 1): 0.0, (2, 1): 0.0}
        spec = NonstationarySpec(alphabets=[letters], matrices=[pattern],
                                 tables=[table], depth=2, r=0.2)
        report = invariant_sequence_check(spec, horizon=20)
        assert not report.ok
        assert any("no predecessor" in msg for msg in report.precondition_failures)

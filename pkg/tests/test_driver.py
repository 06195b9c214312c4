import math

import numpy as np
import pytest

from rtmclab.driver import (
    DriverSystem,
    EventSpec,
    event_frequency,
    return_times,
    sample_path,
    shift_path,
)
from rtmclab.errors import ConfigError, InsufficientReturns, WindowExhausted


def iid(weights, seed=0, labels=None):
    labels = labels or tuple(f"s{i}" for i in range(len(weights)))
    return DriverSystem(states=tuple(labels), kind="iid", weights=np.array(weights), seed=seed)


def markov(matrix, seed=0, labels=None):
    n = len(matrix)
    labels = labels or tuple(f"s{i}" for i in range(n))
    return DriverSystem(states=tuple(labels), kind="markov", matrix=np.array(matrix), seed=seed)


class TestSamplePath:
    def test_single_state_constant_window(self):
        path = sample_path(iid([1.0]), radius=3, seed=5)
        assert path.window() == (0,) * 7

    def test_fair_coin_frequency(self):
        # law of large numbers check
        path = sample_path(iid([0.5, 0.5], seed=123), radius=10_000)
        freq0 = sum(path.state(i) == 0 for i in range(-10_000, 10_001)) / 20_001
        assert 0.47 <= freq0 <= 0.53

    def test_same_seed_same_window(self):
        sys = iid([0.3, 0.7])
        a = sample_path(sys, radius=50, seed=9)
        b = sample_path(sys, radius=50, seed=9)
        assert a.window() == b.window()

    def test_extension_restriction_consistent(self):
        sys = markov([[0.9, 0.1], [0.2, 0.8]])
        small = sample_path(sys, radius=10, seed=4)
        big = sample_path(sys, radius=200, seed=4)
        assert small.window() == big.states(-10, 10)

    def test_radius_validation(self):
        with pytest.raises(ConfigError):
            sample_path(iid([1.0]), radius=0)

    def test_max_radius_enforced(self):
        path = sample_path(iid([0.5, 0.5]), radius=4, seed=1, max_radius=16)
        with pytest.raises(WindowExhausted):
            path.state(17)

    def test_markov_transitions_positive_probability(self):
        sys = markov([[0.0, 1.0], [0.5, 0.5]])
        path = sample_path(sys, radius=300, seed=2)
        m = sys.matrix
        for i in range(-300, 300):
            assert m[path.state(i), path.state(i + 1)] > 0

    def test_law_validation(self):
        with pytest.raises(ConfigError):
            iid([0.5, 0.6])
        with pytest.raises(ConfigError):
            DriverSystem(states=(), kind="iid", weights=np.array([]))
        with pytest.raises(ConfigError):
            markov([[1.0, 0.0], [0.0, 1.0]])  # reducible


class TestShiftPath:
    def test_zero_shift_identity(self):
        p = sample_path(iid([0.5, 0.5]), radius=8, seed=3)
        q = shift_path(p, 0)
        assert q.window() == p.window()

    def test_shift_inverse(self):
        p = sample_path(markov([[0.5, 0.5], [0.3, 0.7]]), radius=20, seed=7)
        q = shift_path(shift_path(p, 4), -4)
        assert q.states(-20, 20) == p.states(-20, 20)

    def test_shift_matches_resample(self):
        sys = iid([0.25, 0.75], seed=11)
        p = sample_path(sys, radius=10)
        q = shift_path(p, 5)
        fresh = sample_path(sys, radius=30)
        for j in range(-15, 16):
            assert q.state(j) == p.state(j + 5) == fresh.state(j + 5)


class TestReturnTimes:
    def test_always_true(self):
        p = sample_path(iid([1.0]), radius=10, seed=0)
        assert return_times(p, EventSpec.always(), count=3) == (1, 2, 3)

    def test_alternating_parity(self):
        sys = markov([[0.0, 1.0], [1.0, 0.0]])
        # pick a seed whose time-0 state is 1 so returns to state 0 are the odd times
        seed = next(s for s in range(50) if sample_path(sys, 1, seed=s).state(0) == 1)
        p = sample_path(sys, radius=10, seed=seed)
        ev = EventSpec.state_in(sys, ["s0"])
        assert return_times(p, ev, count=3) == (1, 3, 5)

    def test_backward_direction(self):
        p = sample_path(iid([1.0]), radius=10, seed=0)
        assert return_times(p, EventSpec.always(), count=2, direction="backward") == (1, 2)

    def test_mean_gap_matches_geometric_law(self):
        # Monte Carlo against the geometric law: mean gap ~ 1/p within 10%
        prob = 0.3
        sys = iid([prob, 1 - prob], seed=77)
        p = sample_path(sys, radius=1, max_radius=40_000)
        ev = EventSpec.state_in(sys, ["s0"])
        times = return_times(p, ev, count=1000)
        mean_gap = times[-1] / len(times)
        assert abs(mean_gap - 1 / prob) / (1 / prob) < 0.10

    def test_insufficient_returns(self):
        sys = iid([0.5, 0.5], seed=5)
        p = sample_path(sys, radius=4, max_radius=32)
        ev = EventSpec(radius=0, fn=lambda w: False, name="never")
        with pytest.raises(InsufficientReturns):
            return_times(p, ev, count=1)

    def test_shift_commutes_with_returns(self):
        sys = iid([0.4, 0.6], seed=13)
        p = sample_path(sys, radius=1, max_radius=10_000)
        ev = EventSpec.state_in(sys, ["s0"])
        base = return_times(p, ev, count=40)
        shifted = return_times(shift_path(p, 1), ev, count=30)
        expected = tuple(t - 1 for t in base if t >= 2)[:30]
        assert shifted == expected


class TestStationarity:
    def test_markov_frequencies_within_three_sigma(self):
        m = np.array([[0.9, 0.1], [0.2, 0.8]])
        sys = markov(m, seed=21)
        pi = sys.stationary()
        assert np.allclose(pi, [2 / 3, 1 / 3], atol=1e-10)
        span = 100_000
        p = sample_path(sys, radius=1, max_radius=span + 10)
        freq = event_frequency(p, EventSpec.state_in(sys, ["s0"]), span)
        # inflate the i.i.d. sigma by the chain's integrated autocorrelation factor
        rho = np.sort(np.linalg.eigvals(m).real)[0]
        sigma = math.sqrt(pi[0] * (1 - pi[0]) / span) * math.sqrt((1 + rho) / (1 - rho))
        assert abs(freq - pi[0]) <= 3 * sigma

    def test_event_frequency_probe(self):
        sys = iid([0.2, 0.8], seed=3)
        p = sample_path(sys, radius=1, max_radius=60_000)
        f = event_frequency(p, EventSpec.state_in(sys, ["s0"]), 50_000)
        assert abs(f - 0.2) < 0.02

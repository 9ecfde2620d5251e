"""Spike-count stopping rule and violation values."""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnhpo import earlystop as es
from snnhpo.earlystop import EXCITATORY, INHIBITORY, StopCriterion
from snnhpo.exceptions import ValidationError


def _counter(S, counts, criteria):
    c = es.new_outcome(S, criteria)
    c.counts.update(counts)
    return c


def brute_stop_index(sums, alpha, beta):
    """Offline scan: first prefix length whose silent count exceeds beta*S."""
    S = len(sums)
    silent = 0
    for i, s in enumerate(sums, 1):
        silent += s < alpha
        if Fraction(silent, S) > Fraction(beta):
            return i
    return S


class TestCriterion:
    def test_rejects_negative_alpha(self):
        with pytest.raises(ValidationError):
            StopCriterion(EXCITATORY, -1, 0.1)

    def test_rejects_beta_outside_unit(self):
        with pytest.raises(ValidationError):
            StopCriterion(EXCITATORY, 1, 1.5)

    def test_exp1_defaults(self):
        crit = es.exp1_criteria()
        assert [(c.layer, c.alpha, c.beta) for c in crit] == [(EXCITATORY, 5, 0.1), (INHIBITORY, 1, 0.1)]


class TestObserve:
    crit = [StopCriterion(EXCITATORY, 5, 0.1)]

    def test_boundary_is_strict(self):
        c = es.observe(es.new_outcome(10, self.crit), EXCITATORY, 5, self.crit)
        assert c.counts[EXCITATORY] == 0

    def test_below_alpha_counts(self):
        c = es.observe(es.new_outcome(10, self.crit), EXCITATORY, 4, self.crit)
        assert c.counts[EXCITATORY] == 1

    def test_alpha_zero_never_counts(self):
        crit = [StopCriterion(EXCITATORY, 0, 0.1)]
        c = es.new_outcome(10, crit)
        for s in range(10):
            es.observe(c, EXCITATORY, s, crit)
        assert c.counts[EXCITATORY] == 0

    def test_unknown_layer(self):
        with pytest.raises(ValidationError):
            es.observe(es.new_outcome(10, self.crit), "readout", 0, self.crit)

    def test_samples_processed_once_per_sample(self):
        crit = es.exp1_criteria()
        c = es.new_outcome(10, crit)
        es.observe_sample(c, {EXCITATORY: 0, INHIBITORY: 0}, crit)
        assert c.samples_processed == 1
        assert c.counts == {EXCITATORY: 1, INHIBITORY: 1}


class TestShouldStop:
    crit = [StopCriterion(EXCITATORY, 1, 0.2)]

    def test_boundary_inclusive(self):
        assert not es.should_stop(_counter(10, {EXCITATORY: 2}, self.crit), self.crit)

    def test_exceeds(self):
        assert es.should_stop(_counter(10, {EXCITATORY: 3}, self.crit), self.crit)

    def test_all_silent_stream_halts_on_third(self):
        assert es.stop_index([0] * 10, 1, 0.2) == 3

    def test_beta_one_never_stops(self):
        crit = [StopCriterion(EXCITATORY, 1, 1.0)]
        assert not es.should_stop(_counter(10, {EXCITATORY: 10}, crit), crit)


class TestViolation:
    def test_feasible_zero(self):
        crit = es.exp1_criteria()
        assert es.violation(_counter(10, {EXCITATORY: 1, INHIBITORY: 0}, crit), crit) == [0.0, 0.0]

    def test_single_excess(self):
        crit = [StopCriterion(EXCITATORY, 5, 0.1)]
        assert es.violation(_counter(10, {EXCITATORY: 5}, crit), crit) == [pytest.approx(0.4, abs=0)]

    def test_sum_of_two(self):
        crit = [StopCriterion(EXCITATORY, 5, 0.1), StopCriterion(INHIBITORY, 1, 0.15)]
        c = _counter(20, {EXCITATORY: 10, INHIBITORY: 4}, crit)
        v = es.violation(c, crit)
        assert v == [pytest.approx(0.4), pytest.approx(0.05)]
        assert es.violation_sum(c, crit) == pytest.approx(0.45)

    def test_new_epoch_resets_counts(self):
        crit = es.exp1_criteria()
        c = _counter(10, {EXCITATORY: 3, INHIBITORY: 2}, crit)
        es.new_epoch(c)
        assert c.counts == {EXCITATORY: 0, INHIBITORY: 0}


class TestProperties:
    @settings(max_examples=300, deadline=None)
    @given(sums=st.lists(st.integers(0, 8), min_size=1, max_size=60), alpha=st.integers(0, 8),
           beta=st.floats(0.0, 1.0))
    def test_streaming_matches_offline(self, sums, alpha, beta):
        assert es.stop_index(sums, alpha, beta) == brute_stop_index(sums, alpha, beta)

    @settings(max_examples=300, deadline=None)
    @given(S=st.integers(1, 500), data=st.data(), beta=st.floats(0.0, 1.0))
    def test_bounds_and_trip_equivalence(self, S, data, beta):
        count = data.draw(st.integers(0, S))
        crit = [StopCriterion(EXCITATORY, 1, beta)]
        c = _counter(S, {EXCITATORY: count}, crit)
        (v,) = es.violation(c, crit)
        assert 0.0 <= v <= 1.0 - beta + 1e-15
        assert (v > 0) == es.should_stop(c, crit)

    @settings(max_examples=200, deadline=None)
    @given(S=st.integers(1, 200), data=st.data(), b1=st.floats(0.0, 1.0), b2=st.floats(0.0, 1.0))
    def test_monotone(self, S, data, b1, b2):
        k1 = data.draw(st.integers(0, S))
        k2 = data.draw(st.integers(k1, S))
        lo, hi = sorted((b1, b2))

        def v(k, b):
            crit = [StopCriterion(EXCITATORY, 1, b)]
            return es.violation(_counter(S, {EXCITATORY: k}, crit), crit)[0]

        assert v(k1, lo) <= v(k2, lo)
        assert v(k1, hi) <= v(k1, lo)

    def test_sum_equals_entries(self):
        rng = np.random.default_rng(0)
        crit = [StopCriterion(EXCITATORY, 1, 0.1), StopCriterion(INHIBITORY, 1, 0.3)]
        for _ in range(500):
            S = int(rng.integers(1, 100))
            c = _counter(S, {EXCITATORY: int(rng.integers(0, S + 1)), INHIBITORY: int(rng.integers(0, S + 1))}, crit)
            assert es.violation_sum(c, crit) == float(sum(es.violation(c, crit)))

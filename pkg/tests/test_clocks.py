"""Clock hardware model: counter reads, interrupt regimes, monitor windows."""
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from triadsim.clocks import (AexSchedule, DEFAULT_TSC_FREQUENCY, MonitorCounter,
                             TscModel, exact_fraction, honest_window_ns,
                             observed_count, window_verdict)
from triadsim.engine import NS_PER_S


# -- tick counter -------------------------------------------------------------

def test_read_at_default_frequency():
    tsc = TscModel()
    assert tsc.read(NS_PER_S) == 2_899_999_000
    assert tsc.read(0) == 0


def test_read_returns_offset_at_time_zero():
    assert TscModel(offset=17).read(0) == 17


def test_scaled_read():
    # 1.1 x 2.9 GHz over one second
    tsc = TscModel(frequency=2_900_000_000, scale=Fraction(11, 10))
    assert tsc.read(NS_PER_S) == 3_190_000_000


def test_scale_is_exact_decimal():
    tsc = TscModel(scale=1.1)
    assert tsc.scale == Fraction(11, 10)


def test_invalid_model_rejected():
    with pytest.raises(ValueError):
        TscModel(frequency=0)
    with pytest.raises(ValueError):
        TscModel(scale=0)
    with pytest.raises(ValueError):
        TscModel(scale=-2)
    with pytest.raises(ValueError):
        TscModel().read(-1)


@given(st.integers(min_value=0, max_value=10**12),
       st.integers(min_value=0, max_value=10**9),
       st.fractions(min_value=Fraction(1, 10), max_value=Fraction(10)))
def test_read_is_non_decreasing(t, gap, scale):
    tsc = TscModel(frequency=2_899_999_000, scale=scale)
    assert tsc.read(t + gap) >= tsc.read(t)


@given(st.integers(min_value=1, max_value=10**9),
       st.integers(min_value=0, max_value=10**10))
def test_duration_for_ticks_is_minimal_and_sufficient(ticks, t0):
    tsc = TscModel(frequency=2_899_999_000)
    d = tsc.duration_for_ticks(ticks)
    assert tsc.read(t0 + d) - tsc.read(t0) >= ticks
    # one nanosecond less would not cover the requested advance
    assert tsc.frequency * (d - 1) < ticks * NS_PER_S <= tsc.frequency * d


def test_duration_for_ticks_respects_scale():
    tsc = TscModel(frequency=2_000_000_000, scale=Fraction(2))
    # 4 ticks per ns once scaled
    assert tsc.duration_for_ticks(8) == 2
    assert tsc.duration_for_ticks(9) == 3


def test_exact_fraction_conversions():
    assert exact_fraction(2) == Fraction(2)
    assert exact_fraction("3/7") == Fraction(3, 7)
    assert exact_fraction(0.9) == Fraction(9, 10)
    assert exact_fraction(Fraction(5, 4)) == Fraction(5, 4)
    with pytest.raises(TypeError):
        exact_fraction(None)


# -- interrupt schedules --------------------------------------------------------

def test_triad_like_atom_frequencies():
    """Each 10/532/1590 ms atom lands close to a third over many draws."""
    schedule = AexSchedule.triad_like()
    rng = random.Random(1234)
    n = 100_000
    counts = {}
    for _ in range(n):
        d = schedule.next_delay(rng)
        counts[d] = counts.get(d, 0) + 1
    assert set(counts) == {10_000_000, 532_000_000, 1_590_000_000}
    for c in counts.values():
        assert abs(c / n - 1 / 3) < 0.01


def test_low_aex_is_constant_period():
    schedule = AexSchedule.low_aex()
    rng = random.Random(0)
    assert schedule.next_delay(rng) == 324 * NS_PER_S
    assert schedule.next_delay(rng) == 324 * NS_PER_S


def test_none_regime_never_fires():
    assert AexSchedule.none().next_delay(random.Random(0)) is None


def test_custom_regime_uses_given_distribution():
    from triadsim.engine import Constant
    schedule = AexSchedule.custom(Constant(77), correlated_broadcast=0.5)
    assert schedule.next_delay(random.Random(0)) == 77
    assert schedule.correlated_broadcast == 0.5


# -- monitor -----------------------------------------------------------------

def test_counter_validation():
    with pytest.raises(ValueError):
        MonitorCounter(noise_std=20.0, tolerance=50.0)  # tolerance < 3 sigma
    with pytest.raises(ValueError):
        MonitorCounter(outlier_probability=1.5)


def test_honest_window_duration():
    # 15e6 ticks at 2.9 GHz is about 5.17 ms
    assert honest_window_ns(MonitorCounter(), 2_900_000_000) == 5_172_414


def test_honest_window_is_ok():
    counter = MonitorCounter()
    rng = random.Random(7)
    base = honest_window_ns(counter, DEFAULT_TSC_FREQUENCY)
    observed = observed_count(counter, base, base, rng)
    assert window_verdict(counter, observed) == "ok"
    assert abs(observed - counter.expected_count) < 15


def test_one_percent_scale_is_a_discrepancy():
    """Counter running 1% fast shortens the window; count drops by ~6260."""
    counter = MonitorCounter(noise_std=0.0, tolerance=50.0)
    base = honest_window_ns(counter, DEFAULT_TSC_FREQUENCY)
    actual = TscModel(frequency=DEFAULT_TSC_FREQUENCY,
                      scale=Fraction(101, 100)).duration_for_ticks(counter.window_ticks)
    observed = observed_count(counter, actual, base, random.Random(0))
    assert abs(observed - 625_922.77) < 2
    assert abs(observed - counter.expected_count) > 6_000
    assert window_verdict(counter, observed) == "discrepancy"


def test_offset_jump_halves_the_window():
    counter = MonitorCounter(noise_std=0.0, tolerance=50.0)
    base = honest_window_ns(counter, DEFAULT_TSC_FREQUENCY)
    observed = observed_count(counter, base // 2, base, random.Random(0))
    assert abs(observed - counter.expected_count / 2) < 2
    assert window_verdict(counter, observed) == "discrepancy"


def test_scale_skew_detected_within_one_window():
    """Skews of at least twice tolerance/expected flip the verdict reliably."""
    counter = MonitorCounter()
    base = honest_window_ns(counter, DEFAULT_TSC_FREQUENCY)
    rel = 2 * counter.tolerance / counter.expected_count
    rng = random.Random(99)
    for k in range(1, 11):
        for sign in (1, -1):
            scale = exact_fraction(1) + sign * Fraction(k) * Fraction(rel).limit_denominator(10**9)
            actual = TscModel(frequency=DEFAULT_TSC_FREQUENCY,
                              scale=scale).duration_for_ticks(counter.window_ticks)
            observed = observed_count(counter, actual, base, rng)
            assert window_verdict(counter, observed) == "discrepancy", (k, sign)


def test_false_discrepancy_rate_below_one_percent():
    counter = MonitorCounter()
    base = honest_window_ns(counter, DEFAULT_TSC_FREQUENCY)
    rng = random.Random(4242)
    false = sum(
        window_verdict(counter, observed_count(counter, base, base, rng)) == "discrepancy"
        for _ in range(10_000))
    assert false / 10_000 < 0.01


def test_outlier_tail_only_deepens_counts():
    counter = MonitorCounter(outlier_probability=1.0, outlier_scale=40.0)
    base = honest_window_ns(counter, DEFAULT_TSC_FREQUENCY)
    rng = random.Random(5)
    values = [observed_count(counter, base, base, rng) for _ in range(200)]
    # the heavy tail pushes the mean well below tolerance but never above it
    assert sum(values) / len(values) < counter.expected_count - counter.tolerance
    assert all(v < counter.expected_count + 15 for v in values)

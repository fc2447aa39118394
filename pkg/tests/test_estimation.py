import math

import pytest

from loccphase.errors import DegenerateLikelihood
from loccphase.estimation import (
    circular_distance,
    extract_phase_from_settings,
    mle_delta_phi,
    sample,
    sample_distribution,
    wrap_phase,
)

HALF_PI = math.pi / 2.0


def two_setting_model(setting):
    def dist(phi):
        return {
            (sa, sb): (1.0 + sa * sb * math.cos(phi + setting)) / 4.0
            for sa in (1, -1) for sb in (1, -1)
        }
    return dist


def exact_distributions(phi):
    return {setting: two_setting_model(setting)(phi)
            for setting in (0.0, HALF_PI)}


def test_wrap_phase_interval_and_fixed_points():
    assert wrap_phase(math.pi) == pytest.approx(math.pi)
    assert wrap_phase(-math.pi) == pytest.approx(math.pi)
    assert wrap_phase(3.0 * math.pi) == pytest.approx(math.pi)
    assert wrap_phase(0.3) == pytest.approx(0.3)
    for k in range(-3, 4):
        w = wrap_phase(1.1 + 2.0 * math.pi * k)
        assert -math.pi < w <= math.pi
        assert w == pytest.approx(1.1)


def test_circular_distance_wraps():
    assert circular_distance(0.1, 2.0 * math.pi + 0.1) < 1e-12
    assert circular_distance(-math.pi + 0.05, math.pi - 0.05) == pytest.approx(0.1)


def test_sampling_is_deterministic_and_complete():
    dist = {"a": 0.2, "b": 0.5, "c": 0.3}
    c1 = sample_distribution(dist, 10000, seed=42)
    c2 = sample_distribution(dist, 10000, seed=42)
    assert c1 == c2
    assert sum(c1.values()) == 10000
    c3 = sample_distribution(dist, 10000, seed=43)
    assert c3 != c1
    assert sample_distribution(dist, 0, seed=1) == {}


def test_sampling_frequencies_approach_probabilities():
    dist = {0: 0.7, 1: 0.3}
    counts = sample_distribution(dist, 200000, seed=9)
    assert abs(counts[0] / 200000 - 0.7) < 5e-3


def test_sample_uses_independent_streams_per_setting():
    dists = exact_distributions(0.4)
    table = sample(dists, 5000, seed=3)
    assert set(table.counts) == {0.0, HALF_PI}
    assert all(sum(v.values()) == 5000 for v in table.counts.values())
    again = sample(dists, 5000, seed=3)
    assert again.counts == table.counts


@pytest.mark.parametrize("phi", [-2.9, -1.3, 0.0, 0.7, 2.4])
def test_mle_recovers_phase_within_errors(phi):
    table = sample(exact_distributions(phi), 20000, seed=17)
    est = mle_delta_phi(table, two_setting_model)
    assert est.standard_error < 0.05
    assert circular_distance(est.value, phi) < 4.0 * est.standard_error


def test_mle_is_reproducible():
    table = sample(exact_distributions(1.2), 5000, seed=88)
    a = mle_delta_phi(table, two_setting_model)
    b = mle_delta_phi(table, two_setting_model)
    assert a.value == b.value
    assert a.standard_error == b.standard_error


def test_degenerate_likelihood_raises():
    def flat_model(setting):
        return lambda phi: {0: 0.5, 1: 0.5}

    table = sample({0.0: {0: 0.5, 1: 0.5}}, 100, seed=1)
    with pytest.raises(DegenerateLikelihood):
        mle_delta_phi(table, flat_model)


def test_extract_phase_from_settings_roundtrip():
    for phi in (-2.0, -0.4, 0.0, 1.1, 3.0):
        expectations = {0.0: math.cos(phi), HALF_PI: math.cos(phi + HALF_PI)}
        assert circular_distance(extract_phase_from_settings(expectations), phi) < 1e-12

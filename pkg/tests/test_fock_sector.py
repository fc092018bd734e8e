import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photon_cascade.fock_sector import (
    InputSpec,
    NumberDistribution,
    SectorState,
    TruncationError,
    coherent_sector_weights,
    default_truncation,
    sector_basis,
)


def test_sector_basis_small_cases():
    assert sector_basis(0).states == ((0, 0, 0),)
    assert sector_basis(1).states == ((1, 0, 0), (0, 1, 1))
    assert sector_basis(2).states == ((2, 0, 0), (1, 1, 1), (0, 2, 2))


@given(st.integers(min_value=0, max_value=60))
def test_sector_basis_conservation_laws(n):
    basis = sector_basis(n)
    assert len(basis) == n + 1
    for omega1, e1, e2 in basis.states:
        assert omega1 + e1 == n
        assert e1 == e2


def test_sector_basis_rejects_negative():
    with pytest.raises(ValueError):
        sector_basis(-1)


def test_sector_state_normalization_is_enforced():
    SectorState.fock(3)
    with pytest.raises(ValueError):
        SectorState(1, [1.0, 1.0])
    half = SectorState(1, [0.5, 0.0], subnormalized=True)
    assert half.norm_squared == pytest.approx(0.25)
    with pytest.raises(ValueError):
        SectorState(1, [1.0])


def test_coherent_weights_vacuum():
    dist = coherent_sector_weights(0.0, 5)
    np.testing.assert_array_equal(dist.probs, [1, 0, 0, 0, 0, 0])


def test_coherent_weights_fig2_input():
    dist = coherent_sector_weights(2.25, 20)
    # e^{-2.25} 2.25^2 / 2, evaluated directly
    assert dist[2] == pytest.approx(0.2667917871722191, abs=1e-12)
    assert dist[1] == pytest.approx(0.23714825526419475, abs=1e-12)
    assert abs(dist.probs.sum() - 1.0) < 1e-12
    assert dist.tail_mass < 1e-8


def test_truncation_error_names_required_cutoff():
    with pytest.raises(TruncationError) as info:
        coherent_sector_weights(2.25, 6)
    assert info.value.required == default_truncation(2.25)
    assert str(default_truncation(2.25)) in str(info.value)


def test_default_truncation_is_smallest():
    n = default_truncation(2.25)
    coherent_sector_weights(2.25, n)
    with pytest.raises(TruncationError):
        coherent_sector_weights(2.25, n - 1)


@settings(max_examples=50)
@given(st.floats(min_value=0.0, max_value=30.0))
def test_coherent_mean_matches(mean_n):
    truncation = int(math.ceil(mean_n + 10 * math.sqrt(mean_n))) + 1
    dist = coherent_sector_weights(mean_n, truncation, tail_tolerance=1.0)
    assert abs(dist.mean() - mean_n) < 1e-6
    assert abs(dist.probs.sum() - 1.0) < 1e-12


def test_number_distribution_validation():
    with pytest.raises(ValueError):
        NumberDistribution([0.5, 0.4])
    with pytest.raises(ValueError):
        NumberDistribution([1.5, -0.5])
    d = NumberDistribution([0.25, 0.25, 0.5])
    assert d.at_least(1) == pytest.approx(0.75)
    assert d[7] == 0.0


@pytest.mark.parametrize("text, kind, n, mean", [
    ("fock:2", "fock", 2, 0.0),
    ("coherent:2.25", "coherent", 0, 2.25),
    ("Fock:0", "fock", 0, 0.0),
])
def test_input_spec_parse(text, kind, n, mean):
    spec = InputSpec.parse(text)
    assert (spec.kind, spec.n, spec.mean_n) == (kind, n, mean)


@pytest.mark.parametrize("text", ["fock", "fock:-1", "thermal:1", "coherent:x"])
def test_input_spec_parse_rejects(text):
    with pytest.raises(ValueError):
        InputSpec.parse(text)


def test_fock_input_distribution():
    np.testing.assert_array_equal(InputSpec.fock_state(2).distribution().probs, [0, 0, 1])

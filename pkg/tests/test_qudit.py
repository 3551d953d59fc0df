import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from lodt.qudit import (
    BellLabel,
    DensityOperator,
    DimensionError,
    PureState,
    as_density,
    bell_basis,
    bell_measure,
    bell_outcome_distribution,
    bell_state,
    computational_distribution,
    computational_measure,
    maximally_mixed,
    product_state,
    project_computational,
    reduced_density,
    state_from_json,
    state_to_json,
)

from oracles import explicit_bell_vector, explicit_partial_trace

SQRT_HALF = 1 / math.sqrt(2)


def random_pure(rng, d):
    vec = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
    return PureState(vec / np.linalg.norm(vec), d)


def random_density(rng, d, rank=3):
    m = rng.normal(size=(d * d, rank)) + 1j * rng.normal(size=(d * d, rank))
    rho = m @ m.conj().T
    return DensityOperator(rho / np.trace(rho).real, d)


@st.composite
def pure_states(draw, dims=(2, 3, 5)):
    d = draw(st.sampled_from(dims))
    parts = draw(st.lists(st.floats(-1, 1), min_size=2 * d * d, max_size=2 * d * d))
    vec = np.array(parts[::2]) + 1j * np.array(parts[1::2])
    norm = np.linalg.norm(vec)
    if norm < 1e-3:
        vec = np.zeros(d * d, dtype=complex)
        vec[0] = 1
        norm = 1.0
    return PureState(vec / norm, d)


def test_phi_plus():
    expected = np.array([SQRT_HALF, 0, 0, SQRT_HALF])
    np.testing.assert_allclose(bell_state(2, (0, 0)).amplitudes, expected, atol=1e-15)


def test_singlet_label():
    # (|01> - |10>)/sqrt(2)
    expected = np.array([0, SQRT_HALF, -SQRT_HALF, 0])
    np.testing.assert_allclose(bell_state(2, (1, 1)).amplitudes, expected, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_bell_states_match_defining_sum(d):
    for a, b in itertools.product(range(d), repeat=2):
        np.testing.assert_allclose(bell_state(d, (a, b)).amplitudes,
                                   explicit_bell_vector(d, a, b), atol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_orthonormal_and_complete(d):
    basis = bell_basis(d)
    gram = basis.conj().T @ basis
    assert np.max(np.abs(gram - np.eye(d * d))) < 1e-12
    assert np.max(np.abs(basis @ basis.conj().T - np.eye(d * d))) < 1e-10


@pytest.mark.parametrize("d", [2, 3, 5])
def test_bell_states_maximally_entangled(d):
    for label in itertools.product(range(d), repeat=2):
        for side in "AB":
            rho = reduced_density(bell_state(d, label), side).matrix
            assert np.max(np.abs(rho - np.eye(d) / d)) < 1e-12


def test_product_state_distribution_by_brute_force():
    state = product_state(2, 0, 0)
    brute = [abs(np.vdot(explicit_bell_vector(2, a, b), state.amplitudes)) ** 2
             for a in range(2) for b in range(2)]
    np.testing.assert_allclose(brute, [0.5, 0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(bell_outcome_distribution(state), brute, atol=1e-12)


def test_basis_state_gives_point_mass():
    probs = bell_outcome_distribution(bell_state(3, (1, 2)))
    expected = np.zeros(9)
    expected[BellLabel(1, 2).datum(3) - 1] = 1
    np.testing.assert_allclose(probs, expected, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_maximally_mixed_is_uniform(d):
    np.testing.assert_allclose(bell_outcome_distribution(maximally_mixed(d)),
                               np.full(d * d, 1 / d**2), atol=1e-12)


def test_pure_and_density_forms_agree():
    rng = np.random.default_rng(3)
    for d in (2, 3, 5):
        psi = random_pure(rng, d)
        np.testing.assert_allclose(bell_outcome_distribution(psi),
                                   bell_outcome_distribution(as_density(psi)), atol=1e-12)


def test_bell_measure_certainty():
    state = bell_state(2, (1, 0))
    for seed in range(20):
        label, post = bell_measure(state, np.random.default_rng(seed))
        assert label == (1, 0)
        np.testing.assert_allclose(post.amplitudes, state.amplitudes)


def test_bell_measure_frequencies_on_product_state():
    rng = np.random.default_rng(11)
    state = product_state(2, 0, 0)
    labels = [bell_measure(state, rng)[0] for _ in range(10_000)]
    f00 = labels.count((0, 0)) / len(labels)
    f01 = labels.count((0, 1)) / len(labels)
    assert abs(f00 - 0.5) < 0.02 and abs(f01 - 0.5) < 0.02
    assert f00 + f01 == 1.0


def test_bell_measure_deterministic():
    state = random_pure(np.random.default_rng(0), 3)
    first = [bell_measure(state, np.random.default_rng(42))[0] for _ in range(5)]
    assert len(set(first)) == 1


def test_sampling_converges_to_distribution():
    rng = np.random.default_rng(99)
    for n in range(10):
        d = (2, 3)[n % 2]
        state = random_pure(rng, d) if n < 5 else random_density(rng, d)
        probs = bell_outcome_distribution(state)
        counts = np.zeros(d * d)
        for _ in range(100_000):
            label, _ = bell_measure(state, rng)
            counts[label.datum(d) - 1] += 1
        assert chisquare(counts, probs * counts.sum()).pvalue > 0.001


@pytest.mark.parametrize("d", [2, 3, 5])
def test_local_measurements_reveal_shift(d):
    # enumerate every outcome branch of measuring A then B
    for a, b in itertools.product(range(d), repeat=2):
        state = bell_state(d, (a, b))
        probs_a = computational_distribution(state, "A")
        np.testing.assert_allclose(probs_a, np.full(d, 1 / d), atol=1e-12)
        for k in range(d):
            post = project_computational(state, "A", k)
            probs_b = computational_distribution(post, "B")
            expected = np.zeros(d)
            expected[(k + a) % d] = 1
            np.testing.assert_allclose(probs_b, expected, atol=1e-12)


def test_computational_measure_product_state():
    outcome, post = computational_measure(product_state(2, 0, 0), "A", np.random.default_rng(5))
    assert outcome == 0
    np.testing.assert_allclose(post.amplitudes, [1, 0, 0, 0])


def test_computational_measure_uniform_marginal():
    rng = np.random.default_rng(8)
    state = bell_state(2, (0, 0))
    ones = sum(computational_measure(state, "A", rng)[0] for _ in range(10_000))
    assert abs(ones / 10_000 - 0.5) < 0.02


def test_computational_measure_on_density():
    rho = as_density(bell_state(3, (2, 1)))
    outcome, post = computational_measure(rho, "B", np.random.default_rng(1))
    assert isinstance(post, DensityOperator)
    probs_a = computational_distribution(post, "A")
    assert probs_a[(outcome - 2) % 3] == pytest.approx(1.0)


def test_reduced_density_examples():
    np.testing.assert_allclose(reduced_density(bell_state(2, (0, 0)), "A").matrix, np.eye(2) / 2,
                               atol=1e-15)
    np.testing.assert_allclose(reduced_density(product_state(2, 0, 0), "A").matrix,
                               [[1, 0], [0, 0]])
    rho = as_density(bell_state(5, (3, 4))).matrix
    np.testing.assert_allclose(explicit_partial_trace(rho, 5, "B"), np.eye(5) / 5, atol=1e-15)
    np.testing.assert_allclose(reduced_density(bell_state(5, (3, 4)), "B").matrix,
                               explicit_partial_trace(rho, 5, "B"), atol=1e-15)


def test_reduced_density_matches_loops_on_random_states():
    rng = np.random.default_rng(21)
    for d in (2, 3, 4):
        psi = random_pure(rng, d)
        rho = as_density(psi).matrix
        for side in "AB":
            expected = explicit_partial_trace(rho, d, side)
            np.testing.assert_allclose(reduced_density(psi, side).matrix, expected, atol=1e-13)
            np.testing.assert_allclose(reduced_density(as_density(psi), side).matrix, expected,
                                       atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(pure_states())
def test_outputs_are_valid_states(psi):
    probs = bell_outcome_distribution(psi)
    assert abs(probs.sum() - 1) < 1e-10 and probs.min() >= -1e-12
    for side in "AB":
        # the constructor enforces the density operator invariants
        DensityOperator(reduced_density(psi, side).matrix, psi.d, parties=1)
        probs = computational_distribution(psi, side)
        assert abs(probs.sum() - 1) < 1e-10 and probs.min() >= -1e-12


@pytest.mark.parametrize("d", [2, 3, 7, 16])
def test_label_round_trip(d):
    for i in range(1, d * d + 1):
        label = BellLabel.from_datum(i, d)
        assert label.datum(d) == i
        assert label.a * d + label.b + 1 == i


def test_validation_errors():
    with pytest.raises(DimensionError):
        bell_state(1, (0, 0))
    with pytest.raises(DimensionError):
        bell_state(17, (0, 0))
    with pytest.raises(ValueError):
        bell_state(2, (2, 0))
    with pytest.raises(ValueError):
        BellLabel.from_datum(5, 2)
    with pytest.raises(DimensionError):
        PureState(np.ones(5) / math.sqrt(5), d=2)
    with pytest.raises(ValueError):
        PureState([1, 1, 0, 0], d=2)
    with pytest.raises(ValueError):
        DensityOperator(np.diag([0.5, 0.6, 0, 0]), 2)
    with pytest.raises(ValueError):
        DensityOperator(np.diag([1.5, -0.5, 0, 0]), 2)
    with pytest.raises(ValueError):
        reduced_density(bell_state(2, (0, 0)), "C")
    with pytest.raises(DimensionError):
        bell_outcome_distribution(PureState([1, 0], d=2, parties=1))


def test_state_json_round_trip():
    rng = np.random.default_rng(4)
    for state in (random_pure(rng, 3), random_density(rng, 2), bell_state(4, (1, 3))):
        back = state_from_json(state_to_json(state))
        assert state_to_json(back) == state_to_json(state)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renyikd.entropy import (
    EntropyOrder,
    entropy,
    entropy_eig,
    entropy_frob,
    joint_entropy,
    multivariate_mi,
    mutual_information,
)
from renyikd.errors import ContractError, NotPSDError, ShapeError
from renyikd.linalg import jacobi_eigh

from conftest import random_gram, random_psd

ALPHAS = [1.01, 2.0, 3.0]


def oracle_entropy(a, alpha):
    """Independent route: Jacobi eigenvalues and the textbook formula."""
    w = jacobi_eigh(np.asarray(a))
    w = np.clip(w, 0.0, None)
    w = w[w > 0]
    return math.log2(np.sum(w**alpha)) / (1 - alpha)


def constant_kernel(n):
    return np.full((n, n), 1.0 / n)


def cluster_gram(labels):
    """Gram of samples that are copies of orthonormal prototypes: entries 0 or 1/n."""
    labels = np.asarray(labels)
    n = len(labels)
    return (labels[:, None] == labels[None, :]).astype(float) / n


@pytest.mark.parametrize("alpha", [1.0, 1.0 + 1e-10, 0.0, -2.0, float("nan"), float("inf")])
def test_order_validation(alpha):
    with pytest.raises(ContractError):
        EntropyOrder(alpha)


def test_uniform_spectrum():
    assert entropy_eig(np.eye(4) / 4, 2) == pytest.approx(2.0, abs=1e-12)
    assert entropy_frob(np.eye(4) / 4) == 2.0


@pytest.mark.parametrize("alpha", ALPHAS)
def test_rank_one_has_zero_entropy(alpha):
    assert entropy_eig(constant_kernel(5), alpha) == pytest.approx(0.0, abs=1e-10)
    assert entropy_frob(np.full((2, 2), 0.5)) == 0.0


@pytest.mark.parametrize("alpha", ALPHAS)
def test_eig_path_matches_jacobi_oracle(rng, alpha):
    for _ in range(5):
        a = random_psd(rng, 8)
        assert entropy_eig(a, alpha) == pytest.approx(oracle_entropy(a, alpha), abs=1e-8)


@pytest.mark.parametrize("n", [2, 4, 16, 64, 256])
def test_frobenius_path_equals_eigen_path(rng, n):
    a = random_psd(rng, n)
    assert abs(entropy_frob(a) - entropy_eig(a, 2)) < 1e-8
    if n <= 64:
        assert abs(entropy_frob(a) - oracle_entropy(a, 2)) < 1e-8


def test_rank_deficient_at_alpha_near_one(rng):
    a = random_psd(rng, 10, rank=3)
    assert entropy_eig(a, 1.01) == pytest.approx(oracle_entropy(a, 1.01), abs=1e-8)
    assert entropy_eig(a, 1.01) <= math.log2(3) + 1e-9


def test_not_psd_is_rejected():
    with pytest.raises(NotPSDError):
        entropy_eig(np.array([[0.5, 0.6], [0.6, 0.5]]), 2)


def test_small_negative_noise_is_clamped():
    a = np.diag([1.0, -5e-10])
    assert entropy_eig(a, 3) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 24), st.sampled_from(ALPHAS))
def test_entropy_bounds(seed, n, alpha):
    rng = np.random.default_rng(seed)
    a = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
    s = entropy(a, alpha)
    assert -1e-9 <= s <= math.log2(n) + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 16), st.sampled_from(ALPHAS))
def test_permutation_invariance(seed, n, alpha):
    rng = np.random.default_rng(seed)
    a = random_psd(rng, n)
    p = rng.permutation(n)
    assert entropy(a[np.ix_(p, p)], alpha) == pytest.approx(entropy(a, alpha), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 16))
def test_entropy_non_increasing_in_order(seed, n):
    rng = np.random.default_rng(seed)
    a = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
    values = [entropy_eig(a, alpha) for alpha in (0.5, 1.01, 2.0, 3.0, 5.0)]
    for lo, hi in zip(values, values[1:]):
        assert lo >= hi - 1e-10


# ----------------------------------------------------------------- joint entropy


def test_joint_with_constant_kernel_is_marginal(rng):
    a = random_gram(rng, 6)
    ones = np.ones((6, 6))
    for alpha in ALPHAS:
        assert joint_entropy([a, ones], alpha) == pytest.approx(entropy(a, alpha), abs=1e-12)


def test_joint_of_identities():
    assert joint_entropy([np.eye(2) / 2, np.eye(2) / 2], 2) == pytest.approx(1.0, abs=1e-15)


def test_joint_subadditivity_probe():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        a = random_gram(rng, 8, int(rng.integers(1, 10)))
        assert joint_entropy([a, a], 2) <= 2 * entropy(a, 2) + 1e-9


# ----------------------------------------------------------------- mutual information


@pytest.mark.parametrize("alpha", ALPHAS)
def test_self_information_equals_two_term_formula(rng, alpha):
    a = random_gram(rng, 8, 3)
    expected = 2 * oracle_entropy(a, alpha) - oracle_entropy((a * a) / np.trace(a * a), alpha)
    assert mutual_information(a, a, alpha) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize(
    "a",
    [np.eye(4) / 4, constant_kernel(4), cluster_gram([0, 0, 1, 2, 2, 2]), cluster_gram([0, 1, 0, 1])],
    ids=["uniform", "rank1", "clusters3", "clusters2"],
)
def test_self_information_is_entropy_for_idempotent_patterns(a, alpha):
    # A o A is proportional to A whenever the entries take a single nonzero value
    assert mutual_information(a, a, alpha) == pytest.approx(entropy(a, alpha), abs=1e-9)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_mi_with_constant_feature_is_zero(rng, alpha):
    a = random_gram(rng, 7, 4)
    assert mutual_information(a, constant_kernel(7), alpha) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 16), st.sampled_from(ALPHAS))
def test_mi_symmetry(seed, n, alpha):
    rng = np.random.default_rng(seed)
    a, b = random_gram(rng, n, 3), random_gram(rng, n, 5)
    assert abs(mutual_information(a, b, alpha) - mutual_information(b, a, alpha)) < 1e-12


def test_mi_size_mismatch():
    with pytest.raises(ShapeError):
        mutual_information(np.eye(2) / 2, np.eye(3) / 3)


def test_mi_non_negative_probe():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        a = random_gram(rng, 16, int(rng.integers(1, 20)))
        b = random_gram(rng, 16, int(rng.integers(1, 20)))
        assert mutual_information(a, b, 2) >= -1e-9


def test_multivariate_mi_reduces_to_pairwise(rng):
    a, b = random_gram(rng, 6, 2), random_gram(rng, 6, 4)
    for alpha in ALPHAS:
        assert multivariate_mi([a], b, alpha) == pytest.approx(mutual_information(a, b, alpha), abs=1e-12)


def test_multivariate_mi_with_constant_target(rng):
    a1, a2 = random_gram(rng, 6, 2), random_gram(rng, 6, 4)
    assert multivariate_mi([a1, a2], np.ones((6, 6)) / 6, 2) == pytest.approx(0.0, abs=1e-9)


def test_multivariate_mi_needs_groups():
    with pytest.raises(ContractError):
        multivariate_mi([], np.eye(2) / 2)

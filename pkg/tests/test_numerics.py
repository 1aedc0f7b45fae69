import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import jacobi_singular_values
from rankcollapse.metrics import min_pairwise_cos
from rankcollapse.numerics import (
    SamplerError,
    min_singular,
    numerical_rank,
    power_spectral_norm,
    random_orthogonal,
    sample_hemisphere_rows,
    sample_sphere_rows,
    seeded_rng,
    snapshots_to_csv,
    spectral_capped,
    split,
    svd,
)


def test_seeded_rng_reproducible():
    assert np.array_equal(seeded_rng(0).random(100), seeded_rng(0).random(100))
    assert not np.array_equal(seeded_rng(0).random(100), seeded_rng(1).random(100))


def test_split_streams():
    a = split(7, 3).random(10)
    assert np.array_equal(a, split(7, 3).random(10))
    assert not np.array_equal(a, split(7, 4).random(10))
    assert not np.array_equal(a, seeded_rng(7).random(10))


def test_random_orthogonal():
    rng = seeded_rng(1)
    q1 = random_orthogonal(1, rng)
    assert abs(abs(q1[0, 0]) - 1) < 1e-15
    for d in (2, 5, 16):
        q = random_orthogonal(d, rng)
        assert np.linalg.norm(q.T @ q - np.eye(d)) < 1e-10
        assert np.allclose(jacobi_singular_values(q), 1.0, atol=1e-10)


def test_orthogonal_products_stay_orthogonal():
    rng = seeded_rng(2)
    prod = np.eye(6)
    for k in range(1, 51):
        prod = prod @ random_orthogonal(6, rng)
        assert np.linalg.norm(prod.T @ prod - np.eye(6)) < k * 1e-10


def test_spectral_capped():
    rng = seeded_rng(3)
    m = spectral_capped(8, 2.5, rng)
    assert np.isclose(np.linalg.norm(m, 2), 2.5, rtol=1e-12)
    assert np.all(spectral_capped(4, 0.0, rng) == 0)


def test_power_iteration_matches_svd():
    rng = seeded_rng(4)
    for _ in range(20):
        m = rng.standard_normal((6, 6))
        assert np.isclose(power_spectral_norm(m), jacobi_singular_values(m)[0], rtol=1e-8)
    assert power_spectral_norm(np.zeros((3, 3))) == 0.0


def test_sphere_rows():
    rng = seeded_rng(5)
    x = sample_sphere_rows(4, 8, rng)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)
    assert numerical_rank(x) == 4
    assert np.isclose(np.linalg.norm(sample_sphere_rows(1, 2, rng)), 1.0)


@pytest.mark.parametrize("n,d", [(2, 2), (3, 4), (4, 8), (16, 32), (30, 3)])
def test_hemisphere_rows(n, d):
    for seed in range(10):
        x = sample_hemisphere_rows(n, d, seeded_rng(seed))
        assert min_pairwise_cos(x) >= 0
        assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_hemisphere_budget_is_reported():
    with pytest.raises(SamplerError):
        sample_hemisphere_rows(4, 3, seeded_rng(0), max_tries=0)


def test_svd_examples():
    r = svd(np.eye(3))
    assert np.allclose(r.singular_values, 1.0) and numerical_rank(np.eye(3)) == 3
    u, v = np.arange(1.0, 5.0), np.array([1.0, -2.0, 0.5])
    s = svd(np.outer(u, v)).singular_values
    assert numerical_rank(np.outer(u, v)) == 1 and s[1] / s[0] < 1e-12
    g = seeded_rng(6).standard_normal((4, 8))
    assert numerical_rank(g) == 4
    assert np.isclose(min_singular(g), jacobi_singular_values(g)[-1], rtol=1e-10)


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd(np.array([[np.nan, 1.0]]))


def test_svd_reconstruction_and_oracle():
    rng = seeded_rng(8)
    for _ in range(100):
        n, d = rng.integers(1, 65, size=2)
        x = rng.standard_normal((n, d)) * 10 ** rng.uniform(-3, 3)
        r = svd(x)
        err = np.linalg.norm(x - r.reconstruct())
        assert err <= 1e-10 * max(1.0, np.linalg.norm(x))
        assert np.all(np.diff(r.singular_values) <= 0) and np.all(r.singular_values >= 0)
    for _ in range(20):
        x = rng.standard_normal(tuple(rng.integers(1, 12, size=2)))
        assert np.allclose(svd(x).singular_values, jacobi_singular_values(x), rtol=1e-10, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_singular_values_match_jacobi(x):
    s = svd(x).singular_values
    assert np.allclose(s, jacobi_singular_values(x), rtol=1e-9, atol=1e-9 * max(1.0, s[0]))


def test_snapshot_csv():
    text = snapshots_to_csv([(0, np.array([[1.0, 2.0]])), (3, np.array([[0.5, -1.0]]))])
    lines = text.strip().split("\n")
    assert lines[0] == "t,i,x_1,x_2"
    assert lines[1] == "0,1,1.0,2.0" and lines[2] == "3,1,0.5,-1.0"

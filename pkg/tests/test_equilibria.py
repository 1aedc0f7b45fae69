import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankcollapse.dynamics import run_trajectory
from rankcollapse.equilibria import (
    RESIDUAL_TOL,
    EquilibriumError,
    all_sign_variants,
    chain_betas,
    check_counterexample_conditions,
    construct_equilibrium,
    fixed_point_residual,
    jordan_schedule,
    sample_counterexample_init,
)
from rankcollapse.mask_graph import build_mask
from rankcollapse.numerics import seeded_rng
from rankcollapse.theory import stable_rank_bound
from rankcollapse.metrics import stable_rank


def test_closed_form_two_tokens():
    w = 3.0
    h = np.sqrt(1 - 1 / w**2)
    for signs, last in [((1, 1), h), ((1, -1), -h)]:
        eq = construct_equilibrium(2, 2, 2, w, signs)
        assert np.allclose(eq.x, [[0.0, 1.0], [-1 / w, last]], atol=1e-15)
    neg = construct_equilibrium(2, 2, 2, w, (-1, 1))
    assert np.allclose(neg.x[0], [0.0, -1.0])


def test_rank_one_is_constant():
    eq = construct_equilibrium(5, 3, 1, 1.5)
    assert np.allclose(eq.x, np.tile([0.0, 0.0, 1.0], (5, 1)))
    assert eq.rank == 1 and eq.residual <= RESIDUAL_TOL


@pytest.mark.parametrize("n,d,k,w", [(3, 3, 3, 4.0), (4, 4, 4, 8.0), (4, 5, 3, 3.5), (6, 4, 2, 6.0), (5, 5, 5, 10.0)])
def test_all_sign_variants_are_distinct_fixed_points(n, d, k, w):
    vs = all_sign_variants(n, d, k, w)
    assert len(vs) == 2**k
    for eq in vs:
        assert eq.residual <= RESIDUAL_TOL
        assert eq.rank == k
        assert np.allclose(np.linalg.norm(eq.x, axis=1), 1.0, atol=1e-12)
        # repeated prefix has S_i = i e_d; every chain token has ||S_i W|| = 1
        m = n - k + 1
        betas = chain_betas(eq.x, eq.wv)
        assert np.allclose(betas[:m], 1.0 / np.arange(1, m + 1)) and np.allclose(betas[m:], 1.0, atol=1e-12)
    for a in range(len(vs)):
        for b in range(a + 1, len(vs)):
            assert np.linalg.norm(vs[a].x - vs[b].x) > 0.1


def test_fixed_point_stays_put_along_trajectory():
    # the equilibrium is unstable, so rounding error grows; 10 layers stay at the floor
    eq = construct_equilibrium(4, 4, 4, 8.0, (1, -1, 1, -1))
    rec = run_trajectory(eq.x, jordan_schedule(4, 8.0, 10), build_mask("causal", 4), "post_ln")
    assert np.linalg.norm(rec.final - eq.x) < 1e-12


def test_stable_rank_bound_holds():
    for n, w in [(3, 4.0), (4, 8.0), (6, 7.0), (10, 11.0)]:
        eq = construct_equilibrium(n, n, n, w)
        assert 1.0 <= stable_rank(eq.x) <= stable_rank_bound(n, w) + 1e-12


def test_jordan_block_smaller_than_d():
    eq = construct_equilibrium(3, 5, 3, 4.0, jordan_size=3)
    assert eq.residual <= RESIDUAL_TOL and eq.rank == 3
    assert np.allclose(eq.x[:, :2], 0.0)


@pytest.mark.parametrize("kwargs,needle", [
    (dict(n=3, d=3, k=4, w=5.0), "1 <= k"),
    (dict(n=3, d=3, k=2, w=1.0), "w must exceed 1"),
    (dict(n=4, d=4, k=2, w=2.5), r"N-k\+1"),
    (dict(n=3, d=3, k=2, w=5.0, signs=(1,)), "signs"),
    (dict(n=3, d=3, k=2, w=5.0, signs=(1, 0)), "signs"),
    (dict(n=3, d=4, k=3, w=5.0, jordan_size=2), "Jordan"),
])
def test_construction_errors(kwargs, needle):
    with pytest.raises(EquilibriumError, match=needle):
        construct_equilibrium(**kwargs)


def test_residual_detects_non_equilibrium():
    eq = construct_equilibrium(3, 3, 3, 4.0)
    bumped = eq.x.copy()
    bumped[2] = -bumped[2]
    assert fixed_point_residual(bumped, eq.wv) > 1e-3


def test_counterexample_conditions_on_a_compliant_point():
    w = 4.0
    x0 = np.array([[0.1, 0.0, 1.0], [-0.1, -0.5, 0.0], [0.0, 1.0, 0.0]])
    x0[1, 2] = np.sqrt(1 - x0[1] @ x0[1])
    c = check_counterexample_conditions(x0, w)
    assert c.ok and c.failures == [] and c.r[0] == 1.0
    assert c.to_dict()["r_bound"] == pytest.approx(np.sqrt(w**2 - 1))


def test_counterexample_conditions_name_the_failure():
    w = 4.0
    x0 = np.array([[0.1, 1.0], [-1 / (2 * w), 0.9]])
    c = check_counterexample_conditions(x0, w)
    assert not c.ok and any("-1/w" in f for f in c.failures)
    bad_first = np.array([[-0.1, 1.0], [-0.5, 0.5]])
    assert any("X_1,1" in f for f in check_counterexample_conditions(bad_first, w).failures)


def test_counterexample_r_condition():
    w = 2.0
    # a large leading coordinate: (r_1/r_2)^2 / w^2 = (0.9/0.5)^2 = 3.24 > sqrt(3)
    x0 = np.array([[1.0, 0.0, 0.0], [-0.9, -0.5, 0.0], [0.0, 0.0, 1.0]])
    c = check_counterexample_conditions(x0, w)
    assert c.r_sum == pytest.approx(3.24)
    assert c.failures == [f"r-condition sum 3.24 must be <= sqrt(w^2-1) = {np.sqrt(3):.6g}"]
    # a small one passes
    x0[1, 0] = -1e-6
    assert check_counterexample_conditions(x0, w).ok


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(2, 8), st.floats(1.1, 20.0), st.integers(0, 2**32 - 1))
def test_sampler_always_compliant(n, d, w, seed):
    x0 = sample_counterexample_init(n, d, w, seeded_rng(seed))
    c = check_counterexample_conditions(x0, w)
    assert c.ok, c.failures
    assert np.allclose(np.linalg.norm(x0, axis=1), 1.0, atol=1e-12)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kktinfer.lin_core import (HomConstraint, LinearDynamics, augment, augment_states, build_stacked,
                               rollout)
from oracles import simulate

NAV_A = [[0.8, 0.1], [0.1, 0.8]]
NAV_B = [[0.1], [0.5]]


def test_dynamics_validates_shapes():
    with pytest.raises(ValueError):
        LinearDynamics(np.eye(2), np.ones((3, 1)))
    with pytest.raises(ValueError):
        LinearDynamics(np.ones((2, 3)), np.ones((2, 1)))
    dyn = LinearDynamics(NAV_A, NAV_B)
    assert (dyn.n, dyn.m) == (2, 1)


def test_stacked_scalar_hand_values():
    S = build_stacked(LinearDynamics([[2.0]], [[1.0]]), 3)
    assert np.array_equal(S.G, [[1, 0, 0], [2, 1, 0], [4, 2, 1]])
    assert np.array_equal(S.H.ravel(), [2, 4, 8])


def test_stacked_rejects_bad_horizon():
    with pytest.raises(ValueError):
        build_stacked(LinearDynamics(NAV_A, NAV_B), 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 4), m=st.integers(1, 3), T=st.integers(1, 9))
def test_stacked_matches_recursion(seed, n, m, T):
    rng = np.random.default_rng(seed)
    A = 0.5 * rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    x0 = rng.standard_normal(n)
    U = rng.standard_normal(m * T)
    S = build_stacked(LinearDynamics(A, B), T)
    ref = simulate(A, B, x0, U)
    np.testing.assert_allclose(S.apply(U, x0), ref.ravel(), atol=1e-10, rtol=1e-10)
    np.testing.assert_allclose(rollout(LinearDynamics(A, B), x0, U), ref, atol=1e-10, rtol=1e-10)


def test_augment_scalar_and_nav():
    aug = augment(LinearDynamics([[1.0]], [[1.0]]))
    assert np.array_equal(aug.A, np.eye(2))
    assert np.array_equal(aug.B, [[1.0], [0.0]])
    nav = augment(LinearDynamics(NAV_A, NAV_B))
    assert nav.A.shape == (3, 3) and nav.A[2, 2] == 1.0 and nav.B[2, 0] == 0.0


def test_augmented_coordinate_stays_one():
    rng = np.random.default_rng(3)
    aug = augment(LinearDynamics(NAV_A, NAV_B))
    X = rollout(aug, np.array([0.3, -0.2, 1.0]), rng.standard_normal(5))
    assert np.all(X[:, -1] == 1.0)


def test_hom_constraint_from_affine_and_values():
    c = HomConstraint.from_affine([1.0, 1.0], 1.0)
    assert np.array_equal(c.c, [1, 1, -1])
    assert c.rhs == 1.0
    np.testing.assert_allclose(c.values([[0.0, 0.0], [1.0, 1.0]]), [-1.0, 1.0])
    np.testing.assert_allclose(c.values(augment_states([[0.5, 0.5]])), [0.0])
    assert HomConstraint(np.zeros(3)).is_null()
    assert np.isclose(np.linalg.norm(c.normalized().c), 1.0)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgboed.core import (
    CtlsModel,
    GaussianBelief,
    LtiModel,
    ModelPair,
    discretize,
    expm,
    make_belief,
    model_from_dict,
    model_to_dict,
    require_stable,
    spectral_radius,
)
from lgboed.errors import ConvergenceError, StabilityError, ValidationError
from lgboed.models import SpringMassParams, two_mass_dynamics

from systems import random_model, random_stable


def taylor_expm(M, terms=20):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


class TestBelief:
    def test_identity_belief(self):
        b = make_belief(np.zeros(2), np.eye(2))
        assert b.dim == 2
        np.testing.assert_array_equal(b.cov, np.eye(2))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(ValidationError, match="semidefinite"):
            make_belief(np.zeros(2), np.diag([1.0, -0.5]))

    def test_tiny_asymmetry_symmetrized(self):
        b = make_belief(np.zeros(2), [[1.0, 1.0 + 1e-12], [1.0, 1.0]])
        np.testing.assert_array_equal(b.cov, b.cov.T)
        assert b.cov[0, 1] == pytest.approx(1.0 + 0.5e-12, abs=1e-15)

    def test_large_asymmetry_rejected(self):
        with pytest.raises(ValidationError):
            make_belief(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            make_belief(np.zeros(3), np.eye(2))

    def test_arrays_are_read_only(self):
        b = make_belief(np.zeros(2), np.eye(2))
        with pytest.raises(ValueError):
            b.cov[0, 0] = 5.0


class TestLtiModel:
    def test_default_init(self):
        m = LtiModel(np.eye(2) * 0.5, np.ones((1, 2)), np.eye(2), np.eye(1))
        np.testing.assert_array_equal(m.init.cov, np.eye(2))
        assert (m.n, m.s) == (2, 1)

    def test_singular_R_rejected(self):
        with pytest.raises(ValidationError, match="R"):
            LtiModel(np.eye(2), np.ones((1, 2)), np.eye(2), np.zeros((1, 1)))

    def test_indefinite_Q_rejected(self):
        with pytest.raises(ValidationError, match="Q"):
            LtiModel(np.eye(2), np.ones((1, 2)), np.diag([1.0, -1.0]), np.eye(1))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            LtiModel(np.eye(2), np.ones((1, 3)), np.eye(2), np.eye(1))

    def test_pair_requires_same_observation_dimension(self):
        a = LtiModel(np.eye(2) * 0.5, np.ones((1, 2)), np.eye(2), np.eye(1))
        b = LtiModel(np.eye(2) * 0.5, np.ones((2, 2)), np.eye(2), np.eye(2))
        with pytest.raises(ValidationError):
            ModelPair(a, b)

    def test_pair_state_dimensions_may_differ(self):
        a = LtiModel(np.eye(2) * 0.5, np.ones((1, 2)), np.eye(2), np.eye(1))
        b = LtiModel(np.eye(3) * 0.5, np.ones((1, 3)), np.eye(3), np.eye(1))
        pair = ModelPair(a, b)
        assert not pair.same_state_dim
        with pytest.raises(ValidationError, match="EGIG"):
            pair.require_same_state_dim("EGIG")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 3))
    def test_serialization_round_trip_is_exact(self, seed, n, s):
        m = random_model(np.random.default_rng(seed), n, s)
        back = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        for name in ("A", "H", "Q", "R"):
            np.testing.assert_array_equal(getattr(back, name), getattr(m, name))
        np.testing.assert_array_equal(back.init.mean, m.init.mean)
        np.testing.assert_array_equal(back.init.cov, m.init.cov)


class TestDiscretize:
    def test_zero_dynamics_gives_identity(self):
        c = CtlsModel(np.zeros((3, 3)), np.ones((1, 3)), 0.1, np.eye(3), np.eye(1))
        np.testing.assert_array_equal(discretize(c).A, np.eye(3))

    def test_scalar_exponential(self):
        c = CtlsModel(np.array([[-1.0]]), np.ones((1, 1)), 1.0, np.eye(1), np.eye(1))
        assert discretize(c).A[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_two_mass_matches_taylor_series(self):
        Ac = two_mass_dynamics(SpringMassParams())
        A = expm(Ac * 0.01)
        np.testing.assert_allclose(A, taylor_expm(Ac * 0.01), rtol=0, atol=1e-10 * np.abs(A).max())

    def test_block_diagonal_preserved(self):
        rng = np.random.default_rng(3)
        B1, B2 = rng.standard_normal((2, 2)), rng.standard_normal((3, 3))
        Ac = np.zeros((5, 5))
        Ac[:2, :2], Ac[2:, 2:] = B1, B2
        A = expm(Ac * 0.3)
        np.testing.assert_allclose(A[:2, :2], expm(B1 * 0.3), atol=1e-13)
        np.testing.assert_allclose(A[2:, 2:], expm(B2 * 0.3), atol=1e-13)
        assert np.all(A[:2, 2:] == 0) and np.all(A[2:, :2] == 0)

    def test_noise_passes_through(self):
        Qd, Rd = np.diag([0.1, 0.2]), np.array([[0.3]])
        m = discretize(CtlsModel(-np.eye(2), np.ones((1, 2)), 0.5, Qd, Rd))
        np.testing.assert_array_equal(m.Q, Qd)
        np.testing.assert_array_equal(m.R, Rd)
        np.testing.assert_array_equal(m.H, np.ones((1, 2)))

    def test_default_init_is_stationary(self):
        m = discretize(CtlsModel(-np.eye(2), np.ones((1, 2)), 0.5, np.eye(2), np.eye(1)))
        a = math.exp(-0.5)
        np.testing.assert_allclose(m.init.cov, np.eye(2) / (1 - a * a), rtol=1e-10)

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ValidationError):
            CtlsModel(np.eye(2), np.ones((1, 2)), 0.0, np.eye(2), np.eye(1))


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(3)) == pytest.approx(1.0, abs=1e-10)

    def test_diagonal(self):
        assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, abs=1e-10)

    def test_rotation_pair(self):
        t = 0.7
        R = 0.8 * np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        assert spectral_radius(R) == pytest.approx(0.8, abs=1e-10)

    def test_nilpotent(self):
        assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000), st.integers(1, 6))
    def test_matches_eigensolver(self, seed, n):
        A = random_stable(np.random.default_rng(seed), n)
        assert spectral_radius(A) == pytest.approx(max(abs(np.linalg.eigvals(A))), abs=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000), st.floats(-3.0, 3.0).filter(lambda c: abs(c) > 1e-3))
    def test_homogeneous(self, seed, c):
        A = random_stable(np.random.default_rng(seed), 4)
        assert spectral_radius(c * A) == pytest.approx(abs(c) * spectral_radius(A), abs=1e-8 * max(1, abs(c)))

    def test_non_convergence_carries_last_iterate(self):
        A = np.array([[0.9, 1.0], [0.0, 0.9]])
        with pytest.raises(ConvergenceError) as info:
            spectral_radius(A, max_iter=1)
        assert info.value.last_iterate is not None

    def test_stability_gate(self):
        with pytest.raises(StabilityError) as info:
            require_stable(np.diag([0.5, 1.0]))
        assert info.value.spectral_radius == pytest.approx(1.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgboed.core import LtiModel, discretize
from lgboed.criteria import CriteriaRecord
from lgboed.design import (
    DesignPoint,
    PerturbationSpec,
    egig_gradient,
    egig_sensitivity,
    f16_design_evaluator,
    f16_design_grid,
    fd_gradient,
    k3_grid,
    pareto_front,
    pareto_front_bruteforce,
    relative_perturbation_builder,
    smd_design_grid,
    smd_study,
    sweep,
)
from lgboed.errors import ValidationError
from lgboed.models import SpringMassParams, build_two_mass, observer_smd


class TestPareto:
    def test_single_point(self):
        assert pareto_front([[1.0, 2.0]]) == [0]

    def test_dominated_point_removed(self):
        assert pareto_front([[1.0, 1.0], [2.0, 0.5]]) == [1]

    def test_trade_off_kept(self):
        assert pareto_front([[1.0, 0.0], [2.0, 1.0], [0.5, 2.0]]) == [0, 1]

    def test_duplicates_stay(self):
        assert pareto_front([[1.0, 1.0], [1.0, 1.0], [0.0, 2.0]]) == [0, 1]

    def test_nan_excluded(self):
        assert pareto_front([[math.nan, 0.0], [1.0, 1.0]]) == [1]

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            pareto_front([])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 1_000_000), st.integers(1, 100), st.booleans())
    def test_matches_bruteforce(self, seed, n, coarse):
        rng = np.random.default_rng(seed)
        pts = rng.integers(0, 5, (n, 2)).astype(float) if coarse else rng.standard_normal((n, 2))
        assert pareto_front(pts) == pareto_front_bruteforce(pts)


def _smd_builder():
    truth = discretize(build_two_mass(SpringMassParams(), observer_smd(math.pi / 4)))
    return truth, relative_perturbation_builder(truth)


class TestSensitivity:
    def test_quadratic_stationary_point(self):
        grad = fd_gradient(lambda D: float(np.sum(D * D)), (3, 3), 1e-5)
        np.testing.assert_allclose(grad, 0.0, atol=1e-8)

    def test_linear_function(self):
        W = np.arange(6.0).reshape(2, 3)
        grad = fd_gradient(lambda D: float(np.sum(W * D)), (2, 3), 1e-4)
        np.testing.assert_allclose(grad, W, rtol=1e-8)

    def test_mask_leaves_entries_zero(self):
        W = np.ones((2, 2))
        mask = np.array([[True, False], [False, True]])
        grad = fd_gradient(lambda D: float(np.sum(W * D)), (2, 2), 1e-4, mask=mask)
        np.testing.assert_allclose(grad, np.eye(2), rtol=1e-8)

    def test_uninformative_design_has_zero_sensitivity(self):
        m = LtiModel(np.array([[0.5, 0.1], [0.0, 0.6]]), np.zeros((1, 2)), np.eye(2), np.eye(1))
        assert egig_sensitivity(relative_perturbation_builder(m), (2, 2)) == pytest.approx(0.0, abs=1e-8)

    @staticmethod
    def _scheme_gap(step):
        model, builder = _smd_builder()
        mask = model.A != 0
        central = egig_gradient(builder, (4, 4), step, "central", mask)
        forward = egig_gradient(builder, (4, 4), step, "forward", mask)
        return np.linalg.norm(central - forward) / np.linalg.norm(central)

    def test_forward_difference_is_first_order_consistent(self):
        # the one-sided error must shrink linearly with the step
        ratio = self._scheme_gap(1e-4) / self._scheme_gap(1e-5)
        assert ratio == pytest.approx(10.0, rel=0.05)

    @pytest.mark.xfail(
        strict=True,
        reason="lightly damped spring-mass modes give a first-order gap of about 4.8e-3 at h=1e-5",
    )
    def test_central_matches_forward_on_spring_mass(self):
        assert self._scheme_gap(1e-5) < 1e-3

    def test_unknown_scheme(self):
        with pytest.raises(ValidationError):
            fd_gradient(lambda D: 0.0, (1, 1), scheme="backward")

    def test_perturbation_spec(self):
        model, _ = _smd_builder()
        pert = PerturbationSpec(np.full((4, 4), -0.01))
        np.testing.assert_allclose(pert.apply(model).A, 0.99 * model.A, rtol=1e-15)
        with pytest.raises(ValidationError):
            PerturbationSpec(np.zeros((4, 4)), mode="additive")


def _square(point):
    (x,) = point.params
    if x < 0:
        raise ValueError("negative design")
    return CriteriaRecord(eig=x * x), {"root": math.sqrt(x)}


def _same_result(a, b):
    if a.config != b.config or len(a.records) != len(b.records):
        return False
    for r, q in zip(a.records, b.records):
        if (r.design, r.error, r.extras) != (q.design, q.error, q.extras):
            return False
        x = [getattr(r.criteria, f) for f in ("eig", "egig", "edi", "delta_edi")]
        y = [getattr(q.criteria, f) for f in ("eig", "egig", "edi", "delta_edi")]
        if not np.array_equal(x, y, equal_nan=True):
            return False
    return True


class TestSweep:
    def test_single_point(self):
        res = sweep([DesignPoint((2.0,))], _square)
        assert len(res.records) == 1 and res.records[0].criteria.eig == 4.0

    def test_failure_recorded_per_point(self):
        res = sweep([DesignPoint((x,)) for x in (1.0, -1.0, 3.0)], _square)
        assert len(res.records) == 3
        assert res.records[1].error.startswith("ValueError")
        assert math.isnan(res.column("eig")[1])
        assert res.argmax("eig") == 2
        np.testing.assert_allclose(res.column("root")[[0, 2]], [1.0, math.sqrt(3.0)])

    def test_empty_grid(self):
        with pytest.raises(ValidationError):
            sweep([], _square)

    def test_pure_and_worker_independent(self):
        grid = smd_design_grid(8)
        a = smd_study(points=8)
        b = smd_study(points=8)
        c = smd_study(points=8, workers=2)
        assert _same_result(a, b) and _same_result(a, c)
        assert len(a.records) == len(grid)

    def test_config_echoed(self):
        res = smd_study(points=3)
        assert res.config["params"] == SpringMassParams().to_dict()
        assert len(res.config["k3_values"]) == 10


class TestStudies:
    def test_k3_grid(self):
        grid = k3_grid(SpringMassParams(k1=2.0))
        assert len(grid) == 10
        assert grid[0] == pytest.approx(2.0) and grid[-1] == pytest.approx(200.0)
        assert np.all(np.diff(np.log(grid)) == pytest.approx(math.log(100) / 9))

    def test_smd_columns(self):
        res = smd_study(points=50)
        assert len(res.records) == 50
        assert np.all(np.isfinite(res.column("eig")))
        assert np.all(res.column("delta_edi_mean") >= 0)

    def test_smd_argmax_agrees_with_refined_grid(self):
        # at the default parameters the maximum is interior; the coarse argmax
        # must sit within one coarse spacing of the refined one
        coarse = smd_study(points=50)
        fine = smd_study(points=500)
        d_coarse = coarse.records[coarse.argmax("eig")].design.params[0]
        d_fine = fine.records[fine.argmax("eig")].design.params[0]
        assert abs(d_coarse - d_fine) <= (math.pi / 2) / 49
        assert fine.column("eig").max() >= coarse.column("eig").max() - 1e-12

    def test_f16_grid_inside_disk(self):
        grid = f16_design_grid(21)
        assert all(d1 * d1 + d2 * d2 <= 1 + 1e-12 for d1, d2 in (p.params for p in grid))
        assert len(grid) == 317

    def test_f16_evaluator(self):
        rec, extras = f16_design_evaluator(1e-5, DesignPoint((0.0, 0.6)))
        assert rec.eig > 0 and extras["egig_sensitivity"] > 0
        assert extras["d3"] == pytest.approx(0.8)

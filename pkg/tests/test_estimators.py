import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmmkit.error_models import NoiseModel
from cmmkit.estimators import (
    DegenerateRegionError,
    FleetScenario,
    WeightedGrid,
    centroid_mc,
    estimate_hard,
    estimate_weighted,
    expected_sq_error_linear,
    linearize,
    orthogonal_error_closed_form,
    scenario_from_angles,
)
from cmmkit.geometry import (
    HalfPlane,
    UnboundedRegionError,
    Vec2,
    cmm_error_geometric,
    region_centroid,
    halfplane_intersection,
)
from cmmkit.seeding import substream

TWO_PI = 2 * math.pi
ORTHO_NORMALS = np.array([0.0, math.pi / 2, math.pi, 3 * math.pi / 2])


def ortho_scenario(sigma=0.3, w=2.0):
    return scenario_from_angles(ORTHO_NORMALS - math.pi / 2, w, sigma)


def bounded_scenario(rng, n, sigma, w=2.0):
    while True:
        a = np.sort(rng.uniform(0, TWO_PI, n))
        if np.diff(a, append=a[0] + TWO_PI).max() < math.pi:
            return scenario_from_angles(a - math.pi / 2, w, sigma), a


class TestEstimateHard:
    def test_zero_noise_symmetric(self):
        res = estimate_hard(ortho_scenario(), np.zeros((4, 2)))
        assert res.feasible
        assert res.error.norm() < 1e-12

    def test_orthogonal_rectangle_case(self):
        # projections (0.1, 0.2, -0.1, 0.0) on the four axis normals
        draws = np.array([[0.1, 0.0], [0.0, 0.2], [0.1, 0.0], [0.0, 0.0]])
        res = estimate_hard(ortho_scenario(), draws)
        assert res.error.x == pytest.approx(-0.1, abs=1e-12)
        assert res.error.y == pytest.approx(-0.1, abs=1e-12)
        assert res.squared_error == pytest.approx(0.02, abs=1e-12)

    def test_translation_invariance(self):
        rng = substream(21, 0)
        scenario, angles = bounded_scenario(rng, 10, 0.3)
        draws = rng.normal(0, 0.3, (10, 2))
        base = estimate_hard(scenario, draws)
        for delta in (Vec2(3.0, -1.0), Vec2(-250.0, 40.0)):
            shifted = FleetScenario(
                scenario.constraints, scenario.noise, scenario.common_error + delta
            )
            moved = estimate_hard(shifted, draws)
            assert moved.estimate.x - base.estimate.x == pytest.approx(delta.x, abs=1e-9)
            assert moved.estimate.y - base.estimate.y == pytest.approx(delta.y, abs=1e-9)
            assert moved.error.x == pytest.approx(base.error.x, abs=1e-9)
            assert moved.error.y == pytest.approx(base.error.y, abs=1e-9)

    def test_infeasible_flag(self):
        scenario = ortho_scenario(sigma=5.0, w=0.5)
        draws = np.array([[5.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        res = estimate_hard(scenario, draws)
        assert not res.feasible
        assert math.isnan(res.squared_error)

    def test_unbounded_raises(self):
        scenario = scenario_from_angles([0.0, 0.1], 2.0, 0.3)
        with pytest.raises(UnboundedRegionError):
            estimate_hard(scenario, np.zeros((2, 2)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_error_matches_perturbed_polygon_centroid(self, seed):
        # translation identity: the estimator error equals the centroid of
        # the noise-perturbed constraint polygon
        rng = np.random.default_rng(seed)
        scenario, angles = bounded_scenario(rng, 8, 0.2)
        draws = rng.normal(0, 0.2, (8, 2))
        nx, ny = np.cos(angles), np.sin(angles)
        proj = draws[:, 0] * nx + draws[:, 1] * ny
        res = estimate_hard(scenario, draws)
        direct = cmm_error_geometric([HalfPlane(a, 2.0) for a in angles], proj)
        assert res.error.x == pytest.approx(direct.x, abs=1e-9)
        assert res.error.y == pytest.approx(direct.y, abs=1e-9)


class TestCentroidMC:
    def test_square_accuracy(self):
        planes = [HalfPlane(a, 2.0) for a in ORTHO_NORMALS]
        c = centroid_mc(planes, 100_000, 7)
        assert abs(c.x) < 0.02 and abs(c.y) < 0.02

    def test_shrink_rate(self):
        rng = np.random.default_rng(3)
        angles = np.sort(rng.uniform(0, TWO_PI, 9))
        while np.diff(angles, append=angles[0] + TWO_PI).max() >= math.pi:
            angles = np.sort(rng.uniform(0, TWO_PI, 9))
        planes = [HalfPlane(a, 2.0) for a in angles]
        exact = region_centroid(halfplane_intersection(planes))
        ns = [400, 1600, 6400, 25600, 102400]
        errs = []
        for n in ns:
            runs = [
                (lambda c: math.hypot(c.x - exact.x, c.y - exact.y))(
                    centroid_mc(planes, n, 1000 + r, n)
                )
                for r in range(40)
            ]
            errs.append(np.mean(runs))
        slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert -0.6 < slope < -0.4

    def test_collapsed_region_rejected(self):
        # offsets shrunk to the single-point limit
        planes = [HalfPlane(a, 1e-15) for a in ORTHO_NORMALS]
        with pytest.raises(DegenerateRegionError):
            centroid_mc(planes, 1000, 5)

    def test_determinism(self):
        planes = [HalfPlane(a, 2.0) for a in ORTHO_NORMALS]
        assert centroid_mc(planes, 5000, 11) == centroid_mc(planes, 5000, 11)


class TestOrthogonalClosedForm:
    def test_zero(self):
        assert orthogonal_error_closed_form([[0.0]] * 4) == 0.0

    def test_hand_value(self):
        assert orthogonal_error_closed_form([[0.1], [0.2], [-0.1], [0.0]]) == pytest.approx(0.02)

    def test_empty_direction(self):
        with pytest.raises(UnboundedRegionError):
            orthogonal_error_closed_form([[0.1], [], [0.2], [0.0]])

    def test_agreement_with_geometry(self):
        rng = substream(31, 0)
        planes = [HalfPlane(a, 2.0) for a in ORTHO_NORMALS]
        for _ in range(1000):
            groups = [rng.normal(0, 0.3, int(rng.integers(1, 6))) for _ in range(4)]
            maxes = [g.max() for g in groups]
            closed = orthogonal_error_closed_form(groups)
            e = cmm_error_geometric(planes, maxes)
            assert abs(closed - e.norm_sq()) < 1e-12


class TestLinearize:
    def test_symmetric_center(self):
        model = linearize(ortho_scenario())
        assert model.e0.norm() < 1e-12
        assert model.S0 == pytest.approx(16.0, abs=1e-9)

    def test_analytic_matches_fd(self):
        rng = substream(33, 0)
        scenario, _ = bounded_scenario(rng, 14, 0.05)
        fd = linearize(scenario, method="fd")
        an = linearize(scenario, method="analytic")
        assert np.abs(fd.C - an.C).max() < 1e-4 * max(1.0, np.abs(an.C).max())

    def test_richardson_order(self):
        # first-order prediction error must fall ~4x when h halves
        rng = substream(34, 0)
        scenario, angles = bounded_scenario(rng, 8, 0.05)
        model = linearize(scenario, method="fd")
        planes = [HalfPlane(a, 2.0) for a in angles]
        i = 3

        def residual(h):
            proj = np.zeros(8)
            proj[i] = h
            e = cmm_error_geometric(planes, proj)
            pred_x = model.e0.x + model.C[0, i] * h / model.S0
            pred_y = model.e0.y + model.C[1, i] * h / model.S0
            return math.hypot(e.x - pred_x, e.y - pred_y)

        r1, r2 = residual(0.02), residual(0.01)
        assert r1 / r2 == pytest.approx(4.0, rel=0.35)

    def test_two_sided_columns(self):
        scenario = scenario_from_angles([0.0, 1.2, 2.5, 4.0], 2.0, 0.05, two_sided=True)
        fd = linearize(scenario, method="fd")
        an = linearize(scenario, method="analytic")
        assert fd.C.shape == (2, 4)
        assert np.abs(fd.C - an.C).max() < 1e-4 * max(1.0, np.abs(an.C).max())


class TestExpectedSqErrorLinear:
    def test_zero_noise_returns_geometric(self):
        rng = substream(35, 0)
        scenario, _ = bounded_scenario(rng, 9, 0.0)
        model = linearize(scenario)
        assert expected_sq_error_linear(model, scenario.noise) == pytest.approx(
            model.e0.norm_sq()
        )

    def test_quadratic_sigma_scaling(self):
        rng = substream(36, 0)
        scenario, _ = bounded_scenario(rng, 9, 0.1)
        model = linearize(scenario)
        base = expected_sq_error_linear(model, NoiseModel.constant(0.1, 9))
        geo = model.e0.norm_sq()
        scaled = expected_sq_error_linear(model, NoiseModel.constant(0.3, 9))
        assert scaled - geo == pytest.approx(9 * (base - geo), rel=1e-12)

    def test_never_below_geometric(self):
        rng = substream(37, 0)
        for k in range(20):
            scenario, _ = bounded_scenario(rng, 11, 0.4)
            model = linearize(scenario, method="analytic")
            assert expected_sq_error_linear(model, scenario.noise) >= model.e0.norm_sq()

    def test_matches_direct_mc_in_linear_regime(self):
        rng = substream(38, 0)
        n = 12
        scenario, _ = bounded_scenario(rng, n, 0.01)
        model = linearize(scenario)
        assert model.validity_ratio < 0.1
        pred = expected_sq_error_linear(model, scenario.noise)
        vals = []
        for k in range(5000):
            noise = substream(39, k).standard_normal((n, 2)) * 0.01
            vals.append(estimate_hard(scenario, noise).squared_error)
        assert abs(pred - np.mean(vals)) / np.mean(vals) < 0.05


class TestEstimateWeighted:
    def test_symmetric_zero(self):
        scenario = ortho_scenario(sigma=0.5)
        grid = WeightedGrid.default_for(scenario)
        res = estimate_weighted(scenario, np.zeros((4, 2)), grid)
        assert res.feasible
        assert abs(res.error.x) < grid.cell_size
        assert abs(res.error.y) < grid.cell_size

    def test_small_sigma_approaches_hard(self):
        # the grid must cover the whole polygon for the soft-to-hard limit,
        # so cap the largest angular gap (vertex radius is w / cos(gap/2))
        rng = substream(40, 0)
        angles = np.sort(rng.uniform(0, TWO_PI, 10))
        while np.diff(angles, append=angles[0] + TWO_PI).max() >= 2.0:
            angles = np.sort(rng.uniform(0, TWO_PI, 10))
        scenario = scenario_from_angles(angles - math.pi / 2, 2.0, 1e-3)
        draws = rng.standard_normal((10, 2)) * 1e-3
        hard = estimate_hard(scenario, draws)
        grid = WeightedGrid(4.0, 201)
        soft = estimate_weighted(scenario, draws, grid)
        sup = max(abs(soft.estimate.x - hard.estimate.x), abs(soft.estimate.y - hard.estimate.y))
        assert sup < 2 * grid.cell_size

    def test_zero_sigma_indicator_weights(self):
        scenario = ortho_scenario(sigma=0.0)
        grid = WeightedGrid(3.0, 151)
        res = estimate_weighted(scenario, np.zeros((4, 2)), grid)
        assert abs(res.error.x) < grid.cell_size

    def test_feasible_when_hard_estimator_is_not(self):
        scenario = ortho_scenario(sigma=5.0, w=0.5)
        draws = np.array([[5.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        assert not estimate_hard(scenario, draws).feasible
        res = estimate_weighted(scenario, draws)
        assert res.feasible and math.isfinite(res.squared_error)

    def test_common_error_covered_by_grid(self):
        scenario = scenario_from_angles(
            ORTHO_NORMALS - math.pi / 2, 2.0, 0.4, common_error=Vec2(0.8, -0.6)
        )
        draws = np.zeros((4, 2))
        res = estimate_weighted(scenario, draws)
        assert res.error.norm() < 0.1

    def test_rotation_equivariance(self):
        rng = substream(41, 0)
        scenario, angles = bounded_scenario(rng, 8, 0.5)
        draws = rng.standard_normal((8, 2)) * 0.5
        alpha = 0.7
        rot = np.array(
            [[math.cos(alpha), -math.sin(alpha)], [math.sin(alpha), math.cos(alpha)]]
        )
        scenario_r = scenario_from_angles(angles - math.pi / 2 + alpha, 2.0, 0.5)
        res = estimate_weighted(scenario, draws)
        res_r = estimate_weighted(scenario_r, draws @ rot.T)
        got = np.array([res_r.error.x, res_r.error.y])
        want = rot @ np.array([res.error.x, res.error.y])
        # grid quantization bounds the achievable agreement
        cell = WeightedGrid.default_for(scenario).cell_size
        assert np.abs(got - want).max() < 2 * cell


class TestScenarioValidation:
    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            FleetScenario(
                ortho_scenario().constraints, NoiseModel.constant(0.3, 3)
            )

    def test_wrong_draw_shape(self):
        with pytest.raises(ValueError):
            estimate_hard(ortho_scenario(), np.zeros((3, 2)))

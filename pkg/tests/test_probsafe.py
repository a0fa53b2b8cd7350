import numpy as np
import pytest

from oracles import brute_safety_prob
from riskdp import (IntervalSet, ProblemConfig, RiskSpec, StateGrid,
                    SystemModel, backward_solve, check_inclusions,
                    probabilistic_safe_set, risk_constrained_safe_set,
                    safety_probability_dp)
from riskdp.cli import inventory_cost

INV_MODEL = SystemModel.uniform(1.0, 1.0, [10.0, 20.0, 30.0], 0.0, 32.0)
SAFE = IntervalSet(0.0, 100.0)
GRID = StateGrid.regular(-40.0, 140.0, 1.0)


def node_index(grid, x):
    return int(np.searchsorted(grid.points, x))


class TestSafetyProbabilityDp:
    def test_one_step_full_control(self):
        tab = safety_probability_dp(INV_MODEL, SAFE, 1, GRID)
        assert tab.probs[0, node_index(GRID, 0.0)] == 1.0

    def test_one_step_capped_control(self):
        tab = safety_probability_dp(INV_MODEL, SAFE, 1, GRID, u_bounds=(0.0, 25.0))
        assert abs(tab.probs[0, node_index(GRID, 0.0)] - 2 / 3) < 1e-12

    def test_deterministic_invariance(self):
        # zero disturbance, u = 0 admissible, identity dynamics: staying put
        # is always safe from inside the interval
        model = SystemModel.uniform(1.0, 1.0, [0.0], 0.0, 5.0)
        tab = safety_probability_dp(model, SAFE, 4, GRID)
        inside = SAFE.contains(GRID.points)
        assert np.all(tab.probs[:, inside] == 1.0)

    def test_terminal_row_is_indicator(self):
        tab = safety_probability_dp(INV_MODEL, SAFE, 2, GRID)
        np.testing.assert_array_equal(tab.probs[2],
                                      SAFE.contains(GRID.points).astype(float))

    def test_range_and_brute_agreement(self):
        model = SystemModel.uniform(1.0, 0.9, [0.1, 0.3, -0.2], -0.5, 0.7)
        interval = IntervalSet(-0.8, 0.9)
        grid = StateGrid(np.linspace(-1.6, 1.6, 17))
        tab = safety_probability_dp(model, interval, 3, grid)
        assert np.all(tab.probs >= 0.0) and np.all(tab.probs <= 1.0)
        ref = brute_safety_prob(model, interval, 3, grid.points, u_step=1e-3)
        diff = tab.probs - ref
        # the breakpoint scan is exact on each linear piece, so it can only
        # improve on the dense-grid reference
        assert diff.min() > -1e-12
        assert diff.max() < 3e-3

    def test_negative_gain_model(self):
        model = SystemModel.uniform(1.0, -1.0, [0.1, -0.1], -0.6, 0.6)
        grid = StateGrid(np.linspace(-2.0, 2.0, 21))
        tab = safety_probability_dp(model, IntervalSet(-1.0, 1.0), 2, grid)
        ref = brute_safety_prob(model, IntervalSet(-1.0, 1.0), 2, grid.points, 1e-3)
        assert (tab.probs - ref).min() > -1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            safety_probability_dp(INV_MODEL, SAFE, 0, GRID)
        with pytest.raises(ValueError):
            safety_probability_dp(INV_MODEL, SAFE, 1, GRID, u_bounds=(1.0, 0.0))


class TestProbabilisticSafeSet:
    def test_thresholds(self):
        tab = safety_probability_dp(INV_MODEL, SAFE, 2, GRID)
        tiny = probabilistic_safe_set(tab, 1e-6)
        sure = probabilistic_safe_set(tab, 1.0)
        pos = GRID.points[tab.probs[0] > 0]
        assert tiny.lo == pos.min() and tiny.hi == pos.max()
        assert np.all(tab.probs[0][(GRID.points >= sure.lo)
                                   & (GRID.points <= sure.hi)] >= 1 - 1e-9)

    def test_monotone_in_alpha(self):
        tab = safety_probability_dp(INV_MODEL, SAFE, 3, GRID)
        prev = None
        for alpha in (0.2, 0.5, 0.8, 0.95, 1.0):
            s = probabilistic_safe_set(tab, alpha)
            if prev is not None and s is not None:
                assert prev.lo <= s.lo and s.hi <= prev.hi
            prev = s if s is not None else prev

    def test_empty_and_validation(self):
        grid = StateGrid.regular(-200.0, -190.0, 1.0)
        model = SystemModel.uniform(1.0, 1.0, [1.0], 0.0, 1.0)
        tab = safety_probability_dp(model, IntervalSet(0.0, 10.0), 1, grid)
        assert probabilistic_safe_set(tab, 0.5) is None
        with pytest.raises(ValueError):
            probabilistic_safe_set(tab, 0.0)
        with pytest.raises(ValueError):
            probabilistic_safe_set(tab, 1.1)


def toy_config(delta, alpha=0.8, horizon=2):
    model = SystemModel.uniform(1.0, 1.0, [8.0, 16.0, 24.0], 0.0, 28.0)
    grid = StateGrid.regular(-40.0, 140.0, 4.0)
    return ProblemConfig(model, inventory_cost(), SAFE,
                         RiskSpec(alpha, delta), horizon, grid)


class TestCheckInclusions:
    def test_hard_tolerance_equality(self):
        cfg = toy_config(delta=0.0)
        res = backward_solve(cfg)
        report = check_inclusions(res, cfg)
        assert report.all_hold
        eq = report.checks[0]
        assert eq.applicable and eq.holds and eq.offending_nodes == ()

    def test_alpha_independence_of_hard_set(self):
        tab = safety_probability_dp(toy_config(0.0).model, SAFE, 2,
                                    toy_config(0.0).grid)
        s1 = probabilistic_safe_set(tab, 1.0)
        cell = toy_config(0.0).grid.cell_width
        for alpha in (0.5, 0.9, 0.99):
            cfg = toy_config(0.0, alpha=alpha)
            rs = risk_constrained_safe_set(backward_solve(cfg), 0)
            assert abs(rs.lo - s1.lo) <= cell and abs(rs.hi - s1.hi) <= cell

    def test_slack_tolerance_inclusions(self):
        cfg = toy_config(delta=6.0)
        res = backward_solve(cfg)
        report = check_inclusions(res, cfg)
        assert report.all_hold
        names = [c.name for c in report.checks]
        assert "risk-constrained set within probabilistic set of dilated interval" in names
        assert not report.checks[0].applicable  # equality check needs delta = 0

    def test_vacuous_erosion(self):
        model = SystemModel.uniform(1.0, 1.0, [1.0, 2.0], 0.0, 6.0)
        grid = StateGrid.regular(-10.0, 20.0, 1.0)
        cfg = ProblemConfig(model, inventory_cost(), IntervalSet(0.0, 4.0),
                            RiskSpec(0.8, 3.0), 1, grid)
        res = backward_solve(cfg)
        report = check_inclusions(res, cfg)
        erosion = report.checks[-1]
        assert erosion.holds and erosion.lhs is None and "vacuous" in erosion.note

    def test_report_serializes(self):
        import json
        cfg = toy_config(delta=6.0)
        report = check_inclusions(backward_solve(cfg), cfg)
        payload = json.loads(json.dumps(report.to_dict()))
        assert payload["all_hold"] is True
        assert len(payload["checks"]) == 3

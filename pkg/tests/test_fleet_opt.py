"""Lambert W, unit-count economics and the joint cost/size planner."""

import math

import numpy as np
import pytest

from roadmon.coverage_model import GompertzParams
from roadmon.fleet_opt import (
    PowerSampling, TableSampling, ThreatScenario, feasible, lambert_w,
    normalized_benefit, optimal_unit_cost, optimal_unit_count, plan_fleet,
    sampling_free_diagnostic,
)

import oracles

CASE = GompertzParams(1.0, -0.2, -0.05)
GBC = GompertzParams(0.89, -2.0, -0.04)
TABLE_POINTS = [(0.05, 0.1), (0.2, 0.35), (0.5, 0.6), (1.0, 0.95)]


# ---------------------------------------------------------------------------
# Lambert W

def test_lambert_known_values():
    assert lambert_w("principal", 0.0) == 0.0
    # Omega constant, W(1)
    assert abs(lambert_w("principal", 1.0) - 0.5671432904097838) <= 1e-15
    assert abs(lambert_w("principal", math.e) - 1.0) <= 1e-15
    assert round(lambert_w("minus_one", -0.05), 6) == -4.499755


def test_lambert_branch_point():
    x_bp = -math.exp(-1.0)
    assert lambert_w("principal", x_bp) == -1.0
    assert lambert_w("minus_one", x_bp) == -1.0
    # inputs a hair below -1/e are snapped to the branch point
    assert lambert_w("principal", x_bp * (1.0 + 1e-13)) == -1.0
    assert lambert_w("minus_one", x_bp * (1.0 + 1e-13)) == -1.0
    with pytest.raises(ValueError):
        lambert_w("principal", x_bp * (1.0 + 1e-9))


@pytest.mark.parametrize("branch,x", [
    ("principal", -0.5),
    ("minus_one", 0.0),
    ("minus_one", 0.25),
    ("minus_one", -0.7),
])
def test_lambert_domain_errors(branch, x):
    with pytest.raises(ValueError):
        lambert_w(branch, x)


def test_lambert_rejects_nan_and_unknown_branch():
    with pytest.raises(ValueError):
        lambert_w("principal", float("nan"))
    with pytest.raises(ValueError):
        lambert_w("W0", 1.0)


def test_lambert_identity_principal():
    xs = [-0.367879, -0.36, -0.3, -0.1, -1e-4, -1e-10,
          1e-10, 1e-4, 0.2, 1.0, 5.0, 100.0, 1e6, 1e12, 1e100]
    for x in xs:
        w = lambert_w("principal", x)
        assert w >= -1.0
        assert abs(w * math.exp(w) - x) <= 1e-12 * abs(x)


def test_lambert_identity_minus_one():
    xs = [-0.3678, -0.36, -0.3, -0.2, -0.1, -0.05, -1e-3, -1e-6, -1e-12]
    for x in xs:
        w = lambert_w("minus_one", x)
        assert w <= -1.0
        assert abs(w * math.exp(w) - x) <= 1e-12 * abs(x)


def test_lambert_matches_bisection_oracle():
    for x in np.geomspace(1e-12, 1e8, 25):
        w = lambert_w("principal", float(x))
        ref = oracles.lambert_bisect("principal", float(x))
        assert abs(w - ref) <= 1e-12 * max(1.0, abs(ref))
    for x in -np.geomspace(1e-12, 0.3678, 25):
        for branch in ("principal", "minus_one"):
            w = lambert_w(branch, float(x))
            ref = oracles.lambert_bisect(branch, float(x))
            assert abs(w - ref) <= 1e-12 * max(1.0, abs(ref))


def test_lambert_branch_monotonicity():
    xs = np.linspace(-0.36, -1e-6, 40)
    w0 = [lambert_w("principal", float(x)) for x in xs]
    w1 = [lambert_w("minus_one", float(x)) for x in xs]
    assert all(b > a for a, b in zip(w0, w0[1:]))
    assert all(b < a for a, b in zip(w1, w1[1:]))
    assert all(u >= -1.0 >= v for u, v in zip(w0, w1))


# ---------------------------------------------------------------------------
# feasibility and the benefit function

def test_feasibility_threshold():
    thr = -CASE.a * CASE.c / math.e
    assert round(thr, 6) == 0.018394
    # powers of two keep cost / c_attack exact at the boundary
    assert feasible(thr * 2.0 ** 20, 2.0 ** 20, CASE)
    assert feasible(0.0183 * 1e7, 1e7, CASE)
    assert not feasible(0.05 * 1e7, 1e7, CASE)
    assert not feasible(thr * 2.0 ** 20 * (1.0 + 1e-9), 2.0 ** 20, CASE)
    assert feasible(thr * 1e7, 2e7, CASE, sampling=0.5)
    assert not feasible(thr * 1e7, 1e7, CASE, sampling=0.4)


def test_feasibility_input_validation():
    with pytest.raises(ValueError):
        feasible(-1.0, 1e6, CASE)
    with pytest.raises(ValueError):
        feasible(10.0, 0.0, CASE)
    with pytest.raises(ValueError):
        feasible(10.0, 1e6, CASE, sampling=0.0)


def test_benefit_zero_units():
    got = normalized_benefit(CASE, 0, 5000.0, 1e7)
    assert got == pytest.approx(1e7 * math.exp(-0.2), rel=1e-15)


def test_benefit_hand_value():
    got = normalized_benefit(CASE, 60, 5000.0, 1e7)
    want = 1e7 * math.exp(-0.2 * math.exp(-3.0)) - 300000.0
    assert got == pytest.approx(want, rel=1e-12)
    assert round(got) == 9600920


def test_benefit_zero_sampling_is_pure_cost():
    assert normalized_benefit(CASE, 7, 100.0, 1e6, sampling=0.0) == -700.0


def test_benefit_vectorized_matches_scalar():
    ns = np.arange(0.0, 40.0, 3.0)
    vec = normalized_benefit(GBC, ns, 800.0, 5e5, 0.9)
    assert vec.shape == ns.shape
    for n, v in zip(ns, vec):
        assert v == normalized_benefit(GBC, float(n), 800.0, 5e5, 0.9)


def test_benefit_input_validation():
    with pytest.raises(ValueError):
        normalized_benefit(CASE, 1, -1.0, 1e6)
    with pytest.raises(ValueError):
        normalized_benefit(CASE, 1, 10.0, 0.0)
    with pytest.raises(ValueError):
        normalized_benefit(CASE, 1, 10.0, 1e6, sampling=-0.1)


# ---------------------------------------------------------------------------
# optimal unit count

def test_unit_count_closed_form_example():
    sol = optimal_unit_count(CASE, 5000.0, 1e7)
    assert sol.feasible
    assert round(sol.n1, 3) == 59.713
    assert -69.6 < sol.n2 < -69.5
    assert sol.recommended_n == 60
    assert sol.closed_form_match
    assert sol.gamma == pytest.approx(0.05, rel=1e-12)
    assert sol.recommended_omega == normalized_benefit(CASE, 60, 5000.0, 1e7)
    # the continuous peak cannot sit below the best integer
    assert sol.omega1 is not None and sol.omega1 >= sol.recommended_omega
    assert sol.omega2 is None


def test_unit_count_matches_grid_oracle():
    n_ref, omega_ref = oracles.omega_argmax(1.0, -0.2, -0.05, 5000.0, 1e7)
    sol = optimal_unit_count(CASE, 5000.0, 1e7)
    assert sol.recommended_n == n_ref == 60
    assert sol.recommended_omega == pytest.approx(omega_ref, rel=1e-12)


def test_unit_count_boundary_double_root():
    cost = (-CASE.a * CASE.c / math.e) * 1e7
    sol = optimal_unit_count(CASE, cost, 1e7)
    assert sol.feasible
    assert sol.n1 == pytest.approx(sol.n2, abs=1e-6)
    assert round(sol.n1, 2) == -32.19
    assert sol.recommended_n == 0
    assert sol.closed_form_match


def test_unit_count_low_threat_prefers_zero():
    sol = optimal_unit_count(CASE, 5000.0, 6e5)
    assert sol.feasible
    assert sol.n1 < 0.0
    assert sol.n2 < sol.n1
    assert sol.recommended_n == 0
    assert sol.recommended_omega == pytest.approx(6e5 * math.exp(-0.2),
                                                  rel=1e-12)
    assert sol.omega1 is None and sol.omega2 is None
    assert sol.closed_form_match


def test_unit_count_infeasible_reports_no_roots():
    sol = optimal_unit_count(CASE, 0.05 * 1e7, 1e7)
    assert not sol.feasible
    assert sol.n1 is None and sol.n2 is None
    assert sol.omega1 is None and sol.omega2 is None
    assert sol.recommended_n == 0
    assert sol.closed_form_match


def test_unit_count_input_validation():
    with pytest.raises(ValueError):
        optimal_unit_count(CASE, 0.0, 1e6)
    with pytest.raises(ValueError):
        optimal_unit_count(CASE, 10.0, 0.0)
    with pytest.raises(ValueError):
        optimal_unit_count(CASE, 10.0, 1e6, sampling=0.0)


def _random_scenario(rng):
    a = float(rng.uniform(0.3, 1.0))
    b = float(-rng.uniform(0.3, 3.0))
    c = float(-rng.uniform(0.01, 0.09))
    params = GompertzParams(a, b, c)
    c_attack = float(10.0 ** rng.uniform(5.0, 8.0))
    sampling = float(rng.uniform(0.2, 1.0))
    ratio = float(rng.uniform(0.02, 0.95))
    cost = ratio * (-a * c / math.e) * c_attack * sampling
    return params, cost, c_attack, sampling


def test_unit_count_agrees_with_oracle_on_random_scenarios(rng):
    for _ in range(15):
        params, cost, c_attack, sampling = _random_scenario(rng)
        sol = optimal_unit_count(params, cost, c_attack, sampling)
        n_ref, omega_ref = oracles.omega_argmax(
            params.a, params.b, params.c, cost, c_attack, sampling)
        assert sol.feasible
        assert sol.recommended_n == n_ref
        assert sol.recommended_omega == pytest.approx(omega_ref, rel=1e-9)


def test_unit_count_roots_are_stationary_and_ordered(rng):
    checked = 0
    for _ in range(30):
        params, cost, c_attack, sampling = _random_scenario(rng)
        sol = optimal_unit_count(params, cost, c_attack, sampling)
        lg = math.log(sol.gamma)
        w1 = lg - params.c * sol.n1
        w2 = lg - params.c * sol.n2
        assert w1 >= -1.0 - 1e-9
        assert w2 <= -1.0 + 1e-9
        assert sol.n1 > sol.n2
        if sol.n1 > 1e-3:
            h = 1e-4
            fd = (normalized_benefit(params, sol.n1 + h, cost, c_attack,
                                     sampling)
                  - normalized_benefit(params, sol.n1 - h, cost, c_attack,
                                       sampling)) / (2.0 * h)
            assert abs(fd) <= 1e-6 * c_attack * sampling
            checked += 1
    assert checked >= 5


def test_unit_count_scale_covariance():
    base = optimal_unit_count(CASE, 5000.0, 1e7)
    for lam in (0.1, 10.0):
        scaled = optimal_unit_count(CASE, lam * 5000.0, lam * 1e7)
        assert scaled.recommended_n == base.recommended_n
        assert scaled.n1 == pytest.approx(base.n1, rel=1e-12)
        assert scaled.recommended_omega == pytest.approx(
            lam * base.recommended_omega, rel=1e-9)


# ---------------------------------------------------------------------------
# stationary unit costs

def test_stationary_cost_quadratic_sampling():
    scenario = ThreatScenario(1e7, 5000.0)
    points = optimal_unit_cost(CASE, scenario, PowerSampling(2.0))
    assert len(points) == 1
    pt = points[0]
    assert pt.branch == "principal"
    assert abs(pt.gamma - 1.77356) <= 1e-3
    coeff = pt.cost * scenario.c_attack / scenario.cost_base ** 2
    assert abs(coeff - 56.384) <= 0.01
    # quadratic sampling: gamma = cost_base^2 / (cost * abc * c_attack)
    assert pt.gamma == pytest.approx(
        scenario.cost_base ** 2
        / (pt.cost * CASE.a * CASE.b * CASE.c * scenario.c_attack), rel=1e-9)
    assert pt.classification == "saddle-by-grid"


def test_stationary_cost_scale_covariance():
    pts0 = optimal_unit_cost(CASE, ThreatScenario(1e7, 5000.0),
                             PowerSampling(2.0))
    pts1 = optimal_unit_cost(CASE, ThreatScenario(1e8, 50000.0),
                             PowerSampling(2.0))
    assert len(pts0) == len(pts1) == 1
    assert pts1[0].cost == pytest.approx(10.0 * pts0[0].cost, rel=1e-9)
    assert pts1[0].gamma == pytest.approx(pts0[0].gamma, rel=1e-9)


def test_stationary_cost_linear_sampling_has_none():
    scenario = ThreatScenario(1e7, 5000.0)
    assert optimal_unit_cost(CASE, scenario, PowerSampling(1.0)) == []
    assert sampling_free_diagnostic(CASE, scenario, PowerSampling(1.0)) is None


def test_stationary_cost_table_sampling_structure():
    scenario = ThreatScenario(1e7, 5000.0)
    model = TableSampling(TABLE_POINTS)
    points = optimal_unit_cost(CASE, scenario, model)
    assert points == optimal_unit_cost(CASE, scenario, model)
    assert [p.cost for p in points] == sorted(p.cost for p in points)
    for p in points:
        assert 0.0 < p.cost <= scenario.cost_base
        assert p.branch in ("principal", "minus_one")
        assert p.classification in ("max", "min", "saddle-by-grid")
        assert p.gamma > 0.0


@pytest.mark.parametrize("model", [PowerSampling(2.0),
                                   TableSampling(TABLE_POINTS)])
def test_stationary_classification_matches_probe(model):
    scenario = ThreatScenario(1e7, 5000.0)

    def best(u):
        s = model(u)
        return oracles.omega_argmax(CASE.a, CASE.b, CASE.c,
                                    u * scenario.cost_base,
                                    scenario.c_attack, s)[1]

    for pt in optimal_unit_cost(CASE, scenario, model):
        u = pt.cost / scenario.cost_base
        mid, lo, hi = best(u), best(0.99 * u), best(1.01 * u)
        if pt.classification == "max":
            assert mid > lo and mid > hi
        elif pt.classification == "min":
            assert mid < lo and mid < hi
        else:
            assert not (mid > lo and mid > hi)
            assert not (mid < lo and mid < hi)


def test_sampling_free_diagnostic_constants():
    scenario = ThreatScenario(1e7, 5000.0)
    diag = sampling_free_diagnostic(CASE, scenario, PowerSampling(2.0))
    assert diag is not None
    assert diag.cost == pytest.approx(140.96, abs=0.01)
    scale = scenario.c_attack ** 2 / scenario.cost_base ** 2
    assert abs(diag.w_argument * scale - (-1127.675)) <= 0.01
    # -1/c = 20 for this curve; the cost-free shift is a fixed constant
    w_ref = oracles.lambert_bisect("principal", float(diag.w_argument))
    shift = diag.n1 - 20.0 * w_ref \
        + 40.0 * math.log(scenario.cost_base / scenario.c_attack)
    assert abs(shift - (-172.747)) <= 1e-3
    assert diag.n2 < 0.0 < diag.n1
    assert diag.gamma == pytest.approx(
        (diag.cost / scenario.c_attack) / (CASE.a * CASE.b * CASE.c),
        rel=1e-12)


# ---------------------------------------------------------------------------
# joint plan

def test_plan_quadratic_no_catalog_prefers_cost_ceiling():
    plan = plan_fleet(CASE, ThreatScenario(1e7, 5000.0), PowerSampling(2.0))
    assert plan.method == "boundary"
    assert plan.unit_cost == 5000.0
    assert plan.sampling == 1.0
    assert plan.n_units == 60
    assert plan.omega == normalized_benefit(CASE, 60, 5000.0, 1e7, 1.0)


def test_plan_catalog_restricts_choices():
    scenario = ThreatScenario(1e7, 5000.0, (1000.0, 4000.0, 6000.0))
    assert scenario.catalog == (1000.0, 4000.0)
    plan = plan_fleet(CASE, scenario, PowerSampling(2.0))
    assert plan.method == "grid_verified"
    assert plan.unit_cost == 4000.0
    assert plan.sampling == (4000.0 / 5000.0) ** 2.0
    assert plan.n_units == 55
    cands = []
    for cost in scenario.catalog:
        u = cost / scenario.cost_base
        s = u ** 2.0
        n_ref, _ = oracles.omega_argmax(CASE.a, CASE.b, CASE.c,
                                        u * scenario.cost_base,
                                        scenario.c_attack, s)
        cands.append(normalized_benefit(CASE, n_ref, u * scenario.cost_base,
                                        scenario.c_attack, s))
    assert plan.omega == max(cands)


def test_plan_tiny_attack_value_buys_nothing():
    plan = plan_fleet(CASE, ThreatScenario(1e-6, 5000.0), PowerSampling(2.0))
    assert plan.n_units == 0
    assert plan.unit_cost == 5000.0
    assert plan.method == "boundary"
    assert plan.omega == pytest.approx(1e-6 * math.exp(-0.2), rel=1e-12)


@pytest.mark.parametrize("scenario,model", [
    (ThreatScenario(1e7, 5000.0), PowerSampling(2.0)),
    (ThreatScenario(1e7, 5000.0, (1000.0, 4000.0)), PowerSampling(2.0)),
    (ThreatScenario(3e6, 2000.0), TableSampling(TABLE_POINTS)),
])
def test_plan_omega_matches_direct_recompute(scenario, model):
    plan = plan_fleet(CASE, scenario, model)
    assert plan.omega == normalized_benefit(CASE, plan.n_units,
                                            plan.unit_cost,
                                            scenario.c_attack, plan.sampling)
    assert plan.n_units >= 0
    assert 0.0 < plan.unit_cost <= scenario.cost_base


def test_plan_scale_covariance():
    model = PowerSampling(2.0)
    base = plan_fleet(GBC, ThreatScenario(2e6, 3000.0), model)
    for lam in (0.1, 10.0):
        scaled = plan_fleet(GBC, ThreatScenario(lam * 2e6, lam * 3000.0),
                            model)
        assert scaled.n_units == base.n_units
        assert scaled.sampling == pytest.approx(base.sampling, rel=1e-9)
        assert scaled.unit_cost == pytest.approx(lam * base.unit_cost,
                                                 rel=1e-9)
        assert scaled.omega == pytest.approx(lam * base.omega, rel=1e-9)


@pytest.mark.parametrize("scenario,model", [
    (ThreatScenario(1e7, 5000.0), PowerSampling(2.0)),
    (ThreatScenario(4e6, 2500.0), TableSampling(TABLE_POINTS)),
    (ThreatScenario(1e7, 5000.0, (500.0, 1000.0, 2500.0, 4000.0)),
     PowerSampling(2.0)),
])
def test_plan_dominates_oracle_grid(scenario, model):
    plan = plan_fleet(CASE, scenario, model)
    if scenario.catalog:
        us = [c / scenario.cost_base for c in scenario.catalog]
    else:
        us = np.geomspace(1e-4, 1.0, 80).tolist()
    gmax = -math.inf
    for u in us:
        s = model(u)
        if s <= 0.0:
            continue
        gmax = max(gmax, oracles.omega_argmax(
            CASE.a, CASE.b, CASE.c, u * scenario.cost_base,
            scenario.c_attack, s)[1])
    slack = 1e-9 * max(1.0, abs(gmax))
    assert plan.omega >= gmax - slack
    if scenario.catalog:
        assert plan.unit_cost in scenario.catalog
        assert plan.omega <= gmax + slack


# ---------------------------------------------------------------------------
# sampling models and scenarios

def test_table_sampling_piecewise_values():
    f = TableSampling(TABLE_POINTS)
    assert f(0.05) == 0.1
    assert f(1.0) == 0.95
    assert f(0.2) == pytest.approx(0.35, rel=1e-12)
    assert f(0.125) == pytest.approx(0.225, rel=1e-12)
    mid = 0.35 + (0.6 - 0.35) * (0.35 - 0.2) / (0.5 - 0.2)
    assert f(0.35) == pytest.approx(mid, rel=1e-12)
    assert f(0.01) == 0.1
    assert f(1.5) == 0.95


def test_table_sampling_derivative_matches_secant():
    f = TableSampling(TABLE_POINTS)
    for u, slope in ((0.125, (0.35 - 0.1) / (0.2 - 0.05)),
                     (0.35, (0.6 - 0.35) / (0.5 - 0.2)),
                     (0.7, (0.95 - 0.6) / (1.0 - 0.5))):
        assert f.derivative(u) == pytest.approx(slope, rel=1e-5)
        assert f.elasticity(u) == pytest.approx(
            u * f.derivative(u) / f(u), rel=1e-12)


@pytest.mark.parametrize("points", [
    [(0.1, 0.5)],
    [(0.1, 0.5), (0.1, 0.6)],
    [(0.1, 0.6), (0.5, 0.4)],
    [(0.1, 0.5), (1.2, 0.9)],
    [(0.1, 0.5), (0.5, 1.2)],
    [(0.1, 0.0), (0.5, 0.5)],
    [(-0.2, 0.1), (0.5, 0.5)],
])
def test_table_sampling_validation(points):
    with pytest.raises(ValueError):
        TableSampling(points)


def test_power_sampling_properties():
    f = PowerSampling(2.0)
    assert f(1.0) == 1.0
    assert f(0.5) == 0.25
    assert f.derivative(0.5) == 1.0
    assert f.elasticity(0.37) == 2.0
    g = PowerSampling(0.5)
    assert g(0.25) == 0.5
    assert g.elasticity(0.8) == 0.5
    with pytest.raises(ValueError):
        PowerSampling(0.0)
    with pytest.raises(ValueError):
        PowerSampling(-1.0)


def test_scenario_validation_and_catalog_filter():
    with pytest.raises(ValueError):
        ThreatScenario(0.0, 100.0)
    with pytest.raises(ValueError):
        ThreatScenario(1e6, -5.0)
    s = ThreatScenario(1e6, 5000.0, (6000.0, 1000.0, 4000.0, -3.0, 0.0))
    assert s.catalog == (1000.0, 4000.0)

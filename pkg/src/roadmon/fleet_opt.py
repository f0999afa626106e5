"""Fleet economics: how many monitoring units to buy, and at what quality.

The attacker-denial benefit of fielding n units of per-unit cost p is

    omega(n) = C_ATTACK * f_S(p / COST_BASE) * M(n) - n * p

with M the Gompertz coverage curve and f_S a sampling-quality factor of
relative unit cost. Interior optima in n satisfy M'(n) = p / (C * f_S),
solved in closed form with the real Lambert W branches and always cross
checked against an integer grid. Stationary per-unit costs come from the
first-order condition in p, which reduces to a scalar root problem in the
log-benefit factor gamma.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .coverage_model import GompertzParams, gompertz_eval

_BRANCH_POINT = -math.exp(-1.0)      # -1/e, where the two real branches meet
_GRID_LIMIT = 200000                 # dense integer grid cap for omega search


# ---------------------------------------------------------------------------
# Lambert W

def _halley(w: float, x: float) -> float:
    # solves w * e^w = x from a nearby seed; second-order steps
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            break
        wp1 = w + 1.0
        if abs(wp1) < 1e-8:
            break                     # at the branch point the seed is the answer
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-16 * (2.0 + abs(w)):
            break
    return w


def _series_small(x: float) -> float:
    # alternating series around 0: sum (-1)^(n-1) n^(n-2)/(n-1)! x^n
    total = 0.0
    for k in range(1, 12):
        coef = (-1.0) ** (k - 1) * k ** (k - 2) / math.factorial(k - 1)
        total += coef * x ** k
    return total


def _branch_series(p: float) -> float:
    # expansion at the branch point, p = +-sqrt(2 (e x + 1))
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0
                                                    + p * (-43.0 / 540.0))))


def lambert_w(branch: str, x: float) -> float:
    """Real Lambert W: solve w * e^w = x on the requested branch.

    branch "principal" covers x >= -1/e; branch "minus_one" covers
    -1/e <= x < 0 and returns w <= -1. Inputs within a relative 1e-12 of
    the branch point are treated as the branch point itself.
    """
    if branch not in ("principal", "minus_one"):
        raise ValueError(f"unknown branch {branch!r}")
    if x != x:
        raise ValueError("x must be a number")
    t = math.e * x + 1.0              # p^2 / 2 in branch-point coordinates
    if t < 0.0:
        if t >= -1e-12:
            return -1.0
        raise ValueError(f"x={x!r} below the branch point -1/e")

    if branch == "principal":
        if t == 0.0:
            return -1.0
        if x < -0.32:
            w = _branch_series(math.sqrt(2.0 * t))
        elif abs(x) < 0.3:
            w = _series_small(x)
        elif x < 2.0:
            w = math.log(1.0 + x)
        else:
            l1 = math.log(x)
            l2 = math.log(l1)
            w = l1 - l2 + l2 / l1
        return _halley(w, x)

    if x >= 0.0:
        raise ValueError("minus_one branch needs x < 0")
    if t == 0.0:
        return -1.0
    if x < -0.27:
        w = _branch_series(-math.sqrt(2.0 * t))
    else:
        l1 = math.log(-x)
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1
    return _halley(w, x)


# ---------------------------------------------------------------------------
# sampling-quality models

class SamplingModel:
    """Sampling quality versus relative unit cost u = cost / COST_BASE.

    Nondecreasing on (0, 1], positive for u > 0, and f(1) <= 1. Values
    above u = 1 extrapolate (power law) or hold the last point (table);
    they only arise in diagnostics, never in plan selection.
    """

    def __call__(self, u: float) -> float:
        raise NotImplementedError

    def derivative(self, u: float) -> float:
        raise NotImplementedError

    def elasticity(self, u: float) -> float:
        """u * f'(u) / f(u); constant p for the power family."""
        return u * self.derivative(u) / self(u)


class PowerSampling(SamplingModel):
    """f(u) = u ** exponent, exponent > 0."""

    def __init__(self, exponent: float):
        if exponent <= 0:
            raise ValueError("exponent must be > 0")
        self.exponent = float(exponent)

    def __call__(self, u):
        return u ** self.exponent

    def derivative(self, u):
        return self.exponent * u ** (self.exponent - 1.0)

    def elasticity(self, u):
        return self.exponent

    def __repr__(self):
        return f"PowerSampling({self.exponent!r})"


class TableSampling(SamplingModel):
    """Piecewise-linear f through (u, quality) points, clamped outside."""

    def __init__(self, points):
        pts = sorted((float(u), float(q)) for u, q in points)
        if len(pts) < 2:
            raise ValueError("need at least 2 table points")
        us = [u for u, _ in pts]
        qs = [q for _, q in pts]
        if len(set(us)) != len(us):
            raise ValueError("table u values must be distinct")
        if us[0] < 0 or us[-1] > 1:
            raise ValueError("table u values must lie in [0, 1]")
        if any(q2 < q1 for q1, q2 in zip(qs, qs[1:])):
            raise ValueError("table must be nondecreasing")
        if qs[-1] > 1 or qs[0] < 0:
            raise ValueError("table quality must lie in [0, 1]")
        if any(q <= 0 for u, q in pts if u > 0):
            raise ValueError("quality must be > 0 for u > 0")
        self.us = us
        self.qs = qs

    def __call__(self, u):
        if u <= self.us[0]:
            return self.qs[0]
        if u >= self.us[-1]:
            return self.qs[-1]
        i = bisect_left(self.us, u)
        u0, u1 = self.us[i - 1], self.us[i]
        q0, q1 = self.qs[i - 1], self.qs[i]
        return q0 + (q1 - q0) * (u - u0) / (u1 - u0)

    def derivative(self, u):
        h = 1e-6
        lo = max(u - h, self.us[0])
        hi = min(u + h, self.us[-1])
        if hi <= lo:
            return 0.0
        return (self(hi) - self(lo)) / (hi - lo)

    def __repr__(self):
        return f"TableSampling({list(zip(self.us, self.qs))!r})"


@dataclass(frozen=True)
class ThreatScenario:
    """Economic context: attack value, best unit cost, optional price list."""

    c_attack: float
    cost_base: float
    catalog: tuple[float, ...] = ()

    def __post_init__(self):
        if self.c_attack <= 0:
            raise ValueError("c_attack must be > 0")
        if self.cost_base <= 0:
            raise ValueError("cost_base must be > 0")
        kept = tuple(sorted(float(c) for c in self.catalog
                            if 0 < c <= self.cost_base))
        object.__setattr__(self, "catalog", kept)


# ---------------------------------------------------------------------------
# benefit in n

def normalized_benefit(params: GompertzParams, n, cost_per_unit: float,
                       c_attack: float, sampling: float = 1.0):
    """omega(n) = c_attack * sampling * M(n) - n * cost_per_unit."""
    if cost_per_unit < 0:
        raise ValueError("cost_per_unit must be >= 0")
    if c_attack <= 0:
        raise ValueError("c_attack must be > 0")
    if sampling < 0:
        raise ValueError("sampling must be >= 0")
    n_arr = np.asarray(n, dtype=float)
    out = c_attack * sampling * gompertz_eval(params, n_arr) \
        - n_arr * cost_per_unit
    return float(out) if out.ndim == 0 else out


def feasible(cost_per_unit: float, c_attack: float, params: GompertzParams,
             sampling: float = 1.0) -> bool:
    """True when some real fleet size has nonnegative marginal value.

    Interior optima exist iff cost / (c_attack * sampling) <= -a c / e.
    """
    if cost_per_unit < 0 or c_attack <= 0 or sampling <= 0:
        raise ValueError("cost >= 0 and c_attack, sampling > 0 required")
    return cost_per_unit / (c_attack * sampling) \
        <= -params.a * params.c / math.e


@dataclass(frozen=True)
class UnitCountSolution:
    """Closed-form stationary fleet sizes plus the grid-verified choice.

    n1 (principal branch) is the local maximum, n2 (minus-one branch) the
    local minimum; either may be negative and is then only diagnostic.
    recommended_n always maximizes omega over the integer grid.
    """

    n1: Optional[float]
    n2: Optional[float]
    omega1: Optional[float]
    omega2: Optional[float]
    gamma: float
    feasible: bool
    recommended_n: int
    recommended_omega: float
    closed_form_match: bool


def _saturation_size(params: GompertzParams) -> int:
    # smallest n with a - M(n) <= 1e-9, from b e^(c n) >= log1p(-1e-9 / a)
    thr = math.log1p(-1e-9 / params.a)
    arg = thr / params.b
    if arg >= 1.0:
        return 0
    return int(math.ceil(math.log(arg) / params.c))


def optimal_unit_count(params: GompertzParams, cost_per_unit: float,
                       c_attack: float, sampling: float = 1.0) -> UnitCountSolution:
    """Best integer fleet size for fixed unit cost.

    Closed-form roots n = (ln gamma - W(x)) / c with x = r / (a c),
    gamma = r / (a b c), r = cost / (c_attack * sampling), on both real
    branches; the returned recommendation is the integer-grid argmax of
    omega (ties to the smallest n), which the roots must agree with.
    """
    if cost_per_unit <= 0:
        raise ValueError("cost_per_unit must be > 0")
    if c_attack <= 0 or sampling <= 0:
        raise ValueError("c_attack and sampling must be > 0")
    a, b, c = params.a, params.b, params.c
    r = cost_per_unit / (c_attack * sampling)
    gamma = r / (a * b * c)
    x_w = r / (a * c)
    ok = x_w >= _BRANCH_POINT * (1.0 + 1e-12)

    n1 = n2 = omega1 = omega2 = None
    if ok:
        lg = math.log(gamma)
        n1 = (lg - lambert_w("principal", x_w)) / c
        n2 = (lg - lambert_w("minus_one", x_w)) / c
        if n1 >= 0:
            omega1 = normalized_benefit(params, n1, cost_per_unit, c_attack,
                                        sampling)
        if n2 >= 0:
            omega2 = normalized_benefit(params, n2, cost_per_unit, c_attack,
                                        sampling)

    cap = _saturation_size(params) + 16
    candidates = set(range(0, min(cap, _GRID_LIMIT) + 1))
    for root in (n1, n2):
        if root is not None and root >= 0:
            base = int(math.floor(root))
            candidates.update(m for m in range(base - 2, base + 3) if m >= 0)
    grid = np.array(sorted(candidates), dtype=float)
    omegas = normalized_benefit(params, grid, cost_per_unit, c_attack,
                                sampling)
    best = int(np.argmax(omegas))
    rec = int(grid[best])
    rec_omega = float(omegas[best])

    match = False
    if n1 is not None and n1 >= 0:
        match = rec in (int(math.floor(n1)), int(math.ceil(n1)))
    if rec == 0 and not match:
        match = n1 is None or (n1 is not None and n1 < 1)
    return UnitCountSolution(n1, n2, omega1, omega2, gamma, ok, rec,
                             rec_omega, match)


# ---------------------------------------------------------------------------
# stationary unit costs

@dataclass(frozen=True)
class StationaryPoint:
    cost: float
    gamma: float
    branch: str
    classification: str


def _gamma_of_u(params: GompertzParams, ratio_cb: float,
                sampling_model: SamplingModel, u: float) -> float:
    # gamma(u) = (u / f(u)) * cost_base / (a b c * c_attack)
    a, b, c = params.a, params.b, params.c
    return u * ratio_cb / (a * b * c * sampling_model(u))


def _stationarity(params: GompertzParams, ratio_cb: float,
                  sampling_model: SamplingModel, branch: str,
                  u: float) -> Optional[float]:
    """First-order condition in unit cost, as a scalar function of u.

    Vanishes where W(b gamma) - ln gamma + (1 - E(u)) / W(b gamma) = 0,
    with E the sampling elasticity. None where W is not defined.
    """
    gamma = _gamma_of_u(params, ratio_cb, sampling_model, u)
    if gamma <= 0:
        return None
    arg = params.b * gamma
    if arg < _BRANCH_POINT * (1.0 + 1e-12) or arg >= 0:
        return None
    try:
        w = lambert_w(branch, arg)
    except ValueError:
        return None
    if w == 0.0:
        return None
    e = sampling_model.elasticity(u)
    return w - math.log(gamma) + (1.0 - e) / w


def _best_omega_at(params: GompertzParams, scenario: ThreatScenario,
                   sampling_model: SamplingModel, u: float):
    s = sampling_model(u)
    cost = u * scenario.cost_base
    if s <= 0 or cost <= 0:
        return 0, 0.0
    sol = optimal_unit_count(params, cost, scenario.c_attack, s)
    return sol.recommended_n, sol.recommended_omega


def optimal_unit_cost(params: GompertzParams, scenario: ThreatScenario,
                      sampling_model: SamplingModel) -> list[StationaryPoint]:
    """Unit costs where the benefit is stationary in cost, both branches.

    Roots are located by sign scan over relative cost u in (0, 1] and
    bisection, then classified by comparing the grid-best omega against
    +-1 percent cost perturbations (max, min, or saddle-by-grid). An empty
    list means no interior stationary cost: for linear sampling gamma is
    cost free and the condition never crosses zero.
    """
    ratio_cb = scenario.cost_base / scenario.c_attack
    points: list[StationaryPoint] = []
    us = np.geomspace(1e-6, 1.0, 400)
    for branch in ("principal", "minus_one"):
        vals = [_stationarity(params, ratio_cb, sampling_model, branch, u)
                for u in us]
        for i in range(len(us) - 1):
            f0, f1 = vals[i], vals[i + 1]
            if f0 is None or f1 is None:
                continue
            if f0 == 0.0:
                root = us[i]
            elif f0 * f1 < 0:
                lo, hi, flo = us[i], us[i + 1], f0
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    fm = _stationarity(params, ratio_cb, sampling_model,
                                       branch, mid)
                    if fm is None or fm == 0.0:
                        lo = hi = mid
                        break
                    if (fm < 0) == (flo < 0):
                        lo, flo = mid, fm
                    else:
                        hi = mid
                    if hi - lo <= 1e-15 * hi:
                        break
                root = 0.5 * (lo + hi)
            else:
                continue
            if points and abs(points[-1].cost - root * scenario.cost_base) \
                    <= 1e-9 * scenario.cost_base:
                continue
            gamma = _gamma_of_u(params, ratio_cb, sampling_model, root)
            _, om_mid = _best_omega_at(params, scenario, sampling_model, root)
            _, om_lo = _best_omega_at(params, scenario, sampling_model,
                                      root * 0.99)
            _, om_hi = _best_omega_at(params, scenario, sampling_model,
                                      root * 1.01)
            if om_mid > om_lo and om_mid > om_hi:
                kind = "max"
            elif om_mid < om_lo and om_mid < om_hi:
                kind = "min"
            else:
                kind = "saddle-by-grid"
            points.append(StationaryPoint(root * scenario.cost_base, gamma,
                                          branch, kind))
    points.sort(key=lambda p: p.cost)
    return points


@dataclass(frozen=True)
class SamplingFreeDiagnostic:
    cost: float
    gamma: float
    w_argument: float
    n1: Optional[float]
    n2: Optional[float]


def sampling_free_diagnostic(params: GompertzParams, scenario: ThreatScenario,
                             sampling_model: SamplingModel) -> Optional[SamplingFreeDiagnostic]:
    """Closed-form counts at the first stationary cost, with the legacy
    ratio that leaves sampling out of cost / c_attack.

    Diagnostic only: it reproduces the older published constants for the
    quadratic case and is never used by the planner, whose ratio always
    carries the sampling factor.
    """
    stationary = optimal_unit_cost(params, scenario, sampling_model)
    if not stationary:
        return None
    cost = stationary[0].cost
    a, b, c = params.a, params.b, params.c
    r = cost / scenario.c_attack
    gamma = r / (a * b * c)
    x = r / (a * c)
    n1 = n2 = None
    if x >= _BRANCH_POINT * (1.0 + 1e-12) and gamma > 0:
        lg = math.log(gamma)
        n1 = (lg - lambert_w("principal", x)) / c
        n2 = (lg - lambert_w("minus_one", x)) / c
    return SamplingFreeDiagnostic(cost, gamma, x, n1, n2)


# ---------------------------------------------------------------------------
# joint plan

@dataclass(frozen=True)
class FleetPlan:
    n_units: int
    unit_cost: float
    sampling: float
    omega: float
    method: str


def _refine_peak(eval_u: Callable[[float], float], lo: float, mid: float,
                 hi: float) -> float:
    # shrink a bracket around a local maximum of a continuous profile
    f_mid = eval_u(mid)
    for _ in range(120):
        if hi - lo <= 1e-12 * max(hi, 1e-12):
            break
        m1 = 0.5 * (lo + mid)
        m2 = 0.5 * (mid + hi)
        f1 = eval_u(m1)
        f2 = eval_u(m2)
        if f1 > f_mid and f1 >= f2:
            hi, mid, f_mid = mid, m1, f1
        elif f2 > f_mid:
            lo, mid, f_mid = mid, m2, f2
        else:
            lo, hi = m1, m2
    return mid


def plan_fleet(params: GompertzParams, scenario: ThreatScenario,
               sampling_model: SamplingModel) -> FleetPlan:
    """Jointly choose unit cost and integer fleet size.

    With a catalog, only its admissible prices are considered. Otherwise
    candidates are the stationary costs, the cost ceiling, and a dense
    log grid over relative cost, with local refinement around grid peaks.
    Ties resolve to the lowest cost, then the lowest fleet size.
    """
    def omega_of(u: float) -> float:
        return _best_omega_at(params, scenario, sampling_model, u)[1]

    stationary: list[StationaryPoint] = []
    if scenario.catalog:
        fractions = sorted({c / scenario.cost_base for c in scenario.catalog})
    else:
        stationary = optimal_unit_cost(params, scenario, sampling_model)
        pool = set(np.geomspace(1e-5, 1.0, 800).tolist())
        pool.add(1.0)
        pool.update(sp.cost / scenario.cost_base for sp in stationary)
        fractions = sorted(pool)

    # ascending scan with strict improvement keeps the lowest cost on ties;
    # equal cost cannot repeat after dedupe, so the n tie rule is implied
    profile = [omega_of(u) for u in fractions]
    best_i = max(range(len(fractions)),
                 key=lambda i: (profile[i], -fractions[i]))
    best_u = fractions[best_i]
    best_omega = profile[best_i]

    if not scenario.catalog:
        peaks = [i for i in range(len(fractions))
                 if (i == 0 or profile[i] >= profile[i - 1])
                 and (i + 1 == len(fractions) or profile[i] >= profile[i + 1])]
        peaks.sort(key=lambda i: -profile[i])
        for i in peaks[:6]:
            lo = fractions[i - 1] if i > 0 else fractions[i] * 0.5
            hi = fractions[i + 1] if i + 1 < len(fractions) else fractions[i]
            u_ref = _refine_peak(omega_of, lo, fractions[i], hi)
            om_ref = omega_of(u_ref)
            if om_ref > best_omega:
                best_u, best_omega = u_ref, om_ref

    sampling = sampling_model(best_u)
    cost = best_u * scenario.cost_base
    sol = optimal_unit_count(params, cost, scenario.c_attack, sampling) \
        if sampling > 0 else None
    n_units = sol.recommended_n if sol else 0
    omega = normalized_benefit(params, n_units, cost, scenario.c_attack,
                               sampling)

    if scenario.catalog:
        method = "grid_verified"
    elif best_u == 1.0:
        method = "boundary"
    else:
        stat_fracs = [sp.cost / scenario.cost_base for sp in stationary]
        near_stat = any(abs(best_u - f) <= 1e-6 * max(f, 1e-12)
                        for f in stat_fracs)
        if near_stat and sol is not None and sol.closed_form_match:
            method = "closed_form"
        else:
            method = "grid_verified"
    return FleetPlan(n_units, cost, sampling, omega, method)

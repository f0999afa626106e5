"""Saturation model for monitoring coverage versus fleet size.

Coverage follows a Gompertz curve M(n) = a * exp(b * exp(c * n)) with
0 < a <= 1 and b, c < 0: M(0) = a * e^b, M rises monotonically and
saturates at a. Fitting uses damped least squares (Levenberg-Marquardt)
with the analytic Jacobian and parameter clamping to that region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GompertzParams:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (0.0 < self.a <= 1.0):
            raise ValueError("a must lie in (0, 1]")
        if not self.b < 0.0:
            raise ValueError("b must be < 0")
        if not self.c < 0.0:
            raise ValueError("c must be < 0")


@dataclass(frozen=True)
class FitResult:
    params: GompertzParams
    r_squared: float
    residual_norm: float
    iterations: int


def gompertz_eval(params: GompertzParams, n):
    """Coverage at fleet size n (scalar or array), n >= 0."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("fleet size must be >= 0")
    out = params.a * np.exp(params.b * np.exp(params.c * n))
    return float(out) if out.ndim == 0 else out


def gompertz_derivative(params: GompertzParams, n):
    """Marginal coverage per added unit: a*b*c * e^(c n) * e^(b e^(c n))."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("fleet size must be >= 0")
    inner = np.exp(params.c * n)
    out = params.a * params.b * params.c * inner * np.exp(params.b * inner)
    return float(out) if out.ndim == 0 else out


_A_MIN = 1e-9
_B_MAX = -1e-12
_B_MIN = -1e12
_C_MAX = -1e-12
_C_MIN = -1e6


def _clamp(p: np.ndarray) -> np.ndarray:
    a = min(max(p[0], _A_MIN), 1.0)
    b = min(max(p[1], _B_MIN), _B_MAX)
    c = min(max(p[2], _C_MIN), _C_MAX)
    return np.array([a, b, c])


def _model(p: np.ndarray, n: np.ndarray) -> np.ndarray:
    return p[0] * np.exp(p[1] * np.exp(p[2] * n))


def _jacobian(p: np.ndarray, n: np.ndarray) -> np.ndarray:
    inner = np.exp(p[2] * n)
    m = p[0] * np.exp(p[1] * inner)
    cols = np.empty((n.size, 3))
    cols[:, 0] = m / p[0]
    cols[:, 1] = m * inner
    cols[:, 2] = m * p[1] * inner * n
    return cols


def _initial_guess(n: np.ndarray, y: np.ndarray) -> np.ndarray:
    a0 = min(1.0, 1.05 * float(y.max()))
    ratio = np.clip(y / a0, 1e-12, 1.0 - 1e-12)
    z = np.log(-np.log(ratio))            # = log(-b) + c * n for exact data
    c0 = (z[-1] - z[0]) / (n[-1] - n[0])
    if not c0 < 0 or not math.isfinite(c0):
        c0 = -1.0 / max(n[-1] - n[0], 1.0)
    b0 = math.log(max(y[0], 1e-300) / a0)
    if not b0 < 0:
        b0 = _B_MAX
    return _clamp(np.array([a0, b0, c0]))


def gompertz_fit(points) -> FitResult:
    """Fit (fleet size, coverage) samples; needs >= 4 points, distinct sizes.

    Accepted steps never increase the residual norm; iteration stops when
    the relative improvement drops below 1e-12 or after 500 rounds.
    """
    pts = sorted((float(n), float(y)) for n, y in points)
    if len(pts) < 4:
        raise ValueError("need at least 4 points")
    n = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(n < 0):
        raise ValueError("fleet sizes must be >= 0")
    if len(set(n.tolist())) != len(pts):
        raise ValueError("fleet sizes must be distinct")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("coverage must lie in [0, 1]")
    if float(y.max()) == float(y.min()):
        raise ValueError("degenerate input: all coverages equal")

    p = _initial_guess(n, y)
    resid = _model(p, n) - y
    norm = float(np.sqrt(resid @ resid))
    lam = 1e-3
    iterations = 0
    for _ in range(500):
        iterations += 1
        jac = _jacobian(p, n)
        jtj = jac.T @ jac
        g = jac.T @ resid
        accepted = False
        for _ in range(60):
            damped = jtj + lam * np.diag(np.diag(jtj).clip(min=1e-30))
            try:
                step = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = _clamp(p + step)
            tr = _model(trial, n) - y
            tnorm = float(np.sqrt(tr @ tr))
            if tnorm <= norm:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            break
        improvement = norm - tnorm
        p, resid, norm = trial, tr, tnorm
        lam = max(lam / 3.0, 1e-12)
        if improvement <= 1e-12 * max(norm, 1e-300):
            break

    ss_res = norm * norm
    vy = y - y.mean()
    ss_tot = float(vy @ vy)
    r2 = 1.0 - ss_res / ss_tot
    return FitResult(GompertzParams(*p), r2, norm, iterations)

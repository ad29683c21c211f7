"""Ground-truth consumer simulator.

Each consumer minimizes bill plus quadratic discomfort over a reduction
profile d_r and a shift profile d_s:

    min  p.(D0 + d_r + d_s) + c1*sum(d_r^2) + c2*sum(d_s^2)
    s.t. sum(d_s) = 0,  box bounds on d_r and d_s.

The problem is separable, so it is solved in closed form per hour:
d_r,t = clip(-p_t / (2 c1), bounds) and d_s,t = clip(-(p_t + nu) / (2 c2),
bounds) where the scalar dual nu of the shift-balance constraint is found
by bisection on the monotone residual sum_t d_s,t(nu).

`brute_force_response` is an independent grid-enumeration oracle for tiny
horizons, used to verify optimality of the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .domain import Consumer, DemandProfile, PriceProfile

__all__ = [
    "AgentError",
    "InfeasibleBoundsError",
    "AgentSolution",
    "BatchResponse",
    "solve_response",
    "solve_population",
    "brute_force_response",
]

BISECTION_MAX_ITER = 200
BISECTION_REL_TOL = 1e-10


class AgentError(RuntimeError):
    """Internal failure of the response solver (must not occur for valid bounds)."""


class InfeasibleBoundsError(ValueError):
    """Shift bounds admit no balanced profile (sum lo > 0 or sum hi < 0)."""


@dataclass(frozen=True)
class AgentSolution:
    """Optimal response of one consumer to one price profile.

    demand = baseline + d_r + d_s; bill = dot(price, demand); nu is the
    dual multiplier of the shift-balance constraint.
    """

    d_r: np.ndarray
    d_s: np.ndarray
    demand: DemandProfile
    bill: float
    nu: float

    def objective(self, price: PriceProfile, c1: float, c2: float) -> float:
        """QP objective value at this solution."""
        return float(
            np.dot(price.values, self.demand.values)
            + c1 * np.sum(self.d_r**2)
            + c2 * np.sum(self.d_s**2)
        )


class BatchResponse(NamedTuple):
    """Stacked responses for m (consumer, price) rows; all arrays (m, T) but nu (m,)."""

    d_r: np.ndarray
    d_s: np.ndarray
    demand: np.ndarray
    bills: np.ndarray
    nu: np.ndarray


def solve_batch(
    prices: np.ndarray,
    baseline: np.ndarray,
    c1: np.ndarray,
    c2: np.ndarray,
    shift_lo: np.ndarray,
    shift_hi: np.ndarray,
    reduce_lo: np.ndarray,
    reduce_hi: np.ndarray,
) -> BatchResponse:
    """Vectorized closed-form solve for m independent rows.

    prices and the bound arrays are (m, T); c1, c2 are (m,). Rows are
    independent consumers (or consumer-day pairs), so this is the hot path
    for dataset construction and validation.
    """
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    baseline = np.atleast_2d(np.asarray(baseline, dtype=float))
    c1 = np.asarray(c1, dtype=float).reshape(-1)
    c2 = np.asarray(c2, dtype=float).reshape(-1)

    sum_lo = shift_lo.sum(axis=1)
    sum_hi = shift_hi.sum(axis=1)
    bad = (sum_lo > 0.0) | (sum_hi < 0.0)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise InfeasibleBoundsError(
            f"shift bounds of row {row} admit no balanced profile "
            f"(sum lo = {sum_lo[row]:.3g}, sum hi = {sum_hi[row]:.3g})"
        )

    d_r = np.clip(-prices / (2.0 * c1[:, None]), reduce_lo, reduce_hi)

    # Dual bisection for the shift-balance constraint. The residual
    # sum_t clip(-(p_t + nu)/(2 c2), lo, hi) is non-increasing in nu and
    # spans zero on the bracket below.
    max_bound = np.maximum(np.abs(shift_lo), np.abs(shift_hi)).max(axis=1)
    nu_lo = -prices.max(axis=1) - 2.0 * c2 * max_bound
    nu_hi = -prices.min(axis=1) + 2.0 * c2 * max_bound
    width = (shift_hi - shift_lo).sum(axis=1)
    tol = BISECTION_REL_TOL * width

    def shift_at(nu):
        return np.clip(-(prices + nu[:, None]) / (2.0 * c2[:, None]), shift_lo, shift_hi)

    degenerate = width <= 0.0  # zero-width bounds force d_s = 0
    nu = np.where(degenerate, -prices.mean(axis=1), 0.5 * (nu_lo + nu_hi))
    for _ in range(BISECTION_MAX_ITER):
        residual = shift_at(nu).sum(axis=1)
        done = degenerate | (np.abs(residual) <= tol)
        if np.all(done):
            break
        go_up = residual > 0.0
        nu_lo = np.where(~done & go_up, nu, nu_lo)
        nu_hi = np.where(~done & ~go_up, nu, nu_hi)
        nu = np.where(done, nu, 0.5 * (nu_lo + nu_hi))
    d_s = shift_at(nu)

    balance = np.abs(d_s.sum(axis=1))
    slack_tol = np.where(degenerate, 1e-12, np.maximum(tol, 1e-12))
    if np.any(balance > slack_tol * 10.0):
        row = int(np.argmax(balance))
        raise AgentError(
            f"bisection failed to balance shifts (row {row}, residual {balance[row]:.3g})"
        )

    demand = baseline + d_r + d_s
    bills = np.einsum("mt,mt->m", prices, demand)
    return BatchResponse(d_r=d_r, d_s=d_s, demand=demand, bills=bills, nu=nu)


def _batch_from_consumers(consumers: Sequence[Consumer], prices: np.ndarray) -> BatchResponse:
    base = np.stack([c.baseline.values for c in consumers])
    return solve_batch(
        prices,
        base,
        np.array([c.flex.c1 for c in consumers]),
        np.array([c.flex.c2 for c in consumers]),
        np.stack([c.flex.shift_lo for c in consumers]),
        np.stack([c.flex.shift_hi for c in consumers]),
        np.stack([c.flex.reduce_lo for c in consumers]),
        np.stack([c.flex.reduce_hi for c in consumers]),
    )


def solve_response(consumer: Consumer, price: PriceProfile) -> AgentSolution:
    """Globally optimal response of one consumer to one price profile."""
    if price.horizon != consumer.baseline.horizon:
        raise ValueError(
            f"price horizon {price.horizon} != consumer horizon {consumer.baseline.horizon}"
        )
    out = _batch_from_consumers([consumer], price.values[None, :])
    return AgentSolution(
        d_r=out.d_r[0],
        d_s=out.d_s[0],
        demand=DemandProfile(out.demand[0]),
        bill=float(out.bills[0]),
        nu=float(out.nu[0]),
    )


def solve_population(consumers: Sequence[Consumer], price: PriceProfile) -> BatchResponse:
    """Responses of many consumers to one shared price profile."""
    prices = np.broadcast_to(price.values, (len(consumers), price.horizon))
    return _batch_from_consumers(consumers, prices)


def brute_force_response(
    consumer: Consumer, price: PriceProfile, step: float = 0.01
) -> AgentSolution:
    """Exhaustive grid-search oracle for tiny horizons (T <= 4).

    Enumerates d_s on the full product grid, keeping points with
    |sum d_s| <= step/2, and d_r per hour (the objective is additive across
    hours and d_r is unconstrained across them, so per-hour grid argmin
    equals the product-grid argmin). Returns the grid argmin of the QP
    objective; agreement with `solve_response` is up to discretization.
    """
    T = price.horizon
    if T > 4:
        raise ValueError(f"brute force restricted to T <= 4, got T={T}")
    if step <= 0.0:
        raise ValueError("step must be > 0")
    flex = consumer.flex
    p = price.values

    def axis_grid(lo, hi):
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return lo + step * np.arange(n)

    d_r = np.empty(T)
    for t in range(T):
        grid = axis_grid(flex.reduce_lo[t], flex.reduce_hi[t])
        vals = p[t] * grid + flex.c1 * grid**2
        d_r[t] = grid[int(np.argmin(vals))]

    axes = [axis_grid(flex.shift_lo[t], flex.shift_hi[t]) for t in range(T)]
    mesh = np.meshgrid(*axes, indexing="ij")
    cand = np.stack([m.ravel() for m in mesh], axis=1)  # (n_points, T)
    feasible = np.abs(cand.sum(axis=1)) <= step / 2.0
    if not np.any(feasible):
        raise InfeasibleBoundsError("no grid point satisfies the shift balance")
    cand = cand[feasible]
    obj = cand @ p + flex.c2 * np.sum(cand**2, axis=1)
    d_s = cand[int(np.argmin(obj))]

    demand = consumer.baseline.values + d_r + d_s
    interior = (d_s > flex.shift_lo + step) & (d_s < flex.shift_hi - step)
    if np.any(interior):
        t = int(np.argmax(interior))
        nu = float(-(p[t] + 2.0 * flex.c2 * d_s[t]))
    else:
        nu = float("nan")
    return AgentSolution(
        d_r=d_r,
        d_s=d_s,
        demand=DemandProfile(demand),
        bill=float(np.dot(p, demand)),
        nu=nu,
    )

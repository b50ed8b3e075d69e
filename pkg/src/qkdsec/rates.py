"""Asymptotic key-rate formulas and phase-error bounds for BB84.

All entropies are in bits. Gains are reported per reconciled key bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

GLLP_THRESHOLD = 0.029  # earlier basis-dependent threshold, comparison only

GRID_STEP = 1e-3
BISECT_TOL = 1e-12
# absorbs rounding where a constraint holds with equality in exact arithmetic
FEAS_SLACK = 1e-12

METHODS = ("m1", "m2")


def binary_entropy(y: float) -> float:
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"binary entropy needs y in [0, 1], got {y}")
    if y == 0.0 or y == 1.0:
        return 0.0
    return -y * math.log2(y) - (1 - y) * math.log2(1 - y)


def _h(y: np.ndarray) -> np.ndarray:
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    out = np.zeros_like(y)
    inner = (y > 0) & (y < 1)
    yi = y[inner]
    out[inner] = -yi * np.log2(yi) - (1 - yi) * np.log2(1 - yi)
    return out


def entropy_cost(delta: float) -> float:
    """Per-bit cost ``h(delta)`` with rates above 1/2 saturating at 1."""
    return binary_entropy(min(max(delta, 0.0), 0.5))


@dataclass(frozen=True)
class RateInputs:
    delta_bit: float = 0.0
    delta_ph: float = 0.0
    delta0: float = 0.0
    delta1: float = 0.0
    Delta: float = 0.0
    epsilon: float = 0.0
    N: Optional[int] = None  # None means per-bit mode

    def __post_init__(self):
        for name in ("delta_bit", "delta_ph", "delta0", "delta1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.Delta <= 0.5:
            raise ValueError(f"Delta must lie in [0, 1/2], got {self.Delta}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be positive")


@dataclass(frozen=True)
class RateResult:
    gain_per_bit: float
    cost_ec: float
    cost_pa: float
    feasible: bool
    f_value: Optional[float] = None


def _result(cost_ec: float, cost_pa: float, f_value: Optional[float] = None) -> RateResult:
    gain = 1.0 - cost_ec - cost_pa
    return RateResult(gain, cost_ec, cost_pa, gain > 0, f_value)


def key_gain_sp(delta_bit: float, delta_ph: float) -> RateResult:
    """Gain ``1 - h(delta_bit) - h(delta_ph)`` for a characterised source."""
    return _result(entropy_cost(delta_bit), entropy_cost(delta_ph))


def key_gain_basis_independent(delta0: float, delta1: float) -> RateResult:
    return _result(entropy_cost(delta0), entropy_cost(delta1))


def m1_constraint(delta1, delta_ph):
    """Entropy of the basis bit given the error flag, as a function of the two error rates.

    Vectorised over ``delta_ph``. Terms with zero weight contribute zero.
    """
    dph = np.asarray(delta_ph, dtype=float)
    w1 = delta1 + dph
    w0 = 2.0 - delta1 - dph
    with np.errstate(divide="ignore", invalid="ignore"):
        q1 = np.where(w1 > 0, delta1 / np.where(w1 > 0, w1, 1), 0.0)
        q0 = np.where(w0 > 0, (1 - dph) / np.where(w0 > 0, w0, 1), 0.0)
    return w1 / 2 * _h(q1) + w0 / 2 * _h(q0)


def m1_upper(delta1, delta_ph):
    """Looser entropy ceiling ``h((1 - |delta_ph - delta1|)/2)``."""
    return _h((1 - np.abs(np.asarray(delta_ph, dtype=float) - delta1)) / 2)


def m2_constraint(delta1, delta_ph):
    """Bernoulli overlap ``sqrt((1-d1)(1-dph)) + sqrt(d1*dph)``; must stay >= 1 - 2*Delta."""
    dph = np.clip(np.asarray(delta_ph, dtype=float), 0.0, 1.0)
    return np.sqrt((1 - delta1) * (1 - dph)) + np.sqrt(delta1 * dph)


def _sup_feasible(feasible: Callable[[np.ndarray], np.ndarray], anchor: float) -> float:
    """Largest x in [0, 1] with ``feasible(x)``, given that ``anchor`` is feasible.

    A fixed grid brackets the boundary above the last feasible grid point and
    bisection refines it.
    """
    grid = np.arange(0.0, 1.0 + GRID_STEP / 2, GRID_STEP)
    grid[-1] = 1.0
    ok = feasible(grid) & (grid >= anchor)
    idx = np.nonzero(ok)[0]
    lo = max(anchor, float(grid[idx[-1]])) if idx.size else anchor
    if lo >= 1.0:
        return 1.0
    hi = float(grid[np.searchsorted(grid, lo, side="right")])
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if bool(feasible(np.array([mid]))[0]):
            lo = mid
        else:
            hi = mid
    return lo


def _check_bound_args(delta1: float, Delta: float) -> None:
    if not 0.0 <= delta1 <= 1.0:
        raise ValueError(f"delta1 must lie in [0, 1], got {delta1}")
    if not 0.0 <= Delta <= 0.5:
        raise ValueError(f"Delta must lie in [0, 1/2], got {Delta}")


def phase_error_bound_m1(delta1: float, Delta: float) -> float:
    """Largest phase-error rate compatible with the coin-entropy constraint."""
    _check_bound_args(delta1, Delta)
    if Delta == 0:
        return float(delta1)
    target = 1.0 - binary_entropy(Delta)
    return _sup_feasible(lambda x: m1_constraint(delta1, x) >= target - FEAS_SLACK, delta1)


def phase_error_bound_m2(delta1: float, Delta: float) -> float:
    """Largest phase-error rate compatible with the coin-fidelity constraint."""
    _check_bound_args(delta1, Delta)
    if Delta == 0:
        return float(delta1)
    target = 1.0 - 2.0 * Delta
    return _sup_feasible(lambda x: m2_constraint(delta1, x) >= target - FEAS_SLACK, delta1)


PHASE_BOUNDS = {"m1": phase_error_bound_m1, "m2": phase_error_bound_m2}


def phase_error_bound(delta1: float, Delta: float, method: str = "m2") -> float:
    try:
        bound = PHASE_BOUNDS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}") from None
    return bound(delta1, Delta)


def privacy_cost(f: float) -> float:
    # f >= 1/2 means no secrecy can be certified: cost saturates instead of
    # following h back down
    return binary_entropy(f) if f < 0.5 else 1.0


def key_gain_basis_dependent(delta0: float, delta1: float, Delta: float,
                             method: str = "m2") -> RateResult:
    f = phase_error_bound(delta1, Delta, method)
    return _result(entropy_cost(delta0), privacy_cost(f), f)


def positive_gain_threshold(method: str = "m2", delta0: float = 0.0, delta1: float = 0.0,
                            tol: float = 1e-9) -> float:
    """Largest ``Delta`` keeping the basis-dependent gain positive.

    Returns 0.0 when the gain is not positive even at ``Delta = 0``.
    """
    def positive(D: float) -> bool:
        return key_gain_basis_dependent(delta0, delta1, D, method).feasible

    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if not positive(0.0):
        return 0.0
    lo, hi = 0.0, 0.5
    if positive(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo


def reconciliation_cost(delta: float, epsilon: float, N: int) -> int:
    """Number of secret bits ``ceil(N (h(delta) + epsilon))`` spent on encrypted error correction."""
    x = N * (entropy_cost(delta) + epsilon)
    return max(0, math.ceil(x - 1e-9))


def secrecy_bound(eta: float, epsilon: float, N: int) -> float:
    """Upper bound on the adversary's information about the final key, in bits."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    eta_p = eta + 2.0 ** (-N * epsilon)
    return binary_entropy(min(eta_p, 0.5)) + N * eta_p


@dataclass(frozen=True)
class CoinRelations:
    r_t1: float
    r_a1_given_t1: Optional[float]
    r_a0_given_t0: Optional[float]


def coin_statistics_relations(delta1: float, delta_ph: float) -> CoinRelations:
    """Asymptotic coin/error-flag statistics implied by the two error rates."""
    for v in (delta1, delta_ph):
        if not 0.0 <= v <= 1.0:
            raise ValueError("rates must lie in [0, 1]")
    w1 = delta1 + delta_ph
    w0 = 2.0 - delta1 - delta_ph
    return CoinRelations(
        r_t1=w1 / 2,
        r_a1_given_t1=delta1 / w1 if w1 > 0 else None,
        r_a0_given_t0=(1 - delta_ph) / w0 if w0 > 0 else None,
    )

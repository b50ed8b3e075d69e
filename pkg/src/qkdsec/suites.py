"""Property suites run by ``qkdsec verify`` and the acceptance tests.

Each suite builds its own seeded fixtures and returns a :class:`SuiteResult`
listing every checked instance; failing instances are kept in full so the
CLI can serialise them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import gf2, protocol, quantum

EQUIV_TOL = 1e-9
ENTROPY_TOL = 1e-9


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: dict
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _random_lookup_estimator(n: int, rng):
    table = {}

    def estimator(mu, parities):
        key = (mu, tuple(parities))
        if key not in table:
            table[key] = gf2.BitVector.random(n, rng)
        return table[key]

    return estimator, table


def random_equivalence_instance(rng, max_qubits: int = 3, max_ancilla: int = 2):
    n = int(rng.integers(1, max_qubits + 1))
    n_anc = int(rng.integers(0, max_ancilla + 1))
    dims = (2,) * (n_anc + n)
    if rng.random() < 0.3:
        state = quantum.random_pure_state(dims, rng).density()
    else:
        state = quantum.random_density_matrix(dims, rng, rank=int(rng.integers(1, 2 ** len(dims) + 1)))
    m = int(rng.integers(1, n)) if n > 1 else 0
    W = gf2.random_li_set(n, m, rng, kind="W") if m else gf2.VectorSet((), n, "W")
    return state, W, n


def equivalence_suite(seed: int = 0, instances: int = 50,
                      extra: Optional[tuple] = None) -> SuiteResult:
    """Random exact instances; ``extra`` is an optional ``(state, n_qubits)`` fixture."""
    rng = np.random.default_rng(seed)
    cases = [random_equivalence_instance(rng) for _ in range(instances)]
    if extra is not None:
        state, n = extra
        m = max(0, n - 1) if n > 1 else 0
        W = gf2.random_li_set(n, m, rng, kind="W") if m else gf2.VectorSet((), n, "W")
        cases.append((state, W, n))
    worst = 0.0
    failures = []
    for state, W, n in cases:
        est, table = _random_lookup_estimator(n, rng)
        rep = protocol.verify_protocol_equivalence(state, W, est, rng=rng, n_qubits=n)
        worst = max(worst, rep.distance)
        if not rep.distance < EQUIV_TOL:
            failures.append({"report": asdict(rep), "state": quantum.state_to_dict(state),
                             "estimator": {f"{mu}:{''.join(map(str, p))}": str(v)
                                           for (mu, p), v in table.items()}})
    return SuiteResult("equivalence", not failures,
                       {"instances": len(cases), "max_distance": worst, "tolerance": EQUIV_TOL},
                       failures)


def _distinct_ints(upper: int, size: int, rng) -> np.ndarray:
    """``size`` distinct uniform integers in ``[0, upper)``, in random order."""
    if 4 * size > upper:
        return rng.choice(upper, size=size, replace=False)
    draw = np.unique(rng.integers(0, upper, size=size))
    while draw.size < size:
        draw = np.unique(np.concatenate([draw, rng.integers(0, upper, size=size - draw.size)]))
    return rng.permutation(draw)


HASH_CONFIGS = ((16, 0.5, 0.25), (12, 0.5, 1 / 6))


def hashing_trials(n: int, xi: float, eps: float, trials: int, rng) -> dict:
    """Monte Carlo of parity-hash recovery with ``|T| = 2**(n xi)`` and ``m = n (xi + eps)``."""
    if eps <= 0 or not 0 <= xi < 1:
        raise ValueError("need 0 <= xi < 1 and epsilon > 0")
    size = 2 ** round(n * xi)
    m = round(n * (xi + eps))
    failures = 0
    for _ in range(trials):
        ints = _distinct_ints(2**n, size, rng)
        members = ((ints[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)
        x = members[rng.integers(size)]
        w = rng.integers(0, 2, size=(m, n), dtype=np.uint8)
        par = gf2.parities(x[None, :], w)[0]
        checks = [(gf2.BitVector(tuple(int(b) for b in row)), int(p)) for row, p in zip(w, par)]
        got = gf2.hash_recover(gf2.CandidateSet(members), checks)
        if got is None or got.bits != tuple(int(b) for b in x):
            failures += 1
    rate = failures / trials
    bound = 2.0 ** (-n * eps)
    sigma = math.sqrt(bound * (1 - bound) / trials)
    union = (size - 1) * 2.0 ** (-m)
    sigma_u = math.sqrt(union * (1 - union) / trials)
    return {"N": n, "xi": xi, "epsilon": eps, "T": size, "m": m, "trials": trials,
            "failure_rate": rate, "bound": bound, "sigma": sigma,
            "union_bound": union, "passed": rate <= bound + 3 * sigma and rate <= union + 3 * sigma_u}


def hashing_suite(seed: int = 0, trials: int = 10_000, configs=HASH_CONFIGS) -> SuiteResult:
    rng = np.random.default_rng(seed)
    rows = [hashing_trials(n, xi, eps, trials, rng) for n, xi, eps in configs]
    failures = [r for r in rows if not r["passed"]]
    return SuiteResult("hashing", not failures, {"configs": rows}, failures)


def uncertainty_value(state, n: int) -> tuple[float, float]:
    hz = quantum.shannon_entropy(quantum.born_distribution(state, "z"))
    hx = quantum.shannon_entropy(quantum.born_distribution(state, "x"))
    return hz, hx


def random_uncertainty_states(rng, count: int = 100, max_n: int = 6):
    out = []
    for i in range(count):
        n = 1 + i % max_n
        dims = (2,) * n
        kind = i % 4
        if kind == 0:
            state = quantum.random_pure_state(dims, rng).density()
        elif kind == 1:
            state = quantum.random_density_matrix(dims, rng)
        elif kind == 2:
            state = quantum.random_density_matrix(dims, rng, rank=2)
        else:
            axis = "z" if rng.random() < 0.5 else "x"
            state = quantum.PureState.basis(gf2.BitVector.random(n, rng), axis).density()
        out.append(state)
    return out


def uncertainty_suite(seed: int = 0, count: int = 100, max_n: int = 6,
                      extra: Optional[quantum.DensityMatrix] = None) -> SuiteResult:
    rng = np.random.default_rng(seed)
    states = random_uncertainty_states(rng, count, max_n)
    if extra is not None:
        states.append(extra)
    worst = math.inf
    failures = []
    for state in states:
        n = len(state.dims)
        hz, hx = uncertainty_value(state, n)
        margin = hz + hx - n
        worst = min(worst, margin)
        if margin < -ENTROPY_TOL:
            failures.append({"N": n, "H_z": hz, "H_x": hx, "state": quantum.state_to_dict(state)})
    return SuiteResult("uncertainty", not failures,
                       {"states": len(states), "min_margin": worst, "tolerance": ENTROPY_TOL},
                       failures)


def _stderr(r: float, n: int) -> float:
    # floor keeps a nonzero band when the observed rate is exactly 0 or 1
    return math.sqrt(max(r * (1 - r), 1.0 / n) / n)


def circle_within_slack(rx: float, nx: int, rz: float, nz: int, k: float = 3.0) -> tuple[float, bool]:
    """Smallest value of ``(1-2 r_x)^2 + (1-2 r_z)^2`` over rates within ``k`` standard errors.

    The constraint counts as satisfied when that smallest value is at most 1.
    """
    def closest(r, n):
        s = k * _stderr(r, n)
        return min(max(0.5, r - s), r + s)

    cx, cz = closest(rx, nx), closest(rz, nz)
    low = (1 - 2 * cx) ** 2 + (1 - 2 * cz) ** 2
    return low, low <= 1.0


def coin_check(source: protocol.SourceModel, channel: protocol.ChannelModel, L: int,
               s_prob: float, rng) -> dict:
    rep = protocol.coin_scenario(source, channel, L, s_prob, rng)
    c = rep.counts
    D = source.Delta
    var = D * (1 - D) / max(c["s1"], 1)
    if rep.r_x0 is not None and rep.r_x1 is not None:
        var += (rep.r_x1 - rep.r_x0) ** 2 * rep.r_t1 * (1 - rep.r_t1) / L
    sigma = math.sqrt(var)
    balance_ok = abs(rep.balance - D) <= 3 * sigma + 1e-12
    circles = {}
    circle_ok = True
    for j in (0, 1):
        rx, rz = (rep.r_x0, rep.r_z0) if j == 0 else (rep.r_x1, rep.r_z1)
        if rx is None or rz is None:
            continue
        value = (1 - 2 * rx) ** 2 + (1 - 2 * rz) ** 2
        low, ok = circle_within_slack(rx, c[f"s1_t{j}"], rz, c[f"s0_t{j}"])
        circles[j] = {"value": value, "lowest_within_3sigma": low, "passed": ok}
        circle_ok &= ok
    return {"Delta": D, "channel": channel.to_dict(), "L": L, "balance": rep.balance,
            "delta_estimate": rep.delta_estimate, "sigma": sigma, "balance_passed": balance_ok,
            "circle": circles, "circle_passed": circle_ok, "exact": rep.exact,
            "passed": balance_ok and circle_ok}


COIN_DELTAS = (0.0, 0.05, 0.1)


def coin_suite(seed: int = 0, L: int = 100_000, deltas=COIN_DELTAS, s_prob: float = 0.5,
               depolarizing_p: float = 0.1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    rows = []
    for D in deltas:
        src = protocol.SourceModel.basis_dependent(Delta=D)
        for ch in (protocol.ChannelModel.identity(), protocol.ChannelModel.depolarizing(depolarizing_p)):
            rows.append(coin_check(src, ch, L, s_prob, rng))
    failures = [r for r in rows if not r["passed"]]
    return SuiteResult("coin", not failures, {"cases": rows}, failures)


SUITES = {
    "equivalence": equivalence_suite,
    "hashing": hashing_suite,
    "uncertainty": uncertainty_suite,
    "coin": coin_suite,
}

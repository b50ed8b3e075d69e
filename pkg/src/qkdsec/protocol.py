"""Desk-scale BB84 simulation and exact checks of the virtual-protocol reductions."""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from functools import reduce
from typing import Optional

import numpy as np

from . import gf2, quantum, rates
from .errors import (
    EmptyKeyError,
    InsufficientDataError,
    ModelError,
    ReconciliationError,
    SizeError,
)
from .gf2 import BitVector, CandidateSet, VectorSet
from .quantum import BB84_ANGLES, DensityMatrix, PauliString, PureState

MAX_RECONCILE_N = 24
MAX_EXACT_QUBITS = 6
MAX_EXACT_DIM = 256

# --------------------------------------------------------------------------
# channel and source models


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Single-qubit CPTP map given by Kraus operators."""

    kind: str
    params: dict = field(default_factory=dict)
    kraus: tuple = ()

    def __post_init__(self):
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        if not ks:
            raise ModelError("channel needs at least one Kraus operator")
        total = sum(k.conj().T @ k for k in ks)
        if not np.allclose(total, np.eye(ks[0].shape[0]), atol=1e-10, rtol=0):
            raise ModelError("Kraus operators are not trace preserving")
        object.__setattr__(self, "kraus", ks)

    @classmethod
    def identity(cls) -> "ChannelModel":
        return cls("identity", {}, (quantum.I2,))

    @classmethod
    def depolarizing(cls, p: float) -> "ChannelModel":
        """``rho -> (1 - p) rho + p I/2``; QBER in either basis is ``p/2``."""
        if not 0 <= p <= 4 / 3:
            raise ModelError(f"depolarizing parameter {p} out of range")
        ks = (math.sqrt(1 - 3 * p / 4) * quantum.I2,
              *(math.sqrt(p / 4) * s for s in (quantum.SX, quantum.SY, quantum.SZ)))
        return cls("depolarizing", {"p": p}, ks)

    @classmethod
    def intercept_resend(cls) -> "ChannelModel":
        """Eve measures in a uniformly random BB84 basis and resends the eigenstate."""
        ks = []
        for basis in (quantum.I2, quantum.HADAMARD):
            for b in range(2):
                v = basis[:, b]
                ks.append(np.outer(v, v.conj()) / math.sqrt(2))
        return cls("intercept-resend", {}, tuple(ks))

    @classmethod
    def custom(cls, kraus: Sequence[np.ndarray]) -> "ChannelModel":
        return cls("custom-kraus", {}, tuple(kraus))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus)

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, **self.params}
        if self.kind == "custom-kraus":
            doc["kraus"] = [[quantum._pairs(row) for row in k] for k in self.kraus]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ChannelModel":
        kind = doc.get("kind", "identity")
        if kind == "identity":
            return cls.identity()
        if kind == "depolarizing":
            return cls.depolarizing(float(doc["p"]))
        if kind == "intercept-resend":
            return cls.intercept_resend()
        if kind == "custom-kraus":
            ks = [np.array([[complex(re, im) for re, im in row] for row in k]) for k in doc["kraus"]]
            return cls.custom(ks)
        raise ModelError(f"unknown channel kind {kind!r}")


SOURCE_KINDS = ("ideal", "basis-independent-flawed", "basis-dependent")


@dataclass(frozen=True, eq=False)
class SourceModel:
    """BB84 source: signal states ``signals[a][b]`` sent with probability ``probs[a][b]``.

    ``purification`` holds ``(chi0, chi1, M0, M1)`` from
    :func:`~qkdsec.quantum.two_pure_source` when the signals are pure.
    """

    kind: str
    signals: tuple
    probs: np.ndarray
    Delta: float
    purification: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ModelError(f"unknown source kind {self.kind!r}")
        p = quantum._check_probs(self.probs)
        object.__setattr__(self, "probs", p)
        r0, r1 = self.averaged_states()
        F = quantum.fidelity(r0, r1)
        if self.kind != "basis-dependent" and abs(F - 1) > 1e-9:
            raise ModelError(f"{self.kind} source must be basis independent (root fidelity {F:.9g})")
        if 1 - 2 * self.Delta > F + 1e-9:
            raise ModelError(f"declared Delta={self.Delta} is below the actual basis dependence")

    def averaged_states(self) -> tuple[DensityMatrix, DensityMatrix]:
        out = []
        for a in range(2):
            m = sum(self.probs[a, b] * self.signals[a][b].matrix for b in range(2))
            out.append(DensityMatrix(m, (2,)))
        return out[0], out[1]

    @classmethod
    def _from_angles(cls, kind, angles, probs, Delta, params):
        p = quantum._check_probs(np.full((2, 2), 0.5) if probs is None else probs)
        vecs = quantum.signal_vectors(angles)
        signals = tuple(tuple(PureState(vecs[a, b], (2,)).density() for b in range(2))
                        for a in range(2))
        if Delta is None:
            avg = [DensityMatrix(sum(p[a, b] * signals[a][b].matrix for b in range(2)), (2,))
                   for a in range(2)]
            Delta = max(0.0, (1 - quantum.fidelity(*avg)) / 2)
        pur = quantum.two_pure_source(Delta, p, angles)
        return cls(kind, signals, p, float(Delta), pur,
                   {"angles": np.asarray(angles, dtype=float).tolist(), **params})

    @classmethod
    def ideal(cls) -> "SourceModel":
        return cls._from_angles("ideal", BB84_ANGLES, None, 0.0, {})

    @classmethod
    def basis_dependent(cls, angles=BB84_ANGLES, probs=None,
                        Delta: Optional[float] = None) -> "SourceModel":
        """Pure-signal source; ``Delta`` defaults to the smallest value the signals allow."""
        return cls._from_angles("basis-dependent", angles, probs, Delta, {})

    @classmethod
    def basis_independent(cls, noise: float) -> "SourceModel":
        """Ideal BB84 signals mixed with white noise of weight ``noise``."""
        if not 0 <= noise <= 1:
            raise ModelError("noise weight must lie in [0, 1]")
        vecs = quantum.signal_vectors(BB84_ANGLES)
        signals = tuple(tuple(
            DensityMatrix((1 - noise) * np.outer(vecs[a, b], vecs[a, b].conj())
                          + noise * np.eye(2) / 2, (2,))
            for b in range(2)) for a in range(2))
        return cls("basis-independent-flawed", signals, np.full((2, 2), 0.5), 0.0, None,
                   {"noise": noise})

    def to_dict(self) -> dict:
        return {"kind": self.kind, "Delta": self.Delta, "probs": self.probs.tolist(), **self.params}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SourceModel":
        kind = doc.get("kind", "ideal")
        if kind == "ideal":
            return cls.ideal()
        if kind == "basis-independent-flawed":
            return cls.basis_independent(float(doc.get("noise", 0.0)))
        if kind == "basis-dependent":
            Delta = doc.get("Delta")
            return cls.basis_dependent(doc.get("angles", BB84_ANGLES), doc.get("probs"),
                                       None if Delta is None else float(Delta))
        raise ModelError(f"unknown source kind {kind!r}")


# --------------------------------------------------------------------------
# classical post-processing


def _parity_check_matrix(r: int, n: int, rng) -> np.ndarray:
    """Random ``r x n`` parity-check matrix.

    When ``2**r > n`` the draw is repeated until all columns are distinct and
    nonzero, so every single-bit error has a unique syndrome.
    """
    for _ in range(10_000):
        h = rng.integers(0, 2, size=(r, n), dtype=np.uint8)
        if r >= 64 or 2**r <= n:
            return h
        cols = {tuple(c) for c in h.T}
        if len(cols) == n and (0,) * r not in cols:
            return h
    return h


def _column_ints(h: np.ndarray) -> list[int]:
    return [int("".join(map(str, col)), 2) if len(col) else 0 for col in h.T]


def _syndrome(cols: list[int], bits: Sequence[int]) -> int:
    return reduce(lambda acc, jb: acc ^ cols[jb[0]] if jb[1] else acc, enumerate(bits), 0)


def reconcile(alice_bits: BitVector, bob_bits: BitVector, delta: float, epsilon: float,
              rng) -> tuple[BitVector, int]:
    """Correct Alice's string to Bob's from an encrypted random-code syndrome.

    Alice decodes by exhaustive minimum-weight search, which is maximum
    likelihood for a binary symmetric channel with error rate below 1/2.
    Returns Alice's corrected string and the number of secret bits consumed.
    Raises :class:`ReconciliationError` when several errors of the minimum
    weight explain the syndrome.
    """
    n = len(bob_bits)
    if len(alice_bits) != n:
        raise gf2.DimensionError("strings have different lengths")
    if n > MAX_RECONCILE_N:
        raise SizeError(f"brute-force decoding supports N <= {MAX_RECONCILE_N}")
    rng = np.random.default_rng(rng)
    r = rates.reconciliation_cost(delta, epsilon, n)
    h = _parity_check_matrix(r, n, rng)
    cols = _column_ints(h) if r else [0] * n
    # Bob's syndrome travels one-time-pad encrypted; the pad cancels on Alice's side
    target = _syndrome(cols, bob_bits.bits) ^ _syndrome(cols, alice_bits.bits)
    for w in range(n + 1):
        hits = [c for c in itertools.combinations(range(n), w)
                if reduce(lambda acc, j: acc ^ cols[j], c, 0) == target]
        if len(hits) == 1:
            err = [0] * n
            for j in hits[0]:
                err[j] = 1
            return alice_bits ^ BitVector(tuple(err)), r
        if hits:
            raise ReconciliationError(f"{len(hits)} error patterns of weight {w} fit the syndrome")
    raise ReconciliationError("no error pattern fits the syndrome")


def privacy_amplify(kappa_rec: BitVector, m: int, rng,
                    vectors: Optional[VectorSet] = None) -> tuple[BitVector, VectorSet]:
    """Hash the reconciled key down to ``N - m`` bits with random independent vectors."""
    n = len(kappa_rec)
    if m >= n:
        raise EmptyKeyError(f"m={m} leaves no key bits out of {n}")
    if m < 0:
        raise ValueError("m must be nonnegative")
    if vectors is None:
        vectors = gf2.random_li_set(n, n - m, rng, kind="V")
    elif len(vectors) != n - m or vectors.n != n:
        raise gf2.DimensionError("hash vectors do not match N - m")
    return BitVector(tuple(gf2.dot(kappa_rec, v) for v in vectors)), vectors


# --------------------------------------------------------------------------
# end-to-end run


@dataclass
class Transcript:
    seed: int
    rounds: dict
    delta0: float
    delta1: float
    N: int
    r: int
    m: int
    net_gain: int
    aborted: bool
    abort_reason: Optional[str]
    rate: dict
    sample_counts: dict
    key_indices: list
    kappa_rec: Optional[str] = None
    kappa_fin: Optional[str] = None
    hash_vectors: Optional[list] = None
    keys_agree: Optional[bool] = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_round_floats(self.to_dict()), indent=2, sort_keys=True)


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _bits(arr) -> str:
    return "".join("1" if x else "0" for x in arr)


def bob_flip_table(source: SourceModel, channel: ChannelModel) -> np.ndarray:
    """``table[a, b, a']``: probability that Bob's basis-``a'`` outcome is 1 for signal ``(a, b)``."""
    table = np.zeros((2, 2, 2))
    for a, b, ap in itertools.product(range(2), repeat=3):
        out = channel.apply(source.signals[a][b].matrix)
        v = (quantum.I2, quantum.HADAMARD)[ap][:, 1]
        table[a, b, ap] = float(np.real(v.conj() @ out @ v))
    return table


def run_bb84(source: SourceModel, channel: ChannelModel, rounds: int, block_n: int,
             epsilon: float, seed: int, sample_fraction: float = 0.5,
             method: str = "m2") -> Transcript:
    """Simulate one BB84 session and the key accounting that follows.

    Rounds with ``a == a'`` are split into a test sample (fraction
    ``sample_fraction``) and the rest; the key block is ``block_n`` untested
    rounds with ``a == a' == 0``. A run whose certified gain is not positive
    is returned with ``aborted=True`` and no key.
    """
    if block_n > MAX_RECONCILE_N:
        raise SizeError(f"block_n must be <= {MAX_RECONCILE_N} for brute-force reconciliation")
    if not 0 < sample_fraction < 1:
        raise ValueError("sample_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, size=rounds)
    b = (rng.random(rounds) < source.probs[a, 1]).astype(int)
    ap = rng.integers(0, 2, size=rounds)
    flip = bob_flip_table(source, channel)
    bp = (rng.random(rounds) < flip[a, b, ap]).astype(int)

    sifted = np.nonzero(a == ap)[0]
    order = rng.permutation(sifted.size)
    sampled = np.zeros(rounds, dtype=bool)
    sampled[sifted[order[: int(round(sample_fraction * sifted.size))]]] = True

    err = b != bp
    counts = {}
    estimates = []
    for basis in (0, 1):
        mask = sampled & (a == basis) & (ap == basis)
        n_b = int(mask.sum())
        if n_b == 0:
            raise InsufficientDataError(f"no sampled rounds in basis {basis}")
        counts[f"n{basis}"] = n_b
        counts[f"e{basis}"] = int(err[mask].sum())
        estimates.append(err[mask].mean())
    delta0, delta1 = float(estimates[0]), float(estimates[1])

    pool = np.nonzero((a == 0) & (ap == 0) & ~sampled)[0]
    if pool.size < block_n:
        raise InsufficientDataError(f"only {pool.size} unsampled z-basis rounds for a block of {block_n}")
    pick = rng.choice(pool, size=block_n, replace=False)

    res = rates.key_gain_basis_dependent(delta0, delta1, source.Delta, method)
    r = rates.reconciliation_cost(delta0, epsilon, block_n)
    m = math.ceil(block_n * (res.cost_pa + epsilon) - 1e-9)
    net = block_n - m - r

    t = Transcript(
        seed=int(seed),
        rounds={"a": _bits(a), "a_prime": _bits(ap), "b": _bits(b), "b_prime": _bits(bp),
                "sampled": _bits(sampled)},
        delta0=delta0, delta1=delta1, N=block_n, r=r, m=m, net_gain=net,
        aborted=False, abort_reason=None,
        rate={**asdict(res), "method": method, "Delta": source.Delta},
        sample_counts=counts, key_indices=[int(i) for i in pick],
        config={"source": source.to_dict(), "channel": channel.to_dict(), "rounds": rounds,
                "block_n": block_n, "epsilon": epsilon, "seed": int(seed),
                "sample_fraction": sample_fraction, "method": method},
    )
    if not res.feasible or net <= 0 or m >= block_n:
        t.aborted, t.abort_reason = True, "non-positive key gain"
        return t

    bob = BitVector(tuple(int(x) for x in bp[pick]))
    alice = BitVector(tuple(int(x) for x in b[pick]))
    try:
        alice_rec, _ = reconcile(alice, bob, delta0, epsilon, rng)
    except ReconciliationError as exc:
        t.aborted, t.abort_reason = True, f"reconciliation failure: {exc}"
        return t
    fin, vs = privacy_amplify(bob, m, rng)
    alice_fin, _ = privacy_amplify(alice_rec, m, rng, vectors=vs)
    t.kappa_rec, t.kappa_fin = str(bob), str(fin)
    t.hash_vectors = [str(v) for v in vs]
    t.keys_agree = alice_fin == fin
    return t


def run_from_config(doc: Mapping) -> Transcript:
    return run_bb84(
        SourceModel.from_dict(doc.get("source", {})),
        ChannelModel.from_dict(doc.get("channel", {})),
        rounds=int(doc["rounds"]),
        block_n=int(doc["block_n"]),
        epsilon=float(doc.get("epsilon", 0.05)),
        seed=int(doc.get("seed", 0)),
        sample_fraction=float(doc.get("sample_fraction", 0.5)),
        method=doc.get("method", "m2"),
    )


# --------------------------------------------------------------------------
# exact checks of the virtual protocols


def _split(state: DensityMatrix, n_qubits: int) -> tuple[int, tuple[int, ...]]:
    dims = state.dims
    if n_qubits > len(dims) or any(d != 2 for d in dims[len(dims) - n_qubits:]):
        raise gf2.DimensionError("the last n_qubits subsystems must be qubits")
    if n_qubits > MAX_EXACT_QUBITS or state.dim > MAX_EXACT_DIM:
        raise SizeError("instance too large for exact enumeration")
    d_anc = math.prod(dims[: len(dims) - n_qubits])
    return d_anc, dims


def _ancilla_blocks(state: DensityMatrix, n_qubits: int) -> list[tuple[int, np.ndarray]]:
    """Unnormalised qubit states ``Tr_R[(|mu><mu| (x) 1) rho]`` for each ancilla outcome ``mu``."""
    d_anc, _ = _split(state, n_qubits)
    dq = 2**n_qubits
    t = state.matrix.reshape(d_anc, dq, d_anc, dq)
    return [(mu, t[mu, :, mu, :]) for mu in range(d_anc)]


def _randomize_basis(v: VectorSet, rng) -> VectorSet:
    k = len(v)
    if k == 0:
        return v
    g = gf2.random_li_set(k, k, rng).to_matrix().astype(np.int64)
    mixed = (g @ v.to_matrix().astype(np.int64)) & 1
    return VectorSet(tuple(BitVector(tuple(int(x) for x in row)) for row in mixed), v.n, v.kind)


def _key_of(kappa: int, n: int, v: VectorSet) -> int:
    bits = BitVector.from_int(kappa, n)
    return reduce(lambda acc, vk: (acc << 1) | gf2.dot(bits, vk), v, 0)


@dataclass
class EquivalenceReport:
    distance: float
    N: int
    m: int
    dims: tuple
    W: list
    V: list
    p_protocol1: list
    p_protocol2: list


Estimator = Callable[[int, tuple], BitVector]


def verify_protocol_equivalence(state: DensityMatrix, W: VectorSet, estimator: Estimator,
                                rng=None, n_qubits: Optional[int] = None,
                                V: Optional[VectorSet] = None) -> EquivalenceReport:
    """Exact final-key distributions of the z-measure-and-hash protocol and its phase-corrected twin.

    ``state`` lives on ``ancilla (x) N qubits`` with the qubits last. The
    second protocol measures the ancilla in its computational basis, measures
    every parity observable ``Sigma_x(W_j)``, applies ``Sigma_z(estimator(mu,
    parities))`` and reads the key off ``Sigma_z(V_k)``. ``V`` spans the dual
    of ``W``; ``rng`` picks a random basis of it. Passing ``V`` explicitly
    skips that construction, which is only useful for negative controls.
    """
    n = W.n if n_qubits is None else n_qubits
    _split(state, n)
    if V is None:
        V = gf2.dual_set(W)
        if rng is not None:
            V = _randomize_basis(V, np.random.default_rng(rng))
    k = len(V)
    dq = 2**n
    qdims = (2,) * n
    eye = np.eye(dq, dtype=complex)

    # protocol 1: discard ancilla, z-measure every qubit, hash
    rho_q = sum(block for _, block in _ancilla_blocks(state, n))
    pz = np.real(np.diag(rho_q))
    p1 = np.zeros(2**k)
    for kappa in range(dq):
        p1[_key_of(kappa, n, V)] += pz[kappa]

    # protocol 2
    x_ops = [quantum.pauli_on(PauliString("x", w), qdims) for w in W]
    z_ops = [quantum.pauli_on(PauliString("z", v), qdims) for v in V]
    key_proj = []
    for key in range(2**k):
        bits = BitVector.from_int(key, k).bits if k else ()
        key_proj.append(reduce(lambda acc, jb: acc @ (eye + (-1) ** jb[1] * z_ops[jb[0]]) / 2,
                               enumerate(bits), eye))
    p2 = np.zeros(2**k)
    for mu, block in _ancilla_blocks(state, n):
        for par in itertools.product((0, 1), repeat=len(W)):
            proj = reduce(lambda acc, jp: acc @ (eye + (-1) ** jp[1] * x_ops[jp[0]]) / 2,
                          enumerate(par), eye)
            sigma = proj @ block @ proj
            if np.trace(sigma).real < 1e-15:
                continue
            flip = quantum.pauli_matrix(PauliString("z", estimator(mu, par)))
            sigma = flip @ sigma @ flip
            for key, kp in enumerate(key_proj):
                p2[key] += float(np.trace(kp @ sigma).real)

    return EquivalenceReport(
        distance=float(0.5 * np.abs(p1 - p2).sum()), N=n, m=len(W), dims=state.dims,
        W=[str(w) for w in W], V=[str(v) for v in V],
        p_protocol1=p1.tolist(), p_protocol2=p2.tolist())


@dataclass
class AssumptionReport:
    recovery_prob: float
    overlap: float


def _lookup(T, mu) -> Optional[CandidateSet]:
    if isinstance(T, CandidateSet):
        return T
    return T.get(mu)


def _estimate(T, mu, W: VectorSet, par: Sequence[int], n: int) -> BitVector:
    cand = _lookup(T, mu)
    est = None if cand is None else gf2.hash_recover(cand, list(zip(W, par)))
    return BitVector.zeros(n) if est is None else est


def verify_assumption_purity(state: DensityMatrix, T, W: VectorSet,
                             n_qubits: Optional[int] = None) -> AssumptionReport:
    """Recovery probability of the hashed x-string, and purity after the phase correction.

    ``T`` maps each ancilla outcome to its candidate set (a single
    :class:`CandidateSet` applies to every outcome). The recovery probability
    is computed classically from the joint distribution of ancilla outcome
    and x-string; the overlap with ``|0_x...0_x>`` is computed by running the
    parity measurements and phase flip on the density matrix.
    """
    n = W.n if n_qubits is None else n_qubits
    qdims = (2,) * n
    dq = 2**n
    hx = quantum.embed({i: quantum.HADAMARD for i in range(n)}, qdims)
    wmat = W.to_matrix()
    eye = np.eye(dq, dtype=complex)
    x_ops = [quantum.pauli_on(PauliString("x", w), qdims) for w in W]
    plus = hx[:, 0]

    recovery = 0.0
    overlap = 0.0
    for mu, block in _ancilla_blocks(state, n):
        px = np.real(np.diag(hx.conj().T @ block @ hx))
        for x in range(dq):
            if px[x] <= 0:
                continue
            xv = BitVector.from_int(x, n)
            par = tuple(int(p) for p in gf2.parities(xv.to_array()[None, :], wmat)[0]) if len(W) else ()
            if _estimate(T, mu, W, par, n) == xv:
                recovery += px[x]
        for par in itertools.product((0, 1), repeat=len(W)):
            proj = reduce(lambda acc, jp: acc @ (eye + (-1) ** jp[1] * x_ops[jp[0]]) / 2,
                          enumerate(par), eye)
            sigma = proj @ block @ proj
            if np.trace(sigma).real < 1e-15:
                continue
            flip = quantum.pauli_matrix(PauliString("z", _estimate(T, mu, W, par, n)))
            sigma = flip @ sigma @ flip
            overlap += float(np.real(plus.conj() @ sigma @ plus))
    return AssumptionReport(float(recovery), float(overlap))


# --------------------------------------------------------------------------
# coin scenario


@dataclass
class CoinReport:
    r_x0: Optional[float]
    r_x1: Optional[float]
    r_z0: Optional[float]
    r_z1: Optional[float]
    r_t1: float
    delta_estimate: float
    balance: float
    delta1_estimate: Optional[float]
    delta_ph_estimate: Optional[float]
    counts: dict
    exact: dict

    def circle_values(self) -> dict:
        """``(1 - 2 r_x)^2 + (1 - 2 r_z)^2`` for each error flag with both rates present."""
        out = {}
        for j, (rx, rz) in enumerate(((self.r_x0, self.r_z0), (self.r_x1, self.r_z1))):
            if rx is not None and rz is not None:
                out[j] = (1 - 2 * rx) ** 2 + (1 - 2 * rz) ** 2
        return out


def coin_joint_distributions(source: SourceModel, channel: ChannelModel
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``P[t, coin_z]`` and ``P[t, coin_x]`` for one round of the coin scenario.

    ``t`` flags disagreement between ``M_1`` on S and the x measurement on
    Bob's qubit. Subsystem order is S, Q (sent through ``channel``), coin.
    """
    if source.purification is None:
        raise ModelError("coin scenario needs a source with a pure-state model")
    chi0, chi1, _, m1 = source.purification
    psi = quantum.coin_state(chi0, chi1)
    dims = (2, 2, 2)
    rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    rho = quantum.apply_kraus(rho, channel.kraus, dims, target=1)
    out = []
    for basis in (quantum.I2, quantum.HADAMARD):
        p = np.zeros((2, 2))
        for b, bx, c in itertools.product(range(2), repeat=3):
            vx = quantum.HADAMARD[:, bx]
            vc = basis[:, c]
            op = quantum.embed({0: m1[b], 1: np.outer(vx, vx.conj()), 2: np.outer(vc, vc.conj())}, dims)
            p[int(b != bx), c] += float(np.trace(op @ rho).real)
        out.append(p)
    return out[0], out[1]


def _ratio(num, den, floor: float = 0.0) -> Optional[float]:
    return float(num) / float(den) if den > floor else None


def coin_scenario(source: SourceModel, channel: ChannelModel, L: int, s_prob: float,
                  rng) -> CoinReport:
    """Sample ``L`` rounds of the coin scenario and tabulate the empirical rates.

    With probability ``s_prob`` a round measures the coin on x (outcome
    ``abar``), otherwise on z (outcome ``a``).
    """
    rng = np.random.default_rng(rng)
    pz, px = coin_joint_distributions(source, channel)
    s = rng.random(L) < s_prob
    n1 = int(s.sum())
    n0 = L - n1
    draw_x = rng.choice(4, size=n1, p=np.clip(px.reshape(-1), 0, None) / px.sum())
    draw_z = rng.choice(4, size=n0, p=np.clip(pz.reshape(-1), 0, None) / pz.sum())
    tx, abar = draw_x // 2, draw_x % 2
    tz, a = draw_z // 2, draw_z % 2

    counts = {
        "L": L, "s1": n1, "s0": n0,
        "s1_t0": int((tx == 0).sum()), "s1_t1": int((tx == 1).sum()),
        "s0_t0": int((tz == 0).sum()), "s0_t1": int((tz == 1).sum()),
        "abar1_t0": int(((abar == 1) & (tx == 0)).sum()),
        "abar1_t1": int(((abar == 1) & (tx == 1)).sum()),
        "a0_t0": int(((a == 0) & (tz == 0)).sum()),
        "a0_t1": int(((a == 0) & (tz == 1)).sum()),
        "a0": int((a == 0).sum()), "a1": int((a == 1).sum()),
        "a1_t1": int(((a == 1) & (tz == 1)).sum()),
    }
    t_all1 = int((tx == 1).sum() + (tz == 1).sum())
    r_t1 = t_all1 / L
    r_x0 = _ratio(counts["abar1_t0"], counts["s1_t0"])
    r_x1 = _ratio(counts["abar1_t1"], counts["s1_t1"])
    balance = (1 - r_t1) * (r_x0 or 0.0) + r_t1 * (r_x1 or 0.0)

    def ex(num, den):
        return _ratio(num, den, floor=1e-12)

    exact = {
        "Delta": float(px[:, 1].sum()),
        "r_t1": float(px[1].sum()),
        "r_x0": ex(px[0, 1], px[0].sum()),
        "r_x1": ex(px[1, 1], px[1].sum()),
        "r_z0": ex(pz[0, 0], pz[0].sum()),
        "r_z1": ex(pz[1, 0], pz[1].sum()),
        "delta_ph": ex(pz[1, 0], pz[:, 0].sum()),
        "delta1": ex(pz[1, 1], pz[:, 1].sum()),
    }
    return CoinReport(
        r_x0=r_x0, r_x1=r_x1,
        r_z0=_ratio(counts["a0_t0"], counts["s0_t0"]),
        r_z1=_ratio(counts["a0_t1"], counts["s0_t1"]),
        r_t1=r_t1,
        delta_estimate=_ratio(int((abar == 1).sum()), n1) or 0.0,
        balance=balance,
        delta1_estimate=_ratio(counts["a1_t1"], counts["a1"]),
        delta_ph_estimate=_ratio(counts["a0_t1"], counts["a0"]),
        counts=counts, exact=exact,
    )

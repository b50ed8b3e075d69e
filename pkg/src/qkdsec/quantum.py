"""Dense small-dimension quantum states, Pauli strings and measurements.

Subsystems are ordered left to right, matching the bit order of
:class:`~qkdsec.gf2.BitVector`: the basis index of ``|b_0 b_1 ... b_{N-1}>``
is ``sum(b_i * 2**(N-1-i))``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import reduce
from typing import Optional

import numpy as np

from .errors import DimensionError, ModelError, SizeError, StateError
from .gf2 import BitVector, dot

TOL = 1e-10
MAX_QUBITS = 12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

# columns are |0_nu>, |1_nu>
_BASES = {"z": I2, "x": HADAMARD}
_PAULI = {"x": SX, "z": SZ}

# Bloch polar angles (x-z plane) of the four ideal BB84 signals, indexed [a][b]
BB84_ANGLES = ((0.0, math.pi), (math.pi / 2, 3 * math.pi / 2))


def _kron(factors: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, factors, np.eye(1, dtype=complex))


def _validate_dims(dims, size: int) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims) or math.prod(dims) != size:
        raise DimensionError(f"dims {dims} do not match dimension {size}")
    return dims


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dims = _validate_dims(self.dims, amp.size)
        if abs(np.vdot(amp, amp).real - 1) > TOL:
            raise StateError(f"state norm^2 is {np.vdot(amp, amp).real}, expected 1")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def qubits(cls, amplitudes, n: Optional[int] = None) -> "PureState":
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = n if n is not None else int(round(math.log2(amp.size)))
        return cls(amp, (2,) * n)

    @classmethod
    def basis(cls, bits: BitVector | str, axis: str = "z") -> "PureState":
        """Product eigenstate ``|b_0>|b_1>...`` of the given axis."""
        if isinstance(bits, str):
            bits = BitVector.from_str(bits)
        cols = _BASES[axis]
        return cls(_kron([cols[:, b] for b in bits]), (2,) * len(bits))

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.dims)

    def inner(self, other: "PureState") -> complex:
        """``<self|other>``."""
        if self.dims != other.dims:
            raise DimensionError("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(np.kron(self.amplitudes, other.amplitudes), self.dims + other.dims)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionError("density matrix must be square")
        dims = _validate_dims(self.dims, rho.shape[0])
        check_density(rho)
        object.__setattr__(self, "matrix", rho)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityMatrix":
        d = math.prod(dims)
        return cls(np.eye(d, dtype=complex) / d, tuple(dims))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def partial_trace(self, keep: Sequence[int]) -> "DensityMatrix":
        return DensityMatrix(partial_trace(self.matrix, self.dims, keep),
                             tuple(self.dims[k] for k in keep))

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.matrix, other.matrix), self.dims + other.dims)


def as_density(state: PureState | DensityMatrix) -> DensityMatrix:
    if isinstance(state, PureState):
        return state.density()
    return state


def check_density(rho: np.ndarray, tol: float = TOL) -> None:
    if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0):
        raise StateError("matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > tol:
        raise StateError(f"trace is {np.trace(rho).real}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise StateError("matrix has a negative eigenvalue")


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    dims = list(dims)
    n = len(dims)
    keep = list(keep)
    drop = [i for i in range(n) if i not in keep]
    t = rho.reshape(dims + dims)
    # move kept row axes, dropped row axes, kept col axes, dropped col axes
    t = t.transpose(keep + drop + [n + k for k in keep] + [n + d for d in drop])
    dk = math.prod(dims[k] for k in keep)
    dd = math.prod(dims[d] for d in drop)
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ijkj->ik", t)


def _psd_eig(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    if vals.min() < -TOL:
        raise StateError(f"matrix is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    return np.clip(vals, 0.0, None), vecs


def _sqrtm_psd(rho: np.ndarray) -> np.ndarray:
    vals, vecs = _psd_eig(rho)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(r0: DensityMatrix | PureState, r1: DensityMatrix | PureState) -> float:
    """Root fidelity ``Tr (sqrt(r1) r0 sqrt(r1))^(1/2)``."""
    a, b = as_density(r0).matrix, as_density(r1).matrix
    if a.shape != b.shape:
        raise DimensionError("states have different dimensions")
    s = _sqrtm_psd(b)
    vals, _ = _psd_eig(s @ a @ s)
    return float(min(1.0, np.sqrt(vals).sum()))


@dataclass(frozen=True)
class PauliString:
    """Product of ``sigma_axis`` on the qubits flagged in ``pattern``."""

    axis: str
    pattern: BitVector

    def __post_init__(self):
        if self.axis not in _PAULI:
            raise ValueError(f"axis must be 'x' or 'z', got {self.axis!r}")
        if isinstance(self.pattern, str):
            object.__setattr__(self, "pattern", BitVector.from_str(self.pattern))

    @property
    def n(self) -> int:
        return len(self.pattern)


def pauli_matrix(p: PauliString) -> np.ndarray:
    if p.n > MAX_QUBITS:
        raise SizeError(f"{p.n} qubits exceeds the dense limit of {MAX_QUBITS}")
    s = _PAULI[p.axis]
    return _kron([s if b else I2 for b in p.pattern])


def commutes(p: PauliString, q: PauliString) -> bool:
    if p.n != q.n:
        raise DimensionError("Pauli strings act on different numbers of qubits")
    if p.axis == q.axis:
        return True
    return dot(p.pattern, q.pattern) == 0


def _targets(dims: Sequence[int], targets: Optional[Sequence[int]], n: Optional[int] = None):
    targets = list(range(len(dims))) if targets is None else list(targets)
    if n is not None and len(targets) != n:
        raise DimensionError(f"{n}-qubit operator applied to {len(targets)} subsystems")
    for t in targets:
        if dims[t] != 2:
            raise DimensionError(f"subsystem {t} is not a qubit")
    return targets


def embed(ops: dict[int, np.ndarray], dims: Sequence[int]) -> np.ndarray:
    """Tensor product placing ``ops[i]`` on subsystem ``i`` and identity elsewhere."""
    return _kron([ops.get(i, np.eye(d, dtype=complex)) for i, d in enumerate(dims)])


def pauli_on(p: PauliString, dims: Sequence[int], targets: Optional[Sequence[int]] = None) -> np.ndarray:
    targets = _targets(dims, targets, p.n)
    s = _PAULI[p.axis]
    return embed({t: s for t, b in zip(targets, p.pattern) if b}, dims)


def _sample(probs: np.ndarray, rng) -> int:
    probs = np.clip(np.real(probs), 0, None)
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def _project(rho: np.ndarray, proj: np.ndarray) -> tuple[float, np.ndarray]:
    out = proj @ rho @ proj
    p = float(np.trace(out).real)
    return p, out


def measure_string(state: DensityMatrix, p: PauliString, rng,
                   targets: Optional[Sequence[int]] = None) -> tuple[int, DensityMatrix]:
    """Projective measurement of a Pauli string; returns (+1 or -1, post-state)."""
    rng = np.random.default_rng(rng)
    state = as_density(state)
    op = pauli_on(p, state.dims, targets)
    eye = np.eye(state.dim, dtype=complex)
    branches = [_project(state.matrix, (eye + s * op) / 2) for s in (1, -1)]
    k = _sample(np.array([b[0] for b in branches]), rng)
    prob, post = branches[k]
    return (1, -1)[k], DensityMatrix(post / prob, state.dims)


def basis_projector(bits: Sequence[int], axis: str, dims: Sequence[int],
                    targets: Optional[Sequence[int]] = None) -> np.ndarray:
    targets = _targets(dims, targets, len(bits))
    cols = _BASES[axis]
    return embed({t: np.outer(cols[:, b], cols[:, b].conj()) for t, b in zip(targets, bits)}, dims)


def born_distribution(state: DensityMatrix | PureState, axis: str,
                      targets: Optional[Sequence[int]] = None) -> np.ndarray:
    """Outcome probabilities of measuring each target qubit on ``axis``.

    Entry ``k`` is the probability of the bit string whose integer value is ``k``.
    """
    state = as_density(state)
    targets = _targets(state.dims, targets)
    if len(targets) > MAX_QUBITS:
        raise SizeError("too many qubits for dense simulation")
    u = embed({t: _BASES[axis].conj().T for t in targets}, state.dims)
    diag = np.real(np.diag(u @ state.matrix @ u.conj().T))
    n = len(state.dims)
    t = diag.reshape(state.dims)
    drop = tuple(i for i in range(n) if i not in targets)
    t = t.sum(axis=drop)
    # remaining axes are in increasing subsystem order; reorder to match targets
    order = sorted(targets)
    t = np.transpose(t, [order.index(k) for k in targets])
    return np.clip(t.reshape(-1), 0.0, None)


def measure_each(state: DensityMatrix | PureState, axis: str, rng,
                 targets: Optional[Sequence[int]] = None) -> tuple[BitVector, DensityMatrix]:
    rng = np.random.default_rng(rng)
    state = as_density(state)
    targets = _targets(state.dims, targets)
    probs = born_distribution(state, axis, targets)
    k = _sample(probs, rng)
    bits = BitVector.from_int(k, len(targets))
    prob, post = _project(state.matrix, basis_projector(bits.bits, axis, state.dims, targets))
    return bits, DensityMatrix(post / prob, state.dims)


def shannon_entropy(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def von_neumann_entropy(rho: DensityMatrix | PureState) -> float:
    vals, _ = _psd_eig(as_density(rho).matrix)
    return shannon_entropy(vals)


def coin_state(chi0: PureState, chi1: PureState) -> PureState:
    """``(|chi0>|0_z> + |chi1>|1_z>)/sqrt(2)`` with the coin as the last subsystem."""
    if chi0.dims != chi1.dims:
        raise DimensionError("coin branches live on different spaces")
    amp = (np.kron(chi0.amplitudes, [1, 0]) + np.kron(chi1.amplitudes, [0, 1])) / math.sqrt(2)
    return PureState(amp, chi0.dims + (2,))


def coin_imbalance(psi: PureState) -> float:
    """Squared norm of the ``<1_x|`` component of the last (coin) qubit."""
    if psi.dims[-1] != 2:
        raise DimensionError("last subsystem must be the coin qubit")
    branches = psi.amplitudes.reshape(-1, 2)
    minus = (branches[:, 0] - branches[:, 1]) / math.sqrt(2)
    return float(np.vdot(minus, minus).real)


@dataclass(frozen=True, eq=False)
class Povm:
    elements: tuple[np.ndarray, ...]

    def __post_init__(self):
        els = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        d = els[0].shape[0]
        for e in els:
            if np.linalg.eigvalsh((e + e.conj().T) / 2).min() < -TOL:
                raise StateError("POVM element is not positive semidefinite")
        if not np.allclose(sum(els), np.eye(d), atol=TOL, rtol=0):
            raise StateError("POVM elements do not sum to identity")
        object.__setattr__(self, "elements", els)

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, i) -> np.ndarray:
        return self.elements[i]


def bloch_state(theta: float, phi: float = 0.0) -> np.ndarray:
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)], dtype=complex)


def signal_vectors(angles) -> np.ndarray:
    """Pure signal vectors ``[a, b, :]`` from polar angles ``[a][b]`` or ``(theta, phi)`` pairs."""
    ang = np.asarray(angles, dtype=float)
    if ang.shape == (2, 2):
        ang = np.stack([ang, np.zeros_like(ang)], axis=-1)
    if ang.shape != (2, 2, 2):
        raise ModelError(f"angles must have shape (2, 2) or (2, 2, 2), got {ang.shape}")
    return np.array([[bloch_state(*ang[a, b]) for b in range(2)] for a in range(2)])


def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape != (2, 2) or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1, atol=TOL):
        raise ModelError("probabilities must be a 2x2 array with rows summing to 1")
    return p


def two_pure_source(delta: float, probs=None, angles=BB84_ANGLES
                    ) -> tuple[PureState, PureState, Povm, Povm]:
    """Canonical purification of a BB84 source with coin overlap ``1 - 2*delta``.

    The system is ``S (x) Q`` with both a qubit. Basis ``a`` starts from
    ``sum_b sqrt(p_ab)|b>_S|phi_ab>_Q``; the ``a = 1`` branch is then rotated by
    a unitary on S that tunes the overlap, and ``M_1`` is the z measurement in
    the rotated frame. ``M_0`` is the plain z measurement on S.

    Reachable overlaps are ``[s1 - s2, s1 + s2]`` where ``s1 >= s2`` are the
    singular values of ``Tr_Q |p_1><p_0|``; the upper end is the root fidelity
    of the two basis-averaged signal states.
    """
    if not 0 <= delta <= 0.5:
        raise ModelError(f"delta must lie in [0, 1/2], got {delta}")
    p = _check_probs(np.full((2, 2), 0.5) if probs is None else probs)
    phi = signal_vectors(angles)
    # P_a[s, q]: amplitude matrix of the canonical purification
    P = [np.sqrt(p[a])[:, None] * phi[a] for a in range(2)]
    u, s, wh = np.linalg.svd(P[1] @ P[0].conj().T)
    target = 1 - 2 * delta
    s1, s2 = float(s[0]), float(s[1])
    if target > s1 + s2 + 1e-12 or target < s1 - s2 - 1e-12:
        raise ModelError(f"overlap {target:.6g} unreachable; feasible range "
                         f"[{s1 - s2:.6g}, {s1 + s2:.6g}]")
    if s2 < 1e-15:
        alpha = 0.0
    else:
        alpha = math.acos(float(np.clip((target**2 - s1**2 - s2**2) / (2 * s1 * s2), -1, 1)))
    d = np.diag([np.exp(1j * alpha), 1.0])
    z = s1 * np.exp(1j * alpha) + s2
    phase = np.conj(z) / abs(z) if abs(z) > 1e-15 else 1.0
    v = phase * (wh.conj().T @ d @ u.conj().T)

    chi0 = PureState(P[0].reshape(-1), (2, 2))
    chi1 = PureState((v @ P[1]).reshape(-1), (2, 2))
    z_proj = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
    m0 = Povm(tuple(z_proj))
    m1 = Povm(tuple(v @ e @ v.conj().T for e in z_proj))

    for a, (chi, m) in enumerate(((chi0, m0), (chi1, m1))):
        rho = np.outer(chi.amplitudes, chi.amplitudes.conj())
        for b in range(2):
            out = partial_trace(embed({0: m[b]}, (2, 2)) @ rho, (2, 2), [1])
            want = p[a, b] * np.outer(phi[a, b], phi[a, b].conj())
            if not np.allclose(out, want, atol=TOL, rtol=0):
                raise ModelError(f"POVM does not reproduce signal ({a}, {b})")
    if abs(chi0.inner(chi1) - target) > TOL:
        raise ModelError("constructed overlap misses its target")
    return chi0, chi1, m0, m1


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray], dims: Sequence[int],
                target: int) -> np.ndarray:
    out = np.zeros_like(rho, dtype=complex)
    for k in kraus:
        full = embed({target: k}, dims)
        out += full @ rho @ full.conj().T
    return out


def random_pure_state(dims: Sequence[int], rng) -> PureState:
    rng = np.random.default_rng(rng)
    d = math.prod(dims)
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(v / np.linalg.norm(v), tuple(dims))


def random_density_matrix(dims: Sequence[int], rng, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre-ensemble random state of the given rank (full rank by default)."""
    rng = np.random.default_rng(rng)
    d = math.prod(dims)
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(rho / np.trace(rho).real, tuple(dims))


def _pairs(z: np.ndarray) -> list:
    return [[float(c.real), float(c.imag)] for c in z]


def state_to_dict(state: PureState | DensityMatrix) -> dict:
    if isinstance(state, PureState):
        return {"dims": list(state.dims), "amplitudes": _pairs(state.amplitudes)}
    return {"dims": list(state.dims), "matrix": [_pairs(row) for row in state.matrix]}


def state_from_dict(doc: dict) -> PureState | DensityMatrix:
    def cplx(pairs):
        return np.array([complex(re, im) for re, im in pairs])

    dims = tuple(doc["dims"])
    if "amplitudes" in doc:
        return PureState(cplx(doc["amplitudes"]), dims)
    if "matrix" in doc:
        return DensityMatrix(np.array([cplx(row) for row in doc["matrix"]]), dims)
    raise StateError("state document needs 'amplitudes' or 'matrix'")

"""Dense linear algebra and entropy primitives for small Hilbert spaces.

States are plain numpy arrays: 1-D arrays are state vectors, 2-D arrays are
operators. Logarithms are base 2 throughout, with 0 log 0 taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
NEG_EIG_TOL = 1e-10


class InvalidStateError(ValueError):
    """Raised when an input violates a state or operator invariant."""


def _as_index_set(x: int | Iterable[int]) -> tuple[int, ...]:
    if isinstance(x, (int, np.integer)):
        return (int(x),)
    return tuple(sorted(int(i) for i in x))


def as_state_vector(psi, tol: float = HERMITIAN_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1 or psi.size == 0:
        raise InvalidStateError(f"state vector must be 1-D and non-empty, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise InvalidStateError(f"state vector has norm {norm:.12g}, expected 1")
    return psi


def as_hermitian(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidStateError(f"operator must be square, got shape {a.shape}")
    if not np.allclose(a, a.conj().T, rtol=0.0, atol=tol):
        raise InvalidStateError("operator is not Hermitian")
    return (a + a.conj().T) / 2


def as_density(rho, tol: float = TRACE_TOL) -> np.ndarray:
    """Return ``rho`` as a validated density matrix.

    Vectors are accepted and turned into projectors.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        psi = as_state_vector(rho)
        return np.outer(psi, psi.conj())
    rho = as_hermitian(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"density operator has trace {tr:.12g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -NEG_EIG_TOL:
        raise InvalidStateError("density operator has a negative eigenvalue")
    return rho


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def eigh_psd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian PSD matrix with rounding clipped.

    Eigenvalues above -1e-10 are clipped to zero; anything more negative is
    treated as bad input.
    """
    a = (a + a.conj().T) / 2
    w, v = np.linalg.eigh(a)
    if w.size and w.min() < -NEG_EIG_TOL:
        raise InvalidStateError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3g})")
    return np.clip(w, 0.0, None), v


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = eigh_psd(a)
    return (v * np.sqrt(w)) @ v.conj().T


def entropy_from_spectrum(w) -> float:
    """Shannon entropy in bits of a nonnegative vector (0 log 0 = 0)."""
    w = np.asarray(w, dtype=float)
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w))) if w.size else 0.0


def von_neumann_entropy(rho) -> float:
    """S(rho) = -tr rho log2 rho."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return 0.0
    w, _ = eigh_psd(rho)
    if w.size and w.max() > 1.0 + NEG_EIG_TOL:
        raise InvalidStateError("eigenvalue exceeds 1; not a density operator")
    return max(entropy_from_spectrum(np.clip(w, 0.0, 1.0)), 0.0)


def fidelity(rho, omega) -> float:
    """Fidelity F = (tr sqrt(sqrt(omega) rho sqrt(omega)))^2.

    Either argument may be a state vector, in which case the pure-state
    form <psi|rho|psi> is used.
    """
    rho = np.asarray(rho, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    if rho.shape[0] != omega.shape[0]:
        raise InvalidStateError(f"dimension mismatch: {rho.shape[0]} vs {omega.shape[0]}")
    if rho.ndim == 1 and omega.ndim == 1:
        return float(min(abs(np.vdot(rho, omega)) ** 2, 1.0))
    if rho.ndim == 1:
        return float(np.clip(np.vdot(rho, as_density(omega) @ rho).real, 0.0, 1.0))
    if omega.ndim == 1:
        return float(np.clip(np.vdot(omega, as_density(rho) @ omega).real, 0.0, 1.0))
    rho, omega = as_density(rho), as_density(omega)
    # ||sqrt(rho) sqrt(omega)||_1; eigenvalues at rounding level are dropped
    # before the square root, which would otherwise inflate them to ~1e-8
    a, b = _support_sqrt(rho), _support_sqrt(omega)
    sv = np.linalg.svd(a.conj().T @ b, compute_uv=False)
    return float(min(np.sum(sv) ** 2, 1.0))


def _support_sqrt(rho: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    """Factor A with A A^dagger = rho, keeping only eigenvalues above rel * max."""
    w, v = eigh_psd(rho)
    keep = w > rel * max(w.max(), 0.0)
    return v[:, keep] * np.sqrt(w[keep])


def trace_norm(delta) -> float:
    """Sum of the absolute values of the eigenvalues of a Hermitian operator."""
    delta = as_hermitian(delta)
    return float(np.sum(np.abs(np.linalg.eigvalsh(delta))))


def trace_distance(rho, omega) -> float:
    return 0.5 * trace_norm(np.asarray(rho) - np.asarray(omega))


def tensor(*ops) -> np.ndarray:
    """Kronecker product of vectors or matrices, leftmost factor first."""
    if len(ops) == 1 and isinstance(ops[0], (list, tuple)):
        ops = tuple(ops[0])
    if not ops:
        raise ValueError("tensor() needs at least one factor")
    return reduce(np.kron, (np.asarray(o, dtype=complex) for o in ops))


def partial_trace_matrix(rho: np.ndarray, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every subsystem not in ``keep``; kept factors stay in order."""
    keep = _as_index_set(keep)
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    if any(i < 0 or i >= n for i in keep):
        raise IndexError(f"subsystem index out of range for {n} subsystems")
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    t = rho.reshape(dims + dims)
    # einsum letters: row indices a.., column indices kept distinct only if kept
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise ValueError("too many subsystems")
    rows = list(letters[:n])
    cols = [letters[n + i] if i in keep else rows[i] for i in range(n)]
    out = [rows[i] for i in keep] + [cols[i] for i in keep]
    kept = int(np.prod([dims[i] for i in keep])) if keep else 1
    res = np.einsum("".join(rows + cols) + "->" + "".join(out), t)
    return res.reshape(kept, kept)


@dataclass(frozen=True)
class MultipartiteState:
    """A density operator together with its tensor-factor dimensions."""

    operator: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if any(d <= 0 for d in dims):
            raise InvalidStateError("subsystem dimensions must be positive")
        rho = as_density(self.operator)
        if rho.shape[0] != int(np.prod(dims)):
            raise InvalidStateError(f"dims {dims} do not multiply to {rho.shape[0]}")
        object.__setattr__(self, "operator", rho)
        object.__setattr__(self, "dims", dims)

    @property
    def n(self) -> int:
        return len(self.dims)


def partial_trace(m: MultipartiteState, keep) -> MultipartiteState:
    keep = _as_index_set(keep)
    sub = partial_trace_matrix(m.operator, m.dims, keep)
    return MultipartiteState(sub, tuple(m.dims[i] for i in keep) or (1,))


def purify(rho) -> np.ndarray:
    """Purification sum_i sqrt(l_i)|e_i>|i> on the doubled space (system first)."""
    rho = as_density(rho)
    w, v = eigh_psd(rho)
    d = rho.shape[0]
    psi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        psi += np.sqrt(w[i]) * np.kron(v[:, i], np.eye(d)[i])
    return psi / np.linalg.norm(psi)


def subsystem_entropy(m: MultipartiteState, subsystems) -> float:
    subsystems = _as_index_set(subsystems)
    if not subsystems:
        return 0.0
    return von_neumann_entropy(partial_trace_matrix(m.operator, m.dims, subsystems))


def _disjoint(*groups: tuple[int, ...]) -> None:
    seen: set[int] = set()
    for g in groups:
        if seen & set(g):
            raise ValueError(f"subsystem index sets overlap: {groups}")
        seen |= set(g)


def conditional_entropy(m: MultipartiteState, a, b) -> float:
    """S(A|B) = S(A,B) - S(B)."""
    a, b = _as_index_set(a), _as_index_set(b)
    _disjoint(a, b)
    return subsystem_entropy(m, a + b) - subsystem_entropy(m, b)


def mutual_entropy(m: MultipartiteState, a, b) -> float:
    """S(A:B) = S(A) + S(B) - S(A,B)."""
    a, b = _as_index_set(a), _as_index_set(b)
    _disjoint(a, b)
    return subsystem_entropy(m, a) + subsystem_entropy(m, b) - subsystem_entropy(m, a + b)


def conditional_mutual(m: MultipartiteState, a, b, c) -> float:
    """S(A:B|C) = S(A|C) + S(B|C) - S(A,B|C)."""
    a, b, c = _as_index_set(a), _as_index_set(b), _as_index_set(c)
    _disjoint(a, b, c)
    return (conditional_entropy(m, a, c) + conditional_entropy(m, b, c)
            - conditional_entropy(m, a + b, c))


# -- random generation (tests and sweeps) -----------------------------------

def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real

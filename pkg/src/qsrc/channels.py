"""CPTP maps, classical-quantum instruments and environment dilations."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensembles import Ensemble, chain, density, holevo_chi
from .qcore import (InvalidStateError, as_density, eigh_psd, fidelity, partial_trace_matrix,
                    random_unitary, trace_distance, von_neumann_entropy)

TP_TOL = 1e-9
DROP_PROB = 1e-12


def _check_tp(ops: Sequence[np.ndarray], in_dim: int, what: str) -> None:
    s = sum(k.conj().T @ k for k in ops)
    err = np.abs(s - np.eye(in_dim)).max()
    if err > TP_TOL:
        raise InvalidStateError(f"{what} is not trace preserving (max deviation {err:.3g})")


def _as_ops(ops) -> tuple[np.ndarray, ...]:
    ops = tuple(np.atleast_2d(np.asarray(k, dtype=complex)) for k in ops)
    if not ops:
        raise InvalidStateError("need at least one Kraus operator")
    if len({k.shape for k in ops}) != 1:
        raise InvalidStateError("Kraus operators must share a shape")
    for k in ops:
        k.setflags(write=False)
    return ops


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """CPTP map rho -> sum_a K_a rho K_a^dagger; each K_a is (out_dim, in_dim)."""

    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = _as_ops(self.operators)
        _check_tp(ops, ops[0].shape[1], "channel")
        object.__setattr__(self, "operators", ops)

    @property
    def in_dim(self) -> int:
        return self.operators[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def rank(self) -> int:
        return len(self.operators)


def apply(c: KrausChannel, rho) -> np.ndarray:
    rho = as_density(rho)
    if rho.shape[0] != c.in_dim:
        raise InvalidStateError(f"channel expects dim {c.in_dim}, got {rho.shape[0]}")
    return sum(k @ rho @ k.conj().T for k in c.operators)


def compose(d: KrausChannel, e: KrausChannel) -> KrausChannel:
    """The channel D o E (E first)."""
    if d.in_dim != e.out_dim:
        raise InvalidStateError("cannot compose: dimension mismatch")
    return KrausChannel(tuple(a @ b for a in d.operators for b in e.operators))


def dilate(c: KrausChannel) -> np.ndarray:
    """Stinespring isometry V = sum_a K_a (x) |a>, system first, environment second."""
    r = c.rank
    v = np.zeros((c.out_dim * r, c.in_dim), dtype=complex)
    for a, k in enumerate(c.operators):
        v[a::r, :] = k
    return v


def environment_state(c: KrausChannel, psi) -> np.ndarray:
    """Reduced environment state tr_sys(V rho V^dagger) of the dilation."""
    rho = as_density(psi)
    v = dilate(c)
    return partial_trace_matrix(v @ rho @ v.conj().T, (c.out_dim, c.rank), [1])


def complementary_channel(c: KrausChannel) -> KrausChannel:
    """Channel input -> environment of the dilation."""
    r = c.rank
    ops = []
    for i in range(c.out_dim):
        e = np.zeros((r, c.in_dim), dtype=complex)
        for a, k in enumerate(c.operators):
            e[a] = k[i]
        ops.append(e)
    return KrausChannel(tuple(ops))


# -- common channels ---------------------------------------------------------

def identity_channel(d: int) -> KrausChannel:
    return KrausChannel((np.eye(d),))


def unitary_channel(u) -> KrausChannel:
    return KrausChannel((np.asarray(u, dtype=complex),))


def depolarizing_channel(d: int, p: float = 1.0) -> KrausChannel:
    """rho -> (1-p) rho + p I/d."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    ops = [np.sqrt(1 - p) * np.eye(d)] if p < 1 else []
    for i in range(d):
        for j in range(d):
            k = np.zeros((d, d))
            k[i, j] = np.sqrt(p / d)
            ops.append(k)
    return KrausChannel(tuple(ops))


def dephasing_channel(d: int) -> KrausChannel:
    """Measure in the computational basis and keep the post-measurement state."""
    return KrausChannel(tuple(np.diag(np.eye(d)[i]) for i in range(d)))


def controlled_rotation_leak(t: float) -> KrausChannel:
    """Qubit channel from a controlled rotation by angle t onto an ancilla qubit.

    |0>|0> -> |0>|0>,  |1>|0> -> |1>(cos t|0> + sin t|1>).
    """
    k0 = np.diag([1.0, np.cos(t)])
    k1 = np.diag([0.0, np.sin(t)])
    return KrausChannel((k0, k1))


def random_channel(in_dim: int, out_dim: int, rank: int, rng: np.random.Generator) -> KrausChannel:
    """Random channel from a Haar isometry C^in -> C^out (x) C^rank."""
    if out_dim * rank < in_dim:
        raise ValueError("need out_dim * rank >= in_dim for an isometry")
    u = random_unitary(out_dim * rank, rng)[:, :in_dim]
    return KrausChannel(tuple(u[a::rank, :] for a in range(rank)))


# -- instruments -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Instrument:
    """Completely positive branches labelled by classical outcomes.

    ``branches[j]`` is the tuple of Kraus fragments for outcome ``labels[j]``.
    """

    labels: tuple[str, ...]
    branches: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        labels = tuple(str(l) for l in self.labels)
        branches = tuple(_as_ops(b) for b in self.branches)
        if len(labels) != len(branches):
            raise InvalidStateError("one branch per label required")
        if len(set(labels)) != len(labels):
            raise InvalidStateError("outcome labels must be distinct")
        if len({b[0].shape for b in branches}) != 1:
            raise InvalidStateError("all branches must map between the same spaces")
        _check_tp([k for b in branches for k in b], branches[0][0].shape[1], "instrument")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "branches", branches)

    @property
    def in_dim(self) -> int:
        return self.branches[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.branches[0][0].shape[0]

    def channel(self) -> KrausChannel:
        """The CPTP map obtained by forgetting the classical label."""
        return KrausChannel(tuple(k for b in self.branches for k in b))

    def channel_with_register(self) -> KrausChannel:
        """CPTP map into register (x) output, storing the label as |j><j|."""
        nj = len(self.labels)
        ops = []
        for j, b in enumerate(self.branches):
            for k in b:
                op = np.zeros((nj * self.out_dim, self.in_dim), dtype=complex)
                op[j * self.out_dim:(j + 1) * self.out_dim] = k
                ops.append(op)
        return KrausChannel(tuple(ops))


@dataclass(frozen=True, eq=False)
class ClassicalQuantumState:
    """sum_j c_j |j><j| (x) omega_j with zero-probability outcomes dropped."""

    labels: tuple[str, ...]
    probs: np.ndarray
    states: tuple[np.ndarray, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
            raise InvalidStateError("outcome probabilities must sum to 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", tuple(as_density(s) for s in self.states))

    def as_dict(self) -> dict[str, tuple[float, np.ndarray]]:
        return {l: (p, s) for l, p, s in zip(self.labels, self.probs, self.states)}

    def block_matrix(self, labels: Sequence[str]) -> np.ndarray:
        """Dense sum_j c_j |j><j| (x) omega_j over the given outcome ordering."""
        d = self.states[0].shape[0]
        out = np.zeros((len(labels) * d, len(labels) * d), dtype=complex)
        pos = {l: i for i, l in enumerate(labels)}
        for l, p, s in zip(self.labels, self.probs, self.states):
            i = pos[l]
            out[i * d:(i + 1) * d, i * d:(i + 1) * d] = p * s
        return out


def branch_outputs(ins: Instrument, psi) -> list[np.ndarray]:
    """Unnormalized outputs sum_a K_a rho K_a^dagger for each outcome."""
    rho = as_density(psi)
    if rho.shape[0] != ins.in_dim:
        raise InvalidStateError(f"instrument expects dim {ins.in_dim}, got {rho.shape[0]}")
    return [sum(k @ rho @ k.conj().T for k in b) for b in ins.branches]


def encode(ins: Instrument, psi) -> ClassicalQuantumState:
    outs = branch_outputs(ins, psi)
    labels, probs, states = [], [], []
    for l, o in zip(ins.labels, outs):
        c = float(np.trace(o).real)
        if c < DROP_PROB:
            continue
        labels.append(l)
        probs.append(c)
        states.append(o / c)
    probs = np.array(probs)
    return ClassicalQuantumState(tuple(labels), probs / probs.sum(), tuple(states))


def outcome_probabilities(ins: Instrument, states: np.ndarray) -> np.ndarray:
    """Matrix c[I, j] = p(j|I) for pure input states given as rows."""
    states = np.atleast_2d(states)
    c = np.zeros((states.shape[0], len(ins.labels)))
    for j, b in enumerate(ins.branches):
        for k in b:
            c[:, j] += np.sum(np.abs(states @ k.T) ** 2, axis=1)
    return c


def classical_mutual_information(joint: np.ndarray) -> float:
    """Mutual information in bits of a joint distribution matrix."""
    joint = np.asarray(joint, dtype=float)
    joint = joint / joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / (px @ py)[mask]
    return max(float(np.sum(joint[mask] * np.log2(ratio))), 0.0)


def mutual_information(ins: Instrument, e: Ensemble) -> float:
    """I(I:J) of the classical distribution p(I & j) = p_I c_j^I."""
    if e.dim != ins.in_dim:
        raise InvalidStateError("instrument and ensemble dimensions differ")
    c = outcome_probabilities(ins, e.states)
    return classical_mutual_information(e.probs[:, None] * c)


@dataclass
class SupportReport:
    supp_bar: float
    supp: dict[str, float]
    probs: dict[str, float]
    ranks: dict[str, int]
    spectra: dict[str, np.ndarray]


def avg_support(ins: Instrument, e: Ensemble, n: int = 1, rank_tol: float = 1e-9,
                ceil: bool = False) -> SupportReport:
    """Quantum resource sum_j p_j supp_j in qubits per signal.

    supp_j = log2(rank of the support of E_j) / n, with eigenvalues below
    rank_tol times the largest treated as zero. ``ceil`` rounds the qubit
    count up to an integer before dividing by n.
    """
    if not 0 < rank_tol < 1e-3:
        raise ValueError("rank_tol must lie in (0, 1e-3)")
    if e.dim != ins.in_dim:
        raise InvalidStateError("instrument and ensemble dimensions differ")
    rho = density(e)
    supp, probs, ranks, spectra = {}, {}, {}, {}
    total = 0.0
    for l, b in zip(ins.labels, ins.branches):
        avg = sum(k @ rho @ k.conj().T for k in b)
        pj = float(np.trace(avg).real)
        if pj < DROP_PROB:
            continue
        w, _ = eigh_psd(avg / pj)
        w = w[::-1]
        rank = int(np.sum(w > rank_tol * w[0]))
        qubits = np.log2(rank)
        if ceil:
            qubits = float(np.ceil(qubits - 1e-12))
        supp[l], probs[l], ranks[l], spectra[l] = qubits / n, pj, rank, w
        total += pj * qubits / n
    return SupportReport(total, supp, probs, ranks, spectra)


def chi_cq_decomposition(encoded: Sequence[ClassicalQuantumState], probs) -> tuple[float, float, float]:
    """Return (chi_enc, sum_j p_j chi_j, I(I:J)) for an encoded ensemble.

    chi_enc is computed from the dense block-diagonal encoded states; the
    other two terms from the conditional ensembles and the classical joint
    distribution.
    """
    probs = np.asarray(probs, dtype=float)
    labels = sorted({l for cq in encoded for l in cq.labels})
    taus = [cq.block_matrix(labels) for cq in encoded]
    tau_bar = sum(p * t for p, t in zip(probs, taus))
    chi_enc = von_neumann_entropy(tau_bar) - sum(p * von_neumann_entropy(t)
                                                 for p, t in zip(probs, taus))

    joint = np.zeros((len(encoded), len(labels)))
    pos = {l: i for i, l in enumerate(labels)}
    for I, cq in enumerate(encoded):
        for l, c in zip(cq.labels, cq.probs):
            joint[I, pos[l]] = probs[I] * c
    info = classical_mutual_information(joint)

    avg_chi = 0.0
    for l in labels:
        pj = joint[:, pos[l]].sum()
        if pj <= 0:
            continue
        members = [(joint[I, pos[l]] / pj, cq.as_dict()[l][1])
                   for I, cq in enumerate(encoded) if joint[I, pos[l]] > 0]
        avg_chi += pj * holevo_chi([s for _, s in members], [p for p, _ in members])
    return chi_enc, avg_chi, info


def encode_ensemble(ins: Instrument, e: Ensemble) -> list[ClassicalQuantumState]:
    return [encode(ins, s) for s in e.states]


# -- standard instruments ---------------------------------------------------

def identity_instrument(d: int) -> Instrument:
    return Instrument(("id",), ((np.eye(d),),))


def projective_instrument(basis, labels: Sequence[str] | None = None) -> Instrument:
    """Measure in an orthonormal basis (rows), keeping the post-measurement state."""
    basis = np.atleast_2d(np.asarray(basis, dtype=complex))
    labels = labels or [str(i) for i in range(basis.shape[0])]
    return Instrument(tuple(labels), tuple((np.outer(b, b.conj()),) for b in basis))


def subspace_instrument(projectors: Sequence[np.ndarray], labels: Sequence[str] | None = None) -> Instrument:
    """Measure which of several orthogonal subspaces a state is in, without disturbance inside it."""
    projectors = [np.asarray(p, dtype=complex) for p in projectors]
    labels = list(labels or [str(i) for i in range(len(projectors))])
    d = projectors[0].shape[0]
    rest = np.eye(d) - sum(projectors)
    branches = [(p,) for p in projectors]
    if np.abs(rest).max() > 1e-9:
        branches.append((rest,))
        labels.append("rest")
    return Instrument(tuple(labels), tuple(branches))


def measure_and_replace_instrument(d: int, fixed=None) -> Instrument:
    """Measure in the computational basis, then output a fixed state (|0> by default)."""
    fixed = np.eye(d)[0] if fixed is None else np.asarray(fixed, dtype=complex)
    return Instrument(tuple(str(j) for j in range(d)),
                      tuple((np.outer(fixed, np.eye(d)[j]),) for j in range(d)))


def weak_measurement_instrument(strength: float) -> Instrument:
    """Two-outcome qubit measurement leaking which computational basis state is present.

    strength 0 gives no information and no disturbance; strength 1 is a
    projective Z measurement.
    """
    if not 0 <= strength <= 1:
        raise ValueError("strength must lie in [0, 1]")
    a, b = np.sqrt((1 + strength) / 2), np.sqrt((1 - strength) / 2)
    return Instrument(("0", "1"), ((np.diag([a, b]),), (np.diag([b, a]),)))


def tensor_power_instrument(ins: Instrument, n: int) -> Instrument:
    """n-fold tensor power; labels are joined with '.'."""
    labels, branches = list(ins.labels), list(ins.branches)
    for _ in range(n - 1):
        new_l, new_b = [], []
        for l1, b1 in zip(labels, branches):
            for l2, b2 in zip(ins.labels, ins.branches):
                new_l.append(f"{l1}.{l2}")
                new_b.append(tuple(np.kron(x, y) for x in b1 for y in b2))
        labels, branches = new_l, new_b
    return Instrument(tuple(labels), tuple(branches))


# -- perfect-fidelity check -------------------------------------------------

@dataclass
class PerfectFidelityCheck:
    fidelities: np.ndarray
    max_chain_distance: float
    chi_env: float

    @property
    def perfect(self) -> bool:
        return bool(np.all(self.fidelities > 1 - 1e-9))


def perfect_fidelity_check(e: Ensemble, c: KrausChannel, tol: float = 1e-9) -> PerfectFidelityCheck:
    """Environment states of adjacent (non-orthogonal) signals and chi of the environment.

    For a channel reproducing every signal exactly, environment states of
    signals joined by a chain coincide, so the environment holds no
    information about an irreducible source.
    """
    fids = np.array([fidelity(s, apply(c, s)) for s in e.states])
    envs = [environment_state(c, s) for s in e.states]
    dmax = 0.0
    g = np.abs(e.gram())
    for i in range(e.K):
        for j in range(i + 1, e.K):
            if g[i, j] > tol:
                dmax = max(dmax, trace_distance(envs[i], envs[j]))
            elif chain(e, i, j, tol) is not None:
                dmax = max(dmax, trace_distance(envs[i], envs[j]))
    return PerfectFidelityCheck(fids, dmax, holevo_chi(envs, e.probs))


# -- JSON -------------------------------------------------------------------

def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def instrument_to_dict(ins: Instrument) -> dict:
    return {
        "in_dim": ins.in_dim,
        "out_dim": ins.out_dim,
        "outcomes": [{"label": l, "kraus": [_matrix_to_json(k) for k in b]}
                     for l, b in zip(ins.labels, ins.branches)],
    }


def instrument_from_dict(d: dict) -> Instrument:
    try:
        in_dim, out_dim = int(d["in_dim"]), int(d["out_dim"])
        labels = [o["label"] for o in d["outcomes"]]
        branches = [tuple(_matrix_from_json(k) for k in o["kraus"]) for o in d["outcomes"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed instrument description: {exc}") from exc
    for b in branches:
        for k in b:
            if k.shape != (out_dim, in_dim):
                raise InvalidStateError(f"Kraus operator has shape {k.shape}, expected {(out_dim, in_dim)}")
    return Instrument(tuple(labels), tuple(branches))


def channel_to_dict(c: KrausChannel) -> dict:
    return instrument_to_dict(Instrument(("0",), (c.operators,)))


def channel_from_dict(d: dict) -> KrausChannel:
    return instrument_from_dict(d).channel()


def load_instrument(path: str | Path) -> Instrument:
    with open(path) as fh:
        return instrument_from_dict(json.load(fh))


def save_instrument(ins: Instrument, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(instrument_to_dict(ins), fh)

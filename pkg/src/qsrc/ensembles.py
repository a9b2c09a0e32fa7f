"""Pure-state sources, their information quantities and reducibility."""

from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg

from .qcore import (InvalidStateError, as_density, entropy_from_spectrum, tensor,
                    von_neumann_entropy)

log = logging.getLogger(__name__)

OVERLAP_TOL = 1e-9
MAX_STRING_DIM = 4096
MAX_STRING_MEMBERS = 10**6


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted list of pure states ``{|sigma_i>; p_i}``.

    ``states`` has shape (K, k): one row per signal.
    """

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if states.shape[0] == 0:
            raise InvalidStateError("ensemble needs at least one state")
        if probs.shape[0] != states.shape[0]:
            raise InvalidStateError(f"{states.shape[0]} states but {probs.shape[0]} probabilities")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise InvalidStateError("probabilities must be nonnegative and sum to 1")
        norms = np.linalg.norm(states, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise InvalidStateError("all signal states must have unit norm")
        states.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_vectors(cls, vectors, probs=None, normalize: bool = True) -> "Ensemble":
        v = np.atleast_2d(np.asarray(vectors, dtype=complex))
        if normalize:
            v = v / np.linalg.norm(v, axis=1, keepdims=True)
        if probs is None:
            probs = np.full(v.shape[0], 1.0 / v.shape[0])
        return cls(v, probs)

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def gram(self) -> np.ndarray:
        return self.states.conj() @ self.states.T

    def __repr__(self) -> str:
        return f"Ensemble(K={self.K}, dim={self.dim})"


def density(e: Ensemble) -> np.ndarray:
    return (e.states.T * e.probs) @ e.states.conj()


def entropy(e: Ensemble) -> float:
    return von_neumann_entropy(density(e))


def shannon_entropy(dist) -> float:
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability distribution")
    return entropy_from_spectrum(dist)


def holevo_chi(states, probs) -> float:
    """chi = S(sum p_i rho_i) - sum p_i S(rho_i).

    ``states`` is a sequence of density matrices, or of state vectors (pure).
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability distribution")
    rhos = [as_density(s) for s in states]
    if len(rhos) != len(probs):
        raise ValueError("states and probs differ in length")
    if len({r.shape for r in rhos}) != 1:
        raise InvalidStateError("all states must have the same dimension")
    avg = sum(p * r for p, r in zip(probs, rhos))
    chi = von_neumann_entropy(avg) - sum(p * von_neumann_entropy(r)
                                         for p, r in zip(probs, rhos) if p > 0)
    return max(chi, 0.0)


def min_overlap(e: Ensemble, tol: float = OVERLAP_TOL) -> float | None:
    """Smallest overlap |<s_i|s_j>| above ``tol``, or None if all pairs are orthogonal."""
    if e.K < 2:
        raise ValueError("min_overlap needs at least two states")
    g = np.abs(e.gram())
    iu = np.triu_indices(e.K, 1)
    ov = g[iu]
    ov = ov[ov > tol]
    if ov.size == 0:
        log.warning("all %d signal pairs are orthogonal (tol=%g)", len(iu[0]), tol)
        return None
    return float(ov.min())


def borderline_overlaps(e: Ensemble, tol: float = OVERLAP_TOL, decades: float = 3.0):
    """Pairs whose overlap lies within ``decades`` orders of magnitude of ``tol``.

    These are the pairs for which the zero/nonzero call depends on the
    threshold.
    """
    g = np.abs(e.gram())
    lo, hi = tol * 10.0**-decades, tol * 10.0**decades
    return [(i, j, float(g[i, j])) for i, j in zip(*np.triu_indices(e.K, 1))
            if lo <= g[i, j] <= hi]


def _adjacency(e: Ensemble, tol: float) -> list[list[int]]:
    g = np.abs(e.gram())
    return [[j for j in range(e.K) if j != i and g[i, j] > tol] for i in range(e.K)]


def chain(e: Ensemble, i: int, j: int, tol: float = OVERLAP_TOL) -> list[int] | None:
    """Shortest chain of signals from i to j with consecutive overlaps above tol."""
    if not (0 <= i < e.K and 0 <= j < e.K):
        raise IndexError("signal index out of range")
    adj = _adjacency(e, tol)
    prev = {i: None}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if u == j:
            path = [u]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for w in adj[u]:
            if w not in prev:
                prev[w] = u
                queue.append(w)
    return None


def components(e: Ensemble, tol: float = OVERLAP_TOL) -> list[list[int]]:
    """Connected components of the nonzero-overlap graph, ordered by smallest member."""
    adj = _adjacency(e, tol)
    seen = [False] * e.K
    out = []
    for s in range(e.K):
        if seen[s]:
            continue
        comp, stack = [], [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        out.append(sorted(comp))
    return out


def span_basis(vectors: np.ndarray, rank_tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of the span of the rows of ``vectors``."""
    q, r, _ = scipy.linalg.qr(np.asarray(vectors).T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rank_tol * max(diag[0], 1e-300))) if diag.size else 0
    return q[:, :rank]


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Maximal orthogonal decomposition ``E = U_l a_l E_l``."""

    components: list[Ensemble]
    weights: np.ndarray
    members: list[list[int]]
    bases: list[np.ndarray]
    borderline: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def L(self) -> int:
        return len(self.components)

    @property
    def irreducible(self) -> bool:
        return self.L == 1

    @property
    def subspace_projectors(self) -> list[np.ndarray]:
        return [b @ b.conj().T for b in self.bases]

    @property
    def block_entropies(self) -> np.ndarray:
        return np.array([entropy(c) for c in self.components])

    def label_of(self) -> np.ndarray:
        """Block label of each original signal index."""
        lab = np.empty(sum(len(m) for m in self.members), dtype=int)
        for l, mem in enumerate(self.members):
            lab[mem] = l
        return lab


def decompose(e: Ensemble, tol: float = OVERLAP_TOL) -> Decomposition:
    comps = components(e, tol)
    subs, weights, bases = [], [], []
    for mem in comps:
        w = float(e.probs[mem].sum())
        # zero-probability components still get a block; renormalize uniformly
        p = e.probs[mem] / w if w > 0 else np.full(len(mem), 1.0 / len(mem))
        subs.append(Ensemble(e.states[mem], p / p.sum()))
        weights.append(w)
        bases.append(span_basis(e.states[mem]))
    border = borderline_overlaps(e, tol)
    if border:
        log.warning("%d signal pairs have overlaps near tol=%g; decomposition is threshold-dependent",
                    len(border), tol)
    return Decomposition(subs, np.array(weights), comps, bases, border)


def direct_sum(parts: Sequence[Ensemble], weights, bases: Sequence[np.ndarray] | None = None) -> Ensemble:
    """Build ``U_l a_l E_l`` with each part embedded in its own orthogonal block.

    Without ``bases`` the blocks are placed on consecutive coordinates.
    """
    weights = np.asarray(weights, dtype=float)
    if bases is None:
        total = sum(p.dim for p in parts)
        bases, off = [], 0
        for p in parts:
            b = np.zeros((total, p.dim), dtype=complex)
            b[off:off + p.dim, :] = np.eye(p.dim)
            bases.append(b)
            off += p.dim
    states = np.vstack([p.states @ b.T for p, b in zip(parts, bases)])
    probs = np.concatenate([a * p.probs for a, p in zip(weights, parts)])
    return Ensemble(states, probs)


# -- strings ----------------------------------------------------------------

class StringEnsembleView:
    """Lazy, read-only indexed view of the n-fold string ensemble.

    Index ``I`` is the base-K expansion of the string, leftmost signal most
    significant.
    """

    def __init__(self, e: Ensemble, n: int):
        self.base, self.n = e, n

    @property
    def K(self) -> int:
        return self.base.K ** self.n

    @property
    def dim(self) -> int:
        return self.base.dim ** self.n

    def __len__(self) -> int:
        return self.K

    def indices(self, idx: int) -> tuple[int, ...]:
        if not 0 <= idx < self.K:
            raise IndexError(idx)
        digits = []
        for _ in range(self.n):
            idx, r = divmod(idx, self.base.K)
            digits.append(r)
        return tuple(digits[::-1])

    def prob(self, idx: int) -> float:
        return float(np.prod(self.base.probs[list(self.indices(idx))]))

    def state(self, idx: int) -> np.ndarray:
        return tensor(*[self.base.states[i] for i in self.indices(idx)])

    def __getitem__(self, idx: int) -> tuple[np.ndarray, float]:
        return self.state(idx), self.prob(idx)

    def __iter__(self) -> Iterator[tuple[np.ndarray, float]]:
        for idx in range(self.K):
            yield self[idx]


def string_ensemble(e: Ensemble, n: int) -> Ensemble | StringEnsembleView:
    """Ensemble of n-strings with product states and product probabilities."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if e.dim ** n > MAX_STRING_DIM or e.K ** n > MAX_STRING_MEMBERS:
        log.info("string ensemble too large (dim %d, %d members); returning lazy view",
                 e.dim ** n, e.K ** n)
        return StringEnsembleView(e, n)
    if n == 1:
        return e
    states, probs = e.states, e.probs
    for _ in range(n - 1):
        states = np.einsum("ia,jb->ijab", states, e.states).reshape(-1, states.shape[1] * e.dim)
        probs = np.outer(probs, e.probs).reshape(-1)
    return Ensemble(states, probs / probs.sum())


def string_indices(K: int, n: int) -> np.ndarray:
    """All index strings of length n over K symbols, lexicographic order, shape (K**n, n)."""
    return np.array(list(itertools.product(range(K), repeat=n)), dtype=int).reshape(-1, n)


# -- JSON -------------------------------------------------------------------

def ensemble_to_dict(e: Ensemble) -> dict:
    return {
        "dim": e.dim,
        "states": [[[float(z.real), float(z.imag)] for z in s] for s in e.states],
        "probs": [float(p) for p in e.probs],
    }


def ensemble_from_dict(d: dict, normalize: bool = False) -> Ensemble:
    try:
        dim = int(d["dim"])
        states = np.array([[complex(re, im) for re, im in s] for s in d["states"]])
        probs = np.asarray(d["probs"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed ensemble description: {exc}") from exc
    if states.ndim != 2 or states.shape[1] != dim:
        raise InvalidStateError(f"states do not have dimension {dim}")
    if normalize:
        states = states / np.linalg.norm(states, axis=1, keepdims=True)
    return Ensemble(states, probs)


def load_ensemble(path: str | Path, normalize: bool = False) -> Ensemble:
    with open(path) as fh:
        return ensemble_from_dict(json.load(fh), normalize=normalize)


def save_ensemble(e: Ensemble, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble_to_dict(e), fh, indent=1)


def bundled_fixtures() -> list[str]:
    from importlib import resources
    return sorted(p.name[:-5] for p in resources.files("qsrc.fixtures").iterdir() if p.name.endswith(".json"))


def load_fixture(name: str) -> Ensemble:
    """Load a bundled ensemble by name (see ``bundled_fixtures``)."""
    from importlib import resources
    path = resources.files("qsrc.fixtures") / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture {name!r}; available: {bundled_fixtures()}")
    return ensemble_from_dict(json.loads(path.read_text()))

"""Encoding-decoding schemes: Schumacher compression and the hybrid
classical-quantum scheme for reducible sources.

Eigenindex strings t = t_1...t_n label the eigenbasis of rho^{(x)n}. Typical
sets are stored as unions of *blocks*: a fixed prefix t_1..t_m together with
a list of type vectors for the remaining n-m positions (every string with
that prefix whose tail has one of those types). Whole type classes are blocks
with an empty prefix. Projection weights

    q_I = <sigma_I|P_T|sigma_I> = sum_{t in T} prod_m |<e_{t_m}|sigma_{i_m}>|^2

are then polynomial coefficients and never need k^n-dimensional matrices.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from .channels import (Instrument, avg_support, mutual_information,
                       outcome_probabilities)
from .ensembles import Decomposition, Ensemble, decompose, density, entropy, shannon_entropy, string_ensemble
from .qcore import eigh_psd, tensor
from .reports import BoundReport, SchemeReport, digest

log = logging.getLogger(__name__)

MAX_EXACT_STRINGS = 10**6
MAX_DENSE_DIM = 64
CHUNK = 4096
MC_BLOCK = 1024
TIE_TOL = 1e-9


# -- type combinatorics -------------------------------------------------------

@lru_cache(maxsize=None)
def compositions(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All k-part compositions of n (type vectors), lexicographic."""
    if k == 1:
        return ((n,),)
    return tuple((a,) + rest for a in range(n + 1) for rest in compositions(n - a, k - 1))


def multinomial(counts: Sequence[int]) -> int:
    out, total = 1, 0
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def _lex_prefix_blocks(types: Sequence[tuple[int, ...]], m_take: int, n: int, k: int):
    """Blocks covering the lexicographically first ``m_take`` strings whose type is in ``types``."""
    blocks = []
    prefix: list[int] = []
    used = [0] * k
    for _ in range(n):
        if m_take == 0:
            break
        for a in range(k):
            rems = []
            for tau in types:
                r = [tau[i] - used[i] - (i == a) for i in range(k)]
                if min(r) >= 0:
                    rems.append(tuple(r))
            cnt = sum(multinomial(r) for r in rems)
            if cnt == 0:
                continue
            if m_take >= cnt:
                blocks.append((tuple(prefix + [a]), tuple(rems)))
                m_take -= cnt
                if m_take == 0:
                    break
            else:
                prefix.append(a)
                used[a] += 1
                break
    if m_take:
        raise RuntimeError("lexicographic selection ran out of strings")
    return blocks


@dataclass(frozen=True)
class TypicalSet:
    """A set of eigenindex strings stored as prefix blocks (see module docstring)."""

    n: int
    k: int
    blocks: tuple[tuple[tuple[int, ...], tuple[tuple[int, ...], ...]], ...]

    @property
    def size(self) -> int:
        return sum(multinomial(r) for _, rems in self.blocks for r in rems)

    def full_types(self) -> Iterator[tuple[tuple[int, ...], int]]:
        """(type of the whole string, multiplicity) pairs."""
        for prefix, rems in self.blocks:
            head = [0] * self.k
            for a in prefix:
                head[a] += 1
            for r in rems:
                yield tuple(h + x for h, x in zip(head, r)), multinomial(r)

    def contains(self, t: Sequence[int]) -> bool:
        counts = [0] * self.k
        for a in t:
            counts[a] += 1
        for prefix, rems in self.blocks:
            m = len(prefix)
            if tuple(t[:m]) != prefix:
                continue
            tail = [0] * self.k
            for a in t[m:]:
                tail[a] += 1
            if tuple(tail) in rems:
                return True
        return False

    def indicator(self) -> np.ndarray:
        """Dense 0/1 vector over all k^n strings (small n only)."""
        strings = itertools.product(range(self.k), repeat=self.n)
        return np.array([self.contains(t) for t in strings], dtype=float)

    def weights(self, rows: np.ndarray) -> np.ndarray:
        """sum_{t in T} prod_m rows[s, m, t_m] for each batch row s.

        ``rows`` has shape (S, n, k).
        """
        S, n, k = rows.shape
        assert n == self.n and k == self.k
        needed = {len(p) for p, _ in self.blocks}
        suffix = _suffix_polys(rows, needed)
        out = np.zeros(S)
        for prefix, rems in self.blocks:
            m = len(prefix)
            pre = np.ones(S)
            for pos, a in enumerate(prefix):
                pre = pre * rows[:, pos, a]
            poly = suffix[m]
            tot = np.zeros(S)
            for r in rems:
                tot += poly[(slice(None),) + tuple(r[:k - 1])]
            out += pre * tot
        return out


def _suffix_polys(rows: np.ndarray, needed: set[int]) -> dict[int, np.ndarray]:
    """Coefficient arrays of prod_{m' >= m} (sum_t rows[:, m', t] x_t) for m in ``needed``.

    A homogeneous polynomial of degree n-m is indexed by the exponents of
    x_0..x_{k-2}; the exponent of x_{k-1} is implied.
    """
    S, n, k = rows.shape
    shape = (S,) + (n + 1,) * (k - 1)
    poly = np.zeros(shape)
    poly[(slice(None),) + (0,) * (k - 1)] = 1.0
    out = {}
    if n in needed:
        out[n] = poly.copy()
    bshape = (S,) + (1,) * (k - 1)
    for m in range(n - 1, -1, -1):
        a = rows[:, m, :]
        new = poly * a[:, k - 1].reshape(bshape)
        for t in range(k - 1):
            dst = [slice(None)] * (k)
            src = [slice(None)] * (k)
            dst[1 + t] = slice(1, None)
            src[1 + t] = slice(0, -1)
            new[tuple(dst)] += poly[tuple(src)] * a[:, t].reshape(bshape)
        poly = new
        if m in needed:
            out[m] = poly.copy()
    return out


def _log_products(q: np.ndarray, types) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lq = np.log2(q)
    out = []
    for c in types:
        s = 0.0
        for ci, li in zip(c, lq):
            if ci:
                s += ci * li
        out.append(s)
    return np.array(out)


def largest_eigenvalue_set(q: np.ndarray, n: int, size: int) -> TypicalSet:
    """The ``size`` strings with the largest eigenvalue products; ties lexicographic."""
    k = len(q)
    types = compositions(n, k)
    lp = _log_products(q, types)
    order = sorted(range(len(types)), key=lambda i: (-lp[i], types[i]))
    groups: list[list[tuple[int, ...]]] = []
    last = None
    for i in order:
        if last is not None and (lp[i] == last or abs(lp[i] - last) <= TIE_TOL):
            groups[-1].append(types[i])
        else:
            groups.append([types[i]])
        last = lp[i]
    blocks = []
    remaining = size
    for g in groups:
        if remaining == 0:
            break
        gsize = sum(multinomial(c) for c in g)
        if gsize <= remaining:
            blocks.extend(((), (c,)) for c in g)
            remaining -= gsize
        else:
            blocks.extend(_lex_prefix_blocks(g, remaining, n, k))
            remaining = 0
    return TypicalSet(n, k, tuple(blocks))


def frequency_typical_set(q: np.ndarray, n: int, eps: float) -> TypicalSet:
    """Strings whose symbol counts satisfy |n(i) - n q_i| < k sqrt(n) / sqrt(eps) for every i."""
    k = len(q)
    window = k * math.sqrt(n) / math.sqrt(eps)
    keep = [c for c in compositions(n, k) if all(abs(ci - n * qi) < window for ci, qi in zip(c, q))]
    return TypicalSet(n, k, tuple(((), (c,)) for c in keep))


# -- Schumacher ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SchumacherCodec:
    """Projection onto a typical subspace of rho^{(x)n}, falling back to |e_0>^{(x)n}."""

    source: Ensemble
    n: int
    typical: TypicalSet
    eigvals: np.ndarray
    eigvecs: np.ndarray
    rate: float = math.nan
    eps_typ: float = math.nan
    overlaps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # overlaps[t, i] = |<e_t|sigma_i>|^2
        ov = np.abs(self.eigvecs.conj().T @ self.source.states.T) ** 2
        object.__setattr__(self, "overlaps", ov)

    @property
    def k(self) -> int:
        return self.source.dim

    @property
    def size(self) -> int:
        return self.typical.size

    def projection_weights(self, strings: np.ndarray) -> np.ndarray:
        """q_I for each row of ``strings`` (shape (S, n), signal indices)."""
        strings = np.asarray(strings, dtype=int).reshape(-1, self.n)
        if self.n == 0:
            return np.ones(strings.shape[0])
        rows = np.transpose(self.overlaps[:, strings], (1, 2, 0))
        return np.clip(self.typical.weights(rows), 0.0, 1.0)

    def fallback_overlaps(self, strings: np.ndarray) -> np.ndarray:
        strings = np.asarray(strings, dtype=int).reshape(-1, self.n)
        return np.prod(self.overlaps[0][strings], axis=1)

    def string_fidelities(self, strings: np.ndarray) -> np.ndarray:
        """F_I = q_I^2 + (1 - q_I) |<sigma_I|phi_0>|^2."""
        q = self.projection_weights(strings)
        return q * q + (1.0 - q) * self.fallback_overlaps(strings)

    def typical_mass(self) -> float:
        """tr(P rho^{(x)n})."""
        lq = np.log(np.where(self.eigvals > 0, self.eigvals, 1.0))
        tot = 0.0
        for c, mult in self.typical.full_types():
            if any(ci and qi <= 0 for ci, qi in zip(c, self.eigvals)):
                continue
            tot += mult * math.exp(sum(ci * l for ci, l in zip(c, lq)))
        return min(tot, 1.0)

    def support_rank(self, rank_tol: float = 1e-9) -> int:
        """Rank of the average encoded state P rho^{(x)n} P + (1 - mass) |phi_0><phi_0|."""
        if self.n == 0:
            return 1
        q = self.eigvals
        all0 = (self.n,) + (0,) * (self.k - 1)
        eig = []  # (eigenvalue, multiplicity) excluding phi_0
        phi0 = 1.0 - self.typical_mass()
        for c, mult in self.typical.full_types():
            lam = math.prod(qi ** ci for qi, ci in zip(q, c))
            if c == all0:
                phi0 += lam
                mult -= 1
            if mult:
                eig.append((lam, mult))
        top = max([phi0] + [lam for lam, _ in eig])
        rank = int(phi0 > rank_tol * top)
        rank += sum(mult for lam, mult in eig if lam > rank_tol * top)
        return max(rank, 1)

    def supp(self, rank_tol: float = 1e-9, ceil: bool = False) -> float:
        if self.n == 0:
            return 0.0
        bits = math.log2(self.support_rank(rank_tol))
        if ceil:
            bits = math.ceil(bits - 1e-12)
        return bits / self.n

    # dense views, small n only
    def _eigbasis_n(self) -> np.ndarray:
        if self.k ** self.n > MAX_DENSE_DIM * 16:
            raise ValueError("dense operators refused for k^n > 1024")
        return tensor(*[self.eigvecs] * self.n) if self.n else np.eye(1)

    def projector(self) -> np.ndarray:
        E = self._eigbasis_n()
        chi = self.typical.indicator()
        return (E * chi) @ E.conj().T

    def fallback_state(self) -> np.ndarray:
        return tensor(*[self.eigvecs[:, 0]] * self.n)

    def instrument(self) -> Instrument:
        """Single-outcome instrument on C^{k^n}: keep P_T, otherwise prepare phi_0."""
        if self.k ** self.n > MAX_DENSE_DIM:
            raise ValueError("dense instrument refused for k^n > 64")
        E = self._eigbasis_n()
        chi = self.typical.indicator()
        phi = self.fallback_state()
        ops = [(E * chi) @ E.conj().T]
        ops += [np.outer(phi, E[:, t].conj()) for t in np.flatnonzero(chi == 0)]
        return Instrument(("q",), (tuple(ops),))

    def evaluate(self, mode: str = "exact", samples: int = 10_000, seed: int | None = None,
                 jobs: int = 1, rank_tol: float = 1e-9) -> SchemeReport:
        fbar, se, mode_used, seed_used, nsamp = _average_fidelity(
            self.source, self.n, self.string_fidelities, mode, samples, seed, jobs)
        return SchemeReport(
            scheme="schumacher", n=self.n, F_bar=fbar, supp_bar=self.supp(rank_tol), I_bits=0.0,
            classical_bits=0.0, source_entropy=entropy(self.source), dim=self.k, mode=mode_used,
            rate=self.rate, eps_typ=self.eps_typ, seed=seed_used, samples=nsamp, stderr=se)


def _eig_desc(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = eigh_psd(rho)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def build_schumacher(e: Ensemble, n: int, rate: float | None = None, eps_typ: float | None = None,
                     *, qubits: int | None = None, integer_qubits: bool = False) -> SchumacherCodec:
    """Schumacher codec for blocks of n signals.

    Exactly one of ``rate`` (qubits/signal), ``eps_typ`` (frequency
    typicality) or ``qubits`` (an integer qubit budget for the whole block)
    selects the typical set. In rate mode the set holds the floor(2^{nR})
    largest eigenvalue products; ``integer_qubits`` uses 2^{floor(nR)}.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if sum(x is not None for x in (rate, eps_typ, qubits)) != 1:
        raise ValueError("give exactly one of rate, eps_typ, qubits")
    q, v = _eig_desc(density(e))
    k = e.dim
    full = k ** n
    if eps_typ is not None:
        if not eps_typ > 0:
            raise ValueError("eps_typ must be positive")
        ts = frequency_typical_set(q, n, eps_typ)
    else:
        if qubits is not None:
            size = 2 ** int(qubits) if qubits < 4096 else full
        else:
            if rate < 0:
                raise ValueError("rate must be nonnegative")
            if rate > math.log2(k) + 1e-12:
                log.warning("rate %g exceeds log2(k)=%g; capping to the full space", rate, math.log2(k))
            if integer_qubits:
                size = 2 ** math.floor(n * rate + 1e-9)
            else:
                size = math.floor(2.0 ** (n * rate) * (1 + 1e-12))
        size = min(size, full)
        ts = largest_eigenvalue_set(q, n, size)
    if ts.size == 0:
        raise ValueError("typical set is empty")
    return SchumacherCodec(e, n, ts, q, v, rate=math.nan if rate is None else float(rate),
                           eps_typ=math.nan if eps_typ is None else float(eps_typ))


# -- fidelity averaging -------------------------------------------------------

def _digits(idx: np.ndarray, K: int, n: int) -> np.ndarray:
    out = np.empty((idx.size, n), dtype=int)
    for m in range(n - 1, -1, -1):
        idx, out[:, m] = np.divmod(idx, K)
    return out


def _average_fidelity(e: Ensemble, n: int, fid: Callable[[np.ndarray], np.ndarray], mode: str,
                      samples: int, seed: int | None, jobs: int):
    """Exact or Monte Carlo average of F_I over strings from e^{(x)n}.

    Work is split into fixed chunks (exact) or fixed sample blocks seeded by
    (seed, block) (MC), and partial sums are combined in chunk order, so
    results do not depend on ``jobs``.
    """
    K = e.K
    if mode == "exact":
        total = K ** n
        if total > MAX_EXACT_STRINGS:
            raise ValueError(f"exact evaluation refused for K^n = {total} > {MAX_EXACT_STRINGS}")

        def work(start):
            idx = np.arange(start, min(start + CHUNK, total))
            s = _digits(idx, K, n)
            p = np.prod(e.probs[s], axis=1)
            return float(np.dot(p, fid(s)))

        starts = range(0, total, CHUNK)
        parts = _map(work, starts, jobs)
        return min(math.fsum(parts), 1.0), 0.0, "exact", None, None
    if mode != "mc":
        raise ValueError(f"unknown evaluation mode {mode!r}")
    if seed is None:
        raise ValueError("Monte Carlo evaluation needs a seed")
    if samples < 2:
        raise ValueError("need at least two samples")

    def work_mc(b):
        cnt = min(MC_BLOCK, samples - b * MC_BLOCK)
        rng = np.random.default_rng([seed, b])
        s = rng.choice(K, size=(cnt, n), p=e.probs)
        f = fid(s)
        return float(f.sum()), float((f * f).sum())

    blocks = range((samples + MC_BLOCK - 1) // MC_BLOCK)
    parts = _map(work_mc, blocks, jobs)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, math.sqrt(var / samples), "mc", seed, samples


def _map(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- hybrid classical-quantum scheme --------------------------------------------

@dataclass(eq=False)
class HybridCodec:
    """Measure each signal's block label, then Schumacher-compress each block.

    The classical record is the label string. Label strings outside the
    frequency-typical window are replaced by a fixed product state.
    """

    source: Ensemble
    decomposition: Decomposition
    n: int
    eps_typ: float
    c: float = 2.0
    block_rates: tuple[float, ...] | None = None
    _codecs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d = self.decomposition
        self.labels = d.label_of()
        self.local = np.empty(self.source.K, dtype=int)
        for mem in d.members:
            self.local[mem] = np.arange(len(mem))
        self.block_sources = [Ensemble(comp.states @ b.conj(), comp.probs)
                              for comp, b in zip(d.components, d.bases)]
        self.block_S = np.array([entropy(b) for b in self.block_sources])
        q, v = _eig_desc(density(self.source))
        self._top = v[:, 0]
        # per-block expected overlap with the atypical fallback state
        ov = np.abs(self.source.states.conj() @ self._top) ** 2
        self._fallback_block = np.array([np.dot(comp.probs, ov[mem])
                                         for comp, mem in zip(d.components, d.members)])

    @property
    def L(self) -> int:
        return self.decomposition.L

    @property
    def weights(self) -> np.ndarray:
        return self.decomposition.weights

    def budget(self, l: int, nl: int) -> int:
        """Qubits given to nl signals of block l: ceil(nl S_l + c sqrt(nl))."""
        return math.ceil(nl * self.block_S[l] + self.c * math.sqrt(nl) - 1e-12)

    def block_codec(self, l: int, nl: int) -> SchumacherCodec:
        key = (l, nl)
        if key not in self._codecs:
            src = self.block_sources[l]
            if self.block_rates is not None:
                codec = build_schumacher(src, nl, rate=self.block_rates[l])
            else:
                codec = build_schumacher(src, nl, qubits=self.budget(l, nl))
            self._codecs[key] = codec
        return self._codecs[key]

    def is_typical(self, counts: Sequence[int]) -> bool:
        window = self.L * math.sqrt(self.n) / math.sqrt(self.eps_typ)
        return all(abs(c - self.n * a) < window for c, a in zip(counts, self.weights))

    def label_types(self):
        """(label type counts, probability, typical?) over all label types."""
        for c in compositions(self.n, self.L):
            p = multinomial(c) * math.prod(float(a) ** ci for a, ci in zip(self.weights, c))
            yield c, p, self.is_typical(c)

    def string_fidelities(self, strings: np.ndarray) -> np.ndarray:
        strings = np.asarray(strings, dtype=int).reshape(-1, self.n)
        lab = self.labels[strings]
        loc = self.local[strings]
        counts = np.stack([(lab == l).sum(axis=1) for l in range(self.L)], axis=1)
        typ = np.array([self.is_typical(c) for c in counts])
        F = np.ones(strings.shape[0])
        if (~typ).any():
            ov = np.abs(self.source.states.conj() @ self._top) ** 2
            F[~typ] = np.prod(ov[strings[~typ]], axis=1)
        for l in range(self.L):
            for nl in np.unique(counts[typ, l]):
                if nl == 0:
                    continue
                rows = np.flatnonzero(typ & (counts[:, l] == nl))
                sub = loc[rows][lab[rows] == l].reshape(len(rows), nl)
                F[rows] *= self.block_codec(l, int(nl)).string_fidelities(sub)
        return F

    def supp(self, rank_tol: float = 1e-9, ceil: bool = False) -> float:
        total = 0.0
        for c, p, typ in self.label_types():
            if not typ:
                continue
            bits = sum(math.log2(self.block_codec(l, nl).support_rank(rank_tol))
                       for l, nl in enumerate(c) if nl)
            if ceil:
                bits = math.ceil(bits - 1e-12)
            total += p * bits / self.n
        return total

    def label_entropy(self) -> float:
        """H(J)/n for J the label string."""
        return shannon_entropy(self.weights)

    def exact_fidelity(self) -> float:
        for l in range(self.L):
            if self.decomposition.components[l].K ** self.n > MAX_EXACT_STRINGS:
                raise ValueError("exact hybrid evaluation refused: block strings exceed 10^6")
        block_fbar: dict = {}
        total = []
        for c, p, typ in self.label_types():
            if typ:
                f = 1.0
                for l, nl in enumerate(c):
                    if nl:
                        if (l, nl) not in block_fbar:
                            codec = self.block_codec(l, nl)
                            block_fbar[l, nl] = codec.evaluate("exact").F_bar
                        f *= block_fbar[l, nl]
            else:
                f = math.prod(self._fallback_block[l] ** nl for l, nl in enumerate(c))
            total.append(p * f)
        return min(math.fsum(total), 1.0)

    def instrument(self) -> Instrument:
        """Dense instrument on C^{k^n} (k^n <= 64) with one outcome per label string."""
        k, n = self.source.dim, self.n
        if k ** n > MAX_DENSE_DIM:
            raise ValueError("dense instrument refused for k^n > 64")
        bases = list(self.decomposition.bases)
        span = np.hstack(bases)
        rest = _complement_basis(span)
        nl_labels = self.L + (1 if rest.shape[1] else 0)
        if rest.shape[1]:
            bases.append(rest)
        phi_fixed = tensor(*[self._top] * n)
        labels, branches = [], []
        for lstr in itertools.product(range(nl_labels), repeat=n):
            W = tensor(*[bases[l] for l in lstr])
            counts = [lstr.count(l) for l in range(self.L)]
            if (nl_labels > self.L and self.L in lstr) or not self.is_typical(counts):
                ops = [np.outer(phi_fixed, W[:, b].conj()) for b in range(W.shape[1])]
            else:
                ops = [W @ op @ W.conj().T for op in self._label_kraus(lstr, bases)]
            labels.append("".join(str(l) for l in lstr))
            branches.append(tuple(ops))
        return Instrument(tuple(labels), tuple(branches))

    def _label_kraus(self, lstr, bases):
        """Kraus operators (in positional block coordinates) for a typical label string."""
        n = self.n
        pos = [[m for m in range(n) if lstr[m] == l] for l in range(self.L)]
        per_block = []
        for l in range(self.L):
            if pos[l]:
                per_block.append(list(self.block_codec(l, len(pos[l])).instrument().branches[0]))
            else:
                per_block.append([np.eye(1)])
        order = [m for l in range(self.L) for m in pos[l]]
        dims_grouped = [bases[lstr[m]].shape[1] for m in order]
        inv = np.argsort(order)
        ops = []
        for combo in itertools.product(*per_block):
            g = tensor(*combo)
            t = g.reshape(dims_grouped + dims_grouped)
            t = t.transpose(list(inv) + [n + i for i in inv])
            d = int(np.prod(dims_grouped))
            ops.append(t.reshape(d, d))
        return ops

    def evaluate(self, mode: str = "exact", samples: int = 10_000, seed: int | None = None,
                 jobs: int = 1, rank_tol: float = 1e-9) -> SchemeReport:
        if mode == "exact":
            fbar, se, seed_used, nsamp = self.exact_fidelity(), 0.0, None, None
        else:
            fbar, se, _, seed_used, nsamp = _average_fidelity(
                self.source, self.n, self.string_fidelities, mode, samples, seed, jobs)
        H = self.label_entropy()
        return SchemeReport(
            scheme="hybrid", n=self.n, F_bar=fbar, supp_bar=self.supp(rank_tol), I_bits=self.n * H,
            classical_bits=H, source_entropy=entropy(self.source), dim=self.source.dim, mode=mode,
            rate=math.nan, eps_typ=self.eps_typ, seed=seed_used, samples=nsamp, stderr=se)


def _complement_basis(span: np.ndarray) -> np.ndarray:
    d = span.shape[0]
    if span.shape[1] >= d:
        return np.zeros((d, 0), dtype=complex)
    u, s, _ = np.linalg.svd(span, full_matrices=True)
    r = int(np.sum(s > 1e-9))
    return u[:, r:]


def build_hybrid(e: Ensemble, n: int, eps_typ: float = 0.1, block_rates: Sequence[float] | None = None,
                 *, c: float = 2.0, tol: float = 1e-9) -> HybridCodec:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not eps_typ > 0:
        raise ValueError("eps_typ must be positive")
    d = decompose(e, tol)
    if d.L == 1:
        log.warning("source is irreducible; the hybrid scheme reduces to plain Schumacher compression")
    if block_rates is not None:
        block_rates = tuple(float(r) for r in block_rates)
        if len(block_rates) != d.L:
            raise ValueError(f"need {d.L} block rates, got {len(block_rates)}")
    return HybridCodec(e, d, n, float(eps_typ), float(c), block_rates)


# -- schemes given as instruments -----------------------------------------------

@dataclass(frozen=True, eq=False)
class InstrumentScheme:
    """An instrument on C^{k^n} whose outputs are the decoded states.

    Evaluated densely on the explicit string ensemble.
    """

    instrument: Instrument
    source: Ensemble
    n: int
    name: str = "instrument"

    def evaluate(self, mode: str = "exact", rank_tol: float = 1e-9, **_) -> SchemeReport:
        strings = string_ensemble(self.source, self.n)
        if not isinstance(strings, Ensemble):
            raise ValueError("string ensemble too large for dense evaluation")
        ins = self.instrument
        if ins.in_dim != strings.dim or ins.out_dim != strings.dim:
            raise ValueError("instrument must act on the n-string space")
        psi = strings.states
        F = np.zeros(strings.K)
        for b in ins.branches:
            for k in b:
                F += np.abs(np.einsum("ia,ab,ib->i", psi.conj(), k, psi)) ** 2
        c = outcome_probabilities(ins, psi)
        pj = strings.probs @ c
        return SchemeReport(
            scheme=self.name, n=self.n, F_bar=float(min(strings.probs @ F, 1.0)),
            supp_bar=avg_support(ins, strings, self.n, rank_tol).supp_bar,
            I_bits=mutual_information(ins, strings), classical_bits=shannon_entropy(pj / pj.sum()) / self.n,
            source_entropy=entropy(self.source), dim=self.source.dim, mode="exact")


@dataclass(frozen=True, eq=False)
class ProductScheme:
    """The n-fold tensor power of a single-signal instrument; evaluated by factorization."""

    instrument: Instrument
    source: Ensemble
    n: int
    name: str = "product"

    def evaluate(self, mode: str = "exact", rank_tol: float = 1e-9, **_) -> SchemeReport:
        single = InstrumentScheme(self.instrument, self.source, 1, self.name).evaluate(rank_tol=rank_tol)
        return SchemeReport(
            scheme=self.name, n=self.n, F_bar=single.F_bar ** self.n, supp_bar=single.supp_bar,
            I_bits=self.n * single.I_bits, classical_bits=single.classical_bits,
            source_entropy=single.source_entropy, dim=single.dim, mode="exact")


def identity_scheme(e: Ensemble, n: int) -> ProductScheme:
    from .channels import identity_instrument
    return ProductScheme(identity_instrument(e.dim), e, n, "identity")


def measure_and_replace_scheme(e: Ensemble, n: int) -> ProductScheme:
    from .channels import measure_and_replace_instrument
    return ProductScheme(measure_and_replace_instrument(e.dim), e, n, "measure-replace")


def evaluate(codec, mode: str = "exact", samples: int = 10_000, seed: int | None = None,
             jobs: int = 1, rank_tol: float = 1e-9) -> SchemeReport:
    return codec.evaluate(mode=mode, samples=samples, seed=seed, jobs=jobs, rank_tol=rank_tol)


# -- resource lower bound ------------------------------------------------------------

def resource_lower_bound(S: float, eps: float, k: int, n: int) -> float:
    """S - 4 sqrt(eps) log2 k + (4 sqrt(eps) / n) log2(2 sqrt(eps))."""
    r = math.sqrt(max(eps, 0.0))
    tail = 0.0 if r == 0 else (4 * r / n) * math.log2(2 * r)
    return S - 4 * r * math.log2(k) + tail


def resource_gap(report: SchemeReport, k: int | None = None) -> BoundReport:
    """Check supp_bar + I/n >= S - f(eps) for a scheme report."""
    k = report.dim if k is None else k
    lhs = report.supp_bar + report.I_per_n
    rhs = resource_lower_bound(report.source_entropy, report.eps, k, report.n)
    return BoundReport.lower(
        "resource_bound", lhs, rhs, tol=1e-8,
        inputs_digest=digest(report.scheme, report.n, report.F_bar, report.supp_bar, report.I_bits),
        extra={"scheme": report.scheme, "n": report.n, "eps": report.eps})

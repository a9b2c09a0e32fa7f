"""Numerical checks of the entropy and fidelity inequalities used for source coding."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .channels import (Instrument, KrausChannel, apply, chi_cq_decomposition, encode_ensemble,
                       environment_state, random_channel)
from .codecs import _map, compositions, multinomial
from .ensembles import Ensemble, decompose, holevo_chi
from .qcore import (MultipartiteState, as_density, fidelity, random_density, random_unitary,
                    trace_norm, von_neumann_entropy)
from .reports import PRECONDITION, BoundReport, digest

A1_MAX_EPS = 1.0 / 16
A2_MAX_EPS = 0.5


def _xlogx_term(x: float) -> float:
    """x log2 x with 0 log 0 = 0."""
    return 0.0 if x <= 0 else x * math.log2(x)


def continuity_a1(eps: float, d: int) -> float:
    """4 (sqrt(eps) log d - sqrt(eps) log(2 sqrt(eps)))."""
    r = math.sqrt(max(eps, 0.0))
    return 4 * (r * math.log2(d) - _xlogx_term(2 * r) / 2)


def continuity_a2(eps1: float, d: int) -> float:
    """2 (eps' log d - eps' log eps') with eps' = sum p ||omega - rho||_1."""
    return 2 * (eps1 * math.log2(d) - _xlogx_term(eps1))


def check_chi_continuity(rhos: Sequence[np.ndarray], omegas: Sequence[np.ndarray], probs) -> BoundReport:
    """|chi_1 - chi_2| against the fidelity-based continuity bound.

    The two ensembles share priors ``probs``. The returned report is for the
    sqrt(eps) bound (status "precondition" when eps > 1/16); the trace-norm
    bound is attached under ``extra['a2']``.
    """
    probs = np.asarray(probs, dtype=float)
    rhos = [as_density(r) for r in rhos]
    omegas = [as_density(w) for w in omegas]
    if len(rhos) != len(omegas) or len(rhos) != len(probs):
        raise ValueError("ensembles must have the same number of members as probs")
    d = rhos[0].shape[0]
    if any(r.shape != (d, d) for r in rhos + omegas):
        raise ValueError("all states must share one dimension")
    lhs = abs(holevo_chi(rhos, probs) - holevo_chi(omegas, probs))
    eps = max(1.0 - sum(p * fidelity(r, w) for p, r, w in zip(probs, rhos, omegas)), 0.0)
    eps1 = sum(p * trace_norm(w - r) for p, r, w in zip(probs, rhos, omegas))
    dig = digest(probs, *rhos, *omegas)

    a2 = BoundReport.upper("chi-continuity-a2", lhs, continuity_a2(eps1, d), inputs_digest=dig)
    if eps1 > A2_MAX_EPS:
        a2.status = PRECONDITION
    rep = BoundReport.upper("chi-continuity", lhs, continuity_a1(eps, d), inputs_digest=dig,
                            extra={"eps": eps, "eps_trace": eps1, "d": d, "a2": a2})
    if eps > A1_MAX_EPS:
        rep.status = PRECONDITION
    return rep


# -- product bound for classical-quantum states ---------------------------------

def cq_state(marginals: Sequence[Sequence[float]], states: np.ndarray) -> MultipartiteState:
    """sum_I p_I |I><I| (x) rho_I with p_I the product of ``marginals``.

    ``states`` has shape (K_1, ..., K_n, d, d). Subsystems are the n classical
    registers followed by the quantum system.
    """
    marginals = [np.asarray(m, dtype=float) for m in marginals]
    states = np.asarray(states, dtype=complex)
    ks = tuple(len(m) for m in marginals)
    if states.shape[:-2] != ks:
        raise ValueError(f"states shape {states.shape} does not match marginals {ks}")
    d = states.shape[-1]
    N = int(np.prod(ks))
    flat = states.reshape(N, d, d)
    p = _product(marginals)
    op = np.zeros((N * d, N * d), dtype=complex)
    for I in range(N):
        op[I * d:(I + 1) * d, I * d:(I + 1) * d] = p[I] * flat[I]
    return MultipartiteState(op, ks + (d,))


def _product(marginals: Sequence[np.ndarray]) -> np.ndarray:
    p = np.ones(1)
    for m in marginals:
        p = np.outer(p, m).reshape(-1)
    return p


def split_cq(m: MultipartiteState, tol: float = 1e-10):
    """Recover (marginals, states with shape (K_1..K_n, d, d)) from a cq state.

    Raises ValueError if the registers are not classical or the classical
    distribution is not a product.
    """
    ks, d = m.dims[:-1], m.dims[-1]
    N = int(np.prod(ks))
    op = m.operator.reshape(N, d, N, d)
    diag = np.einsum("iaib->iab", op)
    off = op.copy()
    off[np.arange(N), :, np.arange(N), :] = 0
    if np.abs(off).max() > tol:
        raise ValueError("register part is not classical (off-diagonal blocks present)")
    p = np.einsum("iaa->i", diag).real
    pt = p.reshape(ks)
    marginals = []
    for k in range(len(ks)):
        axes = tuple(a for a in range(len(ks)) if a != k)
        marginals.append(pt.sum(axis=axes))
    if np.abs(_product(marginals) - p).max() > tol:
        raise ValueError("classical distribution is not a product of its marginals")
    rhos = np.array([diag[I] / p[I] if p[I] > 0 else np.eye(d) / d for I in range(N)])
    return marginals, rhos.reshape(ks + (d, d))


def product_mi_terms(marginals: Sequence[np.ndarray], states: np.ndarray) -> tuple[float, list[float]]:
    """chi of {rho_I; p_I} and, for each position k, the averaged chi over i_k."""
    marginals = [np.asarray(mk, dtype=float) for mk in marginals]
    ks = tuple(len(mk) for mk in marginals)
    n = len(ks)
    p = _product(marginals).reshape(ks)
    S = np.vectorize(lambda I: von_neumann_entropy(states[np.unravel_index(I, ks)]))(
        np.arange(int(np.prod(ks)))).reshape(ks)
    d = states.shape[-1]
    avg = np.einsum("i,iab->ab", p.reshape(-1), states.reshape(-1, d, d))
    chi = max(von_neumann_entropy(avg) - float(np.sum(p * S)), 0.0)
    terms = []
    for k in range(n):
        rest = [range(K) for j, K in enumerate(ks) if j != k]
        tot = 0.0
        for Ir in itertools.product(*rest):
            w = math.prod(marginals[j][i] for j, i in zip([j for j in range(n) if j != k], Ir))
            if w == 0:
                continue
            sl = list(Ir)
            sl.insert(k, slice(None))
            sl = tuple(sl)
            pk = marginals[k]
            mix = np.einsum("i,iab->ab", pk, states[sl])
            tot += w * (von_neumann_entropy(mix) - float(np.dot(pk, S[sl])))
        terms.append(tot)
    return chi, terms


def check_product_mi_bound(m: MultipartiteState) -> BoundReport:
    """chi({rho_I; p_I}) <= n max_k sum_{I != k} p [S(avg over i_k) - avg S]."""
    marginals, states = split_cq(m)
    chi, terms = product_mi_terms(marginals, states)
    n = len(marginals)
    return BoundReport.upper("product-mi", chi, n * max(terms), inputs_digest=digest(m.operator),
                             extra={"n": n, "terms": terms})


# -- Markov and typical sequences ---------------------------------------------------

def markov_check(values, probs, A: float, eps: float) -> BoundReport:
    """Tail P(X < 1 - A eps) against 1/A for 0 <= X <= 1 with mean >= 1 - eps."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if values.shape != probs.shape:
        raise ValueError("values and probs differ in shape")
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("values must lie in [0, 1]")
    if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
        raise ValueError("not a probability distribution")
    if A <= 0:
        raise ValueError("A must be positive")
    mean = float(np.dot(values, probs))
    tail = math.fsum(probs[values < 1 - A * eps])
    rep = BoundReport.upper("markov", tail, 1.0 / A, inputs_digest=digest(values, probs, A, eps),
                            extra={"mean": mean, "eps": eps, "A": A})
    # mean >= 1 - eps (with rounding slack) already gives tail <= 1/A
    if mean < 1 - eps - 1e-12:
        rep.status = PRECONDITION
    return rep


def _in_window(counts, dist, n: int, eps: float) -> bool:
    # |c - n p| < L sqrt(n) / sqrt(eps), squared to avoid roots
    L = len(dist)
    return all((c - n * p) ** 2 * eps < L * L * n for c, p in zip(counts, dist))


def _type_mass(dist, n: int, eps: float, exact: bool):
    L = len(dist)
    if exact:
        fd = [Fraction(p) for p in dist]
        fe = Fraction(eps)
        tot = Fraction(0)
        for c in compositions(n, L):
            if _in_window(c, fd, n, fe):
                tot += multinomial(c) * math.prod(p ** ci for p, ci in zip(fd, c))
        return tot
    terms = [multinomial(c) * math.prod(p ** ci for p, ci in zip(dist, c))
             for c in compositions(n, L) if _in_window(c, dist, n, eps)]
    return math.fsum(terms)


@dataclass
class TypicalMass:
    n: int
    eps: float
    mass: float
    n0: int | None
    masses: dict[int, float] = field(default_factory=dict)
    exact: Fraction | None = None


def typical_set_mass(dist, n: int, eps: float, exact: bool = False) -> TypicalMass:
    """Probability of the frequency-typical set S_n(eps) by type-class counting.

    Also reports the smallest n0 <= n with mass > 1 - eps for every m in
    [n0, n] (None if mass(n) <= 1 - eps). With ``exact`` the mass at n is
    also returned as a Fraction computed from the binary values of ``dist``.
    """
    dist = [float(p) for p in dist]
    if len(dist) > 4 or n > 64:
        raise ValueError("exact type enumeration is limited to L <= 4 and n <= 64")
    if n < 1 or not eps > 0:
        raise ValueError("need n >= 1 and eps > 0")
    if any(p < 0 for p in dist) or abs(sum(dist) - 1) > 1e-12:
        raise ValueError("not a probability distribution")
    masses = {m: _type_mass(dist, m, eps, False) for m in range(1, n + 1)}
    n0 = None
    for m in range(n, 0, -1):
        if masses[m] > 1 - eps:
            n0 = m
        else:
            break
    fr = _type_mass(dist, n, eps, True) if exact else None
    return TypicalMass(n, eps, masses[n], n0, masses, fr)


def typical_set_mass_naive(dist, n: int, eps: float) -> Fraction:
    """Same quantity by walking all L^n sequences (small n only)."""
    fd = [Fraction(float(p)) for p in dist]
    fe = Fraction(eps)
    L = len(fd)
    tot = Fraction(0)
    for seq in itertools.product(range(L), repeat=n):
        counts = [seq.count(i) for i in range(L)]
        if _in_window(counts, fd, n, fe):
            tot += math.prod(fd[i] for i in seq)
    return tot


# -- information versus disturbance --------------------------------------------------

@dataclass
class DisturbanceCurve:
    ts: np.ndarray
    eps: np.ndarray
    chi_env: np.ndarray
    ensemble_digest: str
    family: str

    def rows(self) -> list[dict]:
        return [{"t": float(t), "eps": float(e), "chi_env": float(c)}
                for t, e, c in zip(self.ts, self.eps, self.chi_env)]


def disturbance_point(e: Ensemble, ch: KrausChannel) -> tuple[float, float]:
    """(1 - average fidelity, chi of the environment states)."""
    fbar = sum(p * fidelity(s, apply(ch, s)) for p, s in zip(e.probs, e.states))
    envs = [environment_state(ch, s) for s in e.states]
    eps = 1.0 - fbar
    return (eps if eps > 1e-13 else 0.0), holevo_chi(envs, e.probs)


def info_disturbance_sweep(e: Ensemble, family: Callable[[float], KrausChannel], ts: Iterable[float],
                           name: str = "", tol: float = 1e-9) -> DisturbanceCurve:
    if not decompose(e).irreducible:
        raise ValueError("information-disturbance sweep needs an irreducible source")
    ts = sorted(set(float(t) for t in ts) | {0.0})
    eps0, _ = disturbance_point(e, family(0.0))
    if eps0 > tol:
        raise ValueError(f"family(0) is not a perfect-fidelity channel (eps = {eps0:.3g})")
    eps, chi = [], []
    for t in ts:
        a, b = disturbance_point(e, family(t))
        eps.append(a)
        chi.append(b)
    return DisturbanceCurve(np.array(ts), np.array(eps), np.array(chi),
                            digest(e.states, e.probs), name or getattr(family, "__name__", "family"))


@dataclass
class DisturbanceFit:
    """Empirical constants for chi ~ A sqrt(eps) + B sqrt(eps) log2(1/sqrt(eps))."""

    A: float
    B: float
    rms_residual: float
    min_ratio: float  # min over points with chi > 0 of fit / chi

    def __call__(self, eps) -> np.ndarray:
        return _fit_design(np.asarray(eps, dtype=float)) @ np.array([self.A, self.B])


def _fit_design(eps: np.ndarray) -> np.ndarray:
    r = np.sqrt(eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(r > 0, -np.log2(np.where(r > 0, r, 1.0)), 0.0)
    return np.column_stack([r, r * lg])


def fit_disturbance(curve: DisturbanceCurve, envelope: bool = True) -> DisturbanceFit:
    """Least-squares fit of the two-constant form, optionally constrained to lie above every point.

    With ``envelope`` the problem is a two-variable quadratic program; it is
    solved exactly by checking the unconstrained optimum, the optimum on each
    single active constraint and each pair of active constraints.
    """
    mask = curve.eps > 0
    X, y = _fit_design(curve.eps[mask]), curve.chi_env[mask]
    if len(y) < 2:
        raise ValueError("need at least two points with eps > 0")
    G, h = X.T @ X, X.T @ y

    def obj(x):
        return float(np.sum((X @ x - y) ** 2))

    def feasible(x):
        return bool(np.all(X @ x >= y - 1e-12 * np.maximum(1.0, np.abs(y))))

    cands = [np.linalg.lstsq(X, y, rcond=None)[0]]
    if envelope:
        for i in range(len(y)):
            # minimize on the line X_i x = y_i
            a = X[i]
            # x = x0 + s * u with a.x0 = y_i, u orthogonal to a
            x0 = a * y[i] / (a @ a)
            u = np.array([-a[1], a[0]])
            den = u @ G @ u
            s = (u @ (h - G @ x0)) / den if den > 0 else 0.0
            cands.append(x0 + s * u)
        for i, j in itertools.combinations(range(len(y)), 2):
            M = X[[i, j]]
            if abs(np.linalg.det(M)) > 1e-14:
                cands.append(np.linalg.solve(M, y[[i, j]]))
        cands = [c for c in cands if feasible(c)]
        if not cands:
            raise RuntimeError("no feasible envelope fit")
    best = min(cands, key=obj)
    fitted = X @ best
    pos = y > 0
    ratio = float(np.min(fitted[pos] / y[pos])) if pos.any() else math.inf
    return DisturbanceFit(float(best[0]), float(best[1]), math.sqrt(obj(best) / len(y)), ratio)


def per_letter_info_sweep(schemes: Sequence[tuple[float, object]]) -> tuple[list[dict], bool]:
    """Evaluate (parameter, scheme) pairs; report I/n and whether it falls with eps.

    Returns the rows and a flag that is True when, ordering by eps, I/n never
    increases as eps decreases.
    """
    rows = []
    for param, scheme in schemes:
        r = scheme.evaluate()
        rows.append({"param": param, "n": r.n, "eps": r.eps, "I_bits": r.I_bits, "I_per_n": r.I_per_n})
    ordered = sorted(rows, key=lambda r: r["eps"])
    monotone = all(b["I_per_n"] >= a["I_per_n"] - 1e-12 for a, b in zip(ordered, ordered[1:]))
    return rows, monotone


def check_xenc(ins: Instrument, e: Ensemble, tol: float = 1e-8) -> BoundReport:
    """chi_enc against sum_j p_j chi_j + I(I:J) (an identity; slack is -|difference|)."""
    chi_enc, avg_chi, info = chi_cq_decomposition(encode_ensemble(ins, e), e.probs)
    diff = abs(chi_enc - (avg_chi + info))
    return BoundReport("xenc", chi_enc, avg_chi + info, -diff, inputs_digest=digest(e.states, e.probs),
                       tol=tol, extra={"avg_chi": avg_chi, "I": info})


# -- seeded random sweeps ---------------------------------------------------------

def _small_unitary(d: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (h + h.conj().T) / 2
    w, v = np.linalg.eigh(h / np.linalg.norm(h, 2))
    return (v * np.exp(1j * scale * w)) @ v.conj().T


def _random_mixed_ensemble(d: int, K: int, rng: np.random.Generator):
    probs = rng.dirichlet(np.ones(K))
    rhos = [random_density(d, rng, rank=int(rng.integers(1, d + 1))) for _ in range(K)]
    return rhos, probs


def chi_continuity_trial(seed: int, trial: int, dims=(2, 3, 4, 8), max_tries: int = 50) -> BoundReport:
    """One random pair with eps <= 1/16 (perturbations are resampled until it is)."""
    rng = np.random.default_rng([seed, trial])
    d = int(dims[trial % len(dims)])
    K = int(rng.integers(2, 5))
    rhos, probs = _random_mixed_ensemble(d, K, rng)
    rep = None
    for _ in range(max_tries):
        scale = 10 ** rng.uniform(-3, -0.3)
        omegas = []
        for r in rhos:
            if rng.random() < 0.5:
                u = _small_unitary(d, scale, rng)
                omegas.append(u @ r @ u.conj().T)
            else:
                s = scale * rng.random()
                omegas.append((1 - s) * r + s * random_density(d, rng))
        rep = check_chi_continuity(rhos, omegas, probs)
        if rep.status != PRECONDITION:
            break
    rep.extra.update(trial=trial, seed=seed)
    return rep


def product_mi_trial(seed: int, trial: int) -> BoundReport:
    rng = np.random.default_rng([seed, trial])
    n = 2 + trial % 2
    ks = tuple(int(k) for k in rng.integers(2, 4, size=n))
    d = int(rng.integers(2, 5))
    marginals = [rng.dirichlet(np.ones(k)) for k in ks]
    flat = [random_density(d, rng, rank=int(rng.integers(1, d + 1))) for _ in range(int(np.prod(ks)))]
    states = np.array(flat).reshape(ks + (d, d))
    rep = check_product_mi_bound(cq_state(marginals, states))
    rep.extra.update(trial=trial, seed=seed, d=d)
    return rep


def chi_monotone_trial(seed: int, trial: int) -> BoundReport:
    rng = np.random.default_rng([seed, trial])
    d = int(rng.integers(2, 5))
    K = int(rng.integers(2, 5))
    rhos, probs = _random_mixed_ensemble(d, K, rng)
    if rng.random() < 0.5:  # occasionally pure signals
        rhos = [np.outer(u[:, 0], u[:, 0].conj()) for u in (random_unitary(d, rng) for _ in range(K))]
    out = int(rng.integers(2, 5))
    ch = random_channel(d, out, int(rng.integers(-(-d // out), 5)), rng)
    before = holevo_chi(rhos, probs)
    after = holevo_chi([apply(ch, r) for r in rhos], probs)
    return BoundReport.upper("chi-monotone", after, before, inputs_digest=digest(seed, trial),
                             extra={"trial": trial, "seed": seed, "d": d})


def markov_trial(seed: int, trial: int) -> BoundReport:
    """Random discrete X in [0, 1] with A = 1/sqrt(eps)."""
    rng = np.random.default_rng([seed, trial])
    m = int(rng.integers(2, 12))
    values = 1 - rng.beta(0.5, 5.0, size=m) * rng.random()
    probs = rng.dirichlet(np.ones(m) * 0.5)
    gap = 1 - float(np.dot(values, probs))
    eps = min(max(gap, 1e-12) * rng.uniform(1.0001, 3.0), 1.0)
    rep = markov_check(values, probs, 1 / math.sqrt(eps), eps)
    rep.extra.update(trial=trial, seed=seed)
    return rep


SWEEPS: dict[str, Callable[[int, int], BoundReport]] = {
    "chi-continuity": chi_continuity_trial,
    "product-mi": product_mi_trial,
    "chi-monotone": chi_monotone_trial,
    "markov": markov_trial,
}


def run_sweep(check: str, trials: int, seed: int, jobs: int = 1) -> list[BoundReport]:
    """Run ``trials`` seeded trials; trial t uses the generator seeded by (seed, t)."""
    try:
        fn = SWEEPS[check]
    except KeyError:
        raise ValueError(f"unknown check {check!r}; choose from {sorted(SWEEPS)}") from None
    return _map(lambda t: fn(seed, t), range(trials), jobs)

"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary of a pytest run.
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg

from qsrc import bounds, codecs
from qsrc.channels import (controlled_rotation_leak, identity_instrument, measure_and_replace_instrument,
                           projective_instrument, subspace_instrument, weak_measurement_instrument)
from qsrc.ensembles import bundled_fixtures, chain, decompose, entropy, load_fixture, string_ensemble
from qsrc.qcore import fidelity
from qsrc.reports import summarize

SEED = 7


def test_01_five_state_decomposition(acceptance_line):
    t0 = time.perf_counter()
    e = load_fixture("five_state")
    d = decompose(e)
    c = chain(e, 0, 4)  # from |0> to |3>
    dt = time.perf_counter() - t0
    ok = d.L == 1 and c is not None and len(c) == 5 and dt < 1
    acceptance_line(1, "five-state source is irreducible", ok,
                    f"components={d.L}, shortest chain |0>..|3> = {c} ({len(c)} members), {dt:.3f}s")
    assert ok


def test_02_fidelity_oracle(acceptance_line):
    rng = np.random.default_rng([SEED, 2])
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 5))
        gs = []
        for _ in range(2):
            r = int(rng.integers(1, d + 1))
            g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
            gs.append(g / np.linalg.norm(g))
        rho, omega = (g @ g.conj().T for g in gs)
        # purifications vec(g); max over environment unitaries = trace norm of g1^dag g2
        oracle = np.sum(scipy.linalg.svdvals(gs[0].conj().T @ gs[1])) ** 2
        worst = max(worst, abs(fidelity(rho, omega) - oracle))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 10
    acceptance_line(2, "fidelity vs purification oracle", ok, f"200 pairs, max |diff| = {worst:.2e}, {dt:.2f}s")
    assert ok


def _sweep_line(number, title, check, trials, limit, acceptance_line):
    t0 = time.perf_counter()
    reps = bounds.run_sweep(check, trials, SEED)
    dt = time.perf_counter() - t0
    s = summarize(reps)
    ok = s["violations"] == 0 and s["precondition_unmet"] == 0 and s["trials"] == trials and dt < limit
    acceptance_line(number, title, ok, f"{trials} trials, violations={s['violations']}, "
                    f"precondition_unmet={s['precondition_unmet']}, min slack={s['min_slack']:.3e}, {dt:.1f}s")
    return ok, reps


def test_03_chi_continuity(acceptance_line):
    ok, reps = _sweep_line(3, "chi continuity sweep", "chi-continuity", 1000, 60, acceptance_line)
    assert {r.extra["d"] for r in reps} == {2, 3, 4, 8}
    assert all(r.extra["eps"] <= 1 / 16 for r in reps)
    assert ok


def test_04_product_bound(acceptance_line):
    ok, reps = _sweep_line(4, "product mutual-information bound sweep", "product-mi", 500, 60, acceptance_line)
    assert {r.extra["n"] for r in reps} == {2, 3}
    assert ok


def test_05_chi_monotone(acceptance_line):
    ok, _ = _sweep_line(5, "chi monotone under channels", "chi-monotone", 500, 60, acceptance_line)
    assert ok


def test_06_resource_gap(acceptance_line):
    t0 = time.perf_counter()
    slacks = []
    for name in ("zero_plus", "orthogonal_pair"):
        e = load_fixture(name)
        for n in (2, 4, 8):
            schemes = [codecs.identity_scheme(e, n),
                       codecs.build_schumacher(e, n, rate=0.4),
                       codecs.build_schumacher(e, n, rate=0.8),
                       codecs.build_hybrid(e, n, 0.1),
                       codecs.measure_and_replace_scheme(e, n)]
            for s in schemes:
                slacks.append(codecs.resource_gap(s.evaluate()).slack)
    dt = time.perf_counter() - t0
    ok = min(slacks) >= -1e-8 and dt < 300
    acceptance_line(6, "resource lower bound for bundled schemes", ok,
                    f"{len(slacks)} scheme reports, min slack = {min(slacks):.3e}, {dt:.2f}s")
    assert ok


def test_07_hybrid_beats_schumacher_limit(acceptance_line):
    t0 = time.perf_counter()
    e = load_fixture("two_block")
    d = decompose(e)
    S = entropy(e)
    assert S == pytest.approx(float(d.weights @ d.block_entropies) + 1.0, abs=1e-12)
    h = codecs.build_hybrid(e, 32, eps_typ=0.1)
    r = h.evaluate("mc", samples=10_000, seed=SEED)
    dt = time.perf_counter() - t0
    ok = r.F_bar >= 0.9 and r.supp_bar <= S - 0.5 and dt < 300
    acceptance_line(7, "hybrid scheme at n=32", ok,
                    f"F_bar={r.F_bar:.6f} (stderr {r.stderr:.1e}), supp_bar={r.supp_bar:.4f} <= S-0.5={S - 0.5:.4f}, "
                    f"classical {r.classical_bits:.3f} bits/signal, {dt:.2f}s")
    assert ok


def test_08_rate_threshold_direction(acceptance_line):
    t0 = time.perf_counter()
    e = load_fixture("zero_plus")
    S = entropy(e)
    rep = {(R, n): codecs.build_schumacher(e, n, rate=R).evaluate("mc", samples=10_000, seed=SEED)
           for R, n in [(0.8, 16), (0.4, 16), (0.8, 4)]}

    def margin(a, b):
        return (a.F_bar - b.F_bar) - 3 * math.hypot(a.stderr, b.stderr)

    m1 = margin(rep[0.8, 16], rep[0.4, 16])
    m2 = margin(rep[0.8, 16], rep[0.8, 4])
    dt = time.perf_counter() - t0
    ok = m1 > 0 and m2 > 0 and abs(S - 0.6009) < 1e-4 and dt < 300
    acceptance_line(8, "Schumacher rate ordering", ok,
                    f"S={S:.4f}; F(0.8,16)={rep[0.8, 16].F_bar:.4f}, F(0.4,16)={rep[0.4, 16].F_bar:.4f}, "
                    f"F(0.8,4)={rep[0.8, 4].F_bar:.4f}; margins beyond 3 stderr {m1:.3f}, {m2:.3f}, {dt:.2f}s")
    assert ok


def test_09_information_disturbance(acceptance_line):
    t0 = time.perf_counter()
    e = load_fixture("zero_plus")
    # for this source eps(t) = (1 - cos t) / 4, so the grid is set in eps
    grid = np.logspace(-4, -1, 13)
    ts = [math.acos(1 - 4 * g) for g in grid]
    curve = bounds.info_disturbance_sweep(e, controlled_rotation_leak, ts)
    fit = bounds.fit_disturbance(curve)
    dt = time.perf_counter() - t0
    zero_ok = curve.ts[0] == 0 and curve.chi_env[0] == 0.0
    order = np.argsort(curve.eps)
    decreasing = bool(np.all(np.diff(curve.chi_env[order]) > 0))
    smallest = curve.chi_env[1]
    ok = zero_ok and decreasing and smallest < 0.02 and dt < 30
    acceptance_line(9, "environment information vs disturbance", ok,
                    f"chi(t=0)={curve.chi_env[0]}, strictly monotone={decreasing}, "
                    f"chi at eps={curve.eps[1]:.1e} is {smallest:.2e}; empirical fit A={fit.A:.3f} B={fit.B:.3f}, {dt:.2f}s")
    assert ok


def test_10_typical_sequences(acceptance_line):
    t0 = time.perf_counter()
    dist, eps = (0.3, 0.7), 0.1
    res = bounds.typical_set_mass(dist, 64, eps)
    above = res.n0 is not None and all(res.masses[m] > 1 - eps for m in range(res.n0, 65))
    cross = all(bounds.typical_set_mass(dist, n, eps, exact=True).exact == bounds.typical_set_mass_naive(dist, n, eps)
                for n in range(1, 17))
    dt = time.perf_counter() - t0
    ok = above and cross and dt < 30
    acceptance_line(10, "typical-set mass", ok,
                    f"Bernoulli(0.3), eps=0.1: n0={res.n0}, min mass on [n0, 64] = "
                    f"{min(res.masses[m] for m in range(res.n0 or 1, 65)):.6f}, exact enumeration match n<=16: {cross}, {dt:.2f}s")
    assert ok


def test_11_xenc_identity(acceptance_line):
    t0 = time.perf_counter()
    diffs = []
    for name in bundled_fixtures():
        e = load_fixture(name)
        k = e.dim
        instruments = [identity_instrument(k), projective_instrument(np.eye(k)),
                       measure_and_replace_instrument(k), subspace_instrument(decompose(e).subspace_projectors)]
        if k == 2:
            instruments.append(weak_measurement_instrument(0.4))
        for ins in instruments:
            diffs.append(abs(bounds.check_xenc(ins, e).slack))
    # encoded fixtures from the codecs, acting on strings
    zp, tb = load_fixture("zero_plus"), load_fixture("two_block")
    diffs.append(abs(bounds.check_xenc(codecs.build_schumacher(zp, 3, rate=0.5).instrument(),
                                       string_ensemble(zp, 3)).slack))
    diffs.append(abs(bounds.check_xenc(codecs.build_hybrid(tb, 2, c=0.0).instrument(),
                                       string_ensemble(tb, 2)).slack))
    dt = time.perf_counter() - t0
    ok = max(diffs) <= 1e-8 and dt < 10
    acceptance_line(11, "encoded chi decomposition identity", ok,
                    f"{len(diffs)} encoded fixtures, max |chi_enc - (avg chi + I)| = {max(diffs):.2e}, {dt:.2f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

import itertools
import math

import numpy as np
import pytest

from qsrc.channels import weak_measurement_instrument
from qsrc.codecs import (InstrumentScheme, ProductScheme, build_hybrid, build_schumacher, compositions,
                         frequency_typical_set, identity_scheme, largest_eigenvalue_set, resource_gap,
                         measure_and_replace_scheme, multinomial, resource_lower_bound)
from qsrc.ensembles import Ensemble, decompose, density, direct_sum, string_ensemble, string_indices
from qsrc.qcore import random_state_vector


def brute_largest(q, n, size):
    """Eigenindex strings of the `size` largest products, ties lexicographic."""
    k = len(q)
    lq = np.log2(q)

    def lp(t):
        c = [t.count(i) for i in range(k)]
        return sum(ci * li for ci, li in zip(c, lq) if ci)

    strings = list(itertools.product(range(k), repeat=n))
    strings.sort(key=lambda t: (-round(lp(t), 9), t))
    return set(strings[:size])


def direct_fidelity(e, n, T, q, v):
    """Average fidelity from explicit loops over strings and the typical set."""
    A = np.abs(v.conj().T @ e.states.T) ** 2
    total = 0.0
    for I in itertools.product(range(e.K), repeat=n):
        qI = sum(math.prod(A[t[m], I[m]] for m in range(n)) for t in T)
        f0 = math.prod(A[0, i] for i in I)
        pI = math.prod(e.probs[i] for i in I)
        total += pI * (qI * qI + (1 - qI) * f0)
    return total


class TestTypes:
    def test_compositions(self):
        assert len(compositions(5, 3)) == math.comb(7, 2)
        assert all(sum(c) == 5 for c in compositions(5, 3))

    def test_multinomial(self):
        assert multinomial((2, 1, 1)) == 12
        assert sum(multinomial(c) for c in compositions(6, 3)) == 3**6

    @pytest.mark.parametrize("q,n", [((0.7, 0.3), 6), ((0.5, 0.3, 0.2), 4), ((0.5, 0.25, 0.25), 5),
                                     ((0.5, 0.5), 5)])
    def test_largest_set_matches_brute_force(self, q, n):
        q = np.array(q)
        for size in range(1, len(q) ** n + 1, 7):
            ts = largest_eigenvalue_set(q, n, size)
            assert ts.size == size
            ind = ts.indicator()
            got = {t for t, x in zip(itertools.product(range(len(q)), repeat=n), ind) if x}
            assert got == brute_largest(q, n, size)

    def test_frequency_window(self):
        q = np.array([0.8, 0.2])
        ts = frequency_typical_set(q, 16, 5.0)
        w = 2 * 4 / math.sqrt(5.0)
        for c in compositions(16, 2):
            inside = all(abs(ci - 16 * qi) < w for ci, qi in zip(c, q))
            assert any(c == r for _, rems in ts.blocks for r in rems) == inside


class TestSchumacher:
    def test_projection_identity_dense(self, rng):
        # q_I from the polynomial recursion against <sigma|P|sigma> with explicit P (k^n <= 256)
        cases = [(2, 8, 0.6), (2, 5, 0.3), (3, 5, 0.9), (4, 4, 1.2)]
        for k, n, R in cases:
            e = Ensemble.from_vectors([random_state_vector(k, rng) for _ in range(3)], [0.5, 0.3, 0.2])
            c = build_schumacher(e, n, rate=R)
            P = c.projector()
            assert np.allclose(P @ P, P, atol=1e-10)
            se = string_ensemble(e, n)
            dense = np.einsum("ia,ab,ib->i", se.states.conj(), P, se.states).real
            assert np.abs(dense - c.projection_weights(string_indices(3, n))).max() < 1e-10

    def test_direct_oracle_zero_plus(self, zero_plus):
        n, R = 8, 0.9
        c = build_schumacher(zero_plus, n, rate=R)
        q, v = np.linalg.eigh(density(zero_plus))
        q, v = q[::-1], v[:, ::-1]
        T = brute_largest(q, n, math.floor(2 ** (n * R)))
        assert c.evaluate().F_bar == pytest.approx(direct_fidelity(zero_plus, n, T, q, v), abs=1e-9)

    def test_dense_instrument_agrees(self, rng):
        e = Ensemble.from_vectors([random_state_vector(2, rng) for _ in range(3)], [0.2, 0.3, 0.5])
        for n, R in [(4, 0.5), (6, 0.7), (5, 0.2)]:
            c = build_schumacher(e, n, rate=R)
            dense = InstrumentScheme(c.instrument(), e, n).evaluate()
            r = c.evaluate()
            assert dense.F_bar == pytest.approx(r.F_bar, abs=1e-10)
            assert dense.supp_bar == pytest.approx(r.supp_bar, abs=1e-12)

    def test_full_rate(self, rng):
        e = Ensemble.from_vectors([random_state_vector(3, rng) for _ in range(4)])
        c = build_schumacher(e, 1, rate=math.log2(3))
        r = c.evaluate()
        assert r.F_bar == pytest.approx(1.0, abs=1e-12)
        assert r.supp_bar == pytest.approx(math.log2(3))
        assert build_schumacher(e, 3, rate=math.log2(3)).evaluate().F_bar == pytest.approx(1.0, abs=1e-12)

    def test_rate_capped(self, zero_plus, caplog):
        c = build_schumacher(zero_plus, 3, rate=5.0)
        assert c.size == 8
        assert "capping" in caplog.text

    def test_pure_source(self):
        e = Ensemble.from_vectors([[1, 1], [1, 1]])
        for n in (1, 4, 10):
            r = build_schumacher(e, n, rate=0.0).evaluate()
            assert r.F_bar == pytest.approx(1.0, abs=1e-12)
            assert r.supp_bar == 0.0

    def test_integer_qubit_variant(self, zero_plus):
        assert build_schumacher(zero_plus, 16, rate=0.8, integer_qubits=True).size == 2**12
        assert build_schumacher(zero_plus, 16, rate=0.8).size == math.floor(2**12.8)

    def test_bad_arguments(self, zero_plus):
        with pytest.raises(ValueError):
            build_schumacher(zero_plus, 4)
        with pytest.raises(ValueError):
            build_schumacher(zero_plus, 4, rate=0.5, eps_typ=0.1)
        with pytest.raises(ValueError):
            build_schumacher(zero_plus, 4, rate=-1.0)
        with pytest.raises(ValueError):
            build_schumacher(zero_plus, 4, eps_typ=0.0)

    def test_typicality_mode(self, zero_plus):
        c = build_schumacher(zero_plus, 12, eps_typ=10.0)
        r = c.evaluate()
        assert 0 < r.F_bar <= 1
        assert c.typical_mass() > 0.5

    def test_exact_refused_when_large(self, zero_plus):
        c = build_schumacher(zero_plus, 21, rate=0.8)
        with pytest.raises(ValueError):
            c.evaluate("exact")

    def test_mc_agrees_with_exact(self, rng):
        e = Ensemble.from_vectors([[1, 0], [1, 1], [1, 1j]], [0.5, 0.3, 0.2])
        c = build_schumacher(e, 8, rate=0.8)
        ex = c.evaluate("exact").F_bar
        mc = c.evaluate("mc", samples=10_000, seed=5)
        assert mc.stderr > 0
        assert abs(mc.F_bar - ex) < 3 * mc.stderr
        assert mc.seed == 5 and mc.samples == 10_000

    def test_jobs_do_not_change_results(self):
        e = Ensemble.from_vectors([[1, 0], [1, 1], [1, 1j]], [0.5, 0.3, 0.2])
        c = build_schumacher(e, 9, rate=0.7)
        assert c.evaluate("exact", jobs=1).F_bar == c.evaluate("exact", jobs=4).F_bar
        a = c.evaluate("mc", samples=5000, seed=2, jobs=1)
        b = c.evaluate("mc", samples=5000, seed=2, jobs=3)
        assert (a.F_bar, a.stderr) == (b.F_bar, b.stderr)

    def test_rate_ordering_zero_plus(self, zero_plus):
        f = {(R, n): build_schumacher(zero_plus, n, rate=R).evaluate().F_bar
             for R in (0.4, 0.8) for n in (4, 8, 16)}
        assert f[0.8, 4] <= f[0.8, 8] <= f[0.8, 16]
        assert f[0.4, 16] < f[0.4, 4]
        assert f[0.8, 16] > f[0.4, 16]


class TestHybrid:
    def test_orthogonal_pair(self):
        e = Ensemble.from_vectors(np.eye(2))
        for n in (1, 3, 8):
            r = build_hybrid(e, n).evaluate()
            assert r.F_bar == pytest.approx(1.0, abs=1e-12)
            assert r.supp_bar == 0.0
            assert r.classical_bits == pytest.approx(1.0)

    def test_irreducible_matches_schumacher(self, zero_plus, caplog):
        for n, R in [(4, 0.5), (8, 0.8), (6, 0.3)]:
            h = build_hybrid(zero_plus, n, block_rates=[R])
            s = build_schumacher(zero_plus, n, rate=R)
            assert h.evaluate().F_bar == pytest.approx(s.evaluate().F_bar, abs=1e-9)
            assert h.evaluate().I_bits == 0.0
        assert "irreducible" in caplog.text

    def test_dense_instrument_agrees(self, rng):
        th = np.pi / 8
        parts = [Ensemble.from_vectors([[1, 0], [1, 1]]),
                 Ensemble.from_vectors([[1, 0], [np.cos(th), np.sin(th)]])]
        e = direct_sum(parts, [0.6, 0.4])
        for n in (2, 3):
            for c in (0.0, 1.0):
                for eps in (0.1, 50.0):  # the large eps makes some label strings atypical
                    h = build_hybrid(e, n, eps, c=c)
                    dense = InstrumentScheme(h.instrument(), e, n).evaluate()
                    r = h.evaluate()
                    assert dense.F_bar == pytest.approx(r.F_bar, abs=1e-10)
                    assert dense.supp_bar == pytest.approx(r.supp_bar, abs=1e-10)
                    assert dense.I_bits == pytest.approx(r.I_bits, abs=1e-9)

    def test_mc_matches_exact(self, rng):
        parts = [Ensemble.from_vectors([random_state_vector(2, rng) for _ in range(2)]) for _ in range(2)]
        e = direct_sum(parts, [0.5, 0.5])
        h = build_hybrid(e, 10, c=0.5)
        ex = h.evaluate("exact").F_bar
        mc = h.evaluate("mc", samples=10_000, seed=3)
        assert abs(mc.F_bar - ex) < 3 * mc.stderr + 1e-12

    def test_block_rates_length(self, two_block):
        with pytest.raises(ValueError):
            build_hybrid(two_block, 4, block_rates=[0.5])

    def test_resources_approach_limit(self, rng):
        # random irreducible qubit pairs in each half of C^4, with overlaps large enough
        # that the block budgets stay below one qubit per signal at these n
        parts = []
        while len(parts) < 2:
            pair = [random_state_vector(2, rng) for _ in range(2)]
            if abs(np.vdot(*pair)) > 0.8:
                parts.append(Ensemble.from_vectors(pair))
        e = direct_sum(parts, [0.5, 0.5])
        d = decompose(e)
        limit = float(d.weights @ d.block_entropies)
        ns = (8, 16, 32)
        diffs, bits = [], []
        for n in ns:
            h = build_hybrid(e, n, c=1.0)
            diffs.append(h.supp() - limit)
            bits.append(h.evaluate("mc", samples=2000, seed=1).classical_bits)
        # smallest C with |supp - limit| <= C / sqrt(n) on the grid
        C = max(abs(d) * math.sqrt(n) for d, n in zip(diffs, ns))
        print(f"fitted C = {C:.4f}; supp - limit = {diffs}")
        assert 0 < C < 4
        assert diffs[2] < diffs[0]
        assert bits == pytest.approx([1.0, 1.0, 1.0])


class TestProductSchemes:
    def test_identity(self, zero_plus):
        r = identity_scheme(zero_plus, 5).evaluate()
        assert r.F_bar == pytest.approx(1.0) and r.supp_bar == pytest.approx(1.0) and r.I_bits == 0

    def test_product_matches_dense(self, zero_plus):
        from qsrc.channels import tensor_power_instrument
        ins = weak_measurement_instrument(0.4)
        p = ProductScheme(ins, zero_plus, 3).evaluate()
        d = InstrumentScheme(tensor_power_instrument(ins, 3), zero_plus, 3).evaluate()
        assert p.F_bar == pytest.approx(d.F_bar, abs=1e-12)
        assert p.I_bits == pytest.approx(d.I_bits, abs=1e-10)
        assert p.supp_bar == pytest.approx(d.supp_bar, abs=1e-12)

    def test_measure_and_replace(self, zero_plus):
        r = measure_and_replace_scheme(zero_plus, 4).evaluate()
        assert r.F_bar == pytest.approx((0.5 * 1 + 0.5 * 0.5) ** 4)
        assert r.supp_bar == 0.0


class TestResourceGap:
    def test_resource_bound_formula(self):
        assert resource_lower_bound(0.6, 0.0, 2, 4) == 0.6
        eps = 0.01
        expected = 0.6 - 4 * 0.1 * 1 + (0.4 / 4) * math.log2(0.2)
        assert resource_lower_bound(0.6, eps, 2, 4) == pytest.approx(expected)

    def test_identity(self, zero_plus):
        g = resource_gap(identity_scheme(zero_plus, 4).evaluate())
        assert g.lhs == pytest.approx(1.0) and g.passed

    def test_measure_and_replace(self, zero_plus):
        g = resource_gap(measure_and_replace_scheme(zero_plus, 4).evaluate())
        assert g.rhs < 0 and g.slack > 0

    def test_hybrid_fixtures(self, two_block):
        th = np.pi / 8
        e = direct_sum([Ensemble.from_vectors([[1, 0], [1, 1]]),
                        Ensemble.from_vectors([[1, 0], [np.cos(th), np.sin(th)]])], [0.5, 0.5])
        for src in (two_block, e):
            for n in (4, 8):
                for c in (0.0, 0.5, 2.0):
                    g = resource_gap(build_hybrid(src, n, c=c).evaluate())
                    assert g.slack >= -1e-8

    def test_schumacher_sweep(self, rng):
        e = Ensemble.from_vectors([random_state_vector(3, rng) for _ in range(3)])
        for n in (2, 4, 6):
            for R in (0.2, 0.6, 1.0, 1.4):
                assert resource_gap(build_schumacher(e, n, rate=R).evaluate()).slack >= -1e-8

import math
import random
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cxnprobe.errors import (DegenerateLabels, DegenerateVariance,
                             DimensionMismatch)
from cxnprobe.stats import (NEGATIVE, POSITIVE, Nucleus, ScoredSample, jsd,
                            nucleus, pearson, roc_auc, words_to_percentile)

# ---------------------------------------------------------------------------
# independent oracles (no shared code with the implementations they check)

def jsd_decimal(p, q, digits=50):
    """Base-2 JSD in 50-digit decimal arithmetic."""
    getcontext().prec = digits
    ln2 = Decimal(2).ln()
    total = Decimal(0)
    for pi, qi in zip(p, q):
        # Decimal(float) is the exact binary value: the oracle evaluates
        # the same inputs the implementation saw
        pd, qd = Decimal(float(pi)), Decimal(float(qi))
        m = (pd + qd) / 2
        if pd > 0:
            total += pd * (pd / m).ln() / ln2 / 2
        if qd > 0:
            total += qd * (qd / m).ln() / ln2 / 2
    return float(total)


def auc_bruteforce(samples):
    """O(n^2) pair enumeration, ties at one half."""
    pos = [s.score for s in samples if s.label == POSITIVE]
    neg = [s.score for s in samples if s.label == NEGATIVE]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def pearson_fraction(x, y):
    """Exact rational Pearson up to the final square root."""
    xf = [Fraction(v) for v in x]
    yf = [Fraction(v) for v in y]
    n = len(xf)
    mx = sum(xf) / n
    my = sum(yf) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(xf, yf))
    sxx = sum((a - mx) ** 2 for a in xf)
    syy = sum((b - my) ** 2 for b in yf)
    return float(sxy) / math.sqrt(float(sxx) * float(syy))


def nucleus_sort_and_scan(probs, q):
    """Brute-force reference: stable sort by (-p, id), take until mass >= q."""
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    taken = []
    mass = 0.0
    for i in order:
        if probs[i] <= 0.0:
            continue
        if mass >= q:
            break
        taken.append(i)
        mass += probs[i]
    return taken, mass

# ---------------------------------------------------------------------------

class TestJsd:
    def test_identity_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert jsd(p, p) == 0.0

    def test_disjoint_support_is_one(self):
        assert jsd([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_known_value(self):
        # frozen from the 50-digit decimal oracle
        expected = jsd_decimal([0.5, 0.5], [1.0, 0.0])
        assert expected == pytest.approx(0.3112781244591328, abs=1e-15)
        assert jsd([0.5, 0.5], [1.0, 0.0]) == pytest.approx(expected, abs=1e-12)

    def test_symmetry_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = rng.dirichlet(np.ones(16))
            q = rng.dirichlet(np.ones(16))
            assert jsd(p, q) == pytest.approx(jsd(q, p), abs=1e-15)

    def test_bounds_and_zero_iff_equal(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            p = rng.dirichlet(np.ones(8))
            q = rng.dirichlet(np.ones(8))
            v = jsd(p, q)
            assert 0.0 <= v <= 1.0
            assert v > 1e-12  # random pairs are never equal

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            jsd([0.5, 0.5], [0.2, 0.3, 0.5])

    def test_accepts_distribution_objects(self):
        from cxnprobe.core import Distribution
        p = Distribution(log_probs=np.log([0.5, 0.5]), position=0, context_id="a")
        q = Distribution(log_probs=np.log([0.9, 0.1]), position=0, context_id="b")
        assert jsd(p, q) == jsd([0.5, 0.5], [0.9, 0.1])

    def test_against_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            p = rng.dirichlet(np.ones(6))
            q = rng.dirichlet(np.ones(6))
            assert jsd(p, q) == pytest.approx(jsd_decimal(p, q), abs=1e-9)


class TestRocAuc:
    def test_perfect_separation(self):
        samples = [ScoredSample(0.9, POSITIVE), ScoredSample(0.8, POSITIVE),
                   ScoredSample(0.1, NEGATIVE)]
        assert roc_auc(samples) == 1.0

    def test_all_ties(self):
        samples = [ScoredSample(0.5, POSITIVE), ScoredSample(0.5, NEGATIVE),
                   ScoredSample(0.5, POSITIVE)]
        assert roc_auc(samples) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(DegenerateLabels):
            roc_auc([ScoredSample(0.5, POSITIVE)])

    def test_matches_bruteforce_with_ties(self):
        rng = random.Random(7)
        for _ in range(50):
            n = rng.randint(3, 60)
            samples = []
            has = {POSITIVE: False, NEGATIVE: False}
            for _ in range(n):
                label = POSITIVE if rng.random() < 0.5 else NEGATIVE
                # coarse grid injects plenty of exact ties
                samples.append(ScoredSample(rng.randint(0, 8) / 8.0, label))
                has[label] = True
            if not (has[POSITIVE] and has[NEGATIVE]):
                continue
            assert roc_auc(samples) == auc_bruteforce(samples)

    def test_invariant_under_monotone_transform(self):
        rng = random.Random(11)
        samples = [ScoredSample(rng.random(), POSITIVE if rng.random() < 0.4 else NEGATIVE)
                   for _ in range(40)]
        transformed = [ScoredSample(math.exp(3 * s.score) + 1, s.label) for s in samples]
        assert roc_auc(samples) == roc_auc(transformed)

    def test_label_flip_complements(self):
        rng = random.Random(13)
        samples = [ScoredSample(rng.randint(0, 5) / 5.0,
                                POSITIVE if rng.random() < 0.5 else NEGATIVE)
                   for _ in range(39)] + [ScoredSample(0.2, POSITIVE),
                                          ScoredSample(0.4, NEGATIVE)]
        flipped = [ScoredSample(s.score, NEGATIVE if s.label == POSITIVE else POSITIVE)
                   for s in samples]
        assert roc_auc(samples) + roc_auc(flipped) == pytest.approx(1.0, abs=1e-12)


class TestPearson:
    def test_affine(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert pearson(x, [2 * v + 1 for v in x]) == pytest.approx(1.0)

    def test_negation(self):
        x = [1.0, 2.0, 5.0]
        assert pearson(x, [-v for v in x]) == pytest.approx(-1.0)

    def test_against_fraction_oracle(self):
        rng = random.Random(17)
        for _ in range(30):
            x = [rng.randint(-50, 50) / 4.0 for _ in range(8)]
            y = [rng.randint(-50, 50) / 4.0 for _ in range(8)]
            if len(set(x)) == 1 or len(set(y)) == 1:
                continue
            assert pearson(x, y) == pytest.approx(pearson_fraction(x, y), abs=1e-12)

    def test_zero_variance(self):
        with pytest.raises(DegenerateVariance):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(DegenerateVariance):
            pearson([1.0, 2.0], [2.0, 1.0])

    def test_scale_invariance(self):
        rng = random.Random(19)
        x = [rng.random() for _ in range(10)]
        y = [rng.random() for _ in range(10)]
        r = pearson(x, y)
        assert pearson([5 * v + 2 for v in x], y) == pytest.approx(r, abs=1e-12)
        assert pearson([-2 * v for v in x], y) == pytest.approx(-r, abs=1e-12)


class TestNucleus:
    def test_q_one_returns_support(self):
        probs = [0.5, 0.0, 0.25, 0.25]
        n = nucleus(probs, 1.0)
        assert sorted(n.token_ids) == [0, 2, 3]

    def test_simple_case(self):
        n = nucleus([0.6, 0.3, 0.1], 0.85)
        assert n.token_ids == [0, 1]
        assert n.mass == pytest.approx(0.9)

    def test_tie_break_by_token_id(self):
        n = nucleus([0.25, 0.25, 0.25, 0.25], 0.5)
        assert n.token_ids == [0, 1]

    def test_minimality_against_sort_and_scan(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            probs = rng.dirichlet(np.ones(rng.integers(2, 30)))
            q = float(rng.uniform(0.05, 1.0))
            got = nucleus(probs, q)
            want_ids, want_mass = nucleus_sort_and_scan(list(probs), q)
            assert got.token_ids == want_ids
            assert got.mass == pytest.approx(want_mass, abs=1e-12)
            if len(got) > 1:
                assert got.mass - got.entries[-1][1] < q  # dropping last breaks it

    def test_q_out_of_range(self):
        with pytest.raises(ValueError):
            nucleus([1.0], 0.0)

    def test_point_mass(self):
        assert words_to_percentile([0.0, 1.0, 0.0], 0.99) == 1

    def test_uniform(self):
        assert words_to_percentile([1 / 64] * 64, 0.5) == 32

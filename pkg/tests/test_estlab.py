import math

import numpy as np
import pytest

import oracles
from conftest import id_plus
from parakam import estlab, intlat, resonance
from parakam.errors import NotC3, NotLowest, NotStep2


@pytest.fixture(scope="module")
def ex5_tables():
    from conftest import builtin
    pair = builtin("ex5")
    abar, bbar = oracles.dual_of(pair.A.entries), oracles.dual_of(pair.B.entries)
    ta = oracles.power_table(abar, np.array(pair.A.entries, dtype=np.int64).T, 400)
    tb = oracles.power_table(bbar, np.array(pair.B.entries, dtype=np.int64).T, 80)
    return pair, ta, tb


@pytest.fixture(scope="module")
def ex5_samples():
    from conftest import builtin
    return estlab.sample_lowest_c3(builtin("ex5"), 10, 100, 12, seed=1)


def test_gen_binomial():
    for n in range(0, 12):
        for j in range(0, 6):
            assert estlab.gen_binomial(n, j) == math.comb(n, j)
    for n in range(1, 10):
        for j in range(0, 6):
            assert estlab.gen_binomial(-n, j) == (-1) ** j * math.comb(n + j - 1, j)


def test_expansion_matches_exact_powers(ex5_tables):
    pair, ta, tb = ex5_tables
    rng = np.random.default_rng(3)
    for _ in range(6):
        m = tuple(int(x) for x in rng.integers(-9, 10, size=7))
        for k in range(-10, 11):
            for l in range(-10, 11):
                want = tuple(int(x) for x in ta[k] @ tb[l] @ np.array(m, dtype=np.int64))
                assert estlab.expansion_closed_form(pair.A, pair.B, m, k, l) == want
        assert estlab.expansion_check(pair.A, pair.B, m, 10) == (True, 0)


def test_unlocked_implications_on_ex5(ex5):
    pts = resonance.ball_points(7, 2)
    pts = pts[pts.any(axis=1)]
    seen_h, seen_ab = 0, 0
    for m in pts.tolist():
        h = estlab.b_square_moves_a(ex5.A, ex5.B, m)
        ab = estlab.top_b_fixed_by_a(ex5.A, ex5.B, m)
        assert h is not False and ab is not False
        seen_h += h is True
        seen_ab += ab is True
    assert seen_h > 0 and seen_ab > 0


def test_b_square_implication_fails_on_locked_pair(ex_rankone):
    # the parabolic-factor pair violates the implication, so the check is not vacuous
    pts = resonance.ball_points(3, 2)
    verdicts = {estlab.b_square_moves_a(ex_rankone.A, ex_rankone.B, m) for m in pts.tolist() if any(m)}
    assert False in verdicts


def test_probe_rejects_resonant(ex5):
    with pytest.raises(NotC3):
        estlab.probe_double_sum(ex5, (0, 0, 0, 2, 1, 0, 2), 40)


def test_probe_rejects_non_lowest(ex5, ex5_samples):
    m = ex5_samples[0]
    u = intlat.mat_vec(ex5.A.dualnil, m)
    moved = tuple(x + 3 * y for x, y in zip(m, u))
    with pytest.raises(NotLowest):
        estlab.probe_double_sum(ex5, moved, 40)


def test_probe_rejects_step3_first_generator(ex5):
    a = intlat.make_unimat(id_plus(3, (2, 1), (3, 2)))
    b = intlat.make_unimat(intlat.identity(3))
    from parakam import action
    pair = action.make_action(a, b, [0.0, 0.0, 0.1], [0.0, 0.0, 0.0])
    with pytest.raises(NotStep2):
        estlab.probe_double_sum(pair, (0, 0, 1), 40)


def _brute_side(ta, tb, m, r, sign, L=60, K=400):
    mv = np.array(m, dtype=np.int64)
    nm = math.sqrt(float(mv @ mv))
    ls = range(0, L + 1) if sign > 0 else range(-1, -L - 1, -1)
    ak = np.stack([ta[k] for k in range(-K, K + 1)])
    tot = 0.0
    for l in ls:
        v = ak @ (tb[l] @ mv)
        nv = np.sqrt((v.astype(float) ** 2).sum(axis=1))
        tot += float(((nm / nv) ** r).sum())
    return tot


def test_double_sums_match_enumeration(ex5_tables, ex5_samples):
    pair, ta, tb = ex5_tables
    for m in ex5_samples[:4]:
        pr = estlab.probe_double_sum(pair, m, 40, 0.33)
        assert pr.certified
        assert pr.sum_plus_l == pytest.approx(_brute_side(ta, tb, m, 40, +1), rel=2e-3)
        assert pr.sum_minus_l == pytest.approx(_brute_side(ta, tb, m, 40, -1), rel=2e-3)


def test_large_r_ratio_small(ex5, ex5_samples):
    for m in ex5_samples[:6]:
        pr = estlab.probe_double_sum(ex5, m, 80, 0.33)
        assert math.isfinite(pr.ratio_best) and 0 < pr.ratio_best < 1e-6


def test_step_two_floor(ex5):
    pts = resonance.ball_points(7, 3)
    pts = pts[pts.any(axis=1)]
    code, _, _ = resonance.bulk_classify(ex5.A, ex5.B, pts)
    cands = [m for m in pts[code == 2].tolist()
             if resonance.is_lowest(ex5.A, m) and intlat.vector_step(ex5.B.dualnil, m) == 2]
    assert len(cands) > 100
    for m in cands[::15]:
        pr = estlab.probe_double_sum(ex5, m, 40, 0.33)
        assert pr.s_of_m == 2 and pr.certified
        assert min(pr.floor_plus, pr.floor_minus) >= 0.5


def test_drift_record(ex5, ex5_samples):
    rec = estlab.probe_drift(ex5, ex5_samples[0])
    assert rec.expansion_exact and rec.expansion_mismatches == 0
    assert rec.small_l_min > 0 and rec.drift_l_min > 0 and rec.drift_k_min > 0
    assert rec.delta == pytest.approx(0.99 / rec.s_of_m)
    assert rec.b_square_moves_a is not False and rec.top_b_fixed_by_a is not False


def test_samples_are_lowest_c3(ex5, ex5_samples):
    assert len(ex5_samples) == 12
    for m in ex5_samples:
        assert 10 <= math.sqrt(intlat.norm_sq(m)) <= 100
        assert resonance.is_lowest(ex5.A, m)
        assert resonance.classify_mode(ex5.A, ex5.B, m).cls == resonance.C3


def test_envelope_summary_logic():
    def probe(m, ratio, side, pred):
        return estlab.SumProbe(m, 40.0, 0.33, 1.0, 1.0, 0.0, 0.0, -5.2, ratio, ratio, ratio, side, pred,
                               1.0, 1.0, 8, 64, 64, True, 3)
    low = [probe((20, 0), 1.0, "Plus", "Plus"), probe((30, 0), 2.0, "Minus", "Plus")]
    high = [probe((60, 0), 15.0, "Plus", "Plus")]
    s = estlab.envelope_summary(low + high)
    assert s.max_ratio_low == 2.0 and s.max_ratio_high == 15.0
    assert s.stable
    assert s.side_agreement == pytest.approx(2 / 3)
    assert s.side_mismatches == [(30, 0)]
    assert not estlab.envelope_summary(low + [probe((70, 0), 25.0, "Plus", "Plus")]).stable


def test_envelope_small_run(ex5):
    s = estlab.run_envelope(ex5, 40, 0.33, 10, 100, 10, seed=2)
    assert len(s.probes) == 10
    assert s.all_certified
    assert s.stable

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import id_plus
from parakam import action, intlat
from parakam.errors import DegenerateResonance, NotInCommutationSpace


def _affine_power(pair, k, l):
    """Translation of a^k b^l by composing the affine maps on exact vectors."""
    d = pair.dim

    def apply(mat, shift, x):
        return tuple(sum(Fraction(mat[i][j]) * x[j] for j in range(d)) + shift[i] for i in range(d))

    def inverse(g, t):
        inv = g.inverse
        return inv, tuple(-v for v in intlat.mat_vec(inv, t))

    a = (pair.A.entries, pair.alpha)
    b = (pair.B.entries, pair.beta)
    x = tuple(Fraction(0) for _ in range(d))
    steps_b = [b if l >= 0 else inverse(pair.B, pair.beta)] * abs(l)
    steps_a = [a if k >= 0 else inverse(pair.A, pair.alpha)] * abs(k)
    for mat, t in steps_b:
        x = apply(mat, t, x)
    for mat, t in steps_a:
        x = apply(mat, t, x)
    return x


def _exact(pair_json):
    return action.action_from_dict(dict(pair_json, exact=True))


EX33_EXACT = {"A": [[1, 0], [1, 1]], "B": [[1, 0], [0, 1]], "alpha": ["3/7", "0"], "beta": ["0", "5/11"]}
EX5_EXACT = {
    "A": id_plus(7, (5, 2), (6, 1), (7, 3)),
    "B": id_plus(7, (4, 2), (4, 3), (6, 4), (7, 3)),
    "alpha": ["1/3", "2/5", "-2/5", "3/7", "1/11", "2/13", "4/17"],
    "beta": ["3/7", "0", "-2/5", "1/19", "5/23", "7/29", "1/31"],
}


def test_builtin_ex5_matches_literal(ex5):
    assert ex5.A.entries == tuple(map(tuple, EX5_EXACT["A"]))
    assert ex5.B.entries == tuple(map(tuple, EX5_EXACT["B"]))


def test_commutation_space_identity_factor_pair(ex_id):
    sp = action.commutation_space(ex_id.A, ex_id.B)
    assert sp.dim == 4
    # alpha_1 = beta_1 = 0 on the whole space
    for v in sp.basis:
        assert v[0] == 0 and v[3] == 0


def test_commutation_space_trivial_pair():
    a = intlat.make_unimat(intlat.identity(3))
    assert action.commutation_space(a, a).dim == 6


def test_commutation_space_ex5(ex5):
    sp = action.commutation_space(ex5.A, ex5.B)
    for v in sp.basis:
        al, be = v[:7], v[7:]
        assert be[0] == al[3]
        assert be[1] == 0
        assert be[2] == al[2] == -al[1]


def test_commutation_constraint_on_samples(ex5):
    sp = action.commutation_space(ex5.A, ex5.B)
    for c in range(1, 6):
        v = [sum(Fraction(c * (i + 1), 7) * b[j] for i, b in enumerate(sp.basis)) for j in range(14)]
        al, be = v[:7], v[7:]
        lhs = intlat.mat_vec(ex5.A.nilpart, be)
        rhs = intlat.mat_vec(ex5.B.nilpart, al)
        assert lhs == rhs


def test_translation_part_base_cases(ex33):
    assert action.translation_part(ex33, 1, 0) == ex33.alpha
    assert action.translation_part(ex33, 0, 1) == ex33.beta
    assert all(x == 0 for x in action.translation_part(ex33, 0, 0))


def test_translation_part_ex3(ex3):
    t = action.translation_part(ex3, 0, 1)
    assert t[0] == 0 and t[1] == pytest.approx(math.sqrt(2) - 1)


def test_translation_part_ex33_exact():
    pair = _exact(EX33_EXACT)
    al, be = Fraction(3, 7), Fraction(5, 11)
    assert action.translation_part(pair, 2, 1) == (2 * al, al + be)


@pytest.mark.parametrize("name", ["ex33", "ex5"])
@pytest.mark.parametrize("kl", [(2, 1), (-1, 3), (3, -2), (-2, -2), (0, -3)])
def test_translation_part_matches_composition(name, kl):
    pair = _exact(EX33_EXACT if name == "ex33" else EX5_EXACT)
    assert action.translation_part(pair, *kl) == _affine_power(pair, *kl)


@settings(max_examples=40, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4))
def test_translation_cocycle_exact(k, l, k2, l2):
    pair = _exact(EX5_EXACT)
    lhs = action.translation_part(pair, k + k2, l + l2)
    p = intlat.power_pair(pair.A, pair.B, k2, l2)
    rhs = tuple(x + y for x, y in zip(intlat.mat_vec(p, action.translation_part(pair, k, l)),
                                      action.translation_part(pair, k2, l2)))
    assert lhs == rhs


def test_translation_factor_ex5(ex5):
    fac = action.maximal_translation_factor(ex5)
    assert fac.dim == 3
    assert fac.projection == ((1, 0, 0, 0, 0, 0, 0), (0, 1, 0, 0, 0, 0, 0), (0, 0, 1, 0, 0, 0, 0))
    a, b = ex5.alpha, ex5.beta
    assert fac.alpha == pytest.approx((a[0], a[1], -a[1]))
    assert fac.beta == pytest.approx(b[:3])
    # compatibility ties the factor part of β to α on this pair
    assert b[:3] == pytest.approx((a[3], 0.0, -a[1]))


def test_translation_factor_trivial_pair():
    a = intlat.make_unimat(intlat.identity(2))
    pair = action.make_action(a, a, [0.1, 0.2], [0.3, 0.4])
    fac = action.maximal_translation_factor(pair)
    assert fac.dim == 2 and fac.projection == ((1, 0), (0, 1))


def test_translation_factor_identity_factor_pair(ex_id):
    fac = action.maximal_translation_factor(ex_id)
    assert fac.dim == 1
    assert fac.alpha == (0.0,) and fac.beta == (0.0,)


def test_classify_identity_factor(ex_id):
    c = action.classify_locked(ex_id.A, ex_id.B, 30)
    assert c.verdict == action.LOCKED and c.kind == action.IDENTITY_FACTOR
    assert c.witness == (1, 0, 0)
    k = c.witness
    assert not any(intlat.mat_vec(intlat.transpose(ex_id.A.nilpart), k))
    assert not any(intlat.mat_vec(intlat.transpose(ex_id.B.nilpart), k))
    for v in ex_id.tspace.basis:
        assert intlat.dot(k, v[:3]) == 0 and intlat.dot(k, v[3:]) == 0


def test_classify_ex3_unlocked(ex3):
    assert action.classify_locked(ex3.A, ex3.B, 30).verdict == action.UNLOCKED


def test_classify_ex5_unlocked(ex5):
    assert action.classify_locked(ex5.A, ex5.B, 30).verdict == action.UNLOCKED


def test_classify_rankone_parabolic(ex_rankone):
    c = action.classify_locked(ex_rankone.A, ex_rankone.B, 30)
    assert c.verdict == action.LOCKED and c.kind == action.PARABOLIC_FACTOR
    m, (k, l) = c.witness, c.pair
    per = intlat.power_pair(ex_rankone.A, ex_rankone.B, k, l, dual=True)
    assert intlat.mat_vec(per, m) == m
    # the phase functional vanishes on the whole commutation space
    t = action.translation_matrix(ex_rankone.A, ex_rankone.B, k, l)
    for v in ex_rankone.tspace.basis:
        assert intlat.dot(m, intlat.mat_vec(t, v)) == 0


def test_rankone_commutation_forces_zero(ex_rankone):
    for v in ex_rankone.tspace.basis:
        assert v[0] == 0 and v[1] == 0


def _random_unimodular(seed):
    import random
    rnd = random.Random(seed)
    u = intlat.identity(3)
    for _ in range(6):
        i, j = rnd.sample(range(1, 4), 2)
        e = intlat.mat_add(intlat.identity(3), intlat.mat_scale(rnd.choice([-1, 1]), intlat.elementary(3, i, j)))
        u = intlat.mat_mul(u, e)
    return u


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("name", ["ex_id", "ex_rankone", "ex3like"])
def test_classify_invariant_under_conjugation(seed, name, ex_id, ex_rankone):
    if name == "ex3like":
        a, b = intlat.make_unimat(id_plus(3, (2, 1))), intlat.make_unimat(intlat.identity(3))
    else:
        pair = ex_id if name == "ex_id" else ex_rankone
        a, b = pair.A, pair.B
    u = _random_unimodular(seed)
    uinv = intlat.rational_inverse(u)
    conj = lambda g: intlat.make_unimat(intlat.mat_mul(intlat.mat_mul(u, g.entries), uinv))  # noqa: E731
    c0 = action.classify_locked(a, b, 20)
    c1 = action.classify_locked(conj(a), conj(b), 20)
    assert (c0.verdict, c0.kind) == (c1.verdict, c1.kind)
    if c0.kind == action.IDENTITY_FACTOR:
        # witnesses of the conjugated pair are fixed by the conjugated transposes
        for g in (conj(a), conj(b)):
            assert not any(intlat.mat_vec(intlat.transpose(g.nilpart), c1.witness))


def test_make_action_rejects_incompatible():
    a = intlat.make_unimat(id_plus(2, (2, 1)))
    b = intlat.make_unimat(id_plus(2, (2, 1)))
    with pytest.raises(NotInCommutationSpace):
        action.make_action(a, b, [0.1, 0.0], [0.3, 0.0])


def test_make_action_repairs_integer_mismatch():
    a = intlat.make_unimat(id_plus(2, (2, 1)))
    b = intlat.make_unimat(intlat.identity(2))
    pair = action.make_action(a, b, [Fraction(1, 3), 0], [1, Fraction(1, 5)])
    assert pair.beta[0] == 0
    assert intlat.mat_vec(a.nilpart, pair.beta) == intlat.mat_vec(b.nilpart, pair.alpha)
    shift = pair.lift_shift[1]
    assert tuple(x + s for x, s in zip(pair.beta, shift)) == (1, Fraction(1, 5))


def test_diophantine_golden(ex33):
    cert = action.diophantine_certificate(ex33, 2.0, 50)
    assert cert.gamma_sdc > 0 and cert.sdc_witness is not None
    assert cert.gamma_res > 0 and cert.res_witness is not None
    # direct scan oracle for the SDC constant over the one-dimensional factor
    g = ex33.alpha[0]
    best = min(max(abs(1 - complex(math.cos(2 * math.pi * k * g), math.sin(2 * math.pi * k * g))),
                   abs(1 - complex(math.cos(2 * math.pi * k * ex33.beta[0]), math.sin(2 * math.pi * k * ex33.beta[0]))))
               * abs(k) ** 2 for k in range(-50, 51) if k)
    assert cert.gamma_sdc == pytest.approx(best, rel=1e-12)


def test_diophantine_degenerate(ex3):
    pair = action.make_action(ex3.A, ex3.B, list(ex3.alpha), [0.0, 0.0])
    with pytest.raises(DegenerateResonance) as exc:
        action.diophantine_certificate(pair, 2.0, 20)
    assert exc.value.witness == (0, 1)


def test_commuting_pair_always_has_a_factor():
    # commuting nilpotent transposes share a kernel vector, so the factor is never trivial
    a = intlat.make_unimat(id_plus(3, (2, 1), (3, 2)))
    b = intlat.make_unimat(id_plus(3, (3, 1)))
    pair = action.make_action(a, b, [0.0, 0.0, 0.3], [0.0, 0.0, 0.7])
    assert action.maximal_translation_factor(pair).dim >= 1

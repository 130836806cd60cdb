"""Numerical probes of the growth and double-sum estimates along dual orbits.

Double sums Σ_k Σ_{l≥0} |Ā^k B̄^l m|^{−r} (and the l < 0 side) are enumerated
with certified tails:

* in k, each line v = w + k·u (u = Â w ≠ 0) satisfies |v| ≥ |u|·|k − k₀|;
* in l, |v| ≥ |Π B̄^l m| where Π projects away from range(Â), and the right
  side is a vector polynomial in l whose leading coefficient gives a floor.

Sums are stored scaled by |m|^r to stay inside floating-point range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import intlat, resonance
from .action import ActionPair
from .errors import NotC3, NotLowest, NotStep2
from .intlat import UniMat

REL_TAIL = 1e-3  # certified tail target relative to the accumulated sum
L_CAP = 200_000
DEGENERATE_CAP = 4096  # no l-growth floor: enumerate this far and report uncertified


# ---------------------------------------------------------------- polynomial expansion


def gen_binomial(n: int, j: int) -> int:
    """n(n−1)…(n−j+1)/j!, valid for negative n."""
    num = 1
    for i in range(j):
        num *= n - i
    return num // math.factorial(j)


def _nil_powers(nil, v: Sequence[int]) -> list:
    out = [tuple(int(x) for x in v)]
    while True:
        nxt = intlat.mat_vec(nil, out[-1])
        if intlat.is_zero_vector(nxt):
            return out
        out.append(tuple(int(x) for x in nxt))


def expansion_closed_form(a: UniMat, b: UniMat, m: Sequence[int], k: int, l: int) -> tuple[int, ...]:
    """Ā^k B̄^l m = Σ_i C(k,i) Â^i Σ_j C(l,j) B̂^j m with generalized binomials."""
    d = len(m)
    acc = [0] * d
    for j, bj in enumerate(_nil_powers(b.dualnil, m)):
        cj = gen_binomial(l, j)
        for i, aij in enumerate(_nil_powers(a.dualnil, bj)):
            c = cj * gen_binomial(k, i)
            for t in range(d):
                acc[t] += c * aij[t]
    return tuple(acc)


def expansion_check(a: UniMat, b: UniMat, m: Sequence[int], half: int = 10) -> tuple[bool, int]:
    """Exact comparison against matrix powers on the (2·half+1)² box; returns (ok, mismatches)."""
    bad = 0
    for k in range(-half, half + 1):
        for l in range(-half, half + 1):
            exact = tuple(intlat.mat_vec(intlat.power_pair(a, b, k, l, dual=True), m))
            if exact != expansion_closed_form(a, b, m, k, l):
                bad += 1
    return bad == 0, bad


# ---------------------------------------------------------------- unlocked implications


def b_square_moves_a(a: UniMat, b: UniMat, m: Sequence[int]) -> bool | None:
    """B̂²m ≠ 0 implies Âm ≠ 0; None when the premise is absent."""
    if intlat.is_zero_vector(intlat.mat_vec(b.dualnil, intlat.mat_vec(b.dualnil, m))):
        return None
    return not intlat.is_zero_vector(intlat.mat_vec(a.dualnil, m))


def top_b_fixed_by_a(a: UniMat, b: UniMat, m: Sequence[int]) -> bool | None:
    """Â²m = 0 and B̂^s m = 0 (s ≥ 2) imply ÂB̂^{s−1}m = 0; None when the premise is absent."""
    if not intlat.is_zero_vector(intlat.mat_vec(a.dualnil, intlat.mat_vec(a.dualnil, m))):
        return None
    pw = _nil_powers(b.dualnil, m)
    if intlat.is_zero_vector(m) or len(pw) < 2:
        return None
    return intlat.is_zero_vector(intlat.mat_vec(a.dualnil, pw[-1]))


# ---------------------------------------------------------------- drift probes


@dataclass
class DriftRecord:
    m: tuple
    s_of_m: int
    delta: float
    expansion_exact: bool
    expansion_mismatches: int
    small_l_min: float
    drift_l_min: float
    drift_l_side: str
    drift_k_min: float
    b_square_moves_a: bool | None
    top_b_fixed_by_a: bool | None

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _b_orbit(b: UniMat, m: Sequence[int], ls: np.ndarray) -> np.ndarray:
    """B̄^l m for each l (exact integer arithmetic, returned as int64 rows)."""
    pw = [np.array(v, dtype=object) for v in _nil_powers(b.dualnil, m)]
    out = []
    for l in ls.tolist():
        acc = sum((gen_binomial(l, j) * v for j, v in enumerate(pw)), np.zeros(len(m), dtype=object))
        out.append(acc)
    return np.array(out, dtype=np.int64).reshape(len(out), len(m))


def _require_step2(a: UniMat) -> None:
    if a.step > 2:
        raise NotStep2("the probes assume a step-2 first generator")


def _line_norms(w: np.ndarray, u: np.ndarray, ks: np.ndarray) -> np.ndarray:
    v = w[:, None, :].astype(float) + ks[None, :, None] * u[:, None, :].astype(float)
    return np.sqrt((v * v).sum(axis=2))


def probe_drift(pair: ActionPair, m: Sequence[int], xi_small: float = 1.0, xi_k: float = 1.0,
                l_window: int = 200, k_window: int = 200, box: int = 10) -> DriftRecord:
    """Empirical minima of the small-l, l-drift and k-drift ratios plus the exact expansion check."""
    a, b = pair.A, pair.B
    _require_step2(a)
    m = tuple(int(x) for x in m)
    s = intlat.vector_step(b.dualnil, m)
    delta = 0.99 / s
    nm = math.sqrt(intlat.norm_sq(m))
    ok, bad = expansion_check(a, b, m, box)
    nil = np.array(a.dualnil, dtype=np.int64)
    kk = np.arange(-k_window, k_window + 1, dtype=float)

    lmax = max(0, math.ceil((xi_small * nm) ** delta) - 1)
    ls = np.arange(-lmax, lmax + 1)
    w = _b_orbit(b, m, ls)
    small = float(_line_norms(w, w @ nil.T, kk).min() / nm ** delta)

    side = resonance.good_l_sign(a, b, m)
    sgn = -1 if side == resonance.MINUS else 1
    ls = sgn * np.arange(1, l_window + 1)
    w = _b_orbit(b, m, ls)
    norms = _line_norms(w, w @ nil.T, kk)
    drift_l = float((norms.min(axis=1) / np.abs(ls)).min())

    k0 = max(1, math.ceil(xi_k * nm))
    ks = np.concatenate([np.arange(k0, k0 + k_window), -np.arange(k0, k0 + k_window)])
    best = math.inf
    lmax_k = int(math.floor((k0 + k_window) ** delta))
    lall = np.arange(-lmax_k, lmax_k + 1)
    w = _b_orbit(b, m, lall)
    norms = _line_norms(w, w @ nil.T, ks.astype(float))
    allowed = np.abs(lall)[:, None] <= np.abs(ks)[None, :].astype(float) ** delta
    if allowed.any():
        best = float((norms / np.abs(ks)[None, :].astype(float) ** delta)[allowed].min())
    return DriftRecord(m, s, delta, ok, bad, small, drift_l, side, best, b_square_moves_a(a, b, m),
                       top_b_fixed_by_a(a, b, m))


# ---------------------------------------------------------------- double sums


@dataclass
class SumProbe:
    m: tuple
    r: float
    eta: float
    sum_plus_l: float  # scaled by |m|^r
    sum_minus_l: float
    tail_plus: float
    tail_minus: float
    envelope_exponent: float
    ratio_plus: float
    ratio_minus: float
    ratio_best: float
    good_side: str  # side with the smaller sum
    predicted_side: str  # sign chosen by the orbit geometry
    floor_plus: float  # min |v|/|m| over enumerated terms
    floor_minus: float
    k_window: int
    l_window_plus: int
    l_window_minus: int
    certified: bool
    s_of_m: int

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    def csv_row(self) -> list:
        return [math.sqrt(sum(x * x for x in self.m)), self.r, self.sum_plus_l, self.sum_minus_l,
                self.envelope_exponent, self.ratio_best]


CSV_HEADER = ["norm_m", "r", "sum_plus_scaled", "sum_minus_scaled", "envelope_exponent", "ratio_best"]


def _half_integral(r: float) -> float:
    """∫_0^∞ (1+y²)^{−r/2} dy."""
    return 0.5 * math.sqrt(math.pi) * math.exp(math.lgamma((r - 1) / 2) - math.lgamma(r / 2))


def _l_polynomial(a: UniMat, b: UniMat, m: Sequence[int], sign: int) -> tuple[int, float, float]:
    """(degree, leading size a, lower-order size B) of x ↦ Π B̄^{sign·x} m.

    Π projects away from span{Â B̂^j m}, which contains every orbit step Â B̄^l m,
    so |Ā^k B̄^l m| ≥ |Π B̄^l m| for all k.
    """
    nil = np.array(a.dualnil, dtype=float)
    d = nil.shape[0]
    pw = [np.array(v, dtype=float) for v in _nil_powers(b.dualnil, m)]
    steps = np.array([nil @ v for v in pw]).T
    rng = np.linalg.matrix_rank(steps) if np.any(steps) else 0
    if rng:
        uu, _, _ = np.linalg.svd(steps)
        q = uu[:, :rng]
        proj = np.eye(d) - q @ q.T
    else:
        proj = np.eye(d)
    deg = len(pw) - 1
    coeffs = [np.zeros(d) for _ in range(deg + 1)]
    for j, v in enumerate(pw):
        # C(l, j) = (1/j!) Σ_i s(j,i) l^i, expanded by repeated multiplication
        poly = np.array([1.0])
        for t in range(j):
            poly = np.convolve(poly, np.array([-float(t), 1.0]))
        poly /= math.factorial(j)
        for i, c in enumerate(poly):
            coeffs[i] = coeffs[i] + c * (sign ** i) * (proj @ v)
    sizes = [float(np.linalg.norm(c)) for c in coeffs]
    scale = max(sizes) if sizes else 0.0
    top = 0
    for i, sz in enumerate(sizes):
        if sz > 1e-9 * max(scale, 1.0):
            top = i
    return top, sizes[top], float(sum(sizes[:top]))


def _l_tail(deg: int, lead: float, lower: float, L: int, nm: float, r: float, ir: float) -> float:
    """Bound on Σ_{|l| ≥ L} of the scaled inner sums, valid once L ≥ max(1, 2·lower/lead)."""
    if deg == 0 or lead <= 0 or L < max(1.0, 2 * lower / lead):
        return math.inf
    tot = 0.0
    for p, pref in ((r, 2.0), (r - 1, 2.0 * ir * nm)):
        expo = deg * p
        if expo <= 1:
            return math.inf
        base = math.log(2 * nm / lead) * p
        s = math.exp(base - expo * math.log(L)) * (1 + L / (expo - 1))
        tot += pref * s
    return tot


def _side_sum(a: UniMat, b: UniMat, m: tuple, r: float, sign: int, nil: np.ndarray) -> tuple:
    nm = math.sqrt(intlat.norm_sq(m))
    ir = _half_integral(r)
    deg, lead, lower = _l_polynomial(a, b, m, sign)
    start = 0 if sign > 0 else 1
    total, ktail, floor = 0.0, 0.0, math.inf
    kwin_max = 0
    chunk = 64
    x = start
    bdual = np.array(b.dual if sign > 0 else b.dual_inverse, dtype=np.int64)
    w = np.array(m, dtype=np.int64)
    if sign < 0:
        w = bdual @ w
    cap = L_CAP if deg > 0 else DEGENERATE_CAP
    while x < cap:
        ws = []
        for _ in range(chunk):
            ws.append(w.copy())
            w = bdual @ w
        W = np.array(ws)
        U = W @ nil.T
        uu = (U * U).sum(axis=1).astype(float)
        k0 = -(W * U).sum(axis=1) / uu
        kc = np.round(k0)
        J = 4
        while True:
            offs = np.arange(-J, J + 1, dtype=float)
            ks = kc[:, None] + offs[None, :]
            V = W[:, None, :].astype(float) + ks[:, :, None] * U[:, None, :].astype(float)
            nv = np.sqrt((V * V).sum(axis=2))
            terms = (nm / nv) ** r
            row = terms.sum(axis=1)
            tails = 2 * (nm / (np.sqrt(uu) * (J + 0.5))) ** r * (1 + (J + 0.5) / (r - 1))
            if np.all(tails <= 1e-6 * np.maximum(row, 1e-300)) or J >= 4096:
                break
            J *= 2
        kwin_max = max(kwin_max, J)
        total += float(row.sum())
        ktail += float(tails.sum())
        floor = min(floor, float(nv.min() / nm))
        x += chunk
        lt = _l_tail(deg, lead, lower, x, nm, r, ir)
        if lt + ktail <= REL_TAIL * total:
            return total, lt + ktail, floor, kwin_max, x, True
    return total, math.inf, floor, kwin_max, x, False


def probe_double_sum(pair: ActionPair, m: Sequence[int], r: float, eta: float | None = None) -> SumProbe:
    a, b = pair.A, pair.B
    _require_step2(a)
    m = tuple(int(x) for x in m)
    rec = resonance.classify_mode(a, b, m)
    if rec.cls != resonance.C3:
        raise NotC3(f"{list(m)} is in class {rec.cls}")
    if not resonance.is_lowest(a, m):
        raise NotLowest(f"{list(m)} is not the lowest point of its orbit")
    S = max(a.step, b.step)
    eta = 0.99 / S if eta is None else eta
    nm = math.sqrt(intlat.norm_sq(m))
    nil = np.array(a.dualnil, dtype=np.int64)
    sp, tp, fp, kp, lp, cp = _side_sum(a, b, m, r, +1, nil)
    sm, tm, fm, km, lm, cm = _side_sum(a, b, m, r, -1, nil)
    env_exp = -eta * r + 8
    scale = -r - env_exp  # ratio = scaled_sum · |m|^{−r} / |m|^{env_exp}
    lg = math.log(nm)
    rp = sp * math.exp(scale * lg)
    rm = sm * math.exp(scale * lg)
    good = resonance.PLUS if sp <= sm else resonance.MINUS
    return SumProbe(m, r, eta, sp, sm, tp, tm, env_exp, rp, rm, min(rp, rm), good, rec.good_l_sign,
                    fp, fm, max(kp, km), lp, lm, cp and cm, rec.s_of_m)


# ---------------------------------------------------------------- sampling and summary


def sample_lowest_c3(pair: ActionPair, lo: float, hi: float, count: int, seed: int = 0,
                     max_tries: int = 200_000) -> list[tuple[int, ...]]:
    """Lowest points of class C3 with lo ≤ |m| ≤ hi, drawn log-uniformly in |m|."""
    a, b = pair.A, pair.B
    rng = np.random.default_rng(seed)
    d = pair.dim
    found: list[tuple[int, ...]] = []
    seen = set()
    tries = 0
    while len(found) < count and tries < max_tries:
        tries += 1
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        radius = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        m = tuple(int(x) for x in np.round(direction * radius))
        if intlat.is_zero_vector(m):
            continue
        u = intlat.mat_vec(a.dualnil, m)
        if not intlat.is_zero_vector(u):
            k = resonance.lowest_shift(m, u)
            m = tuple(mi + k * ui for mi, ui in zip(m, u))
        nm = math.sqrt(intlat.norm_sq(m))
        if not (lo <= nm <= hi) or m in seen:
            continue
        if not resonance.is_lowest(a, m):
            continue
        if resonance.classify_mode(a, b, m).cls != resonance.C3:
            continue
        seen.add(m)
        found.append(m)
    return found


@dataclass
class EnvelopeSummary:
    probes: list = field(default_factory=list)
    max_ratio_low: float = math.nan
    max_ratio_high: float = math.nan
    stable: bool = False
    side_agreement: float = math.nan
    side_mismatches: list = field(default_factory=list)
    slope: float = math.nan
    all_certified: bool = False
    split: float = 50.0

    def to_json(self) -> dict:
        return {"count": len(self.probes), "max_ratio_low": self.max_ratio_low,
                "max_ratio_high": self.max_ratio_high, "stable": self.stable,
                "side_agreement": self.side_agreement, "side_mismatches": [list(m) for m in self.side_mismatches],
                "loglog_slope": self.slope, "all_certified": self.all_certified, "split": self.split}


def envelope_summary(probes: Sequence[SumProbe], split: float = 50.0, factor: float = 10.0) -> EnvelopeSummary:
    norms = np.array([math.sqrt(sum(x * x for x in p.m)) for p in probes])
    ratios = np.array([p.ratio_best for p in probes])
    low = ratios[norms <= split]
    high = ratios[norms >= split]
    out = EnvelopeSummary(list(probes), split=split)
    out.max_ratio_low = float(low.max()) if low.size else math.nan
    out.max_ratio_high = float(high.max()) if high.size else math.nan
    out.stable = bool(low.size and high.size and out.max_ratio_high <= factor * out.max_ratio_low)
    judged = [p for p in probes if p.predicted_side in (resonance.PLUS, resonance.MINUS)]
    if judged:
        mism = [p.m for p in judged if p.predicted_side != p.good_side]
        out.side_mismatches = mism
        out.side_agreement = 1.0 - len(mism) / len(judged)
    pos = ratios > 0
    if pos.sum() >= 2:
        out.slope = float(np.polyfit(np.log(norms[pos]), np.log(ratios[pos]), 1)[0])
    out.all_certified = all(p.certified for p in probes)
    return out


def run_envelope(pair: ActionPair, r: float, eta: float | None, lo: float, hi: float, count: int,
                 seed: int = 0, split: float = 50.0) -> EnvelopeSummary:
    ms = sample_lowest_c3(pair, lo, hi, count, seed)
    return envelope_summary([probe_double_sum(pair, m, r, eta) for m in ms], split)

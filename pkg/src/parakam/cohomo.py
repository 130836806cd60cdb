"""Per-mode solution of the linearized conjugacy equations.

Sign convention: for data q(s,t) the solver returns h and errors p̃ with

    q(s,t) = ∂_{s,t} h + p̃(s,t) + V(s,t),   V(s,t) = ave q(s,t),

so h solves ∂h ≈ q.  On a step-2 dual orbit m_j = m̄ + j u (m̄ lowest,
u = Â m̄) the f-equation reads H_{j+1} − H_j = Q_j after the gauge
H_j = h_{m_j} w_j, Q_j = q_{m_j} w_j with w_{j+1}/w_j = e(m_{j+1}, α).
Points j <= 0 sum backward and points j > 0 sum forward, so the only
uncancelled error of the f-equation sits at m̄ and equals the full
weighted orbit sum there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import fourier, intlat, resonance
from .action import ActionPair
from .errors import BasisFailure, BothDivisorsSmall, NotLowest, NotStep2Orbit, NonCommuting, ZeroMode
from .fourier import FourierField

PLUS_A, MINUS_A, FULL_A, PLUS_B, MINUS_B, FULL_B = "PlusA", "MinusA", "FullA", "PlusB", "MinusB", "FullB"
C1_F, C1_G, C2P, C2PP, C3 = "C1_f", "C1_g", "C2'", "C2''", "C3"


def _e(theta):
    return np.exp(2j * np.pi * np.mod(theta, 1.0))


def _vec(x) -> np.ndarray:
    return np.array([float(v) for v in x])


# ---------------------------------------------------------------- multipliers


def multipliers(pair: ActionPair, m: Sequence[int], ks: Sequence[int], generator: str = "A") -> np.ndarray:
    """λ_m^{(k)} with (h ∘ a^k)_m = h_{Ā^k m} λ_m^{(k)}; λ^{(0)} = 1, negative k uses inverses."""
    g = pair.A if generator == "A" else pair.B
    t = _vec(pair.alpha if generator == "A" else pair.beta)
    out = []
    for k in ks:
        theta = 0.0
        v = tuple(m)
        if k > 0:
            for _ in range(k):
                v = intlat.mat_vec(g.dual, v)
                theta += float(np.dot(v, t))
        elif k < 0:
            for _ in range(-k):
                theta -= float(np.dot(v, t))
                v = intlat.mat_vec(g.dual_inverse, v)
        out.append(_e(theta))
    return np.array(out, dtype=complex)


# ---------------------------------------------------------------- orbits


@dataclass(frozen=True)
class OrbitData:
    lowest: tuple[int, ...]
    step: tuple[int, ...]  # u = Â m̄
    position: int  # m = m̄ + position · u
    js: np.ndarray  # orbit positions inside the support ball, increasing
    points: np.ndarray  # m̄ + j u for j in js
    weights: np.ndarray  # w_j


def _orbit_gen(pair: ActionPair, generator: str):
    g = pair.A if generator == "A" else pair.B
    t = pair.alpha if generator == "A" else pair.beta
    return np.array(g.dualnil, dtype=np.int64), _vec(t)


def orbit_data(pair: ActionPair, m: Sequence[int], radius: float, generator: str = "A") -> OrbitData:
    nil, t = _orbit_gen(pair, generator)
    m = np.array(m, dtype=np.int64)
    u = nil @ m
    if not u.any():
        raise NotStep2Orbit("mode is fixed by the generator")
    if (nil @ u).any():
        raise NotStep2Orbit("orbit of the mode is not affine in the exponent")
    k0 = resonance.lowest_shift(m.tolist(), u.tolist())
    low = m + k0 * u
    a = float(u @ u)
    c = float(low @ u)
    cc = float(low @ low) - radius * radius
    disc = c * c - a * cc
    if disc < 0:
        js = np.zeros(0, dtype=np.int64)
    else:
        r = math.sqrt(disc)
        lo = math.ceil((-c - r) / a - 1e-9)
        hi = math.floor((-c + r) / a + 1e-9)
        js = np.arange(lo, hi + 1, dtype=np.int64)
        pts = low[None, :] + js[:, None] * u[None, :]
        keep = (pts * pts).sum(axis=1) <= radius * radius + 1e-9
        js = js[keep]
    pts = low[None, :] + js[:, None] * u[None, :]
    c0, c1 = float(low @ t), float(u @ t)
    jf = js.astype(float)
    w = _e(jf * c0 + c1 * jf * (jf + 1) / 2)
    return OrbitData(tuple(low.tolist()), tuple(u.tolist()), -k0, js, pts, w)


@dataclass(frozen=True)
class ObstructionSum:
    m: tuple[int, ...]
    direction: str
    value: complex
    terms_used: int
    truncated_tail_bound: float


def _orbit_tail(od: OrbitData, inside: np.ndarray, norm: float, r: float, extra: int = 4000) -> float:
    """Envelope Σ_{orbit points outside the data} norm·(1+|m_j|)^{-r} over a long window."""
    if norm == 0.0:
        return 0.0
    low, u = np.array(od.lowest, dtype=float), np.array(od.step, dtype=float)
    lo = int(od.js.min()) if od.js.size else 0
    hi = int(od.js.max()) if od.js.size else 0
    js = np.concatenate([np.arange(lo - extra, lo), np.arange(hi + 1, hi + 1 + extra)]).astype(float)
    nrm = np.sqrt(((low[None, :] + js[:, None] * u[None, :]) ** 2).sum(axis=1))
    s = float(((1.0 + nrm) ** -r).sum())
    # linear growth beyond the window: integral of (|u| x)^{-r}
    uu = float(np.sqrt(u @ u))
    far = uu * extra
    if r > 1:
        s += 2 * (far ** (1 - r)) / (uu * (r - 1))
    return norm * s


def _sum_along(f: FourierField, od: OrbitData, sel: np.ndarray) -> tuple[complex, int]:
    vals = f.get(od.points[sel])[:, 0]
    return complex((vals * od.weights[sel]).sum()), int(np.count_nonzero(vals))


def orbit_sum(f: FourierField, m: Sequence[int], pair: ActionPair, direction: str, r: float = 2.0) -> ObstructionSum:
    """Σ^{+}_m, Σ^{-}_m or the full weighted sum, in the gauge normalized at m."""
    generator = "A" if direction.endswith("A") else "B"
    od = orbit_data(pair, m, f.trunc_N, generator)
    pos = od.position
    if direction in (PLUS_A, PLUS_B):
        sel = od.js >= pos
    elif direction in (MINUS_A, MINUS_B):
        sel = od.js < pos
    else:
        sel = np.ones(od.js.shape[0], dtype=bool)
    val, used = _sum_along(f, od, sel)
    # renormalize the gauge from m̄ to m: λ_m^{(k)} = w_{pos+k} / w_pos
    c0, c1 = _gauge_coeffs(pair, od, generator)
    wpos = _e(pos * c0 + c1 * pos * (pos + 1) / 2)
    return ObstructionSum(tuple(int(x) for x in m), direction, val / wpos, used,
                          _orbit_tail(od, sel, fourier.norm_r(f, r), r))


def _gauge_coeffs(pair: ActionPair, od: OrbitData, generator: str) -> tuple[float, float]:
    _, t = _orbit_gen(pair, generator)
    return float(np.dot(od.lowest, t)), float(np.dot(od.step, t))


def obstruction_full(f: FourierField, mbar: Sequence[int], pair: ActionPair, generator: str = "A",
                     r: float = 2.0) -> ObstructionSum:
    nil, _ = _orbit_gen(pair, generator)
    u = nil @ np.array(mbar, dtype=np.int64)
    if u.any() and not resonance.is_lowest(pair.A if generator == "A" else pair.B, mbar):
        raise NotLowest(f"{list(mbar)} is not the lowest point of its orbit")
    return orbit_sum(f, mbar, pair, FULL_A if generator == "A" else FULL_B, r)


# ---------------------------------------------------------------- single modes


def solve_mode_C1(f_m: complex, g_m: complex, m: Sequence[int], pair: ActionPair, gamma: float,
                  tau: float) -> tuple[complex, str]:
    """Moser dichotomy on a mode fixed by both duals."""
    m = tuple(int(x) for x in m)
    if not any(m):
        raise ZeroMode("the average is never solved")
    thr = gamma * math.sqrt(intlat.norm_sq(m)) ** (-tau)
    da = _e(float(np.dot(m, _vec(pair.alpha)))) - 1.0
    if abs(da) >= thr:
        return f_m / da, C1_F
    db = _e(float(np.dot(m, _vec(pair.beta)))) - 1.0
    if abs(db) >= thr:
        return g_m / db, C1_G
    raise BothDivisorsSmall(f"both divisors at {list(m)} are below {thr:.3e}")


def solve_mode_orbit(f: FourierField, m: Sequence[int], pair: ActionPair, generator: str = "A") -> complex:
    """h_m from the weighted orbit sum; backward at or before the lowest point, forward after it."""
    od = orbit_data(pair, m, f.trunc_N, generator)
    if od.position <= 0:
        return orbit_sum(f, m, pair, MINUS_A if generator == "A" else MINUS_B).value
    return -orbit_sum(f, m, pair, PLUS_A if generator == "A" else PLUS_B).value


# ---------------------------------------------------------------- commutators


def commutator_L(p: Mapping[tuple[int, int], FourierField], kl: tuple[int, int], st: tuple[int, int],
                 pair: ActionPair, trunc_N: float | None = None) -> FourierField:
    """Scalar: ∂_{k,l} p(s,t) − ∂_{s,t} p(k,l).  Vector: D_{s,t} p(k,l) − D_{k,l} p(s,t)."""
    a, b = p[kl], p[st]
    n = trunc_N if trunc_N is not None else max(a.trunc_N, b.trunc_N)
    if a.rank == 0:
        return fourier.sub(fourier.coboundary(b, pair, *kl, trunc_N=n), fourier.coboundary(a, pair, *st, trunc_N=n))
    return fourier.sub(fourier.twisted_diff_vec(a, pair, *st, trunc_N=n),
                       fourier.twisted_diff_vec(b, pair, *kl, trunc_N=n))


# ---------------------------------------------------------------- bulk solve


@dataclass
class SolveReport:
    h: FourierField
    p_tilde: dict
    V: dict
    counts: dict
    norms: dict = field(default_factory=dict)
    identity_residual: float = 0.0
    leakage: float = 0.0
    lowest_error_support: bool = True

    def to_json(self) -> dict:
        key = lambda st: f"{st[0]},{st[1]}"  # noqa: E731
        return {"counts": dict(self.counts),
                "V": {key(st): [[float(np.real(x)), float(np.imag(x))] for x in np.atleast_1d(v)]
                      for st, v in sorted(self.V.items())},
                "norms": self.norms, "identity_residual": self.identity_residual,
                "leakage": self.leakage, "lowest_error_support": self.lowest_error_support}


def _lowest_shift_vec(ms: np.ndarray, us: np.ndarray) -> np.ndarray:
    c = (ms * us).sum(axis=1)
    a = (us * us).sum(axis=1)
    lo = np.floor_divide(-c, a)
    g = lambda k: 2 * k * c + k * k * a  # noqa: E731
    return np.where(g(lo) <= g(lo + 1), lo, lo + 1)


def _solve_orbits(ms: np.ndarray, q: FourierField, nil: np.ndarray, t: np.ndarray,
                  base: int) -> tuple[np.ndarray, np.ndarray]:
    """h on the given modes (one generator); returns (h values, lowest-point mask)."""
    us = ms @ nil.T
    if (us @ nil.T).any():
        raise NotStep2Orbit("a dual orbit is not affine in the exponent")
    k0 = _lowest_shift_vec(ms, us)
    low = ms + k0[:, None] * us
    j = -k0
    key = fourier._encode(low, base)
    order = np.lexsort((j, key))
    key_s, j_s = key[order], j[order]
    low_s, us_s = low[order], us[order]
    c0 = (low_s.astype(float) @ t)
    c1 = (us_s.astype(float) @ t)
    jf = j_s.astype(float)
    w = _e(jf * c0 + c1 * jf * (jf + 1) / 2)
    Q = q.get(ms[order])[:, 0] * w
    csum = np.cumsum(Q)
    start = np.r_[True, key_s[1:] != key_s[:-1]]
    gid = np.cumsum(start) - 1
    first = np.nonzero(start)[0]
    before = np.r_[0.0, csum][first][gid]  # Σ over earlier groups
    prefix = np.r_[0.0, csum][:-1] - before  # exclusive prefix within the group
    last = np.r_[first[1:], len(key_s)] - 1
    total = (csum[last] - np.r_[0.0, csum][first])[gid]
    H = np.where(j_s <= 0, prefix, prefix - total)
    h = np.empty(ms.shape[0], dtype=complex)
    h[order] = H / w
    return h, j == 0


def solve_scalar(q: Mapping[tuple[int, int], FourierField], pair: ActionPair, N: float, gamma: float, tau: float,
                 rs: Sequence[float] = (0.0, 2.0)) -> SolveReport:
    """Solve ∂h ≈ q on all modes 0 < |m| <= N and report the errors at every supplied (s,t)."""
    if (1, 0) not in q or (0, 1) not in q:
        raise ValueError("data must contain both generators")
    d = pair.dim
    f = fourier.truncate(q[(1, 0)], N)
    g = fourier.truncate(q[(0, 1)], N)
    ms = resonance.ball_points(d, N)
    ms = ms[ms.any(axis=1)]
    code, _, _ = resonance.bulk_classify(pair.A, pair.B, ms)
    anil = np.array(pair.A.dualnil, dtype=np.int64)
    bnil = np.array(pair.B.dualnil, dtype=np.int64)
    au = (ms @ anil.T).any(axis=1)
    alpha, beta = _vec(pair.alpha), _vec(pair.beta)
    h = np.zeros(ms.shape[0], dtype=complex)
    counts = {C1_F: 0, C1_G: 0, C2P: 0, C2PP: 0, C3: 0}
    base = fourier._key_base(2 * N + 1)

    c1 = code == 0
    if c1.any():
        mc = ms[c1]
        thr = gamma * np.sqrt((mc.astype(float) ** 2).sum(axis=1)) ** (-tau)
        da = _e(mc @ alpha) - 1.0
        db = _e(mc @ beta) - 1.0
        use_f = np.abs(da) >= thr
        use_g = ~use_f & (np.abs(db) >= thr)
        if not (use_f | use_g).all():
            bad = mc[~(use_f | use_g)][0]
            raise BothDivisorsSmall(f"both divisors at {bad.tolist()} are below the threshold")
        fm = f.get(mc)[:, 0]
        gm = g.get(mc)[:, 0]
        h[c1] = np.where(use_f, fm / np.where(use_f, da, 1.0), gm / np.where(use_g, db, 1.0))
        counts[C1_F] = int(use_f.sum())
        counts[C1_G] = int(use_g.sum())

    orbit_a = ~c1 & au
    if ((code == 2) & ~au).any():
        raise NotStep2Orbit("a non-resonant mode is fixed by Ā")
    orbit_b = ~c1 & ~au
    lowest = np.zeros(ms.shape[0], dtype=bool)
    if orbit_a.any():
        h[orbit_a], lowest[orbit_a] = _solve_orbits(ms[orbit_a], f, anil, alpha, base)
    if orbit_b.any():
        h[orbit_b], lowest[orbit_b] = _solve_orbits(ms[orbit_b], g, bnil, beta, base)
    counts[C2P] = int((orbit_a & (code == 1)).sum())
    counts[C3] = int((orbit_a & (code == 2)).sum())
    counts[C2PP] = int(orbit_b.sum())

    hf = fourier.make_field(d, ms, h, N, 0, True)
    rep = _errors(q, hf, pair, rs, scalar=True)
    rep.counts = counts
    # error support of the f-equation on A-orbit modes: only lowest points may carry error
    pt = rep.p_tilde[(1, 0)]
    amodes = ms[orbit_a & ~lowest]
    if amodes.size:
        nonlow = np.abs(pt.get(amodes)).max()
        scale = max(1.0, fourier.norm_r(q[(1, 0)], 0.0))
        rep.lowest_error_support = bool(nonlow <= 1e-10 * scale)
    return rep


def _errors(q: Mapping[tuple[int, int], FourierField], h: FourierField, pair: ActionPair, rs: Sequence[float],
            scalar: bool) -> SolveReport:
    pt, vv = {}, {}
    resid = 0.0
    leak = 0.0
    for st, qst in q.items():
        n = max(qst.trunc_N, h.trunc_N)
        dh = (fourier.coboundary(h, pair, *st, trunc_N=n) if scalar
              else fourier.twisted_diff_vec(h, pair, *st, trunc_N=n))
        leak = max(leak, dh.leakage)
        avg = qst.average
        v = fourier.constant(pair.dim, avg[0] if scalar else avg, n)
        e = fourier.sub(fourier.sub(fourier.retruncate(qst, n), dh), v)
        pt[st] = e
        vv[st] = avg[0] if scalar else avg
        chk = fourier.sub(fourier.sub(fourier.sub(fourier.retruncate(qst, n), dh), e), v)
        resid = max(resid, float(np.abs(chk.coeffs).max(initial=0.0)))
    norms = {}
    for r in rs:
        row = {"h": fourier.norm_r(h, r)}
        for st, e in sorted(pt.items()):
            row[f"p_tilde[{st[0]},{st[1]}]"] = fourier.norm_r(e, r)
        norms[str(r)] = row
    return SolveReport(h, pt, vv, {}, norms, resid, leak)


def solve_vector(q: Mapping[tuple[int, int], FourierField], pair: ActionPair, N: float, gamma: float, tau: float,
                 rs: Sequence[float] = (0.0, 2.0)) -> SolveReport:
    """Triangular induction: D_{s,t} h ≈ q solved row by row in a common flag basis."""
    d = pair.dim
    try:
        flag = intlat.common_flag(pair.A, pair.B)
    except (NonCommuting, ValueError) as exc:
        raise BasisFailure(str(exc)) from exc
    U = np.array(flag.basis_matrix, dtype=float)
    Uinv = np.array(flag.basis_inverse, dtype=float)
    qt = {st: fourier.apply_matrix(U, v) for st, v in q.items()}
    tri = {}
    for st in q:
        p = np.array(intlat.power_pair(pair.A, pair.B, *st), dtype=float)
        tri[st] = U @ p @ Uinv
        if np.abs(np.tril(tri[st], -1)).max(initial=0.0) > 0:
            raise BasisFailure("linear parts are not triangular in the flag basis")
    rows: list[FourierField | None] = [None] * d
    counts = {C1_F: 0, C1_G: 0, C2P: 0, C2PP: 0, C3: 0}
    for i in range(d - 1, -1, -1):
        rhs = {}
        for st in q:
            acc = qt[st].component(i)
            for j in range(i + 1, d):
                if tri[st][i, j] != 0:
                    acc = fourier.add(acc, fourier.scale(tri[st][i, j], rows[j]))
            rhs[st] = acc
        sub = solve_scalar(rhs, pair, N, gamma, tau, rs=())
        rows[i] = sub.h
        for k in counts:
            counts[k] += sub.counts[k]
    ht = fourier.stack(rows)
    h = fourier.apply_matrix(Uinv, ht)
    h = fourier.retruncate(h, N)
    rep = _errors(q, h, pair, rs, scalar=False)
    rep.counts = counts
    return rep

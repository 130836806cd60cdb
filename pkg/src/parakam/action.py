"""Affine pairs, their commutation space, translation parts and the locked test."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import intlat, resonance
from .errors import DegenerateResonance, NotInCommutationSpace
from .intlat import Matrix, RatSubspace, UniMat, mat_add, mat_mul, mat_scale, mat_vec

LOCKED, UNLOCKED, UNLOCKED_UP_TO = "Locked", "Unlocked", "UnlockedUpTo"
IDENTITY_FACTOR, PARABOLIC_FACTOR = "IdentityFactor", "ParabolicFactor"


# ---------------------------------------------------------------- translation maps


def _geometric(a: UniMat, k: int) -> Matrix:
    """Matrix T with a^k(x) = A^k x + T α for a(x) = A x + α."""
    d = a.dim
    acc = intlat.zeros(d, d)
    if k > 0:
        p = intlat.identity(d)
        for _ in range(k):
            acc = mat_add(acc, p)
            p = mat_mul(p, a.entries)
    elif k < 0:
        p = intlat.identity(d)
        for _ in range(-k):
            p = mat_mul(p, a.inverse)
            acc = mat_add(acc, p)
        acc = mat_scale(-1, acc)
    return acc


def translation_matrix(a: UniMat, b: UniMat, k: int, l: int) -> Matrix:
    """Integer d x 2d matrix T with α_{k,l} = T (α; β)."""
    ta = _geometric(a, k)
    tb = mat_mul(a.power(k), _geometric(b, l))
    return tuple(ra + rb for ra, rb in zip(ta, tb))


def commutation_space(a: UniMat, b: UniMat) -> RatSubspace:
    """{(α, β) in Q^{2d} : Ã β = B̃ α}."""
    intlat.check_commute(a, b)
    rows = [tuple(-x for x in rb) + tuple(ra) for ra, rb in zip(a.nilpart, b.nilpart)]
    rows = [r for r in rows if any(r)]
    return intlat.kernel_q(rows, 2 * a.dim) if rows else intlat.kernel_q([], 2 * a.dim)


def common_fixed_lattice(a: UniMat, b: UniMat) -> list[tuple[int, ...]]:
    """Reduced basis of {k in Z^d : Aᵀ k = k, Bᵀ k = k}."""
    rows = [r for r in intlat.transpose(a.nilpart) + intlat.transpose(b.nilpart) if any(r)]
    basis = intlat.integer_kernel(rows, a.dim) if rows else intlat.integer_kernel([], a.dim)
    return intlat.row_hnf(basis)


# ---------------------------------------------------------------- the pair


@dataclass(frozen=True)
class TranslationFactor:
    dim: int
    projection: tuple[tuple[int, ...], ...]
    alpha: tuple
    beta: tuple


@dataclass(frozen=True)
class ActionPair:
    A: UniMat
    B: UniMat
    alpha: tuple
    beta: tuple
    exact: bool
    tspace: RatSubspace = field(repr=False)
    lift_shift: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def translations(self) -> tuple:
        return tuple(self.alpha) + tuple(self.beta)

    def to_json(self) -> dict:
        conv = (lambda x: str(Fraction(x))) if self.exact else float
        return {"A": self.A.to_json(), "B": self.B.to_json(),
                "alpha": [conv(x) for x in self.alpha], "beta": [conv(x) for x in self.beta],
                "exact": self.exact}


def _commutation_residual(a: UniMat, b: UniMat, alpha, beta) -> list:
    return [x - y for x, y in zip(mat_vec(a.nilpart, beta), mat_vec(b.nilpart, alpha))]


def make_action(A: UniMat, B: UniMat, alpha: Sequence, beta: Sequence, exact: bool | None = None,
                tol: float = 1e-12) -> ActionPair:
    """Build an affine pair, repairing an integer commutation mismatch of the lifts."""
    intlat.check_commute(A, B)
    d = A.dim
    if len(alpha) != d or len(beta) != d:
        raise ValueError("translation length must match the dimension")
    if exact is None:
        exact = all(isinstance(x, (int, Fraction)) for x in list(alpha) + list(beta))
    if exact:
        alpha = tuple(Fraction(x) for x in alpha)
        beta = tuple(Fraction(x) for x in beta)
    else:
        alpha = tuple(float(x) for x in alpha)
        beta = tuple(float(x) for x in beta)
    res = _commutation_residual(A, B, alpha, beta)
    if exact:
        if any(Fraction(r).denominator != 1 for r in res):
            raise NotInCommutationSpace(f"commutation residual {res} is not integral")
        target = [int(r) for r in res]
    else:
        target = [round(r) for r in res]
        if any(abs(r - t) > tol for r, t in zip(res, target)):
            raise NotInCommutationSpace(f"commutation residual {res} is not integral")
    shift_a: tuple[int, ...] = (0,) * d
    shift_b: tuple[int, ...] = (0,) * d
    if any(target):
        # find integers (u, v) with Ã v - B̃ u = residual; subtract them from the lifts
        system = [tuple(-x for x in rb) + tuple(ra) for ra, rb in zip(A.nilpart, B.nilpart)]
        sol = intlat.solve_integer(system, target)
        if sol is None:
            raise NotInCommutationSpace("no integer repair of the lifts exists")
        shift_a, shift_b = tuple(sol[:d]), tuple(sol[d:])
        alpha = tuple(x - s for x, s in zip(alpha, shift_a))
        beta = tuple(x - s for x, s in zip(beta, shift_b))
    res = _commutation_residual(A, B, alpha, beta)
    if exact and any(res):
        raise NotInCommutationSpace("repair failed")
    if not exact and max((abs(r) for r in res), default=0.0) > tol:
        raise NotInCommutationSpace("repair failed")
    return ActionPair(A, B, alpha, beta, exact, commutation_space(A, B), (shift_a, shift_b))


def translation_part(pair: ActionPair, k: int, l: int) -> tuple:
    """α_{k,l} with a^k b^l (x) = A^k B^l x + α_{k,l}."""
    t = translation_matrix(pair.A, pair.B, k, l)
    return mat_vec(t, pair.translations)


def maximal_translation_factor(pair: ActionPair) -> TranslationFactor:
    p = common_fixed_lattice(pair.A, pair.B)
    return TranslationFactor(len(p), tuple(p), tuple(mat_vec(p, pair.alpha)) if p else (),
                             tuple(mat_vec(p, pair.beta)) if p else ())


# ---------------------------------------------------------------- locked / unlocked


@dataclass(frozen=True)
class LockCertificate:
    verdict: str
    scan_bound: float | None = None
    kind: str | None = None
    witness: tuple[int, ...] | None = None
    pair: tuple[int, int] | None = None
    factor_lattice: tuple[tuple[int, ...], ...] = ()
    evidence: tuple[str, ...] = ()

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "scan_bound": self.scan_bound, "kind": self.kind,
               "witness": list(self.witness) if self.witness else None,
               "pair": list(self.pair) if self.pair else None,
               "factor_lattice": [list(v) for v in self.factor_lattice],
               "evidence": list(self.evidence)}
        return out


def identity_factor_witnesses(a: UniMat, b: UniMat) -> list[tuple[int, ...]]:
    """Basis of {k̄ in fix(Aᵀ) ∩ fix(Bᵀ) : (k̄,α) = (k̄,β) = 0 on the commutation space}."""
    p = common_fixed_lattice(a, b)
    if not p:
        return []
    d = a.dim
    space = commutation_space(a, b)
    rows = []
    for v in space.basis:
        rows.append(tuple(intlat.dot(pk, v[:d]) for pk in p))
        rows.append(tuple(intlat.dot(pk, v[d:]) for pk in p))
    rows = [r for r in rows if any(r)]
    coeffs = intlat.integer_kernel(rows, len(p)) if rows else intlat.integer_kernel([], len(p))
    vecs = [tuple(sum(c * pk[j] for c, pk in zip(cv, p)) for j in range(d)) for cv in coeffs]
    return intlat.row_hnf(vecs)


def parabolic_factor_space(a: UniMat, b: UniMat, k: int, l: int) -> RatSubspace:
    """Modes fixed by Ā^k B̄^l whose phase (m, α_{k,l}) vanishes on the commutation space."""
    d = a.dim
    per = intlat.mat_sub(intlat.power_pair(a, b, k, l, dual=True), intlat.identity(d))
    t = translation_matrix(a, b, k, l)
    rows = [r for r in per if any(r)]
    for v in commutation_space(a, b).basis:
        tv = mat_vec(t, v)
        if any(tv):
            rows.append(tuple(tv))
    return intlat.kernel_q(rows, d) if rows else intlat.kernel_q([], d)


def _moving_span(a: UniMat, b: UniMat, m: Sequence[int]) -> list[tuple[int, ...]]:
    """Saturated basis of the span of m under the dual nilparts."""
    vecs = [tuple(m)]
    frontier = [tuple(m)]
    while frontier:
        nxt = []
        for v in frontier:
            for nil in (a.dualnil, b.dualnil):
                w = mat_vec(nil, v)
                if any(w) and intlat.rank(vecs + [w]) > len(intlat.rref(vecs)):
                    vecs.append(w)
                    nxt.append(w)
        frontier = nxt
    return intlat.row_hnf(intlat.span_q(vecs, a.dim).saturated_zbasis)


def classify_locked(a: UniMat, b: UniMat, scan_bound: float = 30) -> LockCertificate:
    intlat.check_commute(a, b)
    ev: list[str] = []
    fixed = common_fixed_lattice(a, b)
    ev.append(f"common fixed lattice of the transposes has rank {len(fixed)}")
    wit = identity_factor_witnesses(a, b)
    if wit:
        ev.append(f"functional {list(wit[0])} kills both translations on the commutation space")
        return LockCertificate(LOCKED, scan_bound, IDENTITY_FACTOR, wit[0], None, tuple(wit), tuple(ev))
    ev.append("no identity factor")
    if a.step <= 2 and b.step <= 2:
        ev.append("both generators have step <= 2: the identity-factor test is conclusive")
        return LockCertificate(UNLOCKED, None, evidence=tuple(ev))
    ps = resonance.resonance_pairs_up_to(a, b, scan_bound)
    c1 = resonance._c1_space(a, b)
    ev.append(f"{len(ps.records)} resonance pairs carry resonances of norm <= {scan_bound}")
    for rec in ps.records:
        k, l = rec.pair
        w = parabolic_factor_space(a, b, k, l)
        if all(c1.contains(v) for v in w.saturated_zbasis):
            continue
        m = resonance._shortest_nonzero(list(w.saturated_zbasis), exclude=c1)
        ev.append(f"resonance {list(m)} with pair ({k},{l}) has phase identically 1")
        return LockCertificate(LOCKED, scan_bound, PARABOLIC_FACTOR, tuple(m), (k, l),
                               tuple(_moving_span(a, b, m)), tuple(ev))
    ev.append("every scanned resonance pair admits a nontrivial phase")
    if a.step <= 2 or b.step <= 2:
        ev.append("a step-2 generator is present: verdict reported as unlocked")
        return LockCertificate(UNLOCKED, scan_bound, evidence=tuple(ev))
    return LockCertificate(UNLOCKED_UP_TO, scan_bound, evidence=tuple(ev))


# ---------------------------------------------------------------- Diophantine certificates


def phase_gap(theta) -> float:
    """|1 - e(θ)| = 2 |sin(π θ)|, with θ reduced mod 1 first."""
    if isinstance(theta, Fraction):
        frac = theta - math.floor(theta)
        return 2.0 * abs(math.sin(math.pi * float(frac)))
    frac = theta - math.floor(theta)
    return 2.0 * abs(math.sin(math.pi * frac))


def _is_integer_phase(theta, tol: float) -> bool:
    if isinstance(theta, Fraction):
        return theta.denominator == 1
    return abs(theta - round(theta)) <= tol


def _canonical_sign_key(p: Sequence[int]) -> tuple:
    lead = next((x for x in p if x != 0), 0)
    return (lead < 0, tuple(p))


@dataclass(frozen=True)
class DiophantineCertificate:
    tau: float
    scan_bound: float
    gamma_sdc: float
    sdc_witness: tuple[int, ...] | None
    gamma_res: float
    res_witness: tuple[int, ...] | None
    res_pair: tuple[int, int] | None
    modes_scanned: int

    def to_json(self) -> dict:
        fin = lambda x: x if math.isfinite(x) else "inf"  # noqa: E731
        return {"tau": self.tau, "scan_bound": self.scan_bound, "gamma_sdc": fin(self.gamma_sdc),
                "sdc_witness": list(self.sdc_witness) if self.sdc_witness else None,
                "gamma_res": fin(self.gamma_res),
                "res_witness": list(self.res_witness) if self.res_witness else None,
                "res_pair": list(self.res_pair) if self.res_pair else None,
                "modes_scanned": self.modes_scanned}


def lattice_points_in_ball(basis: Sequence[Sequence[int]], radius: float, max_box: int = 5_000_000) -> np.ndarray:
    """Nonzero points of the lattice spanned by ``basis`` with norm <= radius."""
    if not basis:
        return np.zeros((0, 0), dtype=np.int64)
    bm = np.array(basis, dtype=np.int64)
    n = bm.shape[0]
    ginv = np.linalg.inv((bm @ bm.T).astype(float))
    box = [int(math.floor(radius * math.sqrt(ginv[i, i]) + 1e-9)) for i in range(n)]
    size = 1
    for bx in box:
        size *= 2 * bx + 1
    if size > max_box:
        raise MemoryError(f"lattice enumeration box of {size} points exceeds the budget")
    grids = np.meshgrid(*[np.arange(-bx, bx + 1, dtype=np.int64) for bx in box], indexing="ij")
    coeffs = np.stack([g.ravel() for g in grids], axis=1)
    pts = coeffs @ bm
    sq = (pts * pts).sum(axis=1)
    keep = (sq <= radius * radius + 1e-9) & (sq > 0)
    return pts[keep]


def _phases(points: np.ndarray, vec: Sequence) -> list:
    if all(isinstance(x, Fraction) for x in vec):
        return [sum((int(c) * x for c, x in zip(p, vec)), Fraction(0)) for p in points.tolist()]
    v = np.array([float(x) for x in vec])
    return list(points @ v)


def sdc_constant(pair: ActionPair, tau: float, scan_bound: float) -> tuple[float, tuple | None]:
    """Finite-ball lower bound for the simultaneous Diophantine constant of the translation factor."""
    fac = maximal_translation_factor(pair)
    best, wit = math.inf, None
    if fac.dim:
        pts = resonance.ball_points(fac.dim, scan_bound)
        pts = pts[np.any(pts != 0, axis=1)]
        pa, pb = _phases(pts, fac.alpha), _phases(pts, fac.beta)
        for p, ta, tb in zip(pts.tolist(), pa, pb):
            val = max(phase_gap(ta), phase_gap(tb)) * math.sqrt(intlat.norm_sq(p)) ** tau
            if val < best or (val == best and wit is not None and tuple(p) < wit):
                best, wit = val, tuple(p)
    return best, wit


def diophantine_certificate(pair: ActionPair, tau: float, scan_bound: float,
                            tol: float = 1e-12) -> DiophantineCertificate:
    """Finite-ball lower bounds for the SDC and resonance Diophantine constants."""
    best_sdc, sdc_w = sdc_constant(pair, tau, scan_bound)
    best_res, res_w, res_p = math.inf, None, None
    scanned = 0
    ps = resonance.resonance_pairs_up_to(pair.A, pair.B, scan_bound)
    degenerate = []
    for rec in ps.records:
        k, l = rec.pair
        basis = resonance.pair_resonance_basis(pair.A, pair.B, k, l)
        pts = lattice_points_in_ball(basis, scan_bound)
        if pts.size == 0:
            continue
        xs, ys = resonance._scaled_logs(pair.A, pair.B)
        moving = (pts @ np.array(xs, dtype=np.int64).T).any(axis=1) | (pts @ np.array(ys, dtype=np.int64).T).any(axis=1)
        pts = pts[moving]
        scanned += pts.shape[0]
        shift = translation_part(pair, k, l)
        for p, th in zip(pts.tolist(), _phases(pts, shift)):
            if _is_integer_phase(th, tol):
                degenerate.append((intlat.norm_sq(p), _canonical_sign_key(p), tuple(p), (k, l)))
                continue
            val = phase_gap(th) * math.sqrt(intlat.norm_sq(p)) ** tau
            key = (val, tuple(p))
            if res_w is None or key < (best_res, res_w):
                best_res, res_w, res_p = val, tuple(p), (k, l)
    if degenerate:
        _, _, m, kl = min(degenerate)
        raise DegenerateResonance(f"resonance {list(m)} with pair {kl} has e(m, α_kl) = 1", witness=m, pair=kl)
    return DiophantineCertificate(tau, scan_bound, best_sdc, sdc_w, best_res, res_w, res_p, scanned)


# ---------------------------------------------------------------- files


def _parse_number(x, exact: bool):
    if exact:
        return Fraction(x)
    return float(Fraction(x)) if isinstance(x, str) else float(x)


def action_from_dict(data: dict) -> ActionPair:
    a = intlat.make_unimat(data["A"])
    b = intlat.make_unimat(data["B"])
    exact = bool(data.get("exact", False))
    d = a.dim
    alpha = [_parse_number(x, exact) for x in data.get("alpha", [0] * d)]
    beta = [_parse_number(x, exact) for x in data.get("beta", [0] * d)]
    return make_action(a, b, alpha, beta, exact)


def load_action(path) -> ActionPair:
    with open(path) as fh:
        return action_from_dict(json.load(fh))

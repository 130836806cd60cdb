"""Mode classification, resonance pairs and dual-orbit geometry.

A mode m is fixed by the dual product Ā^k B̄^l exactly when
(k log Ā + l log B̄) m = 0, because exp(Z) - Id = Z E with E invertible and
commuting with Z for nilpotent Z.  Both logs are exact rational matrices, so
resonance detection reduces to a parallelism test between two rational
vectors, followed by an explicit periodicity check.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import ceil, factorial, floor, gcd, isqrt
from typing import Iterable, Sequence

import numpy as np

from . import intlat
from .errors import NotStep2, ZeroMode
from .intlat import UniMat, dot, mat_vec, norm_sq

C1, C2, C3 = "C1", "C2", "C3"
PLUS, MINUS, UNKNOWN = "Plus", "Minus", "Unknown"
SIDE_M, SIDE_N, SIDE_FIXED = "M", "N", "Fixed"


@dataclass(frozen=True)
class ResonanceRecord:
    m: tuple[int, ...]
    cls: str
    pair: tuple[int, int] | None
    subclass: str | None  # "C2'" when Âm != 0, "C2''" otherwise
    s_of_m: int
    delta: float
    is_lowest_on_A_orbit: bool
    mn_side: str
    good_l_sign: str

    def csv_row(self) -> list:
        k, l = self.pair if self.pair else ("", "")
        return [" ".join(map(str, self.m)), self.cls, k, l, self.s_of_m,
                int(self.is_lowest_on_A_orbit), self.mn_side, self.good_l_sign]


CSV_HEADER = ["m", "class", "k", "l", "s", "lowest", "side", "good_sign"]


# ---------------------------------------------------------------- pairs


def normalize_pair(k: int, l: int) -> tuple[int, int]:
    """Primitive representative: (1,0), (0,1), or k > 0."""
    g = gcd(k, l)
    if g == 0:
        raise ValueError("zero pair")
    k, l = k // g, l // g
    if k < 0 or (k == 0 and l < 0):
        k, l = -k, -l
    return k, l


@lru_cache(maxsize=64)
def _scaled_logs(a: UniMat, b: UniMat) -> tuple[intlat.Matrix, intlat.Matrix]:
    """Integer multiples of log Ā and log B̄ sharing one scale factor."""
    den = 1
    for mat in (a.dual_log, b.dual_log):
        for row in mat:
            for x in row:
                q = Fraction(x).denominator
                den = den * q // gcd(den, q)
    xs = tuple(tuple(int(Fraction(v) * den) for v in r) for r in a.dual_log)
    ys = tuple(tuple(int(Fraction(v) * den) for v in r) for r in b.dual_log)
    return xs, ys


def pencil_pair(x: Sequence[int], y: Sequence[int]) -> tuple[int, int] | None:
    """Normalized primitive (k,l) with k x + l y = 0, if x and y are parallel."""
    if all(v == 0 for v in x):
        return (1, 0)
    if all(v == 0 for v in y):
        return (0, 1)
    i = next(j for j, v in enumerate(x) if v != 0)
    k, l = normalize_pair(y[i], -x[i])
    if all(k * xv + l * yv == 0 for xv, yv in zip(x, y)):
        return (k, l)
    return None


def is_periodic(a: UniMat, b: UniMat, m: Sequence[int], k: int, l: int) -> bool:
    return mat_vec(intlat.power_pair(a, b, k, l, dual=True), m) == tuple(m)


# ---------------------------------------------------------------- orbit geometry


@dataclass(frozen=True)
class OrbitGeometry:
    lowest: tuple[int, ...]
    shift: int  # Ā^shift m = lowest
    mn_side: str
    good_l_sign: str


def mn_side(a: UniMat, m: Sequence[int]) -> str:
    u = mat_vec(a.dualnil, m)
    if intlat.is_zero_vector(u):
        return SIDE_FIXED
    return SIDE_M if dot(m, u) >= 0 else SIDE_N


def step2_orbit_points(a: UniMat, m: Sequence[int], ks: Iterable[int]) -> list[tuple[int, ...]]:
    u = mat_vec(a.dualnil, m)
    if not intlat.is_zero_vector(mat_vec(a.dualnil, u)):
        raise NotStep2("orbit of m is not affine in k")
    return [tuple(mi + k * ui for mi, ui in zip(m, u)) for k in ks]


def lowest_shift(m: Sequence[int], u: Sequence[int]) -> int:
    """Smallest integer minimizer of |m + k u|^2 (u != 0)."""
    c = dot(m, u)
    a = norm_sq(u)
    kstar = Fraction(-c, a)
    lo = floor(kstar)
    g = lambda k: 2 * k * c + k * k * a  # noqa: E731
    return lo if g(lo) <= g(lo + 1) else lo + 1


def is_norm_minimal(a: UniMat, m: Sequence[int]) -> bool:
    """|m| <= |m + k Âm| for every integer k."""
    u = mat_vec(a.dualnil, m)
    if intlat.is_zero_vector(u):
        return True
    c = dot(m, u)
    uu = norm_sq(u)
    return -uu <= 2 * c <= uu


def is_lowest(a: UniMat, m: Sequence[int]) -> bool:
    """m is the canonical lowest point of its orbit: norm-minimal, ties going to the smaller shift."""
    u = mat_vec(a.dualnil, m)
    if intlat.is_zero_vector(u):
        return True
    c = dot(m, u)
    uu = norm_sq(u)
    return -uu <= 2 * c < uu


def _projected_inner(basis: Sequence[Sequence[int]], x: Sequence[int], y: Sequence[int]) -> Fraction:
    """<x, P y> where P projects onto the orthogonal complement of span(basis)."""
    vecs = intlat.rref([tuple(v) for v in basis if not intlat.is_zero_vector(v)])
    if not vecs:
        return Fraction(dot(x, y))
    gram = [[Fraction(dot(u, v)) for v in vecs] for u in vecs]
    rhs = [Fraction(dot(u, y)) for u in vecs]
    coeff = intlat.solve_rational(gram, rhs)
    proj_y = [Fraction(yi) - sum(Fraction(c) * v[i] for c, v in zip(coeff, vecs)) for i, yi in enumerate(y)]
    return sum(Fraction(xi) * pi for xi, pi in zip(x, proj_y))


def good_l_sign(a: UniMat, b: UniMat, m: Sequence[int]) -> str:
    """Sign of l along which |Ā^k B̄^l m| keeps a linear floor."""
    u = mat_vec(a.dualnil, m)
    v = mat_vec(b.dualnil, m)
    if intlat.is_zero_vector(u) or intlat.is_zero_vector(v):
        return UNKNOWN
    s = intlat.vector_step(b.dualnil, m)
    if s == 2:
        span = [u]
    else:
        span = []
        w = v
        for j in range(2, s):
            w = mat_vec(b.dualnil, w)
            span.append(w)
        w = tuple(m)
        for j in range(0, s - 1):
            span.append(mat_vec(a.dualnil, w))
            w = mat_vec(b.dualnil, w)
    val = _projected_inner(span, m, v)
    if val > 0:
        return PLUS
    if val < 0:
        return MINUS
    return UNKNOWN


def orbit_geometry(a: UniMat, b: UniMat, m: Sequence[int]) -> OrbitGeometry:
    m = tuple(int(x) for x in m)
    u = mat_vec(a.dualnil, m)
    if intlat.is_zero_vector(u):
        return OrbitGeometry(m, 0, SIDE_FIXED, good_l_sign(a, b, m))
    if not intlat.is_zero_vector(mat_vec(a.dualnil, u)):
        raise NotStep2("lowest point search needs an affine orbit")
    k0 = lowest_shift(m, u)
    low = tuple(mi + k0 * ui for mi, ui in zip(m, u))
    return OrbitGeometry(low, k0, mn_side(a, m), good_l_sign(a, b, m))


# ---------------------------------------------------------------- classification


def classify_mode(a: UniMat, b: UniMat, m: Sequence[int]) -> ResonanceRecord:
    m = tuple(int(x) for x in m)
    if intlat.is_zero_vector(m):
        raise ZeroMode("m = 0 has no class")
    u = mat_vec(a.dualnil, m)
    v = mat_vec(b.dualnil, m)
    s = intlat.vector_step(b.dualnil, m)
    delta = 0.99 / s
    side = mn_side(a, m)
    lowest = is_norm_minimal(a, m) if intlat.is_zero_vector(mat_vec(a.dualnil, u)) else False
    if intlat.is_zero_vector(u) and intlat.is_zero_vector(v):
        return ResonanceRecord(m, C1, None, None, s, delta, True, side, UNKNOWN)
    xs, ys = _scaled_logs(a, b)
    pair = pencil_pair(mat_vec(xs, m), mat_vec(ys, m))
    if pair is not None and is_periodic(a, b, m, *pair):
        sub = "C2'" if not intlat.is_zero_vector(u) else "C2''"
        return ResonanceRecord(m, C2, pair, sub, s, delta, lowest, side, UNKNOWN)
    return ResonanceRecord(m, C3, None, None, s, delta, lowest, side, good_l_sign(a, b, m))


# ---------------------------------------------------------------- bulk scans


@dataclass(frozen=True)
class ActiveReduction:
    """Coordinates on which the class of a mode depends.

    When the common kernel of Â and B̂ is a coordinate subspace, the class of
    m only depends on the complementary coordinates; scans then run over the
    projected ball, which is the exact image of the full ball.
    """

    dim: int
    active: tuple[int, ...]
    exact_projection: bool


@lru_cache(maxsize=64)
def active_reduction(a: UniMat, b: UniMat) -> ActiveReduction:
    d = a.dim
    idle = [i for i in range(d)
            if all(a.dualnil[r][i] == 0 and b.dualnil[r][i] == 0 for r in range(d))]
    kernel = intlat.kernel_q([r for r in a.dualnil + b.dualnil if any(r)], d) if any(
        any(r) for r in a.dualnil + b.dualnil) else intlat.kernel_q([], d)
    exact = kernel.dim == len(idle)
    active = tuple(i for i in range(d) if i not in idle) if exact else tuple(range(d))
    return ActiveReduction(d, active, exact)


def ball_points(dim: int, radius: float, chunk: int | None = None) -> np.ndarray:
    """All integer vectors of Euclidean norm <= radius, as an int64 array."""
    r2 = int(floor(radius * radius + 1e-9))
    rmax = isqrt(r2)
    pts = np.arange(-rmax, rmax + 1, dtype=np.int64)[:, None]
    sq = pts[:, 0] ** 2
    for _ in range(1, dim):
        ext = np.arange(-rmax, rmax + 1, dtype=np.int64)
        n = pts.shape[0]
        new_sq = sq[:, None] + ext[None, :] ** 2
        keep = new_sq <= r2
        rows, cols = np.nonzero(keep)
        pts = np.concatenate([pts[rows], ext[cols][:, None]], axis=1)
        sq = new_sq[rows, cols]
        del n
    return pts


def bulk_classify(a: UniMat, b: UniMat, ms: np.ndarray):
    """Vectorized classification.

    Returns ``(code, k, l)`` arrays with code 0 for C1, 1 for C2 and 2 for C3
    and the normalized pair for C2 modes (zeros elsewhere).  The periodicity
    check is the exact pencil identity (k log Ā + l log B̄) m = 0 in integer
    arithmetic, which is equivalent to Ā^k B̄^l m = m.
    """
    xs, ys = _scaled_logs(a, b)
    X = np.array(xs, dtype=np.int64)
    Y = np.array(ys, dtype=np.int64)
    x = ms @ X.T
    y = ms @ Y.T
    xzero = ~x.any(axis=1)
    yzero = ~y.any(axis=1)
    n = ms.shape[0]
    code = np.full(n, 2, dtype=np.int8)
    kk = np.zeros(n, dtype=np.int64)
    ll = np.zeros(n, dtype=np.int64)
    c1 = xzero & yzero
    code[c1] = 0
    only_y = xzero & ~yzero
    kk[only_y], ll[only_y] = 1, 0
    only_x = yzero & ~xzero
    kk[only_x], ll[only_x] = 0, 1
    both = ~xzero & ~yzero
    idx = np.argmax(x != 0, axis=1)
    rows = np.arange(n)
    xi = x[rows, idx]
    yi = y[rows, idx]
    g = np.gcd(xi, yi)
    g[g == 0] = 1
    kb = yi // g
    lb = -xi // g
    flip = (kb < 0) | ((kb == 0) & (lb < 0))
    kb = np.where(flip, -kb, kb)
    lb = np.where(flip, -lb, lb)
    kk[both] = kb[both]
    ll[both] = lb[both]
    cand = ~c1
    ok = ~((kk[:, None] * x + ll[:, None] * y).any(axis=1))
    code[cand & ok] = 1
    kk[code != 1] = 0
    ll[code != 1] = 0
    return code, kk, ll


def scan_ball(a: UniMat, b: UniMat, radius: float, max_points: int = 20_000_000):
    """Classify every mode of norm <= radius (on the active coordinates).

    Returns ``(points, code, k, l, reduction)`` where ``points`` are the
    active-coordinate vectors; a full mode is obtained by padding zeros.
    """
    red = active_reduction(a, b)
    dim = len(red.active)
    est = (np.pi ** (dim / 2) / _gamma_half(dim + 2)) * (radius + 1) ** dim
    if est > max_points:
        raise MemoryError(f"ball of {est:.2e} points exceeds the scan budget")
    pts = ball_points(dim, radius)
    pts = pts[np.any(pts != 0, axis=1)]
    full = np.zeros((pts.shape[0], a.dim), dtype=np.int64)
    full[:, list(red.active)] = pts
    code, kk, ll = bulk_classify(a, b, full)
    return full, code, kk, ll, red


def _gamma_half(n: int) -> float:
    """Gamma(n/2)."""
    from math import gamma
    return gamma(n / 2)


def resonant_records_bulk(a: UniMat, b: UniMat, modes: np.ndarray) -> list[ResonanceRecord]:
    """ResonanceRecords for the resonant rows of ``modes``, with the per-mode fields computed in bulk."""
    modes = np.asarray(modes, dtype=np.int64).reshape(-1, a.dim)
    code, kk, ll = bulk_classify(a, b, modes)
    sel = code == 1
    ms, kk, ll = modes[sel], kk[sel], ll[sel]
    an = np.array(a.dualnil, dtype=np.int64)
    bn = np.array(b.dualnil, dtype=np.int64)
    u = ms @ an.T
    uzero = ~u.any(axis=1)
    step_ok = ~(u @ an.T).any(axis=1)
    c = (ms * u).sum(axis=1)
    uu = (u * u).sum(axis=1)
    lowest = np.where(uzero, True, step_ok & (-uu < 2 * c) & (2 * c <= uu))
    svals = np.zeros(ms.shape[0], dtype=np.int64)
    w = ms
    for j in range(1, a.dim + 2):
        w = w @ bn.T
        hit = (svals == 0) & ~w.any(axis=1)
        svals[hit] = j
    out = []
    for m, k, l, uz, lo, sv, cv in zip(ms.tolist(), kk.tolist(), ll.tolist(), uzero.tolist(), lowest.tolist(),
                                       svals.tolist(), c.tolist()):
        side = SIDE_FIXED if uz else (SIDE_M if cv >= 0 else SIDE_N)
        out.append(ResonanceRecord(tuple(m), C2, (k, l), "C2''" if uz else "C2'", sv, 0.99 / sv, bool(lo), side,
                                   UNKNOWN))
    return out


# ---------------------------------------------------------------- pair-based enumeration


def _shortest_nonzero(basis: list[tuple[int, ...]], exclude: intlat.RatSubspace | None = None):
    """Shortest lattice vector not in ``exclude`` by bounded enumeration."""
    if not basis:
        return None
    if len(basis) == 1 and exclude is None:
        return basis[0]
    n = len(basis)
    bm = np.array(basis, dtype=float)
    gram = bm @ bm.T
    cand = [v for v in basis if exclude is None or not exclude.contains(v)]
    best = min(cand, key=norm_sq) if cand else None
    bound = norm_sq(best) if best is not None else None
    if bound is None:
        return None
    ginv = np.linalg.inv(gram)
    box = [int(ceil(np.sqrt(bound * ginv[i, i]) + 1e-9)) for i in range(n)]
    ranges = [range(-bx, bx + 1) for bx in box]
    import itertools
    for coeffs in itertools.product(*ranges):
        if not any(coeffs):
            continue
        v = tuple(sum(c * basis[i][j] for i, c in enumerate(coeffs)) for j in range(len(basis[0])))
        nv = norm_sq(v)
        if nv < bound and (exclude is None or not exclude.contains(v)):
            best, bound = v, nv
    return best


@dataclass(frozen=True)
class PairRecord:
    pair: tuple[int, int]
    shortest: tuple[int, ...]
    norm: float

    @property
    def ratio(self) -> float:
        k, l = self.pair
        return self.norm / (abs(k) + abs(l))


def pair_resonance_basis(a: UniMat, b: UniMat, k: int, l: int) -> list[tuple[int, ...]]:
    """Saturated Z-basis of {m : Ā^k B̄^l m = m}."""
    xs, ys = _scaled_logs(a, b)
    z = [tuple(k * xv + l * yv for xv, yv in zip(rx, ry)) for rx, ry in zip(xs, ys)]
    z = [r for r in z if any(r)]
    return intlat.integer_kernel(z, a.dim) if z else [tuple(int(i == j) for j in range(a.dim)) for i in range(a.dim)]


@lru_cache(maxsize=64)
def _c1_space(a: UniMat, b: UniMat) -> intlat.RatSubspace:
    rows = [r for r in a.dualnil + b.dualnil if any(r)]
    return intlat.kernel_q(rows, a.dim) if rows else intlat.kernel_q([], a.dim)


def shortest_resonance(a: UniMat, b: UniMat, k: int, l: int) -> tuple[int, ...] | None:
    """Shortest m with Ā^k B̄^l m = m that is not fixed by both generators."""
    red = active_reduction(a, b)
    if not red.exact_projection:
        basis = pair_resonance_basis(a, b, k, l)
        c1 = _c1_space(a, b)
        if len(basis) == c1.dim:
            return None
        return _shortest_nonzero(basis, exclude=c1)
    # the periodicity condition only reads the active coordinates, so the
    # resonances with zero idle part form the kernel of the active block
    xs, ys = _scaled_logs(a, b)
    act = red.active
    z = [tuple(k * rx[i] + l * ry[i] for i in act) for rx, ry in zip(xs, ys)]
    z = [r for r in z if any(r)]
    lat = intlat.integer_kernel(z, len(act)) if z else [
        tuple(int(i == j) for j in range(len(act))) for i in range(len(act))]
    short = _shortest_nonzero(lat)
    if short is None:
        return None
    full = [0] * a.dim
    for i, c in zip(act, short):
        full[i] = c
    return tuple(full)


def pair_bound_factor(a: UniMat, b: UniMat) -> int:
    """Λ with |k| + |l| <= Λ |m| for every resonance m with pair (k,l).

    For a resonance, (k,l) is proportional to (y_i, -x_i) for every row i
    with (x_i, y_i) != 0, where x = X m and y = Y m are the scaled logs.
    Cauchy-Schwarz bounds |x_i| + |y_i| by (|X_i| + |Y_i|) |m|.
    """
    xs, ys = _scaled_logs(a, b)
    best = 0.0
    for rx, ry in zip(xs, ys):
        best = max(best, float(np.sqrt(norm_sq(rx))) + float(np.sqrt(norm_sq(ry))))
    return int(ceil(best - 1e-12))


def primitive_pairs(bound: int):
    """Normalized primitive pairs with |k| + |l| <= bound."""
    yield (1, 0)
    yield (0, 1)
    for k in range(1, bound + 1):
        for l in range(-(bound - k), bound - k + 1):
            if l != 0 and gcd(k, abs(l)) == 1:
                yield (k, l)


def _primitive_pair_array(bound: int) -> np.ndarray:
    ks, ls = [], []
    for k in range(1, bound + 1):
        l = np.arange(-(bound - k), bound - k + 1, dtype=np.int64)
        l = l[(l != 0) & (np.gcd(k, np.abs(l)) == 1)]
        ks.append(np.full(l.shape, k, dtype=np.int64))
        ls.append(l)
    head = np.array([[1, 0], [0, 1]], dtype=np.int64)
    if not ks:
        return head
    body = np.stack([np.concatenate(ks), np.concatenate(ls)], axis=1)
    return np.concatenate([head, body])


def _det(m: np.ndarray) -> np.ndarray:
    """Exact int64 determinants of a batch of shape (P, k, k) by cofactors."""
    k = m.shape[1]
    if k == 1:
        return m[:, 0, 0]
    out = np.zeros(m.shape[0], dtype=np.int64)
    for j in range(k):
        minor = np.delete(m[:, 1:, :], j, axis=2)
        term = m[:, 0, j] * _det(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def _batched_kernel_lines(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Generators of one-dimensional kernels for a batch of integer matrices.

    ``z`` has shape (P, r, n).  Returns ``(vec, status)`` with status 1 when
    the kernel is the line spanned by the primitive vector ``vec``, 0 when
    the kernel is trivial, and -1 when the rank is below n-1 (caller must
    fall back to exact arithmetic).
    """
    p, r, n = z.shape
    vec = np.zeros((p, n), dtype=np.int64)
    status = np.full(p, -1, dtype=np.int8)
    pending = np.arange(p)
    for rows in combinations(range(r), n - 1):
        if pending.size == 0:
            break
        sub = z[pending][:, list(rows), :]
        cand = np.stack([(-1) ** j * _det(np.delete(sub, j, axis=2)) for j in range(n)], axis=1)
        nonzero = cand.any(axis=1)
        hit = pending[nonzero]
        cand = cand[nonzero]
        g = np.gcd.reduce(np.abs(cand), axis=1)
        cand = cand // g[:, None]
        in_kernel = ~np.einsum("prn,pn->pr", z[hit], cand).any(axis=1)
        vec[hit] = cand
        status[hit] = np.where(in_kernel, 1, 0)
        pending = pending[~nonzero]
    return vec, status


def resonance_pair_records(a: UniMat, b: UniMat, radius: float, pair_bound: int | None = None) -> list[PairRecord]:
    """All resonance pairs having a resonance of norm <= radius.

    Pairs are enumerated up to the a priori bound |k|+|l| <= Λ·radius, so the
    result is exact for the ball.
    """
    bound = pair_bound if pair_bound is not None else int(floor(pair_bound_factor(a, b) * radius + 1e-9))
    bound = max(bound, 1)
    red = active_reduction(a, b)
    n = len(red.active)
    r2 = radius * radius
    out: list[PairRecord] = []

    def exact(k: int, l: int) -> None:
        m = shortest_resonance(a, b, k, l)
        if m is not None and norm_sq(m) <= r2 + 1e-9:
            out.append(PairRecord((k, l), m, float(np.sqrt(norm_sq(m)))))

    if not red.exact_projection or n < 2:
        for k, l in primitive_pairs(bound):
            exact(k, l)
        return out
    xs, ys = _scaled_logs(a, b)
    rows = [i for i in range(a.dim) if any(xs[i][j] or ys[i][j] for j in red.active)]
    if not rows:
        for k, l in primitive_pairs(bound):
            exact(k, l)
        return out
    X = np.array([[xs[i][j] for j in red.active] for i in rows], dtype=np.int64)
    Y = np.array([[ys[i][j] for j in red.active] for i in rows], dtype=np.int64)
    entry = bound * int(max(np.abs(X).max(), np.abs(Y).max()))
    if float(entry) ** (n - 1) * factorial(n - 1) * n * entry > 2.0 ** 62:
        for k, l in primitive_pairs(bound):
            exact(k, l)
        return out
    pairs = _primitive_pair_array(bound)
    for start in range(0, pairs.shape[0], 200_000):
        chunk = pairs[start:start + 200_000]
        z = chunk[:, 0, None, None] * X[None] + chunk[:, 1, None, None] * Y[None]
        vec, status = _batched_kernel_lines(z)
        for idx in np.nonzero(status == -1)[0]:
            exact(int(chunk[idx, 0]), int(chunk[idx, 1]))
        sq = (vec * vec).sum(axis=1)
        good = np.nonzero((status == 1) & (sq <= r2 + 1e-9))[0]
        for idx in good:
            m = [0] * a.dim
            for c, v in zip(red.active, vec[idx].tolist()):
                m[c] = v
            out.append(PairRecord((int(chunk[idx, 0]), int(chunk[idx, 1])), tuple(m), float(np.sqrt(sq[idx]))))
    out.sort(key=lambda r: (abs(r.pair[0]) + abs(r.pair[1]), r.pair))
    return out


@dataclass(frozen=True)
class PairSet:
    pairs: tuple[tuple[int, int], ...]
    constant: float  # best C with C (|k|+|l|) <= |m|
    records: tuple[PairRecord, ...]


def pair_size_constant(records: Sequence[PairRecord]) -> float:
    return min((r.ratio for r in records), default=float("inf"))


def resonance_pairs_up_to(a: UniMat, b: UniMat, n: float, pair_bound: int | None = None) -> PairSet:
    recs = resonance_pair_records(a, b, n, pair_bound)
    pairs = {(1, 0), (0, 1)} | {r.pair for r in recs}
    ordered = tuple(sorted(pairs, key=lambda p: (abs(p[0]) + abs(p[1]), p)))
    return PairSet(ordered, pair_size_constant(recs), tuple(recs))


# ---------------------------------------------------------------- export


def records_to_csv(records: Iterable[ResonanceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=";", lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()

"""Exact integer and rational linear algebra.

Matrices are tuples of row tuples holding Python ints or ``Fraction``s, so
every classification decision is free of rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import gcd
from typing import Iterable, Sequence

from .errors import NonCommuting, NotUnimodular, NotUnipotent

Matrix = tuple[tuple, ...]
Vector = tuple


# ---------------------------------------------------------------- basics


def as_matrix(rows: Iterable[Iterable]) -> Matrix:
    return tuple(tuple(r) for r in rows)


def identity(d: int) -> Matrix:
    return tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))


def zeros(rows: int, cols: int) -> Matrix:
    return tuple((0,) * cols for _ in range(rows))


def elementary(d: int, i: int, j: int) -> Matrix:
    """E_ij with 1-based indices (row i, column j)."""
    return tuple(tuple(1 if (r == i - 1 and c == j - 1) else 0 for c in range(d)) for r in range(d))


def transpose(m: Matrix) -> Matrix:
    return tuple(zip(*m)) if m else m


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_scale(c, a: Matrix) -> Matrix:
    return tuple(tuple(c * x for x in r) for r in a)


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    bt = transpose(b)
    return tuple(tuple(sum(x * y for x, y in zip(r, col)) for col in bt) for r in a)


def mat_vec(a: Matrix, v: Sequence) -> Vector:
    return tuple(sum(x * y for x, y in zip(r, v)) for r in a)


def dot(u: Sequence, v: Sequence):
    return sum(x * y for x, y in zip(u, v))


def norm_sq(v: Sequence):
    return sum(x * x for x in v)


def is_zero_matrix(a: Matrix) -> bool:
    return all(x == 0 for r in a for x in r)


def is_zero_vector(v: Sequence) -> bool:
    return all(x == 0 for x in v)


def mat_pow(a: Matrix, n: int) -> Matrix:
    """Non-negative power by binary exponentiation."""
    if n < 0:
        raise ValueError("use unipotent_power for negative exponents")
    result = identity(len(a))
    base = a
    while n:
        if n & 1:
            result = mat_mul(result, base)
        base = mat_mul(base, base)
        n >>= 1
    return result


def determinant(a: Matrix):
    """Exact determinant by fraction-free Bareiss elimination."""
    n = len(a)
    if n == 0:
        return 1
    m = [list(r) for r in a]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = m[i][j] * m[k][k] - m[i][k] * m[k][j]
                m[i][j] = num // prev if isinstance(num, int) and isinstance(prev, int) else num / prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def rational_inverse(a: Matrix) -> Matrix:
    """Exact inverse over the rationals by Gauss-Jordan elimination."""
    n = len(a)
    aug = [[Fraction(x) for x in a[i]] + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [x / p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return tuple(tuple(_demote(x) for x in row[n:]) for row in aug)


def _demote(x):
    """Return an int when a Fraction is integral."""
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x)
    return x


def demote_matrix(a: Matrix) -> Matrix:
    return tuple(tuple(_demote(x) for x in r) for r in a)


def nilpotency_index(n: Matrix) -> int:
    """Smallest s >= 1 with n^s = 0; raises if none up to the dimension."""
    d = len(n)
    p = identity(d)
    for s in range(1, d + 1):
        p = mat_mul(p, n)
        if is_zero_matrix(p):
            return s
    raise NotUnipotent("matrix minus identity is not nilpotent")


def vector_step(n: Matrix, v: Sequence) -> int:
    """Smallest s >= 1 with n^s v = 0 (1 when n v = 0)."""
    d = len(n)
    w = tuple(v)
    for s in range(1, d + 2):
        w = mat_vec(n, w)
        if is_zero_vector(w):
            return s
    raise NotUnipotent("vector is not annihilated by a power of the nilpotent part")


def nilpotent_log(n: Matrix) -> Matrix:
    """log(Id + n) for nilpotent n as an exact rational matrix."""
    d = len(n)
    acc = zeros(d, d)
    p = identity(d)
    for j in range(1, d + 1):
        p = mat_mul(p, n)
        if is_zero_matrix(p):
            break
        acc = mat_add(acc, mat_scale(Fraction((-1) ** (j + 1), j), p))
    return demote_matrix(acc)


# ---------------------------------------------------------------- unipotent matrices


@dataclass(frozen=True)
class UniMat:
    """Unipotent integer matrix with its nilpotent part and dual data."""

    dim: int
    entries: Matrix
    step: int
    nilpart: Matrix
    dual: Matrix
    dualnil: Matrix
    inverse: Matrix = field(repr=False)

    @cached_property
    def dual_log(self) -> Matrix:
        """log of the dual matrix, used for exact periodicity tests."""
        return nilpotent_log(self.dualnil)

    @cached_property
    def dual_inverse(self) -> Matrix:
        return transpose(self.entries)

    def power(self, k: int) -> Matrix:
        return mat_pow(self.entries, k) if k >= 0 else mat_pow(self.inverse, -k)

    def dual_power(self, k: int) -> Matrix:
        return mat_pow(self.dual, k) if k >= 0 else mat_pow(self.dual_inverse, -k)

    def to_json(self) -> list:
        return [list(r) for r in self.entries]


def unipotent_inverse(nil: Matrix, step: int) -> Matrix:
    """(Id + nil)^{-1} = sum_{j<step} (-nil)^j."""
    d = len(nil)
    acc = identity(d)
    p = identity(d)
    neg = mat_scale(-1, nil)
    for _ in range(1, step):
        p = mat_mul(p, neg)
        acc = mat_add(acc, p)
    return acc


def make_unimat(entries: Iterable[Iterable[int]]) -> UniMat:
    a = as_matrix(entries)
    d = len(a)
    if d == 0 or any(len(r) != d for r in a):
        raise ValueError("matrix must be square and non-empty")
    if not all(isinstance(x, int) for r in a for x in r):
        if all(float(x).is_integer() for r in a for x in r):
            a = tuple(tuple(int(x) for x in r) for r in a)
        else:
            raise ValueError("matrix entries must be integers")
    det = determinant(a)
    if det not in (1, -1):
        raise NotUnimodular(f"determinant {det} is not a unit")
    nil = mat_sub(a, identity(d))
    step = 1 if is_zero_matrix(nil) else nilpotency_index(nil)
    inv = unipotent_inverse(nil, step)
    dual = transpose(inv)
    dualnil = mat_sub(dual, identity(d))
    return UniMat(dim=d, entries=a, step=step, nilpart=nil, dual=dual, dualnil=dualnil, inverse=inv)


def check_commute(a: UniMat, b: UniMat) -> None:
    if a.dim != b.dim:
        raise NonCommuting("dimension mismatch")
    if mat_mul(a.entries, b.entries) != mat_mul(b.entries, a.entries):
        raise NonCommuting("A B != B A")


def power_pair(a: UniMat, b: UniMat, k: int, l: int, dual: bool = False) -> Matrix:
    """A^k B^l (or the dual product) with exact negative powers."""
    check_commute(a, b)
    if dual:
        return mat_mul(a.dual_power(k), b.dual_power(l))
    return mat_mul(a.power(k), b.power(l))


# ---------------------------------------------------------------- lattices


def _to_integer_rows(m: Sequence[Sequence]) -> list[list[int]]:
    rows = []
    for r in m:
        fr = [Fraction(x) for x in r]
        den = 1
        for x in fr:
            den = den * x.denominator // gcd(den, x.denominator)
        rows.append([int(x * den) for x in fr])
    return rows


def column_hnf(m: Sequence[Sequence[int]], ncols: int | None = None):
    """Column-style echelon form over the integers.

    Returns ``(H, U, rank)`` with ``M U = H``, ``U`` unimodular and the first
    ``rank`` columns of ``H`` in echelon form; remaining columns are zero.
    """
    rows = [list(r) for r in m]
    n = ncols if ncols is not None else (len(rows[0]) if rows else 0)
    u = [[int(i == j) for j in range(n)] for i in range(n)]

    def colop(dst: int, src: int, q: int) -> None:
        for r in rows:
            r[dst] -= q * r[src]
        for r in u:
            r[dst] -= q * r[src]

    def swap(i: int, j: int) -> None:
        for r in rows:
            r[i], r[j] = r[j], r[i]
        for r in u:
            r[i], r[j] = r[j], r[i]

    def negate(i: int) -> None:
        for r in rows:
            r[i] = -r[i]
        for r in u:
            r[i] = -r[i]

    pivot = 0
    for row in rows:
        if pivot >= n:
            break
        while True:
            nz = [j for j in range(pivot, n) if row[j] != 0]
            if not nz:
                break
            j0 = min(nz, key=lambda j: abs(row[j]))
            if j0 != pivot:
                swap(pivot, j0)
            done = True
            for j in range(pivot + 1, n):
                if row[j] != 0:
                    colop(j, pivot, row[j] // row[pivot])
                    if row[j] != 0:
                        done = False
            if done:
                break
        if row[pivot] != 0:
            if row[pivot] < 0:
                negate(pivot)
            pivot += 1
    return [tuple(r) for r in rows], [tuple(r) for r in u], pivot


def integer_kernel(m: Sequence[Sequence], ncols: int) -> list[Vector]:
    """Saturated Z-basis of {x in Z^n : M x = 0} for a rational matrix M."""
    if not m:
        return [tuple(int(i == j) for j in range(ncols)) for i in range(ncols)]
    rows = _to_integer_rows(m)
    _, u, rank = column_hnf(rows, ncols)
    basis = [tuple(u[i][j] for i in range(ncols)) for j in range(rank, ncols)]
    return [_primitive(v) for v in basis]


def _primitive(v: Sequence[int]) -> Vector:
    g = 0
    for x in v:
        g = gcd(g, int(x))
    if g == 0:
        return tuple(v)
    w = tuple(int(x) // g for x in v)
    first = next(x for x in w if x != 0)
    return w if first > 0 else tuple(-x for x in w)


def rref(m: Sequence[Sequence]) -> list[Vector]:
    """Nonzero rows of the reduced row echelon form, as Fractions."""
    a = [[Fraction(x) for x in r] for r in m]
    if not a:
        return []
    n = len(a[0])
    out = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        p = a[r][c]
        a[r] = [x / p for x in a[r]]
        for i in range(len(a)):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        r += 1
        if r == len(a):
            break
    for row in a[:r]:
        out.append(tuple(row))
    return out


def rank(m: Sequence[Sequence]) -> int:
    return len(rref(m))


@dataclass(frozen=True)
class RatSubspace:
    """Rational subspace with a row-reduced basis and a saturated Z-basis."""

    ambient_dim: int
    basis: tuple[Vector, ...]
    saturated_zbasis: tuple[Vector, ...]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def contains(self, v: Sequence) -> bool:
        if self.dim == 0:
            return is_zero_vector(v)
        return rank(list(self.basis) + [tuple(v)]) == self.dim

    def annihilator(self) -> list[Vector]:
        """Integer rows whose common kernel is this subspace."""
        if self.dim == 0:
            return [tuple(int(i == j) for j in range(self.ambient_dim)) for i in range(self.ambient_dim)]
        return integer_kernel(self.basis, self.ambient_dim)


def subspace_from_zbasis(vectors: Sequence[Vector], ambient_dim: int) -> RatSubspace:
    return RatSubspace(ambient_dim, tuple(rref(vectors)), tuple(vectors))


def kernel_q(m: Sequence[Sequence], ncols: int | None = None) -> RatSubspace:
    """Right kernel over Q with a saturated Z-basis."""
    n = ncols if ncols is not None else len(m[0])
    zb = integer_kernel(m, n)
    return subspace_from_zbasis(zb, n)


def span_q(vectors: Sequence[Sequence], ambient_dim: int) -> RatSubspace:
    vecs = [tuple(v) for v in vectors if not is_zero_vector(v)]
    if not vecs:
        return RatSubspace(ambient_dim, (), ())
    ann = integer_kernel(vecs, ambient_dim)
    return kernel_q(ann, ambient_dim) if ann else kernel_q([], ambient_dim)


def intersect(spaces: Sequence[RatSubspace]) -> RatSubspace:
    d = spaces[0].ambient_dim
    rows = []
    for s in spaces:
        if s.dim < d:
            rows.extend(s.annihilator())
    return kernel_q(rows, d) if rows else kernel_q([], d)


def solve_rational(m: Sequence[Sequence], rhs: Sequence) -> Vector | None:
    """One exact solution x of M x = rhs, or None when inconsistent."""
    n = len(m[0])
    aug = [list(r) + [b] for r, b in zip(m, rhs)]
    red = rref(aug)
    x = [Fraction(0)] * n
    for row in red:
        lead = next(i for i, v in enumerate(row) if v != 0)
        if lead == n:
            return None
        x[lead] = row[n]
    return tuple(_demote(v) for v in x)


def complete_basis(sub: Sequence[Vector], full: Sequence[Vector]) -> list[Vector]:
    """Integer vectors extending a saturated sublattice basis to a basis of ``full``.

    ``sub`` spans a saturated sublattice of the lattice with basis ``full``.
    """
    s = len(sub)
    f = len(full)
    if s == f:
        return []
    full_t = transpose(as_matrix(full))
    coords = []
    for v in sub:
        c = solve_rational(full_t, v)
        if c is None or not all(isinstance(x, int) for x in c):
            raise ValueError("sublattice is not contained in the lattice")
        coords.append(c)
    if not coords:
        return [tuple(v) for v in full]
    _, w, rk = column_hnf(coords, f)
    winv = rational_inverse(as_matrix(w))
    extra = []
    for i in range(rk, f):
        row = winv[i]
        extra.append(tuple(sum(int(row[j]) * full[j][c] for j in range(f)) for c in range(len(full[0]))))
    return extra


@dataclass(frozen=True)
class Flag:
    """Common invariant flag and an adapted integer basis."""

    spaces: tuple[RatSubspace, ...]
    basis_matrix: Matrix  # U: integer, unimodular; U A U^{-1} upper triangular
    basis_inverse: Matrix  # U^{-1}; columns are the adapted basis vectors


def common_flag(a: UniMat, b: UniMat) -> Flag:
    """Flag 0 < V_1 < ... < V_t = Q^d with both nilparts mapping V_i into V_{i-1}."""
    check_commute(a, b)
    d = a.dim
    spaces: list[RatSubspace] = []
    prev_ann = [tuple(int(i == j) for j in range(d)) for i in range(d)]
    ordered: list[Vector] = []
    while True:
        rows = [tuple(mat_vec(transpose(a.nilpart), q)) for q in prev_ann]
        rows += [tuple(mat_vec(transpose(b.nilpart), q)) for q in prev_ann]
        rows = [r for r in rows if not is_zero_vector(r)]
        space = kernel_q(rows, d) if rows else kernel_q([], d)
        if spaces and space.dim <= spaces[-1].dim:
            raise NonCommuting("flag construction stalled")
        ordered += complete_basis(ordered, space.saturated_zbasis) if ordered else list(space.saturated_zbasis)
        spaces.append(space)
        if space.dim == d:
            break
        prev_ann = space.annihilator()
    p = transpose(as_matrix(ordered))
    u = rational_inverse(p)
    if not all(isinstance(x, int) for r in u for x in r):
        raise ValueError("adapted basis is not unimodular")
    return Flag(tuple(spaces), u, p)


def is_upper_unitriangular(m: Matrix) -> bool:
    n = len(m)
    return all(m[i][j] == (1 if i == j else 0) for i in range(n) for j in range(i + 1) if j <= i)


def matrix_to_json(m: Matrix) -> list:
    return [[int(x) if isinstance(x, int) else str(x) for x in r] for r in m]


def solve_integer(m: Sequence[Sequence[int]], rhs: Sequence[int]) -> Vector | None:
    """One integer solution x of M x = rhs, or None when none exists."""
    rows = [list(map(int, r)) for r in m]
    n = len(rows[0]) if rows else 0
    h, u, rk = column_hnf(rows, n)
    y = [0] * n
    col = 0
    for i, row in enumerate(h):
        acc = int(rhs[i]) - sum(row[j] * y[j] for j in range(col))
        if col < rk and row[col] != 0:
            if acc % row[col]:
                return None
            y[col] = acc // row[col]
            col += 1
        elif acc != 0:
            return None
    return tuple(sum(u[i][j] * y[j] for j in range(n)) for i in range(n))


def row_hnf(vectors: Sequence[Sequence[int]]) -> list[Vector]:
    """Reduced row Hermite normal form of the lattice spanned by integer rows."""
    a = [list(map(int, v)) for v in vectors if not is_zero_vector(v)]
    if not a:
        return []
    n = len(a[0])
    r = 0
    for c in range(n):
        while True:
            nz = [i for i in range(r, len(a)) if a[i][c] != 0]
            if not nz:
                break
            p = min(nz, key=lambda i: abs(a[i][c]))
            a[r], a[p] = a[p], a[r]
            done = True
            for i in range(r + 1, len(a)):
                if a[i][c]:
                    q = a[i][c] // a[r][c]
                    a[i] = [x - q * y for x, y in zip(a[i], a[r])]
                    if a[i][c]:
                        done = False
            if done:
                break
        if r < len(a) and a[r][c] != 0:
            if a[r][c] < 0:
                a[r] = [-x for x in a[r]]
            for i in range(r):
                q = a[i][c] // a[r][c]
                a[i] = [x - q * y for x, y in zip(a[i], a[r])]
            r += 1
            if r == len(a):
                break
    return [tuple(v) for v in a[:r]]

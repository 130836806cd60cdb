"""Truncated lattice Fourier fields, spectral operators and grid transforms.

Conventions: e(m, x) = exp(2πi <m, x>) and f(x) = Σ_m f_m e(m, x).  For an
affine map x ↦ P x + t with integer P, (f ∘ (P·+t))_m = f_n e(n, t) where
Pᵀ n = m, so composition is an exact reindexing of the stored modes.

Coefficients are stored with a trailing component axis in every case; a
scalar field has one component and ``rank == 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from . import intlat
from .errors import AliasRisk, ConditioningLoss, NoContraction

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------- fields


def _norms(modes: np.ndarray) -> np.ndarray:
    return np.sqrt((modes.astype(float) ** 2).sum(axis=1))


@dataclass(frozen=True, eq=False)
class FourierField:
    dim: int
    rank: int  # 0 for scalar fields, otherwise the number of components
    trunc_N: float
    modes: np.ndarray = field(repr=False)  # (K, dim) int64, sorted, unique
    coeffs: np.ndarray = field(repr=False)  # (K, ncomp) complex128
    is_real: bool = True
    leakage: float = 0.0  # sup of coefficients dropped by the last operation

    @property
    def ncomp(self) -> int:
        return max(self.rank, 1)

    @property
    def average(self) -> np.ndarray:
        v = self.get(np.zeros((1, self.dim), dtype=np.int64))[0]
        return v if self.rank else v[:1]

    def get(self, ms: np.ndarray) -> np.ndarray:
        """Coefficients at the rows of ``ms`` (zero where not stored)."""
        ms = np.asarray(ms, dtype=np.int64).reshape(-1, self.dim)
        out = np.zeros((ms.shape[0], self.ncomp), dtype=complex)
        if self.modes.shape[0] == 0 or ms.shape[0] == 0:
            return out
        base = _key_base(max(self.trunc_N, float(np.abs(ms).max(initial=0))))
        keys = _encode(self.modes, base)
        q = _encode(ms, base)
        pos = np.searchsorted(keys, q)
        pos = np.clip(pos, 0, keys.shape[0] - 1)
        hit = keys[pos] == q
        out[hit] = self.coeffs[pos[hit]]
        return out

    def coeff(self, m: Sequence[int]):
        v = self.get(np.array([m]))[0]
        return v if self.rank else v[0]

    def component(self, i: int) -> "FourierField":
        return FourierField(self.dim, 0, self.trunc_N, self.modes, self.coeffs[:, i:i + 1].copy(),
                            self.is_real, self.leakage)

    def to_json(self) -> dict:
        return {"dim": self.dim, "N": self.trunc_N, "rank": self.rank, "is_real": self.is_real,
                "modes": self.modes.tolist(), "re": self.coeffs.real.tolist(), "im": self.coeffs.imag.tolist()}


def _key_base(radius: float) -> int:
    return 2 * int(math.ceil(radius)) + 1


def _encode(modes: np.ndarray, base: int) -> np.ndarray:
    off = base // 2
    key = np.zeros(modes.shape[0], dtype=np.int64)
    for i in range(modes.shape[1] - 1, -1, -1):
        key = key * base + (modes[:, i] + off)
    return key


def make_field(dim: int, modes, coeffs, trunc_N: float, rank: int = 0, is_real: bool = True) -> FourierField:
    """Normalize (sort, merge duplicates, drop modes beyond trunc_N)."""
    modes = np.asarray(modes, dtype=np.int64).reshape(-1, dim)
    ncomp = max(rank, 1)
    coeffs = np.asarray(coeffs, dtype=complex).reshape(modes.shape[0], ncomp)
    inside = _norms(modes) <= trunc_N + 1e-9
    leak = float(np.abs(coeffs[~inside]).max(initial=0.0))
    modes, coeffs = modes[inside], coeffs[inside]
    if modes.shape[0]:
        base = _key_base(trunc_N)
        keys = _encode(modes, base)
        uniq, inv = np.unique(keys, return_inverse=True)
        if uniq.shape[0] != keys.shape[0]:
            merged = np.zeros((uniq.shape[0], ncomp), dtype=complex)
            np.add.at(merged, inv, coeffs)
            first = np.zeros(uniq.shape[0], dtype=np.int64)
            first[inv[::-1]] = np.arange(keys.shape[0])[::-1]
            modes, coeffs = modes[first], merged
        else:
            order = np.argsort(keys)
            modes, coeffs = modes[order], coeffs[order]
    modes.setflags(write=False)
    coeffs = np.ascontiguousarray(coeffs)
    coeffs.setflags(write=False)
    return FourierField(dim, rank, float(trunc_N), modes, coeffs, is_real, leak)


def zeros(dim: int, trunc_N: float, rank: int = 0) -> FourierField:
    return make_field(dim, np.zeros((0, dim)), np.zeros((0, max(rank, 1))), trunc_N, rank)


def constant(dim: int, value, trunc_N: float = 0.0) -> FourierField:
    v = np.atleast_1d(np.asarray(value, dtype=complex))
    rank = v.shape[0] if np.ndim(value) else 0
    return make_field(dim, np.zeros((1, dim)), v[None, :], trunc_N, rank, bool(np.all(v.imag == 0)))


def single_mode(dim: int, m: Sequence[int], value, trunc_N: float, real: bool = False) -> FourierField:
    """c e(m,x), or c e(m,x) + conj(c) e(-m,x) when ``real``."""
    v = np.atleast_1d(np.asarray(value, dtype=complex))
    rank = v.shape[0] if np.ndim(value) else 0
    m = np.array(m, dtype=np.int64)
    if real and m.any():
        return make_field(dim, np.stack([m, -m]), np.stack([v, v.conj()]), trunc_N, rank, True)
    return make_field(dim, m[None, :], v[None, :], trunc_N, rank, real)


def with_modes(f: FourierField, modes: np.ndarray, coeffs: np.ndarray, trunc_N: float | None = None,
               is_real: bool | None = None) -> FourierField:
    return make_field(f.dim, modes, coeffs, f.trunc_N if trunc_N is None else trunc_N, f.rank,
                      f.is_real if is_real is None else is_real)


def stack(fields: Sequence[FourierField]) -> FourierField:
    """Vector field whose components are the given scalar fields."""
    dim = fields[0].dim
    n = max(f.trunc_N for f in fields)
    allm = np.concatenate([f.modes for f in fields]) if fields else np.zeros((0, dim), dtype=np.int64)
    base = _key_base(n)
    keys = np.unique(_encode(allm, base)) if allm.size else np.zeros(0, dtype=np.int64)
    modes = _decode(keys, base, dim)
    coeffs = np.concatenate([f.get(modes) for f in fields], axis=1)
    return make_field(dim, modes, coeffs, n, len(fields), all(f.is_real for f in fields))


def _decode(keys: np.ndarray, base: int, dim: int) -> np.ndarray:
    off = base // 2
    out = np.zeros((keys.shape[0], dim), dtype=np.int64)
    k = keys.copy()
    for i in range(dim):
        out[:, i] = k % base - off
        k //= base
    return out


def _union(f: FourierField, g: FourierField) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n = max(f.trunc_N, g.trunc_N)
    base = _key_base(n)
    allm = np.concatenate([f.modes, g.modes])
    keys = np.unique(_encode(allm, base)) if allm.size else np.zeros(0, dtype=np.int64)
    modes = _decode(keys, base, f.dim)
    return modes, f.get(modes), g.get(modes), n


def add(f: FourierField, g: FourierField) -> FourierField:
    modes, a, b, n = _union(f, g)
    return make_field(f.dim, modes, a + b, n, f.rank, f.is_real and g.is_real)


def sub(f: FourierField, g: FourierField) -> FourierField:
    modes, a, b, n = _union(f, g)
    return make_field(f.dim, modes, a - b, n, f.rank, f.is_real and g.is_real)


def scale(c, f: FourierField) -> FourierField:
    real = f.is_real and complex(c).imag == 0
    return make_field(f.dim, f.modes, f.coeffs * c, f.trunc_N, f.rank, real)


def apply_matrix(mat, f: FourierField) -> FourierField:
    """Pointwise linear map of the components: (M f)(x) = M · f(x)."""
    m = np.asarray(mat, dtype=float)
    return make_field(f.dim, f.modes, f.coeffs @ m.T, f.trunc_N, m.shape[0], f.is_real)


def conj_symmetric_error(f: FourierField) -> float:
    """max |f_{-m} - conj(f_m)|."""
    if f.modes.shape[0] == 0:
        return 0.0
    return float(np.abs(f.get(-f.modes) - f.coeffs.conj()).max())


# ---------------------------------------------------------------- norms and truncation


def norm_r(f: FourierField, r: float) -> float:
    """Weighted sup sup_m |f_m| (1+|m|)^r, the max taken over components."""
    if r < 0:
        raise ValueError("r must be non-negative")
    if f.modes.shape[0] == 0:
        return 0.0
    w = (1.0 + _norms(f.modes)) ** r
    return float((np.abs(f.coeffs).max(axis=1) * w).max())


def norm_0(f: FourierField, grid: int | None = None) -> float:
    """Grid max-abs of the synthesized field."""
    if f.modes.shape[0] == 0:
        return 0.0
    m = grid or max(8, 4 * int(math.ceil(max(f.trunc_N, 1.0))))
    return float(np.abs(synthesize(f, m).samples).max())


def coeff_l1(f: FourierField) -> float:
    """Σ_m |f_m|: an upper bound for the sup over the torus."""
    return float(np.abs(f.coeffs).max(axis=1).sum()) if f.modes.shape[0] else 0.0


def truncate(f: FourierField, n: float) -> FourierField:
    keep = _norms(f.modes) <= n + 1e-9
    return make_field(f.dim, f.modes[keep], f.coeffs[keep], min(f.trunc_N, n) if n >= 0 else 0, f.rank, f.is_real)


def residue(f: FourierField, n: float) -> FourierField:
    keep = _norms(f.modes) > n + 1e-9
    return make_field(f.dim, f.modes[keep], f.coeffs[keep], f.trunc_N, f.rank, f.is_real)


def retruncate(f: FourierField, n: float) -> FourierField:
    """Same coefficients with a new truncation radius (dropping modes beyond it)."""
    return make_field(f.dim, f.modes, f.coeffs, n, f.rank, f.is_real)


# ---------------------------------------------------------------- affine composition


def affine_data(pair, k: int, l: int) -> tuple[np.ndarray, np.ndarray]:
    """(A^k B^l, α_{k,l}) as float-ready arrays."""
    from .action import translation_part
    p = np.array(intlat.power_pair(pair.A, pair.B, k, l), dtype=np.int64)
    t = np.array([float(x) for x in translation_part(pair, k, l)])
    return p, t


def compose_affine(h: FourierField, mat, shift, trunc_N: float | None = None) -> FourierField:
    """h ∘ (x ↦ mat x + shift); modes leaving the ball are dropped and their sup is reported."""
    if hasattr(mat, "entries"):
        mat = mat.entries
    p = np.asarray(mat, dtype=np.int64)
    t = np.mod(np.asarray([float(x) for x in shift]), 1.0)  # exact; keeps the phase arguments small
    new_modes = h.modes @ p
    phase = np.exp(TWO_PI * 1j * (h.modes.astype(float) @ t))
    return make_field(h.dim, new_modes, h.coeffs * phase[:, None], h.trunc_N if trunc_N is None else trunc_N,
                      h.rank, h.is_real)


def coboundary(h: FourierField, pair, k: int, l: int, trunc_N: float | None = None) -> FourierField:
    """∂_{k,l} h = h ∘ (a^k b^l) − h."""
    if (k, l) == (0, 0):
        return zeros(h.dim, h.trunc_N, h.rank)
    p, t = affine_data(pair, k, l)
    return sub(compose_affine(h, p, t, trunc_N), h)


def twisted_diff_vec(h: FourierField, pair, s: int, t: int, trunc_N: float | None = None) -> FourierField:
    """D_{s,t} h = h ∘ (a^s b^t) − A^s B^t h for a vector field h."""
    if h.rank != h.dim:
        raise ValueError("twisted difference needs a vector field with dim components")
    p, tr = affine_data(pair, s, t)
    return sub(compose_affine(h, p, tr, trunc_N), apply_matrix(p, h))


# ---------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class GridField:
    dim: int
    M: int
    rank: int
    samples: np.ndarray = field(repr=False)  # shape (M,)*dim + (ncomp,)

    @property
    def ncomp(self) -> int:
        return max(self.rank, 1)

    def max_abs(self) -> float:
        return float(np.abs(self.samples).max()) if self.samples.size else 0.0

    def average(self) -> np.ndarray:
        return self.samples.reshape(-1, self.ncomp).mean(axis=0)


def grid_field(samples: np.ndarray, rank: int) -> GridField:
    dim = samples.ndim - 1
    return GridField(dim, samples.shape[0], rank, samples)


def grid_points(dim: int, m: int) -> np.ndarray:
    """Grid coordinates j/M with shape (M,)*dim + (dim,)."""
    axes = np.meshgrid(*[np.arange(m) / m] * dim, indexing="ij")
    return np.stack(axes, axis=-1)


def zero_grid(dim: int, m: int, rank: int) -> GridField:
    return GridField(dim, m, rank, np.zeros((m,) * dim + (max(rank, 1),)))


def _check_alias(n: float, m: int) -> None:
    if m < 4 * n:
        raise AliasRisk(f"grid size {m} is below four times the truncation {n}")


def _spectral_array(f: FourierField, m: int, coeffs: np.ndarray | None = None) -> np.ndarray:
    c = f.coeffs if coeffs is None else coeffs
    arr = np.zeros((m,) * f.dim + (c.shape[1],), dtype=complex)
    if f.modes.shape[0]:
        idx = tuple((f.modes % m).T)
        arr[idx] = c
    return arr


def _synthesize_coeffs(f: FourierField, m: int, coeffs: np.ndarray, real: bool) -> np.ndarray:
    arr = _spectral_array(f, m, coeffs)
    axes = tuple(range(f.dim))
    vals = np.fft.ifftn(arr, axes=axes) * (m ** f.dim)
    return vals.real if real else vals


def synthesize(f: FourierField, m: int) -> GridField:
    _check_alias(f.trunc_N, m)
    vals = _synthesize_coeffs(f, m, f.coeffs, f.is_real)
    return GridField(f.dim, m, f.rank, vals)


def analyze(g: GridField, n: float | None = None) -> FourierField:
    """Fourier coefficients with |m| <= n; the sup of the discarded ones is the leakage."""
    n = g.M / 4 if n is None else n
    _check_alias(n, g.M)
    axes = tuple(range(g.dim))
    spectrum = np.fft.fftn(g.samples, axes=axes) / (g.M ** g.dim)
    freqs = np.fft.fftfreq(g.M, d=1.0 / g.M).round().astype(np.int64)
    grids = np.meshgrid(*[freqs] * g.dim, indexing="ij")
    modes = np.stack([x.ravel() for x in grids], axis=1)
    coeffs = spectrum.reshape(-1, g.ncomp)
    inside = _norms(modes) <= n + 1e-9
    leak = float(np.abs(coeffs[~inside]).max(initial=0.0))
    real = bool(np.isrealobj(g.samples))
    out = make_field(g.dim, modes[inside], coeffs[inside], n, g.rank, real)
    return FourierField(out.dim, out.rank, out.trunc_N, out.modes, out.coeffs, out.is_real, leak)


def evaluate(f: FourierField, points: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Direct trigonometric sum at arbitrary points (shape (P, dim)); returns (P, ncomp)."""
    pts = np.asarray(points, dtype=float).reshape(-1, f.dim)
    out = np.zeros((pts.shape[0], f.ncomp), dtype=complex)
    mf = f.modes.astype(float)
    for s in range(0, pts.shape[0], chunk):
        ph = np.exp(TWO_PI * 1j * (pts[s:s + chunk] @ mf.T))
        out[s:s + chunk] = ph @ f.coeffs
    return out.real if f.is_real else out


# ---------------------------------------------------------------- off-grid evaluation


def _index_map(dim: int, m: int, mat: np.ndarray) -> tuple:
    """Grid index tuple of (mat j) mod M for every grid index j."""
    idx = np.indices((m,) * dim).reshape(dim, -1)
    img = (mat @ idx) % m
    return tuple(img)


def eval_near_affine(f: FourierField, mat, shift, disp: GridField | np.ndarray | None, m: int,
                     tol: float = 1e-15, max_order: int = 60) -> GridField:
    """Samples of x ↦ f(mat x + shift + disp(x)) on the M-grid.

    The displacement is handled by a Taylor expansion whose derivative grids
    are exact (spectral) and whose tail after order J is bounded by
    Σ_m |f_m| x_m^{J+1}/(J+1)! / (1 − x_m/(J+2)), x_m = 2π |m|_1 max|disp|.
    """
    d = f.dim
    p = np.asarray(mat.entries if hasattr(mat, "entries") else mat, dtype=np.int64)
    t = np.asarray([float(x) for x in shift])
    _check_alias(f.trunc_N, m)
    ncomp = f.ncomp
    if f.modes.shape[0] == 0:
        return GridField(d, m, f.rank, np.zeros((m,) * d + (ncomp,)))
    flat = np.ravel_multi_index(_index_map(d, m, p), (m,) * d)
    shifted = f.coeffs * np.exp(TWO_PI * 1j * (f.modes.astype(float) @ t))[:, None]
    if disp is None:
        dvals = np.zeros((m ** d, d))
    else:
        dvals = (disp.samples if isinstance(disp, GridField) else disp).reshape(-1, d)
    dmax = float(np.abs(dvals).max(initial=0.0))
    weights = np.abs(f.coeffs).max(axis=1)
    xs = TWO_PI * np.abs(f.modes).sum(axis=1) * dmax
    acc = np.zeros((m ** d, ncomp), dtype=complex)
    term = np.ones_like(xs)
    mf = f.modes.astype(float)
    for order in range(max_order + 1):
        if order > 0:
            term = term * xs / order
        for alpha in combinations_with_replacement(range(d), order):
            cnt = np.bincount(np.array(alpha, dtype=np.int64), minlength=d) if order else np.zeros(d, dtype=np.int64)
            mono = np.prod(mf ** cnt, axis=1) * (TWO_PI * 1j) ** order
            grid = _synthesize_coeffs(f, m, shifted * mono[:, None], False)
            vals = grid.reshape(-1, ncomp)[flat]
            factor = np.prod(dvals ** cnt, axis=1) / float(math.prod(math.factorial(int(c)) for c in cnt))
            acc = acc + vals * factor[:, None]
        nxt = term * xs / (order + 1)
        ratio = xs / (order + 2)
        if dmax == 0.0 or ratio.max() < 1.0:
            tail = float((weights * nxt / (1.0 - ratio)).sum()) if dmax else 0.0
            if tail <= tol * max(1.0, float(weights.sum())):
                out = acc.real if f.is_real else acc
                return GridField(d, m, f.rank, out.reshape((m,) * d + (ncomp,)))
    raise ConditioningLoss(f"Taylor evaluation did not reach tolerance {tol} by order {max_order}")


# ---------------------------------------------------------------- near-affine maps


@dataclass(frozen=True, eq=False)
class NearAffineMap:
    """x ↦ P x + t + pert(x) with pert sampled on the M-grid."""

    mat: np.ndarray
    shift: np.ndarray
    pert: GridField

    @property
    def dim(self) -> int:
        return self.pert.dim

    @property
    def M(self) -> int:
        return self.pert.M


def affine_map(pair, k: int, l: int, m: int) -> NearAffineMap:
    p, t = affine_data(pair, k, l)
    return NearAffineMap(p, t, zero_grid(pair.dim, m, pair.dim))


def interpolant(g: GridField) -> FourierField:
    """Band-limited interpolant used for off-grid evaluation."""
    return analyze(g, g.M / 4)


def compose_maps(outer: NearAffineMap, inner: NearAffineMap, tol: float = 1e-15) -> NearAffineMap:
    """outer ∘ inner, with the outer perturbation evaluated off-grid at inner's image."""
    p1, t1 = outer.mat, outer.shift
    p2, t2 = inner.mat, inner.shift
    f1 = interpolant(outer.pert)
    at = eval_near_affine(f1, p2, t2, inner.pert, inner.M, tol=tol)
    lin = np.einsum("ij,...j->...i", p1.astype(float), inner.pert.samples)
    pert = GridField(inner.dim, inner.M, inner.dim, lin + at.samples)
    return NearAffineMap(p1 @ p2, p1.astype(float) @ t2 + t1, pert)


def invert_map(f: NearAffineMap, tol: float = 1e-14, max_sweeps: int = 50) -> NearAffineMap:
    """Inverse of a near-affine map with unimodular linear part."""
    pinv = np.array(intlat.rational_inverse(f.mat.tolist()), dtype=np.int64)
    tinv = -pinv.astype(float) @ f.shift
    # y = pinv x + tinv + q(x),  q(x) = −pinv pert(pinv x + tinv + q(x))
    pf = interpolant(f.pert)
    neg = apply_matrix(-pinv.astype(float), pf)
    q = GridField(f.dim, f.M, f.dim, np.zeros_like(f.pert.samples))
    for _ in range(max_sweeps):
        new = eval_near_affine(neg, pinv, tinv, q, f.M)
        delta = float(np.abs(new.samples - q.samples).max())
        q = new
        if delta <= tol:
            return NearAffineMap(pinv, tinv, q)
    raise NoContraction("inverse map iteration did not contract")


def power_map(F: NearAffineMap, G: NearAffineMap, k: int, l: int, tol: float = 1e-15) -> NearAffineMap:
    """F^k ∘ G^l by repeated composition (inverses for negative exponents)."""
    d, m = F.dim, F.M
    ident = NearAffineMap(np.eye(d, dtype=np.int64), np.zeros(d), zero_grid(d, m, d))
    out = ident
    for base, e in ((G, l), (F, k)):
        if e == 0:
            continue
        step = base if e > 0 else invert_map(base)
        for _ in range(abs(e)):
            out = compose_maps(step, out, tol)
    return out


def invert_near_identity(h: GridField, tol: float = 1e-14, max_sweeps: int = 50) -> GridField:
    """h′ with (Id + h) ∘ (Id + h′) = Id on the grid, via h′ ← −h ∘ (Id + h′)."""
    if h.max_abs() == 0.0:
        return GridField(h.dim, h.M, h.rank, np.zeros_like(h.samples))
    neg = scale(-1.0, interpolant(h))
    eye = np.eye(h.dim, dtype=np.int64)
    zero = np.zeros(h.dim)
    cur = GridField(h.dim, h.M, h.rank, -h.samples)
    prev_delta = math.inf
    for sweep in range(max_sweeps):
        new = eval_near_affine(neg, eye, zero, cur, h.M)
        delta = float(np.abs(new.samples - cur.samples).max())
        cur = new
        if delta <= tol:
            return cur
        if sweep > 5 and delta > prev_delta:
            break
        prev_delta = delta
    raise NoContraction("near-identity inversion did not contract")


# ---------------------------------------------------------------- random fields


def random_field(dim: int, trunc_N: float, rng: np.random.Generator, rank: int = 0, decay: float = 0.5,
                 amplitude: float = 1.0, support: float | None = None, zero_mean: bool = True) -> FourierField:
    """Real field with |f_m| <= amplitude e^{-decay |m|} on modes |m| <= support."""
    from .resonance import ball_points
    rad = trunc_N if support is None else min(support, trunc_N)
    pts = ball_points(dim, rad)
    half = []
    for p in pts:
        nz = np.nonzero(p)[0]
        if nz.size and p[nz[0]] > 0:
            half.append(p)
    half = np.array(half, dtype=np.int64).reshape(-1, dim)
    ncomp = max(rank, 1)
    env = amplitude * np.exp(-decay * _norms(half))[:, None]
    mag = rng.uniform(0.0, 1.0, size=(half.shape[0], ncomp)) * env
    ph = np.exp(TWO_PI * 1j * rng.uniform(size=(half.shape[0], ncomp)))
    c = mag * ph
    modes = np.concatenate([half, -half])
    coeffs = np.concatenate([c, c.conj()])
    if not zero_mean:
        modes = np.concatenate([modes, np.zeros((1, dim), dtype=np.int64)])
        coeffs = np.concatenate([coeffs, amplitude * rng.uniform(-1, 1, size=(1, ncomp)).astype(complex)])
    return make_field(dim, modes, coeffs, trunc_N, rank, True)

"""Nonlinear conjugation of a commuting perturbation toward the affine model.

Each step solves the linearized equations D_{1,0} h ≈ −f, D_{0,1} h ≈ −g on
modes |m| <= N_n, fixes the free constant of h so that the accumulated
conjugacy keeps zero average, and conjugates on the grid:

    F_{n+1} = (Id + h) ∘ F_n ∘ (Id + h)^{-1}.

The accumulated conjugacy 𝓗_n = (Id + h_n) ∘ 𝓗_{n-1} is stored as a
displacement u_n with 𝓗_n(x) = x + u_n(x).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import action, cohomo, fourier, intlat, resonance
from .action import ActionPair
from .errors import DegenerateResonance, DivergenceDetected, SmallnessViolated
from .fourier import FourierField, GridField, NearAffineMap

CONVERGED, NOT_CONVERGED, DIVERGED, SMALLNESS, LOCKED = (
    "Converged", "NotConverged", "Diverged", "SmallnessViolated", "Locked")
CONJUGACY, STANDARD_MAP, IDENTITY_FACTOR = "Conjugacy", "StandardMap", "IdentityFactor"


# ---------------------------------------------------------------- inputs


@dataclass(eq=False)
class PerturbedAction:
    pair: ActionPair
    F: NearAffineMap
    G: NearAffineMap
    M: int
    kind: str = CONJUGACY
    commuting_residual: float = 0.0
    volume_flag: bool = True
    zero_average_flag: bool = True
    truth: GridField | None = None  # displacement of a known conjugacy, when available

    @property
    def f(self) -> GridField:
        return self.F.pert

    @property
    def g(self) -> GridField:
        return self.G.pert


def _wrap_shift(s: np.ndarray) -> np.ndarray:
    return s - np.round(s)


def commuting_residual(F: NearAffineMap, G: NearAffineMap) -> float:
    fg = fourier.compose_maps(F, G)
    gf = fourier.compose_maps(G, F)
    if not np.array_equal(fg.mat, gf.mat):
        return math.inf
    ds = _wrap_shift(fg.shift - gf.shift)
    diff = fg.pert.samples - gf.pert.samples + ds
    return float(np.abs(diff).max())


def jacobian_dets(mat: np.ndarray, pert: GridField) -> np.ndarray:
    """det(mat + D pert) on the grid, with spectral derivatives."""
    d, m = pert.dim, pert.M
    fld = fourier.interpolant(pert)
    jac = np.zeros((m ** d, d, d))
    mf = fld.modes.astype(float)
    for j in range(d):
        dc = fld.coeffs * (2j * np.pi * mf[:, j])[:, None]
        grid = fourier._synthesize_coeffs(fld, m, dc, True)
        jac[:, :, j] = grid.reshape(-1, d)
    jac += np.asarray(mat, dtype=float)[None, :, :]
    return np.linalg.det(jac)


def _finish(pair: ActionPair, F: NearAffineMap, G: NearAffineMap, kind: str, truth=None) -> PerturbedAction:
    res = commuting_residual(F, G)
    vol = max(float(np.abs(jacobian_dets(F.mat, F.pert) - 1).max()),
              float(np.abs(jacobian_dets(G.mat, G.pert) - 1).max()))
    zero = max(float(np.abs(F.pert.average()).max()), float(np.abs(G.pert.average()).max())) < 1e-12
    return PerturbedAction(pair, F, G, F.M, kind, res, vol < 1e-10, zero, truth)


def _shear_phases(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=d)


def _shear_apply(x: np.ndarray, eps: float, phases: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Composition of shears x_i += eps sin 2π(x_{i+1} + c_i), i = 0..d-1 (or its inverse)."""
    d = x.shape[-1]
    y = x.copy()
    order = range(d - 1, -1, -1) if inverse else range(d)
    sgn = -1.0 if inverse else 1.0
    for i in order:
        src = (i + 1) % d
        y[..., i] = y[..., i] + sgn * eps * np.sin(2 * np.pi * (y[..., src] + phases[i]))
    return y


def conjugacy_fixture(pair: ActionPair, eps: float, M: int, seed: int = 0) -> PerturbedAction:
    """F = H₀⁻¹ ∘ a ∘ H₀, G = H₀⁻¹ ∘ b ∘ H₀ for a volume-preserving shear composite H₀."""
    d = pair.dim
    x = fourier.grid_points(d, M)
    ph = _shear_phases(d, seed)
    y = _shear_apply(x, eps, ph)
    maps = []
    for k, l in ((1, 0), (0, 1)):
        p, t = fourier.affine_data(pair, k, l)
        z = np.einsum("ij,...j->...i", p.astype(float), y) + t
        w = _shear_apply(z, eps, ph, inverse=True)
        pert = w - np.einsum("ij,...j->...i", p.astype(float), x) - t
        maps.append(NearAffineMap(p, t, GridField(d, M, d, pert)))
    truth = GridField(d, M, d, y - x)
    return _finish(pair, maps[0], maps[1], CONJUGACY, truth)


def standard_map_pair(beta: Sequence[float] | None = None) -> ActionPair:
    g = (math.sqrt(5) - 1) / 2
    b = beta if beta is not None else (g, math.sqrt(2) - 1)
    A = intlat.make_unimat([[1, 0], [0, 1]])
    B = intlat.make_unimat([[1, 0], [1, 1]])
    return action.make_action(A, B, [0.0, 0.0], [float(v) for v in b])


def standard_map_fixture(eps: float, M: int, beta: Sequence[float] | None = None) -> PerturbedAction:
    """F = Id and G(x) = (x₁+β₁+ε sin 2π(x₁+x₂), x₂+x₁+β₂)."""
    pair = standard_map_pair(beta)
    x = fourier.grid_points(2, M)
    pg = np.zeros_like(x)
    pg[..., 0] = eps * np.sin(2 * np.pi * (x[..., 0] + x[..., 1]))
    F = fourier.affine_map(pair, 1, 0, M)
    p, t = fourier.affine_data(pair, 0, 1)
    G = NearAffineMap(p, t, GridField(2, M, 2, pg))
    return _finish(pair, F, G, STANDARD_MAP)


def identity_factor_pair() -> ActionPair:
    A = intlat.make_unimat(intlat.mat_add(intlat.identity(3), intlat.elementary(3, 2, 1)))
    B = intlat.make_unimat(intlat.mat_add(intlat.identity(3), intlat.elementary(3, 3, 1)))
    g = (math.sqrt(5) - 1) / 2
    return action.make_action(A, B, [0.0, g, math.sqrt(2) - 1], [0.0, math.sqrt(3) - 1, g / 2])


def identity_factor_fixture(eps: float, M: int) -> PerturbedAction:
    """F = a + (0,…,0, ε sin 2πx₁), G = b on 𝕋³."""
    pair = identity_factor_pair()
    x = fourier.grid_points(3, M)
    pf = np.zeros_like(x)
    pf[..., 2] = eps * np.sin(2 * np.pi * x[..., 0])
    p, t = fourier.affine_data(pair, 1, 0)
    F = NearAffineMap(p, t, GridField(3, M, 3, pf))
    G = fourier.affine_map(pair, 0, 1, M)
    return _finish(pair, F, G, IDENTITY_FACTOR)


def make_fixture(kind: str, pair: ActionPair | None = None, eps: float = 1e-3, M: int = 64,
                 seed: int = 0) -> PerturbedAction:
    if kind == CONJUGACY:
        if pair is None:
            raise ValueError("a conjugacy fixture needs an action")
        return conjugacy_fixture(pair, eps, M, seed)
    if kind == STANDARD_MAP:
        return standard_map_fixture(eps, M)
    if kind == IDENTITY_FACTOR:
        return identity_factor_fixture(eps, M)
    raise ValueError(f"unknown fixture kind {kind}")


# ---------------------------------------------------------------- schedule and report


@dataclass(frozen=True)
class KamConfig:
    eps: float = 1e-3
    D: float | None = None  # defaults to d(d+1)
    k: float = 4.0 / 3.0
    n_max: int = 6
    target: float = 1e-9
    tau: float = 1.0
    gamma: float | None = None  # defaults to half the certified SDC constant
    N_fixed: float | None = None  # overrides the schedule when set
    rounding: str = "ceil"  # integer truncation level from the real schedule value: ceil | floor | none
    cert_scan: float = 30.0
    strict: bool = True  # raise on divergence / smallness violations
    enforce_smallness: bool = True  # N^D Δ_1 < 1 before each step
    check_conjugation: bool = True

    def resolved_D(self, d: int) -> float:
        return float(d * (d + 1)) if self.D is None else float(self.D)

    def schedule(self, n: int, d: int) -> tuple[float, float]:
        """(ε_n, N_n) with ε_n = ε^{k^n} and N_n = ε_n^{-1/(3(D+2))}."""
        log_eps_n = math.log(self.eps) * self.k ** n
        D = self.resolved_D(d)
        N = math.exp(-log_eps_n / (3 * (D + 2)))
        return math.exp(log_eps_n), N

    def truncation(self, N: float) -> float:
        if self.rounding == "ceil":
            return float(math.ceil(N - 1e-12))
        if self.rounding == "floor":
            return float(max(1, math.floor(N + 1e-12)))
        if self.rounding == "none":
            return N
        raise ValueError(f"unknown rounding {self.rounding}")

    def l_index(self, d: int) -> float:
        return 8 * self.resolved_D(d) + 16

    def to_json(self) -> dict:
        return {"eps": self.eps, "D": self.D, "k": self.k, "n_max": self.n_max, "target": self.target,
                "tau": self.tau, "gamma": self.gamma, "N_fixed": self.N_fixed, "rounding": self.rounding,
                "cert_scan": self.cert_scan,
                "strict": self.strict, "enforce_smallness": self.enforce_smallness}


@dataclass
class StepRecord:
    n: int
    eps_n: float
    N_n: float
    N_applied: float
    delta0: float
    delta1: float
    delta_l: float
    h_norm1: float
    C: list
    leakage: float
    ave_H: float
    conj_residual: float
    delta0_next: float
    seconds: float

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "seconds"}


@dataclass
class KamReport:
    status: str
    config: dict
    steps: list = field(default_factory=list)
    H: GridField | None = None
    H_fourier: FourierField | None = None
    residual_a: float = math.nan
    residual_b: float = math.nan
    volume_mean_dev: float = math.nan
    volume_max_dev: float = math.nan
    truth_error: float | None = None
    diagnostics: list = field(default_factory=list)
    certificate: dict | None = None
    verdict: str | None = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def deltas(self) -> list:
        if not self.steps:
            return []
        return [s.delta0 for s in self.steps] + [self.steps[-1].delta0_next]

    def to_json(self) -> dict:
        return {"status": self.status, "verdict": self.verdict, "config": self.config,
                "steps": [s.to_json() for s in self.steps], "residual_a": self.residual_a,
                "residual_b": self.residual_b, "volume_mean_dev": self.volume_mean_dev,
                "volume_max_dev": self.volume_max_dev, "truth_error": self.truth_error,
                "diagnostics": list(self.diagnostics), "certificate": self.certificate}

    def csv_rows(self) -> list:
        return [[s.n, s.eps_n, s.N_n, s.N_applied, s.delta0, s.delta_l, s.h_norm1] for s in self.steps]


# ---------------------------------------------------------------- pieces of a step


def adjust_average(h: FourierField | GridField, u_prev: GridField) -> tuple[FourierField, np.ndarray]:
    """h + C with C = −∫ h ∘ 𝓗_{n−1}, so that the updated conjugacy keeps zero average."""
    hf = fourier.interpolant(h) if isinstance(h, GridField) else h
    d, m = u_prev.dim, u_prev.M
    at = fourier.eval_near_affine(hf, np.eye(d, dtype=np.int64), np.zeros(d), u_prev, m)
    C = -at.average().real
    return fourier.add(hf, fourier.constant(d, C, hf.trunc_N)), C


def clean_norm(f: FourierField, r: float, floor: float) -> float:
    """Weighted sup over coefficients above the round-off floor."""
    if f.modes.shape[0] == 0:
        return 0.0
    mag = np.abs(f.coeffs).max(axis=1)
    keep = mag > floor
    if not keep.any():
        return 0.0
    w = (1.0 + np.sqrt((f.modes[keep].astype(float) ** 2).sum(axis=1))) ** r
    return float((mag[keep] * w).max())


def _pairs_for(pair: ActionPair, N: float) -> tuple:
    return resonance.resonance_pairs_up_to(pair.A, pair.B, N).pairs


def conjugacy_residual(F: NearAffineMap, u: GridField) -> float:
    """‖𝓗 ∘ F − a ∘ 𝓗‖₀ = ‖f + u ∘ F − A u‖₀ on the grid."""
    uf = fourier.interpolant(u)
    at = fourier.eval_near_affine(uf, F.mat, F.shift, F.pert, F.M)
    lin = np.einsum("ij,...j->...i", F.mat.astype(float), u.samples)
    return float(np.abs(F.pert.samples + at.samples - lin).max())


def _volume(u: GridField) -> tuple[float, float]:
    det = jacobian_dets(np.eye(u.dim), u)
    return abs(float(det.mean()) - 1.0), float(np.abs(det - 1.0).max())


# ---------------------------------------------------------------- the loop


def certify(pair: ActionPair, cfg: KamConfig) -> tuple[dict, float, list]:
    diags = []
    try:
        cert = action.diophantine_certificate(pair, cfg.tau, cfg.cert_scan)
        cj = cert.to_json()
        gsdc = cert.gamma_sdc
    except DegenerateResonance as exc:
        diags.append(f"DegenerateResonance: {exc}")
        gsdc, _ = action.sdc_constant(pair, cfg.tau, cfg.cert_scan)
        cj = {"tau": cfg.tau, "scan_bound": cfg.cert_scan, "gamma_sdc": gsdc if math.isfinite(gsdc) else "inf",
              "gamma_res": 0.0, "res_witness": list(exc.witness) if exc.witness else None,
              "res_pair": list(exc.pair) if exc.pair else None}
    return cj, gsdc, diags


def kam_run(inp: PerturbedAction, cfg: KamConfig = KamConfig(), gate: bool = True) -> KamReport:
    pair = inp.pair
    d, M = pair.dim, inp.M
    rep = KamReport(NOT_CONVERGED, cfg.to_json())
    if gate:
        lock = action.classify_locked(pair.A, pair.B, cfg.cert_scan)
        rep.verdict = lock.verdict
        if lock.verdict == action.LOCKED:
            rep.status = LOCKED
            rep.diagnostics.append(f"locked action ({lock.kind}); the iteration is not attempted")
            return rep
    cj, gsdc, diags = certify(pair, cfg)
    rep.certificate = cj
    rep.diagnostics.extend(diags)
    gamma = cfg.gamma if cfg.gamma is not None else (0.5 * gsdc if math.isfinite(gsdc) else 1.0)
    D = cfg.resolved_D(d)
    lval = cfg.l_index(d)

    F, G = inp.F, inp.G
    u = fourier.zero_grid(d, M, d)
    eye = np.eye(d, dtype=np.int64)
    zero = np.zeros(d)
    delta = max(F.pert.max_abs(), G.pert.max_abs())
    if delta < cfg.target:
        rep.status = CONVERGED
    ups = 0
    for n in range(1, cfg.n_max + 1):
        if rep.status == CONVERGED:
            break
        t0 = time.perf_counter()
        eps_n, N_sched = cfg.schedule(n, d)
        N_real = cfg.N_fixed if cfg.N_fixed is not None else N_sched
        N = cfg.truncation(N_real)
        ff = fourier.interpolant(F.pert)
        gf = fourier.interpolant(G.pert)
        floor = 1e-15 * max(1.0, delta)
        delta1 = max(fourier.norm_r(ff, 1.0), fourier.norm_r(gf, 1.0))
        delta_l = max(clean_norm(ff, lval, floor), clean_norm(gf, lval, floor))
        if cfg.enforce_smallness and N ** D * delta1 >= 1.0:
            rep.status = SMALLNESS
            rep.diagnostics.append(f"step {n}: N^D Δ_1 = {N ** D * delta1:.3e} >= 1")
            if cfg.strict:
                _final(rep, inp, F, G, u)
                raise SmallnessViolated(rep.diagnostics[-1], report=rep)
            break
        q = {(1, 0): fourier.scale(-1.0, ff), (0, 1): fourier.scale(-1.0, gf)}
        for kl in _pairs_for(pair, N):
            if kl not in q:
                pm = fourier.power_map(F, G, *kl)
                q[kl] = fourier.scale(-1.0, fourier.interpolant(pm.pert))
        sol = cohomo.solve_vector(q, pair, N, gamma, cfg.tau, rs=())
        h, C = adjust_average(sol.h, u)
        hg = fourier.synthesize(h, M)
        hinv = fourier.invert_near_identity(hg)
        Phi = NearAffineMap(eye, zero, hg)
        Phi_inv = NearAffineMap(eye, zero, hinv)
        F_new = fourier.compose_maps(Phi, fourier.compose_maps(F, Phi_inv))
        G_new = fourier.compose_maps(Phi, fourier.compose_maps(G, Phi_inv))
        conj_res = 0.0
        if cfg.check_conjugation:
            lhs = fourier.compose_maps(Phi, F)
            rhs = fourier.compose_maps(F_new, Phi)
            conj_res = float(np.abs(lhs.pert.samples - rhs.pert.samples + _wrap_shift(lhs.shift - rhs.shift)).max())
        at = fourier.eval_near_affine(h, eye, zero, u, M)
        u = GridField(d, M, d, u.samples + at.samples)
        new_delta = max(F_new.pert.max_abs(), G_new.pert.max_abs())
        rep.steps.append(StepRecord(n, eps_n, N_real, N, delta, delta1, delta_l, fourier.norm_r(h, 1.0),
                                    [float(c) for c in C], sol.leakage, float(np.abs(u.average()).max()),
                                    conj_res, new_delta, time.perf_counter() - t0))
        ups = ups + 1 if new_delta > delta else 0
        F, G, delta = F_new, G_new, new_delta
        if delta < cfg.target:
            rep.status = CONVERGED
            break
        if n > 2 and ups >= 2:
            rep.status = DIVERGED
            rep.diagnostics.append(f"Δ₀ increased in two consecutive steps ending at step {n}")
            if cfg.strict:
                _final(rep, inp, F, G, u)
                raise DivergenceDetected(rep.diagnostics[-1], report=rep)
            break
    _final(rep, inp, F, G, u)
    return rep


def _final(rep: KamReport, inp: PerturbedAction, F: NearAffineMap, G: NearAffineMap, u: GridField) -> None:
    rep.H = u
    rep.H_fourier = fourier.interpolant(u)
    rep.residual_a = conjugacy_residual(inp.F, u)
    rep.residual_b = conjugacy_residual(inp.G, u)
    rep.volume_mean_dev, rep.volume_max_dev = _volume(u)
    if inp.truth is not None:
        rep.truth_error = float(np.abs(u.samples - inp.truth.samples).max())

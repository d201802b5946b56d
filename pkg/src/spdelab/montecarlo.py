"""Seeded path ensembles and the expectation-level diagnostics built on them.

Every path ``p`` draws its increments from the stream ``(seed, p)``, so an
ensemble is reproducible bit-for-bit regardless of how many worker threads
solve it. In enumeration mode the ensemble instead runs over all ``2^N``
Rademacher sign paths with weight ``2^-N`` each, which turns every
expectation into an exact finite sum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .noise import IncrementKind, IncrementPath, ItoPath, TimeGrid, gen_increments, rademacher_path
from .paths import PolyPath, translate_moment
from .records import TrajectoryRecord
from .solvers import NonConvergence

__all__ = [
    "SIGMA_BAND",
    "EnsembleConfig",
    "McEstimate",
    "EnsembleStats",
    "run_ensemble",
    "band_z",
    "martingale_tests",
    "MartingaleReport",
    "bdg_audit",
    "BdgReport",
    "holder_fit",
    "HolderFit",
    "dyadic_deltas",
    "law_convergence",
    "LawReport",
    "ks_to_normal",
    "ks_critical_value",
    "moment_bound_audit",
    "MomentAudit",
    "dual_norm_fn",
]

SIGMA_BAND = 4.0
MIN_LAW_SAMPLES = 100


@dataclass(frozen=True)
class EnsembleConfig:
    """``simulate`` maps an increment path to a solved record (or any object
    the functionals accept); ``functionals`` maps names to scalar maps.
    ``noise_fn(p)`` optionally replaces the default stream ``(seed, p)``,
    e.g. to couple refinement levels."""

    paths: int
    seed: int
    kind: IncrementKind | str
    grid: TimeGrid
    simulate: Callable[[IncrementPath], object]
    functionals: Mapping[str, Callable[[object], float]]
    enumerate: bool = False
    threads: int = 1
    retain: bool = True
    ladder: tuple = ()
    noise_fn: Callable[[int], IncrementPath] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", IncrementKind.parse(self.kind))
        if not self.enumerate and self.paths < 2:
            raise ValueError(f"need at least 2 paths, got {self.paths}")
        if self.enumerate and self.kind is not IncrementKind.RADEMACHER:
            raise ValueError("enumeration mode requires Rademacher increments")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        Ns = [int(level[0]) for level in self.ladder]
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise ValueError("ladder entries must be strictly increasing in N")

    @property
    def path_count(self) -> int:
        return 2**self.grid.N if self.enumerate else self.paths


@dataclass(frozen=True)
class McEstimate:
    mean: float
    variance: float
    std_error: float
    P: int
    confidence: float = 2.0 * stats.norm.sf(SIGMA_BAND)

    @classmethod
    def from_samples(cls, x: np.ndarray, weights: np.ndarray | None = None) -> "McEstimate":
        x = np.asarray(x, dtype=float)
        P = len(x)
        if weights is None:
            mean = float(np.mean(x))
            var = float(np.var(x, ddof=1)) if P > 1 else 0.0
        else:
            mean = float(weights @ x)
            var = float(weights @ (x - mean) ** 2)
        return cls(mean, var, float(np.sqrt(var / P)), P)

    def band(self, sigmas: float = SIGMA_BAND) -> tuple[float, float]:
        return self.mean - sigmas * self.std_error, self.mean + sigmas * self.std_error


@dataclass(eq=False)
class EnsembleStats:
    estimates: dict
    samples: dict
    weights: np.ndarray | None
    records: list | None
    config: EnsembleConfig

    @property
    def P(self) -> int:
        return self.config.path_count

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Ensemble mean along the first axis (exact weights in enumeration mode)."""
        values = np.asarray(values, dtype=float)
        if self.weights is None:
            return values.mean(axis=0)
        return np.tensordot(self.weights, values, axes=1)


def _noise_for(config: EnsembleConfig, p: int) -> IncrementPath:
    if config.enumerate:
        return rademacher_path(config.grid, p)
    if config.noise_fn is not None:
        return config.noise_fn(p)
    return gen_increments(config.kind, config.grid, config.seed, p)


def _solve_one(config: EnsembleConfig, p: int):
    try:
        rec = config.simulate(_noise_for(config, p))
    except NonConvergence as exc:
        raise exc.at(path=p)
    vals = {name: float(fn(rec)) for name, fn in config.functionals.items()}
    return (rec if config.retain else None), vals


def run_ensemble(config: EnsembleConfig) -> EnsembleStats:
    """Solve every path and collect per-functional estimates.

    Results are gathered in stream order and reduced with numpy on the
    ordered arrays, so serial and threaded runs agree bitwise.
    """
    P = config.path_count
    if config.threads == 1:
        results = [_solve_one(config, p) for p in range(P)]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda p: _solve_one(config, p), range(P)))
    weights = np.full(P, 2.0 ** -config.grid.N) if config.enumerate else None
    samples = {name: np.array([vals[name] for _, vals in results]) for name in config.functionals}
    estimates = {name: McEstimate.from_samples(x, weights) for name, x in samples.items()}
    records = [rec for rec, _ in results] if config.retain else None
    return EnsembleStats(estimates, samples, weights, records, config)


def band_z(tests: int, sigmas: float = SIGMA_BAND) -> float:
    """Two-sided band half-width in standard errors for ``tests`` simultaneous
    tests at the family-wise false-alarm rate of a single ``sigmas`` band."""
    alpha = 2.0 * stats.norm.sf(sigmas)
    return float(stats.norm.isf(alpha / (2.0 * max(tests, 1))))


@dataclass
class MartingaleReport:
    step_means: np.ndarray
    step_se: np.ndarray
    cross_means: np.ndarray  # (N, N), upper triangle k < m
    cross_se: np.ndarray
    z: float
    atol: float = 1e-12

    @property
    def step_pass(self) -> np.ndarray:
        return np.abs(self.step_means) <= self.z * self.step_se + self.atol

    @property
    def cross_pass(self) -> np.ndarray:
        iu = np.triu_indices(len(self.step_means), 1)
        return np.abs(self.cross_means[iu]) <= self.z * self.cross_se[iu] + self.atol

    @property
    def passed(self) -> bool:
        return bool(np.all(self.step_pass) and np.all(self.cross_pass))


def _weighted_mean_se(values: np.ndarray, weights: np.ndarray | None):
    P = values.shape[0]
    if weights is None:
        mean = values.mean(axis=0)
        var = values.var(axis=0, ddof=1)
    else:
        mean = np.tensordot(weights, values, axes=1)
        var = np.tensordot(weights, (values - mean) ** 2, axes=1)
    return mean, np.sqrt(var / P)


def martingale_tests(ens: EnsembleStats, xi_transform: Callable | None = None) -> MartingaleReport:
    """Zero-mean bands for ``(g^{n-1}, u^{n-1})_H xi^n`` per step and for the
    cross terms ``(g^{k-1}, g^{m-1})_H xi^k xi^m``, ``k < m``.

    ``xi_transform`` replaces the increments (e.g. ``np.abs`` as a negative
    control). Bands are Bonferroni-adjusted over all tests in the sweep.
    """
    if not ens.records:
        raise ValueError("martingale tests need retained trajectories")
    steps, cross = [], []
    for rec in ens.records:
        xi = rec.xi if xi_transform is None else xi_transform(rec.xi)
        gm = rec.g @ rec.space.mass
        steps.append(np.sum(gm * rec.levels[:-1], axis=1) * xi)
        cross.append((gm @ rec.g.T) * np.outer(xi, xi))
    steps, cross = np.array(steps), np.array(cross)
    N = steps.shape[1]
    sm, sse = _weighted_mean_se(steps, ens.weights)
    cm, cse = _weighted_mean_se(cross, ens.weights)
    z = band_z(N + N * (N - 1) // 2)
    return MartingaleReport(sm, sse, cm, cse, z)


@dataclass
class BdgReport:
    p: float
    max_moment: float
    qv_moment: float
    ratio: float
    bound_rhs: float
    C_p: float


def bdg_audit(ito_paths: Sequence[ItoPath], p: float, weights: np.ndarray | None = None) -> BdgReport:
    """Empirical ``E max_n |X^n|^p`` against ``E (sum |X^n - X^{n-1}|^2)^{p/2}``.

    Also reports the constant ``C_p`` implied by the increment-moment bound
    ``E (sum |g xi|^2)^{p/2} <= C_p (N tau)^{p/2-1} sum tau E|g|^p``.
    Ratios are defined as 1 when both sides vanish.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    levels = np.array([ip.levels for ip in ito_paths])
    grid = ito_paths[0].grid
    w = np.full(len(levels), 1.0 / len(levels)) if weights is None else np.asarray(weights, dtype=float)
    norms_sq = np.sum(levels**2, axis=-1)
    max_m = float(w @ np.max(norms_sq, axis=1) ** (p / 2.0))
    incs = np.diff(levels, axis=1)
    qv = np.sum(np.sum(incs**2, axis=-1), axis=1)
    qv_m = float(w @ qv ** (p / 2.0))
    ratio = 1.0 if max_m == 0 and qv_m == 0 else max_m / qv_m
    g = np.array([np.broadcast_to(np.asarray(ip.integrand, dtype=float).reshape(grid.N, -1),
                                  (grid.N, levels.shape[-1])) for ip in ito_paths])
    g_p = np.sum(grid.tau * (w @ np.sum(g**2, axis=-1) ** (p / 2.0)))
    rhs = (grid.N * grid.tau) ** (p / 2.0 - 1.0) * g_p
    C_p = 1.0 if qv_m == 0 and rhs == 0 else qv_m / rhs
    return BdgReport(p, max_m, qv_m, ratio, float(rhs), float(C_p))


def dyadic_deltas(grid: TimeGrid, levels: int = 5, finest: float | None = None) -> np.ndarray:
    """``levels`` dyadic shifts halving from ``finest * 2^(levels-1)`` down to ``finest``.

    ``finest`` defaults to ``2 tau`` so the sweep probes the rough regime
    above the grid scale.
    """
    finest = 2.0 * grid.tau if finest is None else finest
    d = finest * 2.0 ** np.arange(levels - 1, -1, -1)
    if d[0] >= grid.T:
        raise ValueError("dyadic sweep does not fit in (0, T); refine the grid or use fewer levels")
    return d


@dataclass
class HolderFit:
    deltas: np.ndarray
    moments: np.ndarray
    slope: float
    theta_hat: float
    predicted: float | None

    @property
    def passed(self) -> bool:
        return self.predicted is None or self.theta_hat >= self.predicted - 0.1


def holder_fit(paths: Sequence[PolyPath], p: float, deltas: np.ndarray | None = None,
               norm: Callable | None = None, predicted: float | None = None,
               weights: np.ndarray | None = None) -> HolderFit:
    """Regress ``log E[translate_moment(u, delta, p)]`` on ``log delta``.

    The Hoelder exponent estimate is ``theta_hat = (slope - 1) / p``.
    """
    if not paths:
        raise ValueError("no paths")
    deltas = dyadic_deltas(paths[0].grid) if deltas is None else np.asarray(deltas, dtype=float)
    if len(deltas) < 4:
        raise ValueError(f"a Hoelder fit needs at least 4 sweep points, got {len(deltas)}")
    vals = np.array([[translate_moment(u, d, p, norm) for d in deltas] for u in paths])
    w = np.full(len(paths), 1.0 / len(paths)) if weights is None else np.asarray(weights, dtype=float)
    moments = w @ vals
    if np.any(moments <= 0):
        raise ValueError("translate moments vanish; the paths are constant in time")
    slope = float(np.polyfit(np.log(deltas), np.log(moments), 1)[0])
    return HolderFit(deltas, moments, slope, (slope - 1.0) / p, predicted)


@dataclass
class LawReport:
    ks_between: np.ndarray
    critical: np.ndarray
    monotone: bool
    ks_normal: np.ndarray | None = None
    note: str = "KS trends are evidence of convergence in law, not a proof of it"


def _check_sample(x: np.ndarray):
    if len(x) < MIN_LAW_SAMPLES:
        raise ValueError(f"sample too small for a law comparison: {len(x)} < {MIN_LAW_SAMPLES}")


def ks_to_normal(samples: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of the sample to the standard normal."""
    x = np.asarray(samples, dtype=float)
    _check_sample(x)
    return float(stats.kstest(x, "norm").statistic)


def ks_critical_value(n: int, m: int | None = None, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value for one sample of size ``n`` or two of sizes ``n, m``."""
    eff = n if m is None else n * m / (n + m)
    return float(stats.kstwobign.isf(alpha) / np.sqrt(eff))


def law_convergence(level_samples: Sequence[np.ndarray], to_normal: bool = False,
                    alpha: float = 0.01) -> LawReport:
    """KS distances between the functional's samples at successive refinements.

    ``monotone`` is True when the distances strictly decrease along the
    ladder. With ``to_normal`` the per-level distance to N(0, 1) is added.
    """
    if len(level_samples) < 2:
        raise ValueError("a law comparison needs at least 2 ladder levels")
    xs = [np.asarray(x, dtype=float) for x in level_samples]
    for x in xs:
        _check_sample(x)
    ks = np.array([stats.ks_2samp(a, b).statistic for a, b in zip(xs, xs[1:])])
    crit = np.array([ks_critical_value(len(a), len(b), alpha) for a, b in zip(xs, xs[1:])])
    mono = bool(np.all(np.diff(ks) < 0))
    normal = np.array([ks_to_normal(x) for x in xs]) if to_normal else None
    return LawReport(ks, crit, mono, normal)


def dual_norm_fn(space) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised ``u -> |M u|_{U_h'}`` for coefficient arrays ``(..., dim)``."""
    M = space.mass
    fac = space.energy_factor

    def norm(d):
        d = np.asarray(d, dtype=float)
        flat = d.reshape(-1, d.shape[-1])
        r = flat @ M
        s = sla.cho_solve(fac, r.T).T
        return np.sqrt(np.maximum(np.sum(r * s, axis=1), 0.0)).reshape(d.shape[:-1])

    return norm


@dataclass
class MomentAudit:
    bound_id: str
    p: float
    lhs_terms: dict
    rhs_terms: dict
    prefactor: float = 1.0

    @property
    def lhs(self) -> float:
        return float(sum(self.lhs_terms.values()))

    @property
    def rhs(self) -> float:
        return float(self.prefactor * sum(self.rhs_terms.values()))

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 1.0 if self.lhs == 0 else float("inf")
        return self.lhs / self.rhs

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.lhs) and np.isfinite(self.rhs) and np.isfinite(self.ratio))


BOUND_IDS = ("heat-energy", "harmonic-structural")


def _lp(values: np.ndarray, p: float, w: np.ndarray) -> float:
    """``E[|X|^p]^{1/p}`` for a sample of nonnegative ``X``."""
    return float((w @ np.abs(values) ** p) ** (1.0 / p))


def moment_bound_audit(records: Sequence[TrajectoryRecord], bound_id: str, p: float = 2.0,
                       weights: np.ndarray | None = None, growth: float = 0.0) -> MomentAudit:
    """Both sides of an a-priori moment bound with its exponents; the ratio is the implied constant.

    ``heat-energy`` (linear parabolic records):
    ``|max_n |u^n|_H|_p + |(sum tau |u^n|_U^2)^{1/2}|_p + |(sum |du|_H^2)^{1/2}|_p``
    against ``|u^0|_p + |(sum tau |f^n|_{U'}^2)^{1/2}|_p + T^{1/2-1/p} (E sum tau |g|_H^p)^{1/p}``.

    ``harmonic-structural`` (harmonic-flow records, ``I`` the penalised
    Dirichlet energy, ``|.|_H`` the gradient seminorm, ``q = q' = 2``):
    ``|max_n I(u^n)^{1/2}|_p + |a|_{L^p(L^2(L^2))} + |(sum |grad du|^2)^{1/2}|_p``
    against ``(1 + C T/N)^{N/p} (|I(u^0)^{1/2}|_p + |f|_{L^p(L^2(L^2))})`` with
    ``C = growth`` the constant in ``|g|_H <= C I(u)^{1/2}``.
    """
    if bound_id not in BOUND_IDS:
        raise ValueError(f"unknown bound id {bound_id!r}; expected one of {BOUND_IDS}")
    if p < 2:
        raise ValueError("the moment bounds are stated for p >= 2")
    if not records:
        raise ValueError("no records")
    grid = records[0].grid
    tau, T, N = grid.tau, grid.T, grid.N
    w = np.full(len(records), 1.0 / len(records)) if weights is None else np.asarray(weights, dtype=float)
    sp = records[0].space
    M, K = sp.mass, sp.stiffness
    U = np.stack([r.levels for r in records])
    dU = np.diff(U, axis=1)
    if bound_id == "heat-energy":
        h_sq = np.sum((U @ M) * U, axis=-1)
        u_sq = np.sum((U[:, 1:] @ (K + M)) * U[:, 1:], axis=-1)
        inc_sq = np.sum((dU @ M) * dU, axis=-1)
        F = np.stack([r.f for r in records]).reshape(-1, sp.dim)
        f_dual_sq = np.sum(F * sla.cho_solve(sp.energy_factor, F.T).T, axis=-1).reshape(len(records), N)
        G = np.stack([r.g for r in records])
        g_h = np.sqrt(np.maximum(np.sum((G @ M) * G, axis=-1), 0.0))
        lhs = {
            "max_h": _lp(np.sqrt(h_sq.max(axis=1)), p, w),
            "l2_u": _lp(np.sqrt(tau * u_sq.sum(axis=1)), p, w),
            "increments": _lp(np.sqrt(inc_sq.sum(axis=1)), p, w),
        }
        rhs = {
            "u0": _lp(np.sqrt(h_sq[:, 0]), p, w),
            "f": _lp(np.sqrt(tau * np.maximum(f_dual_sq, 0.0).sum(axis=1)), p, w),
            "g": T ** (0.5 - 1.0 / p) * float((w @ np.sum(tau * g_h**p, axis=1)) ** (1.0 / p)),
        }
        return MomentAudit(bound_id, p, lhs, rhs)
    from .harmonic import dirichlet_energy

    eps = records[0].aux["epsilon"]
    I = np.array([[dirichlet_energy(sp, u, eps) for u in r.levels] for r in records])
    A = np.stack([r.aux["a"] for r in records])
    a_sq = np.sum((A @ M) * A, axis=-1)
    grad_inc = np.sum((dU @ K) * dU, axis=-1)
    Fc = np.stack([r.aux["f_coef"] for r in records])
    f_sq = np.sum((Fc @ M) * Fc, axis=-1)
    lhs = {
        "max_energy": _lp(np.sqrt(np.maximum(I[:, 1:].max(axis=1), 0.0)), p, w),
        "a": _lp(np.sqrt(tau * a_sq.sum(axis=1)), p, w),
        "increments": _lp(np.sqrt(grad_inc.sum(axis=1)), p, w),
    }
    rhs = {
        "energy0": _lp(np.sqrt(np.maximum(I[:, 0], 0.0)), p, w),
        "f": _lp(np.sqrt(tau * f_sq.sum(axis=1)), p, w),
    }
    return MomentAudit(bound_id, p, lhs, rhs, prefactor=(1.0 + growth * T / N) ** (N / p))

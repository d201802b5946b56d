"""Command-line experiment runner.

Subcommands:

``run``       solve an ensemble; write trajectories, ``functionals.csv``, ``audit.json``
``converge``  repeat over the config's refinement ladder; write ``ladder.csv``
``verify``    structural and identity audits on synthetic inputs only
``selftest``  exact checks by exhaustive Rademacher enumeration

Numeric outputs are deterministic for a fixed config; wall-clock data goes
to ``metadata.json`` only. Exit code 0 means every enforced audit passed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__, harmonic, heat, monotone, navier_stokes
from .config import ConfigError, ExperimentConfig, load_config, serialize_config
from .expr import compile_expr
from .galerkin import FourierDivFree2D, P1Dirichlet1D, P1Neumann1D_vec3, SpectralSine1D
from .montecarlo import EnsembleConfig, holder_fit, martingale_tests, run_ensemble
from .noise import IncrementKind, TimeGrid, coarsen, gen_increments
from .paths import PolyPath
from .solvers import NewtonSettings, NonConvergence

EXIT_OK, EXIT_AUDIT, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _num(x) -> str:
    """Shortest round-trip text for a float (deterministic across runs)."""
    return repr(float(x))


# -- problem construction ----------------------------------------------------------------


@dataclass
class Built:
    kind: str
    grid: TimeGrid
    space: object
    simulate: Callable
    problem: object


def _field1(text: str, variables=("x",)):
    e = compile_expr(text, variables)
    return None if e.is_zero else e


def build_problem(cfg: ExperimentConfig, N: int | None = None, size: int | None = None) -> Built:
    pc = cfg.problem_config
    grid = TimeGrid(cfg.grid.T, N or cfg.grid.N)
    size = size or pc.size
    newton = NewtonSettings(tol=cfg.verify.tolerance)
    kind = cfg.problem
    if kind in ("heat", "qlap"):
        u0 = compile_expr(pc.u0, ("x",))
        f, g = _field1(pc.f, ("t", "x")), _field1(pc.g, ("t", "x"))
        u0_fn = lambda x: u0(x=x)  # noqa: E731
        f_fn = (lambda t, x: f(t=t, x=x)) if f else None
        g_fn = (lambda t, x: g(t=t, x=x)) if g else None
        if kind == "heat":
            space = SpectralSine1D(size) if pc.space == "sine" else P1Dirichlet1D(size)
            problem = heat.LinearParabolicProblem.from_fields(space, u0_fn, f_fn, g_fn)
            sim = lambda noise: heat.run_path(problem, grid, noise)  # noqa: E731
        else:
            space = P1Dirichlet1D(size)
            problem = monotone.MonotoneProblem.from_fields(space, pc.q, u0_fn, f_fn, g_fn, newton)
            sim = lambda noise: monotone.run_path(problem, grid, noise)  # noqa: E731
        return Built(kind, grid, space, sim, problem)
    if kind == "harmonic":
        space = P1Neumann1D_vec3(size)
        u0 = [compile_expr(s, ("x",)) for s in pc.u0]
        fs = [compile_expr(s, ("t", "x")) for s in pc.f]
        c0 = space.interpolate(lambda x: np.stack([e(x=x) for e in u0], axis=-1))
        f_fn = None
        if not all(e.is_zero for e in fs):
            f_fn = lambda t: space.interpolate(  # noqa: E731
                lambda x: np.stack([e(t=t, x=x) for e in fs], axis=-1))
        problem = harmonic.PenaltyFlowProblem(space, pc.epsilon, pc.gamma, c0, f_fn, newton)
        return Built(kind, grid, space, lambda noise: harmonic.run_path(problem, grid, noise), problem)
    space = FourierDivFree2D(size)
    u0 = [compile_expr(s, ("x", "y")) for s in pc.u0]
    fs = [compile_expr(s, ("t", "x", "y")) for s in pc.f]
    gs = [compile_expr(s, ("t", "x", "y", "u1", "u2")) for s in pc.gamma]
    k = compile_expr(pc.k, ("t", "x", "y"))
    c0 = space.load(lambda X, Y: (u0[0](x=X, y=Y), u0[1](x=X, y=Y)))
    f_fn = None if all(e.is_zero for e in fs) else (
        lambda t, X, Y: (fs[0](t=t, x=X, y=Y), fs[1](t=t, x=X, y=Y)))
    g_fn = None if all(e.is_zero for e in gs) else (
        lambda t, X, Y, U1, U2: tuple(e(t=t, x=X, y=Y, u1=U1, u2=U2) for e in gs))
    k_fn = None if k.is_zero else (lambda t, X, Y: k(t=t, x=X, y=Y))
    problem = navier_stokes.NSProblem2D(space, pc.mu, c0, f_fn, g_fn, pc.C_growth, k_fn, pc.stepping, newton)
    return Built(kind, grid, space, lambda noise: navier_stokes.run_path(problem, grid, noise), problem)


def _functional(name: str, built: Built) -> Callable:
    sp = built.space
    M, K = sp.mass, sp.stiffness
    if name == "energy_T":
        return lambda r: r.levels[-1] @ (M @ r.levels[-1])
    if name == "coef0_T":
        return lambda r: r.levels[-1][0]
    if name == "max_energy":
        return lambda r: np.max(np.sum((r.levels @ M) * r.levels, axis=1))
    if name == "dirichlet_T":
        if built.kind == "harmonic":
            return lambda r: harmonic.dirichlet_energy(sp, r.levels[-1], r.aux["epsilon"])
        return lambda r: 0.5 * r.levels[-1] @ (K @ r.levels[-1])
    if name == "sphere_T":
        if built.kind != "harmonic":
            raise ConfigError("sphere_T is only defined for the harmonic problem", key="ensemble.functionals")
        return lambda r: harmonic.sphere_deviation(sp, r.levels[-1])
    raise ConfigError(f"unknown functional {name!r}", key="ensemble.functionals")


def _ensemble_config(cfg: ExperimentConfig, built: Built, noise_fn=None) -> EnsembleConfig:
    fns = {name: _functional(name, built) for name in cfg.ensemble.functionals}
    return EnsembleConfig(cfg.ensemble.paths, cfg.ensemble.seed, cfg.noise.kind, built.grid, built.simulate, fns,
                          threads=cfg.ensemble.threads, noise_fn=noise_fn)


def _coupled_noise(cfg: ExperimentConfig, grid: TimeGrid, finest: TimeGrid):
    """Gaussian ladders share one fine Brownian path per stream; other kinds use independent streams."""
    if IncrementKind.parse(cfg.noise.kind) is not IncrementKind.GAUSSIAN or finest.N % grid.N:
        return None
    seed = cfg.ensemble.seed
    return lambda p: coarsen(gen_increments(IncrementKind.GAUSSIAN, finest, seed, p), grid)


# -- audits ----------------------------------------------------------------------------


def _audit(name: str, value: float, threshold: float, passed: bool, enforced: bool = True, **extra) -> dict:
    entry = {"name": name, "value": float(value), "threshold": float(threshold), "pass": bool(passed)}
    if not enforced:
        entry["enforced"] = False
    entry.update(extra)
    return entry


def _le(name, value, threshold, **kw):
    return _audit(name, value, threshold, bool(value <= threshold), **kw)


def run_audits(cfg: ExperimentConfig, built: Built, ens) -> list[dict]:
    v, tol = cfg.verify, cfg.verify.tolerance
    recs = ens.records
    out = []
    if built.kind == "harmonic":
        if v.energy:
            checks = [harmonic.harmonic_energy_check(r) for r in recs]
            out.append(_le("energy_identity", max(c.max_residual() for c in checks), 10 * tol))
            pr = built.problem
            if pr.f is None and not np.any(pr.gamma):
                rise = max(float(np.max(np.diff(c.energy))) if len(c.energy) > 1 else 0.0 for c in checks)
                out.append(_le("energy_monotone", rise, 10 * tol))
        if v.structure:
            chain, pen, grad = 0.0, 0.0, 0.0
            for r in recs:
                for n in range(1, r.grid.N + 1):
                    if np.isfinite(r.aux["epsilon"]):
                        chain = max(chain, harmonic.chain_rule_check(built.space, r.levels[n - 1], r.levels[n],
                                                                     r.aux["epsilon"]))
                    o = harmonic.orthogonality_checks(built.space, r.levels[n - 1], r.levels[n], r.aux["gamma"])
                    pen, grad = max(pen, o["penalty_noise"]), max(grad, o["gradient"])
            out.append(_le("chain_rule", chain, 1e-12))
            out.append(_le("orthogonality_penalty_noise", pen, 1e-14))
            out.append(_le("orthogonality_gradient", grad, 1e-14))
    else:
        if v.energy:
            linear = built.kind == "heat" or (built.kind == "ns2d" and built.problem.stepping.value == "semi")
            rel = max(r.ledger.max_relative() for r in recs)
            out.append(_le("energy_identity", rel, tol if linear else 10 * tol))
        if v.structure and built.kind == "ns2d":
            out.append(_le("divergence", max(navier_stokes.divergence_max(r) for r in recs), 1e-12))
            slack = min(float(np.min(navier_stokes.growth_envelope_check(built.problem, r))) for r in recs)
            out.append(_audit("growth_envelope", slack, -1e-12, bool(slack >= -1e-12)))
            rng = np.random.default_rng(cfg.ensemble.seed)
            worst = 0.0
            for _ in range(100):
                u, w = rng.standard_normal((2, built.space.dim))
                b = navier_stokes.skew_symmetry_check(built.space, u, w)
                worst = max(worst, abs(b) / (np.linalg.norm(u) * np.linalg.norm(w) ** 2))
            out.append(_le("skew_symmetry", worst, 1e-12))
        if v.structure and built.kind == "qlap":
            rep = monotone.monotone_checks(built.space, built.problem.q, samples=200, seed=cfg.ensemble.seed)
            out.append(_audit("monotonicity_gap", rep.min_gap, rep.gap_threshold, rep.monotone))
    if v.martingale and cfg.ensemble.paths >= 2:
        rep = martingale_tests(ens)
        with np.errstate(divide="ignore", invalid="ignore"):
            zs = np.where(rep.step_se > 0, np.abs(rep.step_means) / rep.step_se, 0.0)
        out.append(_audit("martingale_bands", float(np.max(zs, initial=0.0)), rep.z, rep.passed))
    return out


# -- output ----------------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def _write_trajectories(out: Path, recs, cap: int):
    for p, rec in enumerate(recs[:cap]):
        dim = rec.levels.shape[1]
        header = ["step", "time"] + [f"c{i}" for i in range(dim)]
        rows = ([n, _num(t)] + [_num(c) for c in rec.levels[n]] for n, t in enumerate(rec.grid.times))
        _write_csv(out / "trajectories" / f"path_{p:05d}.csv", header, rows)


def _write_metadata(out: Path, cfg: ExperimentConfig, command: str, started: _dt.datetime, **extra):
    meta = {
        "command": command,
        "started_utc": started.isoformat(),
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": serialize_config(cfg) if cfg is not None else None,
        **extra,
    }
    _write_json(out / "metadata.json", meta)


def _report_audits(out: Path, audits: list[dict]) -> bool:
    ok = all(a["pass"] for a in audits if a.get("enforced", True))
    _write_json(out / "audit.json", {"passed": ok, "audits": audits})
    for a in audits:
        flag = "PASS" if a["pass"] else ("FAIL" if a.get("enforced", True) else "info")
        print(f"[{flag}] {a['name']}: {a['value']:.3e} (threshold {a['threshold']:.3e})")
    return ok


def _nonconvergence_audit(exc: NonConvergence, tol: float) -> dict:
    return _audit("nonlinear_solve", exc.residual, tol, False, path=exc.path, step=exc.step, message=str(exc))


def _figures_run(out: Path, built: Built, ens, audits):
    from . import plotting

    recs = ens.records
    M = built.space.mass
    norms = [np.sqrt(np.maximum(np.sum((r.levels @ M) * r.levels, axis=1), 0.0)) for r in recs[:8]]
    plotting.plot_trajectories(built.grid.times, norms, out / "figures" / "trajectories.png")
    for name, x in ens.samples.items():
        plotting.plot_histogram(x, name, out / "figures" / f"hist_{name}.png")
    if built.kind == "harmonic":
        res = np.array([harmonic.harmonic_energy_check(r).residual for r in recs])
    else:
        res = np.array([r.ledger.residual for r in recs])
    thr = next((a["threshold"] for a in audits if a["name"] == "energy_identity"), None)
    plotting.plot_energy_residuals(res, out / "figures" / "energy_residuals.png", thr)


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    started = _dt.datetime.now(_dt.timezone.utc)
    out.mkdir(parents=True, exist_ok=True)
    try:
        built = build_problem(cfg)
        ecfg = _ensemble_config(cfg, built)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        ens = run_ensemble(ecfg)
    except NonConvergence as exc:
        _report_audits(out, [_nonconvergence_audit(exc, cfg.verify.tolerance)])
        _write_metadata(out, cfg, "run", started, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_trajectories(out, ens.records, cfg.ensemble.max_trajectories)
    rows = [[name, _num(e.mean), _num(e.variance), _num(e.std_error), e.P] for name, e in ens.estimates.items()]
    _write_csv(out / "functionals.csv", ["functional", "mean", "variance", "std_error", "P"], rows)
    audits = run_audits(cfg, built, ens)
    ok = _report_audits(out, audits)
    if cfg.output.figures:
        _figures_run(out, built, ens, audits)
    _write_metadata(out, cfg, "run", started)
    return EXIT_OK if ok else EXIT_AUDIT


LADDER_DELTA_LEVELS = 4


def cmd_converge(cfg: ExperimentConfig, out: Path) -> int:
    started = _dt.datetime.now(_dt.timezone.utc)
    ladder = cfg.ensemble.ladder
    if len(ladder) < 2:
        print("error: converge needs a ladder of at least 2 levels (ensemble.ladder)", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    T = cfg.grid.T
    deltas = T * 2.0 ** -np.arange(1, LADDER_DELTA_LEVELS + 1)
    levels = []
    audits = []
    finest = TimeGrid(T, ladder[-1][0])
    try:
        for N, size in ladder:
            built = build_problem(cfg, N=N, size=size)
            ens = run_ensemble(_ensemble_config(cfg, built, _coupled_noise(cfg, built.grid, finest)))
            M = built.space.mass
            hnorm = lambda d, M=M: np.sqrt(np.maximum(np.sum((d @ M) * d, axis=-1), 0.0))  # noqa: E731
            try:
                fit = holder_fit([PolyPath(r.grid, r.levels) for r in ens.records], cfg.ensemble.holder_p,
                                 deltas, hnorm)
                theta = fit.theta_hat
            except ValueError:
                theta = float("nan")
            if cfg.verify.energy and built.kind != "harmonic":
                rel = max(r.ledger.max_relative() for r in ens.records)
                linear = built.kind == "heat" or (built.kind == "ns2d" and built.problem.stepping.value == "semi")
                thr = cfg.verify.tolerance if linear else 10 * cfg.verify.tolerance
                audits.append(_le(f"energy_identity[N={N}]", rel, thr))
            levels.append((N, built.space.dim, ens, theta))
    except NonConvergence as exc:
        _report_audits(out, audits + [_nonconvergence_audit(exc, cfg.verify.tolerance)])
        _write_metadata(out, cfg, "converge", started, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    from scipy import stats

    rows = []
    for name in cfg.ensemble.functionals:
        ks = [stats.ks_2samp(a[2].samples[name], b[2].samples[name]).statistic for a, b in zip(levels, levels[1:])]
        for i, (N, dim, ens, theta) in enumerate(levels):
            e = ens.estimates[name]
            rows.append([i, N, dim, name, _num(e.mean), _num(e.std_error),
                         _num(ks[i]) if i < len(ks) else "", _num(theta)])
        trend = bool(np.all(np.diff(ks) < 0)) if len(ks) > 1 else True
        audits.append(_audit(f"ks_trend[{name}]", ks[-1], ks[0], trend, enforced=False,
                             note="KS trends are evidence of convergence in law, not a proof"))
    _write_csv(out / "ladder.csv", ["level", "N", "dim", "functional", "mean", "std_error", "ks_to_next", "theta_hat"],
               rows)
    ok = _report_audits(out, audits)
    if cfg.output.figures:
        from . import plotting

        Ns = np.array([lv[0] for lv in levels])
        for name in cfg.ensemble.functionals:
            means = [lv[2].estimates[name].mean for lv in levels]
            ses = [lv[2].estimates[name].std_error for lv in levels]
            plotting.plot_ladder(Ns, np.array(means), np.array(ses), name, out / "figures" / f"ladder_{name}.png")
    _write_metadata(out, cfg, "converge", started)
    return EXIT_OK if ok else EXIT_AUDIT


# -- verify / selftest -----------------------------------------------------------------


def verify_audits(seed: int = 0) -> list[dict]:
    """Identity audits on synthetic inputs (no config needed)."""
    from .galerkin import q_gradient_norm, q_laplacian_apply
    from .noise import rademacher_enumeration

    rng = np.random.default_rng(seed)
    out = []
    # Ito isometry by enumeration
    grid = TimeGrid(1.0, 8)
    xi = rademacher_enumeration(grid)
    g = rng.standard_normal((grid.N, 3))
    X = np.cumsum(g[None] * xi[..., None], axis=1)
    lhs = np.mean(np.sum(X**2, axis=-1), axis=0)
    rhs = np.cumsum(grid.tau * np.sum(g**2, axis=1))
    out.append(_le("ito_isometry", float(np.max(np.abs(lhs - rhs))), 1e-12))
    # heat energy identity
    sp = P1Dirichlet1D(16)
    pr = heat.LinearParabolicProblem.from_fields(sp, lambda x: np.sin(np.pi * x), lambda t, x: 1 + 0 * x,
                                                 lambda t, x: x)
    rel = max(heat.run_path(pr, grid, gen_increments("gaussian", grid, seed, p)).ledger.max_relative()
              for p in range(20))
    out.append(_le("heat_energy_identity", rel, 1e-10))
    # q-Laplacian
    for q in (1.5, 3.0, 4.0):
        rep = monotone.monotone_checks(sp, q, samples=200, seed=seed)
        out.append(_audit(f"qlap_monotone[q={q}]", rep.min_gap, rep.gap_threshold, rep.monotone))
        u = rng.standard_normal(sp.dim)
        a, b = q_laplacian_apply(sp, u, q) @ u, q_gradient_norm(sp, u, q)
        out.append(_le(f"qlap_coercivity_identity[q={q}]", abs(a - b) / max(abs(b), 1e-300), 1e-12))
    # harmonic structure
    hs = P1Neumann1D_vec3(16)
    gam = rng.standard_normal(3)
    gam /= np.linalg.norm(gam)
    modes = np.cos(np.pi * np.outer(hs.nodes, np.arange(3)))
    chain, pen, grad = 0.0, 0.0, 0.0
    for _ in range(50):
        # smooth unit-scale fields, as produced by the flow
        u0, u1 = (hs.flat(modes @ rng.uniform(-0.5, 0.5, (3, 3))) for _ in range(2))
        chain = max(chain, harmonic.chain_rule_check(hs, u0, u1, 0.1))
        o = harmonic.orthogonality_checks(hs, u0, u1, gam)
        pen, grad = max(pen, o["penalty_noise"]), max(grad, o["gradient"])
    out.append(_le("harmonic_chain_rule", chain, 1e-12))
    out.append(_le("harmonic_orthogonality_penalty_noise", pen, 1e-14))
    out.append(_le("harmonic_orthogonality_gradient", grad, 1e-14))
    # Navier-Stokes skew symmetry and divergence
    fs = FourierDivFree2D(4)
    worst = 0.0
    for _ in range(100):
        u, w = rng.standard_normal((2, fs.dim))
        worst = max(worst, abs(navier_stokes.skew_symmetry_check(fs, u, w)) / (np.linalg.norm(u) * np.linalg.norm(w) ** 2))
    out.append(_le("ns_skew_symmetry", worst, 1e-12))
    X, Y = fs.grid_points(32)
    div = np.max(np.abs(fs.divergence(rng.standard_normal(fs.dim), X, Y)))
    out.append(_le("ns_divergence", div, 1e-12))
    return out


def selftest_audits() -> list[dict]:
    """Exact expectation checks by exhaustive Rademacher enumeration."""
    from .noise import rademacher_enumeration

    out = []
    grid = TimeGrid(1.0, 10)
    W = rademacher_enumeration(grid).sum(axis=1)
    w = 2.0 ** -grid.N
    out.append(_le("wiener_mean", abs(w * W.sum()), 1e-12))
    out.append(_le("wiener_variance", abs(w * np.sum(W**2) - grid.T), 1e-12))
    # martingale property of an additive heat problem
    g8 = TimeGrid(1.0, 8)
    sp = SpectralSine1D(4)
    pr = heat.LinearParabolicProblem.from_fields(sp, lambda x: np.sin(np.pi * x), None, lambda t, x: x)
    ecfg = EnsembleConfig(2, 0, "rademacher", g8, lambda n: heat.run_path(pr, g8, n),
                          {"energy_T": lambda r: r.levels[-1] @ r.levels[-1]}, enumerate=True)
    ens = run_ensemble(ecfg)
    rep = martingale_tests(ens)
    out.append(_le("martingale_step_means", float(np.max(np.abs(rep.step_means))), 1e-12))
    iu = np.triu_indices(g8.N, 1)
    out.append(_le("martingale_cross_terms", float(np.max(np.abs(rep.cross_means[iu]))), 1e-12))
    # discrete Ito balance for a 2-dof q-Laplacian
    qs = P1Dirichlet1D(3)
    qp = monotone.MonotoneProblem.from_fields(qs, 3.0, lambda x: np.sin(np.pi * x), None, lambda t, x: x)
    qcfg = EnsembleConfig(2, 0, "rademacher", g8, lambda n: monotone.run_path(qp, g8, n),
                          {"u_T": lambda r: r.levels[-1][0]}, enumerate=True)
    bal = monotone.ito_balance(run_ensemble(qcfg).records, np.full(2**g8.N, 2.0**-g8.N))
    out.append(_le("ito_balance", abs(bal.gap), 10 * qp.newton.tol))
    return out


# -- entry point -----------------------------------------------------------------------


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    ens = cfg.ensemble
    if args.paths is not None:
        ens = dataclasses.replace(ens, paths=args.paths)
    if args.seed is not None:
        ens = dataclasses.replace(ens, seed=args.seed)
    if args.threads is not None:
        ens = dataclasses.replace(ens, threads=args.threads)
    ens.validate("ensemble")
    cfg = dataclasses.replace(cfg, ensemble=ens)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, dir=str(args.out)))
    return cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdelab", description="Monte Carlo experiments for Galerkin SPDE schemes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_cfg in (("run", True), ("converge", True), ("verify", False), ("selftest", False)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=needs_cfg, help="TOML experiment description")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    cfg = None
    if args.config is not None:
        try:
            cfg = _apply_overrides(load_config(args.config), args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.command == "run":
        return cmd_run(cfg, Path(cfg.output.dir))
    if args.command == "converge":
        return cmd_converge(cfg, Path(cfg.output.dir))
    started = _dt.datetime.now(_dt.timezone.utc)
    seed = args.seed if args.seed is not None else 0
    audits = verify_audits(seed) if args.command == "verify" else selftest_audits()
    out = args.out or (Path(cfg.output.dir) if cfg else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        ok = _report_audits(out, audits)
        _write_metadata(out, cfg, args.command, started)
    else:
        ok = all(a["pass"] for a in audits)
        for a in audits:
            print(f"[{'PASS' if a['pass'] else 'FAIL'}] {a['name']}: {a['value']:.3e} (threshold {a['threshold']:.3e})")
    return EXIT_OK if ok else EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())

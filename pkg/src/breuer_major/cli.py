"""Command-line driver: ``breuer-major <subcommand> --config FILE [options]``.

Exit codes: 0 when every check passes, 2 when a verification check fails,
1 on any error (bad config, unmet precondition).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .covariance import check_c1, eval_r, whiten
from .errors import BreuerMajorError, C1FailureError, DegenerateFunctionalError, InsufficientReplicatesError
from .harness import (
    clt_test,
    dyadic_grid,
    dyadic_pairs,
    fdd_test,
    increment_test,
    run_replicates,
)
from .hermite import chaos_coefficients, hermite_rank
from .jsonio import write_report
from .second_chaos import second_chaos_report
from .simulate import empirical_covariance, simulate_many
from .variance import v_limit

log = logging.getLogger("breuer_major")

SUBCOMMANDS = ("expand", "rank", "variance", "second-chaos", "simulate", "covcheck",
               "verify-clt", "verify-fclt")
TRACE_TOL = 1e-4
SPECTRAL_TOL = 1e-3
COV_SE = 3.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="breuer-major", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", metavar="PATH", help="INI experiment file")
    p.add_argument("--seed", type=int, metavar="U64", help="base seed (seeds.base)")
    p.add_argument("--replicates", type=int, metavar="N", help="replicate count (seeds.replicates)")
    p.add_argument("--out", metavar="DIR", help="output directory (output.dir)")
    p.add_argument("--threads", type=int, default=1, metavar="N",
                   help="worker threads; results do not depend on it")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="section.key=value, may be repeated")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _base_report(cmd: str, cfg: ExperimentConfig) -> dict:
    return {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "subcommand": cmd, "version": __version__, "config": cfg.echo()}


def _setup(cfg: ExperimentConfig):
    """Functional, whitened model and chaos expansion of the whitened functional."""
    G = cfg.functional()
    model = cfg.covariance_model()
    cfg.validate()
    model, Gw = whiten(model, G)
    e = chaos_coefficients(Gw, q_max=int(cfg.get("chaos", "q_max")),
                           quadrature_order=int(cfg.get("chaos", "quadrature_order")))
    return G, model, Gw, e


def _limit_variance(cfg, model, e):
    R = cfg.get("variance", "R")
    return v_limit(e, model, R=None if R is None else float(R),
                   s_values=[float(s) for s in cfg.get("variance", "s_values") or []])


def cmd_expand(cfg, out, threads):
    G = cfg.functional()
    e = chaos_coefficients(G, q_max=int(cfg.get("chaos", "q_max")),
                           quadrature_order=int(cfg.get("chaos", "quadrature_order")))
    rep = _base_report("expand", cfg)
    rep["expansion"] = e.to_dict()
    try:
        rep["rank"] = hermite_rank(e)
    except DegenerateFunctionalError:
        rep["rank"] = None
    rep["residual_mass"] = e.residual_mass
    rep["note"] = "membership of G in L^2 is assumed; only finiteness of the quadrature estimate is tested"
    write_report(out / "report.json", rep)
    terms = sum(len(t) for t in e.levels.values())
    print(f"expand {e.label}: {terms} terms up to q={e.q_max}, captured mass "
          f"{e.captured_mass:.10g} of {e.total_mass:.10g}")
    return 0


def cmd_rank(cfg, out, threads):
    e = chaos_coefficients(cfg.functional(), q_max=int(cfg.get("chaos", "q_max")),
                           quadrature_order=int(cfg.get("chaos", "quadrature_order")))
    d = hermite_rank(e)
    rep = _base_report("rank", cfg)
    rep.update({"functional": e.label, "rank": d, "tolerance": 1e-9})
    write_report(out / "report.json", rep)
    print(d)
    return 0


def cmd_variance(cfg, out, threads):
    _, model, _, e = _setup(cfg)
    rep = _base_report("variance", cfg)
    try:
        vr = _limit_variance(cfg, model, e)
    except C1FailureError as exc:
        rep.update({"refused": str(exc), "c1": exc.report.to_dict()})
        write_report(out / "report.json", rep)
        print(f"variance refused: {exc}")
        return 2
    rep["variance"] = vr.to_dict()
    rep["V"] = vr.V
    write_report(out / "report.json", rep)
    (out / "variance_s.csv").write_text(vr.to_csv())
    print(f"V = {vr.V:.10g} (rank {vr.rank}, per chaos "
          + ", ".join(f"q={q}: {v:.6g}" for q, v in sorted(vr.per_chaos.items())) + ")")
    return 0


def cmd_second_chaos(cfg, out, threads):
    _, model, Gw, e = _setup(cfg)
    rep = _base_report("second-chaos", cfg)
    v2_chaos = None
    if 2 in e.nonzero_levels():
        v2_chaos = v_limit(e, model).per_chaos.get(2)
    sc = second_chaos_report(Gw, model, int(cfg.get("chaos", "quadrature_order")), v2_chaos=v2_chaos)
    body = sc.to_dict()
    scale = max(1.0, abs(sc.V2_trace))
    checks = {}
    if sc.V2_chaos is not None:
        checks["trace_vs_chaos"] = abs(sc.V2_chaos - sc.V2_trace) < TRACE_TOL * scale
    if sc.V2_spectral is not None:
        checks["spectral_vs_trace"] = abs(sc.V2_spectral - sc.V2_trace) < SPECTRAL_TOL * scale
    body.update({"thresholds": {"trace_vs_chaos": TRACE_TOL, "spectral_vs_trace": SPECTRAL_TOL,
                                "scale": "max(1, V2_trace)"}, "checks": checks})
    rep["second_chaos"] = body
    write_report(out / "report.json", rep)
    print(f"V2 trace = {sc.V2_trace:.10g}, spectral = {sc.V2_spectral}, chaos = {sc.V2_chaos}")
    return 0 if all(checks.values()) else 2


def cmd_covcheck(cfg, out, threads):
    G, model, Gw, e = _setup(cfg)
    d = cfg.get("covcheck", "d")
    d = hermite_rank(e) if d is None else int(d)
    R = cfg.get("covcheck", "R")
    c1 = check_c1(model, d, None if R is None else float(R))
    rep = _base_report("covcheck", cfg)
    rep.update({"model": model.describe(), "c1": c1.to_dict()})
    write_report(out / "report.json", rep)
    print(f"(C1) with d={d} on [-{c1.R:g},{c1.R:g}]^{model.n}: "
          f"{'pass' if c1.passed else 'fail'} (boundary max {c1.boundary_max:.3g})")
    return 0 if c1.passed else 2


def cmd_simulate(cfg, out, threads):
    cfg.validate(needs_grid=True)
    spec, grid, seeds = cfg.spectral_model(), cfg.grid(), cfg.seeds()
    save = cfg.get("simulate", "save_fields")
    save = len(seeds) if save is None else int(save)
    samples = simulate_many(spec, grid, seeds, threads=threads)
    for i, smp in enumerate(samples[:save]):
        smp.save(out / "fields" / f"field_{i:05d}.bin")
    rep = _base_report("simulate", cfg)
    rep["grid"] = grid.to_dict()
    rep["imag_residue_max"] = max(s.imag_residue for s in samples)
    rep["channel_mean"] = np.mean([s.values.mean(axis=0) for s in samples], axis=0).tolist()
    rep["channel_variance"] = np.mean([s.values.var(axis=0) for s in samples], axis=0).tolist()
    code = 0
    if len(samples) >= 30:
        lags = [np.asarray(k, dtype=float) * grid.h for k in cfg.get("simulate", "lag_steps")]
        est = empirical_covariance(samples, lags)
        model = cfg.covariance_model()
        target = eval_r(model, est.lags)
        z = np.abs(est.r_hat - target) / np.where(est.stderr > 0, est.stderr, np.inf)
        ok = bool(np.all((z <= COV_SE) | (np.abs(est.r_hat - target) < 1e-12)))
        rep["covariance"] = {**est.to_dict(), "target": target.tolist(), "max_z": float(z.max()),
                             "threshold_se": COV_SE, "passed": ok}
        code = 0 if ok else 2
    write_report(out / "report.json", rep)
    print(f"simulated {len(samples)} fields on {grid.N}^{grid.n} sites, saved {min(save, len(seeds))}")
    return code


def _write_observations(path: Path, obs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "s", "L_s"])
        for o in obs:
            w.writerow([o.seed, repr(o.s), repr(o.L)])


def _write_paths(path: Path, paths) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "y", "Z"])
        for p in paths:
            for y, z in zip(p.y_grid, p.Z):
                w.writerow([p.seed, repr(float(y)), repr(float(z))])


def _clt_kwargs(cfg) -> dict:
    v = cfg.values["verify"]
    return {"variance_band": float(v["variance_band"]), "ks_level": float(v["ks_level"]),
            "min_replicates": int(v["min_replicates"]),
            "variance_rel_tol": None if v["variance_rel_tol"] is None else float(v["variance_rel_tol"])}


def _precheck_replicates(cfg, seeds):
    need = int(cfg.get("verify", "min_replicates"))
    if len(seeds) < need:
        raise InsufficientReplicatesError(
            f"{len(seeds)} replicates requested; the statistical checks need at least {need}")


def cmd_verify_clt(cfg, out, threads):
    cfg.validate(needs_grid=True)
    seeds = cfg.seeds()
    _precheck_replicates(cfg, seeds)
    G, model, Gw, e = _setup(cfg)
    if Gw is not G:
        raise BreuerMajorError("verification runs need a whitened model (r(0) = Id)")
    V = _limit_variance(cfg, model, e).V
    obs, _, _ = run_replicates(cfg.spectral_model(), cfg.grid(), G, seeds, G0=0.0, threads=threads)
    res = clt_test(obs, V, **_clt_kwargs(cfg))
    rep = _base_report("verify-clt", cfg)
    rep.update({"V": V, "clt": res.to_dict(), "passed": res.passed})
    write_report(out / "report.json", rep)
    _write_observations(out / "observations.csv", obs)
    s = res.statistics
    print(f"verify-clt: {'pass' if res.passed else 'FAIL'} var={s['variance']:.6g} V={V:.6g} "
          f"KS={s['ks_statistic']:.4g} (crit {res.thresholds['ks_critical']:.4g})")
    return 0 if res.passed else 2


def cmd_verify_fclt(cfg, out, threads):
    cfg.validate(needs_grid=True)
    seeds = cfg.seeds()
    _precheck_replicates(cfg, seeds)
    G, model, Gw, e = _setup(cfg)
    if Gw is not G:
        raise BreuerMajorError("verification runs need a whitened model (r(0) = Id)")
    V = _limit_variance(cfg, model, e).V
    v = cfg.values["verify"]
    levels = int(v["levels"])
    y = dyadic_grid(levels)
    obs, paths, _ = run_replicates(cfg.spectral_model(), cfg.grid(), G, seeds, G0=0.0,
                                   y_grid=y, threads=threads)
    kw = _clt_kwargs(cfg)
    per_y = {}
    for j, yj in enumerate(y):
        if yj > 0:
            per_y[f"{yj:g}"] = clt_test([p.Z[j] for p in paths], V * yj, **kw).to_dict()
    pairs = [tuple(float(a) for a in p) for p in v["fdd_pairs"]]
    for a, b in pairs:
        for yy in (a, b):
            if not np.any(np.abs(y - yy) < 1e-12):
                raise BreuerMajorError(f"verify.fdd_pairs: y={yy} is not on the dyadic grid of level {levels}")
    fdd = fdd_test(paths, V, pairs, n_se=float(v["fdd_se"]), min_replicates=kw["min_replicates"])
    inc = increment_test(paths, float(v["p"]), dyadic_pairs(levels), integrability=G.integrability,
                         spread_threshold=float(v["spread"]), min_replicates=kw["min_replicates"])
    passed = all(r["passed"] for r in per_y.values()) and fdd.passed and inc.passed
    rep = _base_report("verify-fclt", cfg)
    rep.update({"V": V, "clt_per_y": per_y, "fdd": fdd.to_dict(), "increments": inc.to_dict(),
                "passed": passed,
                "note": "functional convergence is checked on a finite y grid over [0, 1] only"})
    write_report(out / "report.json", rep)
    _write_observations(out / "observations.csv", obs)
    _write_paths(out / "paths.csv", paths)
    print(f"verify-fclt: {'pass' if passed else 'FAIL'} (fdd {fdd.passed}, increments "
          f"spread {inc.statistics.get('spread', math.nan):.3g})")
    return 0 if passed else 2


COMMANDS = {
    "expand": cmd_expand, "rank": cmd_rank, "variance": cmd_variance,
    "second-chaos": cmd_second_chaos, "simulate": cmd_simulate, "covcheck": cmd_covcheck,
    "verify-clt": cmd_verify_clt, "verify-fclt": cmd_verify_fclt,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        overrides = list(args.override)
        if args.seed is not None:
            overrides.append(f"seeds.base={args.seed}")
        if args.replicates is not None:
            overrides.append(f"seeds.replicates={args.replicates}")
        if args.out is not None:
            overrides.append(f"output.dir={json.dumps(args.out)}")
        if args.threads < 1:
            raise BreuerMajorError("--threads must be >= 1")
        cfg = load_config(args.config, overrides)
        out = Path(str(cfg.get("output", "dir")))
        out.mkdir(parents=True, exist_ok=True)
        log.info("running %s with %s", args.subcommand, cfg.source)
        return COMMANDS[args.subcommand](cfg, out, args.threads)
    except (BreuerMajorError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

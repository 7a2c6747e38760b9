"""``dimlab`` command line: simulate, id, rd, rdd and verify tasks.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure
(non-converged BA points or no usable fit window).  Artifacts are written
atomically as ``{task}_{hash}.csv`` and ``{task}_{hash}.json``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import oracles
from .config import ConfigError, ExperimentConfig, load_config
from .id_estimator import fit_dk, fit_do, id_sweep
from .process_models import SpecError, jump_statistics, sample_path
from .rd_solver import IntractableBlockError, RDCurve, RDPoint, rd_curve
from .rdd_estimator import WindowError, fit_rdd, fit_report, increment_curve, select_window
from .verify import verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _artifact_paths(cfg: ExperimentConfig) -> tuple[str, str]:
    stem = os.path.join(cfg.output_dir, f"{cfg.task}_{cfg.digest()}")
    return stem + ".csv", stem + ".json"


def _run_simulate(cfg):
    path = sample_path(cfg.spec, cfg.n, cfg.seed)
    summary = {"n": cfg.n, "seed": cfg.seed, "spec": cfg.spec.to_dict(),
               "mean": float(np.mean(path.values)), "min": float(np.min(path.values)),
               "max": float(np.max(path.values))}
    if cfg.spec.kind in ("piecewise_constant_markov", "iid_mixture"):
        count, frac = jump_statistics(path)
        summary.update({"jump_count": count, "jump_fraction": frac})
    line = f"simulate: n={cfg.n} mean={summary['mean']:.6g}"
    return path.to_csv(), summary, line, EXIT_OK


def _run_id(cfg):
    sweep = id_sweep(cfg.spec, cfg.k_max, cfg.b_grid, cfg.n, cfg.seed, cfg.scheme, cfg.estimator)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["k", "b", "H_cond", "undersampled"])
    for r in sweep.rows:
        w.writerow([r.k, r.b, repr(r.H_cond), int(r.undersampled)])
    if len(cfg.b_grid) < 3:
        raise ConfigError("b_grid needs at least 3 resolutions for a slope fit")
    est = fit_do(sweep) if cfg.k_max > 0 else fit_dk(sweep, 0)
    line = f"id: d_o={est.value:.4f} +/- {est.stderr:.4f} (k_max={cfg.k_max})"
    return out.getvalue(), est.to_dict(), line, EXIT_OK


def _curve_summary(curve: RDCurve) -> dict:
    return {"m": curve.m, "N": curve.N, "points": len(curve.points),
            "source_entropy": curve.source_entropy, "all_converged": curve.all_converged,
            "max_gap": float(curve.gaps.max()), "issues": curve.validate()}


def _run_rd(cfg):
    curve = rd_curve(cfg.spec, cfg.m, cfg.N, cfg.slopes(), tol=cfg.tol, max_iter=cfg.max_iter)
    summary = _curve_summary(curve)
    code = EXIT_OK if curve.all_converged else EXIT_NUMERIC
    line = f"rd: {len(curve.points)} points, max gap {summary['max_gap']:.2e}"
    return curve.to_csv(), summary, line, code


def _oracle_curve(cfg) -> RDCurve:
    o = cfg.oracle
    kinds = {"gaussian_rd": lambda prm: oracles.gaussian_curve(prm.get("variance", 1.0)),
             "uniform_slb": lambda prm: oracles.uniform_slb_curve(prm.get("width", 1.0))}
    if o["kind"] not in kinds:
        raise ConfigError(f"oracle.kind must be one of {sorted(kinds)}")
    oc = kinds[o["kind"]](o.get("params", {}))
    D_values = o.get("D_values") or np.geomspace(1e-5, 1e-2, 16).tolist()
    pts = [RDPoint(0.0, float(d), oc(float(d)), 0, 0.0) for d in D_values]
    return RDCurve(pts, 1, 0, float("inf"))


def _run_rdd(cfg):
    if cfg.oracle is not None:
        target = _oracle_curve(cfg)
        curve, prev = target, None
        cell = 0.0
    else:
        curve = rd_curve(cfg.spec, cfg.m, cfg.N, cfg.slopes(), tol=cfg.tol, max_iter=cfg.max_iter)
        target, prev = curve, None
        if cfg.form == "increment" and cfg.m > 1:
            s = cfg.slopes()
            extra = [s[0] * 10.0 ** (0.25 * j) for j in (4, 3, 2, 1)]
            prev = rd_curve(cfg.spec, cfg.m - 1, cfg.N, extra + s, tol=cfg.tol, max_iter=cfg.max_iter)
            target = increment_curve(curve, prev)
        cell = curve.cell_width
    window = select_window(target, cell, cfg.safety_factor)
    est = fit_rdd(target, window)
    report = fit_report(est, cfg.m or 1, cfg.N or 0)
    report["form"] = cfg.form if cfg.oracle is None else "oracle"
    report["curve"] = _curve_summary(curve)
    converged = curve.all_converged and (prev is None or prev.all_converged)
    line = (f"rdd: value={est.value:.4f} +/- {est.stderr:.4f} "
            f"window=[{window.D_min:.3g}, {window.D_max:.3g}]")
    return target.to_csv(), report, line, EXIT_OK if converged else EXIT_NUMERIC


def _run_verify(cfg):
    report = verify(cfg.seed, cfg.quick, progress=lambda c: print(c.line(), flush=True))
    line = f"verify: {'PASS' if report.overall else 'FAIL'} ({sum(c.passed for c in report.cases)}/{len(report.cases)} cases)"
    # a failing battery is reported like any other numerical failure
    return report.to_csv(), report.to_dict(), line, EXIT_OK if report.overall else EXIT_NUMERIC


RUNNERS = {"simulate": _run_simulate, "id": _run_id, "rd": _run_rd, "rdd": _run_rdd,
           "verify": _run_verify}


def run(cfg: ExperimentConfig) -> int:
    """Execute one configured task, write its artifacts, return the exit code."""
    try:
        csv_text, payload, line, code = RUNNERS[cfg.task](cfg)
    except (ConfigError, SpecError, IntractableBlockError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WindowError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    csv_path, json_path = _artifact_paths(cfg)
    write_atomic(csv_path, csv_text)
    # the output directory is left out so reruns elsewhere give identical bytes
    recorded = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    write_atomic(json_path, _dump({"config": recorded, "result": payload}))
    print(line)
    if code == EXIT_NUMERIC:
        reason = "verification cases failed" if cfg.task == "verify" else "solver did not converge at every point"
        print(f"numerical failure: {reason}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dimlab", description="Information and rate-distortion dimension experiments.")
    ap.add_argument("task", choices=sorted(RUNNERS))
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--quick", action="store_true", help="verify: reduced sample sizes")
    ap.add_argument("--seed", type=int, help="shorthand for --seed=<int> override")
    ap.add_argument("--output-dir", help="directory for artifacts")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, rest = ap.parse_known_args(argv)
    overrides = list(rest)
    bad = [o for o in overrides if not o.startswith("--") or "=" not in o]
    if bad:
        print(f"error: overrides must look like --field.sub=value, got {bad[0]!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    if args.quick:
        overrides.append("quick=true")
    if args.config is None and args.task != "verify":
        print(f"error: task {args.task} needs --config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, overrides, task=args.task)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

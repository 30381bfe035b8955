"""Configuration-driven experiment runner.

Verbs:

  tamedsde run <config.toml>          full experiment, writes report files
  tamedsde validate <config.toml>     dry run: condition checks + rate gate
  tamedsde list-models                catalog overview
  tamedsde describe-model <name>      certificate constants for one model

Exit codes: 0 success; 2 invalid configuration (including a refused rate
assertion); 3 model evaluation error; 4 an asserted acceptance window
failed; 5 completed with divergence/explosion findings.

Report files (written into the configured output directory): ``errors.csv``
(strong/uniform/one-step statistics, one row per (n, p)), ``moments.csv``,
``summary.json`` (fitted orders, rate-gate verdicts, assertion outcomes) and
``manifest.json`` (config snapshot, phase timings, file digests).  CSV and
summary content is byte-stable under re-runs with the same config; floats
are formatted as shortest round-trip decimals.
"""
from __future__ import annotations

import argparse
import ast
import csv
import dataclasses
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import (
    as_rate_diagnostic,
    error_report,
    fit_order,
    moment_diagnostic,
    one_step_diagnostic,
)
from .config import ConfigError, ExperimentConfig, load_config
from .core import (
    ModelEvaluationError,
    SampleSpec,
    validate_certificate,
    validate_p_condition,
)
from .integrator import run_coupled_mc, run_single_resolution
from .models import MODELS, get_model
from .taming import check_B1_rate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_ASSERT = 4
EXIT_FINDINGS = 5


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _scheme_cols(config: ExperimentConfig):
    s = config.scheme
    return [s.kind, s.alpha, s.l if s.l is not None else ""]


def _p_verdicts(config: ExperimentConfig, cert):
    out = {}
    for p in config.strong_ps:
        v = validate_p_condition(cert, config.scheme, p)
        out[f"{p:g}"] = {
            "admissible": v.admissible,
            "max_admissible_p": v.max_admissible_p,
            "reasons": list(v.reasons),
        }
    return out


def run_experiment(config: ExperimentConfig, echo=print) -> int:
    """Execute one configured experiment end to end; returns the exit code."""
    timings: dict[str, float] = {}
    spec = config.build_model()
    problem, cert = spec.problem, spec.certificate
    if config.threads:
        kernels.set_threads(config.threads)

    t0 = time.perf_counter()
    try:
        cert_report = validate_certificate(
            problem, cert, SampleSpec(n_points=2000, radius=spec.sampling_radius, seed=0)
        )
    except ModelEvaluationError as exc:
        echo(f"model evaluation error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    verdicts = _p_verdicts(config, cert)
    if config.wants_rate_assertion:
        bad = {p: v for p, v in verdicts.items() if not v["admissible"]}
        if bad:
            for p, v in bad.items():
                echo(
                    f"rate assertion requested but p={p} is not admissible: "
                    + "; ".join(v["reasons"]),
                    file=sys.stderr,
                )
            return EXIT_CONFIG
    timings["validate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        coupled = run_coupled_mc(
            problem, config.scheme, config.resolutions, config.reference_resolution,
            config.path_count, config.master_seed, batch_size=config.batch_size,
            exact_solution=spec.exact_solution if config.against_exact else None,
        )
        stats = None
        if config.moment_ps or config.one_step_ps:
            stats = run_single_resolution(
                problem, config.scheme, config.resolutions, config.path_count,
                config.master_seed, batch_size=config.batch_size,
            )
    except ModelEvaluationError as exc:
        echo(f"model evaluation error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rep = error_report(coupled, config.strong_ps, config.uniform_qs,
                       config.t_eval, include_exact=config.against_exact)
    error_rows = []
    for e in rep.entries:
        error_rows.append([spec.name, *_scheme_cols(config), e.n, e.p, e.statistic,
                           e.value, e.std_err, e.path_count, config.master_seed])

    moment_rows = []
    moments = None
    exploded = False
    if config.moment_ps and stats is not None:
        moments = moment_diagnostic(
            problem, config.scheme, config.resolutions, config.moment_ps,
            config.path_count, config.master_seed, certificate=cert, stats=stats,
        )
        for e in moments.entries:
            exploded = exploded or e.exploded
            moment_rows.append([spec.name, *_scheme_cols(config), e.n, e.p, e.value,
                                e.std_err, e.exploded, e.diverged_count,
                                config.path_count, config.master_seed])
    one_step_fits = {}
    if config.one_step_ps and stats is not None:
        for p in config.one_step_ps:
            entries = one_step_diagnostic(
                problem, config.scheme, config.resolutions, p, config.path_count,
                config.master_seed, certificate=cert, stats=stats,
            )
            for e in entries:
                error_rows.append([spec.name, *_scheme_cols(config), e.n, e.p,
                                   "one_step", e.value, e.std_err,
                                   config.path_count, config.master_seed])
            finite = [e for e in entries if not e.exploded]
            if len(finite) >= 3:
                one_step_fits[f"{p:g}"] = fit_order([(e.n, e.value) for e in finite])

    as_rate = None
    if config.as_rate_kappa is not None:
        try:
            as_rate = as_rate_diagnostic(coupled, config.as_rate_kappa, certificate=cert)
        except ValueError as exc:
            echo(f"pathwise-rate diagnostic refused: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    b1 = None
    if config.b1_radius is not None:
        rows = check_B1_rate(problem, config.scheme, config.b1_radius,
                             config.b1_resolutions)
        b1 = {
            "rows": [[n, sb, ss] for n, sb, ss in rows],
            "drift_slope": -fit_order([(n, sb) for n, sb, _ in rows]).order,
            "diffusion_slope": (
                -fit_order([(n, ss) for n, _, ss in rows]).order
                if all(ss > 0 for _, _, ss in rows) else None
            ),
        }
    timings["analyze"] = time.perf_counter() - t0

    # assertion windows
    assertions = {}
    all_pass = True
    for stat_name, window, ps in (
        ("strong", config.assert_strong_order, config.strong_ps),
        ("uniform", config.assert_uniform_order, config.uniform_qs),
    ):
        if window is None:
            continue
        lo, hi = window
        for p in ps:
            fit = rep.fits.get((stat_name, p))
            if fit is None:  # requested assertion but the fit was impossible
                assertions[f"{stat_name}_order_p{p:g}"] = {
                    "window": [lo, hi], "order": None, "order_se": None,
                    "pass": False,
                }
                all_pass = False
                continue
            ok = lo <= fit.order <= hi
            if config.assert_max_order_se is not None:
                ok = ok and fit.order_se < config.assert_max_order_se
            assertions[f"{stat_name}_order_p{p:g}"] = {
                "window": [lo, hi], "order": fit.order, "order_se": fit.order_se,
                "pass": bool(ok),
            }
            all_pass = all_pass and ok

    diverged_total = rep.diverged_count
    findings = diverged_total > 0 or exploded

    t0 = time.perf_counter()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "errors.csv",
               ["model", "scheme", "alpha", "l", "n", "p", "statistic", "value",
                "std_err", "path_count", "seed"], error_rows)
    _write_csv(out_dir / "moments.csv",
               ["model", "scheme", "alpha", "l", "n", "p", "value", "std_err",
                "exploded", "diverged_count", "path_count", "seed"], moment_rows)

    summary = {
        "model": spec.name,
        "model_params": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                         for k, v in spec.params.items()},
        "scheme": {"kind": config.scheme.kind, "alpha": config.scheme.alpha,
                   "l": config.scheme.l},
        "grid": {"horizon": config.horizon,
                 "resolutions": list(config.resolutions),
                 "reference_resolution": config.reference_resolution},
        "path_count": config.path_count,
        "master_seed": config.master_seed,
        "certificate": dataclasses.asdict(cert),
        "certificate_check": {
            "ok": cert_report.ok,
            "checks": [
                {"name": c.name, "max_violation": c.max_violation,
                 "violations": c.n_violations, "samples": c.n_samples}
                for c in cert_report.checks
            ],
        },
        "p_validation": verdicts,
        "fits": [
            {"statistic": stat, "p": p,
             "fitted_order": None if f is None else f.order,
             "order_se": None if f is None else f.order_se,
             "intercept": None if f is None else f.intercept,
             "residual": None if f is None else f.residual}
            for (stat, p), f in sorted(rep.fits.items())
        ],
        "one_step_fits": {
            p: {"slope": -f.order, "slope_se": f.order_se}
            for p, f in one_step_fits.items()
        },
        "assertions": {"checks": assertions, "all_pass": bool(all_pass)},
        "moments": None if moments is None else {
            "bounded": {f"{p:g}": bool(v) for p, v in moments.bounded.items()},
            "exploded": bool(exploded),
        },
        "as_rate": None if as_rate is None else {
            "kappa": as_rate.kappa,
            "per_resolution": {str(n): q for n, q in as_rate.per_resolution.items()},
            "zeta_quantiles": {str(q): v for q, v in as_rate.zeta_quantiles.items()},
            "q90_spread": as_rate.spread(0.9) if 0.9 in as_rate.quantiles else None,
        },
        "b1": b1,
        "diverged_total": diverged_total,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    timings["write"] = time.perf_counter() - t0

    inventory = {
        name: {"sha256": _sha256(out_dir / name), "bytes": (out_dir / name).stat().st_size}
        for name in ("errors.csv", "moments.csv", "summary.json")
    }
    manifest = {
        "version": __version__,
        "master_seed": config.master_seed,
        "config": {k: (list(v) if isinstance(v, tuple) else
                       dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v)
                   for k, v in dataclasses.asdict(config).items()},
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
        "files": inventory,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    echo(f"wrote {out_dir}/errors.csv, moments.csv, summary.json, manifest.json")
    for key, val in assertions.items():
        if val["order"] is None:
            echo(f"assert {key}: no usable fit -> FAIL")
        else:
            echo(f"assert {key}: order={val['order']:.4f} se={val['order_se']:.4f} "
                 f"window={val['window']} -> {'pass' if val['pass'] else 'FAIL'}")
    if findings:
        echo(f"divergence findings: {diverged_total} diverged paths"
             + (", moment explosion detected" if exploded else ""))
    if not all_pass:
        return EXIT_ASSERT
    if findings:
        return EXIT_FINDINGS
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(config)


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    spec = config.build_model()
    try:
        report = validate_certificate(
            spec.problem, spec.certificate,
            SampleSpec(n_points=2000, radius=spec.sampling_radius, seed=0),
        )
    except ModelEvaluationError as exc:
        print(f"model evaluation error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    print(report.summary())
    verdicts = _p_verdicts(config, spec.certificate)
    for p, v in verdicts.items():
        status = "admissible" if v["admissible"] else "NOT admissible"
        print(f"rate gate p={p}: {status}"
              + (f" ({'; '.join(v['reasons'])})" if v["reasons"] else ""))
    if config.wants_rate_assertion and any(not v["admissible"] for v in verdicts.values()):
        return EXIT_CONFIG
    if not report.ok:
        return EXIT_ASSERT
    return EXIT_OK


_MODEL_BLURBS = {
    "three-half": "mean-reverting drift with 3/2-power diffusion (superlinear both)",
    "ginzburg-landau": "cubic drift with linear multiplicative noise",
    "linear": "geometric Brownian motion with exact solution oracle",
}


def _cmd_list_models(_args) -> int:
    for name in sorted(MODELS):
        print(f"{name:16s} {_MODEL_BLURBS.get(name, '')}")
    return EXIT_OK


def _parse_set(values):
    params = {}
    for item in values or ():
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            params[key] = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            params[key] = raw
    return params


def _cmd_describe(args) -> int:
    try:
        params = _parse_set(args.set)
        spec = get_model(args.name, **params)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cert = spec.certificate
    print(f"model: {spec.name}")
    print(f"params: {spec.params}")
    print(f"dimensions: d={spec.problem.dim_state}, d1={spec.problem.dim_noise}")
    print(f"certificate: p0={cert.p0:g}, p1={cert.p1:g}, K={cert.K:g}, "
          f"L={cert.L:g}, l={cert.l:g}")
    print(f"constants: {spec.notes}")
    if spec.exact_solution is not None:
        print("exact solution: available (usable as an error oracle)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tamedsde",
        description="Damped explicit Euler schemes for superlinear SDEs: "
                    "coupled-path convergence and moment experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("config")
    p_run.set_defaults(fn=_cmd_run)
    p_val = sub.add_parser("validate", help="dry-run: condition checks and rate gate")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_cmd_validate)
    p_list = sub.add_parser("list-models", help="list catalog models")
    p_list.set_defaults(fn=_cmd_list_models)
    p_desc = sub.add_parser("describe-model", help="show a model's certificate")
    p_desc.add_argument("name")
    p_desc.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a model parameter")
    p_desc.set_defaults(fn=_cmd_describe)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

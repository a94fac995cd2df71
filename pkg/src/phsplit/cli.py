"""Experiment runner.

Subcommands:

* ``validate``: structural and solvability checks, human-readable report
  plus ``validation.json``; exit 0 only if everything passes.
* ``run``: reference solve plus (optionally) one dynamic-iteration scheme;
  writes ``reference.csv``, ``iteration.csv``, ``summary.txt`` and, unless
  ``--no-plot``, rendered figures next to them.
* ``rates``: contraction bound over a lambda grid, written as
  ``rates.csv`` with the optimum appended, plus a figure.
* ``demo <name>``: canned experiment setups.

Exit codes: 0 success, 1 validation failure, 2 usage or parse error,
3 numerical failure. All flags have config-file equivalents (``--config``,
JSON with the same key names); flags override file values. The output
directory may also be set through the ``PHSPLIT_OUTPUT_DIR`` environment
variable (flag wins).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import models, report as figures
from .errors import (
    InvalidConfig,
    InvalidParameter,
    ModelFileError,
    PHSplitError,
    UnknownModel,
)
from .iteration import (
    JacobiConfig,
    LMConfig,
    contraction_factor,
    jacobi_error_predictor,
    jacobi_run,
    lm_run,
)
from .modelio import LoadedModel, load_model
from .phdae import validate as validate_model
from .solver import SolverScheme, default_scheme, reference_solution
from .waveform import combine, from_function, write_csv

USAGE_ERROR, VALIDATION_ERROR, NUMERICAL_ERROR = 2, 1, 3

DEMO_NAMES = ("jacobi-window", "jacobi-overflow", "decoupled-scaled", "two-mass", "circuit")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: model, discretization, iteration, outputs.

    ``iteration_kind`` is "lm", "jacobi", or None (reference only); exactly
    one scheme or none, enforced during flag/config resolution.
    """

    loaded: LoadedModel
    scheme: SolverScheme
    iteration_kind: str | None
    iteration: object
    reference_refine: int
    output_dir: Path
    plot: bool
    component_trace: tuple = ()


def _parse_kv(pairs, context):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise InvalidConfig(f"{context}: expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key.strip()] = float(val)
        except ValueError as exc:
            raise InvalidConfig(f"{context}: value of {key!r} is not numeric") from exc
    return out


def _output_dir(args) -> Path:
    out = args.output_dir or os.environ.get("PHSPLIT_OUTPUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidConfig("config file must hold a JSON object")
    return doc


def _resolve_model(args, cfg):
    """Model + horizon + input from flags/config; flags override the file."""
    name = args.model or cfg.get("model")
    file_path = getattr(args, "model_file", None) or cfg.get("model_file")
    params = dict(cfg.get("params", {}))
    params.update(_parse_kv(getattr(args, "param", None), "--param"))
    T = args.T if getattr(args, "T", None) is not None else cfg.get("T")
    N = args.N if getattr(args, "N", None) is not None else cfg.get("N")

    if (name is None) == (file_path is None):
        raise InvalidConfig("specify exactly one of --model or --model-file")
    if file_path is not None:
        if params:
            raise InvalidConfig("--param applies to built-in models only")
        loaded = load_model(file_path)
        T = float(T) if T is not None else loaded.T
        loaded = LoadedModel(system=loaded.system, T=T, input_spec=loaded.input_spec)
        return loaded, N
    spec = models.default_spec(name, parameters=params, T=T, N=N)
    sys_ = models.build_model(spec)
    input_spec = {"signal": spec.input}
    return LoadedModel(system=sys_, T=spec.T, input_spec=input_spec), spec.N


def _scheme_for(loaded, N, kind):
    if N is None:
        return default_scheme(loaded.system, loaded.T, kind)
    return SolverScheme(kind, loaded.T, int(N))


def cmd_validate(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    loaded, N = _resolve_model(args, cfg)
    scheme = _scheme_for(loaded, N, args.scheme)
    u = loaded.input_waveform(scheme.N)
    rep = validate_model(loaded.system, u)
    for line in rep.summary_lines():
        print(line)
    outdir = _output_dir(args)
    with open(outdir / "validation.json", "w", encoding="utf-8") as fh:
        json.dump(rep.to_dict(), fh, indent=1)
        fh.write("\n")
    print(f"overall: {'PASS' if rep.ok else 'FAIL'}")
    return 0 if rep.ok else VALIDATION_ERROR


def _iteration_config(args, cfg):
    """Exactly one scheme (or none) from flags/config."""
    chosen = [s for s in ("lm", "jacobi") if getattr(args, s, None) is not None]
    if args.none and chosen:
        raise InvalidConfig("--none excludes --lm/--jacobi")
    if len(chosen) > 1:
        raise InvalidConfig("choose at most one of --lm/--jacobi")
    if args.none:
        return None, None
    if chosen:
        kind = chosen[0]
        kv = _parse_kv(getattr(args, kind), f"--{kind}")
    elif "iteration" in cfg:
        kind = cfg["iteration"].get("scheme")
        if kind not in ("lm", "jacobi", "none", None):
            raise InvalidConfig(f"config iteration.scheme {kind!r} unknown")
        if kind in (None, "none"):
            return None, None
        kv = {k: v for k, v in cfg["iteration"].items() if k != "scheme"}
    else:
        return None, None

    if kind == "lm":
        if "lambda" not in kv:
            raise InvalidConfig("--lm needs lambda=<value>")
        lm = LMConfig(
            lam=kv.pop("lambda"),
            mu=kv.pop("mu", 0.0),
            alpha=kv.pop("alpha", 1.0),
            omega=kv.pop("omega", None),
            max_iters=int(kv.pop("iters", 50)),
            tol=kv.pop("tol", 1e-10),
        )
        if kv:
            raise InvalidConfig(f"--lm: unknown keys {sorted(kv)}")
        return "lm", lm
    if "H" not in kv:
        raise InvalidConfig("--jacobi needs H=<window length>")
    jc = JacobiConfig(
        window_length=kv.pop("H"),
        max_sweeps=int(kv.pop("sweeps", 50)),
        tol=kv.pop("tol", 1e-10),
    )
    if kv:
        raise InvalidConfig(f"--jacobi: unknown keys {sorted(kv)}")
    return "jacobi", jc


def _run_experiment(exp: ExperimentConfig) -> int:
    loaded, scheme, outdir = exp.loaded, exp.scheme, exp.output_dir
    kind, it_cfg, refine, trace = exp.iteration_kind, exp.iteration, exp.reference_refine, exp.component_trace
    sys_ = loaded.system
    u = loaded.input_waveform(scheme.N)
    rep = validate_model(sys_, u)
    if not rep.assumptions_ok:
        for line in rep.summary_lines():
            print(line, file=sys.stderr)
        raise SystemExit(VALIDATION_ERROR)
    if rep.degenerate_no_convergence:
        print("warning: rk[E R] < n, the iteration need not converge", file=sys.stderr)

    reference = reference_solution(sys_, u, refine=refine, scheme=scheme,
                                   u_func=loaded.input_function())
    write_csv(reference, outdir / "reference.csv")

    summary = [
        f"model: n={sys_.n} partition={sys_.partition} T={scheme.T} N={scheme.N} scheme={scheme.kind}",
        f"reference refine: {refine}",
    ]
    itrep = None
    iterate = None
    if kind == "lm":
        z_mode = "algebraic" if refine == 1 else "derivative"
        iterate, itrep = lm_run(sys_, u, it_cfg, scheme, reference=reference,
                                z_ref_mode=z_mode, component_trace=trace)
        rate = contraction_factor(sys_, it_cfg.alpha, it_cfg.mu, it_cfg.lam)
        summary += [
            f"lm: lambda={it_cfg.lam} mu={it_cfg.mu} alpha={it_cfg.alpha} omega={it_cfg.effective_omega}",
            f"rank condition holds: {rate.rank_condition_holds}",
            f"contraction bound q at lambda: {rate.q:.10g}",
            f"lambda_star: {rate.lambda_star:.10g}",
            f"q_star: {rate.q_star:.10g}",
            f"monotone z-error: {itrep.monotone_z if len(itrep.records) > 1 else 'n/a'}",
            f"converged_at: {itrep.converged_at}",
        ]
    elif kind == "jacobi":
        iterate, itrep = jacobi_run(sys_, u, it_cfg, scheme, reference=reference)
        summary += [
            f"jacobi: H={it_cfg.window_length} max_sweeps={it_cfg.max_sweeps} tol={it_cfg.tol}",
            f"windows: {len(itrep.window_starts)}",
            f"converged_at: {itrep.converged_at}",
        ]
    else:
        summary.append("iteration: none")

    if itrep is not None:
        itrep.write_csv(outdir / "iteration.csv")
    with open(outdir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary) + "\n")
    for line in summary:
        print(line)

    if exp.plot:
        comps = list(trace) if trace else None
        figures.render_trajectory_figure(reference, outdir / "trajectory.png",
                                         components=comps, iterate=iterate)
        if itrep is not None:
            figures.render_iteration_figure(itrep, outdir / "iteration.png")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    loaded, N = _resolve_model(args, cfg)
    scheme = _scheme_for(loaded, N, args.scheme or cfg.get("scheme", "trapezoidal"))
    kind, it_cfg = _iteration_config(args, cfg)
    refine = int(args.reference_refine or cfg.get("reference_refine", 1))
    if refine < 1:
        raise InvalidConfig("--reference-refine must be >= 1")
    plot = cfg.get("plot", True) if args.plot is None else args.plot
    exp = ExperimentConfig(loaded=loaded, scheme=scheme, iteration_kind=kind,
                           iteration=it_cfg, reference_refine=refine,
                           output_dir=_output_dir(args), plot=plot)
    return _run_experiment(exp)


def cmd_rates(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    loaded, N = _resolve_model(args, cfg)
    sys_ = loaded.system
    scheme = _scheme_for(loaded, N, args.scheme)
    rep = validate_model(sys_, loaded.input_waveform(scheme.N))
    if not rep.structure_all_ok:
        for line in rep.summary_lines():
            print(line, file=sys.stderr)
        return VALIDATION_ERROR
    alpha = args.alpha if args.alpha is not None else cfg.get("alpha", 0.5)
    mu = args.mu if args.mu is not None else cfg.get("mu", 1.0)

    probe = contraction_factor(sys_, alpha, mu, 1.0)
    grid_spec = args.lambda_grid or cfg.get("lambda_grid")
    if grid_spec:
        if ":" in grid_spec:
            try:
                lo, hi, cnt = grid_spec.split(":")
                lams = np.geomspace(float(lo), float(hi), int(cnt))
            except ValueError as exc:
                raise InvalidConfig(f"bad --lambda-grid {grid_spec!r}, want lo:hi:count") from exc
        else:
            lams = np.array([float(s) for s in grid_spec.split(",")])
    else:
        center = probe.lambda_star if np.isfinite(probe.lambda_star) else 1.0
        lams = np.geomspace(center / 10.0, center * 10.0, 25)

    rows = [(lam, contraction_factor(sys_, alpha, mu, lam).q) for lam in lams]
    outdir = _output_dir(args)
    with open(outdir / "rates.csv", "w", encoding="utf-8") as fh:
        fh.write("lambda,q\n")
        for lam, q in rows:
            fh.write(f"{lam:.17g},{q:.17g}\n")
        fh.write(f"# optimum: lambda_star={probe.lambda_star:.17g} q_star={probe.q_star:.17g}\n")
    for lam, q in rows:
        print(f"{lam:.10g}  {q:.10g}")
    print(f"* lambda_star={probe.lambda_star:.10g}  q_star={probe.q_star:.10g}")
    if args.plot is not False:
        figures.render_rates_figure([r[0] for r in rows], [r[1] for r in rows],
                                    probe.lambda_star, probe.q_star, outdir / "rates.png")
    return 0


def cmd_demo(args) -> int:
    outdir = _output_dir(args) / f"demo-{args.name}"
    outdir.mkdir(parents=True, exist_ok=True)
    plot = True if args.plot is None else args.plot

    if args.name == "jacobi-overflow":
        nu, tau, T = 15.0, 0.01, 10.0
        rows = [jacobi_error_predictor(nu, tau, T, 1.0, k) for k in range(61)]
        with open(outdir / "predicted.csv", "w", encoding="utf-8") as fh:
            fh.write("k,predicted_sup_error,log10,ratio_next\n")
            for k, r in enumerate(rows):
                fh.write(f"{k},{r.value:.17g},{r.log10_value:.17g},{r.ratio_next:.17g}\n")
        first = next(k for k, r in enumerate(rows) if r.log10_value > np.log10(3.4028235e38))
        print(f"predicted sweep error first exceeds float32 max at k={first}")
        with open(outdir / "summary.txt", "w", encoding="utf-8") as fh:
            fh.write(f"first k beyond float32 max: {first}\n")
        return 0

    if args.name == "jacobi-window":
        spec = models.default_spec("simple-2x2", T=0.5, N=10001)
        loaded = LoadedModel(models.build_model(spec), spec.T, {"signal": "zero"})
        scheme = SolverScheme("trapezoidal", spec.T, spec.N)
        sys_ = loaded.system
        u = loaded.input_waveform(scheme.N)
        reference = reference_solution(sys_, u, refine=1, scheme=scheme)
        tau = 0.01
        guess = combine(1.0, reference,
                        1.0, from_function(lambda t: t * np.exp(-tau * t) * np.ones(2), spec.T, spec.N))
        jc = JacobiConfig(window_length=0.5, max_sweeps=32, tol=0.0, initial_guess=guess)
        _, itrep = jacobi_run(sys_, u, jc, scheme, reference=reference)
        itrep.write_csv(outdir / "iteration.csv")
        write_csv(reference, outdir / "reference.csv")
        sups = itrep.err_sup_sequence()
        peak = int(np.argmax(sups))
        print(f"sup error peaks at sweep {peak}, decays thereafter")
        with open(outdir / "summary.txt", "w", encoding="utf-8") as fh:
            fh.write(f"peak sweep: {peak}\npeak error: {sups[peak]:.6g}\n")
        if plot:
            figures.render_iteration_figure(itrep, outdir / "iteration.png",
                                            title="waveform relaxation, one window")
        return 0

    canned = {
        "decoupled-scaled": ("scaled-2x2", {"nu": 0.0, "q1": 1.0, "q2": 1.0},
                             LMConfig(lam=0.5, mu=2.0, alpha=1.0, omega=2.1, max_iters=8), ()),
        "two-mass": ("two-mass", {},
                     LMConfig(lam=1.5, mu=2.0, alpha=0.5, omega=2.2, max_iters=40), ()),
        "circuit": ("rlc-circuit", {},
                    LMConfig(lam=1.2, mu=1.0, alpha=0.2, omega=2.2, max_iters=30), (2, 4)),
    }
    name, params, lm_cfg, trace = canned[args.name]
    spec = models.default_spec(name, parameters=params)
    loaded = LoadedModel(models.build_model(spec), spec.T, {"signal": spec.input})
    scheme = SolverScheme("trapezoidal", spec.T, spec.N)
    if args.name == "decoupled-scaled":
        rate = contraction_factor(loaded.system, lm_cfg.alpha, lm_cfg.mu, 1.0)
        lm_cfg = LMConfig(lam=rate.lambda_star, mu=lm_cfg.mu, alpha=lm_cfg.alpha,
                          omega=lm_cfg.omega, max_iters=lm_cfg.max_iters)
    exp = ExperimentConfig(loaded=loaded, scheme=scheme, iteration_kind="lm",
                           iteration=lm_cfg, reference_refine=1,
                           output_dir=outdir, plot=plot, component_trace=trace)
    return _run_experiment(exp)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phsplit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--model", help=f"built-in model name, one of {models.MODEL_NAMES}")
        p.add_argument("--model-file", help="path to a JSON model file")
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="model parameter override (repeatable)")
        p.add_argument("-T", type=float, default=None, help="horizon override")
        p.add_argument("-N", type=int, default=None, help="grid size override")
        p.add_argument("--scheme", choices=("trapezoidal", "implicit-euler"),
                       default="trapezoidal")
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--output-dir", help="artifact directory (or PHSPLIT_OUTPUT_DIR)")
        p.add_argument("--plot", dest="plot", action="store_true", default=None,
                       help="render figures (default on for run/demo)")
        p.add_argument("--no-plot", dest="plot", action="store_false")

    p_val = sub.add_parser("validate", help="check model structure and solvability")
    add_model_flags(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="reference solve plus optional dynamic iteration")
    add_model_flags(p_run)
    p_run.add_argument("--lm", nargs="*", metavar="KEY=VALUE",
                       help="operator-splitting iteration: lambda= mu= alpha= omega= iters= tol=")
    p_run.add_argument("--jacobi", nargs="*", metavar="KEY=VALUE",
                       help="waveform relaxation: H= sweeps= tol=")
    p_run.add_argument("--none", action="store_true", help="reference solve only")
    p_run.add_argument("--reference-refine", type=int, default=None,
                       help="reference grid refinement factor (default 1)")
    p_run.set_defaults(func=cmd_run)

    p_rates = sub.add_parser("rates", help="contraction bound over a lambda grid")
    add_model_flags(p_rates)
    p_rates.add_argument("--alpha", type=float, default=None)
    p_rates.add_argument("--mu", type=float, default=None)
    p_rates.add_argument("--lambda-grid", help="lo:hi:count (log spaced) or comma list")
    p_rates.set_defaults(func=cmd_rates)

    p_demo = sub.add_parser("demo", help="canned experiments")
    p_demo.add_argument("name", choices=DEMO_NAMES)
    p_demo.add_argument("--output-dir", help="artifact directory")
    p_demo.add_argument("--plot", dest="plot", action="store_true", default=None)
    p_demo.add_argument("--no-plot", dest="plot", action="store_false")
    p_demo.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, UnknownModel, InvalidParameter, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except PHSplitError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())

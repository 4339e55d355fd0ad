"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 I/O or file-format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DataFormatError, NumericalError
from .lightfield import ViewLayout, read_key_values

log = logging.getLogger("lfdepth")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4


class CLIValidationError(ValueError):
    pass


# ------------------------------------------------------------------ options

# name -> (type, default); names double as config-file keys.
OPTIONS = {
    "sigma_inner": (float, 0.8),
    "sigma_outer": (float, 2.0),
    "coherence_min": (float, 0.05),
    "orientation": (str, "both"),
    "angular_boundary": (str, "masked"),
    "lambda": (float, 0.5),
    "max_iter": (int, 300),
    "relax": (float, 1.5),
    "nu": (float, 1.0),
    "g0": (float, 0.3),
    "beta": (float, 5.0),
    "alpha": (float, 2.0),
    "stop_tol": (float, 1e-4),
    "track_objective": (bool, False),
    "objective_every": (int, 10),
    "threshold": (float, 0.5),
    "align_max_iter": (int, 50),
    "identity": (bool, False),
    "align": (bool, False),
    "tau": (float, 0.07),
    "taus": (str, "0.07,0.03"),
    "view_pattern": (str, ViewLayout().pattern),
    "views_u": (int, None),
    "views_v": (int, None),
    "seed": (int, 0),
}


def _parse_bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise CLIValidationError(f"not a boolean: {s!r}")


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags (flags win)."""
    opts = {k: d for k, (_, d) in OPTIONS.items()}
    cfg_file = getattr(args, "config", None)
    if cfg_file:
        for k, raw in read_key_values(cfg_file).items():
            key = k.replace("-", "_")
            if key in OPTIONS:
                typ = OPTIONS[key][0]
                try:
                    opts[key] = _parse_bool(raw) if typ is bool else typ(raw)
                except ValueError as e:
                    raise CLIValidationError(f"config key {k!r}: cannot parse {raw!r}") from e
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def _add(p: argparse.ArgumentParser, *names):
    for name in names:
        typ, _ = OPTIONS[name]
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, dest=name, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, dest=name, type=typ, default=None)


def epi_params(o):
    from .epi import EPIParams
    return EPIParams(o["sigma_inner"], o["sigma_outer"], o["coherence_min"], o["orientation"],
                     o["angular_boundary"])


def refine_params(o):
    from .tv.refine import RefineParams
    return RefineParams(lam=o["lambda"], max_iter=o["max_iter"], relax=o["relax"], nu=o["nu"],
                        g0=o["g0"], beta=o["beta"], alpha=o["alpha"], stop_tol=o["stop_tol"],
                        track_objective=o["track_objective"], objective_every=o["objective_every"])


def align_params(o):
    from .alignment import AlignParams
    return AlignParams(threshold=o["threshold"], max_iter=o["align_max_iter"])


def layout(o):
    return ViewLayout(o["view_pattern"], o["views_u"], o["views_v"])


def parse_taus(s: str) -> tuple:
    try:
        taus = tuple(float(t) for t in str(s).split(",") if t.strip())
    except ValueError as e:
        raise CLIValidationError(f"bad --taus {s!r}") from e
    if not taus or any(t <= 0 for t in taus):
        raise CLIValidationError("--taus must list positive thresholds")
    return taus


# ------------------------------------------------------------------ commands

def _emit(args, payload: dict):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for k, v in payload.items():
            if not isinstance(v, (dict, list)):
                print(f"{k}: {v}")


def cmd_depth(args, o):
    from .epi import estimate_initial_disparity
    from .lightfield import load_lightfield, to_grayscale
    from .pipeline import as_stored, write_initial

    params = epi_params(o)
    lf, cam = load_lightfield(args.scene, layout(o), args.scene_config)
    initial = as_stored(estimate_initial_disparity(to_grayscale(lf), params, cam))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_initial(out, initial)
    _emit(args, {"valid_fraction": float(initial.valid_mask.mean()), **paths})


def cmd_refine(args, o):
    from .lightfield import load_lightfield
    from .pipeline import read_initial, reference_guide, write_refined
    from .tv.refine import refine_disparity

    params = refine_params(o)
    initial = read_initial(args.initial, args.confidence, o["coherence_min"])
    lf, cam = load_lightfield(args.scene, layout(o), args.scene_config)
    guide = reference_guide(lf, cam.resolved_center(lf))
    refined, trace = refine_disparity(initial, guide, params)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_refined(out, refined, trace)
    if args.trace:
        from .visualize import write_trace_csv
        write_trace_csv(args.trace, trace.as_rows())
        paths["trace_csv"] = str(args.trace)
    _emit(args, {"iterations_run": trace.iterations_run,
                 "final_residual": trace.residual_norms[-1] if trace.residual_norms else None,
                 **paths})


def cmd_eval(args, o):
    from .metrics import evaluate, format_table, read_mask
    from .pfm import read_pfm
    from .pipeline import evaluate_to_dir

    taus = (args.tau,) if args.tau is not None else parse_taus(o["taus"])
    est = read_pfm(args.estimate).disparity
    gt = read_pfm(args.gt).disparity
    mask = read_mask(args.mask) if args.mask else None
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        metrics, paths = evaluate_to_dir(out, est, gt, mask, taus)
    else:
        metrics = evaluate(est, gt, mask, tau=taus[0], extra_taus=taus[1:]).as_dict()
        paths = {}
    if args.json:
        _emit(args, {"metrics": metrics, **paths})
    else:
        print(format_table({"estimate": evaluate(est, gt, mask, tau=taus[0], extra_taus=taus[1:])}))


def cmd_align(args, o):
    from .alignment import align_array, read_correspondences
    from .lightfield import load_lightfield, save_lightfield
    from .pipeline import correspondences_for

    lf, cam = load_lightfield(args.scene, layout(o), args.scene_config)
    center = cam.resolved_center(lf)
    if o["identity"]:
        states_out = {f"{v},{u}": np.eye(3).tolist() for v in range(lf.views_v) for u in range(lf.views_u)}
        aligned_lf, trace, converged = lf, [], True
    else:
        if args.corr_file:
            corrs = {tuple(args.view): read_correspondences(args.corr_file)}
        else:
            corrs = correspondences_for(lf, center, args.corr_dir)
        res = align_array(lf, corrs, align_params(o), reference=center)
        aligned_lf, trace, converged = res.lightfield, res.error_trace, res.converged
        states_out = {f"{v},{u}": s.h1.tolist() for (v, u), s in sorted(res.states.items())}
    payload = {"converged": bool(converged), "error_trace": [float(e) for e in trace],
               "homographies": states_out}
    if args.output:
        out = Path(args.output)
        save_lightfield(out, aligned_lf, layout(o), cam)
        (out / "homographies.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"converged: {converged}")
        if trace:
            print(f"final mean reprojection error: {trace[-1]:.6g} px")


def build_pipeline_config(args, o):
    from .pipeline import PipelineConfig
    return PipelineConfig(
        scene_dir=Path(args.scene), output_dir=Path(args.output),
        align=bool(o["align"]) and not o["identity"], align_params=align_params(o),
        corr_dir=Path(args.corr_dir) if args.corr_dir else None,
        epi=epi_params(o), tv=refine_params(o), taus=parse_taus(o["taus"]),
        gt_path=Path(args.gt) if args.gt else None,
        mask_path=Path(args.mask) if args.mask else None,
        layout=layout(o), config_path=args.scene_config, seed=o["seed"])


def cmd_pipeline(args, o):
    from .pipeline import run_pipeline

    config = build_pipeline_config(args, o)
    report = run_pipeline(config)
    Path(config.output_dir, "report.json").write_text(report.to_json() + "\n")
    if args.json:
        print(report.to_json())
    else:
        for stage, sec in report.stage_seconds.items():
            print(f"{stage:>10s}: {sec:8.3f} s")
        print(f"{'total':>10s}: {report.total_seconds:8.3f} s")
        if report.metrics:
            for k, v in report.metrics.items():
                print(f"{k}: {v:.4f}")


def cmd_plot(args, o):
    from .visualize import convergence_plot
    convergence_plot(args.trace, args.output, max_iter=args.max_iter or 300)
    if args.json:
        print(json.dumps({"plot": str(args.output)}))


def cmd_compare(args, o):
    from .pipeline import compare_runs
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.inputs]
    rep = compare_runs(args.inputs, labels, args.gt, args.output, args.mask, tau=o["tau"])
    if args.json:
        print(json.dumps({"metrics": rep.metrics, "artifacts": rep.artifacts}, indent=2, sort_keys=True))
    else:
        print(rep.table)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; explicit flags override it")
    common.add_argument("--json", action="store_true", help="print a machine-readable report")
    common.add_argument("--threads", type=int, default=None, help="cap on numerical worker threads")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="lfdepth", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scene_args(sp):
        sp.add_argument("scene", help="scene directory with the sub-aperture images")
        sp.add_argument("--scene-config", default=None, help="camera config file (overrides the scene's)")
        _add(sp, "view_pattern", "views_u", "views_v")

    sp = sub.add_parser("depth", parents=[common], help="initial EPI disparity")
    scene_args(sp)
    sp.add_argument("-o", "--output", required=True)
    _add(sp, "sigma_inner", "sigma_outer", "coherence_min", "orientation", "angular_boundary")
    sp.set_defaults(func=cmd_depth)

    sp = sub.add_parser("refine", parents=[common], help="TV refinement of an initial map")
    scene_args(sp)
    sp.add_argument("--initial", required=True, help="initial disparity PFM")
    sp.add_argument("--confidence", default=None, help="confidence PFM (default: all ones)")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--trace", default=None, help="also write the solver trace CSV here")
    _add(sp, "lambda", "max_iter", "relax", "nu", "g0", "beta", "alpha", "stop_tol",
         "track_objective", "objective_every", "coherence_min")
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("eval", parents=[common], help="benchmark metrics against ground truth")
    sp.add_argument("estimate")
    sp.add_argument("gt")
    sp.add_argument("--mask", default=None)
    sp.add_argument("-o", "--output", default=None, help="directory for metrics CSV and images")
    _add(sp, "tau", "taus")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("align", parents=[common], help="homography alignment of the array")
    scene_args(sp)
    sp.add_argument("-o", "--output", default=None, help="directory for the aligned light field")
    sp.add_argument("--corr-dir", default=None, help="directory of corr_NNN.txt files")
    sp.add_argument("--corr-file", default=None, help="single correspondence file for --view")
    sp.add_argument("--view", type=int, nargs=2, metavar=("V", "U"), default=(0, 0))
    _add(sp, "threshold", "identity")
    sp.add_argument("--max-iter", dest="align_max_iter", type=int, default=None)
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("pipeline", parents=[common], help="all stages end to end")
    scene_args(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--gt", default=None, help="ground-truth disparity PFM")
    sp.add_argument("--mask", default=None, help="evaluation mask image")
    sp.add_argument("--corr-dir", default=None)
    _add(sp, "sigma_inner", "sigma_outer", "coherence_min", "orientation", "angular_boundary",
         "lambda", "max_iter", "relax", "nu", "g0", "beta", "alpha", "stop_tol",
         "track_objective", "objective_every", "align", "identity", "threshold", "taus", "seed")
    sp.add_argument("--align-max-iter", dest="align_max_iter", type=int, default=None)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("plot", parents=[common], help="convergence plot from a trace CSV")
    sp.add_argument("trace")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("compare", parents=[common], help="compare several disparity maps")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--labels", default=None, help="comma-separated labels")
    sp.add_argument("--mask", default=None)
    sp.add_argument("-o", "--output", required=True)
    _add(sp, "tau")
    sp.set_defaults(func=cmd_compare)
    return p


def exit_code_for(exc: BaseException) -> int:
    from .pipeline import StageError
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (DataFormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, (NumericalError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, IndexError, KeyError)):
        return EXIT_VALIDATION
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        if args.threads is not None and args.threads < 1:
            raise CLIValidationError("--threads must be >= 1")
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                args.func(args, opts)
        else:
            args.func(args, opts)
    except Exception as e:  # noqa: BLE001 - mapped onto documented exit codes
        code = exit_code_for(e)
        print(f"error: {e}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

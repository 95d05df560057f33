"""Command-line entry points: `driftscan detect` and `driftscan eval`."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import DriftscanError, PipelineError
from .evaluation import evaluate, load_ground_truth, load_results_dir
from .pipeline import PipelineConfig, run_sequence
from .sparse import DenoiseParams

_DETECT_DEFAULTS = {
    "log_eps": -2.0,
    "scales": 4,
    "patch_side": 4,
    "dict_size": 64,
    "ksvd_iters": 7,
    "ormp_eps": 1e-6,
    "lambda": None,
    "sigma": None,
    "radii": "1,2,3",
    "no_refine": False,
    "stride": 1,
    "seed": 0,
    "reuse_dict": 1,
    "overlay": False,
}

_FLOAT_KEYS = {"log_eps", "ormp_eps", "lambda", "sigma"}
_INT_KEYS = {"scales", "patch_side", "dict_size", "ksvd_iters", "stride", "seed", "reuse_dict"}
_BOOL_KEYS = {"no_refine", "overlay"}


def _parse_config_file(path) -> dict:
    """key=value lines, '#' comments; keys match the CLI flag names."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _DETECT_DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _BOOL_KEYS:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftscan",
        description="Detect floating objects in maritime frames via dictionary-"
        "learning residuals and a number-of-false-alarms test.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    det = sub.add_parser("detect", help="process a directory of frame images")
    det.add_argument("--input", required=True, help="directory of PNG/PPM/PGM frames")
    det.add_argument("--output", required=True, help="directory for detection records")
    det.add_argument("--config", default=None, help="key=value config file")
    det.add_argument("--log-eps", type=float, default=None)
    det.add_argument("--scales", type=int, default=None)
    det.add_argument("--patch-side", type=int, default=None)
    det.add_argument("--dict-size", type=int, default=None)
    det.add_argument("--ksvd-iters", type=int, default=None)
    det.add_argument("--ormp-eps", type=float, default=None)
    det.add_argument("--lambda", dest="lambda_", type=float, default=None)
    det.add_argument("--sigma", type=float, default=None)
    det.add_argument("--radii", type=str, default=None, help="comma list, e.g. 1,2,3")
    det.add_argument("--no-refine", action="store_true", default=None)
    det.add_argument("--stride", type=int, default=None)
    det.add_argument("--seed", type=int, default=None)
    det.add_argument("--reuse-dict", type=int, default=None)
    det.add_argument("--overlay", action="store_true", default=None)

    ev = sub.add_parser("eval", help="score detection records against ground truth")
    ev.add_argument("--results", required=True, help="directory of detection records")
    ev.add_argument("--gt", required=True, help="ground-truth JSON file")
    ev.add_argument("--iou", type=float, default=0.1)
    return parser


def _merged_options(args) -> dict:
    opts = dict(_DETECT_DEFAULTS)
    if args.config:
        opts.update(_parse_config_file(args.config))
    flag_values = {
        "log_eps": args.log_eps,
        "scales": args.scales,
        "patch_side": args.patch_side,
        "dict_size": args.dict_size,
        "ksvd_iters": args.ksvd_iters,
        "ormp_eps": args.ormp_eps,
        "lambda": args.lambda_,
        "sigma": args.sigma,
        "radii": args.radii,
        "no_refine": args.no_refine,
        "stride": args.stride,
        "seed": args.seed,
        "reuse_dict": args.reuse_dict,
        "overlay": args.overlay,
    }
    opts.update({k: v for k, v in flag_values.items() if v is not None})
    return opts


def _config_from_options(opts: dict) -> PipelineConfig:
    radii = tuple(int(r) for r in str(opts["radii"]).split(",") if r.strip())
    params = DenoiseParams(
        patch_side=opts["patch_side"],
        dict_size=opts["dict_size"],
        ormp_epsilon=opts["ormp_eps"],
        k_iter=opts["ksvd_iters"],
        lam=opts["lambda"],
        sigma=opts["sigma"],
        rng_seed=opts["seed"],
    )
    return PipelineConfig(
        denoise=params,
        n_scales=opts["scales"],
        radii=radii,
        log_eps=opts["log_eps"],
        refine_keypoints=not opts["no_refine"],
        stride=opts["stride"],
    )


def _run_detect(args) -> int:
    opts = _merged_options(args)
    cfg = _config_from_options(opts)
    results = run_sequence(
        args.input,
        cfg,
        args.output,
        overlay=bool(opts["overlay"]),
        reuse_dict=int(opts["reuse_dict"]),
    )
    total = sum(len(r.boxes) for r in results)
    print(f"processed {len(results)} frames, {total} boxes -> {args.output}")
    return 0


def _run_eval(args) -> int:
    results = load_results_dir(args.results)
    gt = load_ground_truth(args.gt)
    report = evaluate(results, gt, iou_threshold=args.iou)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    dr = "n/a" if report.dr is None else f"{report.dr:.4f}"
    far = "n/a" if report.far is None else f"{report.far:.4f}"
    print()
    print(f"{'frames':>8} {'TP':>6} {'FP':>6} {'FN':>6} {'DR':>8} {'FAR':>8}")
    print(
        f"{len(report.per_frame):>8} {report.tp:>6} {report.fp:>6} "
        f"{report.fn:>6} {dr:>8} {far:>8}"
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "detect":
            return _run_detect(args)
        return _run_eval(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DriftscanError, OSError, ValueError, KeyError) as exc:
        stage = "eval" if args.command == "eval" else "setup"
        print(f"error: [{stage}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

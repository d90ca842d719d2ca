"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
Images ending in ``.pgm`` are PGM; anything else is f64-raw.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import baseline, image, mfa, phantom, psf as psfmod
from .errors import DivergenceError, FitError, MfaError, ParseError

log = logging.getLogger("mfarestore")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


def _write_rows(rows, out=None):
    """Emit ``metric,value`` style CSV to ``out`` (a path) or stdout."""
    if out:
        fh = open(out, "w", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if out:
            fh.close()


def _psf(sigma, radius):
    return psfmod.gaussian_psf(sigma, radius)


def _noise(args):
    nm = mfa.NoiseModel(args.noise_var, args.noise_scale or 1.0)
    if args.noise_scale and args.image_scale:
        nm = nm.at_scale(args.image_scale)
    return nm


def _region(text):
    try:
        parts = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"region must be row,col,height,width: {text!r}")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"region must be row,col,height,width: {text!r}")
    return tuple(parts)


# -- commands --------------------------------------------------------------

def cmd_phantom(args):
    spec = phantom.load_phantom_spec(args.spec)
    image.save(phantom.render_phantom(spec), args.out, args.format)


def cmd_degrade(args):
    ideal = image.load(args.input)
    out = phantom.degrade(ideal, _psf(args.sigma_psf, args.radius),
                          mfa.NoiseModel(args.noise_var), args.seed, poisson=args.poisson)
    image.save(out, args.out, args.format)


def _restore(g, sigma_psf, radius, noise, opts):
    """Run anneal with CLI/manifest-style options; missing keys take library defaults."""
    t0 = opts.get("t0")
    t0 = float(t0) if t0 is not None else mfa.default_t_initial(g)
    t_final = opts.get("t_final")
    schedule = mfa.AnnealingSchedule(
        t0, float(t_final) if t_final is not None else 0.05 * t0,
        float(opts.get("decay", 0.9)), int(opts.get("steps_per_temperature", 2)))
    alpha = opts.get("alpha")
    params = mfa.MfaParams(
        alpha=float(alpha) if alpha is not None else None,
        beta=float(opts.get("beta", 1.0)),
        schedule=schedule,
        max_iterations=int(opts.get("iters", 20)),
        snapshot_every=int(opts.get("snapshot_every", 0)),
        backtrack=bool(opts.get("backtrack", False)),
        stop_window=int(opts.get("stop_window", 0)),
    )
    return mfa.anneal(g, _psf(sigma_psf, radius), noise, params)


def cmd_restore(args):
    g = image.load(args.input)
    opts = {
        "alpha": args.alpha, "beta": args.beta, "t0": args.t0, "t_final": args.t_final,
        "decay": args.decay, "steps_per_temperature": args.steps_per_temperature,
        "iters": args.iters, "snapshot_every": args.snapshot_every,
        "backtrack": args.backtrack, "stop_window": args.stop_window,
    }
    opts = {k: v for k, v in opts.items() if v is not None}
    try:
        f_star, trace = _restore(g, args.sigma_psf, args.radius, _noise(args), opts)
    except DivergenceError as exc:
        if args.trace_out and exc.trace is not None:
            exc.trace.write_csv(args.trace_out)
        raise
    image.save(f_star, args.out, args.format)
    if args.trace_out:
        trace.write_csv(args.trace_out)
    if trace.snapshots:
        frames_dir = args.frames_dir or (os.path.splitext(args.out)[0] + "_frames")
        trace.write_frames(frames_dir, "pgm" if args.frames_format == "pgm" else "f64")
    last = trace.records[-1]
    log.info("%d iterations, final T=%.6g, h_total=%.6g", last.iteration, last.temperature,
             last.h_total)


def cmd_wiener(args):
    g = image.load(args.input)
    sp = "estimate" if args.signal_power is None else args.signal_power
    out = baseline.wiener(g, _psf(args.sigma_psf, args.radius), _noise(args), sp)
    image.save(out, args.out, args.format)


def cmd_sharpen(args):
    image.save(baseline.sharpen(image.load(args.input), args.passes), args.out, args.format)


def cmd_sobel(args):
    image.save(baseline.sobel(image.load(args.input)), args.out, args.format)


def cmd_psf_fit(args):
    if args.distance and len(args.distance) != len(args.inputs):
        raise InputError("--distance must be given once per input image")
    rows = []
    for i, path in enumerate(args.inputs):
        fit = psfmod.fit_sigma_to_point_source(image.load(path))
        d = args.distance[i] if args.distance else float("nan")
        rows.append((d, fit.sigma, fit.fit_rmse))
    if args.csv_out:
        psfmod.write_points_csv(args.csv_out, rows)
    _write_rows([psfmod.CSV_FIELDS] + [tuple(float(v) for v in r) for r in rows])


def cmd_trend(args):
    pts = psfmod.read_points_csv(args.points)
    trend = psfmod.fit_depth_trend([(d, s) for d, s, _ in pts])
    rows = [("metric", "value"), ("slope", trend.slope), ("intercept", trend.intercept),
            ("fit_residual", trend.fit_residual)]
    for d in args.predict or []:
        rows.append((f"sigma_at_{d:g}cm", psfmod.predict_sigma(trend, d, args.sigma_min)))
    _write_rows(rows, args.out)


def cmd_verify_line(args):
    pct = psfmod.verify_line_source(_psf(args.sigma_psf, args.radius), image.load(args.input),
                                    args.orientation, args.end_margin)
    _write_rows([("metric", "value"), ("rmse_percent", pct)])


def cmd_noise(args):
    nm = phantom.estimate_noise_variance(image.load(args.input), args.region)
    _write_rows([("metric", "value"), ("variance", nm.variance),
                 ("measured_at_scale", nm.measured_at_scale)], args.out)


def cmd_metrics(args):
    a = image.load(args.a)
    b = image.load(args.b)
    rows = [("metric", "value"), ("rmse", phantom.rmse(a, b)),
            ("psnr", phantom.psnr(a, b, args.peak))]
    _write_rows(rows, args.out)


# -- pipeline --------------------------------------------------------------

def run_pipeline(manifest_path) -> dict:
    """Run phantom -> degrade -> restore -> sharpen -> metrics from a JSON manifest.

    Returns a dict of the metrics that were also written to ``metrics.csv``.
    """
    manifest_path = Path(manifest_path)
    try:
        m = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid pipeline manifest: {exc.msg}", offset=exc.pos) from exc
    root = manifest_path.parent
    out = root / m.get("workdir", "pipeline_out")
    out.mkdir(parents=True, exist_ok=True)

    spec_src = m["phantom"]
    if isinstance(spec_src, str):
        spec = phantom.load_phantom_spec(root / spec_src)
    else:
        spec = phantom.PhantomSpec.from_dict(spec_src)
    ideal = phantom.render_phantom(spec)
    image.save(ideal, out / "ideal.f64")

    deg = m.get("degrade", {})
    sigma_psf = float(deg.get("sigma_psf", 2.0))
    radius = deg.get("radius")
    noise = mfa.NoiseModel(float(deg["noise_var"]))
    g = phantom.degrade(ideal, _psf(sigma_psf, radius), noise, int(deg.get("seed", 0)))
    image.save(g, out / "degraded.f64")

    results = {"rmse_degraded": phantom.rmse(g, ideal)}
    rest = m.get("restore", {})
    f_star, trace = _restore(g, float(rest.get("sigma_psf", sigma_psf)), rest.get("radius", radius),
                             noise, rest)
    image.save(f_star, out / "restored.f64")
    trace.write_csv(out / "trace.csv")
    if trace.snapshots:
        trace.write_frames(out / "frames")
    results["rmse_restored"] = phantom.rmse(f_star, ideal)

    wien = None
    if "wiener" in m:
        wien = baseline.wiener(g, _psf(sigma_psf, radius), noise,
                               m["wiener"].get("signal_power", "estimate"))
        image.save(wien, out / "wiener.f64")
        results["rmse_wiener"] = phantom.rmse(wien, ideal)

    sh = m.get("sharpen")
    if sh:
        passes = int(sh.get("passes", 1))
        image.save(baseline.sharpen(f_star, passes), out / "restored_sharpened.f64")
        if wien is not None:
            image.save(baseline.sharpen(wien, passes), out / "wiener_sharpened.f64")
        if "flat_region" in sh:
            region = tuple(int(v) for v in sh["flat_region"])
            factor = float(sh["factor"])
            results["headroom_restored"] = baseline.sharpen_headroom(f_star, g, region, factor)
            if wien is not None:
                results["headroom_wiener"] = baseline.sharpen_headroom(wien, g, region, factor)

    peak = float(ideal.data.max())
    results["psnr_degraded"] = phantom.psnr(g, ideal, peak)
    results["psnr_restored"] = phantom.psnr(f_star, ideal, peak)
    _write_rows([("metric", "value")] + [(k, v) for k, v in results.items()],
                out / "metrics.csv")
    return results


def cmd_pipeline(args):
    results = run_pipeline(args.manifest)
    _write_rows([("metric", "value")] + list(results.items()))


# -- parser ----------------------------------------------------------------

def _add_psf_args(p, required=False):
    p.add_argument("--sigma-psf", type=float, default=None if required else 2.0,
                   required=required, help="Gaussian PSF standard deviation in pixels")
    p.add_argument("--radius", type=int, default=None, help="PSF radius (default ceil(4 sigma))")


def _add_noise_args(p):
    p.add_argument("--noise-var", type=float, required=True, help="noise variance sigma^2")
    p.add_argument("--noise-scale", type=float, default=None,
                   help="intensity scale at which --noise-var was measured")
    p.add_argument("--image-scale", type=float, default=None,
                   help="intensity scale of the input; rescales the variance by (ratio)^2")


def _add_io(p, needs_input=True):
    if needs_input:
        p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("pgm", "f64"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfarestore",
                                     description="Mean field annealing image restoration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a phantom spec")
    p.add_argument("spec")
    _add_io(p, needs_input=False)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("degrade", help="blur and add seeded noise")
    _add_io(p)
    _add_psf_args(p)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poisson", action="store_true", help="Poisson instead of Gaussian noise")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", help="mean field annealing restoration")
    _add_io(p)
    _add_psf_args(p)
    _add_noise_args(p)
    p.add_argument("--alpha", type=float, default=None, help="step size (default 0.5 sigma^2)")
    p.add_argument("--beta", type=float, default=1.0, help="prior weight")
    p.add_argument("--t0", type=float, default=None, help="initial temperature")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--steps-per-temperature", type=int, default=None)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--backtrack", action="store_true", help="Armijo step halving")
    p.add_argument("--stop-window", type=int, default=0, help="enable the stopping indicator")
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--frames-dir", default=None)
    p.add_argument("--frames-format", choices=("pgm", "f64"), default="pgm")
    p.add_argument("--trace-out", default=None)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("wiener", help="Wiener deconvolution")
    _add_io(p)
    _add_psf_args(p)
    _add_noise_args(p)
    p.add_argument("--signal-power", type=float, default=None,
                   help="constant signal power (default: per-frequency estimate)")
    p.set_defaults(func=cmd_wiener)

    p = sub.add_parser("sharpen", help="apply the 3x3 sharpening kernel")
    _add_io(p)
    p.add_argument("--passes", type=int, default=1)
    p.set_defaults(func=cmd_sharpen)

    p = sub.add_parser("sobel", help="Sobel gradient magnitude")
    _add_io(p)
    p.set_defaults(func=cmd_sobel)

    p = sub.add_parser("psf-fit", help="fit Gaussian sigma to point-source images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--distance", type=float, nargs="+", help="source distance (cm) per image")
    p.add_argument("--csv-out", default=None)
    p.set_defaults(func=cmd_psf_fit)

    p = sub.add_parser("trend", help="fit sigma against distance")
    p.add_argument("points", help="CSV with distance_cm,sigma[,fit_rmse]")
    p.add_argument("--predict", type=float, nargs="*")
    p.add_argument("--sigma-min", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("verify-line", help="check a PSF against a line-source image")
    p.add_argument("--in", dest="input", required=True)
    _add_psf_args(p, required=True)
    p.add_argument("--orientation", choices=("horizontal", "vertical"), default="horizontal")
    p.add_argument("--end-margin", type=float, default=0.1)
    p.set_defaults(func=cmd_verify_line)

    p = sub.add_parser("noise", help="estimate noise variance from a flood image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--region", type=_region, default=None, help="row,col,height,width")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("metrics", help="RMSE and PSNR of --a against reference --b")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--peak", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("pipeline", help="run a JSON pipeline manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except DivergenceError as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FitError as exc:
        print(f"error: fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, MfaError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

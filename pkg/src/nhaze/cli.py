"""``nhaze`` command line: synth, dehaze, eval, lights, prior-fit, bench.

Exit status is 0 on success, 1 on runtime failure (including any failed
item in a batch) and 2 on bad arguments or configuration.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .config import ConfigError, dehaze_params, dump_toml, load_toml, section, synth_params, to_dict
from .imaging import (
    CameraIntrinsics,
    DepthMap,
    ImageIOError,
    SemanticMap,
    list_images,
    load_class_map,
    read_depth,
    read_image,
    read_label_png,
    write_image,
    write_label_png,
)
from .lightprior import LightPriorModel, fit_light_prior, sample_light_colors
from .metrics import evaluate_dir
from .osfd import osfd
from .scene3r import reconstruct, render_haze, simulate_lights

logger = logging.getLogger("nhaze")

SYNTH_OUTPUTS = ("hazy", "lowlight", "lowlight_cast", "dayhaze", "L", "eta", "t")
LATENT_NAMES = {"L", "eta", "t"}


class UsageError(Exception):
    """Bad command-line arguments detected after parsing."""


def _threads(value: str | None) -> int:
    raw = value if value is not None else os.environ.get("NHAZE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"thread count must be an integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"thread count must be >= 1, got {n}")
    return n


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _map_items(fn, items, threads):
    """Run ``fn`` over items, capturing per-item failures; order preserved."""
    def guarded(item):
        try:
            return item, fn(item), None
        except (ImageIOError, OSError, ValueError) as e:
            return item, None, e
    if threads == 1:
        return [guarded(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, items))


def _write_record(directory: Path, command: str, config: dict, extra: dict | None = None) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "version": __version__, **(extra or {}), "config": config}
    dump_toml(record, directory / "run.toml")


def _write_latent(path: Path, img: np.ndarray) -> None:
    write_image(path, img, bits=16)


def _prior(path: str | None) -> LightPriorModel:
    if path is None:
        return LightPriorModel()
    try:
        return LightPriorModel.load(path)
    except (OSError, ValueError, TypeError) as e:
        raise ConfigError(f"cannot load light prior {path}: {e}") from e


def _params_file(path: str | None, name: str) -> dict:
    return section(load_toml(path), name) if path else {}


# ---------------------------------------------------------------------------
# synth

def load_scene(directory: Path):
    """Read a scene directory: rgb, depth, labels, class map and camera."""
    rgb = read_image(directory / "rgb.png")
    depth_path = directory / "depth.pfm"
    if not depth_path.exists():
        depth_path = directory / "depth.png"
    D = read_depth(depth_path)
    C = SemanticMap(read_label_png(directory / "labels.png"), load_class_map(directory / "class_map.toml"))
    K = CameraIntrinsics.from_file(directory / "camera.toml")
    return rgb, C, D, K


def cmd_synth(args, threads: int) -> int:
    params = synth_params(_params_file(args.params, "synth"))
    if args.beta_t:
        if any(b <= 0 for b in args.beta_t):
            raise UsageError("--beta-t values must be positive")
        levels = args.beta_t
    else:
        levels = [params.beta_t]
    prior = _prior(args.prior)
    out = Path(args.output)
    multi = len(args.scenes) > 1

    def one_scene(scene_dir):
        scene_dir = Path(scene_dir)
        R, C, D, K = load_scene(scene_dir)
        geom = reconstruct(C, D, K, params.superpixels)
        sky_depth = DepthMap(np.where(geom.sky, 0.0, D.data), geom.sky)
        base = out / scene_dir.name if multi else out
        for v in range(args.variants):
            rng = np.random.default_rng([args.seed, v])
            lights, illum = simulate_lights(R, C, D, K, geom, params, prior, rng)
            for beta in levels:
                res = render_haze(R, illum, sky_depth, beta, params.d_sky, lights)
                target = base / f"v{v:02d}_bt{beta:g}"
                target.mkdir(parents=True, exist_ok=True)
                for name, img in res.images().items():
                    if name in LATENT_NAMES:
                        _write_latent(target / f"{name}.png", img)
                    else:
                        write_image(target / f"{name}.png", img)
                with open(target / "lights.csv", "w", newline="") as f:
                    w = csv.writer(f)
                    w.writerow(["x", "y", "z", "r", "g", "b", "intensity"])
                    for lt in res.lights:
                        w.writerow([*map(repr, map(float, lt.position)),
                                    *map(repr, map(float, lt.color)), repr(float(lt.intensity))])
        return args.variants * len(levels)

    results = _map_items(one_scene, args.scenes, threads)
    _write_record(out, "synth", {"synth": to_dict(params)},
                  {"scenes": [str(s) for s in args.scenes], "variants": args.variants,
                   "beta_t": levels, "seed": args.seed, "threads": threads,
                   "prior": args.prior or "default"})
    return _report(results, "synthesized {} images")


def _report(results, ok_fmt: str) -> int:
    failed = 0
    for item, value, err in results:
        if err is not None:
            failed += 1
            print(f"FAILED {item}: {err}", file=sys.stderr)
        else:
            print(f"ok {item}: " + ok_fmt.format(value))
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# dehaze

def _scale_visualization(s_star: np.ndarray, n_scales: int) -> np.ndarray:
    """Color-mapped scale index, RGB in [0, 1]; hot colors are large scales."""
    idx = np.round(s_star * (255.0 / max(n_scales - 1, 1))).astype(np.uint8)
    bgr = cv2.applyColorMap(idx, cv2.COLORMAP_JET)
    return bgr[..., ::-1].astype(np.float64) / 255.0


def cmd_dehaze(args, threads: int) -> int:
    params = dehaze_params(_params_file(args.params, "dehaze"))
    inputs = []
    for p in args.inputs:
        p = Path(p)
        inputs.extend(list_images(p) if p.is_dir() else [p])
    if not inputs:
        raise UsageError("no input images")
    out = Path(args.output)
    multi = len(inputs) > 1

    def one_image(path):
        I = read_image(path)
        res = osfd(I, params)
        target = out / path.stem if multi else out
        target.mkdir(parents=True, exist_ok=True)
        write_image(target / "J.png", res.J)
        if args.dump_intermediates:
            write_image(target / "eta.png", res.eta)
            _write_latent(target / "L.png", res.L)
            _write_latent(target / "t.png", res.t)
        if args.dump_intermediates or args.dump_scales:
            write_label_png(target / "s_star.png", res.s_star)
        if args.dump_scales:
            write_image(target / "s_star_color.png", _scale_visualization(res.s_star, len(params.scales)))
        return target

    results = _map_items(one_image, inputs, threads)
    _write_record(out, "dehaze", {"dehaze": to_dict(params)},
                  {"inputs": [str(p) for p in inputs], "threads": threads,
                   "dump_intermediates": args.dump_intermediates, "dump_scales": args.dump_scales})
    return _report(results, "wrote {}")


# ---------------------------------------------------------------------------
# eval, lights, prior-fit, bench

def cmd_eval(args, threads: int) -> int:
    pred, truth = Path(args.pred), Path(args.truth)
    for d in (pred, truth):
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
    csv_path = Path(args.output)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    report = evaluate_dir(pred, truth, csv_path, threads)
    _write_record(csv_path.parent, "eval", {}, {"pred": str(pred), "truth": str(truth),
                                                  "csv": str(csv_path), "threads": threads})
    mean = report.mean()
    print(f"{len(report.rows)} images  psnr={mean.psnr:.4f}  ssim={mean.ssim:.4f}  "
          f"ciede2000={mean.ciede2000:.4f}")
    failed = [r for r in report.rows if r.failed]
    for r in failed:
        print(f"FAILED {r.path}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_lights(args, threads: int) -> int:
    prior = _prior(args.prior)
    colors = sample_light_colors(prior, np.random.default_rng(args.seed), args.n)
    stream = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["r", "g", "b"])
        for c in colors:
            w.writerow([repr(float(v)) for v in c])
    finally:
        if args.output:
            stream.close()
    record_dir = Path(args.output).parent if args.output else Path(args.record or ".")
    _write_record(record_dir, "lights", {"prior": prior.to_dict()}, {"n": args.n, "seed": args.seed})
    return 0


def cmd_prior_fit(args, threads: int) -> int:
    paths = list_images(args.corpus, (".png", ".jpg", ".jpeg"))
    if not paths:
        raise UsageError(f"no images in {args.corpus}")
    results = _map_items(read_image, paths, threads)
    corpus = [img for _, img, err in results if err is None]
    for p, _, err in results:
        if err is not None:
            print(f"FAILED {p}: {err}", file=sys.stderr)
    if not corpus:
        return 1
    model = fit_light_prior(corpus, bins=args.bins, coverage=args.coverage)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    _write_record(out.parent, "prior-fit", {"model": model.to_dict()},
                  {"corpus": str(args.corpus), "images": len(corpus), "bins": args.bins,
                   "coverage": args.coverage})
    print(f"slope={model.slope:.6f} intercept={model.intercept:.6f} "
          f"band_halfwidth={model.band_halfwidth:.6f} from {len(corpus)} images")
    return 1 if len(corpus) < len(paths) else 0


def bench_input(size: int, seed: int = 0) -> np.ndarray:
    """Deterministic nighttime-hazy-looking test image of ``size x size``."""
    from .procedural import make_street_scene
    scene = make_street_scene(size, size, seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    L = 0.2 + 0.6 * np.exp(-((xx - 0.5) ** 2 + (yy - 0.3) ** 2) / 0.05)
    eta = np.array([1.0, 0.8, 0.55])
    t = np.where(scene.depth.sky_mask, np.exp(-3.0), np.exp(-0.01 * scene.depth.data))[..., None]
    return scene.R * L[..., None] * eta * t + L[..., None] * eta * (1 - t)


def time_osfd(I: np.ndarray, params=None, repeat: int = 3) -> float:
    """Best-of-``repeat`` wall time of one OSFD run, in seconds."""
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        osfd(I, params)
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_bench(args, threads: int) -> int:
    params = dehaze_params(_params_file(args.params, "dehaze"))
    rows = []
    for size in args.sizes:
        secs = time_osfd(bench_input(size), params, args.repeat)
        rows.append((size, secs * 1000.0))
    print(f"{'size':>10s} {'ms':>10s}")
    for size, ms in rows:
        print(f"{f'{size}x{size}':>10s} {ms:10.1f}")
    if len(rows) > 1:
        (s0, m0), (s1, m1) = rows[0], rows[-1]
        print(f"time ratio {s1}^2/{s0}^2: {m1 / m0:.2f} (pixel ratio {(s1 / s0) ** 2:.2f})")
    record_dir = Path(args.record or ".")
    _write_record(record_dir, "bench", {"dehaze": to_dict(params)},
                  {"sizes": args.sizes, "repeat": args.repeat, "ms": [m for _, m in rows]})
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhaze", description="Nighttime haze synthesis and removal.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", default=None,
                   help="worker threads for batch items (default: $NHAZE_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render nighttime hazy images from scene directories")
    s.add_argument("scenes", nargs="+", help="scene directories")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--variants", type=_positive_int, default=1, help="light samplings per scene")
    s.add_argument("--beta-t", type=_float_list, default=None, help="comma-separated haze levels")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--params", help="TOML file of synthesis parameters")
    s.add_argument("--prior", help="light prior model TOML (default: built-in)")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("dehaze", help="remove nighttime haze")
    d.add_argument("inputs", nargs="+", help="input PNGs or directories of PNGs")
    d.add_argument("-o", "--output", required=True)
    d.add_argument("--params", help="TOML file of dehazing parameters")
    d.add_argument("--dump-intermediates", action="store_true", help="write eta, L, t and s_star")
    d.add_argument("--dump-scales", action="store_true", help="write s_star and its color map")
    d.set_defaults(func=cmd_dehaze)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("pred")
    e.add_argument("truth")
    e.add_argument("-o", "--output", default="metrics.csv")
    e.set_defaults(func=cmd_eval)

    li = sub.add_parser("lights", help="sample light colors as CSV")
    li.add_argument("-n", type=_positive_int, default=10)
    li.add_argument("--seed", type=int, default=0)
    li.add_argument("--prior", help="light prior model TOML (default: built-in)")
    li.add_argument("-o", "--output", help="CSV path (default: stdout)")
    li.add_argument("--record", help="directory for run.toml when writing to stdout")
    li.set_defaults(func=cmd_lights)

    pf = sub.add_parser("prior-fit", help="fit a light prior from nighttime images")
    pf.add_argument("corpus")
    pf.add_argument("-o", "--output", default="light_prior.toml")
    pf.add_argument("--bins", type=_positive_int, default=32)
    pf.add_argument("--coverage", type=float, default=0.9868)
    pf.set_defaults(func=cmd_prior_fit)

    b = sub.add_parser("bench", help="time dehazing over image sizes")
    b.add_argument("--sizes", type=_int_list, default=[256, 512, 1024])
    b.add_argument("--repeat", type=_positive_int, default=3)
    b.add_argument("--params", help="TOML file of dehazing parameters")
    b.add_argument("--record", help="directory for run.toml (default: current)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # kernels stay single-threaded so results never depend on --threads
    cv2.setNumThreads(1)
    try:
        threads = _threads(args.threads)
        if args.command == "prior-fit" and not 0 < args.coverage <= 1:
            raise UsageError("--coverage must lie in (0, 1]")
        if args.command == "bench" and any(s < 16 for s in args.sizes):
            raise UsageError("--sizes must be >= 16")
        return args.func(args, threads)
    except (UsageError, ConfigError) as e:
        print(f"nhaze {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (ImageIOError, OSError, ValueError) as e:
        print(f"nhaze {args.command}: failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: one subcommand per pipeline stage.

Exit status: 0 success, 2 usage error, 3 missing input file, 4 numeric or
format validation failure. Every CSV artifact starts with ``#`` comment lines
holding the tool version and the full run configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4

logger = logging.getLogger("panometric")


class UsageError(Exception):
    pass


def parse_size(text: str):
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return w, h


def _config(args) -> dict:
    skip = {"func", "log_level"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


def write_csv(path, header: list[str], rows, args) -> None:
    """CSV with a version/config comment header; values written with ``repr`` precision."""
    buf = io.StringIO()
    buf.write(f"# panometric {__version__}\n")
    buf.write(f"# config: {json.dumps(_config(args), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def write_svg(path, series: dict, title: str, kind: str = "line") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "panometric"
    fig, ax = plt.subplots(figsize=(5, 3))
    if kind == "bar":
        ax.bar(list(series), list(series.values()))
    else:
        for name, (x, y) in series.items():
            ax.plot(x, y, label=name)
        ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{p} does not exist")
    return p


def _view(args, out_size=None):
    from .projection import ViewSpec

    return ViewSpec(yaw=np.radians(args.yaw), pitch=np.radians(args.pitch),
                    fov=np.radians(args.fov), out_size=out_size or args.out_size)


# subcommands


def cmd_distort_map(args):
    from .fileio import write_features, write_image
    from .geometry import build_distortion_map

    W, H = args.size
    dmap = build_distortion_map(W, H)
    write_features(args.out, dmap.as_rows())
    if args.preview:
        write_image(args.preview, dmap.preview())
    print(f"wrote {args.out} ({H} rows x {4 * W} values)")


def cmd_project(args):
    from .fileio import read_image, write_image
    from .projection import equirect_to_perspective

    pano = read_image(_require(args.input))
    out = equirect_to_perspective(pano, _view(args), interp=args.interp, wrap=args.wrap)
    write_image(args.out, out)
    print(f"wrote {args.out}")


def cmd_unproject(args):
    from .fileio import read_image, write_image, write_mask
    from .projection import perspective_to_equirect

    img = read_image(_require(args.input))
    W, H = args.size
    pano, mask = perspective_to_equirect(img, _view(args, out_size=img.shape[0]), W, H, interp=args.interp)
    write_image(args.out, pano)
    if args.mask_out:
        write_mask(args.mask_out, mask)
    print(f"wrote {args.out}")


def cmd_mask(args):
    from .fileio import write_mask
    from .projection import make_nfov_mask

    W, H = args.size
    mask = make_nfov_mask(_view(args, out_size=1), W, H)
    write_mask(args.out, mask)
    print(f"wrote {args.out} ({int(mask.sum())} known pixels of {W * H})")


def cmd_corpus_gen(args):
    from .corpus import CLASSES, write_corpus

    if args.classes != len(CLASSES):
        raise UsageError(f"--classes must be {len(CLASSES)}")
    W, H = args.size
    write_corpus(args.out, args.per_class, W, H, args.seed, config=_config(args))
    print(f"wrote {args.classes * args.per_class} images under {args.out}")


def cmd_train_encoder(args):
    from .contrastive import TrainConfig, train_distort_encoder
    from .corpus import load_corpus

    images, labels = load_corpus(_require(args.corpus))
    cfg = TrainConfig(seed=args.seed, steps=args.steps, lr=args.lr,
                      three_column_text=args.three_column_text, log_every=args.log_every)
    result = train_distort_encoder(images, labels, cfg)
    Path(args.out).write_bytes(result.params.to_bytes())
    if args.report:
        write_csv(args.report, ["quantity", "value"], result.report.rows(), args)
    if args.loss_csv:
        write_csv(args.loss_csv, ["step", "loss"], enumerate(result.losses), args)
    print(f"intra {result.report.intra:.6f} inter {result.report.inter:.6f}")


def _load_encoder(path):
    from .contrastive import EncoderParams

    return EncoderParams.from_bytes(_require(path).read_bytes())


def cmd_extract_features(args):
    from .contrastive import class_probabilities, embed
    from .corpus import CLASSES, load_corpus
    from .fileio import write_features

    enc = _load_encoder(args.params)
    images, labels = load_corpus(_require(args.corpus))
    if args.class_name:
        images = images[labels == CLASSES.index(args.class_name)]
    feats = class_probabilities(enc, images) if args.kind == "probs" else embed(enc, images)
    write_features(args.out, feats, enc.digest)
    print(f"wrote {args.out} ({feats.shape[0]} x {feats.shape[1]})")


def cmd_metrics(args):
    from .fileio import NO_EXTRACTOR, read_features
    from .metrics import distort_fid, fid_from_features, inception_score

    gen = read_features(_require(args.gen))
    if args.metric == "is":
        mean, std = inception_score(gen.features.astype(float), splits=args.splits)
        header, row = ["metric", "mean", "std"], ["is", mean, std]
        print(f"{mean:.6f},{std:.6f}")
        plot = {"IS": mean}
    else:
        if args.ref is None:
            raise UsageError(f"metrics {args.metric} needs --ref")
        ref = read_features(_require(args.ref))
        if args.metric == "fid":
            value = fid_from_features(gen.features.astype(float), ref.features.astype(float))
        else:
            if NO_EXTRACTOR in (gen.extractor_hash, ref.extractor_hash):
                raise ValueError("distort-fid needs feature files tagged with an extractor hash")
            value = distort_fid(gen.features.astype(float), ref.features.astype(float),
                                gen.extractor_hash, ref.extractor_hash)
        header, row = ["metric", "value"], [args.metric, value]
        print(f"{value:.6f}")
        plot = {args.metric: value}
    if args.out:
        write_csv(args.out, header, [row], args)
    if args.plot:
        write_svg(args.plot, plot, args.metric, kind="bar")


def _curve_rows(history):
    keys = ["step", "train_total", "eval_total", "eval_rec", "eval_dist"]
    return keys, [[h[k] for k in keys] for h in history]


def _probe_encoder(args):
    from .toynet import train_probe_encoder

    if args.encoder:
        return _load_encoder(args.encoder)
    return train_probe_encoder(seed=args.seed)


def cmd_diffusion_demo(args):
    from .toynet import ToyTrainConfig, train_toynet

    enc = _probe_encoder(args)
    res = train_toynet(ToyTrainConfig(mode=args.mode, seed=args.seed, steps=args.steps, lr=args.lr,
                                      lam=args.lam), enc)
    header, rows = _curve_rows(res.history)
    write_csv(args.out, header, rows, args)
    if args.plot:
        write_svg(args.plot, {"eval_total": ([h["step"] for h in res.history],
                                             [h["eval_total"] for h in res.history])}, "loss")
    print(f"loss {res.initial_loss:.6f} -> {res.final_loss:.6f}")


def cmd_toynet_ablate(args):
    from .toynet import ToyTrainConfig, train_toynet
    from .decoupled_net import MODES

    enc = _probe_encoder(args)
    modes = MODES if args.mode == "both" else (args.mode,)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe_rows, curves = [], {}
    for mode in modes:
        res = train_toynet(ToyTrainConfig(mode=mode, seed=args.seed, steps=args.steps, lr=args.lr,
                                          lam=args.lam), enc)
        header, rows = _curve_rows(res.history)
        write_csv(out / f"loss_{mode}.csv", header, rows, args)
        ratio = res.final_loss / res.initial_loss
        probe_rows.append([mode, res.initial_loss, res.final_loss, ratio, res.probe_score])
        curves[mode] = ([h["step"] for h in res.history], [h["eval_total"] for h in res.history])
        print(f"{mode}: loss {res.initial_loss:.6f} -> {res.final_loss:.6f} "
              f"(ratio {ratio:.3f}), probe {res.probe_score:.4f}")
    write_csv(out / "probe.csv", ["mode", "initial_loss", "final_loss", "final_over_initial", "probe_score"],
              probe_rows, args)
    if args.plot:
        write_svg(out / "loss.svg", curves, "toy denoiser loss")


def cmd_selfcheck(args):
    from .checks import run_all

    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        return EXIT_NUMERIC
    return 0


# parser


def _add_view_flags(p):
    p.add_argument("--yaw", type=float, default=0.0, help="degrees")
    p.add_argument("--pitch", type=float, default=0.0, help="degrees")
    p.add_argument("--fov", type=float, default=90.0, help="degrees")
    p.add_argument("--interp", choices=("bilinear", "nearest"), default="bilinear")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panometric", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"panometric {__version__}")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, parent=sub, **kw):
        p = parent.add_parser(name, allow_abbrev=False, **kw)
        p.set_defaults(func=func)
        return p

    p = add("distort-map", cmd_distort_map, help="export the 4-plane distortion map")
    p.add_argument("--size", type=parse_size, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview", help="8-bit RGBA preview PNG")

    p = add("project", cmd_project, help="equirectangular to perspective")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", dest="out_size", type=int, default=256, help="output side in pixels")
    p.add_argument("--wrap", choices=("wrap", "clamp"), default="wrap")
    _add_view_flags(p)

    p = add("unproject", cmd_unproject, help="perspective to equirectangular")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out")
    p.add_argument("--size", type=parse_size, default=(1024, 512))
    _add_view_flags(p)

    p = add("mask", cmd_mask, help="NFoV known-region mask")
    p.add_argument("--size", type=parse_size, default=(1024, 512))
    p.add_argument("--out", required=True)
    _add_view_flags(p)

    corpus = sub.add_parser("corpus", help="procedural corpus").add_subparsers(dest="action", required=True)
    p = add("gen", cmd_corpus_gen, parent=corpus)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--size", type=parse_size, default=(64, 32))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train-encoder", cmd_train_encoder, help="train the distortion-aware encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--three-column-text", action="store_true")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="similarity report CSV")
    p.add_argument("--loss-csv")

    p = add("extract-features", cmd_extract_features, help="encoder features to a PFEA file")
    p.add_argument("--params", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--class", dest="class_name", choices=("panorama", "perspective", "random"))
    p.add_argument("--kind", choices=("embed", "probs"), default="embed")
    p.add_argument("--out", required=True)

    metrics = sub.add_parser("metrics", help="FID, Distort-FID, IS").add_subparsers(dest="metric", required=True)
    for name in ("fid", "distort-fid", "is"):
        p = add(name, cmd_metrics, parent=metrics)
        p.add_argument("--gen", required=True)
        p.add_argument("--ref", required=name != "is")
        p.add_argument("--splits", type=int, default=1)
        p.add_argument("--out", help="CSV row with config header")
        p.add_argument("--plot", help="SVG bar chart")

    diffusion = sub.add_parser("diffusion", help="toy denoiser").add_subparsers(dest="action", required=True)
    p = add("demo", cmd_diffusion_demo, parent=diffusion)
    p.add_argument("--mode", choices=("first-block", "all-block"), default="all-block")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--lam", type=float, default=0.05)
    p.add_argument("--encoder")
    p.add_argument("--out", default="diffusion_loss.csv")
    p.add_argument("--plot", help="SVG loss curve")

    toynet = sub.add_parser("toynet", help="registration ablation").add_subparsers(dest="action", required=True)
    p = add("ablate", cmd_toynet_ablate, parent=toynet)
    p.add_argument("--mode", choices=("first-block", "all-block", "both"), default="both")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--lam", type=float, default=0.05)
    p.add_argument("--encoder")
    p.add_argument("--out-dir", default="ablation")
    p.add_argument("--plot", action="store_true", help="also write loss.svg")

    add("selfcheck", cmd_selfcheck, help="run the invariant suite")
    return parser


def _limit_threads():
    n = os.environ.get("PANOMETRIC_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads()
    try:
        return args.func(args) or 0
    except UsageError as exc:
        parser.error(str(exc))
    except FileNotFoundError as exc:
        print(f"panometric: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"panometric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        if limiter is not None:
            limiter.restore_original_limits()

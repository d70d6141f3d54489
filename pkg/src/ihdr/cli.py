"""Command-line front end: ``ihdr <subcommand>``.

Exit codes: 0 success, 2 usage error, 3 data error (bad files or inputs),
4 internal invariant violation.  Every run echoes its resolved
configuration for reproducibility, errors are single machine-parsable
lines on stderr, and all file outputs are written atomically.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

import ihdr
from ihdr.images import (
    DataError,
    HdrImage,
    LdrImage,
    _atomic_write_bytes,
    load_bracket,
    read_pfm,
    write_bracket,
    write_pfm,
    write_png16,
)
from ihdr.metrics import evaluate
from ihdr.pipeline import iterative_fuse, plan, select_reference
from ihdr.sensor import SensorParams, make_bracket
from ihdr.sideinfo import build_bundle
from ihdr.tonemap import ToneNetModel, mu_law, physics_tonemap, tonenet_apply, train_tonenet
from ihdr.fusion.checkpoint import FORMAT_VERSION, load_model, save_model
from ihdr.fusion.macs import count_macs
from ihdr.fusion.network import FusionModel
from ihdr.fusion.training import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _parse_evs(spec: str):
    """EV list syntax: "-4..4" (inclusive integer range) or "-2,0,2"."""
    spec = spec.strip()
    if ".." in spec:
        lo_s, hi_s = spec.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise DataError(f"empty EV range {spec!r}")
        return [float(v) for v in range(lo, hi + 1)]
    try:
        return [float(v) for v in spec.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise DataError(f"cannot parse EV list {spec!r}: {exc}") from exc


def _echo_config(args):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"config: {json.dumps(resolved, default=str, sort_keys=True)}")


def _mask_to_ldr(mask):
    return LdrImage(pixels=np.repeat(mask[:, :, None], 3, axis=2), exposure_time=1.0)


def _write_json(path, doc):
    _atomic_write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    hdr = read_pfm(args.hdr)
    evs = _parse_evs(args.evs)
    if len(evs) < 2:
        raise DataError("simulate needs at least two EVs to form a bracket")
    mode = "poisson" if args.noise == "on" else "deterministic"
    bracket = make_bracket(hdr, evs, SensorParams(), seed=args.seed, t0=args.t0, mode=mode)
    manifest = write_bracket(bracket, args.out)
    print(f"wrote {len(bracket)} frames and {manifest}")
    return EXIT_OK


def cmd_sideinfo(args):
    bracket = load_bracket(args.manifest)
    ref_index = args.ref if args.ref is not None else select_reference(bracket)
    if args.nonref is not None:
        nonref_index = args.nonref
    else:
        nonref_index = plan(bracket).nonref_order[0]
    if not (0 <= ref_index < len(bracket)) or not (0 <= nonref_index < len(bracket)):
        raise DataError("frame index outside the bracket")
    params = SensorParams()
    bundle = build_bundle(bracket[ref_index], bracket[nonref_index], gamma=params.gamma)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pfm(bundle.ref_pseudo_hdr, out / "pseudo_hdr_ref.pfm")
    write_pfm(bundle.nonref_pseudo_hdr, out / "pseudo_hdr_nonref.pfm")
    for name, mask in (
        ("reversed_flat", bundle.st.reversed_flat),
        ("edge_map", bundle.st.edge_map),
        ("corner_map", bundle.st.corner_map),
        ("flat_map", bundle.st.flat_map),
        ("difference_mask", bundle.diff.mask),
    ):
        write_png16(_mask_to_ldr(mask), out / f"{name}.png")
    print(f"side information for frames ({ref_index}, {nonref_index}) written to {out}")
    return EXIT_OK


def cmd_fuse(args):
    bracket = load_bracket(args.manifest)
    model = None
    if args.fuser == "network":
        if args.model is None:
            raise DataError("--fuser network requires --model")
        model = load_model(args.model)
    fusion_plan = plan(bracket, fuser=args.fuser)

    dump_dir = Path(args.dump_intermediates) if args.dump_intermediates else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    def on_intermediate(step, hdr):
        if dump_dir is not None:
            write_pfm(hdr, dump_dir / f"intermediate_{step:02d}.pfm")

    result = iterative_fuse(bracket, fusion_plan, model=model, on_intermediate=on_intermediate)
    write_pfm(result, args.out)
    print(
        f"fused {len(bracket)} frames (reference {fusion_plan.reference_index}, "
        f"order {list(fusion_plan.nonref_order)}) -> {args.out}"
    )
    return EXIT_OK


def cmd_tonemap(args):
    hdr = read_pfm(getattr(args, "in"))
    params = SensorParams()
    if args.backend == "mulaw":
        peak = float(hdr.pixels.max())
        normalized = hdr.pixels / peak if peak > 0 else hdr.pixels
        mapped = LdrImage(pixels=mu_law(normalized, mu=5000.0), exposure_time=1.0)
    elif args.backend == "analytic":
        mapped = tonenet_apply(hdr, ToneNetModel(backend="analytic", params=params))
    else:
        # The learned backend's training target is the analytic map, so it
        # can be fit on the input itself, seeded for reproducibility.
        model, _ = train_tonenet([hdr], params, steps=args.fit_steps, seed=args.seed)
        mapped = tonenet_apply(hdr, model)
    write_png16(mapped, args.out)
    print(f"tonemapped ({args.backend}) -> {args.out}")
    return EXIT_OK


def _load_training_samples(data_dir, patch, rng):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"training data directory not found: {data_dir}")
    sample_dirs = sorted(p for p in data_dir.iterdir() if (p / "manifest.json").exists())
    if not sample_dirs:
        raise DataError(f"no training samples (subdirectories with manifest.json) in {data_dir}")
    params = SensorParams()
    samples = []
    for sample_dir in sample_dirs:
        bracket = load_bracket(sample_dir / "manifest.json")
        gt = read_pfm(sample_dir / "gt.pfm")
        fusion_plan = plan(bracket)
        ref = bracket[fusion_plan.reference_index]
        nonref = bracket[fusion_plan.nonref_order[0]]
        h, w = ref.pixels.shape[:2]
        if h < patch or w < patch:
            raise DataError(f"sample {sample_dir.name} is smaller than the {patch}px patch")
        y = int(rng.integers(h - patch + 1))
        x = int(rng.integers(w - patch + 1))

        def crop_ldr(img):
            return LdrImage(
                pixels=img.pixels[y : y + patch, x : x + patch],
                exposure_time=img.exposure_time,
                ev=img.ev,
            )

        bundle = build_bundle(crop_ldr(ref), crop_ldr(nonref), gamma=params.gamma)
        gt_crop = HdrImage(pixels=gt.pixels[y : y + patch, x : x + patch])
        samples.append((bundle, gt_crop, physics_tonemap(gt_crop, params)))
    return samples


def cmd_train(args):
    rng = np.random.default_rng(args.seed)
    samples = _load_training_samples(args.data, args.patch, rng)
    epochs = max(1, -(-args.steps // len(samples)))  # ceil division
    cfg = TrainConfig(epochs=epochs, batch=args.batch, seed=args.seed, patch=args.patch)
    result = train(samples, cfg)
    save_model(result.model, args.out)
    print(
        f"trained {len(result.loss_history)} steps on {len(samples)} samples: "
        f"loss {result.loss_history[0]:.6f} -> {result.loss_history[-1]:.6f}; saved {args.out}"
    )
    return EXIT_OK


def cmd_eval(args):
    pred = read_pfm(args.pred)
    gt = read_pfm(args.gt)
    report = evaluate(pred, gt)
    doc = report.to_json()
    if args.json:
        _write_json(args.json, doc)
    print(
        f"psnr_l={doc['psnr_l']} psnr_mu={doc['psnr_mu']} "
        f"ssim_l={doc['ssim_l']:.6f} ssim_mu={doc['ssim_mu']:.6f}"
    )
    return EXIT_OK


def cmd_macs(args):
    model = load_model(args.model) if args.model else FusionModel.init()
    try:
        h_s, w_s = args.size.lower().split("x", 1)
        h, w = int(h_s), int(w_s)
    except ValueError as exc:
        raise DataError(f"cannot parse --size {args.size!r} (expected HxW): {exc}") from exc
    report = count_macs(model, h, w)
    print(report.table())
    print(f"total: {report.total / 1e9:.4f} GMACs at {h}x{w}")
    if args.json:
        _write_json(
            args.json,
            {
                "layers": [{"name": r.name, "kind": r.kind, "macs": r.macs} for r in report.rows],
                "total": report.total,
            },
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ihdr",
        description="Iterative multi-exposure HDR fusion: simulate, sideinfo, fuse, tonemap, train, eval, macs.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"ihdr {ihdr.__version__} (checkpoint format v{FORMAT_VERSION})",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global RNG seed")
    common.add_argument("--threads", type=int, default=None, help="cap on internal data parallelism")
    common.add_argument("--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate an exposure bracket from an HDR scene")
    p.add_argument("--hdr", required=True, help="input scene (PFM)")
    p.add_argument("--evs", required=True, help='EV list: "-4..4" or "-2,0,2"')
    p.add_argument("--noise", choices=["on", "off"], default="on")
    p.add_argument("--t0", type=float, default=1.0, help="base exposure time at EV 0")
    p.add_argument("--out", required=True, help="output directory (frames + manifest.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sideinfo", parents=[common], help="emit side-information maps for one frame pair")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ref", type=int, default=None)
    p.add_argument("--nonref", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sideinfo)

    p = sub.add_parser("fuse", parents=[common], help="iteratively fuse a bracket into one HDR image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fuser", choices=["baseline", "network"], default="baseline")
    p.add_argument("--model", default=None, help="checkpoint for --fuser network")
    p.add_argument("--out", required=True, help="output HDR (PFM)")
    p.add_argument("--dump-intermediates", default=None, help="directory for per-step PFMs")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("tonemap", parents=[common], help="map a linear HDR image to the nonlinear domain")
    p.add_argument("--in", required=True, help="input HDR (PFM)")
    p.add_argument("--backend", choices=["analytic", "learned", "mulaw"], default="analytic")
    p.add_argument("--fit-steps", type=int, default=1500, help="fit steps for --backend learned")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_tonemap)

    p = sub.add_parser("train", parents=[common], help="train the fusion network on bracket+GT samples")
    p.add_argument("--data", required=True, help="directory of sample dirs (manifest.json + gt.pfm)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--patch", type=int, default=32)
    p.add_argument("--out", required=True, help="output checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM in linear and mu-law domains")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", default=None, help="write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("macs", parents=[common], help="per-layer multiply-accumulate accounting")
    p.add_argument("--model", default=None, help="checkpoint (default: toy architecture)")
    p.add_argument("--size", default="1000x1500", help="input resolution HxW")
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_macs)

    return parser


def _merge_dash_values(argv):
    """Let ``--evs -4..4`` parse: argparse otherwise reads the value as a flag."""
    merged = []
    skip = False
    for i, token in enumerate(argv):
        if skip:
            skip = False
            continue
        if token == "--evs" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            merged.append(f"--evs={argv[i + 1]}")
            skip = True
        else:
            merged.append(token)
    return merged


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = _merge_dash_values(list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _echo_config(args)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"ihdr: error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"ihdr: error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # internal invariant violations
        print(f"ihdr: error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

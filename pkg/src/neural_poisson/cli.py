"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
Every option may also come from ``--config FILE.toml`` using the long
option name with dashes replaced by underscores; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import tomli

from .classical import MaskRegion, pie_blend
from .errors import ConfigError, NumericError, UsageError
from .fit import FitOptions, fit_image, render_image
from .guidance import GuidanceMode
from .harness import RunConfig, run_ablation, run_comparison
from .inr import default_image_arch, init_model
from .io import load_model, read_mask_png, read_png, save_field, save_model, write_png
from .metrics import residual_metrics
from .optim import Schedule
from .radiance import RadianceBlendConfig, blend_radiance, evaluation_poses, render
from .scenes import BUNDLED_SCENES, load_radiance_scene, resolve_scene
from .solver import BlendProblem, blend_2d

log = logging.getLogger("neural_poisson")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "seed": 0,
    "lambda": None,
    "mode": "max",
    "deterministic": True,
    "target_psnr": None,
    "lr": 1e-3,
    "offset": "0,0",
    "fit_steps": 1000,
}
STEP_DEFAULTS = {"fit": 2000, "blend2d": 1000, "blend-rf": 300, "ablate": 1000, "eval": 1000}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with option values")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def _blend_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--mode", type=str, help="max | affine | affine:MU,PHI")


def _region_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mask", required=True, help="rect:X0,Y0,X1,Y1 or a mask PNG")
    p.add_argument("--offset", type=str, help="DX,DY placement of the target region in the source")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neural-poisson", description="Poisson blending with neural image and radiance fields.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit an image network")
    p.add_argument("image", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--trace", type=Path)
    p.add_argument("--target-psnr", type=float)
    p.add_argument("--lr", type=float)
    _common(p)

    p = sub.add_parser("blend2d", help="blend two image networks")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--target", type=Path, required=True)
    _region_opts(p)
    p.add_argument("-o", "--output", type=Path, required=True, help="blended PNG")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--trace", type=Path)
    p.add_argument("--size", type=str, help="WxH raster size for networks without a grid")
    _blend_opts(p)
    _common(p)

    p = sub.add_parser("baseline", help="classical Poisson blend of two PNGs")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--target", type=Path, required=True)
    _region_opts(p)
    p.add_argument("-o", "--output", type=Path, required=True)
    _blend_opts(p)
    _common(p)

    p = sub.add_parser("blend-rf", help="blend two procedural radiance fields")
    p.add_argument("scene", type=Path, nargs="?", help="scene TOML (default: bundled sphere-in-box)")
    p.add_argument("-o", "--output", type=Path, required=True, help="blended field file")
    p.add_argument("--renders", type=Path, help="directory for turntable PNGs")
    p.add_argument("--trace", type=Path)
    _blend_opts(p)
    _common(p)

    p = sub.add_parser("eval", help="residual metrics of a blend, or the solver comparison table")
    p.add_argument("--blend", type=Path, help="blended PNG or network checkpoint")
    p.add_argument("--source", type=Path)
    p.add_argument("--target", type=Path)
    p.add_argument("--mask")
    p.add_argument("--offset", type=str)
    p.add_argument("--scenes", nargs="*", help=f"bundled names ({', '.join(BUNDLED_SCENES)}) or scene TOML files")
    p.add_argument("-o", "--output", type=Path, help="CSV output (default: stdout)")
    p.add_argument("--fit-steps", type=int, help="fitting steps per raster for --scenes")
    _blend_opts(p)
    _common(p)

    p = sub.add_parser("ablate", help="global versus boundary-band colour loss")
    p.add_argument("scene", help="bundled name or scene TOML")
    p.add_argument("--images", type=Path, help="directory for the two output PNGs")
    p.add_argument("--fit-steps", type=int, help="fitting steps per raster")
    _blend_opts(p)
    _common(p)
    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    opts["steps"] = STEP_DEFAULTS.get(args.command)
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, "rb") as fh:
                cfg = tomli.load(fh)
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {args.config}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        known = set(vars(args)) | {"lambda"}
        for k, v in cfg.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            opts[k] = v
    for k, v in vars(args).items():
        if v is not None and k != "config":
            opts["lambda" if k == "lambda_" else k] = v
    return opts


def _lam(o: dict) -> float:
    return 1.0 if o["lambda"] is None else float(o["lambda"])


def _pair(text: str, kind=int) -> tuple:
    try:
        a, b = (kind(v) for v in str(text).split(","))
    except ValueError as exc:
        raise UsageError(f"expected two comma-separated values, got {text!r}") from exc
    return a, b


def _region(mask: str, offset: str, target_shape, source_shape) -> MaskRegion:
    if mask is None:
        raise UsageError("--mask is required")
    dx, dy = _pair(offset)
    if mask.startswith("rect:"):
        try:
            x0, y0, x1, y1 = (int(v) for v in mask[5:].split(","))
        except ValueError as exc:
            raise UsageError(f"bad rect mask {mask!r}") from exc
        return MaskRegion.rect(target_shape, x0, y0, x1, y1, (dx, dy), source_shape)
    m = read_mask_png(mask)
    return MaskRegion(m, (dx, dy), tuple(source_shape))


def _model_shape(model, size: str | None):
    if size:
        w, h = (int(v) for v in size.lower().split("x"))
        return h, w
    if model.arch.grid_resolution is None:
        raise UsageError("--size is required for networks without a grid encoding")
    w, h = model.arch.grid_resolution
    if model.arch.grid_align == "corner":
        w, h = (w - 1) // 2, (h - 1) // 2
    return h, w


def _write_text(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def cmd_fit(o: dict) -> None:
    img = read_png(o["image"])
    h, w = img.shape[:2]
    model = init_model(default_image_arch(h, w), o["seed"])
    opts = FitOptions(
        schedule=Schedule(steps=o["steps"], lr=float(o["lr"]), lr_min=1e-5, log_every=50),
        target_psnr=o["target_psnr"],
        deterministic=o["deterministic"],
        seed=o["seed"],
    )
    model, trace = fit_image(model, img, opts)
    save_model(model, o["output"])
    if o.get("trace"):
        _write_text(o["trace"], "step,psnr\n" + "".join(f"{s},{p:.10e}\n" for s, p in trace))
    log.info("fit: %d steps, final PSNR %.2f dB", trace[-1][0], trace[-1][1])


def cmd_blend2d(o: dict) -> None:
    S, T = load_model(o["source"]), load_model(o["target"])
    shape = _model_shape(S, o.get("size"))
    region = _region(o["mask"], o["offset"], shape, shape)
    prob = BlendProblem(
        S, T, region, GuidanceMode.parse(o["mode"]), lam=_lam(o),
        schedule=Schedule(steps=o["steps"], lr=1e-3, lr_min=1e-5, log_every=50),
        seed=o["seed"], deterministic=o["deterministic"],
    )
    try:
        G, trace = blend_2d(prob)
    except NumericError as exc:
        if o.get("checkpoint") and exc.checkpoint is not None:
            save_model(exc.checkpoint, o["checkpoint"])
        raise
    write_png(o["output"], render_image(G, *shape))
    if o.get("checkpoint"):
        save_model(G, o["checkpoint"])
    if o.get("trace"):
        _write_text(o["trace"], trace.to_csv())


def cmd_baseline(o: dict) -> None:
    s, t = read_png(o["source"]), read_png(o["target"])
    region = _region(o["mask"], o["offset"], t.shape[:2], s.shape[:2])
    write_png(o["output"], pie_blend(s, t, region, GuidanceMode.parse(o["mode"])))


def cmd_blend_rf(o: dict) -> None:
    scene = load_radiance_scene(o.get("scene"))
    tr = scene.train
    cfg = RadianceBlendConfig(
        mode=GuidanceMode.parse(o["mode"] if o.get("mode") is not None else tr.get("mode", "max")),
        lam=_lam(o),
        schedule=Schedule(steps=o["steps"], lr=float(tr.get("lr", 2e-2)), lr_min=1e-4, log_every=10),
        seed=o["seed"],
        render_resolution=scene.resolution,
        radius_range=scene.radius_range,
        fov_y=scene.fov_y,
        deterministic=o["deterministic"],
    )
    try:
        G, trace = blend_radiance(scene.source, scene.target, scene.roi, cfg)
    except NumericError as exc:
        if exc.checkpoint is not None:
            save_field(exc.checkpoint, o["output"])
        raise
    save_field(G, o["output"])
    if o.get("trace"):
        _write_text(o["trace"], trace.to_csv())
    if o.get("renders"):
        out = Path(o["renders"])
        out.mkdir(parents=True, exist_ok=True)
        for k, cam in enumerate(evaluation_poses(scene.roi, scene.radius_range, 8, fov_y=scene.fov_y, resolution=scene.resolution)):
            write_png(out / f"view_{k:02d}.png", render(G, cam))


def _run_config(o: dict) -> RunConfig:
    return RunConfig(
        seed=o["seed"], fit_steps=int(o["fit_steps"]), blend_steps=o["steps"],
        lam=o["lambda"], deterministic=o["deterministic"],
    )


def cmd_eval(o: dict) -> None:
    mode = GuidanceMode.parse(o["mode"])
    if o.get("scenes") is not None:
        names = o["scenes"] or list(BUNDLED_SCENES)
        cfg = _run_config(o)
        res = run_comparison([resolve_scene(n) for n in names], cfg=cfg)
        _write_text(o.get("output"), res.csv())
        return
    if not (o.get("blend") and o.get("source") and o.get("target")):
        raise UsageError("eval needs --blend, --source, --target and --mask (or --scenes)")
    s, t = read_png(o["source"]), read_png(o["target"])
    region = _region(o["mask"], o["offset"], t.shape[:2], s.shape[:2])
    blend_path = Path(o["blend"])
    if blend_path.suffix.lower() == ".png":
        blend, solver = read_png(blend_path), "pie"
    else:
        blend, solver = load_model(blend_path), "neural"
    rep = residual_metrics(blend, s, t, region, mode, solver)
    row = rep.as_row()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(row)
    w.writerow(v if isinstance(v, str) else f"{v:.6e}" for v in row.values())
    _write_text(o.get("output"), buf.getvalue())


def cmd_ablate(o: dict) -> None:
    bundle = resolve_scene(o["scene"])
    cfg = _run_config(o)
    mode = GuidanceMode.parse(o["mode"]) if o.get("mode") is not None else None
    rep = run_ablation(bundle, cfg, mode)
    print(rep.summary())
    if o.get("images"):
        out = Path(o["images"])
        out.mkdir(parents=True, exist_ok=True)
        write_png(out / "global.png", rep.global_image)
        write_png(out / "boundary.png", rep.boundary_image)


COMMANDS = {
    "fit": cmd_fit,
    "blend2d": cmd_blend2d,
    "baseline": cmd_baseline,
    "blend-rf": cmd_blend_rf,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        opts = _merge_config(args)
        for key in ("steps", "fit_steps"):
            if opts[key] is not None and int(opts[key]) < 1:
                raise UsageError(f"--{key.replace('_', '-')} must be >= 1")
        COMMANDS[args.command](opts)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

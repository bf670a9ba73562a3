"""Command-line entry point: ``liquidwarp <subcommand> ...``.

Set LWF_THREADS to cap parallelism (0 = all cores).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .body_model import (SYNTH_CAMERA, BodyParams, CameraWP, load_model, project, rodrigues, save_model,
                         skin, smpl_sized_model, synth_model)
from .flow import imitation_flow, novelview_flow, swap_flows
from .metrics_losses import attention_reg, compose_output, pixel_l1, psnr, ssim, tv
from .pipeline import MODES, PipelineInputs, run_pipeline
from .rasterizer import face_tris, rasterize
from .warp_fusion import BLOCKS, bilinear_sample, init_fusion_params, lwb_apply


def _vec3(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return np.array(parts)


def _load_any_image(path: str) -> np.ndarray:
    """PNG -> (H, W, 3) in [0, 1]; .lwt -> array as stored (float)."""
    if path.endswith(".lwt"):
        return io.tensor_read(path).astype(np.float64)
    return io.read_image(path)


def _face_mask(model, which: str):
    if which == "all":
        return None
    if model.head_faces is None:
        raise ValueError("model has no head partition")
    head = np.zeros(model.n_faces, dtype=bool)
    head[model.head_faces] = True
    return head if which == "head" else ~head


def cmd_genmodel(args) -> None:
    model = smpl_sized_model() if args.smpl_sized else synth_model(args.segments)
    save_model(model, args.output)
    if args.params:
        camera = CameraWP(1.0) if args.smpl_sized else SYNTH_CAMERA
        params = BodyParams(np.zeros(3 * model.n_joints), np.zeros(model.n_betas), camera)
        io.write_params(args.params, params)
    print(f"wrote {args.output}: {model.n_verts} vertices, {model.n_faces} faces, "
          f"{model.n_joints} joints, {model.n_betas} betas")


def cmd_rasterize(args) -> None:
    model = load_model(args.model)
    params = io.read_params(args.params, model)
    H, W = args.size
    verts = project(skin(model, params.theta, params.beta), params.camera)
    maps = rasterize(face_tris(verts, model.faces), H, W, _face_mask(model, args.faces))
    io.write_maps(args.output, maps)


def cmd_flow(args) -> None:
    model = load_model(args.model)
    src = io.read_params(args.source, model)
    H, W = args.size
    out = Path(args.output)
    if args.mode == "imitate":
        if not args.reference:
            raise ValueError("--reference is required for imitate")
        ref = io.read_params(args.reference, model)
        io.write_flow(out, imitation_flow(model, src, ref.theta, H, W).flows[0])
    elif args.mode == "view":
        R = rodrigues(args.rotvec)
        io.write_flow(out, novelview_flow(model, src, R, args.translation, H, W).flows[0])
    else:
        if not args.reference:
            raise ValueError("--reference is required for swap")
        ref = io.read_params(args.reference, model)
        sw = swap_flows(model, src, ref, model.head_faces, H, W)
        stem = out.with_suffix("")
        io.write_flow(f"{stem}_t1.lwb", sw.t1)
        io.write_flow(f"{stem}_t2.lwb", sw.t2)


def cmd_warp(args) -> None:
    tf = io.read_flow(args.flow)
    src = _load_any_image(args.input)
    if args.input.endswith(".lwt"):
        out = bilinear_sample(src, tf)
        io.tensor_write(args.output, out.astype(np.float32))
    else:
        out = bilinear_sample(np.moveaxis(src, -1, 0), tf)
        io.write_image(args.output, np.moveaxis(out, 0, -1))


def cmd_fuse(args) -> None:
    if len(args.source) != len(args.flow):
        raise ValueError("give one --flow per --source")
    xt = io.tensor_read(args.target).astype(np.float64)
    xs = [io.tensor_read(p).astype(np.float64) for p in args.source]
    flows = [io.read_flow(p) for p in args.flow]
    if args.params:
        params = io.read_fusion_params(args.params)
    else:
        params = init_fusion_params(xt.shape[0], seed=args.seed)
    if args.save_params:
        io.write_fusion_params(args.save_params, params)
    out = lwb_apply(args.block, params, xs, flows, xt)
    io.tensor_write(args.output, out.astype(np.float32))


def cmd_compose(args) -> None:
    color = io.read_image(args.color)
    bg = io.read_image(args.background)
    att = _load_any_image(args.attention)
    if att.ndim == 3:
        att = att[..., 0]
    io.write_image(args.output, compose_output(color, att, bg))


def cmd_metrics(args) -> None:
    a, b = io.read_image(args.a), io.read_image(args.b)
    print(f"psnr={psnr(a, b):.6f}")
    print(f"ssim={ssim(a, b):.6f}")


def cmd_losses(args) -> None:
    if args.attention:
        maps = [io.tensor_read(p).astype(np.float64) for p in args.attention]
        sils = [io.tensor_read(p).astype(np.float64) for p in args.silhouette or []]
        for p, A in zip(args.attention, maps):
            print(f"tv[{p}]={tv(A):.9g}")
        if sils:
            print(f"attention_reg={attention_reg(maps, sils):.9g}")
    if args.pred or args.truth:
        if not (args.pred and args.truth):
            raise ValueError("--pred and --truth go together")
        print(f"pixel_l1={pixel_l1(_load_any_image(args.pred), _load_any_image(args.truth)):.9g}")


def cmd_pipeline(args) -> None:
    model = load_model(args.model)
    if len(args.source_params) != len(args.source_image):
        raise ValueError("give one --source-image per --source-params")
    sources = []
    for p, img in zip(args.source_params, args.source_image):
        sources.append((io.read_params(p, model), io.to_u8(io.read_image(img))))
    reference = None
    if args.reference_params:
        ref_img = io.to_u8(io.read_image(args.reference_image)) if args.reference_image else None
        reference = (io.read_params(args.reference_params, model), ref_img)
    inputs = PipelineInputs(args.mode, sources, reference, rodrigues(args.rotvec), args.translation,
                            args.dilate, args.bg_index)
    manifest = run_pipeline(model, inputs, args.out_dir)
    print(json.dumps(manifest, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liquidwarp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genmodel", help="write a synthetic body model JSON")
    p.add_argument("--segments", type=int, default=2, help="capsule segments per half")
    p.add_argument("--smpl-sized", action="store_true", help="6890-vertex, 24-joint stand-in")
    p.add_argument("--params", help="also write rest-pose params JSON here")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_genmodel)

    p = sub.add_parser("rasterize", help="render correspondence/barycentric/depth maps")
    p.add_argument("--model", required=True)
    p.add_argument("--params", required=True, help="JSON with theta, beta, camera")
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), required=True)
    p.add_argument("--faces", choices=("all", "head", "body"), default="all")
    p.add_argument("-o", "--output", required=True, help="maps bundle (.lwb)")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("flow", help="build a transformation flow")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--source", required=True, help="source params JSON")
    p.add_argument("--reference", help="reference params JSON (imitate, swap)")
    p.add_argument("--rotvec", type=_vec3, default=np.zeros(3), help="view rotation, axis-angle")
    p.add_argument("--translation", type=_vec3, default=np.zeros(3))
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), required=True)
    p.add_argument("-o", "--output", required=True,
                   help="flow bundle; swap writes <stem>_t1.lwb and <stem>_t2.lwb")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("warp", help="bilinearly sample an image or feature tensor under a flow")
    p.add_argument("--input", required=True, help=".png image or .lwt (C, H, W) tensor")
    p.add_argument("--flow", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("fuse", help="apply a liquid-warping fusion block")
    p.add_argument("--block", choices=BLOCKS, required=True)
    p.add_argument("--target", required=True, help="target features (C, H, W) .lwt")
    p.add_argument("--source", action="append", required=True, help="source features .lwt")
    p.add_argument("--flow", action="append", required=True, help="flow bundle per source")
    p.add_argument("--params", help="fusion params bundle; otherwise seeded init")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-params", help="write the params actually used")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("compose", help="blend color map over background by attention")
    p.add_argument("--color", required=True)
    p.add_argument("--attention", required=True, help=".lwt (H, W) or grayscale .png")
    p.add_argument("--background", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("metrics", help="print PSNR and SSIM of two PNG images")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("losses", help="attention regularization and pixel L1")
    p.add_argument("--attention", action="append", help="attention map .lwt (H, W)")
    p.add_argument("--silhouette", action="append", help="silhouette .lwt paired with --attention")
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("pipeline", help="run imitate/view/swap end to end")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--source-params", action="append", required=True)
    p.add_argument("--source-image", action="append", required=True)
    p.add_argument("--reference-params")
    p.add_argument("--reference-image")
    p.add_argument("--rotvec", type=_vec3, default=np.zeros(3))
    p.add_argument("--translation", type=_vec3, default=np.zeros(3))
    p.add_argument("--dilate", type=int, default=0, help="mask dilation radius in pixels")
    p.add_argument("--bg-index", type=int, default=0, help="which source background to keep")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError, IndexError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

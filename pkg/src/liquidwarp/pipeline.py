"""End-to-end flow construction and texture warping for the three tasks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .body_model import BodyModel, BodyParams
from .flow import imitation_flow, mask_decompose, novelview_flow, swap_flows
from .rasterizer import RenderMaps
from .warp_fusion import compose_syn

MODES = ("imitate", "view", "swap")


@dataclass
class PipelineInputs:
    mode: str
    sources: list[tuple[BodyParams, np.ndarray]]  # (params, u8 image (H, W, 3))
    reference: tuple[BodyParams, np.ndarray | None] | None = None
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dilate_px: int = 0
    bg_index: int = 0


class _Writer:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def add(self, role: str, name: str, write, obj) -> None:
        write(self.out_dir / name, obj)
        self.files[role] = name


def run_pipeline(model: BodyModel, inputs: PipelineInputs, out_dir) -> dict:
    """Run one task and write its maps, flows and images; returns the manifest."""
    if inputs.mode not in MODES:
        raise ValueError(f"unknown mode {inputs.mode!r}; expected one of {', '.join(MODES)}")
    if not inputs.sources:
        raise ValueError("need at least one source")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    H, W = inputs.sources[0][1].shape[:2]
    for _, img in inputs.sources:
        if img.shape[:2] != (H, W):
            raise ValueError("all source images must share one size")
    w = _Writer(out_dir)
    src_params = [p for p, _ in inputs.sources]
    src_images = [img for _, img in inputs.sources]

    if inputs.mode == "swap":
        if inputs.reference is None or inputs.reference[1] is None:
            raise ValueError("swap needs reference params and a reference image")
        ref_params, ref_img = inputs.reference
        if ref_img.shape[:2] != (H, W):
            raise ValueError("reference image size differs from the source")
        sw = swap_flows(model, src_params[0], ref_params, model.head_faces, H, W)
        w.add("head_maps", "head_maps.lwb", io.write_maps, sw.head_maps)
        w.add("src_body_maps", "src_body_maps.lwb", io.write_maps, sw.src_body_maps)
        w.add("ref_body_maps", "ref_body_maps.lwb", io.write_maps, sw.ref_body_maps)
        w.add("flow_t1", "flow_t1.lwb", io.write_flow, sw.t1)
        w.add("flow_t2", "flow_t2.lwb", io.write_flow, sw.t2)
        # the head texture comes from the source, the body texture from the reference
        syn, count = compose_syn([src_images[0] / 255.0, ref_img / 255.0], [sw.t1, sw.t2])
        # foreground mask covers head and body of the source
        full = np.logical_or(sw.head_maps.silhouette, sw.src_body_maps.silhouette)
        body = sw.src_body_maps
        src_maps_for_mask = [RenderMaps(body.corr, body.bary, full, body.depth)]
    else:
        if inputs.mode == "imitate":
            if inputs.reference is None:
                raise ValueError("imitate needs reference params")
            bundle = imitation_flow(model, src_params, inputs.reference[0].theta, H, W)
        else:
            if len(src_params) != 1:
                raise ValueError("view takes exactly one source")
            bundle = novelview_flow(model, src_params[0], inputs.rotation, inputs.translation, H, W)
        for i, maps in enumerate(bundle.src_maps):
            w.add(f"src_maps_{i}", f"src_maps_{i}.lwb", io.write_maps, maps)
        w.add("tgt_maps", "tgt_maps.lwb", io.write_maps, bundle.tgt_maps)
        for i, tf in enumerate(bundle.flows):
            w.add(f"flow_{i}", f"flow_{i}.lwb", io.write_flow, tf)
        src_maps_for_mask = bundle.src_maps
        fgs = [mask_decompose(img, m, inputs.dilate_px)[0] for img, m in zip(src_images, bundle.src_maps)]
        syn, count = compose_syn([fg / 255.0 for fg in fgs], bundle.flows)

    backgrounds = []
    for i, (img, maps) in enumerate(zip(src_images, src_maps_for_mask)):
        fg, bg, mask = mask_decompose(img, maps, inputs.dilate_px)
        w.add(f"fg_{i}", f"fg_{i}.png", io.write_image, fg)
        w.add(f"bg_{i}", f"bg_{i}.png", io.write_image, bg)
        w.add(f"mask_{i}", f"mask_{i}.png", io.write_image, mask.astype(np.uint8) * 255)
        backgrounds.append(f"bg_{i}.png")
    if not 0 <= inputs.bg_index < len(backgrounds):
        raise ValueError(f"bg_index {inputs.bg_index} out of range")

    w.add("syn", "syn.png", io.write_image, syn)
    w.add("syn_count", "syn_count.lwt", io.tensor_write, count.astype(np.int32))

    manifest = {
        "mode": inputs.mode,
        "size": [H, W],
        "n_sources": len(inputs.sources),
        "background": backgrounds[inputs.bg_index],
        "files": dict(sorted(w.files.items())),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


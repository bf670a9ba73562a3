"""Geometric core of liquid-warping human image synthesis: body meshing,
correspondence rendering, transformation flows, warping and fusion blocks."""

from .body_model import (BodyModel, BodyParams, CameraWP, Mesh, load_model, project,
                         rigid_transform, skin, smpl_sized_model, synth_model)
from .flow import (FlowBundle, TransformFlow, compose_flow, imitation_flow, mask_decompose,
                   novelview_flow, swap_flows)
from .metrics_losses import (LossWeights, attention_reg, compose_output, pixel_l1, psnr, ssim,
                             tv)
from .rasterizer import FaceTris, RenderMaps, face_tris, rasterize, visibility
from .warp_fusion import (FusionParams, add_lwb, att_lwb, bilinear_sample, compose_syn,
                          init_fusion_params, lwb_apply, mean_agg, soft_gate, spade)

__version__ = "0.1.0"

"""Conditional denoising backbone: attention, U-Net, style encoder, grouping."""

from .attention import (
    CrossAttention,
    CrossAttnWeights,
    SpatialTransformer,
    TransformerBlock,
    cross_attention,
    cross_attention_grads,
    cross_attention_intermediates,
    scaled_attention,
)
from .unet import DenoiserUNet, timestep_embedding
from .style import StyleEncoder
from .model import GlyphDenoiser
from .groups import (
    CONTENT_GROUPS,
    GROUP_KV,
    GROUP_OTHERS,
    GROUP_STYLE_PROJ,
    GROUP_TRANS,
    PARAMETER_GROUPS,
    STYLE_GROUPS,
    group_parameter_counts,
    partition_parameters,
)
from .sensitivity import (
    BASELINE_SETTING,
    NORM_KIND,
    PROBE_SETTINGS,
    SensitivityReport,
    gradient_norms,
    sensitivity_ratios,
)

__all__ = [
    "CrossAttention",
    "CrossAttnWeights",
    "SpatialTransformer",
    "TransformerBlock",
    "cross_attention",
    "cross_attention_grads",
    "cross_attention_intermediates",
    "scaled_attention",
    "DenoiserUNet",
    "timestep_embedding",
    "StyleEncoder",
    "GlyphDenoiser",
    "CONTENT_GROUPS",
    "GROUP_KV",
    "GROUP_OTHERS",
    "GROUP_STYLE_PROJ",
    "GROUP_TRANS",
    "PARAMETER_GROUPS",
    "STYLE_GROUPS",
    "group_parameter_counts",
    "partition_parameters",
    "BASELINE_SETTING",
    "NORM_KIND",
    "PROBE_SETTINGS",
    "SensitivityReport",
    "gradient_norms",
    "sensitivity_ratios",
]

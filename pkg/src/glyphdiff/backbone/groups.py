"""Parameter grouping for selective fine-tuning.

Every parameter of the denoising model falls in exactly one group:

- ``kv``: key/value projections inside cross-attention (style input taps)
- ``trans_block``: everything else inside a transformer wrapper (queries,
  output projections, norms, feed-forward, in/out 1x1 convs)
- ``style_proj``: the style encoder's final projection layer
- ``others``: the remaining content capacity (conv stacks, time embedding,
  style-encoder trunk)

The style-related set used by parameter-efficient fine-tuning is
kv + trans_block + style_proj; the content set is others.
"""

from __future__ import annotations

from .attention import SpatialTransformer
from .model import GlyphDenoiser
from ..errors import StateError

GROUP_KV = "kv"
GROUP_TRANS = "trans_block"
GROUP_STYLE_PROJ = "style_proj"
GROUP_OTHERS = "others"
PARAMETER_GROUPS = (GROUP_KV, GROUP_TRANS, GROUP_STYLE_PROJ, GROUP_OTHERS)

STYLE_GROUPS = (GROUP_KV, GROUP_TRANS, GROUP_STYLE_PROJ)
CONTENT_GROUPS = (GROUP_OTHERS,)

_KV_SUFFIXES = (".attn.to_k.weight", ".attn.to_v.weight")
_STYLE_PROJ_PREFIX = "style_encoder.proj."


def partition_parameters(model: GlyphDenoiser) -> dict[str, str]:
    """Map every parameter name of ``model`` to its group label."""
    transformer_prefixes = tuple(
        name + "."
        for name, module in model.named_modules()
        if isinstance(module, SpatialTransformer)
    )

    groups: dict[str, str] = {}
    for name, _ in model.named_parameters():
        if name.startswith(_STYLE_PROJ_PREFIX):
            groups[name] = GROUP_STYLE_PROJ
        elif name.startswith(transformer_prefixes):
            groups[name] = GROUP_KV if name.endswith(_KV_SUFFIXES) else GROUP_TRANS
        else:
            groups[name] = GROUP_OTHERS

    for group in PARAMETER_GROUPS:
        if not any(g == group for g in groups.values()):
            raise StateError(f"group {group!r} matched no parameters; model shape unexpected")
    return groups


def group_parameter_counts(model: GlyphDenoiser, groups: dict[str, str] | None = None) -> dict[str, int]:
    """Total scalar parameter count per group."""
    groups = groups or partition_parameters(model)
    params = dict(model.named_parameters())
    missing = set(groups) - set(params)
    if missing:
        raise StateError(f"group map names unknown parameters: {sorted(missing)}")
    counts = {group: 0 for group in PARAMETER_GROUPS}
    for name, param in params.items():
        if name not in groups:
            raise StateError(f"parameter {name} missing from the group map")
        counts[groups[name]] += param.numel()
    return counts

"""Multi-view video 3D hand pose estimation, trainable end-to-end on a CPU.

A differentiable tensor core, per-frame image encoder, temporal/angular
recurrent learners, a graph U-Net lifting 2D joints to 3D, a two-stage
trainer with EPE/PCK/AUC evaluation, and a procedural generator that
recreates the multi-view video geometry the pipeline needs.
"""

__version__ = "0.1.0"

from .tensor import Tensor, set_default_dtype, default_dtype, using_dtype
from .params import ParamStore, adam_step

__all__ = [
    "Tensor",
    "ParamStore",
    "adam_step",
    "set_default_dtype",
    "default_dtype",
    "using_dtype",
    "__version__",
]
